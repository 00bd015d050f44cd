#include "timely/baselines.hpp"

#include "timely/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace timely::baselines {

namespace {

// Row-wise softmax of the linear scores.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
    Eigen::MatrixXd p = scores;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double top = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - top).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

Eigen::MatrixXd with_intercept(const RowMatrix& x) {
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out.leftCols(x.cols()) = x;
    out.col(x.cols()).setOnes();
    return out;
}

double objective(const Eigen::MatrixXd& xb, const Eigen::MatrixXd& w, std::span<const int> labels, double l2) {
    const Eigen::MatrixXd s = xb * w;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double top = s.row(i).maxCoeff();
        ll += s(i, labels[static_cast<std::size_t>(i)]) - top - std::log((s.row(i).array() - top).exp().sum());
    }
    const auto d = w.rows() - 1;
    return ll / static_cast<double>(s.rows()) - 0.5 * l2 * w.topRows(d).squaredNorm();
}

}  // namespace

std::vector<int> stratified_folds(std::span<const int> labels, int classes, int folds, std::uint64_t seed) {
    if (folds < 2) {
        throw ValidationError("need at least two folds");
    }
    std::vector<std::vector<int>> members(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw ValidationError("label out of range");
        }
        members[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    }
    Rng rng(seed);
    std::vector<int> fold(labels.size(), 0);
    int offset = 0;
    for (int c = 0; c < classes; ++c) {
        auto& m = members[static_cast<std::size_t>(c)];
        if (m.empty()) continue;
        if (static_cast<int>(m.size()) < folds) {
            throw ValidationError("class " + std::to_string(c + 1) + " has fewer members than folds");
        }
        for (std::size_t i = m.size(); i > 1; --i) {
            std::swap(m[i - 1], m[rng.below(i)]);
        }
        // Rotate the starting fold so remainders spread across folds.
        for (std::size_t i = 0; i < m.size(); ++i) {
            fold[static_cast<std::size_t>(m[i])] = static_cast<int>((i + static_cast<std::size_t>(offset)) % static_cast<std::size_t>(folds));
        }
        offset += static_cast<int>(m.size());
    }
    return fold;
}

Eigen::MatrixXd fit_logistic(const RowMatrix& features, std::span<const int> labels, int classes, double l2) {
    const Eigen::Index n = features.rows();
    const Eigen::Index d = features.cols() + 1;
    const Eigen::Index k = classes;
    if (static_cast<std::size_t>(n) != labels.size() || n == 0) {
        throw ValidationError("labels do not align with feature rows");
    }
    const Eigen::MatrixXd xb = with_intercept(features);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) y(i, labels[static_cast<std::size_t>(i)]) = 1.0;

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, k);
    double f = objective(xb, w, labels, l2);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int iter = 0; iter < 100; ++iter) {
        const Eigen::MatrixXd p = softmax_rows(xb * w);
        Eigen::MatrixXd grad = xb.transpose() * (y - p) * inv_n;
        grad.topRows(d - 1) -= l2 * w.topRows(d - 1);

        // Negative Hessian, parameters stacked class-major.
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d * k, d * k);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = a; b < k; ++b) {
                Eigen::VectorXd weight = -p.col(a).cwiseProduct(p.col(b));
                if (a == b) weight += p.col(a);
                Eigen::MatrixXd block = xb.transpose() * weight.asDiagonal() * xb * inv_n;
                h.block(a * d, b * d, d, d) = block;
                if (a != b) h.block(b * d, a * d, d, d) = block.transpose();
            }
            h.block(a * d, a * d, d - 1, d - 1).diagonal().array() += l2;
        }
        // The softmax is invariant to a common shift of all intercepts.
        h.diagonal().array() += 1e-10;
        Eigen::VectorXd g = Eigen::Map<Eigen::VectorXd>(grad.data(), d * k);
        Eigen::VectorXd step = h.ldlt().solve(g);
        Eigen::MatrixXd dir = Eigen::Map<Eigen::MatrixXd>(step.data(), d, k);

        double t = 1.0;
        bool improved = false;
        for (int half = 0; half < 30; ++half) {
            Eigen::MatrixXd trial = w + t * dir;
            double ft = objective(xb, trial, labels, l2);
            if (std::isfinite(ft) && ft >= f) {
                improved = ft > f;
                w = std::move(trial);
                f = ft;
                break;
            }
            t *= 0.5;
        }
        if (!improved || g.norm() < 1e-10) {
            break;
        }
    }
    return w;
}

Eigen::MatrixXd predict_logistic(const Eigen::MatrixXd& weights, const RowMatrix& features) {
    return softmax_rows(with_intercept(features) * weights);
}

Eigen::MatrixXd cross_val_probabilities(const RowMatrix& features, std::span<const int> labels, int classes,
                                        const ConfidentOptions& options) {
    const auto fold = stratified_folds(labels, classes, options.folds, options.seed);
    const Eigen::Index n = features.rows();
    Eigen::MatrixXd out(n, classes);
    for (int f = 0; f < options.folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < n; ++i) {
            (fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        }
        if (test.empty()) continue;
        RowMatrix xtr = features(train, Eigen::all);
        RowMatrix xte = features(test, Eigen::all);
        const Eigen::RowVectorXd mean = xtr.colwise().mean();
        Eigen::RowVectorXd sd = ((xtr.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(xtr.rows())).sqrt();
        for (Eigen::Index c = 0; c < sd.size(); ++c) {
            if (!(sd[c] > 0.0)) sd[c] = 1.0;
        }
        xtr = (xtr.rowwise() - mean).array().rowwise() / sd.array();
        xte = (xte.rowwise() - mean).array().rowwise() / sd.array();
        std::vector<int> ytr;
        for (auto i : train) ytr.push_back(labels[static_cast<std::size_t>(i)]);
        const Eigen::MatrixXd w = fit_logistic(xtr, ytr, classes, options.l2);
        const Eigen::MatrixXd p = predict_logistic(w, xte);
        for (std::size_t j = 0; j < test.size(); ++j) out.row(test[j]) = p.row(static_cast<Eigen::Index>(j));
    }
    return out;
}

Eigen::MatrixXi confident_joint(const Eigen::MatrixXd& probabilities, std::span<const int> labels) {
    const Eigen::Index k = probabilities.cols();
    Eigen::VectorXd threshold = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
    Eigen::VectorXi count = Eigen::VectorXi::Zero(k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        sum[labels[i]] += probabilities(static_cast<Eigen::Index>(i), labels[i]);
        ++count[labels[i]];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        if (count[c] > 0) threshold[c] = sum[c] / count[c];
    }
    Eigen::MatrixXi joint = Eigen::MatrixXi::Zero(k, k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int best = -1;
        for (Eigen::Index c = 0; c < k; ++c) {
            double p = probabilities(static_cast<Eigen::Index>(i), c);
            if (p >= threshold[c] && (best < 0 || p > probabilities(static_cast<Eigen::Index>(i), best))) {
                best = static_cast<int>(c);
            }
        }
        if (best >= 0) ++joint(labels[i], best);
    }
    return joint;
}

FlagResult confident_flag_from_probabilities(const Eigen::MatrixXd& probabilities, std::span<const int> labels) {
    if (static_cast<std::size_t>(probabilities.rows()) != labels.size()) {
        throw ValidationError("probabilities do not align with labels");
    }
    const Eigen::Index k = probabilities.cols();
    for (int l : labels) {
        if (l < 0 || l >= k) throw ValidationError("label out of range");
    }
    const Eigen::MatrixXi joint = confident_joint(probabilities, labels);
    FlagResult out;
    out.method = "confident";
    out.flagged.assign(labels.size(), false);
    for (Eigen::Index given = 0; given < k; ++given) {
        std::vector<int> rows;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == given) rows.push_back(static_cast<int>(i));
        }
        for (Eigen::Index other = 0; other < k; ++other) {
            const int take = joint(given, other);
            if (other == given || take == 0) continue;
            auto margin = [&](int i) { return probabilities(i, given) - probabilities(i, other); };
            std::vector<int> order = rows;
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return margin(a) < margin(b); });
            for (int j = 0; j < take && j < static_cast<int>(order.size()); ++j) {
                out.flagged[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = true;
            }
        }
    }
    return out;
}

FlagResult confident_flag(const RowMatrix& features, std::span<const int> labels, int classes,
                          const ConfidentOptions& options) {
    auto probs = cross_val_probabilities(features, labels, classes, options);
    auto out = confident_flag_from_probabilities(probs, labels);
    out.hyperparams = {{"folds", options.folds}, {"l2", options.l2}, {"seed", static_cast<double>(options.seed)}};
    return out;
}

}  // namespace timely::baselines
