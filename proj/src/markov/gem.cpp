#include "timely/markov.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace timely::markov {

namespace {

constexpr double log_rate_bound = 30.0;

// Sufficient statistics for one source state: soft transition counts per edge.
struct RowStats {
    std::vector<int> to;
    std::vector<double> y;
    std::vector<double> counts;  // n x m, row-major
    std::vector<double> total;   // per edge
    double mass = 0.0;
};

struct RowState {
    std::vector<double> a;  // log p (unnormalised)
    std::vector<double> b;  // log lambda
};

double row_objective(const RowStats& st, const RowState& x, std::vector<double>* ga, std::vector<double>* gb) {
    const std::size_t m = st.to.size();
    std::vector<double> w(m), lam(m);
    for (std::size_t l = 0; l < m; ++l) lam[l] = std::exp(x.b[l]);
    if (ga) ga->assign(m, 0.0);
    if (gb) gb->assign(m, 0.0);
    double q = 0.0;
    for (std::size_t t = 0; t < st.y.size(); ++t) {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < m; ++l) {
            w[l] = x.a[l] + x.b[l] - lam[l] * st.y[t];
            top = std::max(top, w[l]);
        }
        double sum = 0.0;
        for (std::size_t l = 0; l < m; ++l) sum += std::exp(w[l] - top);
        const double lse = top + std::log(sum);
        const double* c = &st.counts[t * m];
        for (std::size_t l = 0; l < m; ++l) {
            if (c[l] > 0.0) q += c[l] * (w[l] - lse);
            if (ga) {
                double r = c[l] - st.total[t] * std::exp(w[l] - lse);
                (*ga)[l] += r;
                (*gb)[l] += r * (1.0 - lam[l] * st.y[t]);
            }
        }
    }
    return q;
}

void clamp_rates(RowState& x) {
    for (double& v : x.b) v = std::clamp(v, -log_rate_bound, log_rate_bound);
}

// Backtracking gradient ascent; never returns a point with lower objective.
RowState improve_row(const RowStats& st, RowState x, int steps) {
    if (st.mass <= 0.0 || st.to.size() < 2) {
        return x;
    }
    std::vector<double> ga, gb;
    double q = row_objective(st, x, &ga, &gb);
    double eta = 1.0 / st.mass;
    for (int it = 0; it < steps; ++it) {
        double norm2 = 0.0;
        for (std::size_t l = 0; l < ga.size(); ++l) norm2 += ga[l] * ga[l] + gb[l] * gb[l];
        if (std::sqrt(norm2) < 1e-9 * (1.0 + st.mass)) {
            break;
        }
        bool accepted = false;
        for (int half = 0; half < 40; ++half) {
            RowState trial = x;
            for (std::size_t l = 0; l < ga.size(); ++l) {
                trial.a[l] += eta * ga[l];
                trial.b[l] += eta * gb[l];
            }
            clamp_rates(trial);
            std::vector<double> ta, tb;
            double tq = row_objective(st, trial, &ta, &tb);
            if (std::isfinite(tq) && tq >= q + 1e-4 * eta * norm2) {
                x = std::move(trial);
                q = tq;
                ga = std::move(ta);
                gb = std::move(tb);
                accepted = true;
                eta *= 2.0;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) {
            break;
        }
    }
    return x;
}

std::vector<RowStats> collect(const HmtInstance& inst, const PosteriorSet& post) {
    const int k = inst.topology.size();
    std::vector<RowStats> rows(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) {
        if (inst.topology.is_end_stage(s)) continue;
        auto& r = rows[static_cast<std::size_t>(s)];
        r.to.push_back(s);
        for (int c : inst.topology.children(s)) r.to.push_back(c);
    }
    for (std::size_t t = 1; t < inst.size(); ++t) {
        for (int s = 0; s < k; ++s) {
            auto& r = rows[static_cast<std::size_t>(s)];
            if (r.to.empty()) continue;
            double total = 0.0;
            for (int l : r.to) total += post.xi[t](s, l);
            if (total <= 0.0) continue;
            r.y.push_back(inst.y[t]);
            for (int l : r.to) r.counts.push_back(post.xi[t](s, l));
            r.total.push_back(total);
            r.mass += total;
        }
    }
    return rows;
}

HmtParams m_step(const HmtInstance& inst, const HmtParams& current, const PosteriorSet& post,
                 const FitOptions& options) {
    HmtParams next = current;
    auto rows = collect(inst, post);
    for (int s = 0; s < inst.topology.size(); ++s) {
        const auto& st = rows[static_cast<std::size_t>(s)];
        if (st.to.size() < 2) continue;
        RowState x;
        for (int l : st.to) {
            const auto& tp = current.trans.at({s, l});
            x.a.push_back(std::log(std::max(tp.p, 1e-300)));
            x.b.push_back(std::log(tp.lambda));
        }
        clamp_rates(x);
        RowState before = x;
        x = improve_row(st, std::move(x), options.inner_steps);
        if (x.a == before.a && x.b == before.b) continue;
        double top = *std::max_element(x.a.begin(), x.a.end());
        double sum = 0.0;
        for (double v : x.a) sum += std::exp(v - top);
        for (std::size_t i = 0; i < st.to.size(); ++i) {
            auto& tp = next.trans[{s, st.to[i]}];
            tp.p = std::exp(x.a[i] - top) / sum;
            tp.lambda = std::exp(x.b[i]);
        }
    }
    if (options.learn_emission) {
        const int k = inst.topology.size();
        const auto cols = current.emission.cols();
        Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(k, cols);
        for (std::size_t t = 0; t < inst.size(); ++t) {
            counts.col(inst.observed[t]) += post.gamma.row(static_cast<Eigen::Index>(t)).transpose();
        }
        for (int s = 0; s < k; ++s) {
            double total = counts.row(s).sum();
            if (total > 0.0) next.emission.row(s) = counts.row(s) / total;
        }
    }
    return next;
}

}  // namespace

double expected_transition_log_likelihood(const HmtInstance& instance, const HmtParams& params,
                                          const PosteriorSet& posteriors) {
    double q = 0.0;
    for (std::size_t t = 1; t < instance.size(); ++t) {
        Eigen::MatrixXd la = log_transition_matrix(params, instance.topology, instance.y[t]);
        const auto& x = posteriors.xi[t];
        for (Eigen::Index a = 0; a < x.rows(); ++a) {
            for (Eigen::Index b = 0; b < x.cols(); ++b) {
                if (x(a, b) > 0.0) q += x(a, b) * la(a, b);
            }
        }
    }
    return q;
}

FitResult fit(const HmtInstance& instance, const FitOptions& options) {
    if (options.max_iter < 0 || !(options.tol >= 0.0)) {
        throw ValidationError("invalid fit options");
    }
    HmtInstance work = instance;
    PosteriorSet post = posteriors(work);
    FitResult out;
    out.log_likelihood_trace.push_back(post.log_likelihood);
    for (int it = 1; it <= options.max_iter; ++it) {
        HmtParams next = m_step(work, work.params, post, options);
        HmtInstance trial = work;
        trial.params = std::move(next);
        PosteriorSet trial_post = posteriors(trial);
        const double gain = trial_post.log_likelihood - post.log_likelihood;
        work = std::move(trial);
        post = std::move(trial_post);
        out.log_likelihood_trace.push_back(post.log_likelihood);
        out.iterations = it;
        spdlog::debug("GEM iteration {}: log-likelihood {:.6f}", it, post.log_likelihood);
        if (gain < options.tol) {
            out.converged = true;
            break;
        }
    }
    out.params = work.params;
    return out;
}

}  // namespace timely::markov
