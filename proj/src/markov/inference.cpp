#include "timely/markov.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace timely::markov {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* v, int n) {
    double top = neg_inf;
    for (int i = 0; i < n; ++i) top = std::max(top, v[i]);
    if (top == neg_inf) {
        return neg_inf;
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(v[i] - top);
    return top + std::log(sum);
}

double safe_log(double v) { return v > 0.0 ? std::log(v) : neg_inf; }

// Everything the passes need, computed once per parameter setting.
struct Tables {
    int k = 0;
    int t = 0;
    std::vector<std::vector<int>> children;
    std::vector<Eigen::MatrixXd> log_a;  // per node, transition into it
    Eigen::MatrixXd log_emit;            // T x K: log B[k, x_t]
    std::vector<double> log_pi;
};

Tables tabulate(const HmtInstance& inst) {
    Tables tb;
    tb.k = inst.topology.size();
    tb.t = static_cast<int>(inst.size());
    tb.children.assign(static_cast<std::size_t>(tb.t), {});
    tb.log_a.resize(static_cast<std::size_t>(tb.t));
    for (int t = 1; t < tb.t; ++t) {
        tb.children[static_cast<std::size_t>(inst.parent[t])].push_back(t);
        tb.log_a[t] = log_transition_matrix(inst.params, inst.topology, inst.y[t]);
    }
    tb.log_emit.resize(tb.t, tb.k);
    for (int t = 0; t < tb.t; ++t) {
        for (int s = 0; s < tb.k; ++s) {
            tb.log_emit(t, s) = safe_log(inst.params.emission(s, inst.observed[t]));
        }
    }
    for (double p : inst.params.pi) tb.log_pi.push_back(safe_log(p));
    return tb;
}

struct Upward {
    Eigen::MatrixXd beta;  // T x K
    Eigen::MatrixXd msg;   // T x K: message from node t to its parent, indexed by parent state
    double log_likelihood = neg_inf;
    int dead_node = -1;    // first node (in pass order) whose subtree became impossible
};

Upward upward(const Tables& tb) {
    Upward up;
    up.beta.resize(tb.t, tb.k);
    up.msg = Eigen::MatrixXd::Constant(tb.t, tb.k, neg_inf);
    std::vector<double> tmp(static_cast<std::size_t>(tb.k));
    for (int t = tb.t - 1; t >= 0; --t) {
        bool alive = false;
        for (int s = 0; s < tb.k; ++s) {
            double v = tb.log_emit(t, s);
            for (int c : tb.children[t]) v += up.msg(c, s);
            up.beta(t, s) = v;
            alive = alive || v != neg_inf;
        }
        if (!alive && up.dead_node < 0) {
            up.dead_node = t;
        }
        if (t > 0) {
            for (int s = 0; s < tb.k; ++s) {
                for (int l = 0; l < tb.k; ++l) tmp[l] = tb.log_a[t](s, l) + up.beta(t, l);
                up.msg(t, s) = log_sum_exp(tmp.data(), tb.k);
            }
        }
    }
    for (int s = 0; s < tb.k; ++s) tmp[s] = tb.log_pi[s] + up.beta(0, s);
    up.log_likelihood = log_sum_exp(tmp.data(), tb.k);
    return up;
}

std::string impossible_reason(const HmtInstance& inst, const Tables& tb, const Upward& up) {
    for (int t = 0; t < tb.t; ++t) {
        bool any = false;
        for (int s = 0; s < tb.k; ++s) any = any || tb.log_emit(t, s) != neg_inf;
        if (!any) {
            return "node " + std::to_string(t) + ": observed state " + inst.topology.name(inst.observed[t]) +
                   " has zero emission probability under every hidden state";
        }
    }
    if (up.dead_node >= 0) {
        return "node " + std::to_string(up.dead_node) + ": no hidden state is consistent with its subtree";
    }
    return "node 0: start probabilities exclude every state consistent with the data";
}

}  // namespace

void validate(const HmtInstance& instance) {
    const auto t = instance.size();
    const int k = instance.topology.size();
    if (t == 0) {
        throw ValidationError("HMT instance has no nodes");
    }
    if (instance.parent.size() != t || instance.y.size() != t) {
        throw ValidationError("HMT structure arrays have inconsistent lengths");
    }
    if (instance.parent[0] != -1) {
        throw ValidationError("node 0 must be the root");
    }
    for (std::size_t i = 0; i < t; ++i) {
        if (instance.observed[i] < 0 || instance.observed[i] >= k) {
            throw ValidationError("observed label out of range at node " + std::to_string(i));
        }
        if (i > 0) {
            if (instance.parent[i] < 0 || static_cast<std::size_t>(instance.parent[i]) >= i) {
                throw ValidationError("node " + std::to_string(i) + " must have an earlier parent");
            }
            if (!std::isfinite(instance.y[i]) || instance.y[i] < 0.0) {
                throw ValidationError("node " + std::to_string(i) + " has an invalid pseudotime gap");
            }
        }
    }
    timely::validate(instance.params, instance.topology);
}

HmtInstance make_instance(const LineageTopology& topology, const OrderedDataset& ordered, HmtParams params) {
    HmtInstance inst;
    inst.topology = topology;
    inst.params = std::move(params);
    inst.observed = observed_labels(ordered.cells);
    inst.parent = ordered.predecessor;
    inst.y = ordered.y;
    validate(inst);
    return inst;
}

HmtParams initial_params(const LineageTopology& topology, const OrderedDataset& ordered,
                         const Eigen::MatrixXd& emission, const std::vector<double>& pi) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (ordered.predecessor[i] >= 0) {
            sum += ordered.y[i];
            ++count;
        }
    }
    double rate = (count > 0 && sum > 0.0) ? static_cast<double>(count) / sum : 1.0;
    HmtParams params = default_params(topology, emission, topology.size() == 1 ? 1.0 : 0.9, rate);
    if (!pi.empty()) {
        params.pi = pi;
    }
    return params;
}

double log_likelihood(const HmtInstance& instance) {
    validate(instance);
    Tables tb = tabulate(instance);
    Upward up = upward(tb);
    if (up.log_likelihood == neg_inf) {
        spdlog::warn("zero likelihood: {}", impossible_reason(instance, tb, up));
    }
    return up.log_likelihood;
}

PosteriorSet posteriors(const HmtInstance& instance) {
    validate(instance);
    Tables tb = tabulate(instance);
    Upward up = upward(tb);
    if (up.log_likelihood == neg_inf) {
        throw InferenceError("zero likelihood: " + impossible_reason(instance, tb, up));
    }
    const double ll = up.log_likelihood;

    Eigen::MatrixXd alpha(tb.t, tb.k);
    Eigen::MatrixXd excl(tb.t, tb.k);  // parent-side log weight for the edge into t
    for (int s = 0; s < tb.k; ++s) alpha(0, s) = tb.log_pi[s];
    std::vector<double> tmp(static_cast<std::size_t>(tb.k));
    for (int t = 1; t < tb.t; ++t) {
        const int p = instance.parent[t];
        for (int s = 0; s < tb.k; ++s) {
            double v = alpha(p, s) + tb.log_emit(p, s);
            for (int c : tb.children[p]) {
                if (c != t) v += up.msg(c, s);
            }
            excl(t, s) = v;
        }
        for (int l = 0; l < tb.k; ++l) {
            for (int s = 0; s < tb.k; ++s) tmp[s] = excl(t, s) + tb.log_a[t](s, l);
            alpha(t, l) = log_sum_exp(tmp.data(), tb.k);
        }
    }

    PosteriorSet out;
    out.log_likelihood = ll;
    out.gamma.resize(tb.t, tb.k);
    for (int t = 0; t < tb.t; ++t) {
        double sum = 0.0;
        for (int s = 0; s < tb.k; ++s) {
            double v = alpha(t, s) + up.beta(t, s);
            out.gamma(t, s) = v == neg_inf ? 0.0 : std::exp(v - ll);
            sum += out.gamma(t, s);
        }
        out.gamma.row(t) /= sum;
    }
    out.xi.resize(static_cast<std::size_t>(tb.t));
    for (int t = 1; t < tb.t; ++t) {
        Eigen::MatrixXd x(tb.k, tb.k);
        double sum = 0.0;
        for (int s = 0; s < tb.k; ++s) {
            for (int l = 0; l < tb.k; ++l) {
                double v = excl(t, s) + tb.log_a[t](s, l) + up.beta(t, l);
                x(s, l) = v == neg_inf ? 0.0 : std::exp(v - ll);
                sum += x(s, l);
            }
        }
        out.xi[t] = x / sum;
    }
    return out;
}

ViterbiResult viterbi(const HmtInstance& instance) {
    validate(instance);
    Tables tb = tabulate(instance);
    Eigen::MatrixXd delta(tb.t, tb.k);
    Eigen::MatrixXd best(tb.t, tb.k);  // best child contribution per parent state
    std::vector<std::vector<int>> arg(static_cast<std::size_t>(tb.t), std::vector<int>(static_cast<std::size_t>(tb.k), 0));
    for (int t = tb.t - 1; t >= 0; --t) {
        for (int s = 0; s < tb.k; ++s) {
            double v = tb.log_emit(t, s);
            for (int c : tb.children[t]) v += best(c, s);
            delta(t, s) = v;
        }
        if (t > 0) {
            for (int s = 0; s < tb.k; ++s) {
                double top = neg_inf;
                int which = s;
                for (int l = 0; l < tb.k; ++l) {
                    double v = tb.log_a[t](s, l) + delta(t, l);
                    if (v > top) {
                        top = v;
                        which = l;
                    }
                }
                best(t, s) = top;
                arg[t][s] = which;
            }
        }
    }
    double top = neg_inf;
    int root_state = -1;
    for (int s = 0; s < tb.k; ++s) {
        double v = tb.log_pi[s] + delta(0, s);
        if (v > top) {
            top = v;
            root_state = s;
        }
    }
    if (root_state < 0) {
        Upward up = upward(tb);
        throw InferenceError("zero likelihood: " + impossible_reason(instance, tb, up));
    }
    ViterbiResult out;
    out.log_prob = top;
    out.states.assign(static_cast<std::size_t>(tb.t), 0);
    out.states[0] = root_state;
    for (int t = 1; t < tb.t; ++t) {
        out.states[t] = arg[t][out.states[instance.parent[t]]];
    }
    return out;
}

std::vector<Border> borders(const OrderedDataset& ordered, std::span<const int> states) {
    if (states.size() != ordered.size()) {
        throw ValidationError("state vector does not match the ordered dataset");
    }
    std::vector<Border> out;
    for (std::size_t t = 0; t < ordered.size(); ++t) {
        int p = ordered.predecessor[t];
        if (p < 0) {
            continue;
        }
        if (states[t] != states[static_cast<std::size_t>(p)]) {
            out.push_back({ordered.branch_id[t], states[static_cast<std::size_t>(p)], states[t],
                           0.5 * (ordered.pseudotime[static_cast<std::size_t>(p)] + ordered.pseudotime[t])});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Border& a, const Border& b) {
        return a.branch_id < b.branch_id || (a.branch_id == b.branch_id && a.pseudotime < b.pseudotime);
    });
    return out;
}

}  // namespace timely::markov
