#include "timely/pipeline.hpp"

#include <spdlog/spdlog.h>

namespace timely {

namespace {

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace

ConsistencyReport make_report(const LineageTopology& topology, const OrderedDataset& ordered,
                              std::span<const int> states, double log_likelihood, const HmtParams& params) {
    ConsistencyReport report;
    report.states = topology.states();
    report.cells.reserve(ordered.size());
    for (std::size_t t = 0; t < ordered.size(); ++t) {
        const auto& c = ordered.cells[t];
        CellVerdict v;
        v.id = c.id;
        v.observed_label = c.observed_label;
        v.inferred_label = states[t];
        v.flagged = v.observed_label != v.inferred_label;
        v.pseudotime = ordered.pseudotime[t];
        v.branch_id = ordered.branch_id[t];
        v.image_ref = c.image_ref;
        report.cells.push_back(std::move(v));
    }
    report.borders = markov::borders(ordered, states);
    report.log_likelihood = log_likelihood;
    report.params = params;
    return report;
}

PipelineResult run_pipeline_detailed(std::span<const CellRecord> cells, const LineageTopology& topology,
                                     const Eigen::MatrixXd& emission, const std::vector<double>& pi,
                                     const PipelineConfig& config) {
    PipelineResult out;
    const auto labels = stage("load", [&] {
        for (const auto& c : cells) {
            if (c.observed_label < 0 || c.observed_label >= topology.size()) {
                throw ValidationError("cell " + c.id + " has a label outside the topology");
            }
        }
        return observed_labels(cells);
    });
    out.embedding = stage("embed", [&] { return pseudotime::embed(feature_matrix(cells), config.embed, config.dims); });
    out.model = stage("trajectory", [&] {
        if (config.trajectory == pseudotime::TrajectoryKind::tree) {
            return pseudotime::fit_tree(out.embedding, config.n_clusters, config.seed, topology, labels);
        }
        pseudotime::CurveOptions opts = config.curve;
        opts.n_clusters = config.n_clusters;
        opts.seed = config.seed;
        return pseudotime::fit_curve(out.embedding, opts, &topology, labels);
    });
    out.ordered = stage("project", [&] { return pseudotime::project(out.embedding, out.model, topology, cells); });

    auto instance = stage("setup", [&] {
        auto params = markov::initial_params(topology, out.ordered, emission, pi);
        return markov::make_instance(topology, out.ordered, std::move(params));
    });
    out.fit = stage("fit", [&] { return markov::fit(instance, config.fit); });
    spdlog::debug("GEM finished after {} iterations, log-likelihood {:.4f}", out.fit.iterations,
                 out.fit.log_likelihood_trace.back());
    instance.params = out.fit.params;
    auto decoded = stage("decode", [&] { return markov::viterbi(instance); });

    out.report = make_report(topology, out.ordered, decoded.states, out.fit.log_likelihood_trace.back(), out.fit.params);
    out.inferred.assign(cells.size(), 0);
    for (std::size_t t = 0; t < out.ordered.size(); ++t) {
        out.inferred[out.ordered.source_index[t]] = decoded.states[t];
    }
    return out;
}

ConsistencyReport run_pipeline(std::span<const CellRecord> cells, const LineageTopology& topology,
                               const Eigen::MatrixXd& emission, const std::vector<double>& pi,
                               const PipelineConfig& config) {
    return run_pipeline_detailed(cells, topology, emission, pi, config).report;
}

}  // namespace timely
