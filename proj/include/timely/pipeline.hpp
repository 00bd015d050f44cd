#ifndef TIMELY_PIPELINE_HPP
#define TIMELY_PIPELINE_HPP

#include "timely/core.hpp"
#include "timely/markov.hpp"
#include "timely/pseudotime.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace timely {

struct PipelineConfig {
    pseudotime::EmbedMethod embed = pseudotime::EmbedMethod::mds;
    int dims = 2;
    pseudotime::TrajectoryKind trajectory = pseudotime::TrajectoryKind::curve;
    /// 0 means one cluster per state.
    int n_clusters = 0;
    /// Curve settings; `n_clusters` and `seed` above take precedence. The
    /// default is the label-guided line without principal-curve refinement.
    pseudotime::CurveOptions curve{.max_iter = 0, .init = pseudotime::CurveInit::label_direction};
    std::uint64_t seed = 0;
    markov::FitOptions fit;
};

/// Error raised inside one pipeline stage; the message is prefixed with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct PipelineResult {
    ConsistencyReport report;
    OrderedDataset ordered;
    pseudotime::Embedding embedding;
    pseudotime::TrajectoryModel model;
    markov::FitResult fit;
    /// Inferred state per input row (input order, not trajectory order).
    std::vector<int> inferred;
};

/**
 * Orders the cells, fits the hidden Markov tree, decodes the most probable
 * true states and flags every cell whose observed label disagrees.
 */
PipelineResult run_pipeline_detailed(std::span<const CellRecord> cells, const LineageTopology& topology,
                                     const Eigen::MatrixXd& emission, const std::vector<double>& pi,
                                     const PipelineConfig& config = {});

ConsistencyReport run_pipeline(std::span<const CellRecord> cells, const LineageTopology& topology,
                               const Eigen::MatrixXd& emission, const std::vector<double>& pi,
                               const PipelineConfig& config = {});

/// Assembles a report from decoded states on an ordered dataset.
ConsistencyReport make_report(const LineageTopology& topology, const OrderedDataset& ordered,
                              std::span<const int> states, double log_likelihood, const HmtParams& params);

}  // namespace timely

#endif
