#ifndef TIMELY_SIMULATE_HPP
#define TIMELY_SIMULATE_HPP

#include "timely/core.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace timely::simulate {

struct SimConfig {
    int n = 250;
    int classes = 5;
    int dim = 50;
    /// Percent of labels replaced, 0..100.
    int noise_level = 0;
    std::uint64_t seed = 0;
};

struct SimDataset {
    /// Cells in sorted-column order; `observed_label` is the noisy label.
    std::vector<CellRecord> cells;
    std::vector<int> ground_truth;
    std::vector<bool> noisy_mask;
    int classes = 0;
};

void validate(const SimConfig& config);

/**
 * Draws a chain-topology dataset with known ground truth.
 *
 * Stream order from one `Rng(seed)`: the 2 x n latent matrix column by column
 * (two normals per column), then the dim x 2 embedding matrix row by row,
 * then a partial Fisher-Yates shuffle picking the flipped positions, then one
 * replacement label per flipped position in pick order.
 */
SimDataset generate(const SimConfig& config);

/// Positions i where the ground-truth label changes between i-1 and i.
std::vector<std::size_t> ground_truth_borders(const SimDataset& dataset);

/// Writes `id,true_label,flipped` with 1-based labels.
void save_truth(const std::filesystem::path& path, const SimDataset& dataset);

}  // namespace timely::simulate

#endif
