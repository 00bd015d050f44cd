#include "timely/simulate.hpp"

#include "timely/rng.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace timely::simulate {

void validate(const SimConfig& config) {
    if (config.classes < 1 || config.n < config.classes) {
        throw ValidationError("simulation needs 1 <= classes <= n");
    }
    if (config.n % config.classes != 0) {
        throw ValidationError("n must be divisible by the number of classes");
    }
    if (config.dim < 1) {
        throw ValidationError("projected dimension must be positive");
    }
    if (config.noise_level < 0 || config.noise_level > 100) {
        throw ValidationError("noise level must lie in 0..100");
    }
    if (config.noise_level > 0 && config.classes < 2) {
        throw ValidationError("label noise needs at least two classes");
    }
}

SimDataset generate(const SimConfig& config) {
    validate(config);
    const int n = config.n;
    const int k = config.classes;
    Rng rng(config.seed);

    std::vector<std::array<double, 2>> latent(n);
    for (auto& col : latent) {
        col[0] = rng.normal();
        col[1] = rng.normal();
    }
    std::vector<std::array<double, 2>> embedding(config.dim);
    for (auto& row : embedding) {
        row[0] = rng.normal();
        row[1] = rng.normal();
    }

    std::stable_sort(latent.begin(), latent.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });

    SimDataset out;
    out.classes = k;
    out.ground_truth.resize(n);
    const int block = n / k;
    for (int j = 0; j < n; ++j) {
        out.ground_truth[j] = j / block;
    }

    std::vector<int> labels = out.ground_truth;
    out.noisy_mask.assign(n, false);
    const auto flips = static_cast<std::size_t>((static_cast<long long>(n) * config.noise_level) / 100);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < flips; ++i) {
        std::size_t j = i + rng.below(order.size() - i);
        std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < flips; ++i) {
        std::size_t pos = order[i];
        int draw = static_cast<int>(rng.below(static_cast<std::size_t>(k - 1)));
        labels[pos] = draw >= out.ground_truth[pos] ? draw + 1 : draw;
        out.noisy_mask[pos] = true;
    }

    out.cells.resize(n);
    char id[32];
    for (int j = 0; j < n; ++j) {
        auto& cell = out.cells[j];
        std::snprintf(id, sizeof(id), "c%04d", j);
        cell.id = id;
        cell.observed_label = labels[j];
        cell.features.resize(config.dim);
        for (int r = 0; r < config.dim; ++r) {
            cell.features[r] = embedding[r][0] * latent[j][0] + embedding[r][1] * latent[j][1];
        }
    }
    return out;
}

std::vector<std::size_t> ground_truth_borders(const SimDataset& dataset) {
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i < dataset.ground_truth.size(); ++i) {
        if (dataset.ground_truth[i] != dataset.ground_truth[i - 1]) {
            out.push_back(i);
        }
    }
    return out;
}

void save_truth(const std::filesystem::path& path, const SimDataset& dataset) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << "id,true_label,flipped\n";
    for (std::size_t i = 0; i < dataset.cells.size(); ++i) {
        out << dataset.cells[i].id << ',' << dataset.ground_truth[i] + 1 << ',' << (dataset.noisy_mask[i] ? 1 : 0) << '\n';
    }
}

}  // namespace timely::simulate
