#include "timely/eval.hpp"

#include "timely/baselines.hpp"
#include "timely/io.hpp"
#include "timely/pipeline.hpp"
#include "timely/rng.hpp"
#include "timely/simulate.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace timely::eval {

namespace {

using Clock = std::chrono::steady_clock;
using io::format_double;

struct Task {
    int noise_level = 0;
    std::uint64_t seed = 0;
};

// Fisher-Yates with an RNG stream separate from the simulator's.
void shuffle(simulate::SimDataset& ds, std::uint64_t seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = ds.cells.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(ds.cells[i - 1], ds.cells[j]);
        std::swap(ds.ground_truth[i - 1], ds.ground_truth[j]);
        bool tmp = ds.noisy_mask[i - 1];
        ds.noisy_mask[i - 1] = ds.noisy_mask[j];
        ds.noisy_mask[j] = tmp;
    }
}

Metrics run_method(const std::string& method, const simulate::SimDataset& ds, const RowMatrix& features,
                   const std::vector<int>& labels, const BenchmarkConfig& config, std::uint64_t seed) {
    using baselines::NeighborMode;
    if (method == "timely") {
        const auto topology = chain_topology(config.classes);
        const Eigen::MatrixXd emission =
            config.classes == 5 ? granulopoiesis_emission() : symmetric_emission(config.classes, 0.8);
        const auto params = default_params(topology, emission);
        PipelineConfig pc;
        pc.seed = seed;
        auto res = run_pipeline_detailed(ds.cells, topology, emission, params.pi, pc);
        std::vector<bool> flagged(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) flagged[i] = res.inferred[i] != labels[i];
        return score(flagged, ds.noisy_mask, ds.ground_truth, &res.inferred);
    }
    baselines::FlagResult r;
    if (method == "knn") {
        r = baselines::knn_flag(features, labels, config.k, NeighborMode::nn);
    } else if (method == "kncn") {
        r = baselines::knn_flag(features, labels, config.k, NeighborMode::ncn);
    } else if (method == "knn-edit") {
        r = baselines::knn_edit(features, labels, config.k, config.k_prime, NeighborMode::nn);
    } else if (method == "kncn-edit") {
        r = baselines::knn_edit(features, labels, config.k, config.k_prime, NeighborMode::ncn);
    } else if (method == "confident") {
        baselines::ConfidentOptions opts;
        opts.folds = config.folds;
        opts.seed = seed;
        r = baselines::confident_flag(features, labels, config.classes, opts);
    } else {
        throw ValidationError("unknown method " + method);
    }
    return score(r.flagged, ds.noisy_mask, ds.ground_truth, r.proposed ? &*r.proposed : nullptr);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double stdev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

const MetricRow* BenchmarkResult::find(const std::string& method, int noise_level) const {
    for (const auto& r : rows) {
        if (r.method == method && r.noise_level == noise_level) return &r;
    }
    return nullptr;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
    for (const auto& m : config.methods) {
        if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end()) {
            throw ValidationError("unknown method " + m);
        }
    }
    for (int level : config.noise_levels) {
        simulate::SimConfig sc{config.n, config.classes, config.dim, level, 0};
        simulate::validate(sc);
    }
    const auto start = Clock::now();
    std::vector<Task> tasks;
    for (int level : config.noise_levels) {
        for (auto seed : config.seeds) tasks.push_back({level, seed});
    }
    const std::size_t per_task = config.methods.size();
    std::vector<RunRecord> runs(tasks.size() * per_task);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) {
            const auto& task = tasks[t];
            const std::uint64_t sub = task.seed + static_cast<std::uint64_t>(task.noise_level);
            simulate::SimConfig sc{config.n, config.classes, config.dim, task.noise_level, sub};
            auto ds = simulate::generate(sc);
            shuffle(ds, sub);
            const RowMatrix features = feature_matrix(ds.cells);
            const auto labels = observed_labels(ds.cells);
            for (std::size_t m = 0; m < per_task; ++m) {
                auto& rec = runs[t * per_task + m];
                rec.method = config.methods[m];
                rec.noise_level = task.noise_level;
                rec.seed = task.seed;
                const auto t0 = Clock::now();
                try {
                    rec.metrics = run_method(rec.method, ds, features, labels, config, sub);
                } catch (const std::exception& e) {
                    rec.error = e.what();
                    spdlog::warn("{} failed at noise {} seed {}: {}", rec.method, task.noise_level, task.seed, e.what());
                }
                rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            }
        }
    };
    int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    BenchmarkResult out;
    for (int level : config.noise_levels) {
        for (const auto& method : config.methods) {
            MetricRow row;
            row.method = method;
            row.noise_level = level;
            std::vector<double> acc, sel, prec, rec, f1;
            for (const auto& r : runs) {
                if (r.method != method || r.noise_level != level) continue;
                if (!r.metrics) {
                    ++row.failed_seeds;
                    continue;
                }
                sel.push_back(r.metrics->selected_items);
                prec.push_back(r.metrics->precision);
                rec.push_back(r.metrics->recall);
                f1.push_back(r.metrics->f1);
                if (r.metrics->accuracy) acc.push_back(*r.metrics->accuracy);
            }
            row.seeds = static_cast<int>(f1.size());
            row.selected_items = mean(sel);
            row.selected_items_std = stdev(sel);
            row.precision = mean(prec);
            row.precision_std = stdev(prec);
            row.recall = mean(rec);
            row.recall_std = stdev(rec);
            row.f1 = mean(f1);
            row.f1_std = stdev(f1);
            if (!acc.empty()) {
                row.accuracy = mean(acc);
                row.accuracy_std = stdev(acc);
            }
            out.rows.push_back(std::move(row));
        }
    }
    out.runs = std::move(runs);
    out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return out;
}

void write_csv(std::ostream& out, std::span<const MetricRow> rows) {
    out << "method,noise_level,accuracy,accuracy_std,selected_items,selected_items_std,precision,precision_std,"
           "recall,recall_std,f1,f1_std,seeds,failed_seeds\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.noise_level << ',' << fmt_opt(r.accuracy) << ',' << fmt_opt(r.accuracy_std) << ','
            << format_double(r.selected_items) << ',' << format_double(r.selected_items_std) << ','
            << format_double(r.precision) << ',' << format_double(r.precision_std) << ',' << format_double(r.recall)
            << ',' << format_double(r.recall_std) << ',' << format_double(r.f1) << ',' << format_double(r.f1_std)
            << ',' << r.seeds << ',' << r.failed_seeds << '\n';
    }
}

nlohmann::json to_json(const BenchmarkResult& result) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json rows = json::array();
    for (const auto& r : result.rows) {
        rows.push_back({{"method", r.method},
                        {"noise_level", r.noise_level},
                        {"accuracy", opt(r.accuracy)},
                        {"accuracy_std", opt(r.accuracy_std)},
                        {"selected_items", r.selected_items},
                        {"selected_items_std", r.selected_items_std},
                        {"precision", r.precision},
                        {"precision_std", r.precision_std},
                        {"recall", r.recall},
                        {"recall_std", r.recall_std},
                        {"f1", r.f1},
                        {"f1_std", r.f1_std},
                        {"seeds", r.seeds},
                        {"failed_seeds", r.failed_seeds}});
    }
    json runs = json::array();
    for (const auto& r : result.runs) {
        json j{{"method", r.method}, {"noise_level", r.noise_level}, {"seed", r.seed}};
        if (r.metrics) {
            j["accuracy"] = opt(r.metrics->accuracy);
            j["selected_items"] = r.metrics->selected_items;
            j["precision"] = r.metrics->precision;
            j["recall"] = r.metrics->recall;
            j["f1"] = r.metrics->f1;
        } else {
            j["error"] = r.error;
        }
        runs.push_back(std::move(j));
    }
    return {{"rows", rows}, {"runs", runs}};
}

}  // namespace timely::eval
