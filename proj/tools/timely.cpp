// Command-line front end: simulate, order, infer, baseline, bench, pipeline, serve.

#include "timely/baselines.hpp"
#include "timely/eval.hpp"
#include "timely/io.hpp"
#include "timely/markov.hpp"
#include "timely/pipeline.hpp"
#include "timely/pseudotime.hpp"
#include "timely/review.hpp"
#include "timely/simulate.hpp"

#include "CLI11.hpp"
#include "httplib.h"
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace timely;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::string log_level = "info";
};

const std::map<std::string, pseudotime::EmbedMethod> embed_names{{"mds", pseudotime::EmbedMethod::mds},
                                                                 {"diffusion", pseudotime::EmbedMethod::diffusion_map}};
const std::map<std::string, pseudotime::TrajectoryKind> trajectory_names{{"curve", pseudotime::TrajectoryKind::curve},
                                                                         {"tree", pseudotime::TrajectoryKind::tree}};
const std::map<std::string, pseudotime::CurveInit> init_names{{"direction", pseudotime::CurveInit::label_direction},
                                                              {"centroids", pseudotime::CurveInit::label_centroids},
                                                              {"kmeans", pseudotime::CurveInit::kmeans}};

// Options shared by `order` and `pipeline`.
struct OrderingOptions {
    std::string embed = "mds";
    std::string method = "curve";
    std::string init = "direction";
    int clusters = 0;
    int refine = 0;

    void add(CLI::App* cmd) {
        cmd->add_option("--embed", embed, "Embedding")->check(CLI::IsMember({"mds", "diffusion"}));
        cmd->add_option("--method", method, "Trajectory model")->check(CLI::IsMember({"curve", "tree"}));
        cmd->add_option("--curve-init", init, "Curve initialisation")->check(CLI::IsMember({"direction", "centroids", "kmeans"}));
        cmd->add_option("--clusters", clusters, "k-means clusters (0: one per state)");
        cmd->add_option("--refine-iter", refine, "Principal-curve refinement iterations");
    }

    PipelineConfig config(std::uint64_t seed) const {
        PipelineConfig pc;
        pc.embed = embed_names.at(embed);
        pc.trajectory = trajectory_names.at(method);
        pc.curve.init = init_names.at(init);
        pc.curve.max_iter = refine;
        pc.n_clusters = clusters;
        pc.seed = seed;
        return pc;
    }
};

// Emission and start probabilities from files, or the shipped defaults.
std::pair<Eigen::MatrixXd, std::vector<double>> load_model_inputs(const LineageTopology& topology,
                                                                  const std::string& emission_path,
                                                                  const std::string& pi_path) {
    Eigen::MatrixXd emission;
    if (!emission_path.empty()) {
        emission = io::emission_from_json(io::load_json(emission_path));
    } else if (topology.size() == 5) {
        emission = granulopoiesis_emission();
    } else {
        emission = symmetric_emission(topology.size(), 0.8);
    }
    std::vector<double> pi = pi_path.empty() ? default_params(topology, emission).pi : io::pi_from_json(io::load_json(pi_path));
    return {emission, pi};
}

LineageTopology topology_or_chain(const std::string& path, int classes) {
    return path.empty() ? chain_topology(classes) : io::load_topology(path);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

fs::path session_dir() {
    const char* env = std::getenv("TIMELY_SESSION_DIR");
    return env && *env ? fs::path(env) : fs::path("sessions");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pseudotime-ordered hidden Markov tree label checking"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic noisy chain dataset");
    simulate::SimConfig sc;
    std::string sim_out, sim_truth, sim_topology;
    sim->add_option("--n", sc.n, "Cells");
    sim->add_option("--k", sc.classes, "Classes");
    sim->add_option("--d", sc.dim, "Feature dimension");
    sim->add_option("--noise", sc.noise_level, "Percent of labels replaced");
    sim->add_option("--out", sim_out, "Cells CSV")->required();
    sim->add_option("--truth", sim_truth, "Truth CSV");
    sim->add_option("--topology-out", sim_topology, "Write the chain topology JSON");

    // order
    auto* ord = app.add_subcommand("order", "Order cells by pseudotime");
    std::string ord_cells, ord_topology, ord_out;
    OrderingOptions ord_opts;
    ord->add_option("--cells", ord_cells)->required();
    ord->add_option("--topology", ord_topology)->required();
    ord->add_option("--out", ord_out)->required();
    ord_opts.add(ord);

    // infer
    auto* inf = app.add_subcommand("infer", "Fit the hidden Markov tree and decode true states");
    std::string inf_ordered, inf_topology, inf_emission, inf_pi, inf_out;
    markov::FitOptions fit_opts;
    inf->add_option("--ordered", inf_ordered)->required();
    inf->add_option("--topology", inf_topology)->required();
    inf->add_option("--emission", inf_emission);
    inf->add_option("--pi", inf_pi);
    inf->add_option("--out", inf_out)->required();
    inf->add_option("--max-iter", fit_opts.max_iter);
    inf->add_option("--tol", fit_opts.tol);
    inf->add_flag("--learn-emission", fit_opts.learn_emission);

    // baseline
    auto* base = app.add_subcommand("baseline", "Run a neighbourhood or confident-learning flagger");
    std::string base_method, base_cells, base_topology, base_out;
    int base_k = 3, base_kp = 2, base_folds = 5, base_classes = 5;
    base->add_option("--method", base_method)
        ->required()
        ->check(CLI::IsMember({"knn", "knn-edit", "kncn", "kncn-edit", "confident"}));
    base->add_option("--cells", base_cells)->required();
    base->add_option("--topology", base_topology, "Topology JSON (default: chain of --classes states)");
    base->add_option("--classes", base_classes);
    base->add_option("--k", base_k);
    base->add_option("--k-prime", base_kp);
    base->add_option("--folds", base_folds);
    base->add_option("--out", base_out)->required();

    // bench
    auto* bench = app.add_subcommand("bench", "Simulation benchmark over noise levels and seeds");
    std::vector<int> bench_noise{10, 20, 30};
    int bench_seeds = 10;
    std::string bench_out, bench_json;
    eval::BenchmarkConfig bc;
    bench->add_option("--noise", bench_noise)->delimiter(',');
    bench->add_option("--seeds", bench_seeds, "Number of seeds, starting at --seed");
    bench->add_option("--methods", bc.methods)->delimiter(',');
    bench->add_option("--threads", bc.threads);
    bench->add_option("--out", bench_out)->required();
    bench->add_option("--json", bench_json);

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "Order, fit, decode and flag in one step");
    std::string pipe_cells, pipe_topology, pipe_emission, pipe_pi, pipe_out, pipe_ordered;
    OrderingOptions pipe_opts;
    pipe->add_option("--cells", pipe_cells)->required();
    pipe->add_option("--topology", pipe_topology)->required();
    pipe->add_option("--emission", pipe_emission);
    pipe->add_option("--pi", pipe_pi);
    pipe->add_option("--out", pipe_out)->required();
    pipe->add_option("--ordered-out", pipe_ordered);
    pipe_opts.add(pipe);

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the review API for a report");
    std::string serve_report, serve_cells, serve_topology, serve_host = "127.0.0.1", serve_session = "default", serve_ui;
    int serve_port = 8080;
    serve->add_option("--report", serve_report)->required();
    serve->add_option("--cells", serve_cells, "Cells CSV for feature summaries");
    serve->add_option("--topology", serve_topology, "Topology used to read --cells");
    serve->add_option("--host", serve_host);
    serve->add_option("--port", serve_port, "0 picks a free port");
    serve->add_option("--session", serve_session, "Session name under TIMELY_SESSION_DIR");
    serve->add_option("--ui", serve_ui, "Directory with the UI bundle");

    CLI11_PARSE(app, argc, argv);

    auto logger = spdlog::stderr_color_mt("timely");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (*sim) {
            sc.seed = g.seed;
            auto ds = simulate::generate(sc);
            auto topology = chain_topology(sc.classes);
            io::save_cells(sim_out, ds.cells, topology);
            if (!sim_truth.empty()) simulate::save_truth(sim_truth, ds);
            if (!sim_topology.empty()) io::save_json(sim_topology, io::to_json(topology));
            spdlog::info("wrote {} cells", ds.cells.size());
        } else if (*ord) {
            auto topology = io::load_topology(ord_topology);
            auto cells = io::load_cells(ord_cells, topology);
            auto pc = ord_opts.config(g.seed);
            auto labels = observed_labels(cells);
            auto embedding = pseudotime::embed(feature_matrix(cells), pc.embed, pc.dims);
            pseudotime::TrajectoryModel model;
            if (pc.trajectory == pseudotime::TrajectoryKind::tree) {
                model = pseudotime::fit_tree(embedding, pc.n_clusters, g.seed, topology, labels);
            } else {
                auto opts = pc.curve;
                opts.n_clusters = pc.n_clusters;
                opts.seed = g.seed;
                model = pseudotime::fit_curve(embedding, opts, &topology, labels);
            }
            auto ordered = pseudotime::project(embedding, model, topology, cells);
            io::save_json(ord_out, io::to_json(ordered, topology));
        } else if (*inf) {
            auto topology = io::load_topology(inf_topology);
            auto ordered = io::ordered_from_json(io::load_json(inf_ordered), topology);
            auto [emission, pi] = load_model_inputs(topology, inf_emission, inf_pi);
            auto instance = markov::make_instance(topology, ordered, markov::initial_params(topology, ordered, emission, pi));
            auto fitted = markov::fit(instance, fit_opts);
            instance.params = fitted.params;
            auto decoded = markov::viterbi(instance);
            auto report = make_report(topology, ordered, decoded.states, fitted.log_likelihood_trace.back(), fitted.params);
            io::save_json(inf_out, io::to_json(report));
            spdlog::info("{} of {} cells flagged", std::count_if(report.cells.begin(), report.cells.end(),
                                                                [](const CellVerdict& c) { return c.flagged; }),
                         report.cells.size());
        } else if (*base) {
            auto topology = topology_or_chain(base_topology, base_classes);
            auto cells = io::load_cells(base_cells, topology);
            auto features = feature_matrix(cells);
            auto labels = observed_labels(cells);
            using baselines::NeighborMode;
            baselines::FlagResult r;
            if (base_method == "knn" || base_method == "kncn") {
                r = baselines::knn_flag(features, labels, base_k, base_method == "knn" ? NeighborMode::nn : NeighborMode::ncn);
            } else if (base_method == "confident") {
                r = baselines::confident_flag(features, labels, topology.size(), {base_folds, 1e-3, g.seed});
            } else {
                r = baselines::knn_edit(features, labels, base_k, base_kp,
                                        base_method == "knn-edit" ? NeighborMode::nn : NeighborMode::ncn);
            }
            json rows = json::array();
            for (std::size_t i = 0; i < cells.size(); ++i) {
                json row{{"id", cells[i].id}, {"observed_label", labels[i] + 1}, {"flagged", static_cast<bool>(r.flagged[i])}};
                if (r.proposed) row["proposed_label"] = (*r.proposed)[i] + 1;
                rows.push_back(std::move(row));
            }
            io::save_json(base_out, json{{"method", r.method}, {"hyperparams", r.hyperparams},
                                         {"flagged_count", r.count()}, {"cells", rows}});
        } else if (*bench) {
            bc.noise_levels = bench_noise;
            bc.seeds.clear();
            for (int i = 0; i < bench_seeds; ++i) bc.seeds.push_back(g.seed + static_cast<std::uint64_t>(i));
            auto result = eval::run_benchmark(bc);
            std::ostringstream csv;
            eval::write_csv(csv, result.rows);
            write_text(bench_out, csv.str());
            if (!bench_json.empty()) io::save_json(bench_json, eval::to_json(result));
            std::cout << "method      noise  accuracy  selected  precision  recall  f1\n";
            for (const auto& r : result.rows) {
                std::cout << fmt::format("{:<11} {:>5}  {:>8}  {:>8.3f}  {:>9.3f}  {:>6.3f}  {:.3f} +- {:.3f}\n", r.method,
                                         r.noise_level, r.accuracy ? fmt::format("{:.3f}", *r.accuracy) : "-",
                                         r.selected_items, r.precision, r.recall, r.f1, r.f1_std);
            }
            std::cout << fmt::format("{} runs in {:.1f} s\n", result.runs.size(), result.seconds);
        } else if (*pipe) {
            auto topology = io::load_topology(pipe_topology);
            auto cells = io::load_cells(pipe_cells, topology);
            auto [emission, pi] = load_model_inputs(topology, pipe_emission, pipe_pi);
            auto result = run_pipeline_detailed(cells, topology, emission, pi, pipe_opts.config(g.seed));
            io::save_json(pipe_out, io::to_json(result.report));
            if (!pipe_ordered.empty()) io::save_json(pipe_ordered, io::to_json(result.ordered, topology));
            std::size_t flagged = 0;
            for (const auto& c : result.report.cells) flagged += c.flagged;
            spdlog::info("{} of {} cells flagged, {} borders", flagged, result.report.cells.size(),
                         result.report.borders.size());
        } else if (*serve) {
            auto report = io::report_from_json(io::load_json(serve_report));
            std::unordered_map<std::string, std::vector<double>> features;
            if (!serve_cells.empty()) {
                LineageTopology topology;
                if (serve_topology.empty()) {
                    // Labels are only matched by name or index here, so a chain over the report's states will do.
                    std::vector<std::pair<int, int>> edges;
                    for (int k = 1; k < static_cast<int>(report.states.size()); ++k) edges.emplace_back(k - 1, k);
                    topology = LineageTopology(report.states, 0, edges);
                } else {
                    topology = io::load_topology(serve_topology);
                }
                for (auto& c : io::load_cells(serve_cells, topology)) features.emplace(c.id, std::move(c.features));
            }
            const fs::path dir = session_dir();
            fs::create_directories(dir);
            review::ReviewService service(std::move(report), dir / (serve_session + ".jsonl"), std::move(features));

            // Stop cleanly on SIGINT/SIGTERM.
            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGINT);
            sigaddset(&signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);

            httplib::Server server;
            review::mount(server, service, serve_ui.empty() ? std::nullopt : std::optional<fs::path>(serve_ui));
            int port = serve_port;
            if (serve_port == 0) {
                port = server.bind_to_any_port(serve_host);
            } else if (!server.bind_to_port(serve_host, serve_port)) {
                port = -1;
            }
            if (port < 0) throw Error("cannot bind " + serve_host + ":" + std::to_string(serve_port));
            std::thread waiter([&] {
                int sig = 0;
                sigwait(&signals, &sig);
                server.stop();
            });
            waiter.detach();
            std::cout << "listening on http://" << serve_host << ':' << port << std::endl;
            spdlog::info("session log {}", (dir / (serve_session + ".jsonl")).string());
            server.listen_after_bind();
        }
    } catch (const StageError& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
