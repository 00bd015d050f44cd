#include "timely/review.hpp"

#include "timely/io.hpp"

#include <httplib.h>
#include "json.hpp"
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

namespace timely::review {

namespace {

using nlohmann::json;

Response json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

Response error_response(int status, const std::string& message) {
    return json_response(status, json{{"error", message}});
}

std::int64_t wall_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

json decision_json(const DecisionRecord& d) {
    return {{"decision", to_string(d.decision)},
            {"custom_label", d.custom_label ? json(*d.custom_label + 1) : json(nullptr)},
            {"timestamp", d.timestamp},
            {"seq", d.seq}};
}

}  // namespace

ReviewService::ReviewService(ConsistencyReport report, std::filesystem::path session_file,
                             std::unordered_map<std::string, std::vector<double>> features, Clock clock)
    : report_(std::move(report)), log_(std::move(session_file)), features_(std::move(features)),
      clock_(clock ? std::move(clock) : Clock(wall_clock_ms)) {
    const std::size_t n = report_.cells.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!index_.emplace(report_.cells[i].id, i).second) {
            throw ValidationError("duplicate cell id in report: " + report_.cells[i].id);
        }
    }

    // Neighbours: adjacent cells in pseudotime order within the same branch.
    std::map<int, std::vector<std::size_t>> by_branch;
    for (std::size_t i = 0; i < n; ++i) by_branch[report_.cells[i].branch_id].push_back(i);
    prev_.assign(n, -1);
    next_.assign(n, -1);
    for (auto& [branch, members] : by_branch) {
        std::stable_sort(members.begin(), members.end(),
                         [&](std::size_t a, std::size_t b) { return report_.cells[a].pseudotime < report_.cells[b].pseudotime; });
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (j > 0) prev_[members[j]] = static_cast<int>(members[j - 1]);
            if (j + 1 < members.size()) next_[members[j]] = static_cast<int>(members[j + 1]);
        }
    }

    std::size_t replayed = 0;
    for (auto& rec : log_.replay()) {
        next_seq_ = std::max(next_seq_, rec.seq + 1);
        if (!index_.count(rec.cell_id)) {
            spdlog::warn("session log names unknown cell {}; ignored", rec.cell_id);
            continue;
        }
        auto it = decisions_.find(rec.cell_id);
        if (it == decisions_.end() || supersedes(rec, it->second)) {
            decisions_[rec.cell_id] = rec;
        }
        ++replayed;
    }
    if (replayed > 0) {
        spdlog::info("replayed {} decisions from {}", replayed, log_.path().string());
    }
}

std::string ReviewService::session_id() const { return log_.path().stem().string(); }

const DecisionRecord* ReviewService::effective(const std::string& id) const {
    auto it = decisions_.find(id);
    return it == decisions_.end() ? nullptr : &it->second;
}

int ReviewService::final_label(std::size_t cell, const DecisionRecord* d) const {
    const auto& c = report_.cells[cell];
    if (!d) return c.observed_label;
    switch (d->decision) {
        case Decision::accept_proposed: return c.inferred_label;
        case Decision::keep_observed: return c.observed_label;
        case Decision::custom: return *d->custom_label;
    }
    return c.observed_label;
}

std::map<std::string, DecisionRecord> ReviewService::decisions() const {
    std::shared_lock lock(mutex_);
    return decisions_;
}

std::vector<int> ReviewService::final_labels() const {
    std::shared_lock lock(mutex_);
    std::vector<int> out;
    for (std::size_t i = 0; i < report_.cells.size(); ++i) out.push_back(final_label(i, effective(report_.cells[i].id)));
    return out;
}

Response ReviewService::dataset() const {
    json base = io::to_json(report_);
    std::shared_lock lock(mutex_);
    json cells = json::array();
    for (std::size_t i = 0; i < report_.cells.size(); ++i) {
        json c = base["cells"][i];
        const auto* d = effective(report_.cells[i].id);
        c["final_label"] = final_label(i, d) + 1;
        c["decision"] = d ? json(to_string(d->decision)) : json(nullptr);
        cells.push_back(std::move(c));
    }
    return json_response(200, json{{"session_id", session_id()},
                                   {"states", report_.states},
                                   {"cells", cells},
                                   {"borders", base["borders"]}});
}

Response ReviewService::cell(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        return error_response(404, "unknown cell " + id);
    }
    const std::size_t i = it->second;
    json c = io::to_json(report_)["cells"][i];
    auto neighbour = [&](int j) { return j < 0 ? json(nullptr) : json(report_.cells[static_cast<std::size_t>(j)].id); };
    c["prev"] = neighbour(prev_[i]);
    c["next"] = neighbour(next_[i]);
    c["index"] = i;
    if (auto f = features_.find(id); f != features_.end()) {
        const auto& v = f->second;
        double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        c["features"] = v;
        c["feature_summary"] = {{"dimension", v.size()},
                                {"norm", norm},
                                {"min", v.empty() ? 0.0 : *std::min_element(v.begin(), v.end())},
                                {"max", v.empty() ? 0.0 : *std::max_element(v.begin(), v.end())}};
    }
    std::shared_lock lock(mutex_);
    const auto* d = effective(id);
    c["final_label"] = final_label(i, d) + 1;
    c["decision"] = d ? decision_json(*d) : json(nullptr);
    return json_response(200, c);
}

Response ReviewService::borders() const {
    return json_response(200, io::to_json(report_)["borders"]);
}

Response ReviewService::decide(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        return error_response(422, "body is not valid JSON");
    }
    if (!j.is_object() || !j.contains("cell_id") || !j["cell_id"].is_string()) {
        return error_response(422, "cell_id must be a string");
    }
    const std::string id = j["cell_id"].get<std::string>();
    if (!index_.count(id)) {
        return error_response(404, "unknown cell " + id);
    }
    if (!j.contains("decision") || !j["decision"].is_string()) {
        return error_response(422, "decision must be a string");
    }
    auto decision = parse_decision(j["decision"].get<std::string>());
    if (!decision) {
        return error_response(422, "decision must be accept_proposed, keep_observed or custom");
    }
    const bool has_custom = j.contains("custom_label") && !j["custom_label"].is_null();
    DecisionRecord rec;
    rec.cell_id = id;
    rec.decision = *decision;
    if (*decision == Decision::custom) {
        if (!has_custom) {
            return error_response(422, "custom decisions need custom_label");
        }
        const auto& v = j["custom_label"];
        const int k = static_cast<int>(report_.states.size());
        if (v.is_number_integer() && v.get<long long>() >= 1 && v.get<long long>() <= k) {
            rec.custom_label = static_cast<int>(v.get<long long>()) - 1;
        } else if (v.is_string()) {
            auto s = std::find(report_.states.begin(), report_.states.end(), v.get<std::string>());
            if (s != report_.states.end()) rec.custom_label = static_cast<int>(s - report_.states.begin());
        }
        if (!rec.custom_label) {
            return error_response(422, "custom_label must be a state name or an index in 1.." + std::to_string(k));
        }
    } else if (has_custom) {
        return error_response(422, "custom_label is only allowed with decision custom");
    }

    std::unique_lock lock(mutex_);
    rec.seq = next_seq_++;
    rec.timestamp = clock_();
    try {
        log_.append(rec);
    } catch (const std::exception& e) {
        spdlog::error("decision for {} not persisted: {}", id, e.what());
        return error_response(500, "decision could not be persisted");
    }
    auto it = decisions_.find(id);
    if (it == decisions_.end() || supersedes(rec, it->second)) {
        decisions_[id] = rec;
    }
    const std::size_t i = index_.at(id);
    json ack = decision_json(rec);
    ack["cell_id"] = id;
    ack["final_label"] = final_label(i, effective(id)) + 1;
    return json_response(200, ack);
}

Response ReviewService::export_csv() const {
    std::ostringstream out;
    out << "id,observed_label,final_label,decision\n";
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < report_.cells.size(); ++i) {
        const auto& c = report_.cells[i];
        const auto* d = effective(c.id);
        out << io::csv_field(c.id) << ',' << c.observed_label + 1 << ',' << final_label(i, d) + 1 << ','
            << (d ? to_string(d->decision) : std::string_view("none")) << '\n';
    }
    return {200, "text/csv", out.str()};
}

void mount(httplib::Server& server, ReviewService& service, const std::optional<std::filesystem::path>& static_dir) {
    auto send = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.Get("/api/dataset", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.dataset()); });
    server.Get("/api/borders", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.borders()); });
    server.Get("/api/export", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.export_csv()); });
    server.Get(R"(/api/cell/(.+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.cell(httplib::detail::decode_url(req.matches[1], false)));
    });
    server.Post("/api/decision", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.decide(req.body));
    });
    if (static_dir) {
        if (!server.set_mount_point("/", static_dir->string())) {
            spdlog::warn("UI directory {} not found; serving the API only", static_dir->string());
        }
    }
}

}  // namespace timely::review
