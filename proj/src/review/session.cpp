#include "timely/review.hpp"

#include "json.hpp"
#include <spdlog/spdlog.h>

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <unistd.h>

namespace timely::review {

namespace {

using nlohmann::json;

void write_all(int fd, const std::string& data) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(std::string("session log write failed: ") + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

void sync_directory(const std::filesystem::path& dir) {
    int fd = ::open(dir.empty() ? "." : dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

DecisionRecord record_from_json(const json& j) {
    DecisionRecord r;
    r.cell_id = j.at("cell_id").get<std::string>();
    auto d = parse_decision(j.at("decision").get<std::string>());
    if (!d) throw Error("unknown decision");
    r.decision = *d;
    if (j.contains("custom_label") && !j.at("custom_label").is_null()) {
        r.custom_label = j.at("custom_label").get<int>() - 1;
    }
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    r.seq = j.at("seq").get<std::uint64_t>();
    return r;
}

}  // namespace

std::string_view to_string(Decision decision) {
    switch (decision) {
        case Decision::accept_proposed: return "accept_proposed";
        case Decision::keep_observed: return "keep_observed";
        case Decision::custom: return "custom";
    }
    return "";
}

std::optional<Decision> parse_decision(std::string_view text) {
    if (text == "accept_proposed") return Decision::accept_proposed;
    if (text == "keep_observed") return Decision::keep_observed;
    if (text == "custom") return Decision::custom;
    return std::nullopt;
}

bool supersedes(const DecisionRecord& a, const DecisionRecord& b) {
    return a.timestamp > b.timestamp || (a.timestamp == b.timestamp && a.seq > b.seq);
}

SessionLog::SessionLog(std::filesystem::path path) : path_(std::move(path)) {}

void SessionLog::append(const DecisionRecord& record) const {
    json j{{"seq", record.seq},
           {"timestamp", record.timestamp},
           {"cell_id", record.cell_id},
           {"decision", to_string(record.decision)},
           {"custom_label", record.custom_label ? json(*record.custom_label + 1) : json(nullptr)}};
    const std::string line = j.dump() + "\n";
    const bool existed = std::filesystem::exists(path_);
    int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw Error("cannot open session log " + path_.string() + ": " + std::strerror(errno));
    }
    try {
        write_all(fd, line);
        if (::fsync(fd) != 0) {
            throw Error(std::string("session log fsync failed: ") + std::strerror(errno));
        }
    } catch (...) {
        ::close(fd);
        throw;
    }
    if (::close(fd) != 0) {
        throw Error(std::string("session log close failed: ") + std::strerror(errno));
    }
    if (!existed) {
        sync_directory(path_.parent_path());
    }
}

std::vector<DecisionRecord> SessionLog::replay() const {
    std::vector<DecisionRecord> out;
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
        return out;
    }
    std::vector<std::string> lines;
    std::string line;
    bool last_complete = true;
    while (std::getline(in, line)) {
        last_complete = !in.eof();
        lines.push_back(line);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(lines[i])));
        } catch (const std::exception& e) {
            if (i + 1 == lines.size() && !last_complete) {
                spdlog::warn("ignoring torn final line in {}", path_.string());
                continue;
            }
            throw ParseError(path_.string() + ": bad session record (" + e.what() + ")", i + 1);
        }
    }
    return out;
}

}  // namespace timely::review
