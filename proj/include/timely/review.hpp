#ifndef TIMELY_REVIEW_HPP
#define TIMELY_REVIEW_HPP

#include "timely/core.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
}

namespace timely::review {

enum class Decision { accept_proposed, keep_observed, custom };

std::string_view to_string(Decision decision);
std::optional<Decision> parse_decision(std::string_view text);

struct DecisionRecord {
    std::string cell_id;
    Decision decision = Decision::keep_observed;
    /// 0-based; set only for `Decision::custom`.
    std::optional<int> custom_label;
    /// Milliseconds since the epoch.
    std::int64_t timestamp = 0;
    std::uint64_t seq = 0;
};

/// True when `a` supersedes `b`: later timestamp, then higher sequence number.
bool supersedes(const DecisionRecord& a, const DecisionRecord& b);

/**
 * Append-only JSON-lines file of decisions. Every append opens the file,
 * writes one complete line, fsyncs and closes it, so a record is on disk
 * before append() returns.
 */
class SessionLog {
public:
    explicit SessionLog(std::filesystem::path path);

    /// @throws Error if the record could not be made durable.
    void append(const DecisionRecord& record) const;

    /**
     * All records in file order. A torn final line (crash mid-write) is
     * skipped with a warning; any other malformed line is a ParseError.
     */
    std::vector<DecisionRecord> replay() const;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/**
 * Review state over one report. Reads take a shared lock; decisions are
 * serialised through one writer and acknowledged only after the log append.
 */
class ReviewService {
public:
    using Clock = std::function<std::int64_t()>;

    ReviewService(ConsistencyReport report, std::filesystem::path session_file,
                  std::unordered_map<std::string, std::vector<double>> features = {}, Clock clock = {});

    Response dataset() const;
    Response cell(const std::string& id) const;
    Response borders() const;
    Response decide(const std::string& body);
    Response export_csv() const;

    std::string session_id() const;
    /// Effective decision per cell id.
    std::map<std::string, DecisionRecord> decisions() const;
    /// Final label (0-based) for every cell, in report order.
    std::vector<int> final_labels() const;

private:
    int final_label(std::size_t cell, const DecisionRecord* d) const;
    const DecisionRecord* effective(const std::string& id) const;

    ConsistencyReport report_;
    SessionLog log_;
    std::unordered_map<std::string, std::vector<double>> features_;
    Clock clock_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<int> prev_, next_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, DecisionRecord> decisions_;
    std::uint64_t next_seq_ = 0;
};

/// Registers the /api routes and, if given, serves `static_dir` at "/".
void mount(httplib::Server& server, ReviewService& service, const std::optional<std::filesystem::path>& static_dir = {});

}  // namespace timely::review

#endif
