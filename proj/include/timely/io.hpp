#ifndef TIMELY_IO_HPP
#define TIMELY_IO_HPP

#include "timely/core.hpp"

#include "json.hpp"

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace timely::io {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
double parse_double(std::string_view text);

/// Splits one CSV line. Fields may be double-quoted; "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_field(std::string_view value);

/**
 * Reads `id,label,image_ref,f0,...,f{d-1}`. A label is matched against the
 * state names first, then read as a 1-based index.
 */
std::vector<CellRecord> read_cells(std::istream& in, const LineageTopology& topology);
std::vector<CellRecord> load_cells(const std::filesystem::path& path, const LineageTopology& topology);

/// Writes labels as state names.
void write_cells(std::ostream& out, std::span<const CellRecord> cells, const LineageTopology& topology);
void save_cells(const std::filesystem::path& path, std::span<const CellRecord> cells, const LineageTopology& topology);

LineageTopology topology_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LineageTopology& topology);
LineageTopology load_topology(const std::filesystem::path& path);

/// Transition keys are "from->to" with 1-based state indices.
nlohmann::json to_json(const HmtParams& params);
HmtParams params_from_json(const nlohmann::json& j);

/// Accepts a bare matrix or an object with a "B" member.
Eigen::MatrixXd emission_from_json(const nlohmann::json& j);
/// Accepts a bare array or an object with a "pi" member.
std::vector<double> pi_from_json(const nlohmann::json& j);

nlohmann::json to_json(const OrderedDataset& ordered, const LineageTopology& topology);
OrderedDataset ordered_from_json(const nlohmann::json& j, const LineageTopology& topology);

nlohmann::json to_json(const ConsistencyReport& report);
ConsistencyReport report_from_json(const nlohmann::json& j);

nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace timely::io

#endif
