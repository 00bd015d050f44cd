#include "timely/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace timely::io {

using nlohmann::json;

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
        throw Error("not a number: '" + std::string(text) + "'");
    }
    return value;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (quoted) {
        throw Error("unterminated quoted field");
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string csv_field(std::string_view value) {
    if (value.find_first_of(",\"\n") == std::string_view::npos) {
        return std::string(value);
    }
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

namespace {

int parse_label(const std::string& text, const LineageTopology& topology, const std::string& id, std::size_t line) {
    if (auto idx = topology.index_of(text)) {
        return *idx;
    }
    long value = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
        throw ParseError("cell '" + id + "': unknown label '" + text + "'", line);
    }
    if (value < 1 || value > topology.size()) {
        throw ValidationError("cell '" + id + "': label " + text + " outside 1.." + std::to_string(topology.size()));
    }
    return static_cast<int>(value - 1);
}

}  // namespace

std::vector<CellRecord> read_cells(std::istream& in, const LineageTopology& topology) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("missing header", 1);
    }
    auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label" || header[2] != "image_ref") {
        throw ParseError("header must start with id,label,image_ref", 1);
    }
    const std::size_t d = header.size() - 3;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[3 + j] != "f" + std::to_string(j)) {
            throw ParseError("feature column " + std::to_string(j) + " must be named f" + std::to_string(j), 1);
        }
    }

    std::vector<CellRecord> cells;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const Error& e) {
            throw ParseError(e.what(), lineno);
        }
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()), lineno);
        }
        CellRecord cell;
        cell.id = fields[0];
        if (cell.id.empty()) {
            throw ParseError("empty cell id", lineno);
        }
        cell.observed_label = parse_label(fields[1], topology, cell.id, lineno);
        cell.image_ref = fields[2];
        cell.features.reserve(d);
        for (std::size_t j = 0; j < d; ++j) {
            double v = 0.0;
            try {
                v = parse_double(fields[3 + j]);
            } catch (const Error& e) {
                throw ParseError(e.what(), lineno);
            }
            if (!std::isfinite(v)) {
                throw ParseError("non-finite feature value", lineno);
            }
            cell.features.push_back(v);
        }
        cells.push_back(std::move(cell));
    }

    std::map<std::string_view, std::size_t> seen;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!seen.emplace(cells[i].id, i).second) {
            throw ValidationError("duplicate cell id '" + cells[i].id + "'");
        }
    }
    return cells;
}

std::vector<CellRecord> load_cells(const std::filesystem::path& path, const LineageTopology& topology) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read_cells(in, topology);
}

void write_cells(std::ostream& out, std::span<const CellRecord> cells, const LineageTopology& topology) {
    const std::size_t d = cells.empty() ? 0 : cells.front().features.size();
    out << "id,label,image_ref";
    for (std::size_t j = 0; j < d; ++j) {
        out << ",f" << j;
    }
    out << '\n';
    for (const auto& c : cells) {
        if (c.features.size() != d) {
            throw ValidationError("cell '" + c.id + "' has inconsistent feature length");
        }
        out << csv_field(c.id) << ',' << csv_field(topology.name(c.observed_label)) << ',' << csv_field(c.image_ref);
        for (double v : c.features) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

void save_cells(const std::filesystem::path& path, std::span<const CellRecord> cells, const LineageTopology& topology) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    write_cells(out, cells, topology);
}

LineageTopology topology_from_json(const json& j) {
    std::vector<std::string> states;
    std::vector<std::pair<int, int>> edges;
    try {
        states = j.at("states").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("topology: ") + e.what());
    }
    auto lookup = [&](const std::string& name) {
        for (std::size_t i = 0; i < states.size(); ++i) {
            if (states[i] == name) return static_cast<int>(i);
        }
        throw TopologyError("unknown state '" + name + "'");
    };
    if (!j.contains("root") || !j.at("root").is_string()) {
        throw TopologyError("topology needs a root state name");
    }
    int root = lookup(j.at("root").get<std::string>());
    if (j.contains("edges")) {
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) {
                throw TopologyError("edges must be [parent, child] pairs");
            }
            edges.emplace_back(lookup(e[0].get<std::string>()), lookup(e[1].get<std::string>()));
        }
    }
    return LineageTopology(std::move(states), root, std::move(edges));
}

json to_json(const LineageTopology& topology) {
    json edges = json::array();
    for (const auto& [a, b] : topology.edges()) {
        edges.push_back({topology.name(a), topology.name(b)});
    }
    return {{"states", topology.states()}, {"root", topology.name(topology.root())}, {"edges", edges}};
}

LineageTopology load_topology(const std::filesystem::path& path) {
    return topology_from_json(load_json(path));
}

json to_json(const HmtParams& params) {
    json b = json::array();
    for (Eigen::Index r = 0; r < params.emission.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < params.emission.cols(); ++c) {
            row.push_back(params.emission(r, c));
        }
        b.push_back(row);
    }
    json trans = json::object();
    for (const auto& [key, tp] : params.trans) {
        trans[std::to_string(key.first + 1) + "->" + std::to_string(key.second + 1)] = {{"p", tp.p}, {"lambda", tp.lambda}};
    }
    return {{"pi", params.pi}, {"B", b}, {"trans", trans}};
}

Eigen::MatrixXd emission_from_json(const json& j) {
    const json& m = j.is_object() ? j.at("B") : j;
    if (!m.is_array() || m.empty()) {
        throw ValidationError("emission matrix must be a non-empty array of rows");
    }
    const auto k = static_cast<Eigen::Index>(m.size());
    Eigen::MatrixXd b(k, k);
    for (Eigen::Index r = 0; r < k; ++r) {
        const auto& row = m[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != k) {
            throw ValidationError("emission matrix must be square");
        }
        for (Eigen::Index c = 0; c < k; ++c) {
            b(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return b;
}

std::vector<double> pi_from_json(const json& j) {
    const json& v = j.is_object() ? j.at("pi") : j;
    return v.get<std::vector<double>>();
}

HmtParams params_from_json(const json& j) {
    HmtParams params;
    try {
        params.pi = pi_from_json(j);
        params.emission = emission_from_json(j);
        for (const auto& [key, value] : j.at("trans").items()) {
            auto arrow = key.find("->");
            if (arrow == std::string::npos) {
                throw ValidationError("transition key '" + key + "' must look like k->l");
            }
            int from = std::stoi(key.substr(0, arrow)) - 1;
            int to = std::stoi(key.substr(arrow + 2)) - 1;
            params.trans[{from, to}] = {value.at("p").get<double>(), value.at("lambda").get<double>()};
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("params: ") + e.what());
    }
    return params;
}

json to_json(const OrderedDataset& ordered, const LineageTopology& topology) {
    json cells = json::array();
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const auto& c = ordered.cells[i];
        json y = ordered.predecessor[i] < 0 ? json(nullptr) : json(ordered.y[i]);
        cells.push_back({{"id", c.id},
                         {"label", topology.name(c.observed_label)},
                         {"image_ref", c.image_ref},
                         {"pseudotime", ordered.pseudotime[i]},
                         {"branch_id", ordered.branch_id[i]},
                         {"predecessor", ordered.predecessor[i]},
                         {"y", y},
                         {"source_index", ordered.source_index[i]}});
    }
    return {{"cells", cells}};
}

OrderedDataset ordered_from_json(const json& j, const LineageTopology& topology) {
    OrderedDataset out;
    try {
        for (const auto& c : j.at("cells")) {
            CellRecord cell;
            cell.id = c.at("id").get<std::string>();
            auto label = c.at("label").get<std::string>();
            auto idx = topology.index_of(label);
            if (!idx) {
                throw ValidationError("cell '" + cell.id + "': unknown label '" + label + "'");
            }
            cell.observed_label = *idx;
            cell.image_ref = c.value("image_ref", "");
            out.cells.push_back(std::move(cell));
            out.pseudotime.push_back(c.at("pseudotime").get<double>());
            out.branch_id.push_back(c.at("branch_id").get<int>());
            int pred = c.at("predecessor").get<int>();
            out.predecessor.push_back(pred);
            out.y.push_back(pred < 0 ? 0.0 : c.at("y").get<double>());
            out.source_index.push_back(c.value("source_index", out.source_index.size()));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("ordered dataset: ") + e.what());
    }
    return out;
}

json to_json(const ConsistencyReport& report) {
    json cells = json::array();
    for (const auto& c : report.cells) {
        cells.push_back({{"id", c.id},
                         {"observed_label", c.observed_label + 1},
                         {"observed_state", report.states.at(c.observed_label)},
                         {"inferred_label", c.inferred_label + 1},
                         {"inferred_state", report.states.at(c.inferred_label)},
                         {"flagged", c.flagged},
                         {"pseudotime", c.pseudotime},
                         {"branch_id", c.branch_id},
                         {"image_ref", c.image_ref}});
    }
    json borders = json::array();
    for (const auto& b : report.borders) {
        borders.push_back({{"branch_id", b.branch_id},
                           {"from_label", b.from_state + 1},
                           {"to_label", b.to_state + 1},
                           {"from_state", report.states.at(b.from_state)},
                           {"to_state", report.states.at(b.to_state)},
                           {"pseudotime", b.pseudotime}});
    }
    json ll = std::isfinite(report.log_likelihood) ? json(report.log_likelihood) : json(nullptr);
    return {{"states", report.states},
            {"cells", cells},
            {"borders", borders},
            {"log_likelihood", ll},
            {"params", to_json(report.params)}};
}

ConsistencyReport report_from_json(const json& j) {
    ConsistencyReport report;
    try {
        report.states = j.at("states").get<std::vector<std::string>>();
        const int k = static_cast<int>(report.states.size());
        auto label = [k](const json& v, const std::string& id) {
            int l = v.get<int>();
            if (l < 1 || l > k) {
                throw ValidationError("report cell '" + id + "': label out of range");
            }
            return l - 1;
        };
        for (const auto& c : j.at("cells")) {
            CellVerdict v;
            v.id = c.at("id").get<std::string>();
            v.observed_label = label(c.at("observed_label"), v.id);
            v.inferred_label = label(c.at("inferred_label"), v.id);
            v.flagged = c.at("flagged").get<bool>();
            v.pseudotime = c.at("pseudotime").get<double>();
            v.branch_id = c.at("branch_id").get<int>();
            v.image_ref = c.value("image_ref", "");
            if (v.flagged != (v.observed_label != v.inferred_label)) {
                throw ValidationError("report cell '" + v.id + "': flag disagrees with labels");
            }
            report.cells.push_back(std::move(v));
        }
        for (const auto& b : j.at("borders")) {
            report.borders.push_back({b.at("branch_id").get<int>(), label(b.at("from_label"), "border") ,
                                      label(b.at("to_label"), "border"), b.at("pseudotime").get<double>()});
        }
        const auto& ll = j.at("log_likelihood");
        report.log_likelihood = ll.is_null() ? -std::numeric_limits<double>::infinity() : ll.get<double>();
        report.params = params_from_json(j.at("params"));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("report: ") + e.what());
    }
    return report;
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void save_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

}  // namespace timely::io
