#include "hat/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace hat {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CsvTable parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::size_t> starts;
    std::vector<std::string> row;
    std::string field;
    std::size_t line = 1, row_line = 1;
    bool quoted = false, field_started = false, row_blank = true;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        if (!(row_blank && row.empty() && field.empty() && !field_started)) {
            end_field();
            records.push_back(std::move(row));
            starts.push_back(row_line);
        }
        row.clear();
        row_blank = true;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (row_blank) row_line = line;
        switch (c) {
            case '"':
                if (!field.empty()) throw InputError("stray quote inside an unquoted field", line);
                quoted = true;
                field_started = true;
                row_blank = false;
                break;
            case ',':
                end_field();
                row_blank = false;
                break;
            case '\r':
                break;
            case '\n':
                end_row();
                ++line;
                break;
            default:
                field.push_back(c);
                row_blank = false;
        }
    }
    if (quoted) throw InputError("unterminated quoted field", line);
    end_row();

    CsvTable table;
    if (records.empty()) throw InputError("empty CSV input");
    table.header = std::move(records[0]);
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size()) {
            throw InputError("expected " + std::to_string(table.header.size()) + " fields, found " +
                                 std::to_string(records[r].size()),
                             starts[r]);
        }
        table.rows.push_back(std::move(records[r]));
        table.lines.push_back(starts[r]);
    }
    return table;
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, std::size_t line) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw InputError("'" + std::string(s) + "' is not a number", line);
    }
    if (!std::isfinite(v)) throw InputError("non-finite value", line);
    return v;
}

namespace {

void expect_header(const CsvTable& t, std::initializer_list<const char*> names) {
    std::size_t k = 0;
    for (const char* n : names) {
        if (k >= t.header.size() || t.header[k] != n) {
            std::string want;
            for (const char* m : names) want += (want.empty() ? "" : ",") + std::string(m);
            throw InputError("expected header '" + want + "'", 1);
        }
        ++k;
    }
}

NodeId resolve(const Tree& t, const std::string& name, std::size_t line) {
    const auto id = t.find(name);
    if (!id) throw InputError("unknown node '" + name + "'", line);
    return *id;
}

}  // namespace

PValueAssignment read_pvalues_csv(std::string_view text, const Tree& t) {
    const CsvTable csv = parse_csv(text);
    expect_header(csv, {"node", "pvalue"});
    PValueAssignment pv(t.size(), PValueSource::external);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const std::size_t line = csv.lines[r];
        const NodeId u = resolve(t, csv.rows[r][0], line);
        if (t.is_leaf(u)) throw InputError("node '" + csv.rows[r][0] + "' is a leaf", line);
        if (pv.has(u)) throw InputError("duplicate p-value for node '" + csv.rows[r][0] + "'", line);
        const double p = parse_double(csv.rows[r][1], line);
        if (p < 0.0 || p > 1.0) throw InputError("p-value outside [0, 1]", line);
        pv.set(u, p);
    }
    for (NodeId u : t.internal_nodes()) {
        if (!pv.has(u)) throw InputError("missing p-value for node '" + t.name(u) + "'");
    }
    return pv;
}

std::string write_pvalues_csv(const Tree& t, const PValueAssignment& pv) {
    std::string out = "node,pvalue\n";
    for (NodeId u : t.internal_nodes()) out += csv_field(t.name(u)) + "," + format_double(pv[u]) + "\n";
    return out;
}

std::vector<double> read_leaf_values_csv(std::string_view text, const Tree& t) {
    const CsvTable csv = parse_csv(text);
    expect_header(csv, {"leaf", "y"});
    std::vector<double> y(t.n_leaves(), 0.0);
    std::vector<bool> seen(t.n_leaves(), false);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const std::size_t line = csv.lines[r];
        const NodeId u = resolve(t, csv.rows[r][0], line);
        if (!t.is_leaf(u)) throw InputError("node '" + csv.rows[r][0] + "' is not a leaf", line);
        const int pos = t.leaves_under(u).start;
        if (seen[pos]) throw InputError("duplicate value for leaf '" + csv.rows[r][0] + "'", line);
        seen[pos] = true;
        y[pos] = parse_double(csv.rows[r][1], line);
    }
    for (int i = 0; i < t.n_leaves(); ++i) {
        if (!seen[i]) throw InputError("missing value for leaf '" + t.name(t.leaf_order()[i]) + "'");
    }
    return y;
}

Eigen::MatrixXd read_design_csv(std::string_view text, const Tree& t) {
    const CsvTable csv = parse_csv(text);
    if (static_cast<int>(csv.header.size()) != t.n_leaves()) {
        throw InputError("design has " + std::to_string(csv.header.size()) + " columns but the tree has " +
                             std::to_string(t.n_leaves()) + " leaves",
                         1);
    }
    std::vector<int> pos(csv.header.size());
    std::vector<bool> seen(t.n_leaves(), false);
    for (std::size_t j = 0; j < csv.header.size(); ++j) {
        const NodeId u = resolve(t, csv.header[j], 1);
        if (!t.is_leaf(u)) throw InputError("column '" + csv.header[j] + "' is not a leaf", 1);
        pos[j] = t.leaves_under(u).start;
        if (seen[pos[j]]) throw InputError("duplicate column '" + csv.header[j] + "'", 1);
        seen[pos[j]] = true;
    }
    if (csv.rows.empty()) throw InputError("design has no rows");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(csv.rows.size()), t.n_leaves());
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        for (std::size_t j = 0; j < csv.header.size(); ++j) {
            X(static_cast<Eigen::Index>(r), pos[j]) = parse_double(csv.rows[r][j], csv.lines[r]);
        }
    }
    return X;
}

Eigen::VectorXd read_response_csv(std::string_view text) {
    const CsvTable csv = parse_csv(text);
    expect_header(csv, {"y"});
    if (csv.header.size() != 1) throw InputError("response file must have a single 'y' column", 1);
    if (csv.rows.empty()) throw InputError("response has no rows");
    Eigen::VectorXd y(static_cast<Eigen::Index>(csv.rows.size()));
    for (std::size_t r = 0; r < csv.rows.size(); ++r) y(static_cast<Eigen::Index>(r)) = parse_double(csv.rows[r][0], csv.lines[r]);
    return y;
}

std::string partition_to_json(const Tree& t, const Partition& c) {
    nlohmann::ordered_json j;
    j["p"] = c.n_leaves();
    nlohmann::json sizes = nlohmann::json::array(), groups = nlohmann::json::array();
    for (const LeafRange& g : c.groups) {
        sizes.push_back(g.len);
        nlohmann::json names = nlohmann::json::array();
        for (NodeId leaf : t.leaves_in(g)) names.push_back(t.name(leaf));
        groups.push_back(std::move(names));
    }
    j["sizes"] = std::move(sizes);
    j["groups"] = std::move(groups);
    return j.dump(2) + "\n";
}

std::vector<int> read_partition_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("invalid partition JSON: ") + e.what());
    }
    if (!j.is_object()) throw InputError("partition JSON must be an object");
    std::vector<int> labels;
    try {
        if (j.contains("sizes")) {
            int g = 0;
            for (const auto& s : j.at("sizes")) {
                const int n = s.get<int>();
                if (n < 1) throw InputError("group sizes must be positive");
                labels.insert(labels.end(), n, g++);
            }
        } else if (j.contains("labels")) {
            labels = j.at("labels").get<std::vector<int>>();
        } else {
            throw InputError("partition JSON needs 'sizes' or 'labels'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid partition JSON: ") + e.what());
    }
    if (j.contains("p") && j.at("p").is_number_integer() && j.at("p").get<long>() != static_cast<long>(labels.size())) {
        throw InputError("partition declares p = " + j.at("p").dump() + " but covers " +
                         std::to_string(labels.size()) + " leaves");
    }
    if (labels.empty()) throw InputError("partition is empty");
    return labels;
}

}  // namespace hat
