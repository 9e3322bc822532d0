#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "seqcls/data.hpp"
#include "seqcls/errors.hpp"

namespace seqcls {

/// Canonical decimal form: 17 significant digits, enough to round-trip any
/// double bit-for-bit.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(context + ": not a number: '" + s + "'");
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline std::string chomp(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

// ---- scenario files ------------------------------------------------------

/// Header `time,<var_1>,...,<var_M>`, one row per time step.
inline void write_scenario_csv(const std::filesystem::path& path, const Scenario& s) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("cannot open '" + path.string() + "' for writing");
    }
    out << "time";
    for (const auto& name : s.var_names) out << ',' << name;
    out << '\n';
    for (std::size_t t = 0; t < s.length(); ++t) {
        out << format_double(s.time_stamps[t]);
        for (std::size_t m = 0; m < s.n_vars(); ++m) {
            out << ',' << format_double(s.values(t, m));
        }
        out << '\n';
    }
    if (!out) {
        throw ParseError("write failed for '" + path.string() + "'");
    }
}

inline Scenario read_scenario_csv(const std::filesystem::path& path, const std::string& id) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ":1: empty file");
    }
    auto header = split_csv_line(chomp(line));
    if (header.empty() || header[0] != "time") {
        throw ParseError(path.string() + ":1: header must start with 'time'");
    }
    Scenario s;
    s.id = id;
    s.var_names.assign(header.begin() + 1, header.end());

    std::vector<double> flat;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = chomp(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        s.time_stamps.push_back(parse_double(fields[0], ctx));
        for (std::size_t m = 1; m < fields.size(); ++m) {
            flat.push_back(parse_double(fields[m], ctx));
        }
        ++rows;
    }
    s.values = Tensor(rows, s.var_names.size());
    for (std::size_t i = 0; i < flat.size(); ++i) s.values[i] = flat[i];
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return s;
}

// ---- manifest ------------------------------------------------------------

struct ManifestEntry {
    std::string scenario_id;
    std::string path;  // relative to the manifest's directory unless absolute
};

inline void write_manifest_csv(const std::filesystem::path& path,
                               const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("cannot open '" + path.string() + "' for writing");
    }
    out << "scenario_id,path\n";
    for (const auto& e : entries) {
        out << e.scenario_id << ',' << e.path << '\n';
    }
}

inline std::vector<ManifestEntry> read_manifest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ":1: empty manifest (header required)");
    }
    if (chomp(line) != "scenario_id,path") {
        throw ParseError(path.string() + ":1: manifest header must be 'scenario_id,path'");
    }
    std::vector<ManifestEntry> entries;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = chomp(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'scenario_id,path'");
        }
        entries.push_back({fields[0], fields[1]});
    }
    return entries;
}

/// Check a scenario against the standard 14-variable schema, reporting
/// missing and extra names.
inline void check_standard_schema(const Scenario& s) {
    const auto& expected = standard_schema();
    std::set<std::string> want(expected.begin(), expected.end());
    std::set<std::string> have(s.var_names.begin(), s.var_names.end());
    std::string missing, extra;
    for (const auto& n : want) {
        if (!have.count(n)) missing += (missing.empty() ? "" : ", ") + n;
    }
    for (const auto& n : have) {
        if (!want.count(n)) extra += (extra.empty() ? "" : ", ") + n;
    }
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "scenario '" + s.id + "' does not match the standard schema";
        if (!missing.empty()) msg += "; missing: " + missing;
        if (!extra.empty()) msg += "; extra: " + extra;
        throw SchemaError(msg);
    }
}

/// Load every scenario named by a manifest. Labels are always recomputed
/// from the data; there is no trusted label column.
inline LabeledDataset load_scenarios(const std::filesystem::path& manifest_path,
                                     bool strict_schema = false,
                                     double threshold = kLabelThresholdDegF) {
    const auto entries = read_manifest_csv(manifest_path);
    const auto base = manifest_path.parent_path();
    LabeledDataset ds;
    for (const auto& e : entries) {
        std::filesystem::path p(e.path);
        if (p.is_relative()) p = base / p;
        Scenario s = read_scenario_csv(p, e.scenario_id);
        if (strict_schema) check_standard_schema(s);
        const Label label = assign_label(s, threshold);
        ds.push(std::move(s), label);
    }
    return ds;
}

// ---- split assignment ----------------------------------------------------

inline void write_split_csv(const std::filesystem::path& path, const LabeledDataset& ds,
                            const SplitAssignment& assignment) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("cannot open '" + path.string() + "' for writing");
    }
    out << "scenario_id,split\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.scenarios[i].id << ',' << split_name(assignment.tags[i]) << '\n';
    }
}

inline std::vector<std::pair<std::string, Split>> read_split_csv(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line) || chomp(line) != "scenario_id,split") {
        throw ParseError(path.string() + ":1: split header must be 'scenario_id,split'");
    }
    std::vector<std::pair<std::string, Split>> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = chomp(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'scenario_id,split'");
        }
        out.emplace_back(fields[0], parse_split(fields[1]));
    }
    return out;
}

} // namespace seqcls
