#pragma once
#include "core.hpp"
#include "design.hpp"
#include "model.hpp"
#include "posterior.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gslogit::io {

using json = nlohmann::json;

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x)
{
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return k;
        throw InputError("missing CSV column '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    CsvTable t;
    std::string line;
    bool first = true;
    Index lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size())
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (first) throw InputError("'" + path.string() + "' is empty (no header)");
    return t;
}

inline double parse_double(const std::string& s, const std::string& where)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw InputError(where + ": '" + s + "' is not a number");
    }
    if (used != s.size()) throw InputError(where + ": '" + s + "' is not a number");
    return v;
}

inline long long parse_int(const std::string& s, const std::string& where)
{
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        throw InputError(where + ": '" + s + "' is not an integer");
    }
    if (used != s.size()) throw InputError(where + ": '" + s + "' is not an integer");
    return v;
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// ---- design and groups ----------------------------------------------------------------

/// Header `obs,cat,col_1..col_d`; rows observation-major with categories 1..m-1.
inline void write_design_csv(const std::filesystem::path& path, const GroupedDesign& design)
{
    auto out = open_out(path);
    out << "obs,cat";
    for (Index c = 0; c < design.d(); ++c) out << ",col_" << c + 1;
    out << '\n';
    const Index r = design.m() - 1;
    for (Index i = 0; i < design.n(); ++i)
        for (Index l = 0; l < r; ++l) {
            out << i + 1 << ',' << l + 1;
            for (Index c = 0; c < design.d(); ++c) out << ',' << format_double(design.matrix()(i * r + l, c));
            out << '\n';
        }
    finish(out, path);
}

/// Header `col,group`, one row per column (1-based) with the group label.
inline void write_groups_csv(const std::filesystem::path& path, const GroupPartition& partition)
{
    auto out = open_out(path);
    out << "col,group\n";
    std::vector<Index> owner(static_cast<std::size_t>(partition.dim()));
    for (Index j = 0; j < partition.count(); ++j)
        for (Index c : partition.members(j)) owner[static_cast<std::size_t>(c)] = j;
    for (Index c = 0; c < partition.dim(); ++c) out << c + 1 << ",g" << owner[static_cast<std::size_t>(c)] + 1 << '\n';
    finish(out, path);
}

/// Groups are ordered by their smallest column; members by column index.
inline GroupPartition read_groups_csv(const std::filesystem::path& path, Index d)
{
    const CsvTable t = read_csv(path);
    const auto ccol = t.column("col"), gcol = t.column("group");
    std::vector<std::string> label(static_cast<std::size_t>(d));
    std::vector<bool> seen(static_cast<std::size_t>(d), false);
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const std::string where = path.string() + ": row " + std::to_string(k + 2);
        const long long c = parse_int(t.rows[k][ccol], where);
        if (c < 1 || c > d) throw InputError(where + ": column index " + std::to_string(c) + " outside 1.." + std::to_string(d));
        if (seen[static_cast<std::size_t>(c - 1)]) throw InputError(where + ": column " + std::to_string(c) + " listed twice");
        if (t.rows[k][gcol].empty()) throw InputError(where + ": empty group label");
        seen[static_cast<std::size_t>(c - 1)] = true;
        label[static_cast<std::size_t>(c - 1)] = t.rows[k][gcol];
    }
    for (Index c = 0; c < d; ++c)
        if (!seen[static_cast<std::size_t>(c)]) throw InputError(path.string() + ": column " + std::to_string(c + 1) + " has no group");
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<Index>> groups;
    for (Index c = 0; c < d; ++c) {
        auto [it, fresh] = index.emplace(label[static_cast<std::size_t>(c)], groups.size());
        if (fresh) groups.emplace_back();
        groups[it->second].push_back(c);
    }
    return GroupPartition::from_groups(std::move(groups), d);
}

inline GroupedDesign read_design_csv(const std::filesystem::path& design_path, const std::filesystem::path& groups_path, Index m)
{
    require(m >= 2, "m must be at least 2");
    const CsvTable t = read_csv(design_path);
    const auto ocol = t.column("obs"), kcol = t.column("cat");
    std::vector<std::size_t> cols;
    for (Index c = 1;; ++c) {
        const std::string name = "col_" + std::to_string(c);
        if (std::find(t.header.begin(), t.header.end(), name) == t.header.end()) break;
        cols.push_back(t.column(name));
    }
    if (cols.empty()) throw InputError(design_path.string() + ": no col_1.. columns");
    if (cols.size() + 2 != t.header.size()) throw InputError(design_path.string() + ": unexpected extra columns");
    const Index r = m - 1;
    const auto rows = static_cast<Index>(t.rows.size());
    if (rows == 0 || rows % r != 0)
        throw InputError(design_path.string() + ": row count " + std::to_string(rows) + " is not a positive multiple of m - 1");
    const Index n = rows / r;
    const auto d = static_cast<Index>(cols.size());
    Mat x(rows, d);
    for (Index row = 0; row < rows; ++row) {
        const auto& cells = t.rows[static_cast<std::size_t>(row)];
        const std::string where = design_path.string() + ": row " + std::to_string(row + 2);
        if (parse_int(cells[ocol], where) != row / r + 1 || parse_int(cells[kcol], where) != row % r + 1)
            throw InputError(where + ": rows must be observation-major with categories 1..m-1");
        for (Index c = 0; c < d; ++c) x(row, c) = parse_double(cells[cols[static_cast<std::size_t>(c)]], where);
    }
    return GroupedDesign(std::move(x), n, m, read_groups_csv(groups_path, d));
}

// ---- response and truth ---------------------------------------------------------------

inline void write_response_csv(const std::filesystem::path& path, const ResponseVector& y)
{
    auto out = open_out(path);
    out << "obs,z\n";
    for (Index i = 0; i < y.n(); ++i) out << i + 1 << ',' << y.labels[static_cast<std::size_t>(i)] << '\n';
    finish(out, path);
}

inline ResponseVector read_response_csv(const std::filesystem::path& path, Index m)
{
    const CsvTable t = read_csv(path);
    const auto ocol = t.column("obs"), zcol = t.column("z");
    std::vector<int> labels;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const std::string where = path.string() + ": row " + std::to_string(k + 2);
        if (parse_int(t.rows[k][ocol], where) != static_cast<long long>(k) + 1) throw InputError(where + ": obs must run 1..n in order");
        labels.push_back(static_cast<int>(parse_int(t.rows[k][zcol], where)));
    }
    return ResponseVector::from_labels(std::move(labels), m);
}

inline void write_coef_csv(const std::filesystem::path& path, const Vec& beta)
{
    auto out = open_out(path);
    out << "col,beta\n";
    for (Index c = 0; c < beta.size(); ++c) out << c + 1 << ',' << format_double(beta(c)) << '\n';
    finish(out, path);
}

inline Vec read_coef_csv(const std::filesystem::path& path, Index d)
{
    const CsvTable t = read_csv(path);
    const auto ccol = t.column("col"), bcol = t.column("beta");
    if (static_cast<Index>(t.rows.size()) != d)
        throw InputError(path.string() + ": expected " + std::to_string(d) + " coefficients, found " + std::to_string(t.rows.size()));
    Vec beta(d);
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const std::string where = path.string() + ": row " + std::to_string(k + 2);
        if (parse_int(t.rows[k][ccol], where) != static_cast<long long>(k) + 1) throw InputError(where + ": col must run 1..d in order");
        beta(static_cast<Index>(k)) = parse_double(t.rows[k][bcol], where);
    }
    return beta;
}

// ---- chain output ---------------------------------------------------------------------

/// Support groups 1-based, separated by ';' (empty for the null model).
inline std::string serialize_support(const std::vector<Index>& support)
{
    std::string s;
    for (std::size_t k = 0; k < support.size(); ++k) {
        if (k) s += ';';
        s += std::to_string(support[k] + 1);
    }
    return s;
}

inline void write_chain_csv(const std::filesystem::path& path, const PosteriorSample& sample)
{
    auto out = open_out(path);
    out << "chain,iteration,s_beta,log_posterior,support\n";
    for (const ChainState& st : sample.states)
        out << st.chain + 1 << ',' << st.iteration << ',' << st.support.size() << ',' << format_double(st.log_posterior) << ','
            << serialize_support(st.support) << '\n';
    finish(out, path);
}

inline void write_json(const std::filesystem::path& path, const json& doc)
{
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
    finish(out, path);
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    auto out = open_out(path);
    out << text;
    finish(out, path);
}

} // namespace gslogit::io
