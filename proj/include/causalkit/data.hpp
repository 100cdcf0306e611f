#pragma once

// Tabular ingestion: CSV loading, cleaning (deduplication and IQR outlier
// fences), and discretization of numeric columns into labelled levels.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalkit/error.hpp"
#include "causalkit/stats.hpp"

namespace causalkit {

enum class ColumnKind { numeric, categorical };

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::categorical;

    bool operator==(const ColumnSchema&) const = default;
};

using Cell = std::variant<double, std::string>;

/// Typed table straight from a CSV file, before discretization.
class RawTable {
public:
    RawTable() = default;

    RawTable(std::vector<ColumnSchema> columns, std::vector<std::vector<Cell>> rows)
        : columns_(std::move(columns)), rows_(std::move(rows)) {
        std::unordered_set<std::string> seen;
        for (const auto& c : columns_) {
            if (c.name.empty()) throw InvalidTable("column names must be non-empty");
            if (!seen.insert(c.name).second) throw InvalidTable("duplicate column name '" + c.name + "'");
        }
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            if (rows_[r].size() != columns_.size()) {
                throw InvalidTable("row " + std::to_string(r) + " has " + std::to_string(rows_[r].size()) +
                                   " cells, expected " + std::to_string(columns_.size()));
            }
            for (std::size_t c = 0; c < columns_.size(); ++c) {
                const bool numeric = std::holds_alternative<double>(rows_[r][c]);
                if (numeric != (columns_[c].kind == ColumnKind::numeric)) {
                    throw InvalidTable("cell (" + std::to_string(r) + ", " + columns_[c].name +
                                       ") does not match its column kind");
                }
            }
        }
    }

    const std::vector<ColumnSchema>& columns() const { return columns_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }
    std::size_t row_count() const { return rows_.size(); }

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (columns_[i].name == name) return i;
        }
        throw UnknownColumn("unknown column '" + name + "'");
    }

    bool has_column(const std::string& name) const {
        return std::any_of(columns_.begin(), columns_.end(), [&](const auto& c) { return c.name == name; });
    }

    /// Copy without the named columns; names that are absent are ignored.
    RawTable without_columns(const std::vector<std::string>& names) const {
        std::vector<std::size_t> keep;
        std::vector<ColumnSchema> cols;
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (std::find(names.begin(), names.end(), columns_[i].name) == names.end()) {
                keep.push_back(i);
                cols.push_back(columns_[i]);
            }
        }
        std::vector<std::vector<Cell>> rows;
        rows.reserve(rows_.size());
        for (const auto& row : rows_) {
            std::vector<Cell> out;
            out.reserve(keep.size());
            for (auto i : keep) out.push_back(row[i]);
            rows.push_back(std::move(out));
        }
        return RawTable(std::move(cols), std::move(rows));
    }

    RawTable renamed(const std::map<std::string, std::string>& mapping) const {
        auto cols = columns_;
        for (auto& c : cols) {
            if (auto it = mapping.find(c.name); it != mapping.end()) c.name = it->second;
        }
        return RawTable(std::move(cols), rows_);
    }

    /// Replace categorical values per column: mapping column -> (old value -> new value).
    RawTable recoded(const std::map<std::string, std::map<std::string, std::string>>& mapping) const {
        auto rows = rows_;
        for (const auto& [column, values] : mapping) {
            const auto c = column_index(column);
            if (columns_[c].kind != ColumnKind::categorical) {
                throw ConfigError("recode applies to categorical columns only: '" + column + "'");
            }
            for (auto& row : rows) {
                auto& s = std::get<std::string>(row[c]);
                if (auto it = values.find(s); it != values.end()) s = it->second;
            }
        }
        return RawTable(columns_, std::move(rows));
    }

    bool operator==(const RawTable&) const = default;

private:
    std::vector<ColumnSchema> columns_;
    std::vector<std::vector<Cell>> rows_;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

/// Splits one CSV record, honouring double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(trim(current));
            current.clear();
        } else {
            current += ch;
        }
    }
    fields.push_back(trim(current));
    return fields;
}

inline std::optional<double> parse_number(const std::string& text) {
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (*begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return value;
}

inline std::vector<std::vector<std::string>> read_csv_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open '" + path + "'");
    std::vector<std::vector<std::string>> records;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            // Strip a UTF-8 byte-order mark.
            if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
            first = false;
        }
        if (trim(line).empty()) continue;
        records.push_back(split_csv_line(line));
    }
    if (records.empty()) throw HeaderMismatch("'" + path + "' has no header row");
    return records;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace detail

/// Loads a comma-delimited UTF-8 file whose header must equal the schema names in order.
inline RawTable load_csv(const std::string& path, const std::vector<ColumnSchema>& schema) {
    const auto records = detail::read_csv_records(path);
    const auto& header = records.front();
    std::vector<std::string> expected;
    for (const auto& c : schema) expected.push_back(c.name);
    if (header != expected) {
        throw HeaderMismatch("expected [" + detail::join(expected, ",") + "], found [" +
                             detail::join(header, ",") + "]");
    }
    std::vector<std::vector<Cell>> rows;
    rows.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& record = records[r];
        if (record.size() != schema.size()) {
            throw CellParseError("row " + std::to_string(r) + ": expected " + std::to_string(schema.size()) +
                                 " cells, found " + std::to_string(record.size()));
        }
        std::vector<Cell> row;
        row.reserve(schema.size());
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (schema[c].kind == ColumnKind::numeric) {
                auto value = detail::parse_number(record[c]);
                if (!value) {
                    throw CellParseError("row " + std::to_string(r) + ", column '" + schema[c].name +
                                         "': cannot parse '" + record[c] + "' as a number");
                }
                row.emplace_back(*value);
            } else {
                row.emplace_back(record[c]);
            }
        }
        rows.push_back(std::move(row));
    }
    return RawTable(schema, std::move(rows));
}

/// Schema from the file itself: a column is numeric iff every data cell parses as a number.
/// Columns listed in `force_categorical` are categorical regardless.
inline std::vector<ColumnSchema> infer_schema(const std::string& path,
                                              const std::vector<std::string>& force_categorical = {}) {
    const auto records = detail::read_csv_records(path);
    const auto& header = records.front();
    std::vector<ColumnSchema> schema;
    for (std::size_t c = 0; c < header.size(); ++c) {
        bool numeric = records.size() > 1;
        for (std::size_t r = 1; r < records.size() && numeric; ++r) {
            numeric = c < records[r].size() && detail::parse_number(records[r][c]).has_value();
        }
        if (std::find(force_categorical.begin(), force_categorical.end(), header[c]) != force_categorical.end()) {
            numeric = false;
        }
        schema.push_back({header[c], numeric ? ColumnKind::numeric : ColumnKind::categorical});
    }
    return schema;
}

struct OutlierPolicy {
    enum class Kind { none, iqr };
    Kind kind = Kind::none;
    double multiplier = 1.5;

    static OutlierPolicy none() { return {}; }
    static OutlierPolicy iqr(double m = 1.5) { return {Kind::iqr, m}; }
};

namespace detail {

inline std::vector<std::vector<Cell>> deduplicate(const std::vector<std::vector<Cell>>& rows) {
    std::set<std::vector<Cell>> seen;
    std::vector<std::vector<Cell>> out;
    for (const auto& row : rows) {
        if (seen.insert(row).second) out.push_back(row);
    }
    return out;
}

// One pass of Tukey fences over every numeric column; returns the surviving rows.
inline std::vector<std::vector<Cell>> drop_outliers(const std::vector<ColumnSchema>& columns,
                                                    const std::vector<std::vector<Cell>>& rows,
                                                    double multiplier) {
    if (rows.empty()) return rows;
    std::vector<bool> keep(rows.size(), true);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].kind != ColumnKind::numeric) continue;
        std::vector<double> values;
        values.reserve(rows.size());
        for (const auto& row : rows) values.push_back(std::get<double>(row[c]));
        const double q1 = stats::quantile(values, 0.25);
        const double q3 = stats::quantile(values, 0.75);
        const double iqr = q3 - q1;
        const double lo = q1 - multiplier * iqr;
        const double hi = q3 + multiplier * iqr;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (values[r] < lo || values[r] > hi) keep[r] = false;
        }
    }
    std::vector<std::vector<Cell>> out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (keep[r]) out.push_back(rows[r]);
    }
    return out;
}

}  // namespace detail

/// Removes exact duplicate rows (first occurrence kept) and, under the IQR policy,
/// rows with any numeric cell outside [Q1 - m IQR, Q3 + m IQR] of its column.
/// Quartiles use the linear-interpolation (type 7) rule. Fences are recomputed on
/// the surviving rows until no row is dropped, so cleaning is idempotent.
inline RawTable clean(const RawTable& raw, const OutlierPolicy& policy) {
    auto rows = detail::deduplicate(raw.rows());
    if (policy.kind == OutlierPolicy::Kind::iqr) {
        while (true) {
            auto next = detail::drop_outliers(raw.columns(), rows, policy.multiplier);
            if (next.size() == rows.size()) break;
            rows = std::move(next);
        }
    }
    if (rows.empty()) throw EmptyAfterClean("no rows remain after cleaning");
    return RawTable(raw.columns(), std::move(rows));
}

/// Discretization rule for one numeric column: value v maps to labels[i]
/// where i is the number of cut points <= v.
struct BinSpec {
    std::string column;
    std::vector<double> cut_points;
    std::vector<std::string> labels;

    void validate() const {
        if (labels.size() != cut_points.size() + 1) {
            throw InvalidBinSpec("bins for '" + column + "': need exactly one more label than cut points");
        }
        for (std::size_t i = 1; i < cut_points.size(); ++i) {
            if (!(cut_points[i - 1] < cut_points[i])) {
                throw InvalidBinSpec("bins for '" + column + "': cut points must be strictly ascending");
            }
        }
        std::set<std::string> unique(labels.begin(), labels.end());
        if (unique.size() != labels.size()) throw InvalidBinSpec("bins for '" + column + "': labels must be unique");
    }

    std::size_t bin_of(double value) const {
        return static_cast<std::size_t>(std::upper_bound(cut_points.begin(), cut_points.end(), value) -
                                        cut_points.begin());
    }
};

/// A categorical variable: a name and its ordered level labels.
struct Variable {
    std::string name;
    std::vector<std::string> levels;

    bool operator==(const Variable&) const = default;
};

/// Cleaned, fully categorical dataset. Cells are level indices. Immutable.
class DataTable {
public:
    DataTable() = default;

    /// `rows[r][c]` is the level index of column c in row r.
    DataTable(std::vector<Variable> variables, const std::vector<std::vector<std::uint32_t>>& rows)
        : variables_(std::move(variables)), columns_(variables_.size()) {
        if (rows.empty()) throw InvalidTable("a data table needs at least one row");
        std::unordered_set<std::string> seen;
        for (const auto& v : variables_) {
            if (v.name.empty()) throw InvalidTable("column names must be non-empty");
            if (!seen.insert(v.name).second) throw InvalidTable("duplicate column name '" + v.name + "'");
            if (v.levels.empty()) throw InvalidTable("column '" + v.name + "' has no levels");
        }
        for (auto& col : columns_) col.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != variables_.size()) throw InvalidTable("row " + std::to_string(r) + " has wrong width");
            for (std::size_t c = 0; c < variables_.size(); ++c) {
                if (rows[r][c] >= variables_[c].levels.size()) {
                    throw InvalidTable("row " + std::to_string(r) + ", column '" + variables_[c].name +
                                       "': level index out of range");
                }
                columns_[c].push_back(rows[r][c]);
            }
        }
        n_rows_ = rows.size();
    }

    /// Builds a table from label strings. Level order per column is taken from
    /// `levels` when given for that column, otherwise the sorted observed labels.
    static DataTable from_labels(const std::vector<std::string>& names,
                                 const std::vector<std::vector<std::string>>& rows,
                                 const std::map<std::string, std::vector<std::string>>& levels = {}) {
        std::vector<Variable> vars;
        for (std::size_t c = 0; c < names.size(); ++c) {
            Variable v{names[c], {}};
            if (auto it = levels.find(names[c]); it != levels.end()) {
                v.levels = it->second;
            } else {
                std::set<std::string> observed;
                for (const auto& row : rows) {
                    if (c < row.size()) observed.insert(row[c]);
                }
                v.levels.assign(observed.begin(), observed.end());
            }
            vars.push_back(std::move(v));
        }
        std::vector<std::vector<std::uint32_t>> encoded;
        encoded.reserve(rows.size());
        for (const auto& row : rows) {
            if (row.size() != names.size()) throw InvalidTable("label row has wrong width");
            std::vector<std::uint32_t> out;
            for (std::size_t c = 0; c < row.size(); ++c) {
                const auto& lv = vars[c].levels;
                auto it = std::find(lv.begin(), lv.end(), row[c]);
                if (it == lv.end()) throw InvalidTable("label '" + row[c] + "' not a level of '" + names[c] + "'");
                out.push_back(static_cast<std::uint32_t>(it - lv.begin()));
            }
            encoded.push_back(std::move(out));
        }
        return DataTable(std::move(vars), encoded);
    }

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return variables_.size(); }
    const std::vector<Variable>& variables() const { return variables_; }
    const Variable& variable(std::size_t c) const { return variables_.at(c); }
    std::size_t level_count(std::size_t c) const { return variables_.at(c).levels.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& v : variables_) out.push_back(v.name);
        return out;
    }

    bool has_column(const std::string& name) const {
        return std::any_of(variables_.begin(), variables_.end(), [&](const auto& v) { return v.name == name; });
    }

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < variables_.size(); ++i) {
            if (variables_[i].name == name) return i;
        }
        throw UnknownColumn("unknown column '" + name + "'");
    }

    std::span<const std::uint32_t> column(std::size_t c) const { return columns_.at(c); }
    std::uint32_t at(std::size_t row, std::size_t col) const { return columns_[col][row]; }

    std::vector<std::vector<std::uint32_t>> rows() const {
        std::vector<std::vector<std::uint32_t>> out(n_rows_, std::vector<std::uint32_t>(variables_.size()));
        for (std::size_t c = 0; c < variables_.size(); ++c) {
            for (std::size_t r = 0; r < n_rows_; ++r) out[r][c] = columns_[c][r];
        }
        return out;
    }

    std::vector<std::vector<std::string>> decode() const {
        std::vector<std::vector<std::string>> out(n_rows_);
        for (std::size_t r = 0; r < n_rows_; ++r) {
            for (std::size_t c = 0; c < variables_.size(); ++c) out[r].push_back(variables_[c].levels[columns_[c][r]]);
        }
        return out;
    }

    DataTable select(const std::vector<std::string>& names) const {
        std::vector<Variable> vars;
        std::vector<std::size_t> idx;
        for (const auto& n : names) {
            idx.push_back(column_index(n));
            vars.push_back(variables_[idx.back()]);
        }
        std::vector<std::vector<std::uint32_t>> rows(n_rows_);
        for (std::size_t r = 0; r < n_rows_; ++r) {
            for (auto c : idx) rows[r].push_back(columns_[c][r]);
        }
        return DataTable(std::move(vars), rows);
    }

    bool operator==(const DataTable&) const = default;

private:
    std::vector<Variable> variables_;
    std::vector<std::vector<std::uint32_t>> columns_;
    std::size_t n_rows_ = 0;
};

namespace detail {

inline std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Turns every column categorical. Numeric columns with a spec are binned;
/// numeric columns without one keep their distinct values as levels (ascending);
/// categorical columns keep their observed values, sorted lexicographically.
inline DataTable discretize(const RawTable& raw, const std::vector<BinSpec>& specs) {
    std::map<std::size_t, const BinSpec*> by_column;
    for (const auto& spec : specs) {
        spec.validate();
        const auto c = raw.column_index(spec.column);
        if (raw.columns()[c].kind != ColumnKind::numeric) {
            throw SpecForCategoricalColumn("column '" + spec.column + "' is categorical and cannot be binned");
        }
        by_column[c] = &spec;
    }

    const auto& cols = raw.columns();
    std::vector<Variable> vars;
    std::vector<std::vector<std::uint32_t>> rows(raw.row_count(), std::vector<std::uint32_t>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        Variable v{cols[c].name, {}};
        if (auto it = by_column.find(c); it != by_column.end()) {
            v.levels = it->second->labels;
            for (std::size_t r = 0; r < raw.row_count(); ++r) {
                rows[r][c] = static_cast<std::uint32_t>(it->second->bin_of(std::get<double>(raw.rows()[r][c])));
            }
        } else if (cols[c].kind == ColumnKind::numeric) {
            std::set<double> observed;
            for (const auto& row : raw.rows()) observed.insert(std::get<double>(row[c]));
            std::vector<double> ordered(observed.begin(), observed.end());
            for (double x : ordered) v.levels.push_back(detail::format_number(x));
            for (std::size_t r = 0; r < raw.row_count(); ++r) {
                const double x = std::get<double>(raw.rows()[r][c]);
                rows[r][c] = static_cast<std::uint32_t>(std::lower_bound(ordered.begin(), ordered.end(), x) -
                                                        ordered.begin());
            }
        } else {
            std::set<std::string> observed;
            for (const auto& row : raw.rows()) observed.insert(std::get<std::string>(row[c]));
            v.levels.assign(observed.begin(), observed.end());
            for (std::size_t r = 0; r < raw.row_count(); ++r) {
                const auto& s = std::get<std::string>(raw.rows()[r][c]);
                rows[r][c] = static_cast<std::uint32_t>(std::lower_bound(v.levels.begin(), v.levels.end(), s) -
                                                        v.levels.begin());
            }
        }
        vars.push_back(std::move(v));
    }
    return DataTable(std::move(vars), rows);
}

/// Preprocessing settings: the structured config behind `--bins`.
///
/// JSON layout:
/// {
///   "drop_columns": ["Person ID"],
///   "categorical": ["Blood Pressure"],
///   "normalize_names": true,
///   "rename": {"Physical_Activity_Level": "Physical_Activity"},
///   "recode": {"BMI_Category": {"Normal Weight": "Normal"}},
///   "outliers": {"policy": "iqr", "multiplier": 1.5},
///   "bins": {"Sleep_Duration": {"cut_points": [7.0], "labels": ["low", "normal"]}}
/// }
///
/// Names in `drop_columns` and `categorical` refer to the raw CSV header;
/// `rename`, `recode` and `bins` refer to names after normalization.
struct PreprocessConfig {
    std::vector<std::string> drop_columns;
    std::vector<std::string> categorical;
    bool normalize_names = true;
    std::map<std::string, std::string> rename;
    std::map<std::string, std::map<std::string, std::string>> recode;
    OutlierPolicy outliers = OutlierPolicy::none();
    std::vector<BinSpec> bins;

    static PreprocessConfig from_json(const nlohmann::json& j) {
        PreprocessConfig cfg;
        try {
            if (j.contains("drop_columns")) cfg.drop_columns = j.at("drop_columns").get<std::vector<std::string>>();
            if (j.contains("categorical")) cfg.categorical = j.at("categorical").get<std::vector<std::string>>();
            if (j.contains("normalize_names")) cfg.normalize_names = j.at("normalize_names").get<bool>();
            if (j.contains("rename")) cfg.rename = j.at("rename").get<std::map<std::string, std::string>>();
            if (j.contains("recode")) {
                cfg.recode = j.at("recode").get<std::map<std::string, std::map<std::string, std::string>>>();
            }
            if (j.contains("outliers")) {
                const auto& o = j.at("outliers");
                const auto policy = o.value("policy", std::string("none"));
                if (policy == "iqr") {
                    cfg.outliers = OutlierPolicy::iqr(o.value("multiplier", 1.5));
                } else if (policy != "none") {
                    throw ConfigError("unknown outlier policy '" + policy + "'");
                }
            }
            if (j.contains("bins")) {
                for (const auto& [column, spec] : j.at("bins").items()) {
                    BinSpec b{column, spec.at("cut_points").get<std::vector<double>>(),
                              spec.at("labels").get<std::vector<std::string>>()};
                    b.validate();
                    cfg.bins.push_back(std::move(b));
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed preprocessing config: ") + e.what());
        }
        return cfg;
    }

    static PreprocessConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw MissingFile("cannot open '" + path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
        }
        return from_json(j);
    }
};

inline std::string normalize_column_name(std::string name) {
    std::replace(name.begin(), name.end(), ' ', '_');
    return name;
}

/// load -> drop -> rename -> recode -> clean -> discretize.
inline DataTable preprocess(const std::string& csv_path, const PreprocessConfig& cfg) {
    auto raw = load_csv(csv_path, infer_schema(csv_path, cfg.categorical)).without_columns(cfg.drop_columns);
    if (cfg.normalize_names) {
        std::map<std::string, std::string> mapping;
        for (const auto& c : raw.columns()) mapping[c.name] = normalize_column_name(c.name);
        raw = raw.renamed(mapping);
    }
    raw = raw.renamed(cfg.rename).recoded(cfg.recode);
    return discretize(clean(raw, cfg.outliers), cfg.bins);
}

}  // namespace causalkit
