#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tablebench/error.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Datatypes
// ---------------------------------------------------------------------------

/// Column datatypes, named after the Pandas API vocabulary.
enum class DType { Int64, Float64, Bool, Datetime, Object };

inline constexpr std::array<DType, 5> kAllDTypes = {
    DType::Int64, DType::Float64, DType::Bool, DType::Datetime, DType::Object};

inline std::string_view dtype_name(DType d) {
    switch (d) {
        case DType::Int64: return "int64";
        case DType::Float64: return "float64";
        case DType::Bool: return "bool";
        case DType::Datetime: return "datetime64[ns]";
        case DType::Object: return "object";
    }
    return "object";
}

inline std::optional<DType> dtype_from_name(std::string_view name) {
    for (DType d : kAllDTypes)
        if (dtype_name(d) == name) return d;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Cell text classification and canonicalization
// ---------------------------------------------------------------------------

/// Cell texts treated as missing values. Case-sensitive except for NaN/nan.
inline bool is_null_text(std::string_view s) {
    return s.empty() || s == "NA" || s == "N/A" || s == "NaN" || s == "nan" ||
           s == "null" || s == "None";
}

/// Integer cells: optional sign, then decimal digits, value fits in int64.
inline std::optional<std::int64_t> parse_int_cell(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string_view body = s;
    if (body.front() == '+') body.remove_prefix(1);
    if (body.empty()) return std::nullopt;
    std::int64_t value = 0;
    const char* first = body.data();
    const char* last = body.data() + body.size();
    auto [ptr, ec] = std::from_chars(first, last, value, 10);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return value;
}

/// Real cells: decimal or scientific notation, finite, full match.
/// Inf/NaN spellings are rejected so numeric cells stay JSON-representable.
inline std::optional<double> parse_float_cell(std::string_view s) {
    if (s.empty()) return std::nullopt;
    for (char c : s) {
        const bool ok = (c >= '0' && c <= '9') || c == '+' || c == '-' ||
                        c == '.' || c == 'e' || c == 'E';
        if (!ok) return std::nullopt;
    }
    std::string_view body = s;
    if (body.front() == '+') body.remove_prefix(1);
    if (body.empty()) return std::nullopt;
    double value = 0.0;
    const char* first = body.data();
    const char* last = body.data() + body.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
}

inline std::optional<bool> parse_bool_cell(std::string_view s) {
    if (s == "True" || s == "true" || s == "TRUE") return true;
    if (s == "False" || s == "false" || s == "FALSE") return false;
    return std::nullopt;
}

/// Dates: ISO-8601 "YYYY-MM-DD" or "MM/DD/YYYY", validated on the civil
/// calendar. Everything else is not a date.
inline std::optional<std::chrono::year_month_day> parse_date_cell(std::string_view s) {
    if (s.size() != 10) return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len) -> int {
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            char c = s[i];
            if (c < '0' || c > '9') return -1;
            v = v * 10 + (c - '0');
        }
        return v;
    };
    int y = -1, m = -1, d = -1;
    if (s[4] == '-' && s[7] == '-') {
        y = digits(0, 4);
        m = digits(5, 2);
        d = digits(8, 2);
    } else if (s[2] == '/' && s[5] == '/') {
        m = digits(0, 2);
        d = digits(3, 2);
        y = digits(6, 4);
    } else {
        return std::nullopt;
    }
    if (y < 0 || m < 0 || d < 0) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                    std::chrono::day{unsigned(d)}};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

inline std::string canonical_int(std::int64_t v) { return std::to_string(v); }

/// Shortest decimal string that parses back to exactly the same double.
inline std::string canonical_float(double v) {
    if (v == 0.0) return "0";  // folds away the sign of -0.0
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string canonical_bool(bool v) { return v ? "True" : "False"; }

inline std::string canonical_date(std::chrono::year_month_day ymd) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()));
    return buf;
}

/// Rewrites a cell into the canonical rendering of its own best value class.
/// Null texts and plain text are returned unchanged. Idempotent.
inline std::string canonical_cell(std::string_view s) {
    if (is_null_text(s)) return std::string(s);
    if (auto i = parse_int_cell(s)) return canonical_int(*i);
    if (auto f = parse_float_cell(s)) return canonical_float(*f);
    if (auto b = parse_bool_cell(s)) return canonical_bool(*b);
    if (auto d = parse_date_cell(s)) return canonical_date(*d);
    return std::string(s);
}

/// Whether a cell text is admissible in a column of the given dtype.
/// Null texts conform to every dtype.
inline bool cell_conforms(std::string_view s, DType d) {
    if (d == DType::Object || is_null_text(s)) return true;
    switch (d) {
        case DType::Int64: return parse_int_cell(s).has_value();
        case DType::Float64: return parse_float_cell(s).has_value();
        case DType::Bool: return parse_bool_cell(s).has_value();
        case DType::Datetime: return parse_date_cell(s).has_value();
        default: return true;
    }
}

/// Most specific dtype every non-null cell satisfies, in priority order
/// int64 > float64 > bool > datetime64[ns] > object. A column with no
/// non-null cells is object.
inline DType infer_dtype(const std::vector<std::string>& column_cells) {
    bool any = false;
    bool all_int = true, all_float = true, all_bool = true, all_date = true;
    for (const std::string& c : column_cells) {
        if (is_null_text(c)) continue;
        any = true;
        if (all_int && !parse_int_cell(c)) all_int = false;
        if (all_float && !parse_float_cell(c)) all_float = false;
        if (all_bool && !parse_bool_cell(c)) all_bool = false;
        if (all_date && !parse_date_cell(c)) all_date = false;
        if (!all_int && !all_float && !all_bool && !all_date) return DType::Object;
    }
    if (!any) return DType::Object;
    if (all_int) return DType::Int64;
    if (all_float) return DType::Float64;
    if (all_bool) return DType::Bool;
    if (all_date) return DType::Datetime;
    return DType::Object;
}

/// Typed view of a cell. Null cells map to monostate.
using CellValue =
    std::variant<std::monostate, std::int64_t, double, bool, std::chrono::year_month_day, std::string>;

inline CellValue typed_value(const std::string& raw, DType column_dtype) {
    if (is_null_text(raw)) return std::monostate{};
    switch (column_dtype) {
        case DType::Int64:
            if (auto v = parse_int_cell(raw)) return *v;
            break;
        case DType::Float64:
            if (auto v = parse_float_cell(raw)) return *v;
            break;
        case DType::Bool:
            if (auto v = parse_bool_cell(raw)) return *v;
            break;
        case DType::Datetime:
            if (auto v = parse_date_cell(raw)) return *v;
            break;
        case DType::Object:
            break;
    }
    return raw;
}

// ---------------------------------------------------------------------------
// Table
// ---------------------------------------------------------------------------

/// A flat table: one header row, string row labels, a rectangular grid of
/// cell texts, and one dtype per column. Immutable after construction; all
/// operations below return new tables.
///
/// Cell texts inside a Table are canonical: integers without leading zeros,
/// reals in shortest round-trip form, booleans True/False, dates ISO-8601.
/// Construction via from_rows enforces this.
class Table {
public:
    Table() = default;

    /// Validating constructor. Cells must already conform to the dtypes.
    Table(std::vector<std::string> column_names, std::vector<std::string> row_labels,
          std::vector<std::vector<std::string>> cells, std::vector<DType> col_dtypes)
        : column_names_(std::move(column_names)),
          row_labels_(std::move(row_labels)),
          cells_(std::move(cells)),
          col_dtypes_(std::move(col_dtypes)) {
        validate();
    }

    /// Builds a table from raw cell texts: canonicalizes every cell, then
    /// infers each column's dtype.
    static Table from_rows(std::vector<std::string> column_names,
                           std::vector<std::string> row_labels,
                           std::vector<std::vector<std::string>> rows) {
        for (auto& row : rows)
            for (auto& cell : row) cell = canonical_cell(cell);
        const std::size_t n_cols = column_names.size();
        std::vector<DType> dtypes(n_cols, DType::Object);
        std::vector<std::string> column;
        column.reserve(rows.size());
        for (std::size_t j = 0; j < n_cols; ++j) {
            column.clear();
            for (const auto& row : rows) {
                if (j < row.size()) column.push_back(row[j]);
            }
            dtypes[j] = infer_dtype(column);
        }
        return Table(std::move(column_names), std::move(row_labels), std::move(rows),
                     std::move(dtypes));
    }

    /// Same, with default decimal row labels "0".."n-1".
    static Table from_rows(std::vector<std::string> column_names,
                           std::vector<std::vector<std::string>> rows) {
        std::vector<std::string> labels = default_labels(rows.size());
        return from_rows(std::move(column_names), std::move(labels), std::move(rows));
    }

    static std::vector<std::string> default_labels(std::size_t n) {
        std::vector<std::string> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = std::to_string(i);
        return labels;
    }

    std::size_t n_rows() const noexcept { return cells_.size(); }
    std::size_t n_cols() const noexcept { return column_names_.size(); }

    const std::vector<std::string>& column_names() const noexcept { return column_names_; }
    const std::vector<std::string>& row_labels() const noexcept { return row_labels_; }
    const std::vector<std::vector<std::string>>& cells() const noexcept { return cells_; }
    const std::vector<DType>& col_dtypes() const noexcept { return col_dtypes_; }

    const std::string& cell(std::size_t row, std::size_t col) const { return cells_.at(row).at(col); }
    const std::vector<std::string>& row(std::size_t i) const { return cells_.at(i); }
    DType dtype(std::size_t col) const { return col_dtypes_.at(col); }

    CellValue value(std::size_t row, std::size_t col) const {
        return typed_value(cell(row, col), dtype(col));
    }

    std::vector<std::string> column(std::size_t j) const {
        std::vector<std::string> out;
        out.reserve(n_rows());
        for (const auto& r : cells_) out.push_back(r.at(j));
        return out;
    }

    std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t j = 0; j < column_names_.size(); ++j)
            if (column_names_[j] == name) return j;
        return std::nullopt;
    }

    std::optional<std::size_t> row_index(std::string_view label) const {
        for (std::size_t i = 0; i < row_labels_.size(); ++i)
            if (row_labels_[i] == label) return i;
        return std::nullopt;
    }

    /// Equality on names, labels, and cell texts. Dtypes are derived data and
    /// deliberately excluded: transposition and re-serialization re-infer them.
    bool content_equals(const Table& other) const {
        return column_names_ == other.column_names_ && row_labels_ == other.row_labels_ &&
               cells_ == other.cells_;
    }

    /// First `k` rows, labels preserved.
    Table head(std::size_t k) const {
        if (k >= n_rows()) return *this;
        std::vector<std::string> labels(row_labels_.begin(), row_labels_.begin() + k);
        std::vector<std::vector<std::string>> rows(cells_.begin(), cells_.begin() + k);
        return Table(column_names_, std::move(labels), std::move(rows), col_dtypes_);
    }

private:
    void validate() const {
        if (col_dtypes_.size() != column_names_.size())
            throw StructuralError("dtype count does not match column count");
        if (row_labels_.size() != cells_.size())
            throw StructuralError("row label count does not match row count");
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            if (cells_[i].size() != column_names_.size())
                throw StructuralError("row " + std::to_string(i) + " has " +
                                      std::to_string(cells_[i].size()) + " cells, expected " +
                                      std::to_string(column_names_.size()));
        }
        require_unique(column_names_, "column names");
        require_unique(row_labels_, "row labels");
        for (std::size_t i = 0; i < cells_.size(); ++i)
            for (std::size_t j = 0; j < cells_[i].size(); ++j)
                if (!cell_conforms(cells_[i][j], col_dtypes_[j]))
                    throw StructuralError("cell (" + std::to_string(i) + "," + std::to_string(j) +
                                          ") does not conform to column dtype " +
                                          std::string(dtype_name(col_dtypes_[j])));
    }

    static void require_unique(const std::vector<std::string>& items, const char* what) {
        std::set<std::string_view> seen;
        for (const auto& s : items)
            if (!seen.insert(s).second)
                throw StructuralError(std::string(what) + " contain duplicate \"" + s + "\"");
    }

    std::vector<std::string> column_names_;
    std::vector<std::string> row_labels_;
    std::vector<std::vector<std::string>> cells_;
    std::vector<DType> col_dtypes_;
};

/// Appends "#k" to later duplicates so the list becomes unique:
/// ["0","0"] -> ["0","0#1"]. Used by lenient parsing and CSV ingestion.
inline std::vector<std::string> repair_duplicates(std::vector<std::string> items) {
    std::set<std::string> seen;
    for (auto& item : items) {
        if (seen.insert(item).second) continue;
        int k = 1;
        std::string candidate = item + "#" + std::to_string(k);
        while (!seen.insert(candidate).second) {
            ++k;
            candidate = item + "#" + std::to_string(k);
        }
        item = std::move(candidate);
    }
    return items;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace detail {

/// RFC-4180 reader: double-quote escaping, quoted fields may span lines,
/// accepts both \n and \r\n row endings.
inline std::vector<std::vector<std::string>> read_delimited(std::string_view text, char delim) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;  // true once the current row has any content
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        field_started = false;
    };
    while (i < n) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                } else {
                    in_quotes = false;
                    ++i;
                }
            } else {
                field += c;
                ++i;
            }
        } else if (c == '"' && field.empty()) {
            in_quotes = true;
            field_started = true;
            ++i;
        } else if (c == delim) {
            end_field();
            ++i;
        } else if (c == '\r' && i + 1 < n && text[i + 1] == '\n') {
            end_row();
            i += 2;
        } else if (c == '\n') {
            end_row();
            ++i;
        } else {
            field += c;
            ++i;
        }
    }
    if (in_quotes) throw ParseError(n, "unterminated quoted field");
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

}  // namespace detail

/// Loads RFC-4180 CSV text. Without a header, names are synthesized as
/// "col_0","col_1",.... Row labels are "0".."n-1"; dtypes are inferred.
inline Table load_csv(std::string_view bytes, bool has_header = true) {
    if (bytes.empty()) throw StructuralError("empty CSV input");
    std::vector<std::vector<std::string>> rows = detail::read_delimited(bytes, ',');
    if (rows.empty()) throw StructuralError("empty CSV input");
    const std::size_t width = rows.front().size();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != width)
            throw StructuralError("ragged CSV: line " + std::to_string(i + 1) + " has " +
                                  std::to_string(rows[i].size()) + " fields, expected " +
                                  std::to_string(width));
    }
    std::vector<std::string> names;
    if (has_header) {
        names = repair_duplicates(std::move(rows.front()));
        rows.erase(rows.begin());
    } else {
        names.reserve(width);
        for (std::size_t j = 0; j < width; ++j) names.push_back("col_" + std::to_string(j));
    }
    return Table::from_rows(std::move(names), std::move(rows));
}

/// Removes every row that contains a null cell; survivors are relabeled
/// "0".."m-1". Idempotent.
inline Table drop_null_rows(const Table& t) {
    std::vector<std::vector<std::string>> kept;
    for (const auto& row : t.cells()) {
        bool has_null = std::any_of(row.begin(), row.end(),
                                    [](const std::string& c) { return is_null_text(c); });
        if (!has_null) kept.push_back(row);
    }
    std::vector<std::string> labels = Table::default_labels(kept.size());
    return Table(t.column_names(), std::move(labels), std::move(kept), t.col_dtypes());
}

/// Transposes the grid: column names become row labels and vice versa.
/// Column dtypes of the result are re-inferred.
inline Table transpose_core(const Table& t) {
    std::vector<std::vector<std::string>> transposed(t.n_cols(),
                                                     std::vector<std::string>(t.n_rows()));
    for (std::size_t i = 0; i < t.n_rows(); ++i)
        for (std::size_t j = 0; j < t.n_cols(); ++j) transposed[j][i] = t.cell(i, j);
    return Table::from_rows(t.row_labels(), t.column_names(), std::move(transposed));
}

}  // namespace tablebench
