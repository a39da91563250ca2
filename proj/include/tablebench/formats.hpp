#pragma once

#include <cctype>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tablebench/table.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Format registry
// ---------------------------------------------------------------------------

enum class FormatId {
    DFLoader,
    Json,
    DataMatrix,
    Markdown,
    CommaSeparated,
    TabSeparated,
    Html,
    HtmlNoSpace,
};

inline constexpr std::array<FormatId, 8> kAllFormats = {
    FormatId::DFLoader,  FormatId::Json, FormatId::DataMatrix,   FormatId::Markdown,
    FormatId::CommaSeparated, FormatId::TabSeparated, FormatId::Html, FormatId::HtmlNoSpace};

inline std::string_view format_name(FormatId f) {
    switch (f) {
        case FormatId::DFLoader: return "DFLoader";
        case FormatId::Json: return "Json";
        case FormatId::DataMatrix: return "DataMatrix";
        case FormatId::Markdown: return "Markdown";
        case FormatId::CommaSeparated: return "CommaSeparated";
        case FormatId::TabSeparated: return "TabSeparated";
        case FormatId::Html: return "Html";
        case FormatId::HtmlNoSpace: return "HtmlNoSpace";
    }
    return "Json";
}

inline std::optional<FormatId> format_from_name(std::string_view name) {
    for (FormatId f : kAllFormats)
        if (format_name(f) == name) return f;
    return std::nullopt;
}

namespace detail {

// A cell is rendered bare (unquoted) in code-like formats when its column is
// numeric and the cell itself is a non-null number.
inline bool render_bare(const Table& t, std::size_t row, std::size_t col) {
    DType d = t.dtype(col);
    if (d != DType::Int64 && d != DType::Float64) return false;
    const std::string& raw = t.cell(row, col);
    if (is_null_text(raw)) return false;
    return parse_int_cell(raw).has_value() || parse_float_cell(raw).has_value();
}

// Row labels are rendered bare only in their canonical integer form, so the
// parse direction can reproduce them byte-exactly.
inline bool label_bare(const std::string& label) {
    auto v = parse_int_cell(label);
    return v && canonical_int(*v) == label;
}

inline std::string json_quote(std::string_view s) {
    return nlohmann::json(std::string(s)).dump();
}

// ---- python-style string literals (DataMatrix, DFLoader) ----

inline std::string py_quote(std::string_view s, char quote) {
    std::string out;
    out.reserve(s.size() + 2);
    out += quote;
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c == quote) {
                    out += '\\';
                    out += quote;
                } else {
                    out += c;
                }
        }
    }
    out += quote;
    return out;
}

inline std::string py_unescape(std::string_view body) {
    std::string out;
    out.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c == '\\' && i + 1 < body.size()) {
            char e = body[++i];
            switch (e) {
                case 'n': out += '\n'; break;
                case 'r': out += '\r'; break;
                case 't': out += '\t'; break;
                case '\\': out += '\\'; break;
                case '\'': out += '\''; break;
                case '"': out += '"'; break;
                case '0': out += '\0'; break;
                default: out += e;  // lenient: unknown escape keeps the char
            }
        } else {
            out += c;
        }
    }
    return out;
}

// ---- HTML text escaping ----

// Escapes markup characters plus line breaks, then numeric-escapes leading
// and trailing blanks so that whitespace stripping and text trimming on the
// parse side cannot eat cell content.
inline std::string html_escape(std::string_view s) {
    std::size_t lead = 0;
    while (lead < s.size() && (s[lead] == ' ' || s[lead] == '\t')) ++lead;
    std::size_t trail = s.size();
    while (trail > lead && (s[trail - 1] == ' ' || s[trail - 1] == '\t')) --trail;
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        bool edge = i < lead || i >= trail;
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '\n': out += "&#10;"; break;
            case '\r': out += "&#13;"; break;
            case ' ':
                if (edge) out += "&#32;"; else out += ' ';
                break;
            case '\t':
                if (edge) out += "&#9;"; else out += '\t';
                break;
            default: out += c;
        }
    }
    return out;
}

inline std::string html_unescape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] == '&') {
            std::size_t semi = s.find(';', i);
            if (semi != std::string_view::npos && semi - i <= 8) {
                std::string_view ent = s.substr(i + 1, semi - i - 1);
                if (ent == "amp") { out += '&'; i = semi + 1; continue; }
                if (ent == "lt") { out += '<'; i = semi + 1; continue; }
                if (ent == "gt") { out += '>'; i = semi + 1; continue; }
                if (ent == "quot") { out += '"'; i = semi + 1; continue; }
                if (ent == "apos") { out += '\''; i = semi + 1; continue; }
                if (ent.size() > 1 && ent[0] == '#') {
                    int code = 0;
                    bool ok = true;
                    for (char c : ent.substr(1)) {
                        if (c < '0' || c > '9') { ok = false; break; }
                        code = code * 10 + (c - '0');
                    }
                    if (ok && code > 0 && code < 128) {
                        out += static_cast<char>(code);
                        i = semi + 1;
                        continue;
                    }
                }
            }
        }
        out += s[i++];
    }
    return out;
}

// ---- Markdown cell escaping ----

inline std::string md_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '|': out += "\\|"; break;
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '\n': out += "<br>"; break;
            case '\r': out += "&#13;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string md_unescape(std::string_view s) {
    // backslash escapes first, then <br>, then entities (see md_escape order)
    std::string pass1;
    pass1.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            pass1 += s[++i];
        } else {
            pass1 += s[i];
        }
    }
    std::string pass2;
    pass2.reserve(pass1.size());
    for (std::size_t i = 0; i < pass1.size();) {
        if (pass1.compare(i, 4, "<br>") == 0) {
            pass2 += '\n';
            i += 4;
        } else if (pass1.compare(i, 5, "<br/>") == 0) {
            pass2 += '\n';
            i += 5;
        } else {
            pass2 += pass1[i++];
        }
    }
    return html_unescape(pass2);
}

// ---- RFC-4180 field quoting ----

inline std::string rfc4180_field(std::string_view s, char delim) {
    bool needs_quote = false;
    for (char c : s) {
        if (c == delim || c == '"' || c == '\n' || c == '\r') {
            needs_quote = true;
            break;
        }
    }
    if (!needs_quote) return std::string(s);
    std::string out;
    out.reserve(s.size() + 2);
    out += '"';
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string serialize_delimited(const Table& t, char delim) {
    std::string out;
    const std::string d(1, delim);
    out += rfc4180_field("index", delim);
    for (const auto& name : t.column_names()) out += d + rfc4180_field(name, delim);
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        out += '\n';
        out += rfc4180_field(t.row_labels()[i], delim);
        for (const auto& cell : t.row(i)) out += d + rfc4180_field(cell, delim);
    }
    return out;
}

inline std::string serialize_json(const Table& t) {
    if (t.n_rows() == 0) return "{}";
    std::string out = "{";
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        if (i > 0) out += ",\n";
        out += json_quote(t.row_labels()[i]);
        out += ": {";
        for (std::size_t j = 0; j < t.n_cols(); ++j) {
            if (j > 0) out += ", ";
            out += json_quote(t.column_names()[j]);
            out += ": ";
            out += render_bare(t, i, j) ? t.cell(i, j) : json_quote(t.cell(i, j));
        }
        out += "}";
    }
    out += "}";
    return out;
}

inline std::string serialize_data_matrix(const Table& t) {
    std::string out = "[";
    out += py_quote("index", '\'');
    for (const auto& name : t.column_names()) {
        out += ", ";
        out += py_quote(name, '\'');
    }
    out += "]";
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        out += "\n[";
        const std::string& label = t.row_labels()[i];
        out += label_bare(label) ? label : py_quote(label, '\'');
        for (std::size_t j = 0; j < t.n_cols(); ++j) {
            out += ", ";
            out += render_bare(t, i, j) ? t.cell(i, j) : py_quote(t.cell(i, j), '\'');
        }
        out += "]";
    }
    return out;
}

inline std::string serialize_markdown(const Table& t) {
    std::string out = "| index |";
    for (const auto& name : t.column_names()) {
        out += ' ';
        out += md_escape(name);
        out += " |";
    }
    out += "\n| --- |";
    for (std::size_t j = 0; j < t.n_cols(); ++j) out += " --- |";
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        out += "\n| ";
        out += md_escape(t.row_labels()[i]);
        out += " |";
        for (const auto& cell : t.row(i)) {
            out += ' ';
            out += md_escape(cell);
            out += " |";
        }
    }
    return out;
}

inline std::string serialize_html(const Table& t, bool spaced) {
    std::vector<std::pair<int, std::string>> lines;  // (indent, content)
    lines.emplace_back(0, "<table>");
    lines.emplace_back(1, "<thead>");
    lines.emplace_back(2, "<tr>");
    lines.emplace_back(3, "<th>index</th>");
    for (const auto& name : t.column_names())
        lines.emplace_back(3, "<th>" + html_escape(name) + "</th>");
    lines.emplace_back(2, "</tr>");
    lines.emplace_back(1, "</thead>");
    lines.emplace_back(1, "<tbody>");
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        lines.emplace_back(2, "<tr>");
        lines.emplace_back(3, "<td>" + html_escape(t.row_labels()[i]) + "</td>");
        for (const auto& cell : t.row(i))
            lines.emplace_back(3, "<td>" + html_escape(cell) + "</td>");
        lines.emplace_back(2, "</tr>");
    }
    lines.emplace_back(1, "</tbody>");
    lines.emplace_back(0, "</table>");
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (spaced) {
            if (i > 0) out += '\n';
            out.append(static_cast<std::size_t>(lines[i].first) * 2, ' ');
        }
        out += lines[i].second;
    }
    return out;
}

inline std::string serialize_dfloader(const Table& t) {
    std::string out = "pd.DataFrame({";
    for (std::size_t j = 0; j < t.n_cols(); ++j) {
        out += j == 0 ? "\n" : ",\n";
        out += "  ";
        out += py_quote(t.column_names()[j], '"');
        out += ": [";
        for (std::size_t i = 0; i < t.n_rows(); ++i) {
            if (i > 0) out += ", ";
            out += render_bare(t, i, j) ? t.cell(i, j) : py_quote(t.cell(i, j), '"');
        }
        out += "]";
    }
    if (t.n_cols() > 0) out += "\n";
    out += "}, index=[";
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        if (i > 0) out += ", ";
        const std::string& label = t.row_labels()[i];
        out += label_bare(label) ? label : py_quote(label, '"');
    }
    out += "])";
    return out;
}

}  // namespace detail

/// Renders a table in the given format. Deterministic: identical tables
/// produce identical bytes.
inline std::string serialize(const Table& t, FormatId f) {
    switch (f) {
        case FormatId::CommaSeparated: return detail::serialize_delimited(t, ',');
        case FormatId::TabSeparated: return detail::serialize_delimited(t, '\t');
        case FormatId::Json: return detail::serialize_json(t);
        case FormatId::DataMatrix: return detail::serialize_data_matrix(t);
        case FormatId::Markdown: return detail::serialize_markdown(t);
        case FormatId::Html: return detail::serialize_html(t, true);
        case FormatId::HtmlNoSpace: return detail::serialize_html(t, false);
        case FormatId::DFLoader: return detail::serialize_dfloader(t);
    }
    throw Error("unknown format");
}

// ---------------------------------------------------------------------------
// Parsing (lenient: model output)
// ---------------------------------------------------------------------------

namespace detail {

/// Assembles a table from a header row plus data rows, applying the shared
/// recovery rules: pad/truncate ragged rows, pull labels from an "index"
/// column or synthesize positional ones, repair duplicate labels and names.
inline Table assemble(std::vector<std::string> header,
                      std::vector<std::vector<std::string>> data_rows) {
    bool has_index = !header.empty() && header.front() == "index";
    std::vector<std::string> names;
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> rows;
    const std::size_t width = header.size();
    for (auto& r : data_rows) {
        r.resize(width, "");
        if (has_index) {
            labels.push_back(r.front());
            r.erase(r.begin());
        }
        rows.push_back(std::move(r));
    }
    if (has_index) {
        names.assign(header.begin() + 1, header.end());
    } else {
        names = std::move(header);
        labels = Table::default_labels(rows.size());
    }
    names = repair_duplicates(std::move(names));
    labels = repair_duplicates(std::move(labels));
    return Table::from_rows(std::move(names), std::move(labels), std::move(rows));
}

inline Table parse_delimited(std::string_view s, char delim) {
    // Trim leading prose: the table block starts at the first line that
    // contains the delimiter, preferring a line that starts with "index".
    std::size_t start = std::string_view::npos;
    std::size_t fallback = std::string_view::npos;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t eol = s.find('\n', pos);
        std::string_view line = s.substr(pos, eol == std::string_view::npos ? s.size() - pos
                                                                            : eol - pos);
        if (line.find(delim) != std::string_view::npos) {
            if (fallback == std::string_view::npos) fallback = pos;
            if (line.starts_with("index")) {
                start = pos;
                break;
            }
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    if (start == std::string_view::npos) start = fallback;
    if (start == std::string_view::npos) throw ParseError(0, "no delimited table found");

    auto rows = read_delimited(s.substr(start), delim);
    if (rows.empty()) throw ParseError(start, "no rows");
    const std::size_t width = rows.front().size();
    while (rows.size() > 1 && rows.back().size() != width) rows.pop_back();
    std::vector<std::string> header = std::move(rows.front());
    rows.erase(rows.begin());
    return assemble(std::move(header), std::move(rows));
}

inline std::string json_value_to_text(const nlohmann::ordered_json& v) {
    switch (v.type()) {
        case nlohmann::ordered_json::value_t::string: return v.get<std::string>();
        case nlohmann::ordered_json::value_t::number_integer:
            return canonical_int(v.get<std::int64_t>());
        case nlohmann::ordered_json::value_t::number_unsigned:
            return std::to_string(v.get<std::uint64_t>());
        case nlohmann::ordered_json::value_t::number_float:
            return canonical_float(v.get<double>());
        case nlohmann::ordered_json::value_t::boolean: return canonical_bool(v.get<bool>());
        case nlohmann::ordered_json::value_t::null: return "";
        default: return v.dump();
    }
}

inline Table parse_json(std::string_view s) {
    std::size_t open = s.find_first_of("{[");
    if (open == std::string_view::npos) throw ParseError(0, "no JSON object found");
    std::size_t close = s.find_last_of(s[open] == '{' ? '}' : ']');
    if (close == std::string_view::npos || close < open)
        throw ParseError(s.size(), "unterminated JSON value");
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(s.substr(open, close - open + 1));
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw ParseError(open + static_cast<std::size_t>(e.byte), e.what());
    }

    std::vector<std::string> names;
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> rows;
    auto append_row = [&](const std::string& label, const nlohmann::ordered_json& obj) {
        labels.push_back(label);
        std::vector<std::string> row(names.size(), "");
        if (obj.is_object()) {
            for (auto it = obj.begin(); it != obj.end(); ++it) {
                std::size_t j = 0;
                for (; j < names.size(); ++j)
                    if (names[j] == it.key()) break;
                if (j == names.size()) {
                    names.push_back(it.key());
                    for (auto& r : rows) r.push_back("");
                    row.push_back("");
                }
                row[j] = json_value_to_text(it.value());
            }
        } else if (obj.is_array()) {
            std::size_t j = 0;
            for (const auto& v : obj) {
                if (j >= names.size()) {
                    names.push_back("col_" + std::to_string(names.size()));
                    for (auto& r : rows) r.push_back("");
                    row.push_back("");
                }
                row[j++] = json_value_to_text(v);
            }
        } else {
            row.resize(std::max<std::size_t>(names.size(), 1), "");
            if (names.empty()) names.push_back("col_0");
            row[0] = json_value_to_text(obj);
        }
        rows.push_back(std::move(row));
    };

    if (doc.is_object()) {
        for (auto it = doc.begin(); it != doc.end(); ++it) append_row(it.key(), it.value());
    } else if (doc.is_array()) {
        std::size_t i = 0;
        for (const auto& v : doc) append_row(std::to_string(i++), v);
    } else {
        throw ParseError(open, "top-level JSON value is not a table");
    }
    for (auto& r : rows) r.resize(names.size(), "");
    names = repair_duplicates(std::move(names));
    labels = repair_duplicates(std::move(labels));
    return Table::from_rows(std::move(names), std::move(labels), std::move(rows));
}

// ---- python-literal scanning (DataMatrix and DFLoader) ----

struct PyScanner {
    std::string_view s;
    std::size_t pos = 0;

    bool eof() const { return pos >= s.size(); }
    char peek() const { return s[pos]; }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool accept(char c) {
        skip_ws();
        if (eof() || s[pos] != c) return false;
        ++pos;
        return true;
    }

    void expect(char c, const char* what) {
        if (!accept(c)) throw ParseError(pos, std::string("expected ") + what);
    }

    /// One scalar: quoted string, number, or bare identifier.
    std::string scalar() {
        skip_ws();
        if (eof()) throw ParseError(pos, "unexpected end of input");
        char c = s[pos];
        if (c == '\'' || c == '"') return string_literal();
        std::size_t begin = pos;
        while (!eof()) {
            char d = s[pos];
            if (d == ',' || d == ']' || d == ')' || d == '}' || d == '\n') break;
            ++pos;
        }
        std::string token(s.substr(begin, pos - begin));
        while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back())))
            token.pop_back();
        if (token == "None" || token == "nan" || token == "NaN") return "";
        return token;  // numbers and True/False pass through as text
    }

    std::string string_literal() {
        char quote = s[pos++];
        std::string body;
        while (true) {
            if (eof()) throw ParseError(pos, "unterminated string literal");
            char c = s[pos];
            if (c == '\\' && pos + 1 < s.size()) {
                body += c;
                body += s[pos + 1];
                pos += 2;
            } else if (c == quote) {
                ++pos;
                return py_unescape(body);
            } else {
                body += c;
                ++pos;
            }
        }
    }

    /// A bracketed list of scalars: [a, 'b', 3.5]
    std::vector<std::string> list() {
        expect('[', "'['");
        std::vector<std::string> items;
        skip_ws();
        if (accept(']')) return items;
        while (true) {
            items.push_back(scalar());
            skip_ws();
            if (accept(']')) return items;
            expect(',', "',' or ']'");
            skip_ws();
            if (accept(']')) return items;  // tolerate trailing comma
        }
    }
};

inline Table parse_data_matrix(std::string_view s) {
    // Table block: consecutive lines whose first non-blank character is '['.
    std::vector<std::vector<std::string>> lists;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t line_start = pos;
        while (line_start < s.size() &&
               (s[line_start] == ' ' || s[line_start] == '\t')) ++line_start;
        if (line_start < s.size() && s[line_start] == '[') {
            PyScanner scan{s, line_start};
            try {
                lists.push_back(scan.list());
            } catch (const ParseError&) {
                if (lists.empty()) throw;
                break;  // salvage what parsed so far
            }
            pos = scan.pos;
            std::size_t eol = s.find('\n', pos);
            if (eol == std::string_view::npos) break;
            pos = eol + 1;
        } else {
            if (!lists.empty()) break;  // prose after the block ends it
            std::size_t eol = s.find('\n', pos);
            if (eol == std::string_view::npos) break;
            pos = eol + 1;
        }
    }
    if (lists.empty()) throw ParseError(0, "no bracketed rows found");
    std::vector<std::string> header = std::move(lists.front());
    lists.erase(lists.begin());
    return assemble(std::move(header), std::move(lists));
}

inline Table parse_dfloader(std::string_view s) {
    std::size_t anchor = s.find("DataFrame");
    if (anchor == std::string_view::npos) throw ParseError(0, "no DataFrame constructor found");
    PyScanner scan{s, anchor + std::string_view("DataFrame").size()};
    scan.expect('(', "'('");
    scan.expect('{', "'{'");
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> columns;
    scan.skip_ws();
    if (!scan.accept('}')) {
        while (true) {
            scan.skip_ws();
            if (scan.eof()) throw ParseError(scan.pos, "unterminated column map");
            char c = scan.peek();
            if (c != '\'' && c != '"') throw ParseError(scan.pos, "expected column name string");
            names.push_back(scan.string_literal());
            scan.expect(':', "':'");
            columns.push_back(scan.list());
            scan.skip_ws();
            if (scan.accept('}')) break;
            scan.expect(',', "',' or '}'");
            scan.skip_ws();
            if (scan.accept('}')) break;
        }
    }
    std::vector<std::string> labels;
    bool have_labels = false;
    scan.skip_ws();
    if (scan.accept(',')) {
        scan.skip_ws();
        std::size_t kw = scan.pos;
        if (s.compare(kw, 5, "index") == 0) {
            scan.pos = kw + 5;
            scan.expect('=', "'='");
            labels = scan.list();
            have_labels = true;
        }
    }
    std::size_t n_rows = 0;
    for (const auto& col : columns) n_rows = std::max(n_rows, col.size());
    if (have_labels) n_rows = std::max(n_rows, labels.size());
    std::vector<std::vector<std::string>> rows(n_rows, std::vector<std::string>(names.size(), ""));
    for (std::size_t j = 0; j < columns.size(); ++j)
        for (std::size_t i = 0; i < columns[j].size(); ++i) rows[i][j] = columns[j][i];
    if (!have_labels) {
        labels = Table::default_labels(n_rows);
    } else {
        const std::size_t have = labels.size();
        labels.resize(n_rows);
        for (std::size_t i = have; i < n_rows; ++i) labels[i] = std::to_string(i);
    }
    names = repair_duplicates(std::move(names));
    labels = repair_duplicates(std::move(labels));
    return Table::from_rows(std::move(names), std::move(labels), std::move(rows));
}

inline Table parse_markdown(std::string_view s) {
    std::vector<std::vector<std::string>> table_rows;
    std::size_t pos = 0;
    bool in_block = false;
    while (pos <= s.size()) {
        std::size_t eol = s.find('\n', pos);
        std::string_view line = s.substr(pos, eol == std::string_view::npos ? s.size() - pos
                                                                            : eol - pos);
        std::size_t first = line.find_first_not_of(" \t");
        bool is_row = first != std::string_view::npos && line[first] == '|';
        if (is_row) {
            in_block = true;
            std::string_view body = line.substr(first + 1);
            // strip one trailing unescaped pipe
            std::size_t last = body.find_last_not_of(" \t");
            if (last != std::string_view::npos && body[last] == '|' &&
                (last == 0 || body[last - 1] != '\\'))
                body = body.substr(0, last);
            std::vector<std::string> cells;
            std::string cell;
            for (std::size_t i = 0; i < body.size(); ++i) {
                char c = body[i];
                if (c == '\\' && i + 1 < body.size()) {
                    cell += c;
                    cell += body[++i];
                } else if (c == '|') {
                    cells.push_back(cell);
                    cell.clear();
                } else {
                    cell += c;
                }
            }
            cells.push_back(cell);
            for (auto& raw : cells) {
                if (!raw.empty() && raw.front() == ' ') raw.erase(raw.begin());
                if (!raw.empty() && raw.back() == ' ') raw.pop_back();
                raw = md_unescape(raw);
            }
            table_rows.push_back(std::move(cells));
        } else if (in_block && first != std::string_view::npos) {
            break;  // prose after the table
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    if (table_rows.empty()) throw ParseError(0, "no pipe table found");
    // Drop the alignment row if present.
    if (table_rows.size() > 1) {
        bool all_dashes = true;
        for (const auto& c : table_rows[1]) {
            if (c.find_first_not_of("-: \t") != std::string::npos || c.empty()) {
                all_dashes = false;
                break;
            }
        }
        if (all_dashes) table_rows.erase(table_rows.begin() + 1);
    }
    std::vector<std::string> header = std::move(table_rows.front());
    table_rows.erase(table_rows.begin());
    return assemble(std::move(header), std::move(table_rows));
}

inline Table parse_html(std::string_view s) {
    struct Tag {
        std::string name;
        bool closing;
        std::size_t end;  // offset just past '>'
    };
    auto read_tag = [&](std::size_t lt) -> std::optional<Tag> {
        std::size_t gt = s.find('>', lt);
        if (gt == std::string_view::npos) return std::nullopt;
        std::size_t i = lt + 1;
        bool closing = i < gt && s[i] == '/';
        if (closing) ++i;
        std::string name;
        while (i < gt && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '!')) {
            name += static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
            ++i;
        }
        return Tag{name, closing, gt + 1};
    };

    std::size_t pos = s.find('<');
    // Skip prose up to the table (or the first row if no <table> tag).
    std::size_t table_at = std::string_view::npos;
    for (std::size_t p = pos; p != std::string_view::npos; p = s.find('<', p + 1)) {
        auto tag = read_tag(p);
        if (!tag) break;
        if (!tag->closing && (tag->name == "table" || tag->name == "tr")) {
            table_at = p;
            break;
        }
    }
    if (table_at == std::string_view::npos) throw ParseError(0, "no <table> found");

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> current_row;
    std::string current_text;
    bool in_cell = false;
    bool row_open = false;
    bool saw_table_close = false;

    auto commit_cell = [&] {
        if (!in_cell) return;
        std::size_t b = current_text.find_first_not_of(" \t\r\n");
        std::size_t e = current_text.find_last_not_of(" \t\r\n");
        std::string trimmed =
            b == std::string::npos ? "" : current_text.substr(b, e - b + 1);
        current_row.push_back(html_unescape(trimmed));
        current_text.clear();
        in_cell = false;
    };
    auto commit_row = [&] {
        commit_cell();
        if (row_open && !current_row.empty()) rows.push_back(std::move(current_row));
        current_row.clear();
        row_open = false;
    };

    pos = table_at;
    while (pos < s.size()) {
        std::size_t lt = s.find('<', pos);
        if (lt == std::string_view::npos) {
            if (in_cell) current_text += s.substr(pos);
            break;
        }
        if (in_cell) current_text += s.substr(pos, lt - pos);
        auto tag = read_tag(lt);
        if (!tag) {
            pos = s.size();
            break;
        }
        const std::string& name = tag->name;
        if (name == "td" || name == "th") {
            if (tag->closing) {
                commit_cell();
            } else {
                commit_cell();
                if (!row_open) row_open = true;
                in_cell = true;
            }
        } else if (name == "tr") {
            commit_row();
            if (!tag->closing) row_open = true;
        } else if (name == "table") {
            if (tag->closing) {
                commit_row();
                saw_table_close = true;
                pos = tag->end;
                break;
            }
        } else if (name == "br") {
            if (in_cell) current_text += '\n';
        }
        // thead/tbody and any unknown tags carry no structure of their own
        pos = tag->end;
    }
    if (!saw_table_close) commit_row();
    if (rows.empty()) throw ParseError(s.size(), "unexpected end of input inside table");
    std::vector<std::string> header = std::move(rows.front());
    rows.erase(rows.begin());
    return assemble(std::move(header), std::move(rows));
}

}  // namespace detail

/// Best-effort parse of a string intended to be in format `f`. Model output
/// is noisy: leading/trailing prose is trimmed, ragged rows are padded,
/// duplicate row labels are suffixed with "#k", and a missing index column
/// yields positional labels. Throws ParseError when no table can be
/// recovered.
inline Table parse(std::string_view s, FormatId f) {
    switch (f) {
        case FormatId::CommaSeparated: return detail::parse_delimited(s, ',');
        case FormatId::TabSeparated: return detail::parse_delimited(s, '\t');
        case FormatId::Json: return detail::parse_json(s);
        case FormatId::DataMatrix: return detail::parse_data_matrix(s);
        case FormatId::Markdown: return detail::parse_markdown(s);
        case FormatId::Html:
        case FormatId::HtmlNoSpace: return detail::parse_html(s);
        case FormatId::DFLoader: return detail::parse_dfloader(s);
    }
    throw Error("unknown format");
}

// ---------------------------------------------------------------------------
// Token counting
// ---------------------------------------------------------------------------

/// Pluggable token counter. The built-in heuristic is ceil(len/4) plus one
/// per newline; exact tokenizers can be supplied by the caller.
struct Tokenizer {
    std::string id;
    std::function<std::int64_t(std::string_view)> count;
};

inline const Tokenizer& heuristic_tokenizer() {
    static const Tokenizer tok{
        "heuristic", [](std::string_view s) -> std::int64_t {
            std::int64_t newlines = 0;
            for (char c : s)
                if (c == '\n') ++newlines;
            return static_cast<std::int64_t>((s.size() + 3) / 4) + newlines;
        }};
    return tok;
}

inline std::int64_t token_estimate(std::string_view s, const Tokenizer& tok = heuristic_tokenizer()) {
    return tok.count(s);
}

}  // namespace tablebench
