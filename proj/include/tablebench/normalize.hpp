#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "tablebench/table.hpp"

namespace tablebench {

namespace detail {

inline std::string_view trim_view(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n\f\v");
    if (b == std::string_view::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(b, e - b + 1);
}

inline std::string_view last_nonempty_line(std::string_view s) {
    while (!s.empty()) {
        std::size_t nl = s.find_last_of('\n');
        if (nl == std::string_view::npos) return s;
        std::string_view tail = trim_view(s.substr(nl + 1));
        if (!tail.empty()) return tail;
        s = s.substr(0, nl);
    }
    return s;
}

inline std::string casefold_ascii(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// "30.0" -> "30", "1E5" -> "1e+05"; non-numeric strings pass through.
inline std::string canonicalize_numeric(std::string s) {
    if (auto i = parse_int_cell(s)) return canonical_int(*i);
    if (auto f = parse_float_cell(s)) {
        double v = *f;
        double integral_part = 0.0;
        // integral reals collapse onto the integer rendering
        if (std::modf(v, &integral_part) == 0.0 && std::abs(v) < 9.2e18)
            return canonical_int(static_cast<std::int64_t>(v));
        return canonical_float(v);
    }
    return s;
}

}  // namespace detail

/// Normalizes a model completion for fact-finding comparison: keep the last
/// non-empty line, trim, strip wrapping quotes/backticks, casefold, and
/// canonicalize numbers. Idempotent.
inline std::string normalize_answer(std::string_view s) {
    std::string_view v = detail::trim_view(detail::last_nonempty_line(s));
    while (v.size() >= 2 && (v.front() == '"' || v.front() == '\'' || v.front() == '`') &&
           v.back() == v.front()) {
        v = detail::trim_view(v.substr(1, v.size() - 2));
    }
    return detail::canonicalize_numeric(detail::casefold_ascii(v));
}

/// Normalizes one table cell for coordinate matching: trim, casefold,
/// canonicalize numbers. No line extraction — cells may be multi-line.
inline std::string normalize_cell(std::string_view s) {
    return detail::canonicalize_numeric(detail::casefold_ascii(detail::trim_view(s)));
}

}  // namespace tablebench
