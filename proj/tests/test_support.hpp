#pragma once

// Shared test utilities: a seeded random-table generator and the independent
// oracles the per-operation example values are checked against. Everything in
// here is deliberately written as straight-line reference code, separate from
// the implementation paths it verifies.

#include <algorithm>
#include <cstdint>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "tablebench/formats.hpp"
#include "tablebench/normalize.hpp"
#include "tablebench/rng.hpp"
#include "tablebench/table.hpp"

namespace tbtest {

using tablebench::Rng;
using tablebench::Table;

// ---------------------------------------------------------------------------
// Random tables
// ---------------------------------------------------------------------------

struct TableGenOptions {
    std::size_t min_cols = 1, max_cols = 12;
    std::size_t min_rows = 1, max_rows = 50;
    bool nasty_content = true;   // delimiters, quotes, markup, newlines in cells
    bool nasty_labels = false;   // word labels instead of 0..n-1
    bool allow_nulls = false;
};

inline std::string random_word(Rng& rng, std::size_t min_len = 3, std::size_t max_len = 10) {
    static constexpr std::string_view alphabet = "abcdefghijklmnopqrstuvwxyz";
    std::size_t len = min_len + rng.below(max_len - min_len + 1);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) out += alphabet[rng.below(alphabet.size())];
    return out;
}

inline std::string random_nasty_text(Rng& rng) {
    static const std::vector<std::string> pieces = {
        ",",  "|",   "\"", "'",  "`",  "[",  "]",  "{",  "}",  "(",   ")",
        "<",  ">",   "&",  ":",  ";",  "-",  "--", "\\", "\n", "\t",  " ",
        "a",  "bee", "Zed", "#", "=",  "index", "pd", "0",  "7x",  "e",
        "é", "中"};
    std::size_t n = 1 + rng.below(6);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) out += pieces[rng.below(pieces.size())];
    return out;
}

enum class ColumnFlavor { Int, Float, Bool, Date, Word, Nasty, Mixed, Prose };

/// English-ish sentences, for token-count comparisons against real BPE
/// vocabularies (random letter soup tokenizes nothing like natural text).
inline std::string random_prose(Rng& rng, std::size_t min_words = 6, std::size_t max_words = 16) {
    static const std::vector<std::string> words = {
        "the",    "quick",  "brown",  "fox",     "jumps",   "over",    "lazy",   "dog",
        "table",  "value",  "column", "row",     "data",    "model",   "format", "noise",
        "city",   "river",  "house",  "market",  "price",   "small",   "large",  "green",
        "light",  "water",  "music",  "story",   "paper",   "simple",  "often",  "always",
        "people", "place",  "world",  "number",  "letter",  "mother",  "father", "garden",
        "window", "street", "winter", "summer",  "morning", "evening", "school", "friend",
        "answer", "question"};
    std::size_t n = min_words + rng.below(max_words - min_words + 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) out += ' ';
        out += words[rng.below(words.size())];
    }
    return out;
}

inline std::string random_cell(Rng& rng, ColumnFlavor flavor) {
    switch (flavor) {
        case ColumnFlavor::Int: {
            std::int64_t v = static_cast<std::int64_t>(rng.below(2000001)) - 1000000;
            return tablebench::canonical_int(v);
        }
        case ColumnFlavor::Float: {
            double v = (rng.unit() - 0.5) * 2e6;
            if (rng.below(4) == 0) v = static_cast<double>(static_cast<int>(v));  // integral reals
            return tablebench::canonical_float(v);
        }
        case ColumnFlavor::Bool:
            return rng.below(2) ? "True" : "False";
        case ColumnFlavor::Date: {
            int y = 1900 + static_cast<int>(rng.below(131));
            unsigned m = 1 + static_cast<unsigned>(rng.below(12));
            unsigned d = 1 + static_cast<unsigned>(rng.below(28));
            char buf[32];
            std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, d);
            return buf;
        }
        case ColumnFlavor::Word:
            return random_word(rng);
        case ColumnFlavor::Nasty:
            return random_nasty_text(rng);
        case ColumnFlavor::Mixed:
            switch (rng.below(4)) {
                case 0: return random_cell(rng, ColumnFlavor::Int);
                case 1: return random_cell(rng, ColumnFlavor::Float);
                case 2: return random_cell(rng, ColumnFlavor::Word);
                default: return random_cell(rng, ColumnFlavor::Date);
            }
        case ColumnFlavor::Prose:
            return random_prose(rng);
    }
    return "x";
}

inline Table random_table(Rng& rng, const TableGenOptions& opt = {}) {
    const std::size_t n_cols = opt.min_cols + rng.below(opt.max_cols - opt.min_cols + 1);
    const std::size_t n_rows = opt.min_rows + rng.below(opt.max_rows - opt.min_rows + 1);

    std::set<std::string> used_names;
    std::vector<std::string> names;
    while (names.size() < n_cols) {
        std::string name = opt.nasty_content && rng.below(4) == 0 ? random_nasty_text(rng)
                                                                  : random_word(rng);
        if (used_names.insert(name).second) names.push_back(name);
    }

    std::vector<ColumnFlavor> flavors;
    for (std::size_t j = 0; j < n_cols; ++j) {
        static constexpr ColumnFlavor all[] = {ColumnFlavor::Int,  ColumnFlavor::Float,
                                               ColumnFlavor::Bool, ColumnFlavor::Date,
                                               ColumnFlavor::Word, ColumnFlavor::Nasty,
                                               ColumnFlavor::Mixed};
        ColumnFlavor f = all[rng.below(opt.nasty_content ? 7 : 5)];
        flavors.push_back(f);
    }

    std::vector<std::vector<std::string>> rows(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < n_cols; ++j) {
            std::string cell = random_cell(rng, flavors[j]);
            if (opt.allow_nulls && rng.below(12) == 0) cell = "NA";
            rows[i].push_back(std::move(cell));
        }

    if (opt.nasty_labels && rng.below(2) == 0) {
        std::set<std::string> used_labels;
        std::vector<std::string> labels;
        while (labels.size() < n_rows) {
            std::string label = random_word(rng, 2, 8);
            if (used_labels.insert(label).second) labels.push_back(label);
        }
        return Table::from_rows(std::move(names), std::move(labels), std::move(rows));
    }
    return Table::from_rows(std::move(names), std::move(rows));
}

// ---------------------------------------------------------------------------
// Oracle: regex-per-class dtype classifier
// ---------------------------------------------------------------------------

/// Independent dtype classifier used to cross-check infer_dtype. Built on
/// std::regex with its own grammar spellings.
inline tablebench::DType oracle_dtype(const std::vector<std::string>& cells) {
    static const std::regex int_re(R"([+-]?[0-9]+)");
    static const std::regex float_re(R"([+-]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][+-]?[0-9]+)?)");
    static const std::regex bool_re(R"(True|False|true|false|TRUE|FALSE)");
    static const std::regex date_iso(R"([0-9]{4}-[0-9]{2}-[0-9]{2})");
    static const std::regex date_us(R"([0-9]{2}/[0-9]{2}/[0-9]{4})");
    auto is_null = [](const std::string& s) {
        return s.empty() || s == "NA" || s == "N/A" || s == "NaN" || s == "nan" || s == "null" ||
               s == "None";
    };
    auto valid_date = [&](const std::string& s) {
        int y, m, d;
        if (std::regex_match(s, date_iso)) {
            y = std::stoi(s.substr(0, 4));
            m = std::stoi(s.substr(5, 2));
            d = std::stoi(s.substr(8, 2));
        } else if (std::regex_match(s, date_us)) {
            m = std::stoi(s.substr(0, 2));
            d = std::stoi(s.substr(3, 2));
            y = std::stoi(s.substr(6, 4));
        } else {
            return false;
        }
        if (m < 1 || m > 12 || d < 1) return false;
        static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        int max_d = days[m - 1];
        bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        if (m == 2 && leap) max_d = 29;
        return d <= max_d;
    };
    auto fits_int64 = [](const std::string& s) {
        try {
            std::size_t pos = 0;
            (void)std::stoll(s, &pos);
            return pos == s.size();
        } catch (...) {
            return false;
        }
    };
    auto finite_double = [](const std::string& s) {
        try {
            std::size_t pos = 0;
            double v = std::stod(s, &pos);
            return pos == s.size() && std::isfinite(v);
        } catch (...) {
            return false;
        }
    };

    bool any = false, all_int = true, all_float = true, all_bool = true, all_date = true;
    for (const auto& c : cells) {
        if (is_null(c)) continue;
        any = true;
        if (!(std::regex_match(c, int_re) && fits_int64(c))) all_int = false;
        if (!(std::regex_match(c, float_re) && finite_double(c))) all_float = false;
        if (!std::regex_match(c, bool_re)) all_bool = false;
        if (!valid_date(c)) all_date = false;
    }
    using tablebench::DType;
    if (!any) return DType::Object;
    if (all_int) return DType::Int64;
    if (all_float) return DType::Float64;
    if (all_bool) return DType::Bool;
    if (all_date) return DType::Datetime;
    return DType::Object;
}

// ---------------------------------------------------------------------------
// Oracle: brute-force coordinate matcher for cell-wise P/R/F1
// ---------------------------------------------------------------------------

struct OracleCellScore {
    double precision = 0, recall = 0, f1 = 0;
};

/// O(n^2) pairwise matcher over explicit augmented-grid cell lists:
/// (row, col, normalized value) with header names in row 0 and labels in
/// column 0. Independent of the map-based implementation.
inline OracleCellScore oracle_cell_score(const Table& predicted, const Table& gold) {
    struct Entry {
        std::size_t r, c;
        std::string v;
    };
    auto entries = [](const Table& t) {
        std::vector<Entry> out;
        for (std::size_t j = 0; j < t.n_cols(); ++j)
            out.push_back({0, j + 1, tablebench::normalize_cell(t.column_names()[j])});
        for (std::size_t i = 0; i < t.n_rows(); ++i) {
            out.push_back({i + 1, 0, tablebench::normalize_cell(t.row_labels()[i])});
            for (std::size_t j = 0; j < t.n_cols(); ++j)
                out.push_back({i + 1, j + 1, tablebench::normalize_cell(t.cell(i, j))});
        }
        return out;
    };
    std::vector<Entry> pred = entries(predicted);
    std::vector<Entry> want = entries(gold);
    std::size_t matched = 0;
    for (const Entry& p : pred)
        for (const Entry& w : want)
            if (p.r == w.r && p.c == w.c && p.v == w.v) {
                ++matched;
                break;
            }
    OracleCellScore s;
    s.precision = pred.empty() ? 0.0 : double(matched) / double(pred.size());
    s.recall = want.empty() ? 0.0 : double(matched) / double(want.size());
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;
    return s;
}

// ---------------------------------------------------------------------------
// Oracle: combinatorial pass@k estimator (k = 1)
// ---------------------------------------------------------------------------

/// 1 - C(n-c, k) / C(n, k) with k=1, computed through binomial coefficients.
inline double oracle_pass_at_1(int n, int c) {
    auto choose = [](int a, int b) -> double {
        if (b < 0 || b > a) return 0.0;
        double r = 1.0;
        for (int i = 0; i < b; ++i) r = r * double(a - i) / double(i + 1);
        return r;
    };
    return 1.0 - choose(n - c, 1) / choose(n, 1);
}

// ---------------------------------------------------------------------------
// Oracle: linear-scan row fitting
// ---------------------------------------------------------------------------

/// Largest row-prefix that fits the budget, found by scanning every prefix.
inline std::size_t oracle_fit_rows(const Table& t, tablebench::FormatId f,
                                   std::int64_t prompt_overhead, std::int64_t budget,
                                   std::int64_t reserve) {
    const std::int64_t limit = budget - reserve - prompt_overhead;
    std::size_t best = 0;
    bool any = false;
    for (std::size_t r = 0; r <= t.n_rows(); ++r) {
        std::int64_t tokens = tablebench::token_estimate(tablebench::serialize(t.head(r), f));
        if (tokens <= limit) {
            best = r;
            any = true;
        }
    }
    if (!any) return SIZE_MAX;  // nothing fits, not even the bare header
    return best;
}

}  // namespace tbtest
