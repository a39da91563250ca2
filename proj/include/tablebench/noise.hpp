#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tablebench/rng.hpp"
#include "tablebench/table.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Noise operators: structural perturbations emulating messy or adversarial
// tables. Every operator is a pure function of (id, seed, table).
// ---------------------------------------------------------------------------

enum class NoiseId {
    OriginalData,
    ShuffleRows,
    ShuffleColumns,
    TransposeTable,
    ArbitraryColumnNames,
    SequentialColumnNames,
    ShuffleColumnNames,
    SerializeRow,
    ColumnMerger,
};

inline constexpr std::array<NoiseId, 9> kAllNoises = {
    NoiseId::OriginalData,        NoiseId::ShuffleRows,
    NoiseId::ShuffleColumns,      NoiseId::TransposeTable,
    NoiseId::ArbitraryColumnNames, NoiseId::SequentialColumnNames,
    NoiseId::ShuffleColumnNames,  NoiseId::SerializeRow,
    NoiseId::ColumnMerger,
};

inline std::string_view noise_name(NoiseId n) {
    switch (n) {
        case NoiseId::OriginalData: return "OriginalData";
        case NoiseId::ShuffleRows: return "ShuffleRows";
        case NoiseId::ShuffleColumns: return "ShuffleColumns";
        case NoiseId::TransposeTable: return "TransposeTable";
        case NoiseId::ArbitraryColumnNames: return "ArbitraryColumnNames";
        case NoiseId::SequentialColumnNames: return "SequentialColumnNames";
        case NoiseId::ShuffleColumnNames: return "ShuffleColumnNames";
        case NoiseId::SerializeRow: return "SerializeRow";
        case NoiseId::ColumnMerger: return "ColumnMerger";
    }
    return "OriginalData";
}

inline std::optional<NoiseId> noise_from_name(std::string_view name) {
    for (NoiseId n : kAllNoises)
        if (noise_name(n) == name) return n;
    return std::nullopt;
}

struct NoiseOp {
    NoiseId id = NoiseId::OriginalData;
    std::uint64_t seed = 0;
};

/// Separator used by ColumnMerger between merged values and merged names.
inline constexpr std::string_view kMergeSeparator = "-----";

/// Key-value rendering of one row: `name1: v1, name2: v2`. Shared between the
/// SerializeRow operator and the table reconstruction task.
inline std::string serialize_row_text(const Table& t, std::size_t row) {
    std::string out;
    for (std::size_t j = 0; j < t.n_cols(); ++j) {
        if (j > 0) out += ", ";
        out += t.column_names()[j];
        out += ": ";
        out += t.cell(row, j);
    }
    return out;
}

namespace detail {

inline Table shuffle_rows(const Table& t, Rng& rng) {
    auto perm = rng.non_identity_permutation(t.n_rows());
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> rows;
    labels.reserve(perm.size());
    rows.reserve(perm.size());
    for (std::size_t i : perm) {
        labels.push_back(t.row_labels()[i]);
        rows.push_back(t.row(i));
    }
    return Table(t.column_names(), std::move(labels), std::move(rows), t.col_dtypes());
}

inline Table shuffle_columns(const Table& t, Rng& rng) {
    auto perm = rng.non_identity_permutation(t.n_cols());
    std::vector<std::string> names;
    std::vector<DType> dtypes;
    names.reserve(perm.size());
    dtypes.reserve(perm.size());
    for (std::size_t j : perm) {
        names.push_back(t.column_names()[j]);
        dtypes.push_back(t.col_dtypes()[j]);
    }
    std::vector<std::vector<std::string>> rows(t.n_rows());
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        rows[i].reserve(perm.size());
        for (std::size_t j : perm) rows[i].push_back(t.cell(i, j));
    }
    return Table(std::move(names), t.row_labels(), std::move(rows), std::move(dtypes));
}

inline Table arbitrary_column_names(const Table& t, Rng& rng) {
    static constexpr std::string_view alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::set<std::string> used;
    std::vector<std::string> names;
    names.reserve(t.n_cols());
    for (std::size_t j = 0; j < t.n_cols(); ++j) {
        std::string name;
        do {
            name.clear();
            for (int k = 0; k < 8; ++k) name += alphabet[rng.below(alphabet.size())];
        } while (!used.insert(name).second);
        names.push_back(std::move(name));
    }
    return Table(std::move(names), t.row_labels(), t.cells(), t.col_dtypes());
}

inline Table sequential_column_names(const Table& t) {
    std::vector<std::string> names;
    names.reserve(t.n_cols());
    for (std::size_t j = 0; j < t.n_cols(); ++j) names.push_back("col_" + std::to_string(j));
    return Table(std::move(names), t.row_labels(), t.cells(), t.col_dtypes());
}

inline Table shuffle_column_names(const Table& t, Rng& rng) {
    auto perm = rng.non_identity_permutation(t.n_cols());
    std::vector<std::string> names;
    names.reserve(perm.size());
    for (std::size_t j : perm) names.push_back(t.column_names()[j]);
    // names move, data stays: cell grid and dtypes are untouched
    return Table(std::move(names), t.row_labels(), t.cells(), t.col_dtypes());
}

inline Table serialize_row_op(const Table& t) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(t.n_rows());
    for (std::size_t i = 0; i < t.n_rows(); ++i) rows.push_back({serialize_row_text(t, i)});
    return Table::from_rows({"row"}, t.row_labels(), std::move(rows));
}

inline Table column_merger(const Table& t, Rng& rng) {
    const std::size_t k = t.n_cols();
    if (k < 2)
        throw NotApplicableError("ColumnMerger requires at least 2 columns");
    std::vector<std::size_t> arities;
    for (std::size_t m : {2, 3, 4})
        if (m <= k) arities.push_back(m);
    const std::size_t m = arities[rng.below(arities.size())];
    const std::size_t start = rng.below(k - m + 1);
    const std::string sep(kMergeSeparator);

    auto merge = [&](const std::vector<std::string>& parts) {
        std::string out;
        for (std::size_t j = start; j < start + m; ++j) {
            if (j > start) out += sep;
            out += parts[j];
        }
        return out;
    };

    std::vector<std::string> names;
    for (std::size_t j = 0; j < start; ++j) names.push_back(t.column_names()[j]);
    names.push_back(merge(t.column_names()));
    for (std::size_t j = start + m; j < k; ++j) names.push_back(t.column_names()[j]);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(t.n_rows());
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        std::vector<std::string> row;
        row.reserve(k - m + 1);
        for (std::size_t j = 0; j < start; ++j) row.push_back(t.cell(i, j));
        row.push_back(merge(t.row(i)));
        for (std::size_t j = start + m; j < k; ++j) row.push_back(t.cell(i, j));
        rows.push_back(std::move(row));
    }
    return Table::from_rows(std::move(names), t.row_labels(), std::move(rows));
}

}  // namespace detail

/// Applies a noise operator. Deterministic: the same (id, seed, table)
/// always yields the same output table.
inline Table apply_noise(const NoiseOp& op, const Table& t) {
    Rng rng(op.seed);
    switch (op.id) {
        case NoiseId::OriginalData: return t;
        case NoiseId::ShuffleRows: return detail::shuffle_rows(t, rng);
        case NoiseId::ShuffleColumns: return detail::shuffle_columns(t, rng);
        case NoiseId::TransposeTable: return transpose_core(t);
        case NoiseId::ArbitraryColumnNames: return detail::arbitrary_column_names(t, rng);
        case NoiseId::SequentialColumnNames: return detail::sequential_column_names(t);
        case NoiseId::ShuffleColumnNames: return detail::shuffle_column_names(t, rng);
        case NoiseId::SerializeRow: return detail::serialize_row_op(t);
        case NoiseId::ColumnMerger: return detail::column_merger(t, rng);
    }
    throw Error("unknown noise operator");
}

}  // namespace tablebench
