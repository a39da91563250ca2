#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tablebench/formats.hpp"
#include "tablebench/normalize.hpp"
#include "tablebench/taskgen.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Score records
// ---------------------------------------------------------------------------

struct TableCellScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool parse_failed = false;
};

struct ScoreRecord {
    std::string instance_id;
    bool fact = true;
    std::vector<bool> verdicts;               // fact-finding, one per completion
    std::vector<TableCellScore> cell_scores;  // transformation, one per completion
    double pass1 = 0.0;                       // fact aggregate: c/n
    double precision = 0.0;                   // transformation aggregates: means
    double recall = 0.0;
    double f1 = 0.0;

    /// The per-instance score used as the statistical unit.
    double unit_score() const { return fact ? pass1 : f1; }
};

// ---------------------------------------------------------------------------
// Fact-finding
// ---------------------------------------------------------------------------

/// Judges fact-finding completions. A completion is correct when its
/// normalized form is in the accept set; the aggregate is the pass@1
/// estimator with k=1: c/n over n completions with c correct.
inline ScoreRecord judge_fact(const TaskInstance& instance,
                              const std::vector<std::string>& completions) {
    if (!instance.answer.is_fact())
        throw ScoringError("judge_fact called on a transformation instance");
    if (completions.empty()) throw ScoringError("no completions to judge");
    ScoreRecord rec;
    rec.instance_id = instance.id;
    rec.fact = true;
    std::size_t correct = 0;
    for (const auto& completion : completions) {
        bool ok = instance.answer.accept_set.count(normalize_answer(completion)) > 0;
        rec.verdicts.push_back(ok);
        if (ok) ++correct;
    }
    rec.pass1 = static_cast<double>(correct) / static_cast<double>(completions.size());
    return rec;
}

// ---------------------------------------------------------------------------
// Transformations: cell-wise precision / recall / F1
// ---------------------------------------------------------------------------

/// Coordinate-keyed normalized cells over the augmented grid: row 0 holds
/// column names, column 0 holds row labels, and the (0,0) corner is excluded.
/// Header names and row labels count as cells; transposition tasks hinge on
/// where they end up.
inline std::map<std::pair<std::size_t, std::size_t>, std::string> cell_coordinates(
    const Table& t) {
    std::map<std::pair<std::size_t, std::size_t>, std::string> m;
    for (std::size_t j = 0; j < t.n_cols(); ++j)
        m[{0, j + 1}] = normalize_cell(t.column_names()[j]);
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        m[{i + 1, 0}] = normalize_cell(t.row_labels()[i]);
        for (std::size_t j = 0; j < t.n_cols(); ++j)
            m[{i + 1, j + 1}] = normalize_cell(t.cell(i, j));
    }
    return m;
}

inline TableCellScore score_cells(const Table& predicted, const Table& gold) {
    auto pred = cell_coordinates(predicted);
    auto want = cell_coordinates(gold);
    std::size_t matched = 0;
    for (const auto& [key, value] : pred) {
        auto it = want.find(key);
        if (it != want.end() && it->second == value) ++matched;
    }
    TableCellScore s;
    s.precision = pred.empty() ? 0.0 : static_cast<double>(matched) / pred.size();
    s.recall = want.empty() ? 0.0 : static_cast<double>(matched) / want.size();
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

/// Judges transformation completions: parse each with the required format
/// (lenient), compare coordinate-keyed cells against the gold table, and
/// average P/R/F1 over completions. Unparseable completions score (0,0,0).
inline ScoreRecord judge_table(const TaskInstance& instance,
                               const std::vector<std::string>& completions) {
    if (instance.answer.is_fact())
        throw ScoringError("judge_table called on a fact-finding instance");
    if (completions.empty()) throw ScoringError("no completions to judge");
    const Table& gold = *instance.answer.gold_table;
    const FormatId required = *instance.answer.required_format;
    ScoreRecord rec;
    rec.instance_id = instance.id;
    rec.fact = false;
    for (const auto& completion : completions) {
        TableCellScore s;
        try {
            Table predicted = parse(completion, required);
            s = score_cells(predicted, gold);
        } catch (const ParseError&) {
            s.parse_failed = true;
        }
        rec.cell_scores.push_back(s);
    }
    double p = 0, r = 0, f = 0;
    for (const auto& s : rec.cell_scores) {
        p += s.precision;
        r += s.recall;
        f += s.f1;
    }
    const double n = static_cast<double>(rec.cell_scores.size());
    rec.precision = p / n;
    rec.recall = r / n;
    rec.f1 = f / n;
    return rec;
}

/// Dispatch on the instance family.
inline ScoreRecord judge(const TaskInstance& instance,
                         const std::vector<std::string>& completions) {
    return instance.answer.is_fact() ? judge_fact(instance, completions)
                                     : judge_table(instance, completions);
}

}  // namespace tablebench
