#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tablebench/formats.hpp"
#include "tablebench/noise.hpp"
#include "tablebench/normalize.hpp"
#include "tablebench/rng.hpp"
#include "tablebench/table.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Task kinds
// ---------------------------------------------------------------------------

enum class TaskKind {
    Navigation,
    ColumnLookup,
    RowLookup,
    DataTypeLookup,
    TableReconstruction,
    TableTranspose,
    TableColumnReorder,
};

inline constexpr std::array<TaskKind, 7> kAllTasks = {
    TaskKind::Navigation,       TaskKind::ColumnLookup,      TaskKind::RowLookup,
    TaskKind::DataTypeLookup,   TaskKind::TableReconstruction, TaskKind::TableTranspose,
    TaskKind::TableColumnReorder,
};

inline std::string_view task_name(TaskKind k) {
    switch (k) {
        case TaskKind::Navigation: return "Navigation";
        case TaskKind::ColumnLookup: return "ColumnLookup";
        case TaskKind::RowLookup: return "RowLookup";
        case TaskKind::DataTypeLookup: return "DataTypeLookup";
        case TaskKind::TableReconstruction: return "TableReconstruction";
        case TaskKind::TableTranspose: return "TableTranspose";
        case TaskKind::TableColumnReorder: return "TableColumnReorder";
    }
    return "Navigation";
}

inline std::optional<TaskKind> task_from_name(std::string_view name) {
    for (TaskKind k : kAllTasks)
        if (task_name(k) == name) return k;
    return std::nullopt;
}

inline bool is_fact_finding(TaskKind k) {
    return k == TaskKind::Navigation || k == TaskKind::ColumnLookup ||
           k == TaskKind::RowLookup || k == TaskKind::DataTypeLookup;
}

// ---------------------------------------------------------------------------
// Task instances
// ---------------------------------------------------------------------------

/// Ground truth: a set of acceptable normalized strings for fact-finding, or
/// a gold table plus required output format for transformations.
struct AnswerKey {
    std::set<std::string> accept_set;
    std::optional<Table> gold_table;
    std::optional<FormatId> required_format;

    bool is_fact() const { return !gold_table.has_value(); }
};

struct TaskInstance {
    std::string id;
    TaskKind kind = TaskKind::Navigation;
    std::string dataset_id;
    FormatId format_id = FormatId::Json;
    NoiseId noise_id = NoiseId::OriginalData;
    std::uint64_t seed = 0;
    std::string rendered_table;
    std::string question;
    AnswerKey answer;
};

inline std::string make_instance_id(std::string_view dataset, FormatId f, NoiseId n, TaskKind k,
                                    std::size_t ordinal) {
    std::string out(dataset);
    out += ':';
    out += format_name(f);
    out += ':';
    out += noise_name(n);
    out += ':';
    out += task_name(k);
    out += ':';
    out += std::to_string(ordinal);
    return out;
}

// ---------------------------------------------------------------------------
// Token budget
// ---------------------------------------------------------------------------

/// Prompt budget: a hard token limit with a slice reserved for the
/// completion, larger for transformation tasks that emit whole tables.
struct BudgetPolicy {
    std::int64_t token_budget = 4097;
    std::int64_t fact_reserve = 256;
    std::int64_t transform_reserve = 1536;

    std::int64_t reserve_for(TaskKind k) const {
        return is_fact_finding(k) ? fact_reserve : transform_reserve;
    }
};

using RenderFn = std::function<std::string(const Table&)>;

/// Longest row-prefix of `t` whose rendering plus prompt overhead fits in
/// budget - completion_reserve. Binary search; the rendering length is
/// monotone in the number of rows. Throws BudgetError when not even one row
/// fits (or, for a 0-row table, when the header alone does not fit).
inline Table fit_rows_to_budget(const Table& t, const RenderFn& render,
                                std::int64_t prompt_overhead, std::int64_t budget,
                                std::int64_t completion_reserve,
                                const Tokenizer& tok = heuristic_tokenizer()) {
    if (budget <= prompt_overhead)
        throw BudgetError("token budget " + std::to_string(budget) +
                          " does not cover prompt overhead " + std::to_string(prompt_overhead));
    const std::int64_t limit = budget - completion_reserve - prompt_overhead;
    auto fits = [&](std::size_t rows) {
        return token_estimate(render(t.head(rows)), tok) <= limit;
    };
    if (t.n_rows() == 0) {
        if (!fits(0)) throw BudgetError("table header alone exceeds the token budget");
        return t;
    }
    if (!fits(1)) throw BudgetError("table too wide: one row exceeds the token budget");
    std::size_t lo = 1, hi = t.n_rows();  // fits(lo) holds
    while (lo < hi) {
        std::size_t mid = lo + (hi - lo + 1) / 2;
        if (fits(mid)) lo = mid; else hi = mid - 1;
    }
    return t.head(lo);
}

inline Table fit_rows_to_budget(const Table& t, FormatId f, std::int64_t prompt_overhead,
                                std::int64_t budget, std::int64_t completion_reserve,
                                const Tokenizer& tok = heuristic_tokenizer()) {
    return fit_rows_to_budget(
        t, [f](const Table& x) { return serialize(x, f); }, prompt_overhead, budget,
        completion_reserve, tok);
}

// ---------------------------------------------------------------------------
// Questions
// ---------------------------------------------------------------------------

namespace detail {

inline std::string in_quotes(std::string_view s) {
    std::string out = "\"";
    out += s;
    out += "\"";
    return out;
}

inline std::string navigation_question(std::string_view label, std::string_view column) {
    return "What is the value at row index " + in_quotes(label) + ", column " + in_quotes(column) + "?";
}

inline std::string column_lookup_question(std::string_view value) {
    return "What is the name of a column that contains the value " + in_quotes(value) + "?";
}

inline std::string row_lookup_question(std::string_view value) {
    return "What is the row index of a row that contains the value " + in_quotes(value) + "?";
}

inline std::string dtype_question(std::string_view column) {
    return "What is the Pandas datatype of the values in column " + in_quotes(column) + "?";
}

inline std::string reconstruction_question() {
    return "Reconstruct the full table, including the index, from the serialized rows above.";
}

inline std::string transpose_question() {
    return "Transpose the table above: rows become columns and columns become rows.";
}

inline std::string reorder_question(const std::vector<std::string>& new_order) {
    std::string out =
        "Reorder the columns of the table above so they appear in exactly this order: ";
    for (std::size_t i = 0; i < new_order.size(); ++i) {
        if (i > 0) out += ", ";
        out += in_quotes(new_order[i]);
    }
    out += ". Keep the index column first and the rows unchanged.";
    return out;
}

inline std::int64_t max_token_estimate(const std::vector<std::string>& items,
                                       const Tokenizer& tok) {
    std::int64_t best = 0;
    for (const auto& s : items) best = std::max(best, token_estimate(s, tok));
    return best;
}

}  // namespace detail

/// Conservative upper bound on the question's token count for a task over
/// this table, used to size the prompt overhead before targets are sampled.
inline std::int64_t question_token_bound(TaskKind kind, const Table& t,
                                         const Tokenizer& tok = heuristic_tokenizer()) {
    using namespace detail;
    std::int64_t longest_cell = 0;
    for (const auto& row : t.cells())
        longest_cell = std::max(longest_cell, max_token_estimate(row, tok));
    switch (kind) {
        case TaskKind::Navigation:
            return token_estimate(navigation_question("", ""), tok) +
                   max_token_estimate(t.row_labels(), tok) +
                   max_token_estimate(t.column_names(), tok);
        case TaskKind::ColumnLookup:
            return token_estimate(column_lookup_question(""), tok) + longest_cell;
        case TaskKind::RowLookup:
            return token_estimate(row_lookup_question(""), tok) + longest_cell;
        case TaskKind::DataTypeLookup:
            return token_estimate(dtype_question(""), tok) +
                   max_token_estimate(t.column_names(), tok);
        case TaskKind::TableReconstruction:
            return token_estimate(reconstruction_question(), tok);
        case TaskKind::TableTranspose:
            return token_estimate(transpose_question(), tok);
        case TaskKind::TableColumnReorder:
            return token_estimate(reorder_question(t.column_names()), tok);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

/// A prompt layout per task family with {format}, {table}, {question}
/// placeholders. The default template is registered under "default".
struct PromptTemplate {
    std::string fact_layout;
    std::string transform_layout;
    std::string reconstruction_layout;
};

inline const std::map<std::string, PromptTemplate>& prompt_templates() {
    static const std::map<std::string, PromptTemplate> registry = {
        {"default",
         PromptTemplate{
             "You are given a table in {format} format.\n\n{table}\n\n{question}\n"
             "Answer with the value only.",
             "You are given a table in {format} format.\n\n{table}\n\n{question}\n"
             "Output only the table in {format} format.",
             "Each line below is one table row written as \"column: value\" pairs.\n\n{table}\n\n"
             "{question}\nOutput only the table in {format} format.",
         }},
    };
    return registry;
}

namespace detail {

inline std::string substitute(std::string layout, std::string_view key, std::string_view value) {
    const std::string needle = "{" + std::string(key) + "}";
    std::size_t pos = 0;
    while ((pos = layout.find(needle, pos)) != std::string::npos) {
        layout.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return layout;
}

inline const std::string& template_layout(const PromptTemplate& tpl, TaskKind kind) {
    if (is_fact_finding(kind)) return tpl.fact_layout;
    if (kind == TaskKind::TableReconstruction) return tpl.reconstruction_layout;
    return tpl.transform_layout;
}

inline void check_placeholders_filled(const std::string& prompt) {
    for (std::string_view ph : {"{format}", "{table}", "{question}"}) {
        if (prompt.find(ph) != std::string::npos)
            throw Error("prompt template placeholder left unfilled: " + std::string(ph));
    }
}

}  // namespace detail

/// Deterministic prompt assembly: preamble, rendered table, question, and the
/// answer-format directive, per the selected template.
inline std::string build_prompt(const TaskInstance& instance,
                                const std::string& template_id = "default") {
    auto it = prompt_templates().find(template_id);
    if (it == prompt_templates().end())
        throw ConfigError("unknown prompt template \"" + template_id + "\"");
    std::string prompt = detail::template_layout(it->second, instance.kind);
    prompt = detail::substitute(std::move(prompt), "format", format_name(instance.format_id));
    prompt = detail::substitute(std::move(prompt), "table", instance.rendered_table);
    prompt = detail::substitute(std::move(prompt), "question", instance.question);
    detail::check_placeholders_filled(prompt);
    return prompt;
}

/// Token overhead of everything in the prompt except the rendered table:
/// template text, directives, and a worst-case question for this task/table.
inline std::int64_t prompt_overhead(TaskKind kind, FormatId f, const Table& noisy,
                                    const std::string& template_id = "default",
                                    const Tokenizer& tok = heuristic_tokenizer()) {
    TaskInstance probe;
    probe.kind = kind;
    probe.format_id = f;
    probe.rendered_table.clear();
    probe.question.clear();
    std::string skeleton = build_prompt(probe, template_id);
    return token_estimate(skeleton, tok) + question_token_bound(kind, noisy, tok);
}

/// Applies the budget to the noisy table for this task: longest row-prefix
/// whose task rendering fits. Reconstruction is measured on its key-value
/// rendering; every other task on the table's serialization in `f`.
inline Table fit_for_task(TaskKind kind, const Table& noisy, FormatId f,
                          const BudgetPolicy& budget, const std::string& template_id = "default",
                          const Tokenizer& tok = heuristic_tokenizer()) {
    const std::int64_t overhead = prompt_overhead(kind, f, noisy, template_id, tok);
    RenderFn render;
    if (kind == TaskKind::TableReconstruction) {
        render = [](const Table& x) {
            std::string out;
            for (std::size_t i = 0; i < x.n_rows(); ++i) {
                if (i > 0) out += '\n';
                out += serialize_row_text(x, i);
            }
            return out;
        };
    } else {
        render = [f](const Table& x) { return serialize(x, f); };
    }
    return fit_rows_to_budget(noisy, render, overhead, budget.token_budget,
                              budget.reserve_for(kind), tok);
}

// ---------------------------------------------------------------------------
// Fact-finding generation
// ---------------------------------------------------------------------------

namespace detail {

/// Distinct non-degenerate cell texts, deterministically ordered.
inline std::vector<std::string> distinct_cell_values(const Table& t) {
    std::set<std::string> seen;
    for (const auto& row : t.cells())
        for (const auto& cell : row)
            if (!normalize_cell(cell).empty()) seen.insert(cell);
    return {seen.begin(), seen.end()};
}

}  // namespace detail

/// Generates fact-finding instances over an already noisy, already truncated
/// table. Answers are derived from that table alone. Produces fewer than
/// `count` instances when the table has fewer distinct targets.
inline std::vector<TaskInstance> gen_fact_finding(TaskKind kind, const Table& t, FormatId f,
                                                  NoiseId noise, std::string_view dataset_id,
                                                  std::size_t count, std::uint64_t seed) {
    if (!is_fact_finding(kind)) throw GenerationError("not a fact-finding task");
    if (t.n_rows() == 0 || t.n_cols() == 0)
        throw GenerationError("cannot generate fact-finding tasks over an empty table");

    const std::string rendered = serialize(t, f);
    Rng rng(seed);
    std::vector<TaskInstance> out;
    auto push = [&](std::string question, std::set<std::string> accept) {
        TaskInstance inst;
        inst.id = make_instance_id(dataset_id, f, noise, kind, out.size());
        inst.kind = kind;
        inst.dataset_id = std::string(dataset_id);
        inst.format_id = f;
        inst.noise_id = noise;
        inst.seed = seed_combine(seed, out.size());
        inst.rendered_table = rendered;
        inst.question = std::move(question);
        inst.answer.accept_set = std::move(accept);
        out.push_back(std::move(inst));
    };

    switch (kind) {
        case TaskKind::Navigation: {
            std::vector<std::pair<std::size_t, std::size_t>> targets;
            for (std::size_t i = 0; i < t.n_rows(); ++i)
                for (std::size_t j = 0; j < t.n_cols(); ++j)
                    if (!normalize_answer(t.cell(i, j)).empty()) targets.emplace_back(i, j);
            rng.shuffle(targets);
            if (targets.size() > count) targets.resize(count);
            for (auto [i, j] : targets)
                push(detail::navigation_question(t.row_labels()[i], t.column_names()[j]),
                     {normalize_answer(t.cell(i, j))});
            break;
        }
        case TaskKind::ColumnLookup: {
            std::vector<std::string> values = detail::distinct_cell_values(t);
            rng.shuffle(values);
            if (values.size() > count) values.resize(count);
            for (const auto& v : values) {
                std::set<std::string> accept;
                for (std::size_t j = 0; j < t.n_cols(); ++j)
                    for (std::size_t i = 0; i < t.n_rows(); ++i)
                        if (t.cell(i, j) == v) {
                            accept.insert(normalize_answer(t.column_names()[j]));
                            break;
                        }
                push(detail::column_lookup_question(v), std::move(accept));
            }
            break;
        }
        case TaskKind::RowLookup: {
            std::vector<std::string> values = detail::distinct_cell_values(t);
            rng.shuffle(values);
            if (values.size() > count) values.resize(count);
            for (const auto& v : values) {
                std::set<std::string> accept;
                for (std::size_t i = 0; i < t.n_rows(); ++i)
                    for (std::size_t j = 0; j < t.n_cols(); ++j)
                        if (t.cell(i, j) == v) {
                            accept.insert(normalize_answer(t.row_labels()[i]));
                            break;
                        }
                push(detail::row_lookup_question(v), std::move(accept));
            }
            break;
        }
        case TaskKind::DataTypeLookup: {
            std::vector<std::size_t> cols = rng.sample_without_replacement(
                t.n_cols(), std::min(count, t.n_cols()));
            for (std::size_t j : cols)
                push(detail::dtype_question(t.column_names()[j]),
                     {std::string(dtype_name(t.dtype(j)))});
            break;
        }
        default: break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transformation generation
// ---------------------------------------------------------------------------

/// Generates transformation instances. The gold table is computed from the
/// noisy truncated table; the model must answer in format `f`.
inline std::vector<TaskInstance> gen_transformation(TaskKind kind, const Table& t, FormatId f,
                                                    NoiseId noise, std::string_view dataset_id,
                                                    std::size_t count, std::uint64_t seed) {
    if (is_fact_finding(kind)) throw GenerationError("not a transformation task");
    if (t.n_rows() == 0 || t.n_cols() == 0)
        throw GenerationError("cannot generate transformation tasks over an empty table");
    if (kind == TaskKind::TableColumnReorder && t.n_cols() < 2)
        throw GenerationError("column reordering requires at least 2 columns");

    Rng rng(seed);
    std::vector<TaskInstance> out;
    std::set<std::vector<std::size_t>> used_perms;

    for (std::size_t ordinal = 0; ordinal < count; ++ordinal) {
        TaskInstance inst;
        inst.id = make_instance_id(dataset_id, f, noise, kind, ordinal);
        inst.kind = kind;
        inst.dataset_id = std::string(dataset_id);
        inst.format_id = f;
        inst.noise_id = noise;
        inst.seed = seed_combine(seed, ordinal);
        inst.answer.required_format = f;

        switch (kind) {
            case TaskKind::TableReconstruction: {
                std::string lines;
                for (std::size_t i = 0; i < t.n_rows(); ++i) {
                    if (i > 0) lines += '\n';
                    lines += serialize_row_text(t, i);
                }
                inst.rendered_table = std::move(lines);
                inst.question = detail::reconstruction_question();
                inst.answer.gold_table = t;
                break;
            }
            case TaskKind::TableTranspose: {
                inst.rendered_table = serialize(t, f);
                inst.question = detail::transpose_question();
                inst.answer.gold_table = transpose_core(t);
                break;
            }
            case TaskKind::TableColumnReorder: {
                // distinct permutations across the batch while the target
                // space allows; repeats afterwards
                std::vector<std::size_t> perm = rng.non_identity_permutation(t.n_cols());
                for (int attempt = 0; attempt < 64 && used_perms.count(perm); ++attempt)
                    perm = rng.non_identity_permutation(t.n_cols());
                used_perms.insert(perm);

                std::vector<std::string> names;
                std::vector<DType> dtypes;
                for (std::size_t j : perm) {
                    names.push_back(t.column_names()[j]);
                    dtypes.push_back(t.col_dtypes()[j]);
                }
                std::vector<std::vector<std::string>> rows(t.n_rows());
                for (std::size_t i = 0; i < t.n_rows(); ++i)
                    for (std::size_t j : perm) rows[i].push_back(t.cell(i, j));

                inst.rendered_table = serialize(t, f);
                inst.question = detail::reorder_question(names);
                inst.answer.gold_table =
                    Table(std::move(names), t.row_labels(), std::move(rows), std::move(dtypes));
                break;
            }
            default: break;
        }
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace tablebench
