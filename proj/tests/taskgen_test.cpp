#include <catch2/catch_amalgamated.hpp>

#include "tablebench/noise.hpp"
#include "tablebench/scoring.hpp"
#include "tablebench/taskgen.hpp"
#include "test_support.hpp"

using namespace tablebench;

namespace {
Table t0() { return Table::from_rows({"name", "age"}, {{"alice", "30"}, {"bob", "25"}}); }
}  // namespace

TEST_CASE("fit_rows_to_budget keeps small tables intact") {
    Table t = t0();
    Table kept = fit_rows_to_budget(t, FormatId::Json, 50, 4097, 256);
    REQUIRE(kept.content_equals(t));
}

TEST_CASE("fit_rows_to_budget matches the linear-scan oracle") {
    Rng rng(2718);
    for (int rep = 0; rep < 60; ++rep) {
        tbtest::TableGenOptions opt;
        opt.min_rows = 1;
        opt.max_rows = 60;
        Table t = tbtest::random_table(rng, opt);
        FormatId f = kAllFormats[rng.below(kAllFormats.size())];
        std::int64_t budget = 300 + static_cast<std::int64_t>(rng.below(2000));
        std::int64_t overhead = static_cast<std::int64_t>(rng.below(100));
        std::int64_t reserve = static_cast<std::int64_t>(rng.below(200));
        std::size_t oracle = tbtest::oracle_fit_rows(t, f, overhead, budget, reserve);
        if (oracle == SIZE_MAX || (t.n_rows() > 0 && oracle == 0)) {
            REQUIRE_THROWS_AS(fit_rows_to_budget(t, f, overhead, budget, reserve), BudgetError);
        } else {
            Table kept = fit_rows_to_budget(t, f, overhead, budget, reserve);
            REQUIRE(kept.n_rows() == oracle);
        }
    }
}

TEST_CASE("fit_rows_to_budget errors when even one row exceeds the budget") {
    std::vector<std::string> huge_row{std::string(100000, 'x')};
    Table t = Table::from_rows({"blob"}, {huge_row});
    REQUIRE_THROWS_AS(fit_rows_to_budget(t, FormatId::Json, 0, 4097, 256), BudgetError);
}

TEST_CASE("fit_rows_to_budget rejects budgets below the overhead") {
    REQUIRE_THROWS_AS(fit_rows_to_budget(t0(), FormatId::Json, 5000, 4097, 256), BudgetError);
}

TEST_CASE("Html retains no more rows than CommaSeparated at the same budget") {
    Rng rng(3141);
    for (int rep = 0; rep < 20; ++rep) {
        tbtest::TableGenOptions opt;
        opt.min_rows = 10;
        opt.max_rows = 50;
        opt.min_cols = 3;
        Table t = tbtest::random_table(rng, opt);
        const std::int64_t budget = 1200;
        auto rows_kept = [&](FormatId f) -> std::size_t {
            try {
                return fit_rows_to_budget(t, f, 0, budget, 256).n_rows();
            } catch (const BudgetError&) {
                return 0;
            }
        };
        REQUIRE(rows_kept(FormatId::Html) <= rows_kept(FormatId::CommaSeparated));
    }
}

TEST_CASE("navigation instances answer with the addressed cell") {
    auto batch = gen_fact_finding(TaskKind::Navigation, t0(), FormatId::Json,
                                  NoiseId::OriginalData, "ds", 4, 11);
    REQUIRE(batch.size() == 4);  // 2x2 table has exactly 4 targets
    for (const auto& inst : batch) {
        REQUIRE(inst.answer.is_fact());
        REQUIRE(inst.answer.accept_set.size() == 1);
        REQUIRE(inst.rendered_table == serialize(t0(), FormatId::Json));
    }
    bool found = false;
    for (const auto& inst : batch)
        if (inst.question.find("\"0\"") != std::string::npos &&
            inst.question.find("\"name\"") != std::string::npos) {
            REQUIRE(*inst.answer.accept_set.begin() == "alice");
            found = true;
        }
    REQUIRE(found);
}

TEST_CASE("column lookup answers admit every containing column") {
    auto batch = gen_fact_finding(TaskKind::ColumnLookup, t0(), FormatId::CommaSeparated,
                                  NoiseId::OriginalData, "ds", 10, 12);
    REQUIRE(batch.size() == 4);  // 4 distinct cell values
    for (const auto& inst : batch) {
        if (inst.question.find("\"30\"") != std::string::npos)
            REQUIRE(inst.answer.accept_set == std::set<std::string>{"age"});
    }

    Table two = Table::from_rows({"a", "b"}, {{"7", "7"}, {"x", "y"}});
    auto batch2 = gen_fact_finding(TaskKind::ColumnLookup, two, FormatId::Json,
                                   NoiseId::OriginalData, "ds", 10, 13);
    for (const auto& inst : batch2)
        if (inst.question.find("\"7\"") != std::string::npos)
            REQUIRE(inst.answer.accept_set == std::set<std::string>{"a", "b"});
}

TEST_CASE("row lookup answers admit every containing row label") {
    Table t = Table::from_rows({"a"}, {{"v"}, {"w"}, {"v"}});
    auto batch = gen_fact_finding(TaskKind::RowLookup, t, FormatId::Markdown,
                                  NoiseId::OriginalData, "ds", 10, 14);
    for (const auto& inst : batch)
        if (inst.question.find("\"v\"") != std::string::npos)
            REQUIRE(inst.answer.accept_set == std::set<std::string>{"0", "2"});
}

TEST_CASE("datatype lookup answers with the inferred dtype name") {
    auto batch = gen_fact_finding(TaskKind::DataTypeLookup, t0(), FormatId::DFLoader,
                                  NoiseId::OriginalData, "ds", 10, 15);
    REQUIRE(batch.size() == 2);
    for (const auto& inst : batch) {
        if (inst.question.find("\"age\"") != std::string::npos)
            REQUIRE(inst.answer.accept_set == std::set<std::string>{"int64"});
        if (inst.question.find("\"name\"") != std::string::npos)
            REQUIRE(inst.answer.accept_set == std::set<std::string>{"object"});
    }
}

TEST_CASE("generation on empty tables fails") {
    Table empty = Table::from_rows({"a"}, std::vector<std::vector<std::string>>{});
    REQUIRE_THROWS_AS(gen_fact_finding(TaskKind::Navigation, empty, FormatId::Json,
                                       NoiseId::OriginalData, "ds", 5, 1),
                      GenerationError);
    REQUIRE_THROWS_AS(gen_transformation(TaskKind::TableTranspose, empty, FormatId::Json,
                                         NoiseId::OriginalData, "ds", 5, 1),
                      GenerationError);
}

TEST_CASE("transpose task gold is the transposed table") {
    auto batch = gen_transformation(TaskKind::TableTranspose, t0(), FormatId::Json,
                                    NoiseId::OriginalData, "ds", 2, 16);
    REQUIRE(batch.size() == 2);
    const Table& gold = *batch[0].answer.gold_table;
    REQUIRE(gold.column_names() == std::vector<std::string>{"0", "1"});
    REQUIRE(gold.row_labels() == std::vector<std::string>{"name", "age"});
    REQUIRE(batch[0].rendered_table == serialize(t0(), FormatId::Json));
}

TEST_CASE("reorder task gold follows the permutation in the question") {
    auto batch = gen_transformation(TaskKind::TableColumnReorder, t0(), FormatId::CommaSeparated,
                                    NoiseId::OriginalData, "ds", 5, 17);
    for (const auto& inst : batch) {
        const Table& gold = *inst.answer.gold_table;
        // the only non-identity permutation of 2 columns
        REQUIRE(gold.column_names() == std::vector<std::string>{"age", "name"});
        REQUIRE(gold.cell(0, 0) == "30");
        REQUIRE(gold.cell(0, 1) == "alice");
        REQUIRE(gold.cell(1, 0) == "25");
        REQUIRE(gold.cell(1, 1) == "bob");
        REQUIRE(inst.question.find("\"age\", \"name\"") != std::string::npos);
    }
    Table one = Table::from_rows({"only"}, {{"1"}});
    REQUIRE_THROWS_AS(gen_transformation(TaskKind::TableColumnReorder, one, FormatId::Json,
                                         NoiseId::OriginalData, "ds", 2, 18),
                      GenerationError);
}

TEST_CASE("reconstruction renders newline-joined key-value rows") {
    auto batch = gen_transformation(TaskKind::TableReconstruction, t0(), FormatId::Markdown,
                                    NoiseId::OriginalData, "ds", 1, 19);
    REQUIRE(batch.size() == 1);
    REQUIRE(batch[0].rendered_table == "name: alice, age: 30\nname: bob, age: 25");
    REQUIRE(batch[0].answer.gold_table->content_equals(t0()));
    REQUIRE(*batch[0].answer.required_format == FormatId::Markdown);
}

TEST_CASE("build_prompt is deterministic and validates templates") {
    auto batch = gen_fact_finding(TaskKind::Navigation, t0(), FormatId::Json,
                                  NoiseId::OriginalData, "ds", 1, 20);
    std::string a = build_prompt(batch[0]);
    std::string b = build_prompt(batch[0]);
    REQUIRE(a == b);
    REQUIRE(a.find(serialize(t0(), FormatId::Json)) != std::string::npos);
    REQUIRE(a.find(batch[0].question) != std::string::npos);
    REQUIRE(a.find("Answer with the value only.") != std::string::npos);
    REQUIRE_THROWS_AS(build_prompt(batch[0], "missing-template"), ConfigError);
}

TEST_CASE("every generated prompt respects the token budget") {
    Rng rng(1618);
    BudgetPolicy budget;
    budget.token_budget = 900;  // small budget to force truncation
    for (int rep = 0; rep < 25; ++rep) {
        tbtest::TableGenOptions opt;
        opt.min_rows = 5;
        opt.max_rows = 60;
        opt.nasty_content = false;
        Table t = tbtest::random_table(rng, opt);
        FormatId f = kAllFormats[rng.below(kAllFormats.size())];
        for (TaskKind kind : kAllTasks) {
            Table fitted;
            try {
                fitted = fit_for_task(kind, t, f, budget);
            } catch (const BudgetError&) {
                continue;
            }
            std::vector<TaskInstance> batch;
            try {
                batch = is_fact_finding(kind)
                            ? gen_fact_finding(kind, fitted, f, NoiseId::OriginalData, "ds", 3,
                                               rng.next())
                            : gen_transformation(kind, fitted, f, NoiseId::OriginalData, "ds", 2,
                                                 rng.next());
            } catch (const GenerationError&) {
                continue;
            }
            for (const auto& inst : batch) {
                std::int64_t tokens = token_estimate(build_prompt(inst));
                REQUIRE(tokens <= budget.token_budget - budget.reserve_for(kind));
            }
        }
    }
}

TEST_CASE("fact-finding answers re-derive from the rendered table") {
    Rng rng(271828);
    int checked = 0;
    for (int rep = 0; rep < 15; ++rep) {
        tbtest::TableGenOptions opt;
        opt.max_rows = 12;
        opt.max_cols = 6;
        opt.min_cols = 2;
        opt.min_rows = 2;
        // quote-free content so the test can read targets back out of the
        // question text; quoting robustness is covered by the formats tests
        opt.nasty_content = false;
        Table base = tbtest::random_table(rng, opt);
        NoiseId noise = kAllNoises[rng.below(kAllNoises.size())];
        Table noisy;
        try {
            noisy = apply_noise({noise, rng.next()}, base);
        } catch (const NotApplicableError&) {
            continue;
        }
        FormatId f = kAllFormats[rng.below(kAllFormats.size())];
        for (TaskKind kind : {TaskKind::Navigation, TaskKind::ColumnLookup, TaskKind::RowLookup,
                              TaskKind::DataTypeLookup}) {
            auto batch = gen_fact_finding(kind, noisy, f, noise, "ds", 5, rng.next());
            for (const auto& inst : batch) {
                Table seen = parse(inst.rendered_table, f);
                REQUIRE(seen.content_equals(noisy));
                // extract the quoted target(s) from the question text
                auto quoted_parts = [](const std::string& q) {
                    std::vector<std::string> out;
                    std::size_t pos = 0;
                    while ((pos = q.find('"', pos)) != std::string::npos) {
                        std::size_t end = q.find('"', pos + 1);
                        if (end == std::string::npos) break;
                        out.push_back(q.substr(pos + 1, end - pos - 1));
                        pos = end + 1;
                    }
                    return out;
                };
                auto parts = quoted_parts(inst.question);
                std::set<std::string> rederived;
                if (kind == TaskKind::Navigation) {
                    auto i = seen.row_index(parts.at(0));
                    auto j = seen.column_index(parts.at(1));
                    REQUIRE(i);
                    REQUIRE(j);
                    rederived.insert(normalize_answer(seen.cell(*i, *j)));
                } else if (kind == TaskKind::ColumnLookup) {
                    for (std::size_t j = 0; j < seen.n_cols(); ++j)
                        for (std::size_t i = 0; i < seen.n_rows(); ++i)
                            if (seen.cell(i, j) == parts.at(0))
                                rederived.insert(normalize_answer(seen.column_names()[j]));
                } else if (kind == TaskKind::RowLookup) {
                    for (std::size_t i = 0; i < seen.n_rows(); ++i)
                        for (std::size_t j = 0; j < seen.n_cols(); ++j)
                            if (seen.cell(i, j) == parts.at(0))
                                rederived.insert(normalize_answer(seen.row_labels()[i]));
                } else {
                    auto j = seen.column_index(parts.at(0));
                    REQUIRE(j);
                    rederived.insert(std::string(dtype_name(seen.dtype(*j))));
                }
                REQUIRE(rederived == inst.answer.accept_set);
                ++checked;
            }
        }
    }
    REQUIRE(checked > 100);
}
