#pragma once

#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tablebench/model_client.hpp"
#include "tablebench/noise.hpp"
#include "tablebench/scoring.hpp"
#include "tablebench/stats.hpp"
#include "tablebench/taskgen.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::vector<std::string> dataset_paths;
    std::vector<FormatId> formats{kAllFormats.begin(), kAllFormats.end()};
    std::vector<NoiseId> noises{kAllNoises.begin(), kAllNoises.end()};
    std::vector<TaskKind> tasks{kAllTasks.begin(), kAllTasks.end()};
    std::size_t fact_count = 100;
    std::size_t transform_count = 25;
    std::size_t html_fact_count = 50;  // token limits make HTML far more expensive
    int fact_completions = 15;
    int transform_completions = 5;
    std::uint64_t seed = 1;
    double alpha = 0.01;
    BudgetPolicy budget;
    BackendConfig backend;
    std::string out_dir = "out";
    std::string template_id = "default";
    int workers = 4;
    bool csv_has_header = true;
    bool bold_max = false;

    std::size_t count_for(TaskKind k, FormatId f) const {
        if (!is_fact_finding(k)) return transform_count;
        if (f == FormatId::Html || f == FormatId::HtmlNoSpace) return html_fact_count;
        return fact_count;
    }

    int completions_for(TaskKind k) const {
        return is_fact_finding(k) ? fact_completions : transform_completions;
    }
};

namespace detail {

template <typename Id, typename Lookup>
std::vector<Id> parse_id_list(const nlohmann::json& arr, Lookup lookup, const char* what) {
    std::vector<Id> out;
    for (const auto& v : arr) {
        const std::string name = v.get<std::string>();
        auto id = lookup(name);
        if (!id) throw ConfigError(std::string("unknown ") + what + " \"" + name + "\"");
        out.push_back(*id);
    }
    if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
    return out;
}

}  // namespace detail

/// Loads a JSON run configuration. Missing fields keep their defaults.
inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("datasets")) cfg.dataset_paths = j["datasets"].get<std::vector<std::string>>();
    if (j.contains("formats"))
        cfg.formats = detail::parse_id_list<FormatId>(j["formats"], format_from_name, "format");
    if (j.contains("noises"))
        cfg.noises = detail::parse_id_list<NoiseId>(j["noises"], noise_from_name, "noise");
    if (j.contains("tasks"))
        cfg.tasks = detail::parse_id_list<TaskKind>(j["tasks"], task_from_name, "task");
    cfg.fact_count = j.value("fact_count", cfg.fact_count);
    cfg.transform_count = j.value("transform_count", cfg.transform_count);
    cfg.html_fact_count = j.value("html_fact_count", cfg.html_fact_count);
    if (j.contains("completions")) {
        cfg.fact_completions = j["completions"].value("fact", cfg.fact_completions);
        cfg.transform_completions = j["completions"].value("transform", cfg.transform_completions);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.alpha = j.value("alpha", cfg.alpha);
    if (j.contains("budget")) {
        const auto& b = j["budget"];
        cfg.budget.token_budget = b.value("token_budget", cfg.budget.token_budget);
        cfg.budget.fact_reserve = b.value("fact_reserve", cfg.budget.fact_reserve);
        cfg.budget.transform_reserve = b.value("transform_reserve", cfg.budget.transform_reserve);
    }
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        cfg.backend.kind = b.value("kind", cfg.backend.kind);
        cfg.backend.corrupt_rate = b.value("corrupt_rate", cfg.backend.corrupt_rate);
        cfg.backend.seed = b.value("seed", cfg.backend.seed);
        cfg.backend.url = b.value("url", cfg.backend.url);
        cfg.backend.path = b.value("path", cfg.backend.path);
        cfg.backend.model = b.value("model", cfg.backend.model);
        cfg.backend.api_key_env = b.value("api_key_env", cfg.backend.api_key_env);
        cfg.backend.cache_path = b.value("cache_path", cfg.backend.cache_path);
        cfg.backend.max_retries = b.value("max_retries", cfg.backend.max_retries);
        cfg.backend.backoff_ms = b.value("backoff_ms", cfg.backend.backoff_ms);
        cfg.backend.timeout_s = b.value("timeout_s", cfg.backend.timeout_s);
        cfg.backend.tokens_per_minute = b.value("tokens_per_minute", cfg.backend.tokens_per_minute);
        cfg.backend.max_in_flight = b.value("max_in_flight", cfg.backend.max_in_flight);
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.template_id = j.value("template", cfg.template_id);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.csv_has_header = j.value("csv_has_header", cfg.csv_has_header);
    cfg.bold_max = j.value("bold_max", cfg.bold_max);
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// JSONL persistence
// ---------------------------------------------------------------------------

inline nlohmann::json table_to_json(const Table& t) {
    return nlohmann::json{{"columns", t.column_names()},
                          {"labels", t.row_labels()},
                          {"cells", t.cells()}};
}

inline Table table_from_json(const nlohmann::json& j) {
    return Table::from_rows(j.at("columns").get<std::vector<std::string>>(),
                            j.at("labels").get<std::vector<std::string>>(),
                            j.at("cells").get<std::vector<std::vector<std::string>>>());
}

inline nlohmann::json instance_to_json(const TaskInstance& inst) {
    nlohmann::json answer;
    if (inst.answer.is_fact()) {
        answer = nlohmann::json{
            {"accept_set", std::vector<std::string>(inst.answer.accept_set.begin(),
                                                    inst.answer.accept_set.end())}};
    } else {
        answer = nlohmann::json{{"gold_table", table_to_json(*inst.answer.gold_table)},
                                {"required_format",
                                 std::string(format_name(*inst.answer.required_format))}};
    }
    return nlohmann::json{{"id", inst.id},
                          {"kind", std::string(task_name(inst.kind))},
                          {"dataset", inst.dataset_id},
                          {"format", std::string(format_name(inst.format_id))},
                          {"noise", std::string(noise_name(inst.noise_id))},
                          {"seed", inst.seed},
                          {"rendered_table", inst.rendered_table},
                          {"question", inst.question},
                          {"answer", answer}};
}

inline TaskInstance instance_from_json(const nlohmann::json& j) {
    TaskInstance inst;
    inst.id = j.at("id").get<std::string>();
    auto kind = task_from_name(j.at("kind").get<std::string>());
    auto format = format_from_name(j.at("format").get<std::string>());
    auto noise = noise_from_name(j.at("noise").get<std::string>());
    if (!kind || !format || !noise) throw StructuralError("instance has unknown ids: " + inst.id);
    inst.kind = *kind;
    inst.format_id = *format;
    inst.noise_id = *noise;
    inst.dataset_id = j.at("dataset").get<std::string>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.rendered_table = j.at("rendered_table").get<std::string>();
    inst.question = j.at("question").get<std::string>();
    const auto& answer = j.at("answer");
    if (answer.contains("accept_set")) {
        auto entries = answer.at("accept_set").get<std::vector<std::string>>();
        inst.answer.accept_set.insert(entries.begin(), entries.end());
    } else {
        inst.answer.gold_table = table_from_json(answer.at("gold_table"));
        auto rf = format_from_name(answer.at("required_format").get<std::string>());
        if (!rf) throw StructuralError("instance has unknown required_format: " + inst.id);
        inst.answer.required_format = *rf;
    }
    return inst;
}

/// One evaluated instance: completions, scores, provenance.
struct RunRecord {
    std::string instance_id;
    std::vector<std::string> completions;
    ScoreRecord score;
    bool failed = false;
    std::string error;
    std::string backend_id;
    std::string started_at;
    std::string finished_at;
};

inline nlohmann::json record_to_json(const RunRecord& rec) {
    nlohmann::json j{{"id", rec.instance_id},
                     {"completions", rec.completions},
                     {"verdicts", nullptr},
                     {"precision", nullptr},
                     {"recall", nullptr},
                     {"f1", nullptr},
                     {"pass1", nullptr},
                     {"backend", rec.backend_id},
                     {"started_at", rec.started_at},
                     {"finished_at", rec.finished_at}};
    if (rec.failed) {
        j["error"] = rec.error;
        return j;
    }
    if (rec.score.fact) {
        j["verdicts"] = rec.score.verdicts;
        j["pass1"] = rec.score.pass1;
    } else {
        j["precision"] = rec.score.precision;
        j["recall"] = rec.score.recall;
        j["f1"] = rec.score.f1;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Instance id bookkeeping (report joins on structured ids)
// ---------------------------------------------------------------------------

struct InstanceKey {
    std::string dataset;
    FormatId format = FormatId::Json;
    NoiseId noise = NoiseId::OriginalData;
    TaskKind kind = TaskKind::Navigation;
};

inline std::optional<InstanceKey> parse_instance_id(std::string_view id) {
    // dataset:Format:Noise:Task:ordinal — dataset may itself contain ':'
    std::vector<std::string_view> parts;
    std::size_t end = id.size();
    for (int i = 0; i < 4; ++i) {
        std::size_t colon = id.rfind(':', end == 0 ? std::string_view::npos : end - 1);
        if (colon == std::string_view::npos) return std::nullopt;
        parts.push_back(id.substr(colon + 1, end - colon - 1));
        end = colon;
    }
    InstanceKey key;
    key.dataset = std::string(id.substr(0, end));
    auto kind = task_from_name(parts[1]);
    auto noise = noise_from_name(parts[2]);
    auto format = format_from_name(parts[3]);
    if (!kind || !noise || !format) return std::nullopt;
    key.kind = *kind;
    key.noise = *noise;
    key.format = *format;
    return key;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateOutcome {
    std::size_t instances = 0;
    std::vector<std::string> warnings;
};

/// Emits the full benchmark for every dataset x format x noise x task
/// combination into `out` (one JSON object per line). Inapplicable or
/// unfittable combinations are skipped with a warning. Deterministic under a
/// fixed config.
inline GenerateOutcome generate_benchmark(const RunConfig& cfg, std::ostream& out,
                                          const std::function<Table(const std::string&)>& loader) {
    GenerateOutcome outcome;
    for (const std::string& path : cfg.dataset_paths) {
        const std::string dataset_id = std::filesystem::path(path).stem().string();
        Table table = drop_null_rows(loader(path));
        if (table.n_rows() == 0)
            throw ConfigError("dataset \"" + dataset_id + "\" has no rows after null removal");
        for (NoiseId noise : cfg.noises) {
            Table noisy;
            try {
                NoiseOp op{noise, seed_combine(seed_combine(cfg.seed, dataset_id),
                                               noise_name(noise))};
                noisy = apply_noise(op, table);
            } catch (const NotApplicableError& e) {
                outcome.warnings.push_back("skip " + dataset_id + "/" +
                                           std::string(noise_name(noise)) + ": " + e.what());
                continue;
            }
            for (FormatId format : cfg.formats) {
                for (TaskKind kind : cfg.tasks) {
                    std::uint64_t batch_seed = cfg.seed;
                    batch_seed = seed_combine(batch_seed, dataset_id);
                    batch_seed = seed_combine(batch_seed, format_name(format));
                    batch_seed = seed_combine(batch_seed, noise_name(noise));
                    batch_seed = seed_combine(batch_seed, task_name(kind));
                    const std::size_t count = cfg.count_for(kind, format);
                    std::vector<TaskInstance> batch;
                    try {
                        Table fitted =
                            fit_for_task(kind, noisy, format, cfg.budget, cfg.template_id);
                        batch = is_fact_finding(kind)
                                    ? gen_fact_finding(kind, fitted, format, noise, dataset_id,
                                                       count, batch_seed)
                                    : gen_transformation(kind, fitted, format, noise, dataset_id,
                                                         count, batch_seed);
                    } catch (const BudgetError& e) {
                        outcome.warnings.push_back(
                            "skip " + dataset_id + "/" + std::string(format_name(format)) + "/" +
                            std::string(noise_name(noise)) + "/" + std::string(task_name(kind)) +
                            ": " + e.what());
                        continue;
                    } catch (const GenerationError& e) {
                        outcome.warnings.push_back(
                            "skip " + dataset_id + "/" + std::string(format_name(format)) + "/" +
                            std::string(noise_name(noise)) + "/" + std::string(task_name(kind)) +
                            ": " + e.what());
                        continue;
                    }
                    if (batch.size() < count)
                        outcome.warnings.push_back(
                            "short batch " + dataset_id + "/" + std::string(format_name(format)) +
                            "/" + std::string(noise_name(noise)) + "/" +
                            std::string(task_name(kind)) + ": " + std::to_string(batch.size()) +
                            "/" + std::to_string(count) + " targets available");
                    for (const TaskInstance& inst : batch) {
                        out << instance_to_json(inst).dump() << "\n";
                        ++outcome.instances;
                    }
                }
            }
        }
    }
    return outcome;
}

inline Table default_loader(const std::string& path, bool has_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset \"" + path + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_csv(buf.str(), has_header);
}

inline std::vector<TaskInstance> read_benchmark(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open benchmark file \"" + path + "\"");
    std::vector<TaskInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(instance_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw StructuralError("benchmark line " + std::to_string(line_no) +
                                  " is not valid JSON: " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

inline std::string now_iso_utc() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunOutcome {
    std::size_t evaluated = 0;
    std::size_t skipped = 0;  // already present in the results file
    std::size_t failed = 0;
};

/// Evaluates every instance against the backend and appends one result line
/// per instance, in benchmark order. Worker fan-out is bounded by
/// cfg.backend.max_in_flight; the writer commits strictly in order so an
/// interrupted run leaves a clean prefix. With resume=true, instances already
/// scored in the results file are skipped; failed rows are retried.
inline RunOutcome run_benchmark(const std::vector<TaskInstance>& instances, const RunConfig& cfg,
                                Backend& backend, const std::string& results_path,
                                bool resume = false) {
    std::set<std::string> done;
    if (resume && std::filesystem::exists(results_path)) {
        // keep only intact, successfully scored lines; drop everything else
        std::ifstream in(results_path);
        std::string line;
        std::vector<std::string> kept;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                nlohmann::json j = nlohmann::json::parse(line);
                if (j.contains("error")) continue;  // retry failures
                done.insert(j.at("id").get<std::string>());
                kept.push_back(line);
            } catch (const nlohmann::json::exception&) {
                continue;  // torn tail from a killed run
            }
        }
        in.close();
        std::ofstream rewrite(results_path, std::ios::trunc);
        for (const auto& l : kept) rewrite << l << "\n";
    } else {
        std::ofstream truncate(results_path, std::ios::trunc);
    }

    const bool fixed_clock = backend.deterministic();
    const std::string epoch = "1970-01-01T00:00:00Z";

    std::mutex mu;
    std::condition_variable cv;
    std::map<std::size_t, std::optional<RunRecord>> pending;  // nullopt = skipped
    std::atomic<std::size_t> next{0};
    RunOutcome outcome;

    auto evaluate = [&](const TaskInstance& inst) -> std::optional<RunRecord> {
        if (done.count(inst.id)) return std::nullopt;
        RunRecord rec;
        rec.instance_id = inst.id;
        rec.backend_id = backend.id();
        rec.started_at = fixed_clock ? epoch : now_iso_utc();
        CompletionRequest req;
        req.prompt = build_prompt(inst, cfg.template_id);
        req.n = cfg.completions_for(inst.kind);
        req.temperature = 0.0;
        req.max_tokens = static_cast<int>(cfg.budget.reserve_for(inst.kind));
        req.model = cfg.backend.model;
        try {
            rec.completions = backend.complete(req, &inst);
            rec.score = judge(inst, rec.completions);
        } catch (const TransportError& e) {
            rec.failed = true;
            rec.error = e.what();
        } catch (const CacheMissError& e) {
            rec.failed = true;
            rec.error = e.what();
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = std::string("internal: ") + e.what();
        }
        rec.finished_at = fixed_clock ? epoch : now_iso_utc();
        return rec;
    };

    const int n_workers =
        std::max(1, std::min<int>(cfg.backend.max_in_flight,
                                  static_cast<int>(std::max<std::size_t>(instances.size(), 1))));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= instances.size()) return;
                std::optional<RunRecord> rec = evaluate(instances[i]);
                {
                    std::lock_guard lock(mu);
                    pending[i] = std::move(rec);
                }
                cv.notify_one();
            }
        });
    }

    std::ofstream out(results_path, std::ios::app);
    std::size_t cursor = 0;
    {
        std::unique_lock lock(mu);
        while (cursor < instances.size()) {
            cv.wait(lock, [&] { return pending.count(cursor) > 0; });
            std::optional<RunRecord> rec = std::move(pending[cursor]);
            pending.erase(cursor);
            ++cursor;
            if (!rec) {
                ++outcome.skipped;
                continue;
            }
            if (rec->failed) {
                ++outcome.failed;
                std::cerr << "instance " << rec->instance_id << " failed: " << rec->error << "\n";
            }
            ++outcome.evaluated;
            lock.unlock();
            out << record_to_json(*rec).dump() << "\n";
            out.flush();
            lock.lock();
        }
    }
    for (auto& w : workers) w.join();
    return outcome;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ResultRow {
    InstanceKey key;
    double unit_score = 0.0;  // pass1 for fact rows, mean F1 for transform rows
    bool fact = true;
    bool failed = false;
};

inline std::vector<ResultRow> read_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open results file \"" + path + "\"");
    std::vector<ResultRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            continue;  // torn tail
        }
        auto key = parse_instance_id(j.at("id").get<std::string>());
        if (!key) continue;
        ResultRow row;
        row.key = *key;
        row.fact = is_fact_finding(key->kind);
        if (j.contains("error") && !j["error"].is_null()) {
            row.failed = true;
        } else if (row.fact) {
            if (!j.contains("pass1") || j["pass1"].is_null()) row.failed = true;
            else row.unit_score = j["pass1"].get<double>();
        } else {
            if (!j.contains("f1") || j["f1"].is_null()) row.failed = true;
            else row.unit_score = j["f1"].get<double>();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace detail {

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string fmt_delta(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", v);
    std::string s = buf;
    if (s == "+0.00" || s == "-0.00") return "0.00";
    return s;
}

/// Markdown pipe table with aligned columns.
inline std::string render_markdown_table(const std::vector<std::string>& header,
                                         const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t j = 0; j < header.size(); ++j) width[j] = header[j].size();
    for (const auto& row : rows)
        for (std::size_t j = 0; j < row.size() && j < width.size(); ++j)
            width[j] = std::max(width[j], row[j].size());
    auto pad = [&](const std::string& s, std::size_t w) {
        return s + std::string(w - s.size(), ' ');
    };
    std::string out = "|";
    for (std::size_t j = 0; j < header.size(); ++j) out += " " + pad(header[j], width[j]) + " |";
    out += "\n|";
    for (std::size_t j = 0; j < header.size(); ++j) out += " " + std::string(width[j], '-') + " |";
    for (const auto& row : rows) {
        out += "\n|";
        for (std::size_t j = 0; j < header.size(); ++j)
            out += " " + pad(j < row.size() ? row[j] : "", width[j]) + " |";
    }
    out += "\n";
    return out;
}

}  // namespace detail

/// Report row/column orders, matching the published table layout.
inline const std::vector<FormatId>& report_format_order() {
    static const std::vector<FormatId> order = {
        FormatId::CommaSeparated, FormatId::DFLoader, FormatId::DataMatrix, FormatId::Json,
        FormatId::Markdown,       FormatId::TabSeparated, FormatId::Html,   FormatId::HtmlNoSpace};
    return order;
}

inline const std::vector<TaskKind>& report_fact_tasks() {
    static const std::vector<TaskKind> order = {TaskKind::ColumnLookup, TaskKind::DataTypeLookup,
                                                TaskKind::Navigation, TaskKind::RowLookup};
    return order;
}

inline const std::vector<TaskKind>& report_transform_tasks() {
    static const std::vector<TaskKind> order = {TaskKind::TableColumnReorder,
                                                TaskKind::TableReconstruction,
                                                TaskKind::TableTranspose};
    return order;
}

struct Report {
    // absolute means (percent) on the OriginalData condition
    std::map<FormatId, std::map<TaskKind, double>> absolute_fact;
    std::map<FormatId, std::map<TaskKind, double>> absolute_transform;
    // per (format, noise, task): delta in percentage points vs OriginalData
    std::map<FormatId, std::map<NoiseId, std::map<TaskKind, DeltaCell>>> delta_fact;
    std::map<FormatId, std::map<NoiseId, std::map<TaskKind, DeltaCell>>> delta_transform;
    std::vector<std::string> warnings;
    std::string markdown;
    std::map<std::string, std::string> csv_files;  // name -> contents
    std::size_t total_rows = 0;
    std::size_t failed_rows = 0;
};

/// Builds the report tables from result rows: absolute per-format x per-task
/// grids on the OriginalData condition (with an Overall column equal to the
/// arithmetic mean of the task columns) and per-noise delta tables with "**"
/// marks where p < alpha / m.
inline Report build_report(const std::vector<ResultRow>& rows, double alpha = 0.01,
                           bool bold_max = false) {
    Report rep;
    rep.total_rows = rows.size();

    // pool per-instance unit scores by (format, noise, kind)
    std::map<FormatId, std::map<NoiseId, std::map<TaskKind, ScoreSamples>>> samples;
    std::set<NoiseId> noises_seen;
    for (const ResultRow& row : rows) {
        if (row.failed) {
            ++rep.failed_rows;
            continue;
        }
        samples[row.key.format][row.key.noise][row.key.kind].per_instance.push_back(
            row.unit_score);
        noises_seen.insert(row.key.noise);
    }
    int m = 0;
    for (NoiseId n : noises_seen)
        if (n != NoiseId::OriginalData) ++m;
    if (m == 0) m = 1;

    for (auto& [format, by_noise] : samples) {
        auto base_it = by_noise.find(NoiseId::OriginalData);
        if (base_it == by_noise.end()) {
            rep.warnings.push_back("no OriginalData baseline for format " +
                                   std::string(format_name(format)) +
                                   "; absolute and delta tables omitted");
            continue;
        }
        for (auto& [kind, scores] : base_it->second) {
            double mean = scores.mean_pct();
            if (is_fact_finding(kind)) rep.absolute_fact[format][kind] = mean;
            else rep.absolute_transform[format][kind] = mean;
        }
        for (auto& [noise, by_kind] : by_noise) {
            if (noise == NoiseId::OriginalData) continue;
            for (auto& [kind, scores] : by_kind) {
                auto base_kind = base_it->second.find(kind);
                if (base_kind == base_it->second.end()) {
                    rep.warnings.push_back("no baseline for " +
                                           std::string(format_name(format)) + "/" +
                                           std::string(task_name(kind)) + "; delta omitted");
                    continue;
                }
                DeltaCell cell;
                cell.delta_pct = scores.mean_pct() - base_kind->second.mean_pct();
                Comparison c =
                    compare(scores.per_instance, base_kind->second.per_instance, alpha, m);
                cell.p_value = c.p_value;
                cell.significant = c.significant;
                if (is_fact_finding(kind)) rep.delta_fact[format][noise][kind] = cell;
                else rep.delta_transform[format][noise][kind] = cell;
            }
        }
    }

    // ----- rendering -----
    using detail::fmt2;
    using detail::fmt_delta;
    std::string md;
    std::string csv;

    auto absolute_block = [&](const char* title,
                              const std::map<FormatId, std::map<TaskKind, double>>& grid,
                              const std::vector<TaskKind>& task_order, const char* csv_name) {
        if (grid.empty()) return;
        md += std::string("## ") + title + "\n\n";
        std::vector<std::string> header{"Table Format"};
        for (TaskKind k : task_order) header.push_back(std::string(task_name(k)) + "Tests");
        header.push_back("Overall");

        // per-column maxima for optional bold marks
        std::map<TaskKind, double> col_max;
        std::map<FormatId, double> overall;
        double overall_max = -1;
        for (const auto& [format, cells] : grid) {
            double sum = 0;
            std::size_t n = 0;
            for (TaskKind k : task_order) {
                auto it = cells.find(k);
                if (it == cells.end()) continue;
                sum += it->second;
                ++n;
                auto [mit, inserted] = col_max.try_emplace(k, it->second);
                if (!inserted) mit->second = std::max(mit->second, it->second);
            }
            overall[format] = n ? sum / static_cast<double>(n) : 0.0;
            overall_max = std::max(overall_max, overall[format]);
        }

        std::vector<std::vector<std::string>> md_rows;
        csv = "format,task,mean\n";
        for (FormatId format : report_format_order()) {
            auto fit = grid.find(format);
            if (fit == grid.end()) continue;
            std::vector<std::string> row{std::string(format_name(format))};
            for (TaskKind k : task_order) {
                auto it = fit->second.find(k);
                if (it == fit->second.end()) {
                    row.push_back("-");
                    continue;
                }
                std::string cell = fmt2(it->second);
                if (bold_max && it->second == col_max[k]) cell = "**" + cell + "**";
                row.push_back(cell);
                csv += std::string(format_name(format)) + "," + std::string(task_name(k)) +
                       "Tests," + fmt2(it->second) + "\n";
            }
            std::string cell = fmt2(overall.at(format));
            if (bold_max && overall.at(format) == overall_max) cell = "**" + cell + "**";
            row.push_back(cell);
            csv += std::string(format_name(format)) + ",Overall," + fmt2(overall.at(format)) +
                   "\n";
            md_rows.push_back(std::move(row));
        }
        md += detail::render_markdown_table(header, md_rows);
        md += "\n";
        rep.csv_files[csv_name] = csv;
    };

    absolute_block("Average pass@1 for fact-finding tasks", rep.absolute_fact,
                   report_fact_tasks(), "fact_absolute.csv");
    absolute_block("Average F1 for transformation tasks", rep.absolute_transform,
                   report_transform_tasks(), "transform_absolute.csv");

    auto delta_block =
        [&](const char* title,
            const std::map<FormatId, std::map<NoiseId, std::map<TaskKind, DeltaCell>>>& grid,
            const std::map<FormatId, std::map<TaskKind, double>>& absolute,
            const std::vector<TaskKind>& task_order, const char* csv_name) {
            if (grid.empty() && absolute.empty()) return;
            md += std::string("## ") + title + "\n\n";
            md += "Statistically significant deltas (p < alpha/m) are marked with \"**\".\n\n";
            csv = "format,noise,task,delta,p_value,significant\n";
            for (FormatId format : report_format_order()) {
                auto ait = absolute.find(format);
                if (ait == absolute.end()) continue;
                md += std::string("### ") + std::string(format_name(format)) + "\n\n";
                std::vector<std::string> header{"Table Manipulation"};
                for (TaskKind k : task_order)
                    header.push_back(std::string(task_name(k)) + "Tests");
                std::vector<std::vector<std::string>> md_rows;
                std::vector<std::string> base_row{"OriginalData"};
                for (TaskKind k : task_order) {
                    auto it = ait->second.find(k);
                    base_row.push_back(it == ait->second.end() ? "-" : fmt2(it->second));
                }
                md_rows.push_back(std::move(base_row));
                auto git = grid.find(format);
                if (git != grid.end()) {
                    for (NoiseId noise : kAllNoises) {
                        auto nit = git->second.find(noise);
                        if (nit == git->second.end()) continue;
                        std::vector<std::string> row{std::string(noise_name(noise))};
                        for (TaskKind k : task_order) {
                            auto cit = nit->second.find(k);
                            if (cit == nit->second.end()) {
                                row.push_back("-");
                                continue;
                            }
                            std::string cell = fmt_delta(cit->second.delta_pct);
                            if (cit->second.significant) cell += "**";
                            row.push_back(cell);
                            csv += std::string(format_name(format)) + "," +
                                   std::string(noise_name(noise)) + "," +
                                   std::string(task_name(k)) + "Tests," +
                                   fmt_delta(cit->second.delta_pct) + "," +
                                   fmt2(cit->second.p_value) + "," +
                                   (cit->second.significant ? "true" : "false") + "\n";
                        }
                        md_rows.push_back(std::move(row));
                    }
                }
                md += detail::render_markdown_table(header, md_rows);
                md += "\n";
            }
            rep.csv_files[csv_name] = csv;
        };

    delta_block("Average pass@1 delta from original to noisy (fact-finding)", rep.delta_fact,
                rep.absolute_fact, report_fact_tasks(), "fact_delta.csv");
    delta_block("Average F1 delta from original to noisy (transformation)", rep.delta_transform,
                rep.absolute_transform, report_transform_tasks(), "transform_delta.csv");

    if (rep.failed_rows > 0)
        rep.warnings.push_back(std::to_string(rep.failed_rows) + " of " +
                               std::to_string(rep.total_rows) +
                               " result rows failed and were excluded");
    if (!rep.warnings.empty()) {
        md += "## Coverage notes\n\n";
        for (const auto& w : rep.warnings) md += "- " + w + "\n";
    }
    rep.markdown = md;
    return rep;
}

inline void write_report_files(const Report& rep, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream md(std::filesystem::path(out_dir) / "report.md");
    md << rep.markdown;
    for (const auto& [name, contents] : rep.csv_files) {
        std::ofstream csv(std::filesystem::path(out_dir) / name);
        csv << contents;
    }
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::string_view kSelftestFixtureA =
    "city,country,population,area_km2,coastal\n"
    "Lisbon,Portugal,544851,100.05,True\n"
    "Madrid,Spain,3223334,604.3,False\n"
    "Oslo,Norway,709037,454.0,True\n"
    "Bern,Switzerland,133883,51.6,False\n"
    "Dublin,Ireland,554554,115.0,True\n"
    "Prague,Czechia,1309000,496.0,False\n";

inline constexpr std::string_view kSelftestFixtureB =
    "instrument,family,strings,fretted\n"
    "violin,string,4,False\n"
    "guitar,string,6,True\n"
    "cello,string,4,False\n"
    "banjo,string,5,True\n"
    "harp,string,47,False\n";

}  // namespace detail

/// End-to-end smoke check: generate a small benchmark over two embedded
/// fixtures, run it against the perfect oracle, and verify that every report
/// cell is 100.00 with all deltas at zero. Prints one line per check.
inline bool run_selftest(std::ostream& log) {
    RunConfig cfg;
    cfg.dataset_paths = {"fixture_a", "fixture_b"};
    cfg.fact_count = 4;
    cfg.transform_count = 2;
    cfg.html_fact_count = 3;
    cfg.backend.kind = "perfect_oracle";

    auto loader = [](const std::string& path) {
        return load_csv(path == "fixture_a" ? detail::kSelftestFixtureA
                                            : detail::kSelftestFixtureB);
    };

    bool all_ok = true;
    auto check = [&](bool ok, const std::string& what) {
        log << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
        all_ok = all_ok && ok;
    };

    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / ("tablebench-selftest-" +
                                                std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string bench_path = (dir / "benchmark.jsonl").string();
    const std::string results_path = (dir / "results.jsonl").string();

    std::size_t instances = 0;
    {
        std::ofstream out(bench_path);
        GenerateOutcome gen = generate_benchmark(cfg, out, loader);
        instances = gen.instances;
    }
    check(instances > 0, "generate: " + std::to_string(instances) + " instances");

    std::vector<TaskInstance> bench = read_benchmark(bench_path);
    check(bench.size() == instances, "benchmark file reads back completely");

    auto backend = make_backend(cfg.backend);
    RunOutcome run = run_benchmark(bench, cfg, *backend, results_path);
    check(run.evaluated == instances && run.failed == 0,
          "run: " + std::to_string(run.evaluated) + " evaluated, " +
              std::to_string(run.failed) + " failed");

    Report rep = build_report(read_results(results_path), cfg.alpha);
    bool absolutes_ok = !rep.absolute_fact.empty() && !rep.absolute_transform.empty();
    for (const auto& [format, cells] : rep.absolute_fact)
        for (const auto& [kind, mean] : cells)
            if (detail::fmt2(mean) != "100.00") absolutes_ok = false;
    for (const auto& [format, cells] : rep.absolute_transform)
        for (const auto& [kind, mean] : cells)
            if (detail::fmt2(mean) != "100.00") absolutes_ok = false;
    check(absolutes_ok, "perfect oracle: every absolute report cell is 100.00");

    bool deltas_ok = true;
    for (const auto* grid : {&rep.delta_fact, &rep.delta_transform})
        for (const auto& [format, by_noise] : *grid)
            for (const auto& [noise, by_kind] : by_noise)
                for (const auto& [kind, cell] : by_kind)
                    if (detail::fmt_delta(cell.delta_pct) != "0.00" || cell.significant)
                        deltas_ok = false;
    check(deltas_ok, "perfect oracle: all deltas are 0.00 and unmarked");

    fs::remove_all(dir);
    return all_ok;
}

}  // namespace tablebench
