// tablebench: generate structural table-understanding benchmarks, evaluate a
// completion backend against them, and render report tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tablebench/harness.hpp"

namespace fs = std::filesystem;
using namespace tablebench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitTransport = 2;

RunConfig config_or_default(const std::string& config_path) {
    if (config_path.empty()) return RunConfig{};
    return load_config(config_path);
}

int cmd_generate(const std::string& config_path, std::string out_path) {
    RunConfig cfg = load_config(config_path);
    if (cfg.dataset_paths.empty())
        throw ConfigError("config lists no datasets");
    fs::create_directories(cfg.out_dir);
    if (out_path.empty()) out_path = (fs::path(cfg.out_dir) / "benchmark.jsonl").string();
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write benchmark file \"" + out_path + "\"");
    GenerateOutcome outcome = generate_benchmark(cfg, out, [&cfg](const std::string& path) {
        return default_loader(path, cfg.csv_has_header);
    });
    for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << outcome.instances << " instances to " << out_path << "\n";
    return kExitOk;
}

int cmd_run(const std::string& config_path, std::string bench_path,
            const std::string& backend_override, bool resume, std::string out_path) {
    RunConfig cfg = config_or_default(config_path);
    if (!backend_override.empty()) cfg.backend.kind = backend_override;
    if (bench_path.empty()) bench_path = (fs::path(cfg.out_dir) / "benchmark.jsonl").string();
    if (out_path.empty()) {
        fs::create_directories(cfg.out_dir);
        out_path = (fs::path(cfg.out_dir) / "results.jsonl").string();
    }
    std::vector<TaskInstance> instances = read_benchmark(bench_path);
    auto backend = make_backend(cfg.backend);
    RunOutcome outcome = run_benchmark(instances, cfg, *backend, out_path, resume);
    std::cout << "evaluated " << outcome.evaluated << " instances (" << outcome.skipped
              << " already done, " << outcome.failed << " failed) -> " << out_path << "\n";
    return outcome.failed > 0 ? kExitTransport : kExitOk;
}

int cmd_report(const std::string& config_path, std::string results_path, std::string out_dir,
               bool bold_max) {
    RunConfig cfg = config_or_default(config_path);
    if (results_path.empty())
        results_path = (fs::path(cfg.out_dir) / "results.jsonl").string();
    if (out_dir.empty()) out_dir = cfg.out_dir;
    Report rep = build_report(read_results(results_path), cfg.alpha, bold_max || cfg.bold_max);
    write_report_files(rep, out_dir);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << rep.markdown;
    std::cout << "report written to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised structural table understanding benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, out_path, bench_path, results_path, backend_override;
    bool resume = false;
    bool bold_max = false;

    auto* generate = app.add_subcommand("generate", "generate the benchmark JSONL");
    generate->add_option("--config", config_path, "JSON run configuration")->required();
    generate->add_option("--out", out_path, "benchmark output path");

    auto* run = app.add_subcommand("run", "evaluate a backend against a benchmark");
    run->add_option("--config", config_path, "JSON run configuration");
    run->add_option("--benchmark", bench_path, "benchmark JSONL path");
    run->add_option("--backend", backend_override,
                    "backend kind override (http|replay|perfect_oracle|corrupt_oracle)");
    run->add_flag("--resume", resume, "skip instances already present in the results file");
    run->add_option("--out", out_path, "results output path");

    auto* report = app.add_subcommand("report", "render report tables from results");
    report->add_option("--config", config_path, "JSON run configuration");
    report->add_option("--results", results_path, "results JSONL path");
    report->add_option("--out", out_path, "report output directory");
    report->add_flag("--bold-max", bold_max, "bold the per-column maxima in absolute tables");

    auto* selftest = app.add_subcommand("selftest", "run the embedded end-to-end check");
    (void)selftest;

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(config_path, out_path);
        if (run->parsed()) return cmd_run(config_path, bench_path, backend_override, resume, out_path);
        if (report->parsed()) return cmd_report(config_path, results_path, out_path, bold_max);
        if (selftest->parsed()) return run_selftest(std::cout) ? kExitOk : kExitValidation;
    } catch (const TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}
