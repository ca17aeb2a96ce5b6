#include "shadownet/cli_harness.hpp"
#include "shadownet/errors.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>

namespace {

constexpr int kConfigErrorExit = 10;
constexpr int kRuntimeErrorExit = 11;

}  // namespace

int main(int argc, char** argv) {
    using namespace shadownet;
    CLI::App app{"Shadow-distribution experiments: generation, inversion, lemma checks, diagnostics, training"};
    app.set_version_flag("--version", std::string(kVersion));

    std::vector<std::string> names;
    for (Command c : all_commands()) names.emplace_back(to_string(c));
    std::string command, config_path, out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    bool check = false;
    app.add_option("command", command, "Experiment to run")->required()->check(CLI::IsMember(names));
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads; 0 uses SHADOWNET_THREADS or all cores");
    auto* out_opt = app.add_option("--out", out_dir, "Output directory");
    app.add_flag("--check", check, "Exit with the number of the first failed acceptance criterion");
    CLI11_PARSE(app, argc, argv);

    try {
        std::string text;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        CliOverrides ov;
        if (*seed_opt) ov.seed = seed;
        if (*threads_opt) ov.threads = threads;
        if (*out_opt) ov.output_dir = out_dir;
        const RunConfig cfg = parse_config(command_from_string(command), text, ov);
        const Report report = run_command(cfg);

        for (const Check& c : report.checks) {
            std::printf("[%s] criterion %d: %s (%s)\n", c.pass ? "PASS" : "FAIL", c.criterion, c.name.c_str(),
                        c.detail.c_str());
        }
        std::printf("%s finished in %.2f s, report in %s\n", command.c_str(), report.duration_seconds,
                    (cfg.output_dir / "report.json").string().c_str());
        return check ? report.exit_code() : 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigErrorExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeErrorExit;
    }
}
