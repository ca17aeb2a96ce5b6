#pragma once

// Experiment driver: config parsing, command dispatch, weight files and
// report output.

#include "shadownet/core_math.hpp"
#include "shadownet/shadow_train.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shadownet {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Command { gen, invert, scaling, lemmas, diag, support, twolayer, train };

std::string_view to_string(Command c);
Command command_from_string(std::string_view s);
const std::vector<Command>& all_commands();

struct RunConfig {
    Command command = Command::gen;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::filesystem::path output_dir = "out";
    nlohmann::json params = nlohmann::json::object();  // command keys, defaults filled in
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::filesystem::path> output_dir;
};

/// Parses a flat JSON object: seed, threads, out, an optional command (which
/// must match), and the command's own keys. Unknown keys, type mismatches and
/// missing required keys throw ConfigError naming the key.
RunConfig parse_config(Command command, std::string_view json_text, const CliOverrides& overrides = {});
/// Flat JSON text that parse_config turns back into an equal config.
std::string serialize_config(const RunConfig& cfg);

struct Table {
    std::string name;  // file stem of the CSV
    std::vector<std::string> columns;
    std::vector<std::vector<nlohmann::json>> rows;
};

struct Check {
    int criterion = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Report {
    Command command = Command::gen;
    nlohmann::json config;
    std::string version{kVersion};
    nlohmann::json aggregates = nlohmann::json::object();
    std::vector<Table> tables;
    std::vector<Check> checks;
    double duration_seconds = 0.0;

    nlohmann::json to_json() const;
    bool all_pass() const;
    /// 0 when every check passes, otherwise the criterion number of the first failure.
    int exit_code() const;
};

/// Runs the command, writes its report and any artifacts into cfg.output_dir.
Report run_command(const RunConfig& cfg);

/// Binary weight file: "SHDW", u32 LE version 1, u32 LE count, then per
/// matrix u64 LE rows, u64 LE cols and row-major LE doubles.
void save_weights(const std::vector<Matrix>& matrices, const std::filesystem::path& path);
std::vector<Matrix> load_weights(const std::filesystem::path& path);

/// MLP parameters as [W1, b1, W2, b2, W3, b3] with biases as 1 x n matrices.
std::vector<Matrix> to_matrices(const MlpParams& params);
MlpParams mlp_from_matrices(const std::vector<Matrix>& matrices);

/// Writes report.json plus <table>.csv for every non-empty table.
std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& output_dir);

/// Matrix from a header-free numeric CSV.
Matrix load_matrix_csv(const std::filesystem::path& path);

}  // namespace shadownet
