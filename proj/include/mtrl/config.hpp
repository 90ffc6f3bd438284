// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/client.hpp"
#include "mtrl/grpo.hpp"
#include "mtrl/rollout.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mtrl
{

/// Model names sent for each chat role.
struct ModelNames
{
    std::string agent = "agent";
    std::string user = "user";
    std::string tool = "tool";
    std::string judge = "judge";
};

/// Everything a CLI run needs, fully resolved before the run starts.
///
/// Config file layout: {"rollout": {...}, "grpo": {...}, "client": {...},
/// "models": {...}, "paths": {...}, "eval_rollouts": n}. Unknown keys are
/// rejected.
struct RunConfig
{
    RolloutConfig rollout;
    GrpoConfig grpo;
    ClientConfig client;
    ModelNames models;
    /// Named file paths (domain, scenario, rules, user_prompt, ...); `out` is
    /// the output directory.
    std::map<std::string, std::string> paths{{"out", "out"}};
    int eval_rollouts = 0;

    /// Dotted key -> "default", "file:<path>" or "flag:--<name>".
    std::map<std::string, std::string> provenance;
};

/// Values given on the command line. Unset ones fall back to the file, then
/// to defaults.
struct FlagOverrides
{
    std::optional<std::uint64_t> seed;
    std::optional<int> group_size;
    std::optional<int> max_turns;
    std::optional<double> beta;
    std::optional<double> epsilon;
    std::optional<std::string> out;
    /// Extra path overrides by name (e.g. --domain).
    std::map<std::string, std::string> paths;
};

/// Merges defaults, the optional config file and flags, in that order of
/// increasing precedence. --group-size sets both rollout and grpo group sizes.
/// Throws Error for a missing or malformed file, unknown keys or invalid values.
RunConfig resolve_run_config(const std::optional<std::filesystem::path>& config_file, const FlagOverrides& flags);

/// {"rollout", "grpo", "client", "models", "paths", "eval_rollouts", "provenance"}
Json to_json(const RunConfig& cfg);

/// Command-line spelling of a path key: underscores become hyphens.
std::string flag_spelling(std::string key);

/// Returns the named path or throws Error naming the missing setting.
std::string require_path(const RunConfig& cfg, const std::string& name);

/// Manifest written next to run outputs: resolved config plus FNV-1a hashes
/// of every input file.
Json run_manifest(const std::string& command, const RunConfig& cfg, const std::vector<std::filesystem::path>& fixtures);
void write_run_manifest(const std::filesystem::path& path, const std::string& command, const RunConfig& cfg,
                        const std::vector<std::filesystem::path>& fixtures);

} // namespace mtrl
