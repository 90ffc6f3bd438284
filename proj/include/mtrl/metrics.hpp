// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/common.hpp"
#include "mtrl/trajectory.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace mtrl
{

/// Distinct sliding 4-grams over all windows; 1.0 for fewer than 4 tokens.
double unique_4gram_ratio(std::span<const int> tokens);

/// Fraction of rows (tasks) whose G rewards are all 1 / all 0. Throws Error
/// on an empty or ragged matrix or entries outside {0, 1}.
double all_correct_ratio(const std::vector<std::vector<int>>& rewards);
double all_wrong_ratio(const std::vector<std::vector<int>>& rewards);

struct ToolCountSummary
{
    std::map<std::string, double> mean_counts;
    /// Number of trajectories averaged; 0 marks "no samples" (map is empty).
    std::size_t samples = 0;
};

/// Mean number of tool_call messages per trajectory for each name.
ToolCountSummary tool_counts(std::span<const Trajectory> trajectories, const std::vector<std::string>& names);

/// Tool names tracked by the training metrics.
const std::vector<std::string>& general_tool_names();

struct MetricsRecord
{
    int step = 0;
    double mean_entropy = 0.0;
    double kl_value = 0.0;
    double grad_norm = 0.0;
    double mean_turns = 0.0;
    double mean_response_tokens = 0.0;
    double unique_4gram_ratio = 1.0;
    double all_correct_ratio = 0.0;
    double all_wrong_ratio = 0.0;
    std::map<std::string, double> tool_counts;
    double objective = 0.0;
    double mean_reward = 0.0;

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

Json to_json(const MetricsRecord& record);
MetricsRecord metrics_record_from_json(const Json& doc);

/// Reads a metrics JSONL file, checking that steps strictly increase.
std::vector<MetricsRecord> read_metrics_jsonl(const std::filesystem::path& path);

/// Fixed-width text table, one row per record.
std::string metrics_table(const std::vector<MetricsRecord>& records);

} // namespace mtrl
