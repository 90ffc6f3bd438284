// SPDX-License-Identifier: Apache-2.0
#include "mtrl/metrics.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <set>

namespace mtrl
{

double unique_4gram_ratio(std::span<const int> tokens)
{
    if (tokens.size() < 4)
        return 1.0;
    std::set<std::array<int, 4>> seen;
    const std::size_t windows = tokens.size() - 3;
    for (std::size_t i = 0; i < windows; ++i)
        seen.insert({tokens[i], tokens[i + 1], tokens[i + 2], tokens[i + 3]});
    return static_cast<double>(seen.size()) / static_cast<double>(windows);
}

namespace
{

/// Returns (rows all 1, rows all 0).
std::pair<std::size_t, std::size_t> count_uniform_rows(const std::vector<std::vector<int>>& rewards)
{
    if (rewards.empty())
        throw Error("reward matrix is empty");
    const std::size_t g = rewards.front().size();
    if (g == 0)
        throw Error("reward matrix has empty rows");
    std::size_t all_one = 0;
    std::size_t all_zero = 0;
    for (const auto& row: rewards)
    {
        if (row.size() != g)
            throw Error("reward matrix is not rectangular");
        std::size_t sum = 0;
        for (int r: row)
        {
            if (r != 0 && r != 1)
                throw Error("reward entries must be 0 or 1");
            sum += static_cast<std::size_t>(r);
        }
        all_one += sum == g ? 1 : 0;
        all_zero += sum == 0 ? 1 : 0;
    }
    return {all_one, all_zero};
}

} // namespace

double all_correct_ratio(const std::vector<std::vector<int>>& rewards)
{
    return static_cast<double>(count_uniform_rows(rewards).first) / static_cast<double>(rewards.size());
}

double all_wrong_ratio(const std::vector<std::vector<int>>& rewards)
{
    return static_cast<double>(count_uniform_rows(rewards).second) / static_cast<double>(rewards.size());
}

ToolCountSummary tool_counts(std::span<const Trajectory> trajectories, const std::vector<std::string>& names)
{
    ToolCountSummary out;
    out.samples = trajectories.size();
    if (trajectories.empty())
        return out;
    for (const auto& name: names)
    {
        std::size_t count = 0;
        for (const auto& t: trajectories)
            for (const auto& m: t.messages)
                if (m.role == Role::tool_call && m.call().name == name)
                    ++count;
        out.mean_counts[name] = static_cast<double>(count) / static_cast<double>(trajectories.size());
    }
    return out;
}

const std::vector<std::string>& general_tool_names()
{
    static const std::vector<std::string> names{"calculate", "think", "transfer_to_human_agents"};
    return names;
}

Json to_json(const MetricsRecord& r)
{
    return Json{
        {"step", r.step},
        {"mean_entropy", r.mean_entropy},
        {"kl_value", r.kl_value},
        {"grad_norm", r.grad_norm},
        {"mean_turns", r.mean_turns},
        {"mean_response_tokens", r.mean_response_tokens},
        {"unique_4gram_ratio", r.unique_4gram_ratio},
        {"all_correct_ratio", r.all_correct_ratio},
        {"all_wrong_ratio", r.all_wrong_ratio},
        {"tool_counts", r.tool_counts},
        {"objective", r.objective},
        {"mean_reward", r.mean_reward},
    };
}

MetricsRecord metrics_record_from_json(const Json& doc)
{
    MetricsRecord r;
    r.step = doc.at("step").get<int>();
    r.mean_entropy = doc.value("mean_entropy", 0.0);
    r.kl_value = doc.value("kl_value", 0.0);
    r.grad_norm = doc.value("grad_norm", 0.0);
    r.mean_turns = doc.value("mean_turns", 0.0);
    r.mean_response_tokens = doc.value("mean_response_tokens", 0.0);
    r.unique_4gram_ratio = doc.value("unique_4gram_ratio", 1.0);
    r.all_correct_ratio = doc.value("all_correct_ratio", 0.0);
    r.all_wrong_ratio = doc.value("all_wrong_ratio", 0.0);
    r.tool_counts = doc.value("tool_counts", std::map<std::string, double>{});
    r.objective = doc.value("objective", 0.0);
    r.mean_reward = doc.value("mean_reward", 0.0);
    return r;
}

std::vector<MetricsRecord> read_metrics_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read " + path.string());
    std::vector<MetricsRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        MetricsRecord r;
        try
        {
            r = metrics_record_from_json(Json::parse(line));
        }
        catch (const std::exception& e)
        {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!out.empty() && r.step <= out.back().step)
            throw Error(path.string() + ":" + std::to_string(lineno) + ": step " + std::to_string(r.step) + " does not increase");
        out.push_back(std::move(r));
    }
    return out;
}

std::string metrics_table(const std::vector<MetricsRecord>& records)
{
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%6s %10s %10s %10s %8s %8s %8s %8s %8s %8s\n", "step", "reward", "entropy", "kl", "grad", "turns", "resp_tok",
                  "4gram", "all_ok", "all_bad");
    out += buf;
    for (const auto& r: records)
    {
        std::snprintf(buf, sizeof buf, "%6d %10.4f %10.4f %10.3g %8.4f %8.2f %8.2f %8.4f %8.4f %8.4f\n", r.step, r.mean_reward, r.mean_entropy, r.kl_value,
                      r.grad_norm, r.mean_turns, r.mean_response_tokens, r.unique_4gram_ratio, r.all_correct_ratio, r.all_wrong_ratio);
        out += buf;
    }
    return out;
}

} // namespace mtrl
