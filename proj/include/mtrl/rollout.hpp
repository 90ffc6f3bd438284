// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/domain.hpp"
#include "mtrl/participants.hpp"
#include "mtrl/trajectory.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mtrl
{

enum class UserMode
{
    llm,
    scripted,
    none,
};

enum class ToolExecution
{
    local_env,
    remote_executor,
    llm_simulated,
    none,
};

std::string_view to_string(UserMode mode);
std::string_view to_string(ToolExecution mode);
UserMode user_mode_from_string(std::string_view text);
ToolExecution tool_execution_from_string(std::string_view text);

struct RolloutConfig
{
    int max_turns = 30;
    long max_tokens = 32768;
    int group_size = 8;
    double agent_temperature = 1.0;
    UserMode user_mode = UserMode::scripted;
    ToolExecution tool_execution = ToolExecution::local_env;
    /// Agent steps allowed between two user messages before turn_cap.
    int max_agent_steps_per_turn = 30;
    /// Worker threads for run_group; 1 runs the group inline.
    int threads = 1;

    /// Throws Error when a field is out of range.
    void validate() const;
};

Json to_json(const RolloutConfig& cfg);
RolloutConfig rollout_config_from_json(const Json& doc, RolloutConfig base = {});

enum class TerminationSignal
{
    proceed,
    stop,
    transfer,
};

/// Sentinel check for user and agent_text messages. A message carrying both
/// sentinels counts as stop.
TerminationSignal detect_termination(const Message& message);

/// Runs one episode. `executor` must wrap a fresh copy of task.initial_db.
/// Never throws for agent, user or transport misbehavior; those end the
/// episode with protocol_error.
Trajectory run_rollout(const Task& task, const AgentPolicy& agent, const UserSimulator& user, ToolExecutor& executor, const RolloutConfig& cfg,
                       std::uint64_t seed);

/// Sets mask=true exactly on tokens of agent_text and tool_call messages.
/// Throws Error when token_records do not line up with message token counts.
void tag_tokens(Trajectory& trajectory);

struct Group
{
    std::string task_id;
    std::vector<Trajectory> trajectories;
    std::vector<int> rewards;
    std::vector<RewardResult> results;
    /// Indices into `trajectories` in the order the rollouts finished.
    std::vector<std::size_t> completion_order;
};

/// G independent rollouts, each with its own database copy, user session and
/// seed mix_seed(seed, i). Rewards follow outcome_reward().
Group run_group(const Task& task, const AgentPolicy& agent, const UserSimulator& user, const ExecutorFactory& executors, const RolloutConfig& cfg,
                std::uint64_t seed);

/// One JSONL line per trajectory.
std::string group_jsonl(const Group& group);

} // namespace mtrl
