// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/common.hpp"
#include "mtrl/database.hpp"
#include "mtrl/tools.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mtrl
{

enum class Role
{
    system,
    user,
    agent_text,
    tool_call,
    tool_result,
};

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

/// True for the roles the agent policy emits (and the loss trains on).
constexpr bool is_agent_role(Role role)
{
    return role == Role::agent_text || role == Role::tool_call;
}

struct Message
{
    Role role = Role::user;
    std::variant<std::string, ToolCall, ToolResult> content;
    int token_count = 0;
    int turn_index = 0;

    [[nodiscard]] const std::string& text() const { return std::get<std::string>(content); }
    [[nodiscard]] const ToolCall& call() const { return std::get<ToolCall>(content); }
    [[nodiscard]] const ToolResult& result() const { return std::get<ToolResult>(content); }

    static Message make_text(Role role, std::string text, int tokens, int turn);
    static Message make_call(ToolCall call, int tokens, int turn);
    static Message make_result(ToolResult result, int tokens, int turn);

    friend bool operator==(const Message& a, const Message& b) = default;
};

enum class Termination
{
    stop,
    transfer,
    turn_cap,
    token_cap,
    protocol_error,
};

std::string_view to_string(Termination termination);
Termination termination_from_string(std::string_view text);

/// True when the episode ended through a sentinel rather than a budget or
/// protocol failure. Only clean episodes can earn reward.
constexpr bool is_clean(Termination t)
{
    return t == Termination::stop || t == Termination::transfer;
}

/// One policy token with the log-probabilities logged at sampling time.
/// Tokens of non-agent messages carry context_id = action_id = -1.
struct TokenRecord
{
    int context_id = -1;
    int action_id = -1;
    double logprob_old = 0.0;
    double logprob_ref = 0.0;
    bool mask = false;

    friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

struct Trajectory
{
    std::string task_id;
    std::vector<Message> messages;
    Termination termination = Termination::stop;
    Database final_db;
    std::vector<TokenRecord> token_records;
    /// Human-readable reason for protocol_error terminations.
    std::string note;

    [[nodiscard]] int turn_count() const;
    [[nodiscard]] long total_tokens() const;
    /// Tool calls in order, each paired with its result when one follows.
    [[nodiscard]] std::vector<std::pair<ToolCall, std::optional<ToolResult>>> tool_log() const;
};

Json to_json(const Message& message);
Message message_from_json(const Json& doc);

/// One JSONL line: task_id, messages, termination, reward, tcr,
/// token_records, final_db_hash.
Json trajectory_record(const Trajectory& trajectory, int reward, double tcr);

struct TrajectoryRecord
{
    Trajectory trajectory;
    int reward = 0;
    double tcr = 0.0;
    std::string final_db_hash;
};

TrajectoryRecord trajectory_from_record(const Json& doc);

std::vector<TrajectoryRecord> read_trajectory_jsonl(const std::filesystem::path& path);

} // namespace mtrl
