// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/client.hpp"
#include "mtrl/database.hpp"
#include "mtrl/participants.hpp"
#include "mtrl/rollout.hpp"
#include "mtrl/tools.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace mtrl
{

/// A synthesis domain: policy text, table schemas, tools and optional seed
/// queries. Same tool format as domain bundles.
///
/// schemas: {table: {"count": n, "fields": {field: {"type": ..., ...}}}}
/// Field types: key (prefix, digits), name, date (min_year, max_year),
/// phone, string (choices), integer/number (min, max), boolean,
/// enum (values), ref (table). The record id is the key field's value.
struct Scenario
{
    std::string id;
    std::string domain_policy;
    Json schemas = Json::object();
    std::vector<ToolSpec> tool_specs;
    std::shared_ptr<const ToolRegistry> registry;
    /// {table: {record_id: record}} always placed first in generated memory.
    Json fixed_records = Json::object();
    std::vector<std::string> seed_queries;
};

/// Throws Error for malformed tool schemas, unknown field types or a table
/// schema no tool refers to.
Scenario load_scenario(const Json& document);
Scenario load_scenario_file(const std::filesystem::path& path);

struct SyntheticMemory
{
    Database db;
    std::uint64_t seed = 0;
    std::string generator = "mtrl-memgen/1";
};

/// Deterministic for (scenario, seed, bound). Tables are filled in
/// dependency order so refs always point at existing records. At most
/// `bound` records per table (fixed records included). Throws Error for
/// ref cycles, refs to unknown tables, or refs into a table left empty.
SyntheticMemory generate_memory(const Scenario& scenario, std::uint64_t seed, std::size_t bound = 10);

/// Returns one message per schema violation (type or dangling ref).
std::vector<std::string> validate_memory(const Scenario& scenario, const Database& db);

enum class ToolBackend
{
    interpreter,
    llm,
};

std::string_view to_string(ToolBackend backend);
ToolBackend tool_backend_from_string(std::string_view text);

struct ToolSimulatorConfig
{
    LlmRoleConfig role{"tool", 0.0, 1024};
    /// Template with {{tool}} (spec JSON) and {{memory}} placeholders.
    std::string prompt_template = "You simulate the tool {{tool}} over this database:\n{{memory}}\nReply with the tool's JSON result only.";
    std::size_t max_memory_chars = 16000;
};

/// Canonical JSON of the tables the tool touches (all tables when unknown),
/// cut to max_chars by dropping trailing records.
std::string memory_view(const ToolSpec& spec, const Database& db, std::size_t max_chars);

/// Parses a tool-model reply: a JSON value is a payload, {"error": text} a
/// failure, anything unparseable becomes an error result.
ToolResult parse_simulated_result(const std::string& reply);

/// Interpreter: execute_tool against the memory. LLM: arguments are checked
/// locally, then the tool model is asked; transport failures become error
/// results. Memory is only mutated by the interpreter.
ToolResult simulate_tool(const ToolCall& call, SyntheticMemory& memory, const Scenario& scenario, ToolBackend backend,
                         const ChatClient* tool_client = nullptr, const ToolSimulatorConfig& cfg = {});

class SimulatedToolExecutor : public ToolExecutor
{
public:
    SimulatedToolExecutor(const Scenario& scenario, SyntheticMemory memory, ToolBackend backend, std::shared_ptr<const ChatClient> client = nullptr,
                          ToolSimulatorConfig cfg = {});
    ToolResult execute(const ToolCall& call) override;
    [[nodiscard]] std::vector<ToolSpec> tools() const override { return _scenario.tool_specs; }
    [[nodiscard]] Database final_db() const override { return _memory.db; }

private:
    const Scenario& _scenario;
    SyntheticMemory _memory;
    ToolBackend _backend;
    std::shared_ptr<const ChatClient> _client;
    ToolSimulatorConfig _cfg;
};

enum class Verdict
{
    unverified,
    accepted,
    rejected,
};

std::string_view to_string(Verdict verdict);
Verdict verdict_from_string(std::string_view text);

struct SynthTrajectory
{
    std::string scenario_id;
    std::vector<Message> messages;
    Termination termination = Termination::stop;
    Verdict verdict = Verdict::unverified;
    std::string judge_rationale;
    Database final_db;
};

/// Task view of a scenario for the rollout engine. The user instruction is
/// seed_queries[seed % n] when present.
Task scenario_task(const Scenario& scenario, std::shared_ptr<const Database> memory, std::uint64_t seed);

/// One rollout with the given roles. A protocol_error episode comes back
/// already rejected with the reason as rationale.
SynthTrajectory synthesize_trajectory(const Scenario& scenario, const AgentPolicy& agent, const UserSimulator& user, ToolExecutor& tools,
                                      const SyntheticMemory& memory, const RolloutConfig& cfg, std::uint64_t seed);

struct VerificationRules
{
    std::string version = "1";
    bool role_alternation = true;
    bool all_calls_answered = true;
    bool sentinel_terminated = true;
    int min_successful_tool_calls = 1;
    std::string accept_token = "ACCEPT";
    std::string judge_prompt = "Review the conversation. Reply ACCEPT if the agent followed the policy and used the tools correctly, otherwise REJECT with a reason.";
    LlmRoleConfig judge{"judge", 0.0, 512};
};

Json to_json(const VerificationRules& rules);
VerificationRules verification_rules_from_json(const Json& doc);

/// Deterministic rule checks; returns the failed rule descriptions.
std::vector<std::string> rule_violations(const SynthTrajectory& trajectory, const VerificationRules& rules);

/// Plain-text transcript given to the judge.
std::string render_transcript(const std::vector<Message>& messages);

/// Rules first (a failure rejects without asking the judge), then the judge.
/// A judge transport failure leaves the verdict unverified.
Verdict dual_verify(SynthTrajectory& trajectory, const VerificationRules& rules, const ChatClient* judge);

/// Chat-format conversation: system/user/assistant/tool messages with
/// function-calling tool_calls. Extra keys keep turn/token bookkeeping so
/// the import is exact.
Json sft_record(const SynthTrajectory& trajectory);
SynthTrajectory sft_record_to_trajectory(const Json& record);

/// Writes one line per trajectory. Throws Error (writing nothing) when any
/// trajectory is not accepted.
void export_sft(const std::vector<SynthTrajectory>& trajectories, const std::filesystem::path& path);
std::vector<SynthTrajectory> import_sft(const std::filesystem::path& path);

// --- fully mocked pipeline -------------------------------------------------

/// Canned replies recovered from a recorded conversation
/// ({"messages": [{role, content | tool_call}]}) for the agent, user and
/// tool-model roles.
struct ReplayScript
{
    std::vector<ChatResponse> agent;
    std::vector<ChatResponse> user;
    std::vector<ChatResponse> tool;
    /// Tool calls paired with their recorded results, for a canned executor.
    std::vector<std::pair<ToolCall, ToolResult>> tool_results;
};

ReplayScript replay_script(const Json& conversation);

/// Recorded conversation as rollout messages (system prompt omitted).
std::vector<Message> conversation_messages(const Json& conversation);

struct MockPipelineOptions
{
    /// llm: a mock tool model replays the recorded results.
    /// Otherwise a canned JSON-RPC tool server does (remote executor).
    bool remote_tools = false;
    std::string judge_reply = "ACCEPT: policy followed.";
    VerificationRules rules;
    std::string user_prompt_template = "{{scenario}}";
    std::uint64_t seed = 1;
};

/// Runs agent, user, tool model and judge against loopback mock servers
/// that replay `conversation`, then verifies the result.
SynthTrajectory run_mock_pipeline(const Scenario& scenario, const Json& conversation, const MockPipelineOptions& options);

} // namespace mtrl
