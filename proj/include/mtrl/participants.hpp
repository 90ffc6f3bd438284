// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/client.hpp"
#include "mtrl/domain.hpp"
#include "mtrl/trajectory.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace mtrl
{

// --- agent -----------------------------------------------------------------

/// One unit of agent output: either a text message or a tool call.
struct Emission
{
    std::variant<std::string, ToolCall> content;
    /// Token count charged against the budget; ignored when `tokens` is set.
    int token_count = 1;
    /// Per-token records from a trainable policy (mask is filled later).
    std::vector<TokenRecord> tokens;

    [[nodiscard]] bool is_text() const { return std::holds_alternative<std::string>(content); }
    [[nodiscard]] int tokens_used() const { return tokens.empty() ? token_count : static_cast<int>(tokens.size()); }

    static Emission text(std::string t, int tokens = 1) { return Emission{std::move(t), tokens, {}}; }
    static Emission call(std::string name, Json args = Json::object(), int tokens = 1)
    {
        return Emission{ToolCall{std::move(name), std::move(args), {}}, tokens, {}};
    }
};

/// What the agent produced in one step. Valid steps are either one text
/// emission or one or more tool calls.
struct AgentStep
{
    std::vector<Emission> emissions;
};

/// Returns a reason when the step breaks the step grammar.
std::optional<std::string> step_grammar_violation(const AgentStep& step);

struct AgentView
{
    const Task& task;
    const std::vector<Message>& messages;
    const std::vector<ToolSpec>& tools;
};

class AgentSession
{
public:
    virtual ~AgentSession() = default;
    /// May throw TransportError; the rollout then ends with protocol_error.
    virtual AgentStep step(const AgentView& view) = 0;
};

/// Factory for per-rollout agent sessions. Implementations must be safe to
/// call from several threads at once.
class AgentPolicy
{
public:
    virtual ~AgentPolicy() = default;
    [[nodiscard]] virtual std::unique_ptr<AgentSession> start(const Task& task, std::uint64_t seed) const = 0;
};

/// Replays fixed steps, then emits the stop sentinel as text forever.
class ScriptedAgent : public AgentPolicy
{
public:
    explicit ScriptedAgent(std::vector<AgentStep> steps): _steps(std::move(steps)) {}
    [[nodiscard]] std::unique_ptr<AgentSession> start(const Task& task, std::uint64_t seed) const override;

private:
    std::vector<AgentStep> _steps;
};

/// Wraps a callable; each session gets its own seeded RNG state.
class LambdaAgent : public AgentPolicy
{
public:
    using StepFn = std::function<AgentStep(const AgentView&, std::uint64_t& rng_state, int step_index)>;
    explicit LambdaAgent(StepFn fn): _fn(std::move(fn)) {}
    [[nodiscard]] std::unique_ptr<AgentSession> start(const Task& task, std::uint64_t seed) const override;

private:
    StepFn _fn;
};

struct LlmRoleConfig
{
    std::string model = "agent";
    double temperature = 1.0;
    int max_tokens = 1024;
};

/// Agent backed by a chat-completions endpoint.
class LlmAgentPolicy : public AgentPolicy
{
public:
    LlmAgentPolicy(std::shared_ptr<const ChatClient> client, LlmRoleConfig cfg): _client(std::move(client)), _cfg(std::move(cfg)) {}
    [[nodiscard]] std::unique_ptr<AgentSession> start(const Task& task, std::uint64_t seed) const override;

private:
    std::shared_ptr<const ChatClient> _client;
    LlmRoleConfig _cfg;
};

/// Converts rollout messages to the agent's chat view.
std::vector<ChatMessage> agent_chat_messages(const std::vector<Message>& messages);

// --- user ------------------------------------------------------------------

struct UserTurn
{
    std::string text;
    /// Negative means "count whitespace-separated words".
    int token_count = -1;
};

class UserSession
{
public:
    virtual ~UserSession() = default;
    /// The first call yields the opening query. May throw TransportError.
    virtual UserTurn reply(const std::vector<Message>& messages) = 0;
};

class UserSimulator
{
public:
    virtual ~UserSimulator() = default;
    [[nodiscard]] virtual std::unique_ptr<UserSession> start(const Task& task, std::uint64_t seed) const = 0;
};

/// Replies from a fixed script, then the stop sentinel.
class ScriptedUser : public UserSimulator
{
public:
    explicit ScriptedUser(std::vector<std::string> script);
    [[nodiscard]] std::unique_ptr<UserSession> start(const Task& task, std::uint64_t seed) const override;

private:
    std::vector<std::string> _script;
};

/// Opens with the task's user_scenario; never asked again (user_mode none).
class ScenarioUser : public UserSimulator
{
public:
    [[nodiscard]] std::unique_ptr<UserSession> start(const Task& task, std::uint64_t seed) const override;
};

struct LlmUserConfig
{
    LlmRoleConfig role{"user", 1.0, 512};
    /// Template with {{scenario}}, {{stop}} and {{transfer}} placeholders.
    std::string prompt_template;
    /// When false the simulator sees only agent_text messages.
    bool sees_tool_results = false;
    std::string opening_line = "Hi! How can I help you today?";
};

/// Renders the user-simulator system prompt for a task.
std::string render_user_prompt(const std::string& prompt_template, const Task& task);

class LlmUserSimulator : public UserSimulator
{
public:
    LlmUserSimulator(std::shared_ptr<const ChatClient> client, LlmUserConfig cfg): _client(std::move(client)), _cfg(std::move(cfg)) {}
    [[nodiscard]] std::unique_ptr<UserSession> start(const Task& task, std::uint64_t seed) const override;

private:
    std::shared_ptr<const ChatClient> _client;
    LlmUserConfig _cfg;
};

/// Role-flipped chat view for the user simulator.
std::vector<ChatMessage> user_chat_messages(const std::string& system_prompt, const std::string& opening_line,
                                            const std::vector<Message>& messages, bool sees_tool_results);

// --- tools -----------------------------------------------------------------

/// Executes tool calls for one rollout. Owned by that rollout only.
class ToolExecutor
{
public:
    virtual ~ToolExecutor() = default;
    virtual ToolResult execute(const ToolCall& call) = 0;
    [[nodiscard]] virtual std::vector<ToolSpec> tools() const = 0;
    [[nodiscard]] virtual Database final_db() const = 0;
    /// False for the no-tools configuration.
    [[nodiscard]] virtual bool enabled() const { return true; }
};

using ExecutorFactory = std::function<std::unique_ptr<ToolExecutor>(const Task&)>;

/// Runs tools against a private copy of the task's initial database.
class LocalEnvExecutor : public ToolExecutor
{
public:
    LocalEnvExecutor(std::shared_ptr<const ToolRegistry> registry, Database db): _registry(std::move(registry)), _db(std::move(db)) {}
    ToolResult execute(const ToolCall& call) override { return execute_tool(_db, call, *_registry); }
    [[nodiscard]] std::vector<ToolSpec> tools() const override;
    [[nodiscard]] Database final_db() const override { return _db; }

private:
    std::shared_ptr<const ToolRegistry> _registry;
    Database _db;
};

ExecutorFactory local_env_factory(std::shared_ptr<const ToolRegistry> registry);

/// No tools: every call is a protocol violation.
class NullExecutor : public ToolExecutor
{
public:
    explicit NullExecutor(Database db): _db(std::move(db)) {}
    ToolResult execute(const ToolCall& call) override { return ToolResult::failure("Error: tool execution disabled (" + call.name + ")"); }
    [[nodiscard]] std::vector<ToolSpec> tools() const override { return {}; }
    [[nodiscard]] Database final_db() const override { return _db; }
    [[nodiscard]] bool enabled() const override { return false; }

private:
    Database _db;
};

ExecutorFactory null_executor_factory();

/// Forwards calls to a JSON-RPC tool endpoint (tools/list, tools/call).
/// Never throws from execute(): transport failures become ok=false results.
/// The remote state is not observable, so final_db() returns the database
/// it was constructed with.
class RemoteToolExecutor : public ToolExecutor
{
public:
    /// Fetches the tool listing; throws TransportError when that fails.
    RemoteToolExecutor(ClientConfig cfg, Database db = Database());
    ToolResult execute(const ToolCall& call) override;
    [[nodiscard]] std::vector<ToolSpec> tools() const override { return _tools; }
    [[nodiscard]] Database final_db() const override { return _db; }

private:
    ChatClient _client;
    Database _db;
    std::vector<ToolSpec> _tools;
    int _next_id = 1;
};

} // namespace mtrl
