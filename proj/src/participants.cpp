// SPDX-License-Identifier: Apache-2.0
#include "mtrl/participants.hpp"

namespace mtrl
{

std::optional<std::string> step_grammar_violation(const AgentStep& step)
{
    if (step.emissions.empty())
        return "agent produced an empty step";
    std::size_t texts = 0;
    for (const auto& e: step.emissions)
        texts += e.is_text() ? 1 : 0;
    if (texts > 0 && texts < step.emissions.size())
        return "agent mixed text and tool calls in one step";
    if (texts > 1)
        return "agent produced more than one text message in one step";
    return std::nullopt;
}

// --- scripted / lambda agents ----------------------------------------------

namespace
{

class ScriptedAgentSession : public AgentSession
{
public:
    explicit ScriptedAgentSession(const std::vector<AgentStep>& steps): _steps(steps) {}

    AgentStep step(const AgentView&) override
    {
        if (_next < _steps.size())
            return _steps[_next++];
        return AgentStep{{Emission::text(std::string(kStopSentinel))}};
    }

private:
    const std::vector<AgentStep>& _steps;
    std::size_t _next = 0;
};

class LambdaAgentSession : public AgentSession
{
public:
    LambdaAgentSession(const LambdaAgent::StepFn& fn, std::uint64_t seed): _fn(fn), _rng(seed) {}

    AgentStep step(const AgentView& view) override { return _fn(view, _rng, _index++); }

private:
    const LambdaAgent::StepFn& _fn;
    std::uint64_t _rng;
    int _index = 0;
};

} // namespace

std::unique_ptr<AgentSession> ScriptedAgent::start(const Task&, std::uint64_t) const
{
    return std::make_unique<ScriptedAgentSession>(_steps);
}

std::unique_ptr<AgentSession> LambdaAgent::start(const Task&, std::uint64_t seed) const
{
    return std::make_unique<LambdaAgentSession>(_fn, seed);
}

// --- LLM agent -------------------------------------------------------------

std::vector<ChatMessage> agent_chat_messages(const std::vector<Message>& messages)
{
    std::vector<ChatMessage> out;
    std::string pending_id;
    for (std::size_t i = 0; i < messages.size(); ++i)
    {
        const Message& m = messages[i];
        switch (m.role)
        {
            case Role::system: out.push_back(ChatMessage{"system", m.text(), {}, {}}); break;
            case Role::user: out.push_back(ChatMessage{"user", m.text(), {}, {}}); break;
            case Role::agent_text: out.push_back(ChatMessage{"assistant", m.text(), {}, {}}); break;
            case Role::tool_call:
            {
                ToolCall call = m.call();
                if (call.id.empty())
                    call.id = "call_" + std::to_string(i);
                pending_id = call.id;
                out.push_back(ChatMessage{"assistant", std::nullopt, {call}, {}});
                break;
            }
            case Role::tool_result: out.push_back(ChatMessage{"tool", m.result().render(), {}, pending_id}); break;
        }
    }
    return out;
}

namespace
{

class LlmAgentSession : public AgentSession
{
public:
    LlmAgentSession(std::shared_ptr<const ChatClient> client, const LlmRoleConfig& cfg): _client(std::move(client)), _cfg(cfg) {}

    AgentStep step(const AgentView& view) override
    {
        ChatRequest req{_cfg.model, agent_chat_messages(view.messages), view.tools, _cfg.temperature, _cfg.max_tokens};
        ChatResponse res = _client->chat(req);
        AgentStep step;
        if (res.content && !res.content->empty())
            step.emissions.push_back(Emission::text(*res.content, static_cast<int>(count_words(*res.content))));
        for (auto& call: res.tool_calls)
            step.emissions.push_back(Emission{std::move(call), 1, {}});
        if (step.emissions.empty() && res.content)
            step.emissions.push_back(Emission::text("", 0));
        // Charge the reported completion tokens, split over the emissions.
        const int total = res.usage.completion_tokens;
        if (total > 0 && !step.emissions.empty())
        {
            const int n = static_cast<int>(step.emissions.size());
            for (int i = 0; i < n; ++i)
                step.emissions[i].token_count = total / n + (i == 0 ? total % n : 0);
        }
        return step;
    }

private:
    std::shared_ptr<const ChatClient> _client;
    const LlmRoleConfig& _cfg;
};

} // namespace

std::unique_ptr<AgentSession> LlmAgentPolicy::start(const Task&, std::uint64_t) const
{
    return std::make_unique<LlmAgentSession>(_client, _cfg);
}

// --- users -----------------------------------------------------------------

namespace
{

class ScriptedUserSession : public UserSession
{
public:
    explicit ScriptedUserSession(const std::vector<std::string>& script): _script(script) {}

    UserTurn reply(const std::vector<Message>&) override
    {
        if (_next < _script.size())
            return UserTurn{_script[_next++]};
        return UserTurn{std::string(kStopSentinel)};
    }

private:
    const std::vector<std::string>& _script;
    std::size_t _next = 0;
};

class ScenarioUserSession : public UserSession
{
public:
    explicit ScenarioUserSession(std::string scenario): _scenario(std::move(scenario)) {}

    UserTurn reply(const std::vector<Message>&) override
    {
        if (_done)
            return UserTurn{std::string(kStopSentinel)};
        _done = true;
        return UserTurn{_scenario};
    }

private:
    std::string _scenario;
    bool _done = false;
};

void replace_all(std::string& text, std::string_view from, std::string_view to)
{
    for (std::size_t pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
        text.replace(pos, from.size(), to);
}

class LlmUserSession : public UserSession
{
public:
    LlmUserSession(std::shared_ptr<const ChatClient> client, const LlmUserConfig& cfg, std::string prompt)
        : _client(std::move(client)), _cfg(cfg), _prompt(std::move(prompt))
    {
    }

    UserTurn reply(const std::vector<Message>& messages) override
    {
        ChatRequest req{_cfg.role.model, user_chat_messages(_prompt, _cfg.opening_line, messages, _cfg.sees_tool_results), {}, _cfg.role.temperature,
                        _cfg.role.max_tokens};
        ChatResponse res = _client->chat(req);
        if (!res.content)
            throw MalformedResponse("user simulator replied without text");
        return UserTurn{*res.content, res.usage.completion_tokens > 0 ? res.usage.completion_tokens : -1};
    }

private:
    std::shared_ptr<const ChatClient> _client;
    const LlmUserConfig& _cfg;
    std::string _prompt;
};

} // namespace

ScriptedUser::ScriptedUser(std::vector<std::string> script): _script(std::move(script))
{
    if (_script.empty())
        throw Error("scripted user needs at least one reply");
}

std::unique_ptr<UserSession> ScriptedUser::start(const Task&, std::uint64_t) const
{
    return std::make_unique<ScriptedUserSession>(_script);
}

std::unique_ptr<UserSession> ScenarioUser::start(const Task& task, std::uint64_t) const
{
    return std::make_unique<ScenarioUserSession>(task.user_scenario);
}

std::string render_user_prompt(const std::string& prompt_template, const Task& task)
{
    std::string out = prompt_template;
    replace_all(out, "{{scenario}}", task.user_scenario);
    replace_all(out, "{{stop}}", kStopSentinel);
    replace_all(out, "{{transfer}}", kTransferSentinel);
    return out;
}

std::vector<ChatMessage> user_chat_messages(const std::string& system_prompt, const std::string& opening_line,
                                            const std::vector<Message>& messages, bool sees_tool_results)
{
    std::vector<ChatMessage> out{ChatMessage{"system", system_prompt, {}, {}}, ChatMessage{"user", opening_line, {}, {}}};
    for (const auto& m: messages)
    {
        switch (m.role)
        {
            case Role::user: out.push_back(ChatMessage{"assistant", m.text(), {}, {}}); break;
            case Role::agent_text: out.push_back(ChatMessage{"user", m.text(), {}, {}}); break;
            case Role::tool_result:
                if (sees_tool_results)
                    out.push_back(ChatMessage{"user", "[tool result] " + m.result().render(), {}, {}});
                break;
            default: break;
        }
    }
    return out;
}

std::unique_ptr<UserSession> LlmUserSimulator::start(const Task& task, std::uint64_t) const
{
    return std::make_unique<LlmUserSession>(_client, _cfg, render_user_prompt(_cfg.prompt_template, task));
}

// --- executors -------------------------------------------------------------

std::vector<ToolSpec> LocalEnvExecutor::tools() const
{
    auto specs = _registry->specs();
    return {specs.begin(), specs.end()};
}

ExecutorFactory local_env_factory(std::shared_ptr<const ToolRegistry> registry)
{
    return [registry](const Task& task) { return std::make_unique<LocalEnvExecutor>(registry, *task.initial_db); };
}

ExecutorFactory null_executor_factory()
{
    return [](const Task& task) { return std::make_unique<NullExecutor>(*task.initial_db); };
}

RemoteToolExecutor::RemoteToolExecutor(ClientConfig cfg, Database db): _client(std::move(cfg)), _db(std::move(db))
{
    Json reply = _client.post_json("/mcp", Json{{"jsonrpc", "2.0"}, {"id", 0}, {"method", "tools/list"}});
    if (reply.contains("error"))
        throw TransportError("tools/list failed: " + reply["error"].dump());
    for (const auto& t: reply.at("result").at("tools"))
    {
        ToolSpec spec;
        spec.name = t.at("name").get<std::string>();
        spec.description = t.value("description", "");
        spec.parameters = t.value("inputSchema", spec.parameters);
        _tools.push_back(std::move(spec));
    }
}

ToolResult RemoteToolExecutor::execute(const ToolCall& call)
{
    try
    {
        Json reply = _client.post_json("/mcp", Json{{"jsonrpc", "2.0"}, {"id", _next_id++}, {"method", "tools/call"},
                                                    {"params", {{"name", call.name}, {"arguments", call.arguments}}}});
        if (reply.contains("error"))
            return ToolResult::failure("Error: " + reply["error"].value("message", std::string("remote error")));
        const Json& result = reply.at("result");
        std::string text;
        for (const auto& part: result.value("content", Json::array()))
            if (part.value("type", "") == "text")
                text += part.value("text", "");
        if (result.value("isError", false))
            return ToolResult::failure(text);
        // Structured payloads come back as JSON text; keep them structured.
        Json parsed = Json::parse(text, nullptr, false);
        if (!parsed.is_discarded() && (parsed.is_object() || parsed.is_array()))
            return ToolResult::success(std::move(parsed));
        return ToolResult::success(text);
    }
    catch (const std::exception& e)
    {
        return ToolResult::failure(std::string("Error: transport failure: ") + e.what());
    }
}

} // namespace mtrl
