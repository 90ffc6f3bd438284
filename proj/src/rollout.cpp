// SPDX-License-Identifier: Apache-2.0
#include "mtrl/rollout.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace mtrl
{

std::string_view to_string(UserMode mode)
{
    switch (mode)
    {
        case UserMode::llm: return "llm";
        case UserMode::scripted: return "scripted";
        case UserMode::none: return "none";
    }
    return "scripted";
}

std::string_view to_string(ToolExecution mode)
{
    switch (mode)
    {
        case ToolExecution::local_env: return "local_env";
        case ToolExecution::remote_executor: return "remote_executor";
        case ToolExecution::llm_simulated: return "llm_simulated";
        case ToolExecution::none: return "none";
    }
    return "local_env";
}

UserMode user_mode_from_string(std::string_view text)
{
    for (auto m: {UserMode::llm, UserMode::scripted, UserMode::none})
        if (to_string(m) == text)
            return m;
    throw Error("unknown user_mode '" + std::string(text) + "'");
}

ToolExecution tool_execution_from_string(std::string_view text)
{
    for (auto m: {ToolExecution::local_env, ToolExecution::remote_executor, ToolExecution::llm_simulated, ToolExecution::none})
        if (to_string(m) == text)
            return m;
    throw Error("unknown tool_execution '" + std::string(text) + "'");
}

void RolloutConfig::validate() const
{
    if (max_turns < 1)
        throw Error("max_turns must be >= 1");
    if (max_tokens < 1)
        throw Error("max_tokens must be >= 1");
    if (group_size < 1)
        throw Error("group_size must be >= 1");
    if (!(agent_temperature >= 0.0))
        throw Error("agent_temperature must be >= 0");
    if (max_agent_steps_per_turn < 1)
        throw Error("max_agent_steps_per_turn must be >= 1");
    if (threads < 1)
        throw Error("threads must be >= 1");
}

Json to_json(const RolloutConfig& cfg)
{
    return Json{
        {"max_turns", cfg.max_turns},
        {"max_tokens", cfg.max_tokens},
        {"group_size", cfg.group_size},
        {"agent_temperature", cfg.agent_temperature},
        {"user_mode", std::string(to_string(cfg.user_mode))},
        {"tool_execution", std::string(to_string(cfg.tool_execution))},
        {"max_agent_steps_per_turn", cfg.max_agent_steps_per_turn},
        {"threads", cfg.threads},
    };
}

RolloutConfig rollout_config_from_json(const Json& doc, RolloutConfig cfg)
{
    cfg.max_turns = doc.value("max_turns", cfg.max_turns);
    cfg.max_tokens = doc.value("max_tokens", cfg.max_tokens);
    cfg.group_size = doc.value("group_size", cfg.group_size);
    cfg.agent_temperature = doc.value("agent_temperature", cfg.agent_temperature);
    if (doc.contains("user_mode"))
        cfg.user_mode = user_mode_from_string(doc["user_mode"].get<std::string>());
    if (doc.contains("tool_execution"))
        cfg.tool_execution = tool_execution_from_string(doc["tool_execution"].get<std::string>());
    cfg.max_agent_steps_per_turn = doc.value("max_agent_steps_per_turn", cfg.max_agent_steps_per_turn);
    cfg.threads = doc.value("threads", cfg.threads);
    cfg.validate();
    return cfg;
}

TerminationSignal detect_termination(const Message& message)
{
    if (message.role != Role::user && message.role != Role::agent_text)
        return TerminationSignal::proceed;
    const std::string& text = message.text();
    if (text.find(kStopSentinel) != std::string::npos)
        return TerminationSignal::stop;
    if (text.find(kTransferSentinel) != std::string::npos)
        return TerminationSignal::transfer;
    return TerminationSignal::proceed;
}

namespace
{

/// Mutable state of one episode. Every append goes through the budget.
class Episode
{
public:
    Episode(const Task& task, const RolloutConfig& cfg): _cfg(cfg) { traj.task_id = task.id; }

    Trajectory traj;
    int turn = 0;
    bool trainable = false;

    /// Appends when the message fits; otherwise ends with token_cap.
    bool append(Message m, const std::vector<TokenRecord>& tokens = {})
    {
        if (_used + m.token_count > _cfg.max_tokens)
        {
            finish(Termination::token_cap);
            return false;
        }
        push(std::move(m), tokens);
        return true;
    }

    /// Appends with the token count clamped to what is left, then ends with
    /// token_cap when it had to clamp.
    bool append_clamped(Message m)
    {
        const long left = _cfg.max_tokens - _used;
        if (m.token_count > left)
        {
            m.token_count = static_cast<int>(left);
            push(std::move(m), {});
            finish(Termination::token_cap);
            return false;
        }
        push(std::move(m), {});
        return true;
    }

    void finish(Termination t, std::string note = {})
    {
        if (_done)
            return;
        _done = true;
        traj.termination = t;
        traj.note = std::move(note);
    }

    [[nodiscard]] bool done() const { return _done; }

    /// Ends on a sentinel; returns true when the episode is over.
    bool check_sentinel()
    {
        switch (detect_termination(traj.messages.back()))
        {
            case TerminationSignal::stop: finish(Termination::stop); return true;
            case TerminationSignal::transfer: finish(Termination::transfer); return true;
            case TerminationSignal::proceed: return false;
        }
        return false;
    }

private:
    void push(Message m, const std::vector<TokenRecord>& tokens)
    {
        _used += m.token_count;
        if (!tokens.empty())
        {
            trainable = true;
            traj.token_records.insert(traj.token_records.end(), tokens.begin(), tokens.end());
        }
        else
            traj.token_records.resize(traj.token_records.size() + static_cast<std::size_t>(m.token_count));
        traj.messages.push_back(std::move(m));
    }

    const RolloutConfig& _cfg;
    long _used = 0;
    bool _done = false;
};

int words(const std::string& text)
{
    return static_cast<int>(count_words(text));
}

Message user_message(const UserTurn& reply, int turn)
{
    return Message::make_text(Role::user, reply.text, reply.token_count >= 0 ? reply.token_count : words(reply.text), turn);
}

/// Runs the agent until it messages the user or the episode ends.
void agent_turn(Episode& ep, const Task& task, AgentSession& agent, ToolExecutor& executor, const std::vector<ToolSpec>& tools, const RolloutConfig& cfg)
{
    for (int steps = 0; !ep.done(); ++steps)
    {
        if (steps >= cfg.max_agent_steps_per_turn)
        {
            ep.finish(Termination::turn_cap, "agent step limit per turn reached");
            return;
        }
        AgentStep step;
        try
        {
            step = agent.step(AgentView{task, ep.traj.messages, tools});
        }
        catch (const TransportError& e)
        {
            ep.finish(Termination::protocol_error, std::string("agent transport failure: ") + e.what());
            return;
        }
        if (auto why = step_grammar_violation(step))
        {
            ep.finish(Termination::protocol_error, *why);
            return;
        }
        if (step.emissions.front().is_text())
        {
            const Emission& e = step.emissions.front();
            ep.append(Message::make_text(Role::agent_text, std::get<std::string>(e.content), e.tokens_used(), ep.turn), e.tokens);
            return;
        }
        for (const auto& e: step.emissions)
        {
            if (!executor.enabled())
            {
                ep.finish(Termination::protocol_error, "tool call with tool execution disabled");
                return;
            }
            const ToolCall& call = std::get<ToolCall>(e.content);
            if (!ep.append(Message::make_call(call, e.tokens_used(), ep.turn), e.tokens))
                return;
            ToolResult result = executor.execute(call);
            const int cost = words(result.render());
            if (!ep.append_clamped(Message::make_result(std::move(result), cost, ep.turn)))
                return;
        }
    }
}

} // namespace

Trajectory run_rollout(const Task& task, const AgentPolicy& agent, const UserSimulator& user, ToolExecutor& executor, const RolloutConfig& cfg,
                       std::uint64_t seed)
{
    cfg.validate();
    Episode ep(task, cfg);
    const std::vector<ToolSpec> tools = executor.tools();
    auto agent_session = agent.start(task, mix_seed(seed, 1));
    auto user_session = user.start(task, mix_seed(seed, 2));

    auto ask_user = [&]() {
        UserTurn reply;
        try
        {
            reply = user_session->reply(ep.traj.messages);
        }
        catch (const TransportError& e)
        {
            ep.finish(Termination::protocol_error, std::string("user transport failure: ") + e.what());
            return;
        }
        ++ep.turn;
        if (ep.append(user_message(reply, ep.turn)))
            ep.check_sentinel();
    };

    if (ep.append(Message::make_text(Role::system, task.system_policy, words(task.system_policy), 0)))
        ask_user();

    while (!ep.done())
    {
        agent_turn(ep, task, *agent_session, executor, tools, cfg);
        if (ep.done() || ep.check_sentinel())
            break;
        if (cfg.user_mode == UserMode::none)
        {
            ep.finish(Termination::stop);
            break;
        }
        if (ep.turn >= cfg.max_turns)
        {
            ep.finish(Termination::turn_cap);
            break;
        }
        ask_user();
    }

    ep.traj.final_db = executor.final_db();
    if (ep.trainable)
        tag_tokens(ep.traj);
    else
        ep.traj.token_records.clear();
    return std::move(ep.traj);
}

void tag_tokens(Trajectory& trajectory)
{
    std::size_t expected = 0;
    for (const auto& m: trajectory.messages)
        expected += static_cast<std::size_t>(m.token_count);
    if (expected != trajectory.token_records.size())
        throw Error("tag_tokens: " + std::to_string(trajectory.token_records.size()) + " token records for " + std::to_string(expected) +
                    " message tokens in task " + trajectory.task_id);
    std::size_t pos = 0;
    for (const auto& m: trajectory.messages)
    {
        const bool mask = is_agent_role(m.role);
        for (int i = 0; i < m.token_count; ++i)
            trajectory.token_records[pos++].mask = mask;
    }
}

Group run_group(const Task& task, const AgentPolicy& agent, const UserSimulator& user, const ExecutorFactory& executors, const RolloutConfig& cfg,
                std::uint64_t seed)
{
    cfg.validate();
    const auto g = static_cast<std::size_t>(cfg.group_size);
    Group group;
    group.task_id = task.id;
    group.trajectories.resize(g);
    group.rewards.resize(g);
    group.results.resize(g);

    std::mutex order_mutex;
    auto run_one = [&](std::size_t i) {
        auto executor = executors(task);
        Trajectory t = run_rollout(task, agent, user, *executor, cfg, mix_seed(seed, i));
        RewardResult r = score(task, t.final_db, t);
        group.rewards[i] = outcome_reward(r, t.termination);
        group.results[i] = std::move(r);
        group.trajectories[i] = std::move(t);
        std::lock_guard lock(order_mutex);
        group.completion_order.push_back(i);
    };

    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), g);
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < g; ++i)
            run_one(i);
        return group;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < g; i = next++)
            {
                try
                {
                    run_one(i);
                }
                catch (...)
                {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    for (auto& t: pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
    return group;
}

std::string group_jsonl(const Group& group)
{
    std::string out;
    for (std::size_t i = 0; i < group.trajectories.size(); ++i)
        out += trajectory_record(group.trajectories[i], group.rewards[i], group.results[i].tcr).dump() + "\n";
    return out;
}

} // namespace mtrl
