// SPDX-License-Identifier: Apache-2.0
#include "mtrl/trajectory.hpp"

#include <fstream>

namespace mtrl
{

std::string_view to_string(Role role)
{
    switch (role)
    {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::agent_text: return "agent_text";
        case Role::tool_call: return "tool_call";
        case Role::tool_result: return "tool_result";
    }
    return "user";
}

Role role_from_string(std::string_view text)
{
    for (Role r: {Role::system, Role::user, Role::agent_text, Role::tool_call, Role::tool_result})
        if (to_string(r) == text)
            return r;
    throw Error("unknown message role '" + std::string(text) + "'");
}

std::string_view to_string(Termination termination)
{
    switch (termination)
    {
        case Termination::stop: return "stop";
        case Termination::transfer: return "transfer";
        case Termination::turn_cap: return "turn_cap";
        case Termination::token_cap: return "token_cap";
        case Termination::protocol_error: return "protocol_error";
    }
    return "stop";
}

Termination termination_from_string(std::string_view text)
{
    for (Termination t: {Termination::stop, Termination::transfer, Termination::turn_cap, Termination::token_cap, Termination::protocol_error})
        if (to_string(t) == text)
            return t;
    throw Error("unknown termination '" + std::string(text) + "'");
}

Message Message::make_text(Role role, std::string text, int tokens, int turn)
{
    return Message{role, std::move(text), tokens, turn};
}

Message Message::make_call(ToolCall call, int tokens, int turn)
{
    return Message{Role::tool_call, std::move(call), tokens, turn};
}

Message Message::make_result(ToolResult result, int tokens, int turn)
{
    return Message{Role::tool_result, std::move(result), tokens, turn};
}

int Trajectory::turn_count() const
{
    int turns = 0;
    for (const auto& m: messages)
        if (m.role == Role::user)
            ++turns;
    return turns;
}

long Trajectory::total_tokens() const
{
    long total = 0;
    for (const auto& m: messages)
        total += m.token_count;
    return total;
}

std::vector<std::pair<ToolCall, std::optional<ToolResult>>> Trajectory::tool_log() const
{
    std::vector<std::pair<ToolCall, std::optional<ToolResult>>> log;
    for (std::size_t i = 0; i < messages.size(); ++i)
    {
        if (messages[i].role != Role::tool_call)
            continue;
        std::optional<ToolResult> result;
        if (i + 1 < messages.size() && messages[i + 1].role == Role::tool_result)
            result = messages[i + 1].result();
        log.emplace_back(messages[i].call(), std::move(result));
    }
    return log;
}

Json to_json(const Message& message)
{
    Json j{{"role", std::string(to_string(message.role))}, {"turn", message.turn_index}, {"tokens", message.token_count}};
    switch (message.role)
    {
        case Role::tool_call:
        {
            const auto& c = message.call();
            j["content"] = Json{{"name", c.name}, {"arguments", c.arguments}};
            if (!c.id.empty())
                j["content"]["id"] = c.id;
            break;
        }
        case Role::tool_result:
        {
            const auto& r = message.result();
            j["content"] = r.ok ? Json{{"ok", true}, {"payload", r.payload}} : Json{{"ok", false}, {"error", r.error_text}};
            break;
        }
        default: j["content"] = message.text();
    }
    return j;
}

Message message_from_json(const Json& doc)
{
    Message m;
    m.role = role_from_string(doc.at("role").get<std::string>());
    m.turn_index = doc.value("turn", 0);
    m.token_count = doc.value("tokens", 0);
    const Json& c = doc.at("content");
    switch (m.role)
    {
        case Role::tool_call:
            m.content = ToolCall{c.at("name").get<std::string>(), c.value("arguments", Json::object()), c.value("id", "")};
            break;
        case Role::tool_result:
            m.content = c.at("ok").get<bool>() ? ToolResult::success(c.value("payload", Json())) : ToolResult::failure(c.at("error").get<std::string>());
            break;
        default: m.content = c.get<std::string>();
    }
    return m;
}

Json trajectory_record(const Trajectory& trajectory, int reward, double tcr)
{
    Json messages = Json::array();
    for (const auto& m: trajectory.messages)
        messages.push_back(to_json(m));
    Json tokens = Json::array();
    for (const auto& t: trajectory.token_records)
        tokens.push_back(Json::array({t.context_id, t.action_id, t.logprob_old, t.logprob_ref, t.mask}));
    Json j{
        {"task_id", trajectory.task_id},
        {"messages", std::move(messages)},
        {"termination", std::string(to_string(trajectory.termination))},
        {"reward", reward},
        {"tcr", tcr},
        {"token_records", std::move(tokens)},
        {"final_db_hash", hex64(trajectory.final_db.hash())},
    };
    if (!trajectory.note.empty())
        j["note"] = trajectory.note;
    return j;
}

TrajectoryRecord trajectory_from_record(const Json& doc)
{
    TrajectoryRecord rec;
    auto& t = rec.trajectory;
    t.task_id = doc.at("task_id").get<std::string>();
    for (const auto& m: doc.at("messages"))
        t.messages.push_back(message_from_json(m));
    t.termination = termination_from_string(doc.value("termination", "stop"));
    t.note = doc.value("note", "");
    for (const auto& tok: doc.value("token_records", Json::array()))
        t.token_records.push_back(TokenRecord{tok.at(0).get<int>(), tok.at(1).get<int>(), tok.at(2).get<double>(), tok.at(3).get<double>(), tok.at(4).get<bool>()});
    rec.reward = doc.value("reward", 0);
    rec.tcr = doc.value("tcr", 0.0);
    rec.final_db_hash = doc.value("final_db_hash", "");
    return rec;
}

std::vector<TrajectoryRecord> read_trajectory_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read " + path.string());
    std::vector<TrajectoryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try
        {
            out.push_back(trajectory_from_record(Json::parse(line)));
        }
        catch (const std::exception& e)
        {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace mtrl
