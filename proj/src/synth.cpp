// SPDX-License-Identifier: Apache-2.0
#include "mtrl/synth.hpp"

#include "mtrl/mock_server.hpp"
#include "mtrl/policy.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace mtrl
{

// --- scenario --------------------------------------------------------------

namespace
{

const std::set<std::string, std::less<>>& field_types()
{
    static const std::set<std::string, std::less<>> types{"key", "name", "date", "phone", "string", "integer", "number", "boolean", "enum", "ref"};
    return types;
}

std::vector<std::string> impl_tables(const ToolSpec& spec)
{
    std::vector<std::string> out;
    if (spec.impl.contains("table") && spec.impl["table"].is_string())
        out.push_back(spec.impl["table"].get<std::string>());
    for (const auto& t: spec.impl.value("tables", Json::array()))
        out.push_back(t.get<std::string>());
    return out;
}

} // namespace

Scenario load_scenario(const Json& doc)
{
    if (!doc.is_object())
        throw Error("scenario document must be an object");
    Scenario s;
    s.id = doc.value("scenario_id", "scenario");
    s.domain_policy = doc.value("domain_policy", "");
    s.schemas = doc.value("schemas", Json::object());
    s.fixed_records = doc.value("fixed_records", Json::object());
    s.seed_queries = doc.value("seed_queries", std::vector<std::string>{});

    auto registry = std::make_shared<ToolRegistry>();
    std::set<std::string> referenced;
    for (const auto& t: doc.value("tools", Json::array()))
    {
        ToolSpec spec = tool_spec_from_json(t);
        if (!spec.parameters.is_object() || spec.parameters.value("type", "") != "object")
            throw Error("tool '" + spec.name + "': parameters must be an object schema");
        for (auto& table: impl_tables(spec))
            referenced.insert(table);
        registry->add(spec);
        s.tool_specs.push_back(std::move(spec));
    }
    s.registry = registry;

    for (auto& [table, schema]: s.schemas.items())
    {
        if (!schema.is_object() || !schema.contains("fields") || !schema["fields"].is_object())
            throw Error("schema '" + table + "' needs a fields object");
        int keys = 0;
        for (auto& [field, def]: schema["fields"].items())
        {
            const std::string type = def.value("type", "");
            if (!field_types().contains(type))
                throw Error("schema '" + table + "." + field + "': unknown field type '" + type + "'");
            if (type == "enum" && (!def.contains("values") || def["values"].empty()))
                throw Error("schema '" + table + "." + field + "': enum needs values");
            if (type == "ref" && !def.contains("table"))
                throw Error("schema '" + table + "." + field + "': ref needs a table");
            keys += type == "key" ? 1 : 0;
        }
        if (keys > 1)
            throw Error("schema '" + table + "' has more than one key field");
        if (!referenced.contains(table))
            throw Error("schema '" + table + "' is not used by any tool");
    }
    return s;
}

Scenario load_scenario_file(const std::filesystem::path& path)
{
    return load_scenario(read_json_file(path));
}

// --- memory ----------------------------------------------------------------

namespace
{

std::vector<std::string> dependency_order(const Json& schemas)
{
    std::map<std::string, std::set<std::string>> deps;
    for (auto& [table, schema]: schemas.items())
    {
        auto& d = deps[table];
        for (auto& [field, def]: schema["fields"].items())
            if (def.value("type", "") == "ref")
            {
                const std::string target = def["table"].get<std::string>();
                if (!schemas.contains(target))
                    throw Error("unsatisfiable schema: " + table + "." + field + " refers to unknown table '" + target + "'");
                d.insert(target);
            }
    }
    std::vector<std::string> order;
    std::set<std::string> placed;
    while (order.size() < deps.size())
    {
        bool progress = false;
        for (const auto& [table, d]: deps)
        {
            if (placed.contains(table))
                continue;
            bool ready = true;
            for (const auto& t: d)
                ready = ready && placed.contains(t);
            if (ready)
            {
                order.push_back(table);
                placed.insert(table);
                progress = true;
            }
        }
        if (!progress)
            throw Error("unsatisfiable schema: reference cycle among tables");
    }
    return order;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi)
{
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

std::string digits(std::mt19937_64& rng, int n)
{
    std::string s;
    for (int i = 0; i < n; ++i)
        s += static_cast<char>('0' + uniform_int(rng, 0, 9));
    return s;
}

Json generate_value(const std::string& field, const Json& def, std::mt19937_64& rng, const Json& tables)
{
    static const std::vector<std::string> first{"Ethan", "Olivia", "Liam", "Ava", "Noah", "Mia", "Lucas", "Chen", "Sofia", "Yusuf"};
    static const std::vector<std::string> last{"Williams", "Johnson", "Garcia", "Kim", "Patel", "Nguyen", "Smith", "Rossi"};
    const std::string type = def.value("type", "");
    if (type == "key")
        return def.value("prefix", "") + digits(rng, def.value("digits", 8));
    if (type == "name")
        return first[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(first.size()) - 1))] + " "
            + last[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(last.size()) - 1))];
    if (type == "date")
    {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", uniform_int(rng, def.value("min_year", 1990), def.value("max_year", 2006)), uniform_int(rng, 1, 12),
                      uniform_int(rng, 1, 28));
        return std::string(buf);
    }
    if (type == "phone")
        return "555-" + digits(rng, 3) + "-" + digits(rng, 4);
    if (type == "string")
    {
        if (def.contains("choices") && !def["choices"].empty())
            return def["choices"][static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(def["choices"].size()) - 1))];
        return field + "-" + digits(rng, 4);
    }
    if (type == "integer")
        return uniform_int(rng, def.value("min", 0), def.value("max", 100));
    if (type == "number")
    {
        const double lo = def.value("min", 0.0);
        const double hi = def.value("max", 100.0);
        return std::round((lo + uniform01(rng) * (hi - lo)) * 100.0) / 100.0;
    }
    if (type == "boolean")
        return uniform_int(rng, 0, 1) == 1;
    if (type == "enum")
        return def["values"][static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(def["values"].size()) - 1))];
    // ref
    const Json& target = tables.at(def["table"].get<std::string>());
    auto it = target.begin();
    std::advance(it, uniform_int(rng, 0, static_cast<int>(target.size()) - 1));
    return it.key();
}

std::string key_field(const Json& schema)
{
    for (auto& [field, def]: schema["fields"].items())
        if (def.value("type", "") == "key")
            return field;
    return "";
}

} // namespace

SyntheticMemory generate_memory(const Scenario& scenario, std::uint64_t seed, std::size_t bound)
{
    Json tables = Json::object();
    for (const auto& table: dependency_order(scenario.schemas))
    {
        const Json& schema = scenario.schemas[table];
        const std::size_t n = std::min<std::size_t>(schema.value("count", bound), bound);
        Json records = Json::object();
        const Json fixed = scenario.fixed_records.value(table, Json::object());
        for (auto& [id, rec]: fixed.items())
            if (records.size() < n)
                records[id] = rec;

        std::mt19937_64 rng(mix_seed(seed, fnv1a64(table)));
        const std::string key = key_field(schema);
        for (auto& [field, def]: schema["fields"].items())
            if (def.value("type", "") == "ref" && n > records.size() && tables[def["table"].get<std::string>()].empty())
                throw Error("unsatisfiable schema: " + table + "." + field + " refers to empty table '" + def["table"].get<std::string>() + "'");

        for (std::size_t k = 0; records.size() < n; ++k)
        {
            if (k > n * 100 + 100)
                throw Error("unsatisfiable schema: cannot generate unique keys for '" + table + "'");
            Json rec = Json::object();
            for (auto& [field, def]: schema["fields"].items())
                rec[field] = generate_value(field, def, rng, tables);
            const std::string id = key.empty() ? table + "_" + std::to_string(records.size() + 1) : rec[key].get<std::string>();
            if (records.contains(id))
                continue;
            records[id] = std::move(rec);
        }
        tables[table] = std::move(records);
    }
    return SyntheticMemory{Database(std::move(tables)), seed, "mtrl-memgen/1"};
}

std::vector<std::string> validate_memory(const Scenario& scenario, const Database& db)
{
    std::vector<std::string> problems;
    const Json& tables = db.tables();
    for (auto& [table, schema]: scenario.schemas.items())
    {
        if (!tables.contains(table))
        {
            problems.push_back("missing table " + table);
            continue;
        }
        const std::string key = key_field(schema);
        for (auto& [id, rec]: tables[table].items())
        {
            const std::string where = table + "." + id;
            if (!key.empty() && rec.value(key, Json()) != Json(id))
                problems.push_back(where + ": key field does not match record id");
            for (auto& [field, def]: schema["fields"].items())
            {
                if (!rec.contains(field))
                {
                    problems.push_back(where + ": missing field " + field);
                    continue;
                }
                const Json& v = rec[field];
                const std::string type = def.value("type", "");
                bool ok = true;
                if (type == "integer")
                    ok = v.is_number_integer();
                else if (type == "number")
                    ok = v.is_number();
                else if (type == "boolean")
                    ok = v.is_boolean();
                else if (type == "enum")
                    ok = std::find(def["values"].begin(), def["values"].end(), v) != def["values"].end();
                else
                    ok = v.is_string();
                if (ok && type == "ref")
                {
                    const std::string target = def["table"].get<std::string>();
                    ok = tables.contains(target) && tables[target].contains(v.get<std::string>());
                }
                if (!ok)
                    problems.push_back(where + "." + field + ": invalid " + type + " value " + v.dump());
            }
        }
    }
    return problems;
}

// --- tool simulation -------------------------------------------------------

std::string_view to_string(ToolBackend backend)
{
    return backend == ToolBackend::llm ? "llm" : "interpreter";
}

ToolBackend tool_backend_from_string(std::string_view text)
{
    if (text == "llm")
        return ToolBackend::llm;
    if (text == "interpreter")
        return ToolBackend::interpreter;
    throw Error("unknown tool backend '" + std::string(text) + "'");
}

std::string memory_view(const ToolSpec& spec, const Database& db, std::size_t max_chars)
{
    Json view = Json::object();
    auto tables = impl_tables(spec);
    if (tables.empty())
        view = db.tables();
    else
        for (const auto& t: tables)
            if (db.has_table(t))
                view[t] = db.tables()[t];
    std::string text = canonical_dump(view);
    while (text.size() > max_chars)
    {
        // Drop the last record of the largest table until it fits.
        std::string largest;
        std::size_t most = 0;
        for (auto& [t, recs]: view.items())
            if (recs.size() > most)
            {
                most = recs.size();
                largest = t;
            }
        if (most == 0)
            break;
        auto& recs = view[largest];
        recs.erase(std::prev(recs.end()).key());
        text = canonical_dump(view);
    }
    return text;
}

ToolResult parse_simulated_result(const std::string& reply)
{
    Json parsed = Json::parse(reply, nullptr, false);
    if (parsed.is_discarded())
        return ToolResult::failure("Error: tool simulator returned unparseable output");
    if (parsed.is_object() && parsed.size() == 1 && parsed.contains("error") && parsed["error"].is_string())
        return ToolResult::failure(parsed["error"].get<std::string>());
    return ToolResult::success(std::move(parsed));
}

ToolResult simulate_tool(const ToolCall& call, SyntheticMemory& memory, const Scenario& scenario, ToolBackend backend, const ChatClient* tool_client,
                         const ToolSimulatorConfig& cfg)
{
    if (backend == ToolBackend::interpreter)
        return execute_tool(memory.db, call, *scenario.registry);

    const ToolSpec* spec = scenario.registry->find(call.name);
    if (spec == nullptr)
        return ToolResult::failure("Error: unknown tool " + call.name);
    if (auto err = validate_arguments(spec->parameters, call.arguments))
        return ToolResult::failure("Error: invalid arguments for " + spec->name + ": " + *err);
    if (spec->side_channel != SideChannel::database)
        return execute_tool(memory.db, call, *scenario.registry);
    if (tool_client == nullptr)
        return ToolResult::failure("Error: no tool model configured");

    std::string prompt = cfg.prompt_template;
    auto put = [&prompt](std::string_view key, const std::string& value) {
        if (auto pos = prompt.find(key); pos != std::string::npos)
            prompt.replace(pos, key.size(), value);
    };
    put("{{tool}}", to_json(*spec).dump());
    put("{{memory}}", memory_view(*spec, memory.db, cfg.max_memory_chars));
    ChatRequest req{cfg.role.model, {ChatMessage{"system", prompt, {}, {}}, ChatMessage{"user", Json{{"name", call.name}, {"arguments", call.arguments}}.dump(), {}, {}}},
                    {}, cfg.role.temperature, cfg.role.max_tokens};
    try
    {
        ChatResponse res = tool_client->chat(req);
        return parse_simulated_result(res.content.value_or(""));
    }
    catch (const std::exception& e)
    {
        return ToolResult::failure(std::string("Error: transport failure: ") + e.what());
    }
}

SimulatedToolExecutor::SimulatedToolExecutor(const Scenario& scenario, SyntheticMemory memory, ToolBackend backend, std::shared_ptr<const ChatClient> client,
                                             ToolSimulatorConfig cfg)
    : _scenario(scenario), _memory(std::move(memory)), _backend(backend), _client(std::move(client)), _cfg(std::move(cfg))
{
}

ToolResult SimulatedToolExecutor::execute(const ToolCall& call)
{
    return simulate_tool(call, _memory, _scenario, _backend, _client.get(), _cfg);
}

// --- synthesis and verification --------------------------------------------

std::string_view to_string(Verdict verdict)
{
    switch (verdict)
    {
        case Verdict::unverified: return "unverified";
        case Verdict::accepted: return "accepted";
        case Verdict::rejected: return "rejected";
    }
    return "unverified";
}

Verdict verdict_from_string(std::string_view text)
{
    for (auto v: {Verdict::unverified, Verdict::accepted, Verdict::rejected})
        if (to_string(v) == text)
            return v;
    throw Error("unknown verdict '" + std::string(text) + "'");
}

Task scenario_task(const Scenario& scenario, std::shared_ptr<const Database> memory, std::uint64_t seed)
{
    Task task;
    task.id = scenario.id;
    task.domain_id = scenario.id;
    task.system_policy = scenario.domain_policy;
    if (!scenario.seed_queries.empty())
        task.user_scenario = scenario.seed_queries[seed % scenario.seed_queries.size()];
    task.initial_db = std::move(memory);
    return task;
}

SynthTrajectory synthesize_trajectory(const Scenario& scenario, const AgentPolicy& agent, const UserSimulator& user, ToolExecutor& tools,
                                      const SyntheticMemory& memory, const RolloutConfig& cfg, std::uint64_t seed)
{
    const Task task = scenario_task(scenario, std::make_shared<const Database>(memory.db), seed);
    Trajectory t = run_rollout(task, agent, user, tools, cfg, seed);
    SynthTrajectory out{scenario.id, std::move(t.messages), t.termination, Verdict::unverified, {}, std::move(t.final_db)};
    if (out.termination == Termination::protocol_error)
    {
        out.verdict = Verdict::rejected;
        out.judge_rationale = "protocol error: " + t.note;
    }
    return out;
}

Json to_json(const VerificationRules& r)
{
    return Json{
        {"version", r.version},
        {"role_alternation", r.role_alternation},
        {"all_calls_answered", r.all_calls_answered},
        {"sentinel_terminated", r.sentinel_terminated},
        {"min_successful_tool_calls", r.min_successful_tool_calls},
        {"accept_token", r.accept_token},
        {"judge_prompt", r.judge_prompt},
        {"judge_model", r.judge.model},
    };
}

VerificationRules verification_rules_from_json(const Json& doc)
{
    VerificationRules r;
    r.version = doc.value("version", r.version);
    r.role_alternation = doc.value("role_alternation", r.role_alternation);
    r.all_calls_answered = doc.value("all_calls_answered", r.all_calls_answered);
    r.sentinel_terminated = doc.value("sentinel_terminated", r.sentinel_terminated);
    r.min_successful_tool_calls = doc.value("min_successful_tool_calls", r.min_successful_tool_calls);
    r.accept_token = doc.value("accept_token", r.accept_token);
    r.judge_prompt = doc.value("judge_prompt", r.judge_prompt);
    r.judge.model = doc.value("judge_model", r.judge.model);
    if (r.accept_token.empty())
        throw Error("verification rules need an accept_token");
    return r;
}

std::vector<std::string> rule_violations(const SynthTrajectory& t, const VerificationRules& rules)
{
    std::vector<std::string> out;
    const auto& m = t.messages;
    if (rules.role_alternation)
    {
        std::optional<Role> prev;
        for (std::size_t i = 0; i < m.size(); ++i)
        {
            const Role r = m[i].role;
            bool ok = true;
            switch (r)
            {
                case Role::system: ok = i == 0; break;
                case Role::user: ok = !prev || *prev == Role::system || *prev == Role::agent_text; break;
                case Role::agent_text:
                case Role::tool_call: ok = prev && (*prev == Role::user || *prev == Role::tool_result); break;
                case Role::tool_result: break; // pairing is checked below
            }
            if (!ok)
            {
                out.push_back("role alternation broken at message " + std::to_string(i) + " (" + std::string(to_string(r)) + ")");
                break;
            }
            prev = r;
        }
    }
    if (rules.all_calls_answered)
        for (std::size_t i = 0; i < m.size(); ++i)
        {
            if (m[i].role == Role::tool_call && (i + 1 >= m.size() || m[i + 1].role != Role::tool_result))
                out.push_back("unanswered tool call at message " + std::to_string(i));
            if (m[i].role == Role::tool_result && (i == 0 || m[i - 1].role != Role::tool_call))
                out.push_back("tool result without a call at message " + std::to_string(i));
        }
    if (rules.sentinel_terminated && !is_clean(t.termination))
        out.push_back("not sentinel-terminated (" + std::string(to_string(t.termination)) + ")");
    int successes = 0;
    for (const auto& msg: m)
        if (msg.role == Role::tool_result && msg.result().ok)
            ++successes;
    if (successes < rules.min_successful_tool_calls)
        out.push_back(successes == 0 ? "no tool use" : "too few successful tool calls");
    return out;
}

std::string render_transcript(const std::vector<Message>& messages)
{
    std::string out;
    for (const auto& m: messages)
    {
        out += to_string(m.role);
        out += ": ";
        switch (m.role)
        {
            case Role::tool_call: out += m.call().name + " " + m.call().arguments.dump(); break;
            case Role::tool_result: out += m.result().render(); break;
            default: out += m.text();
        }
        out += "\n";
    }
    return out;
}

Verdict dual_verify(SynthTrajectory& t, const VerificationRules& rules, const ChatClient* judge)
{
    if (t.verdict != Verdict::unverified)
        return t.verdict;
    auto failed = rule_violations(t, rules);
    if (!failed.empty())
    {
        t.verdict = Verdict::rejected;
        t.judge_rationale = "rule check failed: ";
        for (std::size_t i = 0; i < failed.size(); ++i)
            t.judge_rationale += (i ? "; " : "") + failed[i];
        return t.verdict;
    }
    if (judge == nullptr)
    {
        t.judge_rationale = "no judge configured";
        return t.verdict;
    }
    ChatRequest req{rules.judge.model, {ChatMessage{"system", rules.judge_prompt, {}, {}}, ChatMessage{"user", render_transcript(t.messages), {}, {}}}, {},
                    rules.judge.temperature, rules.judge.max_tokens};
    try
    {
        const std::string reply = judge->chat(req).content.value_or("");
        t.verdict = reply.find(rules.accept_token) != std::string::npos ? Verdict::accepted : Verdict::rejected;
        t.judge_rationale = reply;
    }
    catch (const TransportError& e)
    {
        t.judge_rationale = std::string("judge unavailable: ") + e.what();
    }
    return t.verdict;
}

// --- SFT corpus ------------------------------------------------------------

Json sft_record(const SynthTrajectory& t)
{
    Json messages = Json::array();
    std::string call_id;
    for (std::size_t i = 0; i < t.messages.size(); ++i)
    {
        const Message& m = t.messages[i];
        Json j;
        switch (m.role)
        {
            case Role::system: j = Json{{"role", "system"}, {"content", m.text()}}; break;
            case Role::user: j = Json{{"role", "user"}, {"content", m.text()}}; break;
            case Role::agent_text: j = Json{{"role", "assistant"}, {"content", m.text()}}; break;
            case Role::tool_call:
            {
                ToolCall c = m.call();
                call_id = c.id.empty() ? "call_" + std::to_string(i) : c.id;
                c.id = call_id;
                j = to_json(ChatMessage{"assistant", std::nullopt, {c}, {}});
                break;
            }
            case Role::tool_result:
            {
                const ToolResult& r = m.result();
                j = Json{{"role", "tool"}, {"tool_call_id", call_id}, {"is_error", !r.ok}};
                if (!r.ok)
                    j["content"] = r.error_text;
                else if (r.payload.is_string())
                    j["content"] = r.payload;
                else
                {
                    j["content"] = r.payload.dump();
                    j["structured"] = true;
                }
                break;
            }
        }
        j["turn"] = m.turn_index;
        j["tokens"] = m.token_count;
        messages.push_back(std::move(j));
    }
    return Json{
        {"scenario_id", t.scenario_id},
        {"termination", std::string(to_string(t.termination))},
        {"verdict", std::string(to_string(t.verdict))},
        {"judge_rationale", t.judge_rationale},
        {"messages", std::move(messages)},
    };
}

SynthTrajectory sft_record_to_trajectory(const Json& record)
{
    SynthTrajectory t;
    t.scenario_id = record.value("scenario_id", "");
    t.termination = termination_from_string(record.value("termination", "stop"));
    t.verdict = verdict_from_string(record.value("verdict", "unverified"));
    t.judge_rationale = record.value("judge_rationale", "");
    for (const auto& j: record.at("messages"))
    {
        const std::string role = j.at("role").get<std::string>();
        const int turn = j.value("turn", 0);
        const int tokens = j.value("tokens", 0);
        if (role == "system" || role == "user")
            t.messages.push_back(Message::make_text(role == "system" ? Role::system : Role::user, j.at("content").get<std::string>(), tokens, turn));
        else if (role == "assistant" && j.contains("tool_calls") && !j["tool_calls"].empty())
        {
            for (const auto& c: chat_message_from_json(j).tool_calls)
                t.messages.push_back(Message::make_call(c, tokens, turn));
        }
        else if (role == "assistant")
            t.messages.push_back(Message::make_text(Role::agent_text, j.at("content").get<std::string>(), tokens, turn));
        else if (role == "tool")
        {
            const std::string content = j.at("content").get<std::string>();
            ToolResult r = j.value("is_error", false) ? ToolResult::failure(content)
                : j.value("structured", false)       ? ToolResult::success(Json::parse(content))
                                                     : ToolResult::success(content);
            t.messages.push_back(Message::make_result(std::move(r), tokens, turn));
        }
        else
            throw Error("unknown SFT message role '" + role + "'");
    }
    return t;
}

void export_sft(const std::vector<SynthTrajectory>& trajectories, const std::filesystem::path& path)
{
    std::string text;
    for (std::size_t i = 0; i < trajectories.size(); ++i)
    {
        if (trajectories[i].verdict != Verdict::accepted)
            throw Error("export_sft: trajectory " + std::to_string(i) + " is " + std::string(to_string(trajectories[i].verdict)) + ", not accepted");
        text += sft_record(trajectories[i]).dump() + "\n";
    }
    write_text_file(path, text);
}

std::vector<SynthTrajectory> import_sft(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read " + path.string());
    std::vector<SynthTrajectory> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            out.push_back(sft_record_to_trajectory(Json::parse(line)));
    return out;
}

// --- mocked pipeline -------------------------------------------------------

namespace
{

ToolCall recorded_call(const Json& entry, std::size_t index)
{
    const Json& c = entry.at("tool_call");
    return ToolCall{c.at("name").get<std::string>(), c.value("arguments", Json::object()), "call_" + std::to_string(index)};
}

ToolResult recorded_result(const Json& entry)
{
    if (entry.value("is_error", false))
        return ToolResult::failure(entry.at("content").get<std::string>());
    return ToolResult::success(entry.at("content"));
}

} // namespace

ReplayScript replay_script(const Json& conversation)
{
    ReplayScript s;
    std::optional<ToolCall> last_call;
    std::size_t index = 0;
    for (const auto& entry: conversation.at("messages"))
    {
        const std::string role = entry.at("role").get<std::string>();
        if (role == "user")
            s.user.push_back(ChatResponse{entry.at("content").get<std::string>(), {}, {}, std::nullopt, 1});
        else if (role == "assistant" && entry.contains("tool_call"))
        {
            last_call = recorded_call(entry, index);
            s.agent.push_back(ChatResponse{std::nullopt, {*last_call}, {}, std::nullopt, 1});
        }
        else if (role == "assistant")
            s.agent.push_back(ChatResponse{entry.at("content").get<std::string>(), {}, {}, std::nullopt, 1});
        else if (role == "tool")
        {
            ToolResult r = recorded_result(entry);
            s.tool.push_back(ChatResponse{r.ok ? r.payload.dump() : Json{{"error", r.error_text}}.dump(), {}, {}, std::nullopt, 1});
            if (!last_call)
                throw Error("recorded tool result without a preceding call");
            s.tool_results.emplace_back(*last_call, std::move(r));
            last_call.reset();
        }
        else
            throw Error("unknown recorded role '" + role + "'");
        ++index;
    }
    return s;
}

std::vector<Message> conversation_messages(const Json& conversation)
{
    std::vector<Message> out;
    std::size_t index = 0;
    for (const auto& entry: conversation.at("messages"))
    {
        const std::string role = entry.at("role").get<std::string>();
        if (role == "user")
            out.push_back(Message::make_text(Role::user, entry.at("content").get<std::string>(), 0, 0));
        else if (role == "assistant" && entry.contains("tool_call"))
            out.push_back(Message::make_call(recorded_call(entry, index), 0, 0));
        else if (role == "assistant")
            out.push_back(Message::make_text(Role::agent_text, entry.at("content").get<std::string>(), 0, 0));
        else
            out.push_back(Message::make_result(recorded_result(entry), 0, 0));
        ++index;
    }
    return out;
}

SynthTrajectory run_mock_pipeline(const Scenario& scenario, const Json& conversation, const MockPipelineOptions& options)
{
    ReplayScript script = replay_script(conversation);
    std::map<std::string, std::deque<ChatResponse>> queues{
        {"agent", {script.agent.begin(), script.agent.end()}},
        {"user", {script.user.begin(), script.user.end()}},
        {"tool", {script.tool.begin(), script.tool.end()}},
    };
    const std::string judge_model = options.rules.judge.model;
    const std::string judge_reply = options.judge_reply;

    MockChatServer chat;
    chat.set_handler([&queues, judge_model, judge_reply](const Json& request) {
        const std::string model = request.value("model", "");
        if (model == judge_model)
            return MockReply{200, to_json(ChatResponse{judge_reply, {}, {}, std::nullopt, 1})};
        auto it = queues.find(model);
        if (it == queues.end() || it->second.empty())
            return MockReply{400, Json{{"error", "no recorded reply for " + model}}};
        ChatResponse r = std::move(it->second.front());
        it->second.pop_front();
        return MockReply{200, to_json(r)};
    });
    chat.start();

    ClientConfig ccfg;
    ccfg.base_url = chat.base_url();
    ccfg.max_retries = 0;
    ccfg.backoff.clear();
    ccfg.timeout = std::chrono::milliseconds(10000);
    auto client = std::make_shared<const ChatClient>(ccfg);

    LlmAgentPolicy agent(client, LlmRoleConfig{"agent", 1.0, 1024});
    LlmUserConfig ucfg;
    ucfg.role.model = "user";
    ucfg.prompt_template = options.user_prompt_template;
    LlmUserSimulator user(client, ucfg);

    SyntheticMemory memory = generate_memory(scenario, options.seed);
    RolloutConfig rcfg;
    rcfg.user_mode = UserMode::llm;

    std::unique_ptr<MockToolServer> tool_server;
    std::unique_ptr<ToolExecutor> executor;
    if (options.remote_tools)
    {
        tool_server = std::make_unique<MockToolServer>(scenario.tool_specs, script.tool_results);
        tool_server->start();
        ClientConfig tcfg = ccfg;
        tcfg.base_url = tool_server->base_url();
        executor = std::make_unique<RemoteToolExecutor>(tcfg, memory.db);
        rcfg.tool_execution = ToolExecution::remote_executor;
    }
    else
    {
        executor = std::make_unique<SimulatedToolExecutor>(scenario, memory, ToolBackend::llm, client);
        rcfg.tool_execution = ToolExecution::llm_simulated;
    }

    SynthTrajectory t = synthesize_trajectory(scenario, agent, user, *executor, memory, rcfg, options.seed);
    dual_verify(t, options.rules, client.get());
    return t;
}

} // namespace mtrl
