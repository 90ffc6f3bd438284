// SPDX-License-Identifier: Apache-2.0
#include "catch_amalgamated.hpp"

#include "mtrl/mock_server.hpp"
#include "mtrl/synth.hpp"

#include <fstream>
#include <unistd.h>

using namespace mtrl;

namespace
{

const std::filesystem::path kFixtures = MTRL_FIXTURE_DIR;

const Scenario& university()
{
    static const Scenario s = load_scenario_file(kFixtures / "university_scenario.json");
    return s;
}

const Scenario& anilist()
{
    static const Scenario s = load_scenario_file(kFixtures / "anilist_scenario.json");
    return s;
}

Json list_tool(const std::string& table)
{
    return Json{{"name", "list_" + table}, {"parameters", {{"type", "object"}, {"properties", Json::object()}}}, {"impl", {{"kind", "list"}, {"table", table}}}};
}

// Two tables whose ref fields are supplied by the caller.
Json two_table_scenario(const Json& a_fields, const Json& b_fields)
{
    return Json{{"scenario_id", "tiny"},
                {"domain_policy", "policy"},
                {"schemas", {{"a", {{"count", 3}, {"fields", a_fields}}}, {"b", {{"count", 3}, {"fields", b_fields}}}}},
                {"tools", {list_tool("a"), list_tool("b")}}};
}

ClientConfig fast(const std::string& base_url)
{
    ClientConfig cfg;
    cfg.base_url = base_url;
    cfg.max_retries = 0;
    cfg.backoff.clear();
    return cfg;
}

std::string dead_url()
{
    MockChatServer s;
    s.start();
    const std::string url = s.base_url();
    s.stop();
    return url;
}

SynthTrajectory example(const char* scenario, const char* conversation, bool remote, const std::string& judge_reply = "ACCEPT: policy followed.")
{
    MockPipelineOptions opts;
    opts.remote_tools = remote;
    opts.judge_reply = judge_reply;
    opts.rules = verification_rules_from_json(read_json_file(kFixtures / "verification_rules.json"));
    return run_mock_pipeline(load_scenario_file(kFixtures / scenario), read_json_file(kFixtures / conversation), opts);
}

std::vector<const Message*> with_role(const SynthTrajectory& t, Role r)
{
    std::vector<const Message*> out;
    for (const auto& m: t.messages)
        if (m.role == r)
            out.push_back(&m);
    return out;
}

std::filesystem::path temp_file(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("mtrl_synth_" + std::to_string(::getpid()) + "_" + name);
}

} // namespace

TEST_CASE("scenario loading")
{
    CHECK(university().tool_specs.size() == 8);
    CHECK(university().registry->contains("update_address_or_phone"));
    CHECK(university().seed_queries.size() == 1);
    CHECK(anilist().registry->contains("search_character"));
    CHECK(generate_memory(anilist(), 1).db.tables().at("characters").size() > 0);

    Json doc = read_json_file(kFixtures / "university_scenario.json");
    doc["schemas"]["orphans"] = Json{{"count", 1}, {"fields", {{"x", {{"type", "string"}}}}}};
    CHECK_THROWS_WITH(load_scenario(doc), Catch::Matchers::ContainsSubstring("not used by any tool"));

    Json bad_type = two_table_scenario(Json{{"x", {{"type", "colour"}}}}, Json{{"y", {{"type", "string"}}}});
    CHECK_THROWS_WITH(load_scenario(bad_type), Catch::Matchers::ContainsSubstring("unknown field type"));

    Json two_keys = two_table_scenario(Json{{"k1", {{"type", "key"}}}, {"k2", {{"type", "key"}}}}, Json{{"y", {{"type", "string"}}}});
    CHECK_THROWS_AS(load_scenario(two_keys), Error);

    Json bad_params = two_table_scenario(Json{{"x", {{"type", "string"}}}}, Json{{"y", {{"type", "string"}}}});
    bad_params["tools"][0]["parameters"] = Json::array();
    CHECK_THROWS_AS(load_scenario(bad_params), Error);
}

TEST_CASE("generated memory: determinism and referential integrity")
{
    const SyntheticMemory a = generate_memory(university(), 1);
    const SyntheticMemory b = generate_memory(university(), 1);
    const SyntheticMemory c = generate_memory(university(), 2);
    CHECK(a.db.serialize() == b.db.serialize());
    CHECK(a.db.serialize() != c.db.serialize());
    CHECK(a.seed == 1);
    CHECK(validate_memory(university(), a.db).empty());

    const Json& tables = a.db.tables();
    CHECK(tables.at("students").size() == 6);
    CHECK(tables.at("courses").size() == 8);
    CHECK(tables.at("enrollments").size() == 10);
    // Independent scan: every enrollment points at an existing student and course.
    for (const auto& [id, e]: tables.at("enrollments").items())
    {
        CHECK(tables.at("students").contains(e.at("student_id").get<std::string>()));
        CHECK(tables.at("courses").contains(e.at("course_code").get<std::string>()));
    }
    // Keys become record ids; the fixed student is always present.
    for (const auto& [id, s]: tables.at("students").items())
        CHECK(s.at("student_id") == id);
    const Json* fixed = a.db.record("students", "S32165498");
    REQUIRE(fixed != nullptr);
    CHECK(fixed->at("full_name") == "Ethan Williams");

    for (std::uint64_t seed = 0; seed < 50; ++seed)
        CHECK(validate_memory(university(), generate_memory(university(), seed).db).empty());
}

TEST_CASE("generated memory: bounds and unsatisfiable schemas")
{
    const Scenario plain = load_scenario(two_table_scenario(Json{{"x", {{"type", "string"}}}}, Json{{"r", {{"type", "ref"}, {"table", "a"}}}}));
    const SyntheticMemory empty = generate_memory(plain, 1, 0);
    CHECK(empty.db.tables().at("a").empty());
    CHECK(empty.db.tables().at("b").empty());
    CHECK(validate_memory(plain, empty.db).empty());
    CHECK(generate_memory(plain, 1, 2).db.tables().at("a").size() == 2);

    const Scenario cycle = load_scenario(two_table_scenario(Json{{"r", {{"type", "ref"}, {"table", "b"}}}}, Json{{"r", {{"type", "ref"}, {"table", "a"}}}}));
    CHECK_THROWS_WITH(generate_memory(cycle, 1), Catch::Matchers::ContainsSubstring("reference cycle"));

    const Scenario unknown = load_scenario(two_table_scenario(Json{{"r", {{"type", "ref"}, {"table", "zzz"}}}}, Json{{"y", {{"type", "string"}}}}));
    CHECK_THROWS_WITH(generate_memory(unknown, 1), Catch::Matchers::ContainsSubstring("unknown table"));

    Json zero = two_table_scenario(Json{{"x", {{"type", "string"}}}}, Json{{"r", {{"type", "ref"}, {"table", "a"}}}});
    zero["schemas"]["a"]["count"] = 0;
    CHECK_THROWS_WITH(generate_memory(load_scenario(zero), 1), Catch::Matchers::ContainsSubstring("empty table"));
}

TEST_CASE("validate_memory reports violations")
{
    Json tables = generate_memory(university(), 3).db.tables();
    auto& first_enrollment = tables["enrollments"].begin().value();
    first_enrollment["student_id"] = "S00000000";
    tables["students"]["S32165498"]["academic_year"] = "senior";
    const auto problems = validate_memory(university(), Database(tables));
    CHECK(problems.size() == 2);
}

TEST_CASE("interpreter backend")
{
    SyntheticMemory memory = generate_memory(university(), 1);
    const ToolResult r = simulate_tool(ToolCall{"get_student_record", {{"student_id", "S32165498"}}, {}}, memory, university(), ToolBackend::interpreter);
    REQUIRE(r.ok);
    CHECK(r.payload.at("full_name") == "Ethan Williams");

    const auto before = memory.db.version();
    const ToolResult w = simulate_tool(ToolCall{"update_address_or_phone", {{"student_id", "S32165498"}, {"phone", "555-123-4567"}}, {}}, memory, university(),
                                       ToolBackend::interpreter);
    REQUIRE(w.ok);
    CHECK(w.payload.at("message") == "Address/phone updated.");
    CHECK(memory.db.version() == before + 1);
    CHECK(memory.db.record("students", "S32165498")->at("phone") == "555-123-4567");
}

TEST_CASE("LLM backend echoing ground truth matches the interpreter")
{
    const SyntheticMemory truth = generate_memory(university(), 4);
    MockChatServer server;
    server.start();
    server.set_handler([&truth](const Json& req) {
        const Json call = Json::parse(req.at("messages").back().at("content").get<std::string>());
        Database db = truth.db;
        const ToolResult r = execute_tool(db, ToolCall{call.at("name"), call.at("arguments"), {}}, *university().registry);
        ChatResponse res;
        res.content = r.ok ? r.payload.dump() : Json{{"error", r.error_text}}.dump();
        return MockReply{200, to_json(res)};
    });
    ChatClient client(fast(server.base_url()));

    std::vector<ToolCall> reads{{"get_student_record", {{"student_id", "S32165498"}}, {}},
                                {"list_available_courses", {{"department", "Mathematics"}}, {}},
                                {"list_available_courses", Json::object(), {}},
                                {"get_course_details", {{"course_code", "CS000"}}, {}}};
    for (const auto& [id, course]: truth.db.tables().at("courses").items())
        reads.push_back(ToolCall{"get_course_details", {{"course_code", id}}, {}});
    for (const auto& call: reads)
    {
        SyntheticMemory m1 = truth;
        SyntheticMemory m2 = truth;
        const ToolResult interp = simulate_tool(call, m1, university(), ToolBackend::interpreter);
        const ToolResult llm = simulate_tool(call, m2, university(), ToolBackend::llm, &client);
        CHECK(interp == llm);
        CHECK(m2.db == truth.db);
    }

    // The tool model is prompted with the tool spec and the relevant memory.
    const std::vector<Json> requests = server.requests();
    const Json& system = requests.front().at("messages")[0];
    CHECK(system.at("content").get<std::string>().find("get_student_record") != std::string::npos);
    CHECK(system.at("content").get<std::string>().find("S32165498") != std::string::npos);
}

TEST_CASE("LLM backend errors")
{
    SyntheticMemory memory = generate_memory(university(), 1);
    CHECK(simulate_tool(ToolCall{"nope", Json::object(), {}}, memory, university(), ToolBackend::llm).error_text == "Error: unknown tool nope");
    CHECK(simulate_tool(ToolCall{"get_student_record", Json::object(), {}}, memory, university(), ToolBackend::llm).error_text.rfind(
              "Error: invalid arguments for get_student_record", 0) == 0);
    CHECK(simulate_tool(ToolCall{"get_student_record", {{"student_id", "S1"}}, {}}, memory, university(), ToolBackend::llm).error_text ==
          "Error: no tool model configured");
    // Side-channel tools never reach the model.
    CHECK(simulate_tool(ToolCall{"think", {{"thought", "x"}}, {}}, memory, university(), ToolBackend::llm).ok);

    ChatClient dead(fast(dead_url()));
    const ToolResult down = simulate_tool(ToolCall{"get_student_record", {{"student_id", "S1"}}, {}}, memory, university(), ToolBackend::llm, &dead);
    CHECK(down.error_text.rfind("Error: transport failure", 0) == 0);
}

TEST_CASE("parse_simulated_result and memory_view")
{
    CHECK(parse_simulated_result(R"({"a": 1})") == ToolResult::success(Json{{"a", 1}}));
    CHECK(parse_simulated_result(R"("plain")") == ToolResult::success("plain"));
    CHECK(parse_simulated_result(R"({"error": "Error: not found"})") == ToolResult::failure("Error: not found"));
    CHECK_FALSE(parse_simulated_result("sure, here you go").ok);

    const SyntheticMemory m = generate_memory(university(), 1);
    const ToolSpec& lookup = *university().registry->find("get_course_details");
    const std::string full = memory_view(lookup, m.db, 1 << 20);
    CHECK(full.find("students") == std::string::npos);
    CHECK(full.find("courses") != std::string::npos);
    const std::string cut = memory_view(lookup, m.db, 400);
    CHECK(cut.size() <= 400);
    CHECK(Json::parse(cut).is_object());
}

TEST_CASE("mock pipeline replays the university conversation")
{
    const SynthTrajectory t = example("university_scenario.json", "university_example1.json", false);
    CHECK(t.verdict == Verdict::accepted);
    CHECK(t.termination == Termination::stop);
    const auto results = with_role(t, Role::tool_result);
    REQUIRE_FALSE(results.empty());
    CHECK(results.back()->result().payload.at("message") == "Address/phone updated.");
    CHECK(t.messages.back().role == Role::user);
    CHECK(t.messages.back().text().find("###STOP###") != std::string::npos);
    CHECK(t.messages.front().role == Role::system);
    CHECK(t.messages.front().text() == university().domain_policy);
}

TEST_CASE("mock pipeline replays the character search over a remote tool server")
{
    const SynthTrajectory t = example("anilist_scenario.json", "university_example2.json", true);
    CHECK(t.verdict == Verdict::accepted);
    const auto calls = with_role(t, Role::tool_call);
    REQUIRE(calls.size() == 2);
    CHECK(calls[1]->call().arguments.at("amount") == 15);
    CHECK(calls[0]->call().arguments.at("term") == "Sakura");
}

TEST_CASE("a user who stops at once is rejected for not using tools")
{
    SyntheticMemory memory = generate_memory(university(), 1);
    SimulatedToolExecutor tools(university(), memory, ToolBackend::interpreter);
    ScriptedAgent agent({});
    SynthTrajectory t = synthesize_trajectory(university(), agent, ScriptedUser({"Never mind. ###STOP###"}), tools, memory, RolloutConfig{}, 1);
    CHECK(t.termination == Termination::stop);
    CHECK(t.messages.size() == 2);
    CHECK(dual_verify(t, VerificationRules{}, nullptr) == Verdict::rejected);
    CHECK(t.judge_rationale.find("no tool use") != std::string::npos);
}

TEST_CASE("protocol errors come back rejected")
{
    SyntheticMemory memory = generate_memory(university(), 1);
    SimulatedToolExecutor tools(university(), memory, ToolBackend::interpreter);
    ScriptedAgent agent({AgentStep{{Emission::text("a"), Emission::call("think", Json{{"thought", "x"}})}}});
    const SynthTrajectory t = synthesize_trajectory(university(), agent, ScriptedUser({"hi"}), tools, memory, RolloutConfig{}, 1);
    CHECK(t.verdict == Verdict::rejected);
    CHECK(t.judge_rationale.rfind("protocol error: ", 0) == 0);
}

TEST_CASE("dual verification")
{
    MockChatServer judge_server;
    judge_server.start();
    ChatClient judge(fast(judge_server.base_url()));
    const VerificationRules rules;

    SECTION("rules run first: an unanswered call is rejected without asking the judge")
    {
        SynthTrajectory t;
        t.messages = {Message::make_text(Role::system, "p", 1, 0), Message::make_text(Role::user, "hi", 1, 1),
                      Message::make_call(ToolCall{"get_course_details", {{"course_code", "CS1"}}, {}}, 1, 1),
                      Message::make_text(Role::agent_text, "done ###STOP###", 2, 1)};
        judge_server.enqueue_message(ChatResponse{std::string("ACCEPT"), {}, {}, {}, 1});
        CHECK(dual_verify(t, rules, &judge) == Verdict::rejected);
        CHECK(judge_server.hits() == 0);
        CHECK(t.judge_rationale.rfind("rule check failed: ", 0) == 0);
        CHECK_FALSE(rule_violations(t, rules).empty());
    }
    SECTION("the judge can reject a rule-passing trajectory")
    {
        SynthTrajectory t = example("university_scenario.json", "university_example1.json", false, "REJECT: the agent skipped confirmation.");
        CHECK(t.verdict == Verdict::rejected);
        CHECK(t.judge_rationale == "REJECT: the agent skipped confirmation.");
        CHECK(rule_violations(t, rules).empty());
    }
    SECTION("judge transport failure leaves the verdict unverified")
    {
        SynthTrajectory t = example("university_scenario.json", "university_example1.json", false);
        t.verdict = Verdict::unverified;
        ChatClient dead(fast(dead_url()));
        CHECK(dual_verify(t, rules, &dead) == Verdict::unverified);
        CHECK(t.judge_rationale.rfind("judge unavailable", 0) == 0);
    }
    SECTION("no judge configured")
    {
        SynthTrajectory t = example("university_scenario.json", "university_example1.json", false);
        t.verdict = Verdict::unverified;
        CHECK(dual_verify(t, rules, nullptr) == Verdict::unverified);
    }
    SECTION("judge sees the transcript")
    {
        SynthTrajectory t = example("university_scenario.json", "university_example1.json", false);
        t.verdict = Verdict::unverified;
        judge_server.enqueue_message(ChatResponse{std::string("ACCEPT - fine"), {}, {}, {}, 1});
        CHECK(dual_verify(t, rules, &judge) == Verdict::accepted);
        const Json req = judge_server.requests().at(0);
        CHECK(req.at("messages")[0].at("content") == rules.judge_prompt);
        CHECK(req.at("messages")[1].at("content") == render_transcript(t.messages));
    }
}

TEST_CASE("rule checks")
{
    const VerificationRules rules;
    SynthTrajectory t;
    t.termination = Termination::turn_cap;
    t.messages = {Message::make_text(Role::system, "p", 1, 0), Message::make_text(Role::system, "again", 1, 0),
                  Message::make_result(ToolResult::success(""), 1, 1)};
    CHECK(rule_violations(t, rules).size() >= 3);

    VerificationRules lax;
    lax.min_successful_tool_calls = 0;
    lax.sentinel_terminated = false;
    lax.role_alternation = false;
    lax.all_calls_answered = false;
    CHECK(rule_violations(t, lax).empty());

    const VerificationRules back = verification_rules_from_json(to_json(rules));
    CHECK(to_json(back) == to_json(rules));
    CHECK_THROWS_AS(verification_rules_from_json(Json{{"accept_token", ""}}), Error);
}

TEST_CASE("SFT export and import")
{
    const SynthTrajectory one = example("university_scenario.json", "university_example1.json", false);
    const SynthTrajectory two = example("anilist_scenario.json", "university_example2.json", true);
    const auto path = temp_file("sft.jsonl");
    export_sft({one, two}, path);

    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line))
    {
        const Json rec = Json::parse(line);
        CHECK(rec.at("verdict") == "accepted");
        CHECK(rec.at("messages")[0].at("role") == "system");
        ++lines;
    }
    CHECK(lines == 2);

    const auto back = import_sft(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].messages == one.messages);
    CHECK(back[1].messages == two.messages);
    CHECK(back[1].scenario_id == two.scenario_id);

    // Function-calling format for the assistant and tool turns.
    const Json rec = sft_record(one);
    bool saw_call = false;
    for (const auto& m: rec.at("messages"))
        if (m.contains("tool_calls"))
        {
            saw_call = true;
            CHECK(m.at("role") == "assistant");
            CHECK(m.at("tool_calls")[0].at("type") == "function");
        }
    CHECK(saw_call);

    SynthTrajectory pending = one;
    pending.verdict = Verdict::unverified;
    const auto refused = temp_file("refused.jsonl");
    CHECK_THROWS_WITH(export_sft({one, pending}, refused), Catch::Matchers::ContainsSubstring("trajectory 1"));
    CHECK_FALSE(std::filesystem::exists(refused));
    std::filesystem::remove(path);
}

TEST_CASE("recorded conversations")
{
    const Json conv = read_json_file(kFixtures / "university_example1.json");
    const ReplayScript script = replay_script(conv);
    const auto messages = conversation_messages(conv);
    CHECK(messages.size() == 15);
    CHECK(script.tool.size() == script.tool_results.size());
    CHECK(script.agent.size() + script.user.size() + script.tool.size() == messages.size());
    CHECK_THROWS_AS(replay_script(Json{{"messages", {{{"role", "tool"}, {"content", "x"}}}}}), Error);
    CHECK(scenario_task(university(), std::make_shared<const Database>(), 3).user_scenario == university().seed_queries[0]);
}
