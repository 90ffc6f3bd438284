// SPDX-License-Identifier: Apache-2.0
#include "catch_amalgamated.hpp"

#include "mtrl/client.hpp"
#include "mtrl/domain.hpp"
#include "mtrl/mock_server.hpp"
#include "mtrl/participants.hpp"
#include "mtrl/rollout.hpp"

#include <cstdlib>
#include <unistd.h>

using namespace mtrl;

namespace
{

const std::filesystem::path kFixtures = MTRL_FIXTURE_DIR;

const DomainBundle& retail()
{
    static const DomainBundle bundle = load_domain_file(kFixtures / "retail_domain.json");
    return bundle;
}

ClientConfig fast(const std::string& base_url, int retries = 0)
{
    ClientConfig cfg;
    cfg.base_url = base_url;
    cfg.max_retries = retries;
    cfg.backoff.clear();
    cfg.timeout = std::chrono::milliseconds(5000);
    return cfg;
}

ChatResponse text_reply(const std::string& text)
{
    ChatResponse r;
    r.content = text;
    return r;
}

ChatRequest simple_request()
{
    return ChatRequest{"agent", {ChatMessage{"user", "hello", {}, {}}}, {}, 0.0, 64};
}

// A port with nothing listening on it.
std::string dead_url()
{
    MockChatServer s;
    s.start();
    const std::string url = s.base_url();
    s.stop();
    return url;
}

} // namespace

TEST_CASE("canned assistant message comes back unchanged")
{
    MockChatServer server;
    server.start();
    server.enqueue_message(text_reply("Hi! How can I help you today?"));
    const ChatResponse r = ChatClient(fast(server.base_url())).chat(simple_request());
    CHECK(r.content == "Hi! How can I help you today?");
    CHECK(r.tool_calls.empty());
    CHECK(r.attempts == 1);
    REQUIRE(server.requests().size() == 1);
    CHECK(server.requests()[0].at("model") == "agent");
    CHECK(server.requests()[0].at("messages")[0].at("content") == "hello");
}

TEST_CASE("tool calls are parsed and checked against the declared schemas")
{
    MockChatServer server;
    server.start();
    const std::vector<ToolSpec> tools(retail().registry->specs().begin(), retail().registry->specs().end());

    ChatResponse calls;
    calls.tool_calls = {ToolCall{"get_order_details", {{"order_id", "#W5061109"}}, "call_1"}, ToolCall{"get_order_details", {{"order_id", 7}}, "call_2"},
                        ToolCall{"launch_rocket", Json::object(), "call_3"}};
    server.enqueue_message(calls);
    ChatRequest req = simple_request();
    req.tools = tools;
    const ChatResponse r = ChatClient(fast(server.base_url())).chat(req);
    REQUIRE(r.tool_calls.size() == 3);
    CHECK(r.tool_calls[0].name == "get_order_details");
    CHECK(r.tool_calls[0].arguments == Json{{"order_id", "#W5061109"}});
    CHECK(r.tool_calls[0].id == "call_1");
    const auto problems = validate_tool_calls(r, tools);
    CHECK(problems.size() == 2);
    // The declared tools travel in function-calling form.
    CHECK(server.requests()[0].at("tools").size() == tools.size());
    CHECK(server.requests()[0].at("tools")[0].at("type") == "function");
}

TEST_CASE("retries on server errors")
{
    MockChatServer server;
    server.start();
    server.enqueue(MockReply{500, Json{{"error", "boom"}}});
    server.enqueue(MockReply{503, Json{{"error", "busy"}}});
    server.enqueue_message(text_reply("finally"));
    const ChatResponse r = ChatClient(fast(server.base_url(), 3)).chat(simple_request());
    CHECK(r.content == "finally");
    CHECK(r.attempts == 3);
    CHECK(server.hits() == 3);

    server.enqueue(MockReply{429, Json::object()});
    server.enqueue(MockReply{500, Json::object()});
    try
    {
        (void)ChatClient(fast(server.base_url(), 1)).chat(simple_request());
        FAIL("expected RetriesExhausted");
    }
    catch (const RetriesExhausted& e)
    {
        CHECK(e.attempts() == 2);
    }
}

TEST_CASE("non-retryable failures")
{
    MockChatServer server;
    server.start();
    SECTION("401 is an auth error and is not retried")
    {
        server.enqueue(MockReply{401, Json{{"error", "bad key"}}});
        CHECK_THROWS_AS(ChatClient(fast(server.base_url(), 3)).chat(simple_request()), AuthError);
        CHECK(server.hits() == 1);
    }
    SECTION("other 4xx")
    {
        server.enqueue(MockReply{404, Json::object()});
        CHECK_THROWS_AS(ChatClient(fast(server.base_url(), 3)).chat(simple_request()), TransportError);
        CHECK(server.hits() == 1);
    }
    SECTION("malformed bodies")
    {
        server.enqueue(MockReply{200, Json{{"choices", Json::array()}}});
        CHECK_THROWS_AS(ChatClient(fast(server.base_url())).chat(simple_request()), MalformedResponse);
        server.enqueue(MockReply{200, Json{{"choices", {{{"message", {{"role", "assistant"}}}}}}}});
        CHECK_THROWS_AS(ChatClient(fast(server.base_url())).chat(simple_request()), MalformedResponse);
        server.enqueue(MockReply{200, Json{{"choices", {{{"message", {{"tool_calls", {{{"function", {{"name", "x"}, {"arguments", "{not json"}}}}}}}}}}}}});
        CHECK_THROWS_AS(ChatClient(fast(server.base_url())).chat(simple_request()), MalformedResponse);
    }
    SECTION("nothing queued")
    {
        CHECK_THROWS_AS(ChatClient(fast(server.base_url())).chat(simple_request()), TransportError);
    }
}

TEST_CASE("connection failures are retried, then exhausted")
{
    CHECK_THROWS_AS(ChatClient(fast(dead_url(), 2)).chat(simple_request()), RetriesExhausted);
}

TEST_CASE("API keys come from the environment")
{
    MockChatServer server;
    server.start();
    ClientConfig cfg = fast(server.base_url());
    cfg.api_key_env = "MTRL_TEST_KEY_" + std::to_string(::getpid());
    ::unsetenv(cfg.api_key_env.c_str());
    CHECK_THROWS_AS(ChatClient(cfg).chat(simple_request()), AuthError);
    CHECK(server.hits() == 0);

    ::setenv(cfg.api_key_env.c_str(), "sk-test", 1);
    server.enqueue_message(text_reply("ok"));
    CHECK(ChatClient(cfg).chat(simple_request()).content == "ok");
    CHECK(server.auth_headers().back() == "Bearer sk-test");
    ::unsetenv(cfg.api_key_env.c_str());
}

TEST_CASE("record and replay")
{
    const auto path = std::filesystem::temp_directory_path() / ("mtrl_replay_" + std::to_string(::getpid()) + ".jsonl");
    {
        MockChatServer recorder;
        recorder.start();
        recorder.set_recording(true);
        recorder.set_handler([](const Json& req) { return MockReply{200, to_json(text_reply("echo " + req.at("messages")[0].at("content").get<std::string>()))}; });
        CHECK(ChatClient(fast(recorder.base_url())).chat(simple_request()).content == "echo hello");
        recorder.save_recording(path);
    }
    MockChatServer replay;
    replay.start();
    replay.load_replay(path);
    CHECK(ChatClient(fast(replay.base_url())).chat(simple_request()).content == "echo hello");
    ChatRequest other = simple_request();
    other.messages[0].content = "something else";
    CHECK_THROWS_AS(ChatClient(fast(replay.base_url())).chat(other), TransportError);
    std::filesystem::remove(path);
}

TEST_CASE("wire types round-trip")
{
    ChatRequest req = simple_request();
    req.messages.push_back(ChatMessage{"assistant", std::nullopt, {ToolCall{"think", {{"thought", "x"}}, "call_3"}}, {}});
    req.messages.push_back(ChatMessage{"tool", "", {}, "call_3"});
    req.tools = {retail().registry->specs()[0]};
    const ChatRequest back = chat_request_from_json(to_json(req));
    CHECK(back.messages == req.messages);
    CHECK(back.tools.size() == 1);
    CHECK(back.model == "agent");

    ChatResponse res;
    res.content = "x";
    res.usage = Usage{3, 4};
    const ChatResponse parsed = parse_chat_response(to_json(res));
    CHECK(parsed.content == "x");
    CHECK(parsed.usage.completion_tokens == 4);

    CHECK(split_base_url("http://127.0.0.1:9000/v1") == std::pair<std::string, std::string>{"http://127.0.0.1:9000", "/v1"});
    CHECK_THROWS_AS(split_base_url("localhost:9000"), Error);
    CHECK_THROWS_AS(client_config_from_json(Json{{"max_retries", -1}}), Error);
}

TEST_CASE("remote tool executor against the mock tool server")
{
    const Task& task = retail().task("retail_earbuds_blue");
    MockToolServer server(retail().registry, *task.initial_db);
    server.start();
    RemoteToolExecutor exec(fast(server.base_url()));

    std::set<std::string> listed;
    for (const auto& t: exec.tools())
        listed.insert(t.name);
    std::set<std::string> declared;
    for (const auto& t: retail().registry->specs())
        declared.insert(t.name);
    CHECK(listed == declared);

    const ToolCall read{"get_order_details", {{"order_id", "#W5061109"}}, {}};
    Database local = *task.initial_db;
    CHECK(exec.execute(read) == execute_tool(local, read, *retail().registry));

    const ToolResult bad = exec.execute(ToolCall{"get_order_details", {{"order_id", "#W404"}}, {}});
    CHECK_FALSE(bad.ok);

    const ToolCall swap{"modify_pending_order_items",
                        {{"order_id", "#W5061109"}, {"item_ids", {"3694871183"}}, {"new_item_ids", {"6077640618"}}, {"payment_method_id", "paypal_3742148"}},
                        {}};
    CHECK(exec.execute(swap).ok);
    CHECK(server.database().resolve("orders.#W5061109.status")->get<std::string>() == "pending (item modified)");

    server.stop();
    const ToolResult down = exec.execute(read);
    CHECK_FALSE(down.ok);
    CHECK(down.error_text.rfind("Error: transport failure", 0) == 0);
    CHECK_THROWS_AS(RemoteToolExecutor(fast(dead_url())), TransportError);
}

TEST_CASE("canned tool server")
{
    ToolSpec spec;
    spec.name = "lookup";
    MockToolServer server({spec}, {{ToolCall{"lookup", {{"id", 1}}, {}}, ToolResult::success(Json{{"name", "Ada"}})},
                                   {ToolCall{"lookup", {{"id", 2}}, {}}, ToolResult::failure("Error: not found")}});
    server.start();
    RemoteToolExecutor exec(fast(server.base_url()));
    CHECK(exec.execute(ToolCall{"lookup", {{"id", 1}}, {}}) == ToolResult::success(Json{{"name", "Ada"}}));
    CHECK(exec.execute(ToolCall{"lookup", {{"id", 2}}, {}}) == ToolResult::failure("Error: not found"));
    CHECK_FALSE(exec.execute(ToolCall{"lookup", {{"id", 3}}, {}}).ok);
    CHECK(server.hits() == 4);
}

TEST_CASE("LLM-backed agent and user drive a rollout")
{
    const Task& task = retail().task("retail_earbuds_blue");
    MockChatServer server;
    server.start();
    int agent_calls = 0;
    server.set_handler([&agent_calls](const Json& req) {
        if (req.at("model") == "user")
            return MockReply{200, to_json(text_reply(req.at("messages").size() <= 2 ? "Where is order #W5061109?" : "Thanks! ###STOP###"))};
        ChatResponse r;
        if (agent_calls++ == 0)
            r.tool_calls = {ToolCall{"get_order_details", {{"order_id", "#W5061109"}}, "call_a"}};
        else
            r.content = "It is pending.";
        r.usage.completion_tokens = 6;
        return MockReply{200, to_json(r)};
    });
    auto client = std::make_shared<const ChatClient>(fast(server.base_url()));
    LlmAgentPolicy agent(client, LlmRoleConfig{});
    LlmUserConfig ucfg;
    ucfg.prompt_template = "You are a customer. {{scenario}} Say {{stop}} when done.";
    LlmUserSimulator user(client, ucfg);
    RolloutConfig cfg;
    cfg.user_mode = UserMode::llm;
    LocalEnvExecutor exec(retail().registry, *task.initial_db);
    const Trajectory t = run_rollout(task, agent, user, exec, cfg, 1);

    CHECK(t.termination == Termination::stop);
    REQUIRE(t.messages.size() == 6);
    CHECK(t.messages[1].text() == "Where is order #W5061109?");
    CHECK(t.messages[2].call().name == "get_order_details");
    CHECK(t.messages[2].token_count == 6);
    CHECK(t.messages[3].result().ok);
    CHECK(t.messages[4].text() == "It is pending.");

    // The user simulator sees a role-flipped view without tool traffic.
    const auto requests = server.requests();
    const Json& last_user = requests.back();
    REQUIRE(last_user.at("model") == "user");
    const Json& msgs = last_user.at("messages");
    CHECK(msgs[0].at("content").get<std::string>().find(task.user_scenario) != std::string::npos);
    CHECK(msgs[0].at("content").get<std::string>().find("###STOP###") != std::string::npos);
    CHECK(msgs[2].at("role") == "assistant");
    CHECK(msgs[3].at("role") == "user");
    CHECK(msgs[3].at("content") == "It is pending.");
    CHECK(msgs.size() == 4);
}

TEST_CASE("transport failures end the episode with a protocol error")
{
    const Task& task = retail().task("retail_earbuds_blue");
    auto client = std::make_shared<const ChatClient>(fast(dead_url()));
    LlmAgentPolicy agent(client, LlmRoleConfig{});
    LocalEnvExecutor exec(retail().registry, *task.initial_db);
    const Trajectory t = run_rollout(task, agent, ScriptedUser({"hi"}), exec, RolloutConfig{}, 1);
    CHECK(t.termination == Termination::protocol_error);
    CHECK(t.note.find("agent transport failure") != std::string::npos);

    LlmUserConfig ucfg;
    LlmUserSimulator user(client, ucfg);
    ScriptedAgent quiet({});
    const Trajectory u = run_rollout(task, quiet, user, exec, RolloutConfig{}, 1);
    CHECK(u.termination == Termination::protocol_error);
}

TEST_CASE("agent chat view pairs tool results with their calls")
{
    const std::vector<Message> msgs{Message::make_text(Role::system, "policy", 1, 0), Message::make_text(Role::user, "hi", 1, 1),
                                    Message::make_call(ToolCall{"think", {{"thought", "x"}}, {}}, 1, 1),
                                    Message::make_result(ToolResult::success(Json{{"a", 1}}), 1, 1)};
    const auto chat = agent_chat_messages(msgs);
    REQUIRE(chat.size() == 4);
    CHECK(chat[2].tool_calls.at(0).id == "call_2");
    CHECK(chat[3].role == "tool");
    CHECK(chat[3].tool_call_id == "call_2");
    CHECK(chat[3].content == R"({"a":1})");
}
