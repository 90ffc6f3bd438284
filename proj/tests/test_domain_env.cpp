// SPDX-License-Identifier: Apache-2.0
#include "catch_amalgamated.hpp"

#include "mtrl/domain.hpp"
#include "mtrl/tools.hpp"
#include "mtrl/trajectory.hpp"

using namespace mtrl;

namespace
{

const std::filesystem::path kFixtures = MTRL_FIXTURE_DIR;

const DomainBundle& retail()
{
    static const DomainBundle bundle = load_domain_file(kFixtures / "retail_domain.json");
    return bundle;
}

Json think_spec()
{
    return Json{{"name", "think"}, {"parameters", {{"type", "object"}, {"properties", Json::object()}}}, {"side_channel", "think"}};
}

const Json kSwap{{"order_id", "#W5061109"}, {"item_ids", {"3694871183"}}, {"new_item_ids", {"6077640618"}}, {"payment_method_id", "paypal_3742148"}};

// Trajectory whose tool log holds `calls` paired with their results.
Trajectory with_calls(Database& db, const std::vector<ToolCall>& calls)
{
    Trajectory t;
    for (const auto& c: calls)
    {
        t.messages.push_back(Message::make_call(c, 1, 1));
        t.messages.push_back(Message::make_result(execute_tool(db, c, *retail().registry), 1, 1));
    }
    t.final_db = db;
    return t;
}

} // namespace

TEST_CASE("retail domain exposes the documented tools")
{
    const auto& reg = *retail().registry;
    for (const char* name: {"get_order_details", "modify_pending_order_items", "cancel_pending_order", "find_user_id_by_name_zip", "calculate", "think",
                            "transfer_to_human_agents"})
        CHECK(reg.contains(name));
    REQUIRE(retail().tasks.size() == 1);
    CHECK(retail().task("retail_earbuds_blue").criteria.size() == 4);
    CHECK_THROWS_AS(retail().task("nope"), Error);
}

TEST_CASE("domain documents: empty task list, duplicate tools, dangling criteria")
{
    const DomainBundle empty = load_domain(Json{{"tools", {think_spec()}}, {"database", Json::object()}, {"tasks", Json::array()}});
    CHECK(empty.tasks.empty());
    CHECK(empty.registry->size() == 1);

    CHECK_THROWS_WITH(load_domain(Json{{"tools", {think_spec(), think_spec()}}, {"database", Json::object()}}), Catch::Matchers::ContainsSubstring("think"));

    Json bad = read_json_file(kFixtures / "retail_domain.json");
    bad["tasks"][0]["criteria"][0]["target"] = "nosuchtable.x.y";
    CHECK_THROWS_AS(load_domain(bad), Error);
}

TEST_CASE("get_order_details returns the pending order")
{
    Database db = *retail().database;
    const ToolResult r = execute_tool(db, ToolCall{"get_order_details", {{"order_id", "#W5061109"}}, {}}, *retail().registry);
    REQUIRE(r.ok);
    CHECK(r.payload.at("status") == "pending");
    CHECK(r.payload.at("items").size() == 4);
    CHECK(db.version() == 0);
}

TEST_CASE("modifying an already modified order fails")
{
    Database db = *retail().database;
    const ToolCall swap{"modify_pending_order_items", kSwap, {}};
    const ToolResult first = execute_tool(db, swap, *retail().registry);
    REQUIRE(first.ok);
    CHECK(db.version() == 1);
    CHECK(db.resolve("orders.#W5061109.status")->get<std::string>() == "pending (item modified)");
    CHECK(db.resolve("orders.#W5061109.items.1.price")->get<double>() == Catch::Approx(242.92));
    CHECK(db.resolve("orders.#W5061109.payment_history.1.amount")->get<double>() == Catch::Approx(13.75));

    const std::uint64_t before = db.hash();
    const ToolResult second = execute_tool(db, swap, *retail().registry);
    CHECK_FALSE(second.ok);
    CHECK(second.error_text == "Error: Non-pending order cannot be modified");
    CHECK(db.hash() == before);
    CHECK(db.version() == 1);
}

TEST_CASE("agent mistakes come back as failed results")
{
    Database db = *retail().database;
    const auto& reg = *retail().registry;
    CHECK(execute_tool(db, ToolCall{"no_such_tool", Json::object(), {}}, reg).error_text == "Error: unknown tool no_such_tool");
    const ToolResult invalid = execute_tool(db, ToolCall{"get_order_details", {{"order_id", 5}}, {}}, reg);
    CHECK_FALSE(invalid.ok);
    CHECK_FALSE(execute_tool(db, ToolCall{"get_order_details", {{"order_id", "#W0000000"}}, {}}, reg).ok);
    CHECK(db.version() == 0);
}

TEST_CASE("side-channel tools leave the database alone")
{
    Database db = *retail().database;
    const auto& reg = *retail().registry;
    const ToolResult think = execute_tool(db, ToolCall{"think", {{"thought", "anything"}}, {}}, reg);
    CHECK(think.ok);
    CHECK(think.render().empty());
    const ToolResult calc = execute_tool(db, ToolCall{"calculate", {{"expression", "256.67 - 242.92"}}, {}}, reg);
    REQUIRE(calc.ok);
    CHECK(calc.payload.get<double>() == 13.75);
    CHECK(execute_tool(db, ToolCall{"transfer_to_human_agents", {{"summary", "s"}}, {}}, reg).ok);
    CHECK(db.version() == 0);
    CHECK(db == *retail().database);
}

TEST_CASE("evaluate_expression")
{
    CHECK(evaluate_expression("(1 + 2) * 3") == 9.0);
    CHECK(evaluate_expression("10 / 4") == 2.5);
    CHECK(evaluate_expression("1 / 3") == 0.33);
    CHECK_FALSE(evaluate_expression("1 / 0"));
    CHECK_FALSE(evaluate_expression("import os"));
    CHECK_FALSE(evaluate_expression("(1 + 2"));
}

TEST_CASE("validate_arguments")
{
    const Json schema{{"type", "object"},
                      {"properties", {{"id", {{"type", "string"}}}, {"n", {{"type", "integer"}}}, {"tags", {{"type", "array"}, {"items", {{"type", "string"}}}}},
                                      {"mode", {{"type", "string"}, {"enum", {"a", "b"}}}}}},
                      {"required", {"id"}},
                      {"additionalProperties", false}};
    CHECK_FALSE(validate_arguments(schema, Json{{"id", "x"}, {"n", 2}, {"tags", {"p"}}, {"mode", "a"}}));
    CHECK(validate_arguments(schema, Json{{"n", 2}}));
    CHECK(validate_arguments(schema, Json{{"id", "x"}, {"n", 2.5}}));
    CHECK(validate_arguments(schema, Json{{"id", "x"}, {"tags", {1}}}));
    CHECK(validate_arguments(schema, Json{{"id", "x"}, {"mode", "c"}}));
    CHECK(validate_arguments(schema, Json{{"id", "x"}, {"extra", 1}}));
    CHECK(validate_arguments(schema, Json::array()));
}

TEST_CASE("execute_tool is deterministic")
{
    for (const auto& spec: retail().registry->specs())
    {
        Database a = *retail().database;
        Database b = *retail().database;
        const ToolCall call{spec.name, spec.name == "modify_pending_order_items" ? kSwap : Json{{"order_id", "#W5061109"}}, {}};
        CHECK(execute_tool(a, call, *retail().registry) == execute_tool(b, call, *retail().registry));
        CHECK(a == b);
    }
}

TEST_CASE("snapshots")
{
    SnapshotStore store;
    Database db = *retail().database;

    const SnapshotToken idle = store.snapshot(db);
    CHECK(store.restore(idle) == db);

    const SnapshotToken token = store.snapshot(db);
    REQUIRE(execute_tool(db, ToolCall{"cancel_pending_order", {{"order_id", "#W5061109"}, {"reason", "no longer needed"}}, {}}, *retail().registry).ok);
    CHECK(db.resolve("orders.#W5061109.status")->get<std::string>() == "cancelled");
    const Database back = store.restore(token);
    CHECK(back.resolve("orders.#W5061109.status")->get<std::string>() == "pending");
    // Field by field against the original document.
    for (const auto& [table, records]: retail().database->tables().items())
        for (const auto& [id, record]: records.items())
            CHECK(*back.record(table, id) == record);

    store.release(token);
    CHECK_THROWS_AS(store.restore(token), StaleSnapshot);
    store.clear();
    CHECK_THROWS_AS(store.restore(idle), StaleSnapshot);
    CHECK(store.size() == 0);
}

TEST_CASE("database construction and path resolution")
{
    CHECK_THROWS_AS(Database(Json::array()), Error);
    CHECK_THROWS_AS(Database(Json{{"t", 1}}), Error);
    const Database db(Json{{"t", {{"r", {{"list", {1, 2, {{"k", "v"}}}}}}}}});
    CHECK(*db.resolve("t.r.list.2.k") == "v");
    CHECK(db.resolve("t.r.list.9") == nullptr);
    CHECK(db.resolve("t.missing") == nullptr);
    CHECK(db.has_table("t"));
    CHECK_FALSE(db.has_table("u"));
}

TEST_CASE("score: complete, partial and path-invariant")
{
    const Task& task = retail().task("retail_earbuds_blue");
    const ToolCall swap{"modify_pending_order_items", kSwap, {}};

    Database db = *task.initial_db;
    const Trajectory done = with_calls(db, {ToolCall{"get_order_details", {{"order_id", "#W5061109"}}, {}}, swap});
    const RewardResult full = score(task, done.final_db, done);
    CHECK(full.reward == 1);
    CHECK(full.tcr == 1.0);
    CHECK(outcome_reward(full, Termination::stop) == 1);
    CHECK(outcome_reward(full, Termination::turn_cap) == 0);

    Task stricter = task;
    stricter.criteria[0].expected = "1646531091";
    const RewardResult partial = score(stricter, done.final_db, done);
    CHECK(partial.reward == 0);
    CHECK(partial.tcr == 0.75);
    CHECK(partial.satisfied == std::vector<bool>{false, true, true, true});

    // Different reads in a different order, different wording, same write.
    Database db2 = *task.initial_db;
    Trajectory other = with_calls(db2, {ToolCall{"get_product_details", {{"product_id", "9924732112"}}, {}},
                                        ToolCall{"find_user_id_by_name_zip", {{"first_name", "Chen"}, {"last_name", "Johnson"}, {"zip", "77004"}}, {}}, swap,
                                        ToolCall{"think", {{"thought", "done"}}, {}}});
    other.messages.insert(other.messages.begin(), Message::make_text(Role::agent_text, "Something else entirely.", 3, 1));
    CHECK(score(task, other.final_db, other) == full);

    Database untouched = *task.initial_db;
    const RewardResult none = score(task, untouched, Trajectory{});
    CHECK(none.reward == 0);
    CHECK(none.tcr == 0.0);
}

TEST_CASE("a failed write does not count as performed")
{
    const Task& task = retail().task("retail_earbuds_blue");
    Database db = *task.initial_db;
    REQUIRE(execute_tool(db, ToolCall{"modify_pending_order_items", kSwap, {}}, *retail().registry).ok);
    // Second identical call fails; a trajectory holding only that call misses the action.
    const Trajectory t = with_calls(db, {ToolCall{"modify_pending_order_items", kSwap, {}}});
    const RewardResult r = score(task, t.final_db, t);
    CHECK(r.satisfied.back() == false);
    CHECK(r.tcr == 0.75);
}

TEST_CASE("replay_tool_calls rebuilds the final database")
{
    const Task& task = retail().task("retail_earbuds_blue");
    Database db = *task.initial_db;
    const Trajectory t = with_calls(db, {ToolCall{"get_order_details", {{"order_id", "#W5061109"}}, {}}, ToolCall{"modify_pending_order_items", kSwap, {}}});
    CHECK(replay_tool_calls(task, *retail().registry, t).hash() == t.final_db.hash());
}

TEST_CASE("criteria round-trip through JSON")
{
    for (const auto& c: retail().task("retail_earbuds_blue").criteria)
    {
        const VerificationCriterion back = criterion_from_json(to_json(c));
        CHECK(back.kind == c.kind);
        CHECK(back.target == c.target);
        CHECK(back.expected == c.expected);
    }
    CHECK_THROWS_AS(criterion_from_json(Json{{"kind", "vibes"}, {"target", "x"}}), Error);
}
