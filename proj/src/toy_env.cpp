// SPDX-License-Identifier: Apache-2.0
#include "mtrl/toy_env.hpp"

namespace mtrl
{

namespace
{

ToolResult toy_step_a(const Json&, ToolContext& ctx)
{
    ctx.write()["state"]["progress"]["a_done"] = true;
    return ToolResult::success("step a done");
}

ToolResult toy_step_b(const Json&, ToolContext& ctx)
{
    const Json* a = resolve_json_path(ctx.read(), {"state", "progress", "a_done"});
    if (a == nullptr || !a->is_boolean() || !a->get<bool>())
        return ToolResult::failure("Error: step_a has not been completed");
    ctx.write()["state"]["progress"]["b_done"] = true;
    return ToolResult::success("step b done");
}

} // namespace

const std::map<std::string, ToolHandler, std::less<>>& toy_handlers()
{
    static const std::map<std::string, ToolHandler, std::less<>> handlers{
        {"toy.step_a", toy_step_a},
        {"toy.step_b", toy_step_b},
    };
    return handlers;
}

namespace toy
{

Json domain_document()
{
    const Json no_args{{"type", "object"}, {"properties", Json::object()}, {"required", Json::array()}};
    return Json{
        {"domain_id", "toy"},
        {"system_policy", "Call step_a, then step_b, then end the conversation."},
        {"tools",
         Json::array({
             Json{{"name", "step_a"}, {"description", "First step."}, {"parameters", no_args}, {"mutating", true}, {"impl", {{"kind", "builtin"}, {"name", "toy.step_a"}}}},
             Json{{"name", "step_b"}, {"description", "Second step; needs step_a."}, {"parameters", no_args}, {"mutating", true}, {"impl", {{"kind", "builtin"}, {"name", "toy.step_b"}}}},
             Json{{"name", "think"},
                  {"description", "Think without acting."},
                  {"parameters", {{"type", "object"}, {"properties", {{"thought", {{"type", "string"}}}}}, {"required", {"thought"}}}},
                  {"side_channel", "think"}},
         })},
        {"database", {{"state", {{"progress", {{"a_done", false}, {"b_done", false}}}}}}},
        {"tasks",
         Json::array({Json{
             {"id", "toy_a_then_b"},
             {"user_scenario", "Please run step a and then step b."},
             {"criteria",
              Json::array({
                  Json{{"kind", "db_path_equals"}, {"target", "state.progress.a_done"}, {"expected", true}},
                  Json{{"kind", "db_path_equals"}, {"target", "state.progress.b_done"}, {"expected", true}},
              })},
         }})},
    };
}

DomainBundle bundle()
{
    return load_domain(domain_document());
}

std::vector<Emission> action_space()
{
    return {
        Emission::call("step_a"),
        Emission::call("step_b"),
        Emission::call("think", Json{{"thought", "planning"}}),
        Emission::text("All steps are complete. " + std::string(kStopSentinel)),
    };
}

ContextEncoder context_encoder()
{
    return [](const AgentView& view) {
        bool a = false;
        bool b = false;
        const auto& msgs = view.messages;
        for (std::size_t i = 0; i + 1 < msgs.size(); ++i)
        {
            if (msgs[i].role != Role::tool_call || msgs[i + 1].role != Role::tool_result || !msgs[i + 1].result().ok)
                continue;
            a = a || msgs[i].call().name == "step_a";
            b = b || msgs[i].call().name == "step_b";
        }
        return (a ? 1 : 0) + (b ? 2 : 0);
    };
}

RolloutConfig rollout_config()
{
    RolloutConfig cfg;
    cfg.user_mode = UserMode::none;
    cfg.tool_execution = ToolExecution::local_env;
    cfg.max_agent_steps_per_turn = kMaxAgentSteps;
    return cfg;
}

} // namespace toy
} // namespace mtrl
