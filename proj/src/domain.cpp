// SPDX-License-Identifier: Apache-2.0
#include "mtrl/domain.hpp"

namespace mtrl
{

std::string_view to_string(CriterionKind kind)
{
    switch (kind)
    {
        case CriterionKind::db_path_equals: return "db_path_equals";
        case CriterionKind::db_record_absent: return "db_record_absent";
        case CriterionKind::db_record_present: return "db_record_present";
        case CriterionKind::action_performed: return "action_performed";
    }
    return "db_path_equals";
}

namespace
{

CriterionKind criterion_kind_from_string(std::string_view text)
{
    for (auto k: {CriterionKind::db_path_equals, CriterionKind::db_record_absent, CriterionKind::db_record_present, CriterionKind::action_performed})
        if (to_string(k) == text)
            return k;
    throw Error("unknown criterion kind '" + std::string(text) + "'");
}

bool arguments_match(const Json& wanted, const Json& actual)
{
    if (!actual.is_object())
        return false;
    for (auto it = wanted.begin(); it != wanted.end(); ++it)
    {
        auto a = actual.find(it.key());
        if (a == actual.end() || !json_equivalent(*it, *a))
            return false;
    }
    return true;
}

void check_criterion_references(const VerificationCriterion& c, const Database& db, const ToolRegistry& registry, const std::string& task_id)
{
    auto fail = [&](const std::string& why) { throw Error("task '" + task_id + "': dangling criterion " + to_json(c).dump() + ": " + why); };
    if (c.kind == CriterionKind::action_performed)
    {
        if (!c.target.is_object() || !c.target.contains("name"))
            fail("action target needs a name");
        if (!registry.contains(c.target["name"].get<std::string>()))
            fail("no such tool");
        return;
    }
    if (!c.target.is_string())
        fail("path target must be a string");
    auto segments = split(c.target.get<std::string>(), '.');
    if (segments.size() < 2)
        fail("path needs at least table.record_id");
    if (!db.has_table(segments[0]))
        fail("no table '" + segments[0] + "'");
    if (c.kind == CriterionKind::db_path_equals && db.record(segments[0], segments[1]) == nullptr)
        fail("no record '" + segments[1] + "'");
}

} // namespace

VerificationCriterion criterion_from_json(const Json& doc)
{
    VerificationCriterion c;
    c.kind = criterion_kind_from_string(doc.at("kind").get<std::string>());
    c.target = doc.at("target");
    c.expected = doc.value("expected", Json());
    return c;
}

Json to_json(const VerificationCriterion& criterion)
{
    return Json{{"kind", std::string(to_string(criterion.kind))}, {"target", criterion.target}, {"expected", criterion.expected}};
}

const Task& DomainBundle::task(std::string_view id) const
{
    for (const auto& t: tasks)
        if (t.id == id)
            return t;
    throw Error("unknown task '" + std::string(id) + "'");
}

DomainBundle load_domain(const Json& document)
{
    if (!document.is_object())
        throw Error("domain document must be an object");
    DomainBundle bundle;
    bundle.domain_id = document.value("domain_id", "domain");

    auto registry = std::make_shared<ToolRegistry>();
    for (const auto& t: document.value("tools", Json::array()))
        registry->add(tool_spec_from_json(t));
    bundle.registry = registry;
    bundle.database = std::make_shared<const Database>(document.value("database", Json::object()));

    for (const auto& t: document.value("tasks", Json::array()))
    {
        Task task;
        task.id = t.at("id").get<std::string>();
        task.domain_id = t.value("domain_id", bundle.domain_id);
        task.system_policy = t.value("system_policy", document.value("system_policy", ""));
        task.user_scenario = t.value("user_scenario", "");
        task.initial_db = bundle.database;
        for (const auto& c: t.value("criteria", Json::array()))
            task.criteria.push_back(criterion_from_json(c));
        for (const auto& a: t.value("required_write_actions", Json::array()))
        {
            ToolCall call{a.at("name").get<std::string>(), a.value("arguments", Json::object()), {}};
            task.criteria.push_back(VerificationCriterion{CriterionKind::action_performed, Json{{"name", call.name}, {"arguments", call.arguments}}, nullptr});
            task.required_write_actions.push_back(std::move(call));
        }
        if (task.criteria.empty())
            throw Error("task '" + task.id + "' has no criteria");
        for (const auto& c: task.criteria)
            check_criterion_references(c, *bundle.database, *registry, task.id);
        for (const auto& existing: bundle.tasks)
            if (existing.id == task.id)
                throw Error("duplicate task id '" + task.id + "'");
        bundle.tasks.push_back(std::move(task));
    }
    return bundle;
}

DomainBundle load_domain_file(const std::filesystem::path& path)
{
    return load_domain(read_json_file(path));
}

bool criterion_satisfied(const VerificationCriterion& criterion, const Database& final_db, const Trajectory& trajectory)
{
    switch (criterion.kind)
    {
        case CriterionKind::db_path_equals:
        {
            const Json* v = final_db.resolve(criterion.target.get<std::string>());
            return v != nullptr && json_equivalent(*v, criterion.expected);
        }
        case CriterionKind::db_record_present:
        case CriterionKind::db_record_absent:
        {
            const bool present = final_db.resolve(criterion.target.get<std::string>()) != nullptr;
            return criterion.kind == CriterionKind::db_record_present ? present : !present;
        }
        case CriterionKind::action_performed:
        {
            const std::string name = criterion.target.value("name", "");
            const Json wanted = criterion.target.value("arguments", Json::object());
            for (const auto& [call, result]: trajectory.tool_log())
                if (call.name == name && result && result->ok && arguments_match(wanted, call.arguments))
                    return true;
            return false;
        }
    }
    return false;
}

RewardResult score(const Task& task, const Database& final_db, const Trajectory& trajectory)
{
    RewardResult r;
    r.satisfied.reserve(task.criteria.size());
    std::size_t hits = 0;
    for (const auto& c: task.criteria)
    {
        const bool ok = criterion_satisfied(c, final_db, trajectory);
        r.satisfied.push_back(ok);
        hits += ok ? 1 : 0;
    }
    const std::size_t n = task.criteria.size();
    r.tcr = n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
    r.reward = (n > 0 && hits == n) ? 1 : 0;
    return r;
}

int outcome_reward(const RewardResult& result, Termination termination)
{
    return is_clean(termination) ? result.reward : 0;
}

Database replay_tool_calls(const Task& task, const ToolRegistry& registry, const Trajectory& trajectory)
{
    Database db = *task.initial_db;
    for (const auto& m: trajectory.messages)
        if (m.role == Role::tool_call)
            execute_tool(db, m.call(), registry);
    return db;
}

} // namespace mtrl
