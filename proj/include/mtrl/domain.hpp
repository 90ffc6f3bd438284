// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/database.hpp"
#include "mtrl/tools.hpp"
#include "mtrl/trajectory.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mtrl
{

enum class CriterionKind
{
    db_path_equals,
    db_record_absent,
    db_record_present,
    action_performed,
};

std::string_view to_string(CriterionKind kind);

/// One independently checkable success condition.
///
/// For db_* kinds `target` is a dotted path string (`table.id[.field...]`).
/// For action_performed `target` is `{"name": tool, "arguments": {subset}}`:
/// a successful call with that name whose arguments agree on every listed
/// key satisfies it. Extra call arguments are ignored.
struct VerificationCriterion
{
    CriterionKind kind = CriterionKind::db_path_equals;
    Json target;
    Json expected;
};

struct Task
{
    std::string id;
    std::string domain_id;
    std::string system_policy;
    std::string user_scenario;
    std::shared_ptr<const Database> initial_db;
    /// Includes the expanded required_write_actions at the end.
    std::vector<VerificationCriterion> criteria;
    /// As declared in the source document; already folded into `criteria`.
    std::vector<ToolCall> required_write_actions;
};

struct RewardResult
{
    int reward = 0;
    double tcr = 0.0;
    std::vector<bool> satisfied;

    friend bool operator==(const RewardResult&, const RewardResult&) = default;
};

/// Tools, initial database and tasks of one domain. Immutable once loaded.
struct DomainBundle
{
    std::string domain_id;
    std::shared_ptr<const ToolRegistry> registry;
    std::shared_ptr<const Database> database;
    std::vector<Task> tasks;

    /// Throws Error when no task has `id`.
    [[nodiscard]] const Task& task(std::string_view id) const;
};

/// Parses a domain document with keys `tools`, `database`, `tasks` (and an
/// optional `domain_id`). Throws Error on parse problems, duplicate tool
/// names or criteria pointing at missing tables/records/tools.
DomainBundle load_domain(const Json& document);
DomainBundle load_domain_file(const std::filesystem::path& path);

VerificationCriterion criterion_from_json(const Json& doc);
Json to_json(const VerificationCriterion& criterion);

bool criterion_satisfied(const VerificationCriterion& criterion, const Database& final_db, const Trajectory& trajectory);

/// Outcome-only scoring. Reads the final database and the tool-call log;
/// never the dialogue text.
RewardResult score(const Task& task, const Database& final_db, const Trajectory& trajectory);

/// Reward used for training and evaluation: score().reward when the episode
/// ended cleanly (stop/transfer), else 0.
int outcome_reward(const RewardResult& result, Termination termination);

/// Re-executes the recorded tool calls against a fresh copy of the task's
/// initial database.
Database replay_tool_calls(const Task& task, const ToolRegistry& registry, const Trajectory& trajectory);

} // namespace mtrl
