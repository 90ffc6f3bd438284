// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/participants.hpp"

#include <iosfwd>
#include <vector>

namespace mtrl
{

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Subcommands: rollout, train, synth, eval, metrics, replay.
/// Returns 0 on success, 1 when the run fails, 2 on a usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Scripted roles for `rollout --script`:
/// {"agent": [step, ...], "user": ["...", ...]} where a step is
/// {"text": "..."}, {"call": {"name", "arguments"}} or {"calls": [call, ...]}.
struct RolloutScript
{
    std::vector<AgentStep> agent;
    std::vector<std::string> user;
};

RolloutScript rollout_script_from_json(const Json& doc);

} // namespace mtrl
