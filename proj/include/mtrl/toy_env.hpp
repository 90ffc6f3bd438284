// SPDX-License-Identifier: Apache-2.0
//
// A three-step tool task small enough to train a tabular policy on:
// call step_a, then step_b, then end with the stop sentinel.

#pragma once

#include "mtrl/domain.hpp"
#include "mtrl/participants.hpp"
#include "mtrl/policy.hpp"
#include "mtrl/rollout.hpp"

namespace mtrl::toy
{

inline constexpr int kContexts = 4; // a_done + 2 * b_done
inline constexpr int kActions = 4;  // step_a, step_b, think, stop text
inline constexpr int kMaxAgentSteps = 8;

Json domain_document();
DomainBundle bundle();

/// Action id -> emission: 0 step_a, 1 step_b, 2 think, 3 stop text.
std::vector<Emission> action_space();

/// Context from the successful step_a/step_b results seen so far.
ContextEncoder context_encoder();

/// user_mode none, local tools, kMaxAgentSteps agent steps per episode.
RolloutConfig rollout_config();

} // namespace mtrl::toy
