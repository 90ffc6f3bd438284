// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/policy.hpp"
#include "mtrl/trajectory.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mtrl
{

struct GrpoConfig
{
    double clip_epsilon = 0.2;
    double kl_beta = 0.001;
    double std_floor = 1e-6;
    double learning_rate = 1.0;
    int epochs = 25;
    int batch_size = 32;
    int group_size = 8;
    std::uint64_t seed = 0;
    /// Optimizer steps per batch of rollouts (all against the same pi_old).
    int inner_updates = 1;
    /// Total training steps; 0 means epochs * ceil(tasks / batch_size).
    int steps = 0;

    void validate() const;
};

Json to_json(const GrpoConfig& cfg);
GrpoConfig grpo_config_from_json(const Json& doc, GrpoConfig base = {});

struct SequenceSample
{
    std::string id;
    std::string query_id;
    std::vector<TokenRecord> tokens;
    int reward = 0;
};

struct AdvantageSet
{
    std::vector<double> advantages;
    double mean_r = 0.0;
    double std_r = 0.0;
    bool degenerate = false;
};

/// A_i = (r_i - mean) / max(population std, std_floor); all zeros when the
/// raw std is below std_floor. Throws Error on an empty group.
AdvantageSet compute_advantages(std::span<const double> rewards, const GrpoConfig& cfg);
AdvantageSet compute_advantages(std::span<const int> rewards, const GrpoConfig& cfg);

struct SampleGroup
{
    std::vector<SequenceSample> samples;
    AdvantageSet advantages;
};

/// Builds a group from samples, computing advantages from their rewards.
SampleGroup make_group(std::vector<SequenceSample> samples, const GrpoConfig& cfg);

/// exp(sum over masked tokens of log pi_theta(a|c) - logprob_old).
double sequence_ratio(const SequenceSample& sample, const PolicyParams& theta);

/// Distinct contexts of masked tokens, ascending.
std::vector<int> masked_contexts(const SequenceSample& sample);

/// Exact KL(theta || ref) averaged over the given context rows (0 for none).
double kl_term(const PolicyParams& theta, const PolicyParams& ref, std::span<const int> contexts);

/// Mean categorical entropy in nats over the given rows (0 for none).
double entropy(const PolicyParams& theta, std::span<const int> contexts);

struct ObjectiveResult
{
    double objective = 0.0;
    /// d objective / d logits, same layout as PolicyParams::logits().
    std::vector<double> gradient;
    /// Mean per-sample KL over all samples in the batch.
    double mean_kl = 0.0;
    /// Number of samples whose clip was active.
    int clipped = 0;
};

/// Clipped surrogate minus beta * KL, averaged per group (1/G) then over
/// groups, with its exact gradient. Throws Error naming the sample id when
/// an intermediate is non-finite.
ObjectiveResult grpo_objective(std::span<const SampleGroup> groups, const PolicyParams& theta, const PolicyParams& ref, const GrpoConfig& cfg);

double l2_norm(std::span<const double> values);

} // namespace mtrl
