// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/domain.hpp"
#include "mtrl/grpo.hpp"
#include "mtrl/metrics.hpp"
#include "mtrl/policy.hpp"
#include "mtrl/rollout.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mtrl
{

struct CollectedGroup
{
    std::string task_id;
    std::vector<SequenceSample> samples;
    /// Empty for sources without dialogue (e.g. bandits).
    std::vector<Trajectory> trajectories;
};

/// Produces one group of G samples per task in the step's batch, sampled
/// from the frozen pi_old.
class RolloutSource
{
public:
    virtual ~RolloutSource() = default;
    virtual std::vector<CollectedGroup> collect(const PolicyParams& theta_old, const PolicyParams& ref, int step, std::uint64_t seed,
                                                const GrpoConfig& cfg) = 0;
    [[nodiscard]] virtual int task_count() const = 0;
};

/// Rollouts through the real engine with a CategoricalAgent and local tools.
/// Batch for step s: batch_size tasks starting at (s * batch_size) mod n.
class AgentEnvSource : public RolloutSource
{
public:
    AgentEnvSource(DomainBundle bundle, std::vector<Emission> actions, ContextEncoder encoder, RolloutConfig rollout);

    std::vector<CollectedGroup> collect(const PolicyParams& theta_old, const PolicyParams& ref, int step, std::uint64_t seed,
                                        const GrpoConfig& cfg) override;
    [[nodiscard]] int task_count() const override { return static_cast<int>(_bundle.tasks.size()); }

    [[nodiscard]] const DomainBundle& bundle() const noexcept { return _bundle; }

private:
    DomainBundle _bundle;
    std::vector<Emission> _actions;
    ContextEncoder _encoder;
    RolloutConfig _rollout;
};

/// Single-context bandit: reward 1 for one action, 0 otherwise.
class BanditSource : public RolloutSource
{
public:
    BanditSource(int actions, int rewarding_action);

    std::vector<CollectedGroup> collect(const PolicyParams& theta_old, const PolicyParams& ref, int step, std::uint64_t seed,
                                        const GrpoConfig& cfg) override;
    [[nodiscard]] int task_count() const override { return 1; }

private:
    int _actions;
    int _rewarding;
};

/// Converts a trajectory's token records into a GRPO sample.
SequenceSample sample_from_trajectory(const Trajectory& trajectory, int reward, std::string id);

/// Training-dynamics summary of one step's rollouts under pi_old.
MetricsRecord summarize_step(int step, const std::vector<CollectedGroup>& groups, const PolicyParams& theta_old);

struct Checkpoint
{
    PolicyParams theta;
    PolicyParams ref;
    GrpoConfig cfg;
    int step = 0;
};

Json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const Json& doc);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Plain gradient ascent on the GRPO objective. Deterministic: step k uses
/// seed mix_seed(cfg.seed, k), so a reloaded checkpoint continues the same
/// parameter stream.
class Trainer
{
public:
    Trainer(RolloutSource& source, GrpoConfig cfg, PolicyParams init, PolicyParams ref);
    Trainer(RolloutSource& source, Checkpoint checkpoint);

    /// Runs one step and returns its metrics (step numbers start at 1).
    /// Throws Error when the objective or gradient turns non-finite.
    MetricsRecord step();

    /// Runs until `total_steps` steps are done, invoking `on_step` after each.
    void run(int total_steps, const std::function<void(const MetricsRecord&)>& on_step = {});

    /// cfg.steps, or epochs * ceil(tasks / batch_size) when that is 0.
    [[nodiscard]] int planned_steps() const;

    [[nodiscard]] const PolicyParams& theta() const noexcept { return _theta; }
    [[nodiscard]] const PolicyParams& ref() const noexcept { return _ref; }
    [[nodiscard]] int steps_done() const noexcept { return _step; }
    [[nodiscard]] Checkpoint checkpoint() const { return Checkpoint{_theta, _ref, _cfg, _step}; }

private:
    RolloutSource& _source;
    GrpoConfig _cfg;
    PolicyParams _theta;
    PolicyParams _ref;
    int _step = 0;
};

/// Fraction of `rollouts` episodes with reward 1 when sampling from theta,
/// spread round-robin over the bundle's tasks.
double evaluate_success_rate(const PolicyParams& theta, const DomainBundle& bundle, const std::vector<Emission>& actions, const ContextEncoder& encoder,
                             const RolloutConfig& rollout, int rollouts, std::uint64_t seed);

} // namespace mtrl
