// SPDX-License-Identifier: Apache-2.0
#include "mtrl/trainer.hpp"

#include <cmath>
#include <set>

namespace mtrl
{

SequenceSample sample_from_trajectory(const Trajectory& trajectory, int reward, std::string id)
{
    return SequenceSample{std::move(id), trajectory.task_id, trajectory.token_records, reward};
}

// --- sources ---------------------------------------------------------------

AgentEnvSource::AgentEnvSource(DomainBundle bundle, std::vector<Emission> actions, ContextEncoder encoder, RolloutConfig rollout)
    : _bundle(std::move(bundle)), _actions(std::move(actions)), _encoder(std::move(encoder)), _rollout(rollout)
{
    if (_bundle.tasks.empty())
        throw Error("training needs at least one task");
    _rollout.validate();
}

std::vector<CollectedGroup> AgentEnvSource::collect(const PolicyParams& theta_old, const PolicyParams& ref, int step, std::uint64_t seed,
                                                    const GrpoConfig& cfg)
{
    auto theta_ptr = std::make_shared<const PolicyParams>(theta_old);
    auto ref_ptr = std::make_shared<const PolicyParams>(ref);
    CategoricalAgent agent(theta_ptr, ref_ptr, _actions, _encoder, _rollout.agent_temperature);
    ScenarioUser user;
    auto executors = local_env_factory(_bundle.registry);
    RolloutConfig rcfg = _rollout;
    rcfg.group_size = cfg.group_size;

    const int n = task_count();
    const int batch = std::min(cfg.batch_size, n);
    std::vector<CollectedGroup> out;
    for (int k = 0; k < batch; ++k)
    {
        const int t = static_cast<int>((static_cast<long long>(step) * cfg.batch_size + k) % n);
        const Task& task = _bundle.tasks[static_cast<std::size_t>(t)];
        Group g = run_group(task, agent, user, executors, rcfg, mix_seed(seed, static_cast<std::uint64_t>(k)));
        CollectedGroup cg{task.id, {}, {}};
        for (std::size_t i = 0; i < g.trajectories.size(); ++i)
            cg.samples.push_back(sample_from_trajectory(g.trajectories[i], g.rewards[i], task.id + "#" + std::to_string(step) + "." + std::to_string(i)));
        cg.trajectories = std::move(g.trajectories);
        out.push_back(std::move(cg));
    }
    return out;
}

BanditSource::BanditSource(int actions, int rewarding_action): _actions(actions), _rewarding(rewarding_action)
{
    if (actions < 1 || rewarding_action < 0 || rewarding_action >= actions)
        throw Error("bandit: rewarding action out of range");
}

std::vector<CollectedGroup> BanditSource::collect(const PolicyParams& theta_old, const PolicyParams& ref, int step, std::uint64_t seed,
                                                  const GrpoConfig& cfg)
{
    if (theta_old.contexts() != 1 || theta_old.actions() != _actions)
        throw Error("bandit: policy must be 1 x " + std::to_string(_actions));
    std::mt19937_64 rng(seed);
    CollectedGroup g{"bandit", {}, {}};
    for (int i = 0; i < cfg.group_size; ++i)
    {
        const int a = sample_action(theta_old, 0, 1.0, rng);
        g.samples.push_back(SequenceSample{"bandit#" + std::to_string(step) + "." + std::to_string(i), "bandit",
                                           {TokenRecord{0, a, theta_old.log_prob(0, a), ref.log_prob(0, a), true}}, a == _rewarding ? 1 : 0});
    }
    return {std::move(g)};
}

// --- metrics ---------------------------------------------------------------

MetricsRecord summarize_step(int step, const std::vector<CollectedGroup>& groups, const PolicyParams& theta_old)
{
    MetricsRecord r;
    r.step = step;
    std::set<int> contexts;
    std::vector<std::vector<int>> rewards;
    std::vector<Trajectory> trajectories;
    double reward_sum = 0.0;
    double response_tokens = 0.0;
    double ngram_sum = 0.0;
    std::size_t samples = 0;
    for (const auto& g: groups)
    {
        std::vector<int> row;
        for (const auto& s: g.samples)
        {
            row.push_back(s.reward);
            reward_sum += s.reward;
            std::vector<int> ids;
            for (const auto& t: s.tokens)
                if (t.mask)
                {
                    contexts.insert(t.context_id);
                    ids.push_back(t.action_id);
                }
            response_tokens += static_cast<double>(ids.size());
            ngram_sum += unique_4gram_ratio(ids);
            ++samples;
        }
        rewards.push_back(std::move(row));
        trajectories.insert(trajectories.end(), g.trajectories.begin(), g.trajectories.end());
    }
    const std::vector<int> ctx(contexts.begin(), contexts.end());
    r.mean_entropy = entropy(theta_old, ctx);
    if (samples > 0)
    {
        r.mean_reward = reward_sum / static_cast<double>(samples);
        r.mean_response_tokens = response_tokens / static_cast<double>(samples);
        r.unique_4gram_ratio = ngram_sum / static_cast<double>(samples);
        r.all_correct_ratio = all_correct_ratio(rewards);
        r.all_wrong_ratio = all_wrong_ratio(rewards);
    }
    if (!trajectories.empty())
    {
        double turns = 0.0;
        for (const auto& t: trajectories)
            turns += t.turn_count();
        r.mean_turns = turns / static_cast<double>(trajectories.size());
        r.tool_counts = tool_counts(trajectories, general_tool_names()).mean_counts;
    }
    return r;
}

// --- checkpoints -----------------------------------------------------------

Json to_json(const Checkpoint& c)
{
    return Json{
        {"format", "mtrl-checkpoint"}, {"version", 1}, {"step", c.step}, {"config", to_json(c.cfg)}, {"theta", to_json(c.theta)}, {"ref", to_json(c.ref)},
    };
}

Checkpoint checkpoint_from_json(const Json& doc)
{
    if (doc.value("format", "") != "mtrl-checkpoint" || doc.value("version", 0) != 1)
        throw Error("not a version-1 checkpoint");
    Checkpoint c;
    c.step = doc.at("step").get<int>();
    c.cfg = grpo_config_from_json(doc.at("config"));
    c.theta = policy_params_from_json(doc.at("theta"));
    c.ref = policy_params_from_json(doc.at("ref"));
    c.theta.check_shape(c.ref);
    return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path)
{
    write_text_file(path, to_json(checkpoint).dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    return checkpoint_from_json(read_json_file(path));
}

// --- trainer ---------------------------------------------------------------

Trainer::Trainer(RolloutSource& source, GrpoConfig cfg, PolicyParams init, PolicyParams ref)
    : _source(source), _cfg(cfg), _theta(std::move(init)), _ref(std::move(ref))
{
    _cfg.validate();
    _theta.check_shape(_ref);
}

Trainer::Trainer(RolloutSource& source, Checkpoint checkpoint)
    : Trainer(source, checkpoint.cfg, std::move(checkpoint.theta), std::move(checkpoint.ref))
{
    _step = checkpoint.step;
}

int Trainer::planned_steps() const
{
    if (_cfg.steps > 0)
        return _cfg.steps;
    const int n = _source.task_count();
    return _cfg.epochs * ((n + _cfg.batch_size - 1) / _cfg.batch_size);
}

MetricsRecord Trainer::step()
{
    const PolicyParams theta_old = _theta;
    const auto collected = _source.collect(theta_old, _ref, _step, mix_seed(_cfg.seed, static_cast<std::uint64_t>(_step)), _cfg);

    std::vector<SampleGroup> groups;
    groups.reserve(collected.size());
    for (const auto& c: collected)
        groups.push_back(make_group(c.samples, _cfg));

    MetricsRecord record = summarize_step(_step + 1, collected, theta_old);
    for (int k = 0; k < _cfg.inner_updates; ++k)
    {
        ObjectiveResult res = grpo_objective(groups, _theta, _ref, _cfg);
        if (!std::isfinite(res.objective))
            throw Error("divergence: non-finite objective at step " + std::to_string(_step + 1));
        if (k == 0)
        {
            record.objective = res.objective;
            record.kl_value = res.mean_kl;
            record.grad_norm = l2_norm(res.gradient);
        }
        auto& z = _theta.logits();
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] += _cfg.learning_rate * res.gradient[i];
    }
    ++_step;
    return record;
}

void Trainer::run(int total_steps, const std::function<void(const MetricsRecord&)>& on_step)
{
    while (_step < total_steps)
    {
        MetricsRecord r = step();
        if (on_step)
            on_step(r);
    }
}

double evaluate_success_rate(const PolicyParams& theta, const DomainBundle& bundle, const std::vector<Emission>& actions, const ContextEncoder& encoder,
                             const RolloutConfig& rollout, int rollouts, std::uint64_t seed)
{
    if (rollouts < 1 || bundle.tasks.empty())
        throw Error("evaluation needs rollouts and tasks");
    CategoricalAgent agent(std::make_shared<const PolicyParams>(theta), nullptr, actions, encoder, rollout.agent_temperature);
    ScenarioUser user;
    auto executors = local_env_factory(bundle.registry);
    int wins = 0;
    for (int i = 0; i < rollouts; ++i)
    {
        const Task& task = bundle.tasks[static_cast<std::size_t>(i) % bundle.tasks.size()];
        auto exec = executors(task);
        Trajectory t = run_rollout(task, agent, user, *exec, rollout, mix_seed(seed, static_cast<std::uint64_t>(i)));
        wins += outcome_reward(score(task, t.final_db, t), t.termination);
    }
    return static_cast<double>(wins) / static_cast<double>(rollouts);
}

} // namespace mtrl
