// SPDX-License-Identifier: Apache-2.0
#include "mtrl/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mtrl
{

void GrpoConfig::validate() const
{
    if (!(clip_epsilon > 0.0))
        throw Error("clip_epsilon must be > 0");
    if (!(kl_beta >= 0.0))
        throw Error("kl_beta must be >= 0");
    if (!(std_floor > 0.0))
        throw Error("std_floor must be > 0");
    if (!std::isfinite(learning_rate))
        throw Error("learning_rate must be finite");
    if (epochs < 1 || batch_size < 1 || group_size < 1 || inner_updates < 1 || steps < 0)
        throw Error("epochs, batch_size, group_size and inner_updates must be >= 1; steps >= 0");
}

Json to_json(const GrpoConfig& cfg)
{
    return Json{
        {"clip_epsilon", cfg.clip_epsilon}, {"kl_beta", cfg.kl_beta}, {"std_floor", cfg.std_floor},   {"learning_rate", cfg.learning_rate},
        {"epochs", cfg.epochs},             {"batch_size", cfg.batch_size}, {"group_size", cfg.group_size}, {"seed", cfg.seed},
        {"inner_updates", cfg.inner_updates}, {"steps", cfg.steps},
    };
}

GrpoConfig grpo_config_from_json(const Json& doc, GrpoConfig cfg)
{
    cfg.clip_epsilon = doc.value("clip_epsilon", cfg.clip_epsilon);
    cfg.kl_beta = doc.value("kl_beta", cfg.kl_beta);
    cfg.std_floor = doc.value("std_floor", cfg.std_floor);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.group_size = doc.value("group_size", cfg.group_size);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.inner_updates = doc.value("inner_updates", cfg.inner_updates);
    cfg.steps = doc.value("steps", cfg.steps);
    cfg.validate();
    return cfg;
}

AdvantageSet compute_advantages(std::span<const double> rewards, const GrpoConfig& cfg)
{
    if (rewards.empty())
        throw Error("compute_advantages: empty group");
    const auto n = static_cast<double>(rewards.size());
    AdvantageSet out;
    double sum = 0.0;
    for (double r: rewards)
        sum += r;
    out.mean_r = sum / n;
    double var = 0.0;
    for (double r: rewards)
        var += (r - out.mean_r) * (r - out.mean_r);
    out.std_r = std::sqrt(var / n);
    out.advantages.assign(rewards.size(), 0.0);
    if (out.std_r < cfg.std_floor)
    {
        out.degenerate = true;
        return out;
    }
    const double denom = std::max(out.std_r, cfg.std_floor);
    for (std::size_t i = 0; i < rewards.size(); ++i)
        out.advantages[i] = (rewards[i] - out.mean_r) / denom;
    return out;
}

AdvantageSet compute_advantages(std::span<const int> rewards, const GrpoConfig& cfg)
{
    std::vector<double> r(rewards.begin(), rewards.end());
    return compute_advantages(std::span<const double>(r), cfg);
}

SampleGroup make_group(std::vector<SequenceSample> samples, const GrpoConfig& cfg)
{
    std::vector<double> rewards;
    rewards.reserve(samples.size());
    for (const auto& s: samples)
        rewards.push_back(s.reward);
    SampleGroup g{std::move(samples), {}};
    g.advantages = compute_advantages(std::span<const double>(rewards), cfg);
    return g;
}

namespace
{

double log_ratio(const SequenceSample& sample, const PolicyParams& theta)
{
    double s = 0.0;
    for (const auto& t: sample.tokens)
        if (t.mask)
            s += theta.log_prob(t.context_id, t.action_id) - t.logprob_old;
    return s;
}

double row_kl(const std::vector<double>& lp, const std::vector<double>& lq)
{
    double kl = 0.0;
    for (std::size_t j = 0; j < lp.size(); ++j)
        kl += std::exp(lp[j]) * (lp[j] - lq[j]);
    return kl;
}

} // namespace

double sequence_ratio(const SequenceSample& sample, const PolicyParams& theta)
{
    return std::exp(log_ratio(sample, theta));
}

std::vector<int> masked_contexts(const SequenceSample& sample)
{
    std::set<int> seen;
    for (const auto& t: sample.tokens)
        if (t.mask)
            seen.insert(t.context_id);
    return {seen.begin(), seen.end()};
}

double kl_term(const PolicyParams& theta, const PolicyParams& ref, std::span<const int> contexts)
{
    theta.check_shape(ref);
    if (contexts.empty())
        return 0.0;
    double total = 0.0;
    for (int c: contexts)
        total += row_kl(theta.log_probabilities(c), ref.log_probabilities(c));
    return total / static_cast<double>(contexts.size());
}

double entropy(const PolicyParams& theta, std::span<const int> contexts)
{
    if (contexts.empty())
        return 0.0;
    double total = 0.0;
    for (int c: contexts)
    {
        double h = 0.0;
        for (double lp: theta.log_probabilities(c))
            h -= std::exp(lp) * lp;
        total += h;
    }
    return total / static_cast<double>(contexts.size());
}

ObjectiveResult grpo_objective(std::span<const SampleGroup> groups, const PolicyParams& theta, const PolicyParams& ref, const GrpoConfig& cfg)
{
    theta.check_shape(ref);
    ObjectiveResult out;
    out.gradient.assign(theta.size(), 0.0);
    if (groups.empty())
        return out;

    const int actions = theta.actions();
    const double batch_weight = 1.0 / static_cast<double>(groups.size());
    std::size_t sample_count = 0;
    double kl_sum = 0.0;

    for (const auto& group: groups)
    {
        if (group.samples.size() != group.advantages.advantages.size())
            throw Error("group has " + std::to_string(group.samples.size()) + " samples but " + std::to_string(group.advantages.advantages.size())
                        + " advantages");
        if (group.samples.empty())
            continue;
        const double w = batch_weight / static_cast<double>(group.samples.size());
        for (std::size_t i = 0; i < group.samples.size(); ++i)
        {
            const SequenceSample& sample = group.samples[i];
            const double adv = group.advantages.advantages[i];
            for (const auto& t: sample.tokens)
                if (t.mask)
                    theta.check_index(t.context_id, t.action_id);

            const double ratio = std::exp(log_ratio(sample, theta));
            const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
            const double surrogate = std::min(ratio * adv, clipped * adv);
            const bool clip_active = (adv > 0.0 && ratio > 1.0 + cfg.clip_epsilon) || (adv < 0.0 && ratio < 1.0 - cfg.clip_epsilon);
            out.clipped += clip_active ? 1 : 0;

            const auto contexts = masked_contexts(sample);
            double kl = 0.0;
            std::vector<std::vector<double>> lp_rows;
            std::vector<std::vector<double>> lq_rows;
            std::vector<double> row_kls;
            for (int c: contexts)
            {
                lp_rows.push_back(theta.log_probabilities(c));
                lq_rows.push_back(ref.log_probabilities(c));
                row_kls.push_back(row_kl(lp_rows.back(), lq_rows.back()));
                kl += row_kls.back();
            }
            if (!contexts.empty())
                kl /= static_cast<double>(contexts.size());

            const double term = surrogate - cfg.kl_beta * kl;
            if (!std::isfinite(ratio) || !std::isfinite(term))
                throw Error("non-finite objective term for sample '" + sample.id + "' (ratio " + std::to_string(ratio) + ")");
            out.objective += w * term;
            kl_sum += kl;
            ++sample_count;

            // d surrogate: A * ratio * sum over masked tokens of (e_a - p_c).
            if (!clip_active && adv != 0.0)
            {
                const double scale = w * adv * ratio;
                for (const auto& t: sample.tokens)
                {
                    if (!t.mask)
                        continue;
                    const auto p = theta.probabilities(t.context_id);
                    double* g = &out.gradient[static_cast<std::size_t>(t.context_id) * static_cast<std::size_t>(actions)];
                    for (int j = 0; j < actions; ++j)
                        g[j] -= scale * p[static_cast<std::size_t>(j)];
                    g[t.action_id] += scale;
                }
            }
            // d KL_row / d z_j = p_j * (log p_j - log q_j - KL_row).
            if (cfg.kl_beta != 0.0 && !contexts.empty())
            {
                const double scale = w * cfg.kl_beta / static_cast<double>(contexts.size());
                for (std::size_t k = 0; k < contexts.size(); ++k)
                {
                    double* g = &out.gradient[static_cast<std::size_t>(contexts[k]) * static_cast<std::size_t>(actions)];
                    for (int j = 0; j < actions; ++j)
                    {
                        const double lp = lp_rows[k][static_cast<std::size_t>(j)];
                        g[j] -= scale * std::exp(lp) * (lp - lq_rows[k][static_cast<std::size_t>(j)] - row_kls[k]);
                    }
                }
            }
        }
    }
    out.mean_kl = sample_count == 0 ? 0.0 : kl_sum / static_cast<double>(sample_count);
    for (double g: out.gradient)
        if (!std::isfinite(g))
            throw Error("non-finite gradient");
    return out;
}

double l2_norm(std::span<const double> values)
{
    double s = 0.0;
    for (double v: values)
        s += v * v;
    return std::sqrt(s);
}

} // namespace mtrl
