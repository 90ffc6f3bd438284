// SPDX-License-Identifier: Apache-2.0
#include "mtrl/policy.hpp"

#include <algorithm>
#include <cmath>

namespace mtrl
{

PolicyParams::PolicyParams(int contexts, int actions, double fill): _contexts(contexts), _actions(actions)
{
    if (contexts < 1 || actions < 1)
        throw Error("policy needs at least one context and one action");
    _logits.assign(static_cast<std::size_t>(contexts) * static_cast<std::size_t>(actions), fill);
}

std::span<const double> PolicyParams::row(int context) const
{
    check_index(context, 0);
    return std::span<const double>(_logits).subspan(index(context, 0), static_cast<std::size_t>(_actions));
}

std::vector<double> PolicyParams::log_probabilities(int context) const
{
    auto r = row(context);
    const double peak = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double z: r)
        sum += std::exp(z - peak);
    const double log_norm = peak + std::log(sum);
    std::vector<double> out(r.size());
    for (std::size_t j = 0; j < r.size(); ++j)
        out[j] = r[j] - log_norm;
    return out;
}

std::vector<double> PolicyParams::probabilities(int context) const
{
    auto lp = log_probabilities(context);
    for (double& v: lp)
        v = std::exp(v);
    return lp;
}

double PolicyParams::log_prob(int context, int action) const
{
    check_index(context, action);
    return log_probabilities(context)[static_cast<std::size_t>(action)];
}

void PolicyParams::check_shape(const PolicyParams& other) const
{
    if (_contexts != other._contexts || _actions != other._actions)
        throw Error("policy shape mismatch: " + std::to_string(_contexts) + "x" + std::to_string(_actions) + " vs " + std::to_string(other._contexts)
                    + "x" + std::to_string(other._actions));
}

void PolicyParams::check_index(int context, int action) const
{
    if (context < 0 || context >= _contexts || action < 0 || action >= _actions)
        throw Error("policy index (" + std::to_string(context) + ", " + std::to_string(action) + ") out of range " + std::to_string(_contexts) + "x"
                    + std::to_string(_actions));
}

Json to_json(const PolicyParams& params)
{
    return Json{{"contexts", params.contexts()}, {"actions", params.actions()}, {"logits", params.logits()}};
}

PolicyParams policy_params_from_json(const Json& doc)
{
    PolicyParams p(doc.at("contexts").get<int>(), doc.at("actions").get<int>());
    auto logits = doc.at("logits").get<std::vector<double>>();
    if (logits.size() != p.size())
        throw Error("policy logits have " + std::to_string(logits.size()) + " entries, expected " + std::to_string(p.size()));
    p.logits() = std::move(logits);
    return p;
}

double uniform01(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int sample_action(const PolicyParams& params, int context, double temperature, std::mt19937_64& rng)
{
    auto r = params.row(context);
    if (temperature <= 0.0)
        return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    std::vector<double> scaled(r.begin(), r.end());
    const double peak = *std::max_element(scaled.begin(), scaled.end());
    double sum = 0.0;
    for (double& z: scaled)
    {
        z = std::exp((z - peak) / temperature);
        sum += z;
    }
    const double u = uniform01(rng) * sum;
    double acc = 0.0;
    for (std::size_t j = 0; j < scaled.size(); ++j)
    {
        acc += scaled[j];
        if (u < acc)
            return static_cast<int>(j);
    }
    return static_cast<int>(scaled.size()) - 1;
}

class CategoricalSession : public AgentSession
{
public:
    CategoricalSession(const CategoricalAgent& agent, std::uint64_t seed): _agent(agent), _rng(seed) {}

    AgentStep step(const AgentView& view) override
    {
        const int context = _agent._encoder(view);
        const int action = sample_action(*_agent._theta, context, _agent._temperature, _rng);
        Emission e = _agent._actions[static_cast<std::size_t>(action)];
        const double ref = _agent._ref ? _agent._ref->log_prob(context, action) : 0.0;
        e.tokens = {TokenRecord{context, action, _agent._theta->log_prob(context, action), ref, true}};
        return AgentStep{{std::move(e)}};
    }

private:
    const CategoricalAgent& _agent;
    std::mt19937_64 _rng;
};

CategoricalAgent::CategoricalAgent(std::shared_ptr<const PolicyParams> theta, std::shared_ptr<const PolicyParams> ref, std::vector<Emission> actions,
                                   ContextEncoder encoder, double temperature)
    : _theta(std::move(theta)), _ref(std::move(ref)), _actions(std::move(actions)), _encoder(std::move(encoder)), _temperature(temperature)
{
    if (!_theta)
        throw Error("categorical agent needs parameters");
    if (static_cast<int>(_actions.size()) != _theta->actions())
        throw Error("action space has " + std::to_string(_actions.size()) + " entries, policy has " + std::to_string(_theta->actions()));
    if (_ref)
        _theta->check_shape(*_ref);
}

std::unique_ptr<AgentSession> CategoricalAgent::start(const Task&, std::uint64_t seed) const
{
    return std::make_unique<CategoricalSession>(*this, seed);
}

} // namespace mtrl
