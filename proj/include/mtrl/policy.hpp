// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/common.hpp"
#include "mtrl/participants.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace mtrl
{

/// Tabular softmax policy: one row of logits per context.
class PolicyParams
{
public:
    PolicyParams() = default;
    PolicyParams(int contexts, int actions, double fill = 0.0);

    [[nodiscard]] int contexts() const noexcept { return _contexts; }
    [[nodiscard]] int actions() const noexcept { return _actions; }
    [[nodiscard]] std::size_t size() const noexcept { return _logits.size(); }

    [[nodiscard]] double& at(int context, int action) { return _logits[index(context, action)]; }
    [[nodiscard]] double at(int context, int action) const { return _logits[index(context, action)]; }
    [[nodiscard]] std::span<const double> row(int context) const;
    [[nodiscard]] std::vector<double>& logits() noexcept { return _logits; }
    [[nodiscard]] const std::vector<double>& logits() const noexcept { return _logits; }

    /// Numerically stable softmax / log-softmax of one row.
    [[nodiscard]] std::vector<double> probabilities(int context) const;
    [[nodiscard]] std::vector<double> log_probabilities(int context) const;
    [[nodiscard]] double log_prob(int context, int action) const;

    /// Throws Error on a shape mismatch or out-of-range index.
    void check_shape(const PolicyParams& other) const;
    void check_index(int context, int action) const;

    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

private:
    [[nodiscard]] std::size_t index(int context, int action) const
    {
        return static_cast<std::size_t>(context) * static_cast<std::size_t>(_actions) + static_cast<std::size_t>(action);
    }

    int _contexts = 0;
    int _actions = 0;
    std::vector<double> _logits;
};

Json to_json(const PolicyParams& params);
PolicyParams policy_params_from_json(const Json& doc);

/// Uniform double in [0, 1) from the top 53 bits of one engine draw; fixed
/// across standard libraries unlike std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng);

/// Samples from softmax(logits / temperature); temperature 0 is argmax.
int sample_action(const PolicyParams& params, int context, double temperature, std::mt19937_64& rng);

/// Maps the conversation so far to a policy context id.
using ContextEncoder = std::function<int(const AgentView&)>;

/// Trainable agent: every step samples one action, which expands to one
/// emission carrying a single TokenRecord.
class CategoricalAgent : public AgentPolicy
{
public:
    CategoricalAgent(std::shared_ptr<const PolicyParams> theta, std::shared_ptr<const PolicyParams> ref, std::vector<Emission> actions,
                     ContextEncoder encoder, double temperature = 1.0);

    [[nodiscard]] std::unique_ptr<AgentSession> start(const Task& task, std::uint64_t seed) const override;

    [[nodiscard]] const PolicyParams& theta() const noexcept { return *_theta; }
    [[nodiscard]] const std::vector<Emission>& actions() const noexcept { return _actions; }

private:
    friend class CategoricalSession;
    std::shared_ptr<const PolicyParams> _theta;
    std::shared_ptr<const PolicyParams> _ref;
    std::vector<Emission> _actions;
    ContextEncoder _encoder;
    double _temperature;
};

} // namespace mtrl
