#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "shieldkit/caap.hpp"
#include "shieldkit/grid.hpp"
#include "shieldkit/model.hpp"
#include "shieldkit/synthesis.hpp"

namespace shieldkit {

/// What to do in a state whose allowed-action set is empty.
enum class ShieldFallback {
    Abort,    ///< end the run and count it as unsafe
    AllowAll, ///< ignore the shield for this step
};

/// Uniform state -> action-mask lookup over either shield representation.
/// Validates that the artifact's grid axes and action list match the model.
class ActionMaskSource {
public:
    ActionMaskSource(ShieldGrid shield, const ModelDescriptor& desc);
    ActionMaskSource(DecisionTree tree, const ModelDescriptor& desc);

    std::uint64_t mask(const State& s) const;
    std::uint32_t action_count() const { return action_count_; }

private:
    std::variant<ShieldGrid, DecisionTree> source_;
    Grid binding_;
    std::uint32_t action_count_ = 0;
};

/// A decision procedure for runs: either a fixed action or a uniformly random
/// choice among the actions a mask source allows. Deterministic policies are
/// the singleton-mask special case.
class Strategy {
public:
    static Strategy fixed(ActionId action);
    static Strategy shielded_random(std::shared_ptr<const ActionMaskSource> masks,
                                    ShieldFallback fallback);

    /// nullopt means the fallback aborted the run.
    std::optional<ActionId> pick(const State& s, Rng& rng) const;

private:
    Strategy() = default;
    std::optional<ActionId> fixed_action_;
    std::shared_ptr<const ActionMaskSource> masks_;
    ShieldFallback fallback_ = ShieldFallback::Abort;
};

struct TracePoint {
    double time = 0.0;
    State state;
    std::int64_t action = -1; ///< action taken from this state; -1 on the final row
};

struct RunResult {
    bool safe = true;
    bool aborted = false; ///< empty shield mask under the Abort fallback
    double cost = 0.0;
    double elapsed = 0.0;
    std::uint64_t steps = 0;
};

/// Simulate one run until the horizon or a terminal state, checking the
/// property at every visited state (the initial one included). Aborted runs
/// count as unsafe.
RunResult run_simulation(const Model& model, const Strategy& strategy,
                         std::string_view property, double horizon, Rng& rng,
                         std::vector<TracePoint>* trace = nullptr);

struct RunStatistics {
    std::uint64_t runs = 0;
    std::uint64_t violations = 0;
    double confidence = 0.0;
    double violation_ci_low = 0.0;  ///< exact binomial bounds on P(violation)
    double violation_ci_high = 1.0;
    double mean_cost = 0.0;
    double cost_sd = 0.0;
    double cost_ci_low = 0.0; ///< Student-t bounds on the expected cost
    double cost_ci_high = 0.0;
};

/// Monte Carlo estimate over independently seeded runs; identical for any
/// thread count.
RunStatistics evaluate_strategy(const Model& model, const Strategy& strategy,
                                std::string_view property, std::uint64_t runs, double horizon,
                                double confidence, std::uint64_t seed);

inline RunStatistics estimate_safety(const Model& model, const Strategy& strategy,
                                     std::string_view property, std::uint64_t runs,
                                     double horizon, double confidence, std::uint64_t seed) {
    return evaluate_strategy(model, strategy, property, runs, horizon, confidence, seed);
}

inline RunStatistics estimate_cost(const Model& model, const Strategy& strategy,
                                   std::string_view property, std::uint64_t runs, double horizon,
                                   double confidence, std::uint64_t seed) {
    return evaluate_strategy(model, strategy, property, runs, horizon, confidence, seed);
}

/// Exact binomial (Clopper-Pearson) two-sided interval for k successes in n.
std::pair<double, double> clopper_pearson(std::uint64_t k, std::uint64_t n, double confidence);

/// Two-sided Student-t interval for a sample mean.
std::pair<double, double> student_t_interval(double mean, double sd, std::uint64_t n,
                                             double confidence);

struct LearnConfig {
    double learning_rate = 0.1;
    double discount = 0.99;
    double epsilon_start = 0.3;
    double epsilon_end = 0.01;
    ShieldFallback fallback = ShieldFallback::AllowAll;
};

struct LearnResult {
    ShieldGrid policy; ///< singleton masks: the greedy action per cell
    std::vector<double> episode_costs;
};

/// Tabular Q-learning on the shield's grid, choosing only shield-allowed
/// actions (reward is negated cost). Cells never visited keep the lowest
/// allowed action, so the policy stays total and shield-conforming.
LearnResult learn_under_shield(const Model& model, const ShieldGrid& shield,
                               std::uint64_t episodes, double horizon,
                               const LearnConfig& config, std::uint64_t seed);

} // namespace shieldkit
