#include "shieldkit/eval.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "shieldkit/errors.hpp"
#include "shieldkit/parallel.hpp"

namespace shieldkit {

// ---------------------------------------------------------------------------
// Mask lookup and strategies
// ---------------------------------------------------------------------------

namespace {

void check_actions(const std::vector<std::string>& artifact,
                   const std::vector<std::string>& model) {
    if (artifact != model)
        throw ValidationError("artifact action list does not match the model's actions");
}

} // namespace

ActionMaskSource::ActionMaskSource(ShieldGrid shield, const ModelDescriptor& desc)
    : source_(std::move(shield)),
      binding_(std::get<ShieldGrid>(source_).grid, desc),
      action_count_(static_cast<std::uint32_t>(desc.actions.size())) {
    check_actions(std::get<ShieldGrid>(source_).actions, desc.actions);
}

ActionMaskSource::ActionMaskSource(DecisionTree tree, const ModelDescriptor& desc)
    : source_(std::move(tree)),
      binding_(std::get<DecisionTree>(source_).domain, desc),
      action_count_(static_cast<std::uint32_t>(desc.actions.size())) {
    const DecisionTree& t = std::get<DecisionTree>(source_);
    t.validate();
    check_actions(t.actions, desc.actions);
}

std::uint64_t ActionMaskSource::mask(const State& s) const {
    if (const auto* shield = std::get_if<ShieldGrid>(&source_))
        return shield->mask_at(binding_.cell_id_of(s));
    const auto& tree = std::get<DecisionTree>(source_);
    std::vector<double> values = binding_.axis_values(s);
    return tree.evaluate(values);
}

Strategy Strategy::fixed(ActionId action) {
    Strategy strategy;
    strategy.fixed_action_ = action;
    return strategy;
}

Strategy Strategy::shielded_random(std::shared_ptr<const ActionMaskSource> masks,
                                   ShieldFallback fallback) {
    if (!masks) throw ValidationError("strategy needs a mask source");
    Strategy strategy;
    strategy.masks_ = std::move(masks);
    strategy.fallback_ = fallback;
    return strategy;
}

std::optional<ActionId> Strategy::pick(const State& s, Rng& rng) const {
    if (fixed_action_) return *fixed_action_;
    std::uint64_t mask = masks_->mask(s);
    if (mask == 0) {
        if (fallback_ == ShieldFallback::Abort) return std::nullopt;
        mask = full_action_mask(masks_->action_count());
    }
    auto allowed = static_cast<std::uint64_t>(__builtin_popcountll(mask));
    std::uint64_t skip = rng.below(allowed);
    for (std::uint32_t action = 0;; ++action) {
        if (!(mask >> action & 1)) continue;
        if (skip == 0) return action;
        --skip;
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

RunResult run_simulation(const Model& model, const Strategy& strategy,
                         std::string_view property, double horizon, Rng& rng,
                         std::vector<TracePoint>* trace) {
    RunResult result;
    State state = model.descriptor().initial_state;
    double now = 0.0;
    result.safe = model.is_safe(state, property);
    if (trace) trace->push_back({now, state, -1});

    while (result.safe && now < horizon) {
        std::optional<ActionId> action = strategy.pick(state, rng);
        if (!action) {
            result.aborted = true;
            result.safe = false;
            break;
        }
        if (trace) trace->back().action = static_cast<std::int64_t>(*action);
        DecisionStepOutcome outcome = model.simulate_decision_step(state, *action, rng);
        result.cost += outcome.cost;
        now += outcome.elapsed;
        state = std::move(outcome.next);
        ++result.steps;
        if (!model.is_safe(state, property)) result.safe = false;
        if (trace) trace->push_back({now, state, -1});
        if (outcome.terminal) break;
    }
    result.elapsed = now;
    return result;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

std::pair<double, double> clopper_pearson(std::uint64_t k, std::uint64_t n, double confidence) {
    if (n == 0 || k > n) throw ValidationError("bad binomial sample for the interval");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ValidationError("confidence must lie strictly between 0 and 1");
    double alpha = 1.0 - confidence;
    double lo = 0.0, hi = 1.0;
    if (k > 0) {
        boost::math::beta_distribution<double> lower(static_cast<double>(k),
                                                     static_cast<double>(n - k + 1));
        lo = boost::math::quantile(lower, alpha / 2.0);
    }
    if (k < n) {
        boost::math::beta_distribution<double> upper(static_cast<double>(k + 1),
                                                     static_cast<double>(n - k));
        hi = boost::math::quantile(upper, 1.0 - alpha / 2.0);
    }
    return {lo, hi};
}

std::pair<double, double> student_t_interval(double mean, double sd, std::uint64_t n,
                                             double confidence) {
    if (n < 2 || sd <= 0.0) return {mean, mean};
    boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
    double t = boost::math::quantile(dist, 1.0 - (1.0 - confidence) / 2.0);
    double half = t * sd / std::sqrt(static_cast<double>(n));
    return {mean - half, mean + half};
}

RunStatistics evaluate_strategy(const Model& model, const Strategy& strategy,
                                std::string_view property, std::uint64_t runs, double horizon,
                                double confidence, std::uint64_t seed) {
    if (runs == 0) throw ValidationError("need at least one run");
    std::vector<std::uint8_t> unsafe(runs, 0);
    std::vector<double> costs(runs, 0.0);
    parallel_for(runs, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t run = begin; run < end; ++run) {
            Rng rng = Rng::derive(seed, {run});
            RunResult result = run_simulation(model, strategy, property, horizon, rng);
            unsafe[run] = result.safe ? 0 : 1;
            costs[run] = result.cost;
        }
    });

    RunStatistics stats;
    stats.runs = runs;
    stats.confidence = confidence;
    for (std::uint8_t flag : unsafe) stats.violations += flag;

    double sum = 0.0;
    for (double cost : costs) sum += cost;
    stats.mean_cost = sum / static_cast<double>(runs);
    if (runs > 1) {
        double squares = 0.0;
        for (double cost : costs) {
            double d = cost - stats.mean_cost;
            squares += d * d;
        }
        stats.cost_sd = std::sqrt(squares / static_cast<double>(runs - 1));
    }

    std::tie(stats.violation_ci_low, stats.violation_ci_high) =
        clopper_pearson(stats.violations, runs, confidence);
    std::tie(stats.cost_ci_low, stats.cost_ci_high) =
        student_t_interval(stats.mean_cost, stats.cost_sd, runs, confidence);
    return stats;
}

// ---------------------------------------------------------------------------
// Learning
// ---------------------------------------------------------------------------

namespace {

ActionId greedy_action(const std::vector<double>& q, std::uint64_t row, std::uint64_t mask,
                       std::uint32_t action_count) {
    ActionId best = 0;
    double best_value = -1e300;
    for (std::uint32_t action = 0; action < action_count; ++action) {
        if (!(mask >> action & 1)) continue;
        double value = q[row * action_count + action];
        if (value > best_value) {
            best_value = value;
            best = action;
        }
    }
    return best;
}

double max_q(const std::vector<double>& q, std::uint64_t row, std::uint64_t mask,
             std::uint32_t action_count) {
    double best = 0.0;
    bool any = false;
    for (std::uint32_t action = 0; action < action_count; ++action) {
        if (!(mask >> action & 1)) continue;
        double value = q[row * action_count + action];
        if (!any || value > best) {
            best = value;
            any = true;
        }
    }
    return any ? best : 0.0;
}

} // namespace

LearnResult learn_under_shield(const Model& model, const ShieldGrid& shield,
                               std::uint64_t episodes, double horizon,
                               const LearnConfig& config, std::uint64_t seed) {
    if (episodes == 0) throw ValidationError("need at least one episode");
    const ModelDescriptor& desc = model.descriptor();
    check_actions(shield.actions, desc.actions);
    Grid grid(shield.grid, desc);
    const std::uint64_t cells = grid.total_cells();
    const auto action_count = static_cast<std::uint32_t>(desc.actions.size());
    const std::uint64_t full = full_action_mask(action_count);
    const std::string& property = desc.properties.front();

    // One extra row for OUT, so excursions beyond the grid still learn.
    std::vector<double> q((cells + 1) * action_count, 0.0);
    LearnResult result;
    result.episode_costs.reserve(episodes);

    for (std::uint64_t episode = 0; episode < episodes; ++episode) {
        Rng rng = Rng::derive(seed, {episode});
        double split = episodes > 1
                           ? static_cast<double>(episode) / static_cast<double>(episodes - 1)
                           : 1.0;
        double epsilon = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * split;

        State state = desc.initial_state;
        std::uint64_t cell = grid.cell_id_of(state);
        double now = 0.0;
        double episode_cost = 0.0;
        while (now < horizon) {
            std::uint64_t mask = shield.mask_at(cell);
            if (mask == 0) {
                if (config.fallback == ShieldFallback::Abort) break;
                mask = full;
            }
            ActionId action;
            if (rng.uniform() < epsilon) {
                auto allowed = static_cast<std::uint64_t>(__builtin_popcountll(mask));
                std::uint64_t skip = rng.below(allowed);
                action = 0;
                for (std::uint32_t a = 0;; ++a) {
                    if (!(mask >> a & 1)) continue;
                    if (skip == 0) {
                        action = a;
                        break;
                    }
                    --skip;
                }
            } else {
                action = greedy_action(q, cell, mask, action_count);
            }

            DecisionStepOutcome outcome = model.simulate_decision_step(state, action, rng);
            episode_cost += outcome.cost;
            std::uint64_t next_cell = grid.cell_id_of(outcome.next);
            std::uint64_t next_mask = shield.mask_at(next_cell);
            if (next_mask == 0) next_mask = full;

            double target = -outcome.cost;
            if (!outcome.terminal)
                target += config.discount * max_q(q, next_cell, next_mask, action_count);
            double& entry = q[cell * action_count + action];
            entry += config.learning_rate * (target - entry);

            state = std::move(outcome.next);
            cell = next_cell;
            now += outcome.elapsed;
            if (outcome.terminal || !model.is_safe(state, property)) break;
        }
        result.episode_costs.push_back(episode_cost);
    }

    // Freeze the greedy policy as a singleton-mask shield.
    result.policy.grid = shield.grid;
    result.policy.actions = shield.actions;
    result.policy.cell_masks.resize(cells);
    for (std::uint64_t cell = 0; cell < cells; ++cell) {
        std::uint64_t mask = shield.cell_masks[cell];
        result.policy.cell_masks[cell] =
            mask == 0 ? 0 : 1ull << greedy_action(q, cell, mask, action_count);
    }
    result.policy.out_mask =
        shield.out_mask == 0 ? 0 : 1ull << greedy_action(q, cells, shield.out_mask, action_count);
    return result;
}

} // namespace shieldkit
