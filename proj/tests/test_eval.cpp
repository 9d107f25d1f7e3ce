#include <doctest.h>

#include <bit>
#include <memory>
#include <vector>

#include "shieldkit/errors.hpp"
#include "shieldkit/eval.hpp"
#include "shieldkit/model.hpp"

#include "test_util.hpp"

using namespace shieldkit;
using testutil::DriftModel;

namespace {

ShieldGrid drift_shield(std::vector<std::uint64_t> masks, std::uint64_t out_mask) {
    ShieldGrid shield;
    shield.grid.axes = {{"x", 0.0, 5.0, masks.size(), false}};
    shield.actions = {"move", "stay"};
    shield.cell_masks = std::move(masks);
    shield.out_mask = out_mask;
    return shield;
}

} // namespace

TEST_CASE("clopper-pearson interval fixtures") {
    auto [lo0, hi0] = clopper_pearson(0, 10000, 0.99);
    CHECK(lo0 == 0.0);
    CHECK(hi0 == doctest::Approx(0.00053).epsilon(0.02));

    auto [lon, hin] = clopper_pearson(10000, 10000, 0.99);
    CHECK(hin == 1.0);
    CHECK(lon == doctest::Approx(0.99947).epsilon(0.0001));

    // Textbook value for 5 successes out of 10 at 95%.
    auto [lo5, hi5] = clopper_pearson(5, 10, 0.95);
    CHECK(lo5 == doctest::Approx(0.187086).epsilon(1e-4));
    CHECK(hi5 == doctest::Approx(0.812914).epsilon(1e-4));

    // Monotone in k, and the interval always contains k/n.
    double prev_hi = 0.0;
    for (std::uint64_t k = 0; k <= 20; ++k) {
        auto [lo, hi] = clopper_pearson(k, 20, 0.9);
        CHECK(lo <= static_cast<double>(k) / 20.0);
        CHECK(hi >= static_cast<double>(k) / 20.0);
        CHECK(hi >= prev_hi);
        prev_hi = hi;
    }

    CHECK_THROWS_AS(clopper_pearson(5, 4, 0.95), ValidationError);
    CHECK_THROWS_AS(clopper_pearson(1, 4, 1.5), ValidationError);
    CHECK_THROWS_AS(clopper_pearson(1, 0, 0.95), ValidationError);
}

TEST_CASE("student-t interval") {
    auto [lo, hi] = student_t_interval(10.0, 2.0, 100, 0.95);
    CHECK(lo == doctest::Approx(10.0 - 0.39684).epsilon(1e-3));
    CHECK(hi == doctest::Approx(10.0 + 0.39684).epsilon(1e-3));

    auto [dlo, dhi] = student_t_interval(3.0, 0.0, 50, 0.95);
    CHECK(dlo == 3.0);
    CHECK(dhi == 3.0);

    auto [slo, shi] = student_t_interval(3.0, 1.0, 1, 0.95);
    CHECK(slo == 3.0);
    CHECK(shi == 3.0);
}

TEST_CASE("run simulation: unsafe visits end the run and latch the flag") {
    DriftModel model; // safe while x < 4
    Strategy move = Strategy::fixed(0);
    Rng rng = Rng::derive(1, {0});
    std::vector<TracePoint> trace;
    RunResult result = run_simulation(model, move, "below-limit", 100.0, rng, &trace);

    CHECK_FALSE(result.safe);
    CHECK_FALSE(result.aborted);
    CHECK(result.steps == 4); // 0 -> 1 -> 2 -> 3 -> 4, stop at the violation
    CHECK(result.cost == doctest::Approx(4.0));
    REQUIRE(trace.size() == 5);
    CHECK(trace.front().state.continuous[0] == 0.0);
    CHECK(trace.front().action == 0);
    CHECK(trace.back().state.continuous[0] == 4.0);
    CHECK(trace.back().action == -1);
}

TEST_CASE("run simulation: horizon bounds the run") {
    DriftModel model;
    Strategy stay = Strategy::fixed(1);
    Rng rng = Rng::derive(1, {1});
    RunResult result = run_simulation(model, stay, "below-limit", 10.0, rng);
    CHECK(result.safe);
    CHECK(result.steps >= 9);
    CHECK(result.steps <= 11);
    CHECK(result.elapsed >= 10.0);
    CHECK(result.cost == doctest::Approx(static_cast<double>(result.steps)));
}

TEST_CASE("empty shield masks abort or pass through, depending on the fallback") {
    DriftModel model;
    auto masks = std::make_shared<ActionMaskSource>(drift_shield({0, 0, 0, 0, 0}, 0),
                                                    model.descriptor());

    Rng rng = Rng::derive(2, {0});
    RunResult aborted = run_simulation(
        model, Strategy::shielded_random(masks, ShieldFallback::Abort), "below-limit", 10.0, rng);
    CHECK_FALSE(aborted.safe);
    CHECK(aborted.aborted);
    CHECK(aborted.steps == 0);

    RunResult ignored = run_simulation(model,
                                       Strategy::shielded_random(masks, ShieldFallback::AllowAll),
                                       "below-limit", 10.0, rng);
    CHECK_FALSE(ignored.aborted);
    CHECK(ignored.steps > 0);
}

TEST_CASE("shielded random strategy only picks allowed actions") {
    DriftModel model;
    // Only "stay" allowed below 4; the shield keeps every run safe forever.
    auto masks = std::make_shared<ActionMaskSource>(drift_shield({3, 3, 3, 2, 0}, 0),
                                                    model.descriptor());
    Strategy strategy = Strategy::shielded_random(masks, ShieldFallback::Abort);

    RunStatistics stats = evaluate_strategy(model, strategy, "below-limit", 500, 50.0, 0.95, 3);
    CHECK(stats.runs == 500);
    CHECK(stats.violations == 0);
    CHECK(stats.violation_ci_low == 0.0);
    CHECK(stats.violation_ci_high < 0.02);
    CHECK(stats.mean_cost == doctest::Approx(50.0)); // one unit per step, 50 steps
}

TEST_CASE("evaluate_strategy counts violations and is deterministic") {
    DriftModel model;
    Strategy move = Strategy::fixed(0);
    RunStatistics a = evaluate_strategy(model, move, "below-limit", 200, 100.0, 0.99, 17);
    RunStatistics b = evaluate_strategy(model, move, "below-limit", 200, 100.0, 0.99, 17);

    CHECK(a.violations == 200);
    CHECK(a.violation_ci_high == 1.0);
    CHECK(a.violation_ci_low > 0.95);
    CHECK(a.mean_cost == b.mean_cost);
    CHECK(a.violations == b.violations);
    CHECK(a.cost_ci_low <= a.mean_cost);
    CHECK(a.cost_ci_high >= a.mean_cost);
}

TEST_CASE("mask sources validate the artifact against the model") {
    DriftModel model;
    ShieldGrid wrong_actions = drift_shield({3, 3, 3, 3, 3}, 3);
    wrong_actions.actions = {"foo", "bar"};
    CHECK_THROWS_AS(ActionMaskSource(wrong_actions, model.descriptor()), ValidationError);

    ShieldGrid wrong_axis = drift_shield({3, 3, 3, 3, 3}, 3);
    wrong_axis.grid.axes[0].name = "y";
    CHECK_THROWS_AS(ActionMaskSource(wrong_axis, model.descriptor()), ValidationError);

    ActionMaskSource good(drift_shield({1, 2, 3, 0, 2}, 3), model.descriptor());
    CHECK(good.mask({{2.5}, {}}) == 3);
    CHECK(good.mask({{0.5}, {}}) == 1);
    CHECK(good.mask({{7.0}, {}}) == 3); // OUT falls back to the out mask
}

TEST_CASE("q-learning under a permissive shield undercuts the random strategy") {
    auto model = make_model("random-walk");
    const auto& desc = model->descriptor();

    ShieldGrid shield;
    shield.grid = parse_grid_spec("x[0,1.2]:12,t[0,1.2]:12", desc);
    shield.actions = desc.actions;
    shield.cell_masks.assign(144, 3);
    shield.out_mask = 3;

    LearnResult learned = learn_under_shield(*model, shield, 4000, 10.0, {}, 5);
    REQUIRE(learned.episode_costs.size() == 4000);
    for (std::uint64_t mask : learned.policy.cell_masks) {
        CHECK(std::popcount(mask) == 1); // the policy is total and deterministic
        CHECK((mask & 3) == mask);
    }

    auto learned_masks =
        std::make_shared<ActionMaskSource>(learned.policy, desc);
    auto shield_masks = std::make_shared<ActionMaskSource>(shield, desc);
    RunStatistics cheap = evaluate_strategy(
        *model, Strategy::shielded_random(learned_masks, ShieldFallback::Abort),
        "reach-in-time", 2000, 10.0, 0.95, 11);
    RunStatistics random = evaluate_strategy(
        *model, Strategy::shielded_random(shield_masks, ShieldFallback::Abort),
        "reach-in-time", 2000, 10.0, 0.95, 11);

    // The learner minimizes cost; at 95% confidence its mean must not exceed
    // the uniform-random baseline.
    CHECK(cheap.cost_ci_high < random.cost_ci_low);
}
