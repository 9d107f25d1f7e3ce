#include <doctest.h>

#include <cmath>

#include "shieldkit/errors.hpp"
#include "shieldkit/model.hpp"

using namespace shieldkit;

namespace {
Rng fresh_rng() { return Rng::derive(99, {0}); }
}

TEST_CASE("bouncing ball: free flight over one period") {
    auto model = make_model("bouncing-ball");
    Rng rng = fresh_rng();
    // From rest at p=10 nothing random happens within 0.1 s.
    auto out = model->simulate_decision_step({{10.0, 0.0}, {0}}, 0, rng);
    CHECK(out.next.continuous[0] == doctest::Approx(9.95095).epsilon(1e-12));
    CHECK(out.next.continuous[1] == doctest::Approx(-0.981).epsilon(1e-12));
    CHECK(out.next.discrete[0] == 0);
    CHECK(out.cost == 0.0);
    CHECK(out.elapsed == doctest::Approx(0.1));
    CHECK_FALSE(out.terminal);
}

TEST_CASE("bouncing ball: hit replaces or extends the velocity") {
    auto model = make_model("bouncing-ball");
    Rng rng = fresh_rng();

    // Rising at reach height: velocity snaps to -4, then one period of fall.
    auto out = model->simulate_decision_step({{5.0, 2.0}, {0}}, 1, rng);
    CHECK(out.cost == doctest::Approx(1.0));
    CHECK(out.next.continuous[0] == doctest::Approx(4.55095).epsilon(1e-12));
    CHECK(out.next.continuous[1] == doctest::Approx(-4.981).epsilon(1e-12));

    // Falling at reach height: hit adds -4.
    auto out2 = model->simulate_decision_step({{8.0, -3.0}, {0}}, 1, rng);
    CHECK(out2.next.continuous[1] == doctest::Approx(-7.0 - 0.981).epsilon(1e-12));

    // Below reach the swing costs but cannot connect.
    auto out3 = model->simulate_decision_step({{2.0, 1.0}, {0}}, 1, rng);
    auto out4 = model->simulate_decision_step({{2.0, 1.0}, {0}}, 0, rng);
    CHECK(out3.cost == doctest::Approx(1.0));
    CHECK(out4.cost == 0.0);
    CHECK(out3.next.continuous[0] == doctest::Approx(out4.next.continuous[0]));
    CHECK(out3.next.continuous[1] == doctest::Approx(out4.next.continuous[1]));
}

TEST_CASE("bouncing ball: bounce keeps the ball above the floor") {
    auto model = make_model("bouncing-ball");
    for (int i = 0; i < 200; ++i) {
        Rng rng = Rng::derive(5, {static_cast<std::uint64_t>(i)});
        auto out = model->simulate_decision_step({{0.05, -5.0}, {0}}, 0, rng);
        REQUIRE(out.next.continuous[0] >= 0.0);
        REQUIRE_FALSE(out.terminal); // impact ~5.1, rebound >= 4.3, never stops
        // Rebound dampening keeps speed strictly below the impact speed.
        REQUIRE(std::abs(out.next.continuous[1]) < 5.2);
    }
}

TEST_CASE("bouncing ball: slow rebound dissipates into the stopped location") {
    auto model = make_model("bouncing-ball");
    Rng rng = fresh_rng();
    // Impact speed ~0.52, rebound < 0.5 < stop threshold 1.
    auto out = model->simulate_decision_step({{0.001, -0.5}, {0}}, 0, rng);
    CHECK(out.terminal);
    CHECK(out.next.discrete[0] == 1);
    CHECK(out.next.continuous[0] == 0.0);
    CHECK(out.next.continuous[1] == 0.0);
    CHECK(out.elapsed < 0.1); // stopped partway through the period
    CHECK_FALSE(model->is_safe(out.next, "no-stop"));
    CHECK(model->is_safe({{5.0, 0.0}, {0}}, "no-stop"));

    // The stopped location is absorbing.
    auto out2 = model->simulate_decision_step(out.next, 1, rng);
    CHECK(out2.terminal);
    CHECK(out2.next == out.next);
    CHECK(out2.cost == 0.0);
}

TEST_CASE("nonperiodic ball draws its period from [period_min, period)") {
    auto model = make_model("bouncing-ball-nonperiodic");
    for (int i = 0; i < 100; ++i) {
        Rng rng = Rng::derive(17, {static_cast<std::uint64_t>(i)});
        auto out = model->simulate_decision_step({{10.0, 0.0}, {0}}, 0, rng);
        REQUIRE(out.elapsed >= 0.05);
        REQUIRE(out.elapsed < 0.1);
    }
}

TEST_CASE("energy ball: transform and inverse agree with the closed form") {
    auto model = make_model("bouncing-ball-energy");
    REQUIRE(model->has_transform());

    State base{{1.0, 0.0}, {0}};
    State energy = model->transform(base);
    CHECK(energy.continuous[0] == doctest::Approx(9.81).epsilon(1e-15));
    CHECK(energy.continuous[1] == 0.0);

    State back = model->inverse_transform(energy);
    CHECK(back.continuous[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(back.continuous[1] == 0.0);

    // Below the kinetic minimum there is no preimage.
    CHECK_THROWS_AS(model->inverse_transform({{0.0, 5.0}, {0}}), ValidationError);
}

TEST_CASE("energy ball: energy is conserved while airborne") {
    auto model = make_model("bouncing-ball-energy");
    Rng rng = fresh_rng();
    State s{{9.81, 0.0}, {0}}; // p=1 at rest: stays airborne for one period
    auto out = model->simulate_decision_step(s, 0, rng);
    CHECK(out.next.continuous[0] == doctest::Approx(9.81).epsilon(1e-9));
    CHECK(out.next.continuous[1] == doctest::Approx(-0.981).epsilon(1e-12));
}

TEST_CASE("energy ball: initial state matches the transformed base ball") {
    auto energy = make_model("bouncing-ball-energy");
    const State& init = energy->descriptor().initial_state;
    CHECK(init.continuous[0] == doctest::Approx(9.81 * 7.0).epsilon(1e-12));
    CHECK(init.continuous[1] == 0.0);
    CHECK(init.discrete[0] == 0);
}

TEST_CASE("random walk: gaits, costs and termination") {
    auto model = make_model("random-walk");
    Rng rng = fresh_rng();

    auto fast = model->simulate_decision_step({{0.0, 0.0}, {}}, 1, rng);
    CHECK(fast.cost == 3.0);
    CHECK(fast.next.continuous[0] >= 0.15);
    CHECK(fast.next.continuous[0] < 0.25);
    CHECK(fast.next.continuous[1] >= 0.05);
    CHECK(fast.next.continuous[1] < 0.15);

    auto slow = model->simulate_decision_step({{0.0, 0.0}, {}}, 0, rng);
    CHECK(slow.cost == 1.0);
    CHECK(slow.next.continuous[0] < 0.15);
    CHECK(slow.next.continuous[1] >= 0.15);

    auto done = model->simulate_decision_step({{0.9, 0.0}, {}}, 1, rng);
    CHECK(done.terminal); // fast always covers the missing 0.1

    CHECK(model->is_safe({{0.5, 0.99}, {}}, "reach-in-time"));
    CHECK(model->is_safe({{1.0, 1.0}, {}}, "reach-in-time"));
    CHECK_FALSE(model->is_safe({{0.5, 1.0}, {}}, "reach-in-time"));
}

TEST_CASE("water tank: deterministic demand cycle") {
    auto model = make_model("water-tank");
    Rng rng = fresh_rng();

    State s = model->descriptor().initial_state;
    CHECK(s.continuous[0] == 50.0);

    auto off = model->simulate_decision_step(s, 0, rng);
    CHECK(off.next.continuous[0] == doctest::Approx(47.0));
    CHECK(off.next.discrete[0] == 1);
    CHECK(off.cost == 0.0);

    double total_cost = 0.0;
    for (int i = 0; i < 8; ++i) { // one full demand period, pump always on
        auto out = model->simulate_decision_step(s, 1, rng);
        total_cost += out.cost;
        s = out.next;
    }
    CHECK(s.continuous[0] == doctest::Approx(66.0).epsilon(1e-12));
    CHECK(s.discrete[0] == 0);
    CHECK(total_cost == doctest::Approx(8.0));

    CHECK(model->is_safe({{10.0}, {0}}, "level-in-band"));
    CHECK(model->is_safe({{90.0}, {0}}, "level-in-band"));
    CHECK_FALSE(model->is_safe({{9.99}, {0}}, "level-in-band"));
    CHECK_FALSE(model->is_safe({{90.01}, {0}}, "level-in-band"));
}

TEST_CASE("model input validation") {
    auto model = make_model("bouncing-ball");
    Rng rng = fresh_rng();
    CHECK_THROWS_AS(make_model("no-such-model"), ValidationError);
    CHECK_THROWS_AS(make_model("bouncing-ball", {{"no_such_param", 1.0}}), ValidationError);
    CHECK_THROWS_AS(model->simulate_decision_step({{1.0}, {0}}, 0, rng), ValidationError);
    CHECK_THROWS_AS(model->simulate_decision_step({{1.0, 0.0}, {5}}, 0, rng), ValidationError);
    CHECK_THROWS_AS(model->simulate_decision_step({{1.0, 0.0}, {0}}, 9, rng), ValidationError);
    CHECK_THROWS_AS(model->is_safe({{1.0, 0.0}, {0}}, "no-such-property"), ValidationError);

    auto custom = make_model("bouncing-ball", {{"init_position", 9.0}});
    CHECK(custom->descriptor().initial_state.continuous[0] == 9.0);
}
