#include <doctest.h>

#include <cstdlib>
#include <vector>

#include "shieldkit/errors.hpp"
#include "shieldkit/grid.hpp"
#include "shieldkit/model.hpp"
#include "shieldkit/synthesis.hpp"

#include "test_util.hpp"

using namespace shieldkit;
using testutil::DriftModel;

TEST_CASE("worklist solver matches naive fixed-point iteration") {
    for (std::uint64_t trial = 0; trial < 60; ++trial) {
        Rng rng = Rng::derive(1234, {trial});
        TransitionTable table = testutil::random_table(rng);
        BitVec init = testutil::random_initial_safe(rng, table.cell_count());
        BitVec fast = solve_safety_game(table, init);
        BitVec slow = testutil::naive_safe_set(table, init);
        REQUIRE(fast == slow);
    }
}

TEST_CASE("drift model: shield masks match the hand analysis") {
    DriftModel model; // safe while x < 4
    GridSpec spec;
    spec.axes = {{"x", 0.0, 5.0, 5, false}};
    Grid grid(spec, model.descriptor());
    SamplePlan plan{3, 0.0};

    SynthesisStats stats;
    ShieldGrid shield = synthesize_shield(model, grid, "below-limit", plan, 1, 0,
                                          OobMode::AlwaysUnsafe, &stats);

    // Cells [0,1),[1,2),[2,3) allow both actions; [3,4) must stay (moving
    // lands in the doomed [4,5)); [4,5) is already unsafe.
    CHECK(shield.cell_masks == std::vector<std::uint64_t>{3, 3, 3, 2, 0});
    CHECK(shield.out_mask == 0);
    CHECK(shield.safe_cell_count() == 4);
    CHECK(stats.cells == 5);
    CHECK(stats.initially_safe == 4);
    CHECK(stats.safe == 4);
    CHECK_FALSE(stats.out_safe);
}

TEST_CASE("nothing is safe when the property fails everywhere") {
    DriftModel model(-1.0);
    GridSpec spec;
    spec.axes = {{"x", 0.0, 5.0, 5, false}};
    Grid grid(spec, model.descriptor());
    ShieldGrid shield =
        synthesize_shield(model, grid, "below-limit", {3, 0.0}, 1, 0, OobMode::AlwaysSafe);
    CHECK(shield.safe_cell_count() == 0);
}

TEST_CASE("out-of-bounds handling") {
    DriftModel model(99.0); // everything inside the box is safe
    GridSpec spec;
    spec.axes = {{"x", 0.0, 4.0, 4, false}};
    Grid grid(spec, model.descriptor());
    SamplePlan plan{2, 0.0};

    SUBCASE("error mode identifies the escaping cell") {
        try {
            synthesize_shield(model, grid, "below-limit", plan, 1, 0, OobMode::Error);
            FAIL("expected OutOfBoundsAbort");
        } catch (const OutOfBoundsAbort& e) {
            CHECK(e.cell_id == 3);
            CHECK(e.action_index == 0); // "move" escapes from [3,4)
        }
    }

    SUBCASE("always-safe keeps every action everywhere") {
        ShieldGrid s =
            synthesize_shield(model, grid, "below-limit", plan, 1, 0, OobMode::AlwaysSafe);
        CHECK(s.cell_masks == std::vector<std::uint64_t>{3, 3, 3, 3});
        CHECK(s.out_mask == 3);
    }

    SUBCASE("always-unsafe forbids escaping") {
        ShieldGrid s =
            synthesize_shield(model, grid, "below-limit", plan, 1, 0, OobMode::AlwaysUnsafe);
        CHECK(s.cell_masks == std::vector<std::uint64_t>{3, 3, 3, 2});
        CHECK(s.out_mask == 0);
    }

    SUBCASE("auto probes the band beyond the box") {
        // With limit 99 the band [4,5) satisfies the property: OUT is safe.
        ShieldGrid s = synthesize_shield(model, grid, "below-limit", plan, 1, 0, OobMode::Auto);
        CHECK(s.out_mask == 3);
        CHECK(s.cell_masks == std::vector<std::uint64_t>{3, 3, 3, 3});

        // With limit 4.5 part of the band fails: OUT is unsafe.
        DriftModel tight(4.5);
        Grid tight_grid(spec, tight.descriptor());
        ShieldGrid s2 =
            synthesize_shield(tight, tight_grid, "below-limit", plan, 1, 0, OobMode::Auto);
        CHECK(s2.out_mask == 0);
        CHECK(s2.cell_masks == std::vector<std::uint64_t>{3, 3, 3, 2});
    }
}

TEST_CASE("transition tables are identical for any worker count") {
    auto model = make_model("random-walk");
    Grid grid(parse_grid_spec("x[0,1.2]:60,t[0,1.2]:60", model->descriptor()),
              model->descriptor());
    SamplePlan plan{3, 0.0};

    setenv("SHIELDKIT_THREADS", "1", 1);
    TransitionTable serial = build_transitions(grid, *model, plan, 2, 7, OobMode::AlwaysUnsafe);
    setenv("SHIELDKIT_THREADS", "3", 1);
    TransitionTable threaded = build_transitions(grid, *model, plan, 2, 7, OobMode::AlwaysUnsafe);
    unsetenv("SHIELDKIT_THREADS");

    CHECK(serial.offsets == threaded.offsets);
    CHECK(serial.targets == threaded.targets);
}

TEST_CASE("extra repeats only add successors") {
    auto model = make_model("random-walk");
    Grid grid(parse_grid_spec("x[0,1.2]:12,t[0,1.2]:12", model->descriptor()),
              model->descriptor());
    SamplePlan plan{2, 0.0};

    TransitionTable once = build_transitions(grid, *model, plan, 1, 5, OobMode::AlwaysUnsafe);
    TransitionTable thrice = build_transitions(grid, *model, plan, 3, 5, OobMode::AlwaysUnsafe);

    REQUIRE(once.offsets.size() == thrice.offsets.size());
    for (std::uint64_t cell = 0; cell < once.cell_count(); ++cell) {
        for (ActionId a = 0; a < once.action_count(); ++a) {
            auto small = once.successors(cell, a);
            auto big = thrice.successors(cell, a);
            for (std::uint32_t t : small) {
                bool found = false;
                for (std::uint32_t u : big) found |= (u == t);
                REQUIRE(found); // repeat 0 re-uses the same derived seed
            }
        }
    }
}

TEST_CASE("energy ball: coarse grid synthesis keeps the initial cell safe") {
    auto model = make_model("bouncing-ball-energy");
    Grid grid(parse_grid_spec("e[0,100]:25,v[-13,13]:26,loc", model->descriptor()),
              model->descriptor());

    SynthesisStats stats;
    ShieldGrid shield = synthesize_shield(*model, grid, "no-stop", {3, 0.0}, 3, 1,
                                          OobMode::AlwaysSafe, &stats);
    CHECK(stats.cells == 1300);
    CHECK(stats.out_safe);
    CHECK(shield.safe_cell_count() > 0);
    CHECK(shield.safe_cell_count() < 650); // stopped-location cells can never be safe

    std::uint64_t init_cell = grid.cell_id_of(model->descriptor().initial_state);
    CHECK(shield.mask_at(init_cell) != 0);

    // A drained ball cannot reach the paddle again: never safe.
    CHECK(shield.mask_at(grid.cell_id_of({{0.0, 0.0}, {0}})) == 0);
    // Stopped cells are unsafe by definition.
    CHECK(shield.mask_at(grid.cell_id_of({{0.0, 0.0}, {1}})) == 0);
}

TEST_CASE("oob mode names round trip") {
    for (OobMode mode : {OobMode::Error, OobMode::AlwaysSafe, OobMode::AlwaysUnsafe,
                         OobMode::Auto})
        CHECK(parse_oob_mode(to_string(mode)) == mode);
    CHECK_THROWS_AS(parse_oob_mode("sometimes"), ValidationError);
}
