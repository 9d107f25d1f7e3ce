#include "shieldkit/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

#include "shieldkit/errors.hpp"
#include "shieldkit/parallel.hpp"

namespace shieldkit {

std::string to_string(OobMode mode) {
    switch (mode) {
        case OobMode::Error: return "error";
        case OobMode::AlwaysSafe: return "always-safe";
        case OobMode::AlwaysUnsafe: return "always-unsafe";
        case OobMode::Auto: return "auto";
    }
    return "error";
}

OobMode parse_oob_mode(const std::string& text) {
    if (text == "error") return OobMode::Error;
    if (text == "always-safe") return OobMode::AlwaysSafe;
    if (text == "always-unsafe") return OobMode::AlwaysUnsafe;
    if (text == "auto") return OobMode::Auto;
    throw ValidationError("unknown out-of-bounds mode '" + text +
                          "' (expected error|always-safe|always-unsafe|auto)");
}

std::uint64_t full_action_mask(std::uint32_t action_count) {
    return action_count >= 64 ? ~0ull : (1ull << action_count) - 1;
}

// ---------------------------------------------------------------------------
// Transition table
// ---------------------------------------------------------------------------

TransitionTable build_transitions(const Grid& grid, const Model& model, const SamplePlan& plan,
                                  std::uint32_t repeats, std::uint64_t seed, OobMode oob_mode) {
    if (repeats == 0) throw ValidationError("repeats must be >= 1");
    const std::uint64_t cells = grid.total_cells();
    const auto action_count = static_cast<std::uint32_t>(model.descriptor().actions.size());
    if (action_count == 0 || action_count > 64)
        throw ValidationError("transition tables support 1..64 actions");
    if (cells >= std::numeric_limits<std::uint32_t>::max())
        throw ValidationError("grid too large for a transition table (needs < 2^32 cells)");

    TransitionTable table;
    table.grid = grid.spec();
    table.actions = model.descriptor().actions;
    table.plan = plan;
    table.repeats = repeats;
    table.seed = seed;
    table.oob_mode = oob_mode;

    struct WorkerOutput {
        std::uint64_t first_cell = 0, last_cell = 0;
        std::vector<std::uint32_t> row_sizes;
        std::vector<std::uint32_t> targets;
    };

    const unsigned workers = thread_count();
    const std::uint64_t stripe = (cells + workers - 1) / workers;
    std::vector<WorkerOutput> outputs((cells + stripe - 1) / stripe);

    parallel_for(outputs.size(), [&](std::uint64_t wb, std::uint64_t we) {
        for (std::uint64_t w = wb; w < we; ++w) {
            WorkerOutput& out = outputs[w];
            out.first_cell = w * stripe;
            out.last_cell = std::min(out.first_cell + stripe, cells);
            out.row_sizes.reserve((out.last_cell - out.first_cell) * action_count);

            std::vector<std::uint32_t> row;
            std::vector<std::int64_t> coords;
            for (std::uint64_t cell = out.first_cell; cell < out.last_cell; ++cell) {
                CellIndex index = grid.delinearize(cell);
                coords.assign(index.coords.begin(), index.coords.end());
                for (std::uint32_t action = 0; action < action_count; ++action) {
                    row.clear();
                    grid.for_each_sample(coords, plan, [&](const State& s, std::uint64_t sample) {
                        for (std::uint32_t rep = 0; rep < repeats; ++rep) {
                            Rng rng = Rng::derive(seed, {cell, action, sample, rep});
                            DecisionStepOutcome step =
                                model.simulate_decision_step(s, action, rng);
                            std::uint64_t target = grid.cell_id_of(step.next);
                            if (target == grid.out_id() && oob_mode == OobMode::Error)
                                throw OutOfBoundsAbort(
                                    "trajectory left the grid from cell " +
                                        std::to_string(cell) + " under action '" +
                                        model.descriptor().actions[action] + "'",
                                    cell, action, sample);
                            row.push_back(static_cast<std::uint32_t>(target));
                        }
                    });
                    std::sort(row.begin(), row.end());
                    row.erase(std::unique(row.begin(), row.end()), row.end());
                    out.row_sizes.push_back(static_cast<std::uint32_t>(row.size()));
                    out.targets.insert(out.targets.end(), row.begin(), row.end());
                }
            }
        }
    });

    std::uint64_t total_targets = 0;
    for (const auto& out : outputs) total_targets += out.targets.size();

    table.offsets.reserve(cells * action_count + 1);
    table.offsets.push_back(0);
    table.targets.reserve(total_targets);
    for (const auto& out : outputs) {
        for (std::uint32_t size : out.row_sizes)
            table.offsets.push_back(table.offsets.back() + size);
        table.targets.insert(table.targets.end(), out.targets.begin(), out.targets.end());
    }
    return table;
}

// ---------------------------------------------------------------------------
// Initial safety
// ---------------------------------------------------------------------------

bool classify_out_of_bounds(const Grid& grid, const Model& model, std::string_view property,
                            const SamplePlan& plan) {
    const auto& axes = grid.spec().axes;
    bool all_safe = true;
    for (std::size_t axis = 0; axis < axes.size() && all_safe; ++axis) {
        if (axes[axis].discrete) continue;
        for (std::int64_t side : {std::int64_t{-1}, static_cast<std::int64_t>(axes[axis].count)}) {
            // Enumerate the band slab: the probed axis pinned one cell beyond
            // the box, every other axis sweeping its full range.
            std::vector<std::int64_t> coords(axes.size(), 0);
            coords[axis] = side;
            bool done = false;
            while (!done && all_safe) {
                grid.for_each_sample(coords, plan, [&](const State& s, std::uint64_t) {
                    if (!model.is_safe(s, property)) all_safe = false;
                });
                done = true;
                for (std::size_t i = axes.size(); i-- > 0;) {
                    if (i == axis) continue;
                    if (++coords[i] < static_cast<std::int64_t>(axes[i].count)) {
                        done = false;
                        break;
                    }
                    coords[i] = 0;
                }
            }
            if (!all_safe) break;
        }
    }
    return all_safe;
}

BitVec initial_safe_cells(const Grid& grid, const Model& model, std::string_view property,
                          const SamplePlan& plan, OobMode oob_mode) {
    const std::uint64_t cells = grid.total_cells();
    BitVec safe(cells + 1);

    std::vector<std::uint8_t> cell_safe(cells, 0);
    parallel_for(cells, [&](std::uint64_t begin, std::uint64_t end) {
        std::vector<std::int64_t> coords;
        for (std::uint64_t cell = begin; cell < end; ++cell) {
            CellIndex index = grid.delinearize(cell);
            coords.assign(index.coords.begin(), index.coords.end());
            bool ok = true;
            grid.for_each_sample(coords, plan, [&](const State& s, std::uint64_t) {
                if (ok && !model.is_safe(s, property)) ok = false;
            });
            cell_safe[cell] = ok ? 1 : 0;
        }
    });
    for (std::uint64_t cell = 0; cell < cells; ++cell)
        if (cell_safe[cell]) safe.set(cell);

    bool out_safe = false;
    switch (oob_mode) {
        case OobMode::Error: out_safe = false; break; // unreachable when the build succeeded
        case OobMode::AlwaysSafe: out_safe = true; break;
        case OobMode::AlwaysUnsafe: out_safe = false; break;
        case OobMode::Auto: out_safe = classify_out_of_bounds(grid, model, property, plan); break;
    }
    if (out_safe) safe.set(cells);
    return safe;
}

// ---------------------------------------------------------------------------
// Safety game
// ---------------------------------------------------------------------------

BitVec solve_safety_game(const TransitionTable& table, const BitVec& initially_safe) {
    const std::uint64_t cells = table.cell_count();
    const std::uint32_t action_count = table.action_count();
    const std::uint64_t pairs = cells * action_count;
    if (initially_safe.size() != cells + 1)
        throw ValidationError("initially-safe set does not match the table's grid");
    if (pairs >= std::numeric_limits<std::uint32_t>::max())
        throw ValidationError("transition table too large for the safety game solver");

    // Reverse adjacency: for every target cell, the (cell, action) rows that
    // can reach it. Built with a counting sort over the target array.
    std::vector<std::uint64_t> rev_offsets(cells + 2, 0);
    for (std::uint32_t target : table.targets) ++rev_offsets[target + 1];
    for (std::size_t i = 1; i < rev_offsets.size(); ++i) rev_offsets[i] += rev_offsets[i - 1];
    std::vector<std::uint32_t> rev_pairs(table.targets.size());
    {
        std::vector<std::uint64_t> cursor(rev_offsets.begin(), rev_offsets.end() - 1);
        for (std::uint64_t row = 0; row < pairs; ++row)
            for (std::uint64_t i = table.offsets[row]; i < table.offsets[row + 1]; ++i)
                rev_pairs[cursor[table.targets[i]]++] = static_cast<std::uint32_t>(row);
    }

    BitVec safe = initially_safe;
    BitVec pair_killed(pairs);
    std::vector<std::uint32_t> alive_actions(cells, action_count);
    std::vector<std::uint64_t> worklist;
    worklist.reserve(cells / 4 + 1);
    for (std::uint64_t cell = 0; cell <= cells; ++cell)
        if (!initially_safe.get(cell)) worklist.push_back(cell);

    while (!worklist.empty()) {
        std::uint64_t dead = worklist.back();
        worklist.pop_back();
        for (std::uint64_t i = rev_offsets[dead]; i < rev_offsets[dead + 1]; ++i) {
            std::uint32_t pair = rev_pairs[i];
            if (pair_killed.get(pair)) continue;
            pair_killed.set(pair);
            std::uint64_t owner = pair / action_count;
            if (!safe.get(owner)) continue;
            if (--alive_actions[owner] == 0) {
                safe.clear(owner);
                worklist.push_back(owner);
            }
        }
    }
    return safe;
}

// ---------------------------------------------------------------------------
// Shield extraction
// ---------------------------------------------------------------------------

std::uint64_t ShieldGrid::safe_cell_count() const {
    std::uint64_t count = 0;
    for (std::uint64_t mask : cell_masks) count += mask != 0;
    return count;
}

ShieldGrid extract_shield(const TransitionTable& table, const BitVec& safe) {
    const std::uint64_t cells = table.cell_count();
    const std::uint32_t action_count = table.action_count();
    if (safe.size() != cells + 1)
        throw ValidationError("safe set does not match the table's grid");

    ShieldGrid shield;
    shield.grid = table.grid;
    shield.actions = table.actions;
    shield.cell_masks.assign(cells, 0);
    shield.out_mask = safe.get(cells) ? full_action_mask(action_count) : 0;

    for (std::uint64_t cell = 0; cell < cells; ++cell) {
        if (!safe.get(cell)) continue;
        std::uint64_t mask = 0;
        for (std::uint32_t action = 0; action < action_count; ++action) {
            bool ok = true;
            for (std::uint32_t target : table.successors(cell, action)) {
                if (!safe.get(target)) {
                    ok = false;
                    break;
                }
            }
            if (ok) mask |= 1ull << action;
        }
        shield.cell_masks[cell] = mask;
    }
    return shield;
}

ShieldGrid synthesize_shield(const Model& model, const Grid& grid, std::string_view property,
                             const SamplePlan& plan, std::uint32_t repeats, std::uint64_t seed,
                             OobMode oob_mode, SynthesisStats* stats) {
    auto start = std::chrono::steady_clock::now();
    TransitionTable table = build_transitions(grid, model, plan, repeats, seed, oob_mode);
    BitVec initial = initial_safe_cells(grid, model, property, plan, oob_mode);
    BitVec safe = solve_safety_game(table, initial);
    ShieldGrid shield = extract_shield(table, safe);
    if (stats) {
        stats->cells = grid.total_cells();
        stats->initially_safe = initial.count() - (initial.get(grid.total_cells()) ? 1 : 0);
        stats->safe = safe.count() - (safe.get(grid.total_cells()) ? 1 : 0);
        stats->out_safe = safe.get(grid.total_cells());
        stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                             .count();
    }
    return shield;
}

} // namespace shieldkit
