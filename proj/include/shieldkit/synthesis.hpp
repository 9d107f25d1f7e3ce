#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shieldkit/bitvec.hpp"
#include "shieldkit/grid.hpp"
#include "shieldkit/model.hpp"

namespace shieldkit {

/// What to assume about trajectories that leave the grid box.
enum class OobMode {
    Error,        ///< abort synthesis; the grid must be grown
    AlwaysSafe,   ///< OUT is a safe absorbing cell
    AlwaysUnsafe, ///< OUT is an unsafe absorbing cell
    Auto,         ///< probe a one-cell-thick band beyond the box and decide
};

std::string to_string(OobMode mode);
OobMode parse_oob_mode(const std::string& text);

/// Under-approximated cell-to-cell reachability: for every (cell, action),
/// the set of cells hit by simulating each systematic sample `repeats` times.
/// Rows are stored CSR-style, sorted and deduplicated; target ids may include
/// out_id(). The OUT cell itself is implicitly absorbing and has no rows.
struct TransitionTable {
    GridSpec grid;
    std::vector<std::string> actions;
    SamplePlan plan;
    std::uint32_t repeats = 1;
    std::uint64_t seed = 0;
    OobMode oob_mode = OobMode::Error;

    std::vector<std::uint64_t> offsets; ///< size cell_count()*action_count()+1
    std::vector<std::uint32_t> targets;

    std::uint64_t cell_count() const { return grid.total_cells(); }
    std::uint32_t action_count() const { return static_cast<std::uint32_t>(actions.size()); }
    std::uint64_t out_id() const { return cell_count(); }

    std::span<const std::uint32_t> successors(std::uint64_t cell, ActionId action) const {
        std::uint64_t row = cell * action_count() + action;
        return {targets.data() + offsets[row],
                targets.data() + offsets[row + 1]};
    }
};

/// Simulate every (cell, action, sample, repeat) combination once. Each
/// simulation seeds its own generator from the structural key, so the table
/// is identical for any thread count. Throws OutOfBoundsAbort in Error mode
/// when a trajectory leaves the grid.
TransitionTable build_transitions(const Grid& grid, const Model& model, const SamplePlan& plan,
                                  std::uint32_t repeats, std::uint64_t seed, OobMode oob_mode);

/// Cells whose samples all satisfy the property. The returned vector has
/// total_cells()+1 bits; the last covers OUT per the chosen mode.
BitVec initial_safe_cells(const Grid& grid, const Model& model, std::string_view property,
                          const SamplePlan& plan, OobMode oob_mode);

/// Auto-mode probe: true iff every sample in the one-cell-thick band around
/// the grid box (continuous axes only) satisfies the property.
bool classify_out_of_bounds(const Grid& grid, const Model& model, std::string_view property,
                            const SamplePlan& plan);

/// Greatest set of cells from which some action keeps all successors inside
/// the set, intersected with the initially safe cells. Backward worklist over
/// the reversed table; linear in table size.
BitVec solve_safety_game(const TransitionTable& table, const BitVec& initially_safe);

/// A grid shield: per cell, the bitmask of actions whose successors all stay
/// safe. Unsafe cells carry mask 0.
struct ShieldGrid {
    GridSpec grid;
    std::vector<std::string> actions;
    std::vector<std::uint64_t> cell_masks; ///< row-major, size total_cells()
    std::uint64_t out_mask = 0;

    std::uint32_t action_count() const { return static_cast<std::uint32_t>(actions.size()); }
    std::uint64_t mask_at(std::uint64_t cell_id) const {
        return cell_id < cell_masks.size() ? cell_masks[cell_id] : out_mask;
    }
    std::uint64_t safe_cell_count() const;
};

ShieldGrid extract_shield(const TransitionTable& table, const BitVec& safe);

struct SynthesisStats {
    std::uint64_t cells = 0;
    std::uint64_t initially_safe = 0;
    std::uint64_t safe = 0;
    bool out_safe = false;
    double seconds = 0.0;
};

/// End-to-end synthesis: sampling, reachability, fixed point, extraction.
ShieldGrid synthesize_shield(const Model& model, const Grid& grid, std::string_view property,
                             const SamplePlan& plan, std::uint32_t repeats, std::uint64_t seed,
                             OobMode oob_mode, SynthesisStats* stats = nullptr);

std::uint64_t full_action_mask(std::uint32_t action_count);

} // namespace shieldkit
