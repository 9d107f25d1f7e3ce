#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shieldkit/bitvec.hpp"
#include "shieldkit/grid.hpp"
#include "shieldkit/rng.hpp"
#include "shieldkit/synthesis.hpp"

namespace shieldkit {

struct TreeNode {
    std::int32_t dim = -1; ///< split axis; -1 marks a leaf
    double threshold = 0.0; ///< go left when axis value < threshold
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint64_t label = 0; ///< leaf payload: allowed-action bitmask

    bool is_leaf() const { return dim < 0; }
};

/// Axis-aligned binary decision tree over a grid's domain, mapping states to
/// action masks. Equivalent to the shield it was built from, but a few orders
/// of magnitude smaller.
struct DecisionTree {
    GridSpec domain;
    std::vector<std::string> actions;
    std::vector<TreeNode> nodes;
    std::uint32_t root = 0;

    std::uint64_t evaluate(std::span<const double> axis_values) const;
    std::uint64_t leaf_count() const;
    std::uint64_t depth() const;
    /// Structural soundness: indices in range, acyclic, every node reachable
    /// from the root exactly once. Throws ValidationError otherwise.
    void validate() const;
};

/// Ascending split positions per axis, both domain faces included; axis i
/// carries rows[i].size()-1 micro-cell slots.
struct BoundsMatrix {
    std::vector<std::vector<double>> rows;
    std::vector<std::uint32_t> dims() const;
};

/// Box of micro-cells [lo, hi) in bounds-matrix index space, lo < hi
/// componentwise, carrying one label.
struct Region {
    std::vector<std::uint32_t> lo, hi;
    std::uint64_t label = 0;

    std::uint64_t volume() const;
    bool operator==(const Region&) const = default;
};

/// A labelled box cover of a grid: every micro-cell belongs to exactly one
/// region. unit_cells marks the degenerate cover with one region per cell,
/// for which the owner array is implicit.
struct Partitioning {
    BoundsMatrix bounds;
    std::vector<std::uint32_t> dims; ///< micro-cells per axis
    std::vector<Region> regions;
    std::vector<std::uint32_t> owner; ///< micro-cell -> region index; empty when unit_cells
    bool unit_cells = false;

    std::uint64_t micro_cell_count() const;
    std::vector<std::uint64_t> strides() const;
    std::uint64_t cell_region(std::uint64_t cell) const {
        return unit_cells ? cell : owner[cell];
    }
    std::uint64_t label_at(std::uint64_t cell) const {
        return regions[cell_region(cell)].label;
    }
    void validate() const;
};

Partitioning partitioning_of(const ShieldGrid& shield);
/// Regions are the tree's reachable leaves; branches whose box is empty are
/// dropped. Bounds come from the tree's own thresholds.
Partitioning partitioning_of(const DecisionTree& tree);

enum class RuleViolation {
    None,
    MixedLabels, ///< candidate spans cells with different labels
    Overlap,     ///< candidate touches an already merged region
    CutsRegion,  ///< candidate would leave some source region in a non-box shape
};

struct ExpansionCheck {
    RuleViolation violation = RuleViolation::None;
    std::vector<std::uint32_t> cut_regions; ///< source regions a CutsRegion candidate breaks
};

/// Greedy merging of same-labelled boxes over a source partitioning.
///
/// Each round starts at the first uncovered micro-cell in linear order, grows
/// a maximal legal box around it one slab at a time along randomly chosen
/// axes, and fixes the result. Legality means: uniform label, no overlap with
/// fixed regions, and every partially-consumed source region keeps a box
/// shape (so later rounds still start from boxes).
class Coarsener {
public:
    explicit Coarsener(const Partitioning& source);

    bool done() const { return remaining_ == 0; }
    std::uint64_t remaining() const { return remaining_; }
    const std::vector<Region>& merged() const { return merged_; }
    std::vector<Region> take_merged() { return std::move(merged_); }

    /// Coordinates of the first uncovered micro-cell in linear order.
    std::vector<std::uint32_t> next_start() const;

    ExpansionCheck check_expansion(const Region& candidate) const;

    /// Grow a maximal region whose lower corner is `start`. `start` must be
    /// the linear-first uncovered cell of its source region's residual box,
    /// which is where next_start() always lands.
    Region expand_region(std::span<const std::uint32_t> start, Rng& rng) const;

    /// Rescue a CutsRegion failure by stretching the candidate along `axis`
    /// to the far bound of every region it would cut. Empty result when the
    /// stretched candidate still breaks a rule.
    std::optional<Region> repair(Region candidate, std::size_t axis,
                                 std::span<const std::uint32_t> cut_regions) const;

    /// Commit a rule-compliant region. Throws ValidationError otherwise.
    void fix(Region region);

private:
    struct ScanResult {
        RuleViolation violation = RuleViolation::None;
        std::vector<std::uint32_t> owners; ///< distinct source regions touched
    };

    std::uint64_t linear_id(std::span<const std::uint32_t> coords) const;
    Region residual_of(std::uint32_t source_region) const;
    /// Scan [lo,hi) of `scan_box` for rule violations given the final
    /// candidate extent `candidate`; stops at the first hard violation.
    ScanResult scan(const Region& scan_box, const Region& candidate, std::uint64_t label,
                    bool strict_precedence) const;

    const Partitioning* src_;
    std::size_t k_ = 0;
    std::vector<std::uint32_t> dims_;
    std::vector<std::uint64_t> strides_;
    std::vector<std::uint64_t> labels_; ///< flat per-cell label snapshot
    BitVec covered_;
    std::vector<Region> residuals_; ///< per source region; empty unless tracking needed
    std::vector<Region> merged_;
    std::uint64_t remaining_ = 0;
    mutable std::uint64_t cursor_ = 0;
};

/// One full merging pass: repeatedly expand-and-fix until the grid is
/// covered. Deterministic in (source, seed).
std::vector<Region> caap_pass(const Partitioning& source, std::uint64_t seed);

/// Rebuild a decision tree over a region cover. Split planes are chosen to
/// cut as few regions as possible, with balance as tie-breaker, scanning
/// axes and thresholds in ascending order.
DecisionTree regions_to_tree(std::span<const Region> regions, const BoundsMatrix& bounds,
                             GridSpec domain, std::vector<std::string> actions);

struct CompactOptions {
    std::uint64_t seed = 0;
    std::uint32_t max_iterations = 10;
    double min_relative_gain = 0.01; ///< stop when a pass improves less than this
};

struct CompactResult {
    DecisionTree tree;
    std::uint64_t source_regions = 0;
    std::vector<std::uint64_t> region_counts; ///< one entry per accepted pass
    double seconds = 0.0;
};

/// Iterated merge-then-rebuild: each pass merges the previous tree's leaf
/// partitioning; non-improving passes are discarded and stop the loop.
CompactResult compact(const ShieldGrid& shield, const CompactOptions& options);
CompactResult compact(const DecisionTree& tree, const CompactOptions& options);

/// Exhaustive check that the tree reproduces the source labels on every
/// micro-cell (evaluated at the cell's lower corner). Returns mismatches.
std::uint64_t count_label_mismatches(const Partitioning& source, const DecisionTree& tree);

} // namespace shieldkit
