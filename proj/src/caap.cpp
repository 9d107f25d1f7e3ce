#include "shieldkit/caap.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>

#include "shieldkit/errors.hpp"

namespace shieldkit {

// ---------------------------------------------------------------------------
// DecisionTree
// ---------------------------------------------------------------------------

std::uint64_t DecisionTree::evaluate(std::span<const double> axis_values) const {
    const TreeNode* node = &nodes[root];
    while (!node->is_leaf())
        node = &nodes[axis_values[static_cast<std::size_t>(node->dim)] < node->threshold
                          ? node->left
                          : node->right];
    return node->label;
}

std::uint64_t DecisionTree::leaf_count() const {
    std::uint64_t count = 0;
    for (const TreeNode& node : nodes) count += node.is_leaf();
    return count;
}

std::uint64_t DecisionTree::depth() const {
    std::uint64_t deepest = 0;
    std::vector<std::pair<std::uint32_t, std::uint64_t>> stack{{root, 1}};
    while (!stack.empty()) {
        auto [id, depth] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, depth);
        const TreeNode& node = nodes[id];
        if (!node.is_leaf()) {
            stack.push_back({node.left, depth + 1});
            stack.push_back({node.right, depth + 1});
        }
    }
    return deepest;
}

void DecisionTree::validate() const {
    if (nodes.empty()) throw ValidationError("decision tree has no nodes");
    if (root >= nodes.size()) throw ValidationError("decision tree root out of range");
    std::vector<std::uint8_t> seen(nodes.size(), 0);
    std::vector<std::uint32_t> stack{root};
    std::uint64_t visited = 0;
    while (!stack.empty()) {
        std::uint32_t id = stack.back();
        stack.pop_back();
        if (seen[id])
            throw ValidationError("decision tree node " + std::to_string(id) +
                                  " reachable twice (shared subtree or cycle)");
        seen[id] = 1;
        ++visited;
        const TreeNode& node = nodes[id];
        if (node.is_leaf()) continue;
        if (node.left >= nodes.size() || node.right >= nodes.size())
            throw ValidationError("decision tree node " + std::to_string(id) +
                                  " has a child index out of range");
        if (static_cast<std::size_t>(node.dim) >= domain.axes.size())
            throw ValidationError("decision tree node " + std::to_string(id) +
                                  " splits on an unknown axis");
        stack.push_back(node.left);
        stack.push_back(node.right);
    }
    if (visited != nodes.size())
        throw ValidationError("decision tree has unreachable nodes");
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

std::vector<std::uint32_t> BoundsMatrix::dims() const {
    std::vector<std::uint32_t> result(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        result[i] = static_cast<std::uint32_t>(rows[i].size() - 1);
    return result;
}

std::uint64_t Region::volume() const {
    std::uint64_t v = 1;
    for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
    return v;
}

std::uint64_t Partitioning::micro_cell_count() const {
    std::uint64_t total = 1;
    for (std::uint32_t d : dims) total *= d;
    return total;
}

std::vector<std::uint64_t> Partitioning::strides() const {
    std::vector<std::uint64_t> s(dims.size(), 1);
    for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i];
    return s;
}

void Partitioning::validate() const {
    if (bounds.rows.size() != dims.size())
        throw ValidationError("partitioning bounds/dims mismatch");
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (bounds.rows[i].size() != dims[i] + 1)
            throw ValidationError("bounds row " + std::to_string(i) + " has wrong length");
        if (!std::is_sorted(bounds.rows[i].begin(), bounds.rows[i].end()))
            throw ValidationError("bounds row " + std::to_string(i) + " is not ascending");
    }
    std::uint64_t covered = 0;
    for (const Region& region : regions) {
        if (region.lo.size() != dims.size() || region.hi.size() != dims.size())
            throw ValidationError("region arity mismatch");
        for (std::size_t i = 0; i < dims.size(); ++i)
            if (region.lo[i] >= region.hi[i] || region.hi[i] > dims[i])
                throw ValidationError("region box out of range");
        covered += region.volume();
    }
    if (covered != micro_cell_count())
        throw ValidationError("regions do not cover the grid exactly");
    if (!unit_cells && owner.size() != micro_cell_count())
        throw ValidationError("partitioning owner array has wrong size");
}

Partitioning partitioning_of(const ShieldGrid& shield) {
    const auto& axes = shield.grid.axes;
    if (shield.grid.total_cells() >= UINT32_MAX)
        throw ValidationError("grid too large to partition (needs < 2^32 cells)");
    Partitioning part;
    part.bounds.rows.resize(axes.size());
    part.dims.resize(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const AxisSpec& axis = axes[i];
        part.dims[i] = static_cast<std::uint32_t>(axis.count);
        part.bounds.rows[i].resize(axis.count + 1);
        for (std::uint64_t j = 0; j <= axis.count; ++j)
            part.bounds.rows[i][j] =
                axis.discrete
                    ? static_cast<double>(j)
                    : axis.lower + (axis.upper - axis.lower) * static_cast<double>(j) /
                                       static_cast<double>(axis.count);
    }

    const std::uint64_t cells = shield.grid.total_cells();
    part.unit_cells = true;
    part.regions.resize(cells);
    std::vector<std::uint32_t> coords(axes.size(), 0);
    for (std::uint64_t cell = 0; cell < cells; ++cell) {
        Region& region = part.regions[cell];
        region.lo = coords;
        region.hi.resize(axes.size());
        for (std::size_t i = 0; i < axes.size(); ++i) region.hi[i] = coords[i] + 1;
        region.label = shield.cell_masks[cell];
        for (std::size_t i = axes.size(); i-- > 0;) {
            if (++coords[i] < part.dims[i]) break;
            coords[i] = 0;
        }
    }
    return part;
}

Partitioning partitioning_of(const DecisionTree& tree) {
    tree.validate();
    const auto& axes = tree.domain.axes;
    Partitioning part;
    part.bounds.rows.resize(axes.size());
    std::vector<std::pair<double, double>> faces(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        double lower = axes[i].discrete ? 0.0 : axes[i].lower;
        double upper = axes[i].discrete ? static_cast<double>(axes[i].count) : axes[i].upper;
        faces[i] = {lower, upper};
        part.bounds.rows[i].push_back(lower);
        part.bounds.rows[i].push_back(upper);
    }
    for (const TreeNode& node : tree.nodes) {
        if (node.is_leaf()) continue;
        auto dim = static_cast<std::size_t>(node.dim);
        if (node.threshold > faces[dim].first && node.threshold < faces[dim].second)
            part.bounds.rows[dim].push_back(node.threshold);
    }
    for (auto& row : part.bounds.rows) {
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
    }
    part.dims = part.bounds.dims();

    // Reachable leaves become regions; dead branches cover nothing and are
    // dropped.
    struct Frame {
        std::uint32_t node;
        Region box;
    };
    Region root_box;
    root_box.lo.assign(axes.size(), 0);
    root_box.hi = std::vector<std::uint32_t>(part.dims.begin(), part.dims.end());
    std::vector<Frame> stack{{tree.root, std::move(root_box)}};
    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        bool empty = false;
        for (std::size_t i = 0; i < axes.size() && !empty; ++i)
            empty = frame.box.lo[i] >= frame.box.hi[i];
        if (empty) continue;
        const TreeNode& node = tree.nodes[frame.node];
        if (node.is_leaf()) {
            frame.box.label = node.label;
            part.regions.push_back(std::move(frame.box));
            continue;
        }
        auto dim = static_cast<std::size_t>(node.dim);
        const auto& row = part.bounds.rows[dim];
        auto it = std::lower_bound(row.begin(), row.end(), node.threshold);
        auto cut = static_cast<std::uint32_t>(it - row.begin());
        if (it == row.end() || *it != node.threshold) // threshold outside the domain
            cut = node.threshold <= row.front() ? 0 : static_cast<std::uint32_t>(row.size() - 1);

        Frame left{node.left, frame.box};
        left.box.hi[dim] = std::min(left.box.hi[dim], cut);
        Frame right{node.right, std::move(frame.box)};
        right.box.lo[dim] = std::max(right.box.lo[dim], cut);
        stack.push_back(std::move(left));
        stack.push_back(std::move(right));
    }

    part.owner.assign(part.micro_cell_count(), 0);
    auto strides = part.strides();
    std::uint64_t unit_regions = 0;
    for (std::size_t r = 0; r < part.regions.size(); ++r) {
        const Region& region = part.regions[r];
        unit_regions += region.volume() == 1;
        std::vector<std::uint32_t> coords = region.lo;
        while (true) {
            std::uint64_t base = 0;
            for (std::size_t i = 0; i + 1 < coords.size(); ++i) base += coords[i] * strides[i];
            std::uint64_t first = base + region.lo.back();
            std::uint64_t last = base + region.hi.back();
            for (std::uint64_t id = first; id < last; ++id)
                part.owner[id] = static_cast<std::uint32_t>(r);
            std::size_t axis = coords.size() - 1;
            bool wrapped = true;
            while (axis-- > 0) {
                if (++coords[axis] < region.hi[axis]) {
                    wrapped = false;
                    break;
                }
                coords[axis] = region.lo[axis];
            }
            if (coords.size() == 1 || wrapped) break;
        }
    }
    if (unit_regions == part.regions.size() &&
        part.regions.size() == part.micro_cell_count()) {
        // Canonicalize: unit covers get the implicit owner map, but only when
        // region order matches cell order.
        bool identity = true;
        for (std::uint64_t id = 0; id < part.owner.size() && identity; ++id)
            identity = part.owner[id] == id;
        if (identity) {
            part.unit_cells = true;
            part.owner.clear();
        }
    }
    part.validate();
    return part;
}

// ---------------------------------------------------------------------------
// Coarsener
// ---------------------------------------------------------------------------

namespace {

/// Number of pieces `base` would protrude beyond `cut` with, counting each
/// axis side separately. 0 means base is swallowed, 1 means the remainder is
/// a box, 2+ means the remainder splits.
int protrusion_count(const Region& base, const Region& cut) {
    int pieces = 0;
    for (std::size_t i = 0; i < base.lo.size(); ++i) {
        // disjoint boxes leave base untouched
        if (base.hi[i] <= cut.lo[i] || base.lo[i] >= cut.hi[i]) return 1;
    }
    for (std::size_t i = 0; i < base.lo.size(); ++i) {
        pieces += base.lo[i] < cut.lo[i];
        pieces += base.hi[i] > cut.hi[i];
    }
    return pieces;
}

/// base \ cut under the guarantee that the remainder is a box. An empty
/// remainder is flagged with lo == hi on every axis.
Region box_minus(Region base, const Region& cut) {
    int pieces = protrusion_count(base, cut);
    assert(pieces <= 1);
    if (pieces == 0) {
        base.hi = base.lo;
        return base;
    }
    for (std::size_t i = 0; i < base.lo.size(); ++i) {
        if (base.hi[i] <= cut.lo[i] || base.lo[i] >= cut.hi[i]) return base; // disjoint
        if (base.lo[i] < cut.lo[i]) {
            base.hi[i] = cut.lo[i];
            return base;
        }
        if (base.hi[i] > cut.hi[i]) {
            base.lo[i] = cut.hi[i];
            return base;
        }
    }
    return base;
}

} // namespace

Coarsener::Coarsener(const Partitioning& source)
    : src_(&source),
      k_(source.dims.size()),
      dims_(source.dims),
      strides_(source.strides()),
      covered_(source.micro_cell_count()),
      remaining_(source.micro_cell_count()) {
    labels_.resize(remaining_);
    if (source.unit_cells) {
        for (std::uint64_t cell = 0; cell < remaining_; ++cell)
            labels_[cell] = source.regions[cell].label;
    } else {
        for (std::uint64_t cell = 0; cell < remaining_; ++cell)
            labels_[cell] = source.regions[source.owner[cell]].label;
        residuals_.assign(source.regions.begin(), source.regions.end());
    }
}

std::uint64_t Coarsener::linear_id(std::span<const std::uint32_t> coords) const {
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < k_; ++i) id += coords[i] * strides_[i];
    return id;
}

Region Coarsener::residual_of(std::uint32_t source_region) const {
    if (src_->unit_cells) return src_->regions[source_region];
    return residuals_[source_region];
}

std::vector<std::uint32_t> Coarsener::next_start() const {
    while (cursor_ < covered_.size() && covered_.get(cursor_)) ++cursor_;
    if (cursor_ >= covered_.size()) throw ValidationError("grid already fully covered");
    std::uint64_t id = cursor_;
    std::vector<std::uint32_t> coords(k_);
    for (std::size_t i = 0; i < k_; ++i) {
        coords[i] = static_cast<std::uint32_t>(id / strides_[i]);
        id %= strides_[i];
    }
    return coords;
}

Coarsener::ScanResult Coarsener::scan(const Region& scan_box, const Region& candidate,
                                      std::uint64_t label, bool strict_precedence) const {
    ScanResult result;
    bool overlap = false;
    const bool track_owners = !src_->unit_cells;

    std::vector<std::uint32_t> coords = scan_box.lo;
    std::uint32_t last_owner = UINT32_MAX;
    while (true) {
        std::uint64_t base = 0;
        for (std::size_t i = 0; i + 1 < k_; ++i) base += coords[i] * strides_[i];
        std::uint64_t first = base + scan_box.lo[k_ - 1];
        std::uint64_t last = base + scan_box.hi[k_ - 1];
        for (std::uint64_t id = first; id < last; ++id) {
            if (labels_[id] != label) {
                result.violation = RuleViolation::MixedLabels;
                return result;
            }
            if (covered_.get(id)) {
                if (!strict_precedence) {
                    result.violation = RuleViolation::Overlap;
                    return result;
                }
                overlap = true;
                continue;
            }
            if (track_owners) {
                std::uint32_t owner = src_->owner[id];
                if (owner != last_owner) {
                    result.owners.push_back(owner);
                    last_owner = owner;
                }
            }
        }
        std::size_t axis = k_ - 1;
        bool wrapped = true;
        while (axis-- > 0) {
            if (++coords[axis] < scan_box.hi[axis]) {
                wrapped = false;
                break;
            }
            coords[axis] = scan_box.lo[axis];
        }
        if (k_ == 1 || wrapped) break;
    }

    if (overlap) {
        result.violation = RuleViolation::Overlap;
        result.owners.clear();
        return result;
    }
    if (track_owners) {
        std::sort(result.owners.begin(), result.owners.end());
        result.owners.erase(std::unique(result.owners.begin(), result.owners.end()),
                            result.owners.end());
        std::vector<std::uint32_t> cut;
        for (std::uint32_t owner : result.owners)
            if (protrusion_count(residual_of(owner), candidate) > 1) cut.push_back(owner);
        if (!cut.empty()) {
            result.violation = RuleViolation::CutsRegion;
            result.owners = std::move(cut);
            return result;
        }
    }
    return result;
}

ExpansionCheck Coarsener::check_expansion(const Region& candidate) const {
    if (candidate.lo.size() != k_ || candidate.hi.size() != k_)
        throw ValidationError("candidate region arity mismatch");
    for (std::size_t i = 0; i < k_; ++i)
        if (candidate.lo[i] >= candidate.hi[i] || candidate.hi[i] > dims_[i])
            throw ValidationError("candidate region box out of range");

    std::uint64_t label = labels_[linear_id(candidate.lo)];
    ScanResult result = scan(candidate, candidate, label, /*strict_precedence=*/true);
    ExpansionCheck check;
    check.violation = result.violation;
    if (result.violation == RuleViolation::CutsRegion) check.cut_regions = result.owners;
    return check;
}

std::optional<Region> Coarsener::repair(Region candidate, std::size_t axis,
                                        std::span<const std::uint32_t> cut_regions) const {
    std::uint32_t target = candidate.hi[axis];
    for (std::uint32_t region : cut_regions)
        target = std::max(target, residual_of(region).hi[axis]);
    if (target <= candidate.hi[axis] || target > dims_[axis]) return std::nullopt;

    Region stretched = candidate;
    stretched.hi[axis] = target;
    Region extension = stretched;
    extension.lo[axis] = candidate.hi[axis];
    ScanResult result = scan(extension, stretched, stretched.label, false);
    if (result.violation != RuleViolation::None) return std::nullopt;
    return stretched;
}

Region Coarsener::expand_region(std::span<const std::uint32_t> start, Rng& rng) const {
    if (start.size() != k_) throw ValidationError("start coordinate arity mismatch");
    std::uint64_t start_id = linear_id(start);
    if (covered_.get(start_id)) throw ValidationError("expansion start is already covered");

    Region base = residual_of(static_cast<std::uint32_t>(src_->cell_region(start_id)));
    for (std::size_t i = 0; i < k_; ++i)
        if (base.lo[i] != start[i])
            throw ValidationError(
                "expansion must start at the first uncovered cell of a residual box");

    Region candidate = base;
    candidate.label = labels_[start_id];

    std::vector<std::uint8_t> exhausted(k_, 0);
    std::size_t active = 0;
    for (std::size_t i = 0; i < k_; ++i) {
        exhausted[i] = candidate.hi[i] >= dims_[i];
        active += !exhausted[i];
    }

    while (active > 0) {
        std::uint64_t pick = rng.below(active);
        std::size_t axis = 0;
        for (std::size_t i = 0; i < k_; ++i) {
            if (exhausted[i]) continue;
            if (pick == 0) {
                axis = i;
                break;
            }
            --pick;
        }

        Region grown = candidate;
        grown.hi[axis] += 1;
        Region slab = grown;
        slab.lo[axis] = candidate.hi[axis];

        ScanResult result = scan(slab, grown, candidate.label, false);
        if (result.violation == RuleViolation::None) {
            candidate = std::move(grown);
        } else if (result.violation == RuleViolation::CutsRegion) {
            std::optional<Region> repaired = repair(grown, axis, result.owners);
            if (repaired) {
                candidate = std::move(*repaired);
            } else {
                exhausted[axis] = 1;
                --active;
                continue;
            }
        } else {
            exhausted[axis] = 1;
            --active;
            continue;
        }
        if (candidate.hi[axis] >= dims_[axis]) {
            exhausted[axis] = 1;
            --active;
        }
    }
    return candidate;
}

void Coarsener::fix(Region region) {
    ExpansionCheck check = check_expansion(region);
    if (check.violation != RuleViolation::None)
        throw ValidationError("cannot fix a rule-violating region");
    region.label = labels_[linear_id(region.lo)];

    // Mark coverage and shrink the residuals of every source region touched.
    std::vector<std::uint32_t> owners;
    std::uint32_t last_owner = UINT32_MAX;
    std::vector<std::uint32_t> coords = region.lo;
    while (true) {
        std::uint64_t base = 0;
        for (std::size_t i = 0; i + 1 < k_; ++i) base += coords[i] * strides_[i];
        for (std::uint64_t id = base + region.lo[k_ - 1]; id < base + region.hi[k_ - 1]; ++id) {
            covered_.set(id);
            if (!src_->unit_cells) {
                std::uint32_t owner = src_->owner[id];
                if (owner != last_owner) {
                    owners.push_back(owner);
                    last_owner = owner;
                }
            }
        }
        std::size_t axis = k_ - 1;
        bool wrapped = true;
        while (axis-- > 0) {
            if (++coords[axis] < region.hi[axis]) {
                wrapped = false;
                break;
            }
            coords[axis] = region.lo[axis];
        }
        if (k_ == 1 || wrapped) break;
    }
    remaining_ -= region.volume();

    if (!src_->unit_cells) {
        std::sort(owners.begin(), owners.end());
        owners.erase(std::unique(owners.begin(), owners.end()), owners.end());
        for (std::uint32_t owner : owners)
            residuals_[owner] = box_minus(std::move(residuals_[owner]), region);
    }
    merged_.push_back(std::move(region));
}

std::vector<Region> caap_pass(const Partitioning& source, std::uint64_t seed) {
    Coarsener coarsener(source);
    Rng rng(seed);
    while (!coarsener.done()) {
        std::vector<std::uint32_t> start = coarsener.next_start();
        coarsener.fix(coarsener.expand_region(start, rng));
    }
    return coarsener.take_merged();
}

// ---------------------------------------------------------------------------
// Tree rebuilding
// ---------------------------------------------------------------------------

namespace {

struct Builder {
    const BoundsMatrix* bounds;
    std::size_t k;
    std::vector<TreeNode> nodes;

    std::uint32_t build(Region box, std::vector<Region> items) {
        if (items.empty()) // cannot happen for a full cover; keep the tree total
            return emit_leaf(0);
        bool uniform = true;
        for (const Region& item : items)
            if (item.label != items.front().label) {
                uniform = false;
                break;
            }
        if (uniform) return emit_leaf(items.front().label);

        // Pick the plane cutting the fewest regions, then the most balanced,
        // then the lowest axis and position.
        const auto n = static_cast<std::uint64_t>(items.size());
        std::uint64_t best_score = UINT64_MAX;
        std::size_t best_axis = 0;
        std::uint32_t best_pos = 0;
        std::vector<std::uint32_t> lows, highs;
        for (std::size_t axis = 0; axis < k; ++axis) {
            if (box.hi[axis] - box.lo[axis] < 2) continue;
            lows.clear();
            highs.clear();
            for (const Region& item : items) {
                lows.push_back(item.lo[axis]);
                highs.push_back(item.hi[axis]);
            }
            std::sort(lows.begin(), lows.end());
            std::sort(highs.begin(), highs.end());
            std::size_t li = 0, hi = 0;
            for (std::uint32_t pos = box.lo[axis] + 1; pos < box.hi[axis]; ++pos) {
                while (hi < highs.size() && highs[hi] <= pos) ++hi;
                while (li < lows.size() && lows[li] < pos) ++li;
                auto fully_left = static_cast<std::uint64_t>(hi);
                auto fully_right = static_cast<std::uint64_t>(lows.size() - li);
                std::uint64_t split = n - fully_left - fully_right;
                std::uint64_t balance = fully_left > fully_right ? fully_left - fully_right
                                                                 : fully_right - fully_left;
                std::uint64_t score = split * (n + 1) + balance;
                if (score < best_score) {
                    best_score = score;
                    best_axis = axis;
                    best_pos = pos;
                }
            }
        }
        if (best_score == UINT64_MAX) // mixed labels need >= 2 regions and a gap
            return emit_leaf(items.front().label);

        std::vector<Region> left_items, right_items;
        for (Region& item : items) {
            if (item.lo[best_axis] < best_pos && item.hi[best_axis] > best_pos) {
                Region right_part = item;
                right_part.lo[best_axis] = best_pos;
                right_items.push_back(std::move(right_part));
                item.hi[best_axis] = best_pos;
                left_items.push_back(std::move(item));
            } else if (item.hi[best_axis] <= best_pos) {
                left_items.push_back(std::move(item));
            } else {
                right_items.push_back(std::move(item));
            }
        }
        items.clear();
        items.shrink_to_fit();

        Region left_box = box, right_box = std::move(box);
        left_box.hi[best_axis] = best_pos;
        right_box.lo[best_axis] = best_pos;
        std::uint32_t left = build(std::move(left_box), std::move(left_items));
        std::uint32_t right = build(std::move(right_box), std::move(right_items));

        TreeNode node;
        node.dim = static_cast<std::int32_t>(best_axis);
        node.threshold = bounds->rows[best_axis][best_pos];
        node.left = left;
        node.right = right;
        nodes.push_back(node);
        return static_cast<std::uint32_t>(nodes.size() - 1);
    }

    std::uint32_t emit_leaf(std::uint64_t label) {
        TreeNode leaf;
        leaf.label = label;
        nodes.push_back(leaf);
        return static_cast<std::uint32_t>(nodes.size() - 1);
    }
};

} // namespace

DecisionTree regions_to_tree(std::span<const Region> regions, const BoundsMatrix& bounds,
                             GridSpec domain, std::vector<std::string> actions) {
    if (regions.empty()) throw ValidationError("cannot build a tree from zero regions");
    Builder builder{&bounds, bounds.rows.size(), {}};

    Region box;
    box.lo.assign(builder.k, 0);
    for (const auto& row : bounds.rows)
        box.hi.push_back(static_cast<std::uint32_t>(row.size() - 1));

    DecisionTree tree;
    tree.root = builder.build(box, {regions.begin(), regions.end()});
    tree.nodes = std::move(builder.nodes);
    tree.domain = std::move(domain);
    tree.actions = std::move(actions);
    tree.validate();
    return tree;
}

// ---------------------------------------------------------------------------
// Iterated compaction
// ---------------------------------------------------------------------------

namespace {

CompactResult compact_partitioning(Partitioning source, GridSpec domain,
                                   std::vector<std::string> actions,
                                   const CompactOptions& options) {
    auto start_time = std::chrono::steady_clock::now();
    CompactResult result;
    result.source_regions = source.regions.size();

    std::uint64_t previous = source.regions.size();
    std::optional<DecisionTree> tree;
    for (std::uint32_t iteration = 0; iteration < options.max_iterations; ++iteration) {
        std::uint64_t pass_seed = Rng::combine(options.seed, iteration);
        std::vector<Region> regions = caap_pass(source, pass_seed);
        if (regions.size() >= previous) break; // pass didn't help; discard it

        tree = regions_to_tree(regions, source.bounds, domain, actions);
        result.region_counts.push_back(regions.size());
        double gain = static_cast<double>(previous - regions.size()) /
                      static_cast<double>(previous);
        previous = regions.size();
        if (gain < options.min_relative_gain) break;
        if (iteration + 1 < options.max_iterations) source = partitioning_of(*tree);
    }

    if (!tree) // nothing improved; emit the source cover as a tree verbatim
        tree = regions_to_tree(source.regions, source.bounds, domain, actions);
    result.tree = std::move(*tree);
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return result;
}

} // namespace

CompactResult compact(const ShieldGrid& shield, const CompactOptions& options) {
    return compact_partitioning(partitioning_of(shield), shield.grid, shield.actions, options);
}

CompactResult compact(const DecisionTree& tree, const CompactOptions& options) {
    return compact_partitioning(partitioning_of(tree), tree.domain, tree.actions, options);
}

std::uint64_t count_label_mismatches(const Partitioning& source, const DecisionTree& tree) {
    const std::size_t k = source.dims.size();
    std::uint64_t mismatches = 0;
    std::vector<std::uint32_t> coords(k, 0);
    std::vector<double> values(k);
    const std::uint64_t cells = source.micro_cell_count();
    for (std::uint64_t cell = 0; cell < cells; ++cell) {
        for (std::size_t i = 0; i < k; ++i) values[i] = source.bounds.rows[i][coords[i]];
        if (tree.evaluate(values) != source.label_at(cell)) ++mismatches;
        for (std::size_t i = k; i-- > 0;) {
            if (++coords[i] < source.dims[i]) break;
            coords[i] = 0;
        }
    }
    return mismatches;
}

} // namespace shieldkit
