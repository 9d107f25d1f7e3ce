#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shieldkit/model.hpp"

namespace shieldkit {

struct AxisSpec {
    std::string name;
    double lower = 0.0; ///< half-open interval [lower, upper) for continuous axes
    double upper = 0.0;
    std::uint64_t count = 0; ///< cells along this axis; equals cardinality for discrete axes
    bool discrete = false;

    double granularity() const {
        return discrete ? 1.0 : (upper - lower) / static_cast<double>(count);
    }
    bool operator==(const AxisSpec&) const = default;
};

/// A rectangular partition of a box into axis-aligned cells, plus one
/// implicit OUT cell absorbing everything beyond the box. Cells are
/// linearized row-major with the last axis fastest; OUT gets id
/// total_cells().
struct GridSpec {
    std::vector<AxisSpec> axes;

    void validate() const;
    std::uint64_t total_cells() const;
    std::uint64_t out_id() const { return total_cells(); }
    bool operator==(const GridSpec&) const = default;
};

struct CellIndex {
    std::vector<std::uint64_t> coords; ///< empty when out
    bool out = false;
};

/// Systematic per-cell sampling: samples_per_axis points per continuous axis,
/// evenly spaced from the lower face, with the topmost sample pulled back by
/// edge_shrink so it stays inside the half-open cell. Discrete axes always
/// contribute exactly their one value.
struct SamplePlan {
    std::uint32_t samples_per_axis = 3;
    double edge_shrink = 0.0; ///< 0 selects the default 1e-6 * granularity per axis
};

/// A GridSpec bound to a concrete model's variable layout. Axes refer to
/// model variables by name; variables not covered by any axis keep their
/// initial-state value during sampling.
class Grid {
public:
    Grid(GridSpec spec, const ModelDescriptor& desc);

    const GridSpec& spec() const { return spec_; }
    std::uint64_t total_cells() const { return total_; }
    std::uint64_t out_id() const { return total_; }
    std::size_t axis_count() const { return spec_.axes.size(); }

    CellIndex cell_of(const State& s) const;
    std::uint64_t cell_id(const CellIndex& cell) const;
    std::uint64_t cell_id_of(const State& s) const { return cell_id(cell_of(s)); }
    CellIndex delinearize(std::uint64_t id) const;

    /// Per-axis values read out of a full model state.
    std::vector<double> axis_values(const State& s) const;

    std::uint64_t samples_per_cell(const SamplePlan& plan) const;
    std::vector<State> sample_points(const CellIndex& cell, const SamplePlan& plan) const;

    /// Visit every sample of a (possibly virtual) cell. Coordinates may be -1
    /// or count on continuous axes to probe the one-cell-thick band beyond the
    /// grid. fn receives the sample state and its flat sample index.
    void for_each_sample(std::span<const std::int64_t> virtual_coords, const SamplePlan& plan,
                         const std::function<void(const State&, std::uint64_t)>& fn) const;

private:
    struct Binding {
        bool discrete = false;
        std::size_t var_index = 0;
    };

    GridSpec spec_;
    std::vector<Binding> bind_;
    std::vector<std::uint64_t> strides_;
    std::uint64_t total_ = 0;
    State template_state_;
};

/// Parse "v[-13,13]:1300,p[0,11]:550,loc" against a model's variables.
/// Bare names are discrete axes with one cell per value.
GridSpec parse_grid_spec(const std::string& text, const ModelDescriptor& desc);

std::string format_grid_spec(const GridSpec& spec);

std::string format_double(double value); ///< shortest round-trip decimal form

} // namespace shieldkit
