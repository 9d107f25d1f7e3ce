#include "shieldkit/grid.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <string_view>

#include "shieldkit/errors.hpp"

namespace shieldkit {

void GridSpec::validate() const {
    if (axes.empty()) throw ValidationError("grid has no axes");
    for (const auto& axis : axes) {
        if (axis.count == 0)
            throw ValidationError("grid axis '" + axis.name + "' has zero cells");
        if (!axis.discrete && !(axis.lower < axis.upper))
            throw ValidationError("grid axis '" + axis.name + "' needs lower < upper");
        if (!axis.discrete && (!std::isfinite(axis.lower) || !std::isfinite(axis.upper)))
            throw ValidationError("grid axis '" + axis.name + "' has non-finite bounds");
    }
    total_cells(); // overflow check
}

std::uint64_t GridSpec::total_cells() const {
    unsigned __int128 total = 1;
    for (const auto& axis : axes) {
        total *= axis.count;
        if (total > UINT64_MAX - 1)
            throw ValidationError("grid too large: cell count overflows");
    }
    return static_cast<std::uint64_t>(total);
}

Grid::Grid(GridSpec spec, const ModelDescriptor& desc) : spec_(std::move(spec)) {
    for (auto& axis : spec_.axes) {
        bool found = false;
        for (std::size_t i = 0; i < desc.continuous_vars.size() && !found; ++i) {
            if (desc.continuous_vars[i].name == axis.name) {
                if (axis.discrete)
                    throw ValidationError("axis '" + axis.name +
                                          "' is continuous in model '" + desc.name + "'");
                bind_.push_back({false, i});
                found = true;
            }
        }
        for (std::size_t i = 0; i < desc.discrete_vars.size() && !found; ++i) {
            if (desc.discrete_vars[i].name == axis.name) {
                if (!axis.discrete)
                    throw ValidationError("axis '" + axis.name + "' is discrete in model '" +
                                          desc.name + "'; drop the bounds");
                if (axis.count == 0) axis.count = desc.discrete_vars[i].cardinality;
                if (axis.count != desc.discrete_vars[i].cardinality)
                    throw ValidationError("axis '" + axis.name + "' must cover all " +
                                          std::to_string(desc.discrete_vars[i].cardinality) +
                                          " values");
                axis.lower = 0.0;
                axis.upper = static_cast<double>(axis.count);
                bind_.push_back({true, i});
                found = true;
            }
        }
        if (!found)
            throw ValidationError("model '" + desc.name + "' has no variable '" + axis.name +
                                  "'");
    }
    for (std::size_t a = 0; a < spec_.axes.size(); ++a)
        for (std::size_t b = a + 1; b < spec_.axes.size(); ++b)
            if (spec_.axes[a].name == spec_.axes[b].name)
                throw ValidationError("axis '" + spec_.axes[a].name + "' listed twice");

    spec_.validate();
    total_ = spec_.total_cells();
    strides_.assign(spec_.axes.size(), 1);
    for (std::size_t i = spec_.axes.size(); i-- > 1;)
        strides_[i - 1] = strides_[i] * spec_.axes[i].count;
    template_state_ = desc.initial_state;
}

CellIndex Grid::cell_of(const State& s) const {
    CellIndex cell;
    cell.coords.resize(spec_.axes.size());
    for (std::size_t i = 0; i < spec_.axes.size(); ++i) {
        const AxisSpec& axis = spec_.axes[i];
        if (bind_[i].discrete) {
            std::int32_t value = s.discrete[bind_[i].var_index];
            if (value < 0 || static_cast<std::uint64_t>(value) >= axis.count) return {{}, true};
            cell.coords[i] = static_cast<std::uint64_t>(value);
            continue;
        }
        double value = s.continuous[bind_[i].var_index];
        if (!(value >= axis.lower) || !(value < axis.upper)) return {{}, true};
        auto idx = static_cast<std::uint64_t>((value - axis.lower) / axis.granularity());
        if (idx >= axis.count) idx = axis.count - 1; // fp rounding at the top face
        cell.coords[i] = idx;
    }
    return cell;
}

std::uint64_t Grid::cell_id(const CellIndex& cell) const {
    if (cell.out) return total_;
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < strides_.size(); ++i) id += cell.coords[i] * strides_[i];
    return id;
}

CellIndex Grid::delinearize(std::uint64_t id) const {
    if (id >= total_) return {{}, true};
    CellIndex cell;
    cell.coords.resize(spec_.axes.size());
    for (std::size_t i = 0; i < strides_.size(); ++i) {
        cell.coords[i] = id / strides_[i];
        id %= strides_[i];
    }
    return cell;
}

std::vector<double> Grid::axis_values(const State& s) const {
    std::vector<double> values(spec_.axes.size());
    for (std::size_t i = 0; i < spec_.axes.size(); ++i)
        values[i] = bind_[i].discrete
                        ? static_cast<double>(s.discrete[bind_[i].var_index])
                        : s.continuous[bind_[i].var_index];
    return values;
}

std::uint64_t Grid::samples_per_cell(const SamplePlan& plan) const {
    std::uint64_t n = 1;
    for (const auto& axis : spec_.axes)
        if (!axis.discrete) n *= plan.samples_per_axis;
    return n;
}

void Grid::for_each_sample(std::span<const std::int64_t> virtual_coords, const SamplePlan& plan,
                           const std::function<void(const State&, std::uint64_t)>& fn) const {
    if (plan.samples_per_axis == 0) throw ValidationError("samples_per_axis must be >= 1");
    if (virtual_coords.size() != spec_.axes.size())
        throw ValidationError("cell coordinate arity does not match grid");

    // Per-axis sample coordinates, lower face upward; the top sample is pulled
    // inside the half-open cell by edge_shrink.
    std::vector<std::vector<double>> axis_samples(spec_.axes.size());
    std::vector<std::uint32_t> counts(spec_.axes.size(), 1);
    for (std::size_t i = 0; i < spec_.axes.size(); ++i) {
        const AxisSpec& axis = spec_.axes[i];
        if (axis.discrete) {
            axis_samples[i] = {static_cast<double>(virtual_coords[i])};
            continue;
        }
        std::uint32_t n = plan.samples_per_axis;
        counts[i] = n;
        double gamma = axis.granularity();
        double shrink = plan.edge_shrink > 0.0 ? plan.edge_shrink : 1e-6 * gamma;
        double base = axis.lower + static_cast<double>(virtual_coords[i]) * gamma;
        double delta = n > 1 ? gamma / static_cast<double>(n - 1) : 0.0;
        axis_samples[i].resize(n);
        for (std::uint32_t q = 0; q < n; ++q) axis_samples[i][q] = base + q * delta;
        if (n > 1) axis_samples[i][n - 1] = base + gamma - shrink;
    }

    State sample = template_state_;
    std::vector<std::uint32_t> pos(spec_.axes.size(), 0);
    std::uint64_t flat = 0;
    while (true) {
        for (std::size_t i = 0; i < spec_.axes.size(); ++i) {
            if (bind_[i].discrete)
                sample.discrete[bind_[i].var_index] =
                    static_cast<std::int32_t>(axis_samples[i][0]);
            else
                sample.continuous[bind_[i].var_index] = axis_samples[i][pos[i]];
        }
        fn(sample, flat++);

        std::size_t axis = spec_.axes.size();
        while (axis-- > 0) {
            if (++pos[axis] < counts[axis]) break;
            pos[axis] = 0;
            if (axis == 0) return;
        }
        if (axis == static_cast<std::size_t>(-1)) return;
    }
}

std::vector<State> Grid::sample_points(const CellIndex& cell, const SamplePlan& plan) const {
    if (cell.out) throw ValidationError("cannot sample the OUT cell");
    std::vector<std::int64_t> coords(cell.coords.begin(), cell.coords.end());
    std::vector<State> samples;
    samples.reserve(samples_per_cell(plan));
    for_each_sample(coords, plan,
                    [&samples](const State& s, std::uint64_t) { samples.push_back(s); });
    return samples;
}

// ---------------------------------------------------------------------------
// Grid spec strings
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_number(std::string_view text, const std::string& context) {
    text = trim(text);
    std::string buffer(text);
    char* end = nullptr;
    double value = std::strtod(buffer.c_str(), &end);
    if (end != buffer.c_str() + buffer.size() || buffer.empty() || !std::isfinite(value))
        throw ValidationError("bad number '" + buffer + "' in " + context);
    return value;
}

} // namespace

GridSpec parse_grid_spec(const std::string& text, const ModelDescriptor& desc) {
    GridSpec spec;
    std::size_t start = 0;
    int bracket_depth = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i < text.size() && text[i] == '[') ++bracket_depth;
        if (i < text.size() && text[i] == ']') --bracket_depth;
        if (i < text.size() && (text[i] != ',' || bracket_depth > 0)) continue;

        std::string_view token = trim(std::string_view(text).substr(start, i - start));
        start = i + 1;
        if (token.empty()) throw ValidationError("empty axis in grid spec '" + text + "'");

        AxisSpec axis;
        std::size_t open = token.find('[');
        if (open == std::string_view::npos) {
            axis.name = std::string(trim(token));
            axis.discrete = true; // cardinality resolved against the model below
        } else {
            std::size_t close = token.find(']', open);
            std::size_t colon = token.find(':', open);
            std::size_t comma = token.find(',', open);
            if (close == std::string_view::npos || colon == std::string_view::npos ||
                comma == std::string_view::npos || comma > close || colon < close)
                throw ValidationError("bad axis '" + std::string(token) +
                                      "', expected name[lo,hi]:count");
            axis.name = std::string(trim(token.substr(0, open)));
            std::string context = "axis '" + axis.name + "'";
            axis.lower = parse_number(token.substr(open + 1, comma - open - 1), context);
            axis.upper = parse_number(token.substr(comma + 1, close - comma - 1), context);
            double count = parse_number(token.substr(colon + 1), context);
            if (count < 1.0 || count != std::floor(count) || count > 1e15)
                throw ValidationError("bad cell count in " + context);
            axis.count = static_cast<std::uint64_t>(count);
        }
        if (axis.name.empty()) throw ValidationError("axis without a name in '" + text + "'");
        spec.axes.push_back(std::move(axis));
    }
    if (spec.axes.empty()) throw ValidationError("empty grid spec");

    // Bind once to resolve discrete cardinalities and validate names; the
    // returned spec is complete and self-describing.
    Grid bound(spec, desc);
    return bound.spec();
}

std::string format_double(double value) {
    char buffer[32];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, end);
}

std::string format_grid_spec(const GridSpec& spec) {
    std::string out;
    for (const auto& axis : spec.axes) {
        if (!out.empty()) out += ',';
        if (axis.discrete) {
            out += axis.name;
        } else {
            out += axis.name + '[' + format_double(axis.lower) + ',' +
                   format_double(axis.upper) + "]:" + std::to_string(axis.count);
        }
    }
    return out;
}

} // namespace shieldkit
