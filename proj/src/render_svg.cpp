#include "shieldkit/render_svg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "shieldkit/errors.hpp"

namespace shieldkit {

namespace {

const char* kPalette[] = {"#4e79a7", "#e15759", "#59a14f", "#f28e2b", "#b07aa1",
                          "#76b7b2", "#edc949", "#ff9da7", "#9c755f", "#bab0ac"};

std::string mask_caption(std::uint64_t mask, const std::vector<std::string>& actions) {
    if (mask == 0) return "(none)";
    std::string caption = "{";
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (!(mask >> i & 1)) continue;
        if (caption.size() > 1) caption += ",";
        caption += actions[i];
    }
    return caption + "}";
}

std::size_t resolve_axis(const GridSpec& grid, const std::string& name) {
    for (std::size_t i = 0; i < grid.axes.size(); ++i)
        if (grid.axes[i].name == name) return i;
    throw ValidationError("grid has no axis '" + name + "'");
}

/// Cell index of a pinned coordinate on one axis.
std::uint64_t pin_index(const AxisSpec& axis, double value) {
    if (!(value >= axis.lower) || !(value < axis.upper))
        throw ValidationError("pinned value for axis '" + axis.name + "' lies outside [" +
                              format_double(axis.lower) + ", " + format_double(axis.upper) +
                              ")");
    auto idx = static_cast<std::uint64_t>((value - axis.lower) / axis.granularity());
    return std::min(idx, axis.count - 1);
}

std::string render_slice(const GridSpec& grid, const std::vector<std::string>& actions,
                         const std::string& x_axis, const std::string& y_axis,
                         const std::map<std::string, double>& pins,
                         const std::function<std::uint64_t(std::uint64_t)>& label_of) {
    const std::size_t xi = resolve_axis(grid, x_axis);
    const std::size_t yi = resolve_axis(grid, y_axis);
    if (xi == yi) throw ValidationError("x and y axes must differ");

    std::vector<std::uint64_t> strides(grid.axes.size(), 1);
    for (std::size_t i = grid.axes.size(); i-- > 1;)
        strides[i - 1] = strides[i] * grid.axes[i].count;

    std::uint64_t base = 0;
    for (std::size_t i = 0; i < grid.axes.size(); ++i) {
        if (i == xi || i == yi) continue;
        auto pin = pins.find(grid.axes[i].name);
        if (pin == pins.end())
            throw ValidationError("axis '" + grid.axes[i].name +
                                  "' must be pinned with --fix name=value");
        base += pin_index(grid.axes[i], pin->second) * strides[i];
    }
    for (const auto& [name, value] : pins) {
        std::size_t i = resolve_axis(grid, name);
        if (i == xi || i == yi)
            throw ValidationError("axis '" + name + "' is plotted and cannot be pinned");
    }

    const std::uint64_t nx = grid.axes[xi].count;
    const std::uint64_t ny = grid.axes[yi].count;

    // Collect the labels present in this slice for a stable color order.
    std::set<std::uint64_t> labels;
    for (std::uint64_t y = 0; y < ny; ++y)
        for (std::uint64_t x = 0; x < nx; ++x)
            labels.insert(label_of(base + x * strides[xi] + y * strides[yi]));
    std::map<std::uint64_t, std::string> color;
    std::size_t next = 0;
    for (std::uint64_t label : labels)
        color[label] = label == 0
                           ? "#ffffff"
                           : kPalette[next++ % (sizeof kPalette / sizeof kPalette[0])];

    const double margin_left = 56, margin_bottom = 36, margin_top = 10;
    const double plot_w = 640, plot_h = 420;
    const double legend_w = 180;
    const double width = margin_left + plot_w + legend_w;
    const double height = margin_top + plot_h + margin_bottom;
    const double cell_w = plot_w / static_cast<double>(nx);
    const double cell_h = plot_h / static_cast<double>(ny);

    auto fmt = [](double v) { return format_double(std::round(v * 1000.0) / 1000.0); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
           fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
    svg += "<rect x=\"" + fmt(margin_left) + "\" y=\"" + fmt(margin_top) + "\" width=\"" +
           fmt(plot_w) + "\" height=\"" + fmt(plot_h) +
           "\" fill=\"#ffffff\" stroke=\"#000000\" stroke-width=\"1\"/>\n";

    // Raster rows bottom-up, merging equal-label runs along x.
    for (std::uint64_t y = 0; y < ny; ++y) {
        double top = margin_top + plot_h - static_cast<double>(y + 1) * cell_h;
        std::uint64_t x = 0;
        while (x < nx) {
            std::uint64_t label = label_of(base + x * strides[xi] + y * strides[yi]);
            std::uint64_t end = x + 1;
            while (end < nx &&
                   label_of(base + end * strides[xi] + y * strides[yi]) == label)
                ++end;
            if (label != 0) { // unsafe cells keep the white background
                svg += "<rect x=\"" + fmt(margin_left + static_cast<double>(x) * cell_w) +
                       "\" y=\"" + fmt(top) + "\" width=\"" +
                       fmt(static_cast<double>(end - x) * cell_w) + "\" height=\"" +
                       fmt(cell_h) + "\" fill=\"" + color[label] + "\"/>\n";
            }
            x = end;
        }
    }

    // Axis captions and corner ticks.
    const AxisSpec& ax = grid.axes[xi];
    const AxisSpec& ay = grid.axes[yi];
    svg += "<text x=\"" + fmt(margin_left + plot_w / 2) + "\" y=\"" + fmt(height - 8) +
           "\" font-size=\"14\" text-anchor=\"middle\">" + ax.name + "</text>\n";
    svg += "<text x=\"14\" y=\"" + fmt(margin_top + plot_h / 2) +
           "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
           fmt(margin_top + plot_h / 2) + ")\">" + ay.name + "</text>\n";
    svg += "<text x=\"" + fmt(margin_left) + "\" y=\"" + fmt(height - 20) +
           "\" font-size=\"12\" text-anchor=\"middle\">" + format_double(ax.lower) +
           "</text>\n";
    svg += "<text x=\"" + fmt(margin_left + plot_w) + "\" y=\"" + fmt(height - 20) +
           "\" font-size=\"12\" text-anchor=\"middle\">" + format_double(ax.upper) +
           "</text>\n";
    svg += "<text x=\"" + fmt(margin_left - 6) + "\" y=\"" + fmt(margin_top + plot_h) +
           "\" font-size=\"12\" text-anchor=\"end\">" + format_double(ay.lower) + "</text>\n";
    svg += "<text x=\"" + fmt(margin_left - 6) + "\" y=\"" + fmt(margin_top + 12) +
           "\" font-size=\"12\" text-anchor=\"end\">" + format_double(ay.upper) + "</text>\n";

    // Legend, one swatch per label present.
    double ly = margin_top + 10;
    for (std::uint64_t label : labels) {
        double lx = margin_left + plot_w + 16;
        svg += "<rect x=\"" + fmt(lx) + "\" y=\"" + fmt(ly) +
               "\" width=\"14\" height=\"14\" fill=\"" + color[label] +
               "\" stroke=\"#000000\" stroke-width=\"0.5\"/>\n";
        svg += "<text x=\"" + fmt(lx + 20) + "\" y=\"" + fmt(ly + 12) +
               "\" font-size=\"12\">" + mask_caption(label, actions) + "</text>\n";
        ly += 22;
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace

std::string render_shield_svg(const ShieldGrid& shield, const std::string& x_axis,
                              const std::string& y_axis,
                              const std::map<std::string, double>& pins) {
    if (shield.cell_masks.size() != shield.grid.total_cells())
        throw ValidationError("shield mask array does not match its grid");
    return render_slice(shield.grid, shield.actions, x_axis, y_axis, pins,
                        [&shield](std::uint64_t cell) { return shield.cell_masks[cell]; });
}

std::string render_tree_svg(const DecisionTree& tree, const std::string& x_axis,
                            const std::string& y_axis,
                            const std::map<std::string, double>& pins) {
    tree.validate();
    const GridSpec& grid = tree.domain;
    std::vector<std::uint64_t> strides(grid.axes.size(), 1);
    for (std::size_t i = grid.axes.size(); i-- > 1;)
        strides[i - 1] = strides[i] * grid.axes[i].count;

    // Evaluate at cell lower corners, matching the shield raster exactly.
    return render_slice(grid, tree.actions, x_axis, y_axis, pins,
                        [&](std::uint64_t cell) {
                            std::vector<double> values(grid.axes.size());
                            for (std::size_t i = 0; i < grid.axes.size(); ++i) {
                                std::uint64_t coord = cell / strides[i];
                                cell %= strides[i];
                                const AxisSpec& axis = grid.axes[i];
                                values[i] =
                                    axis.discrete
                                        ? static_cast<double>(coord)
                                        : axis.lower + (axis.upper - axis.lower) *
                                                           static_cast<double>(coord) /
                                                           static_cast<double>(axis.count);
                            }
                            return tree.evaluate(values);
                        });
}

} // namespace shieldkit
