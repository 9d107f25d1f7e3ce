#pragma once

#include <map>
#include <string>

#include "shieldkit/caap.hpp"
#include "shieldkit/synthesis.hpp"

namespace shieldkit {

/// Raster a 2-D slice of a shield as SVG. `x_axis`/`y_axis` name the plotted
/// axes; every remaining axis must be pinned to a value in `pins`. Cells with
/// equal masks are merged into horizontal runs; colors are assigned by sorted
/// mask value, so equal artifacts render byte-identically.
std::string render_shield_svg(const ShieldGrid& shield, const std::string& x_axis,
                              const std::string& y_axis,
                              const std::map<std::string, double>& pins);

/// Same raster for a decision tree, sampled on its domain grid at cell lower
/// corners. A tree equivalent to a shield yields the identical document.
std::string render_tree_svg(const DecisionTree& tree, const std::string& x_axis,
                            const std::string& y_axis,
                            const std::map<std::string, double>& pins);

} // namespace shieldkit
