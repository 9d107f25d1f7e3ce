#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shieldkit/caap.hpp"
#include "shieldkit/synthesis.hpp"

namespace shieldkit {

/// How a shield file came to be; echoed verbatim by `info`.
struct ShieldProvenance {
    std::string model;
    std::string property;
    std::uint32_t samples_per_axis = 0;
    double edge_shrink = 0.0;
    std::uint32_t repeats = 0;
    std::uint64_t seed = 0;
    std::string oob_mode;
    double seconds = 0.0;
};

struct TreeProvenance {
    std::string source_digest; ///< digest of the artifact the tree was built from
    std::uint64_t seed = 0;
    std::uint64_t source_regions = 0;
    std::vector<std::uint64_t> region_counts;
    double seconds = 0.0;
};

/// FNV-1a over a canonical byte serialization; stable across platforms.
std::uint64_t shield_digest(const ShieldGrid& shield);
std::uint64_t tree_digest(const DecisionTree& tree);
std::string format_digest(std::uint64_t digest);

void save_shield(const ShieldGrid& shield, const ShieldProvenance& provenance,
                 const std::string& path);
void save_tree(const DecisionTree& tree, const TreeProvenance& provenance,
               const std::string& path);

struct LoadedShield {
    ShieldGrid shield;
    ShieldProvenance provenance;
};

struct LoadedTree {
    DecisionTree tree;
    TreeProvenance provenance;
};

/// Parse and validate; malformed files throw ValidationError naming what and
/// where (RLE offsets included).
LoadedShield load_shield(const std::string& path);
LoadedTree load_tree(const std::string& path);

/// "shield" or "decision-tree", per the file's format field.
std::string sniff_format(const std::string& path);

} // namespace shieldkit
