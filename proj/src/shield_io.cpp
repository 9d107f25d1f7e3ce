#include "shieldkit/shield_io.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

#include "shieldkit/errors.hpp"

namespace shieldkit {

using nlohmann::json;

namespace {

constexpr int kShieldVersion = 1;
constexpr int kTreeVersion = 1;

// --- digests ---------------------------------------------------------------

struct Fnv1a {
    std::uint64_t state = 0xCBF29CE484222325ull;

    void feed(const void* data, std::size_t size) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            state ^= bytes[i];
            state *= 0x100000001B3ull;
        }
    }
    void feed_u64(std::uint64_t v) { feed(&v, sizeof v); }
    void feed_double(double v) { feed_u64(std::bit_cast<std::uint64_t>(v)); }
    void feed_string(const std::string& s) {
        feed_u64(s.size());
        feed(s.data(), s.size());
    }
};

void feed_grid(Fnv1a& hash, const GridSpec& grid) {
    hash.feed_u64(grid.axes.size());
    for (const AxisSpec& axis : grid.axes) {
        hash.feed_string(axis.name);
        hash.feed_double(axis.lower);
        hash.feed_double(axis.upper);
        hash.feed_u64(axis.count);
        hash.feed_u64(axis.discrete ? 1 : 0);
    }
}

void feed_actions(Fnv1a& hash, const std::vector<std::string>& actions) {
    hash.feed_u64(actions.size());
    for (const std::string& action : actions) hash.feed_string(action);
}

// --- json helpers ------------------------------------------------------------

json axes_to_json(const GridSpec& grid) {
    json axes = json::array();
    for (const AxisSpec& axis : grid.axes) {
        json entry{{"name", axis.name}, {"count", axis.count}};
        if (axis.discrete) {
            entry["discrete"] = true;
        } else {
            entry["lower"] = axis.lower;
            entry["upper"] = axis.upper;
        }
        axes.push_back(std::move(entry));
    }
    return axes;
}

GridSpec axes_from_json(const json& axes, const std::string& what) {
    if (!axes.is_array() || axes.empty())
        throw ValidationError(what + ": grid must be a non-empty array of axes");
    GridSpec grid;
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const json& entry = axes[i];
        std::string where = what + ": axis " + std::to_string(i);
        if (!entry.is_object() || !entry.contains("name") || !entry.contains("count"))
            throw ValidationError(where + " needs name and count");
        AxisSpec axis;
        axis.name = entry["name"].get<std::string>();
        axis.count = entry["count"].get<std::uint64_t>();
        axis.discrete = entry.value("discrete", false);
        if (axis.discrete) {
            axis.lower = 0.0;
            axis.upper = static_cast<double>(axis.count);
        } else {
            if (!entry.contains("lower") || !entry.contains("upper"))
                throw ValidationError(where + " needs lower and upper bounds");
            axis.lower = entry["lower"].get<double>();
            axis.upper = entry["upper"].get<double>();
        }
        grid.axes.push_back(std::move(axis));
    }
    grid.validate();
    return grid;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    json data;
    try {
        in >> data;
    } catch (const json::exception& e) {
        throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
    return data;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ValidationError("failed while writing '" + path + "'");
}

void expect_format(const json& data, const std::string& path, const std::string& format,
                   int version) {
    if (!data.is_object() || data.value("format", "") != format)
        throw ValidationError("'" + path + "' is not a " + format + " file");
    if (data.value("version", -1) != version)
        throw ValidationError("'" + path + "' has an unsupported " + format + " version");
}

} // namespace

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

std::uint64_t shield_digest(const ShieldGrid& shield) {
    Fnv1a hash;
    hash.feed_string("shield");
    feed_grid(hash, shield.grid);
    feed_actions(hash, shield.actions);
    hash.feed_u64(shield.out_mask);
    for (std::uint64_t mask : shield.cell_masks) hash.feed_u64(mask);
    return hash.state;
}

std::uint64_t tree_digest(const DecisionTree& tree) {
    Fnv1a hash;
    hash.feed_string("decision-tree");
    feed_grid(hash, tree.domain);
    feed_actions(hash, tree.actions);
    hash.feed_u64(tree.root);
    hash.feed_u64(tree.nodes.size());
    for (const TreeNode& node : tree.nodes) {
        hash.feed_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(node.dim)));
        hash.feed_double(node.threshold);
        hash.feed_u64(node.left);
        hash.feed_u64(node.right);
        hash.feed_u64(node.label);
    }
    return hash.state;
}

std::string format_digest(std::uint64_t digest) {
    static const char* hex = "0123456789abcdef";
    std::string text(16, '0');
    for (std::size_t i = 0; i < 16; ++i) text[15 - i] = hex[(digest >> (4 * i)) & 0xF];
    return text;
}

// ---------------------------------------------------------------------------
// Shield files
// ---------------------------------------------------------------------------

void save_shield(const ShieldGrid& shield, const ShieldProvenance& provenance,
                 const std::string& path) {
    if (shield.cell_masks.size() != shield.grid.total_cells())
        throw ValidationError("shield mask array does not match its grid");

    json cells = json::array();
    std::uint64_t i = 0;
    while (i < shield.cell_masks.size()) {
        std::uint64_t j = i;
        while (j < shield.cell_masks.size() && shield.cell_masks[j] == shield.cell_masks[i])
            ++j;
        cells.push_back(json::array({j - i, shield.cell_masks[i]}));
        i = j;
    }

    json data{{"format", "shield"},
              {"version", kShieldVersion},
              {"grid", axes_to_json(shield.grid)},
              {"actions", shield.actions},
              {"out_allowed", shield.out_mask},
              {"cells", std::move(cells)},
              {"digest", format_digest(shield_digest(shield))},
              {"provenance",
               {{"model", provenance.model},
                {"property", provenance.property},
                {"samples_per_axis", provenance.samples_per_axis},
                {"edge_shrink", provenance.edge_shrink},
                {"repeats", provenance.repeats},
                {"seed", provenance.seed},
                {"oob_mode", provenance.oob_mode},
                {"seconds", provenance.seconds}}}};
    write_text_file(path, data.dump() + "\n");
}

LoadedShield load_shield(const std::string& path) {
    json data = read_json_file(path);
    expect_format(data, path, "shield", kShieldVersion);

    LoadedShield loaded;
    ShieldGrid& shield = loaded.shield;
    shield.grid = axes_from_json(data.value("grid", json()), "'" + path + "'");
    if (!data.contains("actions") || !data["actions"].is_array() || data["actions"].empty())
        throw ValidationError("'" + path + "' has no action list");
    shield.actions = data["actions"].get<std::vector<std::string>>();
    if (shield.actions.size() > 64)
        throw ValidationError("'" + path + "' declares more than 64 actions");

    const std::uint64_t cells = shield.grid.total_cells();
    const std::uint64_t full = full_action_mask(shield.action_count());
    shield.out_mask = data.value("out_allowed", json(0)).get<std::uint64_t>();
    if (shield.out_mask > full)
        throw ValidationError("'" + path + "' OUT mask names unknown actions");

    const json& runs = data.value("cells", json());
    if (!runs.is_array()) throw ValidationError("'" + path + "' cells must be an array");
    shield.cell_masks.reserve(cells);
    for (std::size_t run = 0; run < runs.size(); ++run) {
        const json& pair = runs[run];
        std::string where = "'" + path + "' cells, run " + std::to_string(run) +
                            " (cell offset " + std::to_string(shield.cell_masks.size()) + ")";
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() ||
            !pair[1].is_number_unsigned())
            throw ValidationError(where + ": expected [count, mask]");
        std::uint64_t count = pair[0].get<std::uint64_t>();
        std::uint64_t mask = pair[1].get<std::uint64_t>();
        if (count == 0) throw ValidationError(where + ": zero-length run");
        if (mask > full) throw ValidationError(where + ": mask names unknown actions");
        if (shield.cell_masks.size() + count > cells)
            throw ValidationError(where + ": runs exceed the grid's " +
                                  std::to_string(cells) + " cells");
        shield.cell_masks.insert(shield.cell_masks.end(), count, mask);
    }
    if (shield.cell_masks.size() != cells)
        throw ValidationError("'" + path + "': runs cover " +
                              std::to_string(shield.cell_masks.size()) + " of " +
                              std::to_string(cells) + " cells");

    const json& prov = data.value("provenance", json::object());
    loaded.provenance.model = prov.value("model", "");
    loaded.provenance.property = prov.value("property", "");
    loaded.provenance.samples_per_axis = prov.value("samples_per_axis", 0u);
    loaded.provenance.edge_shrink = prov.value("edge_shrink", 0.0);
    loaded.provenance.repeats = prov.value("repeats", 0u);
    loaded.provenance.seed = prov.value("seed", std::uint64_t{0});
    loaded.provenance.oob_mode = prov.value("oob_mode", "");
    loaded.provenance.seconds = prov.value("seconds", 0.0);
    return loaded;
}

// ---------------------------------------------------------------------------
// Tree files
// ---------------------------------------------------------------------------

void save_tree(const DecisionTree& tree, const TreeProvenance& provenance,
               const std::string& path) {
    tree.validate();
    json nodes = json::array();
    for (const TreeNode& node : tree.nodes) {
        if (node.is_leaf())
            nodes.push_back(json{{"label", node.label}});
        else
            nodes.push_back(json{{"dim", node.dim},
                                 {"threshold", node.threshold},
                                 {"left", node.left},
                                 {"right", node.right}});
    }
    json data{{"format", "decision-tree"},
              {"version", kTreeVersion},
              {"domain", axes_to_json(tree.domain)},
              {"actions", tree.actions},
              {"root", tree.root},
              {"nodes", std::move(nodes)},
              {"digest", format_digest(tree_digest(tree))},
              {"provenance",
               {{"source_digest", provenance.source_digest},
                {"seed", provenance.seed},
                {"source_regions", provenance.source_regions},
                {"region_counts", provenance.region_counts},
                {"seconds", provenance.seconds}}}};
    write_text_file(path, data.dump(2) + "\n");
}

LoadedTree load_tree(const std::string& path) {
    json data = read_json_file(path);
    expect_format(data, path, "decision-tree", kTreeVersion);

    LoadedTree loaded;
    DecisionTree& tree = loaded.tree;
    tree.domain = axes_from_json(data.value("domain", json()), "'" + path + "'");
    if (!data.contains("actions") || !data["actions"].is_array() || data["actions"].empty())
        throw ValidationError("'" + path + "' has no action list");
    tree.actions = data["actions"].get<std::vector<std::string>>();
    tree.root = data.value("root", 0u);

    const json& nodes = data.value("nodes", json());
    if (!nodes.is_array() || nodes.empty())
        throw ValidationError("'" + path + "' has no nodes");
    const std::uint64_t full = full_action_mask(static_cast<std::uint32_t>(
        std::min<std::size_t>(tree.actions.size(), 64)));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const json& entry = nodes[i];
        std::string where = "'" + path + "' node " + std::to_string(i);
        TreeNode node;
        if (entry.contains("label")) {
            node.label = entry["label"].get<std::uint64_t>();
            if (node.label > full)
                throw ValidationError(where + ": label names unknown actions");
        } else {
            if (!entry.contains("dim") || !entry.contains("threshold") ||
                !entry.contains("left") || !entry.contains("right"))
                throw ValidationError(where + ": needs dim, threshold, left, right");
            node.dim = entry["dim"].get<std::int32_t>();
            node.threshold = entry["threshold"].get<double>();
            node.left = entry["left"].get<std::uint32_t>();
            node.right = entry["right"].get<std::uint32_t>();
            if (node.dim < 0) throw ValidationError(where + ": negative split axis");
        }
        tree.nodes.push_back(node);
    }
    try {
        tree.validate();
    } catch (const ValidationError& e) {
        throw ValidationError("'" + path + "': " + e.what());
    }

    const json& prov = data.value("provenance", json::object());
    loaded.provenance.source_digest = prov.value("source_digest", "");
    loaded.provenance.seed = prov.value("seed", std::uint64_t{0});
    loaded.provenance.source_regions = prov.value("source_regions", std::uint64_t{0});
    if (prov.contains("region_counts"))
        loaded.provenance.region_counts = prov["region_counts"].get<std::vector<std::uint64_t>>();
    loaded.provenance.seconds = prov.value("seconds", 0.0);
    return loaded;
}

std::string sniff_format(const std::string& path) {
    json data = read_json_file(path);
    if (!data.is_object() || !data.contains("format"))
        throw ValidationError("'" + path + "' has no format field");
    return data["format"].get<std::string>();
}

} // namespace shieldkit
