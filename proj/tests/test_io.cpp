#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "shieldkit/caap.hpp"
#include "shieldkit/errors.hpp"
#include "shieldkit/render_svg.hpp"
#include "shieldkit/shield_io.hpp"

using namespace shieldkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("shieldkit-test-" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

ShieldGrid sample_shield() {
    ShieldGrid shield;
    shield.grid.axes = {{"x", -1.0, 1.0, 4, false}, {"m", 0.0, 3.0, 3, true}};
    shield.actions = {"up", "down", "wait"};
    shield.cell_masks = {7, 7, 3, 3, 1, 1, 0, 0, 5, 5, 5, 2};
    shield.out_mask = 7;
    return shield;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    nlohmann::json data;
    in >> data;
    return data;
}

void write_json(const std::string& path, const nlohmann::json& data) {
    std::ofstream out(path);
    out << data.dump();
}

} // namespace

TEST_CASE("shield files round trip") {
    TempDir dir;
    ShieldGrid shield = sample_shield();
    ShieldProvenance prov;
    prov.model = "toy";
    prov.property = "stay-put";
    prov.samples_per_axis = 3;
    prov.repeats = 2;
    prov.seed = 42;
    prov.oob_mode = "always-safe";
    prov.seconds = 0.25;

    std::string path = dir.file("shield.json");
    save_shield(shield, prov, path);
    LoadedShield loaded = load_shield(path);

    CHECK(loaded.shield.grid == shield.grid);
    CHECK(loaded.shield.actions == shield.actions);
    CHECK(loaded.shield.cell_masks == shield.cell_masks);
    CHECK(loaded.shield.out_mask == shield.out_mask);
    CHECK(shield_digest(loaded.shield) == shield_digest(shield));
    CHECK(loaded.provenance.model == "toy");
    CHECK(loaded.provenance.property == "stay-put");
    CHECK(loaded.provenance.samples_per_axis == 3);
    CHECK(loaded.provenance.repeats == 2);
    CHECK(loaded.provenance.seed == 42);
    CHECK(loaded.provenance.oob_mode == "always-safe");

    CHECK(sniff_format(path) == "shield");
}

TEST_CASE("tree files round trip") {
    TempDir dir;
    ShieldGrid shield = sample_shield();
    CompactResult result = compact(shield, {});

    TreeProvenance prov;
    prov.source_digest = format_digest(shield_digest(shield));
    prov.seed = 0;
    prov.source_regions = result.source_regions;
    prov.region_counts = result.region_counts;

    std::string path = dir.file("tree.json");
    save_tree(result.tree, prov, path);
    LoadedTree loaded = load_tree(path);

    CHECK(tree_digest(loaded.tree) == tree_digest(result.tree));
    CHECK(loaded.tree.domain == result.tree.domain);
    CHECK(loaded.tree.actions == result.tree.actions);
    CHECK(loaded.provenance.source_digest == prov.source_digest);
    CHECK(loaded.provenance.source_regions == prov.source_regions);
    CHECK(loaded.provenance.region_counts == prov.region_counts);
    CHECK(sniff_format(path) == "decision-tree");

    // The loaded tree answers exactly like the saved one.
    Partitioning source = partitioning_of(shield);
    CHECK(count_label_mismatches(source, loaded.tree) == 0);
}

TEST_CASE("malformed shield files are rejected with context") {
    TempDir dir;
    ShieldGrid shield = sample_shield();
    std::string path = dir.file("shield.json");
    save_shield(shield, {}, path);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_shield(dir.file("nope.json")), ValidationError);
    }
    SUBCASE("not json") {
        std::ofstream(dir.file("junk.json")) << "not json at all {";
        CHECK_THROWS_AS(load_shield(dir.file("junk.json")), ValidationError);
    }
    SUBCASE("wrong format field") {
        auto data = read_json(path);
        data["format"] = "pancake";
        write_json(path, data);
        CHECK_THROWS_AS(load_shield(path), ValidationError);
    }
    SUBCASE("RLE coverage mismatch names the run") {
        auto data = read_json(path);
        data["cells"][0][0] = data["cells"][0][0].get<std::uint64_t>() + 1;
        write_json(path, data);
        try {
            load_shield(path);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("run") != std::string::npos);
        }
    }
    SUBCASE("mask beyond the action count") {
        auto data = read_json(path);
        data["cells"] = nlohmann::json::array({nlohmann::json::array({12, 255})});
        write_json(path, data);
        CHECK_THROWS_AS(load_shield(path), ValidationError);
    }
    SUBCASE("sniffing garbage") {
        std::ofstream(dir.file("junk.json")) << "[1,2,3]";
        CHECK_THROWS_AS(sniff_format(dir.file("junk.json")), ValidationError);
    }
}

TEST_CASE("malformed tree files are rejected") {
    TempDir dir;
    ShieldGrid shield = sample_shield();
    CompactResult result = compact(shield, {});
    std::string path = dir.file("tree.json");
    save_tree(result.tree, {}, path);

    SUBCASE("dangling child index") {
        auto data = read_json(path);
        // Find an inner node and point its child out of range.
        for (auto& node : data["nodes"]) {
            if (node.contains("dim")) {
                node["left"] = 100000;
                break;
            }
        }
        write_json(path, data);
        CHECK_THROWS_AS(load_tree(path), ValidationError);
    }
    SUBCASE("loading a shield as a tree") {
        std::string shield_path = dir.file("shield.json");
        save_shield(shield, {}, shield_path);
        CHECK_THROWS_AS(load_tree(shield_path), ValidationError);
    }
}

TEST_CASE("digests distinguish different artifacts") {
    ShieldGrid a = sample_shield();
    ShieldGrid b = sample_shield();
    CHECK(shield_digest(a) == shield_digest(b));
    b.cell_masks[5] ^= 1;
    CHECK(shield_digest(a) != shield_digest(b));

    ShieldGrid c = sample_shield();
    c.out_mask = 0;
    CHECK(shield_digest(a) != shield_digest(c));

    CHECK(format_digest(0) == "0000000000000000");
    CHECK(format_digest(0xdeadbeef12345678ull) == "deadbeef12345678");
}

TEST_CASE("svg rendering") {
    ShieldGrid shield = sample_shield();

    std::string svg = render_shield_svg(shield, "x", "m", {});
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("x") != std::string::npos);

    // A tree equivalent to the shield renders the identical document.
    CompactResult result = compact(shield, {});
    std::string tree_svg = render_tree_svg(result.tree, "x", "m", {});
    CHECK(tree_svg == svg);

    // Axis named twice, unknown axis, missing pin: all rejected.
    CHECK_THROWS_AS(render_shield_svg(shield, "x", "x", {}), ValidationError);
    CHECK_THROWS_AS(render_shield_svg(shield, "x", "nope", {}), ValidationError);
    CHECK_THROWS_AS(render_shield_svg(shield, "x", "m", {{"x", 0.0}}), ValidationError);

    ShieldGrid three = shield;
    three.grid.axes.push_back({"z", 0.0, 1.0, 2, false});
    three.cell_masks.resize(24, 1);
    CHECK_THROWS_AS(render_shield_svg(three, "x", "m", {}), ValidationError);      // z unpinned
    std::string pinned = render_shield_svg(three, "x", "m", {{"z", 0.5}});
    CHECK(pinned.find("<svg") != std::string::npos);
    CHECK_THROWS_AS(render_shield_svg(three, "x", "m", {{"z", 1.5}}), ValidationError); // out of range
}
