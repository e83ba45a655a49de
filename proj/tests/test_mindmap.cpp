#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "structkit/mindmap.hpp"
#include "structkit/rng.hpp"
#include "structkit/taxonomy.hpp"

using namespace structkit;

namespace {

LabelTree leaf(std::string label, std::string chunk) {
    LabelTree t;
    t.label = std::move(label);
    t.chunk_ref = std::move(chunk);
    return t;
}

LabelTree node(std::string label, std::vector<LabelTree> kids) {
    LabelTree t;
    t.label = std::move(label);
    t.children = std::move(kids);
    return t;
}

KnowledgeStructure sample_structure() {
    return freeze_structure(
        node("Medicine",
             {node("Circulation", {node("Heart", {leaf("Chambers", "c1"), leaf("Valves", "c2")}),
                                   node("Vessels", {leaf("Arteries", "c3")})}),
              node("Respiration", {node("Lungs", {leaf("Alveoli", "c4")})})}),
        "mm-test");
}

}  // namespace

TEST_CASE("full mindmap renders every node once") {
    auto s = sample_structure();
    auto mm = render_mindmap(s, MindmapScope::full);
    CHECK(mm.scope == MindmapScope::full);
    CHECK(mm.structure_id == "mm-test");
    CHECK(mm.text ==
          "- Medicine\n"
          "  - Circulation\n"
          "    - Heart\n"
          "      - Chambers\n"
          "      - Valves\n"
          "    - Vessels\n"
          "      - Arteries\n"
          "  - Respiration\n"
          "    - Lungs\n"
          "      - Alveoli\n");
}

TEST_CASE("path-local mindmap keeps ancestors, sibling labels, and the star") {
    auto s = sample_structure();
    const std::string target = s.chunk_index.at("c1");  // Chambers
    auto mm = render_mindmap(s, MindmapScope::path_local, target);
    CHECK(mm.text ==
          "- Medicine\n"
          "  - Circulation\n"
          "    - Heart\n"
          "      - Chambers (*)\n"
          "      - Valves\n"
          "    - Vessels\n"
          "  - Respiration\n");
    // siblings off the path show no descendants
    CHECK(mm.text.find("Alveoli") == std::string::npos);
    CHECK(mm.text.find("Arteries") == std::string::npos);
}

TEST_CASE("path-local scope demands a valid leaf") {
    auto s = sample_structure();
    CHECK_THROWS_AS(render_mindmap(s, MindmapScope::path_local), UnknownLeaf);
    CHECK_THROWS_AS(render_mindmap(s, MindmapScope::path_local, std::string("n99999")),
                    UnknownLeaf);
    CHECK_THROWS_AS(render_mindmap(s, MindmapScope::path_local, s.root), UnknownLeaf);
}

TEST_CASE("bundle mindmap stars every target leaf") {
    auto s = sample_structure();
    auto mm = render_bundle_mindmap(s, {s.chunk_index.at("c1"), s.chunk_index.at("c4")});
    CHECK(mm.text.find("Chambers (*)") != std::string::npos);
    CHECK(mm.text.find("Alveoli (*)") != std::string::npos);
    CHECK(mm.text.find("Valves\n") != std::string::npos);    // sibling context
    CHECK(mm.text.find("Arteries") == std::string::npos);    // off both paths
}

TEST_CASE("parse round trip is byte-identical") {
    auto s = sample_structure();
    for (const auto& lid : s.leaves()) {
        auto mm = render_mindmap(s, MindmapScope::path_local, lid);
        auto tree = parse_mindmap(mm.text);
        CHECK(render_tree(tree) == mm.text);
    }
    auto full = render_mindmap(s, MindmapScope::full);
    CHECK(render_tree(parse_mindmap(full.text)) == full.text);
}

TEST_CASE("parse keeps the marked flag") {
    auto tree = parse_mindmap("- root\n  - child (*)\n");
    REQUIRE(tree.roots.size() == 1);
    REQUIRE(tree.roots[0].children.size() == 1);
    CHECK(tree.roots[0].children[0].marked);
    CHECK(tree.roots[0].children[0].label == "child");
    CHECK(!tree.roots[0].marked);
}

TEST_CASE("lenient parse: prose skipped, first block only, nesting clamped") {
    auto tree = parse_mindmap(
        "Sure! Here is the mindmap you asked for:\n"
        "- A\n"
        "      - over indented\n"
        "- B\n"
        "\n"
        "- second block is ignored\n");
    REQUIRE(tree.roots.size() == 2);
    CHECK(tree.roots[0].label == "A");
    REQUIRE(tree.roots[0].children.size() == 1);  // clamped to depth 1
    CHECK(tree.roots[0].children[0].label == "over indented");
    CHECK(tree.roots[1].label == "B");
    CHECK(parse_mindmap("no bullets here").empty());
    CHECK(parse_mindmap("").empty());
}

TEST_CASE("flatten_labels is pre-order") {
    auto s = sample_structure();
    auto labels = flatten_labels(parse_mindmap(render_mindmap(s, MindmapScope::full).text));
    REQUIRE(labels.size() == s.nodes.size());
    CHECK(labels.front() == "Medicine");
    CHECK(labels.back() == "Alveoli");
}

TEST_CASE("default template pool shape") {
    auto pool = default_template_pool();
    REQUIRE(pool.size() == 20);
    std::set<std::string> preambles, bridges;
    for (const auto& t : pool) {
        // exactly one placeholder per preamble
        auto first = t.preamble.find("{MINDMAP}");
        REQUIRE(first != std::string::npos);
        CHECK(t.preamble.find("{MINDMAP}", first + 1) == std::string::npos);
        CHECK(!t.bridge.empty());
        preambles.insert(t.preamble);
        bridges.insert(t.bridge);
    }
    CHECK(preambles.size() == 20);
    CHECK(bridges.size() == 20);
    // the pool serializes and reloads unchanged
    auto reloaded = load_template_pool(template_pool_to_json(pool));
    CHECK(template_pool_hash(reloaded) == template_pool_hash(pool));
}

TEST_CASE("load_template_pool rejects malformed entries") {
    CHECK_THROWS_AS(load_template_pool(nlohmann::json::array()), Error);
    nlohmann::json bad = nlohmann::json::array();
    bad.push_back({{"id", 0}, {"preamble", "no placeholder"}, {"bridge", "b"}});
    CHECK_THROWS_AS(load_template_pool(bad), Error);
}

TEST_CASE("apply_template embeds the mindmap verbatim") {
    auto s = sample_structure();
    auto mm = render_mindmap(s, MindmapScope::path_local, s.chunk_index.at("c2"));
    auto pool = default_template_pool();
    Rng rng(1);
    auto framed = apply_template(mm, pool, rng);
    CHECK(framed.condition_text.find(mm.text) != std::string::npos);
    CHECK(framed.template_id >= 0);
    CHECK(framed.template_id < 20);
    const auto& t = pool[static_cast<std::size_t>(framed.template_id)];
    // bridge follows the substituted preamble
    CHECK(framed.condition_text.find(t.bridge + "\n") != std::string::npos);
}

TEST_CASE("template draws are uniform: 10000 draws, each id 500 +/- 100") {
    auto s = sample_structure();
    auto mm = render_mindmap(s, MindmapScope::full);
    auto pool = default_template_pool();
    Rng rng(2024);
    std::map<int, int> freq;
    for (int i = 0; i < 10000; ++i) ++freq[apply_template(mm, pool, rng).template_id];
    REQUIRE(freq.size() == 20);
    for (const auto& [id, n] : freq) {
        CHECK(n >= 400);
        CHECK(n <= 600);
    }
}
