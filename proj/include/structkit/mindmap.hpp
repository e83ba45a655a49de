#pragma once

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structkit/errors.hpp"
#include "structkit/rng.hpp"
#include "structkit/taxonomy.hpp"
#include "structkit/text.hpp"

namespace structkit {

enum class MindmapScope { full, path_local };

struct MindmapText {
    std::string text;
    std::string structure_id;
    MindmapScope scope = MindmapScope::full;
};

// Parsed bullet outline; marked nodes carry the " (*)" target suffix.
struct MindmapNode {
    std::string label;
    bool marked = false;
    std::vector<MindmapNode> children;
};

struct MindmapTree {
    std::vector<MindmapNode> roots;
    bool empty() const { return roots.empty(); }
};

namespace detail {

inline void render_node(const MindmapNode& n, std::size_t depth, std::string& out) {
    out.append(depth * 2, ' ');
    out += "- ";
    out += n.label;
    if (n.marked) out += " (*)";
    out += '\n';
    for (const auto& c : n.children) render_node(c, depth + 1, out);
}

}  // namespace detail

inline std::string render_tree(const MindmapTree& tree) {
    std::string out;
    for (const auto& r : tree.roots) detail::render_node(r, 0, out);
    return out;
}

// Canonical rendering: one node per line, "- " bullets, two spaces of
// indent per depth. path_local renders the target leaf's ancestors, each
// ancestor's immediate children as sibling context (labels only), and the
// target leaf marked with a trailing " (*)".
inline MindmapText render_mindmap(const KnowledgeStructure& s, MindmapScope scope,
                                  const std::optional<std::string>& target_leaf = std::nullopt) {
    MindmapText out;
    out.structure_id = s.structure_id;
    out.scope = scope;
    if (scope == MindmapScope::full) {
        std::function<void(const std::string&, std::size_t)> emit = [&](const std::string& id,
                                                                        std::size_t depth) {
            out.text.append(depth * 2, ' ');
            out.text += "- " + s.node(id).label + "\n";
            for (const auto& c : s.node(id).children) emit(c, depth + 1);
        };
        emit(s.root, 0);
        return out;
    }
    if (!target_leaf) throw UnknownLeaf("path_local scope requires a target leaf");
    if (!s.nodes.count(*target_leaf) || !s.is_leaf(*target_leaf))
        throw UnknownLeaf(*target_leaf);
    const KnowledgePath path = s.path_to(*target_leaf);
    const std::set<std::string> on_path(path.node_ids.begin(), path.node_ids.end());
    std::function<void(const std::string&, std::size_t)> emit = [&](const std::string& id,
                                                                    std::size_t depth) {
        out.text.append(depth * 2, ' ');
        out.text += "- " + s.node(id).label;
        if (id == *target_leaf) out.text += " (*)";
        out.text += "\n";
        if (!on_path.count(id) || s.is_leaf(id)) return;  // siblings stay labels only
        for (const auto& c : s.node(id).children) emit(c, depth + 1);
    };
    emit(s.root, 0);
    return out;
}

// Path-local view covering several target leaves at once (multi-branch
// bundles): union of their paths, sibling context at every path node.
inline MindmapText render_bundle_mindmap(const KnowledgeStructure& s,
                                         const std::vector<std::string>& target_leaves) {
    MindmapText out;
    out.structure_id = s.structure_id;
    out.scope = MindmapScope::path_local;
    std::set<std::string> on_path;
    std::set<std::string> targets(target_leaves.begin(), target_leaves.end());
    for (const auto& leaf : target_leaves) {
        if (!s.nodes.count(leaf) || !s.is_leaf(leaf)) throw UnknownLeaf(leaf);
        for (const auto& id : s.path_to(leaf).node_ids) on_path.insert(id);
    }
    std::function<void(const std::string&, std::size_t)> emit = [&](const std::string& id,
                                                                    std::size_t depth) {
        out.text.append(depth * 2, ' ');
        out.text += "- " + s.node(id).label;
        if (targets.count(id)) out.text += " (*)";
        out.text += "\n";
        if (!on_path.count(id) || s.is_leaf(id)) return;
        for (const auto& c : s.node(id).children) emit(c, depth + 1);
    };
    emit(s.root, 0);
    return out;
}

// Lenient parse of the first contiguous bullet block: indentation divided
// by two gives depth, over-indented lines attach to the nearest shallower
// ancestor, surrounding prose is ignored. Empty input gives an empty tree.
inline MindmapTree parse_mindmap(const std::string& text) {
    MindmapTree tree;
    std::vector<MindmapNode*> stack;
    bool in_block = false;
    for (const auto& raw : split_lines(text)) {
        std::size_t indent = 0;
        while (indent < raw.size() && raw[indent] == ' ') ++indent;
        const bool bullet = raw.compare(indent, 2, "- ") == 0 && raw.size() > indent + 2;
        if (!bullet) {
            if (in_block) break;  // first block only
            continue;
        }
        in_block = true;
        std::size_t depth = indent / 2;
        if (depth > stack.size()) depth = stack.size();  // clamp malformed nesting
        std::string label = trim(raw.substr(indent + 2));
        MindmapNode node;
        if (label.size() >= 4 && label.compare(label.size() - 4, 4, " (*)") == 0) {
            node.marked = true;
            label = trim(label.substr(0, label.size() - 4));
        }
        node.label = label;
        if (node.label.empty()) continue;
        stack.resize(depth);
        MindmapNode* placed;
        if (depth == 0) {
            tree.roots.push_back(std::move(node));
            placed = &tree.roots.back();
        } else {
            auto& siblings = stack[depth - 1]->children;
            siblings.push_back(std::move(node));
            placed = &siblings.back();
        }
        stack.push_back(placed);
    }
    return tree;
}

inline void flatten_labels(const MindmapNode& n, std::vector<std::string>& out) {
    out.push_back(n.label);
    for (const auto& c : n.children) flatten_labels(c, out);
}

inline std::vector<std::string> flatten_labels(const MindmapTree& t) {
    std::vector<std::string> out;
    for (const auto& r : t.roots) flatten_labels(r, out);
    return out;
}

// ---- framing templates ------------------------------------------------------

struct FramingTemplate {
    int id = 0;
    std::string preamble;  // contains exactly one {MINDMAP}
    std::string bridge;
};

inline std::vector<FramingTemplate> default_template_pool() {
    static const char* kPreambles[20] = {
        "Here is the knowledge outline this passage belongs to:\n{MINDMAP}",
        "Consider the following map of the subject:\n{MINDMAP}",
        "The material below sits at the starred position of this hierarchy:\n{MINDMAP}",
        "Study this outline of the field before reading on:\n{MINDMAP}",
        "Where does the next passage fit? See the marked node:\n{MINDMAP}",
        "A bird's-eye view of the topic:\n{MINDMAP}",
        "The curriculum places this section as follows:\n{MINDMAP}",
        "Orient yourself with this structure first:\n{MINDMAP}",
        "This outline shows the chapter and section context:\n{MINDMAP}",
        "Knowledge map for the upcoming content:\n{MINDMAP}",
        "The passage you are about to read is organized under:\n{MINDMAP}",
        "Locate the starred knowledge point in this tree:\n{MINDMAP}",
        "As a table of contents fragment, the context is:\n{MINDMAP}",
        "Think of the domain as this tree; we now zoom into one leaf:\n{MINDMAP}",
        "Hierarchical position of the following text:\n{MINDMAP}",
        "Before the details, recall the surrounding structure:\n{MINDMAP}",
        "This is how the topic nests inside the broader subject:\n{MINDMAP}",
        "Use this outline to anchor the passage in memory:\n{MINDMAP}",
        "The knowledge point discussed next lives here:\n{MINDMAP}",
        "Map of the territory, with our destination starred:\n{MINDMAP}",
    };
    static const char* kBridges[20] = {
        "With that context, the content reads:",
        "Now the passage itself:",
        "The corresponding text is:",
        "Here is the material for the marked node:",
        "The detailed content follows:",
        "Diving into the starred point:",
        "The section reads as follows:",
        "Content of this knowledge point:",
        "Now for the substance:",
        "The passage under this heading is:",
        "What the leaf actually says:",
        "Full text of the marked entry:",
        "Proceeding to the content:",
        "The body of this section:",
        "Reading the knowledge point itself:",
        "Its textual content:",
        "The underlying passage:",
        "Here is what that node contains:",
        "Unfolding the starred node:",
        "The material in question:",
    };
    std::vector<FramingTemplate> pool;
    pool.reserve(20);
    for (int i = 0; i < 20; ++i) pool.push_back({i, kPreambles[i], kBridges[i]});
    return pool;
}

inline std::vector<FramingTemplate> load_template_pool(const nlohmann::json& j) {
    std::vector<FramingTemplate> pool;
    for (const auto& jt : j) {
        FramingTemplate t;
        t.id = jt.at("id").get<int>();
        t.preamble = jt.at("preamble").get<std::string>();
        t.bridge = jt.at("bridge").get<std::string>();
        if (t.preamble.find("{MINDMAP}") == std::string::npos || t.bridge.empty())
            throw Error("invalid framing template id " + std::to_string(t.id));
        pool.push_back(std::move(t));
    }
    if (pool.empty()) throw Error("empty template pool");
    return pool;
}

inline nlohmann::json template_pool_to_json(const std::vector<FramingTemplate>& pool) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : pool)
        j.push_back({{"id", t.id}, {"preamble", t.preamble}, {"bridge", t.bridge}});
    return j;
}

inline std::string template_pool_hash(const std::vector<FramingTemplate>& pool) {
    return fnv1a_hex(template_pool_to_json(pool).dump());
}

struct FramedCondition {
    std::string condition_text;
    int template_id = 0;
};

// Uniform template draw; the mindmap text appears verbatim inside the
// condition, followed by the bridge line.
inline FramedCondition apply_template(const MindmapText& mindmap,
                                      const std::vector<FramingTemplate>& pool, Rng& rng) {
    if (pool.empty()) throw Error("empty template pool");
    const auto& t = pool[static_cast<std::size_t>(rng.bounded(pool.size()))];
    std::string text = t.preamble;
    const auto at = text.find("{MINDMAP}");
    text.replace(at, 9, mindmap.text);
    text += "\n" + t.bridge + "\n";
    return {std::move(text), t.id};
}

}  // namespace structkit
