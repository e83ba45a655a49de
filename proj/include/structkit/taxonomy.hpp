#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structkit/corpus.hpp"
#include "structkit/errors.hpp"
#include "structkit/llm_client.hpp"
#include "structkit/rng.hpp"
#include "structkit/text.hpp"

namespace structkit {

enum class NodeLevel { domain, chapter, section, point };

inline std::string_view node_level_name(NodeLevel l) {
    switch (l) {
        case NodeLevel::domain: return "domain";
        case NodeLevel::chapter: return "chapter";
        case NodeLevel::section: return "section";
        case NodeLevel::point: return "point";
    }
    return "point";
}

inline NodeLevel node_level_from_name(std::string_view n) {
    if (n == "domain") return NodeLevel::domain;
    if (n == "chapter") return NodeLevel::chapter;
    if (n == "section") return NodeLevel::section;
    return NodeLevel::point;
}

struct StructureNode {
    std::string id;
    std::string label;
    NodeLevel level = NodeLevel::point;
    std::vector<std::string> children;
    std::optional<std::string> chunk_ref;  // present iff leaf
};

struct KnowledgePath {
    std::vector<std::string> node_ids;  // root .. leaf
};

struct PathBundle {
    std::string branch_point;
    std::vector<KnowledgePath> branches;
    bool fallback = false;  // b >= 2 requested but no valid branch point
};

// Intermediate mutable tree used by the builders before node ids and
// levels are assigned.
struct LabelTree {
    std::string label;
    std::optional<std::string> chunk_ref;
    std::vector<LabelTree> children;
    bool is_leaf() const { return children.empty(); }
};

class KnowledgeStructure {
public:
    std::string structure_id;
    std::string root;
    std::map<std::string, StructureNode> nodes;
    std::map<std::string, std::string> chunk_index;  // chunk id -> leaf id
    std::map<std::string, std::string> parent;       // child id -> parent id
    bool merged = false;                             // multi-book under a synthesized root

    const StructureNode& node(const std::string& id) const { return nodes.at(id); }

    bool is_leaf(const std::string& id) const { return nodes.at(id).children.empty(); }

    std::size_t leaf_count() const { return chunk_index.size(); }

    std::vector<std::string> leaves() const {  // pre-order
        std::vector<std::string> out;
        collect_leaves(root, out);
        return out;
    }

    void collect_leaves(const std::string& id, std::vector<std::string>& out) const {
        const auto& n = nodes.at(id);
        if (n.children.empty()) { out.push_back(id); return; }
        for (const auto& c : n.children) collect_leaves(c, out);
    }

    KnowledgePath path_to(const std::string& leaf_id) const {
        KnowledgePath p;
        std::string cur = leaf_id;
        while (true) {
            p.node_ids.push_back(cur);
            auto it = parent.find(cur);
            if (it == parent.end()) break;
            cur = it->second;
        }
        std::reverse(p.node_ids.begin(), p.node_ids.end());
        return p;
    }

    // Structural validity in one pass; returns problems, empty when valid.
    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (!nodes.count(root)) { problems.push_back("root missing from node map"); return problems; }
        std::map<std::string, int> seen_parent;
        std::size_t reached = 0;
        std::vector<std::string> stack{root};
        std::set<std::string> visited;
        while (!stack.empty()) {
            const std::string id = stack.back();
            stack.pop_back();
            if (!visited.insert(id).second) { problems.push_back("cycle or duplicate reach at " + id); continue; }
            ++reached;
            const auto& n = nodes.at(id);
            if (n.label.empty()) problems.push_back("empty label at " + id);
            if (n.children.empty()) {
                if (!n.chunk_ref) problems.push_back("leaf without chunk_ref: " + id);
                if (n.level != NodeLevel::point) problems.push_back("leaf not point-level: " + id);
            } else {
                if (n.chunk_ref) problems.push_back("internal node with chunk_ref: " + id);
            }
            for (const auto& c : n.children) {
                if (!nodes.count(c)) { problems.push_back("dangling child " + c); continue; }
                if (++seen_parent[c] > 1) problems.push_back("multiple parents for " + c);
                auto pit = parent.find(c);
                if (pit == parent.end() || pit->second != id)
                    problems.push_back("parent map disagrees for " + c);
                stack.push_back(c);
            }
        }
        if (reached != nodes.size()) problems.push_back("unreachable nodes present");
        std::set<std::string> chunk_refs;
        for (const auto& [id, n] : nodes) {
            if (n.children.empty() && n.chunk_ref) {
                if (!chunk_refs.insert(*n.chunk_ref).second)
                    problems.push_back("chunk referenced by two leaves: " + *n.chunk_ref);
                auto it = chunk_index.find(*n.chunk_ref);
                if (it == chunk_index.end() || it->second != id)
                    problems.push_back("chunk_index misses leaf " + id);
            }
        }
        if (chunk_refs.size() != chunk_index.size())
            problems.push_back("chunk_index size mismatch");
        return problems;
    }
};

struct StructureStats {
    std::size_t books = 0, chapters = 0, sections = 0, points = 0;
};

inline StructureStats structure_stats(const KnowledgeStructure& s) {
    StructureStats st;
    std::size_t domains = 0;
    for (const auto& [id, n] : s.nodes) {
        switch (n.level) {
            case NodeLevel::domain: ++domains; break;
            case NodeLevel::chapter: ++st.chapters; break;
            case NodeLevel::section: ++st.sections; break;
            case NodeLevel::point: ++st.points; break;
        }
    }
    st.books = domains > 1 ? domains - 1 : 1;  // merged roots sit above the books
    return st;
}

namespace detail {

inline std::string normalize_label(std::string_view s) {
    std::string out;
    bool space = false;
    std::size_t i = 0;
    while (i < s.size()) {
        char32_t cp = utf8::decode(s, i);
        if (cp == ' ' || cp == '\t') { space = true; continue; }
        if (space && !out.empty()) out += ' ';
        space = false;
        utf8::encode(ascii_lower(cp), out);
    }
    return out;
}

// Enforces leaves at exactly depth 3 below the given root: shallow leaves
// gain duplicate-label pass-through ancestors; subtrees deeper than the
// point level fold their interior labels into the leaf label.
inline void collect_folded(const LabelTree& t, const std::string& prefix,
                           std::vector<LabelTree>& out) {
    const std::string label = prefix.empty() ? t.label : prefix + " — " + t.label;
    if (t.is_leaf()) {
        LabelTree leaf;
        leaf.label = label;
        leaf.chunk_ref = t.chunk_ref;
        out.push_back(std::move(leaf));
        return;
    }
    for (const auto& c : t.children) collect_folded(c, label, out);
}

inline void normalize_depth(LabelTree& node, int depth) {
    if (depth == 2) {
        std::vector<LabelTree> flat;
        for (auto& c : node.children) {
            if (c.is_leaf()) flat.push_back(std::move(c));
            else collect_folded(c, "", flat);
        }
        node.children = std::move(flat);
        return;
    }
    for (auto& c : node.children) {
        if (c.is_leaf()) {
            // wrap to push the leaf down to depth 3
            LabelTree wrapped = std::move(c);
            for (int d = depth + 1; d < 3; ++d) {
                LabelTree mid;
                mid.label = wrapped.label;
                mid.children.push_back(std::move(wrapped));
                wrapped = std::move(mid);
            }
            c = std::move(wrapped);
        } else {
            normalize_depth(c, depth + 1);
        }
    }
}

}  // namespace detail

// Freezes a normalized LabelTree into an immutable structure with
// deterministic pre-order node ids and depth-derived levels.
inline KnowledgeStructure freeze_structure(LabelTree root_tree, std::string structure_id,
                                           bool merged = false) {
    detail::normalize_depth(root_tree, 0);
    KnowledgeStructure s;
    s.structure_id = std::move(structure_id);
    s.merged = merged;
    std::size_t counter = 0;
    auto next_id = [&counter]() {
        std::ostringstream ss;
        ss << "n" << std::setw(5) << std::setfill('0') << counter++;
        return ss.str();
    };
    std::function<std::string(const LabelTree&, const std::string&, int)> emit =
        [&](const LabelTree& t, const std::string& parent_id, int depth) -> std::string {
        StructureNode n;
        n.id = next_id();
        n.label = t.label;
        const int book_shift = merged ? 1 : 0;
        if (depth == 0 || (merged && depth == 1)) n.level = NodeLevel::domain;
        else if (depth == 1 + book_shift) n.level = NodeLevel::chapter;
        else if (depth == 2 + book_shift) n.level = NodeLevel::section;
        else n.level = NodeLevel::point;
        if (t.is_leaf()) {
            n.level = NodeLevel::point;
            n.chunk_ref = t.chunk_ref;
            if (n.chunk_ref) s.chunk_index[*n.chunk_ref] = n.id;
        }
        const std::string id = n.id;
        if (!parent_id.empty()) s.parent[id] = parent_id;
        s.nodes[id] = std::move(n);
        for (const auto& c : t.children) {
            const std::string cid = emit(c, id, depth + 1);
            s.nodes[id].children.push_back(cid);
        }
        return id;
    };
    s.root = emit(root_tree, "", 0);
    return s;
}

// Merges per-book structures as siblings under one synthesized domain root.
inline KnowledgeStructure merge_structures(const std::vector<LabelTree>& books,
                                           const std::string& domain_label,
                                           const std::string& structure_id) {
    LabelTree root;
    root.label = domain_label;
    root.children = books;
    for (auto& book : root.children) detail::normalize_depth(book, 0);
    KnowledgeStructure s;
    // each book is depth-normalized at its own root; normalizing from the
    // merged root would fold a level, so freeze manually.
    s.structure_id = structure_id;
    s.merged = true;
    std::size_t counter = 0;
    std::function<std::string(const LabelTree&, const std::string&, int)> emit =
        [&](const LabelTree& t, const std::string& parent_id, int depth) -> std::string {
        StructureNode n;
        std::ostringstream ss;
        ss << "n" << std::setw(5) << std::setfill('0') << counter++;
        n.id = ss.str();
        n.label = t.label;
        if (depth <= 1) n.level = NodeLevel::domain;
        else if (depth == 2) n.level = NodeLevel::chapter;
        else if (depth == 3) n.level = NodeLevel::section;
        else n.level = NodeLevel::point;
        if (t.is_leaf()) {
            n.level = NodeLevel::point;
            n.chunk_ref = t.chunk_ref;
            if (n.chunk_ref) s.chunk_index[*n.chunk_ref] = n.id;
        }
        const std::string id = n.id;
        if (!parent_id.empty()) s.parent[id] = parent_id;
        s.nodes[id] = std::move(n);
        for (const auto& c : t.children) {
            const std::string cid = emit(c, id, depth + 1);
            s.nodes[id].children.push_back(cid);
        }
        return id;
    };
    s.root = emit(root, "", 0);
    return s;
}

// ---- numbered-outline wire format ----------------------------------------

// Parses "N. label" / "  N.M label" / "    N.M.K label [<- chunk:<id>]"
// lines (two spaces of indent per level) into a forest. Validates that the
// expected titles appear exactly once each as leaf labels
// (case-insensitive, whitespace-normalized).
inline std::vector<LabelTree> parse_structure_response(
    const std::string& text, const std::vector<std::string>& expected_titles) {
    std::vector<LabelTree> forest;
    std::vector<LabelTree*> stack;  // stack[d] = open node at depth d
    std::size_t line_no = 0;
    for (const auto& raw : split_lines(text)) {
        ++line_no;
        if (trim(raw).empty()) continue;
        std::size_t indent = 0;
        while (indent < raw.size() && raw[indent] == ' ') ++indent;
        if (indent % 2 != 0)
            throw StructureParseError("odd indentation", line_no);
        const std::size_t depth = indent / 2;
        std::string rest = raw.substr(indent);
        // numbering prefix: digits separated by dots, optional trailing dot
        std::size_t p = 0;
        bool saw_digit = false;
        while (p < rest.size() && (std::isdigit(static_cast<unsigned char>(rest[p])) || rest[p] == '.')) {
            if (std::isdigit(static_cast<unsigned char>(rest[p]))) saw_digit = true;
            ++p;
        }
        if (!saw_digit || p >= rest.size() || rest[p] != ' ')
            throw StructureParseError("missing numbered prefix", line_no);
        std::string label = trim(rest.substr(p));
        std::optional<std::string> chunk_ref;
        if (auto at = label.rfind(" <- chunk:"); at != std::string::npos) {
            chunk_ref = trim(label.substr(at + 10));
            label = trim(label.substr(0, at));
        }
        if (label.empty()) throw StructureParseError("empty label", line_no);
        if (depth > stack.size())
            throw StructureParseError("indentation jumps more than one level", line_no);
        stack.resize(depth);
        LabelTree node;
        node.label = label;
        node.chunk_ref = chunk_ref;
        LabelTree* placed;
        if (depth == 0) {
            forest.push_back(std::move(node));
            placed = &forest.back();
        } else {
            auto& parent_children = stack[depth - 1]->children;
            parent_children.push_back(std::move(node));
            placed = &parent_children.back();
        }
        stack.push_back(placed);
    }
    // coverage check over leaf labels
    std::map<std::string, long> want;
    for (const auto& t : expected_titles) ++want[detail::normalize_label(t)];
    std::function<void(const LabelTree&)> walk = [&](const LabelTree& t) {
        if (t.is_leaf()) {
            const std::string key = detail::normalize_label(t.label);
            auto it = want.find(key);
            if (it == want.end() || it->second == 0) throw DuplicateTitle(t.label);
            --it->second;
            return;
        }
        for (const auto& c : t.children) walk(c);
    };
    for (const auto& t : forest) walk(t);
    for (const auto& [key, n] : want)
        if (n > 0) throw MissingTitle(key);
    return forest;
}

inline std::string build_structure_prompt(const std::vector<std::string>& titles) {
    std::ostringstream p;
    p << "You are given the ordered list of section titles from a domain "
         "corpus. Organize them into a knowledge hierarchy of chapters and "
         "sections. Respond with a numbered outline only: chapters as "
         "\"1. <chapter>\", sections indented two spaces as \"1.1 <section>\", "
         "and each given title indented four spaces as \"1.1.1 <title>\". "
         "Every title must appear exactly once, verbatim, as its own line.\n"
      << "=== TITLES ===\n";
    for (std::size_t i = 0; i < titles.size(); ++i) p << (i + 1) << ". " << titles[i] << "\n";
    p << "=== END ===\n";
    return p.str();
}

struct ExtractOptions {
    std::string domain_label = "Domain Knowledge";
    std::size_t window = 200;  // max titles per prompt
};

// Prompts the client with the ordered title list (windowed when long) and
// assembles the parsed fragments into one book tree rooted at the domain
// label. Chunk refs are attached to leaves in outline order.
inline LabelTree extract_book_tree(const std::vector<Chunk>& titled_chunks,
                                   GenerationClient& client,
                                   const ExtractOptions& options = {}) {
    std::map<std::string, std::vector<std::string>> by_title;  // normalized title -> chunk ids
    std::vector<LabelTree> tops;
    for (std::size_t start = 0; start < titled_chunks.size(); start += options.window) {
        const std::size_t end = std::min(titled_chunks.size(), start + options.window);
        std::vector<std::string> titles;
        for (std::size_t i = start; i < end; ++i) {
            if (!titled_chunks[i].title || titled_chunks[i].title->empty())
                throw Error("untitled chunk passed to extract_structure: " + titled_chunks[i].id);
            titles.push_back(*titled_chunks[i].title);
            by_title[detail::normalize_label(*titled_chunks[i].title)].push_back(titled_chunks[i].id);
        }
        GenerationRequest req;
        req.prompt = build_structure_prompt(titles);
        req.request_tag = RequestTag::structure;
        req.max_output_tokens = 4096;
        const auto resp = client.generate(req);
        auto forest = parse_structure_response(resp.text, titles);
        for (auto& t : forest) tops.push_back(std::move(t));
    }
    // attach chunk refs to leaves in outline order, FIFO per title
    std::function<void(LabelTree&)> attach = [&](LabelTree& t) {
        if (t.is_leaf()) {
            auto& q = by_title[detail::normalize_label(t.label)];
            if (q.empty()) throw DuplicateTitle(t.label);
            t.chunk_ref = q.front();
            q.erase(q.begin());
            return;
        }
        for (auto& c : t.children) attach(c);
    };
    for (auto& t : tops) attach(t);
    LabelTree root;
    root.label = options.domain_label;
    root.children = std::move(tops);
    return root;
}

inline KnowledgeStructure extract_structure(const std::vector<Chunk>& titled_chunks,
                                            GenerationClient& client,
                                            const ExtractOptions& options = {}) {
    return freeze_structure(extract_book_tree(titled_chunks, client, options),
                            "struct-" + fnv1a_hex(options.domain_label +
                                                  std::to_string(titled_chunks.size())));
}

// ---- clustering builder (offline mode) ------------------------------------

struct ClusterConfig {
    std::size_t branching = 2;   // k
    std::size_t leaf_size = 8;
    std::size_t max_depth = 4;
    std::uint64_t seed = 0;      // mandatory in config
    std::string domain_label = "Domain Knowledge";
};

namespace detail {

inline std::string top_terms_label(const std::vector<const Chunk*>& members) {
    TokenBag counts;
    for (const auto* c : members) {
        const std::string text = (c->title ? *c->title + " " : "") + c->text;
        for (const auto& tok : normalize_tokens(text))
            if (tok.size() > 3) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string label;
    for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
        if (!label.empty()) label += " / ";
        label += ranked[i].first;
    }
    return label.empty() ? "misc" : label;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Lloyd's iterations with seeded distinct-member init and index tie-breaks.
inline std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& vecs,
                                       const std::vector<std::size_t>& members,
                                       std::size_t k, Rng& rng) {
    std::vector<std::size_t> centers_idx;
    {
        std::vector<std::size_t> pool = members;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = static_cast<std::size_t>(rng.bounded(pool.size()));
            centers_idx.push_back(pool[j]);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
        }
        std::sort(centers_idx.begin(), centers_idx.end());
    }
    std::vector<std::vector<double>> centroids;
    for (auto ci : centers_idx) centroids.push_back(vecs[ci]);
    std::vector<std::size_t> assign(members.size(), 0);
    for (int iter = 0; iter < 25; ++iter) {
        bool changed = false;
        for (std::size_t m = 0; m < members.size(); ++m) {
            std::size_t best = 0;
            double best_sim = -2.0;
            for (std::size_t c = 0; c < centroids.size(); ++c) {
                const double sim = dot(vecs[members[m]], centroids[c]);
                if (sim > best_sim + 1e-12) { best_sim = sim; best = c; }
            }
            if (assign[m] != best) { assign[m] = best; changed = true; }
        }
        if (!changed && iter > 0) break;
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            std::vector<double> mean(vecs[members[0]].size(), 0.0);
            std::size_t n = 0;
            for (std::size_t m = 0; m < members.size(); ++m) {
                if (assign[m] != c) continue;
                for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += vecs[members[m]][d];
                ++n;
            }
            if (n == 0) continue;  // empty cluster keeps its old centroid
            double norm2 = 0.0;
            for (auto& x : mean) { x /= static_cast<double>(n); norm2 += x * x; }
            if (norm2 > 0) for (auto& x : mean) x /= std::sqrt(norm2);
            centroids[c] = std::move(mean);
        }
    }
    return assign;
}

}  // namespace detail

// Recursive top-down clustering over title+text embeddings; deterministic
// given (inputs, seed).
inline KnowledgeStructure build_structure_by_clustering(const std::vector<Chunk>& chunks,
                                                        EmbeddingClient& embedder,
                                                        const ClusterConfig& params) {
    if (chunks.empty()) throw Error("clustering builder needs at least one chunk");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks)
        texts.push_back((c.title ? *c.title + "\n" : "") + c.text);
    const auto vecs = embedder.embed(texts);
    Rng rng(params.seed);

    auto leaf_of = [&](std::size_t i) {
        LabelTree leaf;
        leaf.label = chunks[i].title.value_or("Chunk " + chunks[i].id);
        leaf.chunk_ref = chunks[i].id;
        return leaf;
    };

    std::function<LabelTree(std::vector<std::size_t>, std::size_t)> recurse =
        [&](std::vector<std::size_t> members, std::size_t depth) -> LabelTree {
        LabelTree node;
        std::vector<const Chunk*> ptrs;
        for (auto m : members) ptrs.push_back(&chunks[m]);
        node.label = detail::top_terms_label(ptrs);
        if (members.size() <= params.leaf_size || depth + 1 >= params.max_depth ||
            members.size() <= params.branching) {
            for (auto m : members) node.children.push_back(leaf_of(m));
            return node;
        }
        const std::size_t k = std::min(params.branching, members.size());
        const auto assign = detail::kmeans(vecs, members, k, rng);
        std::vector<std::vector<std::size_t>> groups(k);
        for (std::size_t m = 0; m < members.size(); ++m) groups[assign[m]].push_back(members[m]);
        std::erase_if(groups, [](const auto& g) { return g.empty(); });
        if (groups.size() < 2) {  // clustering failed to separate anything
            for (auto m : members) node.children.push_back(leaf_of(m));
            return node;
        }
        std::sort(groups.begin(), groups.end(),
                  [](const auto& a, const auto& b) { return a.front() < b.front(); });
        for (auto& g : groups) node.children.push_back(recurse(std::move(g), depth + 1));
        return node;
    };

    std::vector<std::size_t> all(chunks.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    LabelTree root = recurse(std::move(all), 0);
    root.label = params.domain_label;
    return freeze_structure(std::move(root),
                            "struct-cluster-" + std::to_string(params.seed));
}

// ---- path and bundle sampling ---------------------------------------------

inline KnowledgePath path_for_chunk(const KnowledgeStructure& s, const std::string& chunk_id) {
    auto it = s.chunk_index.find(chunk_id);
    if (it == s.chunk_index.end()) throw UnknownChunk(chunk_id);
    return s.path_to(it->second);
}

namespace detail {

inline std::string walk_to_leaf(const KnowledgeStructure& s, std::string id, Rng& rng) {
    while (!s.node(id).children.empty()) {
        const auto& kids = s.node(id).children;
        id = kids[static_cast<std::size_t>(rng.bounded(kids.size()))];
    }
    return id;
}

}  // namespace detail

// Draws b uniform in [1, min(l, leaves)]; b = 1 walks root to leaf with a
// uniform child pick at each step; b >= 2 picks a qualifying internal node
// uniformly, then one leaf from each of b distinct child subtrees, making
// the node the LCA of the returned leaves.
inline PathBundle sample_path_bundle(const KnowledgeStructure& s, std::size_t max_branches,
                                     Rng& rng) {
    if (max_branches < 1) throw Error("max_branches must be >= 1");
    const std::size_t cap = std::min<std::size_t>(max_branches, s.leaf_count());
    const std::size_t b = 1 + static_cast<std::size_t>(rng.bounded(cap));
    PathBundle bundle;
    if (b >= 2) {
        std::vector<std::string> qualifying;  // internal nodes with >= b children
        for (const auto& [id, n] : s.nodes)
            if (n.children.size() >= b) qualifying.push_back(id);
        if (qualifying.empty()) {
            bundle.fallback = true;
        } else {
            const std::string at =
                qualifying[static_cast<std::size_t>(rng.bounded(qualifying.size()))];
            bundle.branch_point = at;
            std::vector<std::string> kids = s.node(at).children;
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t j = static_cast<std::size_t>(rng.bounded(kids.size()));
                const std::string sub = kids[j];
                kids.erase(kids.begin() + static_cast<std::ptrdiff_t>(j));
                bundle.branches.push_back(s.path_to(detail::walk_to_leaf(s, sub, rng)));
            }
            return bundle;
        }
    }
    const std::string leaf = detail::walk_to_leaf(s, s.root, rng);
    bundle.branches.push_back(s.path_to(leaf));
    // single path: branch point is the leaf's parent (or the leaf itself in
    // a one-node tree)
    auto pit = s.parent.find(leaf);
    bundle.branch_point = pit == s.parent.end() ? leaf : pit->second;
    return bundle;
}

// ---- serialization ---------------------------------------------------------

inline nlohmann::json structure_to_json(const KnowledgeStructure& s) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& [id, n] : s.nodes) {
        nlohmann::json jn{{"id", n.id},
                          {"label", n.label},
                          {"level", node_level_name(n.level)},
                          {"children", n.children}};
        if (n.chunk_ref) jn["chunk_ref"] = *n.chunk_ref;
        nodes.push_back(std::move(jn));
    }
    return nlohmann::json{{"structure_id", s.structure_id},
                          {"root", s.root},
                          {"merged", s.merged},
                          {"nodes", std::move(nodes)}};
}

inline KnowledgeStructure structure_from_json(const nlohmann::json& j) {
    KnowledgeStructure s;
    s.structure_id = j.at("structure_id").get<std::string>();
    s.root = j.at("root").get<std::string>();
    s.merged = j.value("merged", false);
    for (const auto& jn : j.at("nodes")) {
        StructureNode n;
        n.id = jn.at("id").get<std::string>();
        n.label = jn.at("label").get<std::string>();
        n.level = node_level_from_name(jn.at("level").get<std::string>());
        n.children = jn.at("children").get<std::vector<std::string>>();
        if (jn.contains("chunk_ref")) n.chunk_ref = jn["chunk_ref"].get<std::string>();
        s.nodes[n.id] = n;
    }
    for (const auto& [id, n] : s.nodes) {
        for (const auto& c : n.children) s.parent[c] = id;
        if (n.children.empty() && n.chunk_ref) s.chunk_index[*n.chunk_ref] = id;
    }
    return s;
}

// On-disk canonical outline: "# <root>" header, then numbered lines with
// two spaces of indent per level and " <- chunk:<id>" suffixes on leaves.
inline std::string structure_to_outline(const KnowledgeStructure& s) {
    std::ostringstream out;
    out << "# " << s.node(s.root).label << "\n";
    std::function<void(const std::string&, const std::string&, int)> emit =
        [&](const std::string& id, const std::string& numbering, int depth) {
        const auto& n = s.node(id);
        out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << numbering
            << (depth == 0 ? ". " : " ") << n.label;
        if (n.chunk_ref) out << " <- chunk:" << *n.chunk_ref;
        out << "\n";
        for (std::size_t i = 0; i < n.children.size(); ++i)
            emit(n.children[i], numbering + "." + std::to_string(i + 1), depth + 1);
    };
    const auto& kids = s.node(s.root).children;
    for (std::size_t i = 0; i < kids.size(); ++i) emit(kids[i], std::to_string(i + 1), 0);
    return out.str();
}

}  // namespace structkit
