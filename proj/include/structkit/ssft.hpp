#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structkit/corpus.hpp"
#include "structkit/errors.hpp"
#include "structkit/eval.hpp"
#include "structkit/llm_client.hpp"
#include "structkit/mindmap.hpp"
#include "structkit/rng.hpp"
#include "structkit/taxonomy.hpp"

namespace structkit {

enum class HopKind { knowledge_intensive, two_hop, multi_hop };

inline std::string_view hop_kind_name(HopKind h) {
    switch (h) {
        case HopKind::knowledge_intensive: return "knowledge_intensive";
        case HopKind::two_hop: return "two_hop";
        case HopKind::multi_hop: return "multi_hop";
    }
    return "knowledge_intensive";
}

inline HopKind hop_kind_for_branches(std::size_t n) {
    if (n <= 1) return HopKind::knowledge_intensive;
    if (n == 2) return HopKind::two_hop;
    return HopKind::multi_hop;
}

enum class QAVariant { plain, cot };

struct BundleProvenance {
    std::string structure_id;
    std::string branch_point;
    std::vector<std::vector<std::string>> branch_labels;  // root..leaf labels per branch
    std::vector<std::string> leaf_chunk_ids;
    bool fallback = false;
};

struct QASample {
    std::string id;
    std::string question;
    std::string answer;
    std::optional<std::string> explanation;
    std::optional<std::vector<std::string>> options;  // multi-choice mode
    std::optional<std::size_t> gold;
    BundleProvenance bundle;
    HopKind hop_kind = HopKind::knowledge_intensive;
    QAVariant variant = QAVariant::plain;
    bool retrieval_miss = false;  // augment fell below the retrieval floor
};

inline nlohmann::json qa_to_json(const QASample& q) {
    nlohmann::json j{{"id", q.id},
                     {"question", q.question},
                     {"answer", q.answer},
                     {"hop_kind", std::string(hop_kind_name(q.hop_kind))},
                     {"variant", q.variant == QAVariant::cot ? "cot" : "plain"},
                     {"bundle",
                      {{"structure_id", q.bundle.structure_id},
                       {"branch_point", q.bundle.branch_point},
                       {"branch_labels", q.bundle.branch_labels},
                       {"leaf_chunk_ids", q.bundle.leaf_chunk_ids},
                       {"fallback", q.bundle.fallback}}}};
    if (q.explanation) j["explanation"] = *q.explanation;
    if (q.options) j["options"] = *q.options;
    if (q.gold) j["gold"] = *q.gold;
    if (q.retrieval_miss) j["retrieval_miss"] = true;
    return j;
}

inline QASample qa_from_json(const nlohmann::json& j) {
    QASample q;
    q.id = j.at("id").get<std::string>();
    q.question = j.at("question").get<std::string>();
    q.answer = j.at("answer").get<std::string>();
    if (j.contains("explanation")) q.explanation = j["explanation"].get<std::string>();
    if (j.contains("options")) q.options = j["options"].get<std::vector<std::string>>();
    if (j.contains("gold")) q.gold = j["gold"].get<std::size_t>();
    const std::string hop = j.value("hop_kind", "knowledge_intensive");
    q.hop_kind = hop == "two_hop" ? HopKind::two_hop
               : hop == "multi_hop" ? HopKind::multi_hop
                                    : HopKind::knowledge_intensive;
    q.variant = j.value("variant", "plain") == "cot" ? QAVariant::cot : QAVariant::plain;
    if (j.contains("bundle")) {
        const auto& b = j["bundle"];
        q.bundle.structure_id = b.value("structure_id", "");
        q.bundle.branch_point = b.value("branch_point", "");
        if (b.contains("branch_labels"))
            q.bundle.branch_labels = b["branch_labels"].get<std::vector<std::vector<std::string>>>();
        if (b.contains("leaf_chunk_ids"))
            q.bundle.leaf_chunk_ids = b["leaf_chunk_ids"].get<std::vector<std::string>>();
        q.bundle.fallback = b.value("fallback", false);
    }
    q.retrieval_miss = j.value("retrieval_miss", false);
    return q;
}

inline const std::string kCotPrompt =
    "Let's recall the relevant knowledge structure step by step before answering.";

namespace detail {

struct ParsedTriple {
    std::string question;
    std::string answer;
    std::optional<std::string> explanation;
};

// Delimited wire format the synthesis prompts request:
// QUESTION: ... / ANSWER: ... / EXPLANATION: ... (explanation optional).
inline ParsedTriple parse_qa_response(const std::string& text) {
    auto grab = [&](const std::string& key) -> std::optional<std::string> {
        const auto at = text.find(key);
        if (at == std::string::npos) return std::nullopt;
        std::size_t start = at + key.size();
        std::size_t end = text.size();
        for (const std::string other : {"QUESTION:", "ANSWER:", "EXPLANATION:"}) {
            if (other == key) continue;
            const auto o = text.find(other, start);
            if (o != std::string::npos && o < end) end = o;
        }
        return trim(text.substr(start, end - start));
    };
    auto q = grab("QUESTION:");
    auto a = grab("ANSWER:");
    if (!q || q->empty()) throw SynthesisParseError("missing QUESTION delimiter");
    if (!a || a->empty()) throw SynthesisParseError("missing ANSWER delimiter");
    ParsedTriple t;
    t.question = *q;
    t.answer = *a;
    if (auto e = grab("EXPLANATION:"); e && !e->empty()) t.explanation = *e;
    return t;
}

inline std::string path_line(const KnowledgeStructure& s, const KnowledgePath& path) {
    std::string line;
    for (const auto& id : path.node_ids) {
        if (!line.empty()) line += " > ";
        line += s.node(id).label;
    }
    return line;
}

}  // namespace detail

inline std::string build_synthesis_prompt(const KnowledgeStructure& s, const PathBundle& bundle,
                                          const std::vector<Chunk>& chunks) {
    std::ostringstream p;
    const bool multi = bundle.branches.size() >= 2;
    p << "You are given " << (multi ? "several knowledge paths" : "a knowledge path")
      << " from a domain taxonomy and the textual content of "
      << (multi ? "their knowledge points" : "its knowledge point") << ". Write "
      << (multi ? "one question that requires reasoning across all the paths"
                : "one knowledge-intensive question answerable from the content")
      << ", its answer, and a short explanation. Respond exactly as:\n"
         "QUESTION: <question>\nANSWER: <answer>\nEXPLANATION: <explanation>\n"
      << "=== PATHS ===\n";
    for (const auto& branch : bundle.branches) p << detail::path_line(s, branch) << "\n";
    p << "=== CONTENT ===\n";
    for (const auto& c : chunks) p << c.text << "\n\n";
    p << "=== END ===\n";
    return p.str();
}

// Plain (z) QA synthesis for one sampled bundle. chunks must be exactly
// the bundle's leaf chunks, in branch order.
inline QASample synthesize_qa(const PathBundle& bundle, const KnowledgeStructure& s,
                              const std::vector<Chunk>& chunks, GenerationClient& client,
                              const std::string& sample_id) {
    GenerationRequest req;
    req.prompt = build_synthesis_prompt(s, bundle, chunks);
    req.request_tag = RequestTag::qa_synthesis;
    req.temperature = 0.7;
    const auto resp = client.generate(req);
    const auto triple = detail::parse_qa_response(resp.text);
    QASample q;
    q.id = sample_id;
    q.question = triple.question;
    q.answer = triple.answer;
    q.explanation = triple.explanation;
    q.hop_kind = hop_kind_for_branches(bundle.branches.size());
    q.variant = QAVariant::plain;
    q.bundle.structure_id = s.structure_id;
    q.bundle.branch_point = bundle.branch_point;
    q.bundle.fallback = bundle.fallback;
    for (const auto& branch : bundle.branches) {
        std::vector<std::string> labels;
        for (const auto& id : branch.node_ids) labels.push_back(s.node(id).label);
        q.bundle.branch_labels.push_back(std::move(labels));
        const auto& leaf = s.node(branch.node_ids.back());
        if (leaf.chunk_ref) q.bundle.leaf_chunk_ids.push_back(*leaf.chunk_ref);
    }
    return q;
}

// CoT (z') variant: the question gains the elicitation sentence, the answer
// is prefixed with the bundle's path-local mindmap, then the explanation,
// then the plain answer. The plain sample is left untouched.
inline QASample derive_cot_variant(const QASample& sample, const KnowledgeStructure& s) {
    if (sample.variant != QAVariant::plain) throw Error("cot variant derives from plain only");
    QASample cot = sample;
    cot.id = sample.id + "-cot";
    cot.variant = QAVariant::cot;
    cot.question = sample.question + "\n" + kCotPrompt;
    std::vector<std::string> leaves;
    for (const auto& cid : sample.bundle.leaf_chunk_ids) {
        auto it = s.chunk_index.find(cid);
        if (it != s.chunk_index.end()) leaves.push_back(it->second);
    }
    std::string prefix;
    if (!leaves.empty()) prefix = render_bundle_mindmap(s, leaves).text;
    std::string body = prefix;
    if (sample.explanation) body += "\n" + *sample.explanation;
    body += "\n" + sample.answer;
    cot.answer = body;
    return cot;
}

struct RetrievalHit {
    std::string leaf_id;
    std::string chunk_id;
    double score = 0.0;
};

// Lexical retrieval: token-F1 between the question and each leaf's
// title + chunk head. Deterministic; ties break on leaf order.
inline std::vector<RetrievalHit> retrieve_leaves(const std::string& question,
                                                 const KnowledgeStructure& s,
                                                 const std::map<std::string, const Chunk*>& chunks_by_id,
                                                 std::size_t top_k = 3) {
    std::vector<RetrievalHit> hits;
    for (const auto& leaf : s.leaves()) {
        const auto& n = s.node(leaf);
        if (!n.chunk_ref) continue;
        auto it = chunks_by_id.find(*n.chunk_ref);
        if (it == chunks_by_id.end()) continue;
        std::string head = it->second->text.substr(0, 400);
        const double score = token_f1(question, n.label + " " + head);
        hits.push_back({leaf, *n.chunk_ref, score});
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    if (hits.size() > top_k) hits.resize(top_k);
    return hits;
}

inline std::string build_explanation_prompt(const KnowledgeStructure& s,
                                            const std::vector<RetrievalHit>& hits,
                                            const std::map<std::string, const Chunk*>& chunks_by_id,
                                            const std::string& question,
                                            const std::string& answer) {
    std::ostringstream p;
    p << "Given a question, its answer, and supporting knowledge paths with "
         "content, write a concise explanation of why the answer is correct. "
         "Respond exactly as:\nEXPLANATION: <explanation>\n"
      << "QUESTION: " << question << "\nANSWER: " << answer << "\n=== PATHS ===\n";
    for (const auto& h : hits) p << detail::path_line(s, s.path_to(h.leaf_id)) << "\n";
    p << "=== CONTENT ===\n";
    for (const auto& h : hits) p << chunks_by_id.at(h.chunk_id)->text << "\n\n";
    p << "=== END ===\n";
    return p.str();
}

// Attaches a structure-grounded explanation to an existing QA pair.
// Questions scoring below the retrieval floor pass through unexplained,
// flagged for the caller.
inline QASample augment_existing_qa(const std::string& question, const std::string& answer,
                                    const KnowledgeStructure& s,
                                    const std::map<std::string, const Chunk*>& chunks_by_id,
                                    GenerationClient& client, const std::string& sample_id,
                                    double retrieval_floor = 0.05) {
    QASample q;
    q.id = sample_id;
    q.question = question;
    q.answer = answer;
    q.variant = QAVariant::plain;
    q.bundle.structure_id = s.structure_id;
    auto hits = retrieve_leaves(question, s, chunks_by_id);
    std::erase_if(hits, [&](const RetrievalHit& h) { return h.score < retrieval_floor; });
    if (hits.empty()) {
        q.retrieval_miss = true;
        q.hop_kind = HopKind::knowledge_intensive;
        return q;
    }
    q.hop_kind = hop_kind_for_branches(hits.size());
    for (const auto& h : hits) {
        std::vector<std::string> labels;
        for (const auto& id : s.path_to(h.leaf_id).node_ids) labels.push_back(s.node(id).label);
        q.bundle.branch_labels.push_back(std::move(labels));
        q.bundle.leaf_chunk_ids.push_back(h.chunk_id);
    }
    GenerationRequest req;
    req.prompt = build_explanation_prompt(s, hits, chunks_by_id, question, answer);
    req.request_tag = RequestTag::explanation;
    req.temperature = 0.7;
    const auto resp = client.generate(req);
    const auto at = resp.text.find("EXPLANATION:");
    q.explanation = trim(at == std::string::npos ? resp.text : resp.text.substr(at + 12));
    return q;
}

// ---- leakage filter ---------------------------------------------------------

struct LeakageRemoval {
    std::string sample_id;
    std::string test_id;
    double f1 = 0.0;
};

struct LeakageReport {
    std::vector<std::string> kept;
    std::vector<LeakageRemoval> removed;
    double threshold = 0.5;
};

struct TestItem {
    std::string id;
    std::string question;
    std::string answer;
};

// Removes samples whose concatenated question+answer scores strictly above
// the threshold in token-F1 against any test item.
inline LeakageReport leakage_filter(const std::vector<QASample>& samples,
                                    const std::vector<TestItem>& test_set,
                                    double threshold = 0.5) {
    if (threshold <= 0.0 || threshold > 1.0) throw DomainError("leakage threshold in (0, 1]");
    LeakageReport report;
    report.threshold = threshold;
    for (const auto& s : samples) {
        const std::string text = s.question + " " + s.answer;
        double best = -1.0;
        std::string best_id;
        for (const auto& t : test_set) {
            const double f1 = token_f1(text, t.question + " " + t.answer);
            if (f1 > best) { best = f1; best_id = t.id; }
        }
        if (best > threshold) report.removed.push_back({s.id, best_id, best});
        else report.kept.push_back(s.id);
    }
    return report;
}

inline nlohmann::json leakage_report_to_json(const LeakageReport& r) {
    nlohmann::json removed = nlohmann::json::array();
    for (const auto& rm : r.removed)
        removed.push_back({{"sample_id", rm.sample_id}, {"test_id", rm.test_id}, {"f1", rm.f1}});
    return nlohmann::json{{"kept", r.kept}, {"removed", removed}, {"threshold", r.threshold}};
}

// ---- dataset assembly -------------------------------------------------------

struct SsftConfig {
    std::size_t max_branches = 3;  // l
    std::size_t target_count = 0;  // 0 = stop at leaf coverage instead
    std::uint64_t seed = 0;
    double leakage_threshold = 0.5;
};

struct SsftBuildResult {
    std::vector<QASample> plain;
    std::vector<QASample> cot;
    LeakageReport leakage;
    std::size_t dropped_parse_failures = 0;
};

// Draws path bundles until the target count (or full leaf coverage when no
// count is set), synthesizes one QA per bundle, derives the CoT variant,
// and filters leakage. Samples are emitted in id order.
inline SsftBuildResult build_ssft_dataset(const KnowledgeStructure& s,
                                          const std::vector<Chunk>& chunks,
                                          GenerationClient& client,
                                          const std::vector<TestItem>& test_set,
                                          const SsftConfig& config) {
    std::map<std::string, const Chunk*> by_id;
    for (const auto& c : chunks) by_id[c.id] = &c;
    Rng rng(config.seed);
    SsftBuildResult result;
    std::set<std::string> covered;
    const std::size_t leaf_total = s.leaf_count();
    const std::size_t max_draws =
        std::max<std::size_t>(config.target_count, leaf_total) * 20 + 64;
    std::size_t made = 0;
    for (std::size_t draw = 0; draw < max_draws; ++draw) {
        const bool count_done = config.target_count > 0 && made >= config.target_count;
        const bool coverage_done = config.target_count == 0 && covered.size() >= leaf_total;
        if (count_done || coverage_done) break;
        const PathBundle bundle = sample_path_bundle(s, config.max_branches, rng);
        std::vector<Chunk> leaf_chunks;
        bool missing = false;
        for (const auto& branch : bundle.branches) {
            const auto& leaf = s.node(branch.node_ids.back());
            auto it = leaf.chunk_ref ? by_id.find(*leaf.chunk_ref) : by_id.end();
            if (it == by_id.end()) { missing = true; break; }
            leaf_chunks.push_back(*it->second);
        }
        if (missing) continue;
        std::ostringstream sid;
        sid << "qa-" << std::setw(6) << std::setfill('0') << made;
        try {
            QASample plain = synthesize_qa(bundle, s, leaf_chunks, client, sid.str());
            QASample cot = derive_cot_variant(plain, s);
            result.plain.push_back(std::move(plain));
            result.cot.push_back(std::move(cot));
            ++made;
            for (const auto& branch : bundle.branches)
                covered.insert(branch.node_ids.back());
        } catch (const SynthesisParseError&) {
            ++result.dropped_parse_failures;
        } catch (const GenerationFailed&) {
            ++result.dropped_parse_failures;
        }
    }
    auto by_sample_id = [](const QASample& a, const QASample& b) { return a.id < b.id; };
    std::sort(result.plain.begin(), result.plain.end(), by_sample_id);
    std::sort(result.cot.begin(), result.cot.end(), by_sample_id);
    result.leakage = leakage_filter(result.plain, test_set, config.leakage_threshold);
    if (!result.leakage.removed.empty()) {
        std::set<std::string> removed;
        for (const auto& rm : result.leakage.removed) removed.insert(rm.sample_id);
        std::erase_if(result.plain, [&](const QASample& q) { return removed.count(q.id) > 0; });
        std::erase_if(result.cot, [&](const QASample& q) {
            return removed.count(q.id.substr(0, q.id.size() - 4)) > 0;  // strip "-cot"
        });
    }
    return result;
}

}  // namespace structkit
