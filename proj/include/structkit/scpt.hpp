#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structkit/corpus.hpp"
#include "structkit/errors.hpp"
#include "structkit/mindmap.hpp"
#include "structkit/rng.hpp"
#include "structkit/taxonomy.hpp"

namespace structkit {

enum class RecordKind { chunk_conditional, structure_recall };

inline std::string_view record_kind_name(RecordKind k) {
    return k == RecordKind::chunk_conditional ? "chunk_conditional" : "structure_recall";
}

struct RecordSegment {
    std::string text;
    bool supervised = false;
};

struct TrainingRecord {
    std::string id;
    RecordKind kind = RecordKind::chunk_conditional;
    std::vector<RecordSegment> segments;
    // meta
    std::string structure_id;
    std::optional<std::string> chunk_id;
    std::optional<int> template_id;
    std::string language = "en";
    std::size_t epoch_slot = 0;
};

inline nlohmann::json record_to_json(const TrainingRecord& r) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : r.segments)
        segs.push_back({{"text", s.text}, {"supervised", s.supervised}});
    nlohmann::json meta{{"structure_id", r.structure_id},
                        {"language", r.language},
                        {"epoch_slot", r.epoch_slot}};
    if (r.chunk_id) meta["chunk_id"] = *r.chunk_id;
    if (r.template_id) meta["template_id"] = *r.template_id;
    return nlohmann::json{{"id", r.id},
                          {"kind", std::string(record_kind_name(r.kind))},
                          {"segments", std::move(segs)},
                          {"meta", std::move(meta)}};
}

inline TrainingRecord record_from_json(const nlohmann::json& j) {
    TrainingRecord r;
    r.id = j.at("id").get<std::string>();
    r.kind = j.at("kind").get<std::string>() == "structure_recall"
                 ? RecordKind::structure_recall
                 : RecordKind::chunk_conditional;
    for (const auto& js : j.at("segments"))
        r.segments.push_back({js.at("text").get<std::string>(), js.at("supervised").get<bool>()});
    const auto& meta = j.at("meta");
    r.structure_id = meta.at("structure_id").get<std::string>();
    r.language = meta.value("language", "en");
    r.epoch_slot = meta.value("epoch_slot", std::size_t{0});
    if (meta.contains("chunk_id")) r.chunk_id = meta["chunk_id"].get<std::string>();
    if (meta.contains("template_id")) r.template_id = meta["template_id"].get<int>();
    return r;
}

struct ScptConfig {
    MindmapScope condition_scope = MindmapScope::path_local;
    std::size_t epochs = 3;
    std::uint64_t seed = 0;
    TokenizerMode tokenizer = TokenizerMode::unicode_words;
    std::string language = "en";
};

// One conditional record per chunk: an unsupervised condition built from
// the chunk's knowledge path, then the chunk text as the only supervised
// segment.
inline TrainingRecord emit_chunk_record(const Chunk& chunk, const KnowledgeStructure& structure,
                                        const std::vector<FramingTemplate>& pool, Rng& rng,
                                        const ScptConfig& config = {}) {
    auto it = structure.chunk_index.find(chunk.id);
    if (it == structure.chunk_index.end()) throw UnknownChunk(chunk.id);
    const MindmapText mm =
        config.condition_scope == MindmapScope::full
            ? render_mindmap(structure, MindmapScope::full)
            : render_mindmap(structure, MindmapScope::path_local, it->second);
    const FramedCondition framed = apply_template(mm, pool, rng);
    TrainingRecord r;
    r.id = "scpt-" + chunk.id;
    r.kind = RecordKind::chunk_conditional;
    r.segments.push_back({framed.condition_text, false});
    r.segments.push_back({chunk.text, true});
    r.structure_id = structure.structure_id;
    r.chunk_id = chunk.id;
    r.template_id = framed.template_id;
    r.language = config.language;
    return r;
}

// Structure-recall record: an unsupervised instruction naming the domain,
// then the full canonical mindmap as the supervised target.
inline TrainingRecord emit_structure_recall_record(const KnowledgeStructure& structure,
                                                   const std::vector<FramingTemplate>&,
                                                   Rng&, const ScptConfig& config = {}) {
    TrainingRecord r;
    r.id = "scpt-recall-" + structure.structure_id;
    r.kind = RecordKind::structure_recall;
    const std::string domain = structure.node(structure.root).label;
    r.segments.push_back(
        {"Recall the complete knowledge structure of " + domain + " as a mindmap:\n", false});
    r.segments.push_back({render_mindmap(structure, MindmapScope::full).text, true});
    r.structure_id = structure.structure_id;
    r.language = config.language;
    return r;
}

struct DatasetManifest {
    std::string dataset_id;
    std::map<std::string, std::size_t> counts_by_kind;
    std::map<std::string, std::size_t> counts_by_language;
    std::size_t supervised_tokens = 0;
    std::size_t unsupervised_tokens = 0;
    std::size_t epochs = 0;
    std::size_t records_per_epoch = 0;
    // config snapshot
    std::size_t budget = 0;
    std::string tokenizer_mode;
    std::uint64_t seed = 0;
    std::string template_pool_hash;
    std::string schedule;
    std::vector<std::string> files;
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    return nlohmann::json{{"dataset_id", m.dataset_id},
                          {"counts_by_kind", m.counts_by_kind},
                          {"counts_by_language", m.counts_by_language},
                          {"supervised_tokens", m.supervised_tokens},
                          {"unsupervised_tokens", m.unsupervised_tokens},
                          {"epochs", m.epochs},
                          {"records_per_epoch", m.records_per_epoch},
                          {"config",
                           {{"budget", m.budget},
                            {"tokenizer_mode", m.tokenizer_mode},
                            {"seed", m.seed},
                            {"template_pool_hash", m.template_pool_hash}}},
                          {"schedule", m.schedule},
                          {"files", m.files}};
}

// Emits scpt.epoch<k>.jsonl files: per slot, every chunk record once
// (Fisher-Yates shuffled on seed+slot) followed by one recall record per
// structure. Slot files are written whole-or-not-at-all via a temp rename.
inline DatasetManifest build_scpt_dataset(
    const std::vector<Chunk>& chunks,
    const std::vector<const KnowledgeStructure*>& structures,
    const std::vector<FramingTemplate>& pool, const ScptConfig& config,
    const std::filesystem::path& out_dir, std::size_t budget = 0,
    const std::map<std::string, std::string>& language_by_doc = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    // every chunk must belong to exactly one structure
    std::map<std::string, const KnowledgeStructure*> owner;
    for (const auto* s : structures)
        for (const auto& [chunk_id, leaf] : s->chunk_index) {
            if (owner.count(chunk_id))
                throw Error("chunk assigned to two structures: " + chunk_id);
            owner[chunk_id] = s;
        }
    DatasetManifest m;
    m.dataset_id = "scpt-" + std::to_string(config.seed);
    m.epochs = config.epochs;
    m.budget = budget;
    m.tokenizer_mode = std::string(tokenizer_mode_name(config.tokenizer));
    m.seed = config.seed;
    m.template_pool_hash = template_pool_hash(pool);
    m.schedule = "per epoch slot: all chunk_conditional records (seeded shuffle), then one "
                 "structure_recall record per structure";

    auto lang_of = [&](const Chunk& c) {
        auto it = language_by_doc.find(c.doc_id);
        return it == language_by_doc.end() ? config.language : it->second;
    };

    for (std::size_t slot = 0; slot < config.epochs; ++slot) {
        Rng rng(config.seed + slot);
        std::vector<TrainingRecord> records;
        records.reserve(chunks.size() + structures.size());
        for (const auto& chunk : chunks) {
            auto it = owner.find(chunk.id);
            if (it == owner.end()) throw UnknownChunk(chunk.id);
            ScptConfig per = config;
            per.language = lang_of(chunk);
            TrainingRecord r = emit_chunk_record(chunk, *it->second, pool, rng, per);
            r.epoch_slot = slot;
            r.id += "-e" + std::to_string(slot);
            records.push_back(std::move(r));
        }
        rng.shuffle(records);
        for (const auto* s : structures) {
            TrainingRecord r = emit_structure_recall_record(*s, pool, rng, config);
            r.epoch_slot = slot;
            r.id += "-e" + std::to_string(slot);
            records.push_back(std::move(r));
        }
        const std::string name = "scpt.epoch" + std::to_string(slot) + ".jsonl";
        const fs::path tmp = out_dir / (name + ".tmp");
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw Error("cannot open " + tmp.string());
            for (const auto& r : records) {
                out << record_to_json(r).dump() << "\n";
                ++m.counts_by_kind[std::string(record_kind_name(r.kind))];
                ++m.counts_by_language[r.language];
                for (const auto& seg : r.segments) {
                    const std::size_t n = count_tokens(seg.text, config.tokenizer);
                    if (seg.supervised) m.supervised_tokens += n;
                    else m.unsupervised_tokens += n;
                }
            }
        }
        fs::rename(tmp, out_dir / name);
        m.files.push_back(name);
        if (slot == 0) m.records_per_epoch = records.size();
    }
    std::ofstream mf(out_dir / "manifest.json", std::ios::trunc);
    mf << manifest_to_json(m).dump(2) << "\n";
    return m;
}

}  // namespace structkit
