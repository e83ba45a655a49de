#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "structkit/io.hpp"
#include "structkit/scpt.hpp"

using namespace structkit;
namespace fs = std::filesystem;

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

Chunk make_chunk(std::string id, std::string text) {
    Chunk c;
    c.id = std::move(id);
    c.doc_id = c.id.substr(0, c.id.find('#'));
    c.text = std::move(text);
    c.token_count = count_tokens(c.text, TokenizerMode::unicode_words);
    return c;
}

struct Fixture {
    std::vector<Chunk> chunks;
    KnowledgeStructure structure;
    std::vector<FramingTemplate> pool = default_template_pool();

    Fixture() {
        chunks = {make_chunk("d#0", "Bones remodel continuously throughout life."),
                  make_chunk("d#1", "Synovial joints permit wide ranges of motion.")};
        structure = freeze_structure(
            node("Anatomy", {node("Skeleton", {node("Tissue", {leaf("Bone remodeling", "d#0")}),
                                               node("Joints", {leaf("Joint types", "d#1")})})}),
            "fix-1");
        REQUIRE(structure.validate().empty());
    }
};

struct TempDir {
    fs::path path;
    TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("chunk record: unsupervised condition then supervised text") {
    Fixture f;
    Rng rng(1);
    auto r = emit_chunk_record(f.chunks[0], f.structure, f.pool, rng);
    CHECK(r.id == "scpt-d#0");
    CHECK(r.kind == RecordKind::chunk_conditional);
    REQUIRE(r.segments.size() == 2);
    CHECK(!r.segments[0].supervised);
    CHECK(r.segments[1].supervised);
    CHECK(r.segments[1].text == f.chunks[0].text);
    // condition embeds the path-local mindmap with the target starred
    CHECK(r.segments[0].text.find("Bone remodeling (*)") != std::string::npos);
    CHECK(r.segments[0].text.find("- Anatomy") != std::string::npos);
    CHECK(r.chunk_id == "d#0");
    REQUIRE(r.template_id.has_value());
    CHECK(*r.template_id >= 0);
    CHECK(*r.template_id < 20);
    CHECK_THROWS_AS(emit_chunk_record(make_chunk("x#9", "t"), f.structure, f.pool, rng),
                    UnknownChunk);
}

TEST_CASE("full-scope condition embeds the whole mindmap") {
    Fixture f;
    Rng rng(1);
    ScptConfig cfg;
    cfg.condition_scope = MindmapScope::full;
    auto r = emit_chunk_record(f.chunks[0], f.structure, f.pool, rng, cfg);
    // every label appears, including the sibling leaf
    CHECK(r.segments[0].text.find("Joint types") != std::string::npos);
    CHECK(r.segments[0].text.find("(*)") == std::string::npos);
}

TEST_CASE("recall record targets the full canonical mindmap") {
    Fixture f;
    Rng rng(1);
    auto r = emit_structure_recall_record(f.structure, f.pool, rng);
    CHECK(r.kind == RecordKind::structure_recall);
    REQUIRE(r.segments.size() == 2);
    CHECK(!r.segments[0].supervised);
    CHECK(r.segments[0].text.find("Anatomy") != std::string::npos);
    CHECK(r.segments[1].supervised);
    CHECK(r.segments[1].text == render_mindmap(f.structure, MindmapScope::full).text);
}

TEST_CASE("record JSON round trip") {
    Fixture f;
    Rng rng(7);
    auto r = emit_chunk_record(f.chunks[1], f.structure, f.pool, rng);
    r.epoch_slot = 2;
    auto back = record_from_json(record_to_json(r));
    CHECK(record_to_json(back).dump() == record_to_json(r).dump());
    CHECK(back.epoch_slot == 2);
    CHECK(back.chunk_id == r.chunk_id);
    CHECK(back.template_id == r.template_id);
}

TEST_CASE("2 chunks, 1 structure, 1 epoch -> 3 records") {
    Fixture f;
    TempDir dir("structkit_scpt_trivial");
    ScptConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 42;
    auto m = build_scpt_dataset(f.chunks, {&f.structure}, f.pool, cfg, dir.path);
    CHECK(m.records_per_epoch == 3);
    CHECK(m.counts_by_kind.at("chunk_conditional") == 2);
    CHECK(m.counts_by_kind.at("structure_recall") == 1);
    REQUIRE(m.files.size() == 1);
    CHECK(read_jsonl(dir.path / "scpt.epoch0.jsonl").size() == 3);
    CHECK(fs::exists(dir.path / "manifest.json"));
}

TEST_CASE("manifest totals match an independent recount of the emitted files") {
    Fixture f;
    TempDir dir("structkit_scpt_recount");
    ScptConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 9;
    auto m = build_scpt_dataset(f.chunks, {&f.structure}, f.pool, cfg, dir.path);
    std::size_t sup = 0, unsup = 0, records = 0;
    std::map<std::string, std::size_t> by_kind;
    for (const auto& file : m.files) {
        for (const auto& j : read_jsonl(dir.path / file)) {
            ++records;
            ++by_kind[j.at("kind").get<std::string>()];
            for (const auto& seg : j.at("segments")) {
                const auto n = count_tokens(seg.at("text").get<std::string>(), cfg.tokenizer);
                if (seg.at("supervised").get<bool>()) sup += n;
                else unsup += n;
            }
        }
    }
    CHECK(records == 3 * m.records_per_epoch);
    CHECK(sup == m.supervised_tokens);
    CHECK(unsup == m.unsupervised_tokens);
    CHECK(by_kind == m.counts_by_kind);
}

TEST_CASE("schedule invariant: every chunk precedes its recall record in each slot") {
    Fixture f;
    TempDir dir("structkit_scpt_schedule");
    ScptConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 5;
    build_scpt_dataset(f.chunks, {&f.structure}, f.pool, cfg, dir.path);
    for (int slot = 0; slot < 3; ++slot) {
        auto lines = read_jsonl(dir.path / ("scpt.epoch" + std::to_string(slot) + ".jsonl"));
        std::set<std::string> chunks_seen;
        bool recall_seen = false;
        for (const auto& j : lines) {
            if (j.at("kind") == "structure_recall") {
                recall_seen = true;
                continue;
            }
            CHECK(!recall_seen);  // all chunk records come first
            CHECK(chunks_seen.insert(j.at("meta").at("chunk_id").get<std::string>()).second);
            CHECK(j.at("meta").at("epoch_slot").get<int>() == slot);
        }
        CHECK(recall_seen);
        CHECK(chunks_seen.size() == f.chunks.size());
    }
}

TEST_CASE("fixed seed reruns are byte-identical; epochs reshuffle independently") {
    Fixture f;
    TempDir a("structkit_scpt_det_a"), b("structkit_scpt_det_b");
    ScptConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 77;
    build_scpt_dataset(f.chunks, {&f.structure}, f.pool, cfg, a.path);
    build_scpt_dataset(f.chunks, {&f.structure}, f.pool, cfg, b.path);
    for (int slot = 0; slot < 3; ++slot) {
        const std::string name = "scpt.epoch" + std::to_string(slot) + ".jsonl";
        CHECK(read_file(a.path / name) == read_file(b.path / name));
    }
    CHECK(read_file(a.path / "manifest.json") == read_file(b.path / "manifest.json"));
    // different seeds change the emission
    TempDir c("structkit_scpt_det_c");
    cfg.seed = 78;
    build_scpt_dataset(f.chunks, {&f.structure}, f.pool, cfg, c.path);
    bool any_diff = false;
    for (int slot = 0; slot < 3; ++slot) {
        const std::string name = "scpt.epoch" + std::to_string(slot) + ".jsonl";
        any_diff = any_diff || read_file(a.path / name) != read_file(c.path / name);
    }
    CHECK(any_diff);
}

TEST_CASE("chunk owned by two structures is rejected") {
    Fixture f;
    TempDir dir("structkit_scpt_owner");
    ScptConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(
        build_scpt_dataset(f.chunks, {&f.structure, &f.structure}, f.pool, cfg, dir.path),
        Error);
    // and a chunk owned by none
    auto extra = f.chunks;
    extra.push_back(make_chunk("z#0", "stray"));
    CHECK_THROWS_AS(build_scpt_dataset(extra, {&f.structure}, f.pool, cfg, dir.path),
                    UnknownChunk);
}

TEST_CASE("per-document language override lands in records and manifest") {
    Fixture f;
    TempDir dir("structkit_scpt_lang");
    ScptConfig cfg;
    cfg.epochs = 1;
    auto m = build_scpt_dataset(f.chunks, {&f.structure}, f.pool, cfg, dir.path, 0,
                                {{"d", "zh"}});
    CHECK(m.counts_by_language.at("zh") == 2);
    CHECK(m.counts_by_language.at("en") == 1);  // recall record keeps the default
}
