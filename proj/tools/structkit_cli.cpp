// structkit command-line pipeline: ingest -> structure -> build-scpt /
// build-ssft -> evaluate, plus the scaling-curve fitter and structure stats.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "structkit/corpus.hpp"
#include "structkit/eval.hpp"
#include "structkit/http_client.hpp"
#include "structkit/io.hpp"
#include "structkit/llm_client.hpp"
#include "structkit/mindmap.hpp"
#include "structkit/scpt.hpp"
#include "structkit/ssft.hpp"
#include "structkit/taxonomy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace structkit;

namespace {

// Exit codes, stable and documented in the README.
constexpr int kExitUsage = 1;
constexpr int kExitIngest = 2;
constexpr int kExitStructure = 3;
constexpr int kExitScpt = 4;
constexpr int kExitSsft = 5;
constexpr int kExitEvaluate = 6;
constexpr int kExitScaling = 7;

struct GlobalOptions {
    std::string config_path;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool offline = false;
    std::string mock_dir;
    std::map<std::string, std::string> config;

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = config.find(key);
        return it == config.end() ? fallback : it->second;
    }
    std::uint64_t effective_seed() const {
        if (seed_set) return seed;
        auto it = config.find("seed");
        if (it == config.end()) throw Error("seed is mandatory: pass --seed or set seed= in config");
        return std::stoull(it->second);
    }
};

class AuditedClient : public GenerationClient {
public:
    AuditedClient(std::unique_ptr<GenerationClient> inner, std::shared_ptr<AuditLog> log)
        : inner_(std::move(inner)), log_(std::move(log)) {}
    GenerationResponse generate(const GenerationRequest& req) override {
        auto resp = inner_->generate(req);
        if (log_) log_->record(req, resp, 1);
        return resp;
    }

private:
    std::unique_ptr<GenerationClient> inner_;
    std::shared_ptr<AuditLog> log_;
};

std::unique_ptr<GenerationClient> make_client(const GlobalOptions& g,
                                              std::shared_ptr<AuditLog> audit) {
    if (!g.mock_dir.empty())
        return std::make_unique<AuditedClient>(std::make_unique<MockClient>(g.mock_dir), audit);
    if (g.offline || g.get("base_url", "").empty())
        return std::make_unique<AuditedClient>(std::make_unique<OfflineClient>(), audit);
    ClientConfig cc;
    cc.base_url = g.get("base_url", "");
    cc.model = g.get("model", "");
    cc.api_key_env = g.get("api_key_env", "STRUCTKIT_API_KEY");
    cc.timeout_seconds = std::stoi(g.get("timeout", "60"));
    cc.retries = std::stoi(g.get("retries", "3"));
    cc.concurrency = std::stoi(g.get("concurrency", "4"));
    return std::make_unique<RetryingClient>(make_http_transport(cc), cc, audit);
}

std::vector<FramingTemplate> load_pool(const GlobalOptions& g) {
    const std::string path = g.get("template_pool", "");
    if (path.empty()) return default_template_pool();
    return load_template_pool(json::parse(read_file(path)));
}

TokenizerMode tokenizer_of(const GlobalOptions& g) {
    return tokenizer_mode_from_name(g.get("tokenizer_mode", "unicode_words"));
}

json doc_meta_json(const std::vector<Document>& docs) {
    json meta = json::object();
    for (const auto& d : docs)
        meta[d.id] = {{"title", d.title},
                      {"language", d.language},
                      {"source_kind", std::string(source_kind_name(d.source_kind))}};
    return meta;
}

int cmd_ingest(const GlobalOptions& g, const std::string& input) {
    try {
        const auto docs = load_corpus(input, g.get("language", "en"));
        if (docs.empty()) {
            std::cerr << "ingest: no documents found in " << input << "\n";
            return kExitIngest;
        }
        fs::create_directories(g.output_dir);
        auto audit = std::make_shared<AuditLog>(fs::path(g.output_dir) / "llm_audit.jsonl");
        auto client = make_client(g, audit);
        PackConfig pack;
        pack.budget = std::stoul(g.get("budget", "2048"));
        pack.tokenizer = tokenizer_of(g);
        pack.oversize = OversizePolicy::split;
        SegmentationConfig seg{pack.tokenizer};

        std::vector<json> rows;
        std::size_t paragraph_total = 0, untitled = 0;
        const int concurrency = std::stoi(g.get("concurrency", "1"));
        for (const auto& doc : docs) {
            auto paragraphs = segment_paragraphs(doc, seg);
            paragraph_total += paragraphs.size();
            auto chunks = pack_chunks(paragraphs, pack);
            auto report = request_titles(chunks, *client, concurrency);
            untitled += report.failed_chunk_ids.size();
            for (const auto& c : chunks) rows.push_back(chunk_to_json(c));
        }
        write_jsonl(fs::path(g.output_dir) / "chunks.jsonl", rows);
        json report{{"documents", docs.size()},
                    {"paragraphs", paragraph_total},
                    {"chunks", rows.size()},
                    {"untitled", untitled},
                    {"budget", pack.budget},
                    {"tokenizer_mode", std::string(tokenizer_mode_name(pack.tokenizer))}};
        write_file(fs::path(g.output_dir) / "ingest_report.json", report.dump(2) + "\n");
        write_file(fs::path(g.output_dir) / "doc_meta.json", doc_meta_json(docs).dump(2) + "\n");
        std::cout << "ingested " << docs.size() << " documents into " << rows.size()
                  << " chunks (" << untitled << " untitled)\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "ingest: " << e.what() << "\n";
        return kExitIngest;
    }
}

void print_stats(const KnowledgeStructure& s) {
    const auto st = structure_stats(s);
    std::cout << "books=" << st.books << " chapters=" << st.chapters
              << " sections=" << st.sections << " points=" << st.points << "\n";
}

int cmd_structure(const GlobalOptions& g) {
    try {
        const fs::path out(g.output_dir);
        auto chunk_rows = read_jsonl(out / "chunks.jsonl");
        std::vector<Chunk> chunks;
        for (const auto& r : chunk_rows) chunks.push_back(chunk_from_json(r));
        std::erase_if(chunks, [](const Chunk& c) { return !c.title || c.title->empty(); });
        if (chunks.empty()) throw Error("no titled chunks to structure");

        json meta = json::object();
        if (fs::exists(out / "doc_meta.json")) meta = json::parse(read_file(out / "doc_meta.json"));
        const std::string domain_label = g.get("domain_label", "Domain Knowledge");

        KnowledgeStructure s;
        const std::string mode = g.get("structure_mode", "prompted");
        if (mode == "clustering") {
            TfIdfEmbedder embedder;
            ClusterConfig cc;
            cc.seed = g.effective_seed();
            cc.branching = std::stoul(g.get("cluster_branching", "2"));
            cc.leaf_size = std::stoul(g.get("cluster_leaf_size", "8"));
            cc.max_depth = std::stoul(g.get("cluster_max_depth", "4"));
            cc.domain_label = domain_label;
            s = build_structure_by_clustering(chunks, embedder, cc);
        } else {
            auto audit = std::make_shared<AuditLog>(out / "llm_audit.structure.jsonl");
            auto client = make_client(g, audit);
            std::map<std::string, std::vector<Chunk>> by_doc;
            std::vector<std::string> doc_order;
            for (const auto& c : chunks) {
                if (!by_doc.count(c.doc_id)) doc_order.push_back(c.doc_id);
                by_doc[c.doc_id].push_back(c);
            }
            if (doc_order.size() == 1) {
                ExtractOptions opts;
                opts.domain_label = meta.contains(doc_order[0])
                                        ? meta[doc_order[0]].value("title", doc_order[0])
                                        : domain_label;
                s = extract_structure(chunks, *client, opts);
            } else {
                std::vector<LabelTree> books;
                for (const auto& doc : doc_order) {
                    ExtractOptions opts;
                    opts.domain_label =
                        meta.contains(doc) ? meta[doc].value("title", doc) : doc;
                    books.push_back(extract_book_tree(by_doc[doc], *client, opts));
                }
                s = merge_structures(books, domain_label,
                                     "struct-" + fnv1a_hex(domain_label +
                                                           std::to_string(chunks.size())));
            }
        }
        const auto problems = s.validate();
        if (!problems.empty()) throw Error("invalid structure: " + problems.front());
        write_file(out / "structure.json", structure_to_json(s).dump(2) + "\n");
        write_file(out / "structure.outline.txt", structure_to_outline(s));
        print_stats(s);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "structure: " << e.what() << "\n";
        return kExitStructure;
    }
}

int cmd_build_scpt(const GlobalOptions& g) {
    try {
        const fs::path out(g.output_dir);
        auto s = structure_from_json(json::parse(read_file(out / "structure.json")));
        std::vector<Chunk> chunks;
        for (const auto& r : read_jsonl(out / "chunks.jsonl")) {
            Chunk c = chunk_from_json(r);
            if (s.chunk_index.count(c.id)) chunks.push_back(std::move(c));
        }
        std::map<std::string, std::string> lang_by_doc;
        if (fs::exists(out / "doc_meta.json")) {
            const json meta = json::parse(read_file(out / "doc_meta.json"));
            for (auto it = meta.begin(); it != meta.end(); ++it)
                lang_by_doc[it.key()] = it.value().value("language", "en");
        }
        ScptConfig config;
        config.seed = g.effective_seed();
        config.epochs = std::stoul(g.get("epochs", "3"));
        config.tokenizer = tokenizer_of(g);
        config.language = g.get("language", "en");
        config.condition_scope = g.get("condition_scope", "path_local") == "full"
                                     ? MindmapScope::full
                                     : MindmapScope::path_local;
        const auto pool = load_pool(g);
        const auto manifest = build_scpt_dataset(chunks, {&s}, pool, config, out,
                                                 std::stoul(g.get("budget", "2048")),
                                                 lang_by_doc);
        std::cout << "scpt: " << manifest.records_per_epoch << " records/epoch x "
                  << manifest.epochs << " epochs, supervised tokens "
                  << manifest.supervised_tokens << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "build-scpt: " << e.what() << "\n";
        return kExitScpt;
    }
}

int cmd_build_ssft(const GlobalOptions& g, std::size_t count, const std::string& test_set_path) {
    try {
        const fs::path out(g.output_dir);
        auto s = structure_from_json(json::parse(read_file(out / "structure.json")));
        std::vector<Chunk> chunks;
        for (const auto& r : read_jsonl(out / "chunks.jsonl"))
            chunks.push_back(chunk_from_json(r));
        std::vector<TestItem> test_set;
        if (!test_set_path.empty()) {
            for (const auto& r : read_jsonl(test_set_path))
                test_set.push_back({r.value("id", std::to_string(test_set.size())),
                                    r.at("question").get<std::string>(),
                                    r.value("answer", "")});
        }
        auto audit = std::make_shared<AuditLog>(out / "llm_audit.ssft.jsonl");
        auto client = make_client(g, audit);
        SsftConfig config;
        config.seed = g.effective_seed();
        config.max_branches = std::stoul(g.get("max_branches", "3"));
        config.target_count = count;
        config.leakage_threshold = std::stod(g.get("leakage_threshold", "0.5"));
        const auto result = build_ssft_dataset(s, chunks, *client, test_set, config);
        std::vector<json> plain_rows, cot_rows;
        for (const auto& q : result.plain) plain_rows.push_back(qa_to_json(q));
        for (const auto& q : result.cot) cot_rows.push_back(qa_to_json(q));
        write_jsonl(out / "ssft.plain.jsonl", plain_rows);
        write_jsonl(out / "ssft.cot.jsonl", cot_rows);
        write_file(out / "leakage_report.json",
                   leakage_report_to_json(result.leakage).dump(2) + "\n");
        std::cout << "ssft: " << result.plain.size() << " plain + " << result.cot.size()
                  << " cot samples, " << result.leakage.removed.size() << " removed by leakage, "
                  << result.dropped_parse_failures << " dropped\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "build-ssft: " << e.what() << "\n";
        return kExitSsft;
    }
}

int cmd_evaluate(const GlobalOptions& g, const std::string& responses_path,
                 const std::string& references_path, const std::vector<std::string>& metrics,
                 const std::string& out_path, const std::string& csv_path) {
    try {
        std::map<std::string, std::string> responses;
        for (const auto& r : read_jsonl(responses_path))
            responses[r.at("id").get<std::string>()] = r.at("response").get<std::string>();
        struct Ref {
            std::string id, reference;
            std::optional<std::vector<std::string>> options;
            std::optional<std::vector<std::size_t>> gold;
        };
        std::vector<Ref> refs;
        for (const auto& r : read_jsonl(references_path)) {
            Ref ref;
            ref.id = r.at("id").get<std::string>();
            ref.reference = r.value("reference", "");
            if (r.contains("options")) ref.options = r["options"].get<std::vector<std::string>>();
            if (r.contains("gold")) {
                if (r["gold"].is_array()) ref.gold = r["gold"].get<std::vector<std::size_t>>();
                else ref.gold = std::vector<std::size_t>{r["gold"].get<std::size_t>()};
            }
            refs.push_back(std::move(ref));
        }
        for (const auto& ref : refs)
            if (!responses.count(ref.id)) throw Error("missing response for id " + ref.id);

        const LanguageMode lang = g.get("language_mode", "standard") == "cjk"
                                      ? LanguageMode::cjk
                                      : LanguageMode::standard;
        json per_metric = json::object();
        std::vector<MetricResult> results;
        for (const auto& m : metrics) {
            std::vector<double> values;
            for (const auto& ref : refs) {
                const std::string& resp = responses[ref.id];
                if (m == "recall") values.push_back(answer_recall(resp, ref.reference, lang));
                else if (m == "f1") values.push_back(token_f1(resp, ref.reference, lang));
                else if (m == "rouge_l") values.push_back(rouge_l(resp, ref.reference, lang));
                else if (m == "exact_match") {
                    if (!ref.options || !ref.gold) { values.push_back(0.0); continue; }
                    if (ref.gold->size() > 1) {
                        const auto pred = exact_match_choice_set(resp, *ref.options);
                        const std::set<std::size_t> want(ref.gold->begin(), ref.gold->end());
                        values.push_back(pred == want ? 1.0 : 0.0);
                    } else {
                        const auto pred = exact_match_choice(resp, *ref.options);
                        values.push_back(pred && *pred == ref.gold->front() ? 1.0 : 0.0);
                    }
                } else {
                    throw Error("unknown metric: " + m);
                }
            }
            auto result = aggregate_metric(m, std::move(values));
            json items = json::array();
            for (std::size_t i = 0; i < refs.size(); ++i)
                items.push_back({{"id", refs[i].id}, {"value", result.per_item[i]}});
            per_metric[m] = {{"aggregate", result.aggregate}, {"items", std::move(items)}};
            results.push_back(std::move(result));
        }
        const json report{{"metrics", per_metric}, {"items", refs.size()}};
        write_file(out_path, report.dump(2) + "\n");
        if (!csv_path.empty()) {
            std::ostringstream csv;
            csv << "id";
            for (const auto& r : results) csv << "," << r.name;
            csv << "\n";
            for (std::size_t i = 0; i < refs.size(); ++i) {
                csv << refs[i].id;
                for (const auto& r : results) csv << "," << r.per_item[i];
                csv << "\n";
            }
            write_file(csv_path, csv.str());
        }
        for (const auto& r : results)
            std::cout << r.name << " = " << r.aggregate << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "evaluate: " << e.what() << "\n";
        return kExitEvaluate;
    }
}

int cmd_fit_scaling(const std::string& points_path, const std::vector<double>& eval_at,
                    const std::string& out_path, const std::string& points_out) {
    try {
        std::vector<ScalingPoint> points;
        const std::string content = read_file(points_path);
        if (trim(content).front() == '{' || trim(content).front() == '[') {
            json j = json::parse(content);
            const json rows = j.is_array() ? j : json::array({j});
            for (const auto& r : rows)
                points.push_back({r.at("r").get<double>(), r.at("p").get<double>()});
        } else {
            for (const auto& line : split_lines(content)) {
                std::istringstream ss(line);
                ScalingPoint pt;
                if (ss >> pt.r >> pt.p) points.push_back(pt);
            }
        }
        const auto curve = fit_scaling_curve(points);
        json evals = json::array();
        for (double r : eval_at)
            evals.push_back({{"r", r}, {"p", eval_scaling(curve, r)}});
        const json out{{"a", curve.a}, {"b", curve.b}, {"c", curve.c}, {"evaluations", evals}};
        write_file(out_path, out.dump(2) + "\n");
        if (!points_out.empty()) {
            std::ostringstream dat;
            dat << "# r p fitted\n";
            for (const auto& pt : points)
                dat << pt.r << " " << pt.p << " " << eval_scaling(curve, pt.r) << "\n";
            write_file(points_out, dat.str());
        }
        std::cout << "p(r) = " << curve.a << "*(ln r)^2 + " << curve.b << "*ln r + " << curve.c
                  << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fit-scaling: " << e.what() << "\n";
        return kExitScaling;
    }
}

int cmd_stats(const std::string& structure_path) {
    try {
        const auto s = structure_from_json(json::parse(read_file(structure_path)));
        print_stats(s);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "stats: " << e.what() << "\n";
        return kExitStructure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structkit: structure-aware training data pipeline"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "key = value config file");
    app.add_option("--output-dir", g.output_dir, "pipeline output directory");
    auto* seed_opt = app.add_option("--seed", g.seed, "master RNG seed");
    app.add_flag("--offline", g.offline, "force the deterministic offline client and embedder");
    app.add_option("--mock-dir", g.mock_dir, "mock fixture directory (prompt-hash keyed)");

    std::string ingest_input;
    auto* ingest = app.add_subcommand("ingest", "segment, pack and title a corpus");
    ingest->add_option("input", ingest_input, "corpus directory or JSONL manifest")->required();

    auto* structure = app.add_subcommand("structure", "extract the knowledge structure");

    auto* build_scpt = app.add_subcommand("build-scpt", "emit loss-masked SCPT epoch files");

    std::size_t ssft_count = 0;
    std::string test_set_path;
    auto* build_ssft = app.add_subcommand("build-ssft", "synthesize SSFT QA samples");
    build_ssft->add_option("--count", ssft_count,
                           "target sample count (0 = stop at full leaf coverage)");
    build_ssft->add_option("--test-set", test_set_path, "JSONL test set for the leakage filter");

    std::string responses_path, references_path, report_path = "eval_report.json", csv_path;
    std::vector<std::string> metrics{"recall", "f1"};
    auto* evaluate = app.add_subcommand("evaluate", "score model responses");
    evaluate->add_option("--responses", responses_path, "JSONL of {id, response}")->required();
    evaluate->add_option("--references", references_path,
                         "JSONL of {id, reference, options?, gold?}")->required();
    evaluate->add_option("--metrics", metrics, "recall f1 rouge_l exact_match");
    evaluate->add_option("--out", report_path, "report JSON path");
    evaluate->add_option("--csv", csv_path, "optional CSV export");

    std::string points_path, curve_path = "curve.json", points_out;
    std::vector<double> eval_at;
    auto* fit = app.add_subcommand("fit-scaling", "fit the log-ratio scaling curve");
    fit->add_option("--points", points_path, "points file (JSON/JSONL {r,p} or 'r p' lines)")
        ->required();
    fit->add_option("--eval-at", eval_at, "ratios to evaluate the fitted curve at");
    fit->add_option("--out", curve_path, "curve JSON path");
    fit->add_option("--points-out", points_out, "gnuplot-compatible points file");

    std::string stats_path;
    auto* stats = app.add_subcommand("stats", "print structure level counts");
    stats->add_option("structure", stats_path, "structure JSON file")->required();

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;
    try {
        if (!g.config_path.empty()) g.config = parse_config_file(g.config_path);
        if (g.config.count("output_dir") && g.output_dir == "out")
            g.output_dir = g.config["output_dir"];
    } catch (const std::exception& e) {
        std::cerr << "config: " << e.what() << "\n";
        return kExitUsage;
    }

    if (ingest->parsed()) return cmd_ingest(g, ingest_input);
    if (structure->parsed()) return cmd_structure(g);
    if (build_scpt->parsed()) return cmd_build_scpt(g);
    if (build_ssft->parsed()) return cmd_build_ssft(g, ssft_count, test_set_path);
    if (evaluate->parsed())
        return cmd_evaluate(g, responses_path, references_path, metrics, report_path, csv_path);
    if (fit->parsed()) return cmd_fit_scaling(points_path, eval_at, curve_path, points_out);
    if (stats->parsed()) return cmd_stats(stats_path);
    return kExitUsage;
}
