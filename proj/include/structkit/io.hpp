#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structkit/corpus.hpp"
#include "structkit/errors.hpp"

namespace structkit {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(nlohmann::json::parse(line));
    }
    return out;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : rows) out << r.dump() << "\n";
}

inline nlohmann::json chunk_to_json(const Chunk& c) {
    nlohmann::json j{{"id", c.id},
                     {"doc_id", c.doc_id},
                     {"index", c.index},
                     {"text", c.text},
                     {"token_count", c.token_count}};
    if (c.title) j["title"] = *c.title;
    if (!c.leading.empty()) j["leading"] = c.leading;
    if (!c.trailing.empty()) j["trailing"] = c.trailing;
    return j;
}

inline Chunk chunk_from_json(const nlohmann::json& j) {
    Chunk c;
    c.id = j.at("id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.index = j.at("index").get<std::size_t>();
    c.text = j.at("text").get<std::string>();
    c.token_count = j.at("token_count").get<std::size_t>();
    if (j.contains("title")) c.title = j["title"].get<std::string>();
    c.leading = j.value("leading", "");
    c.trailing = j.value("trailing", "");
    return c;
}

inline Document document_from_json(const nlohmann::json& j) {
    Document d;
    d.id = j.at("id").get<std::string>();
    d.title = j.value("title", d.id);
    d.language = j.value("language", "en");
    d.body = j.at("body").get<std::string>();
    d.source_kind = source_kind_from_name(j.value("source_kind", "textbook"));
    return d;
}

// Corpus loader: a JSON Lines manifest (one Document per line) or a
// directory of UTF-8 .txt/.md files, id = filename stem, sorted by name.
inline std::vector<Document> load_corpus(const std::filesystem::path& input,
                                         const std::string& default_language = "en") {
    namespace fs = std::filesystem;
    std::vector<Document> docs;
    if (fs::is_directory(input)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(input)) {
            if (!entry.is_regular_file()) continue;
            const auto ext = entry.path().extension();
            if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Document d;
            d.id = f.stem().string();
            d.title = d.id;
            d.language = default_language;
            d.body = read_file(f);
            docs.push_back(std::move(d));
        }
    } else if (fs::is_regular_file(input)) {
        for (const auto& j : read_jsonl(input)) docs.push_back(document_from_json(j));
    } else {
        throw Error("corpus input not found: " + input.string());
    }
    for (const auto& d : docs)
        if (d.body.empty()) throw Error("document with empty body: " + d.id);
    return docs;
}

// Minimal key = value config file; '#' comments and [section] headers are
// skipped, quotes around values are stripped.
inline std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    std::map<std::string, std::string> kv;
    for (const auto& raw : split_lines(read_file(path))) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        kv[key] = value;
    }
    return kv;
}

}  // namespace structkit
