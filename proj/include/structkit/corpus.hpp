#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "structkit/errors.hpp"
#include "structkit/llm_client.hpp"
#include "structkit/text.hpp"

namespace structkit {

enum class SourceKind { textbook, web_fragmented };

inline std::string_view source_kind_name(SourceKind k) {
    return k == SourceKind::textbook ? "textbook" : "web_fragmented";
}

inline SourceKind source_kind_from_name(std::string_view name) {
    return name == "web_fragmented" ? SourceKind::web_fragmented : SourceKind::textbook;
}

struct Document {
    std::string id;
    std::string title;
    std::string language = "en";
    std::string body;
    SourceKind source_kind = SourceKind::textbook;
};

struct Paragraph {
    std::string doc_id;
    std::size_t index = 0;
    std::string text;
    std::size_t token_count = 0;
    // Exact bytes of the normalized body preceding this paragraph since the
    // previous one (or since the start of the body for index 0), and the
    // remainder after the last paragraph. Joining leading+text in order plus
    // the final trailing reproduces the normalized body.
    std::string leading;
    std::string trailing;  // nonempty only on the last paragraph
};

struct Chunk {
    std::string id;
    std::string doc_id;
    std::size_t index = 0;
    std::string text;
    std::size_t token_count = 0;
    std::optional<std::string> title;
    std::string leading;
    std::string trailing;
};

struct SegmentationConfig {
    TokenizerMode tokenizer = TokenizerMode::unicode_words;
};

// Paragraph = maximal run of non-blank lines (single newlines are soft
// wraps); separators between runs are recorded byte-exactly.
inline std::vector<Paragraph> segment_paragraphs(const Document& doc,
                                                 const SegmentationConfig& rules = {}) {
    const std::string body = normalize_body(doc.body);
    std::vector<Paragraph> out;
    std::size_t pos = 0;
    std::size_t sep_start = 0;
    while (pos < body.size()) {
        // advance over blank region
        std::size_t line_end = body.find('\n', pos);
        if (line_end == std::string::npos) line_end = body.size();
        if (is_blank_line(std::string_view(body).substr(pos, line_end - pos))) {
            pos = line_end < body.size() ? line_end + 1 : line_end;
            continue;
        }
        // paragraph: extend over consecutive non-blank lines
        const std::size_t para_start = pos;
        std::size_t para_end = line_end;
        while (para_end < body.size()) {
            std::size_t next = para_end + 1;
            std::size_t next_end = body.find('\n', next);
            if (next_end == std::string::npos) next_end = body.size();
            if (next >= body.size() ||
                is_blank_line(std::string_view(body).substr(next, next_end - next)))
                break;
            para_end = next_end;
        }
        Paragraph p;
        p.doc_id = doc.id;
        p.index = out.size();
        p.text = body.substr(para_start, para_end - para_start);
        p.token_count = count_tokens(p.text, rules.tokenizer);
        p.leading = body.substr(sep_start, para_start - sep_start);
        out.push_back(std::move(p));
        sep_start = para_end;
        pos = para_end < body.size() ? para_end + 1 : para_end;
    }
    if (out.empty() && !body.empty()) {
        // whitespace-only body degenerates to a single paragraph of it
        Paragraph p;
        p.doc_id = doc.id;
        p.text = body;
        p.token_count = count_tokens(p.text, rules.tokenizer);
        out.push_back(std::move(p));
        sep_start = body.size();
    }
    if (!out.empty()) out.back().trailing = body.substr(sep_start);
    return out;
}

inline std::string reconstruct_body(const std::vector<Paragraph>& paragraphs) {
    std::string out;
    for (const auto& p : paragraphs) {
        out += p.leading;
        out += p.text;
    }
    if (!paragraphs.empty()) out += paragraphs.back().trailing;
    return out;
}

// Fallback split for paragraphs over budget: cut after sentence
// terminators, then hard-cut any sentence that still exceeds the budget.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> parts;
    std::size_t i = 0, start = 0;
    while (i < text.size()) {
        const char32_t cp = utf8::decode(text, i);
        if (cp == '.' || cp == '!' || cp == '?' || cp == U'。' || cp == U'！' || cp == U'？') {
            parts.emplace_back(text.substr(start, i - start));
            start = i;
        }
    }
    if (start < text.size()) parts.emplace_back(text.substr(start));
    return parts;
}

inline std::vector<std::string> hard_split(std::string_view text, std::size_t budget,
                                           TokenizerMode mode) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    std::size_t i = 0;
    std::size_t prev = 0;
    while (i < text.size()) {
        prev = i;
        utf8::decode(text, i);
        if (count_tokens(text.substr(start, i - start), mode) > budget && prev > start) {
            parts.emplace_back(text.substr(start, prev - start));
            start = prev;
        }
    }
    if (start < text.size()) parts.emplace_back(text.substr(start));
    return parts;
}

enum class OversizePolicy { reject, split };

struct PackConfig {
    std::size_t budget = 2048;  // presets: 2048, 3072
    TokenizerMode tokenizer = TokenizerMode::unicode_words;
    OversizePolicy oversize = OversizePolicy::reject;
};

namespace detail {

struct Piece {
    std::string text;     // exact substring of the body
    std::string leading;  // separator before this piece
    std::string trailing;
    std::size_t tokens = 0;
    std::size_t para_index = 0;
};

inline std::vector<Piece> to_pieces(const std::vector<Paragraph>& paragraphs,
                                    const PackConfig& config) {
    std::vector<Piece> pieces;
    for (const auto& p : paragraphs) {
        if (p.token_count <= config.budget) {
            pieces.push_back({p.text, p.leading, p.trailing, p.token_count, p.index});
            continue;
        }
        if (config.oversize == OversizePolicy::reject)
            throw OversizedParagraph(p.doc_id, p.index);
        std::vector<std::string> sentences = split_sentences(p.text);
        std::vector<std::string> flat;
        for (auto& s : sentences) {
            if (count_tokens(s, config.tokenizer) > config.budget) {
                for (auto& piece : hard_split(s, config.budget, config.tokenizer))
                    flat.push_back(std::move(piece));
            } else {
                flat.push_back(std::move(s));
            }
        }
        for (std::size_t k = 0; k < flat.size(); ++k) {
            Piece piece;
            piece.tokens = count_tokens(flat[k], config.tokenizer);
            piece.text = std::move(flat[k]);
            piece.leading = (k == 0) ? p.leading : "";
            piece.trailing = (k + 1 == flat.size()) ? p.trailing : "";
            piece.para_index = p.index;
            pieces.push_back(std::move(piece));
        }
    }
    return pieces;
}

}  // namespace detail

// Greedy first-fit in order: accumulate while the running total stays
// within budget, then cut. Separators interior to a chunk stay in its
// text; boundary separators move to the next chunk's leading.
inline std::vector<Chunk> pack_chunks(const std::vector<Paragraph>& paragraphs,
                                      const PackConfig& config) {
    std::vector<Chunk> chunks;
    if (paragraphs.empty()) return chunks;
    const std::string& doc_id = paragraphs.front().doc_id;
    auto pieces = detail::to_pieces(paragraphs, config);

    Chunk cur;
    std::size_t members = 0;
    auto flush = [&]() {
        if (members == 0) return;
        cur.id = doc_id + "#" + std::to_string(chunks.size());
        cur.doc_id = doc_id;
        cur.index = chunks.size();
        chunks.push_back(std::move(cur));
        cur = Chunk{};
        members = 0;
    };
    for (auto& piece : pieces) {
        const std::size_t joined =
            members == 0 ? piece.tokens
                         : count_tokens(cur.text + piece.leading + piece.text, config.tokenizer);
        if (members > 0 && joined > config.budget) {
            const std::string boundary = piece.leading;
            flush();
            cur.leading = boundary;
        } else if (members > 0) {
            cur.text += piece.leading;
        } else {
            cur.leading += piece.leading;
        }
        cur.text += piece.text;
        cur.trailing = piece.trailing;
        cur.token_count = count_tokens(cur.text, config.tokenizer);
        ++members;
    }
    flush();
    return chunks;
}

inline std::string reconstruct_from_chunks(const std::vector<Chunk>& chunks) {
    std::string out;
    for (const auto& c : chunks) {
        out += c.leading;
        out += c.text;
    }
    if (!chunks.empty()) out += chunks.back().trailing;
    return out;
}

inline std::string build_title_prompt(const Chunk& chunk) {
    std::ostringstream p;
    p << "Summarize the following passage with a single concise title "
         "(one line, at most 12 words). Reply with the title only.\n"
      << "=== TEXT ===\n"
      << chunk.text << "\n=== END ===\n";
    return p.str();
}

// First non-empty line of the model response, trimmed, capped at 200 chars.
inline std::string normalize_title(const std::string& response) {
    for (const auto& line : split_lines(response)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t.size() > 200) t.resize(200);
        return t;
    }
    return "";
}

struct TitleReport {
    std::vector<std::string> failed_chunk_ids;
};

// Titles every chunk via the client (bounded-parallel, results reassembled
// in input order). Chunks whose generation fails after retries stay
// untitled and are reported for exclusion from structuring.
inline TitleReport request_titles(std::vector<Chunk>& chunks, GenerationClient& client,
                                  int concurrency = 1) {
    TitleReport report;
    auto one = [&](const Chunk& chunk) -> std::optional<std::string> {
        GenerationRequest req;
        req.prompt = build_title_prompt(chunk);
        req.request_tag = RequestTag::title;
        req.max_output_tokens = 64;
        try {
            const std::string title = normalize_title(client.generate(req).text);
            if (title.empty()) return std::nullopt;
            return title;
        } catch (const GenerationFailed&) {
            return std::nullopt;
        }
    };
    auto titles = parallel_map(chunks, concurrency, one);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (titles[i])
            chunks[i].title = *titles[i];
        else
            report.failed_chunk_ids.push_back(chunks[i].id);
    }
    return report;
}

}  // namespace structkit
