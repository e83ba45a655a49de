#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "structkit/corpus.hpp"
#include "structkit/llm_client.hpp"
#include "structkit/rng.hpp"
#include "structkit/text.hpp"

using namespace structkit;

namespace {

Document make_doc(std::string body) {
    Document d;
    d.id = "doc";
    d.title = "Doc";
    d.body = std::move(body);
    return d;
}

// Random bodies for round-trip property checks: words, soft newlines, and
// blank-line separators of varying width.
std::string random_body(Rng& rng) {
    static const char* words[] = {"alpha", "beta", "gamma", "delta", "epsilon",
                                  "zeta",  "eta",  "theta", "iota",  "kappa"};
    std::string body;
    const std::size_t paras = 1 + rng.bounded(6);
    for (std::size_t p = 0; p < paras; ++p) {
        const std::size_t lines = 1 + rng.bounded(3);
        for (std::size_t l = 0; l < lines; ++l) {
            const std::size_t n = 1 + rng.bounded(8);
            for (std::size_t w = 0; w < n; ++w) {
                body += words[rng.bounded(10)];
                if (w + 1 < n) body += ' ';
            }
            if (l + 1 < lines) body += '\n';
        }
        if (p + 1 < paras) body += std::string(2 + rng.bounded(3), '\n');
    }
    if (rng.bounded(2)) body += '\n';
    return body;
}

}  // namespace

TEST_CASE("blank-line split produces two paragraphs") {
    auto paras = segment_paragraphs(make_doc("A.\n\nB."));
    REQUIRE(paras.size() == 2);
    CHECK(paras[0].text == "A.");
    CHECK(paras[1].text == "B.");
}

TEST_CASE("body without blank lines is a single paragraph") {
    const std::string body = "line one\nline two\nline three";
    auto paras = segment_paragraphs(make_doc(body));
    REQUIRE(paras.size() == 1);
    CHECK(paras[0].text == body);
}

TEST_CASE("separator-preserving round trip") {
    const std::string body = "P1\n\n\n\nP2";
    const auto doc = make_doc(body);
    auto paras = segment_paragraphs(doc);
    REQUIRE(paras.size() == 2);
    CHECK(reconstruct_body(paras) == normalize_body(body));
}

TEST_CASE("normalization: BOM, CRLF, blank-line collapse") {
    CHECK(normalize_body("\xEF\xBB\xBFhello") == "hello");
    CHECK(normalize_body("a\r\nb") == "a\nb");
    // three blank lines collapse to two
    CHECK(normalize_body("P1\n\n\n\nP2") == "P1\n\n\nP2");
    // two blank lines stay
    CHECK(normalize_body("P1\n\n\nP2") == "P1\n\n\nP2");
}

TEST_CASE("whitespace-only paragraphs dropped, separators preserved") {
    auto paras = segment_paragraphs(make_doc("A\n\n \t\n\nB"));
    REQUIRE(paras.size() == 2);
    CHECK(paras[0].text == "A");
    CHECK(paras[1].text == "B");
    CHECK(reconstruct_body(paras) == normalize_body("A\n\n \t\n\nB"));
}

TEST_CASE("count_tokens basics") {
    CHECK(count_tokens("", TokenizerMode::unicode_words) == 0);
    CHECK(count_tokens("", TokenizerMode::bytes_div4) == 0);
    CHECK(count_tokens("the cat sat", TokenizerMode::unicode_words) == 3);
    CHECK(count_tokens(std::string(4000, 'x'), TokenizerMode::bytes_div4) == 1000);
    CHECK(count_tokens("abc", TokenizerMode::bytes_div4) == 1);  // ceil(3/4)
    CHECK(count_tokens("肝脏 function", TokenizerMode::unicode_words) == 3);
}

TEST_CASE("count_tokens monotone under concatenation") {
    Rng rng(7);
    static const char* bits[] = {"cat", " ", "dog house", "\n", "a", "42", ",", "肝"};
    for (int trial = 0; trial < 500; ++trial) {
        std::string a, b;
        for (std::size_t i = 0, n = rng.bounded(5); i < n; ++i) a += bits[rng.bounded(8)];
        for (std::size_t i = 0, n = rng.bounded(5); i < n; ++i) b += bits[rng.bounded(8)];
        for (auto mode : {TokenizerMode::unicode_words, TokenizerMode::bytes_div4}) {
            const std::size_t ab = count_tokens(a + b, mode);
            CHECK(ab >= std::max(count_tokens(a, mode), count_tokens(b, mode)));
        }
    }
}

TEST_CASE("pack_chunks greedy first-fit") {
    // token counts [1000, 1200, 900] with budget 2048: no pair fits
    std::string w1000, w1200, w900;
    for (int i = 0; i < 1000; ++i) w1000 += "a ";
    for (int i = 0; i < 1200; ++i) w1200 += "b ";
    for (int i = 0; i < 900; ++i) w900 += "c ";
    const auto doc = make_doc(trim(w1000) + "\n\n" + trim(w1200) + "\n\n" + trim(w900));
    auto paras = segment_paragraphs(doc);
    REQUIRE(paras.size() == 3);
    CHECK(paras[0].token_count == 1000);
    CHECK(paras[1].token_count == 1200);
    CHECK(paras[2].token_count == 900);
    PackConfig cfg;
    cfg.budget = 2048;
    auto chunks = pack_chunks(paras, cfg);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].token_count == 1000);
    CHECK(chunks[1].token_count == 1200);
    CHECK(chunks[2].token_count == 900);
}

TEST_CASE("pack_chunks merges what fits") {
    std::string a, b;
    for (int i = 0; i < 500; ++i) a += "x ";
    for (int i = 0; i < 500; ++i) b += "y ";
    auto paras = segment_paragraphs(make_doc(trim(a) + "\n\n" + trim(b)));
    PackConfig cfg;
    cfg.budget = 2048;
    auto chunks = pack_chunks(paras, cfg);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].token_count == 1000);
}

TEST_CASE("oversized paragraph rejected or sentence-split") {
    std::string big;
    for (int i = 0; i < 30; ++i) big += "one two three four five. ";
    auto paras = segment_paragraphs(make_doc(trim(big)));
    PackConfig cfg;
    cfg.budget = 20;
    CHECK_THROWS_AS(pack_chunks(paras, cfg), OversizedParagraph);
    cfg.oversize = OversizePolicy::split;
    auto chunks = pack_chunks(paras, cfg);
    CHECK(chunks.size() > 1);
    for (const auto& c : chunks) CHECK(c.token_count <= cfg.budget);
    CHECK(reconstruct_from_chunks(chunks) == normalize_body(trim(big)));
}

TEST_CASE("chunk round trip and budget on random bodies") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const auto doc = make_doc(random_body(rng));
        auto paras = segment_paragraphs(doc);
        CHECK(reconstruct_body(paras) == normalize_body(doc.body));
        PackConfig cfg;
        cfg.budget = 1 + rng.bounded(30);
        cfg.oversize = OversizePolicy::split;
        auto chunks = pack_chunks(paras, cfg);
        for (const auto& c : chunks) CHECK(c.token_count <= cfg.budget);
        CHECK(reconstruct_from_chunks(chunks) == normalize_body(doc.body));
        // determinism: identical inputs give identical boundaries and ids
        auto again = pack_chunks(segment_paragraphs(doc), cfg);
        REQUIRE(again.size() == chunks.size());
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            CHECK(again[i].id == chunks[i].id);
            CHECK(again[i].text == chunks[i].text);
        }
    }
}

TEST_CASE("request_titles: mock passthrough and normalization") {
    auto doc = make_doc("Fats are broken down for energy.\n\nProteins are chains of amino acids.");
    auto chunks = pack_chunks(segment_paragraphs(doc), PackConfig{});
    REQUIRE(chunks.size() == 1);

    MockClient client;
    client.add_response(build_title_prompt(chunks[0]), "Lipid Metabolism");
    auto report = request_titles(chunks, client);
    CHECK(report.failed_chunk_ids.empty());
    REQUIRE(chunks[0].title.has_value());
    CHECK(*chunks[0].title == "Lipid Metabolism");
}

TEST_CASE("request_titles: first non-empty line of a chatty response") {
    auto chunks = pack_chunks(segment_paragraphs(make_doc("Some text.")), PackConfig{});
    MockClient client;
    client.add_response(build_title_prompt(chunks[0]), "\n\n  Chapter Title  \nmore prose\n");
    request_titles(chunks, client);
    REQUIRE(chunks[0].title.has_value());
    CHECK(*chunks[0].title == "Chapter Title");
}

TEST_CASE("request_titles: empty response leaves chunk untitled") {
    auto chunks = pack_chunks(segment_paragraphs(make_doc("Some text.")), PackConfig{});
    MockClient client;
    client.add_response(build_title_prompt(chunks[0]), "");
    auto report = request_titles(chunks, client);
    REQUIRE(report.failed_chunk_ids.size() == 1);
    CHECK(report.failed_chunk_ids[0] == chunks[0].id);
    CHECK(!chunks[0].title.has_value());
}

TEST_CASE("title longer than 200 chars is truncated") {
    CHECK(normalize_title(std::string(500, 't')).size() == 200);
}
