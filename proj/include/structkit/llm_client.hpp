#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "structkit/errors.hpp"
#include "structkit/text.hpp"

namespace structkit {

enum class RequestTag { title, structure, qa_synthesis, explanation };

inline std::string_view request_tag_name(RequestTag t) {
    switch (t) {
        case RequestTag::title: return "title";
        case RequestTag::structure: return "structure";
        case RequestTag::qa_synthesis: return "qa_synthesis";
        case RequestTag::explanation: return "explanation";
    }
    return "unknown";
}

struct GenerationRequest {
    std::string prompt;
    std::size_t max_output_tokens = 1024;
    double temperature = 0.0;
    std::vector<std::string> stop_sequences;
    RequestTag request_tag = RequestTag::title;
};

enum class FinishReason { stop, length, error };

struct GenerationResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    long latency_ms = 0;
};

// JSON Lines audit sink: one {tag, prompt_hash, response_hash, attempts}
// entry per completed request. Content is time-free so reruns are
// byte-identical.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::filesystem::path& path) : out_(path, std::ios::trunc) {}

    void record(const GenerationRequest& req, const GenerationResponse& resp, int attempts) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!out_.is_open()) return;
        out_ << "{\"tag\":\"" << request_tag_name(req.request_tag)
             << "\",\"prompt_hash\":\"" << fnv1a_hex(req.prompt)
             << "\",\"response_hash\":\"" << fnv1a_hex(resp.text)
             << "\",\"attempts\":" << attempts << "}\n";
        out_.flush();
    }

private:
    std::mutex mu_;
    std::ofstream out_;
};

class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

struct ClientConfig {
    std::string base_url;
    std::string model;
    std::string api_key_env = "STRUCTKIT_API_KEY";
    int timeout_seconds = 60;
    int retries = 3;
    int concurrency = 4;
    std::chrono::milliseconds backoff_base{250};
};

// One transport attempt. status 200 = ok; 429/5xx/negative (network) retry.
struct TransportResult {
    int status = 0;
    std::string body;
};
using Transport = std::function<TransportResult(const GenerationRequest&)>;

inline bool is_retryable_status(int status) {
    return status < 0 || status == 429 || status >= 500;
}

// Retry-with-exponential-backoff wrapper around any transport.
class RetryingClient : public GenerationClient {
public:
    RetryingClient(Transport transport, ClientConfig config,
                   std::shared_ptr<AuditLog> audit = nullptr)
        : transport_(std::move(transport)), config_(std::move(config)), audit_(std::move(audit)) {}

    GenerationResponse generate(const GenerationRequest& request) override {
        const auto start = std::chrono::steady_clock::now();
        int attempts = 0;
        TransportResult last{};
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            if (attempt > 0) {
                const auto delay = config_.backoff_base * (1LL << (attempt - 1));
                if (delay.count() > 0) std::this_thread::sleep_for(delay);
            }
            ++attempts;
            last = transport_(request);
            if (last.status == 200) {
                GenerationResponse resp;
                resp.text = last.body;
                resp.finish_reason = last.body.empty() ? FinishReason::error : FinishReason::stop;
                resp.latency_ms = static_cast<long>(
                    std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start).count());
                if (audit_) audit_->record(request, resp, attempts);
                total_attempts_ += attempts;
                return resp;
            }
            if (!is_retryable_status(last.status)) break;
        }
        total_attempts_ += attempts;
        throw GenerationFailed("status " + std::to_string(last.status) + " after " +
                               std::to_string(attempts) + " attempts");
    }

    long total_attempts() const { return total_attempts_; }

private:
    Transport transport_;
    ClientConfig config_;
    std::shared_ptr<AuditLog> audit_;
    long total_attempts_ = 0;
};

// Fixture-backed mock: responses keyed by FNV-1a hash of the prompt.
// Fixture directory holds one <hash>.txt file per known prompt; entries
// may also be registered programmatically.
class MockClient : public GenerationClient {
public:
    MockClient() = default;
    explicit MockClient(std::filesystem::path fixture_dir) : fixture_dir_(std::move(fixture_dir)) {}

    void add_response(const std::string& prompt, std::string response) {
        canned_[fnv1a_hex(prompt)] = std::move(response);
    }

    GenerationResponse generate(const GenerationRequest& request) override {
        ++calls_;
        const std::string key = fnv1a_hex(request.prompt);
        auto it = canned_.find(key);
        if (it != canned_.end()) return make(it->second);
        if (!fixture_dir_.empty()) {
            std::ifstream in(fixture_dir_ / (key + ".txt"));
            if (in) {
                std::ostringstream ss;
                ss << in.rdbuf();
                return make(ss.str());
            }
        }
        throw GenerationFailed("no mock fixture for prompt hash " + key);
    }

    long calls() const { return calls_; }

private:
    GenerationResponse make(std::string text) {
        GenerationResponse r;
        r.finish_reason = text.empty() ? FinishReason::error : FinishReason::stop;
        r.text = std::move(text);
        return r;
    }
    std::map<std::string, std::string> canned_;
    std::filesystem::path fixture_dir_;
    long calls_ = 0;
};

namespace detail {

inline std::string section_of(const std::string& prompt, const std::string& marker) {
    const std::string open = "=== " + marker + " ===";
    auto pos = prompt.find(open);
    if (pos == std::string::npos) return "";
    pos += open.size();
    auto end = prompt.find("=== ", pos);
    return trim(prompt.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
}

inline std::string first_sentence(const std::string& text) {
    std::size_t i = 0;
    std::size_t last = 0;
    std::string_view sv = text;
    while (i < sv.size()) {
        const std::size_t at = i;
        const char32_t cp = utf8::decode(sv, i);
        if (cp == '.' || cp == '!' || cp == '?' || cp == U'。' || cp == U'！' ||
            cp == U'？') {
            last = i;
            break;
        }
        (void)at;
    }
    if (last == 0) last = std::min<std::size_t>(sv.size(), 160);
    return trim(std::string(sv.substr(0, last)));
}

}  // namespace detail

// Deterministic stand-in for a real model, used by --offline runs. It
// parses the marked sections out of the pipeline's own prompts and emits
// well-formed responses for each request tag.
class OfflineClient : public GenerationClient {
public:
    GenerationResponse generate(const GenerationRequest& request) override {
        GenerationResponse r;
        switch (request.request_tag) {
            case RequestTag::title: r.text = make_title(request.prompt); break;
            case RequestTag::structure: r.text = make_outline(request.prompt); break;
            case RequestTag::qa_synthesis: r.text = make_qa(request.prompt); break;
            case RequestTag::explanation: r.text = make_explanation(request.prompt); break;
        }
        r.finish_reason = r.text.empty() ? FinishReason::error : FinishReason::stop;
        return r;
    }

private:
    static std::string title_case(const std::vector<std::string>& words, std::size_t n) {
        std::string out;
        for (std::size_t i = 0; i < words.size() && i < n; ++i) {
            std::string w = words[i];
            if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 32);
            if (!out.empty()) out += ' ';
            out += w;
        }
        return out;
    }

    static std::string make_title(const std::string& prompt) {
        const std::string text = detail::section_of(prompt, "TEXT");
        auto words = segment_words(text);
        if (words.empty()) return "Untitled";
        return title_case(words, 6);
    }

    // Groups the title list into chapters of up to three sections of up to
    // four titles each, labeling groups from their first member.
    static std::string make_outline(const std::string& prompt) {
        const std::string block = detail::section_of(prompt, "TITLES");
        std::vector<std::string> titles;
        for (const auto& line : split_lines(block)) {
            std::string t = trim(line);
            auto dot = t.find(". ");
            if (dot != std::string::npos && dot <= 4) t = trim(t.substr(dot + 2));
            if (!t.empty()) titles.push_back(t);
        }
        if (titles.empty()) return "";
        constexpr std::size_t kSec = 4, kChap = 12;
        std::ostringstream out;
        std::size_t chap = 0;
        for (std::size_t c = 0; c < titles.size(); c += kChap) {
            ++chap;
            out << chap << ". Part " << chap << ": " << titles[c] << "\n";
            std::size_t sec = 0;
            for (std::size_t s = c; s < std::min(titles.size(), c + kChap); s += kSec) {
                ++sec;
                out << "  " << chap << "." << sec << " Topics around " << titles[s] << "\n";
                for (std::size_t t = s; t < std::min({titles.size(), c + kChap, s + kSec}); ++t) {
                    out << "    " << chap << "." << sec << "." << (t - s + 1) << " "
                        << titles[t] << "\n";
                }
            }
        }
        return out.str();
    }

    static std::string make_qa(const std::string& prompt) {
        const std::string paths = detail::section_of(prompt, "PATHS");
        const std::string content = detail::section_of(prompt, "CONTENT");
        std::string leaf;
        for (const auto& line : split_lines(paths)) {
            auto gt = line.rfind("> ");
            if (gt != std::string::npos) leaf = trim(line.substr(gt + 2));
        }
        if (leaf.empty()) leaf = "the topic";
        std::ostringstream out;
        out << "QUESTION: What are the key facts about " << leaf << "?\n";
        out << "ANSWER: " << detail::first_sentence(content) << "\n";
        out << "EXPLANATION: The question is grounded in the following knowledge paths: ";
        bool first = true;
        for (const auto& line : split_lines(paths)) {
            if (trim(line).empty()) continue;
            if (!first) out << "; ";
            out << trim(line);
            first = false;
        }
        out << ".";
        return out.str();
    }

    static std::string make_explanation(const std::string& prompt) {
        const std::string paths = detail::section_of(prompt, "PATHS");
        const std::string content = detail::section_of(prompt, "CONTENT");
        std::ostringstream out;
        out << "EXPLANATION: Following " << detail::first_sentence(paths)
            << ", the answer rests on: " << detail::first_sentence(content) << ".";
        return out.str();
    }
};

// Offline embedder: TF-IDF over the batch vocabulary, L2-normalized.
class TfIdfEmbedder : public EmbeddingClient {
public:
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw EmbeddingFailed("empty batch");
        std::map<std::string, std::size_t> vocab;
        std::vector<TokenBag> bags;
        bags.reserve(texts.size());
        for (const auto& t : texts) {
            bags.push_back(token_bag(normalize_tokens(t)));
            for (const auto& [tok, _] : bags.back()) vocab.emplace(tok, 0);
        }
        std::size_t dim = 0;
        for (auto& [tok, idx] : vocab) idx = dim++;
        std::vector<std::size_t> df(dim, 0);
        for (const auto& bag : bags)
            for (const auto& [tok, _] : bag) ++df[vocab[tok]];
        const double n = static_cast<double>(texts.size());
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& bag : bags) {
            std::vector<double> v(dim, 0.0);
            double norm2 = 0.0;
            for (const auto& [tok, cnt] : bag) {
                const std::size_t j = vocab[tok];
                const double idf = std::log((n + 1.0) / (static_cast<double>(df[j]) + 1.0)) + 1.0;
                v[j] = static_cast<double>(cnt) * idf;
                norm2 += v[j] * v[j];
            }
            if (norm2 > 0.0) {
                const double inv = 1.0 / std::sqrt(norm2);
                for (auto& x : v) x *= inv;
            }
            out.push_back(std::move(v));
        }
        return out;
    }
};

// Bounded-parallel map preserving input order. limit <= 1 runs inline.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& inputs, int limit, Fn fn)
    -> std::vector<decltype(fn(inputs[0]))> {
    using Out = decltype(fn(inputs[0]));
    std::vector<Out> results(inputs.size());
    if (limit <= 1) {
        for (std::size_t i = 0; i < inputs.size(); ++i) results[i] = fn(inputs[i]);
        return results;
    }
    std::size_t next = 0;
    while (next < inputs.size()) {
        const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(limit),
                                                        inputs.size() - next);
        std::vector<std::future<Out>> futs;
        futs.reserve(batch);
        for (std::size_t k = 0; k < batch; ++k) {
            const std::size_t i = next + k;
            futs.push_back(std::async(std::launch::async, [&, i] { return fn(inputs[i]); }));
        }
        for (std::size_t k = 0; k < batch; ++k) results[next + k] = futs[k].get();
        next += batch;
    }
    return results;
}

}  // namespace structkit
