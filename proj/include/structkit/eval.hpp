#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "structkit/errors.hpp"
#include "structkit/mindmap.hpp"
#include "structkit/text.hpp"

namespace structkit {

struct MetricResult {
    std::string name;
    std::vector<double> per_item;
    double aggregate = 0.0;
};

inline MetricResult aggregate_metric(std::string name, std::vector<double> per_item) {
    MetricResult r;
    r.name = std::move(name);
    double sum = 0.0;
    for (double v : per_item) sum += v;
    r.aggregate = per_item.empty() ? 0.0 : sum / static_cast<double>(per_item.size());
    r.per_item = std::move(per_item);
    return r;
}

// Bag-of-tokens F1. Empty vs empty is a vacuous perfect match.
inline double token_f1(std::string_view pred, std::string_view ref,
                       LanguageMode mode = LanguageMode::standard) {
    const auto p = normalize_tokens(pred, mode);
    const auto r = normalize_tokens(ref, mode);
    if (p.empty() && r.empty()) return 1.0;
    if (p.empty() || r.empty()) return 0.0;
    const std::size_t overlap = bag_overlap(token_bag(p), token_bag(r));
    if (overlap == 0) return 0.0;
    const double prec = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double rec = static_cast<double>(overlap) / static_cast<double>(r.size());
    return 2.0 * prec * rec / (prec + rec);
}

// Fraction of reference tokens covered by the prediction (bag semantics).
inline double answer_recall(std::string_view pred, std::string_view ref,
                            LanguageMode mode = LanguageMode::standard) {
    const auto r = normalize_tokens(ref, mode);
    if (r.empty()) return 1.0;
    const auto p = normalize_tokens(pred, mode);
    if (p.empty()) return 0.0;
    const std::size_t overlap = bag_overlap(token_bag(p), token_bag(r));
    return static_cast<double>(overlap) / static_cast<double>(r.size());
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// ROUGE-L over normalized tokens, balanced F (beta = 1).
inline double rouge_l(std::string_view pred, std::string_view ref,
                      LanguageMode mode = LanguageMode::standard) {
    const auto p = normalize_tokens(pred, mode);
    const auto r = normalize_tokens(ref, mode);
    if (p.empty() && r.empty()) return 1.0;
    if (p.empty() || r.empty()) return 0.0;
    const std::size_t lcs = lcs_length(p, r);
    if (lcs == 0) return 0.0;
    const double prec = static_cast<double>(lcs) / static_cast<double>(p.size());
    const double rec = static_cast<double>(lcs) / static_cast<double>(r.size());
    return 2.0 * prec * rec / (prec + rec);
}

namespace detail {

inline bool is_option_letter(char c, std::size_t n_options) {
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return upper >= 'A' && upper < static_cast<char>('A' + n_options);
}

inline int letter_index(char c) {
    return std::toupper(static_cast<unsigned char>(c)) - 'A';
}

inline bool standalone_at(const std::string& s, std::size_t pos) {
    const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(s[pos - 1]));
    const bool right_ok =
        pos + 1 >= s.size() || !std::isalnum(static_cast<unsigned char>(s[pos + 1]));
    return left_ok && right_ok;
}

inline std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Collects option letters appearing in explicit cue positions.
inline std::vector<int> cue_letters(const std::string& response, std::size_t n_options) {
    std::vector<int> found;
    auto push = [&](int idx) {
        if (std::find(found.begin(), found.end(), idx) == found.end()) found.push_back(idx);
    };
    const std::string low = lower_ascii(response);
    // "answer is X" / "answer: X" cues
    for (const std::string cue : {"answer is", "answer:", "answers are", "answer is option"}) {
        std::size_t at = 0;
        while ((at = low.find(cue, at)) != std::string::npos) {
            std::size_t p = at + cue.size();
            while (p < low.size() &&
                   (low[p] == ' ' || low[p] == '(' || low[p] == '*' || low[p] == '"'))
                ++p;
            // allow a run of letters separated by commas/and
            while (p < low.size()) {
                if (is_option_letter(response[p], n_options) && standalone_at(response, p)) {
                    push(letter_index(response[p]));
                    ++p;
                    while (p < low.size() &&
                           (low[p] == ',' || low[p] == ' ' || low[p] == ')' ||
                            low.compare(p, 4, "and ") == 0)) {
                        if (low.compare(p, 4, "and ") == 0) p += 4;
                        else ++p;
                    }
                    continue;
                }
                break;
            }
            ++at;
        }
    }
    // leading "X." / "X)" / "(X)"
    const std::string t = trim(response);
    if (t.size() >= 2 && is_option_letter(t[0], n_options) &&
        (t[1] == '.' || t[1] == ')' || t[1] == ':'))
        push(letter_index(t[0]));
    if (t.size() >= 3 && t[0] == '(' && is_option_letter(t[1], n_options) && t[2] == ')')
        push(letter_index(t[1]));
    // "(X)" anywhere
    for (std::size_t i = 0; i + 2 < response.size(); ++i) {
        if (response[i] == '(' && is_option_letter(response[i + 1], n_options) &&
            response[i + 2] == ')')
            push(letter_index(response[i + 1]));
    }
    return found;
}

}  // namespace detail

// Multi-choice scoring by lexical matching: (1) first option letter in a
// cue pattern; (2) else the unique option whose full normalized text
// appears in the response; (3) else abstention (scored incorrect).
inline std::optional<std::size_t> exact_match_choice(const std::string& response,
                                                     const std::vector<std::string>& options) {
    if (options.size() < 2) return std::nullopt;
    const auto cues = detail::cue_letters(response, options.size());
    if (!cues.empty()) return static_cast<std::size_t>(cues.front());
    const auto resp_tokens = normalize_tokens(response);
    std::optional<std::size_t> hit;
    for (std::size_t i = 0; i < options.size(); ++i) {
        const auto opt_tokens = normalize_tokens(options[i]);
        if (opt_tokens.empty()) continue;
        // contiguous subsequence match over normalized tokens
        bool contains = false;
        if (opt_tokens.size() <= resp_tokens.size()) {
            for (std::size_t s = 0; s + opt_tokens.size() <= resp_tokens.size(); ++s) {
                if (std::equal(opt_tokens.begin(), opt_tokens.end(), resp_tokens.begin() + static_cast<std::ptrdiff_t>(s))) {
                    contains = true;
                    break;
                }
            }
        }
        if (contains) {
            if (hit) return std::nullopt;  // ambiguous
            hit = i;
        }
    }
    return hit;
}

// Multi-answer subsets: the full predicted letter set must equal gold.
inline std::set<std::size_t> exact_match_choice_set(const std::string& response,
                                                    const std::vector<std::string>& options) {
    std::set<std::size_t> out;
    for (int idx : detail::cue_letters(response, options.size()))
        out.insert(static_cast<std::size_t>(idx));
    if (out.empty()) {
        if (auto one = exact_match_choice(response, options)) out.insert(*one);
    }
    return out;
}

struct MindmapRecallScore {
    double f1 = 0.0;
    double rouge_l = 0.0;
};

// Appendix-style mindmap memorization score: the parsed response outline's
// flattened labels against the canonical rendering of the target subtree.
inline MindmapRecallScore mindmap_recall(const std::string& response,
                                         const KnowledgeStructure& gt_structure,
                                         const std::string& target_subtree_root) {
    MindmapTree parsed = parse_mindmap(response);
    std::function<void(const std::string&, std::size_t, std::string&)> emit =
        [&](const std::string& id, std::size_t depth, std::string& out) {
        out.append(depth * 2, ' ');
        out += "- " + gt_structure.node(id).label + "\n";
        for (const auto& c : gt_structure.node(id).children) emit(c, depth + 1, out);
    };
    std::string canonical;
    emit(target_subtree_root, 0, canonical);
    std::string flat_pred;
    for (const auto& l : flatten_labels(parsed)) flat_pred += l + "\n";
    std::string flat_ref;
    for (const auto& l : flatten_labels(parse_mindmap(canonical))) flat_ref += l + "\n";
    MindmapRecallScore s;
    if (parsed.empty()) return s;
    s.f1 = token_f1(flat_pred, flat_ref);
    s.rouge_l = structkit::rouge_l(flat_pred, flat_ref);
    return s;
}

// ---- Eq.-style scaling curves ----------------------------------------------

struct ScalingPoint {
    double r = 0.0;  // corpus ratio in (0, 1]
    double p = 0.0;  // relative performance, percent
};

struct ScalingCurve {
    double a = 0.0, b = 0.0, c = 0.0;  // p(r) = a*(ln r)^2 + b*ln r + c
};

inline double eval_scaling(const ScalingCurve& curve, double r) {
    if (r <= 0.0) throw DomainError("scaling curve defined only for r > 0");
    const double x = std::log(r);
    return curve.a * x * x + curve.b * x + curve.c;
}

namespace detail {

// Solves the 3x3 system A x = y by Gaussian elimination with partial
// pivoting; returns false when singular.
inline bool solve3(std::array<std::array<double, 3>, 3> A, std::array<double, 3> y,
                   std::array<double, 3>& x) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::fabs(A[row][col]) > std::fabs(A[piv][col])) piv = row;
        if (std::fabs(A[piv][col]) < 1e-12) return false;
        std::swap(A[piv], A[col]);
        std::swap(y[piv], y[col]);
        for (int row = col + 1; row < 3; ++row) {
            const double f = A[row][col] / A[col][col];
            for (int k = col; k < 3; ++k) A[row][k] -= f * A[col][k];
            y[row] -= f * y[col];
        }
    }
    for (int row = 2; row >= 0; --row) {
        double s = y[row];
        for (int k = row + 1; k < 3; ++k) s -= A[row][k] * x[k];
        x[row] = s / A[row][row];
    }
    return true;
}

}  // namespace detail

// Least-squares fit of p on [(ln r)^2, ln r, 1] via the normal equations.
inline ScalingCurve fit_scaling_curve(const std::vector<ScalingPoint>& points) {
    std::set<double> distinct;
    for (const auto& pt : points) {
        if (pt.r <= 0.0) throw DomainError("scaling points require r > 0");
        distinct.insert(pt.r);
    }
    if (distinct.size() < 3) throw SingularFit("need at least 3 distinct r values");
    std::array<std::array<double, 3>, 3> ata{};
    std::array<double, 3> aty{};
    for (const auto& pt : points) {
        const double x = std::log(pt.r);
        const std::array<double, 3> row{x * x, x, 1.0};
        for (int i = 0; i < 3; ++i) {
            aty[i] += row[i] * pt.p;
            for (int j = 0; j < 3; ++j) ata[i][j] += row[i] * row[j];
        }
    }
    std::array<double, 3> coef{};
    if (!detail::solve3(ata, aty, coef)) throw SingularFit("normal equations singular");
    return {coef[0], coef[1], coef[2]};
}

// Reported curves for the paper's vanilla and structure-aware settings.
inline ScalingCurve vanilla_scaling_curve() { return {-0.04, 13.3, 100.0}; }
inline ScalingCurve structured_scaling_curve() { return {-1.11, 7.63, 133.0}; }

}  // namespace structkit
