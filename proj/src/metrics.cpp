#include "lmtl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "lmtl/corpus.hpp"
#include "lmtl/unicode.hpp"

namespace lmtl {

namespace {

using CountMap = std::unordered_map<std::string, uint64_t>;

void require_aligned(std::size_t h, std::size_t r) {
    if (h != r) {
        throw DataError("hypothesis/reference count mismatch: " + std::to_string(h) + " vs " +
                        std::to_string(r));
    }
}

// Clipped matches between two n-gram multisets.
uint64_t clipped_matches(const CountMap& hyp, const CountMap& ref) {
    uint64_t m = 0;
    for (const auto& [gram, count] : hyp) {
        auto it = ref.find(gram);
        if (it != ref.end()) m += std::min(count, it->second);
    }
    return m;
}

CountMap token_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    CountMap grams;
    if (tokens.size() < n) return grams;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) {
            if (j) key += '\x1F';
            key += tokens[i + j];
        }
        ++grams[key];
    }
    return grams;
}

CountMap char_ngrams(const std::vector<char32_t>& chars, std::size_t n) {
    CountMap grams;
    if (chars.size() < n) return grams;
    for (std::size_t i = 0; i + n <= chars.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) uni::append_utf8(chars[i + j], key);
        ++grams[key];
    }
    return grams;
}

std::vector<char32_t> squash_whitespace(const std::string& text) {
    std::vector<char32_t> out;
    for (char32_t cp : uni::decode_utf8(text)) {
        if (!uni::is_space(cp)) out.push_back(cp);
    }
    return out;
}

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::vector<std::string> tokenize_for_bleu(const std::string& text) {
    std::vector<char32_t> cps = uni::nfc(uni::decode_utf8(text));
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (char32_t cp : cps) {
        if (uni::is_space(cp)) {
            flush();
        } else if (uni::is_letter(cp) || uni::is_digit(cp)) {
            uni::append_utf8(cp, current);
        } else {
            flush();
            std::string solo;
            uni::append_utf8(cp, solo);
            tokens.push_back(std::move(solo));
        }
    }
    flush();
    return tokens;
}

BleuScore corpus_bleu(const std::vector<std::string>& hypotheses,
                      const std::vector<std::string>& references) {
    require_aligned(hypotheses.size(), references.size());
    BleuScore out;

    std::array<uint64_t, 4> matches{};
    std::array<uint64_t, 4> totals{};
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        auto hyp = tokenize_for_bleu(hypotheses[i]);
        auto ref = tokenize_for_bleu(references[i]);
        out.hyp_len += hyp.size();
        out.ref_len += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            if (hyp.size() < n) continue;
            auto hgrams = token_ngrams(hyp, n);
            totals[n - 1] += hyp.size() - n + 1;
            matches[n - 1] += clipped_matches(hgrams, token_ngrams(ref, n));
        }
    }

    if (out.hyp_len == 0) {
        out.brevity_penalty = 0.0;
        return out;  // score 0 by definition
    }

    uint64_t smooth = 1;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        double p;
        if (matches[n] > 0) {
            p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        } else {
            smooth *= 2;
            p = 1.0 / (static_cast<double>(smooth) *
                       static_cast<double>(std::max<uint64_t>(totals[n], 1)));
        }
        out.precisions[n] = p;
        log_sum += std::log(p);
    }

    double c = static_cast<double>(out.hyp_len);
    double r = static_cast<double>(out.ref_len);
    out.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);
    out.score = 100.0 * out.brevity_penalty * std::exp(log_sum / 4.0);
    return out;
}

ChrfScore corpus_chrf(const std::vector<std::string>& hypotheses,
                      const std::vector<std::string>& references) {
    require_aligned(hypotheses.size(), references.size());
    ChrfScore out;

    std::array<uint64_t, 6> matches{};
    std::array<uint64_t, 6> hyp_totals{};
    std::array<uint64_t, 6> ref_totals{};
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        auto hyp = squash_whitespace(hypotheses[i]);
        auto ref = squash_whitespace(references[i]);
        for (std::size_t n = 1; n <= 6; ++n) {
            auto hgrams = char_ngrams(hyp, n);
            auto rgrams = char_ngrams(ref, n);
            if (hyp.size() >= n) hyp_totals[n - 1] += hyp.size() - n + 1;
            if (ref.size() >= n) ref_totals[n - 1] += ref.size() - n + 1;
            matches[n - 1] += clipped_matches(hgrams, rgrams);
        }
    }

    double beta2 = out.beta * out.beta;
    double f_sum = 0.0;
    std::size_t order_count = 0;
    for (std::size_t n = 0; n < 6; ++n) {
        if (hyp_totals[n] == 0 && ref_totals[n] == 0) continue;
        out.included[n] = true;
        ++order_count;
        if (matches[n] > 0) {
            double p = static_cast<double>(matches[n]) / static_cast<double>(hyp_totals[n]);
            double r = static_cast<double>(matches[n]) / static_cast<double>(ref_totals[n]);
            out.f[n] = (1.0 + beta2) * p * r / (beta2 * p + r);
        }
        f_sum += out.f[n];
    }
    out.score = order_count == 0 ? 0.0 : 100.0 * f_sum / static_cast<double>(order_count);
    return out;
}

std::string format_bleu_line(const BleuScore& s) {
    std::string line = "BLEU\t" + fixed2(s.score) + "\t";
    for (std::size_t n = 0; n < 4; ++n) {
        if (n) line += '/';
        line += fixed2(100.0 * s.precisions[n]);
    }
    line += "\t" + fixed2(s.brevity_penalty);
    return line;
}

std::string format_chrf_line(const ChrfScore& s) {
    return "chrF2\t" + fixed2(s.score);
}

}  // namespace lmtl
