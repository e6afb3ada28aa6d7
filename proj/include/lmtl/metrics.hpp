#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lmtl {

struct BleuScore {
    double score = 0.0;                      // 0..100
    std::array<double, 4> precisions{};      // fractions in [0, 1], post-smoothing
    double brevity_penalty = 1.0;
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;
};

struct ChrfScore {
    double score = 0.0;                      // 0..100
    std::array<double, 6> f{};               // per-order F, orders 1..6
    std::array<bool, 6> included{};          // order excluded when both sides lack n-grams
    double beta = 2.0;
};

// NFC normalize, set every character that is neither a letter nor a digit
// apart as its own token, split on whitespace.
std::vector<std::string> tokenize_for_bleu(const std::string& text);

// Corpus-level BLEU, orders 1..4, one reference per hypothesis. Zero-match
// orders are smoothed by halving: the k-th zero order contributes
// 1/(2^k * denom). BP = exp(1 - r/c) when c <= r. All-empty hypothesis
// side yields 0 by definition.
BleuScore corpus_bleu(const std::vector<std::string>& hypotheses,
                      const std::vector<std::string>& references);

// Corpus-level chrF, character n-grams of orders 1..6 after whitespace
// removal, beta = 2. Orders where neither side has n-grams are excluded
// from the mean.
ChrfScore corpus_chrf(const std::vector<std::string>& hypotheses,
                      const std::vector<std::string>& references);

// The two scoring lines of the score subcommand, 2-decimal formatting:
// "BLEU<TAB>57.89<TAB>100.00/75.00/66.67/50.00<TAB>0.82" and
// "chrF2<TAB>23.50".
std::string format_bleu_line(const BleuScore& s);
std::string format_chrf_line(const ChrfScore& s);

}  // namespace lmtl
