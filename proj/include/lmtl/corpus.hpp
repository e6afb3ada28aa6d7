#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lmtl/error.hpp"

namespace lmtl {

struct Corpus {
    std::string language;             // 2-letter tag (en, ln, af, sw, zu)
    std::vector<std::string> lines;   // normalized, non-empty, NFC
};

struct ParallelCorpus {
    std::string src_language;
    std::string tgt_language;
    std::vector<std::pair<std::string, std::string>> pairs;
};

struct SplitSpec {
    enum class Mode { fraction, count };
    Mode mode = Mode::fraction;
    double test = 0.1;    // fraction or absolute count depending on mode
    double valid = 0.1;
    uint64_t seed = 0;
};

struct SamplingWeights {
    std::vector<std::string> languages;
    std::vector<double> weights;   // same order, sums to 1
    double alpha = 0.7;
};

// NFC + whitespace discipline. Control characters (Cc, minus ASCII
// whitespace) are dropped, all whitespace runs collapse to one ASCII
// space, leading/trailing whitespace stripped. Idempotent. Throws
// uni::Utf8Error naming the byte offset on invalid input.
std::string normalize_line(std::string_view text);

// Exact-duplicate removal, first occurrence wins, order preserved.
Corpus dedup(const Corpus& corpus);
ParallelCorpus dedup(const ParallelCorpus& corpus);

template <typename C>
struct Split {
    C train, valid, test;
};

// Seeded Fisher-Yates shuffle, then test and valid taken from the front.
// Splits keep the shuffled order. Throws DataError when the spec does not
// fit the corpus.
Split<Corpus> split(const Corpus& corpus, const SplitSpec& spec);
Split<ParallelCorpus> split(const ParallelCorpus& corpus, const SplitSpec& spec);

// Temperature sampling weights: w_l proportional to n_l^alpha, normalized.
SamplingWeights oversample_weights(const std::map<std::string, std::size_t>& sizes, double alpha);

// One sentence per line, LF terminated. Lines are normalized; lines that
// normalize to nothing are skipped.
Corpus load_corpus(const std::string& path, const std::string& language);
Corpus corpus_from_lines(std::vector<std::string> raw_lines, const std::string& language);

// Parallel ingestion: two aligned line files, or one two-column TSV.
ParallelCorpus load_parallel_tsv(const std::string& path, const std::string& src_language,
                                 const std::string& tgt_language);
ParallelCorpus load_parallel_files(const std::string& src_path, const std::string& tgt_path,
                                   const std::string& src_language, const std::string& tgt_language);

void save_corpus(const Corpus& corpus, const std::string& path);
void save_parallel_tsv(const ParallelCorpus& corpus, const std::string& path);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace lmtl
