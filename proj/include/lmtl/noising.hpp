#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lmtl/rng.hpp"
#include "lmtl/tokenizer.hpp"

namespace lmtl {

struct NoiseConfig {
    double mask_ratio = 0.35;
    double delete_ratio = 0.0;
    bool permute_sentences = true;
    bool span_infill = true;
    double span_lambda = 3.5;
    std::size_t document_size = 4;  // corpus lines per pseudo-document
    uint64_t seed = 0;

    void validate() const;
};

enum class TaskKind { denoise, translate, concat_denoise };

const char* task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);

struct TrainingExample {
    std::vector<int32_t> encoder_input;
    std::vector<int32_t> decoder_input;
    std::vector<int32_t> target;
    TaskKind task = TaskKind::denoise;
    std::string src_language;
    std::string tgt_language;
};

// Exactly k = floor(ratio*n + 0.5) positions, drawn without replacement via
// a Fisher-Yates prefix, become mask ids; length is preserved.
std::vector<int32_t> mask_tokens(const std::vector<int32_t>& ids, double ratio, Rng& rng);

// Same selection rule; the chosen positions are removed and survivors keep
// their relative order.
std::vector<int32_t> delete_tokens(const std::vector<int32_t>& ids, double ratio, Rng& rng);

// Poisson(span_lambda) spans of original tokens collapse to one mask id
// each until exactly k = floor(mask_ratio*n + 0.5) originals are gone. Span
// lengths cap at the remaining budget and at the longest remaining original
// run; zero-length draws insert a lone mask id instead.
std::vector<int32_t> infill_spans(const std::vector<int32_t>& ids, double mask_ratio,
                                  double span_lambda, Rng& rng);

// Seeded Fisher-Yates over sentence order.
std::vector<std::vector<int32_t>> permute_sentences(std::vector<std::vector<int32_t>> document,
                                                    Rng& rng);

// Denoising example over a pseudo-document (sentences joined with eos
// separators). Corruption order: permutation, span infill or masking,
// deletion. encoder = corrupt(clean) + [eos, tag]; decoder = [tag] + clean;
// target = clean + [eos].
TrainingExample make_denoise_example(const std::vector<std::vector<int32_t>>& document,
                                     const NoiseConfig& config, int32_t lang_tag,
                                     const std::string& language, std::size_t max_len, Rng& rng);

// encoder = src + [eos, src_tag]; decoder = [tgt_tag] + tgt;
// target = tgt + [eos].
TrainingExample make_translate_example(const std::vector<int32_t>& src,
                                       const std::vector<int32_t>& tgt, int32_t src_tag,
                                       int32_t tgt_tag, const std::string& src_language,
                                       const std::string& tgt_language, std::size_t max_len);

// clean = [src_tag] + src + [eos] + [tgt_tag] + tgt with token masking
// across both halves (tags and the separator stay intact);
// encoder = masked + [eos]; decoder = [tgt_tag] + clean-minus-leading-tag;
// target = clean-minus-leading-tag + [eos].
TrainingExample make_concat_example(const std::vector<int32_t>& src,
                                    const std::vector<int32_t>& tgt, int32_t src_tag,
                                    int32_t tgt_tag, const std::string& src_language,
                                    const std::string& tgt_language, const NoiseConfig& config,
                                    std::size_t max_len, Rng& rng);

// One line: task, languages, then the three id sequences, tab-separated
// with space-separated ids.
std::string dump_example(const TrainingExample& ex);

}  // namespace lmtl
