#include "lmtl/noising.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lmtl {

void NoiseConfig::validate() const {
    if (mask_ratio < 0.0 || mask_ratio > 1.0) throw DataError("mask_ratio must be in [0, 1]");
    if (delete_ratio < 0.0 || delete_ratio > 1.0) throw DataError("delete_ratio must be in [0, 1]");
    if (mask_ratio + delete_ratio > 1.0) {
        throw DataError("mask_ratio + delete_ratio must not exceed 1");
    }
    if (span_lambda <= 0.0) throw DataError("span_lambda must be positive");
    if (document_size == 0) throw DataError("document_size must be at least 1");
}

const char* task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::denoise: return "denoise";
        case TaskKind::translate: return "translate";
        case TaskKind::concat_denoise: return "concat_denoise";
    }
    throw DataError("unknown task kind");
}

TaskKind task_from_name(const std::string& name) {
    if (name == "denoise") return TaskKind::denoise;
    if (name == "translate") return TaskKind::translate;
    if (name == "concat_denoise") return TaskKind::concat_denoise;
    throw DataError("unknown task '" + name + "'");
}

namespace {

std::size_t count_for(double ratio, std::size_t n) {
    if (ratio < 0.0 || ratio > 1.0) throw DataError("ratio must be in [0, 1]");
    return std::size_t(std::floor(ratio * double(n) + 0.5));
}

// First k slots of a shuffled index array: a uniform sample without
// replacement, in draw order.
std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    partial_shuffle(idx, k, rng);
    idx.resize(k);
    return idx;
}

}  // namespace

std::vector<int32_t> mask_tokens(const std::vector<int32_t>& ids, double ratio, Rng& rng) {
    std::size_t k = count_for(ratio, ids.size());
    auto out = ids;
    for (std::size_t pos : sample_positions(ids.size(), k, rng)) {
        out[pos] = SpecialTokens::mask;
    }
    return out;
}

std::vector<int32_t> delete_tokens(const std::vector<int32_t>& ids, double ratio, Rng& rng) {
    std::size_t k = count_for(ratio, ids.size());
    std::vector<uint8_t> gone(ids.size(), 0);
    for (std::size_t pos : sample_positions(ids.size(), k, rng)) gone[pos] = 1;
    std::vector<int32_t> out;
    out.reserve(ids.size() - k);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!gone[i]) out.push_back(ids[i]);
    }
    return out;
}

std::vector<int32_t> infill_spans(const std::vector<int32_t>& ids, double mask_ratio,
                                  double span_lambda, Rng& rng) {
    if (span_lambda <= 0.0) throw DataError("span_lambda must be positive");
    std::size_t n = ids.size();
    std::size_t k = count_for(mask_ratio, n);
    if (k == 0) return ids;

    struct Tok {
        int32_t id;
        bool original;
    };
    std::vector<Tok> work;
    work.reserve(n + 4);
    for (int32_t id : ids) work.push_back({id, true});

    std::size_t removed = 0;
    while (removed < k) {
        std::size_t len = rng.poisson(span_lambda);
        len = std::min(len, k - removed);
        std::size_t run = 0, longest = 0;
        for (const Tok& t : work) {
            run = t.original ? run + 1 : 0;
            longest = std::max(longest, run);
        }
        len = std::min(len, longest);
        if (len == 0) {
            std::size_t pos = std::size_t(rng.below(work.size() + 1));
            work.insert(work.begin() + long(pos), {SpecialTokens::mask, false});
            continue;
        }
        std::vector<std::size_t> starts;
        std::size_t original_run = 0;
        for (std::size_t i = 0; i < work.size(); ++i) {
            original_run = work[i].original ? original_run + 1 : 0;
            if (original_run >= len) starts.push_back(i + 1 - len);
        }
        std::size_t start = starts[std::size_t(rng.below(starts.size()))];
        work.erase(work.begin() + long(start), work.begin() + long(start + len));
        work.insert(work.begin() + long(start), {SpecialTokens::mask, false});
        removed += len;
    }
    std::vector<int32_t> out;
    out.reserve(work.size());
    for (const Tok& t : work) out.push_back(t.id);
    return out;
}

std::vector<std::vector<int32_t>> permute_sentences(std::vector<std::vector<int32_t>> document,
                                                    Rng& rng) {
    if (document.empty()) throw DataError("cannot permute an empty document");
    shuffle(document, rng);
    return document;
}

namespace {

std::vector<int32_t> join_with_eos(const std::vector<std::vector<int32_t>>& sentences) {
    std::vector<int32_t> out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i) out.push_back(SpecialTokens::eos);
        out.insert(out.end(), sentences[i].begin(), sentences[i].end());
    }
    return out;
}

}  // namespace

TrainingExample make_denoise_example(const std::vector<std::vector<int32_t>>& document,
                                     const NoiseConfig& config, int32_t lang_tag,
                                     const std::string& language, std::size_t max_len, Rng& rng) {
    config.validate();
    if (document.empty()) throw DataError("denoise document is empty");
    std::size_t content = 0;
    for (const auto& sentence : document) content += sentence.size();
    if (content == 0) throw DataError("denoise document has no tokens");
    std::vector<int32_t> clean = join_with_eos(document);
    if (clean.size() + 2 > max_len) {
        throw DataError("document length " + std::to_string(clean.size()) +
                        " exceeds max_len - 2; pre-chunk the input");
    }

    std::vector<int32_t> corrupt;
    if (config.permute_sentences && document.size() > 1) {
        corrupt = join_with_eos(permute_sentences(document, rng));
    } else {
        corrupt = clean;
    }
    corrupt = config.span_infill
                  ? infill_spans(corrupt, config.mask_ratio, config.span_lambda, rng)
                  : mask_tokens(corrupt, config.mask_ratio, rng);
    if (config.delete_ratio > 0.0) corrupt = delete_tokens(corrupt, config.delete_ratio, rng);
    // Lone-mask insertions can push the corrupted side past the budget.
    if (corrupt.size() + 2 > max_len) corrupt.resize(max_len - 2);

    TrainingExample ex;
    ex.task = TaskKind::denoise;
    ex.src_language = language;
    ex.tgt_language = language;
    ex.encoder_input = std::move(corrupt);
    ex.encoder_input.push_back(SpecialTokens::eos);
    ex.encoder_input.push_back(lang_tag);
    ex.decoder_input.reserve(clean.size() + 1);
    ex.decoder_input.push_back(lang_tag);
    ex.decoder_input.insert(ex.decoder_input.end(), clean.begin(), clean.end());
    ex.target = std::move(clean);
    ex.target.push_back(SpecialTokens::eos);
    return ex;
}

TrainingExample make_translate_example(const std::vector<int32_t>& src,
                                       const std::vector<int32_t>& tgt, int32_t src_tag,
                                       int32_t tgt_tag, const std::string& src_language,
                                       const std::string& tgt_language, std::size_t max_len) {
    if (src.empty() || tgt.empty()) throw DataError("translate example sides must be non-empty");
    if (src.size() + 2 > max_len || tgt.size() + 2 > max_len) {
        throw DataError("translation pair exceeds max_len - 2");
    }
    TrainingExample ex;
    ex.task = TaskKind::translate;
    ex.src_language = src_language;
    ex.tgt_language = tgt_language;
    ex.encoder_input = src;
    ex.encoder_input.push_back(SpecialTokens::eos);
    ex.encoder_input.push_back(src_tag);
    ex.decoder_input.reserve(tgt.size() + 1);
    ex.decoder_input.push_back(tgt_tag);
    ex.decoder_input.insert(ex.decoder_input.end(), tgt.begin(), tgt.end());
    ex.target = tgt;
    ex.target.push_back(SpecialTokens::eos);
    return ex;
}

TrainingExample make_concat_example(const std::vector<int32_t>& src,
                                    const std::vector<int32_t>& tgt, int32_t src_tag,
                                    int32_t tgt_tag, const std::string& src_language,
                                    const std::string& tgt_language, const NoiseConfig& config,
                                    std::size_t max_len, Rng& rng) {
    config.validate();
    if (src.empty() || tgt.empty()) throw DataError("concat example sides must be non-empty");
    if (src.size() + tgt.size() + 4 > max_len) {
        throw DataError("concatenated pair exceeds max_len - 4");
    }
    std::vector<int32_t> clean;
    clean.reserve(src.size() + tgt.size() + 3);
    clean.push_back(src_tag);
    clean.insert(clean.end(), src.begin(), src.end());
    clean.push_back(SpecialTokens::eos);
    clean.push_back(tgt_tag);
    clean.insert(clean.end(), tgt.begin(), tgt.end());

    // Mask across both halves; tags and the separator are not candidates.
    std::vector<std::size_t> maskable;
    maskable.reserve(src.size() + tgt.size());
    for (std::size_t i = 0; i < src.size(); ++i) maskable.push_back(1 + i);
    for (std::size_t i = 0; i < tgt.size(); ++i) maskable.push_back(src.size() + 3 + i);
    std::size_t k = count_for(config.mask_ratio, maskable.size());
    partial_shuffle(maskable, k, rng);
    std::vector<int32_t> masked = clean;
    for (std::size_t i = 0; i < k; ++i) masked[maskable[i]] = SpecialTokens::mask;

    TrainingExample ex;
    ex.task = TaskKind::concat_denoise;
    ex.src_language = src_language;
    ex.tgt_language = tgt_language;
    ex.encoder_input = std::move(masked);
    ex.encoder_input.push_back(SpecialTokens::eos);
    std::vector<int32_t> body(clean.begin() + 1, clean.end());
    ex.decoder_input.reserve(body.size() + 1);
    ex.decoder_input.push_back(tgt_tag);
    ex.decoder_input.insert(ex.decoder_input.end(), body.begin(), body.end());
    ex.target = std::move(body);
    ex.target.push_back(SpecialTokens::eos);
    return ex;
}

std::string dump_example(const TrainingExample& ex) {
    auto join = [](const std::vector<int32_t>& ids) {
        std::ostringstream o;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) o << ' ';
            o << ids[i];
        }
        return o.str();
    };
    std::ostringstream o;
    o << task_name(ex.task) << '\t' << ex.src_language << '\t' << ex.tgt_language << '\t'
      << join(ex.encoder_input) << '\t' << join(ex.decoder_input) << '\t' << join(ex.target);
    return o.str();
}

}  // namespace lmtl
