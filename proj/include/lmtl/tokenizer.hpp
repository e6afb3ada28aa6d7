#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lmtl/corpus.hpp"

namespace lmtl {

using TokenId = int32_t;

// Fixed reserved ids; language tags follow from id 5 in configuration order.
struct SpecialTokens {
    static constexpr TokenId pad = 0;
    static constexpr TokenId unk = 1;
    static constexpr TokenId bos = 2;
    static constexpr TokenId eos = 3;
    static constexpr TokenId mask = 4;

    std::vector<std::string> languages;

    TokenId count() const { return static_cast<TokenId>(5 + languages.size()); }
    TokenId lang_tag(const std::string& language) const;
    bool is_special(TokenId id) const { return id >= 0 && id < count(); }
};

struct MergeRule {
    std::string left, right;
};

// Byte-fallback BPE. Pieces are whitespace-free; a word-boundary marker
// (U+2581) is prepended as its own symbol to every word, so decode maps it
// back to a single space. Characters outside the trained inventory encode
// as their raw UTF-8 byte tokens, which makes encode/decode lossless on any
// normalized input.
class Tokenizer {
public:
    Tokenizer() = default;

    // Greedy BPE over whitespace-split words of all corpora. Merges stop at
    // vocab_size or when no pair occurs at least twice; ties break on the
    // lexicographically smallest (left, right).
    static Tokenizer train(const std::vector<Corpus>& corpora, std::size_t vocab_size,
                           std::vector<std::string> languages);

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(const std::vector<TokenId>& ids) const;

    std::size_t size() const { return pieces_.size(); }
    const std::string& piece(TokenId id) const;
    std::optional<TokenId> piece_id(const std::string& piece) const;
    const SpecialTokens& specials() const { return specials_; }
    const std::vector<MergeRule>& merges() const { return merges_; }

    // Plain-text formats: one piece per line (line number = id, specials
    // first); merge rules as "left right" per line in acquisition order.
    void save(const std::string& vocab_path, const std::string& merges_path) const;
    static Tokenizer load(const std::string& vocab_path, const std::string& merges_path);

    // FNV-1a over the vocab and merge listings; used to pair checkpoints
    // with the tokenizer they were trained under.
    uint64_t content_hash() const;

    static const std::string& marker();  // the U+2581 word-boundary piece

private:
    void finish_setup();
    std::vector<std::string> merge_segment(std::vector<std::string> syms) const;

    std::vector<std::string> pieces_;
    std::unordered_map<std::string, TokenId> piece_to_id_;
    SpecialTokens specials_;
    std::vector<MergeRule> merges_;
    std::unordered_map<std::string, int32_t> merge_rank_;
    TokenId byte_base_ = 0;  // id of <0x00>
};

}  // namespace lmtl
