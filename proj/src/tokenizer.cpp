#include "lmtl/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <unordered_set>

#include "lmtl/hash.hpp"
#include "lmtl/unicode.hpp"

namespace lmtl {

namespace {

constexpr char32_t kMarkerCp = 0x2581;

const std::string kMarkerPiece = "\xE2\x96\x81";
const char* kFixedSpecials[5] = {"<pad>", "<unk>", "<s>", "</s>", "<mask>"};

std::string byte_piece(unsigned b) {
    static const char* hex = "0123456789ABCDEF";
    std::string s = "<0x";
    s += hex[b >> 4];
    s += hex[b & 0xF];
    s += '>';
    return s;
}

bool is_language_tag(const std::string& piece) {
    if (piece.size() < 3 || piece.front() != '[' || piece.back() != ']') return false;
    for (std::size_t i = 1; i + 1 < piece.size(); ++i) {
        if (piece[i] < 'a' || piece[i] > 'z') return false;
    }
    return true;
}

// A word splits into runs of ordinary characters separated by literal
// U+2581 codepoints. The literal marker never becomes a symbol: it always
// round-trips through its byte tokens, so trained pieces contain U+2581
// only as the word-boundary prefix.
struct Segment {
    bool word_initial = false;
    std::vector<std::string> chars;
};

std::vector<Segment> segment_word(std::string_view word) {
    std::vector<Segment> segs;
    segs.push_back({true, {}});
    for (char32_t cp : uni::decode_utf8(word)) {
        if (cp == kMarkerCp) {
            segs.push_back({false, {}});
            continue;
        }
        std::string ch;
        uni::append_utf8(cp, ch);
        segs.back().chars.push_back(std::move(ch));
    }
    return segs;
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) fn(text.substr(start, i - start));
    }
}

std::string rank_key(const std::string& left, const std::string& right) {
    return left + '\t' + right;
}

// ---- training ----

struct TrainWord {
    std::vector<int32_t> syms;
    int64_t freq = 0;
};

struct HeapEntry {
    int64_t count;
    std::string left, right;
    uint64_t key;
};

struct HeapLess {
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
        if (a.count != b.count) return a.count < b.count;
        if (a.left != b.left) return a.left > b.left;
        return a.right > b.right;
    }
};

uint64_t pair_key(int32_t a, int32_t b) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

}  // namespace

TokenId SpecialTokens::lang_tag(const std::string& language) const {
    for (std::size_t i = 0; i < languages.size(); ++i) {
        if (languages[i] == language) return static_cast<TokenId>(5 + i);
    }
    throw DataError("unknown language tag: " + language);
}

const std::string& Tokenizer::marker() { return kMarkerPiece; }

Tokenizer Tokenizer::train(const std::vector<Corpus>& corpora, std::size_t vocab_size,
                           std::vector<std::string> languages) {
    // Aggregate symbol sequences. Unit = one word segment; the key encodes
    // whether it carries the word-boundary marker.
    std::map<std::string, int64_t> unit_freq;
    for (const auto& corpus : corpora) {
        for (const auto& line : corpus.lines) {
            for_each_word(line, [&](std::string_view word) {
                for (const Segment& seg : segment_word(word)) {
                    if (!seg.word_initial && seg.chars.empty()) continue;
                    std::string key(seg.word_initial ? "\x01" : "");
                    for (const auto& ch : seg.chars) key += ch;
                    unit_freq[key] += 1;
                }
            });
        }
    }
    if (unit_freq.empty()) throw DataError("cannot train tokenizer on empty corpora");

    // Intern symbols. Id 0 is the marker; single characters follow in
    // lexicographic order so identical corpora produce identical tables on
    // every platform.
    std::vector<std::string> sym_str{kMarkerPiece};
    std::unordered_map<std::string, int32_t> sym_id{{kMarkerPiece, 0}};
    {
        std::set<std::string> chars;
        for (const auto& [key, freq] : unit_freq) {
            std::string_view body(key);
            if (!body.empty() && body.front() == '\x01') body.remove_prefix(1);
            for (char32_t cp : uni::decode_utf8(body)) {
                std::string ch;
                uni::append_utf8(cp, ch);
                chars.insert(std::move(ch));
            }
        }
        chars.erase(kMarkerPiece);
        for (const auto& ch : chars) {
            sym_id.emplace(ch, static_cast<int32_t>(sym_str.size()));
            sym_str.push_back(ch);
        }
    }

    std::vector<TrainWord> words;
    words.reserve(unit_freq.size());
    for (const auto& [key, freq] : unit_freq) {
        TrainWord w;
        w.freq = freq;
        std::string_view body(key);
        if (!body.empty() && body.front() == '\x01') {
            w.syms.push_back(0);
            body.remove_prefix(1);
        }
        for (char32_t cp : uni::decode_utf8(body)) {
            std::string ch;
            uni::append_utf8(cp, ch);
            w.syms.push_back(sym_id.at(ch));
        }
        words.push_back(std::move(w));
    }

    std::size_t num_chars = sym_str.size() - 1;
    std::size_t base = 5 + languages.size() + 256 + 1 + num_chars;
    if (vocab_size < base) {
        throw DataError("vocab_size " + std::to_string(vocab_size) +
                        " is below the base inventory of " + std::to_string(base) +
                        " (specials + byte tokens + seen characters)");
    }

    std::unordered_map<uint64_t, int64_t> counts;
    std::unordered_map<uint64_t, std::unordered_set<int32_t>> occur;
    for (std::size_t w = 0; w < words.size(); ++w) {
        const auto& word = words[w];
        for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) {
            uint64_t key = pair_key(word.syms[i], word.syms[i + 1]);
            counts[key] += word.freq;
            occur[key].insert(static_cast<int32_t>(w));
        }
    }

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapLess> heap;
    for (const auto& [key, count] : counts) {
        int32_t l = static_cast<int32_t>(key >> 32), r = static_cast<int32_t>(key & 0xFFFFFFFF);
        heap.push({count, sym_str[l], sym_str[r], key});
    }

    Tokenizer tok;
    tok.specials_.languages = std::move(languages);
    std::size_t vocab_count = base;
    std::unordered_set<std::string> known_pieces(sym_str.begin(), sym_str.end());

    while (vocab_count < vocab_size && !heap.empty()) {
        HeapEntry top = heap.top();
        heap.pop();
        auto it = counts.find(top.key);
        if (it == counts.end() || it->second != top.count) continue;  // stale
        if (top.count < 2) break;

        int32_t left = static_cast<int32_t>(top.key >> 32);
        int32_t right = static_cast<int32_t>(top.key & 0xFFFFFFFF);
        std::string product = sym_str[left] + sym_str[right];
        int32_t product_id;
        if (auto sit = sym_id.find(product); sit != sym_id.end()) {
            product_id = sit->second;
        } else {
            product_id = static_cast<int32_t>(sym_str.size());
            sym_id.emplace(product, product_id);
            sym_str.push_back(product);
        }
        tok.merges_.push_back({sym_str[left], sym_str[right]});
        if (known_pieces.insert(product).second) ++vocab_count;

        std::vector<int32_t> affected(occur[top.key].begin(), occur[top.key].end());
        std::sort(affected.begin(), affected.end());
        std::set<uint64_t> touched;
        for (int32_t w : affected) {
            TrainWord& word = words[w];
            for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) {
                uint64_t key = pair_key(word.syms[i], word.syms[i + 1]);
                auto cit = counts.find(key);
                if (cit != counts.end()) {
                    cit->second -= word.freq;
                    if (cit->second <= 0) counts.erase(cit);
                }
                occur[key].erase(w);
                touched.insert(key);
            }
            std::vector<int32_t> merged;
            merged.reserve(word.syms.size());
            for (std::size_t i = 0; i < word.syms.size();) {
                if (i + 1 < word.syms.size() && word.syms[i] == left && word.syms[i + 1] == right) {
                    merged.push_back(product_id);
                    i += 2;
                } else {
                    merged.push_back(word.syms[i]);
                    ++i;
                }
            }
            word.syms = std::move(merged);
            for (std::size_t i = 0; i + 1 < word.syms.size(); ++i) {
                uint64_t key = pair_key(word.syms[i], word.syms[i + 1]);
                counts[key] += word.freq;
                occur[key].insert(w);
                touched.insert(key);
            }
        }
        for (uint64_t key : touched) {
            auto cit = counts.find(key);
            if (cit == counts.end()) continue;
            int32_t l = static_cast<int32_t>(key >> 32), r = static_cast<int32_t>(key & 0xFFFFFFFF);
            heap.push({cit->second, sym_str[l], sym_str[r], key});
        }
    }

    // Assemble the vocab: specials, byte tokens, marker, characters in
    // lexicographic order, then merge products in acquisition order.
    for (const char* s : kFixedSpecials) tok.pieces_.emplace_back(s);
    for (const auto& lang : tok.specials_.languages) tok.pieces_.push_back("[" + lang + "]");
    for (unsigned b = 0; b < 256; ++b) tok.pieces_.push_back(byte_piece(b));
    std::unordered_set<std::string> emitted;
    tok.pieces_.push_back(kMarkerPiece);
    emitted.insert(kMarkerPiece);
    for (std::size_t i = 1; i <= num_chars; ++i) {
        tok.pieces_.push_back(sym_str[i]);
        emitted.insert(sym_str[i]);
    }
    for (const auto& rule : tok.merges_) {
        std::string product = rule.left + rule.right;
        if (emitted.insert(product).second) tok.pieces_.push_back(product);
    }
    tok.finish_setup();
    return tok;
}

void Tokenizer::finish_setup() {
    piece_to_id_.clear();
    piece_to_id_.reserve(pieces_.size() * 2);
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        if (!piece_to_id_.emplace(pieces_[i], static_cast<TokenId>(i)).second) {
            throw DataError("duplicate piece in vocab: " + pieces_[i]);
        }
    }
    byte_base_ = specials_.count();
    merge_rank_.clear();
    merge_rank_.reserve(merges_.size() * 2);
    for (std::size_t i = 0; i < merges_.size(); ++i) {
        merge_rank_.emplace(rank_key(merges_[i].left, merges_[i].right), static_cast<int32_t>(i));
    }
}

std::vector<std::string> Tokenizer::merge_segment(std::vector<std::string> syms) const {
    // Repeatedly apply the present rule with the lowest rank; equivalent to
    // replaying the whole table in order because a rule's inputs always
    // predate it.
    while (syms.size() > 1) {
        int32_t best_rank = -1;
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = merge_rank_.find(rank_key(syms[i], syms[i + 1]));
            if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
                best_rank = it->second;
                best_pos = i;
            }
        }
        if (best_rank < 0) break;
        const std::string& left = syms[best_pos];
        const std::string& right = syms[best_pos + 1];
        std::vector<std::string> next;
        next.reserve(syms.size());
        for (std::size_t i = 0; i < syms.size();) {
            if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                next.push_back(syms[i] + syms[i + 1]);
                i += 2;
            } else {
                next.push_back(std::move(syms[i]));
                ++i;
            }
        }
        syms = std::move(next);
    }
    return syms;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    auto emit_bytes = [&](std::string_view s) {
        for (unsigned char b : s) ids.push_back(byte_base_ + static_cast<TokenId>(b));
    };
    for_each_word(text, [&](std::string_view word) {
        auto segments = segment_word(word);
        for (std::size_t s = 0; s < segments.size(); ++s) {
            if (s > 0) emit_bytes(kMarkerPiece);  // literal U+2581 in the input
            const Segment& seg = segments[s];
            std::vector<std::string> syms;
            if (seg.word_initial) syms.push_back(kMarkerPiece);
            for (const auto& ch : seg.chars) syms.push_back(ch);
            for (auto& sym : merge_segment(std::move(syms))) {
                auto it = piece_to_id_.find(sym);
                if (it != piece_to_id_.end()) {
                    ids.push_back(it->second);
                } else {
                    emit_bytes(sym);  // character outside the trained inventory
                }
            }
        }
    });
    return ids;
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
            throw DataError("token id " + std::to_string(id) + " out of range for vocab of " +
                            std::to_string(pieces_.size()));
        }
        if (specials_.is_special(id)) continue;
        if (id >= byte_base_ && id < byte_base_ + 256) {
            out.push_back(static_cast<char>(id - byte_base_));
            continue;
        }
        const std::string& piece = pieces_[id];
        if (piece.compare(0, kMarkerPiece.size(), kMarkerPiece) == 0) {
            out += ' ';
            out.append(piece, kMarkerPiece.size(), std::string::npos);
        } else {
            out += piece;
        }
    }
    if (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
}

const std::string& Tokenizer::piece(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
        throw DataError("token id " + std::to_string(id) + " out of range");
    }
    return pieces_[id];
}

std::optional<TokenId> Tokenizer::piece_id(const std::string& piece) const {
    auto it = piece_to_id_.find(piece);
    if (it == piece_to_id_.end()) return std::nullopt;
    return it->second;
}

void Tokenizer::save(const std::string& vocab_path, const std::string& merges_path) const {
    std::ofstream vf(vocab_path, std::ios::binary);
    if (!vf) throw DataError("cannot write vocab file: " + vocab_path);
    for (const auto& piece : pieces_) vf << piece << '\n';
    std::ofstream mf(merges_path, std::ios::binary);
    if (!mf) throw DataError("cannot write merges file: " + merges_path);
    for (const auto& rule : merges_) mf << rule.left << ' ' << rule.right << '\n';
}

Tokenizer Tokenizer::load(const std::string& vocab_path, const std::string& merges_path) {
    Tokenizer tok;
    auto vocab_lines = read_lines(vocab_path);
    while (!vocab_lines.empty() && vocab_lines.back().empty()) vocab_lines.pop_back();
    if (vocab_lines.size() < 5 + 256 + 1) throw DataError("vocab file too small: " + vocab_path);
    for (int i = 0; i < 5; ++i) {
        if (vocab_lines[i] != kFixedSpecials[i]) {
            throw DataError(vocab_path + ": expected special token " + kFixedSpecials[i] +
                            " at id " + std::to_string(i));
        }
    }
    std::size_t pos = 5;
    while (pos < vocab_lines.size() && is_language_tag(vocab_lines[pos])) {
        tok.specials_.languages.push_back(vocab_lines[pos].substr(1, vocab_lines[pos].size() - 2));
        ++pos;
    }
    for (unsigned b = 0; b < 256; ++b, ++pos) {
        if (pos >= vocab_lines.size() || vocab_lines[pos] != byte_piece(b)) {
            throw DataError(vocab_path + ": byte token block malformed near id " + std::to_string(pos));
        }
    }
    tok.pieces_ = std::move(vocab_lines);

    for (const auto& raw : read_lines(merges_path)) {
        if (raw.empty()) continue;
        auto sp = raw.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 >= raw.size()) {
            throw DataError(merges_path + ": malformed merge rule: " + raw);
        }
        tok.merges_.push_back({raw.substr(0, sp), raw.substr(sp + 1)});
    }
    tok.finish_setup();
    for (const auto& rule : tok.merges_) {
        if (!tok.piece_to_id_.count(rule.left + rule.right)) {
            throw DataError(merges_path + ": merge product missing from vocab: " + rule.left +
                            rule.right);
        }
    }
    return tok;
}

uint64_t Tokenizer::content_hash() const {
    Fnv1a h;
    for (const auto& piece : pieces_) {
        h.update(piece);
        h.update("\n");
    }
    for (const auto& rule : merges_) {
        h.update(rule.left);
        h.update(" ");
        h.update(rule.right);
        h.update("\n");
    }
    return h.value();
}

}  // namespace lmtl
