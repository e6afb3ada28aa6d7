#include "lmtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "lmtl/kv.hpp"
#include "lmtl/tokenizer.hpp"

namespace lmtl {

void ModelConfig::validate() const {
    if (vocab_size < 5) throw DataError("vocab_size must cover the special tokens");
    if (d_model == 0 || d_ff == 0) throw DataError("d_model and d_ff must be positive");
    if (encoder_layers == 0 || decoder_layers == 0) throw DataError("layer counts must be positive");
    if (heads == 0 || d_model % heads != 0) {
        throw DataError("d_model " + std::to_string(d_model) + " not divisible by heads " +
                        std::to_string(heads));
    }
    if (max_len < 2) throw DataError("max_len must be at least 2");
    if (dropout < 0.0 || dropout >= 1.0) throw DataError("dropout must be in [0, 1)");
    if (norm_order != "pre" && norm_order != "post") {
        throw DataError("norm_order must be 'pre' or 'post', got '" + norm_order + "'");
    }
}

std::string ModelConfig::to_kv() const {
    std::ostringstream o;
    o << "vocab_size=" << vocab_size << "\n"
      << "d_model=" << d_model << "\n"
      << "d_ff=" << d_ff << "\n"
      << "encoder_layers=" << encoder_layers << "\n"
      << "decoder_layers=" << decoder_layers << "\n"
      << "heads=" << heads << "\n"
      << "max_len=" << max_len << "\n"
      << "dropout=" << format_double(dropout) << "\n"
      << "share_embeddings=" << (share_embeddings ? "true" : "false") << "\n"
      << "norm_order=" << norm_order << "\n";
    return o.str();
}

ModelConfig ModelConfig::from_kv(const std::string& text) {
    ModelConfig c;
    for (const auto& [key, val] : parse_kv(text)) {
        if (key == "vocab_size") c.vocab_size = parse_u64(val);
        else if (key == "d_model") c.d_model = parse_u64(val);
        else if (key == "d_ff") c.d_ff = parse_u64(val);
        else if (key == "encoder_layers") c.encoder_layers = parse_u64(val);
        else if (key == "decoder_layers") c.decoder_layers = parse_u64(val);
        else if (key == "heads") c.heads = parse_u64(val);
        else if (key == "max_len") c.max_len = parse_u64(val);
        else if (key == "dropout") c.dropout = parse_double(val);
        else if (key == "share_embeddings") c.share_embeddings = parse_bool(val);
        else if (key == "norm_order") c.norm_order = val;
        else throw DataError("unknown model config key '" + key + "'");
    }
    c.validate();
    return c;
}

std::vector<TensorSpec> param_inventory(const ModelConfig& c) {
    c.validate();
    std::vector<TensorSpec> specs;
    auto add = [&](std::string n, std::vector<std::size_t> s) {
        specs.push_back({std::move(n), std::move(s)});
    };
    std::size_t V = c.vocab_size, D = c.d_model, F = c.d_ff;
    if (c.share_embeddings) {
        add("tok_emb", {V, D});
    } else {
        add("enc_tok_emb", {V, D});
        add("dec_tok_emb", {V, D});
        add("out_proj", {V, D});
    }
    add("enc_pos", {c.max_len, D});
    add("dec_pos", {c.max_len, D});
    auto add_ln = [&](const std::string& p) {
        add(p + "g", {D});
        add(p + "b", {D});
    };
    auto add_attn = [&](const std::string& p) {
        for (const char* w : {"wq", "wk", "wv", "wo"}) add(p + w, {D, D});
        for (const char* b : {"bq", "bk", "bv", "bo"}) add(p + b, {D});
    };
    auto add_ff = [&](const std::string& p) {
        add(p + "w1", {D, F});
        add(p + "b1", {F});
        add(p + "w2", {F, D});
        add(p + "b2", {D});
    };
    for (std::size_t i = 0; i < c.encoder_layers; ++i) {
        std::string p = "enc" + std::to_string(i) + ".";
        add_ln(p + "ln1.");
        add_attn(p + "attn.");
        add_ln(p + "ln2.");
        add_ff(p + "ff.");
    }
    for (std::size_t i = 0; i < c.decoder_layers; ++i) {
        std::string p = "dec" + std::to_string(i) + ".";
        add_ln(p + "ln1.");
        add_attn(p + "self.");
        add_ln(p + "ln2.");
        add_attn(p + "cross.");
        add_ln(p + "ln3.");
        add_ff(p + "ff.");
    }
    if (c.norm_order == "pre") {
        add_ln("enc_final_ln.");
        add_ln("dec_final_ln.");
    }
    return specs;
}

uint64_t count_params(const ModelConfig& config) {
    uint64_t total = 0;
    for (const auto& spec : param_inventory(config)) {
        uint64_t n = 1;
        for (std::size_t e : spec.shape) n *= e;
        total += n;
    }
    return total;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& config, uint64_t seed) {
    ParamStore<T> store;
    Rng rng(seed);
    for (auto& spec : param_inventory(config)) {
        auto t = Tensor<T>::zeros(spec.shape);
        bool is_emb = spec.name == "tok_emb" || spec.name == "enc_tok_emb" ||
                      spec.name == "dec_tok_emb" || spec.name == "enc_pos" ||
                      spec.name == "dec_pos";
        if (spec.shape.size() == 2) {
            double lim = is_emb ? 0.1 : std::sqrt(6.0 / double(spec.shape[0] + spec.shape[1]));
            for (auto& v : t.values) v = T((rng.uniform() * 2.0 - 1.0) * lim);
        } else if (spec.name.ends_with(".g")) {
            for (auto& v : t.values) v = T(1);
        }
        store.add(std::move(spec.name), std::move(t));
    }
    return store;
}

template <typename T>
BoundModel<T> bind_params(Tape<T>& tape, const ParamStore<T>& store, const ModelConfig& config,
                          bool requires_grad) {
    BoundModel<T> m;
    m.config = &config;
    m.index = &store.index;
    m.ids.reserve(store.tensors.size());
    for (const auto& t : store.tensors) m.ids.push_back(tape.leaf(t, requires_grad));
    return m;
}

namespace {

// Wiring helpers shared by the encoder and decoder stacks.
template <typename T>
class Former {
public:
    using Id = typename Tape<T>::Id;

    Former(Tape<T>& tape, const BoundModel<T>& m, double dropout, Rng* rng)
        : t_(tape), m_(m), rate_(dropout), rng_(rng) {
        if (rate_ > 0 && rng_ == nullptr) throw DataError("dropout requires an rng");
    }

    Id drop(Id x) { return rate_ > 0 ? t_.dropout(x, T(rate_), *rng_) : x; }

    Id linear(Id x, const std::string& w, const std::string& b) {
        return t_.add_rowbias(t_.matmul(x, m_.id(w)), m_.id(b));
    }

    Id ln(Id x, const std::string& p) {
        return t_.layer_norm(x, m_.id(p + "g"), m_.id(p + "b"));
    }

    Id attn(Id q_src, Id kv_src, const std::string& p, const std::vector<uint8_t>& allowed,
            std::size_t batch, std::size_t q_len, std::size_t k_len) {
        Id q = linear(q_src, p + "wq", p + "bq");
        Id k = linear(kv_src, p + "wk", p + "bk");
        Id v = linear(kv_src, p + "wv", p + "bv");
        Id a = t_.attention(q, k, v, allowed, batch, q_len, k_len, m_.config->heads);
        return linear(a, p + "wo", p + "bo");
    }

    Id ff(Id x, const std::string& p) {
        return linear(t_.gelu(linear(x, p + "w1", p + "b1")), p + "w2", p + "b2");
    }

    template <typename Fn>
    Id sublayer(Id x, const std::string& ln_prefix, Fn&& body) {
        if (m_.config->norm_order == "pre") {
            return t_.add(x, drop(body(ln(x, ln_prefix))));
        }
        return ln(t_.add(x, drop(body(x))), ln_prefix);
    }

    Id input_stage(const std::string& emb, const std::string& pos,
                   const std::vector<int32_t>& ids, std::size_t batch, std::size_t len) {
        Id tok = t_.scale(t_.embedding(m_.id(emb), ids),
                          T(std::sqrt(double(m_.config->d_model))));
        std::vector<int32_t> pos_ids(batch * len);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < len; ++i) pos_ids[b * len + i] = int32_t(i);
        }
        return drop(t_.add(tok, t_.embedding(m_.id(pos), pos_ids)));
    }

private:
    Tape<T>& t_;
    const BoundModel<T>& m_;
    double rate_;
    Rng* rng_;
};

void check_seq(const char* where, std::size_t batch, std::size_t len, std::size_t ids,
               std::size_t real, std::size_t max_len) {
    if (batch == 0 || len == 0) throw DataError(std::string(where) + ": empty batch");
    if (len > max_len) {
        throw DataError(std::string(where) + ": length " + std::to_string(len) +
                        " exceeds max_len " + std::to_string(max_len));
    }
    if (ids != batch * len || real != batch * len) {
        throw DataError(std::string(where) + ": id/mask sizes do not match batch shape");
    }
}

}  // namespace

template <typename T>
typename Tape<T>::Id encode_forward(Tape<T>& tape, const BoundModel<T>& model,
                                    const std::vector<int32_t>& enc_ids,
                                    const std::vector<uint8_t>& enc_real, std::size_t batch,
                                    std::size_t enc_len, double dropout, Rng* rng) {
    const ModelConfig& c = *model.config;
    check_seq("encode_forward", batch, enc_len, enc_ids.size(), enc_real.size(), c.max_len);
    Former<T> f(tape, model, dropout, rng);
    auto x = f.input_stage(c.share_embeddings ? "tok_emb" : "enc_tok_emb", "enc_pos", enc_ids,
                           batch, enc_len);
    std::vector<uint8_t> allowed(batch * enc_len * enc_len);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < enc_len; ++i) {
            for (std::size_t j = 0; j < enc_len; ++j) {
                allowed[(b * enc_len + i) * enc_len + j] = enc_real[b * enc_len + j];
            }
        }
    }
    for (std::size_t l = 0; l < c.encoder_layers; ++l) {
        std::string p = "enc" + std::to_string(l) + ".";
        x = f.sublayer(x, p + "ln1.", [&](auto h) {
            return f.attn(h, h, p + "attn.", allowed, batch, enc_len, enc_len);
        });
        x = f.sublayer(x, p + "ln2.", [&](auto h) { return f.ff(h, p + "ff."); });
    }
    if (c.norm_order == "pre") x = f.ln(x, "enc_final_ln.");
    return x;
}

template <typename T>
typename Tape<T>::Id decode_forward(Tape<T>& tape, const BoundModel<T>& model,
                                    typename Tape<T>::Id enc_out,
                                    const std::vector<uint8_t>& enc_real, std::size_t enc_len,
                                    const std::vector<int32_t>& dec_ids,
                                    const std::vector<uint8_t>& dec_real, std::size_t batch,
                                    std::size_t dec_len, double dropout, Rng* rng) {
    const ModelConfig& c = *model.config;
    check_seq("decode_forward", batch, dec_len, dec_ids.size(), dec_real.size(), c.max_len);
    if (enc_real.size() != batch * enc_len) {
        throw DataError("decode_forward: encoder mask does not match batch shape");
    }
    Former<T> f(tape, model, dropout, rng);
    auto x = f.input_stage(c.share_embeddings ? "tok_emb" : "dec_tok_emb", "dec_pos", dec_ids,
                           batch, dec_len);
    std::vector<uint8_t> self_allowed(batch * dec_len * dec_len, 0);
    std::vector<uint8_t> cross_allowed(batch * dec_len * enc_len);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < dec_len; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                self_allowed[(b * dec_len + i) * dec_len + j] = dec_real[b * dec_len + j];
            }
            for (std::size_t j = 0; j < enc_len; ++j) {
                cross_allowed[(b * dec_len + i) * enc_len + j] = enc_real[b * enc_len + j];
            }
        }
    }
    for (std::size_t l = 0; l < c.decoder_layers; ++l) {
        std::string p = "dec" + std::to_string(l) + ".";
        x = f.sublayer(x, p + "ln1.", [&](auto h) {
            return f.attn(h, h, p + "self.", self_allowed, batch, dec_len, dec_len);
        });
        x = f.sublayer(x, p + "ln2.", [&](auto h) {
            return f.attn(h, enc_out, p + "cross.", cross_allowed, batch, dec_len, enc_len);
        });
        x = f.sublayer(x, p + "ln3.", [&](auto h) { return f.ff(h, p + "ff."); });
    }
    if (c.norm_order == "pre") x = f.ln(x, "dec_final_ln.");
    return tape.matmul_nt(x, model.id(c.share_embeddings ? "tok_emb" : "out_proj"));
}

template <typename T>
typename Tape<T>::Id forward_logits(Tape<T>& tape, const BoundModel<T>& model, const Batch& batch,
                                    double dropout, Rng* rng) {
    auto enc_out = encode_forward(tape, model, batch.enc_ids, batch.enc_real, batch.size,
                                  batch.enc_len, dropout, rng);
    return decode_forward(tape, model, enc_out, batch.enc_real, batch.enc_len, batch.dec_ids,
                          batch.dec_real, batch.size, batch.dec_len, dropout, rng);
}

template <typename T>
Tensor<T> forward(const ParamStore<T>& params, const ModelConfig& config, const Batch& batch) {
    Tape<T> tape;
    auto bound = bind_params(tape, params, config, false);
    auto logits = forward_logits(tape, bound, batch, 0.0, nullptr);
    Tensor<T> out = tape.value(logits);
    out.shape = {batch.size, batch.dec_len, config.vocab_size};
    return out;
}

namespace {

// One frozen encoder pass reused across incremental decoder calls; the
// decoder prefix is re-run in full each step (no KV cache at desk scale).
template <typename T>
class DecodeSession {
public:
    DecodeSession(const ParamStore<T>& params, const ModelConfig& config,
                  const std::vector<int32_t>& encoder_input)
        : config_(config), enc_len_(encoder_input.size()), enc_real_(encoder_input.size(), 1) {
        if (encoder_input.empty()) throw DataError("decode: empty encoder input");
        bound_ = bind_params(tape_, params, config, false);
        enc_out_ = encode_forward(tape_, bound_, encoder_input, enc_real_, 1, enc_len_, 0.0,
                                  nullptr);
    }

    // Log-softmax of the next-token distribution after the given prefix.
    std::vector<double> next_logp(const std::vector<int32_t>& prefix) {
        std::vector<uint8_t> real(prefix.size(), 1);
        auto logits = decode_forward(tape_, bound_, enc_out_, enc_real_, enc_len_, prefix, real, 1,
                                     prefix.size(), 0.0, nullptr);
        std::size_t v = config_.vocab_size;
        const T* row = tape_.value(logits).values.data() + (prefix.size() - 1) * v;
        std::vector<double> logp(v);
        double mx = double(row[0]);
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, double(row[j]));
        double z = 0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(double(row[j]) - mx);
        double lz = std::log(z) + mx;
        for (std::size_t j = 0; j < v; ++j) logp[j] = double(row[j]) - lz;
        return logp;
    }

private:
    const ModelConfig& config_;
    std::size_t enc_len_;
    std::vector<uint8_t> enc_real_;
    Tape<T> tape_;
    BoundModel<T> bound_;
    typename Tape<T>::Id enc_out_ = -1;
};

std::vector<int32_t> strip_decode(const std::vector<int32_t>& ids) {
    std::vector<int32_t> out(ids.begin() + 1, ids.end());
    if (!out.empty() && out.back() == SpecialTokens::eos) out.pop_back();
    return out;
}

}  // namespace

template <typename T>
std::vector<int32_t> greedy_decode(const ParamStore<T>& params, const ModelConfig& config,
                                   const std::vector<int32_t>& encoder_input, int32_t tgt_tag,
                                   std::size_t max_steps) {
    config.validate();
    DecodeSession<T> session(params, config, encoder_input);
    std::vector<int32_t> prefix = {tgt_tag};
    for (std::size_t step = 0; step < max_steps && prefix.size() < config.max_len; ++step) {
        auto logp = session.next_logp(prefix);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logp.size(); ++j) {
            if (logp[j] > logp[best]) best = j;
        }
        if (int32_t(best) == SpecialTokens::eos) break;
        prefix.push_back(int32_t(best));
    }
    return strip_decode(prefix);
}

template <typename T>
std::vector<int32_t> beam_decode(const ParamStore<T>& params, const ModelConfig& config,
                                 const std::vector<int32_t>& encoder_input, int32_t tgt_tag,
                                 std::size_t beam, std::size_t max_steps, double alpha) {
    if (beam < 1) throw DataError("beam must be at least 1");
    config.validate();
    DecodeSession<T> session(params, config, encoder_input);

    struct Hyp {
        std::vector<int32_t> ids;  // includes the leading tag
        double lp = 0.0;
    };
    struct Done {
        std::vector<int32_t> ids;
        double score = 0.0;
    };
    auto penalty = [alpha](std::size_t len) {
        return std::pow((5.0 + double(len)) / 6.0, alpha);
    };

    std::vector<Hyp> live = {{{tgt_tag}, 0.0}};
    std::vector<Done> done;
    std::size_t steps = std::min(max_steps, config.max_len - 1);
    for (std::size_t step = 0; step < steps && !live.empty(); ++step) {
        struct Cand {
            std::size_t hyp;
            int32_t tok;
            double lp;
        };
        std::vector<Cand> cands;
        cands.reserve(live.size() * config.vocab_size);
        for (std::size_t h = 0; h < live.size(); ++h) {
            auto logp = session.next_logp(live[h].ids);
            for (std::size_t v = 0; v < logp.size(); ++v) {
                cands.push_back({h, int32_t(v), live[h].lp + logp[v]});
            }
        }
        // All live hypotheses share a length, so ties compare prefix ids
        // first, then the new token.
        std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
            if (a.lp != b.lp) return a.lp > b.lp;
            const auto& ia = live[a.hyp].ids;
            const auto& ib = live[b.hyp].ids;
            for (std::size_t i = 0; i < ia.size(); ++i) {
                if (ia[i] != ib[i]) return ia[i] < ib[i];
            }
            return a.tok < b.tok;
        });
        // The top `beam` candidates consume the beam slots; eos candidates
        // retire their slot into the finished pool.
        std::vector<Hyp> next;
        std::size_t take = std::min(beam, cands.size());
        for (std::size_t i = 0; i < take; ++i) {
            std::vector<int32_t> ids = live[cands[i].hyp].ids;
            ids.push_back(cands[i].tok);
            if (cands[i].tok == SpecialTokens::eos) {
                done.push_back({std::move(ids), cands[i].lp / penalty(ids.size() - 1)});
            } else {
                next.push_back({std::move(ids), cands[i].lp});
            }
        }
        live = std::move(next);
    }
    for (const Hyp& h : live) done.push_back({h.ids, h.lp / penalty(h.ids.size() - 1)});

    const Done* best = &done.front();
    for (const Done& d : done) {
        if (d.score > best->score ||
            (d.score == best->score &&
             std::lexicographical_compare(d.ids.begin(), d.ids.end(), best->ids.begin(),
                                          best->ids.end()))) {
            best = &d;
        }
    }
    return strip_decode(best->ids);
}

namespace ckpt {

void put_u8(std::ostream& os, uint8_t v) { os.put(char(v)); }

void put_u32(std::ostream& os, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xFF);
    os.write(b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xFF);
    os.write(b, 8);
}

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

static void take_bytes(std::istream& is, char* dst, std::size_t n) {
    is.read(dst, std::streamsize(n));
    if (std::size_t(is.gcount()) != n) throw DataError("checkpoint truncated");
}

uint8_t take_u8(std::istream& is) {
    char b;
    take_bytes(is, &b, 1);
    return uint8_t(b);
}

uint32_t take_u32(std::istream& is) {
    char b[4];
    take_bytes(is, b, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(b[i])) << (8 * i);
    return v;
}

uint64_t take_u64(std::istream& is) {
    char b[8];
    take_bytes(is, b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(b[i])) << (8 * i);
    return v;
}

std::string take_str(std::istream& is) {
    uint32_t n = take_u32(is);
    std::string s(n, '\0');
    if (n) take_bytes(is, s.data(), n);
    return s;
}

namespace {
template <typename T>
struct DtypeCode;
template <>
struct DtypeCode<float> {
    static constexpr uint8_t value = 0;
};
template <>
struct DtypeCode<double> {
    static constexpr uint8_t value = 1;
};

template <typename T>
void put_payload(std::ostream& os, const std::vector<T>& values) {
    std::vector<char> buf(values.size() * sizeof(T));
    for (std::size_t i = 0; i < values.size(); ++i) {
        if constexpr (sizeof(T) == 4) {
            uint32_t bits;
            std::memcpy(&bits, &values[i], 4);
            for (int k = 0; k < 4; ++k) buf[i * 4 + k] = char((bits >> (8 * k)) & 0xFF);
        } else {
            uint64_t bits;
            std::memcpy(&bits, &values[i], 8);
            for (int k = 0; k < 8; ++k) buf[i * 8 + k] = char((bits >> (8 * k)) & 0xFF);
        }
    }
    os.write(buf.data(), std::streamsize(buf.size()));
}

template <typename Stored, typename T>
void take_payload(std::istream& is, std::vector<T>& out, std::size_t n) {
    std::vector<char> buf(n * sizeof(Stored));
    if (n) take_bytes(is, buf.data(), buf.size());
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if constexpr (sizeof(Stored) == 4) {
            uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) bits |= uint32_t(uint8_t(buf[i * 4 + k])) << (8 * k);
            float v;
            std::memcpy(&v, &bits, 4);
            out[i] = T(v);
        } else {
            uint64_t bits = 0;
            for (int k = 0; k < 8; ++k) bits |= uint64_t(uint8_t(buf[i * 8 + k])) << (8 * k);
            double v;
            std::memcpy(&v, &bits, 8);
            out[i] = T(v);
        }
    }
}
}  // namespace

template <typename T>
void put_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
    put_str(os, name);
    put_u8(os, DtypeCode<T>::value);
    put_u32(os, uint32_t(t.shape.size()));
    for (std::size_t e : t.shape) put_u64(os, e);
    put_payload(os, t.values);
}

template <typename T>
std::pair<std::string, Tensor<T>> take_tensor(std::istream& is) {
    std::string name = take_str(is);
    uint8_t dtype = take_u8(is);
    uint32_t rank = take_u32(is);
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        shape[i] = std::size_t(take_u64(is));
        count *= shape[i];
    }
    Tensor<T> t;
    t.shape = std::move(shape);
    if (dtype == 0) {
        take_payload<float>(is, t.values, count);
    } else if (dtype == 1) {
        take_payload<double>(is, t.values, count);
    } else {
        throw DataError("unknown tensor dtype code " + std::to_string(int(dtype)));
    }
    return {std::move(name), std::move(t)};
}

template void put_tensor<float>(std::ostream&, const std::string&, const Tensor<float>&);
template void put_tensor<double>(std::ostream&, const std::string&, const Tensor<double>&);
template std::pair<std::string, Tensor<float>> take_tensor<float>(std::istream&);
template std::pair<std::string, Tensor<double>> take_tensor<double>(std::istream&);

}  // namespace ckpt

static constexpr char kMagic[4] = {'L', 'M', 'T', 'L'};
static constexpr uint32_t kVersion = 1;

template <typename T>
void save_model_stream(std::ostream& os, const ModelConfig& config, const ParamStore<T>& params) {
    os.write(kMagic, 4);
    ckpt::put_u32(os, kVersion);
    ckpt::put_str(os, config.to_kv());
    ckpt::put_u32(os, uint32_t(params.tensors.size()));
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        ckpt::put_tensor(os, params.names[i], params.tensors[i]);
    }
    if (!os) throw DataError("checkpoint write failed");
}

template <typename T>
std::pair<ModelConfig, ParamStore<T>> load_model_stream(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("not a checkpoint file (bad magic)");
    }
    uint32_t version = ckpt::take_u32(is);
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    ModelConfig config = ModelConfig::from_kv(ckpt::take_str(is));
    auto inventory = param_inventory(config);
    uint32_t n = ckpt::take_u32(is);
    if (n != inventory.size()) {
        throw DataError("checkpoint tensor count " + std::to_string(n) + " does not match config");
    }
    ParamStore<T> store;
    for (uint32_t i = 0; i < n; ++i) {
        auto [name, tensor] = ckpt::take_tensor<T>(is);
        if (name != inventory[i].name || tensor.shape != inventory[i].shape) {
            throw DataError("checkpoint parameter '" + name + "' does not match the expected '" +
                            inventory[i].name + "'");
        }
        store.add(std::move(name), std::move(tensor));
    }
    return {std::move(config), std::move(store)};
}

#define LMTL_INSTANTIATE_MODEL(T)                                                               \
    template ParamStore<T> init_params<T>(const ModelConfig&, uint64_t);                        \
    template BoundModel<T> bind_params<T>(Tape<T>&, const ParamStore<T>&, const ModelConfig&,   \
                                          bool);                                               \
    template Tape<T>::Id encode_forward<T>(Tape<T>&, const BoundModel<T>&,                     \
                                           const std::vector<int32_t>&,                        \
                                           const std::vector<uint8_t>&, std::size_t,           \
                                           std::size_t, double, Rng*);                         \
    template Tape<T>::Id decode_forward<T>(Tape<T>&, const BoundModel<T>&, Tape<T>::Id,        \
                                           const std::vector<uint8_t>&, std::size_t,           \
                                           const std::vector<int32_t>&,                        \
                                           const std::vector<uint8_t>&, std::size_t,           \
                                           std::size_t, double, Rng*);                         \
    template Tape<T>::Id forward_logits<T>(Tape<T>&, const BoundModel<T>&, const Batch&,       \
                                           double, Rng*);                                      \
    template Tensor<T> forward<T>(const ParamStore<T>&, const ModelConfig&, const Batch&);      \
    template std::vector<int32_t> greedy_decode<T>(const ParamStore<T>&, const ModelConfig&,    \
                                                   const std::vector<int32_t>&, int32_t,       \
                                                   std::size_t);                               \
    template std::vector<int32_t> beam_decode<T>(const ParamStore<T>&, const ModelConfig&,      \
                                                 const std::vector<int32_t>&, int32_t,         \
                                                 std::size_t, std::size_t, double);            \
    template void save_model_stream<T>(std::ostream&, const ModelConfig&, const ParamStore<T>&); \
    template std::pair<ModelConfig, ParamStore<T>> load_model_stream<T>(std::istream&);

LMTL_INSTANTIATE_MODEL(float)
LMTL_INSTANTIATE_MODEL(double)

}  // namespace lmtl
