#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmtl/autograd.hpp"
#include "lmtl/rng.hpp"
#include "lmtl/tensor.hpp"

namespace lmtl {

// Encoder-decoder transformer shape. norm_order selects pre-norm residual
// blocks with per-stack final layer norms ("pre", default) or post-norm
// ("post").
struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 512;
    std::size_t d_ff = 2048;
    std::size_t encoder_layers = 6;
    std::size_t decoder_layers = 6;
    std::size_t heads = 8;
    std::size_t max_len = 512;
    double dropout = 0.1;
    bool share_embeddings = true;
    std::string norm_order = "pre";

    void validate() const;

    // Flat key=value block, one field per line; round-trips exactly.
    std::string to_kv() const;
    static ModelConfig from_kv(const std::string& text);
};

struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;
};

// The realized parameter set is a pure function of the config; counting
// folds over this inventory.
std::vector<TensorSpec> param_inventory(const ModelConfig& config);
uint64_t count_params(const ModelConfig& config);

template <typename T>
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;
    std::unordered_map<std::string, std::size_t> index;

    void add(std::string name, Tensor<T> tensor) {
        if (index.count(name)) throw DataError("duplicate parameter " + name);
        index.emplace(name, tensors.size());
        names.push_back(std::move(name));
        tensors.push_back(std::move(tensor));
    }
    const Tensor<T>& get(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("unknown parameter " + name);
        return tensors[it->second];
    }
    Tensor<T>& get(const std::string& name) {
        return const_cast<Tensor<T>&>(static_cast<const ParamStore&>(*this).get(name));
    }
    uint64_t scalar_count() const {
        uint64_t total = 0;
        for (const auto& t : tensors) total += t.size();
        return total;
    }
    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            out.add(names[i], tensors[i].template cast<U>());
        }
        return out;
    }
};

// Embeddings and position tables uniform(-0.1, 0.1), projections
// Xavier-uniform, biases zero, layer-norm gains one. One splitmix64 stream
// in inventory order.
template <typename T>
ParamStore<T> init_params(const ModelConfig& config, uint64_t seed);

// Padded batch as consumed by forward; *_real flags mark actual tokens
// (0 = padding). Row-major [size, len].
struct Batch {
    std::size_t size = 0;
    std::size_t enc_len = 0;
    std::size_t dec_len = 0;
    std::vector<int32_t> enc_ids;
    std::vector<int32_t> dec_ids;
    std::vector<int32_t> tgt_ids;  // pad id at padding positions
    std::vector<uint8_t> enc_real;
    std::vector<uint8_t> dec_real;
};

// Parameters placed on a tape as leaves, addressable by name.
template <typename T>
struct BoundModel {
    const ModelConfig* config = nullptr;
    const std::unordered_map<std::string, std::size_t>* index = nullptr;
    std::vector<typename Tape<T>::Id> ids;

    typename Tape<T>::Id id(const std::string& name) const {
        auto it = index->find(name);
        if (it == index->end()) throw DataError("unknown parameter " + name);
        return ids[it->second];
    }
};

template <typename T>
BoundModel<T> bind_params(Tape<T>& tape, const ParamStore<T>& store, const ModelConfig& config,
                          bool requires_grad);

// Encoder stack over [batch*enc_len, d_model]; returns the final hidden
// states. rng may be null when dropout is 0.
template <typename T>
typename Tape<T>::Id encode_forward(Tape<T>& tape, const BoundModel<T>& model,
                                    const std::vector<int32_t>& enc_ids,
                                    const std::vector<uint8_t>& enc_real, std::size_t batch,
                                    std::size_t enc_len, double dropout, Rng* rng);

// Decoder stack (causal + pad self-attention, cross-attention over enc_out);
// returns logits [batch*dec_len, vocab].
template <typename T>
typename Tape<T>::Id decode_forward(Tape<T>& tape, const BoundModel<T>& model,
                                    typename Tape<T>::Id enc_out,
                                    const std::vector<uint8_t>& enc_real, std::size_t enc_len,
                                    const std::vector<int32_t>& dec_ids,
                                    const std::vector<uint8_t>& dec_real, std::size_t batch,
                                    std::size_t dec_len, double dropout, Rng* rng);

template <typename T>
typename Tape<T>::Id forward_logits(Tape<T>& tape, const BoundModel<T>& model, const Batch& batch,
                                    double dropout, Rng* rng);

// Dropout-free forward returning logits shaped [batch, dec_len, vocab].
template <typename T>
Tensor<T> forward(const ParamStore<T>& params, const ModelConfig& config, const Batch& batch);

// Starts from [tgt_tag], appends the argmax token each step (ties break to
// the lowest id), stops at eos or max_steps. Returns generated ids without
// the leading tag or trailing eos.
template <typename T>
std::vector<int32_t> greedy_decode(const ParamStore<T>& params, const ModelConfig& config,
                                   const std::vector<int32_t>& encoder_input, int32_t tgt_tag,
                                   std::size_t max_steps);

// Beam search over log-probabilities. Finished hypotheses score
// logprob / ((5+len)/6)^alpha with len counting generated tokens including
// eos; ties break on (score, then token-id sequence). Hypotheses still open
// at max_steps are scored at their current length.
template <typename T>
std::vector<int32_t> beam_decode(const ParamStore<T>& params, const ModelConfig& config,
                                 const std::vector<int32_t>& encoder_input, int32_t tgt_tag,
                                 std::size_t beam, std::size_t max_steps, double alpha);

// Checkpoint body: magic "LMTL", version, config key=value block, named
// tensors (name, dtype byte 0=f32/1=f64, rank, extents, little-endian
// payload). Callers may append further sections to the same stream.
template <typename T>
void save_model_stream(std::ostream& os, const ModelConfig& config, const ParamStore<T>& params);
template <typename T>
std::pair<ModelConfig, ParamStore<T>> load_model_stream(std::istream& is);

namespace ckpt {
void put_u8(std::ostream& os, uint8_t v);
void put_u32(std::ostream& os, uint32_t v);
void put_u64(std::ostream& os, uint64_t v);
void put_str(std::ostream& os, const std::string& s);
uint8_t take_u8(std::istream& is);
uint32_t take_u32(std::istream& is);
uint64_t take_u64(std::istream& is);
std::string take_str(std::istream& is);
template <typename T>
void put_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t);
template <typename T>
std::pair<std::string, Tensor<T>> take_tensor(std::istream& is);
}  // namespace ckpt

}  // namespace lmtl
