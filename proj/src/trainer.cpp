#include "lmtl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lmtl/autograd.hpp"
#include "lmtl/error.hpp"
#include "lmtl/kv.hpp"

namespace lmtl {

void TrainConfig::validate() const {
    if ((batch_sentences > 0) == (batch_tokens > 0)) {
        throw DataError("exactly one of batch_sentences and batch_tokens must be positive");
    }
    if (warmup_steps < 1) throw DataError("warmup_steps must be at least 1");
    if (lr_max <= 0.0) throw DataError("lr_max must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw DataError("adam betas must lie in [0, 1)");
    }
    if (adam_eps <= 0.0) throw DataError("adam_eps must be positive");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
        throw DataError("label_smoothing must lie in [0, 1)");
    }
    if (clip_norm < 0.0) throw DataError("clip_norm must be nonnegative");
    if (log_every < 1) throw DataError("log_every must be at least 1");
    if (sampling_alpha <= 0.0) throw DataError("sampling_alpha must be positive");
}

void TaskMixture::validate() const {
    if (weights.empty()) throw DataError("task mixture is empty");
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].second < 0.0) throw DataError("task mixture weights must be nonnegative");
        total += weights[i].second;
        for (std::size_t j = 0; j < i; ++j) {
            if (weights[j].first == weights[i].first) {
                throw DataError(std::string("duplicate task ") + task_name(weights[i].first) +
                                " in mixture");
            }
        }
    }
    if (total <= 0.0) throw DataError("task mixture needs at least one positive weight");
}

void TaskStream::validate() const {
    if (name.empty()) throw DataError("stream name is empty");
    if (weight <= 0.0) throw DataError("stream " + name + ": weight must be positive");
    if (src_language.empty() || tgt_language.empty()) {
        throw DataError("stream " + name + ": languages must be set");
    }
    if (src_tag < 0 || tgt_tag < 0) throw DataError("stream " + name + ": language tags not set");
    if (kind == TaskKind::denoise) {
        if (mono.empty()) throw DataError("stream " + name + ": no monolingual data");
    } else if (pairs.empty()) {
        throw DataError("stream " + name + ": no parallel data");
    }
}

double lr_at(uint64_t step, double lr_max, uint64_t warmup) {
    if (step < 1) throw DataError("lr_at: step is 1-based");
    if (warmup < 1) throw DataError("lr_at: warmup must be at least 1");
    double s = double(step);
    double w = double(warmup);
    return lr_max * std::min(s / w, std::sqrt(w / s));
}

std::size_t sample_categorical(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw DataError("sample_categorical: negative weight");
        total += w;
    }
    if (weights.empty() || total <= 0.0) {
        throw DataError("sample_categorical: no positive weight");
    }
    double u = rng.uniform() * total;
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] > 0.0) last_positive = i;
        cum += weights[i];
        if (u < cum && weights[i] > 0.0) return i;
    }
    return last_positive;
}

std::pair<std::size_t, std::size_t> sample_task(
    const std::vector<double>& task_weights,
    const std::vector<std::vector<double>>& source_weights, Rng& rng) {
    if (task_weights.size() != source_weights.size()) {
        throw DataError("sample_task: weight table sizes differ");
    }
    std::size_t task = sample_categorical(task_weights, rng);
    std::size_t source = sample_categorical(source_weights[task], rng);
    return {task, source};
}

template <typename T>
AdamState<T> init_adam(const ParamStore<T>& params) {
    AdamState<T> state;
    state.m.reserve(params.tensors.size());
    state.v.reserve(params.tensors.size());
    for (const auto& t : params.tensors) {
        state.m.push_back(Tensor<T>::zeros(t.shape));
        state.v.push_back(Tensor<T>::zeros(t.shape));
    }
    return state;
}

template <typename T>
void adam_step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               uint64_t step, const TrainConfig& config, double lr) {
    if (step < 1) throw DataError("adam_step: step is 1-based");
    std::size_t n = params.tensors.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw DataError("adam_step: parameter, gradient and moment counts differ");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (grads[i].shape != params.tensors[i].shape) {
            throw DataError("adam_step: gradient shape mismatch for " + params.names[i]);
        }
        for (T g : grads[i].values) {
            if (!std::isfinite(double(g))) {
                throw NumericError("non-finite gradient in " + params.names[i]);
            }
            sq += double(g) * double(g);
        }
    }
    double scale = 1.0;
    if (config.clip_norm > 0.0) {
        double norm = std::sqrt(sq);
        if (norm > config.clip_norm) scale = config.clip_norm / norm;
    }
    double bc1 = 1.0 - std::pow(config.beta1, double(step));
    double bc2 = 1.0 - std::pow(config.beta2, double(step));
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = params.tensors[i].values;
        auto& m = state.m[i].values;
        auto& v = state.v[i].values;
        const auto& g = grads[i].values;
        for (std::size_t j = 0; j < p.size(); ++j) {
            double gj = double(g[j]) * scale;
            double mj = config.beta1 * double(m[j]) + (1.0 - config.beta1) * gj;
            double vj = config.beta2 * double(v[j]) + (1.0 - config.beta2) * gj * gj;
            m[j] = T(mj);
            v[j] = T(vj);
            double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + config.adam_eps);
            p[j] = T(double(p[j]) - update);
        }
    }
}

namespace {

Batch pad_examples(const std::vector<const TrainingExample*>& chosen) {
    Batch b;
    b.size = chosen.size();
    for (const auto* ex : chosen) {
        if (ex->decoder_input.size() != ex->target.size()) {
            throw DataError("example decoder/target lengths differ");
        }
        b.enc_len = std::max(b.enc_len, ex->encoder_input.size());
        b.dec_len = std::max(b.dec_len, ex->decoder_input.size());
    }
    b.enc_ids.assign(b.size * b.enc_len, SpecialTokens::pad);
    b.dec_ids.assign(b.size * b.dec_len, SpecialTokens::pad);
    b.tgt_ids.assign(b.size * b.dec_len, SpecialTokens::pad);
    b.enc_real.assign(b.size * b.enc_len, 0);
    b.dec_real.assign(b.size * b.dec_len, 0);
    for (std::size_t r = 0; r < b.size; ++r) {
        const auto& ex = *chosen[r];
        for (std::size_t i = 0; i < ex.encoder_input.size(); ++i) {
            b.enc_ids[r * b.enc_len + i] = ex.encoder_input[i];
            b.enc_real[r * b.enc_len + i] = 1;
        }
        for (std::size_t i = 0; i < ex.decoder_input.size(); ++i) {
            b.dec_ids[r * b.dec_len + i] = ex.decoder_input[i];
            b.tgt_ids[r * b.dec_len + i] = ex.target[i];
            b.dec_real[r * b.dec_len + i] = 1;
        }
    }
    return b;
}

std::size_t real_target_tokens(const Batch& b) {
    std::size_t count = 0;
    for (uint8_t f : b.dec_real) count += f;
    return count;
}

}  // namespace

BatchPlan make_batch(const std::vector<TrainingExample>& pool, std::size_t batch_sentences,
                     std::size_t batch_tokens) {
    if ((batch_sentences > 0) == (batch_tokens > 0)) {
        throw DataError("exactly one of batch_sentences and batch_tokens must be positive");
    }
    if (pool.empty()) throw DataError("make_batch: empty example pool");
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pool[a].target.size() != pool[b].target.size()) {
            return pool[a].target.size() < pool[b].target.size();
        }
        return a < b;
    });
    std::vector<std::size_t> chosen;
    if (batch_sentences > 0) {
        std::size_t take = std::min(batch_sentences, pool.size());
        chosen.assign(order.begin(), order.begin() + long(take));
    } else {
        std::size_t used = 0;
        for (std::size_t idx : order) {
            std::size_t t = pool[idx].target.size();
            if (chosen.empty() && t > batch_tokens) {
                throw DataError("example with " + std::to_string(t) +
                                " target tokens exceeds batch budget " +
                                std::to_string(batch_tokens));
            }
            if (used + t > batch_tokens) break;
            chosen.push_back(idx);
            used += t;
        }
    }
    BatchPlan plan;
    std::vector<const TrainingExample*> refs;
    refs.reserve(chosen.size());
    for (std::size_t idx : chosen) refs.push_back(&pool[idx]);
    plan.batch = pad_examples(refs);
    plan.consumed = chosen;
    std::sort(plan.consumed.begin(), plan.consumed.end());
    return plan;
}

template <typename T>
double evaluate_loss(const ParamStore<T>& params, const ModelConfig& config,
                     const std::vector<TrainingExample>& examples, std::size_t batch_sentences,
                     double label_smoothing) {
    if (examples.empty()) throw DataError("evaluate_loss: no examples");
    if (batch_sentences == 0) throw DataError("evaluate_loss: batch_sentences must be positive");
    double total = 0.0;
    std::size_t tokens = 0;
    for (std::size_t at = 0; at < examples.size(); at += batch_sentences) {
        std::size_t end = std::min(at + batch_sentences, examples.size());
        std::vector<const TrainingExample*> refs;
        refs.reserve(end - at);
        for (std::size_t i = at; i < end; ++i) refs.push_back(&examples[i]);
        Batch batch = pad_examples(refs);
        Tape<T> tape;
        auto bound = bind_params(tape, params, config, false);
        auto logits = forward_logits(tape, bound, batch, 0.0, nullptr);
        auto loss = tape.cross_entropy_ls(logits, batch.tgt_ids, T(label_smoothing),
                                          int32_t(SpecialTokens::pad));
        std::size_t count = real_target_tokens(batch);
        total += double(tape.value(loss).values[0]) * double(count);
        tokens += count;
    }
    return total / double(tokens);
}

template <typename T>
Trainer<T>::Trainer(ModelConfig model_config, TrainConfig train_config, NoiseConfig noise_config,
                    TaskMixture mixture, std::vector<TaskStream> streams, std::string vocab_hash)
    : model_config_(std::move(model_config)),
      train_config_(train_config),
      noise_config_(noise_config),
      mixture_(std::move(mixture)),
      streams_(std::move(streams)),
      vocab_hash_(std::move(vocab_hash)),
      sample_rng_(Rng::derive(train_config.seed, 2, 0)) {
    model_config_.validate();
    train_config_.validate();
    noise_config_.validate();
    mixture_.validate();
    if (streams_.empty()) throw DataError("trainer needs at least one stream");
    for (const auto& s : streams_) s.validate();
    for (const auto& [kind, w] : mixture_.weights) {
        std::vector<std::size_t> idxs;
        std::vector<double> ws;
        for (std::size_t i = 0; i < streams_.size(); ++i) {
            if (streams_[i].kind == kind) {
                idxs.push_back(i);
                ws.push_back(streams_[i].weight);
            }
        }
        if (w > 0.0 && idxs.empty()) {
            throw DataError(std::string("no stream feeds task ") + task_name(kind));
        }
        task_weights_.push_back(w);
        task_streams_.push_back(std::move(idxs));
        source_weights_.push_back(std::move(ws));
    }
    state_.resize(streams_.size());
    for (std::size_t si = 0; si < streams_.size(); ++si) start_epoch(si, 0, 0);
}

template <typename T>
uint64_t Trainer<T>::stream_seed(std::size_t stream_index) const {
    return Rng::derive(train_config_.seed, 1, stream_index);
}

template <typename T>
std::size_t Trainer<T>::unit_count(const TaskStream& stream) const {
    if (stream.kind != TaskKind::denoise) return stream.pairs.size();
    std::size_t d = noise_config_.document_size;
    return (stream.mono.size() + d - 1) / d;
}

template <typename T>
void Trainer<T>::start_epoch(std::size_t stream_index, uint64_t epoch, uint64_t at_step) {
    auto& st = state_[stream_index];
    st.epoch = epoch;
    st.epoch_seed = Rng::derive(stream_seed(stream_index), at_step, epoch);
    st.order.resize(unit_count(streams_[stream_index]));
    std::iota(st.order.begin(), st.order.end(), uint32_t(0));
    Rng rng(st.epoch_seed);
    shuffle(st.order, rng);
    st.cursor = 0;
}

template <typename T>
uint32_t Trainer<T>::next_unit(std::size_t stream_index) {
    auto& st = state_[stream_index];
    if (st.cursor >= st.order.size()) start_epoch(stream_index, st.epoch + 1, step_ + 1);
    return st.order[st.cursor++];
}

template <typename T>
bool Trainer<T>::try_build(std::size_t stream_index, uint32_t unit, uint64_t counter,
                           TrainingExample* out) const {
    const TaskStream& s = streams_[stream_index];
    std::size_t max_len = model_config_.max_len;
    Rng rng(Rng::derive(noise_config_.seed, stream_index, counter));
    if (s.kind == TaskKind::denoise) {
        if (max_len < 3) return false;
        std::size_t budget = max_len - 2;
        std::size_t begin = std::size_t(unit) * noise_config_.document_size;
        std::size_t end = std::min(begin + noise_config_.document_size, s.mono.size());
        std::vector<std::vector<int32_t>> doc;
        for (std::size_t i = begin; i < end; ++i) {
            if (!s.mono[i].empty()) doc.push_back(s.mono[i]);
        }
        if (doc.empty()) return false;
        auto joined_len = [&doc] {
            std::size_t t = doc.size() - 1;
            for (const auto& line : doc) t += line.size();
            return t;
        };
        while (doc.size() > 1 && joined_len() > budget) doc.pop_back();
        if (doc.size() == 1 && doc[0].size() > budget) doc[0].resize(budget);
        *out = make_denoise_example(doc, noise_config_, s.src_tag, s.src_language, max_len, rng);
        return true;
    }
    std::vector<int32_t> src = s.pairs[unit].first;
    std::vector<int32_t> tgt = s.pairs[unit].second;
    if (src.empty() || tgt.empty()) return false;
    if (s.kind == TaskKind::translate) {
        if (max_len < 3) return false;
        std::size_t budget = max_len - 2;
        if (src.size() > budget) src.resize(budget);
        if (tgt.size() > budget) tgt.resize(budget);
        *out = make_translate_example(src, tgt, s.src_tag, s.tgt_tag, s.src_language,
                                      s.tgt_language, max_len);
        return true;
    }
    if (max_len < 6) return false;
    std::size_t budget = max_len - 4;
    if (src.size() + tgt.size() > budget) {
        std::size_t keep_src = std::min(src.size(), budget - 1);
        std::size_t keep_tgt = std::min(tgt.size(), budget - keep_src);
        keep_src = std::min(src.size(), budget - keep_tgt);
        src.resize(keep_src);
        tgt.resize(keep_tgt);
    }
    *out = make_concat_example(src, tgt, s.src_tag, s.tgt_tag, s.src_language, s.tgt_language,
                               noise_config_, max_len, rng);
    return true;
}

template <typename T>
void Trainer<T>::draw_into_pending(std::size_t stream_index) {
    auto& st = state_[stream_index];
    std::size_t attempts = unit_count(streams_[stream_index]) + 1;
    for (std::size_t a = 0; a < attempts; ++a) {
        uint32_t unit = next_unit(stream_index);
        TrainingExample ex;
        if (try_build(stream_index, unit, st.counter, &ex)) {
            st.pending.push_back(std::move(ex));
            st.pending_keys.emplace_back(unit, st.counter);
            ++st.counter;
            return;
        }
    }
    throw DataError("stream " + streams_[stream_index].name + " has no usable examples");
}

template <typename T>
void Trainer<T>::fill_pending(std::size_t stream_index) {
    auto& st = state_[stream_index];
    if (train_config_.batch_sentences > 0) {
        while (st.pending.size() < train_config_.batch_sentences) draw_into_pending(stream_index);
    } else {
        auto total = [&st] {
            std::size_t t = 0;
            for (const auto& ex : st.pending) t += ex.target.size();
            return t;
        };
        while (total() < train_config_.batch_tokens) draw_into_pending(stream_index);
    }
}

template <typename T>
std::size_t Trainer<T>::pick_stream() {
    auto [task, source] = sample_task(task_weights_, source_weights_, sample_rng_);
    return task_streams_[task][source];
}

template <typename T>
void Trainer<T>::train_step() {
    if (params_.tensors.empty()) throw DataError("model not initialized");
    uint64_t s = step_ + 1;
    std::size_t si = pick_stream();
    fill_pending(si);
    auto& st = state_[si];
    BatchPlan plan =
        make_batch(st.pending, train_config_.batch_sentences, train_config_.batch_tokens);
    for (auto it = plan.consumed.rbegin(); it != plan.consumed.rend(); ++it) {
        st.pending.erase(st.pending.begin() + long(*it));
        st.pending_keys.erase(st.pending_keys.begin() + long(*it));
    }

    Tape<T> tape;
    auto bound = bind_params(tape, params_, model_config_, true);
    Rng drop_rng(Rng::derive(train_config_.seed, 3, s));
    Rng* rng = model_config_.dropout > 0.0 ? &drop_rng : nullptr;
    auto logits = forward_logits(tape, bound, plan.batch, model_config_.dropout, rng);
    auto loss_id = tape.cross_entropy_ls(logits, plan.batch.tgt_ids,
                                         T(train_config_.label_smoothing),
                                         int32_t(SpecialTokens::pad));
    double loss = double(tape.value(loss_id).values[0]);
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(s) + " on " +
                           streams_[si].name);
    }
    tape.backward(loss_id);
    std::vector<Tensor<T>> grads;
    grads.reserve(bound.ids.size());
    for (auto id : bound.ids) grads.push_back(tape.grad(id));

    double lr = lr_at(s, train_config_.lr_max, train_config_.warmup_steps);
    adam_step(params_, grads, adam_, ++adam_t_, train_config_, lr);
    last_loss_ = loss;
    step_ = s;
    if (log_ && (s % train_config_.log_every == 0 || s == train_config_.max_steps)) {
        (*log_) << s << '\t' << streams_[si].name << '\t' << format_double(loss) << '\t'
                << format_double(lr) << '\n';
    }
}

template <typename T>
void Trainer<T>::init_model(uint64_t seed) {
    adopt_model(init_params<T>(model_config_, seed));
}

template <typename T>
void Trainer<T>::adopt_model(ParamStore<T> params) {
    auto inventory = param_inventory(model_config_);
    if (params.names.size() != inventory.size()) {
        throw DataError("adopted parameters do not match the model configuration");
    }
    for (std::size_t i = 0; i < inventory.size(); ++i) {
        if (params.names[i] != inventory[i].name ||
            params.tensors[i].shape != inventory[i].shape) {
            throw DataError("adopted parameter " + params.names[i] + " does not match " +
                            inventory[i].name);
        }
    }
    params_ = std::move(params);
    adam_ = init_adam(params_);
    adam_t_ = 0;
    step_ = 0;
    last_loss_ = 0.0;
    sample_rng_ = Rng(Rng::derive(train_config_.seed, 2, 0));
    for (auto& st : state_) {
        st.pending.clear();
        st.pending_keys.clear();
        st.counter = 0;
    }
    for (std::size_t si = 0; si < streams_.size(); ++si) start_epoch(si, 0, 0);
}

template <typename T>
void Trainer<T>::run(std::ostream* log, const std::function<void(const Trainer&)>& on_checkpoint) {
    log_ = log;
    try {
        while (step_ < train_config_.max_steps) {
            train_step();
            if (on_checkpoint && train_config_.save_every > 0 &&
                step_ % train_config_.save_every == 0 && step_ < train_config_.max_steps) {
                on_checkpoint(*this);
            }
        }
    } catch (...) {
        log_ = nullptr;
        throw;
    }
    log_ = nullptr;
}

template <typename T>
std::vector<TrainingExample> Trainer<T>::preview(std::size_t n) {
    std::vector<TrainingExample> out;
    out.reserve(n);
    while (out.size() < n) {
        std::size_t si = pick_stream();
        draw_into_pending(si);
        out.push_back(state_[si].pending.back());
    }
    return out;
}

namespace {

constexpr char kTrainerMagic[4] = {'L', 'M', 'T', 'C'};

std::string encode_pending(const std::vector<std::pair<uint32_t, uint64_t>>& keys) {
    std::ostringstream o;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (i) o << ',';
        o << keys[i].first << ':' << keys[i].second;
    }
    return o.str();
}

std::vector<std::pair<uint32_t, uint64_t>> decode_pending(const std::string& text) {
    std::vector<std::pair<uint32_t, uint64_t>> keys;
    std::istringstream in(text);
    std::string entry;
    while (std::getline(in, entry, ',')) {
        std::size_t colon = entry.find(':');
        if (colon == std::string::npos) throw DataError("malformed pending entry " + entry);
        keys.emplace_back(uint32_t(parse_u64(entry.substr(0, colon))),
                          parse_u64(entry.substr(colon + 1)));
    }
    return keys;
}

std::map<std::string, std::string> kv_map(const std::string& text) {
    std::map<std::string, std::string> out;
    for (auto& [k, v] : parse_kv(text)) out[k] = v;
    return out;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint is missing key " + key);
    return it->second;
}

}  // namespace

template <typename T>
void Trainer<T>::save(std::ostream& out) const {
    out.write(kTrainerMagic, 4);
    ckpt::put_u32(out, 1);

    std::ostringstream head;
    head << "step = " << step_ << "\n";
    head << "adam_t = " << adam_t_ << "\n";
    head << "sample_rng = " << sample_rng_.state() << "\n";
    head << "last_loss = " << format_double(last_loss_) << "\n";
    head << "vocab_hash = " << vocab_hash_ << "\n";
    for (const auto& [k, v] : manifest_) head << "manifest." << k << " = " << v << "\n";
    ckpt::put_str(out, head.str());

    save_model_stream(out, model_config_, params_);

    std::ostringstream body;
    body << "streams = " << streams_.size() << "\n";
    for (std::size_t si = 0; si < streams_.size(); ++si) {
        const auto& st = state_[si];
        std::string p = "stream." + std::to_string(si) + ".";
        body << p << "name = " << streams_[si].name << "\n";
        body << p << "units = " << unit_count(streams_[si]) << "\n";
        body << p << "epoch = " << st.epoch << "\n";
        body << p << "epoch_seed = " << st.epoch_seed << "\n";
        body << p << "cursor = " << st.cursor << "\n";
        body << p << "counter = " << st.counter << "\n";
        if (!st.pending_keys.empty()) {
            body << p << "pending = " << encode_pending(st.pending_keys) << "\n";
        }
    }
    ckpt::put_str(out, body.str());

    ckpt::put_u32(out, uint32_t(params_.tensors.size()));
    for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
        ckpt::put_tensor(out, "m:" + params_.names[i], adam_.m[i]);
        ckpt::put_tensor(out, "v:" + params_.names[i], adam_.v[i]);
    }
}

template <typename T>
void Trainer<T>::restore(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kTrainerMagic, 4)) {
        throw DataError("not a trainer checkpoint");
    }
    uint32_t version = ckpt::take_u32(in);
    if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));

    auto head = kv_map(ckpt::take_str(in));
    if (need(head, "vocab_hash") != vocab_hash_) {
        throw DataError("vocabulary hash mismatch: checkpoint has " + need(head, "vocab_hash") +
                        ", trainer has " + vocab_hash_);
    }

    auto [config, store] = load_model_stream<T>(in);
    if (config.to_kv() != model_config_.to_kv()) {
        throw DataError("checkpoint model configuration differs from the trainer's");
    }

    auto body = kv_map(ckpt::take_str(in));
    if (parse_u64(need(body, "streams")) != streams_.size()) {
        throw DataError("checkpoint stream count differs");
    }

    params_ = std::move(store);
    step_ = parse_u64(need(head, "step"));
    adam_t_ = parse_u64(need(head, "adam_t"));
    sample_rng_.set_state(parse_u64(need(head, "sample_rng")));
    last_loss_ = parse_double(need(head, "last_loss"));
    manifest_.clear();
    for (const auto& [k, v] : head) {
        if (k.rfind("manifest.", 0) == 0) manifest_[k.substr(9)] = v;
    }

    for (std::size_t si = 0; si < streams_.size(); ++si) {
        std::string p = "stream." + std::to_string(si) + ".";
        if (need(body, p + "name") != streams_[si].name) {
            throw DataError("checkpoint stream " + need(body, p + "name") +
                            " does not match " + streams_[si].name);
        }
        if (parse_u64(need(body, p + "units")) != unit_count(streams_[si])) {
            throw DataError("stream " + streams_[si].name +
                            ": data size differs from the checkpoint");
        }
        auto& st = state_[si];
        st.epoch = parse_u64(need(body, p + "epoch"));
        st.epoch_seed = parse_u64(need(body, p + "epoch_seed"));
        st.order.resize(unit_count(streams_[si]));
        std::iota(st.order.begin(), st.order.end(), uint32_t(0));
        Rng rng(st.epoch_seed);
        shuffle(st.order, rng);
        st.cursor = parse_u64(need(body, p + "cursor"));
        if (st.cursor > st.order.size()) throw DataError("checkpoint cursor out of range");
        st.counter = parse_u64(need(body, p + "counter"));
        st.pending.clear();
        st.pending_keys.clear();
        auto it = body.find(p + "pending");
        if (it != body.end()) {
            for (auto [unit, counter] : decode_pending(it->second)) {
                TrainingExample ex;
                if (unit >= st.order.size() || !try_build(si, unit, counter, &ex)) {
                    throw DataError("checkpoint pending example cannot be rebuilt");
                }
                st.pending.push_back(std::move(ex));
                st.pending_keys.emplace_back(unit, counter);
            }
        }
    }

    uint32_t count = ckpt::take_u32(in);
    if (count != params_.tensors.size()) throw DataError("checkpoint optimizer size differs");
    adam_ = init_adam(params_);
    for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
        auto [mn, mt] = ckpt::take_tensor<T>(in);
        auto [vn, vt] = ckpt::take_tensor<T>(in);
        if (mn != "m:" + params_.names[i] || vn != "v:" + params_.names[i]) {
            throw DataError("optimizer tensors out of order at " + params_.names[i]);
        }
        if (mt.shape != params_.tensors[i].shape || vt.shape != params_.tensors[i].shape) {
            throw DataError("optimizer moment shape mismatch for " + params_.names[i]);
        }
        adam_.m[i] = std::move(mt);
        adam_.v[i] = std::move(vt);
    }
    if (!in) throw DataError("truncated trainer checkpoint");
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint_params(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kTrainerMagic, 4)) {
        throw DataError("not a trainer checkpoint");
    }
    uint32_t version = ckpt::take_u32(in);
    if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
    auto head = kv_map(ckpt::take_str(in));
    LoadedCheckpoint<T> loaded;
    loaded.step = parse_u64(need(head, "step"));
    loaded.vocab_hash = need(head, "vocab_hash");
    for (const auto& [k, v] : head) {
        if (k.rfind("manifest.", 0) == 0) loaded.manifest[k.substr(9)] = v;
    }
    auto [config, store] = load_model_stream<T>(in);
    loaded.config = std::move(config);
    loaded.params = std::move(store);
    return loaded;
}

#define LMTL_INSTANTIATE_TRAINER(T)                                                              \
    template AdamState<T> init_adam(const ParamStore<T>&);                                       \
    template void adam_step(ParamStore<T>&, const std::vector<Tensor<T>>&, AdamState<T>&,        \
                            uint64_t, const TrainConfig&, double);                               \
    template double evaluate_loss(const ParamStore<T>&, const ModelConfig&,                      \
                                  const std::vector<TrainingExample>&, std::size_t, double);     \
    template class Trainer<T>;                                                                   \
    template LoadedCheckpoint<T> load_checkpoint_params(std::istream&);

LMTL_INSTANTIATE_TRAINER(float)
LMTL_INSTANTIATE_TRAINER(double)

#undef LMTL_INSTANTIATE_TRAINER

}  // namespace lmtl
