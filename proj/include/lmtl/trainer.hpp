#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lmtl/model.hpp"
#include "lmtl/noising.hpp"
#include "lmtl/rng.hpp"

namespace lmtl {

struct TrainConfig {
    uint64_t max_steps = 100;
    // Exactly one of these is positive: fixed sentence count per batch or a
    // budget on non-pad target tokens.
    std::size_t batch_sentences = 8;
    std::size_t batch_tokens = 0;
    double lr_max = 5e-4;
    uint64_t warmup_steps = 4000;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-8;
    double label_smoothing = 0.1;
    double clip_norm = 1.0;  // 0 disables clipping
    uint64_t seed = 0;
    uint64_t log_every = 50;
    uint64_t save_every = 0;  // 0: final checkpoint only
    double sampling_alpha = 0.7;

    void validate() const;
};

// Per-task sampling weights; nonnegative with at least one positive entry.
struct TaskMixture {
    std::vector<std::pair<TaskKind, double>> weights;

    void validate() const;
};

// One sampleable data source. Denoise streams read `mono` (encoded corpus
// lines, grouped into pseudo-documents of NoiseConfig::document_size
// consecutive lines); translate and concat streams read `pairs`. `weight`
// is the within-task selection weight, normally an oversampling weight.
struct TaskStream {
    TaskKind kind = TaskKind::denoise;
    std::string name;
    std::string src_language;
    std::string tgt_language;
    int32_t src_tag = -1;
    int32_t tgt_tag = -1;
    double weight = 1.0;
    std::vector<std::vector<int32_t>> mono;
    std::vector<std::pair<std::vector<int32_t>, std::vector<int32_t>>> pairs;

    void validate() const;
};

// lr_max * min(step / warmup, sqrt(warmup / step)); step is 1-based.
double lr_at(uint64_t step, double lr_max, uint64_t warmup);

// One uniform draw; walks the cumulative normalized weights.
std::size_t sample_categorical(const std::vector<double>& weights, Rng& rng);

// Two-stage draw: task index by mixture weight, then source index by the
// per-source weights of that task. Always consumes exactly two draws.
std::pair<std::size_t, std::size_t> sample_task(const std::vector<double>& task_weights,
                                                const std::vector<std::vector<double>>& source_weights,
                                                Rng& rng);

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
};

template <typename T>
AdamState<T> init_adam(const ParamStore<T>& params);

// Bias-corrected Adam applied after global-norm clipping. step is the
// 1-based optimizer step. A non-finite gradient raises NumericError naming
// the parameter.
template <typename T>
void adam_step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               uint64_t step, const TrainConfig& config, double lr);

// Pads a selection of examples into model tensors. Selection is by
// ascending target length: the first `batch_sentences` examples, or as many
// as fit `batch_tokens` non-pad target tokens. Consumed pool indices are
// returned so callers can retire them.
struct BatchPlan {
    Batch batch;
    std::vector<std::size_t> consumed;
};
BatchPlan make_batch(const std::vector<TrainingExample>& pool, std::size_t batch_sentences,
                     std::size_t batch_tokens);

// Mean label-smoothed cross entropy over non-pad target tokens, batching
// the examples in order. Dropout-free.
template <typename T>
double evaluate_loss(const ParamStore<T>& params, const ModelConfig& config,
                     const std::vector<TrainingExample>& examples, std::size_t batch_sentences,
                     double label_smoothing);

// Single-owner training loop. Draw sequences are derived from the configured
// seeds per (stream, example counter) and per step, so a run is a pure
// function of (configs, data, seed) and a restored checkpoint continues the
// interrupted run bit-exactly in 64-bit mode.
template <typename T>
class Trainer {
public:
    Trainer(ModelConfig model_config, TrainConfig train_config, NoiseConfig noise_config,
            TaskMixture mixture, std::vector<TaskStream> streams, std::string vocab_hash);

    void init_model(uint64_t seed);
    // Adopt existing weights (fine-tuning or a scratch baseline); resets the
    // optimizer and the step counter.
    void adopt_model(ParamStore<T> params);

    // Runs steps step()+1 .. max_steps, appending "step\ttask\tloss\tlr"
    // lines to log every log_every steps (and at the final step). When
    // save_every is set, on_checkpoint fires at that cadence.
    void run(std::ostream* log,
             const std::function<void(const Trainer&)>& on_checkpoint = nullptr);

    // The first n examples the run would draw, in draw order. Advances the
    // sampling state, so preview on a throwaway instance.
    std::vector<TrainingExample> preview(std::size_t n);

    uint64_t step() const { return step_; }
    double last_loss() const { return last_loss_; }
    const ParamStore<T>& model() const { return params_; }
    const ModelConfig& model_config() const { return model_config_; }
    const std::string& vocab_hash() const { return vocab_hash_; }
    std::map<std::string, std::string>& manifest() { return manifest_; }
    const std::map<std::string, std::string>& manifest() const { return manifest_; }

    void save(std::ostream& out) const;
    void restore(std::istream& in);

private:
    struct StreamState {
        uint64_t epoch = 0;
        uint64_t epoch_seed = 0;
        uint64_t counter = 0;
        std::size_t cursor = 0;
        std::vector<uint32_t> order;
        std::vector<TrainingExample> pending;
        std::vector<std::pair<uint32_t, uint64_t>> pending_keys;
    };

    uint64_t stream_seed(std::size_t stream_index) const;
    std::size_t unit_count(const TaskStream& stream) const;
    void start_epoch(std::size_t stream_index, uint64_t epoch, uint64_t at_step);
    uint32_t next_unit(std::size_t stream_index);
    bool try_build(std::size_t stream_index, uint32_t unit, uint64_t counter,
                   TrainingExample* out) const;
    void draw_into_pending(std::size_t stream_index);
    void fill_pending(std::size_t stream_index);
    std::size_t pick_stream();
    void train_step();

    ModelConfig model_config_;
    TrainConfig train_config_;
    NoiseConfig noise_config_;
    TaskMixture mixture_;
    std::vector<TaskStream> streams_;
    std::string vocab_hash_;
    std::map<std::string, std::string> manifest_;

    std::vector<double> task_weights_;
    std::vector<std::vector<std::size_t>> task_streams_;  // stream indices per mixture entry
    std::vector<std::vector<double>> source_weights_;

    ParamStore<T> params_;
    AdamState<T> adam_;
    uint64_t adam_t_ = 0;
    uint64_t step_ = 0;
    double last_loss_ = 0.0;
    Rng sample_rng_;
    std::vector<StreamState> state_;
    std::ostream* log_ = nullptr;
};

// Reads config, weights and the manifest from a trainer checkpoint without
// the optimizer or stream state (enough to fine-tune, translate or score).
template <typename T>
struct LoadedCheckpoint {
    ModelConfig config;
    ParamStore<T> params;
    std::map<std::string, std::string> manifest;
    uint64_t step = 0;
    std::string vocab_hash;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint_params(std::istream& in);

}  // namespace lmtl
