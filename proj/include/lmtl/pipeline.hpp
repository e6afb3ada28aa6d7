#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lmtl/corpus.hpp"
#include "lmtl/metrics.hpp"
#include "lmtl/tokenizer.hpp"
#include "lmtl/trainer.hpp"

namespace lmtl {

uint64_t fnv1a(std::string_view bytes);
std::string file_hash(const std::string& path);  // "fnv1a:" + 16 hex digits

// Write-to-temporary-then-rename so readers never observe partial files.
void atomic_write_file(const std::string& path, const std::string& content);

std::string render_kv(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> load_kv_file(const std::string& path);
void write_manifest(const std::string& path, const std::map<std::string, std::string>& kv);

// The five experiment presets. They differ only in which corpora feed which
// task; model shape and optimization stay whatever the caller configured.
struct PresetSpec {
    std::string name;
    std::vector<std::string> mono;  // denoising languages
    std::vector<std::pair<std::string, std::string>> parallel;
    // exp3 family: monolingual English is subsampled to this fraction of the
    // largest other monolingual corpus (0 = no English mono).
    double english_ratio = 0.0;
    std::string data_kind;  // human-readable summary for reports
};

// Accepts exp1..exp4, exp3plus, with or without a "-desk" suffix.
PresetSpec preset_spec(std::string name);

struct DataFiles {
    std::map<std::string, std::string> mono;      // language -> path
    std::map<std::string, std::string> parallel;  // "src-tgt" -> path
};

// Resolves the preset's corpora under data_dir: mono.<lang>.train.txt (or
// mono.<lang>.txt), para.<src>-<tgt>.train.tsv (or para.<src>-<tgt>.tsv).
DataFiles preset_files(const PresetSpec& spec, const std::string& data_dir);

std::vector<std::vector<int32_t>> encode_lines(const Tokenizer& tok,
                                               const std::vector<std::string>& lines);

struct BoundData {
    TaskMixture mixture;
    std::vector<TaskStream> streams;
    std::map<std::string, std::string> manifest;  // data hashes, counts, sampling notes
};

// Loads, encodes and weights the preset's corpora. Parallel corpora feed
// both translation directions; source weights follow oversample_weights
// over example counts at the given alpha. seed fixes the exp3 English
// subsample.
BoundData bind_preset(const PresetSpec& spec, const DataFiles& files, const Tokenizer& tok,
                      double alpha, uint64_t seed);

// Single translate stream for fine-tuning.
BoundData bind_parallel(const ParallelCorpus& corpus, const Tokenizer& tok);

// One translation per input line; empty lines pass through empty. beam == 1
// decodes greedily.
std::vector<std::string> translate_lines(const ParamStore<double>& params,
                                         const ModelConfig& config, const Tokenizer& tok,
                                         const std::vector<std::string>& lines,
                                         const std::string& src_language,
                                         const std::string& tgt_language, std::size_t beam,
                                         double length_alpha, std::size_t max_steps);

// Flat key = value run configuration, prefix-dispatched: model.*, train.*,
// noise.*. Unknown keys are errors.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    NoiseConfig noise;
};
void apply_config_kv(RunConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& kv);
void apply_config_file(RunConfig& config, const std::string& path);

struct PrepareArgs {
    // exactly one of mono_path / parallel_path is set
    std::string mono_path;
    std::string language;
    std::string parallel_path;
    std::string src_language;
    std::string tgt_language;
    SplitSpec split;
    std::string out_prefix;
};
std::map<std::string, std::string> run_prepare(const PrepareArgs& args);

struct TrainTokenizerArgs {
    std::vector<std::pair<std::string, std::string>> corpora;  // (language, path)
    std::size_t vocab_size = 1000;
    std::string out_dir;
};
std::map<std::string, std::string> run_train_tokenizer(const TrainTokenizerArgs& args);

struct PretrainArgs {
    std::string preset = "exp1";
    std::string data_dir;
    std::string tokenizer_dir;
    std::string out_dir;
    // Non-empty overrides replace the preset with an explicit mixture:
    // (language, path) denoise sources and ("src-tgt", path) translate
    // sources.
    std::vector<std::pair<std::string, std::string>> mono_override;
    std::vector<std::pair<std::string, std::string>> parallel_override;
    RunConfig config;
    std::string precision = "f64";
    std::string resume;
    std::size_t dump_examples = 0;  // > 0: print dumps to the log and skip training
};
std::map<std::string, std::string> run_pretrain(const PretrainArgs& args, std::ostream& log);

struct FinetuneArgs {
    std::string checkpoint;  // empty: scratch baseline from config.model
    std::string train_tsv;
    std::string src_language;
    std::string tgt_language;
    std::string tokenizer_dir;
    std::string out_dir;
    RunConfig config;
    std::string precision = "f64";
};
std::map<std::string, std::string> run_finetune(const FinetuneArgs& args, std::ostream& log);

struct TranslateArgs {
    std::string checkpoint;
    std::string tokenizer_dir;
    std::string input_path;
    std::string output_path;  // empty: lines only returned
    std::string src_language;
    std::string tgt_language;
    std::size_t beam = 1;
    double length_alpha = 0.7;
    std::size_t max_steps = 0;  // 0: max_len - 1
};
std::vector<std::string> run_translate(const TranslateArgs& args);

struct ScoreArgs {
    std::string hyp_path;
    std::string ref_path;
    std::string update_manifest;  // optional manifest to record the scores in
};
std::pair<BleuScore, ChrfScore> run_score(const ScoreArgs& args);

struct ReportArgs {
    std::vector<std::string> manifests;
    std::string text_out;  // optional output paths
    std::string csv_out;
};
std::string run_report(const ReportArgs& args);

}  // namespace lmtl
