#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "lmtl/error.hpp"
#include "lmtl/metrics.hpp"
#include "lmtl/pipeline.hpp"
#include "lmtl/unicode.hpp"

using namespace lmtl;

namespace {

std::pair<std::string, std::string> split_eq(const std::string& s, const char* what) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
        throw DataError(std::string(what) + " wants KEY=PATH, got '" + s + "'");
    }
    return {s.substr(0, eq), s.substr(eq + 1)};
}

// The shared run-configuration surface of the training commands: defaults,
// then --config file, then explicit flags.
struct TrainFlags {
    std::string config;
    uint64_t seed = 0;
    uint64_t max_steps = 0;
    uint64_t warmup = 0;
    uint64_t log_every = 0;
    uint64_t save_every = 0;
    uint64_t batch_sentences = 0;
    uint64_t batch_tokens = 0;
    double lr_max = 0.0;
    CLI::Option* seed_o = nullptr;
    CLI::Option* max_steps_o = nullptr;
    CLI::Option* warmup_o = nullptr;
    CLI::Option* log_every_o = nullptr;
    CLI::Option* save_every_o = nullptr;
    CLI::Option* batch_sentences_o = nullptr;
    CLI::Option* batch_tokens_o = nullptr;
    CLI::Option* lr_max_o = nullptr;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config, "flat key = value run configuration file");
        seed_o = cmd->add_option("--seed", seed, "master seed (training and noising)");
        max_steps_o = cmd->add_option("--max-steps", max_steps, "optimizer steps to run");
        warmup_o = cmd->add_option("--warmup-steps", warmup, "lr warmup steps");
        log_every_o = cmd->add_option("--log-every", log_every, "steps between log lines");
        save_every_o = cmd->add_option("--save-every", save_every,
                                       "steps between periodic checkpoints (0: final only)");
        batch_sentences_o =
            cmd->add_option("--batch-sentences", batch_sentences, "examples per batch");
        batch_tokens_o = cmd->add_option("--batch-tokens", batch_tokens,
                                         "target-token budget per batch (alternative)");
        lr_max_o = cmd->add_option("--lr-max", lr_max, "peak learning rate");
    }

    RunConfig resolve() const {
        RunConfig rc;
        if (!config.empty()) apply_config_file(rc, config);
        if (seed_o->count()) {
            rc.train.seed = seed;
            rc.noise.seed = seed;
        }
        if (max_steps_o->count()) rc.train.max_steps = max_steps;
        if (warmup_o->count()) rc.train.warmup_steps = warmup;
        if (log_every_o->count()) rc.train.log_every = log_every;
        if (save_every_o->count()) rc.train.save_every = save_every;
        if (batch_sentences_o->count()) rc.train.batch_sentences = batch_sentences;
        if (batch_tokens_o->count()) {
            rc.train.batch_tokens = batch_tokens;
            if (!batch_sentences_o->count()) rc.train.batch_sentences = 0;
        }
        if (lr_max_o->count()) rc.train.lr_max = lr_max;
        return rc;
    }
};

void print_kv(const std::map<std::string, std::string>& kv) { std::cout << render_kv(kv); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multilingual denoising pretraining and translation"};
    app.require_subcommand(1);

    // prepare
    auto* prep = app.add_subcommand("prepare", "normalize, dedup and split a corpus");
    struct {
        std::string mono, lang, parallel, src, tgt, out, config;
        double test_frac = 0.1, valid_frac = 0.1;
        uint64_t test_count = 0, valid_count = 0, seed = 0;
    } pa;
    prep->add_option("--mono", pa.mono, "monolingual input, one sentence per line");
    prep->add_option("--lang", pa.lang, "language of --mono");
    prep->add_option("--parallel", pa.parallel, "two-column TSV input");
    prep->add_option("--src", pa.src, "source language of --parallel");
    prep->add_option("--tgt", pa.tgt, "target language of --parallel");
    prep->add_option("--out", pa.out, "output prefix")->required();
    auto* tf = prep->add_option("--test-frac", pa.test_frac, "test fraction");
    auto* vf = prep->add_option("--valid-frac", pa.valid_frac, "valid fraction");
    auto* tc = prep->add_option("--test-count", pa.test_count, "absolute test size");
    auto* vc = prep->add_option("--valid-count", pa.valid_count, "absolute valid size");
    auto* ps = prep->add_option("--seed", pa.seed, "split shuffle seed");
    prep->add_option("--config", pa.config, "flat key = value run configuration file");
    prep->callback([&] {
        RunConfig rc;
        if (!pa.config.empty()) apply_config_file(rc, pa.config);
        PrepareArgs args;
        args.mono_path = pa.mono;
        args.language = pa.lang;
        args.parallel_path = pa.parallel;
        args.src_language = pa.src;
        args.tgt_language = pa.tgt;
        args.out_prefix = pa.out;
        if (tc->count() || vc->count()) {
            if (tf->count() || vf->count()) {
                throw DataError("use either fractional or absolute split sizes, not both");
            }
            args.split.mode = SplitSpec::Mode::count;
            args.split.test = double(pa.test_count);
            args.split.valid = double(pa.valid_count);
        } else {
            args.split.test = pa.test_frac;
            args.split.valid = pa.valid_frac;
        }
        args.split.seed = ps->count() ? pa.seed : rc.train.seed;
        print_kv(run_prepare(args));
    });

    // train-tokenizer
    auto* ttok = app.add_subcommand("train-tokenizer", "fit the shared subword vocabulary");
    struct {
        std::vector<std::string> corpora;
        uint64_t vocab_size = 1000, seed = 0;
        std::string out, config;
    } ta;
    ttok->add_option("--corpus", ta.corpora, "LANG=PATH training corpus (repeatable)")
        ->required();
    ttok->add_option("--vocab-size", ta.vocab_size, "total vocabulary size");
    ttok->add_option("--out", ta.out, "output directory")->required();
    ttok->add_option("--seed", ta.seed, "accepted for uniformity; training is deterministic");
    ttok->add_option("--config", ta.config, "flat key = value run configuration file");
    ttok->callback([&] {
        if (!ta.config.empty()) {
            RunConfig rc;
            apply_config_file(rc, ta.config);
        }
        TrainTokenizerArgs args;
        for (const auto& c : ta.corpora) args.corpora.push_back(split_eq(c, "--corpus"));
        args.vocab_size = ta.vocab_size;
        args.out_dir = ta.out;
        print_kv(run_train_tokenizer(args));
    });

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "multi-task denoising + translation pretraining");
    struct {
        std::string preset, data, tokenizer, out, precision = "f64", resume;
        std::vector<std::string> mono, para;
        uint64_t dump = 0;
    } ra;
    TrainFlags pre_flags;
    pre->add_option("--preset", ra.preset, "exp1|exp2|exp3|exp3plus|exp4 (with optional -desk)");
    pre->add_option("--mono", ra.mono, "LANG=PATH explicit denoise source (repeatable)");
    pre->add_option("--para", ra.para, "SRC-TGT=PATH explicit translate source (repeatable)");
    pre->add_option("--data", ra.data, "directory holding the preset's corpora");
    pre->add_option("--tokenizer", ra.tokenizer, "directory with vocab.txt and merges.txt")
        ->required();
    pre->add_option("--out", ra.out, "output directory")->required();
    pre->add_option("--precision", ra.precision, "f32 or f64 (default f64)");
    pre->add_option("--resume", ra.resume, "checkpoint to continue from");
    pre->add_option("--dump-examples", ra.dump,
                    "print N drawn examples (task, languages, token ids) and exit");
    pre_flags.add_to(pre);
    pre->callback([&] {
        PretrainArgs args;
        args.preset = ra.preset;
        args.data_dir = ra.data;
        args.tokenizer_dir = ra.tokenizer;
        args.out_dir = ra.out;
        args.precision = ra.precision;
        args.resume = ra.resume;
        args.dump_examples = ra.dump;
        for (const auto& m : ra.mono) args.mono_override.push_back(split_eq(m, "--mono"));
        for (const auto& p : ra.para) args.parallel_override.push_back(split_eq(p, "--para"));
        if (args.preset.empty() && args.mono_override.empty() && args.parallel_override.empty()) {
            throw DataError("pretrain wants --preset or explicit --mono/--para sources");
        }
        args.config = pre_flags.resolve();
        run_pretrain(args, std::cout);
    });

    // finetune
    auto* fin = app.add_subcommand("finetune", "translation fine-tuning of a checkpoint");
    struct {
        std::string checkpoint, train, src, tgt, tokenizer, out, precision = "f64";
    } fa;
    TrainFlags fin_flags;
    fin->add_option("--checkpoint", fa.checkpoint,
                    "pretrained checkpoint (omit for a scratch baseline)");
    fin->add_option("--train", fa.train, "parallel training TSV")->required();
    fin->add_option("--src", fa.src, "source language")->required();
    fin->add_option("--tgt", fa.tgt, "target language")->required();
    fin->add_option("--tokenizer", fa.tokenizer, "directory with vocab.txt and merges.txt")
        ->required();
    fin->add_option("--out", fa.out, "output directory")->required();
    fin->add_option("--precision", fa.precision, "f32 or f64 (default f64)");
    fin_flags.add_to(fin);
    fin->callback([&] {
        FinetuneArgs args;
        args.checkpoint = fa.checkpoint;
        args.train_tsv = fa.train;
        args.src_language = fa.src;
        args.tgt_language = fa.tgt;
        args.tokenizer_dir = fa.tokenizer;
        args.out_dir = fa.out;
        args.precision = fa.precision;
        args.config = fin_flags.resolve();
        run_finetune(args, std::cout);
    });

    // translate
    auto* tr = app.add_subcommand("translate", "decode a file line by line");
    struct {
        std::string checkpoint, tokenizer, input, output, src, tgt, config;
        uint64_t beam = 1, max_steps = 0, seed = 0;
        double alpha = 0.7;
    } xa;
    tr->add_option("--checkpoint", xa.checkpoint, "trained checkpoint")->required();
    tr->add_option("--tokenizer", xa.tokenizer, "directory with vocab.txt and merges.txt")
        ->required();
    tr->add_option("--input", xa.input, "source sentences, one per line")->required();
    tr->add_option("--output", xa.output, "output path (default: stdout)");
    tr->add_option("--src", xa.src, "source language")->required();
    tr->add_option("--tgt", xa.tgt, "target language")->required();
    tr->add_option("--beam", xa.beam, "beam width (1: greedy)");
    tr->add_option("--alpha", xa.alpha, "beam length penalty");
    tr->add_option("--max-steps", xa.max_steps, "decode step cap (0: model limit)");
    tr->add_option("--seed", xa.seed, "accepted for uniformity; decoding is deterministic");
    tr->add_option("--config", xa.config, "flat key = value run configuration file");
    tr->callback([&] {
        if (!xa.config.empty()) {
            RunConfig rc;
            apply_config_file(rc, xa.config);
        }
        TranslateArgs args;
        args.checkpoint = xa.checkpoint;
        args.tokenizer_dir = xa.tokenizer;
        args.input_path = xa.input;
        args.output_path = xa.output;
        args.src_language = xa.src;
        args.tgt_language = xa.tgt;
        args.beam = xa.beam;
        args.length_alpha = xa.alpha;
        args.max_steps = xa.max_steps;
        auto lines = run_translate(args);
        if (args.output_path.empty()) {
            for (const auto& line : lines) std::cout << line << "\n";
        }
    });

    // score
    auto* sc = app.add_subcommand("score", "BLEU and chrF against a reference");
    struct {
        std::string hyp, ref, manifest, config;
        uint64_t seed = 0;
    } sa;
    sc->add_option("--hyp", sa.hyp, "hypothesis file")->required();
    sc->add_option("--ref", sa.ref, "reference file")->required();
    sc->add_option("--update-manifest", sa.manifest, "record the scores in this manifest");
    sc->add_option("--seed", sa.seed, "accepted for uniformity; scoring is deterministic");
    sc->add_option("--config", sa.config, "flat key = value run configuration file");
    sc->callback([&] {
        if (!sa.config.empty()) {
            RunConfig rc;
            apply_config_file(rc, sa.config);
        }
        ScoreArgs args;
        args.hyp_path = sa.hyp;
        args.ref_path = sa.ref;
        args.update_manifest = sa.manifest;
        auto [bleu, chrf] = run_score(args);
        std::cout << format_bleu_line(bleu) << "\n" << format_chrf_line(chrf) << "\n";
    });

    // report
    auto* rep = app.add_subcommand("report", "comparison table over run manifests");
    struct {
        std::vector<std::string> manifests;
        std::string text, csv, config;
        uint64_t seed = 0;
    } ma;
    rep->add_option("manifests", ma.manifests, "run manifest files")->required();
    rep->add_option("--text-out", ma.text, "also write the table here");
    rep->add_option("--csv-out", ma.csv, "also write CSV here");
    rep->add_option("--seed", ma.seed, "accepted for uniformity; reporting is deterministic");
    rep->add_option("--config", ma.config, "flat key = value run configuration file");
    rep->callback([&] {
        if (!ma.config.empty()) {
            RunConfig rc;
            apply_config_file(rc, ma.config);
        }
        ReportArgs args;
        args.manifests = ma.manifests;
        args.text_out = ma.text;
        args.csv_out = ma.csv;
        std::cout << run_report(args);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const uni::Utf8Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
