#include "lmtl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lmtl/error.hpp"
#include "lmtl/kv.hpp"
#include "lmtl/model.hpp"
#include "lmtl/noising.hpp"
#include "lmtl/rng.hpp"
#include "lmtl/unicode.hpp"

namespace lmtl {

namespace fs = std::filesystem;

uint64_t fnv1a(std::string_view bytes) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string vocab_hash_of(const Tokenizer& tok) { return "fnv1a:" + hex64(tok.content_hash()); }

Tokenizer load_tokenizer_dir(const std::string& dir) {
    return Tokenizer::load(dir + "/vocab.txt", dir + "/merges.txt");
}

}  // namespace

std::string file_hash(const std::string& path) { return "fnv1a:" + hex64(fnv1a(read_file(path))); }

void atomic_write_file(const std::string& path, const std::string& content) {
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(content.data(), std::streamsize(content.size()));
        out.flush();
        if (!out) throw DataError("write to " + tmp + " failed");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw DataError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string render_kv(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
    std::map<std::string, std::string> out;
    for (auto& [k, v] : parse_kv(read_file(path))) out[k] = std::move(v);
    return out;
}

void write_manifest(const std::string& path, const std::map<std::string, std::string>& kv) {
    atomic_write_file(path, render_kv(kv));
}

PresetSpec preset_spec(std::string name) {
    const std::string suffix = "-desk";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        name.resize(name.size() - suffix.size());
    }
    PresetSpec spec;
    spec.name = name;
    std::vector<std::pair<std::string, std::string>> all_pairs = {
        {"en", "af"}, {"en", "ln"}, {"en", "sw"}, {"en", "zu"}};
    if (name == "exp1") {
        spec.mono = {"ln"};
        spec.data_kind = "Ln mono only";
    } else if (name == "exp2") {
        spec.mono = {"af", "ln", "sw", "zu"};
        spec.parallel = all_pairs;
        spec.data_kind = "Af/Ln/Sw/Zu mono + parallel";
    } else if (name == "exp3") {
        spec.mono = {"af", "ln", "sw", "zu"};
        spec.parallel = all_pairs;
        spec.english_ratio = 0.1;
        spec.data_kind = "exp2 + sampled En mono";
    } else if (name == "exp3plus") {
        spec.mono = {"af", "ln", "sw", "zu"};
        spec.parallel = all_pairs;
        spec.english_ratio = 1.0;
        spec.data_kind = "exp2 + enlarged En mono";
    } else if (name == "exp4") {
        spec.mono = {"en", "ln"};
        spec.parallel = {{"en", "ln"}};
        spec.data_kind = "En/Ln mono + parallel";
    } else {
        throw DataError("unknown preset '" + name + "'");
    }
    return spec;
}

namespace {

std::string resolve_data_file(const std::string& data_dir, const std::string& stem,
                              const std::string& ext) {
    std::string split_path = data_dir + "/" + stem + ".train." + ext;
    if (fs::exists(split_path)) return split_path;
    std::string plain_path = data_dir + "/" + stem + "." + ext;
    if (fs::exists(plain_path)) return plain_path;
    throw DataError("no " + split_path + " or " + plain_path);
}

}  // namespace

DataFiles preset_files(const PresetSpec& spec, const std::string& data_dir) {
    DataFiles files;
    std::vector<std::string> mono = spec.mono;
    if (spec.english_ratio > 0.0) mono.push_back("en");
    for (const auto& lang : mono) {
        files.mono[lang] = resolve_data_file(data_dir, "mono." + lang, "txt");
    }
    for (const auto& [src, tgt] : spec.parallel) {
        std::string key = src + "-" + tgt;
        files.parallel[key] = resolve_data_file(data_dir, "para." + key, "tsv");
    }
    return files;
}

std::vector<std::vector<int32_t>> encode_lines(const Tokenizer& tok,
                                               const std::vector<std::string>& lines) {
    std::vector<std::vector<int32_t>> out;
    out.reserve(lines.size());
    for (const auto& line : lines) out.push_back(tok.encode(line));
    return out;
}

BoundData bind_preset(const PresetSpec& spec, const DataFiles& files, const Tokenizer& tok,
                      double alpha, uint64_t seed) {
    BoundData out;
    out.manifest["preset"] = spec.name;
    out.manifest["data_kind"] = spec.data_kind;

    std::map<std::string, std::size_t> mono_sizes;
    std::map<std::string, std::vector<std::vector<int32_t>>> mono_ids;
    for (const auto& lang : spec.mono) {
        const std::string& path = files.mono.at(lang);
        Corpus corpus = load_corpus(path, lang);
        if (corpus.lines.empty()) throw DataError(path + " has no usable lines");
        out.manifest["data.mono." + lang] = file_hash(path);
        out.manifest["count.mono." + lang] = std::to_string(corpus.lines.size());
        mono_ids[lang] = encode_lines(tok, corpus.lines);
        mono_sizes[lang] = corpus.lines.size();
    }

    if (spec.english_ratio > 0.0) {
        std::size_t largest = 0;
        for (const auto& [lang, n] : mono_sizes) largest = std::max(largest, n);
        const std::string& path = files.mono.at("en");
        Corpus corpus = load_corpus(path, "en");
        if (corpus.lines.empty()) throw DataError(path + " has no usable lines");
        auto ids = encode_lines(tok, corpus.lines);
        std::size_t want =
            std::max<std::size_t>(1, std::size_t(spec.english_ratio * double(largest) + 0.5));
        if (ids.size() > want) {
            std::vector<std::size_t> idx(ids.size());
            std::iota(idx.begin(), idx.end(), std::size_t(0));
            Rng rng(Rng::derive(seed, 4, 0));
            partial_shuffle(idx, want, rng);
            idx.resize(want);
            std::sort(idx.begin(), idx.end());
            std::vector<std::vector<int32_t>> picked;
            picked.reserve(want);
            for (std::size_t i : idx) picked.push_back(std::move(ids[i]));
            ids = std::move(picked);
        }
        out.manifest["data.mono.en"] = file_hash(path);
        out.manifest["count.mono.en"] = std::to_string(corpus.lines.size());
        out.manifest["sample.en.lines"] = std::to_string(ids.size());
        out.manifest["sample.en.ratio"] = format_double(spec.english_ratio);
        out.manifest["sample.en.seed"] = std::to_string(seed);
        mono_sizes["en"] = ids.size();
        mono_ids["en"] = std::move(ids);
    }

    if (!mono_sizes.empty()) {
        SamplingWeights weights = oversample_weights(mono_sizes, alpha);
        for (std::size_t i = 0; i < weights.languages.size(); ++i) {
            const std::string& lang = weights.languages[i];
            TaskStream stream;
            stream.kind = TaskKind::denoise;
            stream.name = "denoise:" + lang;
            stream.src_language = lang;
            stream.tgt_language = lang;
            stream.src_tag = tok.specials().lang_tag(lang);
            stream.tgt_tag = stream.src_tag;
            stream.weight = weights.weights[i];
            stream.mono = std::move(mono_ids[lang]);
            out.streams.push_back(std::move(stream));
        }
        out.mixture.weights.emplace_back(TaskKind::denoise, 1.0);
    }

    if (!spec.parallel.empty()) {
        std::map<std::string, std::size_t> pair_sizes;
        std::map<std::string, std::vector<std::pair<std::vector<int32_t>, std::vector<int32_t>>>>
            direction_pairs;
        for (const auto& [src, tgt] : spec.parallel) {
            std::string key = src + "-" + tgt;
            const std::string& path = files.parallel.at(key);
            ParallelCorpus corpus = load_parallel_tsv(path, src, tgt);
            if (corpus.pairs.empty()) throw DataError(path + " has no usable pairs");
            out.manifest["data.para." + key] = file_hash(path);
            out.manifest["count.para." + key] = std::to_string(corpus.pairs.size());
            std::vector<std::pair<std::vector<int32_t>, std::vector<int32_t>>> forward;
            std::vector<std::pair<std::vector<int32_t>, std::vector<int32_t>>> backward;
            forward.reserve(corpus.pairs.size());
            backward.reserve(corpus.pairs.size());
            for (const auto& [src_line, tgt_line] : corpus.pairs) {
                auto src_ids = tok.encode(src_line);
                auto tgt_ids = tok.encode(tgt_line);
                forward.emplace_back(src_ids, tgt_ids);
                backward.emplace_back(std::move(tgt_ids), std::move(src_ids));
            }
            pair_sizes[key] = forward.size();
            pair_sizes[tgt + "-" + src] = backward.size();
            direction_pairs[key] = std::move(forward);
            direction_pairs[tgt + "-" + src] = std::move(backward);
        }
        SamplingWeights weights = oversample_weights(pair_sizes, alpha);
        for (std::size_t i = 0; i < weights.languages.size(); ++i) {
            const std::string& key = weights.languages[i];
            auto dash = key.find('-');
            std::string src = key.substr(0, dash);
            std::string tgt = key.substr(dash + 1);
            TaskStream stream;
            stream.kind = TaskKind::translate;
            stream.name = "translate:" + key;
            stream.src_language = src;
            stream.tgt_language = tgt;
            stream.src_tag = tok.specials().lang_tag(src);
            stream.tgt_tag = tok.specials().lang_tag(tgt);
            stream.weight = weights.weights[i];
            stream.pairs = std::move(direction_pairs[key]);
            out.streams.push_back(std::move(stream));
        }
        out.mixture.weights.emplace_back(TaskKind::translate, 1.0);
    }
    return out;
}

BoundData bind_parallel(const ParallelCorpus& corpus, const Tokenizer& tok) {
    if (corpus.pairs.empty()) throw DataError("parallel corpus is empty");
    BoundData out;
    TaskStream stream;
    stream.kind = TaskKind::translate;
    stream.name = "translate:" + corpus.src_language + "-" + corpus.tgt_language;
    stream.src_language = corpus.src_language;
    stream.tgt_language = corpus.tgt_language;
    stream.src_tag = tok.specials().lang_tag(corpus.src_language);
    stream.tgt_tag = tok.specials().lang_tag(corpus.tgt_language);
    stream.weight = 1.0;
    stream.pairs.reserve(corpus.pairs.size());
    for (const auto& [src_line, tgt_line] : corpus.pairs) {
        stream.pairs.emplace_back(tok.encode(src_line), tok.encode(tgt_line));
    }
    out.streams.push_back(std::move(stream));
    out.mixture.weights.emplace_back(TaskKind::translate, 1.0);
    out.manifest["count.pairs"] = std::to_string(corpus.pairs.size());
    return out;
}

std::vector<std::string> translate_lines(const ParamStore<double>& params,
                                         const ModelConfig& config, const Tokenizer& tok,
                                         const std::vector<std::string>& lines,
                                         const std::string& src_language,
                                         const std::string& tgt_language, std::size_t beam,
                                         double length_alpha, std::size_t max_steps) {
    if (beam == 0) throw DataError("beam must be positive");
    if (config.max_len < 3) throw DataError("max_len too small to translate");
    int32_t src_tag = tok.specials().lang_tag(src_language);
    int32_t tgt_tag = tok.specials().lang_tag(tgt_language);
    std::size_t budget = config.max_len - 2;
    std::size_t steps = config.max_len - 1;
    if (max_steps > 0) steps = std::min(steps, max_steps);
    std::vector<std::string> out;
    out.reserve(lines.size());
    for (const auto& raw : lines) {
        std::string line = normalize_line(raw);
        if (line.empty()) {
            out.emplace_back();
            continue;
        }
        std::vector<int32_t> enc = tok.encode(line);
        if (enc.size() > budget) enc.resize(budget);
        enc.push_back(SpecialTokens::eos);
        enc.push_back(src_tag);
        std::vector<int32_t> ids =
            beam == 1 ? greedy_decode(params, config, enc, tgt_tag, steps)
                      : beam_decode(params, config, enc, tgt_tag, beam, steps, length_alpha);
        // A sufficiently untrained model can emit byte tokens that do not
        // assemble into UTF-8; keep the output printable.
        out.push_back(uni::sanitize_utf8(tok.decode(ids)));
    }
    return out;
}

void apply_config_kv(RunConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [key, val] : kv) {
        if (key == "model.vocab_size") config.model.vocab_size = parse_u64(val);
        else if (key == "model.d_model") config.model.d_model = parse_u64(val);
        else if (key == "model.d_ff") config.model.d_ff = parse_u64(val);
        else if (key == "model.encoder_layers") config.model.encoder_layers = parse_u64(val);
        else if (key == "model.decoder_layers") config.model.decoder_layers = parse_u64(val);
        else if (key == "model.heads") config.model.heads = parse_u64(val);
        else if (key == "model.max_len") config.model.max_len = parse_u64(val);
        else if (key == "model.dropout") config.model.dropout = parse_double(val);
        else if (key == "model.share_embeddings") config.model.share_embeddings = parse_bool(val);
        else if (key == "model.norm_order") config.model.norm_order = val;
        else if (key == "train.max_steps") config.train.max_steps = parse_u64(val);
        else if (key == "train.batch_sentences") config.train.batch_sentences = parse_u64(val);
        else if (key == "train.batch_tokens") config.train.batch_tokens = parse_u64(val);
        else if (key == "train.lr_max") config.train.lr_max = parse_double(val);
        else if (key == "train.warmup_steps") config.train.warmup_steps = parse_u64(val);
        else if (key == "train.beta1") config.train.beta1 = parse_double(val);
        else if (key == "train.beta2") config.train.beta2 = parse_double(val);
        else if (key == "train.adam_eps") config.train.adam_eps = parse_double(val);
        else if (key == "train.label_smoothing") config.train.label_smoothing = parse_double(val);
        else if (key == "train.clip_norm") config.train.clip_norm = parse_double(val);
        else if (key == "train.seed") config.train.seed = parse_u64(val);
        else if (key == "train.log_every") config.train.log_every = parse_u64(val);
        else if (key == "train.save_every") config.train.save_every = parse_u64(val);
        else if (key == "train.sampling_alpha") config.train.sampling_alpha = parse_double(val);
        else if (key == "noise.mask_ratio") config.noise.mask_ratio = parse_double(val);
        else if (key == "noise.delete_ratio") config.noise.delete_ratio = parse_double(val);
        else if (key == "noise.permute_sentences") config.noise.permute_sentences = parse_bool(val);
        else if (key == "noise.span_infill") config.noise.span_infill = parse_bool(val);
        else if (key == "noise.span_lambda") config.noise.span_lambda = parse_double(val);
        else if (key == "noise.document_size") config.noise.document_size = parse_u64(val);
        else if (key == "noise.seed") config.noise.seed = parse_u64(val);
        else throw DataError("unknown config key '" + key + "'");
    }
}

void apply_config_file(RunConfig& config, const std::string& path) {
    apply_config_kv(config, parse_kv(read_file(path)));
}

namespace {

std::string config_hash(const RunConfig& config) {
    std::ostringstream all;
    all << config.model.to_kv();
    all << "train.max_steps=" << config.train.max_steps << "\n"
        << "train.batch_sentences=" << config.train.batch_sentences << "\n"
        << "train.batch_tokens=" << config.train.batch_tokens << "\n"
        << "train.lr_max=" << format_double(config.train.lr_max) << "\n"
        << "train.warmup_steps=" << config.train.warmup_steps << "\n"
        << "train.beta1=" << format_double(config.train.beta1) << "\n"
        << "train.beta2=" << format_double(config.train.beta2) << "\n"
        << "train.adam_eps=" << format_double(config.train.adam_eps) << "\n"
        << "train.label_smoothing=" << format_double(config.train.label_smoothing) << "\n"
        << "train.clip_norm=" << format_double(config.train.clip_norm) << "\n"
        << "train.seed=" << config.train.seed << "\n"
        << "train.sampling_alpha=" << format_double(config.train.sampling_alpha) << "\n"
        << "noise.mask_ratio=" << format_double(config.noise.mask_ratio) << "\n"
        << "noise.delete_ratio=" << format_double(config.noise.delete_ratio) << "\n"
        << "noise.permute_sentences=" << (config.noise.permute_sentences ? "true" : "false")
        << "\n"
        << "noise.span_infill=" << (config.noise.span_infill ? "true" : "false") << "\n"
        << "noise.span_lambda=" << format_double(config.noise.span_lambda) << "\n"
        << "noise.document_size=" << config.noise.document_size << "\n"
        << "noise.seed=" << config.noise.seed << "\n";
    return "fnv1a:" + hex64(fnv1a(all.str()));
}

template <typename T>
std::string checkpoint_bytes(const Trainer<T>& trainer) {
    std::ostringstream out(std::ios::binary);
    trainer.save(out);
    return std::move(out).str();
}

template <typename T>
std::map<std::string, std::string> pretrain_impl(const PretrainArgs& args, std::ostream& log) {
    Tokenizer tok = load_tokenizer_dir(args.tokenizer_dir);
    RunConfig rc = args.config;
    rc.model.vocab_size = tok.size();
    rc.model.validate();
    rc.train.validate();
    rc.noise.validate();

    PresetSpec spec;
    DataFiles files;
    if (!args.mono_override.empty() || !args.parallel_override.empty()) {
        spec.name = "custom";
        spec.data_kind = "custom mixture";
        for (const auto& [lang, path] : args.mono_override) {
            spec.mono.push_back(lang);
            files.mono[lang] = path;
        }
        for (const auto& [pair, path] : args.parallel_override) {
            auto dash = pair.find('-');
            if (dash == std::string::npos || dash == 0 || dash + 1 == pair.size()) {
                throw DataError("parallel source wants a SRC-TGT pair, got '" + pair + "'");
            }
            spec.parallel.emplace_back(pair.substr(0, dash), pair.substr(dash + 1));
            files.parallel[pair] = path;
        }
    } else {
        spec = preset_spec(args.preset);
        files = preset_files(spec, args.data_dir);
    }
    BoundData bound = bind_preset(spec, files, tok, rc.train.sampling_alpha, rc.train.seed);

    Trainer<T> trainer(rc.model, rc.train, rc.noise, bound.mixture, std::move(bound.streams),
                       vocab_hash_of(tok));
    if (args.dump_examples > 0) {
        for (const auto& ex : trainer.preview(args.dump_examples)) log << dump_example(ex) << "\n";
        return {};
    }

    trainer.manifest() = bound.manifest;
    trainer.manifest()["config_hash"] = config_hash(rc);
    trainer.manifest()["precision"] = args.precision;
    trainer.manifest()["seed"] = std::to_string(rc.train.seed);

    if (!args.resume.empty()) {
        std::ifstream in(args.resume, std::ios::binary);
        if (!in) throw DataError("cannot open " + args.resume);
        trainer.restore(in);
    } else {
        trainer.init_model(rc.train.seed);
    }

    fs::create_directories(args.out_dir);
    std::string final_path = args.out_dir + "/checkpoint.lmtc";
    auto save_at = [&](const Trainer<T>& t, const std::string& path) {
        atomic_write_file(path, checkpoint_bytes(t));
    };
    trainer.run(&log, [&](const Trainer<T>& t) {
        save_at(t, args.out_dir + "/checkpoint.step" + std::to_string(t.step()) + ".lmtc");
    });
    save_at(trainer, final_path);

    std::map<std::string, std::string> manifest = trainer.manifest();
    manifest["checkpoint"] = final_path;
    manifest["steps"] = std::to_string(trainer.step());
    manifest["final_loss"] = format_double(trainer.last_loss());
    manifest["vocab_hash"] = trainer.vocab_hash();
    write_manifest(args.out_dir + "/manifest.txt", manifest);
    return manifest;
}

template <typename T>
std::map<std::string, std::string> finetune_impl(const FinetuneArgs& args, std::ostream& log) {
    Tokenizer tok = load_tokenizer_dir(args.tokenizer_dir);
    RunConfig rc = args.config;
    rc.model.vocab_size = tok.size();

    std::map<std::string, std::string> base;
    ParamStore<T> pre_params;
    bool pretrained = !args.checkpoint.empty();
    if (pretrained) {
        std::ifstream in(args.checkpoint, std::ios::binary);
        if (!in) throw DataError("cannot open " + args.checkpoint);
        LoadedCheckpoint<T> loaded = load_checkpoint_params<T>(in);
        if (loaded.vocab_hash != vocab_hash_of(tok)) {
            throw DataError("checkpoint vocab hash " + loaded.vocab_hash +
                            " does not match the tokenizer (" + vocab_hash_of(tok) + ")");
        }
        rc.model = loaded.config;
        pre_params = std::move(loaded.params);
        base = std::move(loaded.manifest);
    }
    rc.model.validate();
    rc.train.validate();
    rc.noise.validate();

    ParallelCorpus corpus =
        load_parallel_tsv(args.train_tsv, args.src_language, args.tgt_language);
    BoundData bound = bind_parallel(corpus, tok);

    Trainer<T> trainer(rc.model, rc.train, rc.noise, bound.mixture, std::move(bound.streams),
                       vocab_hash_of(tok));
    if (pretrained) {
        trainer.adopt_model(std::move(pre_params));
    } else {
        trainer.init_model(rc.train.seed);
    }

    trainer.manifest() = bound.manifest;
    trainer.manifest()["preset"] = pretrained ? base["preset"] : "scratch";
    trainer.manifest()["data_kind"] = pretrained ? base["data_kind"] : "none (scratch)";
    trainer.manifest()["pair"] = args.src_language + "-" + args.tgt_language;
    trainer.manifest()["data.pairs"] = file_hash(args.train_tsv);
    trainer.manifest()["config_hash"] = config_hash(rc);
    trainer.manifest()["precision"] = args.precision;
    trainer.manifest()["seed"] = std::to_string(rc.train.seed);
    if (pretrained) trainer.manifest()["base_checkpoint"] = args.checkpoint;

    fs::create_directories(args.out_dir);
    std::string final_path = args.out_dir + "/checkpoint.lmtc";
    trainer.run(&log, [&](const Trainer<T>& t) {
        atomic_write_file(args.out_dir + "/checkpoint.step" + std::to_string(t.step()) + ".lmtc",
                          checkpoint_bytes(t));
    });
    atomic_write_file(final_path, checkpoint_bytes(trainer));

    std::map<std::string, std::string> manifest = trainer.manifest();
    manifest["checkpoint"] = final_path;
    manifest["steps"] = std::to_string(trainer.step());
    manifest["final_loss"] = format_double(trainer.last_loss());
    manifest["vocab_hash"] = trainer.vocab_hash();
    write_manifest(args.out_dir + "/manifest.txt", manifest);
    return manifest;
}

}  // namespace

std::map<std::string, std::string> run_prepare(const PrepareArgs& args) {
    if (args.out_prefix.empty()) throw DataError("output prefix is required");
    bool mono = !args.mono_path.empty();
    bool parallel = !args.parallel_path.empty();
    if (mono == parallel) throw DataError("exactly one of mono and parallel input is required");

    std::map<std::string, std::string> manifest;
    manifest["split.seed"] = std::to_string(args.split.seed);
    manifest["split.mode"] =
        args.split.mode == SplitSpec::Mode::fraction ? "fraction" : "count";
    manifest["split.test"] = format_double(args.split.test);
    manifest["split.valid"] = format_double(args.split.valid);

    if (mono) {
        Corpus corpus = dedup(load_corpus(args.mono_path, args.language));
        Split<Corpus> parts = split(corpus, args.split);
        manifest["input"] = args.mono_path;
        manifest["input_hash"] = file_hash(args.mono_path);
        manifest["language"] = args.language;
        const std::pair<const char*, const Corpus*> outputs[] = {
            {"train", &parts.train}, {"valid", &parts.valid}, {"test", &parts.test}};
        for (const auto& [part, c] : outputs) {
            std::string path = args.out_prefix + "." + part + ".txt";
            save_corpus(*c, path);
            manifest[std::string("count.") + part] = std::to_string(c->lines.size());
            manifest[std::string("out.") + part] = path;
        }
    } else {
        ParallelCorpus corpus =
            dedup(load_parallel_tsv(args.parallel_path, args.src_language, args.tgt_language));
        Split<ParallelCorpus> parts = split(corpus, args.split);
        manifest["input"] = args.parallel_path;
        manifest["input_hash"] = file_hash(args.parallel_path);
        manifest["pair"] = args.src_language + "-" + args.tgt_language;
        const std::pair<const char*, const ParallelCorpus*> outputs[] = {
            {"train", &parts.train}, {"valid", &parts.valid}, {"test", &parts.test}};
        for (const auto& [part, c] : outputs) {
            std::string path = args.out_prefix + "." + part + ".tsv";
            save_parallel_tsv(*c, path);
            manifest[std::string("count.") + part] = std::to_string(c->pairs.size());
            manifest[std::string("out.") + part] = path;
        }
    }
    write_manifest(args.out_prefix + ".manifest.txt", manifest);
    return manifest;
}

std::map<std::string, std::string> run_train_tokenizer(const TrainTokenizerArgs& args) {
    if (args.corpora.empty()) throw DataError("at least one corpus is required");
    if (args.out_dir.empty()) throw DataError("output directory is required");
    std::vector<Corpus> corpora;
    std::vector<std::string> languages;
    std::map<std::string, std::string> manifest;
    for (const auto& [lang, path] : args.corpora) {
        corpora.push_back(load_corpus(path, lang));
        if (std::find(languages.begin(), languages.end(), lang) == languages.end()) {
            languages.push_back(lang);
        }
        manifest["data." + lang] = file_hash(path);
    }
    Tokenizer tok = Tokenizer::train(corpora, args.vocab_size, languages);
    fs::create_directories(args.out_dir);
    tok.save(args.out_dir + "/vocab.txt", args.out_dir + "/merges.txt");
    manifest["vocab_size"] = std::to_string(tok.size());
    manifest["vocab_hash"] = vocab_hash_of(tok);
    write_manifest(args.out_dir + "/manifest.txt", manifest);
    return manifest;
}

std::map<std::string, std::string> run_pretrain(const PretrainArgs& args, std::ostream& log) {
    if (args.precision == "f64") return pretrain_impl<double>(args, log);
    if (args.precision == "f32") return pretrain_impl<float>(args, log);
    throw DataError("unknown precision '" + args.precision + "'");
}

std::map<std::string, std::string> run_finetune(const FinetuneArgs& args, std::ostream& log) {
    if (args.precision == "f64") return finetune_impl<double>(args, log);
    if (args.precision == "f32") return finetune_impl<float>(args, log);
    throw DataError("unknown precision '" + args.precision + "'");
}

std::vector<std::string> run_translate(const TranslateArgs& args) {
    Tokenizer tok = load_tokenizer_dir(args.tokenizer_dir);
    std::ifstream in(args.checkpoint, std::ios::binary);
    if (!in) throw DataError("cannot open " + args.checkpoint);
    LoadedCheckpoint<double> loaded = load_checkpoint_params<double>(in);
    if (loaded.vocab_hash != vocab_hash_of(tok)) {
        throw DataError("checkpoint vocab hash " + loaded.vocab_hash +
                        " does not match the tokenizer (" + vocab_hash_of(tok) + ")");
    }
    std::vector<std::string> lines = read_lines(args.input_path);
    std::vector<std::string> out =
        translate_lines(loaded.params, loaded.config, tok, lines, args.src_language,
                        args.tgt_language, args.beam, args.length_alpha, args.max_steps);
    if (!args.output_path.empty()) {
        std::string joined;
        for (const auto& line : out) {
            joined += line;
            joined += "\n";
        }
        atomic_write_file(args.output_path, joined);
    }
    return out;
}

std::pair<BleuScore, ChrfScore> run_score(const ScoreArgs& args) {
    std::vector<std::string> hyps = read_lines(args.hyp_path);
    std::vector<std::string> refs = read_lines(args.ref_path);
    BleuScore bleu = corpus_bleu(hyps, refs);
    ChrfScore chrf = corpus_chrf(hyps, refs);
    if (!args.update_manifest.empty()) {
        std::map<std::string, std::string> manifest = load_kv_file(args.update_manifest);
        manifest["metric.bleu"] = two_decimals(bleu.score);
        manifest["metric.chrf"] = two_decimals(chrf.score);
        write_manifest(args.update_manifest, manifest);
    }
    return {bleu, chrf};
}

std::string run_report(const ReportArgs& args) {
    if (args.manifests.empty()) throw DataError("at least one manifest is required");
    struct Row {
        std::string model;
        double bleu = -1.0;
        double chrf = -1.0;
        std::string data_kind;
    };
    std::vector<Row> rows;
    for (const auto& path : args.manifests) {
        auto kv = load_kv_file(path);
        Row row;
        auto get = [&kv](const std::string& key, const std::string& fallback) {
            auto it = kv.find(key);
            return it == kv.end() ? fallback : it->second;
        };
        row.model = get("preset", "?");
        row.data_kind = get("data_kind", "?");
        if (kv.count("metric.bleu")) row.bleu = parse_double(kv.at("metric.bleu"));
        if (kv.count("metric.chrf")) row.chrf = parse_double(kv.at("metric.chrf"));
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.bleu > b.bleu; });

    auto cell = [](double v) { return v < 0.0 ? std::string("-") : two_decimals(v); };
    std::vector<std::array<std::string, 4>> table;
    table.push_back({"Model", "BLEU", "chrF", "Pretrained Data"});
    for (const auto& row : rows) {
        table.push_back({row.model, cell(row.bleu), cell(row.chrf), row.data_kind});
    }
    std::array<std::size_t, 4> width{};
    for (const auto& r : table) {
        for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream text;
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            text << table[i][c] << std::string(width[c] - table[i][c].size(), ' ');
            text << (c + 1 < 4 ? "  " : "");
        }
        text << "\n";
        if (i == 0) {
            for (std::size_t c = 0; c < 4; ++c) {
                text << std::string(width[c], '-') << (c + 1 < 4 ? "  " : "");
            }
            text << "\n";
        }
    }

    std::ostringstream csv;
    csv << "model,bleu,chrf,pretrained_data\n";
    for (const auto& row : rows) {
        csv << row.model << "," << cell(row.bleu) << "," << cell(row.chrf) << ","
            << "\"" << row.data_kind << "\"\n";
    }

    if (!args.text_out.empty()) atomic_write_file(args.text_out, text.str());
    if (!args.csv_out.empty()) atomic_write_file(args.csv_out, csv.str());
    return text.str();
}

}  // namespace lmtl
