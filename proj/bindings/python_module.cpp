#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <optional>
#include <sstream>

#include "lmtl/corpus.hpp"
#include "lmtl/error.hpp"
#include "lmtl/kv.hpp"
#include "lmtl/metrics.hpp"
#include "lmtl/model.hpp"
#include "lmtl/pipeline.hpp"
#include "lmtl/tokenizer.hpp"
#include "lmtl/unicode.hpp"

namespace py = pybind11;
using namespace lmtl;

namespace {

std::vector<std::pair<std::string, std::string>> kv_from_dict(const py::dict& d) {
    std::vector<std::pair<std::string, std::string>> out;
    for (auto item : d) {
        std::string key = py::cast<std::string>(item.first);
        py::handle v = item.second;
        std::string val;
        if (py::isinstance<py::bool_>(v)) {
            val = py::cast<bool>(v) ? "true" : "false";
        } else if (py::isinstance<py::int_>(v)) {
            val = std::to_string(py::cast<long long>(v));
        } else if (py::isinstance<py::float_>(v)) {
            val = format_double(py::cast<double>(v));
        } else {
            val = py::cast<std::string>(v);
        }
        out.emplace_back(std::move(key), std::move(val));
    }
    return out;
}

RunConfig resolve_config(const py::dict& config, const std::optional<uint64_t>& seed) {
    RunConfig rc;
    apply_config_kv(rc, kv_from_dict(config));
    if (seed) {
        rc.train.seed = *seed;
        rc.noise.seed = *seed;
    }
    return rc;
}

py::dict bleu_dict(const BleuScore& s) {
    py::dict d;
    d["score"] = s.score;
    d["precisions"] = std::vector<double>(s.precisions.begin(), s.precisions.end());
    d["brevity_penalty"] = s.brevity_penalty;
    d["hyp_len"] = s.hyp_len;
    d["ref_len"] = s.ref_len;
    return d;
}

py::dict chrf_dict(const ChrfScore& s) {
    py::dict d;
    d["score"] = s.score;
    return d;
}

std::string hex_hash(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return "fnv1a:" + std::string(buf);
}

}  // namespace

PYBIND11_MODULE(_lmtl, m) {
    m.doc() = "desk-scale multilingual denoising pretraining and translation";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<uni::Utf8Error>(m, "Utf8Error", PyExc_ValueError);

    m.def("normalize_line", &normalize_line, py::arg("text"),
          "NFC + whitespace normalization, as applied to every corpus line");

    m.def(
        "count_params",
        [](std::size_t vocab_size, std::size_t d_model, std::size_t d_ff,
           std::size_t encoder_layers, std::size_t decoder_layers, std::size_t heads,
           std::size_t max_len, bool share_embeddings) {
            ModelConfig c;
            c.vocab_size = vocab_size;
            c.d_model = d_model;
            c.d_ff = d_ff;
            c.encoder_layers = encoder_layers;
            c.decoder_layers = decoder_layers;
            c.heads = heads;
            c.max_len = max_len;
            c.share_embeddings = share_embeddings;
            return count_params(c);
        },
        py::arg("vocab_size"), py::arg("d_model") = 512, py::arg("d_ff") = 2048,
        py::arg("encoder_layers") = 6, py::arg("decoder_layers") = 6, py::arg("heads") = 8,
        py::arg("max_len") = 512, py::arg("share_embeddings") = true,
        "trainable scalar count of the configured transformer");

    py::class_<Tokenizer>(m, "Tokenizer")
        .def_static(
            "load",
            [](const std::string& vocab, const std::string& merges) {
                return Tokenizer::load(vocab, merges);
            },
            py::arg("vocab_path"), py::arg("merges_path"))
        .def("encode",
             [](const Tokenizer& t, const std::string& text) { return t.encode(text); },
             py::arg("text"))
        .def("decode", &Tokenizer::decode, py::arg("ids"))
        .def("__len__", &Tokenizer::size)
        .def_property_readonly("languages",
                               [](const Tokenizer& t) { return t.specials().languages; })
        .def_property_readonly("content_hash",
                               [](const Tokenizer& t) { return hex_hash(t.content_hash()); });

    m.def(
        "corpus_bleu",
        [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
            return bleu_dict(corpus_bleu(hyps, refs));
        },
        py::arg("hypotheses"), py::arg("references"));
    m.def(
        "corpus_chrf",
        [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
            return chrf_dict(corpus_chrf(hyps, refs));
        },
        py::arg("hypotheses"), py::arg("references"));

    m.def(
        "prepare",
        [](const std::string& mono, const std::string& lang, const std::string& parallel,
           const std::string& src, const std::string& tgt, const std::string& out_prefix,
           double test, double valid, bool count_mode, uint64_t seed) {
            PrepareArgs args;
            args.mono_path = mono;
            args.language = lang;
            args.parallel_path = parallel;
            args.src_language = src;
            args.tgt_language = tgt;
            args.out_prefix = out_prefix;
            args.split.mode = count_mode ? SplitSpec::Mode::count : SplitSpec::Mode::fraction;
            args.split.test = test;
            args.split.valid = valid;
            args.split.seed = seed;
            py::gil_scoped_release release;
            return run_prepare(args);
        },
        py::arg("mono") = "", py::arg("lang") = "", py::arg("parallel") = "",
        py::arg("src") = "", py::arg("tgt") = "", py::arg("out_prefix") = "",
        py::arg("test") = 0.1, py::arg("valid") = 0.1, py::arg("count_mode") = false,
        py::arg("seed") = 0, "normalize, dedup and split a corpus");

    m.def(
        "train_tokenizer",
        [](const std::map<std::string, std::string>& corpora, std::size_t vocab_size,
           const std::string& out_dir) {
            TrainTokenizerArgs args;
            for (const auto& [lang, path] : corpora) args.corpora.emplace_back(lang, path);
            args.vocab_size = vocab_size;
            args.out_dir = out_dir;
            py::gil_scoped_release release;
            return run_train_tokenizer(args);
        },
        py::arg("corpora"), py::arg("vocab_size") = 1000, py::arg("out_dir"),
        "fit the shared subword vocabulary; corpora maps language to path");

    m.def(
        "pretrain",
        [](const std::string& preset, const std::string& data_dir,
           const std::string& tokenizer_dir, const std::string& out_dir, const py::dict& config,
           std::optional<uint64_t> seed, const std::string& precision, const std::string& resume,
           std::size_t dump_examples,
           const std::vector<std::pair<std::string, std::string>>& mono,
           const std::vector<std::pair<std::string, std::string>>& para) {
            PretrainArgs args;
            args.preset = preset;
            args.data_dir = data_dir;
            args.tokenizer_dir = tokenizer_dir;
            args.out_dir = out_dir;
            args.config = resolve_config(config, seed);
            args.precision = precision;
            args.resume = resume;
            args.dump_examples = dump_examples;
            args.mono_override = mono;
            args.parallel_override = para;
            std::ostringstream log;
            std::map<std::string, std::string> manifest;
            {
                py::gil_scoped_release release;
                manifest = run_pretrain(args, log);
            }
            return py::make_tuple(manifest, log.str());
        },
        py::arg("preset") = "", py::arg("data_dir") = "", py::arg("tokenizer_dir"),
        py::arg("out_dir"), py::arg("config") = py::dict(), py::arg("seed") = std::nullopt,
        py::arg("precision") = "f64", py::arg("resume") = "", py::arg("dump_examples") = 0,
        py::arg("mono") = std::vector<std::pair<std::string, std::string>>{},
        py::arg("para") = std::vector<std::pair<std::string, std::string>>{},
        "run a pretraining preset; returns (manifest, log)");

    m.def(
        "finetune",
        [](const std::string& checkpoint, const std::string& train_tsv, const std::string& src,
           const std::string& tgt, const std::string& tokenizer_dir, const std::string& out_dir,
           const py::dict& config, std::optional<uint64_t> seed, const std::string& precision) {
            FinetuneArgs args;
            args.checkpoint = checkpoint;
            args.train_tsv = train_tsv;
            args.src_language = src;
            args.tgt_language = tgt;
            args.tokenizer_dir = tokenizer_dir;
            args.out_dir = out_dir;
            args.config = resolve_config(config, seed);
            args.precision = precision;
            std::ostringstream log;
            std::map<std::string, std::string> manifest;
            {
                py::gil_scoped_release release;
                manifest = run_finetune(args, log);
            }
            return py::make_tuple(manifest, log.str());
        },
        py::arg("checkpoint") = "", py::arg("train_tsv"), py::arg("src"), py::arg("tgt"),
        py::arg("tokenizer_dir"), py::arg("out_dir"), py::arg("config") = py::dict(),
        py::arg("seed") = std::nullopt, py::arg("precision") = "f64",
        "fine-tune a checkpoint (or from scratch); returns (manifest, log)");

    m.def(
        "translate",
        [](const std::string& checkpoint, const std::string& tokenizer_dir,
           const std::string& input_path, const std::string& src, const std::string& tgt,
           const std::string& output_path, std::size_t beam, double alpha,
           std::size_t max_steps) {
            TranslateArgs args;
            args.checkpoint = checkpoint;
            args.tokenizer_dir = tokenizer_dir;
            args.input_path = input_path;
            args.output_path = output_path;
            args.src_language = src;
            args.tgt_language = tgt;
            args.beam = beam;
            args.length_alpha = alpha;
            args.max_steps = max_steps;
            py::gil_scoped_release release;
            return run_translate(args);
        },
        py::arg("checkpoint"), py::arg("tokenizer_dir"), py::arg("input_path"), py::arg("src"),
        py::arg("tgt"), py::arg("output_path") = "", py::arg("beam") = 1,
        py::arg("alpha") = 0.7, py::arg("max_steps") = 0,
        "decode a file line by line; returns the output lines");

    m.def(
        "score",
        [](const std::string& hyp, const std::string& ref, const std::string& update_manifest) {
            ScoreArgs args;
            args.hyp_path = hyp;
            args.ref_path = ref;
            args.update_manifest = update_manifest;
            auto [bleu, chrf] = run_score(args);
            py::dict d;
            d["bleu"] = bleu_dict(bleu);
            d["chrf"] = chrf_dict(chrf);
            d["bleu_line"] = format_bleu_line(bleu);
            d["chrf_line"] = format_chrf_line(chrf);
            return d;
        },
        py::arg("hyp"), py::arg("ref"), py::arg("update_manifest") = "",
        "BLEU and chrF of a hypothesis file against a reference file");

    m.def(
        "report",
        [](const std::vector<std::string>& manifests, const std::string& text_out,
           const std::string& csv_out) {
            ReportArgs args;
            args.manifests = manifests;
            args.text_out = text_out;
            args.csv_out = csv_out;
            return run_report(args);
        },
        py::arg("manifests"), py::arg("text_out") = "", py::arg("csv_out") = "",
        "comparison table over run manifests, sorted by BLEU");
}
