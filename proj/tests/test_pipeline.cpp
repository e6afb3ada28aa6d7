#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lmtl/error.hpp"
#include "lmtl/pipeline.hpp"

using namespace lmtl;
namespace fs = std::filesystem;

namespace {

const std::string kToyDir = LMTL_TOY_DATA_DIR;

std::string scratch_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("lmtl_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

RunConfig tiny_run(uint64_t steps) {
    RunConfig rc;
    rc.model.d_model = 16;
    rc.model.d_ff = 32;
    rc.model.encoder_layers = 1;
    rc.model.decoder_layers = 1;
    rc.model.heads = 2;
    rc.model.max_len = 32;
    rc.model.dropout = 0.0;
    rc.train.max_steps = steps;
    rc.train.batch_sentences = 4;
    rc.train.lr_max = 1e-3;
    rc.train.warmup_steps = 2;
    rc.train.log_every = 2;
    rc.train.seed = 5;
    return rc;
}

// Shared tokenizer for the end-to-end cases; trained once on the toy data.
const std::string& toy_tokenizer_dir() {
    static std::string dir = [] {
        std::string d = scratch_dir("tok");
        TrainTokenizerArgs args;
        for (const char* lang : {"af", "en", "ln", "sw", "zu"}) {
            args.corpora.emplace_back(lang, kToyDir + "/mono." + lang + ".txt");
        }
        args.vocab_size = 400;
        args.out_dir = d;
        run_train_tokenizer(args);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("fnv1a matches the reference vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("atomic write and kv round trip") {
    std::string dir = scratch_dir("kv");
    std::string path = dir + "/m.txt";
    std::map<std::string, std::string> kv{{"b", "2"}, {"a", "x y"}};
    write_manifest(path, kv);
    CHECK(slurp(path) == "a = x y\nb = 2\n");
    CHECK(load_kv_file(path) == kv);
    CHECK(!fs::exists(path + ".tmp"));
    CHECK(file_hash(path) == "fnv1a:" + [&] {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a("a = x y\nb = 2\n"));
        return std::string(buf);
    }());
}

TEST_CASE("preset definitions") {
    PresetSpec e1 = preset_spec("exp1");
    CHECK(e1.mono == std::vector<std::string>{"ln"});
    CHECK(e1.parallel.empty());
    CHECK(e1.english_ratio == 0.0);

    PresetSpec e2 = preset_spec("exp2-desk");
    CHECK(e2.name == "exp2");
    CHECK(e2.mono == std::vector<std::string>{"af", "ln", "sw", "zu"});
    CHECK(e2.parallel.size() == 4);
    CHECK(e2.english_ratio == 0.0);

    CHECK(preset_spec("exp3").english_ratio == doctest::Approx(0.1));
    CHECK(preset_spec("exp3plus").english_ratio == doctest::Approx(1.0));
    CHECK(preset_spec("exp3").mono == e2.mono);

    PresetSpec e4 = preset_spec("exp4-desk");
    CHECK(e4.mono == std::vector<std::string>{"en", "ln"});
    CHECK(e4.parallel == std::vector<std::pair<std::string, std::string>>{{"en", "ln"}});

    CHECK_THROWS_AS(preset_spec("exp5"), DataError);
    CHECK_THROWS_AS(preset_spec("-desk"), DataError);
}

TEST_CASE("preset files resolve plain and split names") {
    PresetSpec spec = preset_spec("exp4");
    DataFiles files = preset_files(spec, kToyDir);
    CHECK(files.mono.at("en") == kToyDir + "/mono.en.txt");
    CHECK(files.mono.at("ln") == kToyDir + "/mono.ln.txt");
    CHECK(files.parallel.at("en-ln") == kToyDir + "/para.en-ln.tsv");

    std::string dir = scratch_dir("resolve");
    fs::copy_file(kToyDir + "/mono.ln.txt", dir + "/mono.ln.txt");
    fs::copy_file(kToyDir + "/mono.ln.txt", dir + "/mono.ln.train.txt");
    fs::copy_file(kToyDir + "/mono.en.txt", dir + "/mono.en.txt");
    fs::copy_file(kToyDir + "/para.en-ln.tsv", dir + "/para.en-ln.train.tsv");
    DataFiles split_files = preset_files(spec, dir);
    CHECK(split_files.mono.at("ln") == dir + "/mono.ln.train.txt");
    CHECK(split_files.mono.at("en") == dir + "/mono.en.txt");
    CHECK(split_files.parallel.at("en-ln") == dir + "/para.en-ln.train.tsv");

    CHECK_THROWS_AS(preset_files(preset_spec("exp2"), scratch_dir("empty")), DataError);
}

TEST_CASE("config kv application") {
    RunConfig rc;
    apply_config_kv(rc, {{"model.d_model", "24"},
                         {"model.share_embeddings", "false"},
                         {"train.max_steps", "7"},
                         {"train.lr_max", "0.002"},
                         {"noise.mask_ratio", "0.5"},
                         {"noise.document_size", "2"}});
    CHECK(rc.model.d_model == 24);
    CHECK(rc.model.share_embeddings == false);
    CHECK(rc.train.max_steps == 7);
    CHECK(rc.train.lr_max == doctest::Approx(0.002));
    CHECK(rc.noise.mask_ratio == doctest::Approx(0.5));
    CHECK(rc.noise.document_size == 2);

    CHECK_THROWS_AS(apply_config_kv(rc, {{"model.layers", "3"}}), DataError);
    CHECK_THROWS_AS(apply_config_kv(rc, {{"train.lr", "x"}}), DataError);

    std::string dir = scratch_dir("cfg");
    atomic_write_file(dir + "/run.cfg", "# comment\nmodel.heads = 4\ntrain.seed = 9\n");
    apply_config_file(rc, dir + "/run.cfg");
    CHECK(rc.model.heads == 4);
    CHECK(rc.train.seed == 9);
}

TEST_CASE("bind_preset shapes the streams") {
    Tokenizer tok = Tokenizer::load(toy_tokenizer_dir() + "/vocab.txt",
                                    toy_tokenizer_dir() + "/merges.txt");

    PresetSpec e1 = preset_spec("exp1");
    BoundData b1 = bind_preset(e1, preset_files(e1, kToyDir), tok, 0.7, 11);
    REQUIRE(b1.streams.size() == 1);
    CHECK(b1.streams[0].name == "denoise:ln");
    CHECK(b1.streams[0].mono.size() == 400);
    CHECK(b1.streams[0].weight == doctest::Approx(1.0));
    CHECK(b1.streams[0].src_tag == tok.specials().lang_tag("ln"));
    REQUIRE(b1.mixture.weights.size() == 1);
    CHECK(b1.mixture.weights[0].first == TaskKind::denoise);

    PresetSpec e2 = preset_spec("exp2");
    BoundData b2 = bind_preset(e2, preset_files(e2, kToyDir), tok, 0.7, 11);
    REQUIRE(b2.streams.size() == 12);
    double denoise_total = 0.0, translate_total = 0.0;
    std::size_t denoise_count = 0;
    for (const auto& s : b2.streams) {
        if (s.kind == TaskKind::denoise) {
            ++denoise_count;
            denoise_total += s.weight;
            CHECK(s.mono.size() == 400);
        } else {
            CHECK(s.kind == TaskKind::translate);
            translate_total += s.weight;
            CHECK(s.pairs.size() == 160);
        }
    }
    CHECK(denoise_count == 4);
    CHECK(denoise_total == doctest::Approx(1.0));
    CHECK(translate_total == doctest::Approx(1.0));
    CHECK(b2.mixture.weights.size() == 2);
    CHECK(b2.manifest.at("count.mono.af") == "400");
    CHECK(b2.manifest.at("count.para.en-ln") == "160");
    CHECK(b2.manifest.at("data.mono.af") == file_hash(kToyDir + "/mono.af.txt"));

    // Both directions of a pair carry mirrored ids.
    const TaskStream* fwd = nullptr;
    const TaskStream* bwd = nullptr;
    for (const auto& s : b2.streams) {
        if (s.name == "translate:en-ln") fwd = &s;
        if (s.name == "translate:ln-en") bwd = &s;
    }
    REQUIRE(fwd != nullptr);
    REQUIRE(bwd != nullptr);
    CHECK(fwd->pairs[3].first == bwd->pairs[3].second);
    CHECK(fwd->pairs[3].second == bwd->pairs[3].first);
    CHECK(fwd->src_tag == tok.specials().lang_tag("en"));
    CHECK(fwd->tgt_tag == tok.specials().lang_tag("ln"));
}

TEST_CASE("exp3 samples English deterministically") {
    Tokenizer tok = Tokenizer::load(toy_tokenizer_dir() + "/vocab.txt",
                                    toy_tokenizer_dir() + "/merges.txt");
    PresetSpec e3 = preset_spec("exp3");
    DataFiles files = preset_files(e3, kToyDir);
    BoundData a = bind_preset(e3, files, tok, 0.7, 21);
    // largest non-English mono has 400 lines; 10% of that
    CHECK(a.manifest.at("sample.en.lines") == "40");
    CHECK(a.manifest.at("sample.en.seed") == "21");
    const TaskStream* en = nullptr;
    for (const auto& s : a.streams) {
        if (s.name == "denoise:en") en = &s;
    }
    REQUIRE(en != nullptr);
    CHECK(en->mono.size() == 40);

    BoundData b = bind_preset(e3, files, tok, 0.7, 21);
    const TaskStream* en_b = nullptr;
    for (const auto& s : b.streams) {
        if (s.name == "denoise:en") en_b = &s;
    }
    REQUIRE(en_b != nullptr);
    CHECK(en->mono == en_b->mono);

    BoundData c = bind_preset(e3, files, tok, 0.7, 22);
    const TaskStream* en_c = nullptr;
    for (const auto& s : c.streams) {
        if (s.name == "denoise:en") en_c = &s;
    }
    REQUIRE(en_c != nullptr);
    CHECK(en->mono != en_c->mono);

    PresetSpec plus = preset_spec("exp3plus");
    BoundData d = bind_preset(plus, files, tok, 0.7, 21);
    CHECK(d.manifest.at("sample.en.lines") == "400");
}

TEST_CASE("prepare splits mono and parallel inputs") {
    std::string dir = scratch_dir("prepare");
    PrepareArgs args;
    args.mono_path = kToyDir + "/mono.ln.txt";
    args.language = "ln";
    args.split.seed = 3;
    args.out_prefix = dir + "/mono.ln";
    auto manifest = run_prepare(args);
    CHECK(manifest.at("count.train") == "320");
    CHECK(manifest.at("count.valid") == "40");
    CHECK(manifest.at("count.test") == "40");
    CHECK(fs::exists(dir + "/mono.ln.train.txt"));
    CHECK(fs::exists(dir + "/mono.ln.manifest.txt"));

    std::string again = scratch_dir("prepare2");
    args.out_prefix = again + "/mono.ln";
    run_prepare(args);
    CHECK(slurp(dir + "/mono.ln.train.txt") == slurp(again + "/mono.ln.train.txt"));

    PrepareArgs para;
    para.parallel_path = kToyDir + "/para.en-ln.tsv";
    para.src_language = "en";
    para.tgt_language = "ln";
    para.split.mode = SplitSpec::Mode::count;
    para.split.test = 20;
    para.split.valid = 20;
    para.split.seed = 3;
    para.out_prefix = dir + "/para.en-ln";
    auto pm = run_prepare(para);
    CHECK(pm.at("count.train") == "120");
    CHECK(pm.at("count.test") == "20");
    CHECK(fs::exists(dir + "/para.en-ln.train.tsv"));

    PrepareArgs bad;
    bad.out_prefix = dir + "/x";
    CHECK_THROWS_AS(run_prepare(bad), DataError);
}

TEST_CASE("train-tokenizer writes a loadable vocabulary") {
    std::string manifest_path = toy_tokenizer_dir() + "/manifest.txt";
    auto manifest = load_kv_file(manifest_path);
    CHECK(manifest.at("vocab_hash").rfind("fnv1a:", 0) == 0);
    CHECK(manifest.count("data.ln") == 1);

    Tokenizer tok = Tokenizer::load(toy_tokenizer_dir() + "/vocab.txt",
                                    toy_tokenizer_dir() + "/merges.txt");
    CHECK(tok.size() <= 400);
    CHECK(tok.specials().languages ==
          std::vector<std::string>{"af", "en", "ln", "sw", "zu"});
    std::string line = "monzɛ sɔko lingu";
    CHECK(tok.decode(tok.encode(line)) == line);
}

TEST_CASE("pretrain, finetune, translate, score, report chain") {
    std::string dir = scratch_dir("chain");

    PretrainArgs pre;
    pre.preset = "exp4-desk";
    pre.data_dir = kToyDir;
    pre.tokenizer_dir = toy_tokenizer_dir();
    pre.out_dir = dir + "/pre";
    pre.config = tiny_run(4);
    std::ostringstream pre_log;
    auto pre_manifest = run_pretrain(pre, pre_log);
    CHECK(pre_manifest.at("steps") == "4");
    CHECK(pre_manifest.at("preset") == "exp4");
    CHECK(fs::exists(dir + "/pre/checkpoint.lmtc"));
    CHECK(fs::exists(dir + "/pre/manifest.txt"));
    CHECK(lines_of(pre_log.str()).size() == 2);  // steps 2 and 4

    FinetuneArgs fin;
    fin.checkpoint = dir + "/pre/checkpoint.lmtc";
    fin.train_tsv = kToyDir + "/para.en-ln.tsv";
    fin.src_language = "en";
    fin.tgt_language = "ln";
    fin.tokenizer_dir = toy_tokenizer_dir();
    fin.out_dir = dir + "/fin";
    fin.config = tiny_run(3);
    std::ostringstream fin_log;
    auto fin_manifest = run_finetune(fin, fin_log);
    CHECK(fin_manifest.at("preset") == "exp4");
    CHECK(fin_manifest.at("pair") == "en-ln");
    CHECK(fin_manifest.at("base_checkpoint") == fin.checkpoint);
    CHECK(fs::exists(dir + "/fin/checkpoint.lmtc"));

    // scratch baseline: no checkpoint
    FinetuneArgs scratch = fin;
    scratch.checkpoint.clear();
    scratch.out_dir = dir + "/scratch";
    std::ostringstream scratch_log;
    auto scratch_manifest = run_finetune(scratch, scratch_log);
    CHECK(scratch_manifest.at("preset") == "scratch");

    atomic_write_file(dir + "/input.txt", "we eat fish\n\nthe dog sleep\n");
    TranslateArgs tr;
    tr.checkpoint = dir + "/fin/checkpoint.lmtc";
    tr.tokenizer_dir = toy_tokenizer_dir();
    tr.input_path = dir + "/input.txt";
    tr.output_path = dir + "/output.txt";
    tr.src_language = "en";
    tr.tgt_language = "ln";
    auto outputs = run_translate(tr);
    REQUIRE(outputs.size() == 3);
    CHECK(outputs[1].empty());
    CHECK(slurp(dir + "/output.txt") == outputs[0] + "\n\n" + outputs[2] + "\n");

    TranslateArgs beam = tr;
    beam.output_path.clear();
    beam.beam = 3;
    CHECK(run_translate(beam).size() == 3);

    atomic_write_file(dir + "/ref.txt", outputs[0] + "\nx\n" + outputs[2] + "\n");
    ScoreArgs sc;
    sc.hyp_path = dir + "/output.txt";
    sc.ref_path = dir + "/ref.txt";
    sc.update_manifest = dir + "/fin/manifest.txt";
    auto [bleu, chrf] = run_score(sc);
    auto updated = load_kv_file(dir + "/fin/manifest.txt");
    CHECK(updated.count("metric.bleu") == 1);
    CHECK(updated.count("metric.chrf") == 1);
    CHECK(bleu.score >= 0.0);
    CHECK(chrf.score >= 0.0);

    ReportArgs rep;
    rep.manifests = {dir + "/fin/manifest.txt", dir + "/scratch/manifest.txt"};
    rep.text_out = dir + "/report.txt";
    rep.csv_out = dir + "/report.csv";
    std::string table = run_report(rep);
    CHECK(table.find("Model") != std::string::npos);
    CHECK(table.find("Pretrained Data") != std::string::npos);
    CHECK(table.find("exp4") != std::string::npos);
    CHECK(table.find("scratch") != std::string::npos);
    CHECK(slurp(dir + "/report.txt") == table);

    auto csv = lines_of(slurp(dir + "/report.csv"));
    REQUIRE(csv.size() == 3);
    CHECK(csv[0] == "model,bleu,chrf,pretrained_data");
    // scored run first (scratch run has no metrics and sorts last)
    CHECK(csv[1].rfind("exp4,", 0) == 0);
    CHECK(csv[2].rfind("scratch,-,-", 0) == 0);
    std::string bleu_cell = csv[1].substr(5, csv[1].find(',', 5) - 5);
    CHECK(bleu_cell == updated.at("metric.bleu"));
}

TEST_CASE("pretrain is rerun stable and dump mode emits examples") {
    std::string dir = scratch_dir("stable");
    PretrainArgs pre;
    pre.preset = "exp1";
    pre.data_dir = kToyDir;
    pre.tokenizer_dir = toy_tokenizer_dir();
    pre.out_dir = dir + "/a";
    pre.config = tiny_run(3);
    std::ostringstream log_a;
    run_pretrain(pre, log_a);
    pre.out_dir = dir + "/b";
    std::ostringstream log_b;
    run_pretrain(pre, log_b);
    CHECK(log_a.str() == log_b.str());
    CHECK(slurp(dir + "/a/checkpoint.lmtc") == slurp(dir + "/b/checkpoint.lmtc"));

    pre.out_dir = dir + "/dump";
    pre.dump_examples = 5;
    std::ostringstream dump;
    auto manifest = run_pretrain(pre, dump);
    CHECK(manifest.empty());
    CHECK(!fs::exists(dir + "/dump/checkpoint.lmtc"));
    auto dumped = lines_of(dump.str());
    REQUIRE(dumped.size() == 5);
    for (const auto& line : dumped) {
        CHECK(line.rfind("denoise\tln\tln\t", 0) == 0);
        CHECK(std::count(line.begin(), line.end(), '\t') == 5);
    }
}

TEST_CASE("pretrain resume continues bit-exactly") {
    std::string dir = scratch_dir("resume");
    PretrainArgs full;
    full.preset = "exp4";
    full.data_dir = kToyDir;
    full.tokenizer_dir = toy_tokenizer_dir();
    full.out_dir = dir + "/full";
    full.config = tiny_run(6);
    full.config.train.save_every = 3;
    std::ostringstream full_log;
    run_pretrain(full, full_log);
    REQUIRE(fs::exists(dir + "/full/checkpoint.step3.lmtc"));

    PretrainArgs tail = full;
    tail.out_dir = dir + "/tail";
    tail.resume = dir + "/full/checkpoint.step3.lmtc";
    std::ostringstream tail_log;
    run_pretrain(tail, tail_log);
    CHECK(slurp(dir + "/tail/checkpoint.lmtc") == slurp(dir + "/full/checkpoint.lmtc"));

    // data swap under a resumed checkpoint is refused
    PretrainArgs wrong = tail;
    wrong.preset = "exp1";
    std::ostringstream wrong_log;
    CHECK_THROWS_AS(run_pretrain(wrong, wrong_log), DataError);
}

TEST_CASE("report sorts by BLEU descending") {
    std::string dir = scratch_dir("report");
    auto make = [&](const std::string& name, const std::string& bleu) {
        std::map<std::string, std::string> kv{{"preset", name}, {"data_kind", "k"}};
        if (!bleu.empty()) {
            kv["metric.bleu"] = bleu;
            kv["metric.chrf"] = "50.00";
        }
        write_manifest(dir + "/" + name + ".txt", kv);
        return dir + "/" + name + ".txt";
    };
    ReportArgs rep;
    rep.manifests = {make("low", "10.00"), make("high", "30.00"), make("mid", "20.00"),
                     make("none", "")};
    auto rows = lines_of(run_report(rep));
    REQUIRE(rows.size() == 6);
    CHECK(rows[2].rfind("high", 0) == 0);
    CHECK(rows[3].rfind("mid", 0) == 0);
    CHECK(rows[4].rfind("low", 0) == 0);
    CHECK(rows[5].rfind("none", 0) == 0);

    CHECK_THROWS_AS(run_report(ReportArgs{}), DataError);
}

TEST_CASE("translate rejects a mismatched tokenizer") {
    std::string dir = scratch_dir("mismatch");
    PretrainArgs pre;
    pre.preset = "exp1";
    pre.data_dir = kToyDir;
    pre.tokenizer_dir = toy_tokenizer_dir();
    pre.out_dir = dir + "/pre";
    pre.config = tiny_run(2);
    std::ostringstream log;
    run_pretrain(pre, log);

    TrainTokenizerArgs other;
    other.corpora.emplace_back("ln", kToyDir + "/mono.ln.txt");
    other.vocab_size = 300;
    other.out_dir = dir + "/othertok";
    run_train_tokenizer(other);

    atomic_write_file(dir + "/in.txt", "we eat\n");
    TranslateArgs tr;
    tr.checkpoint = dir + "/pre/checkpoint.lmtc";
    tr.tokenizer_dir = dir + "/othertok";
    tr.input_path = dir + "/in.txt";
    tr.src_language = "ln";
    tr.tgt_language = "ln";
    CHECK_THROWS_AS(run_translate(tr), DataError);
}
