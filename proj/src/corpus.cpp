#include "lmtl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "lmtl/rng.hpp"
#include "lmtl/unicode.hpp"

namespace lmtl {

std::string normalize_line(std::string_view text) {
    std::vector<char32_t> cps = uni::decode_utf8(text);

    // Strip controls first so a control byte never blocks a mark from its
    // base during composition.
    std::vector<char32_t> kept;
    kept.reserve(cps.size());
    for (char32_t cp : cps) {
        if (!uni::is_control(cp)) kept.push_back(cp);
    }
    kept = uni::nfc(std::move(kept));

    std::vector<char32_t> out;
    out.reserve(kept.size());
    bool pending_space = false;
    for (char32_t cp : kept) {
        if (uni::is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(U' ');
            pending_space = false;
        }
        out.push_back(cp);
    }
    return uni::encode_utf8(out);
}

Corpus dedup(const Corpus& corpus) {
    Corpus out{corpus.language, {}};
    out.lines.reserve(corpus.lines.size());
    std::unordered_set<std::string> seen;
    seen.reserve(corpus.lines.size() * 2);
    for (const auto& line : corpus.lines) {
        if (seen.insert(line).second) out.lines.push_back(line);
    }
    return out;
}

ParallelCorpus dedup(const ParallelCorpus& corpus) {
    ParallelCorpus out{corpus.src_language, corpus.tgt_language, {}};
    out.pairs.reserve(corpus.pairs.size());
    std::unordered_set<std::string> seen;
    for (const auto& [src, tgt] : corpus.pairs) {
        std::string key = src + '\t' + tgt;
        if (seen.insert(std::move(key)).second) out.pairs.emplace_back(src, tgt);
    }
    return out;
}

namespace {

struct SplitSizes {
    std::size_t test, valid;
};

SplitSizes resolve_sizes(const SplitSpec& spec, std::size_t n) {
    SplitSizes s{};
    if (spec.mode == SplitSpec::Mode::fraction) {
        if (spec.test < 0 || spec.valid < 0 || spec.test + spec.valid >= 1.0) {
            throw DataError("split fractions must be nonnegative and sum below 1");
        }
        s.test = static_cast<std::size_t>(std::floor(spec.test * static_cast<double>(n)));
        s.valid = static_cast<std::size_t>(std::floor(spec.valid * static_cast<double>(n)));
    } else {
        s.test = static_cast<std::size_t>(spec.test);
        s.valid = static_cast<std::size_t>(spec.valid);
    }
    if (s.test + s.valid >= n && !(s.test == 0 && s.valid == 0)) {
        throw DataError("split sizes " + std::to_string(s.test) + "+" + std::to_string(s.valid) +
                        " do not leave training data for corpus of " + std::to_string(n));
    }
    return s;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    shuffle(idx, rng);
    return idx;
}

}  // namespace

Split<Corpus> split(const Corpus& corpus, const SplitSpec& spec) {
    std::size_t n = corpus.lines.size();
    SplitSizes sizes = resolve_sizes(spec, n);
    auto idx = shuffled_indices(n, spec.seed);
    Split<Corpus> out;
    out.test.language = out.valid.language = out.train.language = corpus.language;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& line = corpus.lines[idx[i]];
        if (i < sizes.test) {
            out.test.lines.push_back(line);
        } else if (i < sizes.test + sizes.valid) {
            out.valid.lines.push_back(line);
        } else {
            out.train.lines.push_back(line);
        }
    }
    return out;
}

Split<ParallelCorpus> split(const ParallelCorpus& corpus, const SplitSpec& spec) {
    std::size_t n = corpus.pairs.size();
    SplitSizes sizes = resolve_sizes(spec, n);
    auto idx = shuffled_indices(n, spec.seed);
    Split<ParallelCorpus> out;
    for (auto* c : {&out.train, &out.valid, &out.test}) {
        c->src_language = corpus.src_language;
        c->tgt_language = corpus.tgt_language;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& pair = corpus.pairs[idx[i]];
        if (i < sizes.test) {
            out.test.pairs.push_back(pair);
        } else if (i < sizes.test + sizes.valid) {
            out.valid.pairs.push_back(pair);
        } else {
            out.train.pairs.push_back(pair);
        }
    }
    return out;
}

SamplingWeights oversample_weights(const std::map<std::string, std::size_t>& sizes, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw DataError("sampling alpha must lie in [0, 1]");
    if (sizes.empty()) throw DataError("no languages given for sampling weights");
    SamplingWeights out;
    out.alpha = alpha;
    double total = 0.0;
    for (const auto& [lang, n] : sizes) {
        if (n == 0) throw DataError("language '" + lang + "' has no data");
        out.languages.push_back(lang);
        double w = std::pow(static_cast<double>(n), alpha);
        out.weights.push_back(w);
        total += w;
    }
    for (double& w : out.weights) w /= total;
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

Corpus corpus_from_lines(std::vector<std::string> raw_lines, const std::string& language) {
    Corpus c{language, {}};
    c.lines.reserve(raw_lines.size());
    for (const auto& raw : raw_lines) {
        std::string norm = normalize_line(raw);
        if (!norm.empty()) c.lines.push_back(std::move(norm));
    }
    return c;
}

Corpus load_corpus(const std::string& path, const std::string& language) {
    return corpus_from_lines(read_lines(path), language);
}

ParallelCorpus load_parallel_tsv(const std::string& path, const std::string& src_language,
                                 const std::string& tgt_language) {
    ParallelCorpus c{src_language, tgt_language, {}};
    std::size_t lineno = 0;
    for (const auto& raw : read_lines(path)) {
        ++lineno;
        if (raw.empty()) continue;
        auto tab = raw.find('\t');
        if (tab == std::string::npos) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected two tab-separated columns");
        }
        std::string src = normalize_line(std::string_view(raw).substr(0, tab));
        std::string tgt = normalize_line(std::string_view(raw).substr(tab + 1));
        if (src.empty() || tgt.empty()) continue;
        c.pairs.emplace_back(std::move(src), std::move(tgt));
    }
    return c;
}

ParallelCorpus load_parallel_files(const std::string& src_path, const std::string& tgt_path,
                                   const std::string& src_language, const std::string& tgt_language) {
    auto src_lines = read_lines(src_path);
    auto tgt_lines = read_lines(tgt_path);
    if (src_lines.size() != tgt_lines.size()) {
        throw DataError("aligned files differ in length: " + src_path + " has " +
                        std::to_string(src_lines.size()) + " lines, " + tgt_path + " has " +
                        std::to_string(tgt_lines.size()));
    }
    ParallelCorpus c{src_language, tgt_language, {}};
    for (std::size_t i = 0; i < src_lines.size(); ++i) {
        std::string src = normalize_line(src_lines[i]);
        std::string tgt = normalize_line(tgt_lines[i]);
        if (src.empty() || tgt.empty()) continue;
        c.pairs.emplace_back(std::move(src), std::move(tgt));
    }
    return c;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& line : corpus.lines) out << line << '\n';
}

void save_parallel_tsv(const ParallelCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& [src, tgt] : corpus.pairs) out << src << '\t' << tgt << '\n';
}

}  // namespace lmtl
