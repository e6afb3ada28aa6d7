#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "lmtl/corpus.hpp"
#include "lmtl/tokenizer.hpp"
#include "lmtl/unicode.hpp"

using namespace lmtl;

namespace {

Tokenizer train_on(std::vector<std::string> lines, std::size_t extra_budget,
                   std::vector<std::string> languages = {}) {
    Corpus c{"xx", std::move(lines)};
    // Base inventory: 5 specials + language tags + 256 bytes + marker + chars.
    std::set<char32_t> chars;
    for (const auto& line : c.lines) {
        for (char32_t cp : uni::decode_utf8(line)) {
            if (cp != U' ' && cp != 0x2581) chars.insert(cp);
        }
    }
    std::size_t base = 5 + languages.size() + 256 + 1 + chars.size();
    return Tokenizer::train({c}, base + extra_budget, std::move(languages));
}

}  // namespace

TEST_CASE("special token layout") {
    auto tok = train_on({"abc"}, 0, {"en", "ln"});
    CHECK(tok.piece(SpecialTokens::pad) == "<pad>");
    CHECK(tok.piece(SpecialTokens::unk) == "<unk>");
    CHECK(tok.piece(SpecialTokens::bos) == "<s>");
    CHECK(tok.piece(SpecialTokens::eos) == "</s>");
    CHECK(tok.piece(SpecialTokens::mask) == "<mask>");
    CHECK(tok.piece(5) == "[en]");
    CHECK(tok.piece(6) == "[ln]");
    CHECK(tok.specials().lang_tag("en") == 5);
    CHECK(tok.specials().lang_tag("ln") == 6);
    CHECK_THROWS_AS(tok.specials().lang_tag("zz"), DataError);
    CHECK(tok.specials().count() == 7);
    CHECK(tok.specials().is_special(6));
    CHECK(!tok.specials().is_special(7));
    // Byte tokens immediately after the specials.
    CHECK(tok.piece(7) == "<0x00>");
    CHECK(tok.piece(7 + 255) == "<0xFF>");
}

TEST_CASE("first merge on abab is (a,b)") {
    auto tok = train_on({"abab"}, 1);
    REQUIRE(tok.merges().size() == 1);
    CHECK(tok.merges()[0].left == "a");
    CHECK(tok.merges()[0].right == "b");
}

TEST_CASE("aa aa aa merges (a,a)") {
    auto tok = train_on({"aa aa aa"}, 1);
    REQUIRE(tok.merges().size() >= 1);
    CHECK(tok.merges()[0].left == "a");
    CHECK(tok.merges()[0].right == "a");
}

TEST_CASE("zero merge budget gives empty merge table") {
    auto tok = train_on({"some words here"}, 0);
    CHECK(tok.merges().empty());
}

TEST_CASE("no merge below pair count two") {
    // Every adjacent pair is unique: nothing reaches frequency 2.
    auto tok = train_on({"abcdefg"}, 50);
    for (const auto& rule : tok.merges()) {
        // Marker+first-char is the only repeatable pair across words, and
        // there is one word, so the table must be empty.
        CAPTURE(rule.left + " " + rule.right);
    }
    CHECK(tok.merges().empty());
}

TEST_CASE("ties break on lexicographically smallest pair") {
    // Words: ba ba ca ca. Candidates all have count 2; byte-wise order picks
    // (b,a) first, then (c,a); the marker byte 0xE2 sorts last.
    auto tok = train_on({"ba ba ca ca"}, 2);
    REQUIRE(tok.merges().size() == 2);
    CHECK(tok.merges()[0].left == "b");
    CHECK(tok.merges()[0].right == "a");
    CHECK(tok.merges()[1].left == "c");
    CHECK(tok.merges()[1].right == "a");
}

TEST_CASE("merge chain reaches whole words through the marker") {
    auto tok = train_on({"ab ab ab ab"}, 3);
    auto ids = tok.encode("ab");
    REQUIRE(ids.size() == 1);
    CHECK(tok.piece(ids[0]) == Tokenizer::marker() + "ab");
    CHECK(tok.decode(ids) == "ab");
}

TEST_CASE("encode basics") {
    auto tok = train_on({"abab"}, 1);
    CHECK(tok.encode("").empty());
    auto ids = tok.encode("ab");
    REQUIRE(ids.size() == 2);
    CHECK(tok.piece(ids[0]) == Tokenizer::marker());
    CHECK(tok.piece(ids[1]) == "ab");
    CHECK(tok.decode(ids) == "ab");
    CHECK(tok.decode({}) == "");
}

TEST_CASE("encode never emits specials or unk") {
    auto tok = train_on({"mbote na yo"}, 10, {"en", "ln"});
    for (const auto& text : {"mbote na yo", "mbote <mask> [en] </s>", "<unk>"}) {
        for (TokenId id : tok.encode(text)) {
            CHECK(!tok.specials().is_special(id));
        }
    }
}

TEST_CASE("round trip with byte fallback") {
    auto tok = train_on({"the quick brown fox", "mbote mingi"}, 20);
    std::vector<std::string> cases = {
        "the quick brown fox",
        "unseen glyphs: \xE4\xB8\x9C\xE4\xBA\xAC",
        "emoji \xF0\x9F\x99\x82 too",
        "digits 0123 and punct !?",
        "literal \xE2\x96\x81 marker survives",
        "\xE2\x96\x81leading marker",
        "mixed\xE2\x96\x81inside",
    };
    for (const auto& raw : cases) {
        std::string line = normalize_line(raw);
        CAPTURE(line);
        CHECK(tok.decode(tok.encode(line)) == line);
    }
}

TEST_CASE("specials are dropped in decode") {
    auto tok = train_on({"abab"}, 1, {"en"});
    auto ids = tok.encode("ab ab");
    std::vector<TokenId> padded;
    padded.push_back(tok.specials().lang_tag("en"));
    padded.insert(padded.end(), ids.begin(), ids.end());
    padded.push_back(SpecialTokens::eos);
    padded.push_back(SpecialTokens::pad);
    CHECK(tok.decode(padded) == "ab ab");
}

TEST_CASE("decode rejects out of range ids") {
    auto tok = train_on({"ab"}, 0);
    CHECK_THROWS_AS(tok.decode({static_cast<TokenId>(tok.size())}), DataError);
    CHECK_THROWS_AS(tok.decode({-1}), DataError);
    CHECK_THROWS_AS(tok.piece(static_cast<TokenId>(tok.size())), DataError);
}

TEST_CASE("training rejects bad input") {
    CHECK_THROWS_AS(Tokenizer::train({Corpus{"xx", {}}}, 9000, {}), DataError);
    Corpus c{"xx", {"abc"}};
    CHECK_THROWS_AS(Tokenizer::train({c}, 10, {}), DataError);
}

TEST_CASE("determinism and save/load round trip") {
    std::vector<std::string> lines = {"mbote na yo", "na yo mbote", "yo na mbote mingi",
                                      "the water is cold", "cold water again"};
    Corpus c{"xx", lines};
    auto a = Tokenizer::train({c}, 600, {"en", "ln"});
    auto b = Tokenizer::train({c}, 600, {"en", "ln"});
    CHECK(a.content_hash() == b.content_hash());
    REQUIRE(a.merges().size() == b.merges().size());
    for (std::size_t i = 0; i < a.merges().size(); ++i) {
        CHECK(a.merges()[i].left == b.merges()[i].left);
        CHECK(a.merges()[i].right == b.merges()[i].right);
    }

    auto dir = std::filesystem::temp_directory_path() / "lmtl_tok_test";
    std::filesystem::create_directories(dir);
    auto vocab_path = (dir / "vocab.txt").string();
    auto merges_path = (dir / "merges.txt").string();
    a.save(vocab_path, merges_path);
    auto loaded = Tokenizer::load(vocab_path, merges_path);
    CHECK(loaded.size() == a.size());
    CHECK(loaded.content_hash() == a.content_hash());
    CHECK(loaded.specials().languages == a.specials().languages);
    for (const auto& line : lines) {
        CHECK(loaded.encode(line) == a.encode(line));
        CHECK(loaded.decode(loaded.encode(line)) == line);
    }
}

TEST_CASE("round trip holds on every training line") {
    std::vector<std::string> lines = {
        "mbote na bino nyonso",       "nasepeli mingi na yo",
        "the quick brown fox",        "jumps over the lazy dog",
        "amandla ngawethu namhlanje", "hakuna matata rafiki yangu",
        "goeie more almal saam",
    };
    Corpus c{"xx", lines};
    auto tok = Tokenizer::train({c}, 700, {"en", "ln", "af", "sw", "zu"});
    for (const auto& line : lines) {
        CHECK(tok.decode(tok.encode(line)) == line);
    }
}

TEST_CASE("larger vocab never tokenizes the training set into more pieces") {
    std::vector<std::string> lines = {"banana bandana cabana", "banana banana bandana",
                                      "cabana banana bandana"};
    std::size_t prev = SIZE_MAX;
    for (std::size_t extra : {0u, 4u, 8u, 16u}) {
        auto tok = train_on(lines, extra);
        std::size_t total = 0;
        for (const auto& line : lines) total += tok.encode(line).size();
        CHECK(total <= prev);
        prev = total;
    }
}
