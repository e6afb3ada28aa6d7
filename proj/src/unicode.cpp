#include "lmtl/unicode.hpp"

#include <algorithm>

namespace lmtl::uni {

namespace {
#include "unicode_tables.inc"

bool in_ranges(const CpRange* ranges, std::size_t n, char32_t cp) {
    const CpRange* end = ranges + n;
    auto it = std::upper_bound(ranges, end, static_cast<uint32_t>(cp),
                               [](uint32_t v, const CpRange& r) { return v < r.lo; });
    if (it == ranges) return false;
    --it;
    return cp >= it->lo && cp <= it->hi;
}

template <typename Entry, std::size_t N>
const Entry* find_entry(const Entry (&table)[N], uint32_t cp) {
    auto it = std::lower_bound(std::begin(table), std::end(table), cp,
                               [](const Entry& e, uint32_t v) { return e.cp < v; });
    if (it != std::end(table) && it->cp == cp) return &*it;
    return nullptr;
}

// Hangul syllable arithmetic (UAX #15).
constexpr char32_t kSBase = 0xAC00, kLBase = 0x1100, kVBase = 0x1161, kTBase = 0x11A7;
constexpr int kLCount = 19, kVCount = 21, kTCount = 28;
constexpr int kNCount = kVCount * kTCount;
constexpr int kSCount = kLCount * kNCount;

void decompose_cp(char32_t cp, std::vector<char32_t>& out) {
    if (cp >= kSBase && cp < kSBase + kSCount) {
        int idx = static_cast<int>(cp - kSBase);
        out.push_back(kLBase + idx / kNCount);
        out.push_back(kVBase + (idx % kNCount) / kTCount);
        if (int t = idx % kTCount; t != 0) out.push_back(kTBase + t);
        return;
    }
    if (const auto* e = find_entry(kDecompEntries, cp)) {
        for (uint8_t i = 0; i < e->len; ++i) out.push_back(kDecompBuffer[e->offset + i]);
        return;
    }
    out.push_back(cp);
}

char32_t compose_pair(char32_t a, char32_t b) {
    if (a >= kLBase && a < kLBase + kLCount && b >= kVBase && b < kVBase + kVCount) {
        return kSBase + ((a - kLBase) * kVCount + (b - kVBase)) * kTCount;
    }
    if (a >= kSBase && a < kSBase + kSCount && (a - kSBase) % kTCount == 0 &&
        b > kTBase && b < kTBase + kTCount) {
        return a + (b - kTBase);
    }
    uint64_t key = (static_cast<uint64_t>(a) << 21) | b;
    auto it = std::lower_bound(std::begin(kCompEntries), std::end(kCompEntries), key,
                               [](const CompEntry& e, uint64_t v) { return e.key < v; });
    if (it != std::end(kCompEntries) && it->key == key) return it->composite;
    return 0;
}

}  // namespace

Utf8Error::Utf8Error(std::size_t byte_offset, const std::string& what)
    : std::runtime_error(what), offset_(byte_offset) {}

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    auto fail = [&](std::size_t at) -> Utf8Error {
        return Utf8Error(at, "invalid UTF-8 at byte offset " + std::to_string(at));
    };
    while (i < text.size()) {
        unsigned char b0 = static_cast<unsigned char>(text[i]);
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        }
        int extra;
        char32_t cp;
        char32_t min_cp;
        if ((b0 & 0xE0) == 0xC0) {
            extra = 1, cp = b0 & 0x1F, min_cp = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            extra = 2, cp = b0 & 0x0F, min_cp = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            extra = 3, cp = b0 & 0x07, min_cp = 0x10000;
        } else {
            throw fail(i);
        }
        if (i + extra >= text.size()) throw fail(i);
        for (int k = 1; k <= extra; ++k) {
            unsigned char b = static_cast<unsigned char>(text[i + k]);
            if ((b & 0xC0) != 0x80) throw fail(i + k);
            cp = (cp << 6) | (b & 0x3F);
        }
        if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) throw fail(i);
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

std::string sanitize_utf8(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t step = 1;
        try {
            std::size_t end = i;
            unsigned char b0 = static_cast<unsigned char>(text[i]);
            if (b0 < 0x80) end = i + 1;
            else if ((b0 & 0xE0) == 0xC0) end = i + 2;
            else if ((b0 & 0xF0) == 0xE0) end = i + 3;
            else if ((b0 & 0xF8) == 0xF0) end = i + 4;
            else throw Utf8Error(i, "");
            if (end > text.size()) throw Utf8Error(i, "");
            decode_utf8(text.substr(i, end - i));
            out.append(text.substr(i, end - i));
            step = end - i;
        } catch (const Utf8Error&) {
            append_utf8(0xFFFD, out);
        }
        i += step;
    }
    return out;
}

void append_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append_utf8(cp, out);
    return out;
}

int combining_class(char32_t cp) {
    if (const auto* e = find_entry(kCccEntries, cp)) return e->ccc;
    return 0;
}

std::vector<char32_t> nfc(std::vector<char32_t> cps) {
    // Decompose.
    std::vector<char32_t> d;
    d.reserve(cps.size());
    for (char32_t cp : cps) decompose_cp(cp, d);

    // Canonical ordering: stable sort of nonzero-ccc runs by combining class.
    for (std::size_t i = 1; i < d.size(); ++i) {
        int cc = combining_class(d[i]);
        if (cc == 0) continue;
        std::size_t j = i;
        while (j > 0) {
            int prev = combining_class(d[j - 1]);
            if (prev == 0 || prev <= cc) break;
            std::swap(d[j - 1], d[j]);
            --j;
        }
    }

    // Compose. A combiner is blocked when a character with combining class
    // >= its own sits between it and the last starter.
    std::vector<char32_t> out;
    out.reserve(d.size());
    std::ptrdiff_t last_starter = -1;
    for (char32_t cp : d) {
        int cc = combining_class(cp);
        if (last_starter >= 0) {
            bool intervening = static_cast<std::ptrdiff_t>(out.size()) - 1 > last_starter;
            int prev_cc = intervening ? combining_class(out.back()) : 0;
            if (!intervening || prev_cc < cc) {
                if (char32_t comp = compose_pair(out[last_starter], cp)) {
                    out[last_starter] = comp;
                    continue;
                }
            }
        }
        out.push_back(cp);
        if (cc == 0) last_starter = static_cast<std::ptrdiff_t>(out.size()) - 1;
    }
    return out;
}

bool is_letter(char32_t cp) { return in_ranges(kLetterRanges, std::size(kLetterRanges), cp); }
bool is_digit(char32_t cp) { return in_ranges(kDigitRanges, std::size(kDigitRanges), cp); }
bool is_space(char32_t cp) { return in_ranges(kSpaceRanges, std::size(kSpaceRanges), cp); }
bool is_control(char32_t cp) { return in_ranges(kControlRanges, std::size(kControlRanges), cp); }

}  // namespace lmtl::uni
