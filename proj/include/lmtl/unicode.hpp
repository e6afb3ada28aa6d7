#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lmtl::uni {

// Invalid UTF-8 input. byte_offset points at the first offending byte.
class Utf8Error : public std::runtime_error {
public:
    Utf8Error(std::size_t byte_offset, const std::string& what);
    std::size_t byte_offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Strict UTF-8 decode (rejects overlong forms, surrogates, cp > U+10FFFF).
std::vector<char32_t> decode_utf8(std::string_view text);
void append_utf8(char32_t cp, std::string& out);
std::string encode_utf8(const std::vector<char32_t>& cps);

// Canonical composition (NFC). Hangul handled algorithmically.
std::vector<char32_t> nfc(std::vector<char32_t> cps);

// Lenient pass for machine-produced bytes: every invalid byte becomes
// U+FFFD. Valid input comes back unchanged.
std::string sanitize_utf8(std::string_view text);

bool is_letter(char32_t cp);
bool is_digit(char32_t cp);
bool is_space(char32_t cp);    // ASCII whitespace plus Zs/Zl/Zp
bool is_control(char32_t cp);  // Cc minus the ASCII whitespace controls
int combining_class(char32_t cp);

}  // namespace lmtl::uni
