#pragma once

#include <cstdint>
#include <string_view>

namespace lmtl {

// FNV-1a, used for manifest content hashes.
class Fnv1a {
   public:
    void update(std::string_view data) {
        for (unsigned char c : data) {
            value_ ^= c;
            value_ *= 1099511628211ULL;
        }
    }

    void update_bytes(const void* data, std::size_t n) {
        update(std::string_view(static_cast<const char*>(data), n));
    }

    uint64_t value() const { return value_; }

   private:
    uint64_t value_ = 14695981039346656037ULL;
};

inline uint64_t fnv1a(std::string_view data) {
    Fnv1a h;
    h.update(data);
    return h.value();
}

}  // namespace lmtl
