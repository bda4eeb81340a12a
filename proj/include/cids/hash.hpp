#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace cids {

// FNV-1a, 64 bit. Pinned constants so hashed ids are stable across
// runs, builds, and platforms.
inline constexpr uint64_t kFnvOffsetBasis = 14695981039346656037ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

class Fnv1a64 {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            state_ ^= static_cast<uint64_t>(p[i]);
            state_ *= kFnvPrime;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    uint64_t digest() const { return state_; }

private:
    uint64_t state_ = kFnvOffsetBasis;
};

inline uint64_t fnv1a64(std::string_view s) {
    Fnv1a64 h;
    h.update(s);
    return h.digest();
}

inline uint64_t fnv1a64(const void* data, size_t len) {
    Fnv1a64 h;
    h.update(data, len);
    return h.digest();
}

} // namespace cids
