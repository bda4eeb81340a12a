#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cids/errors.hpp"
#include "cids/hash.hpp"
#include "cids/rng.hpp"

namespace cids {

// ---------------------------------------------------------------------------
// Tokenizer: lowercase, split on whitespace and punctuation (punctuation
// characters become their own tokens), hash-bucket vocabulary. Token id 0 is
// reserved for padding; real tokens map to 1 + fnv1a64(token) mod (V-1).

struct TokenizeResult {
    std::vector<uint32_t> ids;
    size_t overflow = 0; // tokens beyond max_tokens
};

struct Tokenizer {
    size_t max_tokens = 100;
    size_t vocab_buckets = 4096;

    uint32_t bucket(std::string_view token) const {
        return 1u + static_cast<uint32_t>(fnv1a64(token) % (vocab_buckets - 1));
    }

    TokenizeResult tokenize(std::string_view message) const {
        if (vocab_buckets < 2) throw ConfigError("embed.vocab_buckets must be >= 2");
        TokenizeResult out;
        std::string word;
        size_t total = 0;
        auto push = [&](std::string_view token) {
            ++total;
            if (out.ids.size() < max_tokens) out.ids.push_back(bucket(token));
        };
        auto flush_word = [&] {
            if (!word.empty()) {
                push(word);
                word.clear();
            }
        };
        for (unsigned char c : message) {
            if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
            const bool word_char = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
            if (word_char) {
                word += static_cast<char>(c);
            } else if (std::isspace(c)) {
                flush_word();
            } else {
                flush_word();
                const char punct[2] = {static_cast<char>(c), 0};
                push(std::string_view(punct, 1));
            }
        }
        flush_word();
        out.overflow = total > max_tokens ? total - max_tokens : 0;
        return out;
    }
};

// ---------------------------------------------------------------------------
// Frozen embedding table: V x j, rows drawn once from a seeded generator and
// L2-normalized; row 0 (padding) is all zeros. Immutable after creation.

class EmbeddingTable {
public:
    static EmbeddingTable generate(size_t vocab, size_t dim, uint64_t seed) {
        if (vocab < 2 || dim < 1) throw ConfigError("embedding table needs vocab >= 2 and dim >= 1");
        EmbeddingTable t;
        t.vocab_ = vocab;
        t.dim_ = dim;
        t.seed_ = seed;
        t.data_.assign(vocab * dim, 0.0);
        Rng rng(seed);
        for (size_t r = 1; r < vocab; ++r) {
            double norm2 = 0.0;
            for (size_t c = 0; c < dim; ++c) {
                const double v = rng.normal();
                t.data_[r * dim + c] = v;
                norm2 += v * v;
            }
            const double inv = 1.0 / std::sqrt(norm2);
            for (size_t c = 0; c < dim; ++c) t.data_[r * dim + c] *= inv;
        }
        if (t.has_duplicate_rows())
            throw NumericError("embedding table generated duplicate rows; change the seed");
        return t;
    }

    size_t vocab() const { return vocab_; }
    size_t dim() const { return dim_; }
    uint64_t seed() const { return seed_; }

    std::span<const double> row(size_t id) const {
        if (id >= vocab_) throw InputError("token id " + std::to_string(id) + " out of range (vocab " +
                                           std::to_string(vocab_) + ")");
        return {data_.data() + id * dim_, dim_};
    }

    // Byte-level digest over header and payload; used to assert the
    // frozen-weights contract around training runs.
    uint64_t checksum() const {
        Fnv1a64 h;
        const uint64_t header[3] = {vocab_, dim_, seed_};
        h.update(header, sizeof(header));
        h.update(data_.data(), data_.size() * sizeof(double));
        return h.digest();
    }

    // Flat binary: u64 vocab, u64 dim, u64 seed, then row-major doubles,
    // little-endian.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InputError("cannot open embedding file for writing: " + path);
        const uint64_t header[3] = {vocab_, dim_, seed_};
        out.write(reinterpret_cast<const char*>(header), sizeof(header));
        out.write(reinterpret_cast<const char*>(data_.data()),
                  static_cast<std::streamsize>(data_.size() * sizeof(double)));
        if (!out) throw InputError("failed writing embedding file: " + path);
    }

    static EmbeddingTable load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InputError("cannot open embedding file: " + path);
        uint64_t header[3];
        in.read(reinterpret_cast<char*>(header), sizeof(header));
        if (!in) throw InputError("truncated embedding file: " + path);
        EmbeddingTable t;
        t.vocab_ = header[0];
        t.dim_ = header[1];
        t.seed_ = header[2];
        if (t.vocab_ == 0 || t.dim_ == 0 || t.vocab_ > (1ull << 32) || t.dim_ > (1ull << 20))
            throw InputError("implausible embedding file header: " + path);
        t.data_.resize(t.vocab_ * t.dim_);
        in.read(reinterpret_cast<char*>(t.data_.data()),
                static_cast<std::streamsize>(t.data_.size() * sizeof(double)));
        if (!in) throw InputError("truncated embedding file: " + path);
        return t;
    }

private:
    bool has_duplicate_rows() const {
        std::set<uint64_t> row_hashes;
        for (size_t r = 0; r < vocab_; ++r) {
            const uint64_t h = fnv1a64(data_.data() + r * dim_, dim_ * sizeof(double));
            if (!row_hashes.insert(h).second) return true;
        }
        return false;
    }

    size_t vocab_ = 0;
    size_t dim_ = 0;
    uint64_t seed_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Embedded message: fixed i x j matrix plus a true-prefix token mask.

struct EmbeddedMessage {
    size_t tokens = 0; // i
    size_t dim = 0;    // j
    std::vector<double> matrix; // row-major i x j, masked rows zero
    std::vector<uint8_t> mask;
};

inline EmbeddedMessage embed_message(const std::vector<uint32_t>& ids, const EmbeddingTable& table,
                                     size_t max_tokens) {
    if (ids.size() > max_tokens)
        throw ShapeError("token id list longer than max_tokens (" + std::to_string(ids.size()) + " > " +
                         std::to_string(max_tokens) + ")");
    EmbeddedMessage out;
    out.tokens = max_tokens;
    out.dim = table.dim();
    out.matrix.assign(max_tokens * table.dim(), 0.0);
    out.mask.assign(max_tokens, 0);
    for (size_t k = 0; k < ids.size(); ++k) {
        const auto r = table.row(ids[k]);
        std::memcpy(out.matrix.data() + k * table.dim(), r.data(), table.dim() * sizeof(double));
        out.mask[k] = 1;
    }
    return out;
}

} // namespace cids
