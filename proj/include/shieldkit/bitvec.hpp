#pragma once

#include <cstdint>
#include <vector>

namespace shieldkit {

/// Fixed-size bit array. std::vector<bool> without the proxy surprises,
/// plus a popcount.
class BitVec {
public:
    BitVec() = default;
    explicit BitVec(std::uint64_t size, bool value = false)
        : size_(size), words_((size + 63) / 64, value ? ~0ull : 0ull) {
        trim();
    }

    std::uint64_t size() const { return size_; }

    bool get(std::uint64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
    void set(std::uint64_t i) { words_[i >> 6] |= 1ull << (i & 63); }
    void clear(std::uint64_t i) { words_[i >> 6] &= ~(1ull << (i & 63)); }

    std::uint64_t count() const {
        std::uint64_t total = 0;
        for (std::uint64_t w : words_) total += static_cast<std::uint64_t>(__builtin_popcountll(w));
        return total;
    }

    bool operator==(const BitVec& other) const {
        return size_ == other.size_ && words_ == other.words_;
    }

private:
    void trim() {
        if (size_ & 63) words_.back() &= (1ull << (size_ & 63)) - 1;
    }

    std::uint64_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

} // namespace shieldkit
