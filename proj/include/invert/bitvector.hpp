#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace invert {

// Fixed-length bit vector packed into 64-bit words, bit i of the vector is
// bit (i % 64) of word (i / 64). Bits past size() are always zero.
class BitVector {
public:
    using Word = std::uint64_t;
    static constexpr std::size_t kWordBits = 64;

    BitVector() = default;
    explicit BitVector(std::size_t n, bool value = false)
        : size_(n), words_(word_count(n), value ? ~Word{0} : Word{0}) {
        clear_tail();
    }

    static BitVector from_bools(std::span<const bool> bits) {
        BitVector v(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (bits[i]) v.set(i);
        return v;
    }
    static BitVector from_ints(std::span<const int> bits) {
        BitVector v(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (bits[i] != 0) v.set(i);
        return v;
    }

    static constexpr std::size_t word_count(std::size_t n) { return (n + kWordBits - 1) / kWordBits; }

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }

    bool test(std::size_t i) const noexcept { return (words_[i / kWordBits] >> (i % kWordBits)) & 1u; }
    bool operator[](std::size_t i) const noexcept { return test(i); }
    void set(std::size_t i, bool value = true) noexcept {
        const Word m = Word{1} << (i % kWordBits);
        if (value)
            words_[i / kWordBits] |= m;
        else
            words_[i / kWordBits] &= ~m;
    }

    std::size_t count() const noexcept {
        std::size_t c = 0;
        for (Word w : words_) c += static_cast<std::size_t>(std::popcount(w));
        return c;
    }

    // Mask of valid bits in the last word (all ones when size is a multiple of 64).
    Word tail_mask() const noexcept {
        const std::size_t r = size_ % kWordBits;
        return r == 0 ? ~Word{0} : (Word{1} << r) - 1;
    }

    std::span<const Word> words() const noexcept { return words_; }
    std::span<Word> words_mut() noexcept { return words_; }

    BitVector& operator&=(const BitVector& o) noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
        return *this;
    }
    BitVector& operator|=(const BitVector& o) noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
        return *this;
    }
    BitVector& flip() noexcept {
        for (Word& w : words_) w = ~w;
        clear_tail();
        return *this;
    }

    friend BitVector operator&(BitVector a, const BitVector& b) noexcept { return a &= b; }
    friend BitVector operator|(BitVector a, const BitVector& b) noexcept { return a |= b; }
    friend BitVector operator~(BitVector a) noexcept { return a.flip(); }

    friend bool operator==(const BitVector& a, const BitVector& b) noexcept {
        return a.size_ == b.size_ && a.words_ == b.words_;
    }

    std::uint64_t hash() const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ull ^ size_;
        for (Word w : words_) {
            h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            h *= 0xff51afd7ed558ccdull;
        }
        return h;
    }

    // Concatenation: this followed by `o`.
    BitVector concat(const BitVector& o) const {
        BitVector r(size_ + o.size_);
        for (std::size_t i = 0; i < size_; ++i)
            if (test(i)) r.set(i);
        for (std::size_t i = 0; i < o.size_; ++i)
            if (o.test(i)) r.set(size_ + i);
        return r;
    }

    BitVector slice(std::size_t begin, std::size_t end) const {
        BitVector r(end - begin);
        for (std::size_t i = begin; i < end; ++i)
            if (test(i)) r.set(i - begin);
        return r;
    }

    std::vector<int> to_ints() const {
        std::vector<int> out(size_);
        for (std::size_t i = 0; i < size_; ++i) out[i] = test(i) ? 1 : 0;
        return out;
    }

private:
    void clear_tail() noexcept {
        if (!words_.empty()) words_.back() &= tail_mask();
    }

    std::size_t size_ = 0;
    std::vector<Word> words_;
};

} // namespace invert
