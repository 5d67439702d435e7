#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "invert/bitvector.hpp"

namespace invert {

// How a tied (positive, negative) pair counts towards the AUC numerator.
// midrank: 1/2 (Mann-Whitney). strict: 0 (literal 1[f(x) < f(y)]).
enum class TieMode { midrank, strict };

// Sufficient statistics of a concept column against a ranked activation
// column. All quantities are integers so that results are exact and
// independent of summation order.
struct RankStats {
    std::int64_t n_pos = 0;
    std::int64_t n_neg = 0;
    // 2 * U where U counts pairs (neg < pos) with ties as 1/2.
    std::int64_t twice_u = 0;
    // Number of tied (pos, neg) pairs; strict U = U - tied_pairs / 2.
    std::int64_t tied_pairs = 0;
    // Distinct tied activation values with members in both classes.
    std::int64_t tie_groups = 0;

    double auc(TieMode mode = TieMode::midrank) const {
        const std::int64_t num = mode == TieMode::midrank ? twice_u : twice_u - tied_pairs;
        return static_cast<double>(num) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
    }
};

namespace ranking_detail {

inline constexpr std::array<std::uint64_t, 6> kBitPlaneMasks = {
    0xAAAAAAAAAAAAAAAAull, 0xCCCCCCCCCCCCCCCCull, 0xF0F0F0F0F0F0F0F0ull,
    0xFF00FF00FF00FF00ull, 0xFFFF0000FFFF0000ull, 0xFFFFFFFF00000000ull,
};

// Sum of the in-word positions (0..63) of set bits.
inline std::uint64_t position_sum(std::uint64_t w) noexcept {
    std::uint64_t s = 0;
    for (unsigned k = 0; k < 6; ++k) s += static_cast<std::uint64_t>(std::popcount(w & kBitPlaneMasks[k])) << k;
    return s;
}

} // namespace ranking_detail

// An activation column sorted once so that any concept column, permuted into
// sorted order, yields its rank sum from popcounts: O(N/64 + tie groups) per
// concept instead of O(N log N).
class RankedColumn {
public:
    struct TieGroup {
        std::size_t begin;  // sorted positions [begin, end)
        std::size_t end;
    };

    explicit RankedColumn(std::span<const double> f) : n_(f.size()), order_(f.size()) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
        std::size_t i = 0;
        while (i < n_) {
            std::size_t j = i + 1;
            while (j < n_ && f[order_[j]] == f[order_[i]]) ++j;
            if (j - i > 1) {
                groups_.push_back({i, j});
                const auto t = static_cast<std::int64_t>(j - i);
                tie_term_ += t * t * t - t;
            }
            i = j;
        }
    }

    std::size_t size() const noexcept { return n_; }
    std::span<const std::size_t> order() const noexcept { return order_; }
    std::span<const TieGroup> tie_groups() const noexcept { return groups_; }
    bool has_ties() const noexcept { return !groups_.empty(); }
    // Sum over tie groups of (t^3 - t), the variance correction of the U test.
    std::int64_t tie_term() const noexcept { return tie_term_; }

    // Reorders a sample-indexed bit vector into ascending-activation order.
    BitVector permute(const BitVector& c) const {
        BitVector out(n_);
        auto words = out.words_mut();
        for (std::size_t p = 0; p < n_; ++p)
            if (c.test(order_[p])) words[p / 64] |= std::uint64_t{1} << (p % 64);
        return out;
    }

    // `word(i)` must return word i of a bit vector already in sorted order.
    // `accept(n_pos)` can reject a candidate after the cheap counting pass;
    // rejected candidates return nullopt without touching tie groups.
    template <class WordFn, class Accept>
    std::optional<RankStats> stats_if(WordFn&& word, Accept&& accept) const {
        const std::size_t n_words = BitVector::word_count(n_);
        std::uint64_t n_pos = 0;
        std::uint64_t pos_sum = 0;
        for (std::size_t i = 0; i < n_words; ++i) {
            const std::uint64_t w = word(i);
            const auto c = static_cast<std::uint64_t>(std::popcount(w));
            n_pos += c;
            pos_sum += 64 * i * c + ranking_detail::position_sum(w);
        }
        if (!accept(static_cast<std::int64_t>(n_pos))) return std::nullopt;

        RankStats r;
        r.n_pos = static_cast<std::int64_t>(n_pos);
        r.n_neg = static_cast<std::int64_t>(n_) - r.n_pos;
        // Twice the 1-based rank sum; tied runs get midrank (begin + end + 1) / 2.
        std::int64_t twice_rank_sum = 2 * static_cast<std::int64_t>(pos_sum + n_pos);
        for (const auto& g : groups_) {
            auto [cnt, gsum] = range_stats(word, g.begin, g.end);
            if (cnt == 0) continue;
            const auto size = static_cast<std::int64_t>(g.end - g.begin);
            twice_rank_sum += cnt * static_cast<std::int64_t>(g.begin + g.end + 1) - 2 * (gsum + cnt);
            r.tied_pairs += cnt * (size - cnt);
            if (cnt < size) ++r.tie_groups;
        }
        r.twice_u = twice_rank_sum - r.n_pos * (r.n_pos + 1);
        return r;
    }

    template <class WordFn>
        requires std::invocable<WordFn&, std::size_t>
    RankStats stats(WordFn&& word) const {
        return *stats_if(word, [](std::int64_t) { return true; });
    }

    RankStats stats(const BitVector& sorted_bits) const {
        auto w = sorted_bits.words();
        return stats([&](std::size_t i) { return w[i]; });
    }

private:
    template <class WordFn>
    static std::pair<std::int64_t, std::int64_t> range_stats(WordFn& word, std::size_t begin, std::size_t end) {
        std::int64_t cnt = 0;
        std::int64_t sum = 0;
        const std::size_t first = begin / 64;
        const std::size_t last = (end - 1) / 64;
        for (std::size_t i = first; i <= last; ++i) {
            std::uint64_t w = word(i);
            if (i == first) w &= ~std::uint64_t{0} << (begin % 64);
            if (i == last && end % 64 != 0) w &= (std::uint64_t{1} << (end % 64)) - 1;
            const auto c = static_cast<std::int64_t>(std::popcount(w));
            cnt += c;
            sum += static_cast<std::int64_t>(64 * i) * c + static_cast<std::int64_t>(ranking_detail::position_sum(w));
        }
        return {cnt, sum};
    }

    std::size_t n_;
    std::vector<std::size_t> order_;
    std::vector<TieGroup> groups_;
    std::int64_t tie_term_ = 0;
};

} // namespace invert
