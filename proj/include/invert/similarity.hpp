#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "invert/bitvector.hpp"
#include "invert/error.hpp"
#include "invert/ranking.hpp"

namespace invert {

struct SimilarityResult {
    double auc = 0.5;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::size_t tie_groups = 0;
};

enum class Alternative { two_sided, greater };
enum class PValueMethod { normal_approx, exact };

struct SignificanceResult {
    double u_statistic = 0.0;
    double z_score = 0.0;
    double p_two_sided = 1.0;
    double p_one_sided_greater = 1.0;
    PValueMethod method = PValueMethod::normal_approx;
};

// Largest sample size for which the exact null distribution is enumerated.
inline constexpr std::size_t kExactTestMaxN = 20;

namespace similarity_detail {

inline void check_inputs(std::span<const double> f, const BitVector& c) {
    if (f.size() != c.size())
        throw Error(ErrorKind::SampleCountMismatch,
                    "activation length " + std::to_string(f.size()) + " != concept length " + std::to_string(c.size()));
}

inline void check_non_degenerate(std::size_t n_pos, std::size_t n) {
    if (n_pos == 0 || n_pos == n)
        throw Error(ErrorKind::DegenerateConcept,
                    n_pos == 0 ? "concept has no positive samples" : "concept has no negative samples");
}

inline SimilarityResult to_result(const RankStats& s, TieMode mode) {
    return {s.auc(mode), static_cast<std::size_t>(s.n_pos), static_cast<std::size_t>(s.n_neg),
            static_cast<std::size_t>(s.tie_groups)};
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

} // namespace similarity_detail

// Fraction of positive pairs (neg, pos) with f(neg) < f(pos), ties counted
// per `mode`. Rank-sum evaluation, O(N log N).
inline SimilarityResult auc(std::span<const double> f, const BitVector& c, TieMode mode = TieMode::midrank) {
    similarity_detail::check_inputs(f, c);
    similarity_detail::check_non_degenerate(c.count(), c.size());
    RankedColumn ranked(f);
    return similarity_detail::to_result(ranked.stats(ranked.permute(c)), mode);
}

// Direct O(N^2) double sum over (negative, positive) pairs.
inline SimilarityResult auc_bruteforce(std::span<const double> f, const BitVector& c,
                                       TieMode mode = TieMode::midrank) {
    similarity_detail::check_inputs(f, c);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < f.size(); ++i) (c.test(i) ? pos : neg).push_back(f[i]);
    similarity_detail::check_non_degenerate(pos.size(), f.size());
    std::int64_t twice_num = 0;
    for (double x : neg)
        for (double y : pos) {
            if (x < y)
                twice_num += 2;
            else if (x == y && mode == TieMode::midrank)
                twice_num += 1;
        }
    std::vector<double> tied_pos;
    for (double y : pos)
        if (std::find(neg.begin(), neg.end(), y) != neg.end()) tied_pos.push_back(y);
    std::sort(tied_pos.begin(), tied_pos.end());
    const auto groups = static_cast<std::size_t>(std::unique(tied_pos.begin(), tied_pos.end()) - tied_pos.begin());
    return {static_cast<double>(twice_num) / (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size())),
            pos.size(), neg.size(), groups};
}

inline double concept_fraction(const BitVector& c) {
    if (c.empty()) throw Error(ErrorKind::InvalidArgument, "concept fraction of an empty column");
    return static_cast<double>(c.count()) / static_cast<double>(c.size());
}

// Mann-Whitney U test of H0: AUC = 0.5 from precomputed rank statistics.
// Exact null distribution by enumerating all C(n, n_pos) rank subsets when
// n <= 20 and the activations are tie-free; otherwise the normal
// approximation with tie-corrected variance and a 0.5 continuity correction.
// `allow_exact = false` forces the approximation.
inline SignificanceResult mann_whitney_p(const RankStats& s, const RankedColumn& ranked,
                                         Alternative alternative = Alternative::two_sided, bool allow_exact = true) {
    using similarity_detail::normal_sf;
    similarity_detail::check_non_degenerate(static_cast<std::size_t>(s.n_pos), ranked.size());
    const auto n1 = static_cast<double>(s.n_pos);
    const auto n0 = static_cast<double>(s.n_neg);
    const auto n = static_cast<double>(ranked.size());
    SignificanceResult r;
    r.u_statistic = static_cast<double>(s.twice_u) / 2.0;

    const double mu = n1 * n0 / 2.0;
    const double var = n1 * n0 / 12.0 * ((n + 1.0) - static_cast<double>(ranked.tie_term()) / (n * (n - 1.0)));
    const double sigma = var > 0.0 ? std::sqrt(var) : 0.0;
    const double dev = r.u_statistic - mu;
    if (sigma > 0.0) {
        const double z_greater = (dev - 0.5) / sigma;
        const double z_two = (std::abs(dev) - 0.5) / sigma;
        r.p_one_sided_greater = normal_sf(z_greater);
        r.p_two_sided = std::min(1.0, 2.0 * normal_sf(z_two));
        r.z_score = alternative == Alternative::greater ? z_greater
                                                        : (dev >= 0 ? 1.0 : -1.0) * std::max(z_two, 0.0);
    }

    if (allow_exact && ranked.size() <= kExactTestMaxN && !ranked.has_ties()) {
        const unsigned nn = static_cast<unsigned>(ranked.size());
        const unsigned k = static_cast<unsigned>(s.n_pos);
        const std::int64_t offset = static_cast<std::int64_t>(k) * (k + 1);
        std::uint64_t ge = 0, le = 0, total = 0;
        // Gosper's hack: every k-subset of {0..nn-1} as a bitmask.
        std::uint32_t mask = (1u << k) - 1u;
        const std::uint32_t limit = 1u << nn;
        while (mask < limit) {
            std::int64_t rank_sum = 0;
            for (std::uint32_t m = mask; m != 0; m &= m - 1) rank_sum += std::countr_zero(m) + 1;
            const std::int64_t twice_u = 2 * rank_sum - offset;
            ge += twice_u >= s.twice_u;
            le += twice_u <= s.twice_u;
            ++total;
            const std::uint32_t lowest = mask & (~mask + 1u);
            const std::uint32_t ripple = mask + lowest;
            mask = (((ripple ^ mask) >> 2) / lowest) | ripple;
        }
        r.p_one_sided_greater = static_cast<double>(ge) / static_cast<double>(total);
        const double p_less = static_cast<double>(le) / static_cast<double>(total);
        r.p_two_sided = std::min(1.0, 2.0 * std::min(r.p_one_sided_greater, p_less));
        r.method = PValueMethod::exact;
    }
    return r;
}

inline SignificanceResult mann_whitney_p(std::span<const double> f, const BitVector& c,
                                         Alternative alternative = Alternative::two_sided, bool allow_exact = true) {
    similarity_detail::check_inputs(f, c);
    similarity_detail::check_non_degenerate(c.count(), c.size());
    RankedColumn ranked(f);
    return mann_whitney_p(ranked.stats(ranked.permute(c)), ranked, alternative, allow_exact);
}

// `r` only supplies class sizes for validation; U is always the midrank
// statistic recomputed from (f, c), whatever tie mode produced `r`.
inline SignificanceResult mann_whitney_p(const SimilarityResult& r, std::span<const double> f, const BitVector& c,
                                         Alternative alternative = Alternative::two_sided) {
    if (r.n_pos == 0 || r.n_neg == 0)
        throw Error(ErrorKind::DegenerateConcept, "significance of a degenerate concept");
    return mann_whitney_p(f, c, alternative);
}

inline constexpr double kDefaultIouQuantile = 0.995;

// Sample-level IoU: activations above their empirical `quantile` (linear
// interpolation between order statistics) form the predicted set.
inline double iou_sample(std::span<const double> f, const BitVector& c, double quantile = kDefaultIouQuantile) {
    similarity_detail::check_inputs(f, c);
    if (!(quantile > 0.0 && quantile < 1.0))
        throw Error(ErrorKind::InvalidArgument, "quantile must lie in (0, 1)");
    similarity_detail::check_non_degenerate(c.count(), c.size());
    std::vector<double> sorted(f.begin(), f.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = static_cast<double>(sorted.size() - 1) * quantile;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double threshold = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const bool predicted = f[i] > threshold;
        inter += predicted && c.test(i);
        uni += predicted || c.test(i);
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace invert
