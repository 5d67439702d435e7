#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "invert/bitvector.hpp"
#include "invert/datamodel.hpp"
#include "invert/error.hpp"
#include "invert/formula.hpp"
#include "invert/parallel.hpp"
#include "invert/ranking.hpp"
#include "invert/similarity.hpp"

namespace invert {

struct SearchParams {
    std::size_t length = 3;  // L: maximal formula length
    std::size_t beam = 5;    // B
    double alpha = 0.0;      // admissible concept fraction band [alpha, beta]
    double beta = 0.5;
    TieMode tie_mode = TieMode::midrank;

    void validate() const {
        if (length < 1) throw Error(ErrorKind::InvalidArgument, "formula length L must be >= 1");
        if (beam < 1) throw Error(ErrorKind::InvalidArgument, "beam size B must be >= 1");
        if (!(alpha >= 0.0 && alpha < beta && beta <= 0.5))
            throw Error(ErrorKind::InvalidArgument, "need 0 <= alpha < beta <= 0.5");
    }

    bool admits(std::int64_t n_pos, std::size_t n) const {
        if (n_pos <= 0 || static_cast<std::size_t>(n_pos) >= n) return false;
        const double t = static_cast<double>(n_pos) / static_cast<double>(n);
        return t >= alpha && t <= beta;
    }
};

struct Explanation {
    std::size_t neuron_id = 0;
    Formula formula = Formula::leaf(0);
    double auc = 0.5;
    double fraction = 0.0;
    double p_two_sided = 1.0;
    SearchParams params;
};

// Orders explanations best-first: AUC descending, then length ascending,
// then canonical key ascending.
inline bool better_explanation(double auc_a, const Formula& a, double auc_b, const Formula& b) {
    if (auc_a != auc_b) return auc_a > auc_b;
    if (a.length() != b.length()) return a.length() < b.length();
    return canonical_key(a) < canonical_key(b);
}

struct BeamEntry {
    Formula formula;
    BitVector bits;  // in ascending-activation order of the explained neuron
    double auc = 0.5;
    double fraction = 0.0;
};

struct IterationStats {
    std::size_t length = 0;
    std::size_t candidates = 0;  // formulas generated
    std::size_t feasible = 0;    // inside the fraction band
    bool truncated = false;      // more distinct feasible formulas than B
    double seconds = 0.0;        // candidate generation and scoring
};

struct SearchResult {
    std::size_t neuron_id = 0;
    std::vector<Explanation> per_length;  // index i holds the best formula of length i + 1
    std::size_t best = 0;                 // index into per_length of the overall best
    std::vector<IterationStats> iterations;

    const Explanation& best_explanation() const { return per_length.at(best); }
};

namespace search_detail {

struct Primitive {
    std::size_t concept_index;
    bool negated;
};

struct Candidate {
    std::uint32_t entry;      // beam index, or UINT32_MAX for a bare primitive
    std::uint32_t primitive;  // index into primitives
    BinaryOp op;
    double auc;
    double fraction;
    std::uint64_t hash;
};

inline std::uint64_t mix_words(std::uint64_t h, std::uint64_t w) {
    h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h * 0xff51afd7ed558ccdull;
}

// Concept columns of one neuron, permuted into its activation order.
class NeuronContext {
public:
    NeuronContext(std::span<const double> f, const ConceptMatrix& concepts, std::span<const std::size_t> usable)
        : ranked_(f), n_(f.size()), n_words_(BitVector::word_count(f.size())) {
        columns_.reserve(usable.size());
        for (std::size_t j : usable) columns_.push_back(ranked_.permute(concepts.column(j)));
        tail_ = n_ % 64 == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (n_ % 64)) - 1;
    }

    const RankedColumn& ranked() const { return ranked_; }
    std::size_t n() const { return n_; }
    std::size_t n_words() const { return n_words_; }

    // Word i of primitive p: column p/2, complemented when p is odd.
    std::uint64_t primitive_word(std::size_t p, std::size_t i) const {
        const std::uint64_t w = columns_[p / 2].words()[i];
        if ((p & 1u) == 0) return w;
        return ~w & (i + 1 == n_words_ ? tail_ : ~std::uint64_t{0});
    }

    BitVector materialize(const BitVector* entry, std::size_t p, BinaryOp op) const {
        BitVector out(n_);
        auto words = out.words_mut();
        for (std::size_t i = 0; i < n_words_; ++i) words[i] = combined_word(entry, p, op, i);
        return out;
    }

    std::uint64_t combined_word(const BitVector* entry, std::size_t p, BinaryOp op, std::size_t i) const {
        const std::uint64_t pw = primitive_word(p, i);
        if (entry == nullptr) return pw;
        const std::uint64_t ew = entry->words()[i];
        return op == BinaryOp::And ? (ew & pw) : (ew | pw);
    }

private:
    RankedColumn ranked_;
    std::size_t n_;
    std::size_t n_words_;
    std::uint64_t tail_ = 0;
    std::vector<BitVector> columns_;
};

} // namespace search_detail

// Indices of concepts that are neither all-negative nor all-positive.
inline std::vector<std::size_t> usable_concepts(const ConceptMatrix& concepts) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < concepts.n_concepts(); ++j) {
        const std::size_t c = concepts.column(j).count();
        if (c > 0 && c < concepts.n_samples()) out.push_back(j);
    }
    return out;
}

// Beam search over compositional concepts. The beam starts from the top-B
// admissible primitives (each concept and its negation); every iteration
// joins each beam formula with every primitive by AND and by OR, keeps the
// formulas whose concept fraction lies in [alpha, beta] and retains the B
// best distinct ones (formulas with identical evaluations count once, the
// smallest canonical key representing them).
inline SearchResult beam_search_explain(std::span<const double> f, const ConceptMatrix& concepts,
                                        const SearchParams& params, std::size_t threads = 1,
                                        std::size_t neuron_id = 0,
                                        std::optional<std::vector<std::size_t>> usable = std::nullopt) {
    using namespace search_detail;
    using Clock = std::chrono::steady_clock;
    params.validate();
    if (f.size() != concepts.n_samples())
        throw Error(ErrorKind::SampleCountMismatch, "activation length " + std::to_string(f.size()) +
                                                        " != concept sample count " +
                                                        std::to_string(concepts.n_samples()));
    if (!usable) usable = usable_concepts(concepts);

    std::vector<Primitive> primitives;
    for (std::size_t j : *usable) {
        primitives.push_back({j, false});
        primitives.push_back({j, true});
    }
    const NeuronContext ctx(f, concepts, *usable);
    const std::size_t n = ctx.n();

    auto primitive_formula = [&](std::size_t p) {
        return Formula::leaf(primitives[p].concept_index, primitives[p].negated);
    };

    std::vector<BeamEntry> beam;
    SearchResult result;
    result.neuron_id = neuron_id;

    for (std::size_t length = 1; length <= params.length; ++length) {
        const auto t0 = Clock::now();
        const bool seed = length == 1;
        const std::size_t per_entry = seed ? primitives.size() : primitives.size() * 2;
        const std::size_t n_entries = seed ? 1 : beam.size();
        const std::size_t total = n_entries * per_entry;

        // Chunked scoring; per-chunk outputs are concatenated in chunk order.
        const std::size_t chunk = 4096;
        const std::size_t n_chunks = (total + chunk - 1) / chunk;
        std::vector<std::vector<Candidate>> parts(n_chunks);
        parallel_for(n_chunks, threads, [&](std::size_t c) {
            auto& out = parts[c];
            for (std::size_t idx = c * chunk; idx < std::min(total, (c + 1) * chunk); ++idx) {
                const std::size_t e = idx / per_entry;
                const std::size_t rem = idx % per_entry;
                const std::size_t p = seed ? rem : rem / 2;
                const BinaryOp op = (seed || rem % 2 == 0) ? BinaryOp::And : BinaryOp::Or;
                const BitVector* entry = seed ? nullptr : &beam[e].bits;
                auto word = [&](std::size_t i) { return ctx.combined_word(entry, p, op, i); };
                auto stats = ctx.ranked().stats_if(word, [&](std::int64_t n_pos) { return params.admits(n_pos, n); });
                if (!stats) continue;
                std::uint64_t h = 0;
                for (std::size_t i = 0; i < ctx.n_words(); ++i) h = mix_words(h, word(i));
                out.push_back({seed ? UINT32_MAX : static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(p), op,
                               stats->auc(params.tie_mode),
                               static_cast<double>(stats->n_pos) / static_cast<double>(n), h});
            }
        });
        std::vector<Candidate> cands;
        for (auto& part : parts) cands.insert(cands.end(), part.begin(), part.end());

        IterationStats it;
        it.length = length;
        it.candidates = total;
        it.feasible = cands.size();

        if (cands.empty()) {
            if (seed) throw Error(ErrorKind::NoFeasibleConcept, "no primitive concept satisfies the fraction constraint");
            it.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            result.iterations.push_back(it);
            break;
        }

        // Candidate order within equal AUC is refined by canonical key below;
        // the generation index keeps the order total and thread-independent.
        std::vector<std::size_t> order(cands.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (cands[a].auc != cands[b].auc) return cands[a].auc > cands[b].auc;
            return a < b;
        });

        auto formula_of = [&](const Candidate& c) {
            if (c.entry == UINT32_MAX) return primitive_formula(c.primitive);
            return Formula::combine(c.op, beam[c.entry].formula, primitive_formula(c.primitive));
        };
        auto bits_of = [&](const Candidate& c) {
            return ctx.materialize(c.entry == UINT32_MAX ? nullptr : &beam[c.entry].bits, c.primitive, c.op);
        };

        std::vector<BeamEntry> next;
        std::vector<std::uint64_t> next_hashes;
        std::size_t pos = 0;
        while (pos < order.size() && next.size() < params.beam) {
            std::size_t run_end = pos + 1;
            while (run_end < order.size() && cands[order[run_end]].auc == cands[order[pos]].auc) ++run_end;
            std::vector<std::pair<std::string, std::size_t>> run;
            run.reserve(run_end - pos);
            for (std::size_t k = pos; k < run_end; ++k) run.emplace_back(canonical_key(formula_of(cands[order[k]])), order[k]);
            std::sort(run.begin(), run.end());
            for (const auto& [key, ci] : run) {
                if (next.size() == params.beam) break;
                const Candidate& c = cands[ci];
                BitVector bits = bits_of(c);
                bool duplicate = false;
                for (std::size_t s = 0; s < next.size() && !duplicate; ++s)
                    duplicate = next_hashes[s] == c.hash && next[s].bits == bits;
                if (duplicate) continue;
                next.push_back({formula_of(c), std::move(bits), c.auc, c.fraction});
                next_hashes.push_back(c.hash);
            }
            pos = run_end;
        }
        for (std::size_t k = 0; k < cands.size() && !it.truncated; ++k)
            it.truncated = std::find(next_hashes.begin(), next_hashes.end(), cands[k].hash) == next_hashes.end();

        beam = std::move(next);
        it.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        result.iterations.push_back(it);

        const BeamEntry& top = beam.front();
        const RankStats stats = ctx.ranked().stats(top.bits);
        Explanation ex;
        ex.neuron_id = neuron_id;
        ex.formula = top.formula;
        ex.auc = top.auc;
        ex.fraction = top.fraction;
        ex.p_two_sided = mann_whitney_p(stats, ctx.ranked()).p_two_sided;
        ex.params = params;
        result.per_length.push_back(std::move(ex));
    }

    for (std::size_t i = 1; i < result.per_length.size(); ++i) {
        const auto& cand = result.per_length[i];
        const auto& cur = result.per_length[result.best];
        if (better_explanation(cand.auc, cand.formula, cur.auc, cur.formula)) result.best = i;
    }
    return result;
}

inline constexpr std::size_t kExhaustiveMaxConcepts = 8;
inline constexpr std::size_t kExhaustiveMaxLength = 3;

// Reference optimum for small instances. Enumerates, level by level, every
// formula the beam expansion can reach (a formula of length l joined with a
// primitive by AND or OR, each intermediate inside the fraction band), keeps
// one representative per distinct evaluation, and returns the best formula
// of any length <= L under the beam's ordering.
inline Explanation exhaustive_search(std::span<const double> f, const ConceptMatrix& concepts,
                                     const SearchParams& params, std::size_t neuron_id = 0) {
    params.validate();
    if (concepts.n_concepts() > kExhaustiveMaxConcepts || params.length > kExhaustiveMaxLength)
        throw Error(ErrorKind::InstanceTooLarge, "exhaustive search supports d <= 8 and L <= 3");
    if (f.size() != concepts.n_samples())
        throw Error(ErrorKind::SampleCountMismatch, "activation and concept sample counts differ");
    const std::size_t n = f.size();

    std::vector<Formula> primitives;
    for (std::size_t j = 0; j < concepts.n_concepts(); ++j) {
        const std::size_t c = concepts.column(j).count();
        if (c == 0 || c == n) continue;
        primitives.push_back(Formula::leaf(j, false));
        primitives.push_back(Formula::leaf(j, true));
    }

    struct Rep {
        Formula formula;
        BitVector bits;
        std::string key;
    };
    using Level = std::map<std::vector<std::uint64_t>, Rep>;
    auto admit = [&](Level& level, const Formula& formula) {
        BitVector bits = eval_formula(formula, concepts);
        if (!params.admits(static_cast<std::int64_t>(bits.count()), n)) return;
        std::vector<std::uint64_t> id(bits.words().begin(), bits.words().end());
        std::string key = canonical_key(formula);
        auto it = level.find(id);
        if (it == level.end())
            level.emplace(std::move(id), Rep{formula, std::move(bits), std::move(key)});
        else if (key < it->second.key)
            it->second = Rep{formula, std::move(bits), std::move(key)};
    };

    std::optional<Explanation> best;
    Level level;
    for (const auto& p : primitives) admit(level, p);
    if (level.empty()) throw Error(ErrorKind::NoFeasibleConcept, "no primitive concept satisfies the fraction constraint");

    for (std::size_t length = 1; length <= params.length && !level.empty(); ++length) {
        for (const auto& [id, rep] : level) {
            const double a = auc(f, rep.bits, params.tie_mode).auc;
            if (!best || better_explanation(a, rep.formula, best->auc, best->formula)) {
                best = Explanation{neuron_id, rep.formula, a, concept_fraction(rep.bits),
                                   mann_whitney_p(f, rep.bits).p_two_sided, params};
            }
        }
        if (length == params.length) break;
        Level next;
        for (const auto& [id, rep] : level)
            for (const auto& p : primitives) {
                admit(next, Formula::conj(rep.formula, p));
                admit(next, Formula::disj(rep.formula, p));
            }
        level = std::move(next);
    }
    return *best;
}

// Explains each selected neuron (all neurons when `neurons` is absent).
// Output order follows the selection order; results do not depend
// on `threads`.
inline std::vector<SearchResult> explain_layer(const ActivationMatrix& acts, const ConceptMatrix& concepts,
                                               const SearchParams& params,
                                               const std::optional<std::vector<std::size_t>>& neurons = std::nullopt,
                                               std::size_t threads = 1) {
    params.validate();
    if (acts.n_samples() != concepts.n_samples())
        throw Error(ErrorKind::SampleCountMismatch, "activations have " + std::to_string(acts.n_samples()) +
                                                        " samples, concepts " +
                                                        std::to_string(concepts.n_samples()));
    std::vector<std::size_t> selected;
    if (neurons) {
        selected = *neurons;
    } else {
        for (std::size_t i = 0; i < acts.n_neurons(); ++i) selected.push_back(i);
    }
    for (std::size_t i : selected)
        if (i >= acts.n_neurons())
            throw Error(ErrorKind::InvalidArgument, "neuron " + std::to_string(i) + " out of range");

    const auto usable = usable_concepts(concepts);
    std::vector<SearchResult> out(selected.size());
    // Few neurons: parallelise inside each search instead of across neurons.
    const bool across = selected.size() >= threads;
    parallel_for(selected.size(), across ? threads : 1, [&](std::size_t k) {
        out[k] = beam_search_explain(acts.column(selected[k]), concepts, params, across ? 1 : threads, selected[k],
                                     usable);
    });
    return out;
}

} // namespace invert
