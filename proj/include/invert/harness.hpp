#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "invert/datamodel.hpp"
#include "invert/error.hpp"
#include "invert/formula.hpp"
#include "invert/fuzzy.hpp"
#include "invert/random.hpp"
#include "invert/search.hpp"
#include "invert/similarity.hpp"

namespace invert {

// ---------------------------------------------------------------------------
// Synthetic data with planted ground truth
// ---------------------------------------------------------------------------

struct PlantedNeuron {
    std::size_t neuron = 0;
    Formula formula = Formula::leaf(0);
    double noise_sigma = 0.0;
};

struct SyntheticSpec {
    std::size_t n_samples = 1000;
    std::size_t n_concepts = 10;
    std::size_t n_neurons = 1;
    std::vector<PlantedNeuron> planted;
    double concept_density = 0.3;
    std::uint64_t seed = 0;
    double unplanted_sigma = 1.0;  // unplanted neurons are N(0, unplanted_sigma^2)
};

struct SyntheticData {
    ActivationMatrix activations;
    ConceptMatrix concepts;
    std::vector<PlantedNeuron> truth;
};

inline std::vector<std::string> synthetic_concept_names(std::size_t d) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < d; ++j) names.push_back("c" + std::to_string(j));
    return names;
}

// Concept j is i.i.d. Bernoulli(density) from stream (concept_column, j).
inline ConceptMatrix synthetic_concepts(std::size_t n_samples, std::size_t n_concepts, double density,
                                        std::uint64_t seed) {
    if (!(density > 0.0 && density < 1.0)) throw Error(ErrorKind::InvalidArgument, "concept density must be in (0, 1)");
    std::vector<BitVector> cols;
    cols.reserve(n_concepts);
    for (std::size_t j = 0; j < n_concepts; ++j) {
        Rng rng(seed, stream::concept_column, j);
        BitVector c(n_samples);
        for (std::size_t s = 0; s < n_samples; ++s)
            if (rng.bernoulli(density)) c.set(s);
        cols.push_back(std::move(c));
    }
    return ConceptMatrix(n_samples, std::move(cols), synthetic_concept_names(n_concepts));
}

// Planted neuron i = indicator of its formula + N(0, sigma^2) noise drawn
// from stream (neuron_column, i); other neurons are pure noise.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    ConceptMatrix concepts = synthetic_concepts(spec.n_samples, spec.n_concepts, spec.concept_density, spec.seed);
    std::map<std::size_t, const PlantedNeuron*> by_neuron;
    for (const auto& p : spec.planted) {
        if (p.neuron >= spec.n_neurons) throw Error(ErrorKind::InvalidArgument, "planted neuron out of range");
        if (p.formula.max_index() >= spec.n_concepts)
            throw Error(ErrorKind::InvalidArgument, "planted formula references an unknown concept");
        if (!(p.noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise sigma must be >= 0");
        if (!by_neuron.emplace(p.neuron, &p).second)
            throw Error(ErrorKind::InvalidArgument, "neuron planted twice");
    }
    std::vector<std::vector<double>> cols(spec.n_neurons, std::vector<double>(spec.n_samples));
    for (std::size_t i = 0; i < spec.n_neurons; ++i) {
        Rng rng(spec.seed, stream::neuron_column, i);
        auto it = by_neuron.find(i);
        if (it == by_neuron.end()) {
            for (double& v : cols[i]) v = spec.unplanted_sigma * rng.normal();
            continue;
        }
        const BitVector indicator = eval_formula(it->second->formula, concepts);
        const double sigma = it->second->noise_sigma;
        for (std::size_t s = 0; s < spec.n_samples; ++s) {
            cols[i][s] = indicator.test(s) ? 1.0 : 0.0;
            if (sigma > 0.0) cols[i][s] += sigma * rng.normal();
        }
    }
    return {ActivationMatrix::from_columns(cols), std::move(concepts), spec.planted};
}

// A random left-deep formula of `length` distinct concepts with random
// operators and negations such that it and every left-deep prefix have a
// fraction on `concepts` inside [alpha, beta], so beam search can reach it.
// Draws from stream (planting, index).
inline Formula random_feasible_formula(const ConceptMatrix& concepts, std::size_t length, double alpha, double beta,
                                       std::uint64_t seed, std::uint64_t index, std::size_t max_tries = 10000) {
    if (length < 1 || length > concepts.n_concepts())
        throw Error(ErrorKind::InvalidArgument, "formula length must be in [1, n_concepts]");
    Rng rng(seed, stream::planting, index);
    const std::size_t n = concepts.n_samples();
    auto in_band = [&](const Formula& f) {
        const std::size_t pos = eval_formula(f, concepts).count();
        const double t = static_cast<double>(pos) / static_cast<double>(n);
        return pos > 0 && pos < n && t >= alpha && t <= beta;
    };
    for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
        const auto picks = rng.sample_without_replacement(concepts.n_concepts(), length);
        Formula f = Formula::leaf(picks[0], rng.bernoulli(0.5));
        bool reachable = in_band(f);
        for (std::size_t k = 1; k < length; ++k) {
            const BinaryOp op = rng.bernoulli(0.5) ? BinaryOp::And : BinaryOp::Or;
            f = Formula::combine(op, f, Formula::leaf(picks[k], rng.bernoulli(0.5)));
            reachable = reachable && in_band(f);
        }
        if (reachable) return f;
    }
    throw Error(ErrorKind::NoFeasibleConcept, "could not draw a formula inside the fraction band");
}

struct PlantedConfig {
    std::size_t n_samples = 2000;
    std::size_t n_concepts = 20;
    std::size_t n_neurons = 1;
    std::size_t formula_length = 2;
    double density = 0.3;
    double noise_sigma = 0.1;
    double alpha = 0.0;
    double beta = 0.5;
    std::uint64_t seed = 0;
};

// Every neuron planted with its own random feasible formula.
inline SyntheticSpec planted_spec(const PlantedConfig& cfg) {
    SyntheticSpec spec;
    spec.n_samples = cfg.n_samples;
    spec.n_concepts = cfg.n_concepts;
    spec.n_neurons = cfg.n_neurons;
    spec.concept_density = cfg.density;
    spec.seed = cfg.seed;
    const ConceptMatrix concepts = synthetic_concepts(cfg.n_samples, cfg.n_concepts, cfg.density, cfg.seed);
    for (std::size_t i = 0; i < cfg.n_neurons; ++i)
        spec.planted.push_back(
            {i, random_feasible_formula(concepts, cfg.formula_length, cfg.alpha, cfg.beta, cfg.seed, i), cfg.noise_sigma});
    return spec;
}

// ---------------------------------------------------------------------------
// Explanation accuracy
// ---------------------------------------------------------------------------

// Share of neurons in `truth` (neuron -> concept index) whose length-1
// explanation is exactly that concept, un-negated.
inline double evaluate_accuracy(std::span<const Explanation> length_one,
                                const std::map<std::size_t, std::size_t>& truth) {
    if (truth.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& [neuron, concept_idx] : truth) {
        auto it = std::find_if(length_one.begin(), length_one.end(),
                               [&](const Explanation& e) { return e.neuron_id == neuron; });
        if (it == length_one.end())
            throw Error(ErrorKind::MissingExplanation, "no explanation for neuron " + std::to_string(neuron));
        if (it->formula.is_leaf() && !it->formula.negated() && it->formula.index() == concept_idx) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double evaluate_accuracy(std::span<const SearchResult> results, const std::map<std::size_t, std::size_t>& truth) {
    std::vector<Explanation> length_one;
    for (const auto& r : results)
        if (!r.per_length.empty()) length_one.push_back(r.per_length.front());
    return evaluate_accuracy(length_one, truth);
}

// ---------------------------------------------------------------------------
// Simplicity / precision sweep over (alpha, L)
// ---------------------------------------------------------------------------

struct SweepCell {
    double alpha = 0.0;
    std::size_t length = 1;
    std::vector<std::size_t> neurons;
    std::vector<Explanation> explanations;  // best over lengths <= L, per neuron
    double mean_auc = 0.0;
    std::vector<double> aucs;
    std::vector<double> fractions;
};

struct SweepResult {
    std::vector<SweepCell> cells;  // alphas outer, lengths inner, as requested
};

// For each alpha one search to max(L) is run; the beam up to length L does
// not depend on how far the search continues, so each (alpha, L) cell reads
// the best explanation among lengths 1..L from that run.
inline SweepResult sweep(const ActivationMatrix& acts, const ConceptMatrix& concepts, std::span<const double> alphas,
                         std::span<const std::size_t> lengths, std::size_t beam, double beta = 0.5,
                         TieMode tie_mode = TieMode::midrank,
                         const std::optional<std::vector<std::size_t>>& neurons = std::nullopt, std::size_t threads = 1) {
    if (alphas.empty() || lengths.empty()) throw Error(ErrorKind::InvalidArgument, "sweep needs alphas and lengths");
    const std::size_t max_len = *std::max_element(lengths.begin(), lengths.end());
    SweepResult out;
    for (double alpha : alphas) {
        SearchParams p;
        p.alpha = alpha;
        p.beta = beta;
        p.beam = beam;
        p.length = max_len;
        p.tie_mode = tie_mode;
        const auto results = explain_layer(acts, concepts, p, neurons, threads);
        for (std::size_t len : lengths) {
            if (len < 1) throw Error(ErrorKind::InvalidArgument, "formula length must be >= 1");
            SweepCell cell;
            cell.alpha = alpha;
            cell.length = len;
            for (const auto& r : results) {
                const std::size_t upto = std::min(len, r.per_length.size());
                std::size_t best = 0;
                for (std::size_t i = 1; i < upto; ++i)
                    if (better_explanation(r.per_length[i].auc, r.per_length[i].formula, r.per_length[best].auc,
                                           r.per_length[best].formula))
                        best = i;
                Explanation ex = r.per_length[best];
                ex.params.length = len;
                cell.neurons.push_back(r.neuron_id);
                cell.aucs.push_back(ex.auc);
                cell.fractions.push_back(ex.fraction);
                cell.explanations.push_back(std::move(ex));
            }
            cell.mean_auc = cell.aucs.empty() ? 0.0
                                              : std::accumulate(cell.aucs.begin(), cell.aucs.end(), 0.0) /
                                                    static_cast<double>(cell.aucs.size());
            out.cells.push_back(std::move(cell));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fuzzy norm comparison
// ---------------------------------------------------------------------------

enum class ComposeMode { or_chain, and_not_chain };
enum class Normalization { sigmoid, none };

inline const char* to_string(ComposeMode m) { return m == ComposeMode::or_chain ? "or" : "and_not"; }

struct NormComparisonConfig {
    std::size_t n_trials = 200;
    std::vector<std::size_t> lengths = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<ComposeMode> modes = {ComposeMode::or_chain, ComposeMode::and_not_chain};
    std::vector<NormFamily> families = {NormFamily::godel(), NormFamily::product(), NormFamily::lukasiewicz(),
                                        NormFamily::yager(2.0)};
    std::size_t n_samples = 2000;
    std::size_t n_concepts = 20;
    double density = 0.3;
    double noise_sigma = 0.1;
    // sigmoid: z-score against an independent reference draw, then sigmoid.
    // none: raw indicator-plus-noise values, which must already lie in [0, 1].
    Normalization normalization = Normalization::sigmoid;
    std::uint64_t seed = 0;
};

struct NormTrial {
    ComposeMode mode;
    std::size_t length;
    std::size_t trial;
    Formula formula;
    std::vector<double> aucs;  // per family, config order
};

struct NormComparisonRow {
    ComposeMode mode;
    std::size_t length;
    std::string family;
    double mean_auc;
    std::size_t n_trials;
};

struct NormComparison {
    std::vector<NormComparisonRow> rows;
    std::vector<NormTrial> trials;

    double mean_auc(ComposeMode mode, std::size_t length, const std::string& family) const {
        for (const auto& r : rows)
            if (r.mode == mode && r.length == length && r.family == family) return r.mean_auc;
        throw Error(ErrorKind::InvalidArgument, "no such comparison row");
    }
};

// Neuron j of the comparison data is concept j's indicator plus noise.
inline SyntheticSpec indicator_neurons_spec(std::size_t n_samples, std::size_t n_concepts, double density,
                                            double noise_sigma, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_samples = n_samples;
    spec.n_concepts = n_concepts;
    spec.n_neurons = n_concepts;
    spec.concept_density = density;
    spec.seed = seed;
    for (std::size_t j = 0; j < n_concepts; ++j) spec.planted.push_back({j, Formula::leaf(j), noise_sigma});
    return spec;
}

// Builds random left-deep compositions of `length` distinct concepts
// (c1 OR c2 OR ..., or c1 AND NOT c2 AND NOT c3 ...), composes the matching
// neurons under each family and scores the result against the composition.
inline NormComparison compare_norms(const NormComparisonConfig& cfg) {
    const SyntheticData data = generate_synthetic(
        indicator_neurons_spec(cfg.n_samples, cfg.n_concepts, cfg.density, cfg.noise_sigma, cfg.seed));
    ActivationMatrix inputs = data.activations;
    if (cfg.normalization == Normalization::sigmoid) {
        const SyntheticData reference = generate_synthetic(indicator_neurons_spec(
            cfg.n_samples, cfg.n_concepts, cfg.density, cfg.noise_sigma, stream_seed(cfg.seed, stream::reference_set, 0)));
        inputs = normalize(data.activations, compute_norm_stats(reference.activations));
    }

    NormComparison out;
    for (ComposeMode mode : cfg.modes)
        for (std::size_t len : cfg.lengths) {
            if (len < 1 || len > cfg.n_concepts)
                throw Error(ErrorKind::InvalidArgument, "formula length must be in [1, n_concepts]");
            Rng rng(cfg.seed, stream::trials, len * 2 + (mode == ComposeMode::or_chain ? 0 : 1));
            std::vector<double> sums(cfg.families.size(), 0.0);
            for (std::size_t t = 0; t < cfg.n_trials; ++t) {
                Formula f = Formula::leaf(0);
                BitVector target;
                for (std::size_t attempt = 0;; ++attempt) {
                    if (attempt == 1000)
                        throw Error(ErrorKind::DegenerateConcept, "cannot draw a non-degenerate composition");
                    const auto picks = rng.sample_without_replacement(cfg.n_concepts, len);
                    f = Formula::leaf(picks[0]);
                    for (std::size_t k = 1; k < len; ++k)
                        f = mode == ComposeMode::or_chain ? Formula::disj(f, Formula::leaf(picks[k]))
                                                          : Formula::conj(f, Formula::leaf(picks[k], true));
                    target = eval_formula(f, data.concepts);
                    const std::size_t c = target.count();
                    if (c > 0 && c < cfg.n_samples) break;
                }
                NormTrial trial{mode, len, t, f, {}};
                for (std::size_t k = 0; k < cfg.families.size(); ++k) {
                    const double a = evaluate_circuit_auc({f, cfg.families[k]}, inputs, target).auc;
                    trial.aucs.push_back(a);
                    sums[k] += a;
                }
                out.trials.push_back(std::move(trial));
            }
            for (std::size_t k = 0; k < cfg.families.size(); ++k)
                out.rows.push_back({mode, len, cfg.families[k].name(), sums[k] / static_cast<double>(cfg.n_trials),
                                    cfg.n_trials});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Handcrafted two-neuron circuit
// ---------------------------------------------------------------------------

struct CircuitTrial {
    double auc_a = 0.5;        // neuron for concept a vs target a AND b
    double auc_b = 0.5;        // neuron for concept b vs target a AND b
    double auc_circuit = 0.5;  // Goedel min of both normalized neurons
};

// Two concepts a, b and one indicator-plus-noise neuron each. For each
// concept the neuron with the highest AUC is selected, the pair is composed
// with the Goedel AND and scored against a AND b.
inline CircuitTrial circuit_improvement_trial(std::uint64_t seed, std::size_t n_samples = 2000, double density = 0.3,
                                              double noise_sigma = 0.3) {
    const SyntheticData data = generate_synthetic(indicator_neurons_spec(n_samples, 2, density, noise_sigma, seed));
    const SyntheticData reference = generate_synthetic(
        indicator_neurons_spec(n_samples, 2, density, noise_sigma, stream_seed(seed, stream::reference_set, 0)));
    const ActivationMatrix normalized = normalize(data.activations, compute_norm_stats(reference.activations));
    const BitVector target = data.concepts.column(0) & data.concepts.column(1);
    const std::size_t na = select_top_neurons(data.activations, data.concepts, 0, 1).front().neuron;
    const std::size_t nb = select_top_neurons(data.activations, data.concepts, 1, 1).front().neuron;
    CircuitTrial t;
    t.auc_a = auc(data.activations.column(na), target).auc;
    t.auc_b = auc(data.activations.column(nb), target).auc;
    t.auc_circuit =
        evaluate_circuit_auc({Formula::conj(Formula::leaf(na), Formula::leaf(nb)), NormFamily::godel()}, normalized,
                             target)
            .auc;
    return t;
}

} // namespace invert
