#include <map>
#include <random>

#include <gtest/gtest.h>

#include "invert/harness.hpp"
#include "invert/io.hpp"
#include "test_util.hpp"

using namespace invert;

namespace {

Formula L(std::size_t i, bool neg = false) { return Formula::leaf(i, neg); }

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (auto b : bytes) h = (h ^ b) * 0x100000001b3ull;
    return h;
}

SyntheticSpec golden_spec() {
    SyntheticSpec s;
    s.n_samples = 64;
    s.n_concepts = 5;
    s.n_neurons = 3;
    s.concept_density = 0.3;
    s.seed = 7;
    s.planted = {{0, Formula::disj(L(0), L(1, true)), 0.1}, {2, L(3), 0.0}};
    return s;
}

SearchParams params(std::size_t length, std::size_t beam, double alpha = 0.0) {
    SearchParams p;
    p.length = length;
    p.beam = beam;
    p.alpha = alpha;
    return p;
}

} // namespace

TEST(Rng, EngineIsTheStandardMersenneTwister) {
    Rng r(5489);
    std::uint64_t x = 0;
    for (int i = 0; i < 10000; ++i) x = r.next();
    EXPECT_EQ(x, 9981545732273789042ull);
}

TEST(Rng, StreamsAreDistinctAndReproducible) {
    EXPECT_EQ(Rng(1, stream::concept_column, 0).next(), Rng(1, stream::concept_column, 0).next());
    EXPECT_NE(Rng(1, stream::concept_column, 0).next(), Rng(1, stream::concept_column, 1).next());
    EXPECT_NE(Rng(1, stream::concept_column, 0).next(), Rng(1, stream::neuron_column, 0).next());
    EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafull);
}

TEST(Rng, DrawsStayInRange) {
    Rng r(3);
    double sum = 0, sq = 0;
    for (int i = 0; i < 20000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(r.below(7), 7u);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / 20000, 0.0, 0.05);
    EXPECT_NEAR(sq / 20000, 1.0, 0.05);
    const auto s = r.sample_without_replacement(10, 10);
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 10u);
}

TEST(Synthetic, GoldenDigest) {
    const auto d = generate_synthetic(golden_spec());
    const std::uint64_t h = fnv1a(encode_concept_bits(d.concepts), fnv1a(encode_activations(d.activations)));
    EXPECT_EQ(h, 2046100746840465861ull);
}

TEST(Synthetic, SameSeedSameBytesDifferentSeedDifferentBytes) {
    const auto a = generate_synthetic(golden_spec());
    const auto b = generate_synthetic(golden_spec());
    EXPECT_EQ(encode_activations(a.activations), encode_activations(b.activations));
    EXPECT_EQ(encode_concept_bits(a.concepts), encode_concept_bits(b.concepts));
    auto other = golden_spec();
    other.seed = 8;
    EXPECT_NE(encode_activations(generate_synthetic(other).activations), encode_activations(a.activations));
}

TEST(Synthetic, NoiselessPlantedNeuronIsPerfect) {
    const auto d = generate_synthetic(golden_spec());
    EXPECT_EQ(auc(d.activations.column(2), d.concepts.column(3)).auc, 1.0);
    EXPECT_EQ(d.concepts.names()[4], "c4");
}

TEST(Synthetic, UnplantedNeuronIsNull) {
    SyntheticSpec s;
    s.n_samples = 10000;
    s.n_concepts = 6;
    s.n_neurons = 2;
    s.seed = 11;
    const auto d = generate_synthetic(s);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(auc(d.activations.column(n), d.concepts.column(j)).auc, 0.5, 0.03);
}

TEST(Synthetic, InvalidSpecs) {
    auto s = golden_spec();
    s.planted.push_back({9, L(0), 0.0});
    test_util::expect_error(ErrorKind::InvalidArgument, [&] { generate_synthetic(s); });
    s = golden_spec();
    s.planted.push_back({1, L(5), 0.0});
    test_util::expect_error(ErrorKind::InvalidArgument, [&] { generate_synthetic(s); });
    s = golden_spec();
    s.concept_density = 1.0;
    test_util::expect_error(ErrorKind::InvalidArgument, [&] { generate_synthetic(s); });
}

TEST(Synthetic, PlantedFormulasRespectFractionBand) {
    PlantedConfig cfg;
    cfg.n_samples = 500;
    cfg.n_concepts = 10;
    cfg.n_neurons = 20;
    cfg.alpha = 0.1;
    cfg.beta = 0.4;
    const auto spec = planted_spec(cfg);
    const auto d = generate_synthetic(spec);
    for (const auto& p : spec.planted) {
        EXPECT_EQ(p.formula.length(), 2u);
        const double t = concept_fraction(eval_formula(p.formula, d.concepts));
        EXPECT_GE(t, 0.1);
        EXPECT_LE(t, 0.4);
    }
}

TEST(Accuracy, AllNoneAndMissing) {
    std::vector<Explanation> ex(3);
    for (std::size_t i = 0; i < 3; ++i) {
        ex[i].neuron_id = i;
        ex[i].formula = L(i);
    }
    EXPECT_EQ(evaluate_accuracy(ex, {{0, 0}, {1, 1}, {2, 2}}), 1.0);
    EXPECT_EQ(evaluate_accuracy(ex, {{0, 1}, {1, 2}, {2, 0}}), 0.0);
    ex[1].formula = L(1, true);
    EXPECT_DOUBLE_EQ(evaluate_accuracy(ex, {{0, 0}, {1, 1}, {2, 2}}), 2.0 / 3.0);
    test_util::expect_error(ErrorKind::MissingExplanation, [&] { evaluate_accuracy(ex, {{3, 0}}); });
    std::vector<Explanation> reversed(ex.rbegin(), ex.rend());
    EXPECT_EQ(evaluate_accuracy(reversed, {{0, 0}, {1, 1}, {2, 2}}), evaluate_accuracy(ex, {{0, 0}, {1, 1}, {2, 2}}));
}

TEST(Accuracy, NoiselessPlantedConceptsRecovered) {
    SyntheticSpec s;
    s.n_samples = 800;
    s.n_concepts = 12;
    s.n_neurons = 12;
    s.seed = 5;
    std::map<std::size_t, std::size_t> truth;
    for (std::size_t i = 0; i < 12; ++i) {
        s.planted.push_back({i, L((i * 7) % 12), 0.0});
        truth[i] = (i * 7) % 12;
    }
    const auto d = generate_synthetic(s);
    const auto res = explain_layer(d.activations, d.concepts, params(1, 5, 0.0));
    EXPECT_EQ(evaluate_accuracy(res, truth), 1.0);
}

TEST(Sweep, SingleCellEqualsExplainLayer) {
    PlantedConfig cfg;
    cfg.n_samples = 300;
    cfg.n_concepts = 8;
    cfg.n_neurons = 4;
    cfg.seed = 3;
    const auto d = generate_synthetic(planted_spec(cfg));
    const std::vector<double> alphas{0.0};
    const std::vector<std::size_t> lengths{1};
    const auto sw = sweep(d.activations, d.concepts, alphas, lengths, 5);
    const auto direct = explain_layer(d.activations, d.concepts, params(1, 5));
    ASSERT_EQ(sw.cells.size(), 1u);
    ASSERT_EQ(sw.cells[0].explanations.size(), direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        EXPECT_EQ(sw.cells[0].explanations[i].formula, direct[i].best_explanation().formula);
        EXPECT_EQ(sw.cells[0].aucs[i], direct[i].best_explanation().auc);
    }
}

TEST(Sweep, GridCoverageConstraintAndOrderIndependence) {
    PlantedConfig cfg;
    cfg.n_samples = 300;
    cfg.n_concepts = 8;
    cfg.n_neurons = 3;
    cfg.seed = 4;
    const auto d = generate_synthetic(planted_spec(cfg));
    const std::vector<double> alphas{0.0, 0.2, 0.35}, rev_alphas{0.35, 0.2, 0.0};
    const std::vector<std::size_t> lengths{1, 3, 2}, rev_lengths{2, 3, 1};
    const auto a = sweep(d.activations, d.concepts, alphas, lengths, 4);
    const auto b = sweep(d.activations, d.concepts, rev_alphas, rev_lengths, 4);
    ASSERT_EQ(a.cells.size(), 9u);
    std::map<std::pair<double, std::size_t>, const SweepCell*> by_key;
    for (const auto& c : b.cells) by_key[{c.alpha, c.length}] = &c;
    for (const auto& c : a.cells) {
        const auto* other = by_key.at({c.alpha, c.length});
        EXPECT_EQ(c.aucs, other->aucs);
        EXPECT_EQ(c.fractions, other->fractions);
        EXPECT_EQ(c.mean_auc, other->mean_auc);
        for (const auto& e : c.explanations) {
            EXPECT_GE(e.fraction, c.alpha);
            EXPECT_LE(e.formula.length(), c.length);
        }
    }
}

TEST(Sweep, MatchesPerCellSearch) {
    PlantedConfig cfg;
    cfg.n_samples = 200;
    cfg.n_concepts = 6;
    cfg.n_neurons = 2;
    cfg.seed = 9;
    const auto d = generate_synthetic(planted_spec(cfg));
    const std::vector<double> alphas{0.1};
    const std::vector<std::size_t> lengths{2, 3};
    const auto sw = sweep(d.activations, d.concepts, alphas, lengths, 3);
    for (const auto& cell : sw.cells) {
        const auto direct = explain_layer(d.activations, d.concepts, params(cell.length, 3, 0.1));
        for (std::size_t i = 0; i < direct.size(); ++i)
            EXPECT_EQ(cell.explanations[i].formula, direct[i].best_explanation().formula);
    }
}

TEST(CompareNorms, LengthOneIdenticalAcrossFamilies) {
    NormComparisonConfig cfg;
    cfg.n_trials = 10;
    cfg.lengths = {1};
    cfg.n_samples = 400;
    const auto r = compare_norms(cfg);
    ASSERT_EQ(r.rows.size(), 2u * 4u);
    for (const auto& t : r.trials)
        for (double a : t.aucs) EXPECT_EQ(a, t.aucs.front());
}

TEST(CompareNorms, BooleanLimitIsPerfectForEveryFamily) {
    NormComparisonConfig cfg;
    cfg.n_trials = 10;
    cfg.lengths = {1, 2, 3, 5};
    cfg.n_samples = 400;
    cfg.noise_sigma = 0.0;
    cfg.normalization = Normalization::none;
    const auto r = compare_norms(cfg);
    for (const auto& row : r.rows) EXPECT_EQ(row.mean_auc, 1.0) << row.family << " " << row.length;
}

TEST(CompareNorms, DeterministicPerSeed) {
    NormComparisonConfig cfg;
    cfg.n_trials = 5;
    cfg.lengths = {2, 4};
    cfg.n_samples = 300;
    const auto a = compare_norms(cfg), b = compare_norms(cfg);
    ASSERT_EQ(a.trials.size(), b.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
        EXPECT_EQ(a.trials[i].formula, b.trials[i].formula);
        EXPECT_EQ(a.trials[i].aucs, b.trials[i].aucs);
    }
    for (const auto& t : a.trials) {
        if (t.mode == ComposeMode::and_not_chain && t.length > 1) {
            EXPECT_TRUE(t.formula.right().negated());
        }
        EXPECT_EQ(t.formula.length(), t.length);
    }
}

TEST(CircuitTrial, CompositionBeatsSingleNeurons) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto t = circuit_improvement_trial(seed);
        wins += t.auc_circuit > t.auc_a && t.auc_circuit > t.auc_b;
    }
    EXPECT_GE(wins, 9);
}

TEST(Synthetic, PlantedFormulasAreReachableByBeamSearch) {
    PlantedConfig cfg;
    cfg.n_neurons = 40;
    const auto spec = planted_spec(cfg);
    const auto concepts = synthetic_concepts(cfg.n_samples, cfg.n_concepts, cfg.density, cfg.seed);
    for (const auto& p : spec.planted) {
        // The left operand of a left-deep formula is the beam entry it grew from.
        const Formula prefix = p.formula.is_leaf() ? p.formula : p.formula.left();
        const double t = concept_fraction(eval_formula(prefix, concepts));
        EXPECT_GT(t, 0.0);
        EXPECT_LE(t, cfg.beta);
    }
}
