// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit when
// any criterion fails. Thresholds and tolerances are fixed below.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "invert/formula.hpp"
#include "invert/fuzzy.hpp"
#include "invert/harness.hpp"
#include "invert/io.hpp"
#include "invert/search.hpp"
#include "invert/similarity.hpp"

namespace fs = std::filesystem;
using namespace invert;

namespace {

// Pinned thresholds.
constexpr double kAucTolerance = 1e-12;
constexpr double kAucBudgetSeconds = 10.0;
constexpr double kExactPTolerance = 1e-12;
constexpr double kNormalRelTolerance = 0.10;
constexpr std::size_t kNormalMinGroup = 3;
constexpr double kNormalMinExactP = 0.05;
constexpr double kBeamBudgetSeconds = 60.0;
constexpr int kRecoveryNoisyMin = 90;
constexpr int kRecoveryNoiselessMin = 100;
constexpr int kCircuitMinWins = 95;
constexpr double kPerfBudgetSeconds = 60.0;
constexpr double kBeamScalingLow = 1.0;
constexpr double kBeamScalingHigh = 3.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!ok) ++failures;
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

BitVector random_bits(std::size_t n, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution b(p);
    BitVector v(n);
    for (std::size_t i = 0; i < n; ++i)
        if (b(rng)) v.set(i);
    return v;
}

// At least one positive and one negative.
BitVector random_mixed_bits(std::size_t n, double p, std::mt19937_64& rng) {
    for (;;) {
        BitVector v = random_bits(n, p, rng);
        if (v.count() > 0 && v.count() < n) return v;
    }
}

double binomial(unsigned n, unsigned k) {
    double r = 1;
    for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return std::round(r);
}

// Null distribution of U: counts of rank subsets for each U value.
std::vector<double> u_distribution(unsigned m, unsigned n) {
    std::vector<std::vector<std::vector<double>>> t(m + 1, std::vector<std::vector<double>>(n + 1));
    for (unsigned i = 0; i <= m; ++i)
        for (unsigned j = 0; j <= n; ++j) {
            t[i][j].assign(i * j + 1, 0.0);
            if (i == 0 || j == 0) {
                t[i][j][0] = 1.0;
                continue;
            }
            for (unsigned u = 0; u <= i * j; ++u) {
                if (u >= j && u - j <= (i - 1) * j) t[i][j][u] += t[i - 1][j][u - j];
                if (u <= i * (j - 1)) t[i][j][u] += t[i][j - 1][u];
            }
        }
    return t[m][n];
}

// Tie-free activations 1..n with positives placed at `mask`.
std::pair<std::vector<double>, BitVector> layout(unsigned n, std::uint32_t mask) {
    std::vector<double> f(n);
    BitVector c(n);
    for (unsigned i = 0; i < n; ++i) {
        f[i] = i + 1.0;
        if ((mask >> i) & 1u) c.set(i);
    }
    return {f, c};
}

struct SmallInstance {
    ConceptMatrix concepts;
    std::vector<double> f;
};

SmallInstance small_instance(std::mt19937_64& rng, std::size_t d, std::size_t n) {
    std::vector<BitVector> cols;
    std::vector<std::string> names;
    std::uniform_real_distribution<double> dens(0.15, 0.6);
    for (std::size_t j = 0; j < d; ++j) {
        cols.push_back(random_bits(n, dens(rng), rng));
        names.push_back("k" + std::to_string(j));
    }
    std::normal_distribution<double> g;
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = g(rng);
        if (cols[0].test(i)) f[i] += 1.0;
        if (d > 1 && cols[1].test(i)) f[i] += 0.7;
        if (rng() % 3 == 0) f[i] = std::round(f[i]);
    }
    return {ConceptMatrix(n, cols, names), f};
}

SearchParams make_params(std::size_t length, std::size_t beam, double alpha = 0.0, double beta = 0.5) {
    SearchParams p;
    p.length = length;
    p.beam = beam;
    p.alpha = alpha;
    p.beta = beta;
    return p;
}

void auc_oracle() {
    std::mt19937_64 rng(1001);
    const auto t0 = Clock::now();
    double worst = 0;
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 10 + rng() % 491;
        std::uniform_int_distribution<int> levels(0, static_cast<int>(n / 3));
        std::vector<double> f(n);
        for (auto& x : f) x = static_cast<double>(levels(rng));  // forced duplicates
        const BitVector c = random_mixed_bits(n, 0.05 + 0.9 * std::uniform_real_distribution<>()(rng), rng);
        for (TieMode mode : {TieMode::midrank, TieMode::strict}) {
            const double diff = std::abs(auc(f, c, mode).auc - auc_bruteforce(f, c, mode).auc);
            worst = std::max(worst, diff);
            bad += diff > kAucTolerance;
        }
    }
    const double secs = seconds_since(t0);
    report(bad == 0 && secs < kAucBudgetSeconds, "auc_oracle_equivalence",
           "1000 instances x 2 tie modes, max |diff| " + fmt(worst) + ", " + fmt(secs, 3) + " s (limits " +
               fmt(kAucTolerance) + ", " + fmt(kAucBudgetSeconds) + " s)");
}

void significance() {
    // Exact p against the combinatorial U distribution, every layout for n <= 12.
    int exact_bad = 0;
    long exact_cases = 0;
    for (unsigned n = 2; n <= 12; ++n)
        for (unsigned k = 1; k < n; ++k) {
            const auto dist = u_distribution(k, n - k);
            const double total = binomial(n, k);
            for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
                if (static_cast<unsigned>(std::popcount(mask)) != k) continue;
                const auto [f, c] = layout(n, mask);
                const auto r = mann_whitney_p(f, c);
                const auto u = static_cast<std::size_t>(std::lround(r.u_statistic));
                double ge = 0, le = 0;
                for (std::size_t v = 0; v < dist.size(); ++v) {
                    if (v >= u) ge += dist[v];
                    if (v <= u) le += dist[v];
                }
                const double p_greater = ge / total;
                const double p_two = std::min(1.0, 2.0 * std::min(ge, le) / total);
                exact_bad += r.method != PValueMethod::exact ||
                             std::abs(r.p_one_sided_greater - p_greater) > kExactPTolerance ||
                             std::abs(r.p_two_sided - p_two) > kExactPTolerance;
                ++exact_cases;
            }
        }
    const auto [f3, c3] = layout(6, 0b111000);
    const auto r3 = mann_whitney_p(f3, c3);
    const bool anchor = r3.p_one_sided_greater == 0.05;

    // Normal approximation against exact p, n = 16..20, over the domain where
    // both classes have >= 3 samples and the exact p is >= 0.05.
    double worst = 0, worst_all = 0;
    long normal_cases = 0;
    for (unsigned n = 16; n <= 20; ++n)
        for (unsigned k = kNormalMinGroup; k + kNormalMinGroup <= n; ++k) {
            // One layout per attainable U: positives at the top, shifted down one step at a time.
            std::uint32_t mask = ((1u << k) - 1u) << (n - k);
            for (unsigned u = k * (n - k);; --u) {
                const auto [f, c] = layout(n, mask);
                const auto exact = mann_whitney_p(f, c);
                const auto approx = mann_whitney_p(f, c, Alternative::two_sided, false);
                const double rel = std::abs(approx.p_two_sided - exact.p_two_sided) / exact.p_two_sided;
                worst_all = std::max(worst_all, rel);
                if (exact.p_two_sided >= kNormalMinExactP) {
                    worst = std::max(worst, rel);
                    ++normal_cases;
                }
                if (u == 0) break;
                // Move the lowest positive that has a negative directly below it one step down.
                for (unsigned i = 1; i < n; ++i)
                    if (((mask >> i) & 1u) && !((mask >> (i - 1)) & 1u)) {
                        mask ^= (1u << i) | (1u << (i - 1));
                        break;
                    }
            }
        }
    report(exact_bad == 0 && anchor && worst <= kNormalRelTolerance, "significance_correctness",
           std::to_string(exact_cases) + " exact layouts (n<=12) mismatches " + std::to_string(exact_bad) +
               "; 3v3 AUC=1 one-sided p " + fmt(r3.p_one_sided_greater, 17) + "; normal approx n=16..20 max rel err " +
               fmt(worst) + " over " + std::to_string(normal_cases) + " cases with min group >= " +
               std::to_string(kNormalMinGroup) + " and exact p >= " + fmt(kNormalMinExactP) + " (limit " +
               fmt(kNormalRelTolerance) + "; whole tail incl. tiny p: " + fmt(worst_all) + ")");
}

void beam_equals_exhaustive() {
    std::mt19937_64 rng(1003);
    const auto t0 = Clock::now();
    int compared = 0, mismatched = 0, truncated = 0, infeasible = 0;
    while (compared < 200) {
        const std::size_t d = 2 + rng() % 5;
        auto inst = small_instance(rng, d, 8 + rng() % 40);
        const auto p = make_params(1 + rng() % 3, 64, (rng() % 3) * 0.1);
        SearchResult r;
        try {
            r = beam_search_explain(inst.f, inst.concepts, p);
        } catch (const Error&) {
            ++infeasible;
            continue;
        }
        if (std::any_of(r.iterations.begin(), r.iterations.end(), [](const auto& it) { return it.truncated; })) {
            ++truncated;
            continue;
        }
        const auto ex = exhaustive_search(inst.f, inst.concepts, p);
        const auto& best = r.best_explanation();
        mismatched += best.auc != ex.auc || canonical_key(best.formula) != canonical_key(ex.formula);
        ++compared;
    }
    const double secs = seconds_since(t0);
    report(mismatched == 0 && secs < kBeamBudgetSeconds, "beam_equals_exhaustive",
           "200 instances (d<=6, L<=3, B=64), mismatches " + std::to_string(mismatched) + ", " + fmt(secs, 3) +
               " s; skipped " + std::to_string(truncated) + " with more feasible formulas than B and " +
               std::to_string(infeasible) + " without a feasible primitive");
}

int recovered(double noise) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        PlantedConfig cfg;
        cfg.noise_sigma = noise;
        cfg.seed = seed;
        const SyntheticData data = generate_synthetic(planted_spec(cfg));
        const auto r = beam_search_explain(data.activations.column(0), data.concepts, make_params(2, 5));
        hits += logically_equivalent(r.best_explanation().formula, data.truth.at(0).formula);
    }
    return hits;
}

void planted_recovery() {
    const int noisy = recovered(0.1), clean = recovered(0.0);
    report(noisy >= kRecoveryNoisyMin && clean >= kRecoveryNoiselessMin, "planted_formula_recovery",
           "N=2000 d=20 density 0.3 length-2 plants, L=2 B=5: sigma=0.1 " + std::to_string(noisy) +
               "/100 (need " + std::to_string(kRecoveryNoisyMin) + "), sigma=0 " + std::to_string(clean) +
               "/100 (need " + std::to_string(kRecoveryNoiselessMin) + ")");
}

void constraints_and_monotonicity() {
    std::mt19937_64 rng(1005);
    int checked = 0, violations = 0;
    for (int i = 0; i < 300; ++i) {
        auto inst = small_instance(rng, 3 + rng() % 20, 30 + rng() % 400);
        const double alpha = (rng() % 5) * 0.1;
        const double beta = std::min(0.5, alpha + 0.05 + (rng() % 5) * 0.1);
        const auto p = make_params(1 + rng() % 4, 1 + rng() % 8, alpha, beta);
        try {
            const auto r = beam_search_explain(inst.f, inst.concepts, p);
            for (const auto& e : r.per_length) {
                const BitVector bits = eval_formula(e.formula, inst.concepts);
                violations += e.fraction < alpha || e.fraction > beta || e.fraction != concept_fraction(bits) ||
                              e.auc != auc(inst.f, bits).auc;
                ++checked;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NoFeasibleConcept) throw;
        }
    }
    int series = 0, increases = 0;
    const std::vector<double> alphas{0.0, 0.1, 0.2, 0.3, 0.4};
    for (int i = 0; i < 100; ++i) {
        auto inst = small_instance(rng, 2 + rng() % 5, 20 + rng() % 60);
        const std::size_t length = 1 + rng() % 3;
        double prev = 2.0;
        for (double a : alphas) {
            try {
                const double v = exhaustive_search(inst.f, inst.concepts, make_params(length, 1, a)).auc;
                increases += v > prev;
                prev = v;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::NoFeasibleConcept) throw;
                break;
            }
        }
        ++series;
    }
    report(violations == 0 && increases == 0, "constraint_and_alpha_monotonicity",
           std::to_string(checked) + " explanations checked, band violations " + std::to_string(violations) + "; " +
               std::to_string(series) + " exhaustive alpha series (0..0.4), increases " + std::to_string(increases));
}

void fuzzy_ordering() {
    NormComparisonConfig cfg;
    cfg.n_trials = 200;
    cfg.lengths = {2, 3, 4, 5, 6, 7, 8, 9, 10};
    cfg.noise_sigma = 0.1;
    const auto result = compare_norms(cfg);
    int violations = 0;
    double min_margin = 1.0;
    std::string below;
    for (auto mode : cfg.modes)
        for (std::size_t len : cfg.lengths) {
            const double godel = result.mean_auc(mode, len, "godel");
            for (const auto& fam : cfg.families) {
                if (fam.kind == NormFamily::Kind::godel) continue;
                const double other = result.mean_auc(mode, len, fam.name());
                min_margin = std::min(min_margin, godel - other);
                if (godel < other) {
                    ++violations;
                    below += std::string(below.empty() ? "" : ", ") + to_string(mode) + " L=" + std::to_string(len) +
                             " godel " + fmt(godel, 9) + " < " + fam.name() + " " + fmt(other, 9);
                }
            }
        }

    NormComparisonConfig clean = cfg;
    clean.n_trials = 50;
    clean.noise_sigma = 0.0;
    clean.normalization = Normalization::none;
    const auto limit = compare_norms(clean);
    double min_clean = 1.0;
    for (const auto& r : limit.rows) min_clean = std::min(min_clean, r.mean_auc);

    std::string clean_sigmoid;
    {
        NormComparisonConfig s = clean;
        s.normalization = Normalization::sigmoid;
        double m = 1.0;
        for (const auto& r : compare_norms(s).rows) m = std::min(m, r.mean_auc);
        clean_sigmoid = fmt(m, 6);
    }
    report(violations == 0 && min_clean == 1.0, "fuzzy_norm_ordering",
           "sigma=0.1, lengths 2..10, 200 trials, both modes: godel below another family in " +
               std::to_string(violations) + " cells" + (below.empty() ? "" : " [" + below + "]") +
               ", smallest godel margin " + fmt(min_margin) +
               "; sigma=0 on {0,1} activations: min mean AUC " + fmt(min_clean, 17) +
               " (after sigmoid normalization: " + clean_sigmoid + ")");
}

void circuit_improvement() {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto t = circuit_improvement_trial(seed);
        wins += t.auc_circuit > t.auc_a && t.auc_circuit > t.auc_b;
    }
    report(wins >= kCircuitMinWins, "circuit_improvement",
           "godel AND of the top two neurons beats both on a AND b targets in " + std::to_string(wins) +
               "/100 seeds (need " + std::to_string(kCircuitMinWins) + ")");
}

void performance() {
    const std::size_t n = 50000, d = 1473;
    std::mt19937_64 rng(1008);
    std::vector<BitVector> cols;
    std::uniform_real_distribution<double> dens(0.005, 0.5);
    for (std::size_t j = 0; j < d; ++j) cols.push_back(random_mixed_bits(n, dens(rng), rng));
    const ConceptMatrix concepts(n, cols, synthetic_concept_names(d));
    std::normal_distribution<double> g;
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i)
        f[i] = g(rng) + ((cols[3].test(i) || cols[17].test(i)) && !cols[40].test(i) ? 1.5 : 0.0);

    auto timed = [&](std::size_t beam, double& total, double& expand) {
        const auto t0 = Clock::now();
        const auto r = beam_search_explain(f, concepts, make_params(3, beam), 1);
        total = seconds_since(t0);
        expand = 0;
        for (const auto& it : r.iterations)
            if (it.length >= 2) expand += it.seconds;
        return r;
    };
    double total5 = 0, expand5 = 0, total10 = 0, expand10 = 0;
    const auto r5 = timed(5, total5, expand5);
    timed(10, total10, expand10);
    const double ratio = expand10 / expand5;
    report(total5 < kPerfBudgetSeconds && ratio >= kBeamScalingLow && ratio <= kBeamScalingHigh, "performance_smoke",
           "N=50000 d=1473 L=3 B=5 single worker " + fmt(total5, 3) + " s (limit " + fmt(kPerfBudgetSeconds) +
               " s), best " + format_formula(r5.best_explanation().formula, concepts.names()) +
               "; expansion time B=10/B=5 ratio " + fmt(ratio, 3) + " (" + fmt(expand10, 3) + " s / " +
               fmt(expand5, 3) + " s, allowed [" + fmt(kBeamScalingLow) + ", " + fmt(kBeamScalingHigh) + "])");
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void cli_determinism(const std::string& cli, const fs::path& work) {
    fs::create_directories(work);
    SyntheticSpec spec;
    spec.n_samples = 3000;
    spec.n_concepts = 60;
    spec.n_neurons = 24;
    spec.seed = 1009;
    const auto names = synthetic_concept_names(spec.n_concepts);
    for (std::size_t i = 0; i < spec.n_neurons; i += 3)
        spec.planted.push_back({i, parse_formula("c" + std::to_string(i) + " OR c" + std::to_string(i + 1), names), 0.3});
    const SyntheticData data = generate_synthetic(spec);
    save_activations(work / "acts.invt", data.activations, Dtype::f64);
    save_concepts(work / "concepts.invc", work / "names.json", data.concepts);

    auto run = [&](std::size_t threads, const std::string& neurons) {
        const std::string tag = "t" + std::to_string(threads) + (neurons.empty() ? "" : "_one");
        const fs::path out = work / (tag + ".json");
        std::string cmd = "\"" + cli + "\" explain --activations \"" + (work / "acts.invt").string() +
                          "\" --concepts \"" + (work / "concepts.invc").string() + "\" --names \"" +
                          (work / "names.json").string() + "\" -L 3 -B 5 --threads " + std::to_string(threads) +
                          " --out \"" + out.string() + "\"" + (neurons.empty() ? "" : " --neurons " + neurons) +
                          " 2>/dev/null";
        const int rc = std::system(cmd.c_str());
        if (rc != 0) return std::make_pair(std::string("exit ") + std::to_string(rc), std::string());
        auto j = nlohmann::ordered_json::parse(read_all(out));
        j["manifest"].erase("wall_time_seconds");
        return std::make_pair(j.dump(2), read_all(fs::path(out).replace_extension(".csv")));
    };
    const auto a = run(1, ""), b = run(8, "");
    const auto c = run(1, "0"), e = run(8, "0");
    const bool ok = !a.second.empty() && a == b && !c.second.empty() && c == e;
    report(ok, "cli_determinism",
           std::string("explain --threads 1 vs 8, 24 neurons: ") + (a == b ? "identical" : "differ") +
               "; single neuron (parallel inside the search): " + (c == e ? "identical" : "differ") +
               " (JSON without wall time, CSV byte-for-byte)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"invert acceptance checks"};
    std::string cli;
    std::string work = (fs::temp_directory_path() / "invert_acceptance").string();
    app.add_option("--cli", cli, "Path of the invert executable")->required();
    app.add_option("--work", work, "Scratch directory");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<void()>>> checks{
        {"auc_oracle_equivalence", auc_oracle},
        {"significance_correctness", significance},
        {"beam_equals_exhaustive", beam_equals_exhaustive},
        {"planted_formula_recovery", planted_recovery},
        {"constraint_and_alpha_monotonicity", constraints_and_monotonicity},
        {"fuzzy_norm_ordering", fuzzy_ordering},
        {"circuit_improvement", circuit_improvement},
        {"performance_smoke", performance},
        {"cli_determinism", [&] { cli_determinism(cli, work); }},
    };
    for (const auto& [name, check] : checks) {
        try {
            check();
        } catch (const std::exception& e) {
            report(false, name, std::string("threw: ") + e.what());
        }
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
