#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "invert/bitvector.hpp"
#include "invert/datamodel.hpp"
#include "invert/error.hpp"
#include "invert/formula.hpp"
#include "invert/similarity.hpp"

namespace invert {

// Per-neuron location/scale of a reference activation set.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

// Population mean and standard deviation per neuron of `reference`.
inline NormStats compute_norm_stats(const ActivationMatrix& reference) {
    NormStats s;
    const auto n = static_cast<double>(reference.n_samples());
    for (std::size_t j = 0; j < reference.n_neurons(); ++j) {
        auto col = reference.column(j);
        double mean = 0.0;
        for (double x : col) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : col) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / n);
        if (!(sd > 0.0))
            throw Error(ErrorKind::ZeroStd, "neuron " + std::to_string(j) + " has zero variance", Error::npos, j);
        s.mean.push_back(mean);
        s.std.push_back(sd);
    }
    return s;
}

// sigmoid((x - mean) / std), per entry. Output lies in (0, 1) up to the
// double rounding of the logistic function.
inline ActivationMatrix normalize(const ActivationMatrix& acts, const NormStats& stats) {
    if (stats.mean.size() != acts.n_neurons() || stats.std.size() != acts.n_neurons())
        throw Error(ErrorKind::DimensionMismatch, "normalization stats cover " + std::to_string(stats.mean.size()) +
                                                      " neurons, activations have " +
                                                      std::to_string(acts.n_neurons()));
    std::vector<std::vector<double>> cols(acts.n_neurons());
    for (std::size_t j = 0; j < acts.n_neurons(); ++j) {
        if (!(stats.std[j] > 0.0))
            throw Error(ErrorKind::ZeroStd, "neuron " + std::to_string(j) + " has zero std", Error::npos, j);
        auto col = acts.column(j);
        cols[j].reserve(col.size());
        for (double x : col) cols[j].push_back(1.0 / (1.0 + std::exp(-(x - stats.mean[j]) / stats.std[j])));
    }
    return ActivationMatrix::from_columns(cols, acts.neuron_names());
}

struct NormFamily {
    enum class Kind { godel, product, lukasiewicz, yager };
    Kind kind = Kind::godel;
    double p = 2.0;  // Yager exponent

    static NormFamily godel() { return {Kind::godel, 2.0}; }
    static NormFamily product() { return {Kind::product, 2.0}; }
    static NormFamily lukasiewicz() { return {Kind::lukasiewicz, 2.0}; }
    static NormFamily yager(double p = 2.0) {
        if (!(p > 0.0)) throw Error(ErrorKind::InvalidArgument, "Yager p must be > 0");
        return {Kind::yager, p};
    }

    std::string name() const {
        switch (kind) {
            case Kind::godel: return "godel";
            case Kind::product: return "product";
            case Kind::lukasiewicz: return "lukasiewicz";
            case Kind::yager: return "yager";
        }
        return "godel";
    }

    static NormFamily parse(std::string_view name, double p = 2.0) {
        if (name == "godel" || name == "goedel" || name == "gödel") return godel();
        if (name == "product") return product();
        if (name == "lukasiewicz" || name == "łukasiewicz") return lukasiewicz();
        if (name == "yager") return yager(p);
        throw Error(ErrorKind::InvalidArgument, "unknown norm family '" + std::string(name) + "'");
    }

    friend bool operator==(const NormFamily&, const NormFamily&) = default;
};

enum class FuzzyOp { and_, or_, not_ };

inline double fuzzy_not(double a) { return 1.0 - a; }

// T-norm.
inline double fuzzy_and(const NormFamily& fam, double a, double b) {
    switch (fam.kind) {
        case NormFamily::Kind::godel: return std::min(a, b);
        case NormFamily::Kind::product: return a * b;
        case NormFamily::Kind::lukasiewicz: return std::max(a + b - 1.0, 0.0);
        case NormFamily::Kind::yager:
            return std::max(1.0 - std::pow(std::pow(1.0 - a, fam.p) + std::pow(1.0 - b, fam.p), 1.0 / fam.p), 0.0);
    }
    return 0.0;
}

// T-conorm.
inline double fuzzy_or(const NormFamily& fam, double a, double b) {
    switch (fam.kind) {
        case NormFamily::Kind::godel: return std::max(a, b);
        case NormFamily::Kind::product: return a + b - a * b;
        case NormFamily::Kind::lukasiewicz: return std::min(a + b, 1.0);
        case NormFamily::Kind::yager: return std::min(std::pow(std::pow(a, fam.p) + std::pow(b, fam.p), 1.0 / fam.p), 1.0);
    }
    return 0.0;
}

inline double fuzzy_apply(FuzzyOp op, const NormFamily& fam, double a, std::optional<double> b = std::nullopt) {
    if (op == FuzzyOp::not_) return fuzzy_not(a);
    if (!b) throw Error(ErrorKind::InvalidArgument, "binary fuzzy operator needs two operands");
    return op == FuzzyOp::and_ ? fuzzy_and(fam, a, *b) : fuzzy_or(fam, a, *b);
}

// A formula whose leaves name neurons, evaluated with a norm family.
struct FuzzyCircuit {
    Formula formula;
    NormFamily family;
};

namespace fuzzy_detail {

inline std::vector<double> compose(const Formula& f, const NormFamily& fam, const ActivationMatrix& acts) {
    if (f.is_leaf()) {
        auto col = acts.column(f.index());
        std::vector<double> v(col.begin(), col.end());
        if (f.negated())
            for (double& x : v) x = fuzzy_not(x);
        return v;
    }
    std::vector<double> l = compose(f.left(), fam, acts);
    const std::vector<double> r = compose(f.right(), fam, acts);
    const bool conj = f.kind() == Formula::Kind::And;
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = conj ? fuzzy_and(fam, l[i], r[i]) : fuzzy_or(fam, l[i], r[i]);
    return l;
}

} // namespace fuzzy_detail

inline std::vector<double> compose_circuit(const FuzzyCircuit& circuit, const ActivationMatrix& normalized) {
    if (circuit.formula.max_index() >= normalized.n_neurons())
        throw Error(ErrorKind::InvalidArgument, "circuit references neuron " +
                                                    std::to_string(circuit.formula.max_index()) + " of " +
                                                    std::to_string(normalized.n_neurons()));
    std::set<std::size_t> used;
    circuit.formula.collect_indices(used);
    for (std::size_t j : used) {
        auto col = normalized.column(j);
        for (std::size_t s = 0; s < col.size(); ++s)
            if (!(col[s] >= 0.0 && col[s] <= 1.0))
                throw Error(ErrorKind::OutOfRangeActivation,
                            "activation outside [0, 1] at row " + std::to_string(s) + " col " + std::to_string(j), s, j);
    }
    return fuzzy_detail::compose(circuit.formula, circuit.family, normalized);
}

inline SimilarityResult evaluate_circuit_auc(const FuzzyCircuit& circuit, const ActivationMatrix& normalized,
                                             const BitVector& target, TieMode mode = TieMode::midrank) {
    return auc(compose_circuit(circuit, normalized), target, mode);
}

struct NeuronScore {
    std::size_t neuron = 0;
    double auc = 0.5;
    friend bool operator==(const NeuronScore&, const NeuronScore&) = default;
};

// The k neurons with the highest AUC towards one concept; ties by index.
inline std::vector<NeuronScore> select_top_neurons(const ActivationMatrix& acts, const ConceptMatrix& concepts,
                                                   std::size_t concept_idx, std::size_t k) {
    if (acts.n_samples() != concepts.n_samples())
        throw Error(ErrorKind::SampleCountMismatch, "activation and concept sample counts differ");
    if (concept_idx >= concepts.n_concepts())
        throw Error(ErrorKind::InvalidArgument, "concept index out of range");
    const BitVector& c = concepts.column(concept_idx);
    std::vector<NeuronScore> scores;
    for (std::size_t j = 0; j < acts.n_neurons(); ++j) scores.push_back({j, auc(acts.column(j), c).auc});
    std::stable_sort(scores.begin(), scores.end(), [](const NeuronScore& a, const NeuronScore& b) {
        return a.auc > b.auc;
    });
    scores.resize(std::min(k, scores.size()));
    return scores;
}

// Resolves circuit leaf names: an exported neuron name first, else "n<idx>".
inline NameResolver neuron_resolver(const ActivationMatrix& acts) {
    return [&acts](std::string_view name) -> std::optional<std::size_t> {
        const auto& names = acts.neuron_names();
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        if (name.size() >= 2 && name[0] == 'n' &&
            std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            const std::size_t idx = std::stoull(std::string(name.substr(1)));
            if (idx < acts.n_neurons()) return idx;
        }
        return std::nullopt;
    };
}

// Circuit description: {"formula": "...", "family": "godel", "p": 2}.
inline FuzzyCircuit parse_circuit_json(const std::string& text, const ActivationMatrix& acts) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("circuit file is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("formula") || !j["formula"].is_string())
        throw Error(ErrorKind::InvalidArgument, "circuit needs a string 'formula'");
    const double p = j.contains("p") ? j["p"].get<double>() : 2.0;
    const std::string family = j.contains("family") ? j["family"].get<std::string>() : "godel";
    return {parse_formula(j["formula"].get<std::string>(), neuron_resolver(acts)), NormFamily::parse(family, p)};
}

} // namespace invert
