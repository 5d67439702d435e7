// invert: batch command-line surface over the invert library.
//
// Exit codes: 0 success, 2 usage error, 3 data error. Diagnostics are a
// single line on stderr; stdout carries only report data.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invert/datamodel.hpp"
#include "invert/formula.hpp"
#include "invert/fuzzy.hpp"
#include "invert/harness.hpp"
#include "invert/io.hpp"
#include "invert/parallel.hpp"
#include "invert/search.hpp"
#include "invert/similarity.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using namespace invert;
using namespace invert::cli;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct Common {
    std::string activations;
    std::string concepts;
    std::string names;
    std::string out;
    std::string csv;
    std::size_t threads = default_threads();
    std::uint64_t seed = 0;
    std::string tie_mode = "midrank";
};

struct SearchFlags {
    std::size_t length = 3;
    std::size_t beam = 5;
    double alpha = 0.0;
    double beta = 0.5;
    std::string neurons;
};

void add_out(CLI::App* app, Common& c) {
    app->add_option("--out", c.out, "Report path (JSON); stdout when omitted");
    app->add_option("--csv", c.csv, "CSV path; defaults to the report path with a .csv extension");
    app->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    app->add_option("--seed", c.seed, "Random seed");
}

void add_inputs(CLI::App* app, Common& c, bool required) {
    auto* a = app->add_option("--activations", c.activations, "Activation file (INVT or CSV)");
    auto* k = app->add_option("--concepts", c.concepts, "Concept file (INVC)");
    auto* n = app->add_option("--names", c.names, "Concept names sidecar (JSON)");
    if (required) {
        a->required();
        k->required();
        n->required();
    }
}

void add_tie_mode(CLI::App* app, Common& c) {
    app->add_option("--tie-mode", c.tie_mode, "AUC tie convention")
        ->check(CLI::IsMember({"midrank", "strict"}));
}

void add_search(CLI::App* app, SearchFlags& s) {
    app->add_option("-L,--length", s.length, "Maximal formula length")->check(CLI::PositiveNumber);
    app->add_option("-B,--beam", s.beam, "Beam size")->check(CLI::PositiveNumber);
    app->add_option("--alpha", s.alpha, "Lower bound on the concept fraction");
    app->add_option("--beta", s.beta, "Upper bound on the concept fraction");
    app->add_option("--neurons", s.neurons, "Neuron selection: a..b (half-open) and/or comma-separated indices");
}

TieMode tie_mode_of(const Common& c) { return c.tie_mode == "strict" ? TieMode::strict : TieMode::midrank; }

SearchParams search_params(const SearchFlags& s, const Common& c) {
    SearchParams p;
    p.length = s.length;
    p.beam = s.beam;
    p.alpha = s.alpha;
    p.beta = s.beta;
    p.tie_mode = tie_mode_of(c);
    try {
        p.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    return p;
}

std::size_t parse_index(const std::string& text) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != text.size() || text.front() == '-') throw UsageError("bad index '" + text + "'");
    return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::optional<std::vector<std::size_t>> parse_neurons(const std::string& text) {
    if (text.empty()) return std::nullopt;
    std::vector<std::size_t> out;
    for (const auto& part : split(text, ',')) {
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            out.push_back(parse_index(part));
            continue;
        }
        const std::size_t a = parse_index(part.substr(0, dots)), b = parse_index(part.substr(dots + 2));
        if (b < a) throw UsageError("empty neuron range '" + part + "'");
        for (std::size_t i = a; i < b; ++i) out.push_back(i);
    }
    return out;
}

void check_neurons(const std::optional<std::vector<std::size_t>>& neurons, const ActivationMatrix& acts) {
    if (!neurons) return;
    for (std::size_t i : *neurons)
        if (i >= acts.n_neurons())
            throw UsageError("neuron " + std::to_string(i) + " out of range (" + std::to_string(acts.n_neurons()) +
                             " neurons)");
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    for (const auto& p : split(text, ',')) {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(p, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != p.size() || pos == 0) throw UsageError("bad number '" + p + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("empty number list");
    return out;
}

std::vector<std::size_t> parse_counts(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& p : split(text, ',')) {
        const auto dots = p.find("..");
        if (dots == std::string::npos) {
            out.push_back(parse_index(p));
        } else {
            // Inclusive range for parameter lists, e.g. 2..10.
            const std::size_t a = parse_index(p.substr(0, dots)), b = parse_index(p.substr(dots + 2));
            for (std::size_t i = a; i <= b; ++i) out.push_back(i);
        }
    }
    if (out.empty()) throw UsageError("empty list");
    return out;
}

Dataset load_dataset(const Common& c, Manifest& m) {
    m.input("activations", c.activations);
    m.input("concepts", c.concepts);
    m.input("names", c.names);
    Dataset d{load_activations(c.activations), load_concepts(c.concepts, c.names)};
    if (d.activations.n_samples() != d.concepts.n_samples())
        throw Error(ErrorKind::SampleCountMismatch, "activations have " + std::to_string(d.activations.n_samples()) +
                                                        " samples, concepts " +
                                                        std::to_string(d.concepts.n_samples()));
    return d;
}

void record_search(Manifest& m, const SearchParams& p, const std::optional<std::vector<std::size_t>>& neurons) {
    m.param("L", p.length);
    m.param("B", p.beam);
    m.param("alpha", p.alpha);
    m.param("beta", p.beta);
    m.param("tie_mode", p.tie_mode == TieMode::strict ? "strict" : "midrank");
    if (neurons)
        m.param("neurons", *neurons);
    else
        m.param("neurons", "all");
}

ordered_json explanation_json(const Explanation& e, const ConceptMatrix& concepts, bool global_best) {
    ordered_json j;
    j["length"] = e.formula.length();
    j["formula"] = format_formula(e.formula, concepts.names());
    j["auc"] = e.auc;
    j["fraction"] = e.fraction;
    j["p_two_sided"] = e.p_two_sided;
    j["global_best"] = global_best;
    return j;
}

ordered_json search_result_json(const SearchResult& r, const ActivationMatrix& acts, const ConceptMatrix& concepts) {
    ordered_json j;
    j["neuron"] = r.neuron_id;
    j["name"] = acts.neuron_label(r.neuron_id);
    j["best_length"] = r.best_explanation().formula.length();
    j["explanations"] = ordered_json::array();
    for (std::size_t i = 0; i < r.per_length.size(); ++i)
        j["explanations"].push_back(explanation_json(r.per_length[i], concepts, i == r.best));
    j["iterations"] = ordered_json::array();
    for (const auto& it : r.iterations)
        j["iterations"].push_back(
            {{"length", it.length}, {"candidates", it.candidates}, {"feasible", it.feasible}, {"truncated", it.truncated}});
    return j;
}

void write_csv(const std::string& path, const Manifest& m, const std::string& body) {
    if (path.empty()) return;
    write_text_file(path, m.csv_header() + body);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct ExplainCmd {
    Common c;
    SearchFlags s;
    std::string density_out;

    void run() {
        const SearchParams p = search_params(s, c);
        const auto neurons = parse_neurons(s.neurons);
        Manifest m("explain");
        record_search(m, p, neurons);
        const Dataset d = load_dataset(c, m);
        check_neurons(neurons, d.activations);
        std::cerr << "explaining " << (neurons ? neurons->size() : d.activations.n_neurons()) << " neuron(s)\n";
        const auto results = explain_layer(d.activations, d.concepts, p, neurons, c.threads);

        ordered_json report = report_skeleton(m);
        report["neurons"] = ordered_json::array();
        std::string csv = "neuron,name,length,formula,auc,fraction,p_two_sided,global_best\n";
        for (const auto& r : results) {
            report["neurons"].push_back(search_result_json(r, d.activations, d.concepts));
            for (std::size_t i = 0; i < r.per_length.size(); ++i) {
                const auto& e = r.per_length[i];
                csv += std::to_string(r.neuron_id) + "," + csv_quote(d.activations.neuron_label(r.neuron_id)) + "," +
                       std::to_string(e.formula.length()) + "," +
                       csv_quote(format_formula(e.formula, d.concepts.names())) + "," + num(e.auc) + "," +
                       num(e.fraction) + "," + num(e.p_two_sided) + "," + (i == r.best ? "1" : "0") + "\n";
            }
        }
        emit_json(report, c.out);
        write_csv(csv_path_for(c.csv, c.out), m, csv);

        if (!density_out.empty()) {
            std::string dens = "neuron,length,formula,group,sample,activation\n";
            for (const auto& r : results) {
                const auto col = d.activations.column(r.neuron_id);
                for (const auto& e : r.per_length) {
                    const BitVector bits = eval_formula(e.formula, d.concepts);
                    const std::string f = csv_quote(format_formula(e.formula, d.concepts.names()));
                    for (std::size_t sidx = 0; sidx < col.size(); ++sidx)
                        dens += std::to_string(r.neuron_id) + "," + std::to_string(e.formula.length()) + "," + f + "," +
                                (bits.test(sidx) ? "positive" : "negative") + "," + std::to_string(sidx) + "," +
                                num(col[sidx]) + "\n";
                }
            }
            write_csv(density_out, m, dens);
        }
    }
};

struct SweepCmd {
    Common c;
    SearchFlags s;
    std::string alphas = "0,0.1,0.2,0.3,0.4";
    std::string lengths = "1,2,3,4,5";

    void run() {
        const auto alpha_list = parse_doubles(alphas);
        const auto length_list = parse_counts(lengths);
        for (double a : alpha_list) {
            SearchFlags probe = s;
            probe.alpha = a;
            probe.length = *std::max_element(length_list.begin(), length_list.end());
            search_params(probe, c);
        }
        if (std::find(length_list.begin(), length_list.end(), 0u) != length_list.end())
            throw UsageError("formula lengths must be >= 1");
        const auto neurons = parse_neurons(s.neurons);
        Manifest m("sweep");
        m.param("alphas", alpha_list);
        m.param("lengths", length_list);
        m.param("B", s.beam);
        m.param("beta", s.beta);
        m.param("tie_mode", c.tie_mode);
        if (neurons)
            m.param("neurons", *neurons);
        else
            m.param("neurons", "all");
        const Dataset d = load_dataset(c, m);
        check_neurons(neurons, d.activations);
        const auto result = sweep(d.activations, d.concepts, alpha_list, length_list, s.beam, s.beta, tie_mode_of(c),
                                  neurons, c.threads);

        ordered_json report = report_skeleton(m);
        report["cells"] = ordered_json::array();
        std::string csv = "alpha,length,mean_auc,mean_fraction,n_neurons\n";
        for (const auto& cell : result.cells) {
            ordered_json j;
            j["alpha"] = cell.alpha;
            j["length"] = cell.length;
            j["mean_auc"] = cell.mean_auc;
            j["aucs"] = cell.aucs;
            j["fractions"] = cell.fractions;
            j["neurons"] = ordered_json::array();
            for (std::size_t i = 0; i < cell.neurons.size(); ++i)
                j["neurons"].push_back({{"neuron", cell.neurons[i]},
                                        {"formula", format_formula(cell.explanations[i].formula, d.concepts.names())},
                                        {"auc", cell.aucs[i]},
                                        {"fraction", cell.fractions[i]},
                                        {"p_two_sided", cell.explanations[i].p_two_sided}});
            report["cells"].push_back(j);
            double mean_fraction = 0;
            for (double f : cell.fractions) mean_fraction += f;
            if (!cell.fractions.empty()) mean_fraction /= static_cast<double>(cell.fractions.size());
            csv += num(cell.alpha) + "," + std::to_string(cell.length) + "," + num(cell.mean_auc) + "," +
                   num(mean_fraction) + "," + std::to_string(cell.neurons.size()) + "\n";
        }
        emit_json(report, c.out);
        write_csv(csv_path_for(c.csv, c.out), m, csv);
    }
};

struct CompareNormsCmd {
    Common c;
    NormComparisonConfig cfg;
    std::string lengths = "1..10";
    std::string modes = "or,and_not";
    std::string families = "godel,product,lukasiewicz,yager";
    double yager_p = 2.0;
    std::string normalization = "sigmoid";

    void run() {
        cfg.lengths = parse_counts(lengths);
        cfg.modes.clear();
        for (const auto& mname : split(modes, ',')) {
            if (mname == "or")
                cfg.modes.push_back(ComposeMode::or_chain);
            else if (mname == "and_not")
                cfg.modes.push_back(ComposeMode::and_not_chain);
            else
                throw UsageError("unknown mode '" + mname + "'");
        }
        cfg.families.clear();
        try {
            for (const auto& fname : split(families, ',')) cfg.families.push_back(NormFamily::parse(fname, yager_p));
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        for (std::size_t len : cfg.lengths)
            if (len < 1 || len > cfg.n_concepts) throw UsageError("lengths must lie in [1, n-concepts]");
        if (!(cfg.density > 0 && cfg.density < 1)) throw UsageError("density must lie in (0, 1)");
        if (!(cfg.noise_sigma >= 0)) throw UsageError("noise must be >= 0");
        if (cfg.n_samples < 2) throw UsageError("need at least 2 samples");
        cfg.normalization = normalization == "none" ? Normalization::none : Normalization::sigmoid;
        cfg.seed = c.seed;

        Manifest m("compare-norms");
        m.param("trials", cfg.n_trials);
        m.param("lengths", cfg.lengths);
        m.param("modes", split(modes, ','));
        m.param("families", split(families, ','));
        m.param("yager_p", yager_p);
        m.param("n_samples", cfg.n_samples);
        m.param("n_concepts", cfg.n_concepts);
        m.param("density", cfg.density);
        m.param("noise", cfg.noise_sigma);
        m.param("normalization", normalization);
        m.param("seed", cfg.seed);
        const auto result = compare_norms(cfg);

        ordered_json report = report_skeleton(m);
        report["rows"] = ordered_json::array();
        for (const auto& r : result.rows)
            report["rows"].push_back({{"mode", to_string(r.mode)},
                                      {"length", r.length},
                                      {"family", r.family},
                                      {"mean_auc", r.mean_auc},
                                      {"trials", r.n_trials}});
        std::vector<std::string> names;
        for (std::size_t j = 0; j < cfg.n_concepts; ++j) names.push_back("c" + std::to_string(j));
        std::string csv = "mode,length,trial,formula";
        for (const auto& f : cfg.families) csv += "," + f.name();
        csv += "\n";
        report["trials"] = ordered_json::array();
        for (const auto& t : result.trials) {
            const std::string f = format_formula(t.formula, names);
            report["trials"].push_back(
                {{"mode", to_string(t.mode)}, {"length", t.length}, {"trial", t.trial}, {"formula", f}, {"aucs", t.aucs}});
            csv += std::string(to_string(t.mode)) + "," + std::to_string(t.length) + "," + std::to_string(t.trial) +
                   "," + csv_quote(f);
            for (double a : t.aucs) csv += "," + num(a);
            csv += "\n";
        }
        emit_json(report, c.out);
        write_csv(csv_path_for(c.csv, c.out), m, csv);
    }
};

struct CircuitCmd {
    Common c;
    std::string circuit;
    std::string reference;
    bool prenormalized = false;
    std::string target;
    std::string top_concept;
    std::size_t top_k = 5;

    void run() {
        if (reference.empty() == !prenormalized)
            throw UsageError("give exactly one of --reference and --normalized");
        const bool need_concepts = !target.empty() || !top_concept.empty();
        if (need_concepts && (c.concepts.empty() || c.names.empty()))
            throw UsageError("--target and --top-concept need --concepts and --names");
        Manifest m("circuit");
        m.param("normalization", prenormalized ? "input" : "reference");
        if (!target.empty()) m.param("target", target);
        if (!top_concept.empty()) {
            m.param("top_concept", top_concept);
            m.param("top_k", top_k);
        }
        m.input("activations", c.activations);
        m.input("circuit", circuit);
        const ActivationMatrix acts = load_activations(c.activations);
        const auto circuit_bytes = io_detail::read_file(circuit);
        const FuzzyCircuit fc = parse_circuit_json(std::string(circuit_bytes.begin(), circuit_bytes.end()), acts);
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < acts.n_neurons(); ++i) labels.push_back(acts.neuron_label(i));
        m.param("formula", format_formula(fc.formula, labels));
        m.param("family", fc.family.name());
        if (fc.family.kind == NormFamily::Kind::yager) m.param("p", fc.family.p);

        ActivationMatrix normalized = acts;
        ordered_json stats_json;
        if (!prenormalized) {
            m.input("reference", reference);
            const ActivationMatrix ref = load_activations(reference);
            if (ref.n_neurons() != acts.n_neurons())
                throw Error(ErrorKind::DimensionMismatch, "reference has " + std::to_string(ref.n_neurons()) +
                                                              " neurons, activations " +
                                                              std::to_string(acts.n_neurons()));
            const NormStats stats = compute_norm_stats(ref);
            normalized = normalize(acts, stats);
            stats_json = {{"mean", stats.mean}, {"std", stats.std}};
        }
        const std::vector<double> values = compose_circuit(fc, normalized);

        std::optional<ConceptMatrix> concepts;
        if (need_concepts) {
            m.input("concepts", c.concepts);
            m.input("names", c.names);
            concepts = load_concepts(c.concepts, c.names);
            if (concepts->n_samples() != acts.n_samples())
                throw Error(ErrorKind::SampleCountMismatch, "activation and concept sample counts differ");
        }

        ordered_json report = report_skeleton(m);
        report["circuit"] = {{"formula", format_formula(fc.formula, labels)}, {"family", fc.family.name()}};
        if (fc.family.kind == NormFamily::Kind::yager) report["circuit"]["p"] = fc.family.p;
        if (!stats_json.is_null()) report["normalization"] = stats_json;
        if (!target.empty()) {
            const Formula tf = parse_formula(target, concepts->names());
            const BitVector bits = eval_formula(tf, *concepts);
            const auto r = auc(values, bits, tie_mode_of(c));
            ordered_json t = {{"formula", format_formula(tf, concepts->names())},
                              {"auc", r.auc},
                              {"fraction", concept_fraction(bits)},
                              {"p_two_sided", mann_whitney_p(values, bits).p_two_sided}};
            // Each leaf neuron on its own, for comparison with the circuit.
            std::set<std::size_t> leaves;
            fc.formula.collect_indices(leaves);
            t["leaf_aucs"] = ordered_json::array();
            for (std::size_t n : leaves)
                t["leaf_aucs"].push_back({{"neuron", n}, {"name", acts.neuron_label(n)},
                                          {"auc", auc(normalized.column(n), bits, tie_mode_of(c)).auc}});
            report["target"] = t;
        }
        if (!top_concept.empty()) {
            const auto idx = concepts->index_of(top_concept);
            if (!idx) throw Error(ErrorKind::UnknownConcept, "unknown concept '" + top_concept + "'");
            report["top_neurons"] = ordered_json::array();
            for (const auto& s : select_top_neurons(acts, *concepts, *idx, top_k))
                report["top_neurons"].push_back({{"neuron", s.neuron}, {"name", acts.neuron_label(s.neuron)}, {"auc", s.auc}});
        }
        report["values"] = values;
        emit_json(report, c.out);
        std::string csv = "sample,value\n";
        for (std::size_t i = 0; i < values.size(); ++i) csv += std::to_string(i) + "," + num(values[i]) + "\n";
        write_csv(csv_path_for(c.csv, c.out), m, csv);
    }
};

struct MergeCmd {
    Common c;
    std::string other_activations, other_concepts, other_names;
    std::string out_activations, out_concepts, out_names;
    std::string dtype = "f64";

    void run() {
        Manifest m("merge");
        m.param("dtype", dtype);
        m.input("activations", c.activations);
        m.input("concepts", c.concepts);
        m.input("names", c.names);
        m.input("other_activations", other_activations);
        m.input("other_concepts", other_concepts);
        m.input("other_names", other_names);
        const Dataset a{load_activations(c.activations), load_concepts(c.concepts, c.names)};
        const Dataset b{load_activations(other_activations), load_concepts(other_concepts, other_names)};
        const Dataset merged = merge_datasets(a, b);
        save_activations(out_activations, merged.activations, dtype == "f32" ? Dtype::f32 : Dtype::f64);
        save_concepts(out_concepts, out_names, merged.concepts);

        ordered_json report = report_skeleton(m);
        report["merged"] = {{"n_samples", merged.activations.n_samples()},
                            {"n_neurons", merged.activations.n_neurons()},
                            {"n_concepts", merged.concepts.n_concepts()},
                            {"rows_from_first", a.activations.n_samples()},
                            {"rows_from_second", b.activations.n_samples()},
                            {"concepts", merged.concepts.names()}};
        report["outputs"] = {
            {"activations", {{"path", out_activations}, {"sha256", sha256_hex(io_detail::read_file(out_activations))}}},
            {"concepts", {{"path", out_concepts}, {"sha256", sha256_hex(io_detail::read_file(out_concepts))}}},
            {"names", {{"path", out_names}, {"sha256", sha256_hex(io_detail::read_file(out_names))}}}};
        emit_json(report, c.out);
        std::string csv = "concept,source\n";
        for (std::size_t j = 0; j < merged.concepts.n_concepts(); ++j)
            csv += csv_quote(merged.concepts.names()[j]) + "," + (j < a.concepts.n_concepts() ? "first" : "second") +
                   "\n";
        write_csv(csv_path_for(c.csv, c.out), m, csv);
    }
};

struct EvalAccuracyCmd {
    Common c;
    SearchFlags s;
    std::string truth;

    void run() {
        SearchFlags one = s;
        one.length = 1;
        const SearchParams p = search_params(one, c);
        Manifest m("eval-accuracy");
        m.param("B", p.beam);
        m.param("alpha", p.alpha);
        m.param("beta", p.beta);
        m.param("tie_mode", c.tie_mode);
        const Dataset d = load_dataset(c, m);
        m.input("truth", truth);
        const auto truth_bytes = io_detail::read_file(truth);
        nlohmann::json tj;
        try {
            tj = nlohmann::json::parse(truth_bytes.begin(), truth_bytes.end());
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::InvalidArgument, std::string("truth file is not valid JSON: ") + e.what());
        }
        if (!tj.is_object()) throw Error(ErrorKind::InvalidArgument, "truth file must map neurons to concept names");
        const NameResolver neuron_of = neuron_resolver(d.activations);
        std::map<std::size_t, std::size_t> gt;
        for (const auto& [key, value] : tj.items()) {
            std::optional<std::size_t> n = neuron_of(key);
            if (!n && !key.empty() && std::all_of(key.begin(), key.end(), ::isdigit)) {
                const std::size_t idx = std::stoull(key);
                if (idx < d.activations.n_neurons()) n = idx;
            }
            if (!n) throw Error(ErrorKind::InvalidArgument, "truth names unknown neuron '" + key + "'");
            if (!value.is_string()) throw Error(ErrorKind::InvalidArgument, "truth values must be concept names");
            const auto cidx = d.concepts.index_of(value.get<std::string>());
            if (!cidx) throw Error(ErrorKind::UnknownConcept, "unknown concept '" + value.get<std::string>() + "'");
            gt[*n] = *cidx;
        }
        std::vector<std::size_t> selected;
        for (const auto& [n, _] : gt) selected.push_back(n);
        const auto results = explain_layer(d.activations, d.concepts, p, selected, c.threads);
        const double accuracy = evaluate_accuracy(results, gt);

        ordered_json report = report_skeleton(m);
        report["accuracy"] = accuracy;
        report["neurons"] = ordered_json::array();
        std::string csv = "neuron,truth,explanation,auc,match\n";
        for (const auto& r : results) {
            const auto& e = r.per_length.front();
            const bool match = e.formula.is_leaf() && !e.formula.negated() && e.formula.index() == gt.at(r.neuron_id);
            const std::string expl = format_formula(e.formula, d.concepts.names());
            report["neurons"].push_back({{"neuron", r.neuron_id},
                                         {"truth", d.concepts.names()[gt.at(r.neuron_id)]},
                                         {"explanation", expl},
                                         {"auc", e.auc},
                                         {"match", match}});
            csv += std::to_string(r.neuron_id) + "," + csv_quote(d.concepts.names()[gt.at(r.neuron_id)]) + "," +
                   csv_quote(expl) + "," + num(e.auc) + "," + (match ? "1" : "0") + "\n";
        }
        emit_json(report, c.out);
        write_csv(csv_path_for(c.csv, c.out), m, csv);
    }
};

struct ExportSynthCmd {
    Common c;
    std::size_t n_samples = 1000;
    std::size_t n_concepts = 10;
    std::size_t n_neurons = 1;
    double density = 0.3;
    std::vector<std::string> plants;
    std::size_t random_length = 0;
    double noise = 0.1;
    double alpha = 0.0;
    double beta = 0.5;
    std::string out_activations, out_concepts, out_names, truth_out;
    std::string dtype = "f64";

    void run() {
        if (!(density > 0 && density < 1)) throw UsageError("density must lie in (0, 1)");
        if (n_samples < 2) throw UsageError("need at least 2 samples");
        if (!(noise >= 0)) throw UsageError("noise must be >= 0");
        if (!plants.empty() && random_length > 0) throw UsageError("--plant and --random-length are exclusive");
        const auto names = synthetic_concept_names(n_concepts);
        SyntheticSpec spec;
        if (random_length > 0) {
            PlantedConfig cfg;
            cfg.n_samples = n_samples;
            cfg.n_concepts = n_concepts;
            cfg.n_neurons = n_neurons;
            cfg.formula_length = random_length;
            cfg.density = density;
            cfg.noise_sigma = noise;
            cfg.alpha = alpha;
            cfg.beta = beta;
            cfg.seed = c.seed;
            if (random_length > n_concepts) throw UsageError("--random-length exceeds --n-concepts");
            spec = planted_spec(cfg);
        } else {
            spec.n_samples = n_samples;
            spec.n_concepts = n_concepts;
            spec.n_neurons = n_neurons;
            spec.concept_density = density;
            spec.seed = c.seed;
            for (const auto& plant : plants) {
                // NEURON:FORMULA[:SIGMA]
                const auto first = plant.find(':');
                if (first == std::string::npos) throw UsageError("--plant expects NEURON:FORMULA[:SIGMA]");
                const auto last = plant.rfind(':');
                double sigma = noise;
                std::string ftext = plant.substr(first + 1);
                if (last != first) {
                    try {
                        std::size_t pos = 0;
                        sigma = std::stod(plant.substr(last + 1), &pos);
                        if (pos != plant.size() - last - 1) throw std::invalid_argument("sigma");
                        ftext = plant.substr(first + 1, last - first - 1);
                    } catch (const std::exception&) {
                        sigma = noise;
                    }
                }
                Formula f = Formula::leaf(0);
                try {
                    f = parse_formula(ftext, names);
                } catch (const Error& e) {
                    throw UsageError(std::string("--plant: ") + e.what());
                }
                spec.planted.push_back({parse_index(plant.substr(0, first)), f, sigma});
            }
        }
        Manifest m("export-synth");
        m.param("n_samples", n_samples);
        m.param("n_concepts", n_concepts);
        m.param("n_neurons", n_neurons);
        m.param("density", density);
        m.param("seed", c.seed);
        m.param("noise", noise);
        if (random_length > 0) {
            m.param("random_length", random_length);
            m.param("alpha", alpha);
            m.param("beta", beta);
        }
        m.param("plants", plants);
        m.param("dtype", dtype);

        SyntheticData data;
        try {
            data = generate_synthetic(spec);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidArgument) throw UsageError(e.what());
            throw;
        }
        save_activations(out_activations, data.activations, dtype == "f32" ? Dtype::f32 : Dtype::f64);
        save_concepts(out_concepts, out_names, data.concepts);

        ordered_json report = report_skeleton(m);
        report["planted"] = ordered_json::array();
        ordered_json truth = ordered_json::object();
        std::string csv = "neuron,formula,noise_sigma,fraction\n";
        for (const auto& p : data.truth) {
            const std::string f = format_formula(p.formula, names);
            const double t = concept_fraction(eval_formula(p.formula, data.concepts));
            report["planted"].push_back({{"neuron", p.neuron}, {"formula", f}, {"noise_sigma", p.noise_sigma}, {"fraction", t}});
            csv += std::to_string(p.neuron) + "," + csv_quote(f) + "," + num(p.noise_sigma) + "," + num(t) + "\n";
            if (p.formula.is_leaf() && !p.formula.negated()) truth[std::to_string(p.neuron)] = names[p.formula.index()];
        }
        report["outputs"] = {
            {"activations", {{"path", out_activations}, {"sha256", sha256_hex(io_detail::read_file(out_activations))}}},
            {"concepts", {{"path", out_concepts}, {"sha256", sha256_hex(io_detail::read_file(out_concepts))}}},
            {"names", {{"path", out_names}, {"sha256", sha256_hex(io_detail::read_file(out_names))}}}};
        if (!truth_out.empty()) write_text_file(truth_out, truth.dump(2) + "\n");
        emit_json(report, c.out);
        write_csv(csv_path_for(c.csv, c.out), m, csv);
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"invert: label neurons with compositional concepts by AUC"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("invert ") + kToolVersion);

    ExplainCmd explain;
    auto* ex = app.add_subcommand("explain", "Beam-search explanations for each neuron");
    add_inputs(ex, explain.c, true);
    add_out(ex, explain.c);
    add_tie_mode(ex, explain.c);
    add_search(ex, explain.s);
    ex->add_option("--density-out", explain.density_out, "CSV of activations split by explanation membership");

    SweepCmd sw;
    auto* swc = app.add_subcommand("sweep", "Explanation quality over a grid of alpha and L");
    add_inputs(swc, sw.c, true);
    add_out(swc, sw.c);
    add_tie_mode(swc, sw.c);
    add_search(swc, sw.s);
    swc->add_option("--alphas", sw.alphas, "Comma-separated alpha values");
    swc->add_option("--lengths", sw.lengths, "Comma-separated formula lengths (a..b inclusive allowed)");

    CompareNormsCmd cn;
    auto* cnc = app.add_subcommand("compare-norms", "Fuzzy norm families on synthetic compositions");
    add_out(cnc, cn.c);
    cnc->add_option("--trials", cn.cfg.n_trials, "Random compositions per (mode, length)")->check(CLI::PositiveNumber);
    cnc->add_option("--lengths", cn.lengths, "Formula lengths (a..b inclusive allowed)");
    cnc->add_option("--modes", cn.modes, "Composition modes: or, and_not");
    cnc->add_option("--families", cn.families, "Norm families: godel, product, lukasiewicz, yager");
    cnc->add_option("--yager-p", cn.yager_p, "Yager exponent")->check(CLI::PositiveNumber);
    cnc->add_option("--n-samples", cn.cfg.n_samples, "Samples per synthetic dataset");
    cnc->add_option("--n-concepts", cn.cfg.n_concepts, "Concepts (one indicator neuron each)");
    cnc->add_option("--density", cn.cfg.density, "Concept density");
    cnc->add_option("--noise", cn.cfg.noise_sigma, "Gaussian noise sigma on indicator neurons");
    cnc->add_option("--normalization", cn.normalization, "sigmoid (reference z-score) or none")
        ->check(CLI::IsMember({"sigmoid", "none"}));

    CircuitCmd ci;
    auto* cic = app.add_subcommand("circuit", "Evaluate a fuzzy-logic circuit over neurons");
    cic->add_option("--activations", ci.c.activations, "Activation file (INVT or CSV)")->required();
    cic->add_option("--concepts", ci.c.concepts, "Concept file (INVC), for --target and --top-concept");
    cic->add_option("--names", ci.c.names, "Concept names sidecar (JSON)");
    cic->add_option("--circuit", ci.circuit, "Circuit JSON {formula, family, p}")->required();
    cic->add_option("--reference", ci.reference, "Reference activations for normalization statistics");
    cic->add_flag("--normalized", ci.prenormalized, "Activations are already in [0, 1]");
    cic->add_option("--target", ci.target, "Concept formula to score the circuit against");
    cic->add_option("--top-concept", ci.top_concept, "List the neurons with highest AUC for this concept");
    cic->add_option("--top-k", ci.top_k, "Neurons listed by --top-concept");
    add_out(cic, ci.c);
    add_tie_mode(cic, ci.c);

    MergeCmd mg;
    auto* mgc = app.add_subcommand("merge", "Merge two datasets; non-native concepts become negative");
    add_inputs(mgc, mg.c, true);
    mgc->add_option("--other-activations", mg.other_activations, "Second activation file")->required();
    mgc->add_option("--other-concepts", mg.other_concepts, "Second concept file")->required();
    mgc->add_option("--other-names", mg.other_names, "Second names sidecar")->required();
    mgc->add_option("--out-activations", mg.out_activations, "Merged activation file (INVT)")->required();
    mgc->add_option("--out-concepts", mg.out_concepts, "Merged concept file (INVC)")->required();
    mgc->add_option("--out-names", mg.out_names, "Merged names sidecar")->required();
    mgc->add_option("--dtype", mg.dtype, "Stored activation precision")->check(CLI::IsMember({"f32", "f64"}));
    add_out(mgc, mg.c);

    EvalAccuracyCmd ea;
    auto* eac = app.add_subcommand("eval-accuracy", "Share of neurons whose best single concept is the true one");
    add_inputs(eac, ea.c, true);
    add_out(eac, ea.c);
    add_tie_mode(eac, ea.c);
    eac->add_option("-B,--beam", ea.s.beam, "Beam size")->check(CLI::PositiveNumber);
    eac->add_option("--alpha", ea.s.alpha, "Lower bound on the concept fraction");
    eac->add_option("--beta", ea.s.beta, "Upper bound on the concept fraction");
    eac->add_option("--truth", ea.truth, "JSON object: neuron index or name -> concept name")->required();

    ExportSynthCmd es;
    auto* esc = app.add_subcommand("export-synth", "Write a synthetic dataset with planted formulas");
    esc->add_option("--n-samples", es.n_samples, "Samples");
    esc->add_option("--n-concepts", es.n_concepts, "Concepts (named c0, c1, ...)");
    esc->add_option("--n-neurons", es.n_neurons, "Neurons")->check(CLI::PositiveNumber);
    esc->add_option("--density", es.density, "Concept density");
    esc->add_option("--plant", es.plants, "NEURON:FORMULA[:SIGMA], repeatable");
    esc->add_option("--random-length", es.random_length, "Plant a random formula of this length in every neuron");
    esc->add_option("--noise", es.noise, "Default noise sigma of planted neurons");
    esc->add_option("--alpha", es.alpha, "Fraction lower bound for random plants");
    esc->add_option("--beta", es.beta, "Fraction upper bound for random plants");
    esc->add_option("--out-activations", es.out_activations, "Activation file (INVT)")->required();
    esc->add_option("--out-concepts", es.out_concepts, "Concept file (INVC)")->required();
    esc->add_option("--out-names", es.out_names, "Names sidecar")->required();
    esc->add_option("--truth-out", es.truth_out, "Ground truth for eval-accuracy (single-concept plants)");
    esc->add_option("--dtype", es.dtype, "Stored activation precision")->check(CLI::IsMember({"f32", "f64"}));
    add_out(esc, es.c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "invert: usage error: " << msg << " (see --help)\n";
        return 2;
    }

    try {
        if (*ex) explain.run();
        else if (*swc) sw.run();
        else if (*cnc) cn.run();
        else if (*cic) ci.run();
        else if (*mgc) mg.run();
        else if (*eac) ea.run();
        else if (*esc) es.run();
    } catch (const UsageError& e) {
        std::cerr << "invert: usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "invert: " << msg << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "invert: error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
