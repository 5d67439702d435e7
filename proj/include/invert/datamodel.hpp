#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "invert/bitvector.hpp"
#include "invert/error.hpp"

namespace invert {

// N samples x M neurons of real activations. Values are kept column-major
// (one contiguous column per neuron) since every consumer works per neuron.
class ActivationMatrix {
public:
    ActivationMatrix() = default;

    // `row_major` holds n_samples * n_neurons values, row = sample.
    ActivationMatrix(std::size_t n_samples, std::size_t n_neurons, std::span<const double> row_major,
                     std::vector<std::string> neuron_names = {})
        : n_samples_(n_samples), n_neurons_(n_neurons), values_(n_samples * n_neurons),
          names_(std::move(neuron_names)) {
        if (row_major.size() != n_samples * n_neurons)
            throw Error(ErrorKind::DimensionMismatch,
                        "expected " + std::to_string(n_samples * n_neurons) + " values, got " +
                            std::to_string(row_major.size()));
        for (std::size_t s = 0; s < n_samples; ++s)
            for (std::size_t n = 0; n < n_neurons; ++n) values_[n * n_samples + s] = row_major[s * n_neurons + n];
        validate();
    }

    static ActivationMatrix from_columns(const std::vector<std::vector<double>>& columns,
                                         std::vector<std::string> neuron_names = {}) {
        ActivationMatrix m;
        m.n_neurons_ = columns.size();
        m.n_samples_ = columns.empty() ? 0 : columns.front().size();
        m.values_.reserve(m.n_samples_ * m.n_neurons_);
        for (const auto& c : columns) {
            if (c.size() != m.n_samples_)
                throw Error(ErrorKind::DimensionMismatch, "ragged activation columns");
            m.values_.insert(m.values_.end(), c.begin(), c.end());
        }
        m.names_ = std::move(neuron_names);
        m.validate();
        return m;
    }

    std::size_t n_samples() const noexcept { return n_samples_; }
    std::size_t n_neurons() const noexcept { return n_neurons_; }
    double at(std::size_t sample, std::size_t neuron) const { return values_[neuron * n_samples_ + sample]; }
    std::span<const double> column(std::size_t neuron) const {
        return {values_.data() + neuron * n_samples_, n_samples_};
    }
    const std::vector<std::string>& neuron_names() const noexcept { return names_; }
    bool has_names() const noexcept { return !names_.empty(); }

    // Display name: exported name when present, otherwise "n<idx>".
    std::string neuron_label(std::size_t neuron) const {
        return names_.empty() ? "n" + std::to_string(neuron) : names_[neuron];
    }

    std::vector<double> row_major() const {
        std::vector<double> out(values_.size());
        for (std::size_t s = 0; s < n_samples_; ++s)
            for (std::size_t n = 0; n < n_neurons_; ++n) out[s * n_neurons_ + n] = at(s, n);
        return out;
    }

    ActivationMatrix select_rows(std::size_t begin, std::size_t end) const {
        std::vector<std::vector<double>> cols(n_neurons_);
        for (std::size_t n = 0; n < n_neurons_; ++n) {
            auto c = column(n);
            cols[n].assign(c.begin() + static_cast<std::ptrdiff_t>(begin), c.begin() + static_cast<std::ptrdiff_t>(end));
        }
        return from_columns(cols, names_);
    }

    friend bool operator==(const ActivationMatrix&, const ActivationMatrix&) = default;

private:
    void validate() const {
        if (!names_.empty() && names_.size() != n_neurons_)
            throw Error(ErrorKind::NameCountMismatch, "neuron name count " + std::to_string(names_.size()) +
                                                          " != n_neurons " + std::to_string(n_neurons_));
        // Report in row-major scan order so the first offending (row, col) matches the file.
        for (std::size_t s = 0; s < n_samples_; ++s)
            for (std::size_t n = 0; n < n_neurons_; ++n)
                if (!std::isfinite(at(s, n)))
                    throw Error(ErrorKind::NonFiniteValue,
                                "non-finite activation at row " + std::to_string(s) + " col " + std::to_string(n), s, n);
    }

    std::size_t n_samples_ = 0;
    std::size_t n_neurons_ = 0;
    std::vector<double> values_;
    std::vector<std::string> names_;
};

// N samples x d binary concepts. Stored as one packed column per concept;
// the row-major LSB-first layout only exists on the wire.
class ConceptMatrix {
public:
    ConceptMatrix() = default;

    ConceptMatrix(std::size_t n_samples, std::vector<BitVector> columns, std::vector<std::string> names)
        : n_samples_(n_samples), columns_(std::move(columns)), names_(std::move(names)) {
        if (names_.size() != columns_.size())
            throw Error(ErrorKind::NameCountMismatch, "concept name count " + std::to_string(names_.size()) +
                                                          " != n_concepts " + std::to_string(columns_.size()));
        std::unordered_set<std::string> seen;
        for (const auto& n : names_) {
            if (n.empty()) throw Error(ErrorKind::InvalidArgument, "empty concept name");
            if (!seen.insert(n).second)
                throw Error(ErrorKind::DuplicateConceptName, "duplicate concept name '" + n + "'", Error::npos,
                            Error::npos, n);
        }
        for (const auto& c : columns_)
            if (c.size() != n_samples_) throw Error(ErrorKind::DimensionMismatch, "concept column length mismatch");
    }

    // rows[s][j] != 0 means sample s carries concept j.
    static ConceptMatrix from_rows(const std::vector<std::vector<int>>& rows, std::vector<std::string> names) {
        const std::size_t n = rows.size();
        const std::size_t d = names.size();
        std::vector<BitVector> cols(d, BitVector(n));
        for (std::size_t s = 0; s < n; ++s) {
            if (rows[s].size() != d) throw Error(ErrorKind::DimensionMismatch, "ragged concept rows");
            for (std::size_t j = 0; j < d; ++j)
                if (rows[s][j] != 0) cols[j].set(s);
        }
        return ConceptMatrix(n, std::move(cols), std::move(names));
    }

    std::size_t n_samples() const noexcept { return n_samples_; }
    std::size_t n_concepts() const noexcept { return columns_.size(); }
    const BitVector& column(std::size_t j) const { return columns_[j]; }
    const std::vector<BitVector>& columns() const noexcept { return columns_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    bool at(std::size_t sample, std::size_t concept_idx) const { return columns_[concept_idx].test(sample); }

    std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t j = 0; j < names_.size(); ++j)
            if (names_[j] == name) return j;
        return std::nullopt;
    }

    ConceptMatrix select_rows(std::size_t begin, std::size_t end) const {
        std::vector<BitVector> cols;
        cols.reserve(columns_.size());
        for (const auto& c : columns_) cols.push_back(c.slice(begin, end));
        return ConceptMatrix(end - begin, std::move(cols), names_);
    }

    ConceptMatrix select_concepts(std::span<const std::size_t> idx) const {
        std::vector<BitVector> cols;
        std::vector<std::string> names;
        for (std::size_t j : idx) {
            cols.push_back(columns_[j]);
            names.push_back(names_[j]);
        }
        return ConceptMatrix(n_samples_, std::move(cols), std::move(names));
    }

    friend bool operator==(const ConceptMatrix&, const ConceptMatrix&) = default;

private:
    std::size_t n_samples_ = 0;
    std::vector<BitVector> columns_;
    std::vector<std::string> names_;
};

// Multi-dimensional neuron output, e.g. one k x k activation map per sample.
// values are sample-major: sample s occupies [s * cells, (s + 1) * cells).
class ActivationTensor {
public:
    ActivationTensor(std::size_t n_samples, std::vector<std::size_t> spatial_shape, std::vector<double> values)
        : n_samples_(n_samples), shape_(std::move(spatial_shape)), values_(std::move(values)) {
        cells_ = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>{});
        if (shape_.empty() || cells_ < 1) throw Error(ErrorKind::DimensionMismatch, "empty spatial shape");
        if (values_.size() != n_samples_ * cells_)
            throw Error(ErrorKind::DimensionMismatch, "tensor payload does not match shape");
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (!std::isfinite(values_[i]))
                throw Error(ErrorKind::NonFiniteValue, "non-finite tensor value", i / cells_, i % cells_);
    }

    std::size_t n_samples() const noexcept { return n_samples_; }
    const std::vector<std::size_t>& spatial_shape() const noexcept { return shape_; }
    std::size_t cells() const noexcept { return cells_; }
    std::span<const double> sample(std::size_t s) const { return {values_.data() + s * cells_, cells_}; }

private:
    std::size_t n_samples_;
    std::vector<std::size_t> shape_;
    std::size_t cells_ = 1;
    std::vector<double> values_;
};

enum class PoolMode { avg, max };

inline ActivationMatrix aggregate_pool(const ActivationTensor& t, PoolMode mode) {
    std::vector<double> out(t.n_samples());
    for (std::size_t s = 0; s < t.n_samples(); ++s) {
        auto v = t.sample(s);
        if (mode == PoolMode::max) {
            out[s] = *std::max_element(v.begin(), v.end());
        } else {
            double sum = 0.0;
            for (double x : v) sum += x;
            out[s] = sum / static_cast<double>(v.size());
        }
    }
    return ActivationMatrix::from_columns({std::move(out)});
}

struct Dataset {
    ActivationMatrix activations;
    ConceptMatrix concepts;
};

// Concatenates samples of `a` then `b`. Concepts are the disjoint union; a
// concept is negative on every sample of the dataset it is not native to.
inline Dataset merge_datasets(const Dataset& a, const Dataset& b) {
    for (const Dataset* ds : {&a, &b})
        if (ds->activations.n_samples() != ds->concepts.n_samples())
            throw Error(ErrorKind::SampleCountMismatch, "activation and concept sample counts differ");
    if (a.activations.n_neurons() != b.activations.n_neurons())
        throw Error(ErrorKind::NeuronCountMismatch, "datasets have " + std::to_string(a.activations.n_neurons()) +
                                                        " and " + std::to_string(b.activations.n_neurons()) +
                                                        " neurons");
    for (const auto& name : b.concepts.names())
        if (a.concepts.index_of(name))
            throw Error(ErrorKind::OverlappingConceptNames, "concept '" + name + "' defined by both datasets",
                        Error::npos, Error::npos, name);

    const std::size_t na = a.activations.n_samples();
    const std::size_t nb = b.activations.n_samples();
    const std::size_t m = a.activations.n_neurons();

    std::vector<std::vector<double>> cols(m);
    for (std::size_t n = 0; n < m; ++n) {
        auto ca = a.activations.column(n);
        auto cb = b.activations.column(n);
        cols[n].reserve(na + nb);
        cols[n].insert(cols[n].end(), ca.begin(), ca.end());
        cols[n].insert(cols[n].end(), cb.begin(), cb.end());
    }
    auto names = a.activations.neuron_names();
    if (names.empty()) names = b.activations.neuron_names();

    std::vector<BitVector> ccols;
    std::vector<std::string> cnames;
    for (std::size_t j = 0; j < a.concepts.n_concepts(); ++j) {
        ccols.push_back(a.concepts.column(j).concat(BitVector(nb)));
        cnames.push_back(a.concepts.names()[j]);
    }
    for (std::size_t j = 0; j < b.concepts.n_concepts(); ++j) {
        ccols.push_back(BitVector(na).concat(b.concepts.column(j)));
        cnames.push_back(b.concepts.names()[j]);
    }
    return {ActivationMatrix::from_columns(cols, std::move(names)),
            ConceptMatrix(na + nb, std::move(ccols), std::move(cnames))};
}

} // namespace invert
