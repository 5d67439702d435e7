#pragma once

// Wire formats.
//
//   INVT  magic "INVT" | version u8 = 1 | dtype u8 (0 = f32, 1 = f64)
//         | N u64 LE | M u64 LE | N*M values row-major, little endian
//   INVC  magic "INVC" | version u8 = 1 | N u64 LE | d u64 LE
//         | N rows of ceil(d/8) bytes, concept j of a row is bit (j % 8)
//           of byte (j / 8); padding bits are zero
//
// Concept names live in a JSON sidecar {"concepts": [...]} (a bare JSON
// array is accepted on input). Activations may also be ingested from CSV
// with a header row of neuron names.

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "invert/datamodel.hpp"
#include "invert/error.hpp"

namespace invert {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

namespace io_detail {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kActivationHeader = 4 + 1 + 1 + 8 + 8;
inline constexpr std::size_t kConceptHeader = 4 + 1 + 8 + 8;

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline bool has_magic(const std::vector<std::uint8_t>& b, const char* magic) {
    return b.size() >= 4 && std::memcmp(b.data(), magic, 4) == 0;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    }
    return out;
}

inline ActivationMatrix parse_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t pos = text.find('\n', start);
        std::string_view line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (lines.empty()) throw Error(ErrorKind::DimensionMismatch, "CSV has no header row");
    std::vector<std::string> names;
    for (auto f : split_line(lines[0])) names.emplace_back(f);
    const std::size_t m = names.size();
    const std::size_t n = lines.size() - 1;
    std::vector<double> values;
    values.reserve(n * m);
    for (std::size_t r = 0; r < n; ++r) {
        auto fields = split_line(lines[r + 1]);
        if (fields.size() != m)
            throw Error(ErrorKind::DimensionMismatch, "CSV row " + std::to_string(r) + " has " +
                                                          std::to_string(fields.size()) + " fields, expected " +
                                                          std::to_string(m), r);
        for (std::size_t c = 0; c < m; ++c) {
            double v = 0.0;
            auto f = fields[c];
            if (!f.empty() && f.front() == '+') f.remove_prefix(1);
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc{} || ptr != f.data() + f.size())
                throw Error(ErrorKind::DimensionMismatch,
                            "unparsable CSV value '" + std::string(fields[c]) + "' at row " + std::to_string(r) +
                                " col " + std::to_string(c), r, c);
            values.push_back(v);
        }
    }
    if (n < 2) throw Error(ErrorKind::DimensionMismatch, "need at least 2 samples, got " + std::to_string(n));
    return ActivationMatrix(n, m, values, std::move(names));
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace io_detail

inline std::vector<std::uint8_t> encode_activations(const ActivationMatrix& m, Dtype dtype = Dtype::f64) {
    using namespace io_detail;
    std::vector<std::uint8_t> out{'I', 'N', 'V', 'T', kVersion, static_cast<std::uint8_t>(dtype)};
    put_u64(out, m.n_samples());
    put_u64(out, m.n_neurons());
    out.reserve(kActivationHeader + m.n_samples() * m.n_neurons() * (dtype == Dtype::f32 ? 4 : 8));
    for (std::size_t s = 0; s < m.n_samples(); ++s)
        for (std::size_t n = 0; n < m.n_neurons(); ++n) {
            if (dtype == Dtype::f32)
                put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.at(s, n))));
            else
                put_u64(out, std::bit_cast<std::uint64_t>(m.at(s, n)));
        }
    return out;
}

inline ActivationMatrix decode_activations(const std::vector<std::uint8_t>& b) {
    using namespace io_detail;
    if (!has_magic(b, "INVT")) throw Error(ErrorKind::BadMagic, "missing INVT magic");
    if (b.size() < kActivationHeader) throw Error(ErrorKind::DimensionMismatch, "truncated INVT header");
    if (b[4] != kVersion) throw Error(ErrorKind::UnsupportedVersion, "INVT version " + std::to_string(b[4]));
    if (b[5] > 1) throw Error(ErrorKind::InvalidArgument, "unknown dtype " + std::to_string(b[5]));
    const auto dtype = static_cast<Dtype>(b[5]);
    const std::uint64_t n = get_u64(b.data() + 6);
    const std::uint64_t m = get_u64(b.data() + 14);
    const std::size_t width = dtype == Dtype::f32 ? 4 : 8;
    const std::size_t payload = b.size() - kActivationHeader;
    if (m != 0 && n > payload / width / m)
        throw Error(ErrorKind::DimensionMismatch, "declared " + std::to_string(n) + "x" + std::to_string(m) +
                                                      " exceeds payload of " + std::to_string(payload) + " bytes");
    if (payload != n * m * width)
        throw Error(ErrorKind::DimensionMismatch, "declared " + std::to_string(n) + "x" + std::to_string(m) +
                                                      " but payload has " + std::to_string(payload) + " bytes");
    if (n < 2) throw Error(ErrorKind::DimensionMismatch, "need at least 2 samples, got " + std::to_string(n));
    std::vector<double> values(n * m);
    const std::uint8_t* p = b.data() + kActivationHeader;
    for (std::size_t i = 0; i < values.size(); ++i, p += width)
        values[i] = dtype == Dtype::f32 ? static_cast<double>(std::bit_cast<float>(get_u32(p)))
                                        : std::bit_cast<double>(get_u64(p));
    return ActivationMatrix(n, m, values);
}

inline void save_activations(const std::filesystem::path& path, const ActivationMatrix& m, Dtype dtype = Dtype::f64) {
    io_detail::write_file(path, encode_activations(m, dtype));
}

inline void save_activations_csv(const std::filesystem::path& path, const ActivationMatrix& m) {
    std::string text;
    for (std::size_t n = 0; n < m.n_neurons(); ++n) text += (n ? "," : "") + m.neuron_label(n);
    text += '\n';
    for (std::size_t s = 0; s < m.n_samples(); ++s) {
        for (std::size_t n = 0; n < m.n_neurons(); ++n) text += (n ? "," : "") + io_detail::format_double(m.at(s, n));
        text += '\n';
    }
    io_detail::write_file(path, {text.begin(), text.end()});
}

// Binary when the file starts with "INVT", CSV when the extension is .csv.
inline ActivationMatrix load_activations(const std::filesystem::path& path) {
    auto bytes = io_detail::read_file(path);
    if (io_detail::has_magic(bytes, "INVT")) return decode_activations(bytes);
    if (io_detail::lower(path.extension().string()) == ".csv")
        return io_detail::parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    throw Error(ErrorKind::BadMagic, path.string() + " is neither INVT nor .csv");
}

inline std::vector<std::uint8_t> encode_concept_bits(const ConceptMatrix& c) {
    using namespace io_detail;
    std::vector<std::uint8_t> out{'I', 'N', 'V', 'C', kVersion};
    put_u64(out, c.n_samples());
    put_u64(out, c.n_concepts());
    const std::size_t row_bytes = (c.n_concepts() + 7) / 8;
    const std::size_t header = out.size();
    out.resize(header + row_bytes * c.n_samples(), 0);
    for (std::size_t j = 0; j < c.n_concepts(); ++j) {
        const auto& col = c.column(j);
        for (std::size_t s = 0; s < c.n_samples(); ++s)
            if (col.test(s)) out[header + s * row_bytes + j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
    }
    return out;
}

inline ConceptMatrix decode_concepts(const std::vector<std::uint8_t>& b, std::vector<std::string> names) {
    using namespace io_detail;
    if (!has_magic(b, "INVC")) throw Error(ErrorKind::BadMagic, "missing INVC magic");
    if (b.size() < kConceptHeader) throw Error(ErrorKind::DimensionMismatch, "truncated INVC header");
    if (b[4] != kVersion) throw Error(ErrorKind::UnsupportedVersion, "INVC version " + std::to_string(b[4]));
    const std::uint64_t n = get_u64(b.data() + 5);
    const std::uint64_t d = get_u64(b.data() + 13);
    const std::uint64_t row_bytes = (d + 7) / 8;
    const std::size_t payload = b.size() - kConceptHeader;
    if ((row_bytes != 0 && n > payload / row_bytes) || payload != n * row_bytes)
        throw Error(ErrorKind::DimensionMismatch, "declared " + std::to_string(n) + "x" + std::to_string(d) +
                                                      " but payload has " + std::to_string(payload) + " bytes");
    if (names.size() != d)
        throw Error(ErrorKind::NameCountMismatch,
                    std::to_string(names.size()) + " names for " + std::to_string(d) + " concepts");
    const std::uint8_t* rows = b.data() + kConceptHeader;
    const std::uint8_t pad_mask = d % 8 == 0 ? 0 : static_cast<std::uint8_t>(0xFFu << (d % 8));
    std::vector<BitVector> cols(d, BitVector(n));
    for (std::size_t s = 0; s < n; ++s) {
        const std::uint8_t* row = rows + s * row_bytes;
        if (pad_mask != 0 && (row[row_bytes - 1] & pad_mask) != 0)
            throw Error(ErrorKind::NonZeroPadding, "padding bits set in row " + std::to_string(s), s);
        for (std::size_t j = 0; j < d; ++j)
            if ((row[j / 8] >> (j % 8)) & 1u) cols[j].set(s);
    }
    return ConceptMatrix(n, std::move(cols), std::move(names));
}

inline std::vector<std::string> parse_concept_names(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("names sidecar is not valid JSON: ") + e.what());
    }
    const nlohmann::json* arr = &j;
    if (j.is_object() && j.contains("concepts")) arr = &j["concepts"];
    if (!arr->is_array()) throw Error(ErrorKind::InvalidArgument, "names sidecar must be an array of strings");
    std::vector<std::string> names;
    for (const auto& e : *arr) {
        if (!e.is_string()) throw Error(ErrorKind::InvalidArgument, "concept names must be strings");
        names.push_back(e.get<std::string>());
    }
    return names;
}

inline ConceptMatrix load_concepts(const std::filesystem::path& path, const std::filesystem::path& names_path) {
    auto names_bytes = io_detail::read_file(names_path);
    auto names = parse_concept_names(std::string(names_bytes.begin(), names_bytes.end()));
    return decode_concepts(io_detail::read_file(path), std::move(names));
}

inline void save_concepts(const std::filesystem::path& path, const std::filesystem::path& names_path,
                          const ConceptMatrix& c) {
    io_detail::write_file(path, encode_concept_bits(c));
    std::string names = nlohmann::json{{"concepts", c.names()}}.dump(2) + "\n";
    io_detail::write_file(names_path, {names.begin(), names.end()});
}

} // namespace invert
