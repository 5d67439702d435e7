#pragma once

// Report plumbing for the command-line tool: content digests, the run
// manifest block shared by every JSON report and the "# " header of CSV
// outputs.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "invert/error.hpp"
#include "invert/io.hpp"

namespace invert::cli {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kReportVersion = 1;

using nlohmann::ordered_json;

inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
        throw Error(ErrorKind::Io, "SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    template <class T>
    void param(const std::string& key, const T& value) {
        params_[key] = value;
    }

    // Records the digest of the exact bytes of an input file.
    void input(const std::string& role, const std::filesystem::path& path) {
        inputs_[role] = {{"path", path.string()}, {"sha256", sha256_hex(io_detail::read_file(path))}};
    }

    const std::string& command() const { return command_; }

    ordered_json to_json() const {
        ordered_json j;
        j["command"] = command_;
        j["parameters"] = params_;
        j["inputs"] = inputs_;
        j["tool_version"] = kToolVersion;
        j["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return j;
    }

    // "# " lines for CSV outputs; everything except the wall time, so CSV
    // files of identical runs are byte-identical.
    std::string csv_header() const {
        std::string h = "# invert " + std::string(kToolVersion) + " " + command_ + "\n";
        h += "# parameters " + params_.dump() + "\n";
        for (const auto& [role, v] : inputs_.items())
            h += "# input " + role + " " + v["sha256"].get<std::string>() + " " + v["path"].get<std::string>() + "\n";
        return h;
    }

private:
    std::string command_;
    ordered_json params_ = ordered_json::object();
    ordered_json inputs_ = ordered_json::object();
    std::chrono::steady_clock::time_point start_;
};

inline ordered_json report_skeleton(const Manifest& m) {
    ordered_json r;
    r["report_version"] = kReportVersion;
    r["command"] = m.command();
    r["manifest"] = m.to_json();
    return r;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

// JSON to --out, or to stdout when no path is given.
inline void emit_json(const ordered_json& report, const std::string& out_path) {
    const std::string text = report.dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        write_text_file(out_path, text);
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

inline std::string num(double v) { return io_detail::format_double(v); }

// CSV path: explicit --csv, else --out with a .csv extension, else none.
inline std::string csv_path_for(const std::string& csv_flag, const std::string& out_path) {
    if (!csv_flag.empty()) return csv_flag;
    if (out_path.empty()) return {};
    return std::filesystem::path(out_path).replace_extension(".csv").string();
}

} // namespace invert::cli
