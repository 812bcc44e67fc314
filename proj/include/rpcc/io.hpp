// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpcc/model_state.hpp"
#include "rpcc/synthetic.hpp"
#include "rpcc/tensor.hpp"

namespace rpcc {

/// File or wire-format failure (exit code 2 at the CLI).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Configuration failure, always naming the offending key (exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Tensor files
//
// Layout: magic "TNSR" | version u16 | order u16 | dims order x u64 |
// payload prod(dims) x binary64, all little-endian, elements with the mode-1
// index varying fastest.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr char kTensorMagic[4] = {'T', 'N', 'S', 'R'};
inline constexpr std::uint16_t kTensorVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    // Assumes a little-endian host, which is all this project targets.
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return in.gcount() == static_cast<std::streamsize>(sizeof(T));
}
}  // namespace detail

inline void write_tensor_file(const std::filesystem::path& path, const DenseTensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(detail::kTensorMagic, 4);
    detail::write_le(out, detail::kTensorVersion);
    detail::write_le(out, static_cast<std::uint16_t>(t.order()));
    for (std::size_t n = 0; n < t.order(); ++n) {
        detail::write_le(out, static_cast<std::uint64_t>(t.dim(n)));
    }
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline DenseTensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, detail::kTensorMagic, 4) != 0) {
        throw IoError("'" + path.string() + "' is not a tensor file (bad magic)");
    }
    std::uint16_t version = 0;
    std::uint16_t order = 0;
    if (!detail::read_le(in, version) || version != detail::kTensorVersion) {
        throw IoError("'" + path.string() + "' has unsupported tensor-file version");
    }
    if (!detail::read_le(in, order) || order == 0) {
        throw IoError("'" + path.string() + "' has invalid tensor order");
    }
    std::vector<std::size_t> dims(order);
    for (std::uint16_t n = 0; n < order; ++n) {
        std::uint64_t d = 0;
        if (!detail::read_le(in, d) || d == 0) {
            throw IoError("'" + path.string() + "' has truncated or invalid dims");
        }
        dims[n] = static_cast<std::size_t>(d);
    }
    std::size_t total = 1;
    for (std::size_t d : dims) total *= d;

    std::vector<double> data(total);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != total * sizeof(double)) {
        throw IoError("'" + path.string() + "' payload truncated: expected " +
                      std::to_string(total * sizeof(double)) + " bytes, got " +
                      std::to_string(got));
    }
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0) {
        throw IoError("'" + path.string() + "' has trailing bytes after payload");
    }
    return DenseTensor(std::move(dims), std::move(data));
}

// ---------------------------------------------------------------------------
// Mask files: newline-delimited 0-based block indices.
// ---------------------------------------------------------------------------

inline void write_mask(const std::filesystem::path& path, const BlockSupport& support) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (std::size_t k : support.members()) out << k << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline BlockSupport read_mask(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::size_t> members;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(line, &pos);
            if (pos != line.size()) throw std::invalid_argument("trailing characters");
            members.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw IoError("'" + path.string() + "' line " + std::to_string(line_no) +
                          ": not a block index");
        }
    }
    return BlockSupport(std::move(members));
}

// ---------------------------------------------------------------------------
// key = value configuration documents ('#' starts a comment).
// ---------------------------------------------------------------------------

class ConfigDoc {
public:
    static ConfigDoc parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config '" + path.string() + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        return parse(buf.str(), path.string());
    }

    static ConfigDoc parse(const std::string& text, const std::string& origin = "<string>") {
        ConfigDoc doc;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + " line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(origin + " line " + std::to_string(line_no) + ": empty key");
            }
            if (doc.entries_.count(key) != 0) {
                throw ConfigError("config key '" + key + "' appears more than once");
            }
            doc.entries_[key] = value;
        }
        return doc;
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    /// Every present key must be in the allowed set.
    void require_known(const std::set<std::string>& allowed) const {
        for (const auto& [key, value] : entries_) {
            if (allowed.count(key) == 0) {
                throw ConfigError("unknown config key '" + key + "'");
            }
        }
    }

    std::string get_string(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) {
            throw ConfigError("missing required config key '" + key + "'");
        }
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long long get_int(const std::string& key) const { return to_int(key, get_string(key)); }
    long long get_int(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const std::string v = get_string(key);
        try {
            std::size_t pos = 0;
            const unsigned long long out = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing characters");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not an unsigned integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = get_string(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config key '" + key + "': expected true or false");
    }

    std::vector<std::size_t> get_size_list(const std::string& key) const {
        std::vector<std::size_t> out;
        for (const std::string& item : split_list(key)) {
            const long long v = to_int(key, item);
            if (v < 1) throw ConfigError("config key '" + key + "': entries must be positive");
            out.push_back(static_cast<std::size_t>(v));
        }
        return out;
    }

    std::vector<int> get_int_list(const std::string& key) const {
        std::vector<int> out;
        for (const std::string& item : split_list(key)) {
            out.push_back(static_cast<int>(to_int(key, item)));
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        for (const std::string& item : split_list(key)) {
            out.push_back(to_double(key, item));
        }
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r");
        if (begin == std::string::npos) return {};
        const auto end = s.find_last_not_of(" \t\r");
        return s.substr(begin, end - begin + 1);
    }

    std::vector<std::string> split_list(const std::string& key) const {
        const std::string raw = get_string(key);
        std::vector<std::string> items;
        std::string item;
        std::istringstream in(raw);
        while (std::getline(in, item, ',')) {
            const std::string t = trim(item);
            if (t.empty()) throw ConfigError("config key '" + key + "': empty list entry");
            items.push_back(t);
        }
        if (items.empty()) throw ConfigError("config key '" + key + "': empty list");
        return items;
    }

    static double to_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing characters");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not a number");
        }
    }

    static long long to_int(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const long long out = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing characters");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not an integer");
        }
    }

    std::map<std::string, std::string> entries_;
};

/// Reads the shared hyperparameter keys (all optional except rank) and
/// validates them, mapping validation failures to ConfigError so the CLI can
/// name the key.
inline Hyperparams hyperparams_from_config(const ConfigDoc& doc) {
    Hyperparams hp;
    hp.a0 = doc.get_double("a0", hp.a0);
    hp.b0 = doc.get_double("b0", hp.b0);
    hp.c0 = doc.get_double("c0", hp.c0);
    hp.d0 = doc.get_double("d0", hp.d0);
    hp.alpha0 = doc.get_double("alpha0", hp.alpha0);
    hp.beta0 = doc.get_double("beta0", hp.beta0);
    hp.sigma = doc.get_double("sigma", hp.sigma);
    hp.z0 = doc.get_double("z0", hp.z0);
    hp.rank = static_cast<int>(doc.get_int("rank", hp.rank));
    hp.max_iters = static_cast<int>(doc.get_int("max_iters", hp.max_iters));
    hp.tol = doc.get_double("tol", hp.tol);
    hp.seed = doc.get_uint64("seed", hp.seed);
    try {
        hp.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return hp;
}

inline const std::set<std::string>& hyperparam_keys() {
    static const std::set<std::string> keys = {"a0",   "b0",    "c0",        "d0",
                                               "alpha0", "beta0", "sigma",   "z0",
                                               "rank", "max_iters", "tol", "seed"};
    return keys;
}

// ---------------------------------------------------------------------------
// Results tables and run summaries
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// CSV table of grid rows. Wall time is reported only when `timing` is on;
/// otherwise the column is fixed at 0.000 so repeated runs are byte-identical.
inline std::string grid_csv(const std::vector<GridRow>& rows, bool timing = true) {
    std::string out = "R0,rho,trial,rrse,iou,iterations,seconds\n";
    char buf[64];
    for (const GridRow& row : rows) {
        out += std::to_string(row.r0);
        out += ',';
        std::snprintf(buf, sizeof(buf), "%g", row.rho);
        out += buf;
        out += ',';
        out += std::to_string(row.trial);
        out += ',';
        out += format_double(row.rrse);
        out += ',';
        out += format_double(row.iou);
        out += ',';
        out += std::to_string(row.iterations);
        out += ',';
        std::snprintf(buf, sizeof(buf), "%.3f", timing ? row.seconds : 0.0);
        out += buf;
        out += '\n';
    }
    return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace rpcc
