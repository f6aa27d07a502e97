#include "nsb/config.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nsb/metrics.hpp"
#include "nsb/wavelet.hpp"

namespace nsb {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + value + "'");
    return out;
}

int parse_int_at_least(const std::string& key, const std::string& value, int lo) {
    const int v = parse_number<int>(key, value);
    if (v < lo) throw ConfigError(key + " must be >= " + std::to_string(lo) + ", got " + value);
    return v;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "wavelet") {
        try {
            make_filter_bank(value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("wavelet: ") + e.what());
        }
        wavelet = value;
    } else if (key == "levels") {
        levels = parse_int_at_least(key, value, 1);
        if (*levels > 16) throw ConfigError("levels must be <= 16, got " + value);
    } else if (key == "base_patch") {
        base_patch = parse_int_at_least(key, value, 1);
        if (!std::has_single_bit(static_cast<unsigned>(*base_patch))) {
            throw ConfigError("base_patch must be a power of two, got " + value);
        }
    } else if (key == "seed") {
        seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "learning_rate") {
        const double v = parse_number<double>(key, value);
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("learning_rate must be positive, got " + value);
        learning_rate = v;
    } else if (key == "batch_size") {
        batch_size = parse_int_at_least(key, value, 1);
    } else if (key == "iterations") {
        iterations = parse_int_at_least(key, value, 1);
    } else if (key == "corpus_dir") {
        if (value.empty()) throw ConfigError("corpus_dir is empty");
        corpus_dir = value;
    } else if (key == "output_dir") {
        if (value.empty()) throw ConfigError("output_dir is empty");
        output_dir = value;
    } else if (key == "feature_method") {
        try {
            parse_feature_method(value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        feature_method = value;
    } else if (key == "feature_dim") {
        feature_dim = parse_int_at_least(key, value, 2);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace nsb
