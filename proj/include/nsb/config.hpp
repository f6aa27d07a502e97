#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace nsb {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// key=value run settings; unset keys fall back to command defaults.
struct RunConfig {
    std::optional<std::string> wavelet;
    std::optional<int> levels;
    std::optional<int> base_patch;
    std::optional<std::uint64_t> seed;
    std::optional<double> learning_rate;
    std::optional<int> batch_size;
    std::optional<int> iterations;
    std::optional<std::filesystem::path> corpus_dir;
    std::optional<std::filesystem::path> output_dir;
    std::optional<std::string> feature_method;
    std::optional<int> feature_dim;

    /// Sets one key from its textual value, validating it.
    void set(const std::string& key, const std::string& value);
};

/// Blank lines and lines starting with '#' are ignored.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace nsb
