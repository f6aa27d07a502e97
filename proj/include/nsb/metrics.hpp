#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsb/image.hpp"

namespace nsb {

double mse(const Image& a, const Image& b);

/// 10 log10(peak^2 / mse). Identical images give +infinity.
double psnr(const Image& a, const Image& b, double peak = 1.0);

enum class FeatureMethod { pixel_moments, seeded_random_projection };

std::string feature_method_name(FeatureMethod method);
FeatureMethod parse_feature_method(const std::string& name);

/// pixel_moments: per-channel means over an 8x8 block grid, so the feature
/// dimension is 64 * channels and `dim` is not used.
/// seeded_random_projection: flattened pixels times a fixed Gaussian matrix
/// (entries N(0, 1) / sqrt(D)) drawn from `seed`.
struct FeatureSpec {
    FeatureMethod method = FeatureMethod::pixel_moments;
    int dim = 64;
    std::uint64_t seed = 0;
};

struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> variance;            // population variance per coordinate
    std::optional<std::vector<double>> covariance;  // row-major d x d, population
    std::size_t count = 0;

    std::size_t dim() const { return mean.size(); }
};

std::vector<std::vector<double>> compute_features(std::span<const Image> images, const FeatureSpec& spec);

/// Population moments over rows. Requires at least 2 rows.
FeatureStats feature_moments(std::span<const std::vector<double>> features, bool full_covariance = false);

FeatureStats extract_features(std::span<const Image> images, const FeatureSpec& spec, bool full_covariance = false);

/// Uses full covariances when both sides carry them, otherwise the diagonal
/// closed form.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

struct EvalRow {
    std::string metric;
    double value = 0.0;
    std::string set_a;
    std::string set_b;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    FeatureSpec spec;
    std::size_t feature_dim = 0;

    const EvalRow& row(const std::string& metric) const;
};

/// reconstructions[i] is compared against real[i] for MSE / PSNR.
EvalReport eval_report(std::span<const Image> real, std::span<const Image> generated,
                       std::span<const Image> reconstructions, const FeatureSpec& spec, bool full_covariance = false);

/// CSV: metric,value,set_a,set_b,n_a,n_b,feature_method,feature_dim,seed
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);
std::string eval_csv(const EvalReport& report);

}  // namespace nsb
