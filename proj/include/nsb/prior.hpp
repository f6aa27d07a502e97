#pragma once

// Class-conditional Gaussian prior over flattened TL bands, with the
// truncation trick applied as a scale on the noise.

#include <cstdint>
#include <span>
#include <vector>

#include "nsb/image.hpp"

namespace nsb {

struct SamplerModel {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::vector<double>> means;      // one per class, HWC order
    std::vector<std::vector<double>> variances;  // population variance

    int class_count() const { return static_cast<int>(means.size()); }
    std::size_t dim() const { return static_cast<std::size_t>(height) * width * channels; }
};

/// labels are 0-based and contiguous; every class needs >= 2 examples.
SamplerModel fit_sampler(std::span<const Image> tls, std::span<const int> labels);

/// z = mu_c + truncation * sigma_c * eps, eps ~ N(0, I), seeded.
std::vector<Image> sample(const SamplerModel& model, int cls, double truncation, int n, std::uint64_t seed);

/// Uniform draws with replacement from the TLs labelled `cls`.
std::vector<Image> empirical_sample(std::span<const Image> tls, std::span<const int> labels, int cls, int n,
                                    std::uint64_t seed);

inline constexpr std::uint16_t kSamplerVersion = 1;

/// "NSBP": u16 version, u16 classes, u32 height, u32 width, u8 channels, then
/// per class the mean array followed by the variance array as f32.
std::vector<std::uint8_t> serialize_sampler(const SamplerModel& model);
SamplerModel deserialize_sampler(std::span<const std::uint8_t> bytes);

}  // namespace nsb
