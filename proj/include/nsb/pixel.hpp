#pragma once

// Pixel-space counterpart of the wavelet codec: bilinear subsampling as the
// encoder and bilinear upsampling plus a learned residual as the decoder.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nsb/decoder.hpp"
#include "nsb/image.hpp"
#include "nsb/wavelet.hpp"

namespace nsb {

/// Half-pixel-centre bilinear reduction: output sample i reads input
/// coordinate (i + 0.5) * factor - 0.5. factor must be a power of two >= 2.
Image bilinear_downsample(const Image& image, int factor);

/// Half-pixel-centre bilinear enlargement with edge clamping.
Image bilinear_upsample(const Image& image, int factor);

struct PixelCode {
    int levels = 0;
    Image low;
    int original_height = 0;
    int original_width = 0;
    int channels = 0;
};

PixelCode pixel_encode(const Image& image, int levels);

/// bilinear_upsample(low, 2) + refiner residual at the doubled extent.
Image pixel_decode_level(const Image& low, const PixelRefiner<float>& refiner);

/// refiners[i] handles level i + 1.
Image pixel_decode(const PixelCode& code, std::span<const PixelRefiner<float>* const> refiners);

/// Inputs: upsampled level-l images; targets: residual to the level-(l-1) image.
RegressionSet make_pixel_regression_set(std::span<const Image> images, int level);

TrainResult<PixelRefiner<float>> train_pixel_refiner(std::span<const Image> train, std::span<const Image> validation,
                                                     int level, const TrainConfig& config, const UNetConfig& net = {});

struct ComparisonRow {
    std::string image_id;
    double wavelet_mse = 0.0;
    double pixel_mse = 0.0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    double mean_wavelet_mse = 0.0;
    double mean_pixel_mse = 0.0;
};

/// Per image: MSE of the zero-detail wavelet reconstruction and of bilinear
/// down + up by 2^levels, both against the original.
ComparisonReport compare_information_content(std::span<const Image> corpus, std::span<const std::string> ids,
                                             int levels, const FilterBank& fb);

/// CSV: image_id,wavelet_mse,pixel_mse
void write_comparison_csv(const std::filesystem::path& path, const ComparisonReport& report);

}  // namespace nsb
