#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsb/tensor.hpp"

namespace nsb {

/// Raised when extents violate an operation's geometric precondition.
class GeometryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable or unsupported image file.
class ImageIOError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Real-valued H x W x C raster, row-major with interleaved channels.
/// Pixel data is nominally in [0, 1]; wavelet coefficients are not.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> values;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0);

    std::size_t size() const { return values.size(); }
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c) { return values[index(y, x, c)]; }
    double at(int y, int x, int c) const { return values[index(y, x, c)]; }

    bool same_geometry(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }
    std::string geometry() const;

    friend bool operator==(const Image&, const Image&) = default;
};

double max_abs_difference(const Image& a, const Image& b);

/// Binary PGM (P5, 1 channel) or PPM (P6, 3 channels), maxval up to 65535.
Image read_pnm(const std::filesystem::path& path);

/// Values are clamped to [0, 1] and quantized to 8 or 16 bits.
void write_pnm(const std::filesystem::path& path, const Image& image, int bits = 8);

/// Packs equally-shaped images into an [N, C, H, W] tensor.
template <typename T>
BasicTensor<T> images_to_tensor(std::span<const Image> images);

/// Extracts batch entry n of an [N, C, H, W] tensor.
template <typename T>
Image tensor_to_image(const BasicTensor<T>& tensor, std::size_t n);

}  // namespace nsb
