#include "nsb/wavelet.hpp"

#include <cmath>
#include <stdexcept>

namespace nsb {

std::vector<std::string> supported_wavelets() { return {"haar", "bior2.2"}; }

FilterBank make_filter_bank(std::string_view name) {
    const double s = std::sqrt(2.0);
    if (name == "haar") {
        const double r = 1.0 / s;
        return {"haar", {{r, r}, 0}, {{r, -r}, 0}, {{r, r}, 0}, {{r, -r}, 0}};
    }
    if (name == "bior2.2") {
        return {"bior2.2",
                {{-s / 8, s / 4, 3 * s / 4, s / 4, -s / 8}, 2},
                {{s / 4, -s / 2, s / 4}, 0},
                {{s / 4, s / 2, s / 4}, 1},
                {{s / 8, s / 4, -3 * s / 4, s / 4, s / 8}, 1}};
    }
    std::string names;
    for (const auto& n : supported_wavelets()) names += (names.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown wavelet '" + std::string(name) + "' (supported: " + names + ")");
}

namespace {

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    return static_cast<std::size_t>(((i % m) + m) % m);
}

void analyze(std::span<const double> x, const FilterTaps& taps, std::span<double> out) {
    const std::size_t n = x.size();
    for (std::size_t k = 0; k < out.size(); ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < taps.coeffs.size(); ++j) {
            acc += taps.coeffs[j] * x[wrap(static_cast<std::ptrdiff_t>(2 * k + j) - taps.origin, n)];
        }
        out[k] = acc;
    }
}

void synthesize(std::span<const double> band, const FilterTaps& taps, std::span<double> out) {
    const std::size_t n = out.size();
    for (std::size_t k = 0; k < band.size(); ++k) {
        for (std::size_t j = 0; j < taps.coeffs.size(); ++j) {
            out[wrap(static_cast<std::ptrdiff_t>(2 * k + j) - taps.origin, n)] += taps.coeffs[j] * band[k];
        }
    }
}

}  // namespace

Subbands1D dwt1d(std::span<const double> signal, const FilterBank& fb, Boundary) {
    if (signal.size() < 2 || signal.size() % 2 != 0) {
        throw GeometryError("dwt1d: signal length must be even and >= 2, got " + std::to_string(signal.size()));
    }
    Subbands1D out{std::vector<double>(signal.size() / 2), std::vector<double>(signal.size() / 2)};
    analyze(signal, fb.analysis_low, out.approx);
    analyze(signal, fb.analysis_high, out.detail);
    return out;
}

std::vector<double> idwt1d(std::span<const double> approx, std::span<const double> detail, const FilterBank& fb,
                           Boundary) {
    if (approx.size() != detail.size() || approx.empty()) {
        throw GeometryError("idwt1d: approx/detail lengths " + std::to_string(approx.size()) + " and " +
                            std::to_string(detail.size()) + " must be equal and non-zero");
    }
    std::vector<double> out(2 * approx.size(), 0.0);
    synthesize(approx, fb.synthesis_low, out);
    synthesize(detail, fb.synthesis_high, out);
    return out;
}

namespace {

// Splits along width: low half and high half, each H x W/2.
std::pair<Image, Image> split_rows(const Image& img, const FilterBank& fb) {
    const int half = img.width / 2;
    Image low(img.height, half, img.channels), high(img.height, half, img.channels);
    std::vector<double> row(img.width);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) row[x] = img.at(y, x, c);
            const auto bands = dwt1d(row, fb);
            for (int x = 0; x < half; ++x) {
                low.at(y, x, c) = bands.approx[x];
                high.at(y, x, c) = bands.detail[x];
            }
        }
    }
    return {std::move(low), std::move(high)};
}

std::pair<Image, Image> split_columns(const Image& img, const FilterBank& fb) {
    const int half = img.height / 2;
    Image low(half, img.width, img.channels), high(half, img.width, img.channels);
    std::vector<double> col(img.height);
    for (int c = 0; c < img.channels; ++c) {
        for (int x = 0; x < img.width; ++x) {
            for (int y = 0; y < img.height; ++y) col[y] = img.at(y, x, c);
            const auto bands = dwt1d(col, fb);
            for (int y = 0; y < half; ++y) {
                low.at(y, x, c) = bands.approx[y];
                high.at(y, x, c) = bands.detail[y];
            }
        }
    }
    return {std::move(low), std::move(high)};
}

Image merge_columns(const Image& low, const Image& high, const FilterBank& fb) {
    Image out(2 * low.height, low.width, low.channels);
    std::vector<double> a(low.height), d(low.height);
    for (int c = 0; c < low.channels; ++c) {
        for (int x = 0; x < low.width; ++x) {
            for (int y = 0; y < low.height; ++y) {
                a[y] = low.at(y, x, c);
                d[y] = high.at(y, x, c);
            }
            const auto col = idwt1d(a, d, fb);
            for (int y = 0; y < out.height; ++y) out.at(y, x, c) = col[y];
        }
    }
    return out;
}

Image merge_rows(const Image& low, const Image& high, const FilterBank& fb) {
    Image out(low.height, 2 * low.width, low.channels);
    std::vector<double> a(low.width), d(low.width);
    for (int c = 0; c < low.channels; ++c) {
        for (int y = 0; y < low.height; ++y) {
            for (int x = 0; x < low.width; ++x) {
                a[x] = low.at(y, x, c);
                d[x] = high.at(y, x, c);
            }
            const auto row = idwt1d(a, d, fb);
            for (int x = 0; x < out.width; ++x) out.at(y, x, c) = row[x];
        }
    }
    return out;
}

}  // namespace

QuadDecomposition dwt2d(const Image& image, const FilterBank& fb) {
    if (image.height % 2 != 0 || image.width % 2 != 0) {
        throw GeometryError("dwt2d: extents must be even, got " + image.geometry());
    }
    auto [low, high] = split_rows(image, fb);
    auto [ll, lh] = split_columns(low, fb);
    auto [hl, hh] = split_columns(high, fb);
    return {std::move(ll), std::move(hl), std::move(lh), std::move(hh)};
}

Image idwt2d(const QuadDecomposition& quad, const FilterBank& fb) {
    if (!quad.tl.same_geometry(quad.tr) || !quad.tl.same_geometry(quad.bl) || !quad.tl.same_geometry(quad.br)) {
        throw GeometryError("idwt2d: band geometries differ (tl " + quad.tl.geometry() + ", tr " + quad.tr.geometry() +
                            ", bl " + quad.bl.geometry() + ", br " + quad.br.geometry() + ")");
    }
    const Image low = merge_columns(quad.tl, quad.bl, fb);
    const Image high = merge_columns(quad.tr, quad.br, fb);
    return merge_rows(low, high, fb);
}

}  // namespace nsb
