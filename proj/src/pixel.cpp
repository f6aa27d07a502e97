#include "nsb/pixel.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "nsb/metrics.hpp"
#include "nsb/pyramid.hpp"

namespace nsb {

namespace {

struct Tap {
    int i0;
    int i1;
    double frac;
};

// Source taps for one axis; `scale` maps output to input coordinates.
std::vector<Tap> axis_taps(int n_in, int n_out, double scale) {
    std::vector<Tap> taps(static_cast<std::size_t>(n_out));
    for (int i = 0; i < n_out; ++i) {
        double s = (i + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
        const int i0 = static_cast<int>(std::floor(s));
        const int i1 = std::min(i0 + 1, n_in - 1);
        taps[i] = {i0, i1, s - i0};
    }
    return taps;
}

Image resample(const Image& image, int out_h, int out_w, double scale) {
    const auto ty = axis_taps(image.height, out_h, scale);
    const auto tx = axis_taps(image.width, out_w, scale);
    Image rows(image.height, out_w, image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                const double a = image.at(y, tx[x].i0, c), b = image.at(y, tx[x].i1, c);
                rows.at(y, x, c) = a + tx[x].frac * (b - a);
            }
        }
    }
    Image out(out_h, out_w, image.channels);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                const double a = rows.at(ty[y].i0, x, c), b = rows.at(ty[y].i1, x, c);
                out.at(y, x, c) = a + ty[y].frac * (b - a);
            }
        }
    }
    return out;
}

void check_factor(int factor, const char* op) {
    if (factor < 2 || !std::has_single_bit(static_cast<unsigned>(factor))) {
        throw std::invalid_argument(std::string(op) + ": factor must be a power of two >= 2, got " + std::to_string(factor));
    }
}

}  // namespace

Image bilinear_downsample(const Image& image, int factor) {
    check_factor(factor, "bilinear_downsample");
    if (image.height % factor != 0 || image.width % factor != 0) {
        throw GeometryError("bilinear_downsample: " + image.geometry() + " not divisible by " + std::to_string(factor));
    }
    return resample(image, image.height / factor, image.width / factor, factor);
}

Image bilinear_upsample(const Image& image, int factor) {
    check_factor(factor, "bilinear_upsample");
    return resample(image, image.height * factor, image.width * factor, 1.0 / factor);
}

PixelCode pixel_encode(const Image& image, int levels) {
    if (levels < 1) throw std::invalid_argument("pixel_encode: levels must be >= 1");
    return {levels, bilinear_downsample(image, 1 << levels), image.height, image.width, image.channels};
}

Image pixel_decode_level(const Image& low, const PixelRefiner<float>& refiner) {
    if (low.height != low.width || 2 * low.height != refiner.target_extent() || low.channels != refiner.channels()) {
        throw GeometryError("pixel_decode_level: input " + low.geometry() + " does not upsample to the refiner extent " +
                            std::to_string(refiner.target_extent()));
    }
    Image out = bilinear_upsample(low, 2);
    const Image residual = refiner.residual(out);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += residual.values[i];
    return out;
}

Image pixel_decode(const PixelCode& code, std::span<const PixelRefiner<float>* const> refiners) {
    if (static_cast<int>(refiners.size()) != code.levels) {
        throw GeometryError("pixel_decode: code has " + std::to_string(code.levels) + " levels but " +
                            std::to_string(refiners.size()) + " refiners were supplied");
    }
    Image cur = code.low;
    for (int level = code.levels; level >= 1; --level) {
        if (!refiners[level - 1]) throw std::invalid_argument("pixel_decode: missing refiner for level " + std::to_string(level));
        cur = pixel_decode_level(cur, *refiners[level - 1]);
    }
    return cur;
}

RegressionSet make_pixel_regression_set(std::span<const Image> images, int level) {
    if (level < 1) throw std::invalid_argument("pixel regression set: level must be >= 1");
    RegressionSet set;
    for (const auto& image : images) {
        const Image target = level == 1 ? image : bilinear_downsample(image, 1 << (level - 1));
        const Image up = bilinear_upsample(bilinear_downsample(target, 2), 2);
        const auto C = static_cast<std::size_t>(up.channels), H = static_cast<std::size_t>(up.height),
                   W = static_cast<std::size_t>(up.width);
        if (set.inputs.empty()) set.input_shape = set.target_shape = {C, H, W};
        if (set.input_shape != Shape{C, H, W}) throw GeometryError("pixel regression set: images differ in geometry");
        std::vector<float> in(C * H * W), res(C * H * W);
        for (std::size_t p = 0; p < H * W; ++p) {
            for (std::size_t c = 0; c < C; ++c) {
                in[c * H * W + p] = static_cast<float>(up.values[p * C + c]);
                res[c * H * W + p] = static_cast<float>(target.values[p * C + c] - up.values[p * C + c]);
            }
        }
        set.inputs.push_back(std::move(in));
        set.targets.push_back(std::move(res));
    }
    return set;
}

TrainResult<PixelRefiner<float>> train_pixel_refiner(std::span<const Image> train, std::span<const Image> validation,
                                                     int level, const TrainConfig& config, const UNetConfig& net) {
    if (train.empty()) throw std::invalid_argument("train_pixel_refiner: empty dataset");
    const auto train_set = make_pixel_regression_set(train, level);
    if (train_set.input_shape[1] != train_set.input_shape[2]) throw GeometryError("pixel refiner needs square images");
    PixelRefiner<float> refiner(level, static_cast<int>(train_set.input_shape[1]), static_cast<int>(train_set.input_shape[0]),
                                net, config.seed, /*zero_output=*/true);
    std::optional<RegressionSet> val_set;
    if (!validation.empty()) val_set = make_pixel_regression_set(validation, level);
    try {
        auto fit = fit_unet(refiner.net(), train_set, val_set ? &*val_set : nullptr, config);
        return {std::move(refiner), std::move(fit)};
    } catch (TrainingDiverged& e) {
        e.checkpoint = encode_checkpoint(refiner_checkpoint(refiner));
        throw;
    }
}

ComparisonReport compare_information_content(std::span<const Image> corpus, std::span<const std::string> ids,
                                             int levels, const FilterBank& fb) {
    if (corpus.empty()) throw std::invalid_argument("compare_information_content: empty corpus");
    if (ids.size() != corpus.size()) throw std::invalid_argument("compare_information_content: one id per image required");
    ComparisonReport report;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Image& image = corpus[i];
        auto quads = full_decompose(image, levels, fb);
        for (auto& q : quads) {
            for (Image* band : {&q.tr, &q.bl, &q.br}) std::fill(band->values.begin(), band->values.end(), 0.0);
        }
        const Image wavelet = reconstruct_from_decomposition(quads, fb);
        const Image pixel = bilinear_upsample(bilinear_downsample(image, 1 << levels), 1 << levels);
        report.rows.push_back({ids[i], mse(wavelet, image), mse(pixel, image)});
        report.mean_wavelet_mse += report.rows.back().wavelet_mse;
        report.mean_pixel_mse += report.rows.back().pixel_mse;
    }
    report.mean_wavelet_mse /= static_cast<double>(corpus.size());
    report.mean_pixel_mse /= static_cast<double>(corpus.size());
    return report;
}

void write_comparison_csv(const std::filesystem::path& path, const ComparisonReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "image_id,wavelet_mse,pixel_mse\n" << std::setprecision(10);
    for (const auto& r : report.rows) out << r.image_id << ',' << r.wavelet_mse << ',' << r.pixel_mse << '\n';
}

}  // namespace nsb
