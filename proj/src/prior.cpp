#include "nsb/prior.hpp"

#include <random>
#include <stdexcept>
#include <string>

#include "nsb/binary_io.hpp"

namespace nsb {

namespace {

void check_class(const SamplerModel& model, int cls) {
    if (cls < 0 || cls >= model.class_count()) {
        throw std::invalid_argument("unknown class " + std::to_string(cls) + " (model has " +
                                    std::to_string(model.class_count()) + " classes)");
    }
}

}  // namespace

SamplerModel fit_sampler(std::span<const Image> tls, std::span<const int> labels) {
    if (tls.size() != labels.size()) throw std::invalid_argument("fit_sampler: one label per TL required");
    if (tls.empty()) throw std::invalid_argument("fit_sampler: empty dataset");
    int classes = 0;
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("fit_sampler: negative label " + std::to_string(l));
        classes = std::max(classes, l + 1);
    }
    SamplerModel model;
    model.height = tls[0].height;
    model.width = tls[0].width;
    model.channels = tls[0].channels;
    const std::size_t d = model.dim();
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    model.means.assign(static_cast<std::size_t>(classes), std::vector<double>(d, 0.0));
    model.variances.assign(static_cast<std::size_t>(classes), std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < tls.size(); ++i) {
        if (!tls[i].same_geometry(tls[0])) throw GeometryError("fit_sampler: TLs differ in geometry");
        auto& m = model.means[labels[i]];
        for (std::size_t k = 0; k < d; ++k) m[k] += tls[i].values[k];
        ++counts[labels[i]];
    }
    for (int c = 0; c < classes; ++c) {
        if (counts[c] < 2) {
            throw std::invalid_argument("fit_sampler: class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                                        " examples, need at least 2");
        }
        for (auto& v : model.means[c]) v /= counts[c];
    }
    for (std::size_t i = 0; i < tls.size(); ++i) {
        const auto& m = model.means[labels[i]];
        auto& var = model.variances[labels[i]];
        for (std::size_t k = 0; k < d; ++k) {
            const double c = tls[i].values[k] - m[k];
            var[k] += c * c;
        }
    }
    for (int c = 0; c < classes; ++c) {
        for (auto& v : model.variances[c]) v /= counts[c];
    }
    return model;
}

std::vector<Image> sample(const SamplerModel& model, int cls, double truncation, int n, std::uint64_t seed) {
    check_class(model, cls);
    if (!(truncation > 0.0 && truncation <= 1.0)) {
        throw std::invalid_argument("truncation must lie in (0, 1], got " + std::to_string(truncation));
    }
    if (n < 1) throw std::invalid_argument("sample count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto& mu = model.means[cls];
    const auto& var = model.variances[cls];
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        Image img(model.height, model.width, model.channels);
        for (std::size_t k = 0; k < img.size(); ++k) {
            img.values[k] = mu[k] + truncation * std::sqrt(var[k]) * normal(rng);
        }
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<Image> empirical_sample(std::span<const Image> tls, std::span<const int> labels, int cls, int n,
                                    std::uint64_t seed) {
    if (tls.size() != labels.size()) throw std::invalid_argument("empirical_sample: one label per TL required");
    if (n < 1) throw std::invalid_argument("sample count must be >= 1");
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == cls) members.push_back(i);
    }
    if (members.empty()) throw std::invalid_argument("unknown class " + std::to_string(cls));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    std::vector<Image> out;
    for (int s = 0; s < n; ++s) out.push_back(tls[members[pick(rng)]]);
    return out;
}

std::vector<std::uint8_t> serialize_sampler(const SamplerModel& model) {
    ByteWriter w;
    w.put_bytes("NSBP");
    w.put_u16(kSamplerVersion);
    w.put_u16(static_cast<std::uint16_t>(model.class_count()));
    w.put_u32(static_cast<std::uint32_t>(model.height));
    w.put_u32(static_cast<std::uint32_t>(model.width));
    w.put_u8(static_cast<std::uint8_t>(model.channels));
    for (int c = 0; c < model.class_count(); ++c) {
        for (double v : model.means[c]) w.put_f32(static_cast<float>(v));
        for (double v : model.variances[c]) w.put_f32(static_cast<float>(v));
    }
    return std::move(w).take();
}

SamplerModel deserialize_sampler(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("NSBP");
    r.expect_version(kSamplerVersion);
    const int classes = r.u16();
    SamplerModel model;
    model.height = static_cast<int>(r.u32());
    model.width = static_cast<int>(r.u32());
    model.channels = r.u8();
    if (classes < 1 || model.height < 1 || model.width < 1 || (model.channels != 1 && model.channels != 3)) {
        throw FormatError(FormatErrorKind::malformed, "NSBP header has invalid geometry or class count");
    }
    const std::size_t d = model.dim();
    if (r.remaining() < static_cast<std::size_t>(classes) * d * 8) {
        throw FormatError(FormatErrorKind::truncated_payload, "NSBP payload shorter than its header declares");
    }
    for (int c = 0; c < classes; ++c) {
        std::vector<double> m(d), v(d);
        for (auto& x : m) x = r.f32();
        for (auto& x : v) {
            x = r.f32();
            if (!(x >= 0.0)) throw FormatError(FormatErrorKind::malformed, "NSBP variance is negative or NaN");
        }
        model.means.push_back(std::move(m));
        model.variances.push_back(std::move(v));
    }
    r.expect_end("NSBP");
    return model;
}

}  // namespace nsb
