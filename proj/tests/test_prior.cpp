#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nsb/binary_io.hpp"
#include "nsb/prior.hpp"

using namespace nsb;

namespace {

Image random_image(int h, int w, int c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w, c);
    for (auto& v : img.values) v = u(rng);
    return img;
}

SamplerModel random_model(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Image> tls;
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) {
        tls.push_back(random_image(4, 4, 3, rng));
        labels.push_back(i % 3);
    }
    return fit_sampler(tls, labels);
}

FormatErrorKind sampler_error(std::vector<std::uint8_t> bytes) {
    try {
        deserialize_sampler(bytes);
    } catch (const FormatError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "corrupted sampler accepted";
    return FormatErrorKind::malformed;
}

}  // namespace

TEST(FitSampler, TwoExamplePopulationStatistics) {
    const std::vector<Image> tls{Image(2, 2, 1, 0.0), Image(2, 2, 1, 2.0)};
    const std::vector<int> labels{0, 0};
    const auto m = fit_sampler(tls, labels);
    ASSERT_EQ(m.class_count(), 1);
    EXPECT_EQ(m.dim(), 4u);
    for (double v : m.means[0]) EXPECT_DOUBLE_EQ(v, 1.0);
    for (double v : m.variances[0]) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(FitSampler, MatchesTwoPassOracle) {
    std::mt19937_64 rng(1);
    std::vector<Image> tls;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        Image img = random_image(2, 2, 3, rng);
        for (auto& v : img.values) v = 1e4 + v;
        tls.push_back(img);
        labels.push_back(i % 2);
    }
    const auto m = fit_sampler(tls, labels);
    for (int c = 0; c < 2; ++c) {
        for (std::size_t d = 0; d < m.dim(); ++d) {
            double mean = 0.0, n = 0.0;
            for (std::size_t i = 0; i < tls.size(); ++i)
                if (labels[i] == c) mean += tls[i].values[d], n += 1;
            mean /= n;
            double var = 0.0;
            for (std::size_t i = 0; i < tls.size(); ++i)
                if (labels[i] == c) var += (tls[i].values[d] - mean) * (tls[i].values[d] - mean);
            var /= n;
            EXPECT_NEAR(m.means[c][d], mean, 1e-9);
            EXPECT_NEAR(m.variances[c][d], var, 1e-9);
        }
    }
}

TEST(FitSampler, Errors) {
    const std::vector<Image> tls{Image(2, 2, 1), Image(2, 2, 1), Image(2, 2, 1)};
    try {
        fit_sampler(tls, std::vector<int>{0, 0, 1});
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
    }
    EXPECT_THROW(fit_sampler(tls, std::vector<int>{0, 0}), std::invalid_argument);
    const std::vector<Image> mixed{Image(2, 2, 1), Image(4, 4, 1)};
    EXPECT_ANY_THROW(fit_sampler(mixed, std::vector<int>{0, 0}));
}

TEST(Sample, ZeroVarianceReturnsMean) {
    const std::vector<Image> tls{Image(2, 2, 3, 0.25), Image(2, 2, 3, 0.25)};
    const auto m = fit_sampler(tls, std::vector<int>{0, 0});
    for (double t : {0.1, 1.0})
        for (const auto& s : sample(m, 0, t, 3, 9)) EXPECT_EQ(s, Image(2, 2, 3, 0.25));
}

TEST(Sample, TruncationScalesSpread) {
    SamplerModel m{1, 2, 1, {{0.5, -1.0}}, {{4.0, 0.25}}};
    const int n = 20000;
    for (double t : {1.0, 0.5}) {
        const auto s = sample(m, 0, t, n, 3);
        ASSERT_EQ(s.size(), static_cast<std::size_t>(n));
        for (int d = 0; d < 2; ++d) {
            double mean = 0.0;
            for (const auto& img : s) mean += img.values[d];
            mean /= n;
            double var = 0.0;
            for (const auto& img : s) var += (img.values[d] - mean) * (img.values[d] - mean);
            var /= n;
            const double sd = t * std::sqrt(m.variances[0][d]);
            EXPECT_NEAR(mean, m.means[0][d], 4 * sd / std::sqrt(n));
            EXPECT_NEAR(std::sqrt(var), sd, 0.03 * sd);
        }
    }
}

TEST(Sample, SeededAndDeterministic) {
    const auto m = random_model(2);
    const auto a = sample(m, 1, 0.8, 4, 11), b = sample(m, 1, 0.8, 4, 11), c = sample(m, 1, 0.8, 4, 12);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_NE(a[0], a[1]);
    EXPECT_EQ(a[0].height, 4);
    EXPECT_EQ(a[0].channels, 3);
}

TEST(Sample, Errors) {
    const auto m = random_model(3);
    EXPECT_THROW(sample(m, 0, 0.0, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample(m, 0, 1.5, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample(m, 0, 0.5, 0, 0), std::invalid_argument);
    EXPECT_THROW(sample(m, 3, 0.5, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample(m, -1, 0.5, 1, 0), std::invalid_argument);
}

TEST(EmpiricalSample, DrawsOnlyFromClass) {
    std::vector<Image> tls;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
        tls.emplace_back(2, 2, 1, static_cast<double>(i));
        labels.push_back(i % 2);
    }
    const auto s = empirical_sample(tls, labels, 1, 50, 4);
    ASSERT_EQ(s.size(), 50u);
    for (const auto& img : s) EXPECT_EQ(static_cast<int>(img.values[0]) % 2, 1);
    EXPECT_EQ(s, empirical_sample(tls, labels, 1, 50, 4));
    EXPECT_THROW(empirical_sample(tls, labels, 5, 1, 4), std::invalid_argument);
}

TEST(SamplerContainer, RoundTrip) {
    const auto m = random_model(5);
    const auto bytes = serialize_sampler(m);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NSBP");
    // 4 magic + 2 version + 2 classes + 4 + 4 + 1, then f32 mean and variance per class
    EXPECT_EQ(bytes.size(), 17u + 3u * 2u * 48u * 4u);
    const auto back = deserialize_sampler(bytes);
    EXPECT_EQ(back.class_count(), 3);
    EXPECT_EQ(back.height, 4);
    EXPECT_EQ(serialize_sampler(back), bytes);
    for (int c = 0; c < 3; ++c)
        for (std::size_t d = 0; d < m.dim(); ++d) EXPECT_NEAR(back.means[c][d], m.means[c][d], 1e-6);
}

TEST(SamplerContainer, DistinctFaults) {
    const auto good = serialize_sampler(random_model(6));
    auto magic = good;
    magic[0] = 'M';
    EXPECT_EQ(sampler_error(magic), FormatErrorKind::bad_magic);
    EXPECT_EQ(sampler_error({good.begin(), good.end() - 3}), FormatErrorKind::truncated_payload);
    auto version = good;
    version[4] = 9;
    EXPECT_EQ(sampler_error(version), FormatErrorKind::version_mismatch);
    auto extra = good;
    extra.push_back(1);
    EXPECT_EQ(sampler_error(extra), FormatErrorKind::malformed);
}
