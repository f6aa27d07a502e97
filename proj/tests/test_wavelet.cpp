#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "nsb/wavelet.hpp"

using namespace nsb;

namespace {

const double r2 = std::sqrt(2.0);

Image random_image(int h, int w, int c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w, c);
    for (auto& v : img.values) v = u(rng);
    return img;
}

double max_abs(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(FilterBank, HaarCoefficients) {
    const auto fb = make_filter_bank("haar");
    ASSERT_EQ(fb.analysis_low.coeffs.size(), 2u);
    EXPECT_DOUBLE_EQ(fb.analysis_low.coeffs[0], 1 / r2);
    EXPECT_DOUBLE_EQ(fb.analysis_low.coeffs[1], 1 / r2);
    EXPECT_DOUBLE_EQ(fb.analysis_high.coeffs[0], 1 / r2);
    EXPECT_DOUBLE_EQ(fb.analysis_high.coeffs[1], -1 / r2);
    EXPECT_EQ(fb.synthesis_low.coeffs, fb.analysis_low.coeffs);
}

TEST(FilterBank, Bior22MatchesPublishedTable) {
    // 5/3 spline decomposition filters as tabulated by PyWavelets (bior2.2).
    const auto fb = make_filter_bank("bior2.2");
    const std::vector<double> lo = {-0.1767766952966369, 0.3535533905932738, 1.0606601717798214, 0.3535533905932738,
                                    -0.1767766952966369};
    const std::vector<double> hi = {0.3535533905932738, -0.7071067811865476, 0.3535533905932738};
    ASSERT_EQ(fb.analysis_low.coeffs.size(), lo.size());
    ASSERT_EQ(fb.analysis_high.coeffs.size(), hi.size());
    for (std::size_t i = 0; i < lo.size(); ++i) EXPECT_NEAR(fb.analysis_low.coeffs[i], lo[i], 1e-15);
    for (std::size_t i = 0; i < hi.size(); ++i) EXPECT_NEAR(fb.analysis_high.coeffs[i], hi[i], 1e-15);
}

TEST(FilterBank, HighPassKillsDc) {
    for (const auto& name : supported_wavelets()) {
        const auto fb = make_filter_bank(name);
        const double s = std::accumulate(fb.analysis_high.coeffs.begin(), fb.analysis_high.coeffs.end(), 0.0);
        EXPECT_NEAR(s, 0.0, 1e-12) << name;
    }
}

TEST(FilterBank, UnknownNameListsSupported) {
    try {
        make_filter_bank("db4");
        FAIL();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("haar"), std::string::npos);
        EXPECT_NE(msg.find("bior2.2"), std::string::npos);
    }
}

TEST(Dwt1d, HaarExamples) {
    const auto fb = make_filter_bank("haar");
    const std::vector<double> ones = {1, 1, 1, 1};
    auto s = dwt1d(ones, fb);
    EXPECT_NEAR(s.approx[0], r2, 1e-15);
    EXPECT_NEAR(s.approx[1], r2, 1e-15);
    EXPECT_EQ(s.detail, (std::vector<double>{0, 0}));

    const std::vector<double> alt = {1, -1, 1, -1};
    s = dwt1d(alt, fb);
    EXPECT_NEAR(s.approx[0], 0.0, 1e-15);
    EXPECT_NEAR(s.detail[0], r2, 1e-15);
    EXPECT_NEAR(s.detail[1], r2, 1e-15);

    const std::vector<double> a = {r2, r2}, d = {0, 0};
    const auto x = idwt1d(a, d, fb);
    ASSERT_EQ(x.size(), 4u);
    for (double v : x) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Dwt1d, Errors) {
    const auto fb = make_filter_bank("bior2.2");
    const std::vector<double> odd = {1, 2, 3};
    EXPECT_THROW(dwt1d(odd, fb), GeometryError);
    const std::vector<double> a = {1, 2}, d = {1};
    EXPECT_THROW(idwt1d(a, d, fb), GeometryError);
}

TEST(Dwt1d, ZeroBandsGiveZeroSignal) {
    const auto fb = make_filter_bank("bior2.2");
    const std::vector<double> z(4, 0.0);
    for (double v : idwt1d(z, z, fb)) EXPECT_EQ(v, 0.0);
}

// Property: perfect reconstruction and linearity for random even lengths.
TEST(Dwt1d, PerfectReconstructionAndLinearity) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> len(1, 40);
    for (const auto& name : supported_wavelets()) {
        const auto fb = make_filter_bank(name);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 2 * static_cast<std::size_t>(len(rng));
            std::vector<double> x(n), y(n), z(n);
            for (auto& v : x) v = u(rng);
            for (auto& v : y) v = u(rng);
            const double a = u(rng), b = u(rng);
            for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
            const auto sx = dwt1d(x, fb), sy = dwt1d(y, fb), sz = dwt1d(z, fb);
            EXPECT_LT(max_abs(idwt1d(sx.approx, sx.detail, fb), x), 1e-8) << name << " n=" << n;
            for (std::size_t k = 0; k < n / 2; ++k) {
                EXPECT_NEAR(sz.approx[k], a * sx.approx[k] + b * sy.approx[k], 1e-8);
                EXPECT_NEAR(sz.detail[k], a * sx.detail[k] + b * sy.detail[k], 1e-8);
            }
        }
    }
}

TEST(Dwt2d, HaarConstantImage) {
    const auto fb = make_filter_bank("haar");
    const double c = 0.37;
    const Image img(6, 4, 3, c);
    const auto q = dwt2d(img, fb);
    EXPECT_EQ(q.tl.height, 3);
    EXPECT_EQ(q.tl.width, 2);
    for (double v : q.tl.values) EXPECT_NEAR(v, 2 * c, 1e-10);
    for (const Image* band : {&q.tr, &q.bl, &q.br}) {
        for (double v : band->values) EXPECT_NEAR(v, 0.0, 1e-10);
    }
    QuadDecomposition only_tl{Image(3, 2, 3, 2 * c), Image(3, 2, 3), Image(3, 2, 3), Image(3, 2, 3)};
    for (double v : idwt2d(only_tl, fb).values) EXPECT_NEAR(v, c, 1e-10);
}

TEST(Dwt2d, ConstantKillsHighBandsForEveryBank) {
    for (const auto& name : supported_wavelets()) {
        const auto q = dwt2d(Image(8, 8, 1, 0.6), make_filter_bank(name));
        for (const Image* band : {&q.tr, &q.bl, &q.br}) {
            for (double v : band->values) EXPECT_NEAR(v, 0.0, 1e-10) << name;
        }
    }
}

TEST(Dwt2d, BandOrientation) {
    // Vertical stripes vary along width: energy lands in tr, not bl.
    const auto fb = make_filter_bank("haar");
    Image img(4, 4, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) img.at(y, x, 0) = x % 2;
    const auto q = dwt2d(img, fb);
    double tr = 0, bl = 0;
    for (double v : q.tr.values) tr += v * v;
    for (double v : q.bl.values) bl += v * v;
    EXPECT_GT(tr, 0.5);
    EXPECT_NEAR(bl, 0.0, 1e-12);
}

TEST(Dwt2d, SeparableRowsThenColumnsBitExact) {
    std::mt19937_64 rng(2);
    const auto fb = make_filter_bank("bior2.2");
    const Image img = random_image(8, 6, 3, rng);
    const auto q = dwt2d(img, fb);
    const int H = img.height, W = img.width, C = img.channels;
    for (int c = 0; c < C; ++c) {
        std::vector<std::vector<double>> lo(H), hi(H);
        for (int y = 0; y < H; ++y) {
            std::vector<double> row(W);
            for (int x = 0; x < W; ++x) row[x] = img.at(y, x, c);
            auto s = dwt1d(row, fb);
            lo[y] = s.approx;
            hi[y] = s.detail;
        }
        for (int x = 0; x < W / 2; ++x) {
            std::vector<double> col_lo(H), col_hi(H);
            for (int y = 0; y < H; ++y) {
                col_lo[y] = lo[y][x];
                col_hi[y] = hi[y][x];
            }
            const auto a = dwt1d(col_lo, fb), b = dwt1d(col_hi, fb);
            for (int y = 0; y < H / 2; ++y) {
                EXPECT_EQ(q.tl.at(y, x, c), a.approx[y]);
                EXPECT_EQ(q.bl.at(y, x, c), a.detail[y]);
                EXPECT_EQ(q.tr.at(y, x, c), b.approx[y]);
                EXPECT_EQ(q.br.at(y, x, c), b.detail[y]);
            }
        }
    }
}

TEST(Dwt2d, RoundTripAndLinearity) {
    std::mt19937_64 rng(4);
    for (const auto& name : supported_wavelets()) {
        const auto fb = make_filter_bank(name);
        const Image x = random_image(64, 64, 3, rng), y = random_image(64, 64, 3, rng);
        EXPECT_LT(max_abs_difference(idwt2d(dwt2d(x, fb), fb), x), 1e-8) << name;
        Image z = x;
        for (std::size_t i = 0; i < z.size(); ++i) z.values[i] = 2.0 * x.values[i] - 0.5 * y.values[i];
        const auto qx = dwt2d(x, fb), qy = dwt2d(y, fb), qz = dwt2d(z, fb);
        for (std::size_t i = 0; i < qz.br.size(); ++i) {
            EXPECT_NEAR(qz.br.values[i], 2.0 * qx.br.values[i] - 0.5 * qy.br.values[i], 1e-8);
            EXPECT_NEAR(qz.tl.values[i], 2.0 * qx.tl.values[i] - 0.5 * qy.tl.values[i], 1e-8);
        }
    }
}

TEST(Dwt2d, Errors) {
    const auto fb = make_filter_bank("haar");
    EXPECT_THROW(dwt2d(Image(5, 4, 1), fb), GeometryError);
    EXPECT_THROW(dwt2d(Image(4, 3, 1), fb), GeometryError);
    QuadDecomposition q{Image(2, 2, 1), Image(2, 2, 1), Image(2, 3, 1), Image(2, 2, 1)};
    EXPECT_THROW(idwt2d(q, fb), GeometryError);
}
