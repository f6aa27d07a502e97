#include <gtest/gtest.h>

#include <random>

#include "nsb/binary_io.hpp"
#include "nsb/pyramid.hpp"

using namespace nsb;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w, c);
    for (auto& v : img.values) v = u(rng);
    return img;
}

const FilterBank& bior() {
    static const FilterBank fb = make_filter_bank("bior2.2");
    return fb;
}

FormatErrorKind code_error(std::vector<std::uint8_t> bytes) {
    try {
        deserialize_code(bytes);
    } catch (const FormatError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "corrupted container accepted";
    return FormatErrorKind::malformed;
}

}  // namespace

TEST(Encode, LatentGeometry) {
    const Image img = random_image(256, 256, 3, 1);
    const auto code = encode(img, 2, bior());
    EXPECT_EQ(code.tl.height, 64);
    EXPECT_EQ(code.tl.width, 64);
    EXPECT_EQ(code.tl.channels, 3);
    EXPECT_EQ(img.size(), 16 * code.tl.size());
    EXPECT_EQ(code.original_height, 256);
    EXPECT_EQ(code.wavelet_name, "bior2.2");
}

TEST(Encode, HaarConstantGivesTwiceC) {
    const auto code = encode(Image(8, 8, 1, 0.3), 1, make_filter_bank("haar"));
    for (double v : code.tl.values) EXPECT_NEAR(v, 0.6, 1e-12);
}

TEST(Encode, PrefixComposition) {
    const Image img = random_image(32, 64, 3, 2);
    const auto two = encode(img, 2, bior());
    const auto one = encode(encode(img, 1, bior()).tl, 1, bior());
    EXPECT_EQ(two.tl, one.tl);
}

TEST(Encode, Errors) {
    EXPECT_THROW(encode(Image(8, 8, 1), 0, bior()), std::invalid_argument);
    try {
        encode(Image(12, 16, 1), 3, bior());
        FAIL();
    } catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("height"), std::string::npos);
    }
    try {
        encode(Image(16, 12, 1), 3, bior());
        FAIL();
    } catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
    }
}

TEST(FullDecompose, ExtentsAndLosslessComposition) {
    const Image img = random_image(256, 256, 3, 3);
    const auto quads = full_decompose(img, 2, bior());
    ASSERT_EQ(quads.size(), 2u);
    EXPECT_EQ(quads[0].tr.height, 128);
    EXPECT_EQ(quads[1].br.height, 64);
    EXPECT_EQ(quads.back().tl, encode(img, 2, bior()).tl);
    EXPECT_LT(max_abs_difference(reconstruct_from_decomposition(quads, bior()), img), 1e-8);
}

TEST(Patches, HeadCountsFollowGeometry) {
    EXPECT_EQ(slice_to_base_patches(random_image(64, 64, 3, 4), 32, bior()).patches.size(), 4u);
    EXPECT_EQ(slice_to_base_patches(random_image(128, 128, 3, 5), 32, bior()).patches.size(), 16u);
    EXPECT_EQ((LevelGeometry{64, 32, 3}.head_count()), 12);
    EXPECT_EQ((LevelGeometry{128, 32, 3}.head_count()), 48);
    EXPECT_EQ((LevelGeometry{32, 32, 3}.head_count()), 3);
    EXPECT_EQ((LevelGeometry{128, 32, 3}.slice_depth()), 2);
}

TEST(Patches, SinglePatchIsIdentity) {
    const Image band = random_image(32, 32, 3, 6);
    const auto grid = slice_to_base_patches(band, 32, bior());
    ASSERT_EQ(grid.patches.size(), 1u);
    EXPECT_EQ(grid.patches[0], band);
    EXPECT_EQ(assemble_from_patches(grid, bior()), band);
}

TEST(Patches, DepthFirstQuadOrder) {
    const Image band = random_image(128, 128, 1, 7);
    const auto grid = slice_to_base_patches(band, 32, bior());
    ASSERT_EQ(grid.patches.size(), 16u);
    EXPECT_EQ(grid.grid_rows, 4);
    const auto top = dwt2d(band, bior());
    const Image* children[] = {&top.tl, &top.tr, &top.bl, &top.br};
    for (int c = 0; c < 4; ++c) {
        const auto q = dwt2d(*children[c], bior());
        EXPECT_EQ(grid.patches[4 * c + 0], q.tl);
        EXPECT_EQ(grid.patches[4 * c + 1], q.tr);
        EXPECT_EQ(grid.patches[4 * c + 2], q.bl);
        EXPECT_EQ(grid.patches[4 * c + 3], q.br);
    }
}

TEST(Patches, SliceAssembleRoundTripProperty) {
    for (int extent : {8, 16, 32, 64, 128}) {
        for (int base : {4, 8, 32}) {
            if (base > extent) continue;
            const Image band = random_image(extent, extent, 3, static_cast<std::uint64_t>(extent * 100 + base));
            const auto grid = slice_to_base_patches(band, base, bior());
            for (const auto& p : grid.patches) EXPECT_EQ(p.height, base);
            EXPECT_LT(max_abs_difference(assemble_from_patches(grid, bior()), band), 1e-8) << extent << "/" << base;
        }
    }
}

TEST(Patches, ZeroGridAssemblesToZero) {
    PatchGrid grid{std::vector<Image>(4, Image(8, 8, 3)), 2, 2, 8};
    for (double v : assemble_from_patches(grid, bior()).values) EXPECT_EQ(v, 0.0);
}

TEST(Patches, Errors) {
    EXPECT_THROW(slice_to_base_patches(random_image(48, 48, 1, 8), 32, bior()), GeometryError);
    EXPECT_THROW(slice_to_base_patches(random_image(64, 32, 1, 8), 32, bior()), GeometryError);
    PatchGrid bad{std::vector<Image>(3, Image(8, 8, 1)), 2, 2, 8};
    EXPECT_THROW(assemble_from_patches(bad, bior()), GeometryError);
    EXPECT_THROW((LevelGeometry{16, 32, 3}.validate()), GeometryError);
}

TEST(DecodeLevel, OracleAndZeroModels) {
    const Image img = random_image(128, 128, 3, 9);
    const auto quads = full_decompose(img, 2, bior());
    OracleReconstructor oracle(quads[1], 16, bior());
    EXPECT_EQ(oracle.geometry().head_count(), 12);
    const Image parent = decode_level(quads[1].tl, oracle, bior());
    EXPECT_EQ(parent.height, 64);
    EXPECT_LT(max_abs_difference(parent, quads[0].tl), 1e-6);

    ZeroReconstructor zero(LevelGeometry{32, 16, 3});
    const Image low = decode_level(quads[1].tl, zero, bior());
    QuadDecomposition only_tl{quads[1].tl, Image(32, 32, 3), Image(32, 32, 3), Image(32, 32, 3)};
    EXPECT_EQ(low, idwt2d(only_tl, bior()));

    ZeroReconstructor wrong(LevelGeometry{64, 32, 3});
    EXPECT_THROW(decode_level(quads[1].tl, wrong, bior()), GeometryError);
}

TEST(Decode, OracleModelsReconstructInput) {
    for (int levels : {1, 2, 3}) {
        const Image img = random_image(64, 64, 3, 10 + static_cast<std::uint64_t>(levels));
        const auto code = encode(img, levels, bior());
        const auto quads = full_decompose(img, levels, bior());
        std::vector<OracleReconstructor> oracles;
        for (const auto& q : quads) oracles.emplace_back(q, std::min(8, q.tl.height), bior());
        std::vector<const LevelReconstructor*> ptrs;
        for (const auto& o : oracles) ptrs.push_back(&o);
        const Image out = decode(code, ptrs, bior());
        EXPECT_EQ(out.height, 64);
        EXPECT_LT(max_abs_difference(out, img), 1e-5);
    }
}

TEST(Decode, WrongModelCountRejected) {
    const auto code = encode(random_image(32, 32, 1, 11), 2, bior());
    ZeroReconstructor z(LevelGeometry{16, 16, 1});
    const LevelReconstructor* one[] = {&z};
    EXPECT_THROW(decode(code, one, bior()), GeometryError);
}

TEST(CodeContainer, RoundTripIsByteExact) {
    const auto code = encode(random_image(32, 32, 3, 12), 1, bior());
    const auto bytes = serialize_code(code);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NSBC");
    const auto back = deserialize_code(bytes);
    EXPECT_EQ(serialize_code(back), bytes);
    EXPECT_EQ(back.levels, 1);
    EXPECT_EQ(back.wavelet_name, "bior2.2");
    EXPECT_LT(max_abs_difference(back.tl, code.tl), 1e-6);

    // float-representable latents survive exactly
    PyramidCode exact{1, Image(2, 2, 1, 0.5), 4, 4, 1, "haar"};
    EXPECT_EQ(deserialize_code(serialize_code(exact)), exact);
}

TEST(CodeContainer, DistinctFaults) {
    const auto good = serialize_code(encode(random_image(16, 16, 1, 13), 1, bior()));
    auto magic = good;
    magic[1] = 'X';
    EXPECT_EQ(code_error(magic), FormatErrorKind::bad_magic);
    EXPECT_EQ(code_error({good.begin(), good.end() - 1}), FormatErrorKind::truncated_payload);
    auto version = good;
    version[4] = 2;
    EXPECT_EQ(code_error(version), FormatErrorKind::version_mismatch);
    auto extra = good;
    extra.push_back(0);
    EXPECT_EQ(code_error(extra), FormatErrorKind::malformed);
    EXPECT_NE(format_error_name(FormatErrorKind::bad_magic), format_error_name(FormatErrorKind::truncated_payload));
}

TEST(LevelDatasets, BuildAndRoundTrip) {
    std::vector<Image> images;
    for (int i = 0; i < 10; ++i) images.push_back(random_image(32, 32, 3, 20 + static_cast<std::uint64_t>(i)));
    const auto sets = build_level_datasets(images, 2, bior());
    ASSERT_EQ(sets.size(), 2u);
    for (const auto& s : sets) EXPECT_EQ(s.examples.size(), 10u);
    EXPECT_EQ(sets[0].level, 1);
    EXPECT_EQ(sets[1].examples[0].tl.height, 8);
    EXPECT_EQ(sets[1].examples[3].tl, encode(images[3], 2, bior()).tl);
    const auto bytes = serialize_level_dataset(sets[1]);
    EXPECT_EQ(serialize_level_dataset(deserialize_level_dataset(bytes)), bytes);
}
