#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "nsb/config.hpp"
#include "nsb/corpus.hpp"

using namespace nsb;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("nsb_test_corpus_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Image gradient(int h, int w, int c) {
    Image img(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k) img.at(y, x, k) = std::round(255.0 * (y * w + x + k) / (h * w + c)) / 255.0;
    return img;
}

}  // namespace

TEST(Pnm, EightBitRoundTripIsExact) {
    const auto dir = fresh_dir("pnm");
    const Image rgb = gradient(5, 7, 3), gray = gradient(4, 4, 1);
    write_pnm(dir / "a.ppm", rgb);
    write_pnm(dir / "b.pgm", gray);
    EXPECT_EQ(read_pnm(dir / "a.ppm"), rgb);
    EXPECT_EQ(read_pnm(dir / "b.pgm"), gray);
    fs::remove_all(dir);
}

TEST(Pnm, SixteenBitAndClamping) {
    const auto dir = fresh_dir("pnm16");
    Image img(2, 2, 1);
    img.values = {-0.5, 0.25, 1.0 / 3.0, 2.0};
    write_pnm(dir / "c.pgm", img, 16);
    const Image back = read_pnm(dir / "c.pgm");
    EXPECT_EQ(back.values[0], 0.0);
    EXPECT_EQ(back.values[3], 1.0);
    EXPECT_NEAR(back.values[2], 1.0 / 3.0, 0.5 / 65535);
    fs::remove_all(dir);
}

TEST(Pnm, RejectsBadFiles) {
    const auto dir = fresh_dir("pnmbad");
    std::ofstream(dir / "text.ppm") << "P3\n1 1\n255\n0 0 0\n";
    EXPECT_THROW(read_pnm(dir / "text.ppm"), ImageIOError);
    std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n4 4\n255\n" << std::string(10, '\0');
    EXPECT_THROW(read_pnm(dir / "short.ppm"), ImageIOError);
    EXPECT_THROW(read_pnm(dir / "missing.ppm"), ImageIOError);
    fs::remove_all(dir);
}

TEST(Split, EightyTwentyAndSeeded) {
    const auto a = split_train_validation(100, 5), b = split_train_validation(100, 5), c = split_train_validation(100, 6);
    EXPECT_EQ(std::count(a.begin(), a.end(), true), 80);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    const auto small = split_train_validation(7, 0);
    EXPECT_EQ(std::count(small.begin(), small.end(), false), 1);  // llround(1.4)
}

TEST(ToyCorpus, LabelsShapesAndDeterminism) {
    const ToyCorpusOptions opts{8, 3, 32, 9};
    const auto a = generate_toy_corpus(opts), b = generate_toy_corpus(opts);
    ASSERT_EQ(a.images.size(), 24u);
    EXPECT_EQ(a.labels[5], 1);
    EXPECT_EQ(a.class_names.size(), 8u);
    EXPECT_EQ(a.images, b.images);
    for (const auto& img : a.images) {
        EXPECT_EQ(img.height, 32);
        EXPECT_EQ(img.channels, 3);
        for (double v : img.values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            EXPECT_DOUBLE_EQ(v * 255.0, std::round(v * 255.0));
        }
    }
    EXPECT_NE(generate_toy_corpus({8, 3, 32, 10}).images, a.images);
    EXPECT_NE(a.images[0], a.images[1]);
}

TEST(LoadCorpus, ReadsWrittenToyCorpus) {
    const auto dir = fresh_dir("load");
    const auto toy = generate_toy_corpus({3, 5, 32, 1});
    write_toy_corpus(dir, toy);
    const auto corpus = load_corpus(dir, 2);
    EXPECT_EQ(corpus.class_names.size(), 3u);
    ASSERT_EQ(corpus.items.size(), 15u);
    EXPECT_TRUE(corpus.warnings.empty());
    EXPECT_EQ(corpus.split_indices(true).size(), 12u);
    EXPECT_EQ(corpus.split_indices(false).size(), 3u);
    std::set<std::string> names(corpus.class_names.begin(), corpus.class_names.end());
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        const auto& item = corpus.items[i];
        EXPECT_TRUE(item.file.is_relative());
        EXPECT_EQ(item.file.parent_path().string(), corpus.class_names[static_cast<std::size_t>(item.label)]);
    }
    // sorted class directories, then sorted files
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& name = toy.class_names[k];
        const auto pos = std::find(corpus.class_names.begin(), corpus.class_names.end(), name) - corpus.class_names.begin();
        EXPECT_EQ(corpus.images[static_cast<std::size_t>(pos) * 5], toy.images[k * 5]);
    }
    EXPECT_EQ(load_corpus(dir, 2).items.size(), corpus.items.size());
    fs::remove_all(dir);
}

TEST(LoadCorpus, CropsAndSkipsBadFiles) {
    const auto dir = fresh_dir("crop");
    fs::create_directories(dir / "a");
    fs::create_directories(dir / "b");
    write_pnm(dir / "a" / "x.ppm", gradient(40, 70, 3));
    write_pnm(dir / "a" / "y.ppm", gradient(64, 64, 3));
    write_pnm(dir / "b" / "z.ppm", gradient(50, 33, 3));
    write_pnm(dir / "b" / "gray.pgm", gradient(64, 64, 1));
    std::ofstream(dir / "b" / "junk.ppm") << "not an image";
    const auto corpus = load_corpus(dir, 0);
    ASSERT_EQ(corpus.images.size(), 3u);
    for (const auto& img : corpus.images) EXPECT_EQ(img.height, 32);
    EXPECT_EQ(corpus.warnings.size(), 2u);
    EXPECT_EQ(corpus.images[0], center_crop(gradient(40, 70, 3), 32));
    fs::remove_all(dir);
}

TEST(LoadCorpus, EmptyDirectoryYieldsNoItems) {
    const auto dir = fresh_dir("empty");
    EXPECT_TRUE(load_corpus(dir, 0).items.empty());
    fs::remove_all(dir);
}

TEST(CenterCrop, TakesMiddle) {
    const Image img = gradient(6, 8, 1);
    const Image c = center_crop(img, 4);
    EXPECT_EQ(c.at(0, 0, 0), img.at(1, 2, 0));
    EXPECT_EQ(c.at(3, 3, 0), img.at(4, 5, 0));
    EXPECT_THROW(center_crop(img, 7), GeometryError);
}

TEST(RunConfig, ParsesKnownKeys) {
    const auto cfg = parse_run_config(
        "# comment\n\nwavelet = haar\nlevels=3\nbase_patch=16\nseed=42\nlearning_rate=1e-3\nbatch_size=8\n"
        "iterations=10\ncorpus_dir=/data\noutput_dir=out\nfeature_method=seeded_random_projection\nfeature_dim=32\n");
    EXPECT_EQ(cfg.wavelet, "haar");
    EXPECT_EQ(cfg.levels, 3);
    EXPECT_EQ(cfg.base_patch, 16);
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_DOUBLE_EQ(*cfg.learning_rate, 1e-3);
    EXPECT_EQ(cfg.batch_size, 8);
    EXPECT_EQ(cfg.iterations, 10);
    EXPECT_EQ(cfg.corpus_dir, fs::path("/data"));
    EXPECT_EQ(cfg.output_dir, fs::path("out"));
    EXPECT_EQ(cfg.feature_method, "seeded_random_projection");
    EXPECT_EQ(cfg.feature_dim, 32);
    EXPECT_FALSE(parse_run_config("").levels.has_value());
}

TEST(RunConfig, UnknownKeyNamesKeyAndLine) {
    try {
        parse_run_config("levels=2\ncolour=blue\n");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("colour"), std::string::npos);
        EXPECT_NE(msg.find("line 2"), std::string::npos);
    }
}

TEST(RunConfig, RejectsBadValues) {
    for (const char* text : {"levels=0", "levels=17", "levels=two", "base_patch=24", "learning_rate=-1",
                             "learning_rate=inf", "batch_size=0", "iterations=-5", "wavelet=db4",
                             "feature_method=inception", "feature_dim=1", "seed=-1", "no equals sign", "corpus_dir="}) {
        EXPECT_THROW(parse_run_config(text), ConfigError) << text;
    }
}

TEST(RunConfig, LoadFromFile) {
    const auto dir = fresh_dir("cfg");
    std::ofstream(dir / "run.cfg") << "levels=2\n";
    EXPECT_EQ(load_run_config(dir / "run.cfg").levels, 2);
    EXPECT_ANY_THROW(load_run_config(dir / "absent.cfg"));
    fs::remove_all(dir);
}
