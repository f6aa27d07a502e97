#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "nsb/image.hpp"

namespace fs = std::filesystem;
using nsb::cli::ExitCode;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = nsb::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

// One toy corpus and dataset shared by the whole suite.
class Cli : public ::testing::Test {
protected:
    static fs::path root;

    static void SetUpTestSuite() {
        root = fs::temp_directory_path() / "nsb_test_cli";
        fs::remove_all(root);
        fs::create_directories(root);
        ASSERT_EQ(run({"gen-corpus", "--classes", "2", "--per-class", "5", "--extent", "32", "--seed", "3", "--out",
                       (root / "corpus").string()})
                      .code,
                  0);
        ASSERT_EQ(run({"make-dataset", "--corpus", (root / "corpus").string(), "--levels", "1", "--out",
                       (root / "data").string()})
                      .code,
                  0);
    }
    static void TearDownTestSuite() { fs::remove_all(root); }

    static std::string path(const std::string& rel) { return (root / rel).string(); }
    static std::string first_image() {
        for (const auto& e : fs::recursive_directory_iterator(root / "corpus"))
            if (e.path().extension() == ".ppm") return e.path().string();
        return {};
    }
};

fs::path Cli::root;

}  // namespace

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, ExitCode::usage);
    EXPECT_EQ(run({"frobnicate"}).code, ExitCode::usage);
    EXPECT_EQ(run({"train"}).code, ExitCode::usage);
    EXPECT_EQ(run({"--help"}).code, ExitCode::ok);
    EXPECT_EQ(run({"decode", "x.nsbc", "--bits", "12"}).code, ExitCode::usage);
}

TEST_F(Cli, MakeDatasetOutputs) {
    const fs::path data = root / "data";
    for (const char* f : {"manifest.csv", "classes.txt", "dataset.cfg", "level1.nsbd", "sampler.nsbp"})
        EXPECT_TRUE(fs::exists(data / f)) << f;
    EXPECT_EQ(line_count(data / "manifest.csv"), 11u);
    EXPECT_EQ(line_count(data / "classes.txt"), 2u);
    const std::string manifest = slurp(data / "manifest.csv");
    std::size_t val = 0;
    for (std::size_t pos = 0; (pos = manifest.find(",val\n", pos)) != std::string::npos; ++pos) ++val;
    EXPECT_EQ(val, 2u);

    ASSERT_EQ(run({"make-dataset", "--corpus", path("corpus"), "--levels", "1", "--out", path("data_again")}).code, 0);
    EXPECT_EQ(slurp(root / "data_again" / "manifest.csv"), manifest);
    EXPECT_EQ(slurp(root / "data_again" / "level1.nsbd"), slurp(data / "level1.nsbd"));
}

TEST_F(Cli, EmptyCorpus) {
    fs::create_directories(root / "empty");
    EXPECT_EQ(run({"make-dataset", "--corpus", path("empty"), "--out", path("empty_out")}).code, ExitCode::empty_dataset);
}

TEST_F(Cli, TransformRoundTripIsExact) {
    const std::string img = first_image();
    ASSERT_EQ(run({"transform", img, "--levels", "2", "--out", path("bands")}).code, 0);
    EXPECT_TRUE(fs::exists(root / "bands" / "level2_br.ppm"));
    EXPECT_TRUE(fs::exists(root / "bands" / "tl.ppm"));
    ASSERT_EQ(run({"transform", path("bands"), "--inverse", "--out", path("inverse")}).code, 0);
    EXPECT_EQ(nsb::read_pnm(root / "inverse" / "reconstructed.ppm"), nsb::read_pnm(img));
}

TEST_F(Cli, EncodeDecodeWithOracle) {
    const std::string img = first_image();
    ASSERT_EQ(run({"encode", img, "--levels", "2", "--out", path("codes")}).code, 0);
    const fs::path code = root / "codes" / (fs::path(img).stem().string() + ".nsbc");
    ASSERT_TRUE(fs::exists(code));
    ASSERT_EQ(run({"decode", code.string(), "--oracle", img, "--out", path("decoded")}).code, 0);
    EXPECT_EQ(nsb::read_pnm(root / "decoded" / (fs::path(img).stem().string() + ".ppm")), nsb::read_pnm(img));
    EXPECT_EQ(run({"decode", code.string(), "--zero-models", "--bits", "16", "--out", path("decoded0")}).code, 0);
}

TEST_F(Cli, DecodeFailures) {
    const std::string img = first_image();
    ASSERT_EQ(run({"encode", img, "--levels", "1", "--out", path("codes1")}).code, 0);
    const fs::path code = root / "codes1" / (fs::path(img).stem().string() + ".nsbc");
    const auto missing = run({"decode", code.string(), "--models", path("nowhere"), "--out", path("d1")});
    EXPECT_EQ(missing.code, ExitCode::missing_model);
    EXPECT_NE(missing.err.find("level 1"), std::string::npos);

    std::ofstream(root / "garbage.nsbc") << "garbage";
    EXPECT_EQ(run({"decode", path("garbage.nsbc"), "--zero-models", "--out", path("d2")}).code, ExitCode::bad_input);
    EXPECT_EQ(run({"decode", path("absent.nsbc"), "--zero-models", "--out", path("d2")}).code, ExitCode::bad_input);
}

TEST_F(Cli, GeometryErrors) {
    EXPECT_EQ(run({"encode", first_image(), "--levels", "6", "--out", path("geo")}).code, ExitCode::geometry);
}

TEST_F(Cli, ConfigErrors) {
    std::ofstream(root / "bad.cfg") << "levels=2\ncolour=blue\n";
    const auto r = run({"encode", first_image(), "--config", path("bad.cfg"), "--out", path("cfg")});
    EXPECT_EQ(r.code, ExitCode::usage);
    EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST_F(Cli, TrainWritesCheckpointAndLoss) {
    std::ofstream(root / "short.cfg") << "iterations=3\nbatch_size=2\nlearning_rate=1e-3\n";
    const auto r = run({"train", "--level", "1", "--data", path("data"), "--config", path("short.cfg"), "--out",
                        path("models")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("final train_mse="), std::string::npos);
    EXPECT_NE(r.out.find("val_mse="), std::string::npos);
    EXPECT_TRUE(fs::exists(root / "models" / "decoder_level1.nsbw"));
    EXPECT_EQ(line_count(root / "models" / "loss_level1.csv"), 4u);

    const std::string img = first_image();
    ASSERT_EQ(run({"encode", img, "--levels", "1", "--out", path("codes_m")}).code, 0);
    const fs::path code = root / "codes_m" / (fs::path(img).stem().string() + ".nsbc");
    EXPECT_EQ(run({"decode", code.string(), "--models", path("models"), "--out", path("decoded_m")}).code, 0);
}

TEST_F(Cli, TrainDivergenceExitCode) {
    std::ofstream(root / "wild.cfg") << "iterations=50\nbatch_size=2\nlearning_rate=1e30\n";
    const auto r = run({"train", "--level", "1", "--data", path("data"), "--config", path("wild.cfg"), "--out",
                        path("wild")});
    EXPECT_EQ(r.code, ExitCode::diverged);
    EXPECT_TRUE(fs::exists(root / "wild" / "decoder_level1.nsbw"));
}

TEST_F(Cli, TrainPixel) {
    std::ofstream(root / "pix.cfg") << "iterations=2\nbatch_size=2\n";
    const auto r = run({"train-pixel", "--level", "1", "--data", path("data"), "--config", path("pix.cfg"), "--out",
                        path("pixel")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(root / "pixel" / "refiner_level1.nsbw"));
    EXPECT_EQ(line_count(root / "pixel" / "loss_pixel_level1.csv"), 3u);
}

TEST_F(Cli, SampleIsSeeded) {
    const std::vector<std::string> base{"sample", "--class", "0", "--n", "2", "--data", path("data"), "--zero-models",
                                        "--truncation", "0.7"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", path("samples_a")});
    b.insert(b.end(), {"--out", path("samples_b")});
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(root / "samples_a")) files.push_back(e.path().filename());
    ASSERT_EQ(files.size(), 2u);
    for (const auto& f : files) EXPECT_EQ(slurp(root / "samples_a" / f), slurp(root / "samples_b" / f));
    EXPECT_EQ(run({"sample", "--class", "nope", "--data", path("data"), "--zero-models", "--out", path("s")}).code,
              ExitCode::usage);
    EXPECT_EQ(run({"sample", "--class", "0", "--data", path("data"), "--out", path("s")}).code, ExitCode::missing_model);
}

TEST_F(Cli, EvalSameSetHasZeroDistance) {
    const fs::path cls = *fs::directory_iterator(root / "corpus");
    const auto r = run({"eval", "--real", cls.string(), "--generated", cls.string(), "--out", path("eval")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\nfd,0,generated,real,5,5,pixel_moments,192,0"), std::string::npos) << r.out;
    EXPECT_EQ(slurp(root / "eval" / "eval.csv"), r.out);
    fs::create_directories(root / "no_images");
    EXPECT_EQ(run({"eval", "--real", cls.string(), "--generated", path("no_images"), "--out", path("eval")}).code,
              ExitCode::empty_dataset);
}

TEST_F(Cli, Compare) {
    const auto r = run({"compare", "--corpus", path("corpus"), "--levels", "2", "--out", path("compare")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("lower"), std::string::npos);
    EXPECT_EQ(line_count(root / "compare" / "compare.csv"), 11u);
}
