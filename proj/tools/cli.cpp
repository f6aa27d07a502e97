#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "nsb/binary_io.hpp"
#include "nsb/config.hpp"
#include "nsb/corpus.hpp"
#include "nsb/decoder.hpp"
#include "nsb/metrics.hpp"
#include "nsb/pixel.hpp"
#include "nsb/prior.hpp"
#include "nsb/pyramid.hpp"

namespace nsb::cli {

namespace fs = std::filesystem;

namespace {

class Failure : public std::runtime_error {
public:
    Failure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
    int code;
};

constexpr const char* kDatasetConfig = "dataset.cfg";
constexpr int kDefaultLevels = 2;
constexpr int kDefaultBasePatch = 32;

void overlay(RunConfig& base, const RunConfig& top) {
    auto take = [](auto& dst, const auto& src) {
        if (src) dst = src;
    };
    take(base.wavelet, top.wavelet);
    take(base.levels, top.levels);
    take(base.base_patch, top.base_patch);
    take(base.seed, top.seed);
    take(base.learning_rate, top.learning_rate);
    take(base.batch_size, top.batch_size);
    take(base.iterations, top.iterations);
    take(base.corpus_dir, top.corpus_dir);
    take(base.output_dir, top.output_dir);
    take(base.feature_method, top.feature_method);
    take(base.feature_dim, top.feature_dim);
}

// Effective settings: dataset.cfg in the data directory, then --config,
// then explicit flags.
struct Settings {
    RunConfig cfg;
    fs::path out;
    std::uint64_t seed = 0;

    std::string wavelet() const { return cfg.wavelet.value_or(std::string(kDefaultWavelet)); }
    FilterBank filter_bank() const { return make_filter_bank(wavelet()); }
    int levels() const { return cfg.levels.value_or(kDefaultLevels); }
    int base_patch(int band_extent) const { return cfg.base_patch.value_or(std::min(kDefaultBasePatch, band_extent)); }
};

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

Settings resolve(const Globals& g, const fs::path& data_dir = {}, const RunConfig& flags = {}) {
    Settings s;
    if (!data_dir.empty() && fs::exists(data_dir / kDatasetConfig)) s.cfg = load_run_config(data_dir / kDatasetConfig);
    if (!g.config.empty()) overlay(s.cfg, load_run_config(g.config));
    overlay(s.cfg, flags);
    if (g.seed) s.cfg.seed = *g.seed;
    if (!g.out.empty()) s.cfg.output_dir = g.out;
    s.seed = s.cfg.seed.value_or(0);
    s.out = s.cfg.output_dir.value_or(".");
    fs::create_directories(s.out);
    return s;
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw Failure(bad_input, what + " not found: " + p.string());
}

std::string image_ext(int channels) { return channels == 1 ? ".pgm" : ".ppm"; }

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Failure(bad_input, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<Image> read_images(const fs::path& dir) {
    std::vector<Image> images;
    for (const auto& f : list_images(dir)) images.push_back(read_pnm(f));
    return images;
}

// --- transform ------------------------------------------------------------------------

struct BandRecord {
    std::string name;
    double offset = 0.0;
    double scale = 1.0;
};

BandRecord write_band(const fs::path& dir, const std::string& name, const Image& band) {
    const auto [lo, hi] = std::minmax_element(band.values.begin(), band.values.end());
    BandRecord rec{name, *lo, *hi > *lo ? *hi - *lo : 1.0};
    Image view = band;
    for (auto& v : view.values) v = (v - rec.offset) / rec.scale;
    write_pnm(dir / (name + image_ext(band.channels)), view, 16);
    return rec;
}

Image read_band(const fs::path& dir, const BandRecord& rec, int channels) {
    Image band = read_pnm(dir / (rec.name + image_ext(channels)));
    for (auto& v : band.values) v = rec.offset + rec.scale * v;
    return band;
}

int cmd_transform(const Globals& g, const std::string& input, bool inverse, const RunConfig& flags, std::ostream& out) {
    const Settings s = resolve(g, {}, flags);
    if (!inverse) {
        require_file(input, "input image");
        const Image image = read_pnm(input);
        const FilterBank fb = s.filter_bank();
        const auto quads = full_decompose(image, s.levels(), fb);
        std::vector<BandRecord> records;
        for (std::size_t l = 0; l < quads.size(); ++l) {
            const std::string prefix = "level" + std::to_string(l + 1) + "_";
            records.push_back(write_band(s.out, prefix + "tr", quads[l].tr));
            records.push_back(write_band(s.out, prefix + "bl", quads[l].bl));
            records.push_back(write_band(s.out, prefix + "br", quads[l].br));
        }
        records.push_back(write_band(s.out, "tl", quads.back().tl));
        std::ofstream side(s.out / "transform.txt", std::ios::trunc);
        side << "wavelet " << fb.name << "\nlevels " << s.levels() << "\ngeometry " << image.height << ' ' << image.width
             << ' ' << image.channels << '\n'
             << std::setprecision(17);
        for (const auto& r : records) side << "band " << r.name << ' ' << r.offset << ' ' << r.scale << '\n';
        out << "wrote " << records.size() << " bands to " << s.out.string() << " (tl " << quads.back().tl.geometry() << ")\n";
        return ok;
    }
    const fs::path dir = input;
    require_file(dir / "transform.txt", "transform sidecar");
    std::ifstream side(dir / "transform.txt");
    std::string key, wavelet;
    int levels = 0, h = 0, w = 0, c = 0;
    std::map<std::string, BandRecord> records;
    while (side >> key) {
        if (key == "wavelet") {
            side >> wavelet;
        } else if (key == "levels") {
            side >> levels;
        } else if (key == "geometry") {
            side >> h >> w >> c;
        } else if (key == "band") {
            BandRecord r;
            side >> r.name >> r.offset >> r.scale;
            records[r.name] = r;
        } else {
            throw Failure(bad_input, "transform sidecar: unexpected key '" + key + "'");
        }
    }
    if (!side.eof() || levels < 1 || c < 1) throw Failure(bad_input, "transform sidecar is malformed");
    auto band = [&](const std::string& name) {
        const auto it = records.find(name);
        if (it == records.end()) throw Failure(bad_input, "transform sidecar lacks band " + name);
        return read_band(dir, it->second, c);
    };
    const FilterBank fb = make_filter_bank(wavelet);
    std::vector<QuadDecomposition> quads(static_cast<std::size_t>(levels));
    for (int l = 0; l < levels; ++l) {
        const std::string prefix = "level" + std::to_string(l + 1) + "_";
        quads[l].tr = band(prefix + "tr");
        quads[l].bl = band(prefix + "bl");
        quads[l].br = band(prefix + "br");
    }
    quads.back().tl = band("tl");
    const Image image = reconstruct_from_decomposition(quads, fb);
    if (image.height != h || image.width != w) throw Failure(geometry, "reconstructed extents differ from the sidecar");
    const fs::path target = s.out / ("reconstructed" + image_ext(c));
    write_pnm(target, image);
    out << "wrote " << target.string() << '\n';
    return ok;
}

// --- make-dataset ----------------------------------------------------------------------

int cmd_make_dataset(const Globals& g, const RunConfig& flags, std::ostream& out, std::ostream& err) {
    Settings s = resolve(g, {}, flags);
    if (!s.cfg.corpus_dir) throw Failure(usage, "make-dataset needs --corpus or corpus_dir in the config");
    const fs::path corpus_dir = fs::absolute(*s.cfg.corpus_dir);
    const Corpus corpus = load_corpus(corpus_dir, s.seed);
    for (const auto& w : corpus.warnings) err << "warning: " << w << '\n';
    if (corpus.images.empty()) throw Failure(empty_dataset, "no usable images under " + corpus_dir.string());
    const FilterBank fb = s.filter_bank();
    const int levels = s.levels();
    const auto datasets = build_level_datasets(corpus.images, levels, fb);

    {
        std::ofstream m(s.out / "manifest.csv", std::ios::trunc);
        m << "file,class,split\n";
        for (const auto& item : corpus.items) {
            m << item.file.generic_string() << ',' << corpus.class_names[item.label] << ','
              << (item.train ? "train" : "val") << '\n';
        }
        std::ofstream names(s.out / "classes.txt", std::ios::trunc);
        for (const auto& n : corpus.class_names) names << n << '\n';
        std::ofstream meta(s.out / kDatasetConfig, std::ios::trunc);
        meta << "wavelet=" << fb.name << "\nlevels=" << levels << "\nseed=" << s.seed
             << "\ncorpus_dir=" << corpus_dir.string() << '\n';
    }
    for (const auto& d : datasets) {
        write_file(s.out / ("level" + std::to_string(d.level) + ".nsbd"), serialize_level_dataset(d));
    }
    std::vector<Image> tls;
    std::vector<int> labels;
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        if (!corpus.items[i].train) continue;
        tls.push_back(datasets.back().examples[i].tl);
        labels.push_back(corpus.items[i].label);
    }
    try {
        write_file(s.out / "sampler.nsbp", serialize_sampler(fit_sampler(tls, labels)));
    } catch (const std::invalid_argument& e) {
        err << "warning: sampler not fitted: " << e.what() << '\n';
    }
    out << "images " << corpus.images.size() << " (train " << corpus.split_indices(true).size() << ", val "
        << corpus.split_indices(false).size() << "), classes " << corpus.class_names.size() << ", levels " << levels << '\n';
    return ok;
}

// Manifest split column in file order.
std::vector<bool> read_split(const fs::path& data_dir) {
    require_file(data_dir / "manifest.csv", "manifest");
    std::ifstream in(data_dir / "manifest.csv");
    std::string line;
    std::getline(in, line);
    std::vector<bool> train;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) throw Failure(bad_input, "manifest row lacks a split column: " + line);
        train.push_back(line.substr(comma + 1) == "train");
    }
    return train;
}

std::vector<std::string> read_classes(const fs::path& data_dir) {
    require_file(data_dir / "classes.txt", "class list");
    std::ifstream in(data_dir / "classes.txt");
    std::vector<std::string> names;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

TrainConfig train_config(const Settings& s, int default_batch) {
    TrainConfig tc;
    tc.learning_rate = s.cfg.learning_rate.value_or(1e-4);
    tc.batch_size = s.cfg.batch_size.value_or(default_batch);
    tc.iterations = s.cfg.iterations.value_or(1000);
    tc.seed = s.seed;
    tc.validation_interval = std::max(1, tc.iterations / 10);
    return tc;
}

void report_fit(std::ostream& out, const FitResult& fit) {
    out << std::setprecision(9) << "final train_mse=" << fit.final_train_mse;
    if (fit.final_val_mse) out << " val_mse=" << *fit.final_val_mse;
    out << '\n';
}

// --- train ---------------------------------------------------------------------------

int cmd_train(const Globals& g, const fs::path& data_arg, int level, const RunConfig& flags, std::ostream& out) {
    const fs::path data_dir = data_arg.empty() ? fs::path(g.out.empty() ? "." : g.out) : data_arg;
    const Settings s = resolve(g, data_dir, flags);
    const fs::path file = data_dir / ("level" + std::to_string(level) + ".nsbd");
    require_file(file, "level dataset");
    const LevelDataset all = deserialize_level_dataset(read_file(file));
    const auto split = read_split(data_dir);
    if (split.size() != all.examples.size()) throw Failure(bad_input, "manifest and level dataset disagree in length");
    LevelDataset train{all.level, {}}, val{all.level, {}};
    for (std::size_t i = 0; i < split.size(); ++i) (split[i] ? train : val).examples.push_back(all.examples[i]);
    if (train.examples.empty()) throw Failure(empty_dataset, "level " + std::to_string(level) + " has no training examples");

    const TrainConfig tc = train_config(s, level == 1 ? 128 : 64);
    const fs::path ckpt = s.out / ("decoder_level" + std::to_string(level) + ".nsbw");
    const int band = train.examples.front().tl.height;
    try {
        auto result = train_decoder(train, &val, s.base_patch(band), tc, s.filter_bank());
        save_model(ckpt, result.model);
        write_loss_csv(s.out / ("loss_level" + std::to_string(level) + ".csv"), result.fit.history);
        out << "level " << level << " decoder: " << result.model.geometry().head_count() << " heads, "
            << tc.iterations << " iterations -> " << ckpt.string() << '\n';
        report_fit(out, result.fit);
    } catch (const TrainingDiverged& e) {
        write_file(ckpt, e.checkpoint);
        throw Failure(diverged, std::string(e.what()) + "; last finite checkpoint written to " + ckpt.string());
    }
    return ok;
}

Corpus corpus_for(const Settings& s) {
    if (!s.cfg.corpus_dir) throw Failure(usage, "no corpus: pass --corpus or set corpus_dir");
    return load_corpus(*s.cfg.corpus_dir, s.seed);
}

int cmd_train_pixel(const Globals& g, const fs::path& data_arg, int level, const RunConfig& flags, std::ostream& out,
                    std::ostream& err) {
    const fs::path data_dir = data_arg.empty() ? fs::path(g.out.empty() ? "." : g.out) : data_arg;
    const Settings s = resolve(g, data_dir, flags);
    const Corpus corpus = corpus_for(s);
    for (const auto& w : corpus.warnings) err << "warning: " << w << '\n';
    std::vector<Image> train, val;
    for (std::size_t i = 0; i < corpus.items.size(); ++i) (corpus.items[i].train ? train : val).push_back(corpus.images[i]);
    if (train.empty()) throw Failure(empty_dataset, "corpus has no training images");

    const TrainConfig tc = train_config(s, 64);
    const fs::path ckpt = s.out / ("refiner_level" + std::to_string(level) + ".nsbw");
    try {
        auto result = train_pixel_refiner(train, val, level, tc);
        save_refiner(ckpt, result.model);
        write_loss_csv(s.out / ("loss_pixel_level" + std::to_string(level) + ".csv"), result.fit.history);
        out << "level " << level << " pixel refiner at extent " << result.model.target_extent() << ", " << tc.iterations
            << " iterations -> " << ckpt.string() << '\n';
        report_fit(out, result.fit);
    } catch (const TrainingDiverged& e) {
        write_file(ckpt, e.checkpoint);
        throw Failure(diverged, std::string(e.what()) + "; last finite checkpoint written to " + ckpt.string());
    }
    return ok;
}

// --- encode / decode -----------------------------------------------------------------------

int cmd_encode(const Globals& g, const std::string& input, const RunConfig& flags, std::ostream& out) {
    const Settings s = resolve(g, {}, flags);
    require_file(input, "input image");
    const PyramidCode code = encode(read_pnm(input), s.levels(), s.filter_bank());
    const fs::path target = s.out / (fs::path(input).stem().string() + ".nsbc");
    write_file(target, serialize_code(code));
    out << "wrote " << target.string() << " (tl " << code.tl.geometry() << ", levels " << code.levels << ")\n";
    return ok;
}

struct ModelSet {
    std::vector<std::unique_ptr<LevelReconstructor>> owned;
    std::vector<const LevelReconstructor*> ptrs;
};

// One reconstructor per level, from checkpoints, zero models or an oracle image.
ModelSet load_models(const Settings& s, const PyramidCode& code, const fs::path& models_dir, bool zero,
                     const std::string& oracle) {
    ModelSet set;
    const FilterBank fb = make_filter_bank(code.wavelet_name);
    std::vector<QuadDecomposition> truth;
    if (!oracle.empty()) {
        require_file(oracle, "oracle image");
        const Image ref = read_pnm(oracle);
        if (ref.height != code.original_height || ref.width != code.original_width || ref.channels != code.channels) {
            throw GeometryError("oracle image " + ref.geometry() + " does not match the code");
        }
        truth = full_decompose(ref, code.levels, fb);
    }
    for (int level = 1; level <= code.levels; ++level) {
        const int band = code.tl.height << (code.levels - level);
        if (!truth.empty()) {
            set.owned.push_back(std::make_unique<OracleReconstructor>(truth[level - 1], s.base_patch(band), fb));
        } else if (zero) {
            set.owned.push_back(std::make_unique<ZeroReconstructor>(LevelGeometry{band, s.base_patch(band), code.channels}));
        } else {
            const fs::path p = models_dir / ("decoder_level" + std::to_string(level) + ".nsbw");
            if (!fs::exists(p)) throw Failure(missing_model, "missing model for level " + std::to_string(level) + ": " + p.string());
            set.owned.push_back(std::make_unique<DecoderModel<float>>(load_model(p, level)));
        }
        set.ptrs.push_back(set.owned.back().get());
    }
    return set;
}

int cmd_decode(const Globals& g, const std::string& input, const fs::path& models_arg, bool zero, const std::string& oracle,
               int bits, std::ostream& out) {
    const Settings s = resolve(g);
    require_file(input, "code file");
    const PyramidCode code = deserialize_code(read_file(input));
    const fs::path models_dir = models_arg.empty() ? s.out : models_arg;
    const ModelSet models = load_models(s, code, models_dir, zero, oracle);
    const Image image = decode(code, models.ptrs, make_filter_bank(code.wavelet_name));
    const fs::path target = s.out / (fs::path(input).stem().string() + image_ext(image.channels));
    write_pnm(target, image, bits);
    out << "wrote " << target.string() << " (" << image.geometry() << ")\n";
    return ok;
}

// --- sample --------------------------------------------------------------------------------

int cmd_sample(const Globals& g, const fs::path& data_arg, const fs::path& models_arg, const std::string& cls_arg,
               double truncation, int n, bool zero, std::ostream& out) {
    const fs::path data_dir = data_arg.empty() ? fs::path(g.out.empty() ? "." : g.out) : data_arg;
    const Settings s = resolve(g, data_dir);
    require_file(data_dir / "sampler.nsbp", "sampler");
    const SamplerModel sampler = deserialize_sampler(read_file(data_dir / "sampler.nsbp"));
    const auto names = read_classes(data_dir);
    int cls = -1;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == cls_arg) cls = static_cast<int>(i);
    }
    if (cls < 0) {
        try {
            std::size_t used = 0;
            cls = std::stoi(cls_arg, &used);
            if (used != cls_arg.size()) cls = -1;
        } catch (const std::exception&) {
            cls = -1;
        }
    }
    if (cls < 0 || cls >= sampler.class_count()) throw Failure(usage, "unknown class '" + cls_arg + "'");

    const int levels = s.levels();
    PyramidCode proto{levels, Image(sampler.height, sampler.width, sampler.channels), sampler.height << levels, sampler.width << levels, sampler.channels, s.wavelet()};
    const ModelSet models = load_models(s, proto, models_arg.empty() ? s.out : models_arg, zero, "");
    const FilterBank fb = s.filter_bank();
    const auto tls = sample(sampler, cls, truncation, n, s.seed);
    for (int i = 0; i < n; ++i) {
        PyramidCode code = proto;
        code.tl = tls[i];
        std::ostringstream name;
        name << "sample_" << names[cls] << '_' << std::setw(3) << std::setfill('0') << i << image_ext(code.channels);
        write_pnm(s.out / name.str(), decode(code, models.ptrs, fb));
    }
    out << "wrote " << n << " samples of class " << names[cls] << " at truncation " << truncation << '\n';
    return ok;
}

// --- eval / compare ---------------------------------------------------------------------------

FeatureSpec feature_spec(const Settings& s) {
    FeatureSpec spec;
    spec.method = parse_feature_method(s.cfg.feature_method.value_or("pixel_moments"));
    spec.dim = s.cfg.feature_dim.value_or(64);
    spec.seed = s.seed;
    return spec;
}

int cmd_eval(const Globals& g, const fs::path& real_dir, const fs::path& gen_dir, const fs::path& recon_dir, bool full,
             const RunConfig& flags, std::ostream& out) {
    const Settings s = resolve(g, {}, flags);
    const auto real = read_images(real_dir);
    const auto generated = read_images(gen_dir);
    const auto recon = read_images(recon_dir.empty() ? real_dir : recon_dir);
    if (real.size() < 2 || generated.size() < 2) throw Failure(empty_dataset, "eval needs at least 2 images per set");
    const EvalReport report = eval_report(real, generated, recon, feature_spec(s), full);
    write_eval_csv(s.out / "eval.csv", report);
    out << eval_csv(report);
    return ok;
}

int cmd_compare(const Globals& g, const RunConfig& flags, std::ostream& out, std::ostream& err) {
    const Settings s = resolve(g, {}, flags);
    const Corpus corpus = corpus_for(s);
    for (const auto& w : corpus.warnings) err << "warning: " << w << '\n';
    if (corpus.images.empty()) throw Failure(empty_dataset, "corpus is empty");
    std::vector<std::string> ids;
    for (const auto& item : corpus.items) ids.push_back(item.file.generic_string());
    const auto report = compare_information_content(corpus.images, ids, s.levels(), s.filter_bank());
    write_comparison_csv(s.out / "compare.csv", report);
    out << std::setprecision(9) << "mean wavelet_mse=" << report.mean_wavelet_mse << " pixel_mse=" << report.mean_pixel_mse
        << " (" << (report.mean_wavelet_mse < report.mean_pixel_mse ? "wavelet" : "pixel") << " lower)\n";
    return ok;
}

int cmd_gen_corpus(const Globals& g, ToyCorpusOptions options, std::ostream& out) {
    const Settings s = resolve(g);
    options.seed = s.seed;
    const ToyCorpus corpus = generate_toy_corpus(options);
    write_toy_corpus(s.out, corpus);
    out << "wrote " << corpus.images.size() << " images in " << corpus.class_names.size() << " classes to "
        << s.out.string() << '\n';
    return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Wavelet pyramid codec: transform, train, encode, decode, sample, evaluate"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "key=value run configuration file");
    app.add_option("--seed", g.seed, "seed for every random choice");
    app.add_option("--out", g.out, "output directory");

    // config keys that can also be given per command
    std::optional<std::string> wavelet, corpus_dir, feature_method;
    std::optional<int> levels;
    auto add_codec = [&](CLI::App* cmd) {
        cmd->add_option("--wavelet", wavelet, "haar or bior2.2");
        cmd->add_option("--levels", levels, "number of pyramid levels");
    };

    std::string input;
    bool inverse = false;
    auto* transform = app.add_subcommand("transform", "write the wavelet bands of an image, or invert them");
    transform->add_option("input", input, "image, or band directory with --inverse")->required();
    transform->add_flag("--inverse", inverse, "reassemble an image from a band directory");
    add_codec(transform);

    auto* make_dataset = app.add_subcommand("make-dataset", "build per-level band datasets from a corpus");
    make_dataset->add_option("--corpus", corpus_dir, "corpus root (one directory per class)");
    add_codec(make_dataset);

    int level = 1;
    std::string data_dir;
    auto* train = app.add_subcommand("train", "train one level decoder");
    train->add_option("--level", level, "pyramid level")->required();
    train->add_option("--data", data_dir, "make-dataset output directory");
    auto* train_pixel = app.add_subcommand("train-pixel", "train one pixel-space refiner");
    train_pixel->add_option("--level", level, "pyramid level")->required();
    train_pixel->add_option("--data", data_dir, "make-dataset output directory");
    train_pixel->add_option("--corpus", corpus_dir, "corpus root");

    auto* encode_cmd = app.add_subcommand("encode", "write the pyramid code of an image");
    encode_cmd->add_option("input", input, "image")->required();
    add_codec(encode_cmd);

    std::string models_dir, oracle;
    bool zero_models = false;
    int bits = 8;
    auto* decode_cmd = app.add_subcommand("decode", "reconstruct an image from a pyramid code");
    decode_cmd->add_option("input", input, "code file")->required();
    decode_cmd->add_option("--models", models_dir, "directory holding decoder_level<l>.nsbw");
    decode_cmd->add_flag("--zero-models", zero_models, "use zero detail bands");
    decode_cmd->add_option("--oracle", oracle, "take detail bands from this image (testing)");
    decode_cmd->add_option("--bits", bits, "output bit depth")->check(CLI::IsMember({8, 16}));

    std::string cls;
    double truncation = 1.0;
    int count = 1;
    auto* sample_cmd = app.add_subcommand("sample", "draw tl codes from the prior and decode them");
    sample_cmd->add_option("--class", cls, "class name or index")->required();
    sample_cmd->add_option("--truncation", truncation, "noise scale in (0, 1]");
    sample_cmd->add_option("--n", count, "number of samples")->check(CLI::PositiveNumber);
    sample_cmd->add_option("--data", data_dir, "make-dataset output directory");
    sample_cmd->add_option("--models", models_dir, "directory holding decoder_level<l>.nsbw");
    sample_cmd->add_flag("--zero-models", zero_models, "use zero detail bands");

    std::string real_dir, gen_dir, recon_dir;
    bool full_cov = false;
    std::optional<int> feature_dim;
    auto* eval_cmd = app.add_subcommand("eval", "Frechet distance, MSE and PSNR report");
    eval_cmd->add_option("--real", real_dir, "real images")->required();
    eval_cmd->add_option("--generated", gen_dir, "generated images")->required();
    eval_cmd->add_option("--recon", recon_dir, "reconstructions paired with --real by file order");
    eval_cmd->add_option("--feature-method", feature_method, "pixel_moments or seeded_random_projection");
    eval_cmd->add_option("--feature-dim", feature_dim, "projection dimension");
    eval_cmd->add_flag("--full-covariance", full_cov, "use full covariance matrices");

    auto* compare_cmd = app.add_subcommand("compare", "wavelet vs pixel information content per image");
    compare_cmd->add_option("--corpus", corpus_dir, "corpus root");
    add_codec(compare_cmd);

    ToyCorpusOptions toy;
    auto* gen = app.add_subcommand("gen-corpus", "write the procedural toy corpus");
    gen->add_option("--classes", toy.classes, "number of classes (1-8)");
    gen->add_option("--per-class", toy.per_class, "images per class");
    gen->add_option("--extent", toy.extent, "image side length");

    std::vector<std::string> argv_storage{"nsb"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    try {
        RunConfig flags;
        if (wavelet) flags.set("wavelet", *wavelet);
        if (levels) flags.set("levels", std::to_string(*levels));
        if (corpus_dir) flags.set("corpus_dir", *corpus_dir);
        if (feature_method) flags.set("feature_method", *feature_method);
        if (feature_dim) flags.set("feature_dim", std::to_string(*feature_dim));

        if (*transform) return cmd_transform(g, input, inverse, flags, out);
        if (*make_dataset) return cmd_make_dataset(g, flags, out, err);
        if (*train) return cmd_train(g, data_dir, level, flags, out);
        if (*train_pixel) return cmd_train_pixel(g, data_dir, level, flags, out, err);
        if (*encode_cmd) return cmd_encode(g, input, flags, out);
        if (*decode_cmd) return cmd_decode(g, input, models_dir, zero_models, oracle, bits, out);
        if (*sample_cmd) return cmd_sample(g, data_dir, models_dir, cls, truncation, count, zero_models, out);
        if (*eval_cmd) return cmd_eval(g, real_dir, gen_dir, recon_dir, full_cov, flags, out);
        if (*compare_cmd) return cmd_compare(g, flags, out, err);
        if (*gen) return cmd_gen_corpus(g, toy, out);
        return usage;
    } catch (const Failure& e) {
        err << "error: " << e.what() << '\n';
        return e.code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return usage;
    } catch (const GeometryError& e) {
        err << "geometry error: " << e.what() << '\n';
        return geometry;
    } catch (const ShapeError& e) {
        err << "geometry error: " << e.what() << '\n';
        return geometry;
    } catch (const FormatError& e) {
        err << "bad input: " << e.what() << '\n';
        return bad_input;
    } catch (const ImageIOError& e) {
        err << "bad input: " << e.what() << '\n';
        return bad_input;
    } catch (const std::invalid_argument& e) {
        err << "invalid argument: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return bad_input;
    }
}

}  // namespace nsb::cli
