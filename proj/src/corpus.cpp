#include "nsb/corpus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

namespace nsb {

namespace {

using Color = std::array<double, 3>;

const std::array<const char*, kToyClassKinds> kToyNames = {
    "hstripes", "vstripes", "diagonals", "discs", "rectangles", "checkers", "rings", "blobs",
};

struct Painter {
    std::mt19937_64 rng;

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    Color color() { return {uniform(0.05, 0.95), uniform(0.05, 0.95), uniform(0.05, 0.95)}; }
};

bool square_wave(double t, double period, double phase) {
    const double u = std::fmod(t + phase, period);
    return (u < 0 ? u + period : u) < period / 2;
}

Image paint(int kind, int n, Painter& p) {
    Image img(n, n, 3);
    const Color a = p.color(), b = p.color(), bg0 = p.color(), bg1 = p.color();
    const double period = p.uniform(8.0, 16.0), phase = p.uniform(0.0, period);
    const double cx = p.uniform(0.3, 0.7) * n, cy = p.uniform(0.3, 0.7) * n;
    const double radius = p.uniform(0.15, 0.35) * n;
    const double hw = p.uniform(0.15, 0.35) * n, hh = p.uniform(0.15, 0.35) * n;
    const double gx = p.uniform(-1.0, 1.0), gy = p.uniform(-1.0, 1.0);
    std::array<std::array<double, 3>, 3> balls{};
    for (auto& ball : balls) ball = {p.uniform(0.2, 0.8) * n, p.uniform(0.2, 0.8) * n, p.uniform(0.08, 0.16) * n};

    const bool flat_background = kind == 0 || kind == 1 || kind == 2 || kind == 5;
    // Foreground test at continuous position (u, v) in pixel units.
    auto inside = [&](double u, double v) {
        switch (kind) {
            case 0: return square_wave(v, period, phase);
            case 1: return square_wave(u, period, phase);
            case 2: return square_wave((u + v) / std::sqrt(2.0), period, phase);
            case 3: return std::hypot(u - cx, v - cy) < radius;
            case 4: return std::abs(u - cx) < hw && std::abs(v - cy) < hh;
            case 5: return square_wave(u, period, phase) != square_wave(v, period, phase);
            case 6: return square_wave(std::hypot(u - cx, v - cy), period, phase);
            default: {
                double field = 0.0;
                for (const auto& ball : balls) {
                    const double d2 = (u - ball[0]) * (u - ball[0]) + (v - ball[1]) * (v - ball[1]);
                    field += std::exp(-d2 / (2 * ball[2] * ball[2]));
                }
                return field > 0.5;
            }
        }
    };
    constexpr int ss = 4;  // supersampling per axis
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            int hits = 0;
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) hits += inside(x + (sx + 0.5) / ss, y + (sy + 0.5) / ss);
            }
            const double cover = static_cast<double>(hits) / (ss * ss);
            const double s = std::clamp(0.5 + 0.5 * (gx * (x - n / 2.0) + gy * (y - n / 2.0)) / n, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double back = flat_background ? b[c] : bg0[c] + s * (bg1[c] - bg0[c]);
                img.at(y, x, c) = cover * a[c] + (1.0 - cover) * back;
            }
        }
    }
    std::normal_distribution<double> noise(0.0, 0.01);
    for (auto& v : img.values) v = std::round(std::clamp(v + noise(p.rng), 0.0, 1.0) * 255.0) / 255.0;
    return img;
}

bool is_pnm(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

}  // namespace

ToyCorpus generate_toy_corpus(const ToyCorpusOptions& options) {
    if (options.classes < 1 || options.classes > kToyClassKinds) {
        throw std::invalid_argument("toy corpus supports 1.." + std::to_string(kToyClassKinds) + " classes");
    }
    if (options.per_class < 1) throw std::invalid_argument("toy corpus needs at least one image per class");
    if (options.extent < 8 || !std::has_single_bit(static_cast<unsigned>(options.extent))) {
        throw std::invalid_argument("toy corpus extent must be a power of two >= 8");
    }
    ToyCorpus out;
    for (int k = 0; k < options.classes; ++k) {
        out.class_names.emplace_back(kToyNames[k]);
        for (int i = 0; i < options.per_class; ++i) {
            std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                              static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(i)};
            Painter p{std::mt19937_64(seq)};
            out.images.push_back(paint(k, options.extent, p));
            out.labels.push_back(k);
        }
    }
    return out;
}

void write_toy_corpus(const std::filesystem::path& dir, const ToyCorpus& corpus) {
    std::map<int, int> counters;
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        const std::string& name = corpus.class_names[corpus.labels[i]];
        std::filesystem::create_directories(dir / name);
        char file[64];
        std::snprintf(file, sizeof file, "%s_%03d.ppm", name.c_str(), counters[corpus.labels[i]]++);
        write_pnm(dir / name / file, corpus.images[i]);
    }
}

Image center_crop(const Image& image, int extent) {
    if (extent > image.height || extent > image.width) {
        throw GeometryError("center_crop: " + std::to_string(extent) + " exceeds " + image.geometry());
    }
    const int y0 = (image.height - extent) / 2, x0 = (image.width - extent) / 2;
    Image out(extent, extent, image.channels);
    for (int y = 0; y < extent; ++y) {
        for (int x = 0; x < extent; ++x) {
            for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y0 + y, x0 + x, c);
        }
    }
    return out;
}

std::vector<bool> split_train_validation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    std::vector<bool> train(n, true);
    for (std::size_t i = 0; i < n_val; ++i) train[order[i]] = false;
    return train;
}

std::vector<std::size_t> Corpus::split_indices(bool train) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].train == train) out.push_back(i);
    }
    return out;
}

Corpus load_corpus(const std::filesystem::path& dir, std::uint64_t seed) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ImageIOError("corpus directory " + dir.string() + " does not exist");
    Corpus corpus;
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    struct Loaded {
        fs::path rel;
        int label;
        Image image;
    };
    std::vector<Loaded> loaded;
    for (const auto& cdir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(cdir)) {
            if (e.is_regular_file() && is_pnm(e.path())) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) continue;
        const int label = static_cast<int>(corpus.class_names.size());
        int kept = 0;
        for (const auto& f : files) {
            try {
                Image img = read_pnm(f);
                if (!loaded.empty() && img.channels != loaded.front().image.channels) {
                    corpus.warnings.push_back(f.string() + ": channel count differs from the corpus, skipped");
                    continue;
                }
                loaded.push_back({fs::relative(f, dir), label, std::move(img)});
                ++kept;
            } catch (const std::exception& e) {
                corpus.warnings.push_back(f.string() + ": " + e.what() + ", skipped");
            }
        }
        if (kept > 0) corpus.class_names.push_back(cdir.filename().string());
    }
    if (loaded.empty()) return corpus;

    int side = std::numeric_limits<int>::max();
    for (const auto& l : loaded) side = std::min({side, l.image.height, l.image.width});
    side = static_cast<int>(std::bit_floor(static_cast<unsigned>(side)));
    const auto train = split_train_validation(loaded.size(), seed);
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        auto& l = loaded[i];
        corpus.items.push_back({l.rel, l.label, train[i]});
        const bool fits = l.image.height == side && l.image.width == side;
        corpus.images.push_back(fits ? std::move(l.image) : center_crop(l.image, side));
    }
    return corpus;
}

}  // namespace nsb
