#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nsb/image.hpp"

namespace nsb {

struct ToyCorpusOptions {
    int classes = 8;
    int per_class = 32;
    int extent = 64;
    std::uint64_t seed = 0;
};

inline constexpr int kToyClassKinds = 8;

/// Procedural shapes and textures, values quantized to 8 bits so they match
/// what a PPM round trip returns. labels[i] = i / per_class.
struct ToyCorpus {
    std::vector<Image> images;
    std::vector<int> labels;
    std::vector<std::string> class_names;
};

ToyCorpus generate_toy_corpus(const ToyCorpusOptions& options);

/// Writes <dir>/<class_name>/<class_name>_NNN.ppm.
void write_toy_corpus(const std::filesystem::path& dir, const ToyCorpus& corpus);

struct CorpusItem {
    std::filesystem::path file;  // relative to the corpus root
    int label = 0;
    bool train = true;
};

struct Corpus {
    std::vector<std::string> class_names;
    std::vector<CorpusItem> items;
    std::vector<Image> images;
    std::vector<std::string> warnings;

    std::vector<std::size_t> split_indices(bool train) const;
};

/// Reads <dir>/<class>/*.ppm|*.pgm. Labels follow sorted directory names.
/// Images are centre-cropped to the largest power-of-two square that every
/// image admits; unreadable or channel-mismatched files are skipped with a
/// warning. The 80/20 train/validation split is a seeded shuffle.
Corpus load_corpus(const std::filesystem::path& dir, std::uint64_t seed);

Image center_crop(const Image& image, int extent);

/// Seeded 80/20 split: true marks training items.
std::vector<bool> split_train_validation(std::size_t n, std::uint64_t seed);

}  // namespace nsb
