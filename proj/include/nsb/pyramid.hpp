#pragma once

// Recursive wavelet encoder (keep only the low/low band at every level), base
// patch slicing of the discarded bands, and the per-level decoder assembly.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nsb/image.hpp"
#include "nsb/wavelet.hpp"

namespace nsb {

struct PyramidCode {
    int levels = 0;
    Image tl;
    int original_height = 0;
    int original_width = 0;
    int channels = 0;
    std::string wavelet_name;

    friend bool operator==(const PyramidCode&, const PyramidCode&) = default;
};

/// Applies dwt2d `levels` times, keeping tl each time. levels >= 1.
PyramidCode encode(const Image& image, int levels, const FilterBank& fb);

/// Entry l-1 is dwt2d of the tl band of entry l-2 (entry 0 transforms the image).
std::vector<QuadDecomposition> full_decompose(const Image& image, int levels, const FilterBank& fb);

/// Inverts full_decompose using every stored band.
Image reconstruct_from_decomposition(std::span<const QuadDecomposition> levels, const FilterBank& fb);

/// Leaves of the recursive quad split of one band, depth-first (tl, tr, bl, br).
struct PatchGrid {
    std::vector<Image> patches;
    int grid_rows = 0;
    int grid_cols = 0;
    int base_size = 0;
};

PatchGrid slice_to_base_patches(const Image& band, int base_size, const FilterBank& fb);
Image assemble_from_patches(const PatchGrid& grid, const FilterBank& fb);

/// Shape contract of a level decoder: square tl/band extent, base patch size
/// and channel count.
struct LevelGeometry {
    int band_extent = 0;
    int base_patch = 32;
    int channels = 3;

    int patches_per_band() const;  // (band_extent / base_patch)^2
    int head_count() const { return 3 * patches_per_band(); }
    int slice_depth() const;       // log2(band_extent / base_patch)
    void validate() const;
    friend bool operator==(const LevelGeometry&, const LevelGeometry&) = default;
};

/// Band order in predictions and checkpoints.
enum class Band { tr = 0, bl = 1, br = 2 };

/// Anything that predicts the three detail bands of one level from its tl.
class LevelReconstructor {
public:
    virtual ~LevelReconstructor() = default;
    virtual LevelGeometry geometry() const = 0;
    virtual std::array<PatchGrid, 3> predict(const Image& tl) const = 0;
};

/// Predicts all-zero detail bands: decoding becomes the low-pass upsample.
class ZeroReconstructor final : public LevelReconstructor {
public:
    explicit ZeroReconstructor(LevelGeometry geometry) : geometry_(geometry) { geometry_.validate(); }
    LevelGeometry geometry() const override { return geometry_; }
    std::array<PatchGrid, 3> predict(const Image& tl) const override;

private:
    LevelGeometry geometry_;
};

/// Returns the true detail bands of a known decomposition level.
class OracleReconstructor final : public LevelReconstructor {
public:
    OracleReconstructor(const QuadDecomposition& truth, int base_patch, const FilterBank& fb);
    LevelGeometry geometry() const override { return geometry_; }
    std::array<PatchGrid, 3> predict(const Image& tl) const override;

private:
    LevelGeometry geometry_;
    std::array<PatchGrid, 3> patches_;
};

/// One decoding step: predicted detail bands + tl -> parent tl (extents double).
Image decode_level(const Image& tl, const LevelReconstructor& model, const FilterBank& fb);

/// models[i] decodes level i + 1; decoding runs from level L down to 1.
Image decode(const PyramidCode& code, std::span<const LevelReconstructor* const> models, const FilterBank& fb);

// --- containers -------------------------------------------------------------------

inline constexpr std::uint16_t kCodeVersion = 1;
inline constexpr std::uint16_t kLevelDatasetVersion = 1;

std::vector<std::uint8_t> serialize_code(const PyramidCode& code);
PyramidCode deserialize_code(std::span<const std::uint8_t> bytes);

struct LevelExample {
    Image tl;
    Image tr;
    Image bl;
    Image br;
};

struct LevelDataset {
    int level = 0;
    std::vector<LevelExample> examples;
};

/// Level datasets 1..levels for a corpus of equally-shaped images.
std::vector<LevelDataset> build_level_datasets(std::span<const Image> images, int levels, const FilterBank& fb);

/// "NSBD" container: same float layout as NSBC, four bands per example.
std::vector<std::uint8_t> serialize_level_dataset(const LevelDataset& dataset);
LevelDataset deserialize_level_dataset(std::span<const std::uint8_t> bytes);

}  // namespace nsb
