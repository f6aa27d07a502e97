#include "nsb/pyramid.hpp"

#include <bit>
#include <stdexcept>

#include "nsb/binary_io.hpp"

namespace nsb {

namespace {

void check_levels(const Image& image, int levels, const char* op) {
    if (levels < 1) throw std::invalid_argument(std::string(op) + ": levels must be >= 1, got " + std::to_string(levels));
    if (levels > 30) throw std::invalid_argument(std::string(op) + ": levels too large");
    const int factor = 1 << levels;
    if (image.height % factor != 0) {
        throw GeometryError(std::string(op) + ": height " + std::to_string(image.height) + " not divisible by 2^" +
                            std::to_string(levels));
    }
    if (image.width % factor != 0) {
        throw GeometryError(std::string(op) + ": width " + std::to_string(image.width) + " not divisible by 2^" +
                            std::to_string(levels));
    }
}

void slice_recursive(const Image& band, int base, const FilterBank& fb, std::vector<Image>& out) {
    if (band.height == base) {
        out.push_back(band);
        return;
    }
    const auto quad = dwt2d(band, fb);
    slice_recursive(quad.tl, base, fb, out);
    slice_recursive(quad.tr, base, fb, out);
    slice_recursive(quad.bl, base, fb, out);
    slice_recursive(quad.br, base, fb, out);
}

Image assemble_recursive(const std::vector<Image>& patches, std::size_t& pos, int extent, int base,
                         const FilterBank& fb) {
    if (extent == base) return patches[pos++];
    QuadDecomposition quad;
    quad.tl = assemble_recursive(patches, pos, extent / 2, base, fb);
    quad.tr = assemble_recursive(patches, pos, extent / 2, base, fb);
    quad.bl = assemble_recursive(patches, pos, extent / 2, base, fb);
    quad.br = assemble_recursive(patches, pos, extent / 2, base, fb);
    return idwt2d(quad, fb);
}

bool is_pow2(int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); }

void put_image(ByteWriter& out, const Image& image) {
    for (double v : image.values) out.put_f32(static_cast<float>(v));
}

Image get_image(ByteReader& in, int h, int w, int c) {
    Image image(h, w, c);
    if (in.remaining() / 4 < image.size()) {
        throw FormatError(FormatErrorKind::truncated_payload,
                          "need " + std::to_string(image.size()) + " floats, " + std::to_string(in.remaining()) + " bytes left");
    }
    for (double& v : image.values) v = in.f32();
    return image;
}

int checked_channels(std::uint8_t c) {
    if (c != 1 && c != 3) throw FormatError(FormatErrorKind::malformed, "channel count " + std::to_string(c));
    return c;
}

}  // namespace

PyramidCode encode(const Image& image, int levels, const FilterBank& fb) {
    check_levels(image, levels, "encode");
    Image tl = image;
    for (int l = 0; l < levels; ++l) tl = dwt2d(tl, fb).tl;
    return {levels, std::move(tl), image.height, image.width, image.channels, fb.name};
}

std::vector<QuadDecomposition> full_decompose(const Image& image, int levels, const FilterBank& fb) {
    check_levels(image, levels, "full_decompose");
    std::vector<QuadDecomposition> out;
    out.push_back(dwt2d(image, fb));
    for (int l = 1; l < levels; ++l) out.push_back(dwt2d(out.back().tl, fb));
    return out;
}

Image reconstruct_from_decomposition(std::span<const QuadDecomposition> levels, const FilterBank& fb) {
    if (levels.empty()) throw std::invalid_argument("reconstruct_from_decomposition: no levels");
    Image tl = levels.back().tl;
    for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
        tl = idwt2d({std::move(tl), it->tr, it->bl, it->br}, fb);
    }
    return tl;
}

PatchGrid slice_to_base_patches(const Image& band, int base_size, const FilterBank& fb) {
    if (base_size < 1 || band.height % base_size != 0 || band.width % base_size != 0 ||
        band.height / base_size != band.width / base_size || !is_pow2(band.height / base_size)) {
        throw GeometryError("slice_to_base_patches: band " + band.geometry() + " is not a square power-of-two multiple of " +
                            std::to_string(base_size));
    }
    PatchGrid grid;
    grid.base_size = base_size;
    grid.grid_rows = grid.grid_cols = band.height / base_size;
    grid.patches.reserve(static_cast<std::size_t>(grid.grid_rows) * grid.grid_cols);
    slice_recursive(band, base_size, fb, grid.patches);
    return grid;
}

Image assemble_from_patches(const PatchGrid& grid, const FilterBank& fb) {
    if (grid.grid_rows != grid.grid_cols || !is_pow2(grid.grid_rows) ||
        grid.patches.size() != static_cast<std::size_t>(grid.grid_rows) * grid.grid_cols) {
        throw GeometryError("assemble_from_patches: malformed grid (" + std::to_string(grid.grid_rows) + "x" +
                            std::to_string(grid.grid_cols) + " with " + std::to_string(grid.patches.size()) + " patches)");
    }
    for (const auto& p : grid.patches) {
        if (p.height != grid.base_size || p.width != grid.base_size || p.channels != grid.patches.front().channels) {
            throw GeometryError("assemble_from_patches: patch " + p.geometry() + " does not match base size " +
                                std::to_string(grid.base_size));
        }
    }
    std::size_t pos = 0;
    return assemble_recursive(grid.patches, pos, grid.base_size * grid.grid_rows, grid.base_size, fb);
}

// --- LevelGeometry / reconstructors --------------------------------------------------

void LevelGeometry::validate() const {
    if (base_patch < 1 || band_extent < base_patch) {
        throw GeometryError("level geometry: band extent " + std::to_string(band_extent) + " smaller than base patch " +
                            std::to_string(base_patch));
    }
    if (band_extent % base_patch != 0 || !is_pow2(band_extent / base_patch)) {
        throw GeometryError("level geometry: band extent " + std::to_string(band_extent) +
                            " is not a power-of-two multiple of " + std::to_string(base_patch));
    }
    if (channels != 1 && channels != 3) throw GeometryError("level geometry: channels must be 1 or 3");
}

int LevelGeometry::patches_per_band() const {
    const int r = band_extent / base_patch;
    return r * r;
}

int LevelGeometry::slice_depth() const { return std::countr_zero(static_cast<unsigned>(band_extent / base_patch)); }

std::array<PatchGrid, 3> ZeroReconstructor::predict(const Image& tl) const {
    if (tl.height != geometry_.band_extent || tl.width != geometry_.band_extent || tl.channels != geometry_.channels) {
        throw GeometryError("zero reconstructor expects tl of extent " + std::to_string(geometry_.band_extent) + ", got " +
                            tl.geometry());
    }
    PatchGrid grid;
    grid.base_size = geometry_.base_patch;
    grid.grid_rows = grid.grid_cols = geometry_.band_extent / geometry_.base_patch;
    grid.patches.assign(geometry_.patches_per_band(),
                        Image(geometry_.base_patch, geometry_.base_patch, geometry_.channels));
    return {grid, grid, grid};
}

OracleReconstructor::OracleReconstructor(const QuadDecomposition& truth, int base_patch, const FilterBank& fb)
    : geometry_{truth.tl.height, base_patch, truth.tl.channels},
      patches_{slice_to_base_patches(truth.tr, base_patch, fb), slice_to_base_patches(truth.bl, base_patch, fb),
               slice_to_base_patches(truth.br, base_patch, fb)} {
    if (truth.tl.height != truth.tl.width) throw GeometryError("oracle reconstructor needs square bands");
    geometry_.validate();
}

std::array<PatchGrid, 3> OracleReconstructor::predict(const Image& tl) const {
    if (tl.height != geometry_.band_extent || tl.width != geometry_.band_extent || tl.channels != geometry_.channels) {
        throw GeometryError("oracle reconstructor expects tl of extent " + std::to_string(geometry_.band_extent) + ", got " +
                            tl.geometry());
    }
    return patches_;
}

Image decode_level(const Image& tl, const LevelReconstructor& model, const FilterBank& fb) {
    const auto g = model.geometry();
    if (tl.height != g.band_extent || tl.width != g.band_extent || tl.channels != g.channels) {
        throw GeometryError("decode_level: tl " + tl.geometry() + " does not match model band extent " +
                            std::to_string(g.band_extent) + " with " + std::to_string(g.channels) + " channels");
    }
    auto grids = model.predict(tl);
    QuadDecomposition quad{tl, assemble_from_patches(grids[0], fb), assemble_from_patches(grids[1], fb),
                           assemble_from_patches(grids[2], fb)};
    return idwt2d(quad, fb);
}

Image decode(const PyramidCode& code, std::span<const LevelReconstructor* const> models, const FilterBank& fb) {
    if (static_cast<int>(models.size()) != code.levels) {
        throw GeometryError("decode: code has " + std::to_string(code.levels) + " levels but " +
                            std::to_string(models.size()) + " models were supplied");
    }
    const int factor = 1 << code.levels;
    if (code.tl.height * factor != code.original_height || code.tl.width * factor != code.original_width ||
        code.tl.channels != code.channels) {
        throw GeometryError("decode: tl " + code.tl.geometry() + " inconsistent with original " +
                            std::to_string(code.original_height) + "x" + std::to_string(code.original_width));
    }
    Image tl = code.tl;
    for (int level = code.levels; level >= 1; --level) {
        const auto* model = models[level - 1];
        if (model == nullptr) throw std::invalid_argument("decode: missing model for level " + std::to_string(level));
        tl = decode_level(tl, *model, fb);
    }
    return tl;
}

// --- containers ---------------------------------------------------------------------

std::vector<std::uint8_t> serialize_code(const PyramidCode& code) {
    if (code.wavelet_name.size() > 0xff) throw std::invalid_argument("wavelet name too long");
    if (code.levels < 1 || code.levels > 0xff) throw std::invalid_argument("levels out of range");
    const int factor = 1 << code.levels;
    if (code.tl.height * factor != code.original_height || code.tl.width * factor != code.original_width ||
        code.tl.channels != code.channels) {
        throw GeometryError("serialize_code: tl " + code.tl.geometry() + " inconsistent with recorded geometry");
    }
    ByteWriter out;
    out.put_bytes("NSBC");
    out.put_u16(kCodeVersion);
    out.put_u8(static_cast<std::uint8_t>(code.wavelet_name.size()));
    out.put_bytes(code.wavelet_name);
    out.put_u8(static_cast<std::uint8_t>(code.levels));
    out.put_u32(static_cast<std::uint32_t>(code.original_height));
    out.put_u32(static_cast<std::uint32_t>(code.original_width));
    out.put_u8(static_cast<std::uint8_t>(code.channels));
    put_image(out, code.tl);
    return std::move(out).take();
}

PyramidCode deserialize_code(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("NSBC");
    in.expect_version(kCodeVersion);
    PyramidCode code;
    code.wavelet_name = in.bytes(in.u8());
    code.levels = in.u8();
    code.original_height = static_cast<int>(in.u32());
    code.original_width = static_cast<int>(in.u32());
    code.channels = checked_channels(in.u8());
    if (code.levels < 1 || code.levels > 30) throw FormatError(FormatErrorKind::malformed, "level count " + std::to_string(code.levels));
    const int factor = 1 << code.levels;
    if (code.original_height <= 0 || code.original_width <= 0 || code.original_height % factor != 0 ||
        code.original_width % factor != 0) {
        throw FormatError(FormatErrorKind::malformed, "original extents not divisible by 2^levels");
    }
    code.tl = get_image(in, code.original_height / factor, code.original_width / factor, code.channels);
    in.expect_end("NSBC container");
    return code;
}

std::vector<LevelDataset> build_level_datasets(std::span<const Image> images, int levels, const FilterBank& fb) {
    std::vector<LevelDataset> out(static_cast<std::size_t>(levels));
    for (int l = 0; l < levels; ++l) out[l].level = l + 1;
    for (const auto& image : images) {
        auto quads = full_decompose(image, levels, fb);
        for (int l = 0; l < levels; ++l) {
            auto& q = quads[l];
            out[l].examples.push_back({std::move(q.tl), std::move(q.tr), std::move(q.bl), std::move(q.br)});
        }
    }
    return out;
}

std::vector<std::uint8_t> serialize_level_dataset(const LevelDataset& dataset) {
    ByteWriter out;
    out.put_bytes("NSBD");
    out.put_u16(kLevelDatasetVersion);
    out.put_u8(static_cast<std::uint8_t>(dataset.level));
    out.put_u32(static_cast<std::uint32_t>(dataset.examples.size()));
    const Image* first = dataset.examples.empty() ? nullptr : &dataset.examples.front().tl;
    out.put_u32(first ? first->height : 0);
    out.put_u32(first ? first->width : 0);
    out.put_u8(static_cast<std::uint8_t>(first ? first->channels : 0));
    for (const auto& ex : dataset.examples) {
        for (const Image* band : {&ex.tl, &ex.tr, &ex.bl, &ex.br}) {
            if (!band->same_geometry(*first)) throw GeometryError("serialize_level_dataset: inconsistent band geometry");
            put_image(out, *band);
        }
    }
    return std::move(out).take();
}

LevelDataset deserialize_level_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("NSBD");
    in.expect_version(kLevelDatasetVersion);
    LevelDataset dataset;
    dataset.level = in.u8();
    const auto count = in.u32();
    const auto h = static_cast<int>(in.u32());
    const auto w = static_cast<int>(in.u32());
    const auto c = in.u8();
    if (count > 0) {
        checked_channels(c);
        if (h <= 0 || w <= 0) throw FormatError(FormatErrorKind::malformed, "zero band extent");
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        LevelExample ex;
        ex.tl = get_image(in, h, w, c);
        ex.tr = get_image(in, h, w, c);
        ex.bl = get_image(in, h, w, c);
        ex.br = get_image(in, h, w, c);
        dataset.examples.push_back(std::move(ex));
    }
    in.expect_end("NSBD container");
    return dataset;
}

}  // namespace nsb
