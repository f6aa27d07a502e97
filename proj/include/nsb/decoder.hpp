#pragma once

// UNet reconstructors and their MSE training loop.
//
// The trunk is a small UNet: (stages + 1) encoder blocks of two 3x3 convs
// separated by stride2_downsample, then `stages` decoder blocks that
// upsample, concatenate the matching encoder output and apply two convs.
// Shallow heads (conv, leaky_relu, conv) read the trunk output after
// `head_depth` further downsamplings; each head emits one patch.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsb/pyramid.hpp"
#include "nsb/tensor.hpp"

namespace nsb {

struct UNetConfig {
    int base_channels = 8;
    int stages = 1;
    int head_channels = 8;
    int kernel = 3;
    double slope = 0.2;

    /// Total convolution layers along any input-to-head path.
    int conv_depth() const { return 4 * stages + 4; }
    void validate() const;
    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

template <typename T>
class UNet {
public:
    /// Weights ~ U(-b, b) with b = sqrt(6 / ((1 + slope^2) * fan_in)), biases
    /// zero. With zero_heads the last conv of every head is all zeros.
    UNet(int in_channels, int out_channels, int head_count, int head_depth, const UNetConfig& config,
         std::uint64_t seed, bool zero_heads = false);

    // Copies own their parameters; moves transfer them.
    UNet(const UNet& other);
    UNet& operator=(const UNet& other);
    UNet(UNet&&) noexcept = default;
    UNet& operator=(UNet&&) noexcept = default;

    /// One [N, out_channels, H / 2^head_depth, W / 2^head_depth] tensor per head.
    std::vector<BasicTensor<T>> forward(const BasicTensor<T>& x) const;
    /// Heads concatenated along channels, in head order.
    BasicTensor<T> forward_concat(const BasicTensor<T>& x) const;

    std::span<BasicTensor<T>> parameters() { return params_; }
    std::span<const BasicTensor<T>> parameters() const { return params_; }
    const std::vector<std::string>& parameter_names() const { return names_; }

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }
    int head_count() const { return head_count_; }
    int head_depth() const { return head_depth_; }
    const UNetConfig& config() const { return config_; }

private:
    struct Conv {
        std::size_t weight;  // indices into params_
        std::size_t bias;
    };

    Conv add_conv(const std::string& name, int in, int out, std::mt19937_64& rng, bool zero);
    BasicTensor<T> apply(const Conv& conv, const BasicTensor<T>& x) const;
    BasicTensor<T> act(const BasicTensor<T>& x) const;

    int in_channels_;
    int out_channels_;
    int head_count_;
    int head_depth_;
    UNetConfig config_;
    std::vector<BasicTensor<T>> params_;
    std::vector<std::string> names_;
    std::vector<std::array<Conv, 2>> encoder_;
    std::vector<std::array<Conv, 2>> decoder_;  // decoder_[s] merges with encoder_ stage s
    std::vector<std::array<Conv, 2>> heads_;
};

/// Raised when a checkpoint does not fit the slot it is loaded into.
class ModelMismatchError : public GeometryError {
public:
    using GeometryError::GeometryError;
};

/// Level-l reconstructor: conditions on the level-l tl at native size and
/// predicts 3 * k base patches, k = (band_extent / base_patch)^2.
template <typename T>
class DecoderModel final : public LevelReconstructor {
public:
    DecoderModel(int level, LevelGeometry geometry, const UNetConfig& net, std::uint64_t seed, bool zero_heads = false);

    int level() const { return level_; }
    LevelGeometry geometry() const override { return geometry_; }
    std::array<PatchGrid, 3> predict(const Image& tl) const override;
    std::vector<std::array<PatchGrid, 3>> predict_batch(std::span<const Image> tl_batch) const;

    UNet<T>& net() { return net_; }
    const UNet<T>& net() const { return net_; }

private:
    int level_;
    LevelGeometry geometry_;
    UNet<T> net_;
};

template <typename T>
DecoderModel<T> build_decoder_model(int level, const LevelGeometry& geometry, std::uint64_t seed,
                                    const UNetConfig& net = {}) {
    return DecoderModel<T>(level, geometry, net, seed);
}

template <typename T>
std::vector<std::array<PatchGrid, 3>> predict_patches(const DecoderModel<T>& model, std::span<const Image> tl_batch) {
    return model.predict_batch(tl_batch);
}

/// Residual refiner for the pixel-space path: input is the bilinearly
/// upsampled image at target extent, output is a correction of the same shape.
template <typename T>
class PixelRefiner {
public:
    PixelRefiner(int level, int target_extent, int channels, const UNetConfig& net, std::uint64_t seed,
                 bool zero_output = false);

    int level() const { return level_; }
    int target_extent() const { return target_extent_; }
    int channels() const { return channels_; }
    Image residual(const Image& upsampled) const;

    UNet<T>& net() { return net_; }
    const UNet<T>& net() const { return net_; }

private:
    int level_;
    int target_extent_;
    int channels_;
    UNet<T> net_;
};

// --- training ---------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 128;
    int iterations = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    int validation_interval = 0;  // 0: validation only after the last iteration

    void validate() const;
};

struct LossRecord {
    int iteration = 0;
    double train_mse = 0.0;
    std::optional<double> val_mse;
};

/// Thrown when the training loss turns non-finite. The model has been
/// restored to the last parameters that produced a finite loss and the
/// matching checkpoint bytes are attached.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int iteration, double loss);
    int iteration() const { return iteration_; }
    std::vector<std::uint8_t> checkpoint;

private:
    int iteration_;
};

/// Flattened CHW examples for supervised regression.
struct RegressionSet {
    Shape input_shape;   // [C, H, W]
    Shape target_shape;
    std::vector<std::vector<float>> inputs;
    std::vector<std::vector<float>> targets;

    std::size_t size() const { return inputs.size(); }
};

struct FitResult {
    std::vector<LossRecord> history;
    double final_train_mse = 0.0;
    std::optional<double> final_val_mse;
};

FitResult fit_unet(UNet<float>& net, const RegressionSet& train, const RegressionSet* validation,
                   const TrainConfig& config);
double evaluate_mse(const UNet<float>& net, const RegressionSet& data);

/// Inputs: tl bands; targets: base patches of (tr, bl, br), head order.
RegressionSet make_decoder_regression_set(const LevelDataset& dataset, int base_patch, const FilterBank& fb);

template <typename Model>
struct TrainResult {
    Model model;
    FitResult fit;
};

TrainResult<DecoderModel<float>> train_decoder(const LevelDataset& train, const LevelDataset* validation,
                                               int base_patch, const TrainConfig& config, const FilterBank& fb,
                                               const UNetConfig& net = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history);

// --- persistence (NSBW checkpoints) -------------------------------------------------

std::vector<NamedTensor> decoder_checkpoint(const DecoderModel<float>& model);
DecoderModel<float> decoder_from_checkpoint(std::span<const NamedTensor> entries, int expected_level);
void save_model(const std::filesystem::path& path, const DecoderModel<float>& model);
/// Rejects a checkpoint whose recorded level differs from expected_level
/// (ModelMismatchError); format problems raise FormatError.
DecoderModel<float> load_model(const std::filesystem::path& path, int expected_level);

std::vector<NamedTensor> refiner_checkpoint(const PixelRefiner<float>& model);
PixelRefiner<float> refiner_from_checkpoint(std::span<const NamedTensor> entries, int expected_level);
void save_refiner(const std::filesystem::path& path, const PixelRefiner<float>& model);
PixelRefiner<float> load_refiner(const std::filesystem::path& path, int expected_level);

}  // namespace nsb
