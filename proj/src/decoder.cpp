#include "nsb/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "nsb/binary_io.hpp"
#include "nsb/image.hpp"

namespace nsb {

void UNetConfig::validate() const {
    if (base_channels < 1 || head_channels < 1 || stages < 0 || stages > 8) {
        throw std::invalid_argument("UNet config: channels must be positive and stages in [0, 8]");
    }
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("UNet config: kernel must be odd");
    if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("UNet config: slope must lie in [0, 1)");
}

// --- UNet --------------------------------------------------------------------------------

template <typename T>
UNet<T>::UNet(int in_channels, int out_channels, int head_count, int head_depth, const UNetConfig& config,
              std::uint64_t seed, bool zero_heads)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      head_count_(head_count),
      head_depth_(head_depth),
      config_(config) {
    config.validate();
    if (in_channels < 1 || out_channels < 1 || head_count < 1 || head_depth < 0) {
        throw std::invalid_argument("UNet: invalid channel/head arguments");
    }
    std::mt19937_64 rng(seed);
    const int F = config.base_channels;
    int in = in_channels;
    for (int s = 0; s <= config.stages; ++s) {
        const int ch = F << s;
        const std::string p = "enc" + std::to_string(s);
        encoder_.push_back({add_conv(p + ".conv0", in, ch, rng, false), add_conv(p + ".conv1", ch, ch, rng, false)});
        in = ch;
    }
    decoder_.resize(static_cast<std::size_t>(config.stages));
    for (int s = config.stages - 1; s >= 0; --s) {
        const int ch = F << s;
        const std::string p = "dec" + std::to_string(s);
        decoder_[s] = {add_conv(p + ".conv0", (F << (s + 1)) + ch, ch, rng, false),
                       add_conv(p + ".conv1", ch, ch, rng, false)};
    }
    for (int h = 0; h < head_count; ++h) {
        const std::string p = "head" + std::to_string(h);
        heads_.push_back({add_conv(p + ".conv0", F, config.head_channels, rng, false),
                          add_conv(p + ".conv1", config.head_channels, out_channels, rng, zero_heads)});
    }
}

template <typename T>
UNet<T>::UNet(const UNet& other)
    : in_channels_(other.in_channels_),
      out_channels_(other.out_channels_),
      head_count_(other.head_count_),
      head_depth_(other.head_depth_),
      config_(other.config_),
      names_(other.names_),
      encoder_(other.encoder_),
      decoder_(other.decoder_),
      heads_(other.heads_) {
    for (const auto& p : other.params_) {
        params_.push_back(BasicTensor<T>::from_values(p.shape(), {p.values().begin(), p.values().end()}, true));
    }
}

template <typename T>
UNet<T>& UNet<T>::operator=(const UNet& other) {
    if (this != &other) *this = UNet(other);
    return *this;
}

template <typename T>
typename UNet<T>::Conv UNet<T>::add_conv(const std::string& name, int in, int out, std::mt19937_64& rng, bool zero) {
    const auto K = static_cast<std::size_t>(config_.kernel);
    const double fan_in = static_cast<double>(in) * K * K;
    const double bound = std::sqrt(6.0 / ((1.0 + config_.slope * config_.slope) * fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> w(static_cast<std::size_t>(out) * in * K * K, T(0));
    if (!zero) {
        for (T& v : w) v = static_cast<T>(dist(rng));
    }
    Conv conv{params_.size(), params_.size() + 1};
    params_.push_back(BasicTensor<T>::from_values(
        {static_cast<std::size_t>(out), static_cast<std::size_t>(in), K, K}, std::move(w), true));
    names_.push_back(name + ".weight");
    params_.push_back(BasicTensor<T>::zeros({static_cast<std::size_t>(out)}, true));
    names_.push_back(name + ".bias");
    return conv;
}

template <typename T>
BasicTensor<T> UNet<T>::apply(const Conv& conv, const BasicTensor<T>& x) const {
    return ops::conv2d(x, params_[conv.weight], params_[conv.bias]);
}

template <typename T>
BasicTensor<T> UNet<T>::act(const BasicTensor<T>& x) const {
    return ops::leaky_relu(x, static_cast<T>(config_.slope));
}

template <typename T>
std::vector<BasicTensor<T>> UNet<T>::forward(const BasicTensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(in_channels_)) {
        throw ShapeError("UNet: expected [N," + std::to_string(in_channels_) + ",H,W], got " + shape_string(x.shape()));
    }
    const std::size_t align = std::size_t{1} << std::max(config_.stages, head_depth_);
    if (x.dim(2) % align != 0 || x.dim(3) % align != 0) {
        throw ShapeError("UNet: spatial extents " + shape_string(x.shape()) + " must be divisible by " +
                         std::to_string(align));
    }
    std::vector<BasicTensor<T>> skips;
    BasicTensor<T> cur = x;
    for (std::size_t s = 0; s < encoder_.size(); ++s) {
        if (s > 0) cur = ops::stride2_downsample(cur);
        cur = act(apply(encoder_[s][0], cur));
        cur = act(apply(encoder_[s][1], cur));
        skips.push_back(cur);
    }
    for (int s = config_.stages - 1; s >= 0; --s) {
        const BasicTensor<T> parts[] = {ops::nearest_upsample2x(cur), skips[s]};
        cur = ops::concat_channels<T>(parts);
        cur = act(apply(decoder_[s][0], cur));
        cur = act(apply(decoder_[s][1], cur));
    }
    for (int d = 0; d < head_depth_; ++d) cur = ops::stride2_downsample(cur);
    std::vector<BasicTensor<T>> out;
    out.reserve(heads_.size());
    for (const auto& head : heads_) out.push_back(apply(head[1], act(apply(head[0], cur))));
    return out;
}

template <typename T>
BasicTensor<T> UNet<T>::forward_concat(const BasicTensor<T>& x) const {
    auto heads = forward(x);
    if (heads.size() == 1) return heads.front();
    return ops::concat_channels<T>(heads);
}

// --- DecoderModel ---------------------------------------------------------------------------

template <typename T>
DecoderModel<T>::DecoderModel(int level, LevelGeometry geometry, const UNetConfig& net, std::uint64_t seed,
                              bool zero_heads)
    : level_(level),
      geometry_((geometry.validate(), geometry)),
      net_(geometry.channels, geometry.channels, geometry.head_count(), geometry.slice_depth(), net, seed, zero_heads) {
    if (level < 1) throw std::invalid_argument("decoder level must be >= 1");
}

template <typename T>
std::vector<std::array<PatchGrid, 3>> DecoderModel<T>::predict_batch(std::span<const Image> tl_batch) const {
    for (const auto& tl : tl_batch) {
        if (tl.height != geometry_.band_extent || tl.width != geometry_.band_extent || tl.channels != geometry_.channels) {
            throw GeometryError("level-" + std::to_string(level_) + " decoder expects tl of extent " +
                                std::to_string(geometry_.band_extent) + "x" + std::to_string(geometry_.band_extent) +
                                "x" + std::to_string(geometry_.channels) + ", got " + tl.geometry());
        }
    }
    std::vector<std::array<PatchGrid, 3>> out(tl_batch.size());
    if (tl_batch.empty()) return out;
    NoGradGuard no_grad;
    const auto heads = net_.forward(images_to_tensor<T>(tl_batch));
    const int k = geometry_.patches_per_band();
    const int side = geometry_.band_extent / geometry_.base_patch;
    for (std::size_t n = 0; n < tl_batch.size(); ++n) {
        for (int b = 0; b < 3; ++b) {
            PatchGrid& grid = out[n][b];
            grid.base_size = geometry_.base_patch;
            grid.grid_rows = grid.grid_cols = side;
            for (int i = 0; i < k; ++i) grid.patches.push_back(tensor_to_image(heads[b * k + i], n));
        }
    }
    return out;
}

template <typename T>
std::array<PatchGrid, 3> DecoderModel<T>::predict(const Image& tl) const {
    return predict_batch(std::span<const Image>(&tl, 1)).front();
}

// --- PixelRefiner -----------------------------------------------------------------------------

template <typename T>
PixelRefiner<T>::PixelRefiner(int level, int target_extent, int channels, const UNetConfig& net, std::uint64_t seed,
                              bool zero_output)
    : level_(level), target_extent_(target_extent), channels_(channels), net_(channels, channels, 1, 0, net, seed, zero_output) {
    if (level < 1 || target_extent < 2 || (channels != 1 && channels != 3)) {
        throw std::invalid_argument("pixel refiner: invalid level/extent/channels");
    }
}

template <typename T>
Image PixelRefiner<T>::residual(const Image& upsampled) const {
    if (upsampled.height != target_extent_ || upsampled.width != target_extent_ || upsampled.channels != channels_) {
        throw GeometryError("level-" + std::to_string(level_) + " pixel refiner expects " + std::to_string(target_extent_) +
                            "x" + std::to_string(target_extent_) + "x" + std::to_string(channels_) + ", got " +
                            upsampled.geometry());
    }
    NoGradGuard no_grad;
    const auto out = net_.forward_concat(images_to_tensor<T>(std::span<const Image>(&upsampled, 1)));
    return tensor_to_image(out, 0);
}

template class UNet<float>;
template class UNet<double>;
template class DecoderModel<float>;
template class DecoderModel<double>;
template class PixelRefiner<float>;
template class PixelRefiner<double>;

// --- training ---------------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(learning_rate > 0) || batch_size < 1 || iterations < 1 || !(epsilon > 0) || validation_interval < 0) {
        throw std::invalid_argument("train config: learning_rate, batch_size, iterations and epsilon must be positive");
    }
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
        throw std::invalid_argument("train config: betas must lie in [0, 1)");
    }
}

TrainingDiverged::TrainingDiverged(int iteration, double loss)
    : std::runtime_error("training loss became non-finite (" + std::to_string(loss) + ") at iteration " +
                         std::to_string(iteration)),
      iteration_(iteration) {}

namespace {

std::vector<float> to_chw(const Image& image) {
    const std::size_t HW = static_cast<std::size_t>(image.height) * image.width;
    std::vector<float> out(HW * image.channels);
    for (std::size_t p = 0; p < HW; ++p) {
        for (int c = 0; c < image.channels; ++c) out[c * HW + p] = static_cast<float>(image.values[p * image.channels + c]);
    }
    return out;
}

Tensor32 gather(const std::vector<std::vector<float>>& rows, const Shape& row_shape, std::span<const std::size_t> idx) {
    const std::size_t row = shape_size(row_shape);
    std::vector<float> values(idx.size() * row);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy(rows[idx[i]].begin(), rows[idx[i]].end(), values.begin() + i * row);
    Shape shape{idx.size()};
    shape.insert(shape.end(), row_shape.begin(), row_shape.end());
    return Tensor32::from_values(std::move(shape), std::move(values));
}

void check_set(const RegressionSet& set, const UNet<float>& net, const char* what) {
    if (set.size() == 0) throw std::invalid_argument(std::string(what) + " set is empty");
    if (set.targets.size() != set.inputs.size()) throw std::invalid_argument(std::string(what) + " set: input/target count mismatch");
    if (set.input_shape.size() != 3 || set.input_shape[0] != static_cast<std::size_t>(net.in_channels())) {
        throw ShapeError(std::string(what) + " set: input shape " + shape_string(set.input_shape) + " does not fit the network");
    }
}

}  // namespace

double evaluate_mse(const UNet<float>& net, const RegressionSet& data) {
    check_set(data, net, "evaluation");
    NoGradGuard no_grad;
    constexpr std::size_t chunk = 32;
    double sum = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        idx.resize(std::min(chunk, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto pred = net.forward_concat(gather(data.inputs, data.input_shape, idx));
        const auto target = gather(data.targets, data.target_shape, idx);
        if (pred.shape() != target.shape()) {
            throw ShapeError("evaluate_mse: prediction " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
        }
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]);
            sum += d * d;
        }
        count += pred.size();
    }
    return sum / static_cast<double>(count);
}

FitResult fit_unet(UNet<float>& net, const RegressionSet& train, const RegressionSet* validation,
                   const TrainConfig& config) {
    config.validate();
    check_set(train, net, "training");
    if (validation && validation->size() == 0) validation = nullptr;
    if (validation) check_set(*validation, net, "validation");

    auto params = net.parameters();
    AdamState<float> adam(params, {config.learning_rate, config.beta1, config.beta2, config.epsilon});
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), train.size());

    std::vector<std::vector<float>> last_good;
    auto snapshot = [&] {
        last_good.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) last_good[i].assign(params[i].values().begin(), params[i].values().end());
    };
    FitResult result;
    std::vector<std::size_t> idx(batch);
    for (int it = 1; it <= config.iterations; ++it) {
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            idx[b] = order[cursor++];
        }
        const auto x = gather(train.inputs, train.input_shape, idx);
        const auto y = gather(train.targets, train.target_shape, idx);
        for (auto& p : params) p.zero_grad();
        const auto loss = ops::mse_loss(net.forward_concat(x), y);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            if (!last_good.empty()) {
                for (std::size_t i = 0; i < params.size(); ++i) std::copy(last_good[i].begin(), last_good[i].end(), params[i].values().begin());
            }
            throw TrainingDiverged(it, value);
        }
        snapshot();
        backward(loss);
        adam_step(params, adam);

        LossRecord record{it, value, std::nullopt};
        const bool last = it == config.iterations;
        if (validation && (last || (config.validation_interval > 0 && it % config.validation_interval == 0))) {
            record.val_mse = evaluate_mse(net, *validation);
        }
        result.history.push_back(record);
    }
    result.final_train_mse = evaluate_mse(net, train);
    if (validation) result.final_val_mse = result.history.back().val_mse;
    return result;
}

RegressionSet make_decoder_regression_set(const LevelDataset& dataset, int base_patch, const FilterBank& fb) {
    RegressionSet set;
    for (const auto& ex : dataset.examples) {
        if (set.inputs.empty()) {
            const auto C = static_cast<std::size_t>(ex.tl.channels);
            const auto P = static_cast<std::size_t>(base_patch);
            LevelGeometry g{ex.tl.height, base_patch, ex.tl.channels};
            g.validate();
            set.input_shape = {C, static_cast<std::size_t>(ex.tl.height), static_cast<std::size_t>(ex.tl.width)};
            set.target_shape = {static_cast<std::size_t>(g.head_count()) * C, P, P};
        }
        set.inputs.push_back(to_chw(ex.tl));
        std::vector<float> target;
        target.reserve(shape_size(set.target_shape));
        for (const Image* band : {&ex.tr, &ex.bl, &ex.br}) {
            for (const auto& patch : slice_to_base_patches(*band, base_patch, fb).patches) {
                const auto chw = to_chw(patch);
                target.insert(target.end(), chw.begin(), chw.end());
            }
        }
        if (target.size() != shape_size(set.target_shape) || set.inputs.back().size() != shape_size(set.input_shape)) {
            throw GeometryError("level dataset examples do not share one geometry");
        }
        set.targets.push_back(std::move(target));
    }
    return set;
}

TrainResult<DecoderModel<float>> train_decoder(const LevelDataset& train, const LevelDataset* validation,
                                               int base_patch, const TrainConfig& config, const FilterBank& fb,
                                               const UNetConfig& net) {
    if (train.examples.empty()) throw std::invalid_argument("train_decoder: empty dataset");
    const Image& tl = train.examples.front().tl;
    if (tl.height != tl.width) throw GeometryError("train_decoder: tl bands must be square, got " + tl.geometry());
    LevelGeometry geometry{tl.height, base_patch, tl.channels};
    DecoderModel<float> model(std::max(train.level, 1), geometry, net, config.seed, /*zero_heads=*/true);
    const auto train_set = make_decoder_regression_set(train, base_patch, fb);
    std::optional<RegressionSet> val_set;
    if (validation && !validation->examples.empty()) val_set = make_decoder_regression_set(*validation, base_patch, fb);
    try {
        auto fit = fit_unet(model.net(), train_set, val_set ? &*val_set : nullptr, config);
        return {std::move(model), std::move(fit)};
    } catch (TrainingDiverged& e) {
        e.checkpoint = encode_checkpoint(decoder_checkpoint(model));
        throw;
    }
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "iteration,train_mse,val_mse\n" << std::setprecision(9);
    for (const auto& r : history) {
        out << r.iteration << ',' << r.train_mse << ',';
        if (r.val_mse) out << *r.val_mse;
        out << '\n';
    }
}

// --- persistence ------------------------------------------------------------------------------

namespace {

Tensor32 meta_tensor(std::vector<float> values) {
    const std::size_t n = values.size();
    return Tensor32::from_values({n}, std::move(values));
}

std::vector<NamedTensor> with_params(std::string meta_name, Tensor32 meta, const UNet<float>& net) {
    std::vector<NamedTensor> entries{{std::move(meta_name), std::move(meta)}};
    const auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) entries.push_back({net.parameter_names()[i], params[i].detach()});
    return entries;
}

std::vector<int> read_meta(std::span<const NamedTensor> entries, const std::string& name, std::size_t count) {
    if (entries.empty() || entries.front().name != name || entries.front().tensor.size() != count) {
        throw FormatError(FormatErrorKind::malformed, "checkpoint lacks a leading '" + name + "' entry");
    }
    std::vector<int> meta;
    for (float v : entries.front().tensor.values()) meta.push_back(static_cast<int>(std::lround(v)));
    return meta;
}

void copy_params(std::span<const NamedTensor> entries, UNet<float>& net) {
    auto params = net.parameters();
    if (entries.size() != params.size() + 1) {
        throw ModelMismatchError("checkpoint has " + std::to_string(entries.size() - 1) + " tensors, model expects " +
                                 std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = entries[i + 1];
        if (e.name != net.parameter_names()[i] || e.tensor.shape() != params[i].shape()) {
            throw ModelMismatchError("checkpoint tensor '" + e.name + "' " + shape_string(e.tensor.shape()) +
                                     " does not match '" + net.parameter_names()[i] + "' " + shape_string(params[i].shape()));
        }
        std::copy(e.tensor.values().begin(), e.tensor.values().end(), params[i].values().begin());
    }
}

}  // namespace

std::vector<NamedTensor> decoder_checkpoint(const DecoderModel<float>& model) {
    const auto& g = model.geometry();
    const auto& c = model.net().config();
    return with_params("meta.decoder",
                       meta_tensor({float(model.level()), float(g.band_extent), float(g.base_patch), float(g.channels),
                                    float(c.base_channels), float(c.stages), float(c.head_channels), float(c.kernel),
                                    float(std::lround(c.slope * 1000.0))}),
                       model.net());
}

DecoderModel<float> decoder_from_checkpoint(std::span<const NamedTensor> entries, int expected_level) {
    const auto m = read_meta(entries, "meta.decoder", 9);
    if (m[0] != expected_level) {
        throw ModelMismatchError("checkpoint holds a level-" + std::to_string(m[0]) + " decoder, requested level " +
                                 std::to_string(expected_level));
    }
    UNetConfig net{m[4], m[5], m[6], m[7], m[8] / 1000.0};
    DecoderModel<float> model(m[0], LevelGeometry{m[1], m[2], m[3]}, net, 0);
    copy_params(entries, model.net());
    return model;
}

void save_model(const std::filesystem::path& path, const DecoderModel<float>& model) {
    save_checkpoint(path, decoder_checkpoint(model));
}

DecoderModel<float> load_model(const std::filesystem::path& path, int expected_level) {
    return decoder_from_checkpoint(load_checkpoint(path), expected_level);
}

std::vector<NamedTensor> refiner_checkpoint(const PixelRefiner<float>& model) {
    const auto& c = model.net().config();
    return with_params("meta.refiner",
                       meta_tensor({float(model.level()), float(model.target_extent()), float(model.channels()),
                                    float(c.base_channels), float(c.stages), float(c.head_channels), float(c.kernel),
                                    float(std::lround(c.slope * 1000.0))}),
                       model.net());
}

PixelRefiner<float> refiner_from_checkpoint(std::span<const NamedTensor> entries, int expected_level) {
    const auto m = read_meta(entries, "meta.refiner", 8);
    if (m[0] != expected_level) {
        throw ModelMismatchError("checkpoint holds a level-" + std::to_string(m[0]) + " pixel refiner, requested level " +
                                 std::to_string(expected_level));
    }
    UNetConfig net{m[3], m[4], m[5], m[6], m[7] / 1000.0};
    PixelRefiner<float> model(m[0], m[1], m[2], net, 0);
    copy_params(entries, model.net());
    return model;
}

void save_refiner(const std::filesystem::path& path, const PixelRefiner<float>& model) {
    save_checkpoint(path, refiner_checkpoint(model));
}

PixelRefiner<float> load_refiner(const std::filesystem::path& path, int expected_level) {
    return refiner_from_checkpoint(load_checkpoint(path), expected_level);
}

}  // namespace nsb
