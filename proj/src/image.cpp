#include "nsb/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace nsb {

Image::Image(int h, int w, int c, double fill) : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3)) {
        throw GeometryError("invalid image geometry " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                            std::to_string(c));
    }
    values.assign(static_cast<std::size_t>(h) * w * c, fill);
}

std::string Image::geometry() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

double max_abs_difference(const Image& a, const Image& b) {
    if (!a.same_geometry(b)) throw GeometryError("cannot compare " + a.geometry() + " with " + b.geometry());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    return worst;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string token;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(static_cast<char>(ch));
    }
    return token;
}

int parse_positive(const std::string& token, const std::filesystem::path& path, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(token, &used);
        if (used == token.size() && v > 0) return v;
    } catch (const std::exception&) {
    }
    throw ImageIOError(path.string() + ": bad " + what + " '" + token + "'");
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIOError("cannot open " + path.string());
    const std::string magic = next_token(in);
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw ImageIOError(path.string() + ": not a binary PGM/PPM (magic '" + magic + "')");
    const int width = parse_positive(next_token(in), path, "width");
    const int height = parse_positive(next_token(in), path, "height");
    const int maxval = parse_positive(next_token(in), path, "maxval");
    if (maxval > 65535) throw ImageIOError(path.string() + ": maxval above 65535");

    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(count * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw ImageIOError(path.string() + ": truncated pixel data");

    Image image(height, width, channels);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned v = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
        image.values[i] = static_cast<double>(v) / maxval;
    }
    return image;
}

void write_pnm(const std::filesystem::path& path, const Image& image, int bits) {
    if (bits != 8 && bits != 16) throw std::invalid_argument("write_pnm: bits must be 8 or 16");
    const int maxval = bits == 8 ? 255 : 65535;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ImageIOError("cannot write " + path.string());
    out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << '\n' << maxval << '\n';
    std::vector<unsigned char> raw;
    raw.reserve(image.size() * (bits / 8));
    for (double v : image.values) {
        const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
        if (bits == 16) raw.push_back(static_cast<unsigned char>(q >> 8));
        raw.push_back(static_cast<unsigned char>(q & 0xff));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw ImageIOError("short write to " + path.string());
}

template <typename T>
BasicTensor<T> images_to_tensor(std::span<const Image> images) {
    if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
    const Image& first = images.front();
    const std::size_t C = first.channels, H = first.height, W = first.width;
    std::vector<T> values(images.size() * C * H * W);
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (!images[n].same_geometry(first)) {
            throw GeometryError("images_to_tensor: " + images[n].geometry() + " vs " + first.geometry());
        }
        const double* src = images[n].values.data();
        T* dst = values.data() + n * C * H * W;
        for (std::size_t p = 0; p < H * W; ++p) {
            for (std::size_t c = 0; c < C; ++c) dst[c * H * W + p] = static_cast<T>(src[p * C + c]);
        }
    }
    return BasicTensor<T>::from_values({images.size(), C, H, W}, std::move(values));
}

template <typename T>
Image tensor_to_image(const BasicTensor<T>& tensor, std::size_t n) {
    if (tensor.rank() != 4 || n >= tensor.dim(0)) {
        throw ShapeError("tensor_to_image: need [N,C,H,W] with n < N, got " + shape_string(tensor.shape()));
    }
    const std::size_t C = tensor.dim(1), H = tensor.dim(2), W = tensor.dim(3);
    Image image(static_cast<int>(H), static_cast<int>(W), static_cast<int>(C));
    const T* src = tensor.values().data() + n * C * H * W;
    for (std::size_t p = 0; p < H * W; ++p) {
        for (std::size_t c = 0; c < C; ++c) image.values[p * C + c] = static_cast<double>(src[c * H * W + p]);
    }
    return image;
}

template BasicTensor<float> images_to_tensor(std::span<const Image>);
template BasicTensor<double> images_to_tensor(std::span<const Image>);
template Image tensor_to_image(const BasicTensor<float>&, std::size_t);
template Image tensor_to_image(const BasicTensor<double>&, std::size_t);

}  // namespace nsb
