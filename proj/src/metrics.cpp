#include "nsb/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace nsb {

namespace {

void require_same(const Image& a, const Image& b, const char* op) {
    if (!a.same_geometry(b)) {
        throw GeometryError(std::string(op) + ": extents differ (" + a.geometry() + " vs " + b.geometry() + ")");
    }
    if (a.size() == 0) throw GeometryError(std::string(op) + ": empty image");
}

constexpr int kGrid = 8;

std::vector<double> block_means(const Image& img) {
    if (img.height % kGrid != 0 || img.width % kGrid != 0) {
        throw GeometryError("pixel_moments: extents " + img.geometry() + " not divisible by 8");
    }
    const int bh = img.height / kGrid, bw = img.width / kGrid;
    std::vector<double> f(static_cast<std::size_t>(kGrid * kGrid * img.channels), 0.0);
    for (int c = 0; c < img.channels; ++c) {
        for (int gy = 0; gy < kGrid; ++gy) {
            for (int gx = 0; gx < kGrid; ++gx) {
                double s = 0.0;
                for (int y = gy * bh; y < (gy + 1) * bh; ++y) {
                    for (int x = gx * bw; x < (gx + 1) * bw; ++x) s += img.at(y, x, c);
                }
                f[(static_cast<std::size_t>(c) * kGrid + gy) * kGrid + gx] = s / (bh * bw);
            }
        }
    }
    return f;
}

}  // namespace

double mse(const Image& a, const Image& b) {
    require_same(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b, double peak) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

std::string feature_method_name(FeatureMethod method) {
    return method == FeatureMethod::pixel_moments ? "pixel_moments" : "seeded_random_projection";
}

FeatureMethod parse_feature_method(const std::string& name) {
    if (name == "pixel_moments") return FeatureMethod::pixel_moments;
    if (name == "seeded_random_projection") return FeatureMethod::seeded_random_projection;
    throw std::invalid_argument("unknown feature method '" + name + "' (expected pixel_moments or seeded_random_projection)");
}

std::vector<std::vector<double>> compute_features(std::span<const Image> images, const FeatureSpec& spec) {
    std::vector<std::vector<double>> out;
    if (images.empty()) return out;
    for (const auto& img : images) {
        if (!img.same_geometry(images[0])) throw GeometryError("features: images differ in geometry");
    }
    if (spec.method == FeatureMethod::pixel_moments) {
        for (const auto& img : images) out.push_back(block_means(img));
        return out;
    }
    if (spec.dim < 2) throw std::invalid_argument("feature_dim must be >= 2");
    const std::size_t D = images[0].size(), d = static_cast<std::size_t>(spec.dim);
    std::vector<double> proj(d * D);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));
    for (auto& v : proj) v = normal(rng) * scale;
    for (const auto& img : images) {
        std::vector<double> f(d, 0.0);
        for (std::size_t r = 0; r < d; ++r) {
            const double* row = proj.data() + r * D;
            double s = 0.0;
            for (std::size_t k = 0; k < D; ++k) s += row[k] * img.values[k];
            f[r] = s;
        }
        out.push_back(std::move(f));
    }
    return out;
}

FeatureStats feature_moments(std::span<const std::vector<double>> features, bool full_covariance) {
    if (features.size() < 2) throw std::invalid_argument("feature statistics need at least 2 images");
    const std::size_t n = features.size(), d = features[0].size();
    FeatureStats st;
    st.count = n;
    st.mean.assign(d, 0.0);
    for (const auto& f : features) {
        if (f.size() != d) throw std::invalid_argument("feature rows differ in length");
        for (std::size_t i = 0; i < d; ++i) st.mean[i] += f[i];
    }
    for (auto& m : st.mean) m /= static_cast<double>(n);
    st.variance.assign(d, 0.0);
    for (const auto& f : features) {
        for (std::size_t i = 0; i < d; ++i) {
            const double c = f[i] - st.mean[i];
            st.variance[i] += c * c;
        }
    }
    for (auto& v : st.variance) v /= static_cast<double>(n);
    if (full_covariance) {
        std::vector<double> cov(d * d, 0.0);
        for (const auto& f : features) {
            for (std::size_t i = 0; i < d; ++i) {
                const double ci = f[i] - st.mean[i];
                for (std::size_t j = i; j < d; ++j) cov[i * d + j] += ci * (f[j] - st.mean[j]);
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                cov[i * d + j] /= static_cast<double>(n);
                cov[j * d + i] = cov[i * d + j];
            }
        }
        st.covariance = std::move(cov);
    }
    return st;
}

FeatureStats extract_features(std::span<const Image> images, const FeatureSpec& spec, bool full_covariance) {
    if (images.size() < 2) throw std::invalid_argument("extract_features: need at least 2 images, got " + std::to_string(images.size()));
    const auto rows = compute_features(images, spec);
    return feature_moments(rows, full_covariance);
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("frechet_distance: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                                    std::to_string(b.dim()) + ")");
    }
    const std::size_t d = a.dim();
    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }
    double trace_term = 0.0;
    if (a.covariance && b.covariance) {
        using Mat = Eigen::MatrixXd;
        const Eigen::Map<const Mat> s1(a.covariance->data(), d, d), s2(b.covariance->data(), d, d);
        Eigen::SelfAdjointEigenSolver<Mat> e1(s1);
        const Eigen::VectorXd r1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        const Mat root1 = e1.eigenvectors() * r1.asDiagonal() * e1.eigenvectors().transpose();
        // Tr((S1 S2)^1/2) = Tr((S1^1/2 S2 S1^1/2)^1/2)
        const Mat inner = root1 * s2 * root1;
        Eigen::SelfAdjointEigenSolver<Mat> e2((inner + inner.transpose()) * 0.5, Eigen::EigenvaluesOnly);
        const double cross = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
        trace_term = s1.trace() + s2.trace() - 2.0 * cross;
    } else {
        for (std::size_t i = 0; i < d; ++i) {
            trace_term += a.variance[i] + b.variance[i] - 2.0 * std::sqrt(a.variance[i] * b.variance[i]);
        }
    }
    return std::max(0.0, mean_term + trace_term);
}

const EvalRow& EvalReport::row(const std::string& metric) const {
    for (const auto& r : rows) {
        if (r.metric == metric) return r;
    }
    throw std::out_of_range("eval report has no metric '" + metric + "'");
}

EvalReport eval_report(std::span<const Image> real, std::span<const Image> generated,
                       std::span<const Image> reconstructions, const FeatureSpec& spec, bool full_covariance) {
    if (real.empty() || generated.empty() || reconstructions.empty()) {
        throw std::invalid_argument("eval_report: real, generated and reconstruction sets must be non-empty");
    }
    if (reconstructions.size() != real.size()) {
        throw std::invalid_argument("eval_report: reconstructions must pair one-to-one with the real set");
    }
    const auto fr = extract_features(real, spec, full_covariance);
    const auto fg = extract_features(generated, spec, full_covariance);
    const auto fc = extract_features(reconstructions, spec, full_covariance);

    EvalReport report;
    report.spec = spec;
    report.feature_dim = fr.dim();
    report.rows.push_back({"fd", frechet_distance(fg, fr), "generated", "real", generated.size(), real.size()});
    report.rows.push_back(
        {"fd_recon", frechet_distance(fg, fc), "generated", "reconstruction", generated.size(), reconstructions.size()});
    double m = 0.0, p = 0.0;
    for (std::size_t i = 0; i < real.size(); ++i) {
        m += mse(reconstructions[i], real[i]);
        p += psnr(reconstructions[i], real[i]);
    }
    const auto n = static_cast<double>(real.size());
    report.rows.push_back({"mse", m / n, "reconstruction", "real", reconstructions.size(), real.size()});
    report.rows.push_back({"psnr", p / n, "reconstruction", "real", reconstructions.size(), real.size()});
    return report;
}

std::string eval_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "metric,value,set_a,set_b,n_a,n_b,feature_method,feature_dim,seed\n";
    out.precision(12);
    for (const auto& r : report.rows) {
        out << r.metric << ',';
        if (std::isinf(r.value)) {
            out << (r.value > 0 ? "inf" : "-inf");
        } else {
            out << r.value;
        }
        out << ',' << r.set_a << ',' << r.set_b << ',' << r.n_a << ',' << r.n_b << ','
            << feature_method_name(report.spec.method) << ',' << report.feature_dim << ',' << report.spec.seed << '\n';
    }
    return out.str();
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << eval_csv(report);
}

}  // namespace nsb
