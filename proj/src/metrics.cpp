#include "ppgan/metrics.hpp"

#include "ppgan/error.hpp"
#include "ppgan/parallel.hpp"
#include "ppgan/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace ppgan {

namespace {

constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;

int conv_out(int side) { return (side + 2 * kPad - kKernel) / kStride + 1; }

std::vector<MultispectralImage> cropped(const PlotDataset& ds, double margin)
{
    std::vector<MultispectralImage> out;
    out.reserve(ds.images.size());
    for (const auto& img : ds.images) out.push_back(margin > 0.0 ? inner_rectangle(img, margin) : img);
    return out;
}

// Eigen-based square root of a symmetric PSD matrix; negative eigenvalues clipped.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

FeatureEmbedder::FeatureEmbedder(std::uint64_t seed) : seed_(seed)
{
    Pcg64 rng(seed);
    const std::array<std::pair<int, int>, 3> widths{{{3, 16}, {16, 32}, {32, kEmbeddingDim}}};
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        auto& st = stages_[s];
        st.cin = widths[s].first;
        st.cout = widths[s].second;
        const int fan_in = st.cin * kKernel * kKernel;
        const double stddev = std::sqrt(2.0 / fan_in);
        st.weight.resize(static_cast<std::size_t>(st.cout) * fan_in);
        for (double& w : st.weight) w = stddev * rng.normal();
    }
}

FeatureMatrix FeatureEmbedder::embed(const nn::Tensor<double>& input) const
{
    if (input.c() != 3) throw ValidationError("embedder expects 3 channels, got " + std::to_string(input.c()));
    if (input.n() < 1) throw ValidationError("embedder: empty batch");
    FeatureMatrix out(input.n(), kEmbeddingDim);
    parallel_for(static_cast<std::size_t>(input.n()), [&](std::size_t i) {
        int h = input.h(), w = input.w();
        std::vector<double> act(input.sample(static_cast<int>(i)), input.sample(static_cast<int>(i)) + input.sample_size());
        std::vector<double> cols;
        for (const auto& st : stages_) {
            const int oh = conv_out(h), ow = conv_out(w);
            const int rows = st.cin * kKernel * kKernel, positions = oh * ow;
            cols.assign(static_cast<std::size_t>(rows) * positions, 0.0);
            nn::detail::im2col(act.data(), st.cin, h, w, kKernel, kStride, kPad, oh, ow, cols.data());
            using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
            Eigen::Map<const RowMat> wm(st.weight.data(), st.cout, rows);
            Eigen::Map<const RowMat> cm(cols.data(), rows, positions);
            std::vector<double> next(static_cast<std::size_t>(st.cout) * positions);
            Eigen::Map<RowMat> om(next.data(), st.cout, positions);
            om.noalias() = wm * cm;
            om = om.cwiseMax(0.0);
            act = std::move(next);
            h = oh;
            w = ow;
        }
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        for (int c = 0; c < kEmbeddingDim; ++c) {
            double s = 0.0;
            for (std::size_t p = 0; p < plane; ++p) s += act[c * plane + p];
            out(static_cast<Eigen::Index>(i), c) = s / static_cast<double>(plane);
        }
    });
    return out;
}

FeatureMatrix FeatureEmbedder::embed(std::span<const MultispectralImage> images, int first_band) const
{
    if (images.empty()) throw ValidationError("embedder: no images");
    if (first_band < 0 || first_band + 3 > kBandCount) throw ValidationError("embedder: band slice out of range");
    const int h = images.front().height(), w = images.front().width();
    nn::Tensor<double> t(static_cast<int>(images.size()), 3, h, w);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height() != h || images[i].width() != w) throw ValidationError("embedder: image sizes differ");
        double* dst = t.sample(static_cast<int>(i));
        for (int b = 0; b < 3; ++b)
            for (float v : images[i].band(first_band + b)) *dst++ = v;
    }
    return embed(t);
}

double fid(const FeatureMatrix& real, const FeatureMatrix& synth)
{
    if (real.rows() < 2 || synth.rows() < 2) throw ValidationError("fid: need at least 2 samples per set");
    if (real.cols() != synth.cols()) throw ValidationError("fid: feature dimensions differ");
    const Eigen::Index d = real.cols();
    auto stats = [d](const FeatureMatrix& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        mu = x.colwise().mean().transpose();
        const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
        cov += kCovarianceShrinkage * Eigen::MatrixXd::Identity(d, d);
    };
    Eigen::VectorXd mu_r, mu_s;
    Eigen::MatrixXd cov_r, cov_s;
    stats(real, mu_r, cov_r);
    stats(synth, mu_s, cov_s);

    // Tr((Sr Ss)^1/2) via the symmetric similar matrix Sr^1/2 Ss Sr^1/2.
    const Eigen::MatrixXd root_r = sqrt_psd(cov_r);
    const Eigen::MatrixXd inner = root_r * cov_s * root_r;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value = (mu_r - mu_s).squaredNorm() + cov_r.trace() + cov_s.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, value);
}

FidScores fid_multispectral(const PlotDataset& real, const PlotDataset& synth, const FeatureEmbedder& embedder,
                            double margin_fraction)
{
    if (real.images.empty() || synth.images.empty()) throw ValidationError("fid: empty dataset");
    if (real.images.front().width() != synth.images.front().width() ||
        real.images.front().height() != synth.images.front().height())
        throw ValidationError("fid: real and synthetic image sizes differ");
    const auto r = cropped(real, margin_fraction);
    const auto s = cropped(synth, margin_fraction);
    FidScores out;
    out.fid_123 = fid(embedder.embed(r, 0), embedder.embed(s, 0));
    out.fid_345 = fid(embedder.embed(r, 2), embedder.embed(s, 2));
    out.fid_mean = 0.5 * (out.fid_123 + out.fid_345);
    return out;
}

std::vector<double> band_histograms(const PlotDataset& dataset, int bins, double margin_fraction)
{
    if (bins < 1) throw ValidationError("histogram bins must be >= 1");
    if (dataset.images.empty()) throw ValidationError("histogram: empty dataset");
    std::vector<double> hist(static_cast<std::size_t>(kBandCount) * bins, 0.0);
    std::vector<double> totals(kBandCount, 0.0);
    for (const auto& img : cropped(dataset, margin_fraction))
        for (int b = 0; b < kBandCount; ++b)
            for (float v : img.band(b)) {
                const int k = std::min(bins - 1, static_cast<int>(std::floor(static_cast<double>(v) * bins)));
                hist[static_cast<std::size_t>(b) * bins + std::max(0, k)] += 1.0;
                totals[b] += 1.0;
            }
    for (int b = 0; b < kBandCount; ++b)
        for (int k = 0; k < bins; ++k) hist[static_cast<std::size_t>(b) * bins + k] /= totals[b];
    return hist;
}

HistogramScores compare_histograms(std::span<const double> p_real, std::span<const double> p_synth, int bands)
{
    if (bands < 1 || p_real.size() != p_synth.size() || p_real.size() % bands != 0)
        throw ValidationError("compare_histograms: shape mismatch");
    HistogramScores s;
    for (std::size_t i = 0; i < p_real.size(); ++i) {
        const double e = p_real[i], o = p_synth[i];
        s.chi_square += (o - e) * (o - e) / (e + 1e-10);
        s.intersection += std::min(e, o);
        s.bhattacharyya += std::sqrt(e * o);
    }
    s.intersection /= bands;
    s.bhattacharyya /= bands;
    return s;
}

HistogramScores histogram_metrics(const PlotDataset& real, const PlotDataset& synth, int bins, double margin_fraction)
{
    const auto pr = band_histograms(real, bins, margin_fraction);
    const auto ps = band_histograms(synth, bins, margin_fraction);
    return compare_histograms(pr, ps, kBandCount);
}

MetricsReport full_report(const PlotDataset& real, const PlotDataset& synth, const FeatureEmbedder& embedder,
                          double margin_fraction, int bins)
{
    real.validate();
    synth.validate();
    MetricsReport r;
    const auto f = fid_multispectral(real, synth, embedder, margin_fraction);
    r.fid_mean = f.fid_mean;
    r.fid_bands_123 = f.fid_123;
    r.fid_bands_345 = f.fid_345;
    const auto h = histogram_metrics(real, synth, bins, margin_fraction);
    r.chi_square = h.chi_square;
    r.intersection = h.intersection;
    r.bhattacharyya = h.bhattacharyya;
    r.real_profile = spectral_profile(real.images, margin_fraction);
    r.synth_profile = spectral_profile(synth.images, margin_fraction);
    r.sid = sid(r.real_profile, r.synth_profile);
    r.profile_r2 = profile_r2(r.real_profile, r.synth_profile);
    r.real_count = static_cast<int>(real.images.size());
    r.synth_count = static_cast<int>(synth.images.size());
    for (double v : {r.fid_mean, r.chi_square, r.intersection, r.bhattacharyya, r.sid, r.profile_r2})
        if (!std::isfinite(v)) throw RuntimeFailure("metrics report contains a non-finite value");
    return r;
}

namespace {

nlohmann::json profile_json(const SpectralProfile& p)
{
    return {{"mean", p.mean}, {"std", p.std}, {"source_count", p.source_count}};
}

SpectralProfile profile_from(const nlohmann::json& j)
{
    SpectralProfile p;
    p.mean = j.at("mean").get<std::array<double, kBandCount>>();
    p.std = j.at("std").get<std::array<double, kBandCount>>();
    p.source_count = j.at("source_count").get<std::size_t>();
    return p;
}

} // namespace

void to_json(nlohmann::json& j, const MetricsReport& r)
{
    j = {{"fid_mean", r.fid_mean},
         {"fid_bands_123", r.fid_bands_123},
         {"fid_bands_345", r.fid_bands_345},
         {"chi_square", r.chi_square},
         {"intersection", r.intersection},
         {"bhattacharyya", r.bhattacharyya},
         {"sid", r.sid},
         {"profile_r2", r.profile_r2},
         {"sample_counts", {{"real", r.real_count}, {"synthetic", r.synth_count}}},
         {"real_profile", profile_json(r.real_profile)},
         {"synthetic_profile", profile_json(r.synth_profile)}};
}

void from_json(const nlohmann::json& j, MetricsReport& r)
{
    try {
        r.fid_mean = j.at("fid_mean").get<double>();
        r.fid_bands_123 = j.at("fid_bands_123").get<double>();
        r.fid_bands_345 = j.at("fid_bands_345").get<double>();
        r.chi_square = j.at("chi_square").get<double>();
        r.intersection = j.at("intersection").get<double>();
        r.bhattacharyya = j.at("bhattacharyya").get<double>();
        r.sid = j.at("sid").get<double>();
        r.profile_r2 = j.at("profile_r2").get<double>();
        r.real_count = j.at("sample_counts").at("real").get<int>();
        r.synth_count = j.at("sample_counts").at("synthetic").get<int>();
        r.real_profile = profile_from(j.at("real_profile"));
        r.synth_profile = profile_from(j.at("synthetic_profile"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report.json: ") + e.what());
    }
}

} // namespace ppgan
