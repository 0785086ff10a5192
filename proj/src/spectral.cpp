#include "ppgan/spectral.hpp"

#include "ppgan/error.hpp"
#include "ppgan/fft.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <mutex>
#include <tuple>

namespace ppgan {

namespace {

constexpr int kRedEdge = static_cast<int>(Band::red_edge);
constexpr int kNir = static_cast<int>(Band::nir);
constexpr double kRhoLimit = 0.99;
constexpr double kGZero = 1e-9;

struct CurveState {
    double G = 0.0, H = 0.0, K = 0.0;
    double sse = 0.0;
};

double curve_sse(std::span<const double> nir, std::span<const double> re, double G, double H, double K)
{
    double s = 0.0;
    for (std::size_t i = 0; i < nir.size(); ++i) {
        const double r = G * std::exp(-H * nir[i]) + K * nir[i] - re[i];
        s += r * r;
    }
    return s;
}

/// Closed-form G, K for a fixed H (the model is linear in G and K).
CurveState linear_init(std::span<const double> nir, std::span<const double> re, double H)
{
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < nir.size(); ++i) {
        const Eigen::Vector2d phi(std::exp(-H * nir[i]), nir[i]);
        A += phi * phi.transpose();
        b += phi * re[i];
    }
    const Eigen::Vector2d x = A.ldlt().solve(b);
    CurveState s{x(0), H, x(1), 0.0};
    if (!std::isfinite(s.G) || !std::isfinite(s.K)) s = CurveState{0.0, H, 0.0, 0.0};
    s.sse = curve_sse(nir, re, s.G, s.H, s.K);
    return s;
}

struct StartResult {
    CurveState state;
    bool converged = false;
    int iterations = 0;
    std::vector<double> trace;
};

StartResult gauss_newton(std::span<const double> nir, std::span<const double> re, CurveState s, int max_iters,
                         double tol)
{
    const double n = static_cast<double>(nir.size());
    StartResult out;
    out.trace.push_back(std::sqrt(s.sse / n));
    for (int it = 0; it < max_iters; ++it) {
        out.iterations = it + 1;
        Eigen::Matrix3d JtJ = Eigen::Matrix3d::Zero();
        Eigen::Vector3d Jtr = Eigen::Vector3d::Zero();
        for (std::size_t i = 0; i < nir.size(); ++i) {
            const double e = std::exp(-s.H * nir[i]);
            const double r = s.G * e + s.K * nir[i] - re[i];
            const Eigen::Vector3d j(e, -s.G * nir[i] * e, nir[i]);
            JtJ += j * j.transpose();
            Jtr += j * r;
        }
        // H is unidentifiable while G ~ 0; a tiny ridge keeps the solve defined.
        const double ridge = 1e-12 * std::max(JtJ.trace(), 1e-300);
        JtJ.diagonal().array() += ridge;
        const Eigen::Vector3d delta = JtJ.ldlt().solve(-Jtr);
        if (!delta.allFinite()) break;

        bool accepted = false;
        double step = 1.0;
        CurveState trial;
        for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
            trial.G = s.G + step * delta(0);
            trial.H = std::max(0.0, s.H + step * delta(1));
            trial.K = s.K + step * delta(2);
            trial.sse = curve_sse(nir, re, trial.G, trial.H, trial.K);
            if (trial.sse <= s.sse) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No descent direction left: stationary to working precision.
            out.converged = true;
            break;
        }
        const double improvement = s.sse - trial.sse;
        s = trial;
        out.trace.push_back(std::sqrt(s.sse / n));
        if (improvement <= tol * std::max(s.sse, 1e-300) || s.sse <= 1e-28 * n ||
            step * delta.norm() <= 1e-14 * (1.0 + std::abs(s.G) + s.H + std::abs(s.K))) {
            out.converged = true;
            break;
        }
    }
    out.state = s;
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y)
{
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double covariance(std::span<const double> x, std::span<const double> y)
{
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s / n;
}

} // namespace

void to_json(nlohmann::json& j, const CoefficientSet& c)
{
    j = {{"G", c.G}, {"H", c.H}, {"K", c.K}, {"rho", c.rho}, {"fit_residual", c.fit_residual}, {"converged", c.converged}};
}

void from_json(const nlohmann::json& j, CoefficientSet& c)
{
    c.G = j.at("G").get<double>();
    c.H = j.at("H").get<double>();
    c.K = j.at("K").get<double>();
    c.rho = j.at("rho").get<double>();
    c.fit_residual = j.at("fit_residual").get<double>();
    c.converged = j.value("converged", true);
}

CoefficientFit fit_re_nir_samples(std::span<const double> nir, std::span<const double> re, int max_iters, double tol)
{
    if (nir.size() != re.size()) throw ValidationError("fit: nir and re sample counts differ");
    if (nir.size() < 3) throw ValidationError("fit: at least 3 samples required");
    if (!(tol > 0.0)) throw ValidationError("fit: tol must be positive");
    if (max_iters < 1) throw ValidationError("fit: max_iters must be >= 1");

    StartResult best;
    bool have_best = false;
    for (double h0 : {0.0, 1.0, 3.0, 10.0}) {
        StartResult r = gauss_newton(nir, re, linear_init(nir, re, h0), max_iters, tol);
        if (!have_best || r.state.sse < best.state.sse) {
            best = std::move(r);
            have_best = true;
        }
    }

    CoefficientFit fit;
    auto& c = fit.coeffs;
    c.G = best.state.G;
    c.H = std::abs(c.G) < kGZero ? 0.0 : best.state.H;
    c.K = best.state.K;
    c.fit_residual = std::sqrt(curve_sse(nir, re, c.G, c.H, c.K) / static_cast<double>(nir.size()));
    c.converged = best.converged;
    fit.iterations = best.iterations;
    fit.residual_trace = std::move(best.trace);
    fit.pixel_count = nir.size();

    std::vector<double> model(nir.size());
    for (std::size_t i = 0; i < nir.size(); ++i) model[i] = c.G * std::exp(-c.H * nir[i]) + c.K * nir[i];
    fit.cov_nir_re_data = covariance(nir, re);
    fit.cov_nir_re_model = covariance(nir, model);
    fit.cov_gap = std::abs(fit.cov_nir_re_model - fit.cov_nir_re_data);
    return fit;
}

CoefficientFit fit_re_nir_coefficients(const PlotDataset& dataset, int max_iters, double tol, double margin_fraction)
{
    std::vector<double> nir, re, mean_nir, mean_re;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset.labels[i].health == Health::mild) continue;
        const auto crop = inner_rectangle(dataset.images[i], margin_fraction);
        const auto n = crop.band(kNir);
        const auto r = crop.band(kRedEdge);
        double sn = 0.0, sr = 0.0;
        for (std::size_t p = 0; p < n.size(); ++p) {
            nir.push_back(n[p]);
            re.push_back(r[p]);
            sn += n[p];
            sr += r[p];
        }
        mean_nir.push_back(sn / static_cast<double>(n.size()));
        mean_re.push_back(sr / static_cast<double>(r.size()));
    }
    if (mean_nir.size() < 2)
        throw ValidationError("fit-coeff: at least 2 non-mild images required, got " + std::to_string(mean_nir.size()));

    CoefficientFit fit = fit_re_nir_samples(nir, re, max_iters, tol);
    const double rho = pearson(mean_nir, mean_re);
    fit.coeffs.rho = std::isfinite(rho) ? std::clamp(rho, -kRhoLimit, kRhoLimit) : 0.0;
    return fit;
}

LatentBatch manipulate_latent(const LatentBatch& z, const CoefficientSet& coeffs)
{
    if (z.cols() % kBandCount != 0)
        throw ValidationError("latent dimension " + std::to_string(z.cols()) + " is not divisible by 5");
    const Eigen::Index block = z.cols() / kBandCount;
    const double rho = std::clamp(coeffs.rho, -kRhoLimit, kRhoLimit);
    LatentBatch out = z;
    if (rho == 0.0) return out;
    const double a = rho;
    const double b = std::sqrt(1.0 - rho * rho);
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < block; ++j) {
            const double z_nir = z(i, kNir * block + j);
            const double z_re = z(i, kRedEdge * block + j);
            out(i, kRedEdge * block + j) = static_cast<float>(a * z_nir + b * z_re);
        }
    return out;
}

SpectralProfile spectral_profile(std::span<const MultispectralImage> images, double margin_fraction)
{
    if (images.empty()) throw ValidationError("spectral_profile: empty image sequence");
    std::array<double, kBandCount> sum{}, sum_sq{};
    std::size_t count = 0;
    for (const auto& img : images) {
        const auto crop = inner_rectangle(img, margin_fraction);
        for (int b = 0; b < kBandCount; ++b)
            for (float v : crop.band(b)) {
                sum[b] += v;
                sum_sq[b] += static_cast<double>(v) * v;
            }
        count += crop.plane_size();
    }
    SpectralProfile p;
    p.source_count = images.size();
    for (int b = 0; b < kBandCount; ++b) {
        p.mean[b] = sum[b] / static_cast<double>(count);
        p.std[b] = std::sqrt(std::max(0.0, sum_sq[b] / static_cast<double>(count) - p.mean[b] * p.mean[b]));
    }
    return p;
}

double profile_r2(const SpectralProfile& real, const SpectralProfile& synth)
{
    double mean = 0.0;
    for (double m : real.mean) mean += m;
    mean /= kBandCount;
    double ss_res = 0.0, ss_tot = 0.0;
    for (int b = 0; b < kBandCount; ++b) {
        ss_res += (synth.mean[b] - real.mean[b]) * (synth.mean[b] - real.mean[b]);
        ss_tot += (real.mean[b] - mean) * (real.mean[b] - mean);
    }
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -1e9;
    return 1.0 - ss_res / ss_tot;
}

double sid(const SpectralProfile& a, const SpectralProfile& b)
{
    constexpr double eps = 1e-12;
    double sa = 0.0, sb = 0.0;
    for (int i = 0; i < kBandCount; ++i) {
        sa += a.mean[i];
        sb += b.mean[i];
    }
    if (!(sa > 0.0) || !(sb > 0.0)) throw ValidationError("sid: profile means must have a positive sum");
    std::array<double, kBandCount> p{}, q{};
    double np = 0.0, nq = 0.0;
    for (int i = 0; i < kBandCount; ++i) {
        p[i] = a.mean[i] + eps;
        q[i] = b.mean[i] + eps;
        np += p[i];
        nq += q[i];
    }
    double d = 0.0;
    for (int i = 0; i < kBandCount; ++i) {
        p[i] /= np;
        q[i] /= nq;
        d += p[i] * std::log(p[i] / q[i]) + q[i] * std::log(q[i] / p[i]);
    }
    return std::max(0.0, d);
}

RadialBinning::RadialBinning(int h, int w, int nbins) : height(h), width(w), bins(nbins)
{
    if (nbins < 4) throw ValidationError("radial_bins must be >= 4");
    if (h < 8 || w < 8) throw ValidationError("radial power profile needs at least 8x8 pixels");
    const double nyquist = 0.5 * std::min(h, w);
    bin_of.resize(static_cast<std::size_t>(h) * w);
    count.assign(nbins, 0);
    for (int ky = 0; ky < h; ++ky) {
        const int fy = ky <= h / 2 ? ky : ky - h;
        for (int kx = 0; kx < w; ++kx) {
            const int fx = kx <= w / 2 ? kx : kx - w;
            const double rho = std::sqrt(static_cast<double>(fx * fx + fy * fy));
            int bin;
            if (fx == 0 && fy == 0) {
                bin = 0;
            } else if (rho > nyquist + 1e-9) {
                bin = -1;
            } else {
                bin = static_cast<int>(std::ceil(rho * (nbins - 1) / nyquist - 1e-9));
                bin = std::clamp(bin, 1, nbins - 1);
            }
            bin_of[static_cast<std::size_t>(ky) * w + kx] = bin;
            if (bin >= 0) ++count[bin];
        }
    }
}

const RadialBinning& RadialBinning::cached(int h, int w, int nbins)
{
    static std::mutex m;
    static std::map<std::tuple<int, int, int>, std::unique_ptr<RadialBinning>> cache;
    std::lock_guard lock(m);
    auto& slot = cache[{h, w, nbins}];
    if (!slot) slot = std::make_unique<RadialBinning>(h, w, nbins);
    return *slot;
}

namespace {

/// Mean-removed DFT of one plane.
template <class T>
void plane_spectrum(std::span<const T> plane, int h, int w, std::vector<double>& work,
                    std::vector<std::complex<double>>& spectrum)
{
    const std::size_t n = static_cast<std::size_t>(h) * w;
    double mean = 0.0;
    for (T v : plane) mean += v;
    mean /= static_cast<double>(n);
    work.resize(n);
    for (std::size_t i = 0; i < n; ++i) work[i] = plane[i] - mean;
    Fft2d::plan_for(h, w).forward(work, spectrum);
}

void bin_power(const RadialBinning& binning, const std::vector<std::complex<double>>& spectrum, std::span<double> out)
{
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        const int b = binning.bin_of[k];
        if (b >= 0) out[b] += std::norm(spectrum[k]);
    }
    for (int b = 0; b < binning.bins; ++b)
        out[b] = binning.count[b] > 0 ? std::log1p(out[b] / binning.count[b]) : 0.0;
}

} // namespace

template <class T>
void radial_power_planar(std::span<const T> planar, int height, int width, int radial_bins, std::span<double> out)
{
    const auto& binning = RadialBinning::cached(height, width, radial_bins);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<double> work;
    std::vector<std::complex<double>> spectrum;
    for (int b = 0; b < kBandCount; ++b) {
        plane_spectrum(planar.subspan(b * plane, plane), height, width, work, spectrum);
        bin_power(binning, spectrum, out.subspan(static_cast<std::size_t>(b) * radial_bins, radial_bins));
    }
}

template <class T>
void radial_power_planar_backward(std::span<const T> planar, int height, int width, int radial_bins,
                                  std::span<const double> grad_profile, std::span<T> grad_planar)
{
    const auto& binning = RadialBinning::cached(height, width, radial_bins);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<double> work;
    std::vector<std::complex<double>> spectrum, weighted, back;
    std::vector<double> raw(radial_bins), weight(radial_bins);
    for (int b = 0; b < kBandCount; ++b) {
        plane_spectrum(planar.subspan(b * plane, plane), height, width, work, spectrum);
        std::fill(raw.begin(), raw.end(), 0.0);
        for (std::size_t k = 0; k < spectrum.size(); ++k)
            if (binning.bin_of[k] >= 0) raw[binning.bin_of[k]] += std::norm(spectrum[k]);
        // d log1p(A_r) / d|F_k|^2 = 1 / ((1 + A_r) * count_r), A_r = raw_r / count_r.
        for (int r = 0; r < radial_bins; ++r) {
            const double c = binning.count[r];
            weight[r] = c > 0 ? grad_profile[static_cast<std::size_t>(b) * radial_bins + r] /
                                    ((1.0 + raw[r] / c) * c)
                              : 0.0;
        }
        weighted.resize(spectrum.size());
        for (std::size_t k = 0; k < spectrum.size(); ++k) {
            const int r = binning.bin_of[k];
            weighted[k] = r >= 0 ? weight[r] * spectrum[k] : std::complex<double>(0.0, 0.0);
        }
        // d|F_k|^2/dx_n = 2 Re(conj(F_k) e^{-i theta}), so the sum over k is an inverse DFT.
        Fft2d::plan_for(height, width).backward(weighted, back);
        double mean = 0.0;
        for (const auto& v : back) mean += v.real();
        mean /= static_cast<double>(plane);
        auto g = grad_planar.subspan(b * plane, plane);
        for (std::size_t i = 0; i < plane; ++i) g[i] += static_cast<T>(2.0 * (back[i].real() - mean));
    }
}

RadialPowerProfile radial_power_profile(const MultispectralImage& image, int radial_bins)
{
    RadialPowerProfile p;
    p.radial_bins = radial_bins;
    p.power.resize(static_cast<std::size_t>(kBandCount) * radial_bins);
    radial_power_planar<float>(image.pixels(), image.height(), image.width(), radial_bins, p.power);
    return p;
}

template <class T>
double spectral_reg_loss_planar(std::span<const T> real, int real_count, std::span<const T> fake, int fake_count,
                                int height, int width, int radial_bins, std::span<T> grad_fake)
{
    if (real_count < 1 || fake_count < 1) throw ValidationError("spectral_reg_loss: batches must be non-empty");
    const std::size_t image_size = static_cast<std::size_t>(height) * width * kBandCount;
    const std::size_t prof = static_cast<std::size_t>(kBandCount) * radial_bins;
    std::vector<double> mean_real(prof, 0.0), mean_fake(prof, 0.0), tmp(prof);
    for (int i = 0; i < real_count; ++i) {
        radial_power_planar(real.subspan(i * image_size, image_size), height, width, radial_bins, tmp);
        for (std::size_t k = 0; k < prof; ++k) mean_real[k] += tmp[k];
    }
    for (int i = 0; i < fake_count; ++i) {
        radial_power_planar(fake.subspan(i * image_size, image_size), height, width, radial_bins, tmp);
        for (std::size_t k = 0; k < prof; ++k) mean_fake[k] += tmp[k];
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < prof; ++k) {
        mean_real[k] /= real_count;
        mean_fake[k] /= fake_count;
        const double d = mean_fake[k] - mean_real[k];
        loss += d * d;
    }
    loss /= static_cast<double>(prof);

    if (!grad_fake.empty()) {
        std::fill(grad_fake.begin(), grad_fake.end(), T(0));
        std::vector<double> g(prof);
        for (std::size_t k = 0; k < prof; ++k)
            g[k] = 2.0 * (mean_fake[k] - mean_real[k]) / (static_cast<double>(prof) * fake_count);
        for (int i = 0; i < fake_count; ++i)
            radial_power_planar_backward(fake.subspan(i * image_size, image_size), height, width, radial_bins, g,
                                         grad_fake.subspan(i * image_size, image_size));
    }
    return loss;
}

double spectral_reg_loss(std::span<const MultispectralImage> real_batch,
                         std::span<const MultispectralImage> fake_batch, int radial_bins)
{
    if (real_batch.empty() || fake_batch.empty()) throw ValidationError("spectral_reg_loss: batches must be non-empty");
    const int h = real_batch.front().height();
    const int w = real_batch.front().width();
    auto pack = [&](std::span<const MultispectralImage> batch) {
        std::vector<float> out;
        for (const auto& img : batch) {
            if (img.height() != h || img.width() != w)
                throw ValidationError("spectral_reg_loss: image dimensions differ between batches");
            out.insert(out.end(), img.pixels().begin(), img.pixels().end());
        }
        return out;
    };
    const auto real = pack(real_batch);
    const auto fake = pack(fake_batch);
    return spectral_reg_loss_planar<float>(real, static_cast<int>(real_batch.size()), fake,
                                           static_cast<int>(fake_batch.size()), h, w, radial_bins, {});
}

#define PPGAN_INSTANTIATE_SPECTRAL(T)                                                                          \
    template void radial_power_planar<T>(std::span<const T>, int, int, int, std::span<double>);                    \
    template void radial_power_planar_backward<T>(std::span<const T>, int, int, int, std::span<const double>,      \
                                                  std::span<T>);                                                   \
    template double spectral_reg_loss_planar<T>(std::span<const T>, int, std::span<const T>, int, int, int, int,    \
                                                std::span<T>);

PPGAN_INSTANTIATE_SPECTRAL(float)
PPGAN_INSTANTIATE_SPECTRAL(double)
#undef PPGAN_INSTANTIATE_SPECTRAL

} // namespace ppgan
