#include "ppgan/field_sim.hpp"

#include "ppgan/error.hpp"
#include "ppgan/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ppgan {

namespace {

constexpr int kRedEdge = static_cast<int>(Band::red_edge);
constexpr int kNir = static_cast<int>(Band::nir);
constexpr int kRed = static_cast<int>(Band::red);
constexpr std::array<Health, 3> kClasses = {Health::healthy, Health::mild, Health::unhealthy};

double ndvi(const BandValues& v) { return (v[kNir] - v[kRed]) / (v[kNir] + v[kRed]); }

std::string class_field(Health h, const std::string& field)
{
    return "class_signatures." + std::string(health_name(h)) + "." + field;
}

/// Gaussian kernel with radius ceil(3 sigma), normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma)
{
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double s = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        s += k[i + radius];
    }
    for (double& v : k) v /= s;
    return k;
}

/// Unit-variance correlated noise: white noise blurred separably with
/// circular boundaries, rescaled by the kernel's energy.
std::vector<double> correlated_noise(Pcg64& rng, int size, double sigma)
{
    const std::size_t n = static_cast<std::size_t>(size) * size;
    std::vector<double> white(n);
    for (double& v : white) v = rng.normal();
    if (sigma <= 0.0) return white;

    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    double energy = 0.0;
    for (double v : k) energy += v * v;
    const double scale = 1.0 / energy; // (sum k^2)^2 in 2-D, square-rooted

    std::vector<double> tmp(n, 0.0), out(n, 0.0);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            double s = 0.0;
            for (int j = -radius; j <= radius; ++j) s += k[j + radius] * white[r * size + (c + j + size) % size];
            tmp[r * size + c] = s;
        }
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            double s = 0.0;
            for (int j = -radius; j <= radius; ++j) s += k[j + radius] * tmp[((r + j + size) % size) * size + c];
            out[r * size + c] = s * scale;
        }
    return out;
}

MultispectralImage render_plot(const SimConfig& cfg, const ClassSignature& sig, int date, std::uint64_t seed)
{
    Pcg64 rng(seed);
    const int size = cfg.image_size;
    const std::size_t plane = static_cast<std::size_t>(size) * size;

    BandValues veg = sig.mean_at(date);
    for (int b = 0; b < kBandCount; ++b) {
        const double z = std::clamp(rng.normal(), -3.0, 3.0);
        veg[b] = std::clamp(veg[b] + z * sig.std[b], 0.0, 1.0);
    }

    std::vector<double> fraction(size);
    for (int c = 0; c < size; ++c) {
        const double phase = 2.0 * std::numbers::pi * cfg.row_count * (c + 0.5) / size;
        fraction[c] = 1.0 - cfg.row_amplitude * 0.5 * (1.0 - std::cos(phase));
    }

    std::vector<float> data(plane * kBandCount);
    for (int b = 0; b < kBandCount; ++b) {
        if (b == kRedEdge) continue;
        std::vector<double> texture;
        if (cfg.texture_std > 0.0) texture = correlated_noise(rng, size, cfg.noise_correlation_length);
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) {
                const std::size_t p = static_cast<std::size_t>(r) * size + c;
                const double v = veg[b] + (texture.empty() ? 0.0 : cfg.texture_std * texture[p]);
                const double mixed = fraction[c] * v + (1.0 - fraction[c]) * cfg.soil[b];
                data[b * plane + p] = static_cast<float>(std::clamp(mixed, 0.0, 1.0));
            }
    }
    for (std::size_t p = 0; p < plane; ++p) {
        const double nir = data[kNir * plane + p];
        double re = cfg.red_edge(nir);
        if (cfg.re_noise_std > 0.0) re += cfg.re_noise_std * rng.normal();
        data[kRedEdge * plane + p] = static_cast<float>(std::clamp(re, 0.0, 1.0));
    }
    return {size, size, std::move(data)};
}

BandValues json_band_values(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    if (v.size() != kBandCount) throw ValidationError("expected 5 band values");
    BandValues out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

} // namespace

BandValues ClassSignature::mean_at(int date) const
{
    BandValues out = mean;
    if (date >= 0 && date < static_cast<int>(date_drift.size()))
        for (int b = 0; b < kBandCount; ++b) out[b] += date_drift[date][b];
    return out;
}

double RedEdgeCurve::operator()(double nir) const { return G * std::exp(-H * nir) + K * nir; }

std::map<Health, ClassSignature> default_signatures(const RedEdgeCurve& curve)
{
    constexpr int dates = 5;
    // Yellow rust raises visible reflectance and depresses NIR; the gap
    // opens gradually so early dates are hard to separate.
    const BandValues healthy_base{0.035, 0.075, 0.048, 0.0, 0.44};
    const BandValues healthy_growth{0.0, 0.0, -0.002, 0.0, 0.010};
    const BandValues rust_final{0.004, 0.013, 0.025, 0.0, -0.080};

    std::map<Health, ClassSignature> out;
    ClassSignature healthy, unhealthy, mild;
    healthy.mean = healthy_base;
    healthy.std = {0.006, 0.008, 0.012, 0.0, 0.050};
    unhealthy.mean = healthy_base;
    unhealthy.std = {0.007, 0.010, 0.018, 0.0, 0.060};
    for (int d = 0; d < dates; ++d) {
        const double severity = (d + 0.25) / (dates - 1 + 0.25);
        BandValues h{}, u{};
        for (int b = 0; b < kBandCount; ++b) {
            h[b] = d * healthy_growth[b];
            u[b] = h[b] + severity * rust_final[b];
        }
        healthy.date_drift.push_back(h);
        unhealthy.date_drift.push_back(u);
    }
    // Red edge follows the NIR curve rather than a free mean.
    for (auto* sig : {&healthy, &unhealthy}) {
        sig->mean[kRedEdge] = curve(sig->mean[kNir]);
        for (int d = 0; d < dates; ++d)
            sig->date_drift[d][kRedEdge] = curve(sig->mean_at(d)[kNir]) - sig->mean[kRedEdge];
    }
    for (int b = 0; b < kBandCount; ++b) {
        mild.mean[b] = 0.5 * (healthy.mean[b] + unhealthy.mean[b]);
        mild.std[b] = 0.5 * (healthy.std[b] + unhealthy.std[b]);
    }
    for (int d = 0; d < dates; ++d) {
        BandValues m{};
        for (int b = 0; b < kBandCount; ++b) m[b] = 0.5 * (healthy.date_drift[d][b] + unhealthy.date_drift[d][b]);
        mild.date_drift.push_back(m);
    }
    out[Health::healthy] = healthy;
    out[Health::mild] = mild;
    out[Health::unhealthy] = unhealthy;
    return out;
}

SimConfig default_sim_config(int healthy_per_date, int mild_per_date, int unhealthy_per_date, std::uint64_t seed)
{
    SimConfig c;
    c.seed = seed;
    c.class_signatures = default_signatures(c.red_edge);
    c.counts[Health::healthy] = std::vector<int>(c.date_count, healthy_per_date);
    c.counts[Health::mild] = std::vector<int>(c.date_count, mild_per_date);
    c.counts[Health::unhealthy] = std::vector<int>(c.date_count, unhealthy_per_date);
    return c;
}

void SimConfig::validate() const
{
    if (image_size < 16) throw ValidationError("image_size must be >= 16");
    if (date_count < 1) throw ValidationError("date_count must be >= 1");
    if (row_count < 1) throw ValidationError("row_count must be >= 1");
    if (!(row_amplitude >= 0.0 && row_amplitude <= 1.0)) throw ValidationError("row_amplitude must be in [0,1]");
    if (!(noise_correlation_length >= 0.0)) throw ValidationError("noise_correlation_length must be >= 0");
    if (!(texture_std >= 0.0)) throw ValidationError("texture_std must be >= 0");
    if (!(re_noise_std >= 0.0)) throw ValidationError("re_noise_std must be >= 0");
    for (double s : soil)
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("soil reflectance must be in [0,1]");
    for (const auto& [health, per_date] : counts) {
        const std::string field = "counts." + std::string(health_name(health));
        if (static_cast<int>(per_date.size()) != date_count)
            throw ValidationError(field + " must list one count per date");
        int total = 0;
        for (int n : per_date) {
            if (n < 0) throw ValidationError(field + " must be >= 0");
            total += n;
        }
        if (total == 0) continue;
        const auto it = class_signatures.find(health);
        if (it == class_signatures.end()) throw ValidationError("class_signatures: missing " + std::string(health_name(health)));
        const auto& sig = it->second;
        if (static_cast<int>(sig.date_drift.size()) < date_count)
            throw ValidationError(class_field(health, "date_drift") + " must cover every date");
        for (int b = 0; b < kBandCount; ++b)
            if (!(sig.std[b] >= 0.0)) throw ValidationError(class_field(health, "std") + " must be >= 0");
        for (int d = 0; d < date_count; ++d)
            for (double v : sig.mean_at(d))
                if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(class_field(health, "mean") + " + drift outside [0,1]");
    }
    const auto h = class_signatures.find(Health::healthy);
    const auto u = class_signatures.find(Health::unhealthy);
    if (h != class_signatures.end() && u != class_signatures.end() &&
        static_cast<int>(h->second.date_drift.size()) >= date_count &&
        static_cast<int>(u->second.date_drift.size()) >= date_count) {
        for (int d = 0; d < date_count; ++d)
            if (!(ndvi(h->second.mean_at(d)) > ndvi(u->second.mean_at(d))))
                throw ValidationError("class_signatures: healthy NDVI must exceed unhealthy NDVI at date " +
                                      std::to_string(d));
    }
}

PlotDataset simulate_dataset(const SimConfig& config)
{
    config.validate();
    PlotDataset ds;
    ds.dates = ordinal_dates(config.date_count);
    ds.seed = config.seed;
    std::uint64_t index = 0;
    for (Health health : kClasses) {
        const auto it = config.counts.find(health);
        if (it == config.counts.end()) continue;
        for (int d = 0; d < config.date_count; ++d)
            for (int k = 0; k < it->second[d]; ++k) {
                const auto& sig = config.class_signatures.at(health);
                ds.images.push_back(render_plot(config, sig, d, derive_seed(config.seed, index++)));
                ds.labels.push_back({health, d, Origin::real});
            }
    }
    return ds;
}

TrainTestSplit fixed_count_split(const PlotDataset& dataset, std::uint64_t seed, const SplitCounts& counts)
{
    if (dataset.dates.empty()) throw ValidationError("split: dataset declares no dates");
    const int final_date = static_cast<int>(dataset.dates.size()) - 1;
    auto healthy = dataset.indices_where(Health::healthy, final_date);
    auto unhealthy = dataset.indices_where(Health::unhealthy, final_date);
    if (static_cast<int>(healthy.size()) <= counts.train_healthy ||
        static_cast<int>(unhealthy.size()) <= counts.train_unhealthy)
        throw ValidationError("split: insufficient samples at the final date (healthy " + std::to_string(healthy.size()) +
                              ", unhealthy " + std::to_string(unhealthy.size()) + "); need more than " +
                              std::to_string(counts.train_healthy) + "/" + std::to_string(counts.train_unhealthy));

    Pcg64 rng(seed);
    auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    shuffle(healthy);
    shuffle(unhealthy);

    TrainTestSplit out;
    out.train_indices.assign(healthy.begin(), healthy.begin() + counts.train_healthy);
    out.train_indices.insert(out.train_indices.end(), unhealthy.begin(), unhealthy.begin() + counts.train_unhealthy);

    const int rem_h = static_cast<int>(healthy.size()) - counts.train_healthy;
    const int rem_u = static_cast<int>(unhealthy.size()) - counts.train_unhealthy;
    const int test_size = std::min(counts.test_size, rem_h + rem_u);
    int test_h = static_cast<int>(std::lround(static_cast<double>(test_size) * rem_h / (rem_h + rem_u)));
    test_h = std::clamp(test_h, 1, rem_h);
    const int test_u = std::min(test_size - test_h, rem_u);
    if (test_u < 1) throw ValidationError("split: no unhealthy samples left for the test set");
    out.test_indices.assign(healthy.begin() + counts.train_healthy, healthy.begin() + counts.train_healthy + test_h);
    out.test_indices.insert(out.test_indices.end(), unhealthy.begin() + counts.train_unhealthy,
                            unhealthy.begin() + counts.train_unhealthy + test_u);
    std::sort(out.train_indices.begin(), out.train_indices.end());
    std::sort(out.test_indices.begin(), out.test_indices.end());
    out.train = dataset.subset(out.train_indices);
    out.test = dataset.subset(out.test_indices);
    return out;
}

void to_json(nlohmann::json& j, const SimConfig& c)
{
    j = nlohmann::json::object();
    j["image_size"] = c.image_size;
    j["date_count"] = c.date_count;
    for (const auto& [h, v] : c.counts) j["counts"][std::string(health_name(h))] = v;
    j["row_count"] = c.row_count;
    j["row_amplitude"] = c.row_amplitude;
    j["noise_correlation_length"] = c.noise_correlation_length;
    j["texture_std"] = c.texture_std;
    j["re_noise_std"] = c.re_noise_std;
    j["red_edge"] = {{"G", c.red_edge.G}, {"H", c.red_edge.H}, {"K", c.red_edge.K}};
    j["soil"] = c.soil;
    j["seed"] = c.seed;
    for (const auto& [h, s] : c.class_signatures)
        j["class_signatures"][std::string(health_name(h))] = {
            {"mean", s.mean}, {"std", s.std}, {"date_drift", s.date_drift}};
}

void from_json(const nlohmann::json& j, SimConfig& c)
{
    try {
        c.image_size = j.value("image_size", c.image_size);
        c.date_count = j.value("date_count", c.date_count);
        c.row_count = j.value("row_count", c.row_count);
        c.row_amplitude = j.value("row_amplitude", c.row_amplitude);
        c.noise_correlation_length = j.value("noise_correlation_length", c.noise_correlation_length);
        c.texture_std = j.value("texture_std", c.texture_std);
        c.re_noise_std = j.value("re_noise_std", c.re_noise_std);
        c.seed = j.value("seed", c.seed);
        if (j.contains("red_edge")) {
            const auto& r = j.at("red_edge");
            c.red_edge = {r.value("G", c.red_edge.G), r.value("H", c.red_edge.H), r.value("K", c.red_edge.K)};
        }
        if (j.contains("soil")) c.soil = json_band_values(j.at("soil"));
        if (c.class_signatures.empty() || j.contains("red_edge")) c.class_signatures = default_signatures(c.red_edge);
        if (j.contains("class_signatures"))
            for (const auto& [name, s] : j.at("class_signatures").items()) {
                ClassSignature sig;
                sig.mean = json_band_values(s.at("mean"));
                sig.std = json_band_values(s.at("std"));
                for (const auto& d : s.at("date_drift")) sig.date_drift.push_back(json_band_values(d));
                c.class_signatures[health_from_name(name)] = sig;
            }
        if (j.contains("counts")) {
            c.counts.clear();
            for (const auto& [name, v] : j.at("counts").items()) {
                if (v.is_number_integer())
                    c.counts[health_from_name(name)] = std::vector<int>(c.date_count, v.get<int>());
                else
                    c.counts[health_from_name(name)] = v.get<std::vector<int>>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("sim config: ") + e.what());
    }
}

} // namespace ppgan
