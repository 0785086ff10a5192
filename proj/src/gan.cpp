#include "ppgan/gan.hpp"

#include "ppgan/error.hpp"
#include "ppgan/io_util.hpp"
#include "ppgan/networks.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

namespace ppgan {

namespace {

constexpr int kGenerateChunk = 64;

nn::AdamConfig adam_config(const TrainConfig& cfg) { return {cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8}; }

NetworkParams export_params(nn::Sequential<float>& net, std::string topology)
{
    NetworkParams out;
    out.topology = std::move(topology);
    for (auto* p : net.params()) out.tensors.push_back({p->name, p->shape, p->value});
    return out;
}

void import_params(nn::Sequential<float>& net, const NetworkParams& params, const std::string& topology)
{
    if (params.topology != topology)
        throw ValidationError("network topology mismatch: have '" + params.topology + "', expected '" + topology + "'");
    for (auto* p : net.params()) {
        const NamedTensor* t = params.find(p->name);
        if (!t) throw FormatError("missing tensor '" + p->name + "' for " + topology);
        if (t->shape != p->shape || t->data.size() != p->value.size())
            throw FormatError("tensor '" + p->name + "' has shape " + nn::shape_string(t->shape) + ", expected " +
                              nn::shape_string(p->shape));
        p->value = t->data;
    }
}

nn::Tensor<float> images_to_tensor(std::span<const MultispectralImage> images, int expected_side)
{
    if (images.empty()) throw ValidationError("empty image batch");
    const int h = images.front().height(), w = images.front().width();
    if (expected_side > 0 && (h != expected_side || w != expected_side))
        throw ValidationError("image size " + std::to_string(w) + "x" + std::to_string(h) + " does not match network size " +
                              std::to_string(expected_side));
    nn::Tensor<float> t(static_cast<int>(images.size()), kBandCount, h, w);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height() != h || images[i].width() != w) throw ValidationError("images in a batch differ in size");
        std::copy(images[i].pixels().begin(), images[i].pixels().end(), t.sample(static_cast<int>(i)));
    }
    return t;
}

std::vector<MultispectralImage> tensor_to_images(const nn::Tensor<float>& t)
{
    std::vector<MultispectralImage> out;
    out.reserve(t.n());
    for (int i = 0; i < t.n(); ++i) {
        std::vector<float> px(t.sample(i), t.sample(i) + t.sample_size());
        for (float& v : px) v = std::clamp(v, 0.0f, 1.0f);
        out.emplace_back(t.w(), t.h(), std::move(px));
    }
    return out;
}

nn::Tensor<float> latent_tensor(const LatentBatch& z)
{
    nn::Tensor<float> t(static_cast<int>(z.rows()), static_cast<int>(z.cols()), 1, 1);
    std::copy(z.data(), z.data() + z.size(), t.data.begin());
    return t;
}

LatentBatch sample_latent(Pcg64& rng, int count, int dim)
{
    LatentBatch z(count, dim);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(rng.normal());
    return z;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::string fmt_g9(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

std::string generator_topology(const TrainConfig& cfg)
{
    return "generator:latent=" + std::to_string(cfg.latent_dim) + ",image=" + std::to_string(cfg.image_size) +
           ",base=" + std::to_string(cfg.base_channels);
}

std::string d1_topology(const TrainConfig& cfg)
{
    return "d1:image=" + std::to_string(cfg.image_size) + ",base=" + std::to_string(cfg.base_channels);
}

std::string d2_topology(const TrainConfig& cfg)
{
    return "d2:features=" + std::to_string(d2_feature_dim(cfg.radial_bins)) + ",hidden=64-32";
}

void TrainConfig::validate() const
{
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 2) throw ValidationError("batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ValidationError("beta1 and beta2 must be in [0, 1)");
    if (log_every_steps < 1) throw ValidationError("log_every_steps must be >= 1");
    if (latent_dim < kBandCount || latent_dim % kBandCount != 0)
        throw ValidationError("latent_dim must be a positive multiple of 5");
    if (!(w_d2 >= 0.0) || !(w_sr >= 0.0)) throw ValidationError("w_d2 and w_sr must be >= 0");
    if (image_size != 32 && image_size != 64) throw ValidationError("image_size must be 32 or 64");
    if (base_channels < 1) throw ValidationError("base_channels must be >= 1");
    if (radial_bins < 4) throw ValidationError("radial_bins must be >= 4");
}

void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = {{"epochs", c.epochs},
         {"log_every_steps", c.log_every_steps},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"latent_dim", c.latent_dim},
         {"w_d2", c.w_d2},
         {"w_sr", c.w_sr},
         {"ablation_baseline", c.ablation_baseline},
         {"seed", c.seed},
         {"image_size", c.image_size},
         {"base_channels", c.base_channels},
         {"radial_bins", c.radial_bins}};
}

void from_json(const nlohmann::json& j, TrainConfig& c)
{
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.log_every_steps = j.value("log_every_steps", c.log_every_steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.latent_dim = j.value("latent_dim", c.latent_dim);
        c.w_d2 = j.value("w_d2", c.w_d2);
        c.w_sr = j.value("w_sr", c.w_sr);
        c.ablation_baseline = j.value("ablation_baseline", c.ablation_baseline);
        c.seed = j.value("seed", c.seed);
        c.image_size = j.value("image_size", c.image_size);
        c.base_channels = j.value("base_channels", c.base_channels);
        c.radial_bins = j.value("radial_bins", c.radial_bins);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("train config: ") + e.what());
    }
}

const NamedTensor* NetworkParams::find(const std::string& name) const
{
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

NamedTensor* NetworkParams::find(const std::string& name)
{
    for (auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

AdversarialLosses adversarial_losses(std::span<const double> d1_real, std::span<const double> d1_fake,
                                     std::span<const double> d2_real, std::span<const double> d2_fake, double sr,
                                     const TrainConfig& cfg)
{
    if (d1_real.empty() || d1_fake.empty() || d2_real.empty() || d2_fake.empty())
        throw ValidationError("adversarial_losses: probability batches must be non-empty");
    auto mean_log = [](std::span<const double> p, bool complement) {
        double s = 0.0;
        for (double v : p) {
            const double q = detail::clamp_prob(v);
            s += std::log(complement ? 1.0 - q : q);
        }
        return s / static_cast<double>(p.size());
    };
    AdversarialLosses out;
    out.d1_loss = -(mean_log(d1_real, false) + mean_log(d1_fake, true));
    out.d2_loss = -(mean_log(d2_real, false) + mean_log(d2_fake, true));
    out.g_loss = -mean_log(d1_fake, false) - cfg.effective_w_d2() * mean_log(d2_fake, false) + cfg.effective_w_sr() * sr;
    return out;
}

ModelBundle initial_bundle(const TrainConfig& cfg, const CoefficientSet& coeffs)
{
    cfg.validate();
    GanNetworks<float> nets(cfg);
    nets.initialize(cfg.seed);
    ModelBundle b;
    b.generator = export_params(nets.generator, generator_topology(cfg));
    b.d1 = export_params(nets.d1, d1_topology(cfg));
    b.d2 = export_params(nets.d2, d2_topology(cfg));
    b.coeffs = coeffs;
    b.config = cfg;
    return b;
}

std::vector<MultispectralImage> generator_forward(const NetworkParams& params, const TrainConfig& cfg,
                                                  const LatentBatch& z)
{
    if (z.cols() != cfg.latent_dim)
        throw ValidationError("latent dimension " + std::to_string(z.cols()) + " != configured " +
                              std::to_string(cfg.latent_dim));
    auto net = build_generator<float>(cfg);
    import_params(net, params, generator_topology(cfg));
    return tensor_to_images(net.forward(latent_tensor(z), nn::Mode::inference));
}

std::vector<double> d1_forward(const NetworkParams& params, const TrainConfig& cfg,
                               std::span<const MultispectralImage> images)
{
    auto net = build_d1<float>(cfg);
    import_params(net, params, d1_topology(cfg));
    const auto p = net.forward(images_to_tensor(images, cfg.image_size), nn::Mode::inference);
    return {p.data.begin(), p.data.end()};
}

std::vector<double> d2_forward(const NetworkParams& params, const TrainConfig& cfg,
                               std::span<const MultispectralImage> images)
{
    auto net = build_d2_head<float>(cfg);
    import_params(net, params, d2_topology(cfg));
    const auto features = d2_features(images_to_tensor(images, cfg.image_size), cfg.radial_bins);
    const auto p = net.forward(features, nn::Mode::inference);
    return {p.data.begin(), p.data.end()};
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const TrainConfig& cfg, long t)
{
    const auto adam = adam_config(cfg);
    for (const auto& g : grads.tensors) {
        NamedTensor* p = params.find(g.name);
        if (!p) throw ValidationError("adam_step: no parameter named '" + g.name + "'");
        if (p->shape != g.shape || p->data.size() != g.data.size())
            throw ValidationError("adam_step: shape mismatch for '" + g.name + "'");
        nn::adam_update<float>(g.name, std::span<float>(p->data), std::span<const float>(g.data), state[g.name], adam, t);
    }
}

ModelBundle train(const PlotDataset& dataset, const CoefficientSet& coeffs, const TrainConfig& cfg,
                  const std::function<void(const TrainProgress&)>& on_record)
{
    cfg.validate();
    dataset.validate();
    const auto usable = dataset.non_mild_indices();
    if (static_cast<int>(usable.size()) < 2 * cfg.batch_size)
        throw ValidationError("train: need at least 2*batch_size = " + std::to_string(2 * cfg.batch_size) +
                              " non-mild images, got " + std::to_string(usable.size()));

    std::vector<MultispectralImage> images;
    std::set<Health> classes;
    int last_date = 0;
    for (std::size_t i : usable) {
        images.push_back(dataset.images[i]);
        classes.insert(dataset.labels[i].health);
        last_date = std::max(last_date, dataset.labels[i].date_index);
    }
    const auto all = images_to_tensor(images, cfg.image_size);
    const int n = all.n();
    const std::size_t sample = all.sample_size();

    GanNetworks<float> nets(cfg);
    nets.initialize(cfg.seed);
    const auto adam = adam_config(cfg);
    nn::Adam<float> g_opt(nets.generator.params(), adam);
    nn::Adam<float> d1_opt(nets.d1.params(), adam);
    nn::Adam<float> d2_opt(nets.d2.params(), adam);

    Pcg64 rng(derive_seed(cfg.seed, 4));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    const int steps_per_epoch = n / cfg.batch_size;

    ModelBundle bundle;
    long step = 0;
    nn::Tensor<float> real(cfg.batch_size, kBandCount, cfg.image_size, cfg.image_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        for (int s = 0; s < steps_per_epoch; ++s) {
            ++step;
            for (int k = 0; k < cfg.batch_size; ++k)
                std::copy_n(all.sample(order[s * cfg.batch_size + k]), sample, real.sample(k));
            const auto z = latent_tensor(manipulate_latent(sample_latent(rng, cfg.batch_size, cfg.latent_dim), coeffs));

            auto fake = nets.generator.forward(z, nn::Mode::train);
            nets.d1.zero_grad();
            nets.d2.zero_grad();
            const auto dpass = nets.discriminator_objective(real, fake, true);
            d1_opt.step();
            if (!cfg.ablation_baseline) d2_opt.step();

            nets.generator.zero_grad();
            const auto gpass = nets.generator_loss(std::move(fake), real, true);
            g_opt.step();

            const LossRecord rec{step, dpass.d1_loss, dpass.d2_loss, gpass.g_loss, gpass.sr_loss};
            if (!std::isfinite(rec.d1_loss) || !std::isfinite(rec.d2_loss) || !std::isfinite(rec.g_loss) ||
                !std::isfinite(rec.sr_loss))
                throw RuntimeFailure("train: non-finite loss at step " + std::to_string(step));
            if (step % cfg.log_every_steps == 0) {
                bundle.loss_history.push_back(rec);
                if (on_record) on_record({epoch, step, rec});
            }
        }
    }

    bundle.generator = export_params(nets.generator, generator_topology(cfg));
    bundle.d1 = export_params(nets.d1, d1_topology(cfg));
    bundle.d2 = export_params(nets.d2, d2_topology(cfg));
    bundle.coeffs = coeffs;
    bundle.config = cfg;
    if (classes.size() == 1) bundle.class_hint = *classes.begin();
    bundle.dates = dataset.dates;
    bundle.date_index = last_date;
    return bundle;
}

PlotDataset generate(const ModelBundle& bundle, int count, std::optional<Health> class_hint, std::uint64_t seed)
{
    if (count < 1) throw ValidationError("generate: count must be >= 1");
    const auto health = class_hint ? class_hint : bundle.class_hint;
    if (!health) throw ValidationError("generate: no class requested and the bundle was trained on mixed classes");

    const auto& cfg = bundle.config;
    auto net = build_generator<float>(cfg);
    import_params(net, bundle.generator, generator_topology(cfg));

    Pcg64 rng(seed);
    const auto z = manipulate_latent(sample_latent(rng, count, cfg.latent_dim), bundle.coeffs);
    PlotDataset out;
    out.dates = bundle.dates.empty() ? ordinal_dates(bundle.date_index + 1) : bundle.dates;
    out.seed = seed;
    for (int start = 0; start < count; start += kGenerateChunk) {
        const int rows = std::min(kGenerateChunk, count - start);
        const LatentBatch chunk = z.middleRows(start, rows);
        for (auto& img : tensor_to_images(net.forward(latent_tensor(chunk), nn::Mode::inference))) {
            out.images.push_back(std::move(img));
            out.labels.push_back({*health, bundle.date_index, Origin::synthetic});
        }
    }
    out.validate();
    return out;
}

std::vector<unsigned char> encode_weights(std::span<const NamedTensor> tensors)
{
    std::vector<unsigned char> out;
    for (const auto& t : tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        const auto* raw = reinterpret_cast<const unsigned char*>(t.data.data());
        out.insert(out.end(), raw, raw + t.data.size() * sizeof(float));
    }
    return out;
}

std::vector<NamedTensor> decode_weights(std::span<const unsigned char> bytes)
{
    std::vector<NamedTensor> out;
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n) throw FormatError("weights.bin: truncated at byte " + std::to_string(pos));
    };
    auto u32 = [&] {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    };
    while (pos < bytes.size()) {
        NamedTensor t;
        const std::uint32_t name_len = u32();
        if (name_len == 0 || name_len > 4096) throw FormatError("weights.bin: implausible name length");
        need(name_len);
        t.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
        pos += name_len;
        const std::uint32_t rank = u32();
        if (rank > 8) throw FormatError("weights.bin: implausible rank for " + t.name);
        std::size_t count = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t d = u32();
            t.shape.push_back(static_cast<int>(d));
            count *= d;
        }
        if (count > (bytes.size() - pos) / sizeof(float)) throw FormatError("weights.bin: truncated tensor " + t.name);
        t.data.resize(count);
        std::memcpy(t.data.data(), bytes.data() + pos, count * sizeof(float));
        pos += count * sizeof(float);
        out.push_back(std::move(t));
    }
    return out;
}

std::string loss_history_csv(std::span<const LossRecord> history)
{
    std::string s = "step,d1_loss,d2_loss,g_loss,sr_loss\n";
    for (const auto& r : history)
        s += std::to_string(r.step) + "," + fmt_g9(r.d1_loss) + "," + fmt_g9(r.d2_loss) + "," + fmt_g9(r.g_loss) + "," +
             fmt_g9(r.sr_loss) + "\n";
    return s;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir)
{
    ensure_directory(dir);
    std::vector<NamedTensor> all;
    for (const auto& [prefix, net] : {std::pair<std::string, const NetworkParams*>{"generator.", &bundle.generator},
                                      {"d1.", &bundle.d1},
                                      {"d2.", &bundle.d2}})
        for (const auto& t : net->tensors) all.push_back({prefix + t.name, t.shape, t.data});
    write_file_bytes(dir / "weights.bin", encode_weights(all));

    nlohmann::json j;
    j["format"] = "ppgan-bundle-1";
    j["config"] = bundle.config;
    j["coeffs"] = bundle.coeffs;
    j["topology"] = {{"generator", bundle.generator.topology}, {"d1", bundle.d1.topology}, {"d2", bundle.d2.topology}};
    j["class_hint"] = bundle.class_hint ? nlohmann::json(health_name(*bundle.class_hint)) : nlohmann::json(nullptr);
    j["dates"] = bundle.dates;
    j["date_index"] = bundle.date_index;
    auto& hist = j["loss_history"] = nlohmann::json::array();
    for (const auto& r : bundle.loss_history)
        hist.push_back({{"step", r.step}, {"d1_loss", r.d1_loss}, {"d2_loss", r.d2_loss}, {"g_loss", r.g_loss},
                        {"sr_loss", r.sr_loss}});
    write_text_file(dir / "bundle.json", j.dump(2) + "\n");
    write_text_file(dir / "loss_history.csv", loss_history_csv(bundle.loss_history));
}

ModelBundle load_bundle(const std::filesystem::path& dir)
{
    ModelBundle b;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(dir / "bundle.json"));
        if (j.at("format").get<std::string>() != "ppgan-bundle-1") throw FormatError("bundle.json: unknown format");
        b.config = j.at("config").get<TrainConfig>();
        b.coeffs = j.at("coeffs").get<CoefficientSet>();
        b.generator.topology = j.at("topology").at("generator").get<std::string>();
        b.d1.topology = j.at("topology").at("d1").get<std::string>();
        b.d2.topology = j.at("topology").at("d2").get<std::string>();
        if (!j.at("class_hint").is_null()) b.class_hint = health_from_name(j.at("class_hint").get<std::string>());
        b.dates = j.at("dates").get<std::vector<std::string>>();
        b.date_index = j.at("date_index").get<int>();
        for (const auto& r : j.at("loss_history"))
            b.loss_history.push_back({r.at("step").get<long>(), r.at("d1_loss").get<double>(),
                                      r.at("d2_loss").get<double>(), r.at("g_loss").get<double>(),
                                      r.at("sr_loss").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bundle.json: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(std::string("bundle.json: ") + e.what());
    }

    for (auto& t : decode_weights(read_file_bytes(dir / "weights.bin"))) {
        NetworkParams* target = nullptr;
        std::string name;
        for (auto [prefix, net] : {std::pair<std::string, NetworkParams*>{"generator.", &b.generator},
                                   {"d1.", &b.d1},
                                   {"d2.", &b.d2}})
            if (t.name.rfind(prefix, 0) == 0) {
                target = net;
                name = t.name.substr(prefix.size());
            }
        if (!target) throw FormatError("weights.bin: tensor '" + t.name + "' belongs to no network");
        target->tensors.push_back({name, std::move(t.shape), std::move(t.data)});
    }

    // Every tensor the topology needs must be present with the right shape.
    const ModelBundle reference = initial_bundle(b.config);
    for (auto [have, want] : {std::pair{&b.generator, &reference.generator}, {&b.d1, &reference.d1}, {&b.d2, &reference.d2}}) {
        if (have->topology != want->topology) throw FormatError("bundle topology mismatch: " + have->topology);
        if (have->tensors.size() != want->tensors.size())
            throw FormatError("weights.bin: expected " + std::to_string(want->tensors.size()) + " tensors for " +
                              want->topology + ", found " + std::to_string(have->tensors.size()));
        for (const auto& w : want->tensors) {
            const NamedTensor* t = have->find(w.name);
            if (!t) throw FormatError("weights.bin: missing tensor " + w.name);
            if (t->shape != w.shape) throw FormatError("weights.bin: wrong shape for " + w.name);
        }
    }
    return b;
}

} // namespace ppgan
