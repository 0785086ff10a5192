#include "ppgan/cli.hpp"

#include "ppgan/error.hpp"
#include "ppgan/gan.hpp"
#include "ppgan/io_util.hpp"
#include "ppgan/metrics.hpp"
#include "ppgan/plot.hpp"
#include "ppgan/rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace ppgan::cli {

namespace {

std::string hex64(std::uint64_t v)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void require_fresh_output(const fs::path& out)
{
    if (out.empty()) throw ValidationError("--out is required");
    if (fs::exists(out) && (!fs::is_directory(out) || !fs::is_empty(out)))
        throw ValidationError("output directory " + out.string() + " already exists and is not empty");
    ensure_directory(out);
}

void require_exists(const fs::path& p, const std::string& what)
{
    if (p.empty()) throw ValidationError(what + " is required");
    if (!fs::exists(p)) throw ValidationError(what + " " + p.string() + " does not exist");
}

/// Checksums every file under `out` (sorted by relative path) and records them.
void write_run_meta(const fs::path& out, const std::string& command, const RunConfig& cfg,
                    const nlohmann::json& seeds)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), out));
    std::sort(files.begin(), files.end());
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& f : files) {
        if (f == "run_meta.json") continue;
        artifacts[f.generic_string()] = hex64(fnv1a64(read_file_bytes(out / f)));
    }
    nlohmann::json meta = {{"command", command},
                           {"config_hash", hex64(fnv1a64(run_config_json(cfg).dump()))},
                           {"seeds", seeds},
                           {"artifacts", artifacts}};
    write_text_file(out / "run_meta.json", meta.dump(2) + "\n");
}

std::optional<Health> parse_class(const std::string& name)
{
    if (name.empty()) return std::nullopt;
    const Health h = health_from_name(name);
    if (h == Health::mild) throw ValidationError("mild plots are not modelled; use healthy or unhealthy");
    return h;
}

std::vector<DatePoint> parse_timeseries(const std::string& csv, const std::string& source)
{
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "date,f1_real,f1_mixed") throw FormatError(source + ": unexpected header");
    std::vector<DatePoint> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        DatePoint p;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf", &p.date_index, &p.f1_unhealthy_real, &p.f1_unhealthy_mixed) != 3)
            throw FormatError(source + ": malformed row '" + line + "'");
        out.push_back(p);
    }
    return out;
}

std::string f1_chart(const std::vector<DatePoint>& points)
{
    std::vector<double> x;
    Series real{"real only", {}}, mixed{"real + synthetic", {}};
    for (const auto& p : points) {
        x.push_back(p.date_index);
        real.values.push_back(p.f1_unhealthy_real);
        mixed.values.push_back(p.f1_unhealthy_mixed);
    }
    std::vector<Series> series;
    if (!points.empty()) series = {real, mixed};
    return svg_line_chart("Unhealthy-class F1 by date", "date index", "F1", x, series);
}

const std::vector<std::string> kMetricNames{"FID mean", "FID 1-3", "FID 3-5", "Chi2", "IC", "BC", "SID", "R2"};

std::vector<double> metric_values(const MetricsReport& r)
{
    return {r.fid_mean, r.fid_bands_123, r.fid_bands_345, r.chi_square, r.intersection, r.bhattacharyya, r.sid, r.profile_r2};
}

/// Cross-subcommand state filled by CLI11 callbacks.
struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    bool ablation = false;
    std::string data, coeffs, model, real, synth, timeseries, klass;
    std::optional<int> date;
    std::optional<int> count;
    std::optional<int> test_size;
    std::optional<double> margin;
    std::optional<int> bins;
    std::vector<std::string> reports;
};

} // namespace

RunConfig load_run_config(const std::string& path)
{
    RunConfig c;
    c.sim.image_size = 32;
    if (path.empty()) return c;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    try {
        if (j.contains("sim")) {
            SimConfig s = c.sim;
            from_json(j.at("sim"), s);
            c.sim = s;
        }
        if (j.contains("train")) from_json(j.at("train"), c.train);
        if (j.contains("classifier")) from_json(j.at("classifier"), c.classifier);
        if (j.contains("metrics")) {
            c.margin = j.at("metrics").value("margin", c.margin);
            c.bins = j.at("metrics").value("bins", c.bins);
        }
        if (j.contains("predict")) {
            const auto& p = j.at("predict");
            c.test_size = p.value("test_size", c.test_size);
            if (p.contains("augment")) {
                c.augment.clear();
                for (const auto& [k, v] : p.at("augment").items()) c.augment[health_from_name(k)] = v.get<int>();
            }
        }
        if (j.contains("generate")) c.generate_count = j.at("generate").value("count", c.generate_count);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    return c;
}

nlohmann::json run_config_json(const RunConfig& c)
{
    nlohmann::json augment = nlohmann::json::object();
    for (const auto& [h, n] : c.augment) augment[std::string(health_name(h))] = n;
    return {{"sim", c.sim},
            {"train", c.train},
            {"classifier", c.classifier},
            {"metrics", {{"margin", c.margin}, {"bins", c.bins}}},
            {"predict", {{"augment", augment}, {"test_size", c.test_size}}},
            {"generate", {{"count", c.generate_count}}}};
}

namespace {

void cmd_simulate(const Options& o, RunConfig& cfg, std::ostream& out)
{
    if (o.seed) cfg.sim.seed = *o.seed;
    cfg.sim.validate();
    const fs::path dir = o.out;
    require_fresh_output(dir);
    const PlotDataset ds = simulate_dataset(cfg.sim);
    write_dataset(ds, dir);
    write_run_meta(dir, "simulate", cfg, {{"sim", cfg.sim.seed}});
    out << "simulated " << ds.size() << " plots into " << dir.string() << "\n";
}

void cmd_fit(const Options& o, RunConfig& cfg, std::ostream& out)
{
    require_exists(o.data, "--data");
    const PlotDataset ds = read_dataset(o.data);
    const fs::path dir = o.out;
    require_fresh_output(dir);
    const CoefficientFit fit = fit_re_nir_coefficients(ds, 200, 1e-12, cfg.margin);
    nlohmann::json j = fit.coeffs;
    j["iterations"] = fit.iterations;
    j["pixel_count"] = fit.pixel_count;
    j["cov_nir_re_data"] = fit.cov_nir_re_data;
    j["cov_nir_re_model"] = fit.cov_nir_re_model;
    j["cov_gap"] = fit.cov_gap;
    write_text_file(dir / "coeffs.json", j.dump(2) + "\n");
    write_run_meta(dir, "fit-coeff", cfg, nlohmann::json::object());
    out << "G=" << fit.coeffs.G << " H=" << fit.coeffs.H << " K=" << fit.coeffs.K << " rho=" << fit.coeffs.rho << "\n";
}

CoefficientSet read_coeffs(const std::string& path)
{
    require_exists(path, "--coeffs");
    fs::path p = path;
    if (fs::is_directory(p)) p /= "coeffs.json";
    try {
        return nlohmann::json::parse(read_text_file(p)).get<CoefficientSet>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

void cmd_train(const Options& o, RunConfig& cfg, std::ostream& out)
{
    require_exists(o.data, "--data");
    if (o.seed) cfg.train.seed = *o.seed;
    if (o.epochs) cfg.train.epochs = *o.epochs;
    if (o.ablation) cfg.train.ablation_baseline = true;
    cfg.train.validate();
    const CoefficientSet coeffs = read_coeffs(o.coeffs);
    PlotDataset ds = read_dataset(o.data);
    const auto klass = parse_class(o.klass);
    if (klass || o.date) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto& l = ds.labels[i];
            if (l.health == Health::mild) continue;
            if (klass && l.health != *klass) continue;
            if (o.date && l.date_index != *o.date) continue;
            keep.push_back(i);
        }
        ds = ds.subset(keep);
    }
    const fs::path dir = o.out;
    require_fresh_output(dir);
    const ModelBundle bundle = train(ds, coeffs, cfg.train, [&out](const TrainProgress& p) {
        out << "epoch " << p.epoch << " step " << p.step << " d1=" << p.losses.d1_loss << " d2=" << p.losses.d2_loss
            << " g=" << p.losses.g_loss << " sr=" << p.losses.sr_loss << "\n";
    });
    save_bundle(bundle, dir);
    write_run_meta(dir, "train", cfg, {{"train", cfg.train.seed}});
}

void cmd_generate(const Options& o, RunConfig& cfg, std::ostream& out)
{
    require_exists(o.model, "--model");
    const ModelBundle bundle = load_bundle(o.model);
    const int count = o.count.value_or(cfg.generate_count);
    const std::uint64_t seed = o.seed.value_or(derive_seed(bundle.config.seed, 5));
    const fs::path dir = o.out;
    require_fresh_output(dir);
    const PlotDataset ds = generate(bundle, count, parse_class(o.klass), seed);
    write_dataset(ds, dir);
    write_run_meta(dir, "generate", cfg, {{"generate", seed}});
    out << "generated " << ds.size() << " plots into " << dir.string() << "\n";
}

void cmd_eval(const Options& o, RunConfig& cfg, std::ostream& out)
{
    require_exists(o.real, "--real");
    require_exists(o.synth, "--synth");
    if (o.margin) cfg.margin = *o.margin;
    if (o.bins) cfg.bins = *o.bins;
    const PlotDataset real = read_dataset(o.real);
    const PlotDataset synth = read_dataset(o.synth);
    const fs::path dir = o.out;
    require_fresh_output(dir);
    const MetricsReport r = full_report(real, synth, FeatureEmbedder(), cfg.margin, cfg.bins);
    write_text_file(dir / "report.json", nlohmann::json(r).dump(2) + "\n");
    write_text_file(dir / "metrics_bars.svg", svg_bar_chart("Fidelity metrics", kMetricNames, {{"model", metric_values(r)}}));
    write_text_file(dir / "spectral_profiles.svg",
                    svg_profile_overlay("Mean spectral profile", r.real_profile, r.synth_profile));
    write_run_meta(dir, "eval", cfg, {{"embedder", kEmbedderSeed}});
    out << "fid_mean=" << r.fid_mean << " chi2=" << r.chi_square << " ic=" << r.intersection
        << " bc=" << r.bhattacharyya << " sid=" << r.sid << " r2=" << r.profile_r2 << "\n";
}

void cmd_indices(const Options& o, RunConfig& cfg, std::ostream&)
{
    require_exists(o.data, "--data");
    if (o.margin) cfg.margin = *o.margin;
    const PlotDataset ds = read_dataset(o.data);
    const fs::path dir = o.out;
    require_fresh_output(dir);
    write_feature_table(extract_indices(ds, builtin_registry(), cfg.margin), builtin_registry(), dir / "features.csv");
    write_run_meta(dir, "indices", cfg, nlohmann::json::object());
}

void cmd_indices_list(std::ostream& out)
{
    for (const auto& d : builtin_registry()) out << d.name << "\t" << d.formula << "\n";
}

std::vector<IndexVector> read_rows(const std::string& path, const std::string& flag)
{
    require_exists(path, flag);
    fs::path p = path;
    if (fs::is_directory(p)) p /= "features.csv";
    return read_feature_table(p).rows;
}

void cmd_predict(const Options& o, RunConfig& cfg, std::ostream& out)
{
    if (o.seed) cfg.classifier.seed = *o.seed;
    if (o.test_size) cfg.test_size = *o.test_size;
    const auto real = read_rows(o.real, "--real");
    const auto synth = o.synth.empty() ? std::vector<IndexVector>{} : read_rows(o.synth, "--synth");
    const fs::path dir = o.out;
    require_fresh_output(dir);
    const RowSplit split = holdout_final_date(real, cfg.test_size, cfg.classifier.seed);
    const AugmentationResult r = augmentation_experiment(split.train, synth, split.test, cfg.classifier, cfg.augment);
    write_text_file(dir / "experiment.json", nlohmann::json(r).dump(2) + "\n");

    std::string csv = "scenario,accuracy,healthy_recall,healthy_f1,unhealthy_recall,unhealthy_f1\n";
    char buf[160];
    for (const auto& [name, s] : {std::pair<const char*, const EvalScores*>{"real", &r.real}, {"mixed", &r.mixed}}) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", name, s->accuracy, s->healthy.recall,
                      s->healthy.f1, s->unhealthy.recall, s->unhealthy.f1);
        csv += buf;
    }
    write_text_file(dir / "scores.csv", csv);
    write_run_meta(dir, "predict", cfg, {{"classifier", cfg.classifier.seed}});
    out << "unhealthy F1 real=" << r.real.unhealthy.f1 << " mixed=" << r.mixed.unhealthy.f1 << "\n";
}

void cmd_timeseries(const Options& o, RunConfig& cfg, std::ostream& out)
{
    if (o.seed) cfg.classifier.seed = *o.seed;
    if (o.test_size) cfg.test_size = *o.test_size;
    const auto real = read_rows(o.real, "--real");
    const auto synth = o.synth.empty() ? std::vector<IndexVector>{} : read_rows(o.synth, "--synth");
    const fs::path dir = o.out;
    require_fresh_output(dir);
    const RowSplit split = holdout_final_date(real, cfg.test_size, cfg.classifier.seed);
    const auto points = per_date_analysis(split.train, synth, split.test, cfg.classifier);
    write_text_file(dir / "timeseries.csv", timeseries_csv(points));
    write_text_file(dir / "f1_by_date.svg", f1_chart(points));
    write_run_meta(dir, "timeseries", cfg, {{"classifier", cfg.classifier.seed}});
    for (const auto& p : points)
        out << "date " << p.date_index << " f1_real=" << p.f1_unhealthy_real << " f1_mixed=" << p.f1_unhealthy_mixed << "\n";
}

void cmd_report(const Options& o, RunConfig& cfg, std::ostream& out)
{
    if (o.reports.empty()) throw ValidationError("report: at least one --eval NAME=DIR is required");
    std::vector<std::pair<std::string, MetricsReport>> reports;
    for (const auto& spec : o.reports) {
        const auto eq = spec.find('=');
        std::string name = eq == std::string::npos ? fs::path(spec).filename().string() : spec.substr(0, eq);
        fs::path p = eq == std::string::npos ? spec : spec.substr(eq + 1);
        if (fs::is_directory(p)) p /= "report.json";
        require_exists(p.string(), "--eval");
        try {
            reports.emplace_back(name, nlohmann::json::parse(read_text_file(p)).get<MetricsReport>());
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(p.string() + ": " + e.what());
        }
    }
    std::vector<DatePoint> points;
    if (!o.timeseries.empty()) {
        fs::path p = o.timeseries;
        if (fs::is_directory(p)) p /= "timeseries.csv";
        require_exists(p.string(), "--timeseries");
        points = parse_timeseries(read_text_file(p), p.string());
    }
    const fs::path dir = o.out;
    require_fresh_output(dir);

    std::vector<Series> bars;
    nlohmann::json summary = {{"reports", nlohmann::json::object()}};
    for (const auto& [name, r] : reports) {
        bars.push_back({name, metric_values(r)});
        summary["reports"][name] = r;
    }
    summary["timeseries"] = nlohmann::json::array();
    for (const auto& p : points)
        summary["timeseries"].push_back(
            {{"date", p.date_index}, {"f1_real", p.f1_unhealthy_real}, {"f1_mixed", p.f1_unhealthy_mixed}});
    write_text_file(dir / "metrics_bars.svg", svg_bar_chart("Fidelity metrics", kMetricNames, bars));
    write_text_file(dir / "spectral_profiles.svg",
                    svg_profile_overlay("Mean spectral profile (" + reports.front().first + ")",
                                        reports.front().second.real_profile, reports.front().second.synth_profile));
    write_text_file(dir / "f1_by_date.svg", f1_chart(points));
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    write_run_meta(dir, "report", cfg, nlohmann::json::object());
    out << "wrote report for " << reports.size() << " model(s) into " << dir.string() << "\n";
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"PlantPlotGAN pipeline: simulate, train, generate and evaluate multispectral plot imagery", "ppg"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory (must be new or empty)")->required();
    };
    auto seeded = [&o](CLI::App* sub) { sub->add_option("--seed", o.seed, "Seed override"); };

    auto* simulate = app.add_subcommand("simulate", "Simulate a multispectral plot dataset");
    common(simulate);
    seeded(simulate);

    auto* fit = app.add_subcommand("fit-coeff", "Fit the red-edge/NIR coefficients of a dataset");
    common(fit);
    fit->add_option("--data", o.data, "Dataset directory")->required();

    auto* trainc = app.add_subcommand("train", "Train the GAN on a dataset");
    common(trainc);
    seeded(trainc);
    trainc->add_option("--data", o.data, "Dataset directory")->required();
    trainc->add_option("--coeffs", o.coeffs, "coeffs.json or its directory")->required();
    trainc->add_option("--epochs", o.epochs, "Epoch override");
    trainc->add_flag("--ablation", o.ablation, "Disable D2 and the spectral regularizer");
    trainc->add_option("--class", o.klass, "Train on one class only (healthy|unhealthy)");
    trainc->add_option("--date", o.date, "Train on one date index only");

    auto* gen = app.add_subcommand("generate", "Sample synthetic plots from a trained model");
    common(gen);
    seeded(gen);
    gen->add_option("--model", o.model, "Model bundle directory")->required();
    gen->add_option("--count", o.count, "Number of samples");
    gen->add_option("--class", o.klass, "Class label for the samples");

    auto* eval = app.add_subcommand("eval", "Compare real and synthetic datasets");
    common(eval);
    eval->add_option("--real", o.real, "Real dataset directory")->required();
    eval->add_option("--synth", o.synth, "Synthetic dataset directory")->required();
    eval->add_option("--margin", o.margin, "Inner-rectangle margin fraction");
    eval->add_option("--bins", o.bins, "Histogram bins");

    auto* indices = app.add_subcommand("indices", "Extract vegetation indices (or `indices list`)");
    auto* list = indices->add_subcommand("list", "Print the index registry");
    indices->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    indices->add_option("--out", o.out, "Output directory");
    indices->add_option("--data", o.data, "Dataset directory");
    indices->add_option("--margin", o.margin, "Inner-rectangle margin fraction");

    auto* predict = app.add_subcommand("predict", "Real vs real+synthetic classification experiment");
    common(predict);
    seeded(predict);
    predict->add_option("--real", o.real, "Real feature table")->required();
    predict->add_option("--synth", o.synth, "Synthetic feature table");
    predict->add_option("--test-size", o.test_size, "Held-out final-date rows");

    auto* ts = app.add_subcommand("timeseries", "Per-date cumulative F1 analysis");
    common(ts);
    seeded(ts);
    ts->add_option("--real", o.real, "Real feature table")->required();
    ts->add_option("--synth", o.synth, "Synthetic feature table");
    ts->add_option("--test-size", o.test_size, "Held-out final-date rows");

    auto* report = app.add_subcommand("report", "Assemble metric reports and plots");
    common(report);
    report->add_option("--eval", o.reports, "NAME=DIR of an eval run (repeatable)");
    report->add_option("--timeseries", o.timeseries, "timeseries.csv or its directory");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "ppg: " << e.what() << "\n";
        CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        err << failing->help();
        return kExitValidation;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        RunConfig cfg = load_run_config(o.config);
        if (simulate->parsed()) cmd_simulate(o, cfg, out);
        else if (fit->parsed()) cmd_fit(o, cfg, out);
        else if (trainc->parsed()) cmd_train(o, cfg, out);
        else if (gen->parsed()) cmd_generate(o, cfg, out);
        else if (eval->parsed()) cmd_eval(o, cfg, out);
        else if (indices->parsed()) {
            if (list->parsed()) cmd_indices_list(out);
            else if (o.out.empty() || o.data.empty()) throw ValidationError("indices requires --data and --out");
            else cmd_indices(o, cfg, out);
        } else if (predict->parsed()) cmd_predict(o, cfg, out);
        else if (ts->parsed()) cmd_timeseries(o, cfg, out);
        else if (report->parsed()) cmd_report(o, cfg, out);
    } catch (const ValidationError& e) {
        err << "ppg " << stage << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "ppg " << stage << ": " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace ppgan::cli
