#include "ppgan/vegindex.hpp"

#include "ppgan/error.hpp"
#include "ppgan/io_util.hpp"
#include "ppgan/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace ppgan {

namespace {

using M = GuardedMath;

std::vector<IndexDefinition> make_registry()
{
    return {
        {"NDVI", "(N-R)/(N+R)", [](const BandMeans& b, M& m) { return m.div(b.N - b.R, b.N + b.R); }},
        {"GCI", "N/G-1", [](const BandMeans& b, M& m) { return m.div(b.N, b.G) - 1.0; }},
        {"MCARI", "((RE-R)-0.2*(RE-G))*(RE/R)",
         [](const BandMeans& b, M& m) { return ((b.RE - b.R) - 0.2 * (b.RE - b.G)) * m.div(b.RE, b.R); }},
        {"GNDVI", "(N-G)/(N+G)", [](const BandMeans& b, M& m) { return m.div(b.N - b.G, b.N + b.G); }},
        {"NDRE", "(N-RE)/(N+RE)", [](const BandMeans& b, M& m) { return m.div(b.N - b.RE, b.N + b.RE); }},
        {"SAVI", "1.5*(N-R)/(N+R+0.5)", [](const BandMeans& b, M& m) { return 1.5 * m.div(b.N - b.R, b.N + b.R + 0.5); }},
        {"EVI", "2.5*(N-R)/(N+6R-7.5B+1)",
         [](const BandMeans& b, M& m) { return 2.5 * m.div(b.N - b.R, b.N + 6.0 * b.R - 7.5 * b.B + 1.0); }},
        {"OSAVI", "(N-R)/(N+R+0.16)", [](const BandMeans& b, M& m) { return m.div(b.N - b.R, b.N + b.R + 0.16); }},
        {"RECI", "N/RE-1", [](const BandMeans& b, M& m) { return m.div(b.N, b.RE) - 1.0; }},
        {"SR", "N/R", [](const BandMeans& b, M& m) { return m.div(b.N, b.R); }},
        {"GRVI", "(G-R)/(G+R)", [](const BandMeans& b, M& m) { return m.div(b.G - b.R, b.G + b.R); }},
        {"VARI", "(G-R)/(G+R-B)", [](const BandMeans& b, M& m) { return m.div(b.G - b.R, b.G + b.R - b.B); }},
        {"MSAVI", "(2N+1-sqrt((2N+1)^2-8(N-R)))/2",
         [](const BandMeans& b, M&) {
             const double a = 2.0 * b.N + 1.0;
             return 0.5 * (a - std::sqrt(std::max(0.0, a * a - 8.0 * (b.N - b.R))));
         }},
        {"EVI2", "2.5*(N-R)/(N+2.4R+1)",
         [](const BandMeans& b, M& m) { return 2.5 * m.div(b.N - b.R, b.N + 2.4 * b.R + 1.0); }},
        {"MTCI", "(N-RE)/(RE-R)", [](const BandMeans& b, M& m) { return m.div(b.N - b.RE, b.RE - b.R); }},
        {"GLI", "(2G-R-B)/(2G+R+B)",
         [](const BandMeans& b, M& m) { return m.div(2.0 * b.G - b.R - b.B, 2.0 * b.G + b.R + b.B); }},
        {"NDWI", "(G-N)/(G+N)", [](const BandMeans& b, M& m) { return m.div(b.G - b.N, b.G + b.N); }},
        {"TCARI", "3*((RE-R)-0.2*(RE-G)*(RE/R))",
         [](const BandMeans& b, M& m) { return 3.0 * ((b.RE - b.R) - 0.2 * (b.RE - b.G) * m.div(b.RE, b.R)); }},
    };
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

const std::vector<IndexDefinition>& builtin_registry()
{
    static const std::vector<IndexDefinition> registry = make_registry();
    return registry;
}

std::vector<std::string> registry_names(const std::vector<IndexDefinition>& registry)
{
    std::vector<std::string> names;
    for (const auto& d : registry) names.push_back(d.name);
    return names;
}

BandMeans band_means(const MultispectralImage& image, double margin_fraction)
{
    const auto inner = margin_fraction > 0.0 ? inner_rectangle(image, margin_fraction) : image;
    std::array<double, kBandCount> m{};
    for (int b = 0; b < kBandCount; ++b) {
        double s = 0.0;
        for (float v : inner.band(b)) s += v;
        m[b] = s / static_cast<double>(inner.plane_size());
    }
    return {m[0], m[1], m[2], m[3], m[4]};
}

std::vector<IndexVector> extract_indices(const PlotDataset& dataset, const std::vector<IndexDefinition>& registry,
                                         double margin_fraction)
{
    if (dataset.images.empty()) throw ValidationError("extract_indices: empty dataset");
    std::vector<IndexVector> out(dataset.images.size());
    parallel_for(out.size(), [&](std::size_t i) {
        const BandMeans bm = band_means(dataset.images[i], margin_fraction);
        IndexVector& v = out[i];
        v.plot_id = static_cast<long>(i);
        v.date_index = dataset.labels[i].date_index;
        v.health = dataset.labels[i].health;
        v.origin = dataset.labels[i].origin;
        for (const auto& def : registry) {
            GuardedMath m(def.denominator_guard);
            double value = def.evaluate(bm, m);
            if (!std::isfinite(value)) value = 0.0;
            if (m.tripped()) {
                value = 0.0;
                v.guarded.push_back(def.name);
            }
            v.values.push_back(value);
        }
    });
    return out;
}

std::string feature_table_csv(const std::vector<IndexVector>& vectors, const std::vector<std::string>& index_names)
{
    std::string s = "plot_id,date_index,health,origin";
    for (const auto& n : index_names) s += "," + n;
    s += "\n";
    for (const auto& v : vectors) {
        if (v.values.size() != index_names.size()) throw ValidationError("feature row width does not match header");
        s += std::to_string(v.plot_id) + "," + std::to_string(v.date_index) + "," + std::string(health_name(v.health)) +
             "," + std::string(origin_name(v.origin));
        for (double x : v.values) s += "," + fmt(x);
        s += "\n";
    }
    return s;
}

void write_feature_table(const std::vector<IndexVector>& vectors, const std::vector<IndexDefinition>& registry,
                         const std::filesystem::path& path)
{
    write_text_file(path, feature_table_csv(vectors, registry_names(registry)));
}

FeatureTable parse_feature_table(const std::string& csv, const std::string& source)
{
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(source + ": empty feature table");
    const auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "plot_id" || header[1] != "date_index" || header[2] != "health" ||
        header[3] != "origin")
        throw FormatError(source + ": unexpected feature table header");
    FeatureTable t;
    t.index_names.assign(header.begin() + 4, header.end());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw FormatError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                              " columns, got " + std::to_string(cells.size()));
        IndexVector v;
        try {
            v.plot_id = std::stol(cells[0]);
            v.date_index = std::stoi(cells[1]);
            v.health = health_from_name(cells[2]);
            v.origin = origin_from_name(cells[3]);
            for (std::size_t c = 4; c < cells.size(); ++c) {
                std::size_t used = 0;
                const double x = std::stod(cells[c], &used);
                if (used != cells[c].size() || !std::isfinite(x)) throw std::invalid_argument("bad number");
                v.values.push_back(x);
            }
        } catch (const std::exception&) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": malformed row");
        }
        t.rows.push_back(std::move(v));
    }
    return t;
}

FeatureTable read_feature_table(const std::filesystem::path& path)
{
    return parse_feature_table(read_text_file(path), path.string());
}

} // namespace ppgan
