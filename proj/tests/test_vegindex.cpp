#include "ppgan/error.hpp"
#include "ppgan/field_sim.hpp"
#include "ppgan/rng.hpp"
#include "ppgan/vegindex.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

using namespace ppgan;

namespace {

std::size_t index_of(const std::string& name)
{
    const auto names = registry_names(builtin_registry());
    return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

PlotDataset constant_images(std::vector<std::array<float, 5>> bands)
{
    PlotDataset ds;
    ds.dates = ordinal_dates(1);
    for (const auto& b : bands) {
        ds.images.push_back(MultispectralImage::from_band_values(16, 16, b));
        ds.labels.push_back({});
    }
    return ds;
}

int count_char(const std::string& s, char c) { return static_cast<int>(std::count(s.begin(), s.end(), c)); }

} // namespace

TEST_CASE("registry is populated with unique names")
{
    const auto& reg = builtin_registry();
    CHECK(reg.size() >= 12);
    std::set<std::string> names;
    for (const auto& d : reg) {
        CHECK_FALSE(d.formula.empty());
        CHECK(names.insert(d.name).second);
    }
    for (const char* n : {"NDVI", "GCI", "MCARI", "GNDVI", "NDRE", "SAVI", "EVI"}) CHECK(names.count(n) == 1);
}

TEST_CASE("ndvi examples and guard")
{
    const auto ds = constant_images({{0.05f, 0.1f, 0.2f, 0.4f, 0.8f}, {0.1f, 0.1f, 0.3f, 0.3f, 0.3f}, {0, 0, 0, 0, 0}});
    const auto rows = extract_indices(ds, builtin_registry());
    const auto ndvi = index_of("NDVI");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].values[ndvi] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(rows[1].values[ndvi] == 0.0);
    CHECK(rows[2].values[ndvi] == 0.0);
    CHECK(std::count(rows[2].guarded.begin(), rows[2].guarded.end(), "NDVI") == 1);
    CHECK(std::count(rows[0].guarded.begin(), rows[0].guarded.end(), "NDVI") == 0);
    for (const auto& r : rows)
        for (double v : r.values) CHECK(std::isfinite(v));
}

TEST_CASE("band means use the inner rectangle")
{
    std::vector<float> px(16 * 16 * 5, 0.9f);
    for (int b = 0; b < 5; ++b)
        for (int r = 2; r < 14; ++r)
            for (int c = 2; c < 14; ++c) px[b * 256 + r * 16 + c] = 0.1f * (b + 1);
    const auto m = band_means(MultispectralImage(16, 16, px), 0.125);
    CHECK(m.B == doctest::Approx(0.1));
    CHECK(m.N == doctest::Approx(0.5));
    CHECK(band_means(MultispectralImage(16, 16, px), 0.0).B > 0.1);
}

TEST_CASE("normalized differences stay in [-1, 1]")
{
    auto cfg = default_sim_config(3, 3, 3, 8);
    cfg.image_size = 16;
    auto ds = simulate_dataset(cfg);
    Pcg64 rng(1);
    for (int i = 0; i < 40; ++i) {
        std::array<float, 5> b{};
        for (auto& v : b) v = static_cast<float>(rng.uniform());
        if (i % 7 == 0) b[rng.below(5)] = 0.0f;
        ds.images.push_back(MultispectralImage::from_band_values(16, 16, b));
        ds.labels.push_back({});
    }
    for (const auto& r : extract_indices(ds, builtin_registry())) {
        for (const char* n : {"NDVI", "GNDVI", "NDRE"}) {
            CHECK(r.values[index_of(n)] >= -1.0);
            CHECK(r.values[index_of(n)] <= 1.0);
        }
        for (double v : r.values) CHECK(std::isfinite(v));
    }
}

TEST_CASE("extraction is permutation equivariant")
{
    auto cfg = default_sim_config(2, 1, 2, 4);
    cfg.image_size = 16;
    const auto ds = simulate_dataset(cfg);
    std::vector<std::size_t> perm(ds.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 7 + 3) % perm.size();
    const auto a = extract_indices(ds, builtin_registry());
    const auto b = extract_indices(ds.subset(perm), builtin_registry());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(b[i].values == a[perm[i]].values);
        CHECK(b[i].health == a[perm[i]].health);
        CHECK(b[i].date_index == a[perm[i]].date_index);
    }
}

TEST_CASE("feature table csv")
{
    std::vector<std::string> names;
    for (int i = 0; i < 12; ++i) names.push_back("I" + std::to_string(i));
    std::vector<IndexVector> rows(3);
    for (int r = 0; r < 3; ++r) {
        rows[r].plot_id = r;
        rows[r].date_index = r;
        rows[r].health = r == 1 ? Health::unhealthy : Health::healthy;
        for (int i = 0; i < 12; ++i) rows[r].values.push_back(1.0 / (3.0 + r + i));
    }
    const auto csv = feature_table_csv(rows, names);
    CHECK(count_char(csv, '\n') == 4);
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) CHECK(count_char(line, ',') == 15);
    CHECK(csv.rfind("plot_id,date_index,health,origin,I0,", 0) == 0);

    const auto header_only = feature_table_csv({}, names);
    CHECK(count_char(header_only, '\n') == 1);
    CHECK(parse_feature_table(header_only, "x").rows.empty());

    const auto back = parse_feature_table(csv, "x");
    CHECK(back.index_names == names);
    REQUIRE(back.rows.size() == 3);
    for (int r = 0; r < 3; ++r) {
        CHECK(back.rows[r].health == rows[r].health);
        CHECK(back.rows[r].date_index == rows[r].date_index);
        for (int i = 0; i < 12; ++i) CHECK(std::abs(back.rows[r].values[i] - rows[r].values[i]) <= 1e-8);
    }
    CHECK_THROWS_AS(parse_feature_table("plot_id,date_index\n1,2\n", "bad.csv"), FormatError);
    CHECK_THROWS_AS(parse_feature_table(csv + "9,0,healthy,real,1\n", "short.csv"), FormatError);
}

TEST_CASE("feature table file round trip")
{
    auto cfg = default_sim_config(1, 1, 1, 2);
    cfg.image_size = 16;
    const auto rows = extract_indices(simulate_dataset(cfg), builtin_registry());
    const auto path = std::filesystem::temp_directory_path() / "ppgan_features.csv";
    write_feature_table(rows, builtin_registry(), path);
    const auto back = read_feature_table(path);
    CHECK(back.index_names == registry_names(builtin_registry()));
    REQUIRE(back.rows.size() == rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t i = 0; i < rows[r].values.size(); ++i)
            CHECK(std::abs(back.rows[r].values[i] - rows[r].values[i]) <= 1e-8 * std::max(1.0, std::abs(rows[r].values[i])));
    std::filesystem::remove(path);
    CHECK_THROWS(write_feature_table(rows, builtin_registry(), "/nonexistent_dir/x/features.csv"));
}
