#include "ppgan/raster.hpp"

#include "ppgan/error.hpp"
#include "ppgan/io_util.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <cstdio>

namespace ppgan {

static_assert(std::endian::native == std::endian::little, "container codec assumes a little-endian host");

namespace {

constexpr std::array<std::string_view, kBandCount> kBandNames = {"blue", "green", "red", "red_edge", "nir"};
constexpr std::uint32_t kDtypeFloat32 = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t offset)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    return v;
}

std::string entry_file_name(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05zu.msb", index);
    return buf;
}

} // namespace

BandSpecs default_band_specs()
{
    return {{{Band::blue, 450.0}, {Band::green, 560.0}, {Band::red, 650.0}, {Band::red_edge, 730.0}, {Band::nir, 840.0}}};
}

void validate_band_specs(const BandSpecs& specs)
{
    for (int i = 0; i < kBandCount; ++i) {
        if (specs[i].band != static_cast<Band>(i))
            throw ValidationError("band_specs[" + std::to_string(i) + "]: expected band " +
                                  std::string(kBandNames[i]));
        if (!(specs[i].center_wavelength_nm > 0.0) || !std::isfinite(specs[i].center_wavelength_nm))
            throw ValidationError("band_specs[" + std::to_string(i) + "].center_wavelength_nm must be positive");
        if (i > 0 && !(specs[i].center_wavelength_nm > specs[i - 1].center_wavelength_nm))
            throw ValidationError("band_specs: center wavelengths must be strictly increasing");
    }
}

std::string_view band_name(Band band) { return kBandNames[static_cast<int>(band)]; }

Band band_from_name(std::string_view name)
{
    for (int i = 0; i < kBandCount; ++i)
        if (kBandNames[i] == name) return static_cast<Band>(i);
    throw ValidationError("unknown band name '" + std::string(name) + "'");
}

MultispectralImage::MultispectralImage(int width, int height, std::vector<float> planar)
    : width_(width), height_(height), data_(std::move(planar))
{
    if (width < kMinSide || height < kMinSide)
        throw ValidationError("image: width and height must be >= " + std::to_string(kMinSide) + ", got " +
                              std::to_string(width) + "x" + std::to_string(height));
    if (data_.size() != static_cast<std::size_t>(width) * height * kBandCount)
        throw ValidationError("image: pixel buffer size does not match width*height*5");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const float v = data_[i];
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw ValidationError("image: pixel value at index " + std::to_string(i) + " outside [0,1]");
    }
}

MultispectralImage MultispectralImage::filled(int width, int height, float value)
{
    return {width, height, std::vector<float>(static_cast<std::size_t>(width) * height * kBandCount, value)};
}

MultispectralImage MultispectralImage::from_band_values(int width, int height,
                                                        const std::array<float, kBandCount>& values)
{
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    std::vector<float> data(plane * kBandCount);
    for (int b = 0; b < kBandCount; ++b)
        std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(b * plane), plane, values[b]);
    return {width, height, std::move(data)};
}

std::string_view health_name(Health h)
{
    switch (h) {
    case Health::healthy: return "healthy";
    case Health::mild: return "mild";
    case Health::unhealthy: return "unhealthy";
    }
    return "?";
}

Health health_from_name(std::string_view name)
{
    if (name == "healthy") return Health::healthy;
    if (name == "mild") return Health::mild;
    if (name == "unhealthy") return Health::unhealthy;
    throw ValidationError("unknown health label '" + std::string(name) + "'");
}

std::string_view origin_name(Origin o) { return o == Origin::real ? "real" : "synthetic"; }

Origin origin_from_name(std::string_view name)
{
    if (name == "real") return Origin::real;
    if (name == "synthetic") return Origin::synthetic;
    throw ValidationError("unknown origin '" + std::string(name) + "'");
}

void PlotDataset::validate() const
{
    if (images.size() != labels.size())
        throw ValidationError("labels: |images| (" + std::to_string(images.size()) + ") != |labels| (" +
                              std::to_string(labels.size()) + ")");
    validate_band_specs(band_specs);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int d = labels[i].date_index;
        if (d < 0 || d >= static_cast<int>(dates.size()))
            throw ValidationError("labels[" + std::to_string(i) + "].date_index " + std::to_string(d) +
                                  " outside declared dates (" + std::to_string(dates.size()) + ")");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = images[i];
        if (img.width() < kMinSide || img.height() < kMinSide)
            throw ValidationError("images[" + std::to_string(i) + "]: width/height must be >= 8");
        if (img.width() != images.front().width() || img.height() != images.front().height())
            throw ValidationError("images[" + std::to_string(i) + "]: size differs from images[0]");
    }
}

PlotDataset PlotDataset::subset(std::span<const std::size_t> indices) const
{
    PlotDataset out;
    out.band_specs = band_specs;
    out.dates = dates;
    out.seed = seed;
    out.images.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        out.images.push_back(images.at(i));
        out.labels.push_back(labels.at(i));
    }
    return out;
}

std::vector<std::size_t> PlotDataset::indices_where(Health health, int date) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i].health == health && (date < 0 || labels[i].date_index == date)) out.push_back(i);
    return out;
}

std::vector<std::size_t> PlotDataset::non_mild_indices() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i].health != Health::mild) out.push_back(i);
    return out;
}

std::vector<std::string> ordinal_dates(int count)
{
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) out.push_back("d" + std::to_string(i));
    return out;
}

MultispectralImage inner_rectangle(const MultispectralImage& image, double margin_fraction)
{
    if (!(margin_fraction >= 0.0 && margin_fraction <= 0.4))
        throw ValidationError("margin_fraction must be in [0, 0.4]");
    if (margin_fraction == 0.0) return image;
    const double keep = 1.0 - 2.0 * margin_fraction;
    const int w = static_cast<int>(std::floor(keep * image.width() + 1e-9));
    const int h = static_cast<int>(std::floor(keep * image.height() + 1e-9));
    if (w < MultispectralImage::kMinSide || h < MultispectralImage::kMinSide)
        throw ValidationError("margin " + std::to_string(margin_fraction) + " leaves " + std::to_string(w) + "x" +
                              std::to_string(h) + " pixels; at least 4x4 required");
    const int x0 = (image.width() - w) / 2;
    const int y0 = (image.height() - h) / 2;
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(w) * h * kBandCount);
    for (int b = 0; b < kBandCount; ++b)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) data.push_back(image.at(b, y0 + r, x0 + c));
    return {w, h, std::move(data)};
}

std::vector<unsigned char> encode_msb(const MultispectralImage& image)
{
    std::vector<unsigned char> out;
    out.reserve(kContainerHeaderBytes + image.pixels().size() * 4);
    out.insert(out.end(), kContainerVersion.begin(), kContainerVersion.end());
    put_u32(out, static_cast<std::uint32_t>(image.width()));
    put_u32(out, static_cast<std::uint32_t>(image.height()));
    put_u32(out, kBandCount);
    put_u32(out, kDtypeFloat32);
    const auto px = image.pixels();
    const auto* raw = reinterpret_cast<const unsigned char*>(px.data());
    out.insert(out.end(), raw, raw + px.size() * sizeof(float));
    return out;
}

MultispectralImage decode_msb(std::span<const unsigned char> bytes, const std::string& source)
{
    if (bytes.size() < kContainerHeaderBytes || std::memcmp(bytes.data(), kContainerVersion.data(), 4) != 0)
        throw FormatError(source + ": bad magic (expected MSB1)");
    const std::uint32_t width = get_u32(bytes, 4);
    const std::uint32_t height = get_u32(bytes, 8);
    const std::uint32_t bands = get_u32(bytes, 12);
    const std::uint32_t dtype = get_u32(bytes, 16);
    if (bands != kBandCount) throw FormatError(source + ": band_count " + std::to_string(bands) + " != 5");
    if (dtype != kDtypeFloat32) throw FormatError(source + ": unsupported dtype code " + std::to_string(dtype));
    if (width < MultispectralImage::kMinSide || height < MultispectralImage::kMinSide || width > 1u << 15 ||
        height > 1u << 15)
        throw FormatError(source + ": implausible dimensions");
    const std::size_t count = static_cast<std::size_t>(width) * height * kBandCount;
    if (bytes.size() != kContainerHeaderBytes + count * 4)
        throw FormatError(source + ": payload is " + std::to_string(bytes.size() - kContainerHeaderBytes) +
                          " bytes, expected " + std::to_string(count * 4));
    std::vector<float> data(count);
    std::memcpy(data.data(), bytes.data() + kContainerHeaderBytes, count * 4);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(data[i]) || data[i] < 0.0f || data[i] > 1.0f)
            throw FormatError(source + ": pixel at index " + std::to_string(i) + " outside [0,1]");
    }
    return {static_cast<int>(width), static_cast<int>(height), std::move(data)};
}

void write_dataset(const PlotDataset& dataset, const std::filesystem::path& dir)
{
    dataset.validate();
    ensure_directory(dir);

    nlohmann::json manifest;
    manifest["version"] = kContainerVersion;
    auto& specs = manifest["band_specs"] = nlohmann::json::array();
    for (const auto& s : dataset.band_specs)
        specs.push_back({{"name", band_name(s.band)}, {"center_wavelength_nm", s.center_wavelength_nm}});
    manifest["dates"] = dataset.dates;
    manifest["seed"] = dataset.seed;
    auto& entries = manifest["entries"] = nlohmann::json::array();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::string file = entry_file_name(i);
        write_file_bytes(dir / file, encode_msb(dataset.images[i]));
        const auto& l = dataset.labels[i];
        entries.push_back({{"file", file},
                           {"health", health_name(l.health)},
                           {"date_index", l.date_index},
                           {"origin", origin_name(l.origin)}});
    }
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

PlotDataset read_dataset(const std::filesystem::path& dir)
{
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw FormatError("missing manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt manifest " + manifest_path.string() + ": " + e.what());
    }

    PlotDataset ds;
    try {
        if (manifest.at("version").get<std::string>() != kContainerVersion)
            throw FormatError("unsupported dataset version '" + manifest.at("version").get<std::string>() + "'");
        const auto& specs = manifest.at("band_specs");
        if (!specs.is_array() || specs.size() != kBandCount) throw FormatError("manifest: band_specs must list 5 bands");
        for (int i = 0; i < kBandCount; ++i) {
            ds.band_specs[i].band = band_from_name(specs[i].at("name").get<std::string>());
            ds.band_specs[i].center_wavelength_nm = specs[i].at("center_wavelength_nm").get<double>();
        }
        ds.dates = manifest.at("dates").get<std::vector<std::string>>();
        ds.seed = manifest.at("seed").get<std::uint64_t>();
        for (const auto& e : manifest.at("entries")) {
            const std::string file = e.at("file").get<std::string>();
            const auto path = dir / file;
            if (!std::filesystem::exists(path)) throw FormatError("manifest references missing file " + file);
            ds.images.push_back(decode_msb(read_file_bytes(path), file));
            ds.labels.push_back({health_from_name(e.at("health").get<std::string>()), e.at("date_index").get<int>(),
                                 origin_from_name(e.at("origin").get<std::string>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt manifest " + manifest_path.string() + ": " + e.what());
    }
    ds.validate();
    return ds;
}

} // namespace ppgan
