#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ppgan {

inline constexpr int kBandCount = 5;

enum class Band { blue = 0, green = 1, red = 2, red_edge = 3, nir = 4 };

struct BandSpec {
    Band band = Band::blue;
    double center_wavelength_nm = 0.0;

    bool operator==(const BandSpec&) const = default;
};

using BandSpecs = std::array<BandSpec, kBandCount>;

/// Blue 450, green 560, red 650, red edge 730, NIR 840 (nm).
BandSpecs default_band_specs();
void validate_band_specs(const BandSpecs& specs);

std::string_view band_name(Band band);
Band band_from_name(std::string_view name);

/// H x W x 5 reflectance raster stored band-planar (band-major, then
/// row-major), the same layout as the on-disk container.
class MultispectralImage {
public:
    static constexpr int kMinSide = 4;

    MultispectralImage() = default;
    /// Validates dimensions and that every value is finite and in [0, 1].
    MultispectralImage(int width, int height, std::vector<float> planar);

    static MultispectralImage filled(int width, int height, float value);
    static MultispectralImage from_band_values(int width, int height,
                                               const std::array<float, kBandCount>& values);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

    float at(int band, int row, int col) const
    {
        return data_[static_cast<std::size_t>(band) * plane_size() +
                     static_cast<std::size_t>(row) * width_ + col];
    }
    std::span<const float> band(int b) const
    {
        return {data_.data() + static_cast<std::size_t>(b) * plane_size(), plane_size()};
    }
    std::span<const float> pixels() const { return data_; }

    bool operator==(const MultispectralImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

enum class Health { healthy = 0, mild = 1, unhealthy = 2 };
enum class Origin { real = 0, synthetic = 1 };

std::string_view health_name(Health h);
Health health_from_name(std::string_view name);
std::string_view origin_name(Origin o);
Origin origin_from_name(std::string_view name);

struct PlotLabel {
    Health health = Health::healthy;
    int date_index = 0;
    Origin origin = Origin::real;

    bool operator==(const PlotLabel&) const = default;
};

struct PlotDataset {
    static constexpr int kMinSide = 8;

    std::vector<MultispectralImage> images;
    std::vector<PlotLabel> labels;
    BandSpecs band_specs = default_band_specs();
    std::vector<std::string> dates;
    std::uint64_t seed = 0;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    /// Throws ValidationError naming the first failing field.
    void validate() const;

    PlotDataset subset(std::span<const std::size_t> indices) const;
    /// Indices whose label matches; date < 0 matches every date.
    std::vector<std::size_t> indices_where(Health health, int date = -1) const;
    std::vector<std::size_t> non_mild_indices() const;

    bool operator==(const PlotDataset&) const = default;
};

/// Ordinal date identifiers "d0".."d{n-1}".
std::vector<std::string> ordinal_dates(int count);

/// Centered crop keeping floor((1 - 2 * margin) * side) pixels per side.
MultispectralImage inner_rectangle(const MultispectralImage& image, double margin_fraction);

inline constexpr std::string_view kContainerVersion = "MSB1";
inline constexpr std::size_t kContainerHeaderBytes = 20;

void write_dataset(const PlotDataset& dataset, const std::filesystem::path& dir);
PlotDataset read_dataset(const std::filesystem::path& dir);

/// Single-image container codec (magic "MSB1", LE u32 width/height/bands/dtype, planar float32).
std::vector<unsigned char> encode_msb(const MultispectralImage& image);
MultispectralImage decode_msb(std::span<const unsigned char> bytes, const std::string& source);

} // namespace ppgan
