#pragma once

#include "ppgan/spectral.hpp"

#include <string>
#include <vector>

namespace ppgan {

struct Series {
    std::string name;
    std::vector<double> values;
};

/// Grouped bars: one group per category, one bar per series.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series);

/// Polylines over shared x positions; series may be empty (axes only).
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<double>& x, const std::vector<Series>& series);

/// Mean band reflectance of real vs synthetic with +-1 std whiskers.
std::string svg_profile_overlay(const std::string& title, const SpectralProfile& real, const SpectralProfile& synth);

} // namespace ppgan
