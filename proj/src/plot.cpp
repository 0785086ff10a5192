#include "ppgan/plot.hpp"

#include "ppgan/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ppgan {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 160, kTop = 40, kBottom = 56;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

const char* color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof kPalette[0])]; }

struct Frame {
    double lo, hi;
    double plot_w() const { return kWidth - kLeft - kRight; }
    double plot_h() const { return kHeight - kTop - kBottom; }
    double y(double v) const { return kTop + plot_h() * (1.0 - (v - lo) / (hi - lo)); }
};

Frame value_range(std::vector<double> values, bool include_zero)
{
    values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }), values.end());
    double lo = values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
    double hi = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
    if (include_zero) {
        lo = std::min(lo, 0.0);
        hi = std::max(hi, 0.0);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    return {include_zero && lo == 0.0 ? 0.0 : lo - pad, hi + pad};
}

std::string header(const std::string& title)
{
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
                    "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + escape(title) +
         "</text>\n";
    return s;
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label)
{
    const double x0 = kLeft, x1 = kLeft + f.plot_w(), y0 = kTop, y1 = kTop + f.plot_h();
    std::string s = "<g stroke=\"black\" stroke-width=\"1\">\n";
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y1) + "\"/>\n";
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) + "\"/>\n";
    s += "</g>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = f.lo + (f.hi - f.lo) * t / 4.0;
        const double y = f.y(v);
        s += "<line x1=\"" + num(x0 - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\" font-size=\"11\">" + label(v) +
             "</text>\n";
    }
    if (!x_label.empty())
        s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 12) + "\" text-anchor=\"middle\" font-size=\"12\">" +
             escape(x_label) + "</text>\n";
    if (!y_label.empty())
        s += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " +
             num((y0 + y1) / 2) + ")\">" + escape(y_label) + "</text>\n";
    return s;
}

std::string legend(const std::vector<std::string>& names)
{
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double y = kTop + 10 + 18.0 * static_cast<double>(i);
        const double x = kWidth - kRight + 16;
        s += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"12\" fill=\"" + color(i) + "\"/>\n";
        s += "<text x=\"" + num(x + 18) + "\" y=\"" + num(y + 1) + "\" font-size=\"12\">" + escape(names[i]) + "</text>\n";
    }
    return s;
}

} // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series)
{
    std::vector<double> all;
    for (const auto& s : series) all.insert(all.end(), s.values.begin(), s.values.end());
    const Frame f = value_range(all, true);
    std::string svg = header(title) + axes(f, "", "");
    const double group_w = f.plot_w() / static_cast<double>(std::max<std::size_t>(1, categories.size()));
    const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(1, series.size()));
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const double gx = kLeft + group_w * static_cast<double>(c);
        for (std::size_t s = 0; s < series.size(); ++s) {
            if (c >= series[s].values.size() || !std::isfinite(series[s].values[c])) continue;
            const double v = series[s].values[c];
            const double top = std::min(f.y(v), f.y(0.0)), bottom = std::max(f.y(v), f.y(0.0));
            svg += "<rect x=\"" + num(gx + 0.1 * group_w + bar_w * static_cast<double>(s)) + "\" y=\"" + num(top) +
                   "\" width=\"" + num(bar_w) + "\" height=\"" + num(bottom - top) + "\" fill=\"" + color(s) + "\"/>\n";
        }
        svg += "<text x=\"" + num(gx + group_w / 2) + "\" y=\"" + num(kTop + f.plot_h() + 16) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + escape(categories[c]) + "</text>\n";
    }
    std::vector<std::string> names;
    for (const auto& s : series) names.push_back(s.name);
    return svg + legend(names) + "</svg>\n";
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<double>& x, const std::vector<Series>& series)
{
    std::vector<double> all;
    for (const auto& s : series) all.insert(all.end(), s.values.begin(), s.values.end());
    const Frame f = value_range(all, false);
    std::string svg = header(title) + axes(f, x_label, y_label);
    const double xmin = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
    double xmax = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    auto px = [&](double v) { return kLeft + f.plot_w() * (v - xmin) / (xmax - xmin); };
    for (double v : x)
        svg += "<text x=\"" + num(px(v)) + "\" y=\"" + num(kTop + f.plot_h() + 16) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + label(v) + "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        std::string pts;
        for (std::size_t i = 0; i < std::min(x.size(), series[s].values.size()); ++i) {
            if (!std::isfinite(series[s].values[i])) continue;
            if (!pts.empty()) pts += " ";
            pts += num(px(x[i])) + "," + num(f.y(series[s].values[i]));
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color(s)) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    }
    std::vector<std::string> names;
    for (const auto& s : series) names.push_back(s.name);
    return svg + legend(names) + "</svg>\n";
}

std::string svg_profile_overlay(const std::string& title, const SpectralProfile& real, const SpectralProfile& synth)
{
    std::vector<double> all;
    for (int b = 0; b < kBandCount; ++b)
        for (const auto* p : {&real, &synth}) {
            all.push_back(p->mean[b] - p->std[b]);
            all.push_back(p->mean[b] + p->std[b]);
        }
    const Frame f = value_range(all, true);
    std::string svg = header(title) + axes(f, "band", "reflectance");
    auto px = [&](int b) { return kLeft + f.plot_w() * (b + 0.5) / kBandCount; };
    for (int b = 0; b < kBandCount; ++b)
        svg += "<text x=\"" + num(px(b)) + "\" y=\"" + num(kTop + f.plot_h() + 16) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + std::string(band_name(static_cast<Band>(b))) + "</text>\n";
    std::size_t idx = 0;
    for (const auto* p : {&real, &synth}) {
        std::string pts;
        for (int b = 0; b < kBandCount; ++b) {
            if (b) pts += " ";
            pts += num(px(b)) + "," + num(f.y(p->mean[b]));
            svg += "<line x1=\"" + num(px(b)) + "\" y1=\"" + num(f.y(p->mean[b] - p->std[b])) + "\" x2=\"" + num(px(b)) +
                   "\" y2=\"" + num(f.y(p->mean[b] + p->std[b])) + "\" stroke=\"" + color(idx) + "\" stroke-opacity=\"0.5\"/>\n";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color(idx)) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        ++idx;
    }
    return svg + legend({"real", "synthetic"}) + "</svg>\n";
}

} // namespace ppgan
