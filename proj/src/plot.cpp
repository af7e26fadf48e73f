#include "dsc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 70, kRight = 200, kTop = 40, kBottom = 60;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw MissingFileError("cannot write " + path);
    out << text;
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, s.y[k]);
            y1 = std::max(y1, s.y[k]);
        }
    if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
        << "</text>\n";
    svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double xv = x0 + (x1 - x0) * t / 5.0, yv = y0 + (y1 - y0) * t / 5.0;
        svg << "<line x1=\"" << px(xv) << "\" y1=\"" << kTop << "\" x2=\"" << px(xv) << "\" y2=\"" << kTop + ph
            << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << num(xv)
            << "</text>\n";
        svg << "<line x1=\"" << kLeft << "\" y1=\"" << py(yv) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << py(yv)
            << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
            << "</text>\n";
    }
    svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 18 << "\" text-anchor=\"middle\">"
        << escape(x_label) << "</text>\n";
    svg << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        std::string pts;
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            if (!std::isfinite(series[s].x[k]) || !std::isfinite(series[s].y[k])) continue;
            pts += num(px(series[s].x[k])) + "," + num(py(series[s].y[k])) + " ";
            svg << "<circle cx=\"" << px(series[s].x[k]) << "\" cy=\"" << py(series[s].y[k]) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        }
        svg << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << color << "\" points=\"" << pts << "\"/>\n";
        const double ly = kTop + 14 + 18 * double(s);
        svg << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kLeft + pw + 36 << "\" y2=\""
            << ly - 4 << "\" stroke-width=\"2\" stroke=\"" << color << "\"/>\n";
        svg << "<text x=\"" << kLeft + pw + 42 << "\" y=\"" << ly << "\">" << escape(series[s].label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void plot_psnr_vs_snr(const std::vector<ExperimentRecord>& records, const std::string& path) {
    std::map<std::pair<Scheme, int>, std::map<double, double>> curves;
    for (const auto& r : records) curves[{r.scheme, r.order}][r.snr_db] = r.psnr_db;
    std::vector<Series> series;
    for (const auto& [key, pts] : curves) {
        Series s;
        s.label = to_string(key.first) + (key.second > 0 ? " M=" + std::to_string(key.second) : "");
        for (const auto& [x, y] : pts) {
            s.x.push_back(x);
            s.y.push_back(y);
        }
        series.push_back(std::move(s));
    }
    write_file(path, line_chart_svg(series, "PSNR vs SNR", "SNR (dB)", "PSNR (dB)"));
}

void plot_psnr_vs_round(const std::vector<MultiroundResult>& results, const std::string& path) {
    std::vector<Series> series;
    for (const auto& r : results) {
        Series s;
        s.label = to_string(r.scheme) + (r.order > 0 ? " M=" + std::to_string(r.order) : "");
        for (std::size_t k = 0; k < r.psnr_db.size(); ++k) {
            s.x.push_back(double(k + 1));
            s.y.push_back(r.psnr_db[k]);
        }
        series.push_back(std::move(s));
    }
    write_file(path, line_chart_svg(series, "PSNR vs round", "round", "PSNR (dB)"));
}

}  // namespace dsc
