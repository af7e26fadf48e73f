#pragma once

#include <string>
#include <vector>

#include "dsc/evaluation.hpp"

namespace dsc {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal line chart as a standalone SVG document. Non-finite points are skipped.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);

/// One curve per (scheme, M).
void plot_psnr_vs_snr(const std::vector<ExperimentRecord>& records, const std::string& path);
/// One curve per multiround result.
void plot_psnr_vs_round(const std::vector<MultiroundResult>& results, const std::string& path);

}  // namespace dsc
