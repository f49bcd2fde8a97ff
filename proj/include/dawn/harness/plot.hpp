#pragma once

#include "dawn/harness/suite.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dawn::harness {

/// One line plot: a metric over steps, one curve with a CI band per variant.
struct FigureSpec {
  std::string name;
  std::string title;
  std::string metric;
  std::string y_label;
  /// Restrict to these variants; empty means all found in the summary.
  std::vector<std::string> variants;
};

/// Named figures. Any metric name is also
/// accepted and yields a plain figure of that metric.
std::vector<std::string> figure_names();
FigureSpec figure_spec(const std::string& name);

/// Standalone SVG. Each variant is drawn as polylines with classes "mean",
/// "ci-upper" and "ci-lower" plus a filled "ci-band" polygon. A figure whose metric
/// has no rows renders an annotated empty frame.
std::string render_svg(const std::vector<SummaryRow>& rows, const FigureSpec& spec);

/// Reads summary.csv and writes <out> (default: <fig>.svg beside the summary).
std::filesystem::path plot_summary(const std::filesystem::path& summary, const std::string& figure,
                                   std::filesystem::path out = {});

/// Overlaid Q histograms (base versus combined actions) from an anatomy JSON report.
std::string render_anatomy_svg(const nlohmann::json& anatomy);
std::filesystem::path plot_anatomy(const std::filesystem::path& anatomy_json, std::filesystem::path out = {});

}  // namespace dawn::harness
