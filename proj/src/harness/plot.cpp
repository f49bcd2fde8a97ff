#include "dawn/harness/plot.hpp"

#include "dawn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace dawn::harness {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 180.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) >= 1e5 || std::abs(v) < 1e-2)) {
    std::snprintf(buf, sizeof buf, "%.1e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  }
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kHeight - kTop - kBottom);
  }
};

void header(std::ostringstream& svg, const std::string& title) {
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text class=\"title\" x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
}

void axes(std::ostringstream& svg, const Frame& f, const std::string& x_label, const std::string& y_label) {
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  svg << "<g class=\"axes\" stroke=\"#333\" fill=\"none\">\n"
      << "<line x1=\"" << num(left) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(right) << "\" y2=\""
      << num(bottom) << "\"/>\n"
      << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(bottom) << "\"/>\n</g>\n";
  svg << "<g class=\"ticks\" fill=\"#333\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    svg << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(bottom + 16) << "\" text-anchor=\"middle\">" << label(x)
        << "</text>\n"
        << "<text x=\"" << num(left - 6) << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">" << label(y)
        << "</text>\n"
        << "<line x1=\"" << num(left) << "\" y1=\"" << num(f.py(y)) << "\" x2=\"" << num(right) << "\" y2=\""
        << num(f.py(y)) << "\" stroke=\"#ddd\"/>\n";
  }
  svg << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(kHeight - 12)
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
      << "<text transform=\"translate(16," << num((top + bottom) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n</g>\n";
}

std::string points(const std::vector<std::pair<double, double>>& xy) {
  std::string out;
  for (const auto& [x, y] : xy) {
    if (!out.empty()) out += ' ';
    out += num(x) + ',' + num(y);
  }
  return out;
}

}  // namespace

std::vector<std::string> figure_names() {
  return {"fig2", "fig3", "fig4", "fig5", "fig6", "fig6-value", "fig7", "fig8", "fig10", "fig11", "fig-actor-critic"};
}

FigureSpec figure_spec(const std::string& name) {
  static const std::map<std::string, FigureSpec> named = {
      {"fig2", {"fig2", "Grounding error vs warmup quantity", "grounding_error", "|Q - G| on anchor pairs", {}}},
      {"fig3", {"fig3", "Entropy temperature during explicit warmup", "explicit_alpha", "alpha", {}}},
      {"fig4", {"fig4", "Entropy term during explicit warmup", "explicit_entropy_term", "mean |alpha log pi|", {}}},
      {"fig5", {"fig5", "Success by critic normalization", "success_rate", "success rate", {}}},
      {"fig6", {"fig6", "Critic sensitivity to the residual", "sensitivity", "|grad_res Q|", {}}},
      {"fig6-value", {"fig6-value", "Value contribution of the residual", "value_difference", "|Q(full) - Q(base)|", {}}},
      {"fig7", {"fig7", "Robustness to residual scale", "success_rate", "success rate", {}}},
      {"fig8", {"fig8", "Scalar vs distributional critics", "success_rate", "success rate", {}}},
      {"fig10", {"fig10", "Component ablation", "success_rate", "success rate", {}}},
      {"fig11", {"fig11", "Warmup collection strategies", "success_rate", "success rate", {}}},
      {"fig-actor-critic", {"fig-actor-critic", "Actor vs critic normalization", "success_rate", "success rate", {}}},
  };
  if (auto it = named.find(name); it != named.end()) return it->second;
  if (name.empty() || name.find_first_of("/\\ ") != std::string::npos) {
    throw ConfigError("bad figure name '" + name + "'");
  }
  return {name, name, name, name, {}};
}

std::string render_svg(const std::vector<SummaryRow>& rows, const FigureSpec& spec) {
  std::map<std::string, std::vector<const SummaryRow*>> series;
  for (const auto& r : rows) {
    if (r.metric != spec.metric || !std::isfinite(r.ci.mean)) continue;
    if (!spec.variants.empty() &&
        std::find(spec.variants.begin(), spec.variants.end(), r.variant) == spec.variants.end()) {
      continue;
    }
    series[r.variant].push_back(&r);
  }
  std::ostringstream svg;
  header(svg, spec.title);
  if (series.empty()) {
    axes(svg, Frame{0, 1, 0, 1}, "env steps", spec.y_label);
    svg << "<text class=\"annotation\" x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\""
        << num(kHeight / 2) << "\" text-anchor=\"middle\" fill=\"#a00\">no data for metric '"
        << escape(spec.metric) << "'</text>\n</svg>\n";
    return svg.str();
  }
  Frame f{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end(), [](const SummaryRow* a, const SummaryRow* b) { return a->step < b->step; });
    for (const auto* r : pts) {
      f.x0 = std::min(f.x0, static_cast<double>(r->step));
      f.x1 = std::max(f.x1, static_cast<double>(r->step));
      f.y0 = std::min(f.y0, r->ci.lower());
      f.y1 = std::max(f.y1, r->ci.upper());
    }
  }
  const double pad = f.y1 > f.y0 ? 0.05 * (f.y1 - f.y0) : 0.5;
  f.y0 -= pad;
  f.y1 += pad;
  axes(svg, f, "env steps", spec.y_label);

  int index = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kPalette[index % std::size(kPalette)];
    std::vector<std::pair<double, double>> mean, upper, lower;
    for (const auto* r : pts) {
      const double x = f.px(static_cast<double>(r->step));
      mean.emplace_back(x, f.py(r->ci.mean));
      upper.emplace_back(x, f.py(r->ci.upper()));
      lower.emplace_back(x, f.py(r->ci.lower()));
    }
    std::vector<std::pair<double, double>> band = upper;
    band.insert(band.end(), lower.rbegin(), lower.rend());
    const std::string v = escape(name);
    svg << "<g class=\"series\" data-variant=\"" << v << "\">\n"
        << "<polygon class=\"ci-band\" points=\"" << points(band) << "\" fill=\"" << color
        << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n"
        << "<polyline class=\"ci-upper\" points=\"" << points(upper) << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-opacity=\"0.35\" stroke-width=\"0.8\"/>\n"
        << "<polyline class=\"ci-lower\" points=\"" << points(lower) << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-opacity=\"0.35\" stroke-width=\"0.8\"/>\n"
        << "<polyline class=\"mean\" points=\"" << points(mean) << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 10 + 18.0 * index;
    svg << "<line x1=\"" << num(kWidth - kRight + 12) << "\" y1=\"" << num(ly) << "\" x2=\""
        << num(kWidth - kRight + 32) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n<text x=\"" << num(kWidth - kRight + 38) << "\" y=\"" << num(ly + 4) << "\">" << v
        << " (n=" << pts.front()->ci.n << ")</text>\n</g>\n";
    ++index;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::filesystem::path plot_summary(const std::filesystem::path& summary, const std::string& figure,
                                   std::filesystem::path out) {
  const auto rows = read_summary_csv(summary);
  const FigureSpec spec = figure_spec(figure);
  if (out.empty()) out = summary.parent_path() / (spec.name + ".svg");
  std::ofstream file(out, std::ios::binary);
  if (!file) throw ConfigError("cannot write " + out.string());
  file << render_svg(rows, spec);
  return out;
}

std::string render_anatomy_svg(const nlohmann::json& anatomy) {
  for (const char* key : {"hist_base", "hist_full", "delta_mu"}) {
    if (!anatomy.contains(key)) throw ConfigError(std::string("anatomy report lacks '") + key + "'");
  }
  const auto edges = anatomy.at("hist_base").at("edges").get<std::vector<double>>();
  const auto base = anatomy.at("hist_base").at("counts").get<std::vector<int>>();
  const auto full = anatomy.at("hist_full").at("counts").get<std::vector<int>>();
  if (edges.size() != base.size() + 1 || base.size() != full.size()) {
    throw ConfigError("anatomy histograms have inconsistent sizes");
  }
  std::ostringstream svg;
  char title[128];
  std::snprintf(title, sizeof title, "Q anatomy at step %lld (delta mu = %.4g)",
                static_cast<long long>(anatomy.value("step", 0LL)), anatomy.at("delta_mu").get<double>());
  header(svg, title);
  int peak = 1;
  for (std::size_t i = 0; i < base.size(); ++i) peak = std::max({peak, base[i], full[i]});
  const Frame f{edges.front(), edges.back(), 0.0, static_cast<double>(peak)};
  axes(svg, f, "Q value", "count");
  auto bars = [&](const std::vector<int>& counts, const char* cls, const char* color) {
    svg << "<g class=\"" << cls << "\" fill=\"" << color << "\" fill-opacity=\"0.45\">\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double x = f.px(edges[i]);
      const double w = f.px(edges[i + 1]) - x;
      const double y = f.py(counts[i]);
      svg << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\""
          << num(f.py(0.0) - y) << "\"/>\n";
    }
    svg << "</g>\n";
  };
  bars(base, "q-base", kPalette[0]);
  bars(full, "q-full", kPalette[1]);
  svg << "<text x=\"" << num(kWidth - kRight + 12) << "\" y=\"" << num(kTop + 14) << "\" fill=\"" << kPalette[0]
      << "\">Q(s, a_base)</text>\n<text x=\"" << num(kWidth - kRight + 12) << "\" y=\"" << num(kTop + 32)
      << "\" fill=\"" << kPalette[1] << "\">Q(s, a_full)</text>\n</svg>\n";
  return svg.str();
}

std::filesystem::path plot_anatomy(const std::filesystem::path& anatomy_json, std::filesystem::path out) {
  std::ifstream in(anatomy_json);
  if (!in) throw ConfigError("cannot read " + anatomy_json.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(anatomy_json.string() + ": " + e.what());
  }
  if (out.empty()) out = anatomy_json.parent_path() / "anatomy.svg";
  std::ofstream file(out, std::ios::binary);
  if (!file) throw ConfigError("cannot write " + out.string());
  file << render_anatomy_svg(j);
  return out;
}

}  // namespace dawn::harness
