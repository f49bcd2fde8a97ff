#include "dawn/harness/suite.hpp"

#include "dawn/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace dawn::harness {

using nlohmann::json;

void ExperimentSuite::validate() const {
  if (name.empty()) throw ConfigError("suite needs a name");
  if (variants.empty()) throw ConfigError("suite '" + name + "' has no variants");
  if (seeds.empty()) throw ConfigError("suite '" + name + "' has no seeds");
  std::set<std::string> seen;
  for (const auto& v : variants) {
    if (v.name.empty()) throw ConfigError("suite '" + name + "' has a variant without a name");
    if (v.name.find_first_of("/\\,\n") != std::string::npos) {
      throw ConfigError("variant name '" + v.name + "' contains a path or CSV separator");
    }
    if (!seen.insert(v.name).second) throw ConfigError("duplicate variant name '" + v.name + "'");
    v.config.validate();
  }
}

void to_json(json& j, const ExperimentSuite& s) {
  json variants = json::array();
  for (const auto& v : s.variants) variants.push_back({{"name", v.name}, {"config", v.config}});
  j = {{"name", s.name}, {"seeds", s.seeds}, {"variants", variants}, {"out_dir", s.out_dir.string()}};
}

void from_json(const json& j, ExperimentSuite& s) {
  for (const auto& [key, value] : j.items()) {
    if (key != "name" && key != "seeds" && key != "variants" && key != "out_dir" && key != "base") {
      throw ConfigError("unknown suite key '" + key + "'");
    }
  }
  s.name = j.value("name", s.name);
  if (j.contains("seeds")) {
    const auto& seeds = j.at("seeds");
    s.seeds = seeds.is_number_integer() ? parse_seeds(std::to_string(seeds.get<int>()))
                                        : seeds.get<std::vector<std::uint64_t>>();
  }
  if (j.contains("out_dir")) s.out_dir = j.at("out_dir").get<std::string>();
  // Every variant starts from `base` (if given) layered over whatever the caller seeded.
  RunConfig base = s.variants.empty() ? RunConfig{} : s.variants.front().config;
  if (j.contains("base")) trainer::from_json(j.at("base"), base);
  if (j.contains("variants")) {
    s.variants.clear();
    for (const auto& v : j.at("variants")) {
      Variant out{v.at("name").get<std::string>(), base};
      if (v.contains("config")) trainer::from_json(v.at("config"), out.config);
      out.config.variant = out.name;
      s.variants.push_back(std::move(out));
    }
  }
}

namespace {

RunConfig dawn_base(const std::string& profile) {
  RunConfig c = trainer::profile_defaults(profile);
  c.warmup.kind = buffer::WarmupKind::BaseOnly;
  c.warmup.budget = 20000;
  c.critic_norm = diff::HiddenNorm::LayerNorm;
  c.lambda = trainer::default_lambda(c.env_id);
  return c;
}

Variant variant(const std::string& name, RunConfig c) {
  c.variant = name;
  return {name, std::move(c)};
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"warmup-quantity",   "warmup-strategy", "explicit-warmup",    "normalization",       "lambda-robustness",
          "objectives",        "dawn-vs-baselines", "component-ablation", "actor-vs-critic-norm"};
}

ExperimentSuite make_suite(const std::string& name, const std::string& profile) {
  ExperimentSuite s;
  s.name = name;
  const RunConfig base = dawn_base(profile);
  if (name == "warmup-quantity") {
    // Plain critic so the anchor effect is isolated from normalization.
    for (std::int64_t m : {0, 5000, 10000, 20000, 40000}) {
      RunConfig c = base;
      c.critic_norm = diff::HiddenNorm::None;
      c.warmup.budget = m;
      s.variants.push_back(variant("M=" + std::to_string(m / 1000) + "K", c));
    }
  } else if (name == "warmup-strategy") {
    for (auto kind : {buffer::WarmupKind::BaseOnly, buffer::WarmupKind::FullAction, buffer::WarmupKind::GaussianNoise,
                      buffer::WarmupKind::EpsilonGreedy, buffer::WarmupKind::TcNoise,
                      buffer::WarmupKind::TcNoiseAnchor}) {
      RunConfig c = base;
      c.warmup.kind = kind;
      s.variants.push_back(variant(buffer::to_string(kind), c));
    }
  } else if (name == "explicit-warmup") {
    for (auto e : {trainer::ExplicitWarmup::None, trainer::ExplicitWarmup::SoftAuto, trainer::ExplicitWarmup::SoftFixed,
                   trainer::ExplicitWarmup::Hard}) {
      RunConfig c = base;
      c.explicit_warmup = e;
      s.variants.push_back(variant(e == trainer::ExplicitWarmup::None ? "implicit" : trainer::to_string(e), c));
    }
  } else if (name == "normalization") {
    for (auto n : {diff::HiddenNorm::None, diff::HiddenNorm::LayerNorm, diff::HiddenNorm::Hyperspherical}) {
      RunConfig c = base;
      c.critic_norm = n;
      s.variants.push_back(variant(diff::to_string(n), c));
    }
  } else if (name == "lambda-robustness") {
    for (double lambda : {0.05, 0.1, 0.2, 0.4}) {
      RunConfig c = base;
      c.lambda = lambda;
      std::ostringstream label;
      label << "lambda=" << lambda;
      s.variants.push_back(variant(label.str(), c));
    }
  } else if (name == "objectives") {
    for (auto h : {agent::HeadKind::Scalar, agent::HeadKind::C51, agent::HeadKind::Quantile, agent::HeadKind::Tqc}) {
      RunConfig c = base;
      c.critic_head = h;
      s.variants.push_back(variant(agent::to_string(h), c));
    }
  } else if (name == "dawn-vs-baselines") {
    s.variants.push_back(variant("dawn", base));
    RunConfig vanilla = base;
    vanilla.warmup.budget = 0;
    vanilla.critic_norm = diff::HiddenNorm::None;
    s.variants.push_back(variant("residual-sac", vanilla));
    RunConfig progressive = vanilla;
    progressive.progressive_h = trainer::default_progressive_h(base.env_id);
    s.variants.push_back(variant("progressive", progressive));
  } else if (name == "component-ablation") {
    s.variants.push_back(variant("dawn", base));
    RunConfig no_warmup = base;
    no_warmup.warmup.budget = 0;
    s.variants.push_back(variant("no-warmup", no_warmup));
    RunConfig no_norm = base;
    no_norm.critic_norm = diff::HiddenNorm::None;
    s.variants.push_back(variant("no-norm", no_norm));
  } else if (name == "actor-vs-critic-norm") {
    using N = diff::HiddenNorm;
    const std::vector<std::tuple<const char*, N, N>> placements = {
        {"A:none|C:none", N::None, N::None},
        {"A:none|C:ln", N::None, N::LayerNorm},
        {"A:none|C:hn", N::None, N::Hyperspherical},
        {"A:ln|C:ln", N::LayerNorm, N::LayerNorm},
        {"A:hn|C:hn", N::Hyperspherical, N::Hyperspherical},
    };
    for (const auto& [label, actor, critic] : placements) {
      RunConfig c = base;
      c.actor_norm = actor;
      c.critic_norm = critic;
      s.variants.push_back(variant(label, c));
    }
  } else {
    std::string known;
    for (const auto& n : suite_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown suite '" + name + "' (known: " + known + ")");
  }
  return s;
}

ExperimentSuite load_suite(const std::string& name_or_path, const std::string& profile) {
  const auto names = suite_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return make_suite(name_or_path, profile);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("'" + name_or_path + "' is neither a known suite nor a readable config file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(name_or_path + ": " + e.what());
  }
  ExperimentSuite s;
  s.name = std::filesystem::path(name_or_path).stem().string();
  if (j.is_object() && j.contains("variants")) {
    s.variants.push_back({"base", dawn_base(profile)});
    from_json(j, s);
  } else {
    RunConfig c = dawn_base(profile);
    trainer::from_json(j, c);
    s.variants.push_back({c.variant, c});
  }
  return s;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  auto number = [&](const std::string& t) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (t.empty() || used != t.size() || t.front() == '-') throw ConfigError("bad seed specification '" + text + "'");
    return static_cast<std::uint64_t>(v);
  };
  std::vector<std::uint64_t> seeds;
  if (text.find(',') != std::string::npos) {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) seeds.push_back(number(part));
  } else if (const auto dash = text.find('-'); dash != std::string::npos && dash > 0) {
    const auto lo = number(text.substr(0, dash));
    const auto hi = number(text.substr(dash + 1));
    if (hi < lo) throw ConfigError("empty seed range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    const auto n = number(text);
    if (n == 0) throw ConfigError("seed count must be positive");
    for (std::uint64_t s = 0; s < n; ++s) seeds.push_back(s);
  }
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("duplicate seeds in '" + text + "'");
  return seeds;
}

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  return kDefaultOutDir;
}

std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& variant, std::uint64_t seed) {
  return root / variant / ("seed_" + std::to_string(seed));
}

SuiteResult run_suite(const ExperimentSuite& suite, const SuiteOptions& options) {
  suite.validate();
  SuiteResult result;
  result.root = suite.out_dir.empty() ? default_out_dir() / suite.name : suite.out_dir;
  std::filesystem::create_directories(result.root);
  {
    std::ofstream out(result.root / "suite.json");
    if (!out) throw ConfigError("cannot write to " + result.root.string());
    out << json(suite).dump(2) << '\n';
  }

  std::vector<std::pair<const Variant*, std::uint64_t>> jobs;
  for (const auto& v : suite.variants) {
    for (auto seed : suite.seeds) jobs.emplace_back(&v, seed);
  }
  int workers = options.workers > 0 ? options.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, static_cast<int>(jobs.size()));

  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& [v, seed] = jobs[i];
      RunConfig config = v->config;
      config.variant = v->name;
      config.seed = seed;
      trainer::RunOptions run_options;
      run_options.out_dir = run_dir(result.root, v->name, seed);
      run_options.anatomy_at_checkpoints = options.anatomy_at_checkpoints;
      trainer::RunResult r;
      try {
        r = trainer::run_dawn(config, run_options);
      } catch (const std::exception& e) {
        r.aborted = true;
        r.error = e.what();
      }
      if (options.on_run_done) options.on_run_done(*v, seed, r);
      std::lock_guard lock(mutex);
      ++result.runs;
      if (r.aborted) result.failures.push_back({v->name, seed, r.error, r.last_checkpoint.string()});
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::sort(result.failures.begin(), result.failures.end(),
            [](const RunFailure& a, const RunFailure& b) { return std::tie(a.variant, a.seed) < std::tie(b.variant, b.seed); });
  json failures = json::array();
  for (const auto& f : result.failures) {
    failures.push_back({{"variant", f.variant}, {"seed", f.seed}, {"error", f.error}, {"last_checkpoint", f.last_checkpoint}});
  }
  std::ofstream(result.root / "failures.json") << failures.dump(2) << '\n';

  std::vector<MetricSample> samples;
  for (const auto& [v, seed] : jobs) {
    const auto path = run_dir(result.root, v->name, seed) / "metrics.csv";
    if (std::filesystem::exists(path)) {
      auto rows = read_metrics_csv(path);
      samples.insert(samples.end(), rows.begin(), rows.end());
    }
  }
  write_summary_csv(summarize(samples), result.root / "summary.csv");
  return result;
}

// ---- metrics and summary -------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  if (s == "nan") return std::nan("");
  throw ConfigError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
}

}  // namespace

std::vector<MetricSample> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  if (strip_cr(header) != trainer::kMetricsHeader) {
    throw ConfigError(path.string() + ": expected header '" + trainer::kMetricsHeader + "'");
  }
  std::vector<MetricSample> rows;
  std::size_t line_no = 1;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
    MetricSample s;
    s.step = static_cast<std::int64_t>(parse_double(cells[0], path, line_no));
    s.variant = cells[1];
    s.seed = static_cast<std::uint64_t>(parse_double(cells[2], path, line_no));
    s.metric = cells[3];
    s.value = parse_double(cells[4], path, line_no);
    rows.push_back(std::move(s));
  }
  return rows;
}

std::vector<MetricSample> collect_metrics(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MetricSample> out;
  for (const auto& f : files) {
    auto rows = read_metrics_csv(f);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

Interval mean_ci(const std::vector<double>& values) {
  Interval ci;
  ci.n = static_cast<int>(values.size());
  if (ci.n == 0) return ci;
  double sum = 0.0;
  for (double v : values) sum += v;
  ci.mean = sum / ci.n;
  if (ci.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
    ci.sd = std::sqrt(ss / (ci.n - 1));
    ci.half_width = 1.96 * ci.sd / std::sqrt(static_cast<double>(ci.n));
  }
  return ci;
}

std::vector<SummaryRow> summarize(const std::vector<MetricSample>& samples) {
  std::map<std::tuple<std::string, std::string, std::int64_t>, std::vector<double>> groups;
  for (const auto& s : samples) {
    if (std::isfinite(s.value)) groups[{s.variant, s.metric, s.step}].push_back(s.value);
  }
  std::vector<SummaryRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, values] : groups) {
    rows.push_back({std::get<2>(key), std::get<0>(key), std::get<1>(key), mean_ci(values)});
  }
  return rows;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << kSummaryHeader << '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", r.ci.mean, r.ci.lower(), r.ci.upper(), r.ci.half_width);
    out << r.step << ',' << r.variant << ',' << r.metric << ',' << r.ci.n << ',' << buf << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  const auto columns = split_csv(strip_cr(header));
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < columns.size(); ++i) index[columns[i]] = i;
  std::string missing;
  for (const char* need : {"step", "variant", "metric", "n", "mean", "ci_low", "ci_high"}) {
    if (!index.count(need)) missing += (missing.empty() ? "" : ", ") + std::string(need);
  }
  if (!missing.empty()) throw ConfigError(path.string() + ": missing column(s) " + missing);
  std::vector<SummaryRow> rows;
  std::size_t line_no = 1;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != columns.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns.size()) +
                        " columns");
    }
    SummaryRow r;
    r.step = static_cast<std::int64_t>(parse_double(cells[index["step"]], path, line_no));
    r.variant = cells[index["variant"]];
    r.metric = cells[index["metric"]];
    r.ci.n = static_cast<int>(parse_double(cells[index["n"]], path, line_no));
    r.ci.mean = parse_double(cells[index["mean"]], path, line_no);
    r.ci.half_width = 0.5 * (parse_double(cells[index["ci_high"]], path, line_no) -
                             parse_double(cells[index["ci_low"]], path, line_no));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dawn::harness
