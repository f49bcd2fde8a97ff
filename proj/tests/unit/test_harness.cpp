#include "dawn/errors.hpp"
#include "dawn/harness/plot.hpp"
#include "dawn/harness/suite.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

using namespace dawn::harness;
using dawn::trainer::RunConfig;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dawn_harness_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny() {
  RunConfig c;
  c.hidden_dims = {16, 16};
  c.batch = 32;
  c.warmup.budget = 300;
  c.total_steps = 800;
  c.eval_every = 400;
  c.eval_episodes = 4;
  c.anchor_episodes = 3;
  c.diagnostic_batch = 32;
  c.checkpoint_every = 400;
  return c;
}

ExperimentSuite tiny_suite(const std::string& name, std::vector<std::string> variants, std::vector<std::uint64_t> seeds) {
  ExperimentSuite s;
  s.name = name;
  s.seeds = std::move(seeds);
  for (auto& v : variants) s.variants.push_back({v, tiny()});
  s.out_dir = scratch(name);
  return s;
}

// Pairs of numbers from an SVG points attribute of the element with the given class.
std::vector<std::pair<double, double>> polyline(const std::string& svg, const std::string& cls) {
  const std::regex re("class=\"" + cls + "\" points=\"([^\"]*)\"");
  std::smatch m;
  REQUIRE(std::regex_search(svg, m, re));
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(m[1].str());
  for (std::string pair; ss >> pair;) {
    const auto comma = pair.find(',');
    out.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
  }
  return out;
}

}  // namespace

TEST_CASE("confidence interval arithmetic") {
  const Interval ci = mean_ci({1.0, 2.0, 3.0});
  CHECK(ci.n == 3);
  CHECK(ci.mean == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ci.sd == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ci.half_width == doctest::Approx(1.96 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(mean_ci({5.0}).half_width == 0.0);
  CHECK(mean_ci({}).n == 0);

  std::vector<MetricSample> samples;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    samples.push_back({100, "a", seed, "m", static_cast<double>(seed + 1)});
    samples.push_back({200, "a", seed, "m", 7.0});
  }
  const auto rows = summarize(samples);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].step == 100);
  CHECK(rows[0].ci.mean == doctest::Approx(2.0));
  CHECK(rows[1].ci.half_width == 0.0);
}

TEST_CASE("seed specifications") {
  CHECK(parse_seeds("3") == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(parse_seeds("4-6") == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(parse_seeds("9,2,5") == std::vector<std::uint64_t>{9, 2, 5});
  for (const char* bad : {"", "0", "x", "5-2", "1,1", "-3", "2,a"}) {
    CHECK_THROWS_AS(parse_seeds(bad), dawn::ConfigError);
  }
}

TEST_CASE("shipped suites are valid and distinct") {
  for (const auto& name : suite_names()) {
    INFO(name);
    const ExperimentSuite s = make_suite(name);
    CHECK_NOTHROW(s.validate());
    CHECK(s.seeds.size() == 8);
    CHECK(s.variants.size() >= 3);
    for (const auto& v : s.variants) CHECK(v.config.variant == v.name);
  }
  CHECK(make_suite("warmup-quantity").variants.size() == 5);
  CHECK(make_suite("warmup-strategy").variants.size() == 6);
  CHECK(make_suite("explicit-warmup").variants.size() == 4);
  CHECK(make_suite("actor-vs-critic-norm").variants.size() == 5);
  CHECK(make_suite("normalization", "paper").variants[0].config.batch == 1024);
  CHECK_THROWS_AS(make_suite("nope"), dawn::ConfigError);

  ExperimentSuite dup = make_suite("objectives");
  dup.variants[1].name = dup.variants[0].name;
  CHECK_THROWS_AS(dup.validate(), dawn::ConfigError);
}

TEST_CASE("suite json round-trip and file loading") {
  const ExperimentSuite s = make_suite("component-ablation");
  const ExperimentSuite back = nlohmann::json(s).get<ExperimentSuite>();
  REQUIRE(back.variants.size() == s.variants.size());
  for (std::size_t i = 0; i < s.variants.size(); ++i) CHECK(back.variants[i].config == s.variants[i].config);

  const auto dir = scratch("load");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "one.json") << R"({"variant": "solo", "lambda": 0.3, "warmup": {"budget": 1000}})";
  const ExperimentSuite one = load_suite((dir / "one.json").string());
  REQUIRE(one.variants.size() == 1);
  CHECK(one.variants[0].name == "solo");
  CHECK(one.variants[0].config.lambda == 0.3);
  CHECK(one.variants[0].config.warmup.budget == 1000);
  CHECK(one.variants[0].config.batch == 256);

  std::ofstream(dir / "two.json")
      << R"({"name": "pair", "seeds": 2, "base": {"total_steps": 5000},
            "variants": [{"name": "a"}, {"name": "b", "config": {"critic_norm": "none"}}]})";
  const ExperimentSuite two = load_suite((dir / "two.json").string(), "paper");
  CHECK(two.name == "pair");
  CHECK(two.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(two.variants[1].config.critic_norm == dawn::diff::HiddenNorm::None);
  CHECK(two.variants[0].config.total_steps == 5000);
  CHECK(two.variants[0].config.batch == 1024);

  std::ofstream(dir / "bad.json") << R"({"variants": [{"name": "a", "config": {"nonsense": 1}}]})";
  CHECK_THROWS_AS(load_suite((dir / "bad.json").string()), dawn::ConfigError);
  CHECK_THROWS_AS(load_suite((dir / "missing.json").string()), dawn::ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("warmup-only suite writes the full result tree") {
  ExperimentSuite s = tiny_suite("warmup_only", {"only"}, {0});
  s.variants[0].config.total_steps = 0;
  const SuiteResult r = run_suite(s);
  CHECK(r.ok());
  CHECK(r.runs == 1);
  const auto run = run_dir(r.root, "only", 0);
  for (const char* f : {"metrics.csv", "config.json"}) CHECK(std::filesystem::exists(run / f));
  for (const char* f : {"summary.csv", "failures.json", "suite.json"}) CHECK(std::filesystem::exists(r.root / f));
  const auto rows = read_metrics_csv(run / "metrics.csv");
  bool warmup = false;
  for (const auto& m : rows) {
    CHECK(m.step <= 300);
    warmup = warmup || m.metric == "warmup_success_rate";
  }
  CHECK(warmup);
  CHECK(slurp(run / "metrics.csv").rfind("step,variant,seed,metric,value\n", 0) == 0);

  std::ifstream cfg(run / "config.json");
  RunConfig expect = s.variants[0].config;
  expect.variant = "only";
  CHECK(nlohmann::json::parse(cfg).get<RunConfig>() == expect);
  std::filesystem::remove_all(r.root);
}

TEST_CASE("identical configs and seeds give identical metrics; variants do not interfere") {
  ExperimentSuite both = tiny_suite("pair", {"a", "b"}, {3});
  both.variants[1].config.critic_norm = dawn::diff::HiddenNorm::None;
  const SuiteResult r1 = run_suite(both);
  ExperimentSuite alone = tiny_suite("alone", {"a"}, {3});
  SuiteOptions two_workers;
  two_workers.workers = 2;
  const SuiteResult r2 = run_suite(alone, two_workers);
  const std::string m1 = slurp(run_dir(r1.root, "a", 3) / "metrics.csv");
  CHECK(m1.size() > 100);
  CHECK(m1 == slurp(run_dir(r2.root, "a", 3) / "metrics.csv"));
  CHECK(m1 != slurp(run_dir(r1.root, "b", 3) / "metrics.csv"));
  CHECK(std::filesystem::exists(run_dir(r1.root, "a", 3) / "checkpoints" / "step_000000400" / "manifest.json"));

  // Two seeds under the same config: one metrics.csv each, and the same seed twice matches.
  ExperimentSuite seeds = tiny_suite("seeds", {"a"}, {3, 4});
  const SuiteResult r3 = run_suite(seeds);
  CHECK(m1 == slurp(run_dir(r3.root, "a", 3) / "metrics.csv"));
  CHECK(m1 != slurp(run_dir(r3.root, "a", 4) / "metrics.csv"));
  for (const auto& root : {r1.root, r2.root, r3.root}) std::filesystem::remove_all(root);
}

TEST_CASE("an aborted run is recorded and siblings still finish") {
  ExperimentSuite s = tiny_suite("abort", {"good", "bad"}, {0});
  s.variants[1].config.lr = 1e300;
  const SuiteResult r = run_suite(s);
  CHECK_FALSE(r.ok());
  CHECK(r.runs == 2);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].variant == "bad");
  const auto failures = nlohmann::json::parse(slurp(r.root / "failures.json"));
  REQUIRE(failures.size() == 1);
  CHECK(failures[0].at("variant") == "bad");
  CHECK_FALSE(failures[0].at("error").get<std::string>().empty());
  const auto rows = read_metrics_csv(run_dir(r.root, "good", 0) / "metrics.csv");
  CHECK(rows.back().step == 800);
  std::filesystem::remove_all(r.root);
}

TEST_CASE("summary csv round-trip and missing columns") {
  const auto dir = scratch("summary");
  std::filesystem::create_directories(dir);
  std::vector<SummaryRow> rows = {{10, "v", "m", mean_ci({1.0, 3.0})}, {20, "v", "m", mean_ci({2.0})}};
  write_summary_csv(rows, dir / "summary.csv");
  const auto back = read_summary_csv(dir / "summary.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].ci.mean == 2.0);
  CHECK(back[0].ci.half_width == doctest::Approx(rows[0].ci.half_width).epsilon(1e-12));

  std::ofstream(dir / "broken.csv") << "step,variant,value\n1,a,2\n";
  try {
    read_summary_csv(dir / "broken.csv");
    FAIL("expected an error");
  } catch (const dawn::ConfigError& e) {
    CHECK(std::string(e.what()).find("metric") != std::string::npos);
    CHECK(std::string(e.what()).find("ci_low") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("plots: empty metric, monotone curve and ordered CI band") {
  std::vector<SummaryRow> rows;
  for (int i = 0; i < 10; ++i) {
    rows.push_back({i * 1000, "up", "success_rate", mean_ci({0.1 * i, 0.1 * i + 0.05, 0.1 * i - 0.02})});
    rows.push_back({i * 1000, "flat", "success_rate", mean_ci({0.5})});
  }
  const std::string empty = render_svg(rows, figure_spec("grounding_error"));
  CHECK(empty.find("no data for metric 'grounding_error'") != std::string::npos);
  CHECK(empty.rfind("<svg", 0) == 0);

  FigureSpec spec = figure_spec("fig10");
  spec.variants = {"up"};
  const std::string svg = render_svg(rows, spec);
  CHECK(svg.find("</svg>") != std::string::npos);
  const auto mean = polyline(svg, "mean");
  const auto upper = polyline(svg, "ci-upper");
  const auto lower = polyline(svg, "ci-lower");
  REQUIRE(mean.size() == 10);
  for (std::size_t i = 1; i < mean.size(); ++i) {
    CHECK(mean[i].first > mean[i - 1].first);
    CHECK(mean[i].second < mean[i - 1].second);  // SVG y grows downward
  }
  for (std::size_t i = 0; i < mean.size(); ++i) {
    CHECK(upper[i].first == mean[i].first);
    CHECK(lower[i].first == mean[i].first);
    CHECK(upper[i].second <= mean[i].second);
    CHECK(mean[i].second <= lower[i].second);
  }
  CHECK(svg.find("data-variant=\"flat\"") == std::string::npos);
}

TEST_CASE("plot files from summary and anatomy reports") {
  const auto dir = scratch("plotfiles");
  std::filesystem::create_directories(dir);
  write_summary_csv({{0, "v", "alpha", mean_ci({0.01, 0.02})}, {10, "v", "alpha", mean_ci({0.02, 0.03})}},
                    dir / "summary.csv");
  const auto out = plot_summary(dir / "summary.csv", "alpha");
  CHECK(out == dir / "alpha.svg");
  CHECK(slurp(out).find("class=\"mean\"") != std::string::npos);

  nlohmann::json anatomy = {{"step", 40000},
                            {"delta_mu", 0.5},
                            {"hist_base", {{"edges", {0.0, 1.0, 2.0}}, {"counts", {3, 1}}}},
                            {"hist_full", {{"edges", {0.0, 1.0, 2.0}}, {"counts", {1, 3}}}}};
  std::ofstream(dir / "anatomy.json") << anatomy.dump();
  const auto svg = slurp(plot_anatomy(dir / "anatomy.json"));
  CHECK(svg.find("class=\"q-full\"") != std::string::npos);
  anatomy.erase("hist_full");
  CHECK_THROWS_AS(render_anatomy_svg(anatomy), dawn::ConfigError);
  std::filesystem::remove_all(dir);
}
