#include "dawn/errors.hpp"
#include "dawn/harness/plot.hpp"
#include "dawn/harness/suite.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <mutex>

using namespace dawn::harness;

namespace {

int cmd_run(const std::string& target, const std::string& seeds, const std::string& profile, const std::string& out,
            int workers, long long total_steps) {
  ExperimentSuite suite = load_suite(target, profile);
  if (!seeds.empty()) suite.seeds = parse_seeds(seeds);
  for (auto& v : suite.variants) {
    if (total_steps >= 0) v.config.total_steps = total_steps;
  }
  suite.out_dir = out.empty() ? default_out_dir() / suite.name : std::filesystem::path(out);

  std::mutex io;
  SuiteOptions options;
  options.workers = workers;
  const std::size_t total = suite.variants.size() * suite.seeds.size();
  std::size_t done = 0;
  options.on_run_done = [&](const Variant& v, std::uint64_t seed, const dawn::trainer::RunResult& r) {
    std::lock_guard lock(io);
    ++done;
    if (r.aborted) {
      std::fprintf(stderr, "[%zu/%zu] %s seed %llu ABORTED: %s\n", done, total, v.name.c_str(),
                   static_cast<unsigned long long>(seed), r.error.c_str());
    } else {
      std::fprintf(stderr, "[%zu/%zu] %s seed %llu done, %lld steps, final success %.3f\n", done, total,
                   v.name.c_str(), static_cast<unsigned long long>(seed), static_cast<long long>(r.steps),
                   r.final_success);
    }
  };
  const SuiteResult result = run_suite(suite, options);
  std::printf("%s: %d runs, %zu aborted, results in %s\n", suite.name.c_str(), result.runs, result.failures.size(),
              result.root.string().c_str());
  return result.ok() ? 0 : 1;
}

int cmd_plot(const std::string& input, const std::string& fig, const std::string& out) {
  const std::filesystem::path path(input);
  const auto written = (fig == "anatomy" || path.extension() == ".json") ? plot_anatomy(path, out)
                                                                          : plot_summary(path, fig, out);
  std::printf("%s\n", written.string().c_str());
  return 0;
}

int cmd_dump(const std::string& target, const std::string& profile) {
  std::cout << nlohmann::json(load_suite(target, profile)).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual soft actor-critic lab: run suites, plot summaries, inspect configs"};
  app.require_subcommand(1);

  std::string target, seeds, profile = "desk", out, fig;
  int workers = 0;
  long long total_steps = -1;

  auto* run = app.add_subcommand("run", "Run a shipped suite or a JSON config over seeds");
  run->add_option("target", target, "Suite name or config/suite JSON file")->required();
  run->add_option("--seeds", seeds, "Seed count (8), range (3-5) or list (0,4,9)");
  run->add_option("--profile", profile, "Scale preset")->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--out", out, std::string("Output directory (default: $") + kOutDirEnv + "/<suite>)");
  run->add_option("--workers", workers, "Parallel runs (default: hardware threads)")->check(CLI::NonNegativeNumber);
  run->add_option("--total-steps", total_steps, "Override the env-step budget of every variant")
      ->check(CLI::NonNegativeNumber);

  auto* plot = app.add_subcommand("plot", "Render a figure from summary.csv, or an anatomy JSON report");
  plot->add_option("summary", target, "summary.csv or anatomy.json")->required();
  plot->add_option("--fig", fig, "Figure name or metric name")->required();
  plot->add_option("--out", out, "Output SVG path");

  auto* dump = app.add_subcommand("dump-config", "Print the fully resolved suite as JSON");
  dump->add_option("suite", target, "Suite name or JSON file")->required();
  dump->add_option("--profile", profile, "Scale preset")->check(CLI::IsMember({"desk", "paper"}));

  auto* list = app.add_subcommand("list", "List shipped suites and figures");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(target, seeds, profile, out, workers, total_steps);
    if (*plot) return cmd_plot(target, fig, out);
    if (*dump) return cmd_dump(target, profile);
    if (*list) {
      std::printf("suites:\n");
      for (const auto& s : suite_names()) std::printf("  %s\n", s.c_str());
      std::printf("figures:\n");
      for (const auto& f : figure_names()) std::printf("  %-18s %s\n", f.c_str(), figure_spec(f).metric.c_str());
    }
    return 0;
  } catch (const dawn::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const dawn::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
