// One-off calibration of the scripted base controllers: prints the base-policy
// success rate per environment over a grid of imperfection settings so the
// defaults can be pinned inside the 40-70% competence band.

#include "dawn/basepolicy/base_policy.hpp"
#include "dawn/envs/env.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Calibrate scripted base policies"};
  int episodes = 400;
  std::uint64_t seed = 1000;
  std::string only;
  std::string controller = "default";
  app.add_option("--episodes", episodes, "episodes per setting");
  app.add_option("--seed", seed, "first episode seed");
  app.add_option("--env", only, "restrict to one environment id");
  app.add_option("--controller", controller, "default | proportional | waypoint");
  CLI11_PARSE(app, argc, argv);

  struct Setting {
    std::string env;
    nlohmann::json overrides;
  };
  std::vector<Setting> grid;
  for (double sys : {0.006, 0.007, 0.008, 0.009, 0.0095}) {
    for (double sd : {0.002, 0.003, 0.004}) {
      grid.push_back({"point-insert-2d", {{"bias_sys_y", sys}, {"bias_std", sd}}});
    }
  }
  for (double sys : {0.014, 0.016, 0.018}) {
    for (double sd : {0.008, 0.012}) grid.push_back({"reach-nd", {{"bias_sys", sys}, {"bias_std", sd}}});
  }
  for (double hi : {0.04, 0.06, 0.08, 0.1, 0.15}) {
    grid.push_back({"drift-push", {{"friction_lo", 0.0}, {"friction_hi", hi}}});
  }
  grid.push_back({"point-insert-2d", nlohmann::json::object()});
  grid.push_back({"reach-nd", nlohmann::json::object()});
  grid.push_back({"drift-push", nlohmann::json::object()});

  for (const auto& s : grid) {
    if (!only.empty() && s.env != only) continue;
    auto env = dawn::env::make_env(s.env, s.overrides);
    auto policy = dawn::base::make_base_policy(*env, controller);
    auto stats = dawn::base::evaluate_base(*env, policy, episodes, seed);
    std::printf("%-16s %-50s success=%.3f mean_len=%.1f\n", s.env.c_str(),
                s.overrides.empty() ? "(defaults)" : s.overrides.dump().c_str(), stats.success_rate(),
                stats.mean_length);
  }
  return 0;
}
