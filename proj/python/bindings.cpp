#include "dawn/agent/critic.hpp"
#include "dawn/basepolicy/base_policy.hpp"
#include "dawn/envs/env.hpp"
#include "dawn/errors.hpp"
#include "dawn/harness/plot.hpp"
#include "dawn/harness/suite.hpp"
#include "dawn/trainer/run.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using dawn::diff::Matrix;
using dawn::diff::Vector;
using nlohmann::json;

// Configs and suites cross the boundary as JSON text; the Python wrapper converts to dicts.

namespace {

dawn::trainer::RunConfig parse_config(const std::string& text) {
  auto c = json::parse(text).get<dawn::trainer::RunConfig>();
  c.validate();
  return c;
}

py::dict run_result(const dawn::trainer::RunResult& r) {
  py::list metrics;
  for (const auto& m : r.metrics) metrics.append(py::make_tuple(m.step, m.metric, m.value));
  py::dict d;
  d["metrics"] = metrics;
  d["aborted"] = r.aborted;
  d["error"] = r.error;
  d["steps"] = r.steps;
  d["buffer_size"] = r.buffer_size;
  d["final_success"] = r.final_success;
  d["last_checkpoint"] = r.last_checkpoint.string();
  return d;
}

class Env {
 public:
  explicit Env(const std::string& id, const std::string& overrides)
      : env_(dawn::env::make_env(id, json::parse(overrides))), base_(dawn::base::make_base_policy(*env_)) {}

  Vector reset(std::uint64_t seed) {
    state_ = env_->reset(seed);
    return state_.observation;
  }

  py::tuple step(const Vector& action) {
    auto [next, r] = env_->step(state_, action);
    state_ = std::move(next);
    return py::make_tuple(r.next_observation, r.reward, r.done, r.success);
  }

  Vector base_action(const Vector& obs) const { return base_.action(obs); }

  int obs_dim() const { return env_->obs_dim(); }
  int action_dim() const { return env_->action_dim(); }
  int episode_length() const { return env_->episode_length(); }
  std::string id() const { return env_->id(); }

 private:
  std::unique_ptr<dawn::env::Environment> env_;
  dawn::base::BasePolicy base_;
  dawn::env::EnvState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Residual soft actor-critic lab";

  py::register_exception<dawn::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("default_config_json", [](const std::string& profile) {
    auto c = dawn::trainer::RunConfig{};
    dawn::trainer::apply_profile(c, profile);
    return json(c).dump();
  });
  m.def("validate_config_json", [](const std::string& text) { return json(parse_config(text)).dump(); });
  m.def(
      "run_json",
      [](const std::string& text, const std::string& out_dir) {
        const auto config = parse_config(text);
        dawn::trainer::RunOptions options;
        options.out_dir = out_dir;
        dawn::trainer::RunResult r;
        {
          py::gil_scoped_release release;
          r = dawn::trainer::run_dawn(config, options);
        }
        return run_result(r);
      },
      py::arg("config"), py::arg("out_dir") = "");

  m.def("suite_names", &dawn::harness::suite_names);
  m.def("suite_json", [](const std::string& name, const std::string& profile) {
    return json(dawn::harness::load_suite(name, profile)).dump();
  });
  m.def("parse_seeds", &dawn::harness::parse_seeds);
  m.def("mean_ci", [](const std::vector<double>& v) {
    const auto ci = dawn::harness::mean_ci(v);
    return py::make_tuple(ci.mean, ci.lower(), ci.upper());
  });
  m.def("plot_summary", [](const std::string& summary, const std::string& fig, const std::string& out) {
    return dawn::harness::plot_summary(summary, fig, out).string();
  }, py::arg("summary"), py::arg("fig"), py::arg("out") = "");

  m.def("registered_envs", &dawn::env::registered_envs);
  py::class_<Env>(m, "Env")
      .def(py::init<const std::string&, const std::string&>(), py::arg("id"), py::arg("overrides") = "{}")
      .def("reset", &Env::reset, py::arg("seed"))
      .def("step", &Env::step, py::arg("action"))
      .def("base_action", &Env::base_action, py::arg("observation"))
      .def_property_readonly("obs_dim", &Env::obs_dim)
      .def_property_readonly("action_dim", &Env::action_dim)
      .def_property_readonly("episode_length", &Env::episode_length)
      .def_property_readonly("id", &Env::id);

  m.def("project_categorical", &dawn::agent::project_categorical, py::arg("next_probs"), py::arg("atoms"),
        py::arg("reward"), py::arg("discount"), py::arg("entropy"));
  m.def("quantile_huber_loss", &dawn::agent::quantile_huber_loss, py::arg("theta"), py::arg("targets"),
        py::arg("taus"), py::arg("kappa") = 1.0);
  m.def("quantile_fractions", &dawn::agent::quantile_fractions);
}
