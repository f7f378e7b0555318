// Python bindings: environments, return/advantage helpers and the training
// harness.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hvf/harness.hpp"

namespace py = pybind11;
using namespace hvf;

namespace {

Action to_action(const Environment& env, const py::object& a) {
  Action out;
  if (env.discrete()) {
    out.index = a.cast<std::size_t>();
  } else {
    out.values = a.cast<std::vector<double>>();
  }
  return out;
}

py::dict metrics_dict(const std::vector<MetricsRecord>& rows) {
  std::map<std::string, std::vector<double>> cols;
  for (const auto& m : rows) {
    cols["env_steps"].push_back(static_cast<double>(m.env_steps));
    cols["episode_reward_mean"].push_back(m.episode_reward_mean);
    cols["episode_reward_std"].push_back(m.episode_reward_std);
    cols["critic_mse"].push_back(m.critic_mse);
    cols["L_P"].push_back(m.prediction_loss);
    cols["I_vCLUB"].push_back(m.vclub);
    cols["grad_variance"].push_back(m.grad_variance);
    cols["success_rate"].push_back(m.success_rate);
    cols["wall_seconds"].push_back(m.wall_seconds);
  }
  return py::cast(cols);
}

ExperimentConfig config_from(const py::dict& kv) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : kv) cfg.set(py::str(k), py::str(v));
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_hvf, m) {
  m.doc() = "Hindsight value function policy gradients";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<EpisodeDoneError>(m, "EpisodeDoneError", PyExc_RuntimeError);

  py::class_<Transition>(m, "Transition")
      .def_readonly("s", &Transition::s)
      .def_property_readonly("a", [](const Transition& t) -> py::object {
        if (t.a.values.empty()) return py::cast(t.a.index);
        return py::cast(t.a.values);
      })
      .def_readonly("s_next", &Transition::s_next)
      .def_readonly("r", &Transition::r)
      .def_readonly("done", &Transition::done)
      .def_readonly("reached_goal", &Transition::reached_goal);

  py::class_<Environment>(m, "Environment")
      .def("reset", &Environment::reset)
      .def("step", [](Environment& e, const py::object& a) { return e.step(to_action(e, a)); },
           py::arg("action"))
      .def_property_readonly("obs_dim", &Environment::obs_dim)
      .def_property_readonly("action_dim", &Environment::action_dim)
      .def_property_readonly("discrete", &Environment::discrete);

  m.def(
      "make_env",
      [](const std::string& name, std::uint64_t seed, double noise_sigma, int episode_cap,
         double target_step_std) {
        EnvConfig c;
        c.name = name;
        c.seed = seed;
        c.noise_sigma = noise_sigma;
        c.episode_cap = episode_cap;
        c.target_step_std = target_step_std;
        return make_env(c);
      },
      py::arg("name"), py::arg("seed") = 0, py::arg("noise_sigma") = 0.0,
      py::arg("episode_cap") = 0, py::arg("target_step_std") = 0.05);

  m.def("discounted_returns", [](const std::vector<double>& r, double gamma) {
    return discounted_returns(r, gamma);
  }, py::arg("rewards"), py::arg("gamma"));
  m.def("gae_advantages",
        [](const std::vector<double>& r, const std::vector<double>& v, double gamma, double lambda) {
          return gae_advantages(r, v, gamma, lambda);
        },
        py::arg("rewards"), py::arg("values"), py::arg("gamma"), py::arg("lam"));

  m.def("default_config", [] { return ExperimentConfig{}.resolved().serialize(); },
        "Resolved default configuration as 'key = value' text.");
  m.def("lambda_sweep_values", &lambda_sweep_values);

  m.def(
      "train",
      [](const py::dict& kv, std::uint64_t seed) {
        const ExperimentConfig cfg = config_from(kv);
        SeedResult r;
        {
          py::gil_scoped_release release;
          r = train_seed(cfg, seed);
        }
        py::dict out;
        out["failed"] = r.failed;
        out["error"] = r.error;
        out["metrics"] = metrics_dict(r.metrics);
        return out;
      },
      py::arg("config"), py::arg("seed") = 0,
      "Trains one seed in memory. `config` maps config keys to values.");

  m.def(
      "run_experiment",
      [](const py::dict& kv) {
        const ExperimentConfig cfg = config_from(kv);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        py::dict out;
        out["run_dir"] = r.run_dir;
        py::list seeds;
        for (const auto& s : r.seeds) seeds.append(metrics_dict(s.metrics));
        out["seeds"] = seeds;
        out["best_lambda"] = r.best_lambda;
        return out;
      },
      py::arg("config"), "Runs and writes a full experiment, as the command-line tool does.");

  m.def("read_metrics", &read_metrics, py::arg("csv"));
  m.def("final_window_mean", &final_window_mean, py::arg("values"), py::arg("fraction") = 0.25);
}
