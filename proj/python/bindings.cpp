#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gridfm/config.hpp"
#include "gridfm/errors.hpp"
#include "gridfm/eval.hpp"
#include "gridfm/experiments.hpp"
#include "gridfm/grid_env.hpp"
#include "gridfm/ppo.hpp"
#include "gridfm/prompt.hpp"

namespace py = pybind11;
using namespace gridfm;

namespace {

py::dict outcome_dict(const RunOutcome& r) {
  py::dict d;
  d["output_dir"] = r.output_dir.string();
  d["failed_jobs"] = r.failed_jobs;
  d["messages"] = r.messages;
  std::vector<std::string> files;
  for (const auto& f : r.files) files.push_back(f.string());
  d["files"] = files;
  d["ok"] = r.ok();
  return d;
}

py::dict step_dict(const StepResult& r) {
  py::dict d;
  d["agent"] = py::make_tuple(r.observation.agent.x, r.observation.agent.y);
  if (r.observation.reward) {
    d["reward_cell"] = py::make_tuple(r.observation.reward->x, r.observation.reward->y);
  }
  d["reward"] = r.reward;
  d["terminated"] = r.terminated;
  d["truncated"] = r.truncated;
  return d;
}

Action action_from(const std::string& name) {
  auto a = parse_action(name);
  if (!a) throw py::value_error("unknown action '" + name + "'");
  return *a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grid-world foundation-model experiments";

  static py::exception<Error> base(m, "GridfmError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());

  py::class_<GridConfig>(m, "GridConfig")
      .def(py::init([](int n, bool random_reward, std::optional<bool> observe_reward,
                       double sticky_prob, std::optional<int> max_steps) {
             GridConfig g;
             g.n = n;
             g.reward_mode = random_reward ? RewardMode::kRandomPerEpisode
                                           : RewardMode::kFixedTopRight;
             g.observe_reward = observe_reward.value_or(!random_reward);
             g.sticky_prob = sticky_prob;
             g.max_steps = max_steps;
             g.validate();
             return g;
           }),
           py::arg("n") = 5, py::arg("random_reward") = false,
           py::arg("observe_reward") = py::none(), py::arg("sticky_prob") = 0.0,
           py::arg("max_steps") = py::none())
      .def_readonly("n", &GridConfig::n)
      .def_property_readonly("episode_cap", &GridConfig::episode_cap);

  py::class_<GridWorld>(m, "GridWorld")
      .def(py::init<GridConfig>())
      .def("reset",
           [](GridWorld& w, std::uint64_t seed) {
             const Observation o = w.reset(seed);
             py::dict d;
             d["agent"] = py::make_tuple(o.agent.x, o.agent.y);
             if (o.reward) d["reward_cell"] = py::make_tuple(o.reward->x, o.reward->y);
             return d;
           },
           py::arg("seed"))
      .def("step", [](GridWorld& w, const std::string& action) {
        return step_dict(w.step(action_from(action)));
      });

  m.def("enumerate_transitions", [](int n) {
    GridConfig g;
    g.n = n;
    std::vector<py::tuple> out;
    for (const Transition& t : enumerate_transitions(g)) {
      out.push_back(py::make_tuple(py::make_tuple(t.from.x, t.from.y),
                                   std::string(to_string(t.action)),
                                   py::make_tuple(t.to.x, t.to.y), t.reward));
    }
    return out;
  });

  m.def("template_names", [] {
    std::vector<std::string> out;
    for (TemplateId id : kAllTemplateIds) out.emplace_back(template_name(id));
    return out;
  });
  m.def("render_template",
        [](const std::string& name, const std::map<std::string, std::string>& binding) {
          auto id = parse_template_id(name);
          if (!id) throw py::value_error("unknown template '" + name + "'");
          Binding b(binding.begin(), binding.end());
          return render(TemplateLibrary::builtin().get(*id), b);
        });
  m.def(
      "parse_transition",
      [](const std::string& text, bool expects_reward) {
        const ParsedTransition p = parse_transition(text, expects_reward);
        return py::make_tuple(py::make_tuple(p.next_cell.x, p.next_cell.y), p.reward);
      },
      py::arg("text"), py::arg("expects_reward") = false);

  m.def(
      "compute_advantages",
      [](const std::vector<int>& rewards, const std::vector<double>& values,
         const std::vector<bool>& terminated, double gamma, double lam,
         double bootstrap_value) {
        Trajectory t;
        t.rewards = rewards;
        t.values = values;
        for (bool d : terminated) t.terminated.push_back(d);
        t.truncated.assign(rewards.size(), 0);
        t.actions.assign(rewards.size(), 0);
        t.bootstrap_value = bootstrap_value;
        if (values.size() != rewards.size() || terminated.size() != rewards.size()) {
          throw py::value_error("rewards, values and terminated must have equal length");
        }
        const Advantages a = compute_advantages(t, gamma, lam);
        return py::make_tuple(a.advantages, a.returns);
      },
      py::arg("rewards"), py::arg("values"), py::arg("terminated"), py::arg("gamma"),
      py::arg("lam"), py::arg("bootstrap_value") = 0.0);

  m.def("chi_square_critical", &chi_square_critical, py::arg("dof"), py::arg("alpha"));
  m.def("chi_square_statistic", &chi_square_statistic);

  m.def(
      "run_experiment",
      [](const std::string& config_json, std::optional<std::string> out,
         std::optional<int> workers, std::optional<std::string> cache,
         std::optional<std::uint64_t> seed) {
        ExperimentConfig c = ExperimentConfig::parse(config_json);
        if (out) c.output_dir = *out;
        if (workers) c.workers = *workers;
        if (cache) c.cache = *cache;
        if (seed) c.seed = *seed;
        RunOutcome r;
        {
          py::gil_scoped_release release;
          r = run_experiment(c);
        }
        return outcome_dict(r);
      },
      py::arg("config_json"), py::arg("out") = py::none(), py::arg("workers") = py::none(),
      py::arg("cache") = py::none(), py::arg("seed") = py::none());

  m.def(
      "build_report",
      [](const std::string& run_dir, std::optional<std::string> out) {
        std::optional<std::filesystem::path> o;
        if (out) o = *out;
        return outcome_dict(build_report(run_dir, o));
      },
      py::arg("run_dir"), py::arg("out") = py::none());
}
