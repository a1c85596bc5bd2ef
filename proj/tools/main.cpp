#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "cpshrink/cli.hpp"
#include "json.hpp"

using namespace cpshrink;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> sim_case, t, reps, bootstrap_b;
  std::optional<std::string> omega, restricted_search;
  int threads = 0;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--seed", o.seed, "root seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--case", o.sim_case, "simulation design (1 or 2)")->check(CLI::IsMember({1, 2}));
  sub->add_option("--t", o.t, "simulation sample size");
  sub->add_option("--reps", o.reps, "simulation replications");
  sub->add_option("--bootstrap-b", o.bootstrap_b, "bootstrap replicates");
  sub->add_option("--omega", o.omega, "long-run covariance estimator")->check(CLI::IsMember({"hc0", "hac"}));
  sub->add_option("--restricted-search", o.restricted_search, "restricted break search")
      ->check(CLI::IsMember({"exhaustive", "refine"}));
  sub->add_option("--threads", o.threads, "OpenMP threads (0 = runtime default); results do not depend on it");
}

cli::RunConfig resolve(const Overrides& o) {
  cli::RunConfig c = o.config.empty() ? cli::RunConfig::parse("{}") : cli::RunConfig::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.sim_case) c.simulate.sim_case = *o.sim_case;
  if (o.t) c.simulate.T = *o.t;
  if (o.reps) c.simulate.reps = *o.reps;
  if (o.bootstrap_b) c.bootstrap_b = *o.bootstrap_b;
  if (o.omega) c.omega = *o.omega;
  if (o.restricted_search) c.restricted_search = *o.restricted_search;
  c.validate();
  return c;
}

void report(const char* code, const std::string& message) {
  nlohmann::json j{{"error", code}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Change-point regression with restricted and shrinkage estimators"};
  app.require_subcommand(1);
  Overrides o;
  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const cli::RunConfig&);
  };
  const Cmd cmds[] = {
      {"fit", "estimate breaks and all estimators on a CSV series", cli::cmd_fit},
      {"bootstrap", "residual-bootstrap MSE of each estimator", cli::cmd_bootstrap},
      {"simulate", "Monte Carlo RMSE and break histograms", cli::cmd_simulate},
      {"risk", "asymptotic risk curves over a noncentrality grid", cli::cmd_risk},
      {"verify", "Monte Carlo check of the Gaussian moment identities", cli::cmd_verify},
  };
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    subs.emplace_back(sub, &c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kExitConfig;
  }

  try {
    set_thread_count(o.threads);
    const cli::RunConfig config = resolve(o);
    for (auto& [sub, cmd] : subs) {
      if (sub->parsed()) return cmd->run(config);
    }
  } catch (const Error& e) {
    report(to_string(e.code()), e.what());
    return cli::exit_code_for(e.code());
  } catch (const std::exception& e) {
    report("Internal", e.what());
    return cli::kExitNumerical;
  }
  return cli::kExitConfig;
}
