/*
 * Copyright 2026 The ultr-lab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// ultr: command-line front end for data generation, propensity estimation,
// single runs, repeated comparisons and checkpoint evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ultr/harness.hpp"
#include "ultr/io.hpp"

namespace {

using namespace ultr;
namespace fs = std::filesystem;

constexpr const char* kOutputDirEnv = "ULTR_OUTPUT_DIR";

bool g_quiet = false;

void log(const std::string& msg) {
  if (!g_quiet) std::cerr << "[ultr] " << msg << '\n';
}

fs::path default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path output_dir(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  return default_output_dir();
}

// Re-reads a written artifact so a zero exit code means it is loadable.
void verify_json(const fs::path& p) { (void)io::parse_json(io::read_file(p), p.string()); }

void verify_csv(const fs::path& p, const std::string& header) {
  std::ifstream in(p);
  std::string first;
  if (!std::getline(in, first) || first != header) throw Error("artifact '" + p.string() + "' has an unexpected header");
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  io::write_atomic(p, j.dump(2) + "\n");
  verify_json(p);
}

// ---- gen-data ---------------------------------------------------------------------

struct GenDataArgs {
  std::size_t queries = 1000, docs = 25, dim = 20;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  const fs::path dir = output_dir(a.out, "");
  auto splits = split_dataset(generate_synthetic(a.queries, a.docs, a.dim, a.seed));
  const std::pair<const char*, const Dataset*> files[] = {
      {"train.txt", &splits.train}, {"valid.txt", &splits.valid}, {"test.txt", &splits.test}};
  for (const auto& [name, ds] : files) {
    std::ostringstream ss;
    write_letor(ss, *ds);
    io::write_atomic(dir / name, ss.str());
    std::ifstream in(dir / name);
    (void)parse_letor(in);
  }
  log("wrote " + std::to_string(splits.train.queries.size()) + "/" + std::to_string(splits.valid.queries.size()) + "/" +
      std::to_string(splits.test.queries.size()) + " queries to " + dir.string());
  return 0;
}

// ---- estimate-propensity ----------------------------------------------------------

struct PropensityArgs {
  std::string data, out;
  double eta = 1.0, epsilon = 0.1;
  std::size_t sessions = 200000;
  std::uint64_t seed = 1;
};

int cmd_estimate_propensity(const PropensityArgs& a) {
  const auto ds = load_letor_file(a.data, SplitTag::kTrain);
  ClickModel model;
  model.eta = a.eta;
  model.epsilon = a.epsilon;
  model.validate();
  Rng rng = make_rng(a.seed, 2);
  const auto w = estimate_propensity_by_randomization(ds, model, a.sessions, rng);
  const fs::path out = a.out.empty() ? default_output_dir() / "propensity.json" : fs::path(a.out);
  write_json(out, io::propensity_to_json(w));
  (void)io::propensity_from_json(io::parse_json(io::read_file(out), out.string()));
  log("wrote " + out.string());
  return 0;
}

// ---- run --------------------------------------------------------------------------

struct RunArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& a) {
  const auto cli = io::load_config(a.config);
  g_quiet = g_quiet || cli.log_level == "quiet" || cli.log_level == "error";
  const auto& config = cli.experiment;
  const fs::path dir = output_dir(a.out, cli.output_dir);
  log("building environment for " + config.system_name());
  const auto env = build_environment(config);
  const auto seed = a.seed.value_or(config.seeds.front());
  const auto rec = run(config, env, seed);
  auto j = io::run_record_to_json(rec);
  j["selected"] = io::checkpoint_to_json(rec.selected, env.scaler);
  const std::string stem = config.system_name() + "_seed" + std::to_string(seed);
  write_json(dir / (stem + ".run.json"), j);
  const std::vector<RunRecord> records = {rec};
  io::write_atomic(dir / (stem + ".trace.csv"), io::trace_csv(records));
  verify_csv(dir / (stem + ".trace.csv"), io::kTraceHeader);
  log("test nDCG@10 " + io::format_double(rec.test.mean_ndcg(cutoff_index(10))) + " (selected step " +
      std::to_string(rec.selected_step) + "); artifacts in " + dir.string());
  return 0;
}

// ---- compare ----------------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> configs;
  std::string baseline, out;
  std::size_t repeats = 0;  // 0: number of seeds in the first config
  std::size_t workers = 1;
  std::size_t permutations = 10000;
};

int cmd_compare(const CompareArgs& a) {
  std::vector<ExperimentConfig> configs;
  std::string config_out;
  for (const auto& path : a.configs) {
    auto cli = io::load_config(path);
    if (config_out.empty()) config_out = cli.output_dir;
    configs.push_back(std::move(cli.experiment));
  }
  const std::string baseline = a.baseline.empty() ? configs.front().system_name() : a.baseline;
  const std::size_t repeats = a.repeats ? a.repeats : configs.front().seeds.size();
  CompareOptions opt;
  opt.workers = a.workers;
  opt.n_permutations = a.permutations;
  log("comparing " + std::to_string(configs.size()) + " systems x " + std::to_string(repeats) + " repeats");
  const auto cmp = repeat_and_compare(configs, repeats, baseline, opt);
  const fs::path dir = output_dir(a.out, config_out);
  io::write_atomic(dir / "report.csv", io::report_csv(cmp.report));
  verify_csv(dir / "report.csv", io::kReportHeader);
  write_json(dir / "report.json", io::report_to_json(cmp.report));
  std::vector<RunRecord> all;
  for (const auto& runs : cmp.runs) all.insert(all.end(), runs.begin(), runs.end());
  io::write_atomic(dir / "trace.csv", io::trace_csv(all));
  verify_csv(dir / "trace.csv", io::kTraceHeader);
  for (const auto& s : cmp.report.systems)
    log(s.name + ": nDCG@10 " + io::format_double(s.ndcg_mean[cutoff_index(10)]) + " p=" +
        io::format_double(s.ndcg_p[cutoff_index(10)]));
  return 0;
}

// ---- evaluate ---------------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint, data, out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  auto j = io::parse_json(io::read_file(a.checkpoint), a.checkpoint);
  if (j.contains("selected")) j = j["selected"];  // a RunRecord
  const auto cp = io::checkpoint_from_json(j);
  auto ds = load_letor_file(a.data, SplitTag::kTest);
  const auto dim = cp.params.input_dim();
  detail::require<ValidationError>(ds.feature_dim <= dim, "test file has ", ds.feature_dim,
                                   " features, checkpoint expects ", dim);
  for (auto& q : ds.queries)
    for (auto& d : q.candidates) d.features.resize(dim, 0.0);
  ds.feature_dim = dim;
  if (cp.scaler) ds = cp.scaler->transform(std::move(ds));
  const auto summary = io::evaluation_summary(evaluate(cp.params, ds));
  if (a.out.empty()) {
    std::cout << summary.dump(2) << '\n';
  } else {
    write_json(a.out, summary);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbiased learning-to-rank experiments: simulation, training and evaluation"};
  app.fallthrough();  // lets -q follow the subcommand
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress messages");
  const std::string out_help = std::string("Output directory (default: $") + kOutputDirEnv + " or .)";

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write synthetic train/valid/test LETOR files (80/10/10 query split)");
  g->add_option("--queries", gen.queries, "Number of queries")->check(CLI::Range(1, 1000000000));
  g->add_option("--docs", gen.docs, "Documents per query")->check(CLI::Range(1, 1000000000));
  g->add_option("--dim", gen.dim, "Feature dimension")->check(CLI::Range(1, 1000000000));
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--out", gen.out, out_help);

  PropensityArgs prop;
  auto* p = app.add_subcommand("estimate-propensity", "Estimate position propensities by result randomization");
  p->add_option("--data", prop.data, "LETOR file whose queries are shuffled")->required();
  p->add_option("--eta", prop.eta, "Position-bias severity")->check(CLI::NonNegativeNumber);
  p->add_option("--epsilon", prop.epsilon, "Noisy-click probability")->check(CLI::Range(0.0, 0.999999));
  p->add_option("--sessions", prop.sessions, "Randomized sessions")->check(CLI::Range(1, 1000000000));
  p->add_option("--seed", prop.seed, "Simulation seed");
  p->add_option("--out", prop.out, "Output JSON file (default: <output dir>/propensity.json)");

  RunArgs run_args;
  auto* r = app.add_subcommand("run", "Train one configuration for one seed");
  r->add_option("--config", run_args.config, "Experiment config (JSON)")->required();
  r->add_option("--out", run_args.out, out_help);
  r->add_option("--seed", run_args.seed, "Override the config's first seed");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Repeat several configurations and test them against a baseline");
  c->add_option("--configs", cmp.configs, "Experiment configs (JSON)")->required()->expected(1, -1);
  c->add_option("--baseline", cmp.baseline, "Baseline system name (default: the first config)");
  c->add_option("--repeats", cmp.repeats, "Repeats per config (default: seeds in the first config)");
  c->add_option("--workers", cmp.workers, "Concurrent runs")->check(CLI::Range(1, 1000000000));
  c->add_option("--permutations", cmp.permutations, "Fisher test permutations")->check(CLI::Range(1, 1000000000));
  c->add_option("--out", cmp.out, out_help);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint (or run record) on a LETOR file");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint or run-record JSON")->required();
  e->add_option("--data", ev.data, "LETOR file")->required();
  e->add_option("--out", ev.out, "Write the metrics JSON here instead of stdout");

  CLI11_PARSE(app, argc, argv);
  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (p->parsed()) return cmd_estimate_propensity(prop);
    if (r->parsed()) return cmd_run(run_args);
    if (c->parsed()) return cmd_compare(cmp);
    if (e->parsed()) return cmd_evaluate(ev);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}
