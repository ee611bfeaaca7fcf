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

#pragma once

// Experiment harness: environment construction (splits, production ranker,
// offline click log, randomization propensities), training loops for the
// three paradigms with validation-based model selection, and repeat
// aggregation with significance tests.

#include <chrono>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ultr/bandit.hpp"
#include "ultr/common.hpp"
#include "ultr/counterfactual.hpp"
#include "ultr/data.hpp"
#include "ultr/metrics.hpp"
#include "ultr/ranker.hpp"
#include "ultr/simulator.hpp"

namespace ultr {

enum class Algorithm { kNa, kIpw, kRem, kDla, kPairD, kDbgd, kMgd, kNsgd, kPdgd };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kNa: return "na";
    case Algorithm::kIpw: return "ipw";
    case Algorithm::kRem: return "rem";
    case Algorithm::kDla: return "dla";
    case Algorithm::kPairD: return "paird";
    case Algorithm::kDbgd: return "dbgd";
    case Algorithm::kMgd: return "mgd";
    case Algorithm::kNsgd: return "nsgd";
    case Algorithm::kPdgd: return "pdgd";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::kNa, Algorithm::kIpw, Algorithm::kRem, Algorithm::kDla, Algorithm::kPairD,
                 Algorithm::kDbgd, Algorithm::kMgd, Algorithm::kNsgd, Algorithm::kPdgd})
    if (s == to_string(a)) return a;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

inline Paradigm parse_paradigm(std::string_view s) {
  for (auto p : {Paradigm::kOff, Paradigm::kOnS, Paradigm::kOnD})
    if (s == to_string(p)) return p;
  throw ConfigError("unknown paradigm '" + std::string(s) + "' (expected off, ons or ond)");
}

inline bool is_interleaving(Algorithm a) {
  return a == Algorithm::kDbgd || a == Algorithm::kMgd || a == Algorithm::kNsgd;
}

// Counterfactual learners and PDGD run under every paradigm; DBGD, MGD and
// NSGD need to control the displayed lists and are online-only.
inline bool is_valid_pairing(Algorithm a, Paradigm p) { return !(is_interleaving(a) && p == Paradigm::kOff); }

inline void check_pairing(Algorithm a, Paradigm p) {
  if (!is_valid_pairing(a, p))
    throw ConfigError(std::string("unsupported pairing ") + to_string(a) + "/" + to_string(p) +
                      ": dbgd, mgd and nsgd run only under the online paradigms (ons, ond)");
}

struct SyntheticSpec {
  std::size_t n_queries = 1000;
  std::size_t docs_per_query = 25;
  std::size_t feature_dim = 20;
  std::uint64_t seed = 1;
  bool operator==(const SyntheticSpec&) const = default;
};

struct DataSource {
  std::optional<SyntheticSpec> synthetic = SyntheticSpec{};
  std::string train_path, valid_path, test_path;  // used when synthetic is empty
  bool normalize = true;
  bool operator==(const DataSource&) const = default;
};

struct ClickConfig {
  double eta = 1.0;
  double epsilon = 0.1;
  double estimation_eta = 1.0;  // click model used by the randomization experiment
  std::size_t propensity_sessions = 200000;
  bool oracle_propensity = false;  // use true nu^eta ratios instead of randomization
  double ipw_max_weight = 0;       // <= 0: no clipping
  bool operator==(const ClickConfig&) const = default;
};

struct ProductionConfig {
  double fraction = 0.01;
  std::uint64_t seed = 7;
  std::size_t epochs = 20;
  double learning_rate = 0.01;
  bool operator==(const ProductionConfig&) const = default;
};

struct RankerConfig {
  RankerKind kind = RankerKind::kLinear;
  std::vector<std::size_t> hidden = {64, 32};
  bool layer_norm = false;
};

struct Hyperparameters {
  double dbgd_delta = 1.0;
  double dbgd_alpha = 0.01;
  std::size_t mgd_candidates = 4;
  std::size_t nsgd_candidates = 4;
  std::size_t nsgd_history = 10;
  double rem_smoothing = 0.05;
  double paird_clip = 10.0;
  double paird_smoothing = 0.05;
  double dla_propensity_lr = 0.005;  // <= 0: same as learning_rate
  double dla_max_weight = 0;     // <= 0: no clipping
};

struct ExperimentConfig {
  std::string name;  // system name in reports; defaults to "<algorithm>_<paradigm>"
  DataSource data;
  Algorithm algorithm = Algorithm::kNa;
  Paradigm paradigm = Paradigm::kOff;
  RankerConfig ranker;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t n_steps = 3000;
  std::size_t eval_interval = 100;
  ClickConfig click;
  ProductionConfig production;
  std::size_t log_sessions = 100000;
  std::uint64_t env_seed = 2021;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  Hyperparameters hyper;

  std::string system_name() const {
    return name.empty() ? std::string(to_string(algorithm)) + "_" + to_string(paradigm) : name;
  }

  void validate() const {
    check_pairing(algorithm, paradigm);
    detail::require<ConfigError>(learning_rate > 0, "learning_rate must be positive");
    detail::require<ConfigError>(batch_size >= 1, "batch_size must be >= 1");
    detail::require<ConfigError>(eval_interval >= 1, "eval_interval must be >= 1");
    detail::require<ConfigError>(production.fraction > 0 && production.fraction <= 1, "production.fraction must be in (0,1]");
    detail::require<ConfigError>(log_sessions >= 1, "log_sessions must be >= 1");
    detail::require<ConfigError>(!seeds.empty(), "seeds must be non-empty");
    detail::require<ConfigError>(click.epsilon >= 0 && click.epsilon < 1, "click.epsilon must be in [0,1)");
    detail::require<ConfigError>(click.eta >= 0 && click.estimation_eta >= 0, "click eta values must be >= 0");
    if (data.synthetic) {
      const auto& s = *data.synthetic;
      detail::require<ConfigError>(s.n_queries >= 1 && s.docs_per_query >= 1 && s.feature_dim >= 1,
                                   "synthetic sizes must be >= 1");
    } else {
      detail::require<ConfigError>(!data.train_path.empty() && !data.valid_path.empty() && !data.test_path.empty(),
                                   "data needs either a synthetic spec or train/valid/test paths");
    }
  }
};

// ---- Production ranker and click logs ----------------------------------------

// Linear ranker trained with pairwise hinge loss (margin 1) by SGD on a
// random subset of the training queries.
inline RankerParams train_production_ranker(const Dataset& train, double fraction, std::uint64_t seed,
                                            std::size_t epochs = 20, double learning_rate = 0.01) {
  detail::require(fraction > 0 && fraction <= 1, "fraction must be in (0,1]");
  detail::require(!train.queries.empty(), "training set is empty");
  Rng rng = make_rng(seed, 0x9d);
  std::vector<std::size_t> qidx(train.queries.size());
  std::iota(qidx.begin(), qidx.end(), 0);
  std::shuffle(qidx.begin(), qidx.end(), rng);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * qidx.size())));
  qidx.resize(std::min(n, qidx.size()));

  struct Pair {
    const std::vector<double>* hi;
    const std::vector<double>* lo;
  };
  std::vector<Pair> pairs;
  for (auto qi : qidx) {
    const auto& q = train.queries[qi];
    for (const auto& a : q.candidates)
      for (const auto& b : q.candidates)
        if (a.label > b.label) pairs.push_back({&a.features, &b.features});
  }
  if (pairs.empty())
    throw ValidationError("production sample has no query with two distinct labels");

  RankerParams p = RankerParams::linear(train.feature_dim);
  auto& w = p.layers[0].weight;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (const auto& pr : pairs) {
      const Eigen::Map<const Eigen::VectorXd> hi(pr.hi->data(), static_cast<Eigen::Index>(pr.hi->size()));
      const Eigen::Map<const Eigen::VectorXd> lo(pr.lo->data(), static_cast<Eigen::Index>(pr.lo->size()));
      if (w.row(0).dot(hi - lo) < 1.0) w.row(0) += learning_rate * (hi - lo).transpose();
    }
  }
  return p;
}

// Queries drawn uniformly with replacement, ranked by the production model
// and shown with simulated clicks.
inline std::vector<Session> generate_click_log(const RankerParams& production, const Dataset& train,
                                               const ClickModel& model, std::size_t n_sessions, Rng& rng) {
  detail::require(n_sessions >= 1, "n_sessions must be >= 1");
  detail::require(!train.queries.empty(), "training set is empty");
  std::vector<std::vector<std::size_t>> rankings;
  rankings.reserve(train.queries.size());
  for (const auto& q : train.queries) rankings.push_back(rank(production, q));
  std::uniform_int_distribution<std::size_t> pick(0, train.queries.size() - 1);
  std::vector<Session> log;
  log.reserve(n_sessions);
  for (std::size_t s = 0; s < n_sessions; ++s) {
    const auto qi = pick(rng);
    log.push_back(simulate_clicks(model, train.queries[qi], qi, rankings[qi], Origin::kLogged, rng));
  }
  return log;
}

// ---- Environment -----------------------------------------------------------------

// Everything a run reads but never writes; shared by all repeats and
// algorithms that agree on data, click model and production setup.
struct Environment {
  Dataset train, valid, test;
  std::optional<FeatureScaler> scaler;
  ClickModel click_model;  // the environment's users
  RankerParams production;
  std::vector<Session> log;
  std::optional<PropensityEstimate> propensity;
};

inline Dataset load_letor_file(const std::string& path, SplitTag tag) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file '" + path + "'");
  auto ds = parse_letor(in, tag);
  validate(ds);
  return ds;
}

inline void load_splits(const DataSource& src, Environment& env) {
  if (src.synthetic) {
    const auto& s = *src.synthetic;
    auto splits = split_dataset(generate_synthetic(s.n_queries, s.docs_per_query, s.feature_dim, s.seed));
    env.train = std::move(splits.train);
    env.valid = std::move(splits.valid);
    env.test = std::move(splits.test);
  } else {
    env.train = load_letor_file(src.train_path, SplitTag::kTrain);
    env.valid = load_letor_file(src.valid_path, SplitTag::kValid);
    env.test = load_letor_file(src.test_path, SplitTag::kTest);
    // Files may stop short of the highest feature id; pad to a common width.
    const auto dim = std::max({env.train.feature_dim, env.valid.feature_dim, env.test.feature_dim});
    for (auto* ds : {&env.train, &env.valid, &env.test}) {
      for (auto& q : ds->queries)
        for (auto& d : q.candidates) d.features.resize(dim, 0.0);
      ds->feature_dim = dim;
    }
  }
  detail::require<ConfigError>(!env.train.queries.empty() && !env.valid.queries.empty() && !env.test.queries.empty(),
                               "train, valid and test splits must all be non-empty");
  if (src.normalize) {
    env.scaler = FeatureScaler::fit(env.train);
    env.train = env.scaler->transform(std::move(env.train));
    env.valid = env.scaler->transform(std::move(env.valid));
    env.test = env.scaler->transform(std::move(env.test));
  }
}

// Builds the shared environment for `config`. The offline log and the
// randomization propensities are only produced when requested.
inline Environment build_environment(const ExperimentConfig& config, bool with_log, bool with_propensity) {
  Environment env;
  load_splits(config.data, env);
  env.click_model.eta = config.click.eta;
  env.click_model.epsilon = config.click.epsilon;
  env.click_model.validate();
  env.production = train_production_ranker(env.train, config.production.fraction, config.production.seed,
                                           config.production.epochs, config.production.learning_rate);
  if (with_log) {
    Rng rng = make_rng(config.env_seed, 1);
    env.log = generate_click_log(env.production, env.train, env.click_model, config.log_sessions, rng);
  }
  if (with_propensity) {
    ClickModel estimation = env.click_model;
    estimation.eta = config.click.estimation_eta;
    if (config.click.oracle_propensity) {
      env.propensity = PropensityEstimate::oracle(estimation);
    } else {
      Rng rng = make_rng(config.env_seed, 2);
      env.propensity = PropensityEstimate::from_weights(
          estimate_propensity_by_randomization(env.train, estimation, config.click.propensity_sessions, rng),
          PropensitySource::kRandomization);
    }
  }
  return env;
}

inline Environment build_environment(const ExperimentConfig& config) {
  return build_environment(config, config.paradigm == Paradigm::kOff, config.algorithm == Algorithm::kIpw);
}

// ---- Runs ------------------------------------------------------------------------

struct TracePoint {
  std::size_t step;
  double valid_ndcg10;
};

struct RunRecord {
  std::string name;
  Algorithm algorithm = Algorithm::kNa;
  Paradigm paradigm = Paradigm::kOff;
  std::uint64_t seed = 0;
  std::vector<TracePoint> trace;
  std::size_t selected_step = 0;
  RankerParams selected;
  Evaluation test;
  double wall_seconds = 0;
  std::map<std::string, double> diagnostics;
  std::map<std::string, std::vector<double>> learner_state;
};

inline RankerParams initial_params(const RankerConfig& rc, std::size_t dim, Rng& rng) {
  if (rc.kind == RankerKind::kLinear) return RankerParams::linear(dim);
  return RankerParams::mlp(dim, rc.hidden, rc.layer_norm, rng);
}

namespace detail {

// Produces training sessions for one step.
class SessionSource {
 public:
  SessionSource(const ExperimentConfig& config, const Environment& env, Rng& rng)
      : config_(config), env_(env), rng_(rng), pick_(0, env.train.queries.size() - 1) {
    if (config.paradigm == Paradigm::kOff) {
      require<ConfigError>(!env.log.empty(), "offline paradigm needs a click log");
      order_.resize(env.log.size());
      std::iota(order_.begin(), order_.end(), 0);
      std::shuffle(order_.begin(), order_.end(), rng_);
    }
  }

  std::vector<Session> next_batch(const RankerParams& params, std::size_t size) {
    std::vector<Session> batch;
    batch.reserve(size);
    for (std::size_t b = 0; b < size; ++b) {
      if (config_.paradigm == Paradigm::kOff) {
        if (cursor_ == order_.size()) {
          cursor_ = 0;
          std::shuffle(order_.begin(), order_.end(), rng_);
        }
        batch.push_back(env_.log[order_[cursor_++]]);
      } else {
        const auto qi = pick_(rng_);
        const auto& q = env_.train.queries[qi];
        const auto list = online_list(score_query(params, q), config_.paradigm, rng_);
        batch.push_back(simulate_clicks(env_.click_model, q, qi, list, Origin::kOnline, rng_));
      }
    }
    return batch;
  }

  std::size_t pick_query() { return pick_(rng_); }

 private:
  const ExperimentConfig& config_;
  const Environment& env_;
  Rng& rng_;
  std::uniform_int_distribution<std::size_t> pick_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

inline std::vector<double> to_vector(const PositionWeights& w) { return {w.begin(), w.end()}; }

}  // namespace detail

// Trains one learner for one seed and evaluates the checkpoint with the best
// validation nDCG@10 (step 0 included) on the test split.
inline RunRecord run(const ExperimentConfig& config, const Environment& env, std::uint64_t seed) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(seed, 0x7a11);
  RunRecord rec;
  rec.name = config.system_name();
  rec.algorithm = config.algorithm;
  rec.paradigm = config.paradigm;
  rec.seed = seed;

  RankerParams params = initial_params(config.ranker, env.train.feature_dim, rng);
  detail::SessionSource source(config, env, rng);
  const double lr = config.learning_rate;
  const auto& hp = config.hyper;

  RemState rem = RemState::uniform();
  DlaState dla;
  PairDState paird = PairDState::ones(hp.paird_clip);
  PerturbationState perturb;
  perturb.delta = hp.dbgd_delta;
  perturb.alpha = hp.dbgd_alpha;
  perturb.n_candidates = config.algorithm == Algorithm::kMgd    ? hp.mgd_candidates
                         : config.algorithm == Algorithm::kNsgd ? hp.nsgd_candidates
                                                                : 1;
  perturb.history_capacity = hp.nsgd_history;
  const SimulatedClickEnv click_env{env.click_model};
  IpwOptions ipw_opt;
  ipw_opt.max_inverse_weight = config.click.ipw_max_weight;
  DlaOptions dla_opt;
  dla_opt.max_weight = hp.dla_max_weight;
  const double dla_prop_lr = hp.dla_propensity_lr > 0 ? hp.dla_propensity_lr : lr;
  if (config.algorithm == Algorithm::kIpw)
    detail::require<ConfigError>(env.propensity.has_value(), "ipw needs a propensity estimate in the environment");

  RankerParams best = params;
  double best_value = mean_ndcg_at(params, env.valid, 10);
  rec.trace.push_back({0, best_value});

  for (std::size_t step = 1; step <= config.n_steps; ++step) {
    if (is_interleaving(config.algorithm)) {
      const auto qi = source.pick_query();
      const auto& q = env.train.queries[qi];
      switch (config.algorithm) {
        case Algorithm::kDbgd: params = dbgd_step(std::move(params), perturb, q, qi, config.paradigm, click_env, rng); break;
        case Algorithm::kMgd: params = mgd_step(std::move(params), perturb, q, qi, config.paradigm, click_env, rng); break;
        default: params = nsgd_step(std::move(params), perturb, q, qi, config.paradigm, click_env, rng); break;
      }
    } else {
      // Bandit learners, PDGD included, consume one session per step.
      const auto batch = source.next_batch(params, config.algorithm == Algorithm::kPdgd ? 1 : config.batch_size);
      switch (config.algorithm) {
        case Algorithm::kNa: params = na_update(std::move(params), env.train, batch, lr); break;
        case Algorithm::kIpw: params = ipw_update(std::move(params), env.train, batch, *env.propensity, lr, ipw_opt); break;
        case Algorithm::kRem: rem_update(params, rem, env.train, batch, lr, hp.rem_smoothing); break;
        case Algorithm::kDla: dla_update(params, dla, env.train, batch, lr, dla_prop_lr, dla_opt); break;
        case Algorithm::kPairD: paird_update(params, paird, env.train, batch, lr, hp.paird_smoothing); break;
        case Algorithm::kPdgd: params = pdgd_update(std::move(params), env.train, batch, lr); break;
        default: break;
      }
    }
    if (step % config.eval_interval == 0 || step == config.n_steps) {
      const double v = mean_ndcg_at(params, env.valid, 10);
      rec.trace.push_back({step, v});
      if (v > best_value) {
        best_value = v;
        best = params;
        rec.selected_step = step;
      }
    }
  }

  rec.selected = std::move(best);
  rec.test = evaluate(rec.selected, env.test);
  switch (config.algorithm) {
    case Algorithm::kIpw: rec.learner_state["propensity"] = detail::to_vector(env.propensity->weights); break;
    case Algorithm::kRem: rec.learner_state["rem_beta"] = detail::to_vector(rem.beta); break;
    case Algorithm::kDla:
      rec.learner_state["dla_logits"] = detail::to_vector(dla.logits);
      rec.learner_state["propensity"] = detail::to_vector(dla.estimate().weights);
      break;
    case Algorithm::kPairD:
      rec.learner_state["paird_t_plus"] = detail::to_vector(paird.t_plus);
      rec.learner_state["paird_t_minus"] = detail::to_vector(paird.t_minus);
      break;
    default: break;
  }
  if (config.algorithm == Algorithm::kNsgd) rec.diagnostics["nsgd_fallbacks"] = static_cast<double>(perturb.fallbacks);
  rec.diagnostics["best_valid_ndcg10"] = best_value;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

inline RunRecord run(const ExperimentConfig& config) {
  config.validate();
  const auto env = build_environment(config);
  return run(config, env, config.seeds.front());
}

inline std::uint64_t repeat_seed(const ExperimentConfig& config, std::size_t r) {
  if (r < config.seeds.size()) return config.seeds[r];
  return config.seeds.back() + (r - config.seeds.size() + 1);
}

struct Comparison {
  MetricReport report;
  std::vector<std::vector<RunRecord>> runs;  // [config][repeat]
};

struct CompareOptions {
  std::size_t n_permutations = 10000;
  std::size_t workers = 1;
  std::uint64_t test_seed = 0xf15;
};

// True when two configs share data, click environment and production setup.
inline bool same_environment(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.data == b.data && a.click.eta == b.click.eta && a.click.epsilon == b.click.epsilon &&
         a.production == b.production && a.log_sessions == b.log_sessions && a.env_seed == b.env_seed;
}

// Runs each config n_repeats times on one shared environment and reports
// mean/std over repeats plus Fisher-test p-values against `baseline_name`
// on per-query values pooled over repeats.
inline Comparison repeat_and_compare(std::span<const ExperimentConfig> configs, std::size_t n_repeats,
                                     const std::string& baseline_name, const CompareOptions& options = {}) {
  detail::require(n_repeats >= 1, "n_repeats must be >= 1");
  detail::require<ConfigError>(!configs.empty(), "no configs to compare");
  bool need_log = false, need_prop = false;
  for (const auto& c : configs) {
    c.validate();
    detail::require<ConfigError>(same_environment(c, configs.front()), "config ", c.system_name(),
                                 " uses a different dataset or click environment than ", configs.front().system_name());
    need_log = need_log || c.paradigm == Paradigm::kOff;
    need_prop = need_prop || c.algorithm == Algorithm::kIpw;
  }
  std::size_t baseline = configs.size();
  for (std::size_t i = 0; i < configs.size(); ++i)
    if (configs[i].system_name() == baseline_name) baseline = i;
  detail::require<ConfigError>(baseline < configs.size(), "baseline '", baseline_name, "' is not among the configs");

  // Propensities come from the first ipw config's click settings.
  const ExperimentConfig* prop_config = &configs.front();
  for (const auto& c : configs)
    if (c.algorithm == Algorithm::kIpw) {
      prop_config = &c;
      break;
    }
  const Environment env = build_environment(*prop_config, need_log, need_prop);

  Comparison out;
  out.runs.assign(configs.size(), std::vector<RunRecord>(n_repeats));
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t c = 0; c < configs.size(); ++c)
    for (std::size_t r = 0; r < n_repeats; ++r) jobs.emplace_back(c, r);
  const std::size_t workers = std::max<std::size_t>(1, options.workers);
  for (std::size_t start = 0; start < jobs.size(); start += workers) {
    std::vector<std::future<RunRecord>> futures;
    const std::size_t end = std::min(jobs.size(), start + workers);
    for (std::size_t k = start; k < end; ++k) {
      const auto [c, r] = jobs[k];
      futures.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                   [&, c = c, r = r] { return run(configs[c], env, repeat_seed(configs[c], r)); }));
    }
    for (std::size_t k = start; k < end; ++k) out.runs[jobs[k].first][jobs[k].second] = futures[k - start].get();
  }

  out.report.baseline = baseline_name;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    SystemSummary s;
    s.name = configs[c].system_name();
    s.n_repeats = n_repeats;
    for (std::size_t k = 0; k < kCutoffs.size(); ++k) {
      std::vector<double> ndcg_means, err_means;
      for (const auto& rec : out.runs[c]) {
        ndcg_means.push_back(rec.test.mean_ndcg(k));
        err_means.push_back(rec.test.mean_err(k));
        s.ndcg_per_query[k].insert(s.ndcg_per_query[k].end(), rec.test.ndcg[k].begin(), rec.test.ndcg[k].end());
        s.err_per_query[k].insert(s.err_per_query[k].end(), rec.test.err[k].begin(), rec.test.err[k].end());
      }
      std::tie(s.ndcg_mean[k], s.ndcg_std[k]) = mean_std(ndcg_means);
      std::tie(s.err_mean[k], s.err_std[k]) = mean_std(err_means);
    }
    out.report.systems.push_back(std::move(s));
  }
  const auto& base = out.report.systems[baseline];
  for (auto& s : out.report.systems) {
    for (std::size_t k = 0; k < kCutoffs.size(); ++k) {
      Rng rng = make_rng(options.test_seed, k);
      s.ndcg_p[k] = fisher_randomization_test(s.ndcg_per_query[k], base.ndcg_per_query[k], options.n_permutations, rng);
      Rng rng2 = make_rng(options.test_seed, 100 + k);
      s.err_p[k] = fisher_randomization_test(s.err_per_query[k], base.err_per_query[k], options.n_permutations, rng2);
    }
  }
  return out;
}

}  // namespace ultr
