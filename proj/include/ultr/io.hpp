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

// Persistence: JSON checkpoints, propensity files, session logs, run
// records, CSV/JSON reports and strict experiment-config parsing.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "ultr/harness.hpp"

namespace ultr::io {

using nlohmann::json;
namespace fs = std::filesystem;

// Writes to a sibling temp file and renames it over `path`.
inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
}

// ---- Checkpoints ----------------------------------------------------------------

inline json checkpoint_to_json(const RankerParams& p, const std::optional<FeatureScaler>& scaler = std::nullopt) {
  json j;
  j["kind"] = std::string(to_string(p.kind));
  j["layer_norm"] = p.layer_norm_enabled;
  j["layers"] = json::array();
  for (const auto& l : p.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    j["layers"].push_back({{"in", l.in()},
                           {"out", l.out()},
                           {"weight", w},
                           {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  if (scaler) j["normalization"] = {{"min", scaler->min}, {"inv_range", scaler->inv_range}};
  return j;
}

struct Checkpoint {
  RankerParams params;
  std::optional<FeatureScaler> scaler;
};

inline Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint cp;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "linear") cp.params.kind = RankerKind::kLinear;
    else if (kind == "mlp") cp.params.kind = RankerKind::kMlp;
    else throw ValidationError("unknown ranker kind '" + kind + "'");
    cp.params.layer_norm_enabled = j.value("layer_norm", false);
    for (const auto& jl : j.at("layers")) {
      const auto in = jl.at("in").get<Eigen::Index>();
      const auto out = jl.at("out").get<Eigen::Index>();
      const auto w = jl.at("weight").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      detail::require<ValidationError>(in >= 1 && out >= 1 && static_cast<Eigen::Index>(w.size()) == in * out &&
                                           static_cast<Eigen::Index>(b.size()) == out,
                                       "checkpoint layer shape mismatch");
      Layer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * in + c)];
      for (Eigen::Index r = 0; r < out; ++r) l.bias(r) = b[static_cast<std::size_t>(r)];
      cp.params.layers.push_back(std::move(l));
    }
    if (j.contains("normalization")) {
      FeatureScaler s;
      s.min = j["normalization"].at("min").get<std::vector<double>>();
      s.inv_range = j["normalization"].at("inv_range").get<std::vector<double>>();
      detail::require<ValidationError>(s.min.size() == s.inv_range.size(), "normalization vectors differ in length");
      cp.scaler = std::move(s);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
  cp.params.validate();
  return cp;
}

// ---- Propensities ---------------------------------------------------------------

inline json propensity_to_json(const PositionWeights& w) { return json(std::vector<double>(w.begin(), w.end())); }

inline PropensityEstimate propensity_from_json(const json& j) {
  detail::require<ValidationError>(j.is_array() && j.size() == kDisplayCutoff, "propensity file must hold ",
                                   kDisplayCutoff, " numbers");
  PositionWeights w{};
  for (std::size_t i = 0; i < kDisplayCutoff; ++i) {
    detail::require<ValidationError>(j[i].is_number(), "propensity entries must be numbers");
    w[i] = j[i].get<double>();
  }
  return PropensityEstimate::from_weights(w, PropensitySource::kRandomization);
}

// ---- Session logs (JSON lines) ---------------------------------------------------

inline void write_sessions(std::ostream& out, const Dataset& ds, std::span<const Session> log) {
  for (const auto& s : log) {
    const auto& q = ds.queries.at(s.query);
    json j;
    j["query_id"] = q.query_id;
    j["displayed"] = json::array();
    for (auto d : s.displayed) j["displayed"].push_back(q.candidates.at(d).doc_id);
    j["clicks"] = std::vector<int>(s.clicks.begin(), s.clicks.end());
    out << j.dump() << '\n';
  }
}

inline std::vector<Session> read_sessions(std::istream& in, const Dataset& ds) {
  std::map<std::string, std::size_t> qindex;
  for (std::size_t i = 0; i < ds.queries.size(); ++i) qindex[ds.queries[i].query_id] = i;
  std::vector<Session> log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      Session s;
      const auto qit = qindex.find(j.at("query_id").get<std::string>());
      if (qit == qindex.end()) throw ParseError(lineno, "unknown query id");
      s.query = qit->second;
      const auto& q = ds.queries[s.query];
      for (const auto& d : j.at("displayed")) {
        const auto id = d.get<std::string>();
        std::size_t k = 0;
        while (k < q.candidates.size() && q.candidates[k].doc_id != id) ++k;
        if (k == q.candidates.size()) throw ParseError(lineno, "unknown doc id '" + id + "'");
        s.displayed.push_back(k);
      }
      for (const auto& c : j.at("clicks")) s.clicks.push_back(static_cast<std::uint8_t>(c.get<int>() != 0));
      if (s.clicks.size() != s.displayed.size()) throw ParseError(lineno, "clicks and displayed differ in length");
      log.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return log;
}

// ---- Run records and reports -----------------------------------------------------

inline json evaluation_summary(const Evaluation& e) {
  json j;
  for (std::size_t k = 0; k < kCutoffs.size(); ++k) {
    const auto key = std::to_string(kCutoffs[k]);
    j["ndcg"][key] = e.mean_ndcg(k);
    j["err"][key] = e.mean_err(k);
  }
  return j;
}

inline json run_record_to_json(const RunRecord& r) {
  json j;
  j["name"] = r.name;
  j["algorithm"] = to_string(r.algorithm);
  j["paradigm"] = to_string(r.paradigm);
  j["seed"] = r.seed;
  j["trace"] = json::array();
  for (const auto& t : r.trace) j["trace"].push_back({{"step", t.step}, {"valid_ndcg10", t.valid_ndcg10}});
  j["selected_step"] = r.selected_step;
  j["selected"] = checkpoint_to_json(r.selected);
  j["test"] = evaluation_summary(r.test);
  j["wall_seconds"] = r.wall_seconds;
  j["diagnostics"] = r.diagnostics;
  j["learner_state"] = r.learner_state;
  return j;
}

inline constexpr const char* kTraceHeader = "algorithm,paradigm,seed,step,metric,cutoff,value";

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// Validation trace rows (metric valid_ndcg) followed by the selected
// checkpoint's test metrics (metric test_ndcg / test_err at the selected step).
inline void write_trace_rows(std::ostream& out, const RunRecord& r) {
  const std::string prefix = std::string(to_string(r.algorithm)) + "," + to_string(r.paradigm) + "," +
                             std::to_string(r.seed) + ",";
  for (const auto& t : r.trace) out << prefix << t.step << ",valid_ndcg,10," << format_double(t.valid_ndcg10) << '\n';
  for (std::size_t k = 0; k < kCutoffs.size(); ++k)
    out << prefix << r.selected_step << ",test_ndcg," << kCutoffs[k] << ',' << format_double(r.test.mean_ndcg(k)) << '\n';
  for (std::size_t k = 0; k < kCutoffs.size(); ++k)
    out << prefix << r.selected_step << ",test_err," << kCutoffs[k] << ',' << format_double(r.test.mean_err(k)) << '\n';
}

inline std::string trace_csv(std::span<const RunRecord> records) {
  std::ostringstream out;
  out << kTraceHeader << '\n';
  for (const auto& r : records) write_trace_rows(out, r);
  return out.str();
}

inline constexpr const char* kReportHeader = "system,metric,cutoff,mean,std,p_vs_baseline";

inline std::string report_csv(const MetricReport& rep) {
  std::ostringstream out;
  out << kReportHeader << '\n';
  for (const auto& s : rep.systems) {
    for (std::size_t k = 0; k < kCutoffs.size(); ++k)
      out << s.name << ",ndcg," << kCutoffs[k] << ',' << format_double(s.ndcg_mean[k]) << ','
          << format_double(s.ndcg_std[k]) << ',' << format_double(s.ndcg_p[k]) << '\n';
    for (std::size_t k = 0; k < kCutoffs.size(); ++k)
      out << s.name << ",err," << kCutoffs[k] << ',' << format_double(s.err_mean[k]) << ','
          << format_double(s.err_std[k]) << ',' << format_double(s.err_p[k]) << '\n';
  }
  return out.str();
}

inline json report_to_json(const MetricReport& rep) {
  json j;
  j["baseline"] = rep.baseline;
  j["systems"] = json::array();
  for (const auto& s : rep.systems) {
    json js;
    js["name"] = s.name;
    js["n_repeats"] = s.n_repeats;
    for (std::size_t k = 0; k < kCutoffs.size(); ++k) {
      const auto key = std::to_string(kCutoffs[k]);
      js["ndcg"][key] = {{"mean", s.ndcg_mean[k]}, {"std", s.ndcg_std[k]}, {"p_vs_baseline", s.ndcg_p[k]}};
      js["err"][key] = {{"mean", s.err_mean[k]}, {"std", s.err_std[k]}, {"p_vs_baseline", s.err_p[k]}};
    }
    j["systems"].push_back(std::move(js));
  }
  return j;
}

// ---- Strict config parsing -------------------------------------------------------

struct CliConfig {
  ExperimentConfig experiment;
  std::string output_dir;  // empty: caller decides
  std::string log_level = "info";
};

namespace detail {

// Reads declared keys from one JSON object and rejects the rest.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + k + "' in " + where_);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

}  // namespace detail

// `base_dir` anchors relative paths (the config file's directory).
inline CliConfig config_from_json(const json& j, const fs::path& base_dir) {
  CliConfig cli;
  auto& c = cli.experiment;
  detail::StrictObject root(j, "config");
  root.get("name", c.name);
  std::string algorithm = to_string(c.algorithm), paradigm = to_string(c.paradigm);
  root.get("algorithm", algorithm);
  root.get("paradigm", paradigm);
  c.algorithm = parse_algorithm(algorithm);
  c.paradigm = parse_paradigm(paradigm);
  root.get("learning_rate", c.learning_rate);
  root.get("batch_size", c.batch_size);
  root.get("n_steps", c.n_steps);
  root.get("eval_interval", c.eval_interval);
  root.get("log_sessions", c.log_sessions);
  root.get("env_seed", c.env_seed);
  root.get("seeds", c.seeds);
  root.get("output_dir", cli.output_dir);
  root.get("log_level", cli.log_level);
  cli.output_dir = detail::resolve(cli.output_dir, base_dir);

  if (const json* d = root.child("data")) {
    detail::StrictObject o(*d, root.path("data"));
    o.get("normalize", c.data.normalize);
    std::string train, valid, test;
    o.get("train", train);
    o.get("valid", valid);
    o.get("test", test);
    const json* syn = o.child("synthetic");
    if (syn && !train.empty()) throw ConfigError("config.data: give either synthetic or train/valid/test, not both");
    if (syn) {
      detail::StrictObject so(*syn, o.path("synthetic"));
      SyntheticSpec s;
      so.get("queries", s.n_queries);
      so.get("docs", s.docs_per_query);
      so.get("dim", s.feature_dim);
      so.get("seed", s.seed);
      so.finish();
      c.data.synthetic = s;
    } else if (!train.empty() || !valid.empty() || !test.empty()) {
      c.data.synthetic.reset();
      c.data.train_path = detail::resolve(train, base_dir);
      c.data.valid_path = detail::resolve(valid, base_dir);
      c.data.test_path = detail::resolve(test, base_dir);
    }
    o.finish();
  }
  if (const json* r = root.child("ranker")) {
    detail::StrictObject o(*r, root.path("ranker"));
    std::string kind = std::string(to_string(c.ranker.kind));
    o.get("kind", kind);
    if (kind == "linear") c.ranker.kind = RankerKind::kLinear;
    else if (kind == "mlp") c.ranker.kind = RankerKind::kMlp;
    else throw ConfigError("config.ranker.kind must be linear or mlp");
    o.get("hidden", c.ranker.hidden);
    o.get("layer_norm", c.ranker.layer_norm);
    o.finish();
  }
  if (const json* k = root.child("click")) {
    detail::StrictObject o(*k, root.path("click"));
    o.get("eta", c.click.eta);
    c.click.estimation_eta = c.click.eta;
    o.get("epsilon", c.click.epsilon);
    o.get("estimation_eta", c.click.estimation_eta);
    o.get("propensity_sessions", c.click.propensity_sessions);
    o.get("oracle_propensity", c.click.oracle_propensity);
    o.get("ipw_max_weight", c.click.ipw_max_weight);
    o.finish();
  }
  if (const json* p = root.child("production")) {
    detail::StrictObject o(*p, root.path("production"));
    o.get("fraction", c.production.fraction);
    o.get("seed", c.production.seed);
    o.get("epochs", c.production.epochs);
    o.get("learning_rate", c.production.learning_rate);
    o.finish();
  }
  if (const json* h = root.child("hyperparameters")) {
    detail::StrictObject o(*h, root.path("hyperparameters"));
    auto& hp = c.hyper;
    o.get("dbgd_delta", hp.dbgd_delta);
    o.get("dbgd_alpha", hp.dbgd_alpha);
    o.get("mgd_candidates", hp.mgd_candidates);
    o.get("nsgd_candidates", hp.nsgd_candidates);
    o.get("nsgd_history", hp.nsgd_history);
    o.get("rem_smoothing", hp.rem_smoothing);
    o.get("paird_clip", hp.paird_clip);
    o.get("paird_smoothing", hp.paird_smoothing);
    o.get("dla_propensity_lr", hp.dla_propensity_lr);
    o.get("dla_max_weight", hp.dla_max_weight);
    o.finish();
  }
  root.finish();
  static const std::set<std::string> levels = {"debug", "info", "warn", "error", "quiet"};
  if (!levels.count(cli.log_level)) throw ConfigError("config.log_level must be one of debug, info, warn, error, quiet");
  c.validate();
  return cli;
}

inline CliConfig load_config(const fs::path& path) {
  const auto text = read_file(path);
  return config_from_json(parse_json(text, path.string()), fs::absolute(path).parent_path());
}

}  // namespace ultr::io
