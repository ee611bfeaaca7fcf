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

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "ultr/io.hpp"

namespace ultr {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string output;  // stdout and stderr
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(ULTR_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, "popen failed"};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(ULTR_TEST_TMP) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t query_count(const fs::path& p) {
  std::ifstream in(p);
  return parse_letor(in).queries.size();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Small dataset shared by the run/compare tests.
fs::path small_data() {
  static const fs::path dir = [] {
    auto d = scratch("data_" + std::to_string(::getpid()));
    const auto r = cli("gen-data --queries 120 --docs 10 --dim 5 --seed 3 -q --out " + q(d));
    EXPECT_EQ(r.code, 0) << r.output;
    return d;
  }();
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& body) {
  const auto path = dir / name;
  io::write_atomic(path, body);
  return path;
}

std::string data_block() {
  const auto d = small_data();
  return R"("data": {"train": ")" + (d / "train.txt").string() + R"(", "valid": ")" + (d / "valid.txt").string() +
         R"(", "test": ")" + (d / "test.txt").string() + R"("})";
}

TEST(GenData, WritesSplitsDeterministically) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(cli("gen-data -q --out " + q(a)).code, 0);
  ASSERT_EQ(cli("gen-data -q --out " + q(b)).code, 0);
  std::size_t total = 0;
  for (const char* f : {"train.txt", "valid.txt", "test.txt"}) {
    total += query_count(a / f);
    EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << f;
  }
  EXPECT_EQ(total, 1000u);
  EXPECT_EQ(query_count(a / "train.txt"), 800u);
}

TEST(GenData, RejectsBadFlagsAndPaths) {
  const auto r = cli("gen-data --docs 0 --out " + q(scratch("gen_bad")));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("--docs"), std::string::npos) << r.output;
  const auto dir = scratch("gen_file");
  io::write_atomic(dir / "blocker", "x");
  EXPECT_NE(cli("gen-data -q --queries 10 --out " + q(dir / "blocker" / "sub")).code, 0);
}

TEST(OutputDir, EnvironmentVariableIsTheDefault) {
  const auto dir = scratch("env_out");
  const std::string cmd = "ULTR_OUTPUT_DIR=" + q(dir) + " " + std::string(ULTR_CLI_PATH) +
                          " gen-data -q --queries 20 --docs 5 --dim 2 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "train.txt"));
}

TEST(EstimatePropensity, UniformExaminationGivesOnes) {
  const auto dir = scratch("prop");
  const auto out = dir / "prop.json";
  const auto r = cli("estimate-propensity -q --eta 0 --data " + q(small_data() / "train.txt") + " --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = io::parse_json(io::read_file(out), out.string());
  ASSERT_EQ(j.size(), 10u);
  for (const auto& w : j) EXPECT_NEAR(w.get<double>(), 1.0, 0.02);
}

TEST(EstimatePropensity, Errors) {
  EXPECT_NE(cli("estimate-propensity --sessions 0 --data " + q(small_data() / "train.txt")).code, 0);
  EXPECT_NE(cli("estimate-propensity -q --data " + q(scratch("prop_missing") / "nope.txt")).code, 0);
}

TEST(Run, RejectsUnsupportedPairing) {
  const auto dir = scratch("run_bad");
  const auto cfg = write_config(dir, "dbgd_off.json", R"({"algorithm": "dbgd", "paradigm": "off"})");
  const auto r = cli("run --config " + q(cfg) + " --out " + q(dir));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("unsupported pairing"), std::string::npos) << r.output;
}

TEST(Run, WritesOneRecordAndOneTrace) {
  const auto dir = scratch("run_ok");
  const auto cfg = write_config(dir, "na.json",
                                "{\"algorithm\": \"na\", \"paradigm\": \"off\", \"n_steps\": 40, \"eval_interval\": 10, "
                                "\"log_sessions\": 2000, \"output_dir\": \"artifacts\", " +
                                    data_block() + "}");
  const auto r = cli("run -q --config " + q(cfg));
  ASSERT_EQ(r.code, 0) << r.output;
  std::size_t json_files = 0, csv_files = 0;
  for (const auto& e : fs::directory_iterator(dir / "artifacts")) {
    const auto name = e.path().filename().string();
    json_files += name.ends_with(".run.json");
    csv_files += name.ends_with(".trace.csv");
  }
  EXPECT_EQ(json_files, 1u);
  EXPECT_EQ(csv_files, 1u);
  const auto record = dir / "artifacts" / "na_off_seed1.run.json";
  ASSERT_TRUE(fs::exists(record));
  const auto trace = io::read_file(dir / "artifacts" / "na_off_seed1.trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), io::kTraceHeader);

  // The stored checkpoint carries its normalization, so evaluate reproduces the run's test metrics.
  const auto ev = cli("evaluate --checkpoint " + q(record) + " --data " + q(small_data() / "test.txt"));
  ASSERT_EQ(ev.code, 0) << ev.output;
  const auto rec = io::parse_json(io::read_file(record), record.string());
  const auto metrics = io::parse_json(ev.output, "evaluate");
  EXPECT_NEAR(metrics["ndcg"]["10"].get<double>(), rec["test"]["ndcg"]["10"].get<double>(), 1e-12);
}

TEST(Compare, ReportHasOneSystemPerConfig) {
  const auto dir = scratch("compare");
  const std::string common = ", \"n_steps\": 30, \"eval_interval\": 10, \"log_sessions\": 2000, \"seeds\": [1, 2], "
                             "\"click\": {\"propensity_sessions\": 20000}, " + data_block() + "}";
  const auto a = write_config(dir, "na.json", "{\"algorithm\": \"na\", \"paradigm\": \"off\"" + common);
  const auto b = write_config(dir, "ipw.json", "{\"algorithm\": \"ipw\", \"paradigm\": \"off\"" + common);
  const auto c = write_config(dir, "pdgd.json", "{\"algorithm\": \"pdgd\", \"paradigm\": \"ons\"" + common);
  const auto out = dir / "out";
  const auto r = cli("compare -q --configs " + q(a) + " " + q(b) + " " + q(c) + " --baseline na_off --permutations 200 --out " +
                     q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rep = io::parse_json(io::read_file(out / "report.json"), "report.json");
  EXPECT_EQ(rep["baseline"], "na_off");
  ASSERT_EQ(rep["systems"].size(), 3u);
  for (const auto& s : rep["systems"]) {
    EXPECT_EQ(s["n_repeats"], 2);
    const double p = s["ndcg"]["10"]["p_vs_baseline"].get<double>();
    EXPECT_GT(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_EQ(rep["systems"][0]["ndcg"]["10"]["p_vs_baseline"].get<double>(), 1.0);
  const auto csv = io::read_file(out / "report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 8);
  EXPECT_TRUE(fs::exists(out / "trace.csv"));

  EXPECT_NE(cli("compare -q --configs " + q(a) + " --baseline missing --out " + q(out)).code, 0);
}

TEST(Cli, UnknownConfigKeyFails) {
  const auto dir = scratch("typo");
  const auto cfg = write_config(dir, "typo.json", R"({"algoritm": "na"})");
  const auto r = cli("run --config " + q(cfg));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("algoritm"), std::string::npos) << r.output;
  EXPECT_NE(cli("").code, 0);
}

}  // namespace
}  // namespace ultr
