#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "clbench/checkpoint.hpp"
#include "clbench/config.hpp"
#include "clbench/experiment.hpp"
#include "support.hpp"

using namespace clbench;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(Method method = Method::ER) {
  ExperimentConfig c;
  c.stream.num_tasks = 3;
  c.stream.input_dim = 6;
  c.stream.train_per_class = 30;
  c.stream.test_per_class = 10;
  c.stream.task_spread = 2.0;
  c.model.hidden = {8};
  c.strategy.method = method;
  c.buffer_capacity = 20;
  c.epochs = 1;
  c.seeds = {1, 2, 3};
  return c;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("clbench_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CLBENCH_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config round trip") {
  ExperimentConfig c = tiny_config(Method::DERpp_BNT);
  c.strategy.lr = 0.1 / 3.0;
  c.strategy.bnt_param_stats = BntParamStats::RunningEma;
  c.stream.overlap = 0.3;
  c.model.hidden = {7, 5, 3};
  c.seeds = {4, 8, 15};
  c.output_dir = "out/x";
  c.name = "custom";
  c.probe.ema_drift = true;
  c.jobs = 3;
  CHECK(parse_config(serialize_config(c)) == c);
  CHECK(parse_config(serialize_config(ExperimentConfig{})) == ExperimentConfig{});
  CHECK(serialize_config(parse_config(serialize_config(c))) == serialize_config(c));
}

TEST_CASE("config parsing") {
  auto c = parse_config("# desk run\nstrategy.method = ER_BNT  # trailing\n\ntrain.epochs=3\n");
  CHECK(c.strategy.method == Method::ER_BNT);
  CHECK(c.epochs == 3);
  CHECK_THROWS_AS(parse_config("strategy.bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("strategy.lr\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("strategy.lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("strategy.method = GEM\n"), ConfigError);
  try {
    parse_config("train.epochs = 1\nfoo.bar = 2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("foo.bar") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/clbench.cfg"), ConfigError);
  CHECK(parse_seed_list("3,1,2") == std::vector<std::uint64_t>{3, 1, 2});
  CHECK_THROWS_AS(parse_seed_list(""), ConfigError);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  CHECK_NOTHROW(c.validate());
  auto no_seeds = c;
  no_seeds.seeds.clear();
  CHECK_THROWS_AS(no_seeds.validate(), ConfigError);
  auto icarl = tiny_config(Method::iCaRL);
  icarl.buffer_capacity = 5;  // 6 classes
  CHECK_THROWS_AS(icarl.validate(), ConfigError);
  icarl.buffer_capacity = 6;
  CHECK_NOTHROW(icarl.validate());
}

TEST_CASE("fingerprints") {
  const auto c = tiny_config();
  const auto fp = config_fingerprint(c);
  CHECK(fp.size() == 16);
  CHECK(fp.find_first_not_of("0123456789abcdef") == std::string::npos);

  // Oracle: FNV-1a over the canonical lines that can change results.
  std::string canonical;
  std::istringstream lines(serialize_config(c));
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("run.output_dir", 0) == 0 || line.rfind("run.jobs", 0) == 0) continue;
    canonical += line + "\n";
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
  CHECK(fp == hex);

  auto moved = c;
  moved.output_dir = "elsewhere";
  moved.jobs = 4;
  CHECK(config_fingerprint(moved) == fp);
  auto changed = c;
  changed.strategy.lr = 0.01;
  CHECK(config_fingerprint(changed) != fp);
  CHECK(stream_fingerprint(changed) == stream_fingerprint(c));
  changed.stream.seed = 9;
  CHECK(stream_fingerprint(changed) != stream_fingerprint(c));
}

TEST_CASE("single separable task trained with plain SGD") {
  ExperimentConfig c;
  c.stream.num_tasks = 1;
  c.stream.classes_per_task = 2;
  c.stream.input_dim = 6;
  c.stream.mean_spread = 3.0;
  c.stream.train_per_class = 100;
  c.stream.test_per_class = 50;
  c.model.hidden = {16};
  c.strategy.method = Method::SGD_only;
  c.seeds = {1, 2};
  auto record = run_experiment(c);
  REQUIRE(record.succeeded == 2);
  CHECK(record.acc_mean >= 0.95);
  CHECK(!record.bwt_mean.has_value());
  for (const auto& s : record.seeds) CHECK(!s.bwt.has_value());
}

TEST_CASE("aggregates are means over seeds and deterministic") {
  const auto c = tiny_config();
  auto a = run_experiment(c);
  REQUIRE(a.seeds.size() == 3);
  REQUIRE(a.succeeded == 3);
  double sum = 0.0, bsum = 0.0;
  for (const auto& s : a.seeds) {
    CHECK(s.accuracy.num_tasks() == 3);
    sum += s.acc;
    bsum += *s.bwt;
  }
  CHECK(a.acc_mean == doctest::Approx(sum / 3).epsilon(1e-15));
  CHECK(*a.bwt_mean == doctest::Approx(bsum / 3).epsilon(1e-15));
  double ss = 0.0;
  for (const auto& s : a.seeds) ss += (s.acc - a.acc_mean) * (s.acc - a.acc_mean);
  CHECK(a.acc_std == doctest::Approx(std::sqrt(ss / 2)).epsilon(1e-12));

  auto b = run_experiment(c);
  std::ostringstream ra, rb;
  write_results_csv(a, ra);
  write_results_csv(b, rb);
  CHECK(ra.str() == rb.str());
  CHECK(a.acc_mean == b.acc_mean);
  CHECK(a.acc_std == b.acc_std);

  auto parallel = c;
  parallel.jobs = 3;
  auto p = run_experiment(parallel);
  std::ostringstream rp;
  write_results_csv(p, rp);
  CHECK(rp.str() == ra.str());
}

TEST_CASE("permuting seeds permutes results only") {
  auto c = tiny_config(Method::ER_BNT);
  auto forward = run_experiment(c);
  c.seeds = {3, 1, 2};
  auto shuffled = run_experiment(c);
  CHECK(shuffled.acc_mean == forward.acc_mean);
  CHECK(shuffled.acc_std == forward.acc_std);
  CHECK(*shuffled.bwt_mean == *forward.bwt_mean);
  CHECK(shuffled.seeds[0].accuracy == forward.seeds[2].accuracy);
  CHECK(shuffled.seeds[1].accuracy == forward.seeds[0].accuracy);
  CHECK(shuffled.fingerprint != forward.fingerprint);
}

TEST_CASE("a failing seed is recorded and the rest proceed") {
  auto c = tiny_config();
  c.seeds = {1, 2};
  int calls = 0;
  auto record = run_experiment(c, [&](const TaskStream&, Learner&, SeedResult& r) {
    if (++calls == 1) throw std::runtime_error("injected failure for seed " + std::to_string(r.seed));
  });
  REQUIRE(record.seeds.size() == 2);
  CHECK(!record.seeds[0].ok);
  CHECK(record.seeds[0].error.find("injected") != std::string::npos);
  CHECK(record.seeds[1].ok);
  CHECK(record.succeeded == 1);
  CHECK(!record.failed());
  CHECK(record.acc_mean == record.seeds[1].acc);

  auto all_fail = run_experiment(c, [](const TaskStream&, Learner&, SeedResult&) {
    throw std::runtime_error("boom");
  });
  CHECK(all_fail.failed());
}

TEST_CASE("result files determine the reported aggregates") {
  const auto dir = scratch_dir("persist");
  auto c = tiny_config(Method::ER_CurBuf);
  c.output_dir = dir.string();
  auto record = run_experiment(c);
  REQUIRE(fs::exists(dir / "results.csv"));
  REQUIRE(fs::exists(dir / "summary.json"));

  std::ifstream results(dir / "results.csv");
  std::string header;
  std::getline(results, header);
  CHECK(header == "seed,method,after_task,eval_task,accuracy");
  results.seekg(0);
  auto matrices = read_results_csv(results);
  REQUIRE(matrices.size() == 3);
  std::vector<double> accs, bwts;
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    CHECK(matrices[i].first == c.seeds[i]);
    CHECK(matrices[i].second == record.seeds[i].accuracy);
    accs.push_back(acc_metric(matrices[i].second));
    bwts.push_back(*bwt_metric(matrices[i].second));
  }

  auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  for (const char* key : {"method", "acc_mean", "acc_std", "bwt_mean", "bwt_std", "seeds", "fingerprint"})
    CHECK(summary.contains(key));
  CHECK(summary["method"] == "ER_CurBuf");
  CHECK(summary["fingerprint"] == config_fingerprint(c));
  CHECK(summary["seeds"] == nlohmann::json(c.seeds));
  double mean = 0.0, bmean = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    mean += accs[i] / 3.0;
    bmean += bwts[i] / 3.0;
  }
  double ss = 0.0;
  for (double a : accs) ss += (a - mean) * (a - mean);
  CHECK(summary["acc_mean"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
  CHECK(summary["bwt_mean"].get<double>() == doctest::Approx(bmean).epsilon(1e-12));
  CHECK(summary["acc_std"].get<double>() == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("comparison tables") {
  auto c = tiny_config();
  auto a = run_experiment(c);
  auto b = a;
  b.method = "ER_again";
  auto table = compare_records({a, b}, true);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.paired_seeds == 3);
  CHECK(table.win_rate[0][1] == 0.5);
  CHECK(table.win_rate[1][0] == 0.5);
  CHECK(table.wins[0][1] == 0);
  CHECK(table.rows[0].acc_mean - table.rows[1].acc_mean == 0.0);

  std::ostringstream out;
  write_comparison_csv(table, out);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "method,acc_mean,acc_std,bwt_mean,bwt_std");
  std::vector<std::string> methods;
  while (std::getline(lines, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
    methods.push_back(line.substr(0, line.find(',')));
  }
  CHECK(methods == std::vector<std::string>{"ER", "ER_again"});

  auto unpaired = compare_records({a, b}, false);
  CHECK(unpaired.win_rate.empty());
  auto other_seeds = b;
  other_seeds.seeds.pop_back();
  CHECK_THROWS_AS(compare_records({a, other_seeds}, true), ConfigError);

  auto d = tiny_config(Method::ER_BNT);
  d.stream.seed = 42;
  CHECK_THROWS_AS(compare_methods({c, d}, true), ConfigError);
  CHECK_NOTHROW(compare_methods({c, d}, false));
}

TEST_CASE("checkpoint round trip is exact") {
  auto c = tiny_config(Method::DERpp);
  auto stream = build_stream(c);
  ModelConfig m = c.model;
  m.input_dim = stream.input_dim;
  m.num_classes = stream.num_classes;
  Learner learner(m, c.strategy, c.buffer_capacity, 1);
  for (const auto& t : stream.tasks) run_task(learner, t, 1);

  std::stringstream io;
  save_checkpoint(learner.model, learner.buffer, io);
  auto loaded = load_checkpoint(io);
  CHECK(testing::same_bits(loaded.model.flat_parameters(), learner.model.flat_parameters()));
  CHECK(loaded.model.running_stats() == learner.model.running_stats());
  CHECK(loaded.model.config() == learner.model.config());
  CHECK(loaded.buffer.entries() == learner.buffer.entries());
  CHECK(loaded.buffer.seen_count() == learner.buffer.seen_count());
  CHECK(loaded.buffer.capacity() == learner.buffer.capacity());

  std::istringstream truncated(io.str().substr(0, io.str().size() / 2));
  CHECK_THROWS(load_checkpoint(truncated));
  std::istringstream wrong("not a checkpoint\n");
  CHECK_THROWS_AS(load_checkpoint(wrong), ContractError);
}

TEST_CASE("output directory root from the environment") {
  ::setenv("CLBENCH_OUT_DIR", "/tmp/clbench_root", 1);
  CHECK(resolve_output_dir("runs/a") == "/tmp/clbench_root/runs/a");
  CHECK(resolve_output_dir("/abs/b") == "/abs/b");
  ::unsetenv("CLBENCH_OUT_DIR");
  CHECK(resolve_output_dir("runs/a") == "runs/a");
}

TEST_CASE("command line exit codes and determinism") {
  const auto dir = scratch_dir("cli");
  const auto cfg = dir / "tiny.cfg";
  {
    auto c = tiny_config();
    c.seeds = {1};
    std::ofstream(cfg) << serialize_config(c);
  }
  CHECK(run_cli("run --config " + (dir / "missing.cfg").string()) == 1);
  CHECK(run_cli("run --config " + cfg.string() + " --no-such-flag") == 1);
  CHECK(run_cli("run --config " + cfg.string() + " --set strategy.lr=-1") == 1);
  CHECK(run_cli("frobnicate") == 1);

  const std::string out1 = (dir / "a").string();
  const std::string out2 = (dir / "b").string();
  REQUIRE(run_cli("run --config " + cfg.string() + " --seeds 1 --out " + out1) == 0);
  REQUIRE(run_cli("run --config " + cfg.string() + " --seeds 1 --out " + out2) == 0);
  CHECK(slurp(fs::path(out1) / "results.csv") == slurp(fs::path(out2) / "results.csv"));
  CHECK(!slurp(fs::path(out1) / "results.csv").empty());

  // The error for a missing config names the path.
  const std::string log = (dir / "log.txt").string();
  const int rc = std::system((std::string(CLBENCH_CLI) + " run --config " + (dir / "missing.cfg").string() +
                              " > " + log + " 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 1);
  CHECK(slurp(log).find("missing.cfg") != std::string::npos);

  const auto stream_csv = dir / "stream.csv";
  CHECK(run_cli("gen-stream --config " + cfg.string() + " --out " + stream_csv.string()) == 0);
  CHECK(read_stream_csv(stream_csv.string()).tasks.size() == 3);

  const auto cfg2 = dir / "bnt.cfg";
  {
    auto c = tiny_config(Method::ER_BNT);
    c.seeds = {1};
    std::ofstream(cfg2) << serialize_config(c);
  }
  const std::string cmp = (dir / "cmp").string();
  CHECK(run_cli("compare --configs " + cfg.string() + "," + cfg2.string() + " --paired --out " + cmp) == 0);
  std::istringstream rows(slurp(fs::path(cmp) / "comparison.csv"));
  std::string line;
  std::getline(rows, line);
  std::getline(rows, line);
  CHECK(line.rfind("ER,", 0) == 0);
  std::getline(rows, line);
  CHECK(line.rfind("ER_BNT,", 0) == 0);
  fs::remove_all(dir);
}
