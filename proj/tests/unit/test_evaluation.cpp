#include <doctest.h>

#include <cmath>
#include <sstream>

#include "clbench/evaluation.hpp"
#include "clbench/scenario.hpp"
#include "clbench/strategies.hpp"
#include "support.hpp"

using namespace clbench;
using testing::random_batch;
using testing::same_bits;
using testing::small_model;

namespace {

AccuracyMatrix matrix(const std::vector<std::vector<double>>& rows) {
  AccuracyMatrix r(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) r.set(i, j, rows[i][j]);
  return r;
}

// A model trained on a few tasks so that the EMA carries real statistics.
struct Trained {
  TaskStream stream;
  Learner learner;
};

Trained trained_learner(Method method = Method::ER) {
  StreamConfig s;
  s.num_tasks = 3;
  s.input_dim = 6;
  s.train_per_class = 30;
  s.test_per_class = 10;
  s.task_spread = 3.0;
  s.seed = 4;
  auto stream = make_gaussian_stream(s);
  ModelConfig m;
  m.input_dim = 6;
  m.hidden = {8, 6};
  m.num_classes = stream.num_classes;
  StrategyConfig cfg;
  cfg.method = method;
  Learner learner(m, cfg, 30, 2);
  for (const auto& task : stream.tasks) run_task(learner, task, 2);
  return {std::move(stream), std::move(learner)};
}

}  // namespace

TEST_CASE("acc and bwt examples") {
  CHECK(acc_metric(matrix({{0.9}, {0.5, 0.8}})) == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(*bwt_metric(matrix({{0.9}, {0.5, 0.8}})) == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(acc_metric(matrix({{1.0}, {1.0, 1.0}, {1.0, 1.0, 1.0}})) == 1.0);
  CHECK(acc_metric(matrix({{0.7}})) == 0.7);
  CHECK(!bwt_metric(matrix({{0.7}})).has_value());
  CHECK(*bwt_metric(matrix({{0.6}, {0.6, 0.4}, {0.6, 0.4, 0.9}})) == 0.0);
}

TEST_CASE("stable but implastic runs score zero forgetting") {
  auto r = matrix({{0.3}, {0.3, 0.3}});
  CHECK(*bwt_metric(r) == 0.0);
  CHECK(acc_metric(r) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("acc and bwt against a summation oracle") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + trial % 9;
    std::vector<std::vector<double>> rows(t);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j <= i; ++j) rows[i].push_back(u(rng));
    auto r = matrix(rows);
    long double acc = 0;
    for (double v : rows.back()) acc += v;
    acc /= t;
    CHECK(std::abs(acc_metric(r) - static_cast<double>(acc)) <= 1e-15);
    if (t > 1) {
      long double bwt = 0;
      for (std::size_t j = 0; j + 1 < t; ++j) bwt += static_cast<long double>(rows.back()[j]) - rows[j][j];
      bwt /= (t - 1);
      CHECK(std::abs(*bwt_metric(r) - static_cast<double>(bwt)) <= 1e-15);
    }
  }
}

TEST_CASE("accuracy matrix errors") {
  AccuracyMatrix r(2);
  CHECK_THROWS_AS(r.set(2, 0, 0.5), DimensionError);
  CHECK_THROWS_AS(r.set(0, 0, 1.5), DomainError);
  CHECK_THROWS_AS(r.set(0, 0, NAN), DomainError);
  r.set(0, 0, 0.5);
  CHECK_THROWS_AS(acc_metric(r), ContractError);
  CHECK_THROWS_AS(bwt_metric(r), ContractError);
  CHECK(!r.get(1, 0).has_value());
  CHECK(*r.get(0, 0) == 0.5);
}

TEST_CASE("linear head accuracy on a jointly trained separable task") {
  StreamConfig s;
  s.num_tasks = 1;
  s.classes_per_task = 3;
  s.input_dim = 6;
  s.mean_spread = 4.0;
  s.train_per_class = 100;
  s.test_per_class = 50;
  s.seed = 7;
  auto stream = make_gaussian_stream(s);
  ModelConfig m;
  m.input_dim = 6;
  m.hidden = {16};
  m.num_classes = 3;
  StrategyConfig cfg;
  cfg.method = Method::SGD_only;
  Learner learner(m, cfg, 10, 1);
  run_task(learner, stream.tasks[0], 10);
  CHECK(evaluate_task(learner.model, stream.tasks[0].test, Classifier::LinearHead) >= 0.99);
}

TEST_CASE("one-class test set predicted as that class") {
  Rng rng(2);
  ModelConfig m;
  m.input_dim = 3;
  m.hidden = {};
  m.num_classes = 2;
  MlpModel model(m, rng);
  // Head bias makes class 1 win everywhere.
  for (auto& w : model.linears().back().weight.values()) w = 0.0;
  model.linears().back().bias.values()[1] = 1.0;
  auto test = random_batch(20, 3, {1}, rng);
  CHECK(evaluate_task(model, test, Classifier::LinearHead) == 1.0);
  CHECK_THROWS_AS(evaluate_task(model, {}, Classifier::LinearHead), ContractError);
}

TEST_CASE("NCM ignores the head") {
  Rng rng(3);
  ModelConfig m;
  m.input_dim = 2;
  m.hidden = {};
  m.num_classes = 2;
  MlpModel model(m, rng);
  // Without hidden layers the features are the normalized inputs.
  ClassMeans means{{0, 1}, {{1.0, 0.0}, {0.0, 1.0}}};
  Batch points(2);
  points[0].input = {2.0, 0.0};
  points[0].label = 0;
  points[1].input = {0.0, 0.5};
  points[1].label = 1;
  for (double bias : {-5.0, 5.0}) {
    model.linears().back().bias.values()[0] = bias;
    CHECK(predict(model, points, Classifier::Ncm, &means) == std::vector<int>{0, 1});
  }
  CHECK_THROWS_AS(predict(model, points, Classifier::Ncm, nullptr), ContractError);
  ClassMeans none;
  CHECK_THROWS_AS(predict(model, points, Classifier::Ncm, &none), ContractError);
}

TEST_CASE("class means are means of unit features") {
  Rng rng(4);
  auto model = small_model(rng);
  auto exemplars = random_batch(12, 4, {2, 0}, rng);
  auto means = compute_class_means(model, exemplars);
  CHECK(means.labels == std::vector<int>{0, 2});
  auto features = embed(model, exemplars);
  for (std::size_t k = 0; k < means.labels.size(); ++k) {
    std::vector<double> oracle(features.front().size(), 0.0);
    int count = 0;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
      if (exemplars[i].label != means.labels[k]) continue;
      double norm = 0.0;
      for (double v : features[i]) norm += v * v;
      // All-zero ReLU outputs have no direction and stay zero.
      CHECK((norm == 0.0 || std::abs(std::sqrt(norm) - 1.0) <= 1e-12));
      for (std::size_t d = 0; d < oracle.size(); ++d) oracle[d] += features[i][d];
      ++count;
    }
    for (std::size_t d = 0; d < oracle.size(); ++d)
      CHECK(means.means[k][d] == doctest::Approx(oracle[d] / count).epsilon(1e-12));
  }
}

TEST_CASE("inference predictions do not depend on batching") {
  auto [stream, learner] = trained_learner();
  Batch all;
  for (const auto& t : stream.tasks) all = concat(all, t.test);
  const auto reference = predict(learner.model, all, Classifier::LinearHead, nullptr, 128);
  for (std::size_t b : {1u, 7u, 1000u}) CHECK(predict(learner.model, all, Classifier::LinearHead, nullptr, b) == reference);
  Batch reversed(all.rbegin(), all.rend());
  auto backwards = predict(learner.model, reversed, Classifier::LinearHead, nullptr, 13);
  std::reverse(backwards.begin(), backwards.end());
  CHECK(backwards == reference);

  auto means = compute_class_means(learner.model, learner.buffer.entries());
  const auto ncm = predict(learner.model, all, Classifier::Ncm, &means, 128);
  CHECK(predict(learner.model, all, Classifier::Ncm, &means, 5) == ncm);
}

TEST_CASE("drift probe restores the model bit for bit") {
  auto [stream, learner] = trained_learner();
  auto& model = learner.model;
  const auto params = model.flat_parameters();
  const auto stats = model.running_stats();
  std::vector<Batch> tests;
  for (const auto& t : stream.tasks) tests.push_back(t.test);
  Rng rng(5);
  std::vector<Batch> refresh;
  for (const auto& b : iterate_online(stream.tasks.back().train, 16, rng)) refresh.push_back(b);

  auto drift = ema_drift_probe(model, tests, refresh, Classifier::LinearHead);
  CHECK(drift.before.size() == 3);
  CHECK(drift.after.size() == 3);
  CHECK(same_bits(model.flat_parameters(), params));
  CHECK(model.running_stats() == stats);
  for (std::size_t t = 0; t < 3; ++t)
    CHECK(drift.before[t] == evaluate_task(model, stream.tasks[t].test, Classifier::LinearHead));

  auto ncm = ema_drift_probe(model, tests, refresh, Classifier::Ncm, &learner.buffer.entries());
  CHECK(model.running_stats() == stats);
  CHECK(same_bits(model.flat_parameters(), params));
  CHECK_THROWS_AS(ema_drift_probe(model, tests, refresh, Classifier::Ncm), ContractError);
  (void)ncm;
}

TEST_CASE("drift probe with no batches changes nothing") {
  auto [stream, learner] = trained_learner();
  std::vector<Batch> tests;
  for (const auto& t : stream.tasks) tests.push_back(t.test);
  auto drift = ema_drift_probe(learner.model, tests, {}, Classifier::LinearHead);
  CHECK(drift.before == drift.after);
}

TEST_CASE("activation export shape, determinism and round trip") {
  auto [stream, learner] = trained_learner();
  const auto& samples = stream.tasks[1].test;
  auto rows = export_activations(learner.model, samples);
  REQUIRE(rows.size() == samples.size());
  const std::size_t d = learner.model.feature_dim();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].features.size() == d);
    CHECK(rows[i].label == samples[i].label);
  }
  CHECK(export_activations(learner.model, samples) == rows);
  const auto predictions = predict(learner.model, samples, Classifier::LinearHead);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].prediction == predictions[i]);

  std::ostringstream out;
  write_activations_csv(rows, out);
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header.rfind("label,prediction,f0,", 0) == 0);
  CHECK(std::count(header.begin(), header.end(), ',') == static_cast<long>(1 + d));
  std::istringstream in(out.str());
  CHECK(read_activations_csv(in) == rows);

  std::istringstream bad("label,pred\n1,2\n");
  CHECK_THROWS_AS(read_activations_csv(bad), ContractError);
}
