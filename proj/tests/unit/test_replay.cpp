#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "clbench/errors.hpp"
#include "clbench/replay.hpp"
#include "support.hpp"

using namespace clbench;

namespace {

BufferEntry item(int id, int label = 0) {
  BufferEntry e;
  e.input = {static_cast<double>(id)};
  e.label = label;
  return e;
}

Batch labelled(const std::vector<std::pair<int, int>>& counts, int& next_id) {
  Batch b;
  for (auto [label, n] : counts)
    for (int i = 0; i < n; ++i) b.push_back(item(next_id++, label));
  return b;
}

std::map<int, int> counts_of(const Batch& b) {
  std::map<int, int> c;
  for (const auto& e : b) ++c[e.label];
  return c;
}

}  // namespace

TEST_SUITE("replay_memory") {

TEST_CASE("reservoir fill phase") {
  Rng rng(1);
  ReplayBuffer buffer(2);
  buffer.reservoir_offer(item(0), rng);
  buffer.reservoir_offer(item(1), rng);
  CHECK(buffer.size() == 2);
  CHECK(buffer.entries()[0].input[0] == 0.0);
  CHECK(buffer.entries()[1].input[0] == 1.0);
  CHECK(buffer.seen_count() == 2);
}

TEST_CASE("reservoir size is min(seen, capacity)") {
  Rng rng(2);
  ReplayBuffer buffer(7);
  for (int i = 0; i < 30; ++i) {
    reservoir_offer(buffer, item(i), rng);
    CHECK(buffer.size() == std::min<std::size_t>(buffer.seen_count(), 7));
  }
}

TEST_CASE("capacity one keeps each of N items with probability 1/N") {
  Rng rng(3);
  std::vector<int> kept(10, 0);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    ReplayBuffer buffer(1);
    for (int i = 0; i < 10; ++i) buffer.reservoir_offer(item(i), rng);
    ++kept[static_cast<int>(buffer.entries()[0].input[0])];
  }
  for (int k : kept) CHECK(std::abs(k / double(trials) - 0.1) <= 0.02);
}

TEST_CASE("sixth offer to capacity five replaces with probability 5/6") {
  Rng rng(4);
  int replaced = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    ReplayBuffer buffer(5);
    for (int i = 0; i < 6; ++i) buffer.reservoir_offer(item(i), rng);
    for (const auto& e : buffer.entries()) replaced += e.input[0] == 5.0 ? 1 : 0;
  }
  CHECK(std::abs(replaced / double(trials) - 5.0 / 6.0) <= 0.02);
}

TEST_CASE("reservoir retention passes chi-square at 0.001") {
  Rng rng(5);
  const int capacity = 10, stream = 100, trials = 20000;
  std::vector<double> kept(stream, 0.0);
  for (int t = 0; t < trials; ++t) {
    ReplayBuffer buffer(capacity);
    for (int i = 0; i < stream; ++i) buffer.reservoir_offer(item(i), rng);
    for (const auto& e : buffer.entries()) kept[static_cast<std::size_t>(e.input[0])] += 1.0;
  }
  const double expected = double(trials) * capacity / stream;
  double chi2 = 0.0;
  for (double k : kept) chi2 += (k - expected) * (k - expected) / expected;
  CHECK(chi2 < testing::chi2_critical(stream - 1, 3.090232));
}

TEST_CASE("sample_buffer examples") {
  Rng rng(6);
  ReplayBuffer three(3);
  for (int i = 0; i < 3; ++i) three.reservoir_offer(item(i), rng);
  auto all = sample_buffer(three, 3, rng);
  std::set<double> ids;
  for (const auto& e : all) ids.insert(e.input[0]);
  CHECK(ids == std::set<double>{0, 1, 2});
  CHECK(sample_buffer(three, 10, rng).size() == 3);

  ReplayBuffer empty(4);
  CHECK(sample_buffer(empty, 5, rng).empty());

  ReplayBuffer split(100);
  for (int i = 0; i < 100; ++i) split.reservoir_offer(item(i, i % 2), rng);
  double class0 = 0.0;
  const int draws = 2000;
  for (int d = 0; d < draws; ++d) {
    auto b = sample_buffer(split, 20, rng);
    std::set<double> distinct;
    for (const auto& e : b) {
      class0 += e.label == 0 ? 1.0 : 0.0;
      distinct.insert(e.input[0]);
    }
    CHECK(distinct.size() == 20);
  }
  CHECK(std::abs(class0 / draws - 10.0) <= 1.0);
}

TEST_CASE("sample_prev_only examples") {
  Rng rng(7);
  const std::vector<int> current{4};
  ReplayBuffer only_current(10);
  for (int i = 0; i < 5; ++i) only_current.reservoir_offer(item(i, 4), rng);
  CHECK(sample_prev_only(only_current, current, 5, rng).empty());

  ReplayBuffer mixed(10);
  for (int i = 0; i < 5; ++i) mixed.reservoir_offer(item(i, 0), rng);
  for (int i = 5; i < 10; ++i) mixed.reservoir_offer(item(i, 4), rng);
  auto prev = sample_prev_only(mixed, current, 5, rng);
  CHECK(prev.size() == 5);
  for (const auto& e : prev) CHECK(e.label == 0);

  ReplayBuffer random_mix(40);
  for (int i = 0; i < 40; ++i) random_mix.reservoir_offer(item(i, i % 6), rng);
  const std::vector<int> cur{4, 5};
  for (int d = 0; d < 50; ++d)
    for (const auto& e : sample_prev_only(random_mix, cur, 8, rng)) CHECK((e.label != 4 && e.label != 5));
}

TEST_CASE("balance examples") {
  Rng rng(8);
  int id = 0;
  auto current = labelled({{4, 5}, {5, 5}}, id);
  CHECK(balance(current, {}, rng) == current);

  auto buffer = labelled({{0, 3}, {1, 3}, {2, 2}, {3, 2}}, id);
  auto b = balance(current, buffer, rng);
  CHECK(b.size() == 16);
  CHECK(counts_of(b) == std::map<int, int>{{0, 3}, {1, 3}, {2, 2}, {3, 2}, {4, 3}, {5, 3}});

  auto heavy = labelled({{0, 1}, {4, 5}}, id);  // k* = 3, class 4 already has 5
  auto c = balance(current, heavy, rng);
  CHECK(counts_of(c) == std::map<int, int>{{0, 1}, {4, 5}, {5, 3}});

  CHECK_THROWS_AS(balance({}, buffer, rng), ContractError);
}

TEST_CASE("balance construction rule holds on random batches") {
  Rng rng(9);
  std::uniform_int_distribution<int> cls(0, 5), size(1, 12);
  for (int trial = 0; trial < 500; ++trial) {
    int id = 0;
    Batch current, buffer;
    const int nc = size(rng), nb = size(rng) - 1;
    for (int i = 0; i < nc; ++i) current.push_back(item(id++, 4 + cls(rng) % 2));
    for (int i = 0; i < nb; ++i) buffer.push_back(item(id++, cls(rng)));
    auto b = balance(current, buffer, rng);

    // B_M is kept whole, in order, at the front.
    REQUIRE(b.size() >= buffer.size());
    CHECK(Batch(b.begin(), b.begin() + static_cast<long>(buffer.size())) == buffer);
    // Added entries are distinct members of B_t.
    std::set<double> added;
    for (std::size_t i = buffer.size(); i < b.size(); ++i) {
      CHECK(b[i].input[0] < nc);
      added.insert(b[i].input[0]);
    }
    CHECK(added.size() == b.size() - buffer.size());

    if (buffer.empty()) {
      CHECK(b == current);
      continue;
    }
    auto have = counts_of(buffer), avail = counts_of(current), got = counts_of(b);
    const int target = (nb + static_cast<int>(have.size()) - 1) / static_cast<int>(have.size());
    std::set<int> labels;
    for (auto& [l, n] : have) labels.insert(l);
    for (auto& [l, n] : avail) labels.insert(l);
    for (int l : labels) {
      const int h = have.count(l) ? have[l] : 0;
      const int a = avail.count(l) ? avail[l] : 0;
      const int expected = a == 0 ? h : std::max(h, std::min(target, h + a));
      CHECK(got[l] == expected);
    }
  }
}

TEST_CASE("herding examples") {
  const std::vector<std::vector<double>> f{{1, 0}, {0, 1}, {0.5, 0.5}};
  CHECK(herding_select(f, 1) == std::vector<std::size_t>{2});
  CHECK(herding_select(f, 2) == std::vector<std::size_t>{2, 0});
  auto all = herding_select(f, 3);
  CHECK(all.size() == 3);
  CHECK(std::set<std::size_t>(all.begin(), all.end()) == std::set<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(herding_select(f, 4), ContractError);
  CHECK_THROWS_AS(herding_select(f, 0), ContractError);
}

TEST_CASE("herding matches the brute-force greedy oracle") {
  Rng rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> rows(1, 8), dims(1, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t count = rows(rng), dim = dims(rng);
    std::vector<std::vector<double>> f(count, std::vector<double>(dim));
    for (auto& r : f)
      for (auto& v : r) v = n(rng);
    const auto full = herding_select(f, count);
    CHECK(full == testing::herding_oracle(f, count));
    for (std::size_t m = 1; m <= count; ++m) {
      auto prefix = herding_select(f, m);
      CHECK(prefix == std::vector<std::size_t>(full.begin(), full.begin() + static_cast<long>(m)));
    }
  }
}

TEST_CASE("icarl rebuild quotas and herding prefix") {
  Rng rng(11);
  auto model = testing::small_model(rng, 4, {5}, 4);
  auto task1 = testing::random_batch(16, 4, {0, 1}, rng);
  ReplayBuffer buffer(10);
  icarl_rebuild_buffer(model, task1, buffer, 10);
  CHECK(counts_of(buffer.entries()) == std::map<int, int>{{0, 5}, {1, 5}});

  // Exemplars of class 0 are the first five herding picks over its features.
  Batch class0;
  for (const auto& e : task1)
    if (e.label == 0) class0.push_back(e);
  auto picks = herding_select(embed(model, class0), 5);
  Batch expected;
  for (auto p : picks) expected.push_back(class0[p]);
  Batch stored0;
  for (const auto& e : buffer.entries())
    if (e.label == 0) stored0.push_back(e);
  CHECK(stored0 == expected);

  auto task2 = testing::random_batch(16, 4, {2, 3}, rng);
  icarl_rebuild_buffer(model, task2, buffer, 10);
  CHECK(counts_of(buffer.entries()) == std::map<int, int>{{0, 2}, {1, 2}, {2, 2}, {3, 2}});
  Batch kept0;
  for (const auto& e : buffer.entries())
    if (e.label == 0) kept0.push_back(e);
  CHECK(kept0 == Batch(expected.begin(), expected.begin() + 2));
}

TEST_CASE("buffer dump header and empty logit cells") {
  Rng rng(12);
  ReplayBuffer buffer(3);
  auto e = item(1, 2);
  e.task_id = 1;
  e.logits = std::vector<double>{0.5, -1.0, 2.0};
  buffer.reservoir_offer(e, rng);
  buffer.reservoir_offer(item(2, 0), rng);
  std::ostringstream out;
  write_buffer_csv(buffer, 3, out);
  std::istringstream in(out.str());
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK(header == "task_id,label,x_0,logit_0,logit_1,logit_2");
  CHECK(row1 == "1,2,1,0.5,-1,2");
  CHECK(row2 == "0,0,2,,,");
}

}
