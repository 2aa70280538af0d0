#include "clbench/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "clbench/csv.hpp"
#include "clbench/errors.hpp"

namespace clbench {

namespace {

constexpr const char* kMagic = "clbench-checkpoint";
constexpr int kVersion = 1;

void write_values(std::ostream& out, std::span<const double> values) {
  out << values.size();
  for (double v : values) out << ' ' << format_double(v);
  out << '\n';
}

std::vector<double> read_values(std::istream& in) {
  std::size_t n = 0;
  if (!(in >> n)) throw ContractError("truncated checkpoint");
  std::vector<double> v(n);
  for (auto& x : v) {
    std::string tok;
    if (!(in >> tok)) throw ContractError("truncated checkpoint");
    x = parse_double(tok);
  }
  return v;
}

void expect(std::istream& in, const std::string& word) {
  std::string tok;
  if (!(in >> tok) || tok != word) throw ContractError("malformed checkpoint: expected '" + word + "'");
}

void fill(Tensor t, const std::vector<double>& v) {
  auto dst = t.values();
  if (dst.size() != v.size()) throw DimensionError("checkpoint tensor size mismatch");
  std::copy(v.begin(), v.end(), dst.begin());
}

}  // namespace

void save_checkpoint(const MlpModel& model, const ReplayBuffer& buffer, std::ostream& out) {
  const auto& cfg = model.config();
  out << kMagic << ' ' << kVersion << '\n';
  out << "model " << cfg.input_dim << ' ' << cfg.num_classes << ' ' << format_double(cfg.bn_momentum) << ' '
      << format_double(cfg.bn_epsilon) << ' ' << cfg.hidden.size();
  for (auto h : cfg.hidden) out << ' ' << h;
  out << '\n';
  for (const auto& p : model.parameters()) {
    out << "param ";
    write_values(out, p.values());
  }
  for (const auto& n : model.norms()) {
    out << "running ";
    write_values(out, n.running().mean);
    out << "running ";
    write_values(out, n.running().var);
  }
  out << "buffer " << buffer.capacity() << ' ' << buffer.seen_count() << ' ' << buffer.size() << '\n';
  for (const auto& e : buffer.entries()) {
    out << "entry " << e.task_id << ' ' << e.label << ' ' << (e.logits ? 1 : 0) << '\n';
    write_values(out, e.input);
    if (e.logits) write_values(out, *e.logits);
  }
  out << "end\n";
}

void save_checkpoint(const MlpModel& model, const ReplayBuffer& buffer, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  save_checkpoint(model, buffer, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  expect(in, kMagic);
  int version = 0;
  if (!(in >> version) || version != kVersion) throw ContractError("unsupported checkpoint version");
  expect(in, "model");
  ModelConfig cfg;
  std::string mom, eps;
  std::size_t layers = 0;
  in >> cfg.input_dim >> cfg.num_classes >> mom >> eps >> layers;
  if (!in) throw ContractError("truncated checkpoint");
  cfg.bn_momentum = parse_double(mom);
  cfg.bn_epsilon = parse_double(eps);
  cfg.hidden.assign(layers, 0);
  for (auto& h : cfg.hidden) in >> h;

  Rng rng(0);
  MlpModel model(cfg, rng);
  for (auto& p : model.parameters()) {
    expect(in, "param");
    fill(p, read_values(in));
  }
  std::vector<Moments> stats;
  for (std::size_t i = 0; i < model.norms().size(); ++i) {
    Moments m;
    expect(in, "running");
    m.mean = read_values(in);
    expect(in, "running");
    m.var = read_values(in);
    stats.push_back(std::move(m));
  }
  model.restore_running_stats(stats);

  expect(in, "buffer");
  std::size_t capacity = 0, seen = 0, size = 0;
  in >> capacity >> seen >> size;
  if (!in) throw ContractError("truncated checkpoint");
  std::vector<BufferEntry> entries(size);
  for (auto& e : entries) {
    expect(in, "entry");
    int has_logits = 0;
    in >> e.task_id >> e.label >> has_logits;
    e.input = read_values(in);
    if (has_logits) e.logits = read_values(in);
  }
  expect(in, "end");
  ReplayBuffer buffer(capacity);
  buffer.restore(std::move(entries), seen);
  return Checkpoint{std::move(model), std::move(buffer)};
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace clbench
