#include "mfsb/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mfsb/error.hpp"

namespace mfsb {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

AdamState AdamState::for_params(std::span<const NamedTensor> params, AdamOptions options) {
  AdamState s;
  s.options = options;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<const NamedTensor> params, AdamState& state) {
  if (state.m.size() != params.size()) fail(ErrorKind::Contract, "Adam state does not match the parameter list");
  const AdamOptions& o = state.options;
  for (const auto& p : params) {
    if (p.tensor.requires_grad() && !p.tensor.has_grad()) {
      fail(ErrorKind::Contract, "trainable parameter " + p.name + " has no gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t), c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor param = params[i].tensor;
    if (!param.requires_grad()) continue;
    auto g = param.grad();
    auto w = param.mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      w[k] -= o.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + o.eps);
    }
    param.zero_grad();
  }
}

void train_epoch(CzslModel& model, std::span<const Sample> train, std::span<const PairId> seen_pairs,
                 AdamState& state, const TrainOptions& options, Rng& rng, TrainHistory& history) {
  if (train.empty()) fail(ErrorKind::Config, "empty training set");
  if (options.batch == 0) fail(ErrorKind::Config, "batch size must be positive");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const auto params = model.trainable();
  double epoch_total = 0.0;
  std::size_t steps = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += options.batch) {
    const std::size_t end = std::min(order.size(), begin + options.batch);
    std::vector<const Sample*> batch;
    for (std::size_t k = begin; k < end; ++k) batch.push_back(&train[order[k]]);
    LossBreakdown loss;
    {
      Tape tape;
      loss = model.batch_loss(batch, seen_pairs);
      tape.backward(loss.total_tensor);
    }
    adam_step(params, state);
    history.steps.push_back({loss.terms, loss.total});
    epoch_total += loss.total;
    ++steps;
  }
  history.epoch_mean_loss.push_back(epoch_total / static_cast<double>(steps));
}

EvalReport evaluate(const CzslModel& model, const CompositionSpace& space, const Split& split,
                    const Dataset& data, Partition partition, World world, std::size_t n_points) {
  const auto candidates = candidate_set(space, split, world, partition);
  const ScoreTable table = model.score(data.samples(partition), candidates, split);
  return summarize(bias_sweep(table, n_points), world);
}

TrainHistory fit(CzslModel& model, const CompositionSpace& space, const Split& split, const Dataset& data,
                 const TrainOptions& options, std::uint64_t seed, std::uint64_t config_hash,
                 const std::optional<std::filesystem::path>& checkpoint) {
  TrainHistory history;
  const auto params = model.trainable();
  AdamState state = AdamState::for_params(params, options.adam);
  Rng rng = make_rng(seed, Stream::Shuffle);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    train_epoch(model, data.train, split.seen, state, options, rng, history);
    if (options.validate_each_epoch) {
      history.epoch_reports.push_back(
          evaluate(model, space, split, data, Partition::Val, options.validation_world, options.n_points));
    }
  }
  if (checkpoint) write_checkpoint(*checkpoint, config_hash, params);
  return history;
}

namespace {

constexpr char kMagic[8] = {'M', 'F', 'S', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail(ErrorKind::Io, "truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash,
                      std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t dim : t.tensor.shape()) put<std::uint64_t>(out, dim);
    auto v = t.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    fail(ErrorKind::Io, path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) fail(ErrorKind::Io, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_hash = get<std::uint64_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) fail(ErrorKind::Io, "truncated checkpoint");
    const auto rank = get<std::uint32_t>(in, path);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in, path));
    std::vector<double> values(numel(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      fail(ErrorKind::Io, "truncated checkpoint " + path.string());
    }
    ck.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return ck;
}

void load_checkpoint(CzslModel& model, const std::filesystem::path& path, std::uint64_t config_hash) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.config_hash != config_hash) {
    fail(ErrorKind::Config, "checkpoint " + path.string() + " was written for a different configuration");
  }
  const auto params = model.trainable();
  if (params.size() != ck.tensors.size()) {
    fail(ErrorKind::Dimension, "checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model trains " +
                                   std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ck.tensors[i];
    if (src.name != params[i].name) fail(ErrorKind::Dimension, "checkpoint tensor " + src.name + " where " + params[i].name + " expected");
    if (src.tensor.shape() != params[i].tensor.shape()) {
      fail(ErrorKind::Dimension, "checkpoint tensor " + src.name + " has shape " + shape_string(src.tensor.shape()) +
                                     ", model expects " + shape_string(params[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor dst = params[i].tensor;
    auto out = dst.mutable_values();
    auto in = ck.tensors[i].tensor.values();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

}  // namespace mfsb
