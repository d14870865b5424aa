#include "mfsb/trainer.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace mfsb;
using namespace mfsb::testing;

namespace {

struct Task {
  CompositionSpace space;
  Split split;
  Dataset data;
};

Task small_task(std::uint64_t seed) {
  Task t;
  t.space = generate_space(3, 3, seed);
  SplitOptions o;
  o.train_per_pair = 3;
  o.eval_per_pair = 2;
  t.split = make_split(t.space, o, seed);
  t.data = materialize_dataset(t.space, t.split, build_generator(t.space, 8, seed), 0.1, seed);
  return t;
}

ModelConfig small_config() {
  ModelConfig c;
  c.d_in = 8;
  c.d = 8;
  c.prefix_length = 2;
  return c;
}

TrainOptions quick(std::size_t epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch = 4;
  o.n_points = 11;
  return o;
}

std::vector<double> snapshot(std::span<const NamedTensor> tensors) {
  std::vector<double> out;
  for (const auto& t : tensors) out.insert(out.end(), t.tensor.values().begin(), t.tensor.values().end());
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mfsb_test_trainer_" + name);
}

void set_grad(Tensor& t, std::span<const double> g) {
  // Route a known gradient through the tape: d/dt sum(g * t) = g.
  Tape tape;
  Tensor loss = sum(mul(t, Tensor(t.shape(), std::vector<double>(g.begin(), g.end()))));
  tape.backward(loss);
}

}  // namespace

TEST_CASE("zero gradients leave parameters unchanged and count the step") {
  Tensor w({3}, {1.0, -2.0, 0.5}, true);
  std::vector<NamedTensor> params{{"w", w}};
  AdamState state = AdamState::for_params(params);
  set_grad(w, std::vector<double>{0.0, 0.0, 0.0});
  adam_step(params, state);
  CHECK(state.step == 1);
  CHECK(w.values()[0] == 1.0);
  CHECK(w.values()[1] == -2.0);
  CHECK(w.values()[2] == 0.5);
}

TEST_CASE("the first bias-corrected step moves by lr in the gradient's sign") {
  for (double g : {3.7, -0.002, 120.0}) {
    Tensor w({1}, {0.25}, true);
    std::vector<NamedTensor> params{{"w", w}};
    AdamState state = AdamState::for_params(params, AdamOptions{0.01, 0.9, 0.999, 1e-12});
    set_grad(w, std::vector<double>{g});
    adam_step(params, state);
    CHECK(w.values()[0] == doctest::Approx(0.25 - 0.01 * (g > 0 ? 1.0 : -1.0)).epsilon(1e-9));
  }
}

TEST_CASE("Adam matches a reference trace on a quadratic") {
  // f(w) = 0.5 * sum(a_i * (w_i - c_i)^2), gradient a_i * (w_i - c_i).
  const std::vector<double> a{1.0, 4.0, 0.25}, c{0.3, -1.0, 2.0};
  const AdamOptions o{0.05, 0.9, 0.999, 1e-8};
  Tensor w({3}, {0.0, 0.0, 0.0}, true);
  std::vector<NamedTensor> params{{"w", w}};
  AdamState state = AdamState::for_params(params, o);

  std::vector<double> ref(3, 0.0), m(3, 0.0), v(3, 0.0);
  for (int t = 1; t <= 10; ++t) {
    {
      Tape tape;
      Tensor diff = sub(w, Tensor({3}, c));
      Tensor loss = scale(sum(mul(Tensor({3}, a), mul(diff, diff))), 0.5);
      tape.backward(loss);
    }
    adam_step(params, state);
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = a[i] * (ref[i] - c[i]);
      m[i] = o.beta1 * m[i] + (1 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1 - o.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(o.beta1, t)), vh = v[i] / (1 - std::pow(o.beta2, t));
      ref[i] -= o.lr * mh / (std::sqrt(vh) + o.eps);
    }
  }
  CHECK(state.step == 10);
  CHECK(max_abs_diff(w.values(), ref) < 1e-10);
}

TEST_CASE("a trainable parameter without a gradient is a contract error") {
  Tensor w({2}, {1.0, 2.0}, true);
  Tensor frozen({2}, {3.0, 4.0});
  std::vector<NamedTensor> params{{"w", w}, {"frozen", frozen}};
  AdamState state = AdamState::for_params(params);
  CHECK_ERROR_KIND(adam_step(params, state), ErrorKind::Contract);
  set_grad(w, std::vector<double>{1.0, 1.0});
  adam_step(params, state);
  CHECK(frozen.values()[0] == 3.0);
  CHECK(frozen.values()[1] == 4.0);
}

TEST_CASE("with lr 0 and batch 1 every step reports the same loss for the same sample") {
  Task t = small_task(0);
  CzslModel model(t.space, small_config(), 0);
  TrainOptions o = quick(1);
  o.batch = 1;
  o.adam.lr = 0.0;
  auto params = model.trainable();
  AdamState state = AdamState::for_params(params, o.adam);
  std::vector<Sample> one{t.data.train.front(), t.data.train.front(), t.data.train.front()};
  Rng rng(0);
  TrainHistory h;
  train_epoch(model, one, t.split.seen, state, o, rng, h);
  REQUIRE(h.steps.size() == 3);
  CHECK(h.steps[0].total == h.steps[1].total);
  CHECK(h.steps[1].total == h.steps[2].total);
  CHECK_ERROR_KIND(train_epoch(model, std::span<const Sample>{}, t.split.seen, state, o, rng, h), ErrorKind::Config);
}

TEST_CASE("training is deterministic and never touches frozen tensors") {
  Task t = small_task(1);
  auto run = [&] {
    CzslModel model(t.space, small_config(), 3);
    const auto frozen_before = snapshot(model.frozen());
    TrainHistory h = fit(model, t.space, t.split, t.data, quick(2), 3, 0);
    CHECK(bit_identical(snapshot(model.frozen()), frozen_before));
    return std::pair{h, snapshot(model.trainable())};
  };
  auto [h1, p1] = run();
  auto [h2, p2] = run();
  REQUIRE(h1.steps.size() == h2.steps.size());
  for (std::size_t i = 0; i < h1.steps.size(); ++i) {
    CHECK(std::memcmp(&h1.steps[i].total, &h2.steps[i].total, sizeof(double)) == 0);
  }
  CHECK(bit_identical(p1, p2));
  CHECK(h1.epoch_reports.size() == 2);
  CHECK(h1.epoch_mean_loss.size() == 2);
}

TEST_CASE("the step count equals the number of mini-batches") {
  Task t = small_task(2);
  CzslModel model(t.space, small_config(), 0);
  TrainOptions o = quick(3);
  o.validate_each_epoch = false;
  auto params = model.trainable();
  AdamState state = AdamState::for_params(params, o.adam);
  Rng rng(1);
  TrainHistory h;
  for (std::size_t e = 0; e < o.epochs; ++e) train_epoch(model, t.data.train, t.split.seen, state, o, rng, h);
  const std::size_t per_epoch = (t.data.train.size() + o.batch - 1) / o.batch;
  CHECK(state.step == 3 * per_epoch);
  CHECK(h.steps.size() == state.step);
}

TEST_CASE("zero epochs return the initialized model and an empty history") {
  Task t = small_task(3);
  CzslModel model(t.space, small_config(), 5);
  const auto before = snapshot(model.trainable());
  TrainHistory h = fit(model, t.space, t.split, t.data, quick(0), 5, 0);
  CHECK(h.steps.empty());
  CHECK(h.epoch_reports.empty());
  CHECK(bit_identical(snapshot(model.trainable()), before));
}

TEST_CASE("a checkpoint round trip reproduces validation metrics bit-exactly") {
  Task t = small_task(4);
  const auto path = temp_path("roundtrip.bin");
  CzslModel trained(t.space, small_config(), 7);
  fit(trained, t.space, t.split, t.data, quick(2), 7, 0xabcdULL, path);
  const EvalReport a = evaluate(trained, t.space, t.split, t.data, Partition::Val, World::Open, 21);

  CzslModel fresh(t.space, small_config(), 7);
  load_checkpoint(fresh, path, 0xabcdULL);
  const EvalReport b = evaluate(fresh, t.space, t.split, t.data, Partition::Val, World::Open, 21);
  CHECK(std::memcmp(&a.auc, &b.auc, sizeof(double)) == 0);
  CHECK(std::memcmp(&a.harmonic_mean, &b.harmonic_mean, sizeof(double)) == 0);
  CHECK(std::memcmp(&a.seen_acc, &b.seen_acc, sizeof(double)) == 0);
  CHECK(std::memcmp(&a.unseen_acc, &b.unseen_acc, sizeof(double)) == 0);
  CHECK(bit_identical(snapshot(fresh.trainable()), snapshot(trained.trainable())));

  CHECK_ERROR_KIND(load_checkpoint(fresh, path, 0xabceULL), ErrorKind::Config);
  ModelConfig other = small_config();
  other.fusion.order = FusionOrder::NoFusion;
  CzslModel mismatched(t.space, other, 7);
  CHECK_ERROR_KIND(load_checkpoint(mismatched, path, 0xabcdULL), ErrorKind::Dimension);
  ModelConfig wider = small_config();
  wider.prefix_length = 3;
  CzslModel reshaped(t.space, wider, 7);
  CHECK_ERROR_KIND(load_checkpoint(reshaped, path, 0xabcdULL), ErrorKind::Dimension);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoints are byte-identical across identical runs") {
  Task t = small_task(5);
  const auto p1 = temp_path("a.bin"), p2 = temp_path("b.bin");
  for (const auto& p : {p1, p2}) {
    CzslModel model(t.space, small_config(), 2);
    fit(model, t.space, t.split, t.data, quick(1), 2, 42, p);
  }
  const std::string a = slurp(p1);
  CHECK(a.size() > 16);
  CHECK(a.substr(0, 8) == "MFSBCKPT");
  CHECK(a == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("checkpoint I/O errors") {
  CHECK_ERROR_KIND(read_checkpoint(temp_path("missing.bin")), ErrorKind::Io);
  const auto bad = temp_path("bad.bin");
  { std::ofstream(bad) << "not a checkpoint"; }
  CHECK_ERROR_KIND(read_checkpoint(bad), ErrorKind::Io);
  { std::ofstream(bad, std::ios::binary) << "MFSBCKPT"; }
  CHECK_ERROR_KIND(read_checkpoint(bad), ErrorKind::Io);
  std::filesystem::remove(bad);
  CHECK_ERROR_KIND(write_checkpoint("/nonexistent_dir/x/ck.bin", 0, {}), ErrorKind::Io);
}
