#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numeric>

#include "mfsb/gradcheck.hpp"
#include "test_support.hpp"

using namespace mfsb;
using namespace mfsb::testing;

TEST_CASE("matmul: identity and hand-computed dot") {
  Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  Tensor c = matmul(eye, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(bit_identical(c.values(), b.values()));

  Tensor row = Tensor::matrix({{1, 2}});
  Tensor col = Tensor::matrix({{3}, {4}});
  CHECK(matmul(row, col).item() == 11.0);
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    (void)matmul(a, b);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
    std::string what = e.what();
    CHECK(what.find("[2,3]") != std::string::npos);
    CHECK(what.find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("matmul: grad of sum(a b) wrt a is replicated row sums of b") {
  Rng rng(11);
  Tensor a = random_tensor({4, 5}, rng, true);
  Tensor b = random_tensor({5, 3}, rng);
  {
    Tape tape;
    tape.backward(sum(matmul(a, b)));
  }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t p = 0; p < 5; ++p) {
      double row_sum = b.at(p, 0) + b.at(p, 1) + b.at(p, 2);
      CHECK(a.grad()[i * 5 + p] == doctest::Approx(row_sum).epsilon(1e-12));
    }
  std::vector<Tensor> params{a};
  auto report = check_gradients([&] { return sum(matmul(a, b)); }, params);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax_last_dim: symmetry, stability, high-precision oracle") {
  Tensor u = softmax_last_dim(Tensor::vector({0, 0, 0}));
  for (double p : u.values()) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Tensor s = softmax_last_dim(Tensor::vector({1000, 0}));
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] < 1e-300);

  using Quad = boost::multiprecision::cpp_bin_float_quad;
  Rng rng(3);
  Tensor x = random_tensor({6}, rng, false, 3.0);
  Tensor y = softmax_last_dim(x);
  std::vector<Quad> e(6);
  Quad z = 0;
  for (int i = 0; i < 6; ++i) {
    e[i] = boost::multiprecision::exp(Quad(x[i]));
    z += e[i];
  }
  for (int i = 0; i < 6; ++i) {
    double oracle = static_cast<double>(e[i] / z);
    CHECK(std::abs(y[i] - oracle) < 1e-12);
  }
}

TEST_CASE("softmax_last_dim: non-finite input is a numeric error") {
  CHECK_ERROR_KIND(softmax_last_dim(Tensor::vector({1.0, NAN})), ErrorKind::Numeric);
  CHECK_ERROR_KIND(softmax_last_dim(Tensor::vector({INFINITY, 0.0})), ErrorKind::Numeric);
}

TEST_CASE("softmax_last_dim: slices are distributions (property)") {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 50; ++trial) {
    Shape shape{dim(rng), dim(rng), dim(rng)};
    Tensor y = softmax_last_dim(random_tensor(shape, rng, false, 5.0));
    const std::size_t n = shape.back();
    for (std::size_t s = 0; s < y.numel() / n; ++s) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(y[s * n + i] >= 0.0);
        total += y[s * n + i];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("cosine_similarity: identity, orthogonality, gradient") {
  Tensor a = Tensor::vector({0.3, -1.2, 2.5});
  CHECK(std::abs(cosine_similarity(a, a).item() - 1.0) < 1e-12);
  CHECK(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 1})).item() == 0.0);

  Rng rng(17);
  Tensor x = random_tensor({7}, rng, true);
  Tensor y = random_tensor({7}, rng, true);
  std::vector<Tensor> params{x, y};
  auto report = check_gradients([&] { return cosine_similarity(x, y); }, params);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("cosine_similarity: zero-norm input is degenerate") {
  CHECK_ERROR_KIND(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 0})),
                   ErrorKind::Degenerate);
  CHECK_ERROR_KIND(cosine_rows(Tensor::vector({1, 0}), Tensor::matrix({{1, 1}, {0, 0}})),
                   ErrorKind::Degenerate);
}

TEST_CASE("cosine_similarity: scale invariance (property)") {
  Rng rng(23);
  std::uniform_real_distribution<double> pos(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_tensor({5}, rng);
    Tensor b = random_tensor({5}, rng);
    double base = cosine_similarity(a, b).item();
    double scaled = cosine_similarity(scale(a, pos(rng)), scale(b, pos(rng))).item();
    CHECK(std::abs(base - scaled) < 1e-9);
    CHECK(base <= 1.0 + 1e-15);
    CHECK(base >= -1.0 - 1e-15);
  }
}

TEST_CASE("cosine_rows agrees with per-row cosine_similarity and has correct gradients") {
  Rng rng(29);
  Tensor v = random_tensor({4}, rng, true);
  Tensor m = random_tensor({3, 4}, rng, true);
  Tensor c = cosine_rows(v, m);
  for (std::size_t r = 0; r < 3; ++r) {
    Tensor row = reshape(slice_rows(m, r, r + 1), {4});
    CHECK(std::abs(c[r] - cosine_similarity(v, row).item()) < 1e-14);
  }
  Tensor w = random_tensor({3}, rng);
  std::vector<Tensor> params{v, m};
  auto report = check_gradients([&] { return dot(cosine_rows(v, m), w); }, params);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("cross_entropy_from_logits: uniform, confident, oracle") {
  CHECK(std::abs(cross_entropy_from_logits(Tensor::vector({2, 2, 2, 2}), 1).item() -
                 std::log(4.0)) < 1e-14);
  std::vector<double> confident(5, -30.0);
  confident[3] = 30.0;
  CHECK(cross_entropy_from_logits(Tensor::vector(confident), 3).item() < 1e-20);

  Rng rng(31);
  Tensor logits = random_tensor({7}, rng, true, 2.0);
  for (std::size_t target = 0; target < 7; ++target) {
    // exp-normalize oracle
    double z = 0.0;
    for (double l : logits.values()) z += std::exp(l);
    double oracle = -std::log(std::exp(logits[target]) / z);
    CHECK(std::abs(cross_entropy_from_logits(logits, target).item() - oracle) < 1e-10);
  }
}

TEST_CASE("cross_entropy_from_logits: gradient is softmax minus one-hot") {
  Rng rng(37);
  Tensor logits = random_tensor({6}, rng, true);
  {
    Tape tape;
    tape.backward(cross_entropy_from_logits(logits, 2));
  }
  Tensor p = softmax_last_dim(logits.detach());
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(logits.grad()[i] - (p[i] - (i == 2 ? 1.0 : 0.0))) < 1e-14);
  }
  CHECK_ERROR_KIND(cross_entropy_from_logits(logits, 6), ErrorKind::Index);
}

TEST_CASE("backward: sum and dot(x,x)") {
  Tensor x = Tensor::vector({1.5, -2.0, 0.25}, true);
  {
    Tape tape;
    tape.backward(sum(x));
  }
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  {
    Tape tape;
    tape.backward(dot(x, x));
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * x[i]);
}

TEST_CASE("backward: loss gradient is one and intermediates get same-shape gradients") {
  Rng rng(41);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tape tape;
  Tensor h = tanh(a);
  Tensor m = mean_rows(h);
  Tensor loss = sum(m);
  tape.backward(loss);
  CHECK(loss.grad()[0] == 1.0);
  CHECK(h.grad().size() == h.numel());
  CHECK(m.grad().size() == m.numel());
  CHECK(a.grad().size() == a.numel());
}

TEST_CASE("backward: contract errors") {
  Tensor x = Tensor::vector({1, 2}, true);
  {
    Tape tape;
    Tensor y = scale(x, 2.0);
    CHECK_ERROR_KIND(tape.backward(y), ErrorKind::Contract);  // non-scalar
  }
  {
    Tape tape;
    Tensor loss = sum(x);
    tape.backward(loss);
    // Second pass over the same tape is rejected.
    CHECK_ERROR_KIND(tape.backward(loss), ErrorKind::Contract);
  }
  {
    Tensor stale;
    {
      Tape old_tape;
      stale = scale(x, 3.0);
    }
    Tape tape;
    CHECK_ERROR_KIND(sum(stale), ErrorKind::Contract);
    CHECK_ERROR_KIND(tape.backward(Tensor::scalar(1.0)), ErrorKind::Contract);
  }
  CHECK_ERROR_KIND(backward(sum(x)), ErrorKind::Contract);  // no active tape
}

TEST_CASE("backward: multiple uses of a tensor accumulate") {
  Tensor x = Tensor::vector({2.0}, true);
  {
    Tape tape;
    Tensor y = add(mul(x, x), scale(x, 3.0));  // x^2 + 3x
    tape.backward(sum(y));
  }
  CHECK(x.grad()[0] == 7.0);
}

TEST_CASE("no active tape: ops compute values without recording") {
  Tensor x = Tensor::vector({1, 2}, true);
  Tensor y = scale(x, 2.0);
  CHECK_FALSE(y.requires_grad());
  CHECK_FALSE(y.node_id().has_value());
  CHECK(y[1] == 4.0);
}

TEST_CASE("recorded tensors cannot be mutated") {
  Tensor x = Tensor::vector({1, 2}, true);
  Tape tape;
  Tensor y = scale(x, 2.0);
  CHECK_ERROR_KIND(y.mutable_values(), ErrorKind::Contract);
}

TEST_CASE("check_gradients: scalar square, frozen param, determinism") {
  Tensor x = Tensor::scalar(3.0, true);
  std::vector<Tensor> params{x};
  auto report = check_gradients([&] { return mul(x, x); }, params);
  CHECK(report.coords_checked == 1);
  CHECK(report.max_rel_error < 1e-8);

  Rng rng(43);
  Tensor a = random_tensor({5}, rng, true);
  Tensor b = random_tensor({5}, rng, false);
  std::vector<Tensor> both{a, b};
  auto frozen = check_gradients([&] { return cosine_similarity(a, b); }, both);
  CHECK(frozen.coords_checked == 5);
  CHECK(frozen.max_rel_error < 1e-6);

  int calls = 0;
  CHECK_ERROR_KIND(check_gradients(
                       [&] {
                         ++calls;
                         return scale(x, static_cast<double>(calls));
                       },
                       params),
                   ErrorKind::Determinism);
}

TEST_CASE("structural ops gradients") {
  Rng rng(47);
  Tensor a = random_tensor({4, 6}, rng, true);
  Tensor b = random_tensor({2, 6}, rng, true);
  Tensor w = random_tensor({6, 6}, rng);
  std::vector<Tensor> params{a, b};
  auto loss = [&] {
    std::vector<Tensor> rows{a, b};
    Tensor cat = concat_rows(rows);                       // [6,6]
    Tensor left = slice_cols(cat, 0, 2), right = slice_cols(cat, 2, 6);
    std::vector<Tensor> cols{right, left};
    Tensor swapped = concat_cols(cols);                   // [6,6]
    Tensor groups = mean_row_groups(tanh(matmul(swapped, w)), 3);  // [2,6]
    std::vector<std::size_t> pick{1, 0, 1};
    Tensor gathered = index_rows(groups, pick);
    Tensor r = reshape(slice_rows(gathered, 1, 3), {12});
    return dot(r, r);
  };
  CHECK(check_gradients(loss, params).max_rel_error < 1e-6);
}

TEST_CASE("differentiable ops pass finite differences on random shapes up to [8,8,8]") {
  Rng rng(53);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 12; ++trial) {
    Shape shape{dim(rng), dim(rng), dim(rng)};
    Tensor a = random_tensor(shape, rng, true);
    Tensor b = random_tensor(shape, rng, true);
    Tensor w = random_tensor(shape, rng);
    std::vector<Tensor> params{a, b};
    auto loss = [&] {
      Tensor e = add(mul(tanh(a), b), sub(scale(a, 0.5), b));
      return dot(softmax_last_dim(e), w);
    };
    auto report = check_gradients(loss, params);
    INFO("shape " << shape_string(shape));
    CHECK(report.max_rel_error < 1e-4);
  }
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    Tensor a = random_tensor({m, k}, rng, true);
    Tensor b = random_tensor({k, n}, rng, true);
    Tensor c = random_tensor({n, k}, rng, true);
    Tensor w = random_tensor({m, n}, rng);
    std::vector<Tensor> params{a, b, c};
    auto loss = [&] { return dot(add(matmul(a, b), matmul_nt(a, c)), w); };
    CHECK(check_gradients(loss, params).max_rel_error < 1e-4);
  }
}
