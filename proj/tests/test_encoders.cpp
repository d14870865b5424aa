#include <algorithm>
#include <numeric>

#include "mfsb/encoders.hpp"
#include "mfsb/gradcheck.hpp"
#include "test_support.hpp"

using namespace mfsb;
using namespace mfsb::testing;

TEST_CASE("encode_text: single token pools to its own projected feature") {
  Rng rng(1);
  TextEncoder enc = TextEncoder::random(8, rng);
  Tensor seq = random_tensor({1, 8}, rng);
  auto out = encode_text(seq, enc);
  Tensor expected = reshape(matmul(out.tokens, enc.projection), {8});
  CHECK(max_abs_diff(out.pooled.values(), expected.values()) < 1e-15);
}

TEST_CASE("encode_text: pooled output ignores token order") {
  Rng rng(2);
  TextEncoder enc = TextEncoder::random(8, rng);
  Tensor seq = random_tensor({5, 8}, rng);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  auto a = encode_text(seq, enc);
  auto b = encode_text(index_rows(seq, perm), enc);
  CHECK(max_abs_diff(a.pooled.values(), b.pooled.values()) < 1e-12);
}

TEST_CASE("pool_text agrees with encode_text on stacked prompts") {
  Rng rng(3);
  TextEncoder enc = TextEncoder::random(8, rng);
  std::vector<Tensor> seqs{random_tensor({4, 8}, rng), random_tensor({4, 8}, rng)};
  std::vector<Tensor> tokens{encode_text(seqs[0], enc).tokens, encode_text(seqs[1], enc).tokens};
  Tensor pooled = pool_text(concat_rows(tokens), 4, enc);
  for (std::size_t i = 0; i < 2; ++i) {
    auto single = encode_text(seqs[i], enc).pooled;
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(pooled.at(i, c) - single[c]) < 1e-14);
  }
}

TEST_CASE("encode_image: zero input with zero heads gives zeros") {
  Rng rng(4);
  ImageEncoder enc = ImageEncoder::with_zero_heads(32, 16, rng);
  auto out = encode_image(Tensor::zeros({32}), enc);
  CHECK(out.grid.shape() == Shape{4, 16});
  for (double v : out.grid.values()) CHECK(v == 0.0);
  for (const auto& v : out.pooled)
    for (double x : v.values()) CHECK(x == 0.0);
}

TEST_CASE("encode_image: distinct inputs give distinct grids") {
  Rng rng(5);
  ImageEncoder enc = ImageEncoder::random(32, 16, rng);
  for (int i = 0; i < 100; ++i) {
    Tensor a = random_tensor({32}, rng), b = random_tensor({32}, rng);
    CHECK(max_abs_diff(image_grid(a, enc).values(), image_grid(b, enc).values()) > 1e-9);
  }
}

TEST_CASE("encode_image: element sequence mean equals pooled vector") {
  Rng rng(6);
  ImageEncoder enc = ImageEncoder::random(32, 16, rng);
  Tensor x = random_tensor({32}, rng);
  auto out = encode_image(x, enc);
  for (std::size_t e = 0; e < 3; ++e) {
    Tensor seq_mean = mean_rows(element_sequence(out.grid, enc, e));
    CHECK(max_abs_diff(seq_mean.values(), out.pooled[e].values()) < 1e-12);
  }
}

TEST_CASE("encoder errors") {
  Rng rng(7);
  CHECK_ERROR_KIND(ImageEncoder::random(32, 18, rng), ErrorKind::Config);
  ImageEncoder enc = ImageEncoder::random(32, 16, rng);
  CHECK_ERROR_KIND(encode_image(Tensor::zeros({31}), enc), ErrorKind::Dimension);
  TextEncoder text = TextEncoder::random(8, rng);
  CHECK_ERROR_KIND(encode_text(Tensor::zeros({2, 7}), text), ErrorKind::Dimension);
}

TEST_CASE("head gradients flow while frozen parts stay put") {
  Rng rng(8);
  ImageEncoder enc = ImageEncoder::random(32, 16, rng);
  const std::vector<double> backbone(enc.backbone.values().begin(), enc.backbone.values().end());
  Tensor x = random_tensor({32}, rng);
  Tensor target = random_tensor({16}, rng);
  {
    Tape tape;
    auto out = encode_image(x, enc);
    Tensor loss = add(add(cosine_similarity(out.pooled[0], target), cosine_similarity(out.pooled[1], target)),
                      cosine_similarity(out.pooled[2], target));
    tape.backward(loss);
  }
  for (auto& head : enc.heads) {
    REQUIRE(head.has_grad());
    CHECK(std::any_of(head.grad().begin(), head.grad().end(), [](double g) { return g != 0.0; }));
  }
  CHECK_FALSE(enc.backbone.has_grad());
  CHECK(bit_identical(enc.backbone.values(), backbone));

  std::vector<Tensor> params(enc.heads.begin(), enc.heads.end());
  auto report = check_gradients(
      [&] {
        auto out = encode_image(x, enc);
        return add(cosine_similarity(out.pooled[1], target), cosine_similarity(out.pooled[2], target));
      },
      params);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("encoders are finite and deterministic") {
  Rng a(9), b(9);
  ImageEncoder ea = ImageEncoder::random(32, 16, a), eb = ImageEncoder::random(32, 16, b);
  Rng inputs(10);
  Tensor x = random_tensor({32}, inputs, false, 100.0);
  auto fa = encode_image(x, ea), fb = encode_image(x, eb);
  CHECK(bit_identical(fa.grid.values(), fb.grid.values()));
  for (double v : fa.grid.values()) CHECK(std::isfinite(v));
}
