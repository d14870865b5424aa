#include "mfsb/encoders.hpp"

#include <cmath>

#include "mfsb/error.hpp"

namespace mfsb {

namespace {

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, Rng& rng) {
  return Tensor({rows, cols}, gaussian_vector(rows * cols, sigma, rng));
}

void check_dims(std::size_t d_in, std::size_t d) {
  if (d_in == 0 || d == 0) fail(ErrorKind::Config, "encoder dimensions must be positive");
  if (d % kGridTokens != 0) {
    fail(ErrorKind::Config, "d = " + std::to_string(d) + " is not divisible by " +
                                std::to_string(kGridTokens));
  }
}

ImageEncoder frozen_part(std::size_t d_in, std::size_t d, Rng& rng) {
  check_dims(d_in, d);
  ImageEncoder enc;
  enc.backbone = gaussian_matrix(d_in, d, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  enc.regrid = gaussian_matrix(d / kGridTokens, d, 1.0 / std::sqrt(static_cast<double>(d / kGridTokens)), rng);
  return enc;
}

}  // namespace

TextEncoder TextEncoder::random(std::size_t d, Rng& rng) {
  const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
  TextEncoder enc;
  enc.mixing = gaussian_matrix(d, d, sigma, rng);
  enc.projection = gaussian_matrix(d, d, sigma, rng);
  return enc;
}

TextFeatures encode_text(const Tensor& prompt_seq, const TextEncoder& enc) {
  if (prompt_seq.rank() != 2 || prompt_seq.dim(1) != enc.dim()) {
    fail(ErrorKind::Dimension, "prompt " + shape_string(prompt_seq.shape()) + " for text encoder of width " +
                                   std::to_string(enc.dim()));
  }
  TextFeatures out;
  out.tokens = tanh(matmul(prompt_seq, enc.mixing));
  out.pooled = reshape(matmul(reshape(mean_rows(out.tokens), {1, enc.dim()}), enc.projection), {enc.dim()});
  return out;
}

Tensor pool_text(const Tensor& stacked_tokens, std::size_t length, const TextEncoder& enc) {
  return matmul(mean_row_groups(stacked_tokens, length), enc.projection);
}

ImageEncoder ImageEncoder::random(std::size_t d_in, std::size_t d, Rng& rng, double head_noise) {
  ImageEncoder enc = frozen_part(d_in, d, rng);
  for (auto& head : enc.heads) {
    std::vector<double> v = gaussian_vector(d * d, head_noise, rng);
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] += 1.0;
    head = Tensor({d, d}, std::move(v), true);
  }
  return enc;
}

ImageEncoder ImageEncoder::with_zero_heads(std::size_t d_in, std::size_t d, Rng& rng) {
  ImageEncoder enc = frozen_part(d_in, d, rng);
  for (auto& head : enc.heads) head = Tensor::zeros({d, d}, true);
  return enc;
}

Tensor image_grid(const Tensor& x, const ImageEncoder& enc) {
  if (x.rank() != 1 || x.dim(0) != enc.input_dim()) {
    fail(ErrorKind::Dimension, "image feature " + shape_string(x.shape()) + " for backbone " +
                                   shape_string(enc.backbone.shape()));
  }
  const std::size_t d = enc.dim();
  Tensor shared = tanh(matmul(reshape(x, {1, enc.input_dim()}), enc.backbone));
  return matmul(reshape(shared, {kGridTokens, d / kGridTokens}), enc.regrid);
}

Tensor element_sequence(const Tensor& grid, const ImageEncoder& enc, std::size_t element) {
  if (element >= enc.heads.size()) fail(ErrorKind::Index, "no image head " + std::to_string(element));
  return matmul(grid, enc.heads[element]);
}

ImageFeatures encode_image(const Tensor& x, const ImageEncoder& enc) {
  ImageFeatures out;
  out.grid = image_grid(x, enc);
  Tensor mean = reshape(mean_rows(out.grid), {1, enc.dim()});
  for (std::size_t e = 0; e < enc.heads.size(); ++e) {
    out.pooled[e] = reshape(matmul(mean, enc.heads[e]), {enc.dim()});
  }
  return out;
}

}  // namespace mfsb
