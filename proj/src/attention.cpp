#include "mfsb/attention.hpp"

#include <cmath>
#include <string>

#include "mfsb/error.hpp"

namespace mfsb {

namespace {

void check_inputs(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    fail(ErrorKind::Dimension, "attention inputs must be 2-D, got " + shape_string(q.shape()) +
                                   ", " + shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    fail(ErrorKind::Dimension, "key " + shape_string(k.shape()) + " and value " +
                                   shape_string(v.shape()) + " lengths differ");
  }
  const std::size_t d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d) {
    fail(ErrorKind::Dimension, "model dimension mismatch: q " + shape_string(q.shape()) + ", k " +
                                   shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (n_heads == 0 || d % n_heads != 0) {
    fail(ErrorKind::Config, "n_heads " + std::to_string(n_heads) + " does not divide d " +
                                std::to_string(d));
  }
}

Tensor one_head(const Tensor& q, const Tensor& k, const Tensor& v) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor weights = softmax_last_dim(scale(matmul_nt(q, k), inv_sqrt));
  return matmul(weights, v);
}

}  // namespace

AttentionParams AttentionParams::zeros(std::size_t d, std::size_t n_heads, bool trainable) {
  AttentionParams p;
  p.w_q = Tensor::zeros({d, d}, trainable);
  p.w_k = Tensor::zeros({d, d}, trainable);
  p.w_v = Tensor::zeros({d, d}, trainable);
  p.w_o = Tensor::zeros({d, d}, trainable);
  p.n_heads = n_heads;
  p.validate();
  return p;
}

AttentionParams AttentionParams::random(std::size_t d, std::size_t n_heads, Rng& rng,
                                        bool random_output, bool trainable) {
  const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionParams p;
  p.w_q = Tensor({d, d}, gaussian_vector(d * d, sigma, rng), trainable);
  p.w_k = Tensor({d, d}, gaussian_vector(d * d, sigma, rng), trainable);
  p.w_v = Tensor({d, d}, gaussian_vector(d * d, sigma, rng), trainable);
  p.w_o = random_output ? Tensor({d, d}, gaussian_vector(d * d, sigma, rng), trainable)
                        : Tensor::zeros({d, d}, trainable);
  p.n_heads = n_heads;
  p.validate();
  return p;
}

void AttentionParams::validate() const {
  const std::size_t d = w_q.dim(0);
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_o}) {
    if (w->shape() != Shape{d, d}) {
      fail(ErrorKind::Dimension, "projection " + shape_string(w->shape()) + " is not [" +
                                     std::to_string(d) + "," + std::to_string(d) + "]");
    }
  }
  if (n_heads == 0 || d % n_heads != 0) {
    fail(ErrorKind::Config, "n_heads " + std::to_string(n_heads) + " does not divide d " +
                                std::to_string(d));
  }
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t n_heads) {
  // Zero-length axes are unrepresentable, so an empty context arrives as an
  // undefined tensor.
  if (!k.defined() || !v.defined()) fail(ErrorKind::EmptyContext, "attention over zero keys");
  check_inputs(q, k, v, n_heads);
  if (n_heads == 1) return one_head(q, k, v);
  const std::size_t dh = q.dim(1) / n_heads;
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    heads.push_back(one_head(slice_cols(q, b, e), slice_cols(k, b, e), slice_cols(v, b, e)));
  }
  return concat_cols(heads);
}

std::vector<Tensor> attention_weights(const Tensor& q, const Tensor& k, std::size_t n_heads) {
  check_inputs(q, k, k, n_heads);
  const std::size_t dh = q.dim(1) / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor qh = n_heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = n_heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    out.push_back(softmax_last_dim(scale(matmul_nt(qh, kh), inv_sqrt)));
  }
  return out;
}

Tensor cross_attention_block(const Tensor& q, const Tensor& k, const Tensor& v,
                             const AttentionParams& params) {
  if (!k.defined() || !v.defined()) fail(ErrorKind::EmptyContext, "attention over zero keys");
  check_inputs(q, k, v, params.n_heads);
  if (q.dim(1) != params.model_dim()) {
    fail(ErrorKind::Dimension, "input " + shape_string(q.shape()) + " vs projection " +
                                   shape_string(params.w_q.shape()));
  }
  // Per head, scores = q (Wq_h Wk_h^T) k^T and output = A_h v (Wv_h Wo_h).
  // Folding the projections into d x d products and associating so the
  // longer of q and k never meets a d x d matrix keeps text-length contexts
  // cheap; the result equals the textbook form up to rounding.
  const std::size_t heads = params.n_heads, d = q.dim(1), dh = d / heads;
  const std::size_t lq = q.dim(0), lk = k.dim(0);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out = q;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    const Tensor wq = heads == 1 ? params.w_q : slice_cols(params.w_q, b, e);
    const Tensor wk = heads == 1 ? params.w_k : slice_cols(params.w_k, b, e);
    const Tensor wv = heads == 1 ? params.w_v : slice_cols(params.w_v, b, e);
    const Tensor wo = heads == 1 ? params.w_o : slice_rows(params.w_o, b, e);
    const Tensor bilinear = matmul_nt(wq, wk);  // [d, d]
    const Tensor value_out = matmul(wv, wo);    // [d, d]
    const Tensor scores = lq <= lk ? matmul_nt(matmul(q, bilinear), k) : matmul(q, matmul_nt(bilinear, k));
    const Tensor weights = softmax_last_dim(scale(scores, inv_sqrt));
    const Tensor head = lk <= lq ? matmul(weights, matmul(v, value_out)) : matmul(matmul(weights, v), value_out);
    out = add(out, head);
  }
  return out;
}

}  // namespace mfsb
