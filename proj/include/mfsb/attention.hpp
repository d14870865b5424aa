#pragma once

#include <cstddef>
#include <vector>

#include "mfsb/rng.hpp"
#include "mfsb/tensor.hpp"

namespace mfsb {

/// Projection weights of one cross-attention arrow.
struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;  // each [d, d]
  std::size_t n_heads = 1;

  std::size_t model_dim() const { return w_q.dim(0); }

  static AttentionParams zeros(std::size_t d, std::size_t n_heads = 1, bool trainable = true);
  /// Gaussian query/key/value projections (sigma = 1/sqrt(d)). The output
  /// projection is zero unless `random_output` is set, so the residual block
  /// starts out as the identity but still receives gradients.
  static AttentionParams random(std::size_t d, std::size_t n_heads, Rng& rng,
                                bool random_output = false, bool trainable = true);

  std::vector<Tensor> tensors() const { return {w_q, w_k, w_v, w_o}; }
  void validate() const;
};

/// softmax(q k^T / sqrt(d_head)) v per head, heads split over columns and
/// concatenated back. q [Lq,d], k and v [Lk,d].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t n_heads = 1);

/// Per-head attention weight matrices [Lq, Lk], for inspection.
std::vector<Tensor> attention_weights(const Tensor& q, const Tensor& k, std::size_t n_heads = 1);

/// q + scaled_dot_attention(q W_q, k W_k, v W_v) W_o. Output shape equals q's.
Tensor cross_attention_block(const Tensor& q, const Tensor& k, const Tensor& v,
                             const AttentionParams& params);

}  // namespace mfsb
