#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mfsb/rng.hpp"
#include "mfsb/tensor.hpp"

namespace mfsb {

inline constexpr std::size_t kGridTokens = 4;

/// Frozen random stand-in for a text encoder.
struct TextEncoder {
  Tensor mixing;      // [d, d]
  Tensor projection;  // [d, d]

  std::size_t dim() const { return mixing.dim(0); }
  static TextEncoder random(std::size_t d, Rng& rng);
};

struct TextFeatures {
  Tensor tokens;  // [L, d]
  Tensor pooled;  // [d]
};

/// tokens = tanh(seq * mixing); pooled = mean(tokens) * projection.
TextFeatures encode_text(const Tensor& prompt_seq, const TextEncoder& enc);
/// Pools a stack of equal-length token blocks: [n*L, d] -> [n, d].
Tensor pool_text(const Tensor& stacked_tokens, std::size_t length, const TextEncoder& enc);

/// Frozen random backbone plus one trainable linear head per element.
struct ImageEncoder {
  Tensor backbone;             // [d_in, d]
  Tensor regrid;               // [d/4, d]
  std::array<Tensor, 3> heads;  // pair, attr, obj; each [d, d]

  std::size_t input_dim() const { return backbone.dim(0); }
  std::size_t dim() const { return backbone.dim(1); }

  /// Heads start at identity plus N(0, head_noise^2) so different elements
  /// diverge from the first step.
  static ImageEncoder random(std::size_t d_in, std::size_t d, Rng& rng, double head_noise = 0.05);
  static ImageEncoder with_zero_heads(std::size_t d_in, std::size_t d, Rng& rng);
};

struct ImageFeatures {
  Tensor grid;                 // [4, d]
  std::array<Tensor, 3> pooled;  // v_pair, v_attr, v_obj, each [d]
};

/// grid = reshape(tanh(x * backbone), [4, d/4]) * regrid; v_e = mean(grid) * head_e.
ImageFeatures encode_image(const Tensor& x, const ImageEncoder& enc);
/// Shared token grid only.
Tensor image_grid(const Tensor& x, const ImageEncoder& enc);
/// Token-wise head application, grid * head_e: [4, d]. Its row mean is v_e.
Tensor element_sequence(const Tensor& grid, const ImageEncoder& enc, std::size_t element);

}  // namespace mfsb
