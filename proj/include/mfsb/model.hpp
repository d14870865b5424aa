#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfsb/composition_space.hpp"
#include "mfsb/encoders.hpp"
#include "mfsb/fusion.hpp"
#include "mfsb/matching_loss.hpp"
#include "mfsb/metrics.hpp"
#include "mfsb/prompt_bank.hpp"
#include "mfsb/synth_data.hpp"

namespace mfsb {

struct ModelConfig {
  std::array<PromptForm, 3> forms{PromptForm::Hard, PromptForm::Soft, PromptForm::Soft};  // pair, attr, obj
  std::array<bool, 3> active{true, true, true};
  FusionConfig fusion;
  LossWeights weights;
  std::size_t d_in = 32;
  std::size_t d = 16;
  std::size_t prefix_length = 3;
  std::size_t n_heads = 1;

  PromptForm form(Element e) const { return forms[index(e)]; }
  bool is_active(Element e) const { return active[index(e)]; }
  void validate() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Encoded class prompts of one element in one single form.
struct EncodedPrompts {
  PromptForm form = PromptForm::Hard;
  std::size_t length = 0;
  Tensor tokens;  // [n_classes * length, d]
  Tensor pooled;  // [n_classes, d]
};

/// Text side shared by every sample of a batch. Each active element carries
/// both single forms (the baseline terms need both); forms[0] is Hard.
struct ClassContext {
  std::vector<PairId> pair_classes;
  std::array<std::array<EncodedPrompts, 2>, 3> prompts;
};

/// Complete scoring pipeline: frozen encoders and vocabulary, trainable
/// prefixes, heads and fusion arrows.
class CzslModel {
 public:
  CzslModel(const CompositionSpace& space, const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const CompositionSpace& space() const { return space_; }

  /// Parameters the configuration actually trains, in a fixed order.
  std::vector<NamedTensor> trainable() const;
  /// Everything that must never change.
  std::vector<NamedTensor> frozen() const;
  FusionParams& fusion_params() { return fusion_; }
  const FusionParams& fusion_params() const { return fusion_; }
  ImageEncoder& image_encoder() { return image_; }
  PromptBanks& banks() { return banks_; }

  ClassContext class_context(std::span<const PairId> pair_classes) const;

  /// Per-sample component losses. `pair_target` indexes ctx.pair_classes.
  LossInputs sample_terms(std::span<const double> features, const ClassContext& ctx, std::size_t pair_target,
                          std::size_t state, std::size_t object) const;

  /// Batch-mean components, weighted into the total. Pair logits range over
  /// `pair_classes`, which must contain every sample's pair.
  LossBreakdown batch_loss(std::span<const Sample* const> batch, std::span<const PairId> pair_classes) const;

  /// Pair scores sum, over active elements, the branch-averaged cosine of the
  /// final-stage features divided by the temperature.
  ScoreTable score(std::span<const Sample> samples, std::span<const PairId> candidates, const Split& split) const;

  PrimitiveAccuracy primitive_accuracy(std::span<const Sample> samples) const;

  /// Final-stage logits per active element for one sample (no tape needed).
  struct SampleLogits {
    std::array<std::vector<double>, 3> per_element;  // cos/tau, branch-averaged
  };
  SampleLogits sample_logits(std::span<const double> features, const ClassContext& ctx) const;

  /// Features fed into fusion for one sample (exposed for tests).
  ElementFeatures element_features(const Tensor& grid, const ClassContext& ctx) const;

 private:
  std::vector<Stage> stages() const { return config_.fusion.stages(); }

  CompositionSpace space_;
  ModelConfig config_;
  PromptBanks banks_;
  TextEncoder text_;
  ImageEncoder image_;
  FusionParams fusion_;
};

}  // namespace mfsb
