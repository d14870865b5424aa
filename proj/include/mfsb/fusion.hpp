#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfsb/attention.hpp"
#include "mfsb/prompt_bank.hpp"

namespace mfsb {

enum class FusionOrder { NoFusion, IntraOnly, InterOnly, IntraThenInter, InterThenIntra };
/// Which modality supplies keys/values in the intra stage.
///  AsEquations: cross-modal (visual queries read the partner's text and
///               vice versa).
///  AsProse:     same-modal (visual queries read the partner's visuals).
enum class IntraSemantics { AsEquations, AsProse };
enum class Stage { Inter, Intra };

std::string to_string(FusionOrder o);     // none, intra, inter, intra_inter, inter_intra
std::string display_name(FusionOrder o);  // table row label
std::optional<FusionOrder> parse_fusion_order(std::string_view text);
std::string to_string(IntraSemantics s);  // equations, prose
std::optional<IntraSemantics> parse_intra_semantics(std::string_view text);
std::string to_string(Stage s);

struct FusionConfig {
  FusionOrder order = FusionOrder::InterThenIntra;
  IntraSemantics intra_semantics = IntraSemantics::AsEquations;

  std::vector<Stage> stages() const;
};

/// One prompt form's view of an element: the visual sequence [G, d] and the
/// token features of every class prompt stacked into [n_classes * L, d].
struct Branch {
  PromptForm form = PromptForm::Hard;
  Tensor visual;
  Tensor text;
  std::size_t prompt_length = 0;
};

struct ElementSlot {
  std::vector<Branch> branches;  // Hard before Soft

  /// Rows of every branch stacked, for use as a partner context.
  Tensor stacked_visual() const;
  Tensor stacked_text() const;
};

struct ElementFeatures {
  std::array<std::optional<ElementSlot>, 3> elements;  // indexed by Element

  bool active(Element e) const { return elements[index(e)].has_value(); }
  const ElementSlot& at(Element e) const;
  ElementSlot& at(Element e);
};

/// The two arrows of one element at one stage.
struct ArrowParams {
  AttentionParams visual_query;
  AttentionParams text_query;
};

struct FusionParams {
  std::array<ArrowParams, 3> inter;
  std::array<ArrowParams, 3> intra;

  static FusionParams zeros(std::size_t d, std::size_t n_heads = 1);
  static FusionParams random(std::size_t d, std::size_t n_heads, Rng& rng, bool random_output = false);

  const ArrowParams& arrows(Stage s, Element e) const;
  ArrowParams& arrows(Stage s, Element e);
};

/// v_e' = CA(v_e, t_e, t_e), t_e' = CA(t_e, v_e, v_e) per element and branch.
ElementFeatures inter_fuse(const ElementFeatures& feats, const FusionParams& params);

/// Attribute and object exchange information with each other; the pair only
/// fuses with itself. Elements whose partner is inactive pass through.
ElementFeatures intra_fuse(const ElementFeatures& feats, const FusionParams& params,
                           IntraSemantics semantics);

struct FusionResult {
  ElementFeatures output;
  std::vector<Stage> trace;
  std::vector<ElementFeatures> stage_outputs;  // parallel to trace
};

FusionResult run_fusion(const ElementFeatures& feats, const FusionConfig& config,
                        const FusionParams& params);

}  // namespace mfsb
