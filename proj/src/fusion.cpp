#include "mfsb/fusion.hpp"

#include "mfsb/error.hpp"

namespace mfsb {

std::string to_string(FusionOrder o) {
  switch (o) {
    case FusionOrder::NoFusion: return "none";
    case FusionOrder::IntraOnly: return "intra";
    case FusionOrder::InterOnly: return "inter";
    case FusionOrder::IntraThenInter: return "intra_inter";
    case FusionOrder::InterThenIntra: return "inter_intra";
  }
  return "?";
}

std::string display_name(FusionOrder o) {
  switch (o) {
    case FusionOrder::NoFusion: return "No Fusion";
    case FusionOrder::IntraOnly: return "Intra-Fusion Only";
    case FusionOrder::InterOnly: return "Inter-Fusion Only";
    case FusionOrder::IntraThenInter: return "1. Intra 2. Inter";
    case FusionOrder::InterThenIntra: return "1. Inter 2. Intra";
  }
  return "?";
}

std::optional<FusionOrder> parse_fusion_order(std::string_view text) {
  for (FusionOrder o : {FusionOrder::NoFusion, FusionOrder::IntraOnly, FusionOrder::InterOnly,
                        FusionOrder::IntraThenInter, FusionOrder::InterThenIntra}) {
    if (text == to_string(o)) return o;
  }
  return std::nullopt;
}

std::string to_string(IntraSemantics s) {
  return s == IntraSemantics::AsEquations ? "equations" : "prose";
}

std::optional<IntraSemantics> parse_intra_semantics(std::string_view text) {
  if (text == "equations") return IntraSemantics::AsEquations;
  if (text == "prose") return IntraSemantics::AsProse;
  return std::nullopt;
}

std::string to_string(Stage s) { return s == Stage::Inter ? "inter" : "intra"; }

std::vector<Stage> FusionConfig::stages() const {
  switch (order) {
    case FusionOrder::NoFusion: return {};
    case FusionOrder::IntraOnly: return {Stage::Intra};
    case FusionOrder::InterOnly: return {Stage::Inter};
    case FusionOrder::IntraThenInter: return {Stage::Intra, Stage::Inter};
    case FusionOrder::InterThenIntra: return {Stage::Inter, Stage::Intra};
  }
  return {};
}

namespace {

Tensor stack(const std::vector<Branch>& branches, Tensor Branch::*field) {
  if (branches.empty()) fail(ErrorKind::Contract, "element slot without branches");
  if (branches.size() == 1) return branches.front().*field;
  std::vector<Tensor> parts;
  for (const auto& b : branches) parts.push_back(b.*field);
  return concat_rows(parts);
}

}  // namespace

Tensor ElementSlot::stacked_visual() const { return stack(branches, &Branch::visual); }
Tensor ElementSlot::stacked_text() const { return stack(branches, &Branch::text); }

const ElementSlot& ElementFeatures::at(Element e) const {
  const auto& slot = elements[index(e)];
  if (!slot) fail(ErrorKind::Contract, "element " + to_string(e) + " is inactive");
  return *slot;
}

ElementSlot& ElementFeatures::at(Element e) {
  auto& slot = elements[index(e)];
  if (!slot) fail(ErrorKind::Contract, "element " + to_string(e) + " is inactive");
  return *slot;
}

FusionParams FusionParams::zeros(std::size_t d, std::size_t n_heads) {
  FusionParams p;
  for (auto* stage : {&p.inter, &p.intra})
    for (auto& arrows : *stage)
      arrows = {AttentionParams::zeros(d, n_heads), AttentionParams::zeros(d, n_heads)};
  return p;
}

FusionParams FusionParams::random(std::size_t d, std::size_t n_heads, Rng& rng, bool random_output) {
  FusionParams p;
  for (auto* stage : {&p.inter, &p.intra})
    for (auto& arrows : *stage)
      arrows = {AttentionParams::random(d, n_heads, rng, random_output),
                AttentionParams::random(d, n_heads, rng, random_output)};
  return p;
}

const ArrowParams& FusionParams::arrows(Stage s, Element e) const {
  return (s == Stage::Inter ? inter : intra)[index(e)];
}

ArrowParams& FusionParams::arrows(Stage s, Element e) {
  return (s == Stage::Inter ? inter : intra)[index(e)];
}

ElementFeatures inter_fuse(const ElementFeatures& feats, const FusionParams& params) {
  ElementFeatures out = feats;
  for (Element e : kElements) {
    if (!feats.active(e)) continue;
    const ArrowParams& arrows = params.arrows(Stage::Inter, e);
    for (auto& branch : out.at(e).branches) {
      Tensor v = branch.visual, t = branch.text;
      branch.visual = cross_attention_block(v, t, t, arrows.visual_query);
      branch.text = cross_attention_block(t, v, v, arrows.text_query);
    }
  }
  return out;
}

ElementFeatures intra_fuse(const ElementFeatures& feats, const FusionParams& params,
                           IntraSemantics semantics) {
  ElementFeatures out = feats;
  const bool cross_modal = semantics == IntraSemantics::AsEquations;

  if (feats.active(Element::Pair)) {
    const ArrowParams& arrows = params.arrows(Stage::Intra, Element::Pair);
    for (auto& branch : out.at(Element::Pair).branches) {
      Tensor v = branch.visual, t = branch.text;
      branch.visual = cross_attention_block(v, cross_modal ? t : v, cross_modal ? t : v,
                                            arrows.visual_query);
      branch.text = cross_attention_block(t, cross_modal ? v : t, cross_modal ? v : t,
                                          arrows.text_query);
    }
  }

  // Partner contexts come from the input features so attr and obj read each
  // other's pre-stage state symmetrically.
  for (auto [self, partner] : {std::pair{Element::Attr, Element::Obj}, std::pair{Element::Obj, Element::Attr}}) {
    if (!feats.active(self) || !feats.active(partner)) continue;
    const ElementSlot& other = feats.at(partner);
    const Tensor partner_visual = other.stacked_visual();
    const Tensor partner_text = other.stacked_text();
    const Tensor& visual_ctx = cross_modal ? partner_text : partner_visual;
    const Tensor& text_ctx = cross_modal ? partner_visual : partner_text;
    const ArrowParams& arrows = params.arrows(Stage::Intra, self);
    for (auto& branch : out.at(self).branches) {
      branch.visual = cross_attention_block(branch.visual, visual_ctx, visual_ctx, arrows.visual_query);
      branch.text = cross_attention_block(branch.text, text_ctx, text_ctx, arrows.text_query);
    }
  }
  return out;
}

FusionResult run_fusion(const ElementFeatures& feats, const FusionConfig& config,
                        const FusionParams& params) {
  FusionResult result;
  result.output = feats;
  for (Stage stage : config.stages()) {
    result.output = stage == Stage::Inter
                        ? inter_fuse(result.output, params)
                        : intra_fuse(result.output, params, config.intra_semantics);
    result.trace.push_back(stage);
    result.stage_outputs.push_back(result.output);
  }
  return result;
}

}  // namespace mfsb
