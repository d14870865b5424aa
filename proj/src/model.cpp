#include "mfsb/model.hpp"

#include <algorithm>
#include <unordered_map>

#include "mfsb/error.hpp"

namespace mfsb {

void ModelConfig::validate() const {
  if (std::none_of(active.begin(), active.end(), [](bool b) { return b; })) {
    fail(ErrorKind::Config, "at least one of pair, attr, obj must be active");
  }
  if (d_in < 8) fail(ErrorKind::Config, "d_in must be at least 8");
  if (d == 0 || d % kGridTokens != 0) fail(ErrorKind::Config, "d must be a positive multiple of 4");
  if (prefix_length == 0) fail(ErrorKind::Config, "prefix_length must be at least 1");
  if (n_heads == 0 || d % n_heads != 0) fail(ErrorKind::Config, "n_heads must divide d");
  weights.validate();
}

namespace {

bool arrow_used(const ModelConfig& c, Stage stage, Element e) {
  const auto stages = c.fusion.stages();
  if (std::find(stages.begin(), stages.end(), stage) == stages.end()) return false;
  if (!c.is_active(e)) return false;
  if (stage == Stage::Intra && e != Element::Pair) {
    return c.is_active(Element::Attr) && c.is_active(Element::Obj);
  }
  return true;
}

void set_trainable(AttentionParams& p, bool flag) {
  for (Tensor* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) t->set_requires_grad(flag);
}

std::size_t single_form_slot(PromptForm f) { return f == PromptForm::Hard ? 0 : 1; }

std::size_t element_target(Element e, std::size_t pair_target, std::size_t state, std::size_t object) {
  switch (e) {
    case Element::Pair: return pair_target;
    case Element::Attr: return state;
    case Element::Obj: return object;
  }
  return 0;
}

Tensor pooled_visual(const Branch& b) { return mean_rows(b.visual); }

Tensor add_opt(const Tensor& acc, const Tensor& x) { return acc.defined() ? add(acc, x) : x; }

}  // namespace

CzslModel::CzslModel(const CompositionSpace& space, const ModelConfig& config, std::uint64_t seed)
    : space_(space), config_(config) {
  config_.validate();
  const std::size_t d = config_.d;
  // Every tensor is drawn regardless of the configuration, so a given seed
  // initializes shared components identically across ablation rows.
  Rng rng = make_rng(seed, Stream::Init);
  banks_.table = TokenEmbeddingTable::build(space_, d, rng);
  text_ = TextEncoder::random(d, rng);
  image_ = ImageEncoder::random(config_.d_in, d, rng);
  for (Element e : kElements) banks_.prefixes[index(e)] = SoftPrefix::random(e, config_.prefix_length, d, rng);
  fusion_ = FusionParams::random(d, config_.n_heads, rng);

  for (Element e : kElements) {
    const bool on = config_.is_active(e);
    banks_.prefixes[index(e)]->vectors.set_requires_grad(on);
    image_.heads[index(e)].set_requires_grad(on);
    for (Stage s : {Stage::Inter, Stage::Intra}) {
      const bool used = arrow_used(config_, s, e);
      set_trainable(fusion_.arrows(s, e).visual_query, used);
      set_trainable(fusion_.arrows(s, e).text_query, used);
    }
  }
}

std::vector<NamedTensor> CzslModel::trainable() const {
  std::vector<NamedTensor> out;
  auto push = [&](std::string name, const Tensor& t) {
    if (t.requires_grad()) out.push_back({std::move(name), t});
  };
  for (Element e : kElements) push("prefix." + to_string(e), banks_.prefixes[index(e)]->vectors);
  for (Element e : kElements) push("head." + to_string(e), image_.heads[index(e)]);
  for (Stage s : {Stage::Inter, Stage::Intra}) {
    for (Element e : kElements) {
      const ArrowParams& a = fusion_.arrows(s, e);
      for (auto [modality, params] : {std::pair{"visual", &a.visual_query}, std::pair{"text", &a.text_query}}) {
        const std::string stem = "fusion." + to_string(s) + "." + to_string(e) + "." + modality + ".";
        push(stem + "w_q", params->w_q);
        push(stem + "w_k", params->w_k);
        push(stem + "w_v", params->w_v);
        push(stem + "w_o", params->w_o);
      }
    }
  }
  return out;
}

std::vector<NamedTensor> CzslModel::frozen() const {
  return {{"tokens", banks_.table.embeddings()},
          {"text.mixing", text_.mixing},
          {"text.projection", text_.projection},
          {"image.backbone", image_.backbone},
          {"image.regrid", image_.regrid}};
}

ClassContext CzslModel::class_context(std::span<const PairId> pair_classes) const {
  ClassContext ctx;
  ctx.pair_classes.assign(pair_classes.begin(), pair_classes.end());
  for (Element e : kElements) {
    if (!config_.is_active(e)) continue;
    if (e == Element::Pair && pair_classes.empty()) fail(ErrorKind::Config, "no pair classes");
    for (PromptForm f : {PromptForm::Hard, PromptForm::Soft}) {
      PromptSet set = class_prompts(e, f, space_, banks_, pair_classes).front();
      EncodedPrompts& enc = ctx.prompts[index(e)][single_form_slot(f)];
      enc.form = f;
      enc.length = set.length;
      enc.tokens = tanh(matmul(concat_rows(set.sequences), text_.mixing));
      enc.pooled = pool_text(enc.tokens, enc.length, text_);
    }
  }
  return ctx;
}

ElementFeatures CzslModel::element_features(const Tensor& grid, const ClassContext& ctx) const {
  ElementFeatures feats;
  for (Element e : kElements) {
    if (!config_.is_active(e)) continue;
    const Tensor visual = element_sequence(grid, image_, index(e));
    ElementSlot slot;
    for (PromptForm f : branch_forms(config_.form(e))) {
      const EncodedPrompts& enc = ctx.prompts[index(e)][single_form_slot(f)];
      slot.branches.push_back(Branch{f, visual, enc.tokens, enc.length});
    }
    feats.elements[index(e)] = std::move(slot);
  }
  return feats;
}

LossInputs CzslModel::sample_terms(std::span<const double> features, const ClassContext& ctx,
                                   std::size_t pair_target, std::size_t state, std::size_t object) const {
  const double tau = config_.weights.temperature;
  const Tensor x({features.size()}, std::vector<double>(features.begin(), features.end()));
  const ElementFeatures feats = element_features(image_grid(x, image_), ctx);

  LossInputs in;
  in.forms = config_.forms;
  for (Element e : kElements) {
    if (!config_.is_active(e)) continue;
    const std::size_t target = element_target(e, pair_target, state, object);
    const Tensor v = pooled_visual(feats.at(e).branches.front());
    std::array<Tensor, 2> ce;
    for (std::size_t slot = 0; slot < 2; ++slot) {
      ce[slot] = element_loss(e, LossStage::Base, class_logits(v, ctx.prompts[index(e)][slot].pooled, tau), target);
    }
    ElementTerms terms;
    terms.baseline = add(ce[0], ce[1]);
    Tensor base;
    for (PromptForm f : branch_forms(config_.form(e))) base = add_opt(base, ce[single_form_slot(f)]);
    terms.base = base;
    in.elements[index(e)] = terms;
  }

  const FusionResult fused = run_fusion(feats, config_.fusion, fusion_);
  for (std::size_t k = 0; k < fused.trace.size(); ++k) {
    const ElementFeatures& out = fused.stage_outputs[k];
    const LossStage stage = fused.trace[k] == Stage::Inter ? LossStage::Inter : LossStage::Intra;
    for (Element e : kElements) {
      if (!config_.is_active(e)) continue;
      const std::size_t target = element_target(e, pair_target, state, object);
      Tensor term;
      for (const Branch& b : out.at(e).branches) {
        Tensor logits = class_logits(pooled_visual(b), pool_text(b.text, b.prompt_length, text_), tau);
        term = add_opt(term, element_loss(e, stage, logits, target));
      }
      (stage == LossStage::Inter ? in.elements[index(e)]->inter : in.elements[index(e)]->intra) = term;
    }
  }
  return in;
}

LossBreakdown CzslModel::batch_loss(std::span<const Sample* const> batch, std::span<const PairId> pair_classes) const {
  if (batch.empty()) fail(ErrorKind::Config, "empty batch");
  std::unordered_map<PairId, std::size_t> position;
  for (std::size_t i = 0; i < pair_classes.size(); ++i) position.emplace(pair_classes[i], i);

  const ClassContext ctx = class_context(pair_classes);

  LossInputs sum_in;
  sum_in.forms = config_.forms;
  auto fold = [](std::optional<Tensor>& acc, const std::optional<Tensor>& x) {
    if (x) acc = acc ? add(*acc, *x) : *x;
  };
  for (const Sample* s : batch) {
    std::size_t pair_target = 0;
    if (config_.is_active(Element::Pair)) {
      auto it = position.find(s->pair);
      if (it == position.end()) {
        fail(ErrorKind::Contract, "sample pair " + std::to_string(s->pair) + " is not among the training classes");
      }
      pair_target = it->second;
    }
    LossInputs in = sample_terms(s->features, ctx, pair_target, s->state, s->object);
    for (Element e : kElements) {
      const auto& t = in.elements[index(e)];
      if (!t) continue;
      auto& acc = sum_in.elements[index(e)];
      if (!acc) acc = ElementTerms{};
      fold(acc->baseline, t->baseline);
      fold(acc->base, t->base);
      fold(acc->inter, t->inter);
      fold(acc->intra, t->intra);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& acc : sum_in.elements) {
    if (!acc) continue;
    for (auto* term : {&acc->baseline, &acc->base, &acc->inter, &acc->intra})
      if (*term) **term = scale(**term, inv);
  }
  const auto trace = stages();
  return total_loss(sum_in, config_.weights, trace);
}

CzslModel::SampleLogits CzslModel::sample_logits(std::span<const double> features, const ClassContext& ctx) const {
  const double tau = config_.weights.temperature;
  const Tensor x({features.size()}, std::vector<double>(features.begin(), features.end()));
  const ElementFeatures feats = element_features(image_grid(x, image_), ctx);
  const ElementFeatures out = run_fusion(feats, config_.fusion, fusion_).output;
  SampleLogits logits;
  for (Element e : kElements) {
    if (!config_.is_active(e)) continue;
    const auto& branches = out.at(e).branches;
    std::vector<double> acc;
    for (const Branch& b : branches) {
      Tensor cos = cosine_rows(pooled_visual(b), pool_text(b.text, b.prompt_length, text_));
      if (acc.empty()) acc.assign(cos.values().begin(), cos.values().end());
      else
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += cos[c];
    }
    for (double& v : acc) v = v / static_cast<double>(branches.size()) / tau;
    logits.per_element[index(e)] = std::move(acc);
  }
  return logits;
}

ScoreTable CzslModel::score(std::span<const Sample> samples, std::span<const PairId> candidates,
                            const Split& split) const {
  NoGradScope no_grad;
  ScoreTable table;
  table.candidates.assign(candidates.begin(), candidates.end());
  for (PairId p : candidates) table.candidate_seen.push_back(split.is_seen(p));
  const ClassContext ctx = class_context(candidates);

  table.scores.reserve(samples.size() * candidates.size());
  for (const Sample& s : samples) {
    table.truth.push_back(s.pair);
    table.truth_seen.push_back(split.is_seen(s.pair));
    const SampleLogits l = sample_logits(s.features, ctx);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const Pair p = space_.pair(candidates[c]);
      double total = 0.0;
      if (config_.is_active(Element::Pair)) total += l.per_element[index(Element::Pair)][c];
      if (config_.is_active(Element::Attr)) total += l.per_element[index(Element::Attr)][p.state];
      if (config_.is_active(Element::Obj)) total += l.per_element[index(Element::Obj)][p.object];
      table.scores.push_back(total);
    }
  }
  return table;
}

PrimitiveAccuracy CzslModel::primitive_accuracy(std::span<const Sample> samples) const {
  NoGradScope no_grad;
  PrimitiveAccuracy acc;
  if (!config_.is_active(Element::Attr) && !config_.is_active(Element::Obj)) return acc;
  std::vector<PairId> all(space_.n_pairs());
  for (PairId p = 0; p < all.size(); ++p) all[p] = p;
  const ClassContext ctx = class_context(all);

  std::vector<std::vector<double>> state_logits, object_logits;
  std::vector<std::size_t> states, objects;
  for (const Sample& s : samples) {
    SampleLogits l = sample_logits(s.features, ctx);
    state_logits.push_back(std::move(l.per_element[index(Element::Attr)]));
    object_logits.push_back(std::move(l.per_element[index(Element::Obj)]));
    states.push_back(s.state);
    objects.push_back(s.object);
  }
  if (config_.is_active(Element::Attr)) acc.state = argmax_accuracy(state_logits, states);
  if (config_.is_active(Element::Obj)) acc.object = argmax_accuracy(object_logits, objects);
  return acc;
}

}  // namespace mfsb
