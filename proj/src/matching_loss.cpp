#include "mfsb/matching_loss.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "mfsb/error.hpp"

namespace mfsb {

void LossWeights::validate() const {
  const std::pair<const char*, double> named[] = {{"baseline.pair", baseline_pair},
                                                  {"baseline.prim", baseline_prim},
                                                  {"alpha", alpha},
                                                  {"beta", beta},
                                                  {"gamma", gamma}};
  for (const auto& [name, w] : named) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      fail(ErrorKind::Config, std::string(name) + " must be a finite weight >= 0, got " + std::to_string(w));
    }
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorKind::Config, "temperature must be > 0, got " + std::to_string(temperature));
  }
}

Tensor class_logits(const Tensor& v, const Tensor& class_feats, double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::Config, "temperature must be > 0");
  return scale(cosine_rows(v, class_feats), 1.0 / tau);
}

Tensor element_loss(Element element, LossStage stage, const Tensor& logits, std::size_t target) {
  if (logits.rank() != 1 || target >= logits.dim(0)) {
    const char* stage_name = stage == LossStage::Base ? "base" : stage == LossStage::Inter ? "inter" : "intra";
    fail(ErrorKind::Index, to_string(element) + "." + stage_name + " target " + std::to_string(target) +
                               " outside " + shape_string(logits.shape()) + " logits");
  }
  return cross_entropy_from_logits(logits, target);
}

std::optional<double> LossBreakdown::term(const std::string& name) const {
  for (const auto& [n, v] : terms)
    if (n == name) return v;
  return std::nullopt;
}

namespace {

bool ran(std::span<const Stage> trace, Stage s) {
  return std::find(trace.begin(), trace.end(), s) != trace.end();
}

std::string baseline_name(Element e) { return to_string(e) + ".hard_soft_baseline"; }
std::string base_name(Element e, PromptForm f) { return to_string(e) + "." + to_string(f); }
std::string stage_name(Element e, Stage s) { return to_string(e) + "." + to_string(s); }

}  // namespace

std::vector<std::string> loss_term_names(const std::array<PromptForm, 3>& forms,
                                         const std::array<bool, 3>& active,
                                         std::span<const Stage> trace) {
  std::vector<std::string> names;
  for (Element e : kElements) {
    if (!active[index(e)]) continue;
    names.push_back(baseline_name(e));
    names.push_back(base_name(e, forms[index(e)]));
    if (ran(trace, Stage::Inter)) names.push_back(stage_name(e, Stage::Inter));
    if (ran(trace, Stage::Intra)) names.push_back(stage_name(e, Stage::Intra));
  }
  return names;
}

LossBreakdown total_loss(const LossInputs& inputs, const LossWeights& weights,
                         std::span<const Stage> trace) {
  weights.validate();
  const bool inter_ran = ran(trace, Stage::Inter), intra_ran = ran(trace, Stage::Intra);

  LossBreakdown out;
  Tensor total;
  auto accumulate = [&](const std::string& name, const Tensor& value, double weight) {
    out.terms.emplace_back(name, value.item());
    Tensor weighted = scale(value, weight);
    total = total.defined() ? add(total, weighted) : weighted;
  };
  auto require = [](const std::optional<Tensor>& t, const std::string& name) -> const Tensor& {
    if (!t) fail(ErrorKind::Contract, "loss term " + name + " is missing");
    return *t;
  };
  auto forbid = [](const std::optional<Tensor>& t, const std::string& name) {
    if (t) fail(ErrorKind::Contract, "loss term " + name + " given for a stage that did not run");
  };

  bool any = false;
  for (Element e : kElements) {
    const auto& terms = inputs.elements[index(e)];
    if (!terms) continue;
    any = true;
    const double w_baseline = e == Element::Pair ? weights.baseline_pair : weights.baseline_prim;
    accumulate(baseline_name(e), require(terms->baseline, baseline_name(e)), w_baseline);
    const std::string base = base_name(e, inputs.forms[index(e)]);
    accumulate(base, require(terms->base, base), weights.alpha);
    const std::string inter = stage_name(e, Stage::Inter), intra = stage_name(e, Stage::Intra);
    if (inter_ran) accumulate(inter, require(terms->inter, inter), weights.beta);
    else forbid(terms->inter, inter);
    if (intra_ran) accumulate(intra, require(terms->intra, intra), weights.gamma);
    else forbid(terms->intra, intra);
  }
  if (!any) fail(ErrorKind::Contract, "total_loss needs at least one active element");
  out.total_tensor = total;
  out.total = total.item();
  return out;
}

namespace {

void put_double(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

void write_loss_csv_header(std::ostream& out, std::span<const std::string> names) {
  out << "step";
  for (const auto& n : names) out << ',' << n;
  out << ",total\n";
}

void write_loss_csv_row(std::ostream& out, std::size_t step, const LossBreakdown& breakdown) {
  out << step;
  for (const auto& [name, value] : breakdown.terms) {
    out << ',';
    put_double(out, value);
  }
  out << ',';
  put_double(out, breakdown.total);
  out << '\n';
}

}  // namespace mfsb
