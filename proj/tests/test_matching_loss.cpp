#include <sstream>

#include "mfsb/gradcheck.hpp"
#include "mfsb/matching_loss.hpp"
#include "test_support.hpp"

using namespace mfsb;
using namespace mfsb::testing;

namespace {

const std::vector<Stage> kBoth{Stage::Inter, Stage::Intra};

LossInputs unit_inputs(std::span<const Stage> trace, std::array<bool, 3> active = {true, true, true}) {
  LossInputs in;
  const bool inter = std::find(trace.begin(), trace.end(), Stage::Inter) != trace.end();
  const bool intra = std::find(trace.begin(), trace.end(), Stage::Intra) != trace.end();
  for (Element e : kElements) {
    if (!active[index(e)]) continue;
    ElementTerms t;
    t.baseline = Tensor::scalar(1.0);
    t.base = Tensor::scalar(1.0);
    if (inter) t.inter = Tensor::scalar(1.0);
    if (intra) t.intra = Tensor::scalar(1.0);
    in.elements[index(e)] = t;
  }
  return in;
}

double softmax_ce_oracle(const std::vector<double>& z, std::size_t target) {
  double mx = *std::max_element(z.begin(), z.end()), s = 0.0;
  for (double x : z) s += std::exp(x - mx);
  return -(z[target] - mx - std::log(s));
}

}  // namespace

TEST_CASE("class_logits examples") {
  Rng rng(1);
  Tensor feats = random_tensor({4, 6}, rng);
  Tensor v = reshape(slice_rows(feats, 2, 3), {6});
  Tensor logits = class_logits(v, feats, 1.0);
  CHECK(std::abs(logits[2] - 1.0) < 1e-12);
  for (std::size_t c = 0; c < 4; ++c) CHECK(logits[c] <= logits[2]);

  Tensor scaled = class_logits(scale(v, 5.0), feats, 1.0);
  CHECK(max_abs_diff(scaled.values(), logits.values()) < 1e-12);
  CHECK_ERROR_KIND(class_logits(Tensor::zeros({6}), feats, 1.0), ErrorKind::Degenerate);
}

TEST_CASE("argmax of class_logits is invariant to temperature and positive rescaling (property)") {
  Rng rng(2);
  auto argmax = [](const Tensor& t) {
    auto v = t.values();
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor v = random_tensor({6}, rng);
    Tensor feats = random_tensor({7, 6}, rng);
    const std::size_t ref = argmax(class_logits(v, feats, 0.07));
    for (double tau : {0.01, 0.07, 1.0}) CHECK(argmax(class_logits(v, feats, tau)) == ref);
    std::vector<double> rescaled(feats.values().begin(), feats.values().end());
    for (std::size_t r = 0; r < 7; ++r) {
      const double a = pos(rng);
      for (std::size_t c = 0; c < 6; ++c) rescaled[r * 6 + c] *= a;
    }
    CHECK(argmax(class_logits(scale(v, pos(rng)), Tensor({7, 6}, rescaled), 0.07)) == ref);
  }
}

TEST_CASE("element_loss values") {
  CHECK(std::abs(element_loss(Element::Pair, LossStage::Base, Tensor::zeros({80}), 17).item() - std::log(80.0)) <
        1e-12);
  std::vector<double> perfect(8, -30.0);
  perfect[3] = 30.0;
  CHECK(element_loss(Element::Attr, LossStage::Intra, Tensor::vector(perfect), 3).item() < 1e-20);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z = gaussian_vector(9, 3.0, rng);
    const std::size_t target = static_cast<std::size_t>(trial) % 9;
    CHECK(std::abs(element_loss(Element::Obj, LossStage::Inter, Tensor::vector(z), target).item() -
                   softmax_ce_oracle(z, target)) < 1e-10);
  }
  CHECK_ERROR_KIND(element_loss(Element::Obj, LossStage::Base, Tensor::zeros({10}), 10), ErrorKind::Index);
}

TEST_CASE("total_loss on unit components with both stages is 1.92") {
  LossWeights w;
  auto out = total_loss(unit_inputs(kBoth), w, kBoth);
  // 1.92 has no exact binary representation; the residual is round-off from
  // the weights themselves.
  CHECK(std::abs(out.total - 1.92) < 1e-12);
  CHECK(out.terms.size() == 12);
  CHECK(out.total == out.total_tensor.item());
}

TEST_CASE("disabled stages drop exactly their terms") {
  LossWeights w;
  auto none = total_loss(unit_inputs({}), w, {});
  for (const auto& [name, value] : none.terms) {
    CHECK(name.find(".inter") == std::string::npos);
    CHECK(name.find(".intra") == std::string::npos);
  }
  CHECK(std::abs(none.total - (0.1 + 0.02 + 0.6)) < 1e-12);

  const std::vector<Stage> inter_only{Stage::Inter};
  auto inter = total_loss(unit_inputs(inter_only), w, inter_only);
  CHECK(inter.has("obj.inter"));
  CHECK_FALSE(inter.has("obj.intra"));
  CHECK(std::abs(inter.total - 1.32) < 1e-12);

  auto names = loss_term_names({PromptForm::Hard, PromptForm::Soft, PromptForm::Soft}, {true, true, true},
                               inter_only);
  REQUIRE(names.size() == inter.terms.size());
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(names[i] == inter.terms[i].first);
  CHECK(names[1] == "pair.hard");
  CHECK(names[4] == "attr.soft");

  CHECK_ERROR_KIND(total_loss(unit_inputs(kBoth), w, inter_only), ErrorKind::Contract);
  CHECK_ERROR_KIND(total_loss(unit_inputs(inter_only), w, kBoth), ErrorKind::Contract);
}

TEST_CASE("total_loss is linear in each weight") {
  Rng rng(4);
  LossInputs in;
  for (Element e : kElements) {
    ElementTerms t;
    std::uniform_real_distribution<double> u(0.1, 3.0);
    t.baseline = Tensor::scalar(u(rng));
    t.base = Tensor::scalar(u(rng));
    t.inter = Tensor::scalar(u(rng));
    t.intra = Tensor::scalar(u(rng));
    in.elements[index(e)] = t;
  }
  LossWeights w;
  const double base = total_loss(in, w, kBoth).total;
  double intra_sum = 0.0;
  for (Element e : kElements) intra_sum += in.elements[index(e)]->intra->item();
  LossWeights doubled = w;
  doubled.gamma *= 2.0;
  CHECK(std::abs(total_loss(in, doubled, kBoth).total - (base + w.gamma * intra_sum)) < 1e-12);

  for (double LossWeights::*field : {&LossWeights::baseline_pair, &LossWeights::baseline_prim, &LossWeights::alpha,
                                     &LossWeights::beta, &LossWeights::gamma}) {
    LossWeights zero = w, one = w, three = w;
    zero.*field = 0.0;
    one.*field = 1.0;
    three.*field = 3.0;
    const double f0 = total_loss(in, zero, kBoth).total, f1 = total_loss(in, one, kBoth).total;
    CHECK(std::abs(total_loss(in, three, kBoth).total - (f0 + 3.0 * (f1 - f0))) < 1e-10);
  }

  LossWeights bad = w;
  bad.alpha = -1.0;
  CHECK_ERROR_KIND(total_loss(in, bad, kBoth), ErrorKind::Config);
  bad = w;
  bad.temperature = 0.0;
  CHECK_ERROR_KIND(bad.validate(), ErrorKind::Config);
}

TEST_CASE("gradients flow through logits, losses and the weighted total") {
  Rng rng(5);
  Tensor v = random_tensor({6}, rng, true);
  Tensor feats = random_tensor({5, 6}, rng, true);
  std::vector<Tensor> params{v, feats};
  auto report = check_gradients(
      [&] {
        LossInputs in;
        ElementTerms t;
        t.baseline = element_loss(Element::Pair, LossStage::Base, class_logits(v, feats, 0.5), 1);
        t.base = element_loss(Element::Pair, LossStage::Base, class_logits(v, feats, 0.07), 2);
        in.elements[0] = t;
        return total_loss(in, LossWeights{}, {}).total_tensor;
      },
      params);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("loss CSV layout") {
  auto out = total_loss(unit_inputs({}, {true, false, false}), LossWeights{}, {});
  std::ostringstream csv;
  std::vector<std::string> names{"pair.hard_soft_baseline", "pair.hard"};
  write_loss_csv_header(csv, names);
  write_loss_csv_row(csv, 3, out);
  CHECK(csv.str() == "step,pair.hard_soft_baseline,pair.hard,total\n3,1,1,0.30000000000000004\n");
}
