#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfsb/fusion.hpp"
#include "mfsb/prompt_bank.hpp"
#include "mfsb/tensor.hpp"

namespace mfsb {

struct LossWeights {
  double baseline_pair = 0.1;
  double baseline_prim = 0.01;  // attr and obj baselines
  double alpha = 0.2;           // base terms
  double beta = 0.2;            // inter terms
  double gamma = 0.2;           // intra terms
  double temperature = 0.07;

  void validate() const;
};

/// cos(v, class_feats[c]) / tau for every class row.
Tensor class_logits(const Tensor& v, const Tensor& class_feats, double tau);

enum class LossStage { Base, Inter, Intra };

/// Cross-entropy of one element's logits at one stage. Pair targets index the
/// pair candidates, attr/obj targets index primitives.
Tensor element_loss(Element element, LossStage stage, const Tensor& logits, std::size_t target);

/// Component losses of one element; unset means "not computed".
struct ElementTerms {
  std::optional<Tensor> baseline;  // hard + soft on unfused features
  std::optional<Tensor> base;      // the configured form(s), unfused
  std::optional<Tensor> inter;
  std::optional<Tensor> intra;
};

struct LossInputs {
  std::array<std::optional<ElementTerms>, 3> elements;  // inactive elements unset
  std::array<PromptForm, 3> forms{PromptForm::Hard, PromptForm::Soft, PromptForm::Soft};
};

struct LossBreakdown {
  std::vector<std::pair<std::string, double>> terms;  // fixed column order
  double total = 0.0;
  Tensor total_tensor;

  std::optional<double> term(const std::string& name) const;
  bool has(const std::string& name) const { return term(name).has_value(); }
};

/// Column names of the terms present for a configuration, in breakdown order.
std::vector<std::string> loss_term_names(const std::array<PromptForm, 3>& forms,
                                         const std::array<bool, 3>& active,
                                         std::span<const Stage> trace);

/// w_bp*L_pair^bl + w_bo*(L_attr^bl + L_obj^bl) + alpha*sum(base) + beta*sum(inter)
/// + gamma*sum(intra). Stage terms must be present exactly when the stage ran.
LossBreakdown total_loss(const LossInputs& inputs, const LossWeights& weights,
                         std::span<const Stage> trace);

/// `step,<term>...,total`
void write_loss_csv_header(std::ostream& out, std::span<const std::string> names);
void write_loss_csv_row(std::ostream& out, std::size_t step, const LossBreakdown& breakdown);

}  // namespace mfsb
