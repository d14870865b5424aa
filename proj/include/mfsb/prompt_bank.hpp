#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mfsb/composition_space.hpp"
#include "mfsb/rng.hpp"
#include "mfsb/tensor.hpp"

namespace mfsb {

enum class Element : std::size_t { Pair = 0, Attr = 1, Obj = 2 };
inline constexpr std::array<Element, 3> kElements{Element::Pair, Element::Attr, Element::Obj};
inline constexpr std::size_t index(Element e) { return static_cast<std::size_t>(e); }
std::string to_string(Element e);

enum class PromptForm { Hard, Soft, HardPlusSoft };
/// Config spelling: hard, soft, hard_soft.
std::string to_string(PromptForm f);
/// Table spelling: Hard, Soft, Hard+Soft.
std::string display_name(PromptForm f);
std::optional<PromptForm> parse_prompt_form(std::string_view text);

/// Hard and/or Soft, in that order.
std::vector<PromptForm> branch_forms(PromptForm f);

/// Frozen vocabulary embeddings standing in for a text model's token table.
class TokenEmbeddingTable {
 public:
  TokenEmbeddingTable() = default;
  TokenEmbeddingTable(std::vector<std::string> vocab, Tensor embeddings);

  /// Vocabulary = template words ("a", "photo", "of") + state + object names,
  /// rows drawn N(0, 1).
  static TokenEmbeddingTable build(const CompositionSpace& space, std::size_t d, Rng& rng);

  bool contains(std::string_view token) const;
  std::size_t row(std::string_view token) const;
  std::size_t dim() const { return embeddings_.dim(1); }
  std::size_t size() const { return embeddings_.dim(0); }
  const Tensor& embeddings() const { return embeddings_; }
  Tensor& embeddings() { return embeddings_; }
  bool trainable() const { return embeddings_.requires_grad(); }
  Tensor lookup(std::span<const std::string> tokens) const;

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  Tensor embeddings_;
};

inline const std::array<std::string, 3> kHardTemplate{"a", "photo", "of"};

/// Learnable context vectors prepended to a label embedding.
struct SoftPrefix {
  Element element = Element::Attr;
  Tensor vectors;  // [p, d], trainable

  std::size_t length() const { return vectors.dim(0); }
  /// i.i.d. N(0, sigma^2) initialization.
  static SoftPrefix random(Element element, std::size_t length, std::size_t d, Rng& rng,
                           double sigma = 0.02);
};

/// ["a", "photo", "of", state, object] -> [5, d]
Tensor compose_hard_pair(const CompositionSpace& space, std::size_t state, std::size_t object,
                         const TokenEmbeddingTable& table);
/// Hard template for one element's class; for pairs `label` is a PairId.
Tensor compose_hard(Element element, std::size_t label, const CompositionSpace& space,
                    const TokenEmbeddingTable& table);
/// Prefix rows followed by the label's vocabulary row(s): [p+1, d] for a
/// primitive, [p+2, d] for a pair.
Tensor compose_soft(Element element, std::size_t label, const SoftPrefix& prefix,
                    const CompositionSpace& space, const TokenEmbeddingTable& table);

struct PromptBanks {
  TokenEmbeddingTable table;
  std::array<std::optional<SoftPrefix>, 3> prefixes;  // indexed by Element

  const SoftPrefix& prefix(Element e) const;
};

/// One prompt per class, all of one form (Hard or Soft).
struct PromptSet {
  PromptForm form;
  std::size_t length;
  std::vector<Tensor> sequences;
};

/// Class prompts for `element` under `form`. HardPlusSoft yields two sets,
/// hard first. Pair classes default to every pair in the space.
std::vector<PromptSet> class_prompts(Element element, PromptForm form,
                                     const CompositionSpace& space, const PromptBanks& banks,
                                     std::span<const PairId> pair_classes = {});

std::size_t prompt_length(Element element, PromptForm single_form, std::size_t prefix_length);

}  // namespace mfsb
