#include "mfsb/prompt_bank.hpp"

#include <numeric>

#include "mfsb/error.hpp"

namespace mfsb {

std::string to_string(Element e) {
  switch (e) {
    case Element::Pair: return "pair";
    case Element::Attr: return "attr";
    case Element::Obj: return "obj";
  }
  return "?";
}

std::string to_string(PromptForm f) {
  switch (f) {
    case PromptForm::Hard: return "hard";
    case PromptForm::Soft: return "soft";
    case PromptForm::HardPlusSoft: return "hard_soft";
  }
  return "?";
}

std::string display_name(PromptForm f) {
  switch (f) {
    case PromptForm::Hard: return "Hard";
    case PromptForm::Soft: return "Soft";
    case PromptForm::HardPlusSoft: return "Hard+Soft";
  }
  return "?";
}

std::optional<PromptForm> parse_prompt_form(std::string_view text) {
  if (text == "hard") return PromptForm::Hard;
  if (text == "soft") return PromptForm::Soft;
  if (text == "hard_soft") return PromptForm::HardPlusSoft;
  return std::nullopt;
}

std::vector<PromptForm> branch_forms(PromptForm f) {
  if (f == PromptForm::HardPlusSoft) return {PromptForm::Hard, PromptForm::Soft};
  return {f};
}

TokenEmbeddingTable::TokenEmbeddingTable(std::vector<std::string> vocab, Tensor embeddings)
    : vocab_(std::move(vocab)), embeddings_(std::move(embeddings)) {
  if (embeddings_.rank() != 2 || embeddings_.dim(0) != vocab_.size()) {
    fail(ErrorKind::Dimension, "embedding table " + shape_string(embeddings_.shape()) + " for " +
                                   std::to_string(vocab_.size()) + " tokens");
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], i).second) {
      fail(ErrorKind::Vocabulary, "duplicate token '" + vocab_[i] + "'");
    }
  }
}

TokenEmbeddingTable TokenEmbeddingTable::build(const CompositionSpace& space, std::size_t d,
                                               Rng& rng) {
  std::vector<std::string> vocab(kHardTemplate.begin(), kHardTemplate.end());
  vocab.insert(vocab.end(), space.states.begin(), space.states.end());
  vocab.insert(vocab.end(), space.objects.begin(), space.objects.end());
  const std::size_t v = vocab.size();
  return TokenEmbeddingTable(std::move(vocab), Tensor({v, d}, gaussian_vector(v * d, 1.0, rng)));
}

bool TokenEmbeddingTable::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::size_t TokenEmbeddingTable::row(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) fail(ErrorKind::Vocabulary, "no embedding for token '" + std::string(token) + "'");
  return it->second;
}

Tensor TokenEmbeddingTable::lookup(std::span<const std::string> tokens) const {
  std::vector<std::size_t> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) rows.push_back(row(t));
  return index_rows(embeddings_, rows);
}

SoftPrefix SoftPrefix::random(Element element, std::size_t length, std::size_t d, Rng& rng,
                              double sigma) {
  if (length == 0) fail(ErrorKind::Config, "soft prefix length must be at least 1");
  return SoftPrefix{element, Tensor({length, d}, gaussian_vector(length * d, sigma, rng), true)};
}

namespace {

std::vector<std::string> label_tokens(Element element, std::size_t label,
                                      const CompositionSpace& space) {
  switch (element) {
    case Element::Pair: {
      Pair p = space.pair(label);
      return {space.states[p.state], space.objects[p.object]};
    }
    case Element::Attr:
      if (label >= space.n_states()) fail(ErrorKind::Index, "state " + std::to_string(label) + " out of range");
      return {space.states[label]};
    case Element::Obj:
      if (label >= space.n_objects()) fail(ErrorKind::Index, "object " + std::to_string(label) + " out of range");
      return {space.objects[label]};
  }
  return {};
}

}  // namespace

Tensor compose_hard_pair(const CompositionSpace& space, std::size_t state, std::size_t object,
                         const TokenEmbeddingTable& table) {
  return compose_hard(Element::Pair, space.pair_id(state, object), space, table);
}

Tensor compose_hard(Element element, std::size_t label, const CompositionSpace& space,
                    const TokenEmbeddingTable& table) {
  std::vector<std::string> tokens(kHardTemplate.begin(), kHardTemplate.end());
  for (auto& t : label_tokens(element, label, space)) tokens.push_back(std::move(t));
  return table.lookup(tokens);
}

Tensor compose_soft(Element element, std::size_t label, const SoftPrefix& prefix,
                    const CompositionSpace& space, const TokenEmbeddingTable& table) {
  if (prefix.element != element) {
    fail(ErrorKind::Contract, "soft prefix for " + to_string(prefix.element) + " used for " +
                                  to_string(element));
  }
  const auto tokens = label_tokens(element, label, space);
  std::vector<Tensor> parts{prefix.vectors, table.lookup(tokens)};
  return concat_rows(parts);
}

const SoftPrefix& PromptBanks::prefix(Element e) const {
  const auto& p = prefixes[index(e)];
  if (!p) fail(ErrorKind::Contract, "no soft prefix for element " + to_string(e));
  return *p;
}

std::size_t prompt_length(Element element, PromptForm single_form, std::size_t prefix_length) {
  const std::size_t label_len = element == Element::Pair ? 2 : 1;
  if (single_form == PromptForm::HardPlusSoft) {
    fail(ErrorKind::Contract, "prompt_length needs a single form");
  }
  return (single_form == PromptForm::Hard ? kHardTemplate.size() : prefix_length) + label_len;
}

std::vector<PromptSet> class_prompts(Element element, PromptForm form,
                                     const CompositionSpace& space, const PromptBanks& banks,
                                     std::span<const PairId> pair_classes) {
  std::vector<std::size_t> classes;
  if (element == Element::Pair) {
    if (pair_classes.empty()) {
      classes.resize(space.n_pairs());
      std::iota(classes.begin(), classes.end(), 0);
    } else {
      classes.assign(pair_classes.begin(), pair_classes.end());
    }
  } else {
    classes.resize(element == Element::Attr ? space.n_states() : space.n_objects());
    std::iota(classes.begin(), classes.end(), 0);
  }

  std::vector<PromptSet> out;
  for (PromptForm f : branch_forms(form)) {
    PromptSet set{f, 0, {}};
    set.sequences.reserve(classes.size());
    for (std::size_t c : classes) {
      set.sequences.push_back(f == PromptForm::Hard
                                  ? compose_hard(element, c, space, banks.table)
                                  : compose_soft(element, c, banks.prefix(element), space, banks.table));
    }
    set.length = set.sequences.front().dim(0);
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace mfsb
