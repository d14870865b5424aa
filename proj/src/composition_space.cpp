#include "mfsb/composition_space.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "mfsb/error.hpp"
#include "mfsb/rng.hpp"

namespace mfsb {

namespace {

std::string padded(char prefix, std::size_t i, std::size_t count) {
  std::size_t width = std::max<std::size_t>(2, std::to_string(count - 1).size());
  std::string digits = std::to_string(i);
  return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

PairId CompositionSpace::pair_id(std::size_t state, std::size_t object) const {
  if (state >= n_states() || object >= n_objects()) {
    fail(ErrorKind::Index, "pair (" + std::to_string(state) + "," + std::to_string(object) +
                               ") outside " + std::to_string(n_states()) + "x" +
                               std::to_string(n_objects()) + " space");
  }
  return state * n_objects() + object;
}

Pair CompositionSpace::pair(PairId id) const {
  if (id >= n_pairs()) fail(ErrorKind::Index, "pair id " + std::to_string(id) + " out of range");
  return {id / n_objects(), id % n_objects()};
}

std::vector<Pair> CompositionSpace::pairs() const {
  std::vector<Pair> out;
  out.reserve(n_pairs());
  for (std::size_t s = 0; s < n_states(); ++s)
    for (std::size_t o = 0; o < n_objects(); ++o) out.push_back({s, o});
  return out;
}

CompositionSpace generate_space(std::size_t n_states, std::size_t n_objects, std::uint64_t seed) {
  if (n_states < 2 || n_objects < 2) {
    fail(ErrorKind::Config, "need at least 2 states and 2 objects for an unseen split, got " +
                                std::to_string(n_states) + "x" + std::to_string(n_objects));
  }
  CompositionSpace space;
  space.seed = seed;
  for (std::size_t i = 0; i < n_states; ++i) space.states.push_back(padded('s', i, n_states));
  for (std::size_t i = 0; i < n_objects; ++i) space.objects.push_back(padded('o', i, n_objects));
  return space;
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  return "?";
}

std::string to_string(World w) { return w == World::Open ? "open" : "closed"; }

bool Split::is_seen(PairId id) const { return std::binary_search(seen.begin(), seen.end(), id); }

bool Split::is_unseen(PairId id) const {
  return std::binary_search(unseen.begin(), unseen.end(), id);
}

const std::vector<SampleRef>& Split::samples(Partition p) const {
  switch (p) {
    case Partition::Train: return train;
    case Partition::Val: return val;
    case Partition::Test: return test;
  }
  return test;
}

Split make_split(const CompositionSpace& space, const SplitOptions& options, std::uint64_t seed) {
  if (!(options.unseen_fraction > 0.0 && options.unseen_fraction < 1.0)) {
    fail(ErrorKind::Config, "unseen_fraction must lie in (0, 1)");
  }
  if (options.train_per_pair == 0 || options.eval_per_pair == 0) {
    fail(ErrorKind::Config, "samples per pair must be positive");
  }
  const std::size_t n = space.n_pairs();
  auto n_unseen = static_cast<std::size_t>(std::llround(options.unseen_fraction * static_cast<double>(n)));
  n_unseen = std::clamp<std::size_t>(n_unseen, 1, n - 1);

  Rng rng = make_rng(seed, Stream::Split);
  std::vector<PairId> order(n);
  std::vector<PairId> unseen_order;
  std::string uncovered;
  bool ok = false;
  for (std::size_t attempt = 0; attempt < options.max_attempts && !ok; ++attempt) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> state_seen(space.n_states(), false), object_seen(space.n_objects(), false);
    for (std::size_t i = n_unseen; i < n; ++i) {
      Pair p = space.pair(order[i]);
      state_seen[p.state] = true;
      object_seen[p.object] = true;
    }
    ok = true;
    for (std::size_t s = 0; s < space.n_states() && ok; ++s)
      if (!state_seen[s]) ok = false, uncovered = "state " + space.states[s];
    for (std::size_t o = 0; o < space.n_objects() && ok; ++o)
      if (!object_seen[o]) ok = false, uncovered = "object " + space.objects[o];
  }
  if (!ok) {
    fail(ErrorKind::Split, "no unseen sample kept every primitive covered after " +
                               std::to_string(options.max_attempts) + " attempts; uncovered " +
                               uncovered);
  }

  Split split;
  unseen_order.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_unseen));
  split.unseen = unseen_order;
  split.seen.assign(order.begin() + static_cast<std::ptrdiff_t>(n_unseen), order.end());
  std::sort(split.unseen.begin(), split.unseen.end());
  std::sort(split.seen.begin(), split.seen.end());

  std::vector<PairId> val_unseen, test_unseen;
  if (n_unseen == 1) {
    val_unseen = test_unseen = unseen_order;
  } else {
    const std::size_t half = n_unseen / 2;
    val_unseen.assign(unseen_order.begin(), unseen_order.begin() + static_cast<std::ptrdiff_t>(half));
    test_unseen.assign(unseen_order.begin() + static_cast<std::ptrdiff_t>(half), unseen_order.end());
  }

  std::size_t next_id = 0;
  auto emit = [&](std::vector<SampleRef>& out, std::vector<PairId> pairs, std::size_t per_pair) {
    std::sort(pairs.begin(), pairs.end());
    for (PairId p : pairs)
      for (std::size_t k = 0; k < per_pair; ++k) out.push_back({next_id++, p});
  };
  emit(split.train, split.seen, options.train_per_pair);
  auto eval_pairs = [&](const std::vector<PairId>& unseen_part) {
    std::vector<PairId> pairs = split.seen;
    pairs.insert(pairs.end(), unseen_part.begin(), unseen_part.end());
    return pairs;
  };
  emit(split.val, eval_pairs(val_unseen), options.eval_per_pair);
  emit(split.test, eval_pairs(test_unseen), options.eval_per_pair);
  return split;
}

Split make_split(const CompositionSpace& space, double unseen_fraction,
                 std::size_t samples_per_seen_pair, std::uint64_t seed) {
  SplitOptions options;
  options.unseen_fraction = unseen_fraction;
  options.train_per_pair = samples_per_seen_pair;
  return make_split(space, options, seed);
}

std::vector<PairId> candidate_set(const CompositionSpace& space, const Split& split, World world,
                                  Partition eval_partition) {
  std::vector<PairId> out;
  if (world == World::Open) {
    out.resize(space.n_pairs());
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  std::set<PairId> labels;
  for (const auto& ref : split.samples(eval_partition)) labels.insert(ref.pair);
  return {labels.begin(), labels.end()};
}

void write_manifest(std::ostream& out, const CompositionSpace& space, const Split& split) {
  out << "# pair_id\tstate\tobject\tstatus\tsplit\n";
  for (PairId p = 0; p < space.n_pairs(); ++p) {
    const bool seen = split.is_seen(p);
    if (!seen && !split.is_unseen(p)) continue;
    const Pair pr = space.pair(p);
    for (Partition part : {Partition::Train, Partition::Val, Partition::Test}) {
      const auto& refs = split.samples(part);
      bool present = std::any_of(refs.begin(), refs.end(), [p](const SampleRef& r) { return r.pair == p; });
      if (!present) continue;
      out << p << '\t' << space.states[pr.state] << '\t' << space.objects[pr.object] << '\t'
          << (seen ? "seen" : "unseen") << '\t' << to_string(part) << '\n';
    }
  }
}

std::vector<ManifestRow> read_manifest(std::istream& in) {
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string id, state, object, status, part;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, state, '\t') ||
        !std::getline(fields, object, '\t') || !std::getline(fields, status, '\t') ||
        !std::getline(fields, part, '\t')) {
      fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) + ": expected 5 fields");
    }
    ManifestRow row;
    row.pair = std::stoull(id);
    row.state = state;
    row.object = object;
    if (status != "seen" && status != "unseen") {
      fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) + ": bad status " + status);
    }
    row.seen = status == "seen";
    if (part == "train") row.partition = Partition::Train;
    else if (part == "val") row.partition = Partition::Val;
    else if (part == "test") row.partition = Partition::Test;
    else fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) + ": bad split " + part);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mfsb
