#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfsb {

using PairId = std::size_t;

struct Pair {
  std::size_t state;
  std::size_t object;
  friend bool operator==(const Pair&, const Pair&) = default;
};

/// State set x object set, with pairs indexed state-major.
struct CompositionSpace {
  std::vector<std::string> states;
  std::vector<std::string> objects;
  std::uint64_t seed = 0;

  std::size_t n_states() const { return states.size(); }
  std::size_t n_objects() const { return objects.size(); }
  std::size_t n_pairs() const { return states.size() * objects.size(); }

  PairId pair_id(std::size_t state, std::size_t object) const;
  Pair pair(PairId id) const;
  std::vector<Pair> pairs() const;
};

/// Synthetic space with names s00.., o00.. (zero-padded to at least two
/// digits). Both counts must be at least 2.
CompositionSpace generate_space(std::size_t n_states, std::size_t n_objects, std::uint64_t seed);

enum class Partition { Train, Val, Test };
std::string to_string(Partition p);

struct SampleRef {
  std::size_t sample_id;
  PairId pair;
};

/// Seen/unseen partition plus the per-partition sample lists. Seen pairs
/// appear in train, val and test; unseen pairs are divided between val and
/// test (a single unseen pair goes to both).
struct Split {
  std::vector<PairId> seen;    // sorted
  std::vector<PairId> unseen;  // sorted
  std::vector<SampleRef> train, val, test;

  bool is_seen(PairId id) const;
  bool is_unseen(PairId id) const;
  const std::vector<SampleRef>& samples(Partition p) const;
};

struct SplitOptions {
  double unseen_fraction = 0.3;
  std::size_t train_per_pair = 10;
  std::size_t eval_per_pair = 5;
  std::size_t max_attempts = 1000;
};

/// Samples round(unseen_fraction * |C|) unseen pairs uniformly, redrawing
/// until every state and object keeps at least one seen pair.
Split make_split(const CompositionSpace& space, const SplitOptions& options, std::uint64_t seed);
Split make_split(const CompositionSpace& space, double unseen_fraction,
                 std::size_t samples_per_seen_pair, std::uint64_t seed);

enum class World { Open, Closed };
std::string to_string(World w);

/// Open world: every pair in C. Closed world: the pairs that occur in the
/// labels of the given evaluation partition. Sorted ascending.
std::vector<PairId> candidate_set(const CompositionSpace& space, const Split& split, World world,
                                  Partition eval_partition = Partition::Test);

/// `pair_id<TAB>state<TAB>object<TAB>seen|unseen<TAB>split`, one line per
/// (pair, partition) the pair occurs in, partitions in train/val/test order.
void write_manifest(std::ostream& out, const CompositionSpace& space, const Split& split);

struct ManifestRow {
  PairId pair;
  std::string state, object;
  bool seen;
  Partition partition;
};
std::vector<ManifestRow> read_manifest(std::istream& in);

}  // namespace mfsb
