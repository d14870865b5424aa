#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mfsb/composition_space.hpp"
#include "mfsb/tensor.hpp"

namespace mfsb {

/// Planted ground truth: one unit direction per state and per object.
struct GeneratorSpec {
  Tensor latent_state;   // [n_states, d_in]
  Tensor latent_object;  // [n_objects, d_in]
  double noise_sigma = 0.1;

  std::size_t input_dim() const { return latent_state.dim(1); }
};

GeneratorSpec build_generator(const CompositionSpace& space, std::size_t d_in, std::uint64_t seed,
                              double noise_sigma = 0.1);

struct Sample {
  std::size_t sample_id = 0;
  PairId pair = 0;
  std::size_t state = 0;
  std::size_t object = 0;
  Partition partition = Partition::Train;
  std::vector<double> features;  // [d_in]
};

/// features = normalize(latent_state[s] + latent_object[o] + eps), eps ~ N(0, sigma^2 I)
/// drawn from an RNG seeded by `sample_seed`.
Sample synthesize_sample(const CompositionSpace& space, PairId pair, const GeneratorSpec& gen,
                         std::uint64_t sample_seed, double noise_sigma);

/// Counter-based per-sample seed.
std::uint64_t sample_seed(std::uint64_t seed, PairId pair, std::size_t sample_id);

struct Dataset {
  std::size_t d_in = 0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<Sample> train, val, test;

  const std::vector<Sample>& samples(Partition p) const;
  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

Dataset materialize_dataset(const CompositionSpace& space, const Split& split, const GeneratorSpec& gen,
                            double noise_sigma, std::uint64_t seed);

/// Text table; see README for the layout. Reals are written in shortest
/// round-trip form so read_dataset(write_dataset(d)) is bit-exact.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in, const CompositionSpace& space);

/// Brute-force reference classifier: the candidate whose normalized latent
/// sum has the highest cosine with the sample. Ties go to the lowest id.
PairId nearest_latent_sum(const CompositionSpace& space, const GeneratorSpec& gen,
                          std::span<const double> features, std::span<const PairId> candidates);
double oracle_accuracy(const CompositionSpace& space, const GeneratorSpec& gen,
                       std::span<const Sample> samples, std::span<const PairId> candidates);

}  // namespace mfsb
