#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfsb/model.hpp"

namespace mfsb {

struct AdamOptions {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> m, v;  // parallel to the parameter list
  std::size_t step = 0;

  static AdamState for_params(std::span<const NamedTensor> params, AdamOptions options = {});
};

/// One bias-corrected Adam update from each parameter's accumulated gradient,
/// which is then cleared. Parameters that do not require gradients are left
/// alone; a trainable parameter without a gradient is a contract error.
void adam_step(std::span<const NamedTensor> params, AdamState& state);

struct StepRecord {
  std::vector<std::pair<std::string, double>> terms;
  double total;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_mean_loss;
  std::vector<EvalReport> epoch_reports;  // validation, one per epoch
};

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch = 16;
  AdamOptions adam;
  World validation_world = World::Open;
  std::size_t n_points = 101;
  bool validate_each_epoch = true;
};

/// Seeded shuffle, then one Adam step per mini-batch. Appends to `history`.
void train_epoch(CzslModel& model, std::span<const Sample> train, std::span<const PairId> seen_pairs,
                 AdamState& state, const TrainOptions& options, Rng& rng, TrainHistory& history);

EvalReport evaluate(const CzslModel& model, const CompositionSpace& space, const Split& split,
                    const Dataset& data, Partition partition, World world, std::size_t n_points);

/// Trains for options.epochs, validating after each epoch, and writes a
/// checkpoint when a path is given.
TrainHistory fit(CzslModel& model, const CompositionSpace& space, const Split& split, const Dataset& data,
                 const TrainOptions& options, std::uint64_t seed, std::uint64_t config_hash,
                 const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

/// Binary container: "MFSBCKPT", u32 version, u64 config hash, u32 count,
/// then per tensor u32 name length, name, u32 rank, u64 dims, f64 values.
/// Little-endian.
void write_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash,
                      std::span<const NamedTensor> tensors);

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;
};
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into the model's trainable tensors after
/// checking the config hash and every name and shape.
void load_checkpoint(CzslModel& model, const std::filesystem::path& path, std::uint64_t config_hash);

}  // namespace mfsb
