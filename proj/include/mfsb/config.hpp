#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfsb/composition_space.hpp"
#include "mfsb/model.hpp"
#include "mfsb/trainer.hpp"

namespace mfsb {

enum class WorldSelection { Open, Closed, Both };
std::string to_string(WorldSelection w);
std::optional<WorldSelection> parse_world_selection(std::string_view text);
std::vector<World> worlds(WorldSelection w);

/// Everything one run depends on. Defaults reproduce the best prompt setting
/// (hard pair, soft attr, soft obj, inter then intra) on an 8x10 space.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t n_states = 8;
  std::size_t n_objects = 10;
  SplitOptions split;
  double noise_sigma = 0.1;
  ModelConfig model;
  TrainOptions train;
  WorldSelection world = WorldSelection::Both;

  /// Throws a config error naming the offending key.
  void validate() const;
};

/// Flat `key = value` lines, `#` starts a comment. Unknown keys, unparsable
/// values and violated invariants raise config errors that name the key and
/// the line. `source` labels messages.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// Canonical effective config: every key, fixed order, one `key = value` per
/// line. Parsing the echo yields the same config.
std::string echo_config(const ExperimentConfig& config);

/// FNV-1a 64 of the canonical echo.
std::uint64_t config_hash(const ExperimentConfig& config);
std::string hash_hex(std::uint64_t hash);

/// Comma-separated active elements, e.g. "pair,attr,obj".
std::string element_list(const std::array<bool, 3>& active);

}  // namespace mfsb
