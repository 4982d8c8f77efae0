#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "metricnet/data.h"
#include "metricnet/labels.h"
#include "metricnet/model.h"
#include "metricnet/trainer.h"

namespace metricnet {

/// Dataset sources for training. An empty train manifest means "simulate the
/// splits in memory from [simulate]".
struct DataConfig {
  std::filesystem::path train_manifest;
  std::filesystem::path valid_manifest;
};

/// Counts per split for the simulate command; the other generation
/// parameters (and the seed) live in `base`.
struct SimulateSplits {
  SimulateConfig base;
  std::size_t train_count = 20;
  std::size_t valid_count = 0;
  std::size_t test_count = 0;
};

struct OutputConfig {
  std::filesystem::path dir = "run";
  std::string checkpoint = "final.ckpt";
  std::string best_checkpoint = "best.ckpt";
  std::string log = "train.jsonl";
  bool resume = false;
  /// Steps between validation passes (and best-checkpoint updates); 0 runs
  /// validation only at the end.
  std::int64_t eval_every = 100;
  /// Steps between rolling saves of the final checkpoint; 0 saves at the end.
  std::int64_t checkpoint_every = 0;

  std::filesystem::path checkpoint_path() const { return dir / checkpoint; }
  std::filesystem::path best_checkpoint_path() const { return dir / best_checkpoint; }
  std::filesystem::path log_path() const { return dir / log; }
};

struct RunConfig {
  ModelConfig model;
  QuantizerConfig quantizer;
  TrainingConfig training;
  DataConfig data;
  SimulateSplits simulate;
  OutputConfig output;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
  /// Applies --seed: training, initialisation and simulation seeds.
  void set_seed(std::uint64_t seed);
};

/// Parses an INI document with sections [model], [quantizer], [training],
/// [data], [simulate] and [output]. Unknown sections or keys and malformed
/// values are ConfigErrors; relative paths resolve against `base_dir`.
RunConfig parse_run_config(std::istream& in,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace metricnet
