#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semivl/data.hpp"
#include "semivl/loss.hpp"
#include "semivl/model.hpp"
#include "semivl/optimizer.hpp"

namespace semivl {

struct TrainConfig {
  int epochs = 500;
  std::size_t batch_size = 64;
  LrSchedule lr{2e-4, 100};
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double eta = 1.0;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  bool normalize = true;

  void validate() const;
};

/// Every knob of a run. All randomness derives from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  std::size_t synth_test_count = 0;  // > 0: `generate` also writes an independent test set
  ArchConfig arch;
  LossConfig loss;
  TrainConfig train;
  std::string dataset;       // training data file
  std::string test_dataset;  // empty: hold out `test_room` from `dataset`
  int test_room = 2;         // medium room; -1 evaluates on the training file
  std::vector<double> sweep_etas{0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  bool ablation_vary = true;
  std::size_t threads = 1;

  void validate() const;
};

/// Laptop-sized settings: reduced widths and 100 epochs.
RunConfig desk_profile();

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; `#` starts a comment. Throws on malformed lines.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies keys onto `base`. Unknown keys are collected and reported together.
RunConfig apply_key_values(RunConfig base, const KeyValues& values);

/// Full resolved snapshot; feeding it back through apply_key_values reproduces the config.
KeyValues to_key_values(const RunConfig& config);
std::string format_key_values(const KeyValues& values);

struct ConfigKeyDoc {
  std::string key;
  std::string doc;
};
std::vector<ConfigKeyDoc> config_key_docs();

}  // namespace semivl
