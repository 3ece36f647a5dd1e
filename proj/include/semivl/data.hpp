#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "semivl/model.hpp"
#include "semivl/rng.hpp"

namespace semivl {

/// One measurement: waveform plus optional labels.
struct WaveformSample {
  std::vector<double> waveform;  // kWaveformLength samples
  std::optional<double> range_error;  // meters, measured minus true distance
  std::optional<std::size_t> env_label;  // room scenario
  std::optional<std::size_t> material_label;
  double measured_distance = 0.0;  // meters

  bool labeled() const { return range_error.has_value() && env_label.has_value(); }
  friend bool operator==(const WaveformSample&, const WaveformSample&) = default;
};

using Dataset = std::vector<WaveformSample>;

/// Valid label ids: room in [0, rooms), material in [0, materials).
struct LabelSpace {
  std::size_t rooms = 5;
  std::size_t materials = 10;
};

/// Malformed dataset input; `row()` is the 1-based line number after the header (0 for the header).
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t row, const std::string& what);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

Dataset read_dataset(std::istream& in, const LabelSpace& labels = {});
Dataset load_dataset(const std::filesystem::path& path, const LabelSpace& labels = {});
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

/// Labeled/unlabeled partition for supervision rate eta = N / (M + N).
struct SupervisionSplit {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  double eta = 1.0;
  std::uint64_t seed = 0;

  std::size_t n_labeled() const { return labeled.size(); }
  std::size_t n_unlabeled() const { return unlabeled.size(); }
  double realized_eta() const;
};

/// N = floor(eta * size) labeled rows drawn uniformly without replacement among rows that carry
/// labels; deterministic in seed. Both index lists are sorted.
SupervisionSplit split_supervision(const Dataset& data, double eta, std::uint64_t seed);

/// Returns a copy with labels removed from the unlabeled rows of the split.
Dataset withhold_labels(const Dataset& data, const SupervisionSplit& split);

/// Synthetic UWB channel generator with known ground truth.
struct SynthConfig {
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  double nlos_prob = 0.5;
  std::size_t rooms = 5;
  std::size_t materials = 10;
  std::vector<double> room_weights;  // empty -> uniform
  std::vector<double> pulse_widths{1.5, 2.0, 2.5, 3.0, 3.5};  // samples, per room
  std::vector<double> decays{5.0, 10.0, 15.0, 20.0, 25.0};     // multipath tail decay in samples, per room
  double bias_mean = 0.5;        // NLOS bias mean, meters
  double bias_spread = 0.1;      // NLOS bias std, meters
  double range_noise_std = 0.05; // meters
  double waveform_noise_std = 0.01;
  double dist_min = 1.0;
  double dist_max = 20.0;
  std::size_t first_path_index = 30;
  std::size_t echoes = 4;

  void validate() const;
};

struct SyntheticData {
  Dataset samples;
  std::vector<double> true_distance;
  std::vector<bool> nlos;
};

inline constexpr double kMetersPerSample = 0.2998;  // one CIR tap at ~1 ns

/// `stream` separates independent draws (e.g. a test set) under the same seed.
SyntheticData synth_generate(const SynthConfig& config, Stream stream = Stream::kGenerate);

/// Per-waveform peak magnitudes used for scaling; degenerate rows were all-zero and left as is.
struct NormalizationStats {
  std::vector<double> peak;
  std::vector<bool> degenerate;
};

struct Normalized {
  Dataset data;
  NormalizationStats stats;
};

/// Scales each waveform to unit peak magnitude.
Normalized normalize_waveform(const Dataset& data);
Dataset denormalize_waveform(const Dataset& data, const NormalizationStats& stats);

/// Waveforms of the given rows stacked into [rows, 157].
Tensor stack_waveforms(const Dataset& data, std::span<const std::size_t> rows);

/// {rows from other rooms, rows of `room`}: train/test split by held-out room.
std::pair<Dataset, Dataset> split_by_room(const Dataset& data, std::size_t room);

}  // namespace semivl
