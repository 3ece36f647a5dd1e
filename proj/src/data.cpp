#include "semivl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>

#include "semivl/rng.hpp"

namespace semivl {

DatasetError::DatasetError(std::size_t row, const std::string& what)
    : std::runtime_error(row == 0 ? "header: " + what : "row " + std::to_string(row) + ": " + what), row_(row) {}

namespace {

constexpr std::size_t kLabelColumns = 4;
constexpr std::size_t kColumns = kWaveformLength + kLabelColumns;

std::string header_line() {
  std::string h;
  char buf[8];
  for (std::size_t i = 0; i < kWaveformLength; ++i) {
    std::snprintf(buf, sizeof buf, "w%03zu", i);
    h += buf;
    h += ',';
  }
  h += "range_error_m,room_label,material_label,measured_dist_m";
  return h;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_real(std::string_view field, std::size_t row, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw DatasetError(row, "column " + column + ": '" + std::string(field) + "' is not a finite number");
  }
  return v;
}

std::size_t parse_label(std::string_view field, std::size_t row, const std::string& column, std::size_t limit) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DatasetError(row, "column " + column + ": '" + std::string(field) + "' is not a label id");
  }
  if (v >= limit) {
    throw DatasetError(row, "column " + column + ": unknown label id " + std::to_string(v) + " (expected < " +
                                std::to_string(limit) + ")");
  }
  return v;
}

void append_real(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace

Dataset read_dataset(std::istream& in, const LabelSpace& labels) {
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(0, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header_line()) throw DatasetError(0, "header does not match w000..w156,range_error_m,room_label,material_label,measured_dist_m");
  Dataset out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != kColumns) {
      throw DatasetError(row, "expected " + std::to_string(kColumns) + " columns (" + std::to_string(kWaveformLength) +
                                  " waveform + 4 label), got " + std::to_string(fields.size()));
    }
    WaveformSample s;
    s.waveform.resize(kWaveformLength);
    for (std::size_t i = 0; i < kWaveformLength; ++i) {
      s.waveform[i] = parse_real(fields[i], row, "w" + std::to_string(i));
    }
    const auto dd = fields[kWaveformLength];
    const auto room = fields[kWaveformLength + 1];
    const auto material = fields[kWaveformLength + 2];
    if (!dd.empty()) s.range_error = parse_real(dd, row, "range_error_m");
    if (!room.empty()) s.env_label = parse_label(room, row, "room_label", labels.rooms);
    if (!material.empty()) s.material_label = parse_label(material, row, "material_label", labels.materials);
    s.measured_distance = parse_real(fields[kWaveformLength + 3], row, "measured_dist_m");
    if (s.range_error.has_value() != s.env_label.has_value()) {
      throw DatasetError(row, "labeled rows need both range_error_m and room_label");
    }
    out.push_back(std::move(s));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, const LabelSpace& labels) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  try {
    return read_dataset(in, labels);
  } catch (const DatasetError& e) {
    throw DatasetError(e.row(), path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << header_line() << '\n';
  std::string line;
  for (const WaveformSample& s : data) {
    if (s.waveform.size() != kWaveformLength) {
      throw std::invalid_argument("write_dataset: waveform length " + std::to_string(s.waveform.size()) + " != 157");
    }
    line.clear();
    for (double v : s.waveform) {
      append_real(line, v);
      line += ',';
    }
    if (s.range_error) append_real(line, *s.range_error);
    line += ',';
    if (s.env_label) line += std::to_string(*s.env_label);
    line += ',';
    if (s.material_label) line += std::to_string(*s.material_label);
    line += ',';
    append_real(line, s.measured_distance);
    out << line << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  write_dataset(out, data);
  if (!out) throw std::runtime_error("error writing dataset file " + path.string());
}

// ---- supervision split ------------------------------------------------------------------

double SupervisionSplit::realized_eta() const {
  const std::size_t total = labeled.size() + unlabeled.size();
  return total == 0 ? 0.0 : static_cast<double>(labeled.size()) / static_cast<double>(total);
}

SupervisionSplit split_supervision(const Dataset& data, double eta, std::uint64_t seed) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("supervision rate must lie in [0, 1]");
  const std::size_t total = data.size();
  // Tolerance keeps products such as 0.29 * 100 from flooring one short.
  const auto n = static_cast<std::size_t>(std::floor(eta * static_cast<double>(total) + 1e-9));
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < total; ++i) {
    if (data[i].labeled()) candidates.push_back(i);
  }
  if (candidates.size() < n) {
    throw std::invalid_argument("supervision rate needs " + std::to_string(n) + " labeled rows but the dataset has " +
                                std::to_string(candidates.size()));
  }
  Rng rng(seed, Stream::kSplit);
  std::shuffle(candidates.begin(), candidates.end(), rng.engine());
  SupervisionSplit split;
  split.eta = eta;
  split.seed = seed;
  split.labeled.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(split.labeled.begin(), split.labeled.end());
  std::vector<char> is_labeled(total, 0);
  for (auto i : split.labeled) is_labeled[i] = 1;
  for (std::size_t i = 0; i < total; ++i) {
    if (!is_labeled[i]) split.unlabeled.push_back(i);
  }
  return split;
}

Dataset withhold_labels(const Dataset& data, const SupervisionSplit& split) {
  Dataset out = data;
  for (auto i : split.unlabeled) {
    out.at(i).range_error.reset();
    out.at(i).env_label.reset();
    out.at(i).material_label.reset();
  }
  return out;
}

// ---- synthetic generator -----------------------------------------------------------------

void SynthConfig::validate() const {
  if (!(nlos_prob >= 0.0 && nlos_prob <= 1.0)) throw std::invalid_argument("nlos_prob must lie in [0, 1]");
  if (rooms == 0 || materials == 0) throw std::invalid_argument("need at least one room and one material");
  if (pulse_widths.size() != rooms || decays.size() != rooms) {
    throw std::invalid_argument("pulse_widths and decays need one entry per room");
  }
  for (std::size_t k = 0; k < rooms; ++k) {
    if (!(pulse_widths[k] > 0.0) || !(decays[k] > 0.0)) throw std::invalid_argument("pulse widths and decays must be positive");
  }
  if (!room_weights.empty()) {
    if (room_weights.size() != rooms) throw std::invalid_argument("room_weights needs one entry per room");
    double s = 0.0;
    for (double w : room_weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("room_weights must be non-negative");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("room_weights must sum to 1");
  }
  if (!(bias_spread >= 0.0) || !(range_noise_std >= 0.0) || !(waveform_noise_std >= 0.0)) {
    throw std::invalid_argument("spreads and noise levels must be >= 0");
  }
  if (!(dist_min > 0.0) || !(dist_max >= dist_min)) throw std::invalid_argument("need 0 < dist_min <= dist_max");
  if (first_path_index >= kWaveformLength) throw std::invalid_argument("first_path_index outside the waveform");
}

namespace {

// First derivative of a Gaussian, scaled to unit peak magnitude at |t - center| = width.
double monocycle(double t, double center, double width) {
  const double u = (t - center) / width;
  return -u * std::exp(0.5 * (1.0 - u * u));
}

void add_pulse(std::vector<double>& w, double center, double width, double amplitude) {
  for (std::size_t t = 0; t < w.size(); ++t) w[t] += amplitude * monocycle(static_cast<double>(t), center, width);
}

std::size_t pick_room(Rng& rng, const SynthConfig& c) {
  if (c.room_weights.empty()) return rng.index(c.rooms);
  const double u = rng.uniform(0.0, 1.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < c.rooms; ++k) {
    acc += c.room_weights[k];
    if (u < acc) return k;
  }
  return c.rooms - 1;
}

}  // namespace

SyntheticData synth_generate(const SynthConfig& c, Stream stream) {
  c.validate();
  Rng rng(c.seed, stream);
  SyntheticData out;
  out.samples.reserve(c.count);
  const double fp = static_cast<double>(c.first_path_index);
  for (std::size_t i = 0; i < c.count; ++i) {
    const std::size_t room = pick_room(rng, c);
    const bool nlos = rng.bernoulli(c.nlos_prob);
    const double truth = rng.uniform(c.dist_min, c.dist_max);
    const double width = c.pulse_widths[room];
    const double decay = c.decays[room];
    const double path_gain = 1.0 / truth;

    WaveformSample s;
    s.waveform.assign(kWaveformLength, 0.0);
    s.env_label = room;
    double error = 0.0;
    if (nlos) {
      const std::size_t material = rng.index(c.materials);
      const double bias = c.bias_mean + c.bias_spread * rng.normal();
      // Obstructed direct path: attenuated by material. The dominant reflected cluster
      // trails it by an excess delay that grows with the bias.
      const double attenuation = 0.15 + 0.4 * static_cast<double>(material) / static_cast<double>(c.materials);
      add_pulse(s.waveform, fp, width * 1.3, path_gain * attenuation);
      const double excess = 4.0 + 3.0 * bias / kMetersPerSample;
      add_pulse(s.waveform, fp + excess, width, path_gain);
      s.material_label = material;
      error = bias;
    } else {
      add_pulse(s.waveform, fp, width, path_gain);
    }
    for (std::size_t e = 0; e < c.echoes; ++e) {
      const double delay = rng.uniform(6.0, 60.0);
      const double amp = path_gain * rng.uniform(0.2, 0.6) * std::exp(-delay / decay);
      add_pulse(s.waveform, fp + delay, width, amp);
    }
    error += c.range_noise_std * rng.normal();
    for (double& v : s.waveform) v += path_gain * c.waveform_noise_std * rng.normal();

    s.measured_distance = truth + error;
    s.range_error = s.measured_distance - truth;
    out.samples.push_back(std::move(s));
    out.true_distance.push_back(truth);
    out.nlos.push_back(nlos);
  }
  return out;
}

// ---- normalization ---------------------------------------------------------------------------

Normalized normalize_waveform(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("normalize_waveform: empty dataset");
  Normalized out{data, {}};
  for (WaveformSample& s : out.data) {
    double peak = 0.0;
    for (double v : s.waveform) peak = std::max(peak, std::abs(v));
    const bool degenerate = peak == 0.0;
    out.stats.peak.push_back(degenerate ? 1.0 : peak);
    out.stats.degenerate.push_back(degenerate);
    if (!degenerate) {
      for (double& v : s.waveform) v /= peak;
    }
  }
  return out;
}

Dataset denormalize_waveform(const Dataset& data, const NormalizationStats& stats) {
  if (stats.peak.size() != data.size()) throw std::invalid_argument("denormalize_waveform: stats do not match dataset");
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (double& v : out[i].waveform) v *= stats.peak[i];
  }
  return out;
}

Tensor stack_waveforms(const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_waveforms: no rows");
  std::vector<double> buf;
  buf.reserve(rows.size() * kWaveformLength);
  for (auto r : rows) {
    const auto& w = data.at(r).waveform;
    if (w.size() != kWaveformLength) {
      throw std::invalid_argument("waveform of row " + std::to_string(r) + " has length " + std::to_string(w.size()) +
                                  ", expected 157");
    }
    buf.insert(buf.end(), w.begin(), w.end());
  }
  return Tensor(Shape{rows.size(), kWaveformLength}, std::move(buf));
}

std::pair<Dataset, Dataset> split_by_room(const Dataset& data, std::size_t room) {
  std::pair<Dataset, Dataset> out;
  for (const auto& s : data) {
    (s.env_label && *s.env_label == room ? out.second : out.first).push_back(s);
  }
  return out;
}

}  // namespace semivl
