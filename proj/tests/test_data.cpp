#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "semivl/data.hpp"

using namespace semivl;

namespace {

std::string header() {
  std::ostringstream h;
  for (int i = 0; i < 157; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "w%03d", i);
    h << buf << ',';
  }
  h << "range_error_m,room_label,material_label,measured_dist_m";
  return h.str();
}

std::string row(int waveform_cols, const std::string& labels) {
  std::ostringstream r;
  for (int i = 0; i < waveform_cols; ++i) r << 0.01 * i << ',';
  r << labels;
  return r.str();
}

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

std::size_t error_row(const std::string& text) {
  try {
    parse(text);
  } catch (const DatasetError& e) {
    return e.row();
  }
  return 999;
}

SynthConfig small(std::size_t count, std::uint64_t seed = 1) {
  SynthConfig c;
  c.count = count;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("load a well-formed file") {
  const std::string text =
      header() + "\n" + row(157, "0.52,3,7,5.1") + "\r\n" + row(157, ",,,4.25") + "\n";
  const Dataset d = parse(text);
  REQUIRE(d.size() == 2);
  CHECK(d[0].waveform.size() == 157);
  CHECK(d[0].range_error == 0.52);
  CHECK(d[0].env_label == 3u);
  CHECK(d[0].material_label == 7u);
  CHECK(d[0].measured_distance == 5.1);
  CHECK(d[0].labeled());
  CHECK_FALSE(d[1].labeled());
  CHECK(d[1].measured_distance == 4.25);
}

TEST_CASE("malformed rows are rejected with their row number") {
  const std::string good = row(157, "0.1,1,,3.0");
  CHECK(error_row(header() + "\n" + row(156, "0.1,1,,3.0") + "\n") == 1);
  CHECK(error_row(header() + "\n" + good + "\n" + good + "\n" + row(156, "0.1,1,,3.0") + "\n") == 3);
  CHECK(error_row(header() + "\n" + good + "\n" + row(157, "abc,1,,3.0") + "\n") == 2);
  CHECK(error_row(header() + "\n" + row(157, "0.1,9,,3.0") + "\n") == 1);   // room id out of range
  CHECK(error_row(header() + "\n" + row(157, "0.1,,,3.0") + "\n") == 1);    // half-labeled
  CHECK(error_row(header() + "\n" + row(157, "nan,1,,3.0") + "\n") == 1);
  CHECK(error_row(header() + "\n" + row(157, "0.1,1,,") + "\n") == 1);      // measured distance required
  CHECK(error_row("w000,w001\n") == 0);
  CHECK(error_row("") == 0);
  try {
    parse(header() + "\n" + good + "\n" + row(156, "0.1,1,,3.0") + "\n");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("157 waveform") != std::string::npos);
  }
}

TEST_CASE("missing file") {
  CHECK_THROWS_WITH_AS(load_dataset("/nonexistent/data.csv"), doctest::Contains("/nonexistent/data.csv"),
                       std::runtime_error);
}

TEST_CASE("write then load round-trips synthetic data exactly") {
  const Dataset d = synth_generate(small(200)).samples;
  const auto path = std::filesystem::temp_directory_path() / "semivl_roundtrip.csv";
  write_dataset(path, d);
  const Dataset back = load_dataset(path);
  REQUIRE(back.size() == d.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < 157; ++j) worst = std::max(worst, std::abs(d[i].waveform[j] - back[i].waveform[j]));
    worst = std::max(worst, std::abs(*d[i].range_error - *back[i].range_error));
    worst = std::max(worst, std::abs(d[i].measured_distance - back[i].measured_distance));
    CHECK(d[i].env_label == back[i].env_label);
    CHECK(d[i].material_label == back[i].material_label);
  }
  CHECK(worst <= 1e-12);
  CHECK(back == d);
  std::filesystem::remove(path);
}

TEST_CASE("split_supervision") {
  const Dataset d100 = synth_generate(small(100)).samples;
  const SupervisionSplit s = split_supervision(d100, 0.2, 3);
  CHECK(s.n_labeled() == 20);
  CHECK(s.n_unlabeled() == 80);
  CHECK(split_supervision(d100, 1.0, 3).n_labeled() == 100);
  CHECK(split_supervision(d100, 0.0, 3).n_labeled() == 0);
  CHECK(split_supervision(d100, 0.29, 3).n_labeled() == 29);

  // Partition, determinism, seed sensitivity.
  std::vector<std::size_t> all(s.labeled);
  all.insert(all.end(), s.unlabeled.begin(), s.unlabeled.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(100);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(all == expect);
  CHECK(split_supervision(d100, 0.2, 3).labeled == s.labeled);
  CHECK(split_supervision(d100, 0.2, 4).labeled != s.labeled);
  CHECK_THROWS_AS(split_supervision(d100, 1.5, 3), std::invalid_argument);

  const Dataset withheld = withhold_labels(d100, s);
  std::size_t labeled = 0;
  for (const auto& w : withheld) labeled += w.labeled() ? 1 : 0;
  CHECK(labeled == 20);
}

TEST_CASE("split size on the full corpus") {
  // Only the sample count matters here.
  Dataset d(36023, WaveformSample{std::vector<double>(157, 0.0), 0.0, 0, std::nullopt, 1.0});
  CHECK(split_supervision(d, 0.1, 0).n_labeled() == 3602);
  CHECK(split_supervision(d, 0.1, 0).n_unlabeled() == 36023 - 3602);
}

TEST_CASE("synthetic generator") {
  SynthConfig c = small(300);
  c.nlos_prob = 0.0;
  c.range_noise_std = 0.0;
  c.rooms = 1;
  c.pulse_widths = {2.0};
  c.decays = {10.0};
  for (const auto& s : synth_generate(c).samples) CHECK(*s.range_error == 0.0);

  const SyntheticData a = synth_generate(small(50, 9));
  CHECK(a.samples == synth_generate(small(50, 9)).samples);
  CHECK_FALSE(a.samples == synth_generate(small(50, 10)).samples);
  CHECK_FALSE(a.samples == synth_generate(small(50, 9), Stream::kTestGenerate).samples);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].measured_distance - a.true_distance[i] == *a.samples[i].range_error);
    CHECK(a.samples[i].labeled());
    CHECK(a.samples[i].waveform.size() == 157);
    CHECK(a.samples[i].material_label.has_value() == a.nlos[i]);
  }
  CHECK(synth_generate(small(0)).samples.empty());
}

TEST_CASE("NLOS bias mean") {
  SynthConfig c = small(10000, 2);
  c.nlos_prob = 1.0;
  c.echoes = 0;
  const SyntheticData d = synth_generate(c);
  double sum = 0.0, sq = 0.0;
  for (const auto& s : d.samples) {
    sum += *s.range_error;
    sq += *s.range_error * *s.range_error;
  }
  const double n = static_cast<double>(d.samples.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean - c.bias_mean) < 3.0 * sd / std::sqrt(n));
}

TEST_CASE("synth config validation") {
  SynthConfig c;
  c.pulse_widths = {1.0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.nlos_prob = 2.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.room_weights = {0.5, 0.5, 0.0, 0.0, 0.1};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("normalization") {
  WaveformSample s;
  s.waveform.assign(157, 0.0);
  s.waveform[10] = 4.0;
  s.waveform[11] = -2.0;
  WaveformSample unit = s;
  unit.waveform[10] = 1.0;
  unit.waveform[11] = -0.5;
  WaveformSample zero;
  zero.waveform.assign(157, 0.0);
  const Normalized n = normalize_waveform({s, unit, zero});
  CHECK(n.data[0].waveform[10] == 1.0);
  CHECK(n.data[0].waveform[11] == -0.5);
  CHECK(n.data[1] == unit);
  CHECK(n.data[2] == zero);
  CHECK(n.stats.degenerate == std::vector<bool>{false, false, true});

  const Dataset d = synth_generate(small(50)).samples;
  const Normalized nd = normalize_waveform(d);
  const Dataset back = denormalize_waveform(nd.data, nd.stats);
  for (std::size_t i = 0; i < d.size(); ++i) {
    double peak = 0.0;
    for (double v : nd.data[i].waveform) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-15));
    for (std::size_t j = 0; j < 157; ++j) CHECK(std::abs(back[i].waveform[j] - d[i].waveform[j]) <= 1e-12);
  }
}

TEST_CASE("stack and room split") {
  const Dataset d = synth_generate(small(40)).samples;
  const std::vector<std::size_t> rows = {3, 0};
  const Tensor t = stack_waveforms(d, rows);
  CHECK(t.shape() == Shape{2, 157});
  CHECK(t[0] == d[3].waveform[0]);
  CHECK(t[157 + 5] == d[0].waveform[5]);
  const auto [others, room] = split_by_room(d, 2);
  CHECK(others.size() + room.size() == d.size());
  for (const auto& s : room) CHECK(s.env_label == 2u);
  for (const auto& s : others) CHECK(s.env_label != 2u);
}
