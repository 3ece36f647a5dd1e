#include "semivl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace semivl {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("train.eta must lie in [0, 1]");
  if (checkpoint_every < 0) throw std::invalid_argument("train.checkpoint_every must be >= 0");
  lr_at(0, lr);
}

void RunConfig::validate() const {
  synth.validate();
  arch.validate();
  loss.validate();
  train.validate();
  if (arch.env_classes != synth.rooms) {
    throw std::invalid_argument("arch.env_classes (" + std::to_string(arch.env_classes) + ") must equal synth.rooms (" +
                                std::to_string(synth.rooms) + ")");
  }
  for (double e : sweep_etas) {
    if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("sweep.etas entries must lie in [0, 1]");
  }
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

RunConfig desk_profile() {
  RunConfig c;
  c.arch.enc_channels = {4, 8, 8};
  c.arch.res_blocks = 1;
  c.arch.dec_channels = 8;
  c.arch.dec_up_channels = {8, 4};
  c.arch.dec_res_blocks = 1;
  c.arch.adain_hidden = 16;
  c.arch.linear_hidden = 64;
  c.arch.head_hidden = 16;
  c.train.epochs = 100;
  c.train.lr = LrSchedule{1e-3, 25};
  // Makes the Gaussian normalizer vanish so the loss is a pure squared error plus KL.
  c.loss.obs_var = 1.0 / (2.0 * std::numbers::pi);
  c.synth.count = 5000;
  c.synth_test_count = 1000;
  c.test_room = -1;
  return c;
}

// ---- text form --------------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key " + key + ": '" + v + "' is not a number");
  }
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key " + key + ": '" + v + "' is not an integer");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key " + key + ": '" + v + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& xs, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field real_field(std::string key, std::string doc, Member member) {
  return Field{key, std::move(doc),
               [key, member](RunConfig& c, const std::string& v) { member(c) = to_real(key, v); },
               [member](const RunConfig& c) { return fmt_real(member(const_cast<RunConfig&>(c))); }};
}

template <typename Int, typename Member>
Field int_field(std::string key, std::string doc, Member member) {
  return Field{key, std::move(doc),
               [key, member](RunConfig& c, const std::string& v) { member(c) = to_int<Int>(key, v); },
               [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field size_field(std::string key, std::string doc, Member member) {
  return int_field<std::size_t>(std::move(key), std::move(doc), member);
}

template <typename Member>
Field bool_field(std::string key, std::string doc, Member member) {
  return Field{key, std::move(doc),
               [key, member](RunConfig& c, const std::string& v) { member(c) = to_bool(key, v); },
               [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Member>
Field string_field(std::string key, std::string doc, Member member) {
  return Field{key, std::move(doc), [member](RunConfig& c, const std::string& v) { member(c) = v; },
               [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

template <typename Member>
Field real_list_field(std::string key, std::string doc, Member member) {
  return Field{key, std::move(doc),
               [key, member](RunConfig& c, const std::string& v) {
                 std::vector<double> xs;
                 for (const auto& s : split_list(v)) xs.push_back(to_real(key, s));
                 member(c) = xs;
               },
               [member](const RunConfig& c) { return join(member(const_cast<RunConfig&>(c)), fmt_real); }};
}

template <typename Member>
Field size_list_field(std::string key, std::string doc, Member member) {
  return Field{key, std::move(doc),
               [key, member](RunConfig& c, const std::string& v) {
                 std::vector<std::size_t> xs;
                 for (const auto& s : split_list(v)) xs.push_back(to_int<std::size_t>(key, s));
                 member(c) = xs;
               },
               [member](const RunConfig& c) {
                 return join(member(const_cast<RunConfig&>(c)), [](std::size_t x) { return std::to_string(x); });
               }};
}

template <typename Member>
Field form_field(std::string key, std::string doc, Member member) {
  return Field{key, std::move(doc), [member](RunConfig& c, const std::string& v) { member(c) = parse_layer_form(v); },
               [member](const RunConfig& c) { return std::string(to_string(member(const_cast<RunConfig&>(c)))); }};
}

#define SEMIVL_M(expr) [](RunConfig & c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      int_field<std::uint64_t>("seed", "single seed for every random stream", SEMIVL_M(c.seed)),
      // synthetic generator
      size_field("synth.count", "number of generated training samples", SEMIVL_M(c.synth.count)),
      size_field("synth.test_count", "independent test samples written by `generate` (0: none)",
                 SEMIVL_M(c.synth_test_count)),
      real_field("synth.nlos_prob", "probability of an NLOS sample", SEMIVL_M(c.synth.nlos_prob)),
      size_field("synth.rooms", "environment classes", SEMIVL_M(c.synth.rooms)),
      size_field("synth.materials", "blocking-material classes", SEMIVL_M(c.synth.materials)),
      real_list_field("synth.room_weights", "room probabilities (empty: uniform)", SEMIVL_M(c.synth.room_weights)),
      real_list_field("synth.pulse_widths", "pulse width per room, in taps", SEMIVL_M(c.synth.pulse_widths)),
      real_list_field("synth.decays", "multipath decay per room, in taps", SEMIVL_M(c.synth.decays)),
      real_field("synth.bias_mean", "NLOS ranging bias mean (m)", SEMIVL_M(c.synth.bias_mean)),
      real_field("synth.bias_spread", "NLOS ranging bias std (m)", SEMIVL_M(c.synth.bias_spread)),
      real_field("synth.range_noise_std", "ranging noise std (m)", SEMIVL_M(c.synth.range_noise_std)),
      real_field("synth.waveform_noise_std", "white noise std relative to the direct path",
                 SEMIVL_M(c.synth.waveform_noise_std)),
      real_field("synth.dist_min", "minimum true distance (m)", SEMIVL_M(c.synth.dist_min)),
      real_field("synth.dist_max", "maximum true distance (m)", SEMIVL_M(c.synth.dist_max)),
      size_field("synth.first_path_index", "tap index of the detected first path", SEMIVL_M(c.synth.first_path_index)),
      size_field("synth.echoes", "diffuse multipath echoes per waveform", SEMIVL_M(c.synth.echoes)),
      // architecture
      size_field("arch.latent_y", "range latent dimension", SEMIVL_M(c.arch.latent_y)),
      size_field("arch.latent_z", "environment latent dimension", SEMIVL_M(c.arch.latent_z)),
      size_list_field("arch.enc_channels", "strided encoder conv widths", SEMIVL_M(c.arch.enc_channels)),
      size_field("arch.enc_kernel", "1-D encoder kernel", SEMIVL_M(c.arch.enc_kernel)),
      size_field("arch.enc_stride", "encoder stride", SEMIVL_M(c.arch.enc_stride)),
      size_field("arch.res_blocks", "residual blocks in the range encoder", SEMIVL_M(c.arch.res_blocks)),
      size_field("arch.res_kernel", "residual conv kernel (odd)", SEMIVL_M(c.arch.res_kernel)),
      size_field("arch.dec_channels", "decoder map channels", SEMIVL_M(c.arch.dec_channels)),
      size_field("arch.dec_length", "decoder map length (1-D)", SEMIVL_M(c.arch.dec_length)),
      size_list_field("arch.dec_up_channels", "intermediate transposed-conv widths", SEMIVL_M(c.arch.dec_up_channels)),
      size_field("arch.dec_kernel", "1-D transposed-conv kernel", SEMIVL_M(c.arch.dec_kernel)),
      size_field("arch.dec_stride", "transposed-conv stride", SEMIVL_M(c.arch.dec_stride)),
      size_field("arch.dec_res_blocks", "AdaIN residual blocks in the decoder", SEMIVL_M(c.arch.dec_res_blocks)),
      size_field("arch.adain_hidden", "hidden width of the AdaIN MLP", SEMIVL_M(c.arch.adain_hidden)),
      size_field("arch.map_rows", "rows of the 2-D waveform map", SEMIVL_M(c.arch.map_rows)),
      size_field("arch.map_cols", "columns of the 2-D waveform map", SEMIVL_M(c.arch.map_cols)),
      size_field("arch.kernel_2d", "2-D conv kernel", SEMIVL_M(c.arch.kernel_2d)),
      size_field("arch.padding_2d", "2-D conv padding", SEMIVL_M(c.arch.padding_2d)),
      size_field("arch.dec_rows_2d", "2-D decoder map rows", SEMIVL_M(c.arch.dec_rows_2d)),
      size_field("arch.dec_cols_2d", "2-D decoder map columns", SEMIVL_M(c.arch.dec_cols_2d)),
      size_field("arch.linear_hidden", "hidden width of linear-form encoders", SEMIVL_M(c.arch.linear_hidden)),
      size_field("arch.head_hidden", "hidden width of linear heads", SEMIVL_M(c.arch.head_hidden)),
      size_field("arch.head_channels", "channels of conv heads", SEMIVL_M(c.arch.head_channels)),
      size_field("arch.latent_rows_y", "rows when a conv2d head reshapes y", SEMIVL_M(c.arch.latent_rows_y)),
      size_field("arch.latent_rows_z", "rows when a conv2d head reshapes z", SEMIVL_M(c.arch.latent_rows_z)),
      size_field("arch.env_classes", "classifier outputs", SEMIVL_M(c.arch.env_classes)),
      form_field("arch.ae_form", "autoencoder layer form: linear|conv1d|conv2d", SEMIVL_M(c.arch.ae_form)),
      form_field("arch.est_form", "estimator layer form", SEMIVL_M(c.arch.est_form)),
      form_field("arch.cls_form", "classifier layer form", SEMIVL_M(c.arch.cls_form)),
      real_field("arch.encoder_slope", "leaky slope in encoders and heads", SEMIVL_M(c.arch.encoder_slope)),
      // loss
      real_field("loss.lambda_unsup", "weight of the unsupervised term", SEMIVL_M(c.loss.lambda_unsup)),
      real_field("loss.lambda_sup", "weight of the supervised term", SEMIVL_M(c.loss.lambda_sup)),
      int_field<int>("loss.mc_samples", "Monte-Carlo draws L", SEMIVL_M(c.loss.mc_samples)),
      real_field("loss.obs_var", "decoder observation variance", SEMIVL_M(c.loss.obs_var)),
      real_field("loss.prior_var_y", "prior variance of y", SEMIVL_M(c.loss.prior.var_y)),
      real_field("loss.prior_var_z", "prior variance of z", SEMIVL_M(c.loss.prior.var_z)),
      bool_field("loss.heads_use_samples", "heads read sampled latents instead of means",
                 SEMIVL_M(c.loss.heads_use_samples)),
      // training
      int_field<int>("train.epochs", "training epochs", SEMIVL_M(c.train.epochs)),
      size_field("train.batch_size", "mini-batch size", SEMIVL_M(c.train.batch_size)),
      real_field("train.lr", "base learning rate", SEMIVL_M(c.train.lr.base)),
      int_field<int>("train.lr_halving_epochs", "epochs between learning-rate halvings",
                     SEMIVL_M(c.train.lr.halving_period)),
      real_field("train.beta1", "Adam first-moment decay", SEMIVL_M(c.train.beta1)),
      real_field("train.beta2", "Adam second-moment decay", SEMIVL_M(c.train.beta2)),
      real_field("train.adam_eps", "Adam denominator epsilon", SEMIVL_M(c.train.adam_eps)),
      real_field("train.eta", "supervision rate N/(M+N)", SEMIVL_M(c.train.eta)),
      int_field<int>("train.checkpoint_every", "checkpoint cadence in epochs (0: final only)",
                     SEMIVL_M(c.train.checkpoint_every)),
      bool_field("train.normalize", "scale each waveform to unit peak", SEMIVL_M(c.train.normalize)),
      // data and experiments
      string_field("data.train", "training dataset file", SEMIVL_M(c.dataset)),
      string_field("data.test", "test dataset file (empty: hold out data.test_room)", SEMIVL_M(c.test_dataset)),
      int_field<int>("data.test_room", "room held out for testing (-1: evaluate on data.train)",
                     SEMIVL_M(c.test_room)),
      real_list_field("sweep.etas", "supervision rates for `sweep`", SEMIVL_M(c.sweep_etas)),
      bool_field("ablation.vary", "vary layer forms in `ablation` (false: default row only)",
                 SEMIVL_M(c.ablation_vary)),
      size_field("threads", "worker threads for sweep/ablation runs", SEMIVL_M(c.threads)),
  };
  return all;
}

#undef SEMIVL_M

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

RunConfig apply_key_values(RunConfig base, const KeyValues& values) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : values) {
    bool found = false;
    for (const Field& f : fields()) {
      if (f.key == key) {
        f.set(base, value);
        found = true;
        break;
      }
    }
    if (!found) unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw std::invalid_argument(msg);
  }
  return base;
}

KeyValues to_key_values(const RunConfig& config) {
  KeyValues out;
  for (const Field& f : fields()) out[f.key] = f.get(config);
  return out;
}

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + "=" + v + "\n";
  return out;
}

std::vector<ConfigKeyDoc> config_key_docs() {
  std::vector<ConfigKeyDoc> out;
  for (const Field& f : fields()) out.push_back({f.key, f.doc});
  return out;
}

}  // namespace semivl
