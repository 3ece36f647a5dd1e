#include "semivl/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semivl/ops.hpp"
#include "semivl/rng.hpp"

namespace semivl {

std::string_view to_string(LayerForm form) {
  switch (form) {
    case LayerForm::kLinear:
      return "linear";
    case LayerForm::kConv1d:
      return "conv1d";
    case LayerForm::kConv2d:
      return "conv2d";
  }
  return "?";
}

LayerForm parse_layer_form(std::string_view text) {
  if (text == "linear") return LayerForm::kLinear;
  if (text == "conv1d") return LayerForm::kConv1d;
  if (text == "conv2d") return LayerForm::kConv2d;
  throw std::invalid_argument("unknown layer form '" + std::string(text) + "' (expected linear, conv1d or conv2d)");
}

namespace {

int dims_of(LayerForm form) { return form == LayerForm::kConv2d ? 2 : 1; }

// Spatial extents after the encoder conv stack: {rows, cols}; rows = 1 for 1-D.
std::pair<std::size_t, std::size_t> encoder_extent(const ArchConfig& a) {
  if (a.ae_form == LayerForm::kConv2d) {
    std::size_t r = a.map_rows, c = a.map_cols;
    for (std::size_t i = 0; i < a.enc_channels.size(); ++i) {
      r = conv_output_length(r, a.kernel_2d, a.enc_stride, a.padding_2d);
      c = conv_output_length(c, a.kernel_2d, a.enc_stride, a.padding_2d);
    }
    return {r, c};
  }
  std::size_t l = kWaveformLength;
  for (std::size_t i = 0; i < a.enc_channels.size(); ++i) l = conv_output_length(l, a.enc_kernel, a.enc_stride);
  return {1, l};
}

// Decoder output extent before cropping: {rows, cols}.
std::pair<std::size_t, std::size_t> decoder_extent(const ArchConfig& a) {
  const std::size_t layers = a.dec_up_channels.size() + 1;
  if (a.ae_form == LayerForm::kConv2d) {
    std::size_t r = a.dec_rows_2d, c = a.dec_cols_2d;
    for (std::size_t i = 0; i < layers; ++i) {
      r = conv_transpose_output_length(r, a.kernel_2d, a.dec_stride, a.padding_2d);
      c = conv_transpose_output_length(c, a.kernel_2d, a.dec_stride, a.padding_2d);
    }
    return {r, c};
  }
  std::size_t l = a.dec_length;
  for (std::size_t i = 0; i < layers; ++i) l = conv_transpose_output_length(l, a.dec_kernel, a.dec_stride);
  return {1, l};
}

std::size_t decoder_map_size(const ArchConfig& a) {
  return a.ae_form == LayerForm::kConv2d ? a.dec_rows_2d * a.dec_cols_2d : a.dec_length;
}

std::size_t latent_rows(const ArchConfig& a, bool for_estimator) {
  return for_estimator ? a.latent_rows_y : a.latent_rows_z;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("ArchConfig: " + what);
}

}  // namespace

void ArchConfig::validate() const {
  require(latent_y > 0 && latent_z > 0, "latent dims must be positive");
  require(!enc_channels.empty(), "encoder needs at least one strided conv");
  for (auto c : enc_channels) require(c > 0, "encoder channel widths must be positive");
  for (auto c : dec_up_channels) require(c > 0, "decoder channel widths must be positive");
  require(enc_kernel > 0 && enc_stride > 0 && dec_kernel > 0 && dec_stride > 0, "kernels and strides must be positive");
  require(res_kernel % 2 == 1, "residual kernel must be odd so blocks preserve shape");
  require(dec_channels > 0 && dec_length > 0 && adain_hidden > 0, "decoder sizes must be positive");
  require(linear_hidden > 0 && head_hidden > 0 && head_channels > 0, "hidden widths must be positive");
  require(env_classes >= 1, "need at least one environment class");
  require(map_rows * map_cols >= kWaveformLength,
          "2-D map " + std::to_string(map_rows) + "x" + std::to_string(map_cols) + " cannot hold 157 samples");
  require(kernel_2d > 0 && dec_rows_2d > 0 && dec_cols_2d > 0, "2-D sizes must be positive");
  require(latent_rows_y > 0 && latent_y % latent_rows_y == 0, "latent_rows_y must divide latent_y");
  require(latent_rows_z > 0 && latent_z % latent_rows_z == 0, "latent_rows_z must divide latent_z");
  if (ae_form != LayerForm::kLinear) {
    try {
      const auto [r, c] = encoder_extent(*this);
      (void)r;
      (void)c;
    } catch (const std::invalid_argument&) {
      require(false, "encoder conv stack shrinks the input below the kernel size");
    }
    const auto [r, c] = decoder_extent(*this);
    if (ae_form == LayerForm::kConv2d) {
      require(r >= map_rows && c >= map_cols, "decoder output " + std::to_string(r) + "x" + std::to_string(c) +
                                                  " is smaller than the 2-D map");
    } else {
      require(c >= kWaveformLength, "decoder output length " + std::to_string(c) + " is shorter than 157");
    }
  }
}

// ---- parameter containers -----------------------------------------------------------

const Tensor& ParamGroup::at(std::string_view key) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == key) return tensors[i];
  }
  throw std::out_of_range("parameter group '" + name + "' has no tensor '" + std::string(key) + "'");
}

Tensor& ParamGroup::at(std::string_view key) {
  return const_cast<Tensor&>(std::as_const(*this).at(key));
}

std::size_t ParamGroup::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

std::vector<Tensor*> ModelParams::flat() {
  std::vector<Tensor*> out;
  for (ParamGroup* g : groups()) {
    for (Tensor& t : g->tensors) out.push_back(&t);
  }
  return out;
}

std::vector<const Tensor*> ModelParams::flat() const {
  std::vector<const Tensor*> out;
  for (const ParamGroup* g : groups()) {
    for (const Tensor& t : g->tensors) out.push_back(&t);
  }
  return out;
}

std::vector<std::string> ModelParams::flat_names() const {
  std::vector<std::string> out;
  for (const ParamGroup* g : groups()) {
    for (const auto& n : g->names) out.push_back(g->name + "." + n);
  }
  return out;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const ParamGroup* g : groups()) n += g->scalar_count();
  return n;
}

bool ModelParams::all_finite() const {
  for (const Tensor* t : flat()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.arch == b.arch)) return false;
  const auto fa = a.flat();
  const auto fb = b.flat();
  if (fa.size() != fb.size()) return false;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (!(*fa[i] == *fb[i])) return false;
  }
  return true;
}

// ---- initialization -------------------------------------------------------------------

namespace {

class GroupBuilder {
 public:
  GroupBuilder(ParamGroup& group, Rng& rng) : group_(group), rng_(rng) {}

  void weight(const std::string& name, Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng_.uniform(-bound, bound);
    push(name, std::move(t), bound);
  }

  void bias(const std::string& name, std::size_t n) { push(name, Tensor(Shape{n}, 0.0), 0.0); }

  void dense(const std::string& name, std::size_t in, std::size_t out) {
    weight(name + ".w", Shape{out, in}, in);
    bias(name + ".b", out);
  }

  void conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, int dims) {
    Shape s{out, in, k};
    if (dims == 2) s.push_back(k);
    weight(name + ".w", s, in * (dims == 2 ? k * k : k));
    bias(name + ".b", out);
  }

  void conv_transpose(const std::string& name, std::size_t in, std::size_t out, std::size_t k, int dims) {
    Shape s{in, out, k};
    if (dims == 2) s.push_back(k);
    weight(name + ".w", s, in * (dims == 2 ? k * k : k));
    bias(name + ".b", out);
  }

 private:
  void push(const std::string& name, Tensor t, double bound) {
    group_.names.push_back(name);
    group_.tensors.push_back(std::move(t));
    group_.init_bounds.push_back(bound);
  }

  ParamGroup& group_;
  Rng& rng_;
};

void build_encoder(GroupBuilder& b, const ArchConfig& a, bool range_encoder) {
  const std::size_t out = 2 * (range_encoder ? a.latent_y : a.latent_z);
  if (a.ae_form == LayerForm::kLinear) {
    b.dense("fc0", kWaveformLength, a.linear_hidden);
    b.dense("fc1", a.linear_hidden, a.linear_hidden);
    b.dense("out", a.linear_hidden, out);
    return;
  }
  const int dims = dims_of(a.ae_form);
  const std::size_t k = dims == 2 ? a.kernel_2d : a.enc_kernel;
  std::size_t in = 1;
  for (std::size_t i = 0; i < a.enc_channels.size(); ++i) {
    b.conv("conv" + std::to_string(i), in, a.enc_channels[i], k, dims);
    in = a.enc_channels[i];
  }
  if (range_encoder) {
    for (std::size_t j = 0; j < a.res_blocks; ++j) {
      b.conv("res" + std::to_string(j) + ".a", in, in, a.res_kernel, dims);
      b.conv("res" + std::to_string(j) + ".b", in, in, a.res_kernel, dims);
    }
    const auto [r, c] = encoder_extent(a);
    b.dense("out", in * r * c, out);
  } else {
    b.dense("out", in, out);
  }
}

void build_decoder(GroupBuilder& b, const ArchConfig& a) {
  const std::size_t map = a.dec_channels * decoder_map_size(a);
  b.dense("fc_in", a.latent_y, map);
  b.dense("mlp0", a.latent_z, a.adain_hidden);
  b.dense("mlp1", a.adain_hidden, 2 * a.adain_layers() * a.dec_channels);
  const bool linear = a.ae_form == LayerForm::kLinear;
  const int dims = dims_of(a.ae_form);
  for (std::size_t j = 0; j < a.dec_res_blocks; ++j) {
    for (const char* part : {".a", ".b"}) {
      const std::string name = "res" + std::to_string(j) + part;
      if (linear) {
        b.dense(name, map, map);
      } else {
        b.conv(name, a.dec_channels, a.dec_channels, a.res_kernel, dims);
      }
    }
  }
  if (linear) {
    b.dense("fc_out", map, kWaveformLength);
    return;
  }
  const std::size_t k = dims == 2 ? a.kernel_2d : a.dec_kernel;
  std::size_t in = a.dec_channels;
  for (std::size_t i = 0; i <= a.dec_up_channels.size(); ++i) {
    const std::size_t out = i < a.dec_up_channels.size() ? a.dec_up_channels[i] : 1;
    b.conv_transpose("up" + std::to_string(i), in, out, k, dims);
    in = out;
  }
}

void build_head(GroupBuilder& b, const ArchConfig& a, LayerForm form, std::size_t latent, std::size_t out) {
  if (form == LayerForm::kLinear) {
    b.dense("fc0", latent, a.head_hidden);
    b.dense("fc1", a.head_hidden, a.head_hidden);
    b.dense("out", a.head_hidden, out);
    return;
  }
  const int dims = dims_of(form);
  b.conv("conv0", 1, a.head_channels, 3, dims);
  b.conv("conv1", a.head_channels, a.head_channels, 3, dims);
  b.dense("out", a.head_channels * latent, out);
}

}  // namespace

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  p.enc_y.name = "enc_y";
  p.enc_z.name = "enc_z";
  p.dec.name = "dec";
  p.est.name = "est";
  p.cls.name = "cls";
  Rng rng(seed, Stream::kInit);
  {
    GroupBuilder b(p.enc_y, rng);
    build_encoder(b, arch, true);
  }
  {
    GroupBuilder b(p.enc_z, rng);
    build_encoder(b, arch, false);
  }
  {
    GroupBuilder b(p.dec, rng);
    build_decoder(b, arch);
  }
  {
    GroupBuilder b(p.est, rng);
    build_head(b, arch, arch.est_form, arch.latent_y, 1);
  }
  {
    GroupBuilder b(p.cls, rng);
    build_head(b, arch, arch.cls_form, arch.latent_z, arch.env_classes);
  }
  return p;
}

// ---- binding --------------------------------------------------------------------------

BoundGroup::BoundGroup(Graph& graph, const ParamGroup& group, bool track) : group_(&group) {
  vars_.reserve(group.tensors.size());
  for (const Tensor& t : group.tensors) vars_.push_back(track ? graph.parameter(t) : graph.constant(t));
}

Var BoundGroup::at(std::string_view key) const {
  for (std::size_t i = 0; i < group_->names.size(); ++i) {
    if (group_->names[i] == key) return vars_[i];
  }
  throw std::out_of_range("parameter group '" + group_->name + "' has no tensor '" + std::string(key) + "'");
}

BoundModel bind(Graph& graph, const ModelParams& params, bool track) {
  BoundModel m;
  m.arch = &params.arch;
  m.enc_y = BoundGroup(graph, params.enc_y, track);
  m.enc_z = BoundGroup(graph, params.enc_z, track);
  m.dec = BoundGroup(graph, params.dec, track);
  m.est = BoundGroup(graph, params.est, track);
  m.cls = BoundGroup(graph, params.cls, track);
  return m;
}

std::vector<Tensor> gradients(Graph& graph, const BoundModel& model) {
  std::vector<Tensor> out;
  for (const BoundGroup* g : model.groups()) {
    for (Var v : g->vars()) out.push_back(graph.grad(v));
  }
  return out;
}

// ---- forward ----------------------------------------------------------------------------

namespace {

Var dense_layer(const BoundGroup& p, const std::string& name, Var x) {
  return dense(x, p.at(name + ".w"), p.at(name + ".b"));
}

Var conv_layer(const BoundGroup& p, const std::string& name, Var x, std::size_t stride, std::size_t pad, int dims) {
  return strided_conv(x, p.at(name + ".w"), p.at(name + ".b"), ConvSpec{stride, pad}, dims);
}

std::size_t batch_of(Var x, std::size_t width, const char* what) {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[1] != width) {
    throw std::invalid_argument(std::string(what) + ": expected [B, " + std::to_string(width) + "], got " +
                                shape_str(s));
  }
  return s[0];
}

// Waveform batch [B, 157] -> feature map for the configured AE form.
Var waveform_map(const ArchConfig& a, Var x) {
  const std::size_t batch = x.shape()[0];
  if (a.ae_form == LayerForm::kConv2d) {
    return reshape(resize_last(x, a.map_rows * a.map_cols), Shape{batch, 1, a.map_rows, a.map_cols});
  }
  return reshape(x, Shape{batch, 1, kWaveformLength});
}

Var encoder_trunk(const ArchConfig& a, const BoundGroup& p, Var x) {
  const double slope = a.encoder_slope;
  if (a.ae_form == LayerForm::kLinear) {
    Var h = leaky_relu(dense_layer(p, "fc0", x), slope);
    return leaky_relu(dense_layer(p, "fc1", h), slope);
  }
  const int dims = dims_of(a.ae_form);
  const std::size_t pad = dims == 2 ? a.padding_2d : 0;
  Var h = waveform_map(a, x);
  for (std::size_t i = 0; i < a.enc_channels.size(); ++i) {
    h = leaky_relu(conv_layer(p, "conv" + std::to_string(i), h, a.enc_stride, pad, dims), slope);
  }
  return h;
}

GaussianCodeVar split_code(Var out, std::size_t latent) {
  Var mean = slice_last(out, 0, latent);
  Var log_var = slice_last(out, latent, 2 * latent);
  return GaussianCodeVar{mean, exp(log_var)};
}

// Per-channel AdaIN parameters from z: pairs (gamma, beta), each [B, C].
std::vector<std::pair<Var, Var>> adain_params(const ArchConfig& a, const BoundGroup& p, Var z) {
  Var h = relu(dense_layer(p, "mlp0", z));
  Var raw = dense_layer(p, "mlp1", h);
  std::vector<std::pair<Var, Var>> out;
  const std::size_t c = a.dec_channels;
  for (std::size_t i = 0; i < a.adain_layers(); ++i) {
    const std::size_t base = 2 * i * c;
    Var gamma = add_scalar(slice_last(raw, base, base + c), 1.0);
    Var beta = slice_last(raw, base + c, base + 2 * c);
    out.emplace_back(gamma, beta);
  }
  return out;
}

}  // namespace

GaussianCodeVar encode_y(const BoundModel& model, Var x) {
  const ArchConfig& a = *model.arch;
  const std::size_t batch = batch_of(x, kWaveformLength, "encode_y");
  const BoundGroup& p = model.enc_y;
  Var h = encoder_trunk(a, p, x);
  if (a.ae_form != LayerForm::kLinear) {
    const int dims = dims_of(a.ae_form);
    for (std::size_t j = 0; j < a.res_blocks; ++j) {
      const std::string n = "res" + std::to_string(j);
      h = residual_block(h, p.at(n + ".a.w"), p.at(n + ".a.b"), p.at(n + ".b.w"), p.at(n + ".b.b"), a.encoder_slope,
                         dims);
    }
    h = reshape(h, Shape{batch, h.value().size() / batch});
  }
  return split_code(dense_layer(p, "out", h), a.latent_y);
}

GaussianCodeVar encode_z(const BoundModel& model, Var x) {
  const ArchConfig& a = *model.arch;
  batch_of(x, kWaveformLength, "encode_z");
  const BoundGroup& p = model.enc_z;
  Var h = encoder_trunk(a, p, x);
  if (a.ae_form != LayerForm::kLinear) h = global_avg_pool(h);
  return split_code(dense_layer(p, "out", h), a.latent_z);
}

Var decode(const BoundModel& model, Var y, Var z) {
  const ArchConfig& a = *model.arch;
  const std::size_t batch = batch_of(y, a.latent_y, "decode(y)");
  if (batch_of(z, a.latent_z, "decode(z)") != batch) throw std::invalid_argument("decode: y and z batch sizes differ");
  const BoundGroup& p = model.dec;
  const auto styles = adain_params(a, p, z);
  const std::size_t c = a.dec_channels;
  const std::size_t cells = decoder_map_size(a);
  Var h = relu(dense_layer(p, "fc_in", y));

  if (a.ae_form == LayerForm::kLinear) {
    const Shape map{batch, c, cells};
    const Shape flat{batch, c * cells};
    for (std::size_t j = 0; j < a.dec_res_blocks; ++j) {
      const std::string n = "res" + std::to_string(j);
      const auto& [g0, b0] = styles[2 * j];
      const auto& [g1, b1] = styles[2 * j + 1];
      Var r = reshape(adain(reshape(dense_layer(p, n + ".a", h), map), g0, b0), flat);
      r = relu(r);
      r = reshape(adain(reshape(dense_layer(p, n + ".b", r), map), g1, b1), flat);
      h = add(h, r);
    }
    return dense_layer(p, "fc_out", h);
  }

  const int dims = dims_of(a.ae_form);
  h = dims == 2 ? reshape(h, Shape{batch, c, a.dec_rows_2d, a.dec_cols_2d}) : reshape(h, Shape{batch, c, cells});
  const std::size_t pad = (a.res_kernel - 1) / 2;
  for (std::size_t j = 0; j < a.dec_res_blocks; ++j) {
    const std::string n = "res" + std::to_string(j);
    const auto& [g0, b0] = styles[2 * j];
    const auto& [g1, b1] = styles[2 * j + 1];
    Var r = relu(adain(conv_layer(p, n + ".a", h, 1, pad, dims), g0, b0));
    r = adain(conv_layer(p, n + ".b", r, 1, pad, dims), g1, b1);
    h = add(h, r);
  }
  const std::size_t up_pad = dims == 2 ? a.padding_2d : 0;
  const std::size_t layers = a.dec_up_channels.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string n = "up" + std::to_string(i);
    h = conv_transpose(h, p.at(n + ".w"), p.at(n + ".b"), ConvSpec{a.dec_stride, up_pad}, dims);
    if (i + 1 < layers) h = relu(h);
  }
  if (dims == 2) {
    // [B, 1, R, C] -> crop to the map, flatten, drop the padding tail.
    h = resize_last(h, a.map_cols);
    const std::size_t rows = h.shape()[2];
    h = reshape(h, Shape{batch, rows * a.map_cols});
    h = resize_last(h, a.map_rows * a.map_cols);
    return resize_last(h, kWaveformLength);
  }
  h = reshape(h, Shape{batch, h.shape().back()});
  return resize_last(h, kWaveformLength);
}

namespace {

Var run_head(const ArchConfig& a, const BoundGroup& p, LayerForm form, Var v, std::size_t latent,
             std::size_t rows) {
  const double slope = a.encoder_slope;
  if (form == LayerForm::kLinear) {
    Var h = leaky_relu(dense_layer(p, "fc0", v), slope);
    h = leaky_relu(dense_layer(p, "fc1", h), slope);
    return dense_layer(p, "out", h);
  }
  const std::size_t batch = v.shape()[0];
  const int dims = dims_of(form);
  Var h = dims == 2 ? reshape(v, Shape{batch, 1, rows, latent / rows}) : reshape(v, Shape{batch, 1, latent});
  h = leaky_relu(conv_layer(p, "conv0", h, 1, 1, dims), slope);
  h = leaky_relu(conv_layer(p, "conv1", h, 1, 1, dims), slope);
  h = reshape(h, Shape{batch, h.value().size() / batch});
  return dense_layer(p, "out", h);
}

}  // namespace

Var estimate_error(const BoundModel& model, Var y) {
  const ArchConfig& a = *model.arch;
  const std::size_t batch = batch_of(y, a.latent_y, "estimate_error");
  Var out = run_head(a, model.est, a.est_form, y, a.latent_y, latent_rows(a, true));
  return reshape(out, Shape{batch});
}

Var classify_env(const BoundModel& model, Var z) {
  const ArchConfig& a = *model.arch;
  batch_of(z, a.latent_z, "classify_env");
  return run_head(a, model.cls, a.cls_form, z, a.latent_z, latent_rows(a, false));
}

// ---- value-level wrappers ------------------------------------------------------------------

namespace {

GaussianCode to_code(const GaussianCodeVar& c) { return GaussianCode{c.mean.value(), c.variance.value()}; }

}  // namespace

GaussianCode encode_y(const ModelParams& params, const Tensor& waveforms) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  return to_code(encode_y(m, g.constant(waveforms)));
}

GaussianCode encode_z(const ModelParams& params, const Tensor& waveforms) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  return to_code(encode_z(m, g.constant(waveforms)));
}

Tensor decode(const ModelParams& params, const Tensor& y, const Tensor& z) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  return decode(m, g.constant(y), g.constant(z)).value();
}

Tensor estimate_error(const ModelParams& params, const Tensor& y) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  return estimate_error(m, g.constant(y)).value();
}

Tensor classify_env(const ModelParams& params, const Tensor& z) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  return classify_env(m, g.constant(z)).value();
}

Tensor predict_error(const ModelParams& params, const Tensor& waveforms) {
  Graph g;
  const BoundModel m = bind(g, params, false);
  const GaussianCodeVar code = encode_y(m, g.constant(waveforms));
  return estimate_error(m, code.mean).value();
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of empty scores");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

}  // namespace semivl
