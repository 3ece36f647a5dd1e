#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "semivl/distributions.hpp"
#include "semivl/graph.hpp"
#include "semivl/tensor.hpp"

namespace semivl {

inline constexpr std::size_t kWaveformLength = 157;

enum class LayerForm { kLinear, kConv1d, kConv2d };

std::string_view to_string(LayerForm form);
LayerForm parse_layer_form(std::string_view text);

/// Network sizes and layer forms for the two encoders, the AdaIN decoder and the heads.
struct ArchConfig {
  std::size_t latent_y = 16;
  std::size_t latent_z = 8;

  // Strided encoder convs, shared by both encoders (each has its own weights).
  std::vector<std::size_t> enc_channels{16, 32, 64};
  std::size_t enc_kernel = 4;
  std::size_t enc_stride = 2;
  std::size_t res_blocks = 2;
  std::size_t res_kernel = 3;

  // Decoder: dense y -> [dec_channels x dec_length] map, AdaIN residual blocks,
  // transposed convs through dec_up_channels down to one channel.
  std::size_t dec_channels = 64;
  std::size_t dec_length = 20;
  std::vector<std::size_t> dec_up_channels{32, 16};
  std::size_t dec_kernel = 4;
  std::size_t dec_stride = 2;
  std::size_t dec_res_blocks = 2;
  std::size_t adain_hidden = 32;

  // conv2d form: waveform zero-padded to map_rows*map_cols and reshaped.
  std::size_t map_rows = 10;
  std::size_t map_cols = 16;
  std::size_t kernel_2d = 3;
  std::size_t padding_2d = 1;
  std::size_t dec_rows_2d = 3;
  std::size_t dec_cols_2d = 4;

  // linear form: hidden width of the encoder MLPs.
  std::size_t linear_hidden = 128;

  std::size_t head_hidden = 32;
  std::size_t head_channels = 4;
  std::size_t latent_rows_y = 4;
  std::size_t latent_rows_z = 2;
  std::size_t env_classes = 5;

  LayerForm ae_form = LayerForm::kConv1d;
  LayerForm est_form = LayerForm::kLinear;
  LayerForm cls_form = LayerForm::kLinear;

  double encoder_slope = 0.2;

  /// Throws std::invalid_argument naming the first inconsistency.
  void validate() const;

  /// Number of AdaIN (gamma, beta) pairs the decoder consumes.
  std::size_t adain_layers() const { return 2 * dec_res_blocks; }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Named tensors of one sub-network, in declaration order.
struct ParamGroup {
  std::string name;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::vector<double> init_bounds;  // uniform init bound per tensor; 0 for biases

  const Tensor& at(std::string_view key) const;
  Tensor& at(std::string_view key);
  std::size_t scalar_count() const;
};

/// All trainable parameters: encoders (y, z), decoder, estimator and classifier heads.
struct ModelParams {
  ArchConfig arch;
  ParamGroup enc_y, enc_z, dec, est, cls;

  std::array<const ParamGroup*, 5> groups() const { return {&enc_y, &enc_z, &dec, &est, &cls}; }
  std::array<ParamGroup*, 5> groups() { return {&enc_y, &enc_z, &dec, &est, &cls}; }

  /// Flattened views in declaration order (enc_y, enc_z, dec, est, cls).
  std::vector<Tensor*> flat();
  std::vector<const Tensor*> flat() const;
  std::vector<std::string> flat_names() const;
  std::size_t scalar_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Fan-in scaled uniform weights (bound sqrt(6 / fan_in)), zero biases. Deterministic in seed.
ModelParams init_params(const ArchConfig& arch, std::uint64_t seed);

// ---- graph-level forward ----------------------------------------------------------

/// A ParamGroup bound to graph nodes.
class BoundGroup {
 public:
  BoundGroup() = default;
  BoundGroup(Graph& graph, const ParamGroup& group, bool track);

  Var at(std::string_view key) const;
  const std::vector<Var>& vars() const { return vars_; }

 private:
  const ParamGroup* group_ = nullptr;
  std::vector<Var> vars_;
};

struct BoundModel {
  const ArchConfig* arch = nullptr;
  BoundGroup enc_y, enc_z, dec, est, cls;

  std::array<const BoundGroup*, 5> groups() const { return {&enc_y, &enc_z, &dec, &est, &cls}; }
};

/// Places every parameter on the graph; `track` makes them gradient leaves.
BoundModel bind(Graph& graph, const ModelParams& params, bool track = true);

/// Gradients w.r.t. every bound parameter, in ModelParams::flat() order. Call after backward().
std::vector<Tensor> gradients(Graph& graph, const BoundModel& model);

/// x: [B, 157] -> code over [B, latent_y].
GaussianCodeVar encode_y(const BoundModel& model, Var x);
/// x: [B, 157] -> code over [B, latent_z].
GaussianCodeVar encode_z(const BoundModel& model, Var x);
/// y: [B, latent_y], z: [B, latent_z] -> reconstruction [B, 157]. z enters only through AdaIN.
Var decode(const BoundModel& model, Var y, Var z);
/// y: [B, latent_y] -> predicted ranging error [B].
Var estimate_error(const BoundModel& model, Var y);
/// z: [B, latent_z] -> raw class scores [B, env_classes].
Var classify_env(const BoundModel& model, Var z);

// ---- value-level convenience (no gradients) ------------------------------------------

/// waveforms: [B, 157].
GaussianCode encode_y(const ModelParams& params, const Tensor& waveforms);
GaussianCode encode_z(const ModelParams& params, const Tensor& waveforms);
Tensor decode(const ModelParams& params, const Tensor& y, const Tensor& z);
Tensor estimate_error(const ModelParams& params, const Tensor& y);
Tensor classify_env(const ModelParams& params, const Tensor& z);

/// Posterior-mean error prediction for a batch of waveforms [B, 157] -> [B].
Tensor predict_error(const ModelParams& params, const Tensor& waveforms);

std::size_t argmax(std::span<const double> scores);

}  // namespace semivl
