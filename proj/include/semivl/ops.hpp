#pragma once

#include <cstddef>
#include <vector>

#include "semivl/graph.hpp"

namespace semivl {

// Elementwise arithmetic. Binary ops require identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);

/// Sum of all elements, shape [1].
Var sum(Var a);
Var mean(Var a);

Var reshape(Var a, Shape shape);

/// Columns [begin, end) of the last axis.
Var slice_last(Var a, std::size_t begin, std::size_t end);

/// Crops or zero-pads the last axis to `length`.
Var resize_last(Var a, std::size_t length);

/// Rows of the leading axis, in the given order.
Var select_rows(Var a, const std::vector<std::size_t>& rows);

/// Affine map W·x + b. x is [D_in] or [B, D_in]; W is [D_out, D_in]; b is [D_out].
Var dense(Var x, Var weights, Var bias);

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding = 0);
std::size_t conv_transpose_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                         std::size_t padding = 0);

/// Valid-mode cross-correlation (no kernel flip), optional symmetric zero padding.
///
/// dims = 1: input [B, C_in, L] or [C_in, L], kernel [C_out, C_in, K].
/// dims = 2: input [B, C_in, H, W] or [C_in, H, W], kernel [C_out, C_in, KH, KW].
/// Stride and padding apply to every spatial axis.
Var strided_conv(Var input, Var kernel, Var bias, ConvSpec spec, int dims);

/// Adjoint of strided_conv's linear map. kernel [C_a, C_b, K...] maps C_a channels to C_b,
/// so the same kernel tensor serves a conv and its transpose. Output extent (L-1)*s + K - 2p.
Var conv_transpose(Var input, Var kernel, Var bias, ConvSpec spec, int dims);

/// x + conv_b(leaky(conv_a(x), slope)); stride 1 and same-size padding, so kernels must be odd.
Var residual_block(Var x, Var kernel_a, Var bias_a, Var kernel_b, Var bias_b, double slope, int dims);

/// Per-channel mean over all spatial positions: [B, C, ...] -> [B, C], or [C, ...] -> [C].
Var global_avg_pool(Var input);

inline constexpr double kAdainEpsilon = 1e-5;

/// Adaptive instance normalization over [B, C, ...] content with per-sample [B, C] gamma/beta
/// (or unbatched [C, ...] with [C] gamma/beta). Uses population std, clamped below at epsilon.
Var adain(Var content, Var gamma, Var beta, double epsilon = kAdainEpsilon);

}  // namespace semivl
