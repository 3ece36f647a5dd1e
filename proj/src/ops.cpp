#include "semivl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

namespace semivl {

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, deriv](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * deriv(x[i], y[i]);
  });
}

// Half-open range of i in [0, count) with 0 <= i*stride + offset < limit.
std::pair<std::ptrdiff_t, std::ptrdiff_t> index_range(std::ptrdiff_t count, std::ptrdiff_t stride,
                                                      std::ptrdiff_t offset, std::ptrdiff_t limit) {
  std::ptrdiff_t lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  std::ptrdiff_t hi = count;
  if (limit - 1 - offset < 0) {
    hi = 0;
  } else {
    hi = std::min(count, (limit - 1 - offset) / stride + 1);
  }
  return {lo, std::max(lo, hi)};
}

// Convolution geometry in canonical [B, C, H, W] form; 1-D convs use H = KH = 1.
struct ConvGeom {
  std::ptrdiff_t batch, in_ch, in_h, in_w;
  std::ptrdiff_t out_ch, k_h, k_w;
  std::ptrdiff_t stride_h, stride_w, pad_h, pad_w;
  std::ptrdiff_t out_h, out_w;
  bool batched;
};

ConvGeom conv_geometry(const char* op, const Shape& in, const Shape& kernel, const Shape& bias, ConvSpec spec,
                       int dims, bool transpose) {
  if (dims != 1 && dims != 2) throw std::invalid_argument(std::string(op) + ": dims must be 1 or 2");
  if (spec.stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
  const std::size_t spatial = static_cast<std::size_t>(dims);
  const bool batched = in.size() == spatial + 2;
  if (!batched && in.size() != spatial + 1) {
    throw std::invalid_argument(std::string(op) + ": input " + shape_str(in) + " is not a " + std::to_string(dims) +
                                "-D feature map");
  }
  if (kernel.size() != spatial + 2) {
    throw std::invalid_argument(std::string(op) + ": kernel " + shape_str(kernel) + " has wrong rank for input " +
                                shape_str(in));
  }
  const std::size_t off = batched ? 1 : 0;
  ConvGeom g{};
  g.batched = batched;
  g.batch = batched ? static_cast<std::ptrdiff_t>(in[0]) : 1;
  g.in_ch = static_cast<std::ptrdiff_t>(in[off]);
  g.in_h = dims == 2 ? static_cast<std::ptrdiff_t>(in[off + 1]) : 1;
  g.in_w = static_cast<std::ptrdiff_t>(in[off + spatial]);
  const std::size_t kin = transpose ? kernel[0] : kernel[1];
  const std::size_t kout = transpose ? kernel[1] : kernel[0];
  if (kin != in[off]) {
    throw std::invalid_argument(std::string(op) + ": input " + shape_str(in) + " channels do not match kernel " +
                                shape_str(kernel));
  }
  if (bias.size() != 1 || bias[0] != kout) {
    throw std::invalid_argument(std::string(op) + ": bias " + shape_str(bias) + " does not match kernel " +
                                shape_str(kernel));
  }
  g.out_ch = static_cast<std::ptrdiff_t>(kout);
  g.k_h = dims == 2 ? static_cast<std::ptrdiff_t>(kernel[2]) : 1;
  g.k_w = static_cast<std::ptrdiff_t>(kernel[1 + spatial]);
  g.stride_w = static_cast<std::ptrdiff_t>(spec.stride);
  g.stride_h = dims == 2 ? g.stride_w : 1;
  g.pad_w = static_cast<std::ptrdiff_t>(spec.padding);
  g.pad_h = dims == 2 ? g.pad_w : 0;
  if (transpose) {
    g.out_h = (g.in_h - 1) * g.stride_h + g.k_h - 2 * g.pad_h;
    g.out_w = (g.in_w - 1) * g.stride_w + g.k_w - 2 * g.pad_w;
    if (g.out_h < 1 || g.out_w < 1) {
      throw std::invalid_argument(std::string(op) + ": padding leaves no output for input " + shape_str(in) +
                                  " and kernel " + shape_str(kernel));
    }
  } else {
    if (g.in_h + 2 * g.pad_h < g.k_h || g.in_w + 2 * g.pad_w < g.k_w) {
      throw std::invalid_argument(std::string(op) + ": input " + shape_str(in) + " is smaller than kernel " +
                                  shape_str(kernel));
    }
    g.out_h = (g.in_h + 2 * g.pad_h - g.k_h) / g.stride_h + 1;
    g.out_w = (g.in_w + 2 * g.pad_w - g.k_w) / g.stride_w + 1;
  }
  return g;
}

Shape conv_out_shape(const ConvGeom& g, int dims) {
  Shape s;
  if (g.batched) s.push_back(static_cast<std::size_t>(g.batch));
  s.push_back(static_cast<std::size_t>(g.out_ch));
  if (dims == 2) s.push_back(static_cast<std::size_t>(g.out_h));
  s.push_back(static_cast<std::size_t>(g.out_w));
  return s;
}

// Visits every (input index, output index, kernel index) triple of a strided conv.
// `fn(in_offset, out_offset, kernel_offset, count)` handles `count` outputs along W; the input advances by the W stride.
template <typename Fn>
void conv_visit(const ConvGeom& g, Fn&& fn) {
  for (std::ptrdiff_t b = 0; b < g.batch; ++b) {
    for (std::ptrdiff_t co = 0; co < g.out_ch; ++co) {
      for (std::ptrdiff_t ci = 0; ci < g.in_ch; ++ci) {
        const std::ptrdiff_t in_base = (b * g.in_ch + ci) * g.in_h * g.in_w;
        const std::ptrdiff_t out_base = (b * g.out_ch + co) * g.out_h * g.out_w;
        const std::ptrdiff_t k_base = (co * g.in_ch + ci) * g.k_h * g.k_w;
        for (std::ptrdiff_t kh = 0; kh < g.k_h; ++kh) {
          const auto [oh_lo, oh_hi] = index_range(g.out_h, g.stride_h, kh - g.pad_h, g.in_h);
          for (std::ptrdiff_t kw = 0; kw < g.k_w; ++kw) {
            const auto [ow_lo, ow_hi] = index_range(g.out_w, g.stride_w, kw - g.pad_w, g.in_w);
            if (ow_lo >= ow_hi) continue;
            const std::ptrdiff_t k_off = k_base + kh * g.k_w + kw;
            for (std::ptrdiff_t oh = oh_lo; oh < oh_hi; ++oh) {
              const std::ptrdiff_t ih = oh * g.stride_h + kh - g.pad_h;
              const std::ptrdiff_t iw0 = ow_lo * g.stride_w + kw - g.pad_w;
              fn(in_base + ih * g.in_w + iw0, out_base + oh * g.out_w + ow_lo, k_off, ow_hi - ow_lo);
            }
          }
        }
      }
    }
  }
}

// Same traversal for the transposed conv: input positions scatter into the output.
template <typename Fn>
void conv_transpose_visit(const ConvGeom& g, Fn&& fn) {
  for (std::ptrdiff_t b = 0; b < g.batch; ++b) {
    for (std::ptrdiff_t ci = 0; ci < g.in_ch; ++ci) {
      for (std::ptrdiff_t co = 0; co < g.out_ch; ++co) {
        const std::ptrdiff_t in_base = (b * g.in_ch + ci) * g.in_h * g.in_w;
        const std::ptrdiff_t out_base = (b * g.out_ch + co) * g.out_h * g.out_w;
        const std::ptrdiff_t k_base = (ci * g.out_ch + co) * g.k_h * g.k_w;
        for (std::ptrdiff_t kh = 0; kh < g.k_h; ++kh) {
          const auto [ih_lo, ih_hi] = index_range(g.in_h, g.stride_h, kh - g.pad_h, g.out_h);
          for (std::ptrdiff_t kw = 0; kw < g.k_w; ++kw) {
            const auto [iw_lo, iw_hi] = index_range(g.in_w, g.stride_w, kw - g.pad_w, g.out_w);
            if (iw_lo >= iw_hi) continue;
            const std::ptrdiff_t k_off = k_base + kh * g.k_w + kw;
            for (std::ptrdiff_t ih = ih_lo; ih < ih_hi; ++ih) {
              const std::ptrdiff_t oh = ih * g.stride_h + kh - g.pad_h;
              const std::ptrdiff_t ow0 = iw_lo * g.stride_w + kw - g.pad_w;
              fn(in_base + ih * g.in_w + iw_lo, out_base + oh * g.out_w + ow0, k_off, iw_hi - iw_lo);
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    for (std::size_t id : {ia, ib}) {
      if (!g.requires_grad(id)) continue;
      Tensor& gx = g.grad_buffer(id);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    if (g.requires_grad(ia)) {
      Tensor& gx = g.grad_buffer(ia);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gy = g.grad_buffer(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gy[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& gx = g.grad_buffer(ia);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gy = g.grad_buffer(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gy[i] += go[i] * x[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw std::domain_error("sqrt: non-positive input");
  }
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t ia = a.id;
  return a.graph->record(Tensor::scalar(s), {a}, [ia](Graph& g, std::size_t self) {
    const double go = g.upstream(self)[0];
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
}

Var slice_last(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || begin >= end || end > x.shape().back()) {
    throw std::invalid_argument("slice_last: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") invalid for shape " + shape_str(x.shape()));
  }
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.size() / width;
  const std::size_t n = end - begin;
  Shape shape = x.shape();
  shape.back() = n;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * width + begin + j];
  }
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, rows, width, begin, n](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) gx[r * width + begin + j] += go[r * n + j];
    }
  });
}

Var resize_last(Var a, std::size_t length) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || length == 0) throw std::invalid_argument("resize_last: invalid target length");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.size() / width;
  const std::size_t keep = std::min(width, length);
  Shape shape = x.shape();
  shape.back() = length;
  Tensor out(shape, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < keep; ++j) out[r * length + j] = x[r * width + j];
  }
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, rows, width, length, keep](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < keep; ++j) gx[r * width + j] += go[r * length + j];
    }
  });
}

Var select_rows(Var a, const std::vector<std::size_t>& rows) {
  const Tensor& x = a.value();
  if (x.rank() < 1 || rows.empty()) throw std::invalid_argument("select_rows: need a batched tensor and rows");
  const std::size_t n = x.dim(0);
  const std::size_t stride = x.size() / n;
  Shape shape = x.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw std::out_of_range("select_rows: row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * stride), stride,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * stride));
  }
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {a}, [ia, rows, stride](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < stride; ++j) gx[rows[r] * stride + j] += go[r * stride + j];
    }
  });
}

Var dense(Var x, Var weights, Var bias) {
  const Tensor& in = x.value();
  const Tensor& w = weights.value();
  const Tensor& b = bias.value();
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw std::invalid_argument("dense: weights " + shape_str(w.shape()) + " and bias " + shape_str(b.shape()) +
                                " are inconsistent");
  }
  const bool batched = in.rank() == 2;
  if ((in.rank() != 1 && !batched) || in.shape().back() != w.dim(1)) {
    throw std::invalid_argument("dense: input " + shape_str(in.shape()) + " does not match weights " +
                                shape_str(w.shape()));
  }
  const std::size_t rows = batched ? in.dim(0) : 1;
  const std::size_t d_in = w.dim(1), d_out = w.dim(0);
  Tensor out(batched ? Shape{rows, d_out} : Shape{d_out});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data().data() + r * d_in;
    for (std::size_t o = 0; o < d_out; ++o) {
      const double* wo = w.data().data() + o * d_in;
      double s = b[o];
      for (std::size_t i = 0; i < d_in; ++i) s += wo[i] * xr[i];
      out[r * d_out + o] = s;
    }
  }
  const std::size_t ix = x.id, iw = weights.id, ib = bias.id;
  return x.graph->record(std::move(out), {x, weights, bias},
                         [ix, iw, ib, rows, d_in, d_out](Graph& g, std::size_t self) {
                           const Tensor& go = g.upstream(self);
                           const Tensor& in = g.value(ix);
                           const Tensor& w = g.value(iw);
                           if (g.requires_grad(ix)) {
                             Tensor& gx = g.grad_buffer(ix);
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t o = 0; o < d_out; ++o) {
                                 const double gro = go[r * d_out + o];
                                 const double* wo = w.data().data() + o * d_in;
                                 double* gxr = gx.data().data() + r * d_in;
                                 for (std::size_t i = 0; i < d_in; ++i) gxr[i] += gro * wo[i];
                               }
                             }
                           }
                           if (g.requires_grad(iw)) {
                             Tensor& gw = g.grad_buffer(iw);
                             for (std::size_t r = 0; r < rows; ++r) {
                               const double* xr = in.data().data() + r * d_in;
                               for (std::size_t o = 0; o < d_out; ++o) {
                                 const double gro = go[r * d_out + o];
                                 double* gwo = gw.data().data() + o * d_in;
                                 for (std::size_t i = 0; i < d_in; ++i) gwo[i] += gro * xr[i];
                               }
                             }
                           }
                           if (g.requires_grad(ib)) {
                             Tensor& gb = g.grad_buffer(ib);
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t o = 0; o < d_out; ++o) gb[o] += go[r * d_out + o];
                             }
                           }
                         });
}

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (length + 2 * padding < kernel) throw std::invalid_argument("input shorter than kernel");
  return (length + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                         std::size_t padding) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  return (length - 1) * stride + kernel - 2 * padding;
}

Var strided_conv(Var input, Var kernel, Var bias, ConvSpec spec, int dims) {
  const ConvGeom geom =
      conv_geometry("strided_conv", input.shape(), kernel.shape(), bias.shape(), spec, dims, /*transpose=*/false);
  Tensor out(conv_out_shape(geom, dims));
  const double* x = input.value().data().data();
  const double* w = kernel.value().data().data();
  const Tensor& b = bias.value();
  double* y = out.data().data();
  const std::ptrdiff_t plane = geom.out_h * geom.out_w;
  for (std::ptrdiff_t bc = 0; bc < geom.batch * geom.out_ch; ++bc) {
    std::fill_n(y + bc * plane, plane, b[static_cast<std::size_t>(bc % geom.out_ch)]);
  }
  const std::ptrdiff_t sw = geom.stride_w;
  conv_visit(geom, [&](std::ptrdiff_t in_off, std::ptrdiff_t out_off, std::ptrdiff_t k_off, std::ptrdiff_t n) {
    const double wv = w[k_off];
    const double* xi = x + in_off;
    double* yo = y + out_off;
    for (std::ptrdiff_t t = 0; t < n; ++t) yo[t] += wv * xi[t * sw];
  });
  const std::size_t ix = input.id, ik = kernel.id, ib = bias.id;
  return input.graph->record(std::move(out), {input, kernel, bias}, [ix, ik, ib, geom](Graph& g, std::size_t self) {
    const double* go = g.upstream(self).data().data();
    const std::ptrdiff_t sw = geom.stride_w;
    if (g.requires_grad(ix)) {
      const double* w = g.value(ik).data().data();
      double* gx = g.grad_buffer(ix).data().data();
      conv_visit(geom, [&](std::ptrdiff_t in_off, std::ptrdiff_t out_off, std::ptrdiff_t k_off, std::ptrdiff_t n) {
        const double wv = w[k_off];
        double* gxi = gx + in_off;
        const double* gyo = go + out_off;
        for (std::ptrdiff_t t = 0; t < n; ++t) gxi[t * sw] += wv * gyo[t];
      });
    }
    if (g.requires_grad(ik)) {
      const double* x = g.value(ix).data().data();
      double* gw = g.grad_buffer(ik).data().data();
      conv_visit(geom, [&](std::ptrdiff_t in_off, std::ptrdiff_t out_off, std::ptrdiff_t k_off, std::ptrdiff_t n) {
        const double* xi = x + in_off;
        const double* gyo = go + out_off;
        double s = 0.0;
        for (std::ptrdiff_t t = 0; t < n; ++t) s += xi[t * sw] * gyo[t];
        gw[k_off] += s;
      });
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      const std::ptrdiff_t plane = geom.out_h * geom.out_w;
      for (std::ptrdiff_t bc = 0; bc < geom.batch * geom.out_ch; ++bc) {
        double s = 0.0;
        for (std::ptrdiff_t t = 0; t < plane; ++t) s += go[bc * plane + t];
        gb[static_cast<std::size_t>(bc % geom.out_ch)] += s;
      }
    }
  });
}

Var conv_transpose(Var input, Var kernel, Var bias, ConvSpec spec, int dims) {
  const ConvGeom geom =
      conv_geometry("conv_transpose", input.shape(), kernel.shape(), bias.shape(), spec, dims, /*transpose=*/true);
  Tensor out(conv_out_shape(geom, dims));
  const double* x = input.value().data().data();
  const double* w = kernel.value().data().data();
  const Tensor& b = bias.value();
  double* y = out.data().data();
  const std::ptrdiff_t plane = geom.out_h * geom.out_w;
  for (std::ptrdiff_t bc = 0; bc < geom.batch * geom.out_ch; ++bc) {
    std::fill_n(y + bc * plane, plane, b[static_cast<std::size_t>(bc % geom.out_ch)]);
  }
  const std::ptrdiff_t sw = geom.stride_w;
  conv_transpose_visit(geom,
                       [&](std::ptrdiff_t in_off, std::ptrdiff_t out_off, std::ptrdiff_t k_off, std::ptrdiff_t n) {
                         const double wv = w[k_off];
                         const double* xi = x + in_off;
                         double* yo = y + out_off;
                         for (std::ptrdiff_t t = 0; t < n; ++t) yo[t * sw] += wv * xi[t];
                       });
  const std::size_t ix = input.id, ik = kernel.id, ib = bias.id;
  return input.graph->record(std::move(out), {input, kernel, bias}, [ix, ik, ib, geom](Graph& g, std::size_t self) {
    const double* go = g.upstream(self).data().data();
    const std::ptrdiff_t sw = geom.stride_w;
    if (g.requires_grad(ix)) {
      const double* w = g.value(ik).data().data();
      double* gx = g.grad_buffer(ix).data().data();
      conv_transpose_visit(
          geom, [&](std::ptrdiff_t in_off, std::ptrdiff_t out_off, std::ptrdiff_t k_off, std::ptrdiff_t n) {
            const double wv = w[k_off];
            double* gxi = gx + in_off;
            const double* gyo = go + out_off;
            for (std::ptrdiff_t t = 0; t < n; ++t) gxi[t] += wv * gyo[t * sw];
          });
    }
    if (g.requires_grad(ik)) {
      const double* x = g.value(ix).data().data();
      double* gw = g.grad_buffer(ik).data().data();
      conv_transpose_visit(
          geom, [&](std::ptrdiff_t in_off, std::ptrdiff_t out_off, std::ptrdiff_t k_off, std::ptrdiff_t n) {
            const double* xi = x + in_off;
            const double* gyo = go + out_off;
            double s = 0.0;
            for (std::ptrdiff_t t = 0; t < n; ++t) s += xi[t] * gyo[t * sw];
            gw[k_off] += s;
          });
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_buffer(ib);
      const std::ptrdiff_t plane = geom.out_h * geom.out_w;
      for (std::ptrdiff_t bc = 0; bc < geom.batch * geom.out_ch; ++bc) {
        double s = 0.0;
        for (std::ptrdiff_t t = 0; t < plane; ++t) s += go[bc * plane + t];
        gb[static_cast<std::size_t>(bc % geom.out_ch)] += s;
      }
    }
  });
}

Var residual_block(Var x, Var kernel_a, Var bias_a, Var kernel_b, Var bias_b, double slope, int dims) {
  const std::size_t k = kernel_a.shape().back();
  if (k % 2 == 0 || kernel_b.shape().back() != k) {
    throw std::invalid_argument("residual_block: kernels must share one odd size, got " + shape_str(kernel_a.shape()) +
                                " and " + shape_str(kernel_b.shape()));
  }
  const ConvSpec same{1, (k - 1) / 2};
  Var r = leaky_relu(strided_conv(x, kernel_a, bias_a, same, dims), slope);
  return add(x, strided_conv(r, kernel_b, bias_b, same, dims));
}

Var global_avg_pool(Var input) {
  const Tensor& x = input.value();
  if (x.rank() < 2) throw std::invalid_argument("global_avg_pool: input " + shape_str(x.shape()) + " has no spatial axes");
  // Treat rank-2 input as unbatched [C, L]; rank >= 3 as [B, C, ...].
  const bool batched = x.rank() >= 3;
  const std::size_t channels = batched ? x.dim(0) * x.dim(1) : x.dim(0);
  const std::size_t spatial = x.size() / channels;
  Tensor out(batched ? Shape{x.dim(0), x.dim(1)} : Shape{x.dim(0)});
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < spatial; ++t) s += x[c * spatial + t];
    out[c] = s / static_cast<double>(spatial);
  }
  const std::size_t ia = input.id;
  return input.graph->record(std::move(out), {input}, [ia, channels, spatial](Graph& g, std::size_t self) {
    const Tensor& go = g.upstream(self);
    Tensor& gx = g.grad_buffer(ia);
    const double inv = 1.0 / static_cast<double>(spatial);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < spatial; ++t) gx[c * spatial + t] += go[c] * inv;
    }
  });
}

Var adain(Var content, Var gamma, Var beta, double epsilon) {
  const Tensor& x = content.value();
  const Tensor& ga = gamma.value();
  const Tensor& be = beta.value();
  if (ga.shape() != be.shape()) {
    throw std::invalid_argument("adain: gamma " + shape_str(ga.shape()) + " and beta " + shape_str(be.shape()) +
                                " differ");
  }
  bool ok = false;
  if (ga.rank() == 1) ok = x.rank() >= 2 && x.dim(0) == ga.dim(0);
  if (ga.rank() == 2) ok = x.rank() >= 3 && x.dim(0) == ga.dim(0) && x.dim(1) == ga.dim(1);
  if (!ok) {
    throw std::invalid_argument("adain: content " + shape_str(x.shape()) + " does not match gamma " +
                                shape_str(ga.shape()));
  }
  const std::size_t channels = ga.size();
  const std::size_t spatial = x.size() / channels;
  struct Stats {
    std::vector<double> inv_std;
    std::vector<char> clamped;
    Tensor normalized;
  };
  auto stats = std::make_shared<Stats>();
  stats->inv_std.resize(channels);
  stats->clamped.resize(channels);
  stats->normalized = Tensor(x.shape());
  Tensor out(x.shape());
  const double n = static_cast<double>(spatial);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x.data().data() + c * spatial;
    double m = 0.0;
    for (std::size_t t = 0; t < spatial; ++t) m += xc[t];
    m /= n;
    double v = 0.0;
    for (std::size_t t = 0; t < spatial; ++t) v += (xc[t] - m) * (xc[t] - m);
    v /= n;
    double sd = std::sqrt(v);
    stats->clamped[c] = sd < epsilon;
    if (sd < epsilon) sd = epsilon;
    const double inv = 1.0 / sd;
    stats->inv_std[c] = inv;
    for (std::size_t t = 0; t < spatial; ++t) {
      const double h = (xc[t] - m) * inv;
      stats->normalized[c * spatial + t] = h;
      out[c * spatial + t] = ga[c] * h + be[c];
    }
  }
  const std::size_t ix = content.id, ig = gamma.id, ib = beta.id;
  return content.graph->record(
      std::move(out), {content, gamma, beta}, [ix, ig, ib, stats, channels, spatial](Graph& g, std::size_t self) {
        const Tensor& go = g.upstream(self);
        const Tensor& ga = g.value(ig);
        const Tensor& h = stats->normalized;
        const double n = static_cast<double>(spatial);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (std::size_t t = 0; t < spatial; ++t) {
            sum_g += go[c * spatial + t];
            sum_gh += go[c * spatial + t] * h[c * spatial + t];
          }
          if (g.requires_grad(ig)) g.grad_buffer(ig)[c] += sum_gh;
          if (g.requires_grad(ib)) g.grad_buffer(ib)[c] += sum_g;
          if (g.requires_grad(ix)) {
            Tensor& gx = g.grad_buffer(ix);
            const double k = ga[c] * stats->inv_std[c];
            const double mg = sum_g / n;
            // A clamped std is constant, so only the mean subtraction feeds back.
            const double mgh = stats->clamped[c] ? 0.0 : sum_gh / n;
            for (std::size_t t = 0; t < spatial; ++t) {
              gx[c * spatial + t] += k * (go[c * spatial + t] - mg - h[c * spatial + t] * mgh);
            }
          }
        }
      });
}

}  // namespace semivl
