#include "dcic/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "dcic/error.hpp"

namespace dcic {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  require(t.rank() == rank, Errc::shape_mismatch,
          std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
              shape_string(t.shape()));
}

// Patches of one image for output rows [oy0, oy1): row r = (c, ky, kx) of
// the unrolled kernel, stored at cols + r * ld.
void im2col_rows(const float* x, int channels, const ConvGeometry& g, int oy0, int oy1, float* cols, std::size_t ld) {
  const int k = g.kernel;
  for (int c = 0; c < channels; ++c) {
    const float* src = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ld;
        const int x0 = kx * g.dilation - g.pad_left;
        for (int oy = oy0; oy < oy1; ++oy) {
          float* dst = row + static_cast<std::size_t>(oy - oy0) * g.out_w;
          const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1 && x0 >= 0 && x0 + g.out_w <= g.in_w) {
            std::copy_n(srow + x0, g.out_w, dst);
            continue;
          }
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + x0;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? srow[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col_rows.
void col2im_rows(const float* cols, int channels, const ConvGeometry& g, int oy0, int oy1, std::size_t ld, float* x) {
  const int k = g.kernel;
  for (int c = 0; c < channels; ++c) {
    float* dst = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ld;
        const int x0 = kx * g.dilation - g.pad_left;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
          if (iy < 0 || iy >= g.in_h) continue;
          const float* src = row + static_cast<std::size_t>(oy - oy0) * g.out_w;
          float* drow = dst + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1 && x0 >= 0 && x0 + g.out_w <= g.in_w) {
            for (int ox = 0; ox < g.out_w; ++ox) drow[x0 + ox] += src[ox];
            continue;
          }
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + x0;
            if (ix >= 0 && ix < g.in_w) drow[ix] += src[ox];
          }
        }
      }
    }
  }
}

// cols is (C*k*k, N*out_h*out_w), row-major.
void im2col(const float* x, int n_batch, int channels, const ConvGeometry& g, float* cols) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int n = 0; n < n_batch; ++n)
    im2col_rows(x + static_cast<std::size_t>(n) * channels * g.in_h * g.in_w, channels, g, 0, g.out_h, cols + n * plane,
                plane * n_batch);
}

void col2im(const float* cols, int n_batch, int channels, const ConvGeometry& g, float* x) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int n = 0; n < n_batch; ++n)
    col2im_rows(cols + n * plane, channels, g, 0, g.out_h, plane * n_batch,
                x + static_cast<std::size_t>(n) * channels * g.in_h * g.in_w);
}

// Output rows per im2col chunk, keeping the patch buffer near 1 MB.
int chunk_rows(std::size_t kdim, const ConvGeometry& g) {
  const std::size_t target = (std::size_t{1} << 18) / std::max<std::size_t>(kdim, 1);
  return static_cast<int>(std::clamp<std::size_t>(target / g.out_w, 1, g.out_h));
}

using StridedMat = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// (N,C,P) <-> (C,N*P)
std::vector<float> to_channel_major(const float* x, int n_batch, int channels, std::size_t plane) {
  std::vector<float> out(static_cast<std::size_t>(n_batch) * channels * plane);
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c)
      std::copy_n(x + (static_cast<std::size_t>(n) * channels + c) * plane, plane,
                  out.data() + (static_cast<std::size_t>(c) * n_batch + n) * plane);
  return out;
}

void from_channel_major(const float* cm, int n_batch, int channels, std::size_t plane, float* x) {
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c)
      std::copy_n(cm + (static_cast<std::size_t>(c) * n_batch + n) * plane, plane,
                  x + (static_cast<std::size_t>(n) * channels + c) * plane);
}

Var emit_affine(Tensor value, Var input, Var weight, std::optional<Var> bias, Tape::BackwardFn fn) {
  if (bias) return input.tape().emit(std::move(value), {input, weight, *bias}, std::move(fn));
  return input.tape().emit(std::move(value), {input, weight}, std::move(fn));
}

}  // namespace

int effective_kernel(int kernel, int dilation) { return kernel + (kernel - 1) * (dilation - 1); }

ConvGeometry conv_geometry(int in_h, int in_w, int kernel, int stride, int dilation, Padding padding) {
  require(kernel >= 1 && stride >= 1 && dilation >= 1, Errc::invalid_argument,
          "conv: kernel, stride and dilation must be positive");
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel = kernel;
  g.stride = stride;
  g.dilation = dilation;
  const int eff = effective_kernel(kernel, dilation);
  if (padding == Padding::same) {
    g.pad_top = (eff - 1) / 2;
    g.pad_left = (eff - 1) / 2;
    g.out_h = in_h > 0 ? (in_h - 1) / stride + 1 : 0;
    g.out_w = in_w > 0 ? (in_w - 1) / stride + 1 : 0;
  } else {
    g.out_h = in_h >= eff ? (in_h - eff) / stride + 1 : 0;
    g.out_w = in_w >= eff ? (in_w - eff) / stride + 1 : 0;
  }
  require(g.out_h > 0 && g.out_w > 0, Errc::shape_mismatch,
          "conv: zero-sized output for input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
              " with effective kernel " + std::to_string(eff));
  return g;
}

Var conv2d(Var input, Var weight, std::optional<Var> bias, ConvOptions options) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  require(w.dim(2) == w.dim(3), Errc::shape_mismatch, "conv2d: kernel must be square");
  require(x.dim(1) == w.dim(1), Errc::shape_mismatch,
          "conv2d: input channels " + std::to_string(x.dim(1)) + " do not match weight " + shape_string(w.shape()));
  const int n_batch = x.dim(0), cin = x.dim(1), cout = w.dim(0), k = w.dim(2);
  if (bias)
    require(bias->value().shape() == Shape{cout}, Errc::shape_mismatch,
            "conv2d: bias shape " + shape_string(bias->value().shape()));
  const ConvGeometry g = conv_geometry(x.dim(2), x.dim(3), k, options.stride, options.dilation, options.padding);
  require(n_batch > 0, Errc::shape_mismatch, "conv2d: empty batch");

  const std::size_t kdim = static_cast<std::size_t>(cin) * k * k;
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const int rows = chunk_rows(kdim, g);
  Tensor out({n_batch, cout, g.out_h, g.out_w});
  {
    std::vector<float> cols(kdim * rows * g.out_w);
    const ConstMapMat wm(w.data(), cout, kdim);
    for (int n = 0; n < n_batch; ++n)
      for (int oy = 0; oy < g.out_h; oy += rows) {
        const int oy1 = std::min(oy + rows, g.out_h);
        const std::size_t m = static_cast<std::size_t>(oy1 - oy) * g.out_w;
        im2col_rows(x.data() + n * cin * in_plane, cin, g, oy, oy1, cols.data(), m);
        StridedMat(out.data() + n * cout * plane + static_cast<std::size_t>(oy) * g.out_w, cout, m,
                   Eigen::OuterStride<>(plane))
            .noalias() = wm * ConstMapMat(cols.data(), kdim, m);
      }
  }
  if (bias) {
    const float* b = bias->value().data();
    for (int n = 0; n < n_batch; ++n)
      for (int c = 0; c < cout; ++c) {
        float* p = out.data() + (static_cast<std::size_t>(n) * cout + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += b[c];
      }
  }

  return emit_affine(std::move(out), input, weight, bias, [=](const Tensor& gout) {
    Tape& tape = input.tape();
    const bool need_w = weight.requires_grad(), need_x = input.requires_grad();
    if (bias && bias->requires_grad()) {
      float* db = tape.grad_buffer(*bias).data();
      for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < cout; ++c) {
          const float* p = gout.data() + (static_cast<std::size_t>(n) * cout + c) * plane;
          float s = 0.0f;
          for (std::size_t i = 0; i < plane; ++i) s += p[i];
          db[c] += s;
        }
    }
    if (!need_w && !need_x) return;
    std::vector<float> cols(kdim * rows * g.out_w);
    const float* xin = input.value().data();
    float* dw = need_w ? tape.grad_buffer(weight).data() : nullptr;
    float* dx = need_x ? tape.grad_buffer(input).data() : nullptr;
    const ConstMapMat wm(weight.value().data(), cout, kdim);
    for (int n = 0; n < n_batch; ++n)
      for (int oy = 0; oy < g.out_h; oy += rows) {
        const int oy1 = std::min(oy + rows, g.out_h);
        const std::size_t m = static_cast<std::size_t>(oy1 - oy) * g.out_w;
        const ConstStridedMat dmat(gout.data() + n * cout * plane + static_cast<std::size_t>(oy) * g.out_w, cout, m,
                                   Eigen::OuterStride<>(plane));
        if (need_w) {
          im2col_rows(xin + n * cin * in_plane, cin, g, oy, oy1, cols.data(), m);
          MapMat(dw, cout, kdim).noalias() += dmat * ConstMapMat(cols.data(), kdim, m).transpose();
        }
        if (need_x) {
          MapMat(cols.data(), kdim, m).noalias() = wm.transpose() * dmat;
          col2im_rows(cols.data(), cin, g, oy, oy1, m, dx + n * cin * in_plane);
        }
      }
  });
}

Var transposed_conv2d(Var input, Var weight, int stride) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank(x, 4, "transposed_conv2d", "input");
  require_rank(w, 4, "transposed_conv2d", "weight");
  require(stride >= 1, Errc::invalid_argument, "transposed_conv2d: stride must be >= 1");
  require(w.dim(2) == w.dim(3), Errc::shape_mismatch, "transposed_conv2d: kernel must be square");
  require(x.dim(1) == w.dim(0), Errc::shape_mismatch,
          "transposed_conv2d: input channels " + std::to_string(x.dim(1)) + " do not match weight " +
              shape_string(w.shape()));
  const int n_batch = x.dim(0), cin_t = x.dim(1), cout_t = w.dim(1), k = w.dim(2);
  require(n_batch > 0, Errc::shape_mismatch, "transposed_conv2d: empty batch");
  const ConvGeometry g = conv_geometry(x.dim(2) * stride, x.dim(3) * stride, k, stride, 1, Padding::same);
  const std::size_t kdim = static_cast<std::size_t>(cout_t) * k * k;
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t m = plane * n_batch;

  std::vector<float> xcm = to_channel_major(x.data(), n_batch, cin_t, plane);
  std::vector<float> cols(kdim * m);
  MapMat(cols.data(), kdim, m).noalias() =
      ConstMapMat(w.data(), cin_t, kdim).transpose() * ConstMapMat(xcm.data(), cin_t, m);
  Tensor out({n_batch, cout_t, g.in_h, g.in_w});
  col2im(cols.data(), n_batch, cout_t, g, out.data());

  return input.tape().emit(std::move(out), {input, weight}, [=](const Tensor& gout) {
    Tape& tape = input.tape();
    std::vector<float> dcols(kdim * m);
    im2col(gout.data(), n_batch, cout_t, g, dcols.data());
    ConstMapMat dmat(dcols.data(), kdim, m);
    if (weight.requires_grad()) {
      std::vector<float> xc = to_channel_major(input.value().data(), n_batch, cin_t, plane);
      MapMat(tape.grad_buffer(weight).data(), cin_t, kdim).noalias() += ConstMapMat(xc.data(), cin_t, m) * dmat.transpose();
    }
    if (input.requires_grad()) {
      std::vector<float> dx(static_cast<std::size_t>(cin_t) * m);
      MapMat(dx.data(), cin_t, m).noalias() = ConstMapMat(weight.value().data(), cin_t, kdim) * dmat;
      Tensor dxt(input.value().shape());
      from_channel_major(dx.data(), n_batch, cin_t, plane, dxt.data());
      tape.accumulate(input, dxt);
    }
  });
}

BatchNormState::BatchNormState(int channels) : running_mean({channels}, 0.0f), running_var({channels}, 1.0f) {}

Var batch_norm(Var input, Var scale_v, Var shift_v, BatchNormState& state, Mode mode) {
  const Tensor& x = input.value();
  require_rank(x, 4, "batch_norm", "input");
  const int n_batch = x.dim(0), channels = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  require(n_batch > 0 && plane > 0, Errc::shape_mismatch, "batch_norm: empty batch");
  require(scale_v.value().shape() == Shape{channels} && shift_v.value().shape() == Shape{channels},
          Errc::shape_mismatch, "batch_norm: scale/shift must have shape (" + std::to_string(channels) + ")");
  require(state.running_mean.shape() == Shape{channels}, Errc::shape_mismatch, "batch_norm: state size mismatch");
  const std::size_t count = plane * n_batch;

  std::vector<float> mean(channels), inv_std(channels);
  if (mode == Mode::train) {
    for (int c = 0; c < channels; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const float* p = x.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / count;
      for (int n = 0; n < n_batch; ++n) {
        const float* p = x.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s2 += (p[i] - mu) * (p[i] - mu);
      }
      const double var = s2 / count;
      mean[c] = static_cast<float>(mu);
      inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = count > 1 ? s2 / (count - 1) : var;
      state.running_mean[c] = state.decay * state.running_mean[c] + (1.0f - state.decay) * static_cast<float>(mu);
      state.running_var[c] = state.decay * state.running_var[c] + (1.0f - state.decay) * static_cast<float>(unbiased);
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0f / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  Tensor out(x.shape());
  const float* gamma = scale_v.value().data();
  const float* beta = shift_v.value().data();
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
      const float a = gamma[c] * inv_std[c];
      const float b = beta[c] - a * mean[c];
      for (std::size_t i = 0; i < plane; ++i) out[off + i] = a * x[off + i] + b;
    }

  return input.tape().emit(std::move(out), {input, scale_v, shift_v}, [=](const Tensor& gout) {
    Tape& tape = input.tape();
    const Tensor& xin = input.value();
    const float* gam = scale_v.value().data();
    Tensor dx = input.requires_grad() ? Tensor(xin.shape()) : Tensor();
    Tensor dgamma({channels}), dbeta({channels});
    for (int c = 0; c < channels; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const float xhat = (xin[off + i] - mean[c]) * inv_std[c];
          sum_dy += gout[off + i];
          sum_dy_xhat += gout[off + i] * xhat;
        }
      }
      dgamma[c] = static_cast<float>(sum_dy_xhat);
      dbeta[c] = static_cast<float>(sum_dy);
      if (dx.empty()) continue;
      for (int n = 0; n < n_batch; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
        if (mode == Mode::train) {
          const double k = gam[c] * inv_std[c] / static_cast<double>(count);
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (xin[off + i] - mean[c]) * inv_std[c];
            dx[off + i] = static_cast<float>(k * (count * gout[off + i] - sum_dy - xhat * sum_dy_xhat));
          }
        } else {
          const float k = gam[c] * inv_std[c];
          for (std::size_t i = 0; i < plane; ++i) dx[off + i] = k * gout[off + i];
        }
      }
    }
    if (!dx.empty()) tape.accumulate(input, dx);
    tape.accumulate(scale_v, dgamma);
    tape.accumulate(shift_v, dbeta);
  });
}

Var relu(Var input) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return input.tape().emit(std::move(out), {input}, [=](const Tensor& gout) {
    const Tensor& xin = input.value();
    Tensor& dx = input.tape().grad_buffer(input);
    for (std::size_t i = 0; i < xin.numel(); ++i)
      if (xin[i] > 0.0f) dx[i] += gout[i];
  });
}

Var add(Var a, Var b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  out.add_(b.value());
  return a.tape().emit(std::move(out), {a, b}, [=](const Tensor& gout) {
    a.tape().accumulate(a, gout);
    b.tape().accumulate(b, gout);
  });
}

Var scale(Var input, float factor) {
  Tensor out = input.value();
  for (float& v : out.values()) v *= factor;
  return input.tape().emit(std::move(out), {input}, [=](const Tensor& gout) {
    Tensor& dx = input.tape().grad_buffer(input);
    for (std::size_t i = 0; i < gout.numel(); ++i) dx[i] += factor * gout[i];
  });
}

Var hinge(Var input, float threshold) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::max(x[i] - threshold, 0.0f);
  return input.tape().emit(std::move(out), {input}, [=](const Tensor& gout) {
    const Tensor& xin = input.value();
    Tensor& dx = input.tape().grad_buffer(input);
    for (std::size_t i = 0; i < xin.numel(); ++i)
      if (xin[i] > threshold) dx[i] += gout[i];
  });
}

Var sum(Var input) {
  double s = 0.0;
  for (float v : input.value().values()) s += v;
  return input.tape().emit(Tensor::scalar(static_cast<float>(s)), {input}, [=](const Tensor& gout) {
    Tensor& dx = input.tape().grad_buffer(input);
    const float g = gout[0];
    for (float& v : dx.values()) v += g;
  });
}

Var max_pool(Var input, int kernel, int stride) {
  const Tensor& x = input.value();
  require_rank(x, 4, "max_pool", "input");
  require(x.dim(2) >= kernel && x.dim(3) >= kernel, Errc::shape_mismatch,
          "max_pool: input " + shape_string(x.shape()) + " smaller than kernel " + std::to_string(kernel));
  const ConvGeometry g = conv_geometry(x.dim(2), x.dim(3), kernel, stride, 1, Padding::same);
  const int n_batch = x.dim(0), channels = x.dim(1);
  Tensor out({n_batch, channels, g.out_h, g.out_w});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  std::size_t o = 0;
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * g.in_h * g.in_w;
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_i = 0;
          bool found = false;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - g.pad_top + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - g.pad_left + kx;
              if (ix < 0 || ix >= g.in_w) continue;
              const std::size_t idx = base + static_cast<std::size_t>(iy) * g.in_w + ix;
              // window is scanned in increasing linear index, so strict > keeps the lowest on ties
              if (!found || x[idx] > best) {
                best = x[idx];
                best_i = idx;
                found = true;
              }
            }
          }
          out[o] = best;
          (*argmax)[o] = best_i;
        }
    }
  return input.tape().emit(std::move(out), {input}, [=](const Tensor& gout) {
    Tensor& dx = input.tape().grad_buffer(input);
    for (std::size_t i = 0; i < gout.numel(); ++i) dx[(*argmax)[i]] += gout[i];
  });
}

Var global_avg_pool(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 4, "global_avg_pool", "input");
  const int n_batch = x.dim(0), channels = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  require(plane > 0, Errc::shape_mismatch, "global_avg_pool: empty spatial extent");
  Tensor out({n_batch, channels});
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += x[i * plane + j];
    out[i] = static_cast<float>(s / plane);
  }
  return input.tape().emit(std::move(out), {input}, [=](const Tensor& gout) {
    Tensor& dx = input.tape().grad_buffer(input);
    const float inv = 1.0f / static_cast<float>(plane);
    for (std::size_t i = 0; i < gout.numel(); ++i)
      for (std::size_t j = 0; j < plane; ++j) dx[i * plane + j] += gout[i] * inv;
  });
}

Var linear(Var input, Var weight, std::optional<Var> bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  require(x.dim(1) == w.dim(1), Errc::shape_mismatch,
          "linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  const int n_rows = x.dim(0), d = x.dim(1), k = w.dim(0);
  if (bias)
    require(bias->value().shape() == Shape{k}, Errc::shape_mismatch, "linear: bias shape " + shape_string(bias->value().shape()));
  Tensor out({n_rows, k});
  MapMat(out.data(), n_rows, k).noalias() = ConstMapMat(x.data(), n_rows, d) * ConstMapMat(w.data(), k, d).transpose();
  if (bias)
    for (int r = 0; r < n_rows; ++r)
      for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(r) * k + j] += bias->value()[j];
  return emit_affine(std::move(out), input, weight, bias, [=](const Tensor& gout) {
    Tape& tape = input.tape();
    ConstMapMat g(gout.data(), n_rows, k);
    if (weight.requires_grad())
      MapMat(tape.grad_buffer(weight).data(), k, d).noalias() += g.transpose() * ConstMapMat(input.value().data(), n_rows, d);
    if (bias && bias->requires_grad())
      Eigen::Map<Eigen::RowVectorXf>(tape.grad_buffer(*bias).data(), k) += g.colwise().sum();
    if (input.requires_grad())
      MapMat(tape.grad_buffer(input).data(), n_rows, d).noalias() += g * ConstMapMat(weight.value().data(), k, d);
  });
}

Var upsample_nearest(Var input, int factor) {
  const Tensor& x = input.value();
  require_rank(x, 4, "upsample_nearest", "input");
  require(factor >= 1, Errc::invalid_argument, "upsample_nearest: factor must be >= 1");
  const int n_batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h * factor, ow = w * factor;
  Tensor out({n_batch, channels, oh, ow});
  for (std::size_t p = 0; p < static_cast<std::size_t>(n_batch) * channels; ++p)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx)
        out[(p * oh + y) * ow + xx] = x[(p * h + y / factor) * w + xx / factor];
  return input.tape().emit(std::move(out), {input}, [=](const Tensor& gout) {
    Tensor& dx = input.tape().grad_buffer(input);
    for (std::size_t p = 0; p < static_cast<std::size_t>(n_batch) * channels; ++p)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) dx[(p * h + y / factor) * w + xx / factor] += gout[(p * oh + y) * ow + xx];
  });
}

namespace {

struct Lerp {
  int lo, hi;
  float frac;
};

std::vector<Lerp> lerp_table(int in, int out) {
  std::vector<Lerp> t(out);
  const float ratio = static_cast<float>(in) / static_cast<float>(out);
  for (int i = 0; i < out; ++i) {
    float src = (static_cast<float>(i) + 0.5f) * ratio - 0.5f;
    src = std::clamp(src, 0.0f, static_cast<float>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    t[i] = Lerp{lo, std::min(lo + 1, in - 1), src - static_cast<float>(lo)};
  }
  return t;
}

}  // namespace

Var resize_bilinear(Var input, int out_h, int out_w) {
  const Tensor& x = input.value();
  require_rank(x, 4, "resize_bilinear", "input");
  require(out_h > 0 && out_w > 0 && x.dim(2) > 0 && x.dim(3) > 0, Errc::shape_mismatch, "resize_bilinear: empty extent");
  const int n_batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ty = lerp_table(h, out_h);
  const auto tx = lerp_table(w, out_w);
  Tensor out({n_batch, channels, out_h, out_w});
  const std::size_t planes = static_cast<std::size_t>(n_batch) * channels;
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.data() + p * h * w;
    float* dst = out.data() + p * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const Lerp ly = ty[y];
      for (int xx = 0; xx < out_w; ++xx) {
        const Lerp lx = tx[xx];
        const float top = src[ly.lo * w + lx.lo] * (1 - lx.frac) + src[ly.lo * w + lx.hi] * lx.frac;
        const float bot = src[ly.hi * w + lx.lo] * (1 - lx.frac) + src[ly.hi * w + lx.hi] * lx.frac;
        dst[y * out_w + xx] = top * (1 - ly.frac) + bot * ly.frac;
      }
    }
  }
  return input.tape().emit(std::move(out), {input}, [=](const Tensor& gout) {
    Tensor& dx = input.tape().grad_buffer(input);
    for (std::size_t p = 0; p < planes; ++p) {
      float* d = dx.data() + p * h * w;
      const float* g = gout.data() + p * out_h * out_w;
      for (int y = 0; y < out_h; ++y) {
        const Lerp ly = ty[y];
        for (int xx = 0; xx < out_w; ++xx) {
          const Lerp lx = tx[xx];
          const float gv = g[y * out_w + xx];
          d[ly.lo * w + lx.lo] += gv * (1 - ly.frac) * (1 - lx.frac);
          d[ly.lo * w + lx.hi] += gv * (1 - ly.frac) * lx.frac;
          d[ly.hi * w + lx.lo] += gv * ly.frac * (1 - lx.frac);
          d[ly.hi * w + lx.hi] += gv * ly.frac * lx.frac;
        }
      }
    }
  });
}

Var mse_loss(Var a, Var b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          "mse_loss: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.numel() > 0, Errc::shape_mismatch, "mse_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += static_cast<double>(x[i] - y[i]) * (x[i] - y[i]);
  const std::size_t n = x.numel();
  return a.tape().emit(Tensor::scalar(static_cast<float>(s / n)), {a, b}, [=](const Tensor& gout) {
    Tape& tape = a.tape();
    const Tensor& xa = a.value();
    const Tensor& xb = b.value();
    Tensor d(xa.shape());
    const float k = 2.0f * gout[0] / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = k * (xa[i] - xb[i]);
    tape.accumulate(a, d);
    if (b.requires_grad()) {
      for (float& v : d.values()) v = -v;
      tape.accumulate(b, d);
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax_cross_entropy", "logits");
  const int n_rows = z.dim(0), k = z.dim(1);
  require(static_cast<int>(labels.size()) == n_rows && n_rows > 0, Errc::shape_mismatch,
          "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n_rows) + " rows");
  auto probs = std::make_shared<Tensor>(z.shape());
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (int r = 0; r < n_rows; ++r) {
    const int y = labels[r];
    require(y >= 0 && y < k, Errc::invalid_argument,
            "softmax_cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    const float* row = z.data() + static_cast<std::size_t>(r) * k;
    const float mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < k; ++j)
      (*probs)[static_cast<std::size_t>(r) * k + j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    loss += std::log(denom) - (row[y] - mx);
  }
  return logits.tape().emit(Tensor::scalar(static_cast<float>(loss / n_rows)), {logits}, [=](const Tensor& gout) {
    Tensor d = *probs;
    for (int r = 0; r < n_rows; ++r) d[static_cast<std::size_t>(r) * k + (*lab)[r]] -= 1.0f;
    const float s = gout[0] / static_cast<float>(n_rows);
    for (float& v : d.values()) v *= s;
    logits.tape().accumulate(logits, d);
  });
}

Var pixel_cross_entropy(Var logits, std::span<const int> labels, int ignore_label) {
  const Tensor& z = logits.value();
  require_rank(z, 4, "pixel_cross_entropy", "logits");
  const int n_batch = z.dim(0), k = z.dim(1);
  const std::size_t plane = static_cast<std::size_t>(z.dim(2)) * z.dim(3);
  require(labels.size() == plane * n_batch, Errc::shape_mismatch,
          "pixel_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + shape_string(z.shape()));
  auto grad = std::make_shared<Tensor>(z.shape());
  double loss = 0.0;
  std::size_t valid = 0;
  std::vector<double> e(k);
  for (int n = 0; n < n_batch; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      const int y = labels[n * plane + p];
      if (y == ignore_label) continue;
      require(y >= 0 && y < k, Errc::invalid_argument, "pixel_cross_entropy: label " + std::to_string(y) + " out of range");
      const float* base = z.data() + static_cast<std::size_t>(n) * k * plane + p;
      float mx = base[0];
      for (int j = 1; j < k; ++j) mx = std::max(mx, base[j * plane]);
      double denom = 0.0;
      for (int j = 0; j < k; ++j) denom += (e[j] = std::exp(static_cast<double>(base[j * plane] - mx)));
      loss += std::log(denom) - (base[y * plane] - mx);
      float* g = grad->data() + static_cast<std::size_t>(n) * k * plane + p;
      for (int j = 0; j < k; ++j) g[j * plane] = static_cast<float>(e[j] / denom) - (j == y ? 1.0f : 0.0f);
      ++valid;
    }
  const float value = valid ? static_cast<float>(loss / valid) : 0.0f;
  return logits.tape().emit(Tensor::scalar(value), {logits}, [=](const Tensor& gout) {
    if (valid == 0) return;
    Tensor d = *grad;
    const float s = gout[0] / static_cast<float>(valid);
    for (float& v : d.values()) v *= s;
    logits.tape().accumulate(logits, d);
  });
}

}  // namespace dcic
