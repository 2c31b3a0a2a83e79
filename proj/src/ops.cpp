#include "lrpabn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace lrpabn::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "operand shapes differ, " + to_string(a.shape()) + " vs " +
                       to_string(b.shape()));
  }
}

void require_rank(const char* op, const char* name, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_fail(op, std::string(name) + " must have rank " + std::to_string(rank) +
                       ", got " + to_string(t.shape()));
  }
}

Tape& tape_of(Var v) {
  if (!v.valid()) throw std::logic_error("unbound Var passed to operator");
  return *v.tape();
}

// ---------------------------------------------------------------------------
// conv2d

struct ConvGeometry {
  std::size_t batch, in_ch, height, width, out_ch, out_h, out_w;
  int pad;
  std::size_t patch() const { return in_ch * 9; }
  std::size_t plane() const { return out_h * out_w; }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::size_t cols = g.plane();
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    const double* src = x + ci * g.height * g.width;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + ((ci * 3 + ky) * 3 + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) + ky - g.pad;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) + kx - g.pad;
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width))
                          ? 0.0
                          : src[iy * g.width + ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* x) {
  const std::size_t cols = g.plane();
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    double* dst = x + ci * g.height * g.width;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + ((ci * 3 + ky) * 3 + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) + ky - g.pad;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) + kx - g.pad;
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            dst[iy * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, int padding) {
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const Tensor& b = bias.value();
  require_rank("conv2d", "input", x, 4);
  require_rank("conv2d", "kernel", k, 4);
  if (k.dim(2) != 3 || k.dim(3) != 3) {
    shape_fail("conv2d", "kernel must be 3x3, got " + to_string(k.shape()));
  }
  if (padding != 0 && padding != 1) {
    throw std::invalid_argument("conv2d: padding must be 0 or 1");
  }
  if (k.dim(1) != x.dim(1)) {
    shape_fail("conv2d", "input has " + std::to_string(x.dim(1)) +
                             " channels but kernel expects " + std::to_string(k.dim(1)));
  }
  if (b.rank() != 1 || b.dim(0) != k.dim(0)) {
    shape_fail("conv2d", "bias " + to_string(b.shape()) + " does not match " +
                             std::to_string(k.dim(0)) + " filters");
  }
  if (x.dim(2) + 2 * padding < 3 || x.dim(3) + 2 * padding < 3) {
    shape_fail("conv2d", "spatial extent too small: " + to_string(x.shape()));
  }

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0),
                 x.dim(2) + 2 * padding - 2, x.dim(3) + 2 * padding - 2, padding};
  Tensor y({g.batch, g.out_ch, g.out_h, g.out_w});
  std::vector<double> col(g.patch() * g.plane());
  ConstMatMap kmat(k.ptr(), g.out_ch, g.patch());
  ConstVecMap bvec(b.ptr(), g.out_ch);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(x.ptr() + n * g.in_ch * g.height * g.width, g, col.data());
    MatMap out(y.ptr() + n * g.out_ch * g.plane(), g.out_ch, g.plane());
    out.noalias() = kmat * ConstMatMap(col.data(), g.patch(), g.plane());
    out.colwise() += bvec;
  }

  const auto xi = input.id(), ki = kernel.id(), bi = bias.id();
  return tape_of(input).record(
      std::move(y), {input, kernel, bias}, [xi, ki, bi, g](Tape& t, const Tensor& gy) {
        const Tensor& x = t.value(xi);
        const Tensor& k = t.value(ki);
        const bool need_x = t.requires_grad(xi);
        const bool need_k = t.requires_grad(ki);
        const bool need_b = t.requires_grad(bi);
        std::vector<double> col(g.patch() * g.plane());
        ConstMatMap kmat(k.ptr(), g.out_ch, g.patch());
        for (std::size_t n = 0; n < g.batch; ++n) {
          ConstMatMap gout(gy.ptr() + n * g.out_ch * g.plane(), g.out_ch, g.plane());
          if (need_b) {
            VecMap(t.grad(bi).ptr(), g.out_ch) += gout.rowwise().sum();
          }
          if (need_k) {
            im2col(x.ptr() + n * g.in_ch * g.height * g.width, g, col.data());
            MatMap(t.grad(ki).ptr(), g.out_ch, g.patch()).noalias() +=
                gout * ConstMatMap(col.data(), g.patch(), g.plane()).transpose();
          }
          if (need_x) {
            MatMap(col.data(), g.patch(), g.plane()).noalias() = kmat.transpose() * gout;
            col2im_add(col.data(), g, t.grad(xi).ptr() + n * g.in_ch * g.height * g.width);
          }
        }
      });
}

// ---------------------------------------------------------------------------

Var batchnorm(Var input, Var gamma, Var beta, double eps) {
  const Tensor& x = input.value();
  if (x.rank() < 3) shape_fail("batchnorm", "input must be [b,c,...], got " + to_string(x.shape()));
  const std::size_t batch = x.dim(0), ch = x.dim(1);
  const std::size_t spatial = x.size() / (batch * ch);
  const std::size_t count = batch * spatial;
  if (gamma.value().shape() != Shape{ch} || beta.value().shape() != Shape{ch}) {
    shape_fail("batchnorm", "gamma/beta must be [" + std::to_string(ch) + "]");
  }
  if (count < 2) {
    throw NumericError("batchnorm: need at least two values per channel for batch statistics, got " +
                       std::to_string(count));
  }
  std::vector<double> mean(ch, 0.0), inv_std(ch, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* p = x.ptr() + (n * ch + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) s += p[i];
    }
    const double mu = s / static_cast<double>(count);
    double v = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* p = x.ptr() + (n * ch + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) v += (p[i] - mu) * (p[i] - mu);
    }
    mean[c] = mu;
    inv_std[c] = 1.0 / std::sqrt(v / static_cast<double>(count) + eps);
  }
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor y(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* p = x.ptr() + (n * ch + c) * spatial;
      double* q = y.ptr() + (n * ch + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        q[i] = gm[c] * (p[i] - mean[c]) * inv_std[c] + bt[c];
      }
    }
  }
  const auto xi = input.id(), gi = gamma.id(), bi = beta.id();
  return tape_of(input).record(
      std::move(y), {input, gamma, beta},
      [xi, gi, bi, batch, ch, spatial, count, mean = std::move(mean),
       inv_std = std::move(inv_std)](Tape& t, const Tensor& gy) {
        const Tensor& x = t.value(xi);
        const Tensor& gm = t.value(gi);
        const bool need_x = t.requires_grad(xi);
        const bool need_g = t.requires_grad(gi);
        const bool need_b = t.requires_grad(bi);
        for (std::size_t c = 0; c < ch; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t n = 0; n < batch; ++n) {
            const double* p = x.ptr() + (n * ch + c) * spatial;
            const double* d = gy.ptr() + (n * ch + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              sum_dy += d[i];
              sum_dy_xhat += d[i] * (p[i] - mean[c]) * inv_std[c];
            }
          }
          if (need_g) t.grad(gi)[c] += sum_dy_xhat;
          if (need_b) t.grad(bi)[c] += sum_dy;
          if (!need_x) continue;
          const double m = static_cast<double>(count);
          const double k = gm[c] * inv_std[c] / m;
          Tensor& gx = t.grad(xi);
          for (std::size_t n = 0; n < batch; ++n) {
            const double* p = x.ptr() + (n * ch + c) * spatial;
            const double* d = gy.ptr() + (n * ch + c) * spatial;
            double* q = gx.ptr() + (n * ch + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              const double xhat = (p[i] - mean[c]) * inv_std[c];
              q[i] += k * (m * d[i] - sum_dy - xhat * sum_dy_xhat);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// elementwise

Var relu(Var x) {
  const Tensor& v = x.value();
  Tensor y(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] <= 0.0 ? 0.0 : v[i];  // NaN passes through
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x}, [xi](Tape& t, const Tensor& gy) {
    const Tensor& v = t.value(xi);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var sigmoid(Var x) {
  const Tensor& v = x.value();
  Tensor y(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = v[i];
    if (z >= 0.0) {
      y[i] = 1.0 / (1.0 + std::exp(-z));
    } else {
      const double e = std::exp(z);
      y[i] = e / (1.0 + e);
    }
  }
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x}, [xi](Tape& t, const Tensor& gy) {
    const Tensor& s = t.output();
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < s.size(); ++i) gx[i] += gy[i] * s[i] * (1.0 - s[i]);
  });
}

Var hadamard(Var a, Var b) {
  const Tensor& u = a.value();
  const Tensor& v = b.value();
  require_same("hadamard", u, v);
  Tensor y(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) y[i] = u[i] * v[i];
  const auto ai = a.id(), bi = b.id();
  return tape_of(a).record(std::move(y), {a, b}, [ai, bi](Tape& t, const Tensor& gy) {
    const Tensor& u = t.value(ai);
    const Tensor& v = t.value(bi);
    if (t.requires_grad(ai)) {
      Tensor& g = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * v[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& g = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * u[i];
    }
  });
}

namespace {
Var add_scaled(const char* op, Var a, Var b, double sign) {
  const Tensor& u = a.value();
  const Tensor& v = b.value();
  require_same(op, u, v);
  Tensor y(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) y[i] = u[i] + sign * v[i];
  const auto ai = a.id(), bi = b.id();
  return tape_of(a).record(std::move(y), {a, b}, [ai, bi, sign](Tape& t, const Tensor& gy) {
    if (t.requires_grad(ai)) {
      Tensor& g = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& g = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * gy[i];
    }
  });
}
}  // namespace

Var add(Var a, Var b) { return add_scaled("add", a, b, 1.0); }
Var sub(Var a, Var b) { return add_scaled("sub", a, b, -1.0); }

Var scale(Var x, double factor) {
  const Tensor& v = x.value();
  Tensor y(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = factor * v[i];
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x}, [xi, factor](Tape& t, const Tensor& gy) {
    Tensor& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * gy[i];
  });
}

// ---------------------------------------------------------------------------

Var maxpool2x2(Var x) {
  const Tensor& v = x.value();
  require_rank("maxpool2x2", "input", v, 4);
  const std::size_t planes = v.dim(0) * v.dim(1), h = v.dim(2), w = v.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) shape_fail("maxpool2x2", "spatial extent below 2: " + to_string(v.shape()));
  Tensor y({v.dim(0), v.dim(1), oh, ow});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = v.ptr() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * oy + dy) * w + 2 * ox + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        y[o] = src[best];
        argmax[o] = p * h * w + best;
      }
    }
  }
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x},
                           [xi, argmax = std::move(argmax)](Tape& t, const Tensor& gy) {
                             Tensor& g = t.grad(xi);
                             for (std::size_t o = 0; o < gy.size(); ++o) g[argmax[o]] += gy[o];
                           });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& v = x.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank("linear", "input", v, 2);
  require_rank("linear", "weight", w, 2);
  if (w.dim(1) != v.dim(1)) {
    shape_fail("linear", "input width " + std::to_string(v.dim(1)) + " does not match weight " +
                             to_string(w.shape()));
  }
  if (b.shape() != Shape{w.dim(0)}) shape_fail("linear", "bias must be [" + std::to_string(w.dim(0)) + "]");
  const std::size_t batch = v.dim(0), in = v.dim(1), out = w.dim(0);
  Tensor y({batch, out});
  MatMap ym(y.ptr(), batch, out);
  ym.noalias() = ConstMatMap(v.ptr(), batch, in) * ConstMatMap(w.ptr(), out, in).transpose();
  ym.rowwise() += ConstVecMap(b.ptr(), out).transpose();
  const auto xi = x.id(), wi = weight.id(), bi = bias.id();
  return tape_of(x).record(
      std::move(y), {x, weight, bias}, [xi, wi, bi, batch, in, out](Tape& t, const Tensor& gy) {
        ConstMatMap g(gy.ptr(), batch, out);
        if (t.requires_grad(xi)) {
          MatMap(t.grad(xi).ptr(), batch, in).noalias() +=
              g * ConstMatMap(t.value(wi).ptr(), out, in);
        }
        if (t.requires_grad(wi)) {
          MatMap(t.grad(wi).ptr(), out, in).noalias() +=
              g.transpose() * ConstMatMap(t.value(xi).ptr(), batch, in);
        }
        if (t.requires_grad(bi)) {
          VecMap(t.grad(bi).ptr(), out) += g.colwise().sum().transpose();
        }
      });
}

Var matmul(Var a, Var b, bool transpose_b) {
  const Tensor& u = a.value();
  const Tensor& v = b.value();
  if (u.rank() != v.rank() || (u.rank() != 2 && u.rank() != 3)) {
    shape_fail("matmul", "operands must both be rank 2 or rank 3, got " + to_string(u.shape()) +
                             " and " + to_string(v.shape()));
  }
  const bool batched = u.rank() == 3;
  const std::size_t batch = batched ? u.dim(0) : 1;
  if (batched && v.dim(0) != batch) {
    shape_fail("matmul", "batch sizes differ, " + to_string(u.shape()) + " vs " + to_string(v.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const std::size_t m = u.dim(off), k = u.dim(off + 1);
  const std::size_t vk = transpose_b ? v.dim(off + 1) : v.dim(off);
  const std::size_t n = transpose_b ? v.dim(off) : v.dim(off + 1);
  if (vk != k) {
    shape_fail("matmul", "inner dimensions differ, " + to_string(u.shape()) + " x " +
                             to_string(v.shape()) + (transpose_b ? "^T" : ""));
  }
  Tensor y(batched ? Shape{batch, m, n} : Shape{m, n});
  for (std::size_t p = 0; p < batch; ++p) {
    ConstMatMap am(u.ptr() + p * m * k, m, k);
    MatMap ym(y.ptr() + p * m * n, m, n);
    if (transpose_b) {
      ym.noalias() = am * ConstMatMap(v.ptr() + p * n * k, n, k).transpose();
    } else {
      ym.noalias() = am * ConstMatMap(v.ptr() + p * k * n, k, n);
    }
  }
  const auto ai = a.id(), bi = b.id();
  return tape_of(a).record(
      std::move(y), {a, b}, [ai, bi, batch, m, k, n, transpose_b](Tape& t, const Tensor& gy) {
        const Tensor& u = t.value(ai);
        const Tensor& v = t.value(bi);
        const bool need_a = t.requires_grad(ai), need_b = t.requires_grad(bi);
        for (std::size_t p = 0; p < batch; ++p) {
          ConstMatMap g(gy.ptr() + p * m * n, m, n);
          if (need_a) {
            MatMap ga(t.grad(ai).ptr() + p * m * k, m, k);
            if (transpose_b) {
              ga.noalias() += g * ConstMatMap(v.ptr() + p * n * k, n, k);
            } else {
              ga.noalias() += g * ConstMatMap(v.ptr() + p * k * n, k, n).transpose();
            }
          }
          if (need_b) {
            ConstMatMap am(u.ptr() + p * m * k, m, k);
            if (transpose_b) {
              MatMap(t.grad(bi).ptr() + p * n * k, n, k).noalias() += g.transpose() * am;
            } else {
              MatMap(t.grad(bi).ptr() + p * k * n, k, n).noalias() += am.transpose() * g;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// reductions

Var sum_axis(Var x, std::size_t axis) {
  const Tensor& v = x.value();
  if (axis >= v.rank()) {
    shape_fail("sum_axis", "axis " + std::to_string(axis) + " out of range for " + to_string(v.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= v.dim(i);
  for (std::size_t i = axis + 1; i < v.rank(); ++i) inner *= v.dim(i);
  const std::size_t len = v.dim(axis);
  Shape out_shape;
  for (std::size_t i = 0; i < v.rank(); ++i) {
    if (i != axis) out_shape.push_back(v.dim(i));
  }
  if (out_shape.empty()) out_shape = {1};
  Tensor y(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = v.ptr() + (o * len + l) * inner;
      double* dst = y.ptr() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x}, [xi, outer, len, inner](Tape& t, const Tensor& gy) {
    Tensor& g = t.grad(xi);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t l = 0; l < len; ++l) {
        double* dst = g.ptr() + (o * len + l) * inner;
        const double* src = gy.ptr() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var sum(Var x) {
  const Tensor& v = x.value();
  double s = 0.0;
  for (double e : v.data()) s += e;
  const auto xi = x.id();
  return tape_of(x).record(Tensor::scalar(s), {x}, [xi](Tape& t, const Tensor& gy) {
    Tensor& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[0];
  });
}

Var mse(Var a, Var b) {
  const Tensor& u = a.value();
  const Tensor& v = b.value();
  require_same("mse", u, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  const double count = static_cast<double>(u.size());
  const auto ai = a.id(), bi = b.id();
  return tape_of(a).record(Tensor::scalar(s / count), {a, b},
                           [ai, bi, count](Tape& t, const Tensor& gy) {
                             const Tensor& u = t.value(ai);
                             const Tensor& v = t.value(bi);
                             const double k = 2.0 * gy[0] / count;
                             if (t.requires_grad(ai)) {
                               Tensor& g = t.grad(ai);
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (u[i] - v[i]);
                             }
                             if (t.requires_grad(bi)) {
                               Tensor& g = t.grad(bi);
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (u[i] - v[i]);
                             }
                           });
}

// ---------------------------------------------------------------------------
// layout

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x}, [xi](Tape& t, const Tensor& gy) {
    Tensor& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
  });
}

Var gather(Var x, const std::vector<std::size_t>& rows) {
  const Tensor& v = x.value();
  if (rows.empty()) shape_fail("gather", "empty row list");
  const std::size_t stride = v.size() / v.dim(0);
  for (auto r : rows) {
    if (r >= v.dim(0)) {
      shape_fail("gather", "row " + std::to_string(r) + " out of range for " + to_string(v.shape()));
    }
  }
  Shape shape = v.shape();
  shape[0] = rows.size();
  Tensor y(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(v.ptr() + rows[i] * stride, stride, y.ptr() + i * stride);
  }
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x}, [xi, rows, stride](Tape& t, const Tensor& gy) {
    Tensor& g = t.grad(xi);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double* dst = g.ptr() + rows[i] * stride;
      const double* src = gy.ptr() + i * stride;
      for (std::size_t k = 0; k < stride; ++k) dst[k] += src[k];
    }
  });
}

Var concat_channels(Var a, Var b) {
  const Tensor& u = a.value();
  const Tensor& v = b.value();
  require_rank("concat_channels", "first operand", u, 3);
  require_rank("concat_channels", "second operand", v, 3);
  if (u.dim(0) != v.dim(0) || u.dim(2) != v.dim(2)) {
    shape_fail("concat_channels", "incompatible " + to_string(u.shape()) + " and " + to_string(v.shape()));
  }
  const std::size_t batch = u.dim(0), ca = u.dim(1), cb = v.dim(1), len = u.dim(2);
  Tensor y({batch, ca + cb, len});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(u.ptr() + n * ca * len, ca * len, y.ptr() + n * (ca + cb) * len);
    std::copy_n(v.ptr() + n * cb * len, cb * len, y.ptr() + (n * (ca + cb) + ca) * len);
  }
  const auto ai = a.id(), bi = b.id();
  return tape_of(a).record(std::move(y), {a, b}, [ai, bi, batch, ca, cb, len](Tape& t, const Tensor& gy) {
    for (std::size_t n = 0; n < batch; ++n) {
      const double* src = gy.ptr() + n * (ca + cb) * len;
      if (t.requires_grad(ai)) {
        double* dst = t.grad(ai).ptr() + n * ca * len;
        for (std::size_t k = 0; k < ca * len; ++k) dst[k] += src[k];
      }
      if (t.requires_grad(bi)) {
        double* dst = t.grad(bi).ptr() + n * cb * len;
        for (std::size_t k = 0; k < cb * len; ++k) dst[k] += src[ca * len + k];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// bilinear building blocks

Var project_channels(Var x, Var proj) {
  const Tensor& v = x.value();
  const Tensor& p = proj.value();
  require_rank("project_channels", "input", v, 3);
  require_rank("project_channels", "projection", p, 2);
  if (p.dim(0) != v.dim(1)) {
    shape_fail("project_channels", "input has " + std::to_string(v.dim(1)) +
                                       " channels but projection is " + to_string(p.shape()));
  }
  const std::size_t batch = v.dim(0), c = v.dim(1), len = v.dim(2), n = p.dim(1);
  Tensor y({batch, n, len});
  ConstMatMap pm(p.ptr(), c, n);
  for (std::size_t b = 0; b < batch; ++b) {
    MatMap(y.ptr() + b * n * len, n, len).noalias() =
        pm.transpose() * ConstMatMap(v.ptr() + b * c * len, c, len);
  }
  const auto xi = x.id(), pi = proj.id();
  return tape_of(x).record(std::move(y), {x, proj}, [xi, pi, batch, c, len, n](Tape& t, const Tensor& gy) {
    const Tensor& v = t.value(xi);
    const Tensor& p = t.value(pi);
    for (std::size_t b = 0; b < batch; ++b) {
      ConstMatMap g(gy.ptr() + b * n * len, n, len);
      if (t.requires_grad(pi)) {
        MatMap(t.grad(pi).ptr(), c, n).noalias() +=
            ConstMatMap(v.ptr() + b * c * len, c, len) * g.transpose();
      }
      if (t.requires_grad(xi)) {
        MatMap(t.grad(xi).ptr() + b * c * len, c, len).noalias() += ConstMatMap(p.ptr(), c, n) * g;
      }
    }
  });
}

Var bilinear_form(Var a, Var w, Var b) {
  const Tensor& u = a.value();
  const Tensor& wm = w.value();
  const Tensor& v = b.value();
  require_rank("bilinear_form", "left operand", u, 3);
  require_same("bilinear_form", u, v);
  require_rank("bilinear_form", "projections", wm, 3);
  if (wm.dim(1) != u.dim(1) || wm.dim(2) != u.dim(1)) {
    shape_fail("bilinear_form", "projections " + to_string(wm.shape()) + " do not match " +
                                    std::to_string(u.dim(1)) + " channels");
  }
  const std::size_t pairs = u.dim(0), c = u.dim(1), len = u.dim(2), n = wm.dim(0);
  Tensor y({pairs, n, len});
  RowMat wb(n * c, len);
  ConstMatMap wstack(wm.ptr(), n * c, c);
  for (std::size_t p = 0; p < pairs; ++p) {
    wb.noalias() = wstack * ConstMatMap(v.ptr() + p * c * len, c, len);
    const double* ap = u.ptr() + p * c * len;
    double* yp = y.ptr() + p * n * len;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* row = wb.data() + (i * c + ch) * len;
        const double* arow = ap + ch * len;
        for (std::size_t j = 0; j < len; ++j) yp[i * len + j] += arow[j] * row[j];
      }
    }
  }
  const auto ai = a.id(), wi = w.id(), bi = b.id();
  return tape_of(a).record(
      std::move(y), {a, w, b}, [ai, wi, bi, pairs, c, len, n](Tape& t, const Tensor& gy) {
        const Tensor& u = t.value(ai);
        const Tensor& wm = t.value(wi);
        const Tensor& v = t.value(bi);
        const bool need_a = t.requires_grad(ai), need_w = t.requires_grad(wi),
                   need_b = t.requires_grad(bi);
        ConstMatMap wstack(wm.ptr(), n * c, c);
        RowMat wb(n * c, len), dwb(n * c, len);
        for (std::size_t p = 0; p < pairs; ++p) {
          const double* ap = u.ptr() + p * c * len;
          const double* gp = gy.ptr() + p * n * len;
          ConstMatMap bp(v.ptr() + p * c * len, c, len);
          if (need_a) {
            wb.noalias() = wstack * bp;
            double* ga = t.grad(ai).ptr() + p * c * len;
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t ch = 0; ch < c; ++ch) {
                const double* row = wb.data() + (i * c + ch) * len;
                for (std::size_t j = 0; j < len; ++j) ga[ch * len + j] += gp[i * len + j] * row[j];
              }
            }
          }
          if (!need_w && !need_b) continue;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              double* row = dwb.data() + (i * c + ch) * len;
              for (std::size_t j = 0; j < len; ++j) row[j] = gp[i * len + j] * ap[ch * len + j];
            }
          }
          if (need_w) {
            MatMap(t.grad(wi).ptr(), n * c, c).noalias() += dwb * bp.transpose();
          }
          if (need_b) {
            MatMap(t.grad(bi).ptr() + p * c * len, c, len).noalias() += wstack.transpose() * dwb;
          }
        }
      });
}

Var paired_hadamard_mean(Var a, Var b) {
  const Tensor& u = a.value();
  const Tensor& v = b.value();
  require_rank("paired_hadamard_mean", "left operand", u, 3);
  require_rank("paired_hadamard_mean", "right operand", v, 3);
  if (u.dim(1) != v.dim(1) || u.dim(2) != v.dim(2)) {
    shape_fail("paired_hadamard_mean", "incompatible " + to_string(u.shape()) + " and " + to_string(v.shape()));
  }
  const std::size_t m = u.dim(0), k = v.dim(0), n = u.dim(1), len = u.dim(2);
  const double inv = 1.0 / static_cast<double>(len);
  Tensor y({m * k, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double* out = y.ptr() + (i * k + j) * n;
      for (std::size_t r = 0; r < n; ++r) {
        const double* ar = u.ptr() + (i * n + r) * len;
        const double* br = v.ptr() + (j * n + r) * len;
        double s = 0.0;
        for (std::size_t l = 0; l < len; ++l) s += ar[l] * br[l];
        out[r] = s * inv;
      }
    }
  }
  const auto ai = a.id(), bi = b.id();
  return tape_of(a).record(std::move(y), {a, b}, [ai, bi, m, k, n, len, inv](Tape& t, const Tensor& gy) {
    const Tensor& u = t.value(ai);
    const Tensor& v = t.value(bi);
    const bool need_a = t.requires_grad(ai), need_b = t.requires_grad(bi);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double* g = gy.ptr() + (i * k + j) * n;
        for (std::size_t r = 0; r < n; ++r) {
          const double w = g[r] * inv;
          if (w == 0.0) continue;
          const double* ar = u.ptr() + (i * n + r) * len;
          const double* br = v.ptr() + (j * n + r) * len;
          if (need_a) {
            double* ga = t.grad(ai).ptr() + (i * n + r) * len;
            for (std::size_t l = 0; l < len; ++l) ga[l] += w * br[l];
          }
          if (need_b) {
            double* gb = t.grad(bi).ptr() + (j * n + r) * len;
            for (std::size_t l = 0; l < len; ++l) gb[l] += w * ar[l];
          }
        }
      }
    }
  });
}

Var signed_sqrt(Var x) {
  const Tensor& v = x.value();
  Tensor y(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double r = std::sqrt(std::abs(v[i]));
    y[i] = v[i] < 0.0 ? -r : r;
  }
  const auto xi = x.id();
  return tape_of(x).record(std::move(y), {x}, [xi](Tape& t, const Tensor& gy) {
    const Tensor& s = t.output();
    Tensor& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = std::abs(s[i]);
      if (r > 0.0) g[i] += gy[i] * 0.5 / r;
    }
  });
}

Var l2_normalize_rows(Var x) {
  const Tensor& v = x.value();
  require_rank("l2_normalize_rows", "input", v, 2);
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  Tensor y(v.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double nrm = l2_norm(std::span<const double>(v.ptr() + r * cols, cols));
    norms[r] = nrm;
    for (std::size_t k = 0; k < cols; ++k) {
      y[r * cols + k] = nrm > 0.0 ? v[r * cols + k] / nrm : v[r * cols + k];
    }
  }
  const auto xi = x.id();
  return tape_of(x).record(
      std::move(y), {x}, [xi, rows, cols, norms = std::move(norms)](Tape& t, const Tensor& gy) {
        const Tensor& v = t.value(xi);
        Tensor& g = t.grad(xi);
        for (std::size_t r = 0; r < rows; ++r) {
          const double nrm = norms[r];
          if (nrm == 0.0) continue;
          double dot = 0.0;
          for (std::size_t k = 0; k < cols; ++k) dot += gy[r * cols + k] * v[r * cols + k] / nrm;
          for (std::size_t k = 0; k < cols; ++k) {
            const double yk = v[r * cols + k] / nrm;
            g[r * cols + k] += (gy[r * cols + k] - yk * dot) / nrm;
          }
        }
      });
}

Var row_cosine(Var a, Var b) {
  const Tensor& u = a.value();
  const Tensor& v = b.value();
  require_rank("row_cosine", "first operand", u, 2);
  require_same("row_cosine", u, v);
  const std::size_t rows = u.dim(0), cols = u.dim(1);
  Tensor y({rows});
  std::vector<double> nu(rows), nv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    nu[r] = l2_norm(std::span<const double>(u.ptr() + r * cols, cols));
    nv[r] = l2_norm(std::span<const double>(v.ptr() + r * cols, cols));
    if (nu[r] == 0.0 || nv[r] == 0.0) {
      throw NumericError("row_cosine: cosine similarity undefined for a zero vector (row " +
                         std::to_string(r) + ")");
    }
    double dot = 0.0;
    for (std::size_t k = 0; k < cols; ++k) dot += u[r * cols + k] * v[r * cols + k];
    y[r] = dot / (nu[r] * nv[r]);
  }
  const auto ai = a.id(), bi = b.id();
  Tensor cosines = y;
  return tape_of(a).record(
      std::move(y), {a, b},
      [ai, bi, rows, cols, nu = std::move(nu), nv = std::move(nv),
       cosines = std::move(cosines)](Tape& t, const Tensor& gy) {
        const Tensor& u = t.value(ai);
        const Tensor& v = t.value(bi);
        for (std::size_t r = 0; r < rows; ++r) {
          const double cs = cosines[r];
          const double k = gy[r];
          if (t.requires_grad(ai)) {
            double* g = t.grad(ai).ptr() + r * cols;
            for (std::size_t i = 0; i < cols; ++i) {
              g[i] += k * (v[r * cols + i] / (nu[r] * nv[r]) - cs * u[r * cols + i] / (nu[r] * nu[r]));
            }
          }
          if (t.requires_grad(bi)) {
            double* g = t.grad(bi).ptr() + r * cols;
            for (std::size_t i = 0; i < cols; ++i) {
              g[i] += k * (u[r * cols + i] / (nu[r] * nv[r]) - cs * v[r * cols + i] / (nv[r] * nv[r]));
            }
          }
        }
      });
}

}  // namespace lrpabn::ops
