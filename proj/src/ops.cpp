#include "darn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "darn/errors.hpp"

namespace darn::ops {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Creates the output node; records inputs only if some input needs a gradient.
std::shared_ptr<Node> make_output(Shape shape, std::vector<double> value,
                                  std::initializer_list<const Tensor*> inputs) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  if (grad_enabled()) {
    for (const Tensor* t : inputs) {
      if (t->requires_grad()) out->requires_grad = true;
    }
    if (out->requires_grad) {
      for (const Tensor* t : inputs) out->inputs.push_back(t->node());
    }
  }
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

// Unary elementwise op given value map and derivative (in terms of x and y).
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  std::vector<double> y(a.numel());
  const auto x = a.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  auto out = make_output(a.shape(), std::move(y), {&a});
  if (out->requires_grad) {
    out->backward = [dfdx](Node& self) {
      Node& in = *self.inputs[0];
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
    };
  }
  return Tensor(out);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  auto out = make_output(a.shape(), std::move(y), {&a, &b});
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      for (auto& in : self.inputs) {
        if (!in->requires_grad) continue;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] - b.values()[i];
  auto out = make_output(a.shape(), std::move(y), {&a, &b});
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      if (self.inputs[0]->requires_grad) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (self.inputs[1]->requires_grad) {
        auto& g = self.inputs[1]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  auto out = make_output(a.shape(), std::move(y), {&a, &b});
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& x = *self.inputs[0];
      Node& z = *self.inputs[1];
      if (x.requires_grad) {
        auto& g = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * z.value[i];
      }
      if (z.requires_grad) {
        auto& g = z.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
      }
    };
  }
  return Tensor(out);
}

Tensor div(const Tensor& a, const Tensor& b, double floor) {
  require_same_shape(a, b, "div");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = b.values()[i];
    if (!(d >= floor)) {
      throw NumericError("div: denominator " + std::to_string(d) + " below floor " + std::to_string(floor));
    }
    y[i] = a.values()[i] / d;
  }
  auto out = make_output(a.shape(), std::move(y), {&a, &b});
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& num = *self.inputs[0];
      Node& den = *self.inputs[1];
      if (num.requires_grad) {
        auto& g = num.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / den.value[i];
      }
      if (den.requires_grad) {
        auto& g = den.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] -= self.grad[i] * num.value[i] / (den.value[i] * den.value[i]);
        }
      }
    };
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamped_log(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus_shifted(const Tensor& a, double shift) {
  return unary(
      a, [shift](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) + shift; },
      [](double x, double) { return stable_sigmoid(x); });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != Cin) {
    throw ShapeError("conv2d: input has " + std::to_string(Cin) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (bias.shape() != Shape{Cout}) throw ShapeError("conv2d: bias must have shape [Cout]");
  if (H + 2 * padding < kh || W + 2 * padding < kw) throw ShapeError("conv2d: kernel larger than padded input");
  const std::size_t Ho = H + 2 * padding - kh + 1, Wo = W + 2 * padding - kw + 1;
  const std::size_t K = Cin * kh * kw, P = Ho * Wo;

  // im2col for one batch item into `cols` ([K, P] row-major).
  auto im2col = [=](const double* x, std::vector<double>& cols) {
    cols.assign(K * P, 0.0);
    for (std::size_t c = 0; c < Cin; ++c) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          double* row = cols.data() + ((c * kh + ky) * kw + kx) * P;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy + ky) - static_cast<long>(padding);
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            const double* src = x + (c * H + iy) * W;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox + kx) - static_cast<long>(padding);
              if (ix >= 0 && ix < static_cast<long>(W)) row[oy * Wo + ox] = src[ix];
            }
          }
        }
      }
    }
  };

  std::vector<double> y(B * Cout * P);
  std::vector<double> cols;
  ConstMapMat kmat(kernel.values().data(), Cout, K);
  for (std::size_t b = 0; b < B; ++b) {
    im2col(input.values().data() + b * Cin * H * W, cols);
    MapMat out(y.data() + b * Cout * P, Cout, P);
    out.noalias() = kmat * ConstMapMat(cols.data(), K, P);
    for (std::size_t o = 0; o < Cout; ++o) out.row(o).array() += bias.values()[o];
  }

  auto out = make_output({B, Cout, Ho, Wo}, std::move(y), {&input, &kernel, &bias});
  if (out->requires_grad) {
    out->backward = [=](Node& self) {
      Node& x = *self.inputs[0];
      Node& k = *self.inputs[1];
      Node& bs = *self.inputs[2];
      std::vector<double> cols_b;
      std::vector<double> dcols(K * P);
      for (std::size_t b = 0; b < B; ++b) {
        ConstMapMat gout(self.grad.data() + b * Cout * P, Cout, P);
        if (k.requires_grad) {
          im2col(x.value.data() + b * Cin * H * W, cols_b);
          MapMat(k.ensure_grad().data(), Cout, K).noalias() += gout * ConstMapMat(cols_b.data(), K, P).transpose();
        }
        if (bs.requires_grad) {
          auto& gb = bs.ensure_grad();
          for (std::size_t o = 0; o < Cout; ++o) gb[o] += gout.row(o).sum();
        }
        if (x.requires_grad) {
          MapMat(dcols.data(), K, P).noalias() = ConstMapMat(k.value.data(), Cout, K).transpose() * gout;
          double* gx = x.ensure_grad().data() + b * Cin * H * W;
          for (std::size_t c = 0; c < Cin; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* row = dcols.data() + ((c * kh + ky) * kw + kx) * P;
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                  const long iy = static_cast<long>(oy + ky) - static_cast<long>(padding);
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  double* dst = gx + (c * H + iy) * W;
                  for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const long ix = static_cast<long>(ox + kx) - static_cast<long>(padding);
                    if (ix >= 0 && ix < static_cast<long>(W)) dst[ix] += row[oy * Wo + ox];
                  }
                }
              }
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

BatchNormStats BatchNormStats::fresh(std::size_t channels) {
  return BatchNormStats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0), false};
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, NormMode mode,
                  BatchNormStats& stats, const BatchNormOptions& options) {
  require_rank(input, 4, "batch_norm");
  const std::size_t B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw ShapeError("batch_norm: gamma/beta must have shape [" + std::to_string(C) + "]");
  }
  if (stats.mean.size() != C || stats.var.size() != C) throw ShapeError("batch_norm: running stats size mismatch");
  const std::size_t count = B * HW;
  const auto x = input.values();

  std::vector<double> mu(C), inv_std(C);
  if (mode == NormMode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      mu[c] = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) v += (p[i] - mu[c]) * (p[i] - mu[c]);
      }
      const double var = v / static_cast<double>(count);
      inv_std[c] = 1.0 / std::sqrt(var + options.epsilon);
      if (options.update_running) {
        const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : var;
        if (stats.initialized) {
          stats.mean[c] = options.momentum * stats.mean[c] + (1.0 - options.momentum) * mu[c];
          stats.var[c] = options.momentum * stats.var[c] + (1.0 - options.momentum) * unbiased;
        } else {
          stats.mean[c] = mu[c];
          stats.var[c] = unbiased;
        }
      }
    }
    if (options.update_running) stats.initialized = true;
  } else {
    if (!stats.initialized) throw NumericError("batch_norm: eval mode before running statistics were initialized");
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + options.epsilon);
    }
  }

  std::vector<double> xhat(x.size());
  std::vector<double> y(x.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (b * C + c) * HW;
      const double g = gamma.values()[c], bt = beta.values()[c];
      for (std::size_t i = 0; i < HW; ++i) {
        xhat[off + i] = (x[off + i] - mu[c]) * inv_std[c];
        y[off + i] = g * xhat[off + i] + bt;
      }
    }
  }

  auto out = make_output(input.shape(), std::move(y), {&input, &gamma, &beta});
  if (out->requires_grad) {
    const bool train = mode == NormMode::train;
    out->backward = [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
      Node& in = *self.inputs[0];
      Node& gm = *self.inputs[1];
      Node& bt = *self.inputs[2];
      for (std::size_t c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            sum_g += self.grad[off + i];
            sum_gx += self.grad[off + i] * xhat[off + i];
          }
        }
        if (gm.requires_grad) gm.ensure_grad()[c] += sum_gx;
        if (bt.requires_grad) bt.ensure_grad()[c] += sum_g;
        if (!in.requires_grad) continue;
        auto& gi = in.ensure_grad();
        const double g = gm.value[c];
        const double n = static_cast<double>(count);
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            const double dy = self.grad[off + i];
            if (train) {
              gi[off + i] += g * inv_std[c] * (dy - sum_g / n - xhat[off + i] * sum_gx / n);
            } else {
              gi[off + i] += g * inv_std[c] * dy;
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor max_pool2x2(const Tensor& input) {
  require_rank(input, 4, "max_pool2x2");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H < 2 || W < 2) throw ShapeError("max_pool2x2: window larger than input " + shape_string(input.shape()));
  const std::size_t Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  std::vector<double> y(B * C * Ho * Wo);
  std::vector<std::size_t> argmax(y.size());
  const auto x = input.values();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* plane = x.data() + bc * H * W;
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = 0;
        double best_v = 0.0;
        bool first = true;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            // Replication padding: out-of-range taps read the last row/column.
            const std::size_t iy = std::min(2 * oy + dy, H - 1), ix = std::min(2 * ox + dx, W - 1);
            const std::size_t idx = iy * W + ix;
            if (first || plane[idx] > best_v) {
              best = idx;
              best_v = plane[idx];
              first = false;
            }
          }
        }
        const std::size_t o = bc * Ho * Wo + oy * Wo + ox;
        y[o] = best_v;
        argmax[o] = bc * H * W + best;
      }
    }
  }
  auto out = make_output({B, C, Ho, Wo}, std::move(y), {&input});
  if (out->requires_grad) {
    out->backward = [argmax = std::move(argmax)](Node& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
    };
  }
  return Tensor(out);
}

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "affine");
  require_rank(weight, 2, "affine weight");
  const std::size_t B = input.dim(0), D = input.dim(1), K = weight.dim(1);
  if (weight.dim(0) != D) {
    throw ShapeError("affine: input width " + std::to_string(D) + " does not match weight rows " +
                     std::to_string(weight.dim(0)));
  }
  if (bias.shape() != Shape{K}) throw ShapeError("affine: bias must have shape [K]");
  std::vector<double> y(B * K);
  MapMat ym(y.data(), B, K);
  ym.noalias() = ConstMapMat(input.values().data(), B, D) * ConstMapMat(weight.values().data(), D, K);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) y[b * K + k] += bias.values()[k];
  }
  auto out = make_output({B, K}, std::move(y), {&input, &weight, &bias});
  if (out->requires_grad) {
    out->backward = [B, D, K](Node& self) {
      Node& x = *self.inputs[0];
      Node& w = *self.inputs[1];
      Node& bs = *self.inputs[2];
      ConstMapMat gout(self.grad.data(), B, K);
      if (x.requires_grad) {
        MapMat(x.ensure_grad().data(), B, D).noalias() += gout * ConstMapMat(w.value.data(), D, K).transpose();
      }
      if (w.requires_grad) {
        MapMat(w.ensure_grad().data(), D, K).noalias() += ConstMapMat(x.value.data(), B, D).transpose() * gout;
      }
      if (bs.requires_grad) {
        auto& gb = bs.ensure_grad();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t k = 0; k < K; ++k) gb[k] += self.grad[b * K + k];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw ShapeError("reshape: " + shape_string(input.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> y(input.values().begin(), input.values().end());
  auto out = make_output(std::move(shape), std::move(y), {&input});
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor flatten(const Tensor& input) {
  if (input.shape().empty()) throw ShapeError("flatten: scalar input");
  const std::size_t b = input.dim(0);
  return reshape(input, {b, b == 0 ? 0 : input.numel() / b});
}

Tensor sum(const Tensor& input) {
  double s = 0.0;
  for (double v : input.values()) s += v;
  auto out = make_output({1}, {s}, {&input});
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (double& v : g) v += self.grad[0];
    };
  }
  return Tensor(out);
}

Tensor mean(const Tensor& input) {
  if (input.numel() == 0) throw ShapeError("mean of empty tensor");
  const double n = static_cast<double>(input.numel());
  double s = 0.0;
  for (double v : input.values()) s += v;
  auto out = make_output({1}, {s / n}, {&input});
  if (out->requires_grad) {
    out->backward = [n](Node& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (double& v : g) v += self.grad[0] / n;
    };
  }
  return Tensor(out);
}

Tensor forward_diff(const Tensor& input, std::size_t axis) {
  require_rank(input, 4, "forward_diff");
  if (axis != 2 && axis != 3) throw ShapeError("forward_diff: axis must be 2 (height) or 3 (width)");
  const std::size_t planes = input.dim(0) * input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t step = axis == 3 ? 1 : W;
  auto inside = [=](std::size_t y, std::size_t x) { return axis == 3 ? x + 1 < W : y + 1 < H; };
  const auto v = input.values();
  std::vector<double> d(v.size(), 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t i = (p * H + y) * W + x;
        if (inside(y, x)) d[i] = v[i + step] - v[i];
      }
    }
  }
  auto out = make_output(input.shape(), std::move(d), {&input});
  if (out->requires_grad) {
    out->backward = [=](Node& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t x = 0; x < W; ++x) {
            const std::size_t i = (p * H + y) * W + x;
            if (!inside(y, x)) continue;
            g[i + step] += self.grad[i];
            g[i] -= self.grad[i];
          }
        }
      }
    };
  }
  return Tensor(out);
}

}  // namespace darn::ops
