// SPDX-License-Identifier: Apache-2.0
#include "s2ag/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "s2ag/error.hpp"

namespace s2ag::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

ConstMapMat as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMapMat(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MapMat as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapMat(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

void require_same(Var a, Var b, const char* op) {
  require(a.shape() == b.shape(), op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename F, typename DF>
Var unary(const char* op, Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return x.graph().emit(op, std::move(y), {x}, [df](Graph& g, std::size_t self) {
    const std::size_t xi = g.parent(self, 0);
    Tensor* gx = g.grad(xi);
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    const Tensor& xv = g.value(xi);
    const Tensor& yv = g.value(self);
    for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * df(xv[i], yv[i]);
  });
}

void accumulate(Tensor* dst, const Tensor& src, double c = 1.0) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += c * src[i];
}

}  // namespace

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return a.graph().emit("add", std::move(y), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& gy = *g.grad(self);
    accumulate(g.grad(g.parent(self, 0)), gy);
    accumulate(g.grad(g.parent(self, 1)), gy);
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return a.graph().emit("sub", std::move(y), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& gy = *g.grad(self);
    accumulate(g.grad(g.parent(self, 0)), gy);
    accumulate(g.grad(g.parent(self, 1)), gy, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return a.graph().emit("mul", std::move(y), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& gy = *g.grad(self);
    const std::size_t ai = g.parent(self, 0), bi = g.parent(self, 1);
    if (Tensor* ga = g.grad(ai)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * g.value(bi)[i];
    }
    if (Tensor* gb = g.grad(bi)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] += gy[i] * g.value(ai)[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same(a, b, "div");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] / b.value()[i];
  return a.graph().emit("div", std::move(y), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& gy = *g.grad(self);
    const std::size_t ai = g.parent(self, 0), bi = g.parent(self, 1);
    const Tensor& bv = g.value(bi);
    if (Tensor* ga = g.grad(ai)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] / bv[i];
    }
    if (Tensor* gb = g.grad(bi)) {
      const Tensor& yv = g.value(self);
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] -= gy[i] * yv[i] / bv[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var abs(Var x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var huber(Var x, double delta) {
  return unary(
      "huber", x,
      [delta](double e) {
        const double a = std::abs(e);
        return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
      },
      [delta](double e, double) { return std::abs(e) <= delta ? e : (e > 0.0 ? delta : -delta); });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.graph().emit("sum", Tensor({1}, {s}), {x}, [](Graph& g, std::size_t self) {
    Tensor* gx = g.grad(g.parent(self, 0));
    if (!gx) return;
    const double gy = (*g.grad(self))[0];
    for (double& v : gx->values()) v += gy;
  });
}

Var mean(Var x) {
  require(x.value().size() > 0, "mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var sum_per_item(Var x) {
  require(x.shape().size() >= 1, "sum_per_item", "needs rank >= 1");
  const std::size_t items = x.dim(0);
  const std::size_t inner = x.value().size() / std::max<std::size_t>(items, 1);
  Tensor y({items});
  for (std::size_t b = 0; b < items; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) s += x.value()[b * inner + i];
    y[b] = s;
  }
  return x.graph().emit("sum_per_item", std::move(y), {x}, [items, inner](Graph& g, std::size_t self) {
    Tensor* gx = g.grad(g.parent(self, 0));
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    for (std::size_t b = 0; b < items; ++b) {
      for (std::size_t i = 0; i < inner; ++i) (*gx)[b * inner + i] += gy[b];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.graph().emit("reshape", std::move(y), {x}, [](Graph& g, std::size_t self) {
    accumulate(g.grad(g.parent(self, 0)), *g.grad(self));
  });
}

Var concat_last(std::span<const Var> parts) {
  require(!parts.empty(), "concat_last", "no operands");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    Shape l(p.shape().begin(), p.shape().end() - 1);
    require(l == lead, "concat_last", "leading dims " + shape_str(l) + " vs " + shape_str(lead));
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = shape_size(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor y(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * widths[k], widths[k], y.data() + r * total + offset);
    }
    offset += widths[k];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].graph().emit(
      "concat_last", std::move(y), std::move(parents), [widths, rows, total](Graph& g, std::size_t self) {
        const Tensor& gy = *g.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (Tensor* gp = g.grad(g.parent(self, k))) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < widths[k]; ++c) (*gp)[r * widths[k] + c] += gy[r * total + offset + c];
            }
          }
          offset += widths[k];
        }
      });
}

Var repeat_time(Var x, std::size_t frames) {
  require(x.shape().size() == 2, "repeat_time", "expects [B, C], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), ch = x.dim(1);
  Tensor y({batch, frames, ch});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) std::copy_n(x.value().data() + b * ch, ch, y.data() + (b * frames + t) * ch);
  }
  return x.graph().emit("repeat_time", std::move(y), {x}, [batch, frames, ch](Graph& g, std::size_t self) {
    Tensor* gx = g.grad(g.parent(self, 0));
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < ch; ++c) (*gx)[b * ch + c] += gy[(b * frames + t) * ch + c];
      }
    }
  });
}

Var select_time(Var x, std::size_t t) {
  require(x.shape().size() == 3 && t < x.dim(1), "select_time", "bad shape or index for " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), frames = x.dim(1), ch = x.dim(2);
  Tensor y({batch, ch});
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(x.value().data() + (b * frames + t) * ch, ch, y.data() + b * ch);
  return x.graph().emit("select_time", std::move(y), {x}, [batch, frames, ch, t](Graph& g, std::size_t self) {
    Tensor* gx = g.grad(g.parent(self, 0));
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < ch; ++c) (*gx)[(b * frames + t) * ch + c] += gy[b * ch + c];
    }
  });
}

Var mean_time(Var x) {
  require(x.shape().size() == 3 && x.dim(1) > 0, "mean_time", "expects [B, T, C], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), frames = x.dim(1), ch = x.dim(2);
  Tensor y({batch, ch});
  const double inv = 1.0 / static_cast<double>(frames);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t c = 0; c < ch; ++c) y[b * ch + c] += inv * x.value()[(b * frames + t) * ch + c];
    }
  }
  return x.graph().emit("mean_time", std::move(y), {x}, [batch, frames, ch, inv](Graph& g, std::size_t self) {
    Tensor* gx = g.grad(g.parent(self, 0));
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < ch; ++c) (*gx)[(b * frames + t) * ch + c] += inv * gy[b * ch + c];
      }
    }
  });
}

Var gather_items(Var x, std::span<const std::size_t> order) {
  require(!x.shape().empty(), "gather_items", "needs rank >= 1");
  const std::size_t items = x.dim(0);
  const std::size_t inner = items ? x.value().size() / items : 0;
  std::vector<std::size_t> idx(order.begin(), order.end());
  Shape shape = x.shape();
  shape[0] = idx.size();
  Tensor y(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < items, "gather_items", "index out of range");
    std::copy_n(x.value().data() + idx[i] * inner, inner, y.data() + i * inner);
  }
  return x.graph().emit("gather_items", std::move(y), {x}, [idx, inner](Graph& g, std::size_t self) {
    Tensor* gx = g.grad(g.parent(self, 0));
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t k = 0; k < inner; ++k) (*gx)[idx[i] * inner + k] += gy[i * inner + k];
    }
  });
}

Var normalize_groups(Var x, std::size_t group, double eps) {
  require(group > 0 && x.value().size() % group == 0, "normalize_groups", "size not divisible by group");
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t k = 0; k < xv.size(); k += group) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < group; ++c) n2 += xv[k + c] * xv[k + c];
    const double s = std::sqrt(n2) + eps;
    for (std::size_t c = 0; c < group; ++c) y[k + c] = xv[k + c] / s;
  }
  return x.graph().emit("normalize_groups", std::move(y), {x}, [group, eps](Graph& g, std::size_t self) {
    const std::size_t xi = g.parent(self, 0);
    Tensor* gx = g.grad(xi);
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    const Tensor& xv = g.value(xi);
    for (std::size_t k = 0; k < xv.size(); k += group) {
      double n2 = 0.0, dot = 0.0;
      for (std::size_t c = 0; c < group; ++c) {
        n2 += xv[k + c] * xv[k + c];
        dot += xv[k + c] * gy[k + c];
      }
      const double n = std::sqrt(n2);
      const double s = n + eps;
      const double radial = n > 0.0 ? dot / (n * s * s) : 0.0;
      for (std::size_t c = 0; c < group; ++c) (*gx)[k + c] += gy[k + c] / s - xv[k + c] * radial;
    }
  });
}

Var detach(Var x) { return x.graph().constant(x.value()); }

Var linear(Var x, Var w, Var b) {
  require(w.shape().size() == 2, "linear", "weight must be [out, in]");
  require(!x.shape().empty() && x.shape().back() == w.dim(1), "linear",
          "input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  const bool has_bias = b.valid();
  if (has_bias) require(b.shape() == Shape{w.dim(0)}, "linear", "bias must be [out]");
  const std::size_t in = w.dim(1), out = w.dim(0);
  const std::size_t rows = x.value().size() / in;
  Shape shape = x.shape();
  shape.back() = out;
  Tensor y(shape);
  {
    auto Y = as_matrix(y, rows, out);
    Y.noalias() = as_matrix(x.value(), rows, in) * as_matrix(w.value(), out, in).transpose();
    if (has_bias) Y.rowwise() += ConstMapVec(b.value().data(), static_cast<Eigen::Index>(out)).transpose();
  }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return x.graph().emit("linear", std::move(y), std::move(parents), [rows, in, out, has_bias](Graph& g, std::size_t self) {
    const Tensor& gy = *g.grad(self);
    const auto GY = as_matrix(gy, rows, out);
    const std::size_t xi = g.parent(self, 0), wi = g.parent(self, 1);
    if (Tensor* gx = g.grad(xi)) as_matrix(*gx, rows, in).noalias() += GY * as_matrix(g.value(wi), out, in);
    if (Tensor* gw = g.grad(wi)) as_matrix(*gw, out, in).noalias() += GY.transpose() * as_matrix(g.value(xi), rows, in);
    if (has_bias) {
      if (Tensor* gb = g.grad(g.parent(self, 2))) {
        MapVec(gb->data(), static_cast<Eigen::Index>(out)) += GY.colwise().sum().transpose();
      }
    }
  });
}

Var linear(Var x, Var w) { return linear(x, w, Var()); }

Var conv1d(Var x, Var w, Var b, std::size_t stride, std::size_t padding) {
  const Shape& xs = x.shape();
  require(xs.size() == 3 || xs.size() == 4, "conv1d", "input must be [B, T, C] or [B, T, N, C]");
  require(w.shape().size() == 3, "conv1d", "weight must be [out, kernel, in]");
  require(stride >= 1, "conv1d", "stride must be >= 1");
  const std::size_t batch = xs[0], frames = xs[1];
  const std::size_t groups = xs.size() == 4 ? xs[2] : 1;
  const std::size_t cin = xs.back();
  const std::size_t cout = w.dim(0), kernel = w.dim(1);
  require(w.dim(2) == cin, "conv1d", "input channels " + std::to_string(cin) + " vs weight " + shape_str(w.shape()));
  require(frames + 2 * padding >= kernel, "conv1d", "kernel does not fit the padded length");
  const bool has_bias = b.valid();
  if (has_bias) require(b.shape() == Shape{cout}, "conv1d", "bias must be [out]");
  const std::size_t out_frames = (frames + 2 * padding - kernel) / stride + 1;
  const std::size_t rows = batch * out_frames * groups;
  const std::size_t width = kernel * cin;

  auto col = std::make_shared<Tensor>(Shape{rows, width});
  const Tensor& xv = x.value();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::ptrdiff_t src_t = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
        if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(frames)) continue;
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t r = (bi * out_frames + t) * groups + gi;
          const double* src = xv.data() + ((bi * frames + static_cast<std::size_t>(src_t)) * groups + gi) * cin;
          std::copy_n(src, cin, col->data() + r * width + k * cin);
        }
      }
    }
  }

  Shape out_shape = xs.size() == 4 ? Shape{batch, out_frames, groups, cout} : Shape{batch, out_frames, cout};
  Tensor y(out_shape);
  {
    auto Y = as_matrix(y, rows, cout);
    Y.noalias() = as_matrix(*col, rows, width) * as_matrix(w.value(), cout, width).transpose();
    if (has_bias) Y.rowwise() += ConstMapVec(b.value().data(), static_cast<Eigen::Index>(cout)).transpose();
  }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return x.graph().emit(
      "conv1d", std::move(y), std::move(parents),
      [col, batch, frames, groups, cin, cout, kernel, stride, padding, out_frames, rows, width, has_bias](
          Graph& g, std::size_t self) {
        const auto GY = as_matrix(*g.grad(self), rows, cout);
        const std::size_t xi = g.parent(self, 0), wi = g.parent(self, 1);
        if (Tensor* gw = g.grad(wi)) {
          as_matrix(*gw, cout, width).noalias() += GY.transpose() * as_matrix(*col, rows, width);
        }
        if (has_bias) {
          if (Tensor* gb = g.grad(g.parent(self, 2))) {
            MapVec(gb->data(), static_cast<Eigen::Index>(cout)) += GY.colwise().sum().transpose();
          }
        }
        if (Tensor* gx = g.grad(xi)) {
          RowMat gcol = GY * as_matrix(g.value(wi), cout, width);
          for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t t = 0; t < out_frames; ++t) {
              for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t src_t =
                    static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
                if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(frames)) continue;
                for (std::size_t gi = 0; gi < groups; ++gi) {
                  const std::size_t r = (bi * out_frames + t) * groups + gi;
                  double* dst = gx->data() + ((bi * frames + static_cast<std::size_t>(src_t)) * groups + gi) * cin;
                  const double* src = gcol.data() + r * width + k * cin;
                  for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
                }
              }
            }
          }
        }
      });
}

Var mix_axis(Var x, const Tensor& m, std::size_t axis) {
  const Shape& xs = x.shape();
  require(axis < xs.size(), "mix_axis", "axis out of range");
  require(m.rank() == 2 && m.dim(1) == xs[axis], "mix_axis",
          "matrix " + shape_str(m.shape()) + " does not match axis length " + std::to_string(xs[axis]));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  const std::size_t len_in = xs[axis], len_out = m.dim(0);
  Shape shape = xs;
  shape[axis] = len_out;
  Tensor y(shape);
  const auto M = as_matrix(m, len_out, len_in);
  for (std::size_t o = 0; o < outer; ++o) {
    MapMat(y.data() + o * len_out * inner, static_cast<Eigen::Index>(len_out), static_cast<Eigen::Index>(inner))
        .noalias() = M * ConstMapMat(x.value().data() + o * len_in * inner, static_cast<Eigen::Index>(len_in),
                                     static_cast<Eigen::Index>(inner));
  }
  auto mat = std::make_shared<Tensor>(m);
  return x.graph().emit("mix_axis", std::move(y), {x}, [mat, outer, inner, len_in, len_out](Graph& g, std::size_t self) {
    Tensor* gx = g.grad(g.parent(self, 0));
    if (!gx) return;
    const Tensor& gy = *g.grad(self);
    const auto M = as_matrix(*mat, len_out, len_in);
    for (std::size_t o = 0; o < outer; ++o) {
      MapMat(gx->data() + o * len_in * inner, static_cast<Eigen::Index>(len_in), static_cast<Eigen::Index>(inner))
          .noalias() += M.transpose() * ConstMapMat(gy.data() + o * len_out * inner, static_cast<Eigen::Index>(len_out),
                                                    static_cast<Eigen::Index>(inner));
    }
  });
}

Tensor normalized_adjacency(const Tensor& adjacency) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "adjacency must be square, got " + shape_str(adjacency.shape()));
  }
  const std::size_t n = adjacency.dim(0);
  Tensor a(adjacency.shape());
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (adjacency[i * n + j] != adjacency[j * n + i]) {
        throw Error(ErrorCode::ShapeMismatch, "adjacency must be symmetric");
      }
      a[i * n + j] = (i == j) ? 1.0 : adjacency[i * n + j];
      degree[i] += a[i * n + j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(degree[i] > 0.0)) throw Error(ErrorCode::IsolatedNode, "node " + std::to_string(i) + " has zero degree");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= std::sqrt(degree[i] * degree[j]);
  }
  return a;
}

Var graph_conv(Var x, const Tensor& norm_adjacency, const GraphConvWeights& w) {
  require(x.shape().size() == 4, "graph_conv", "input must be [B, T, N, C], got " + shape_str(x.shape()));
  require(norm_adjacency.rank() == 2 && norm_adjacency.dim(0) == x.dim(2), "graph_conv",
          "adjacency " + shape_str(norm_adjacency.shape()) + " does not match node count");
  const Var spatial = linear(mix_axis(x, norm_adjacency, 2), w.channel_w, w.channel_b);
  return conv1d(spatial, w.temporal_w, w.temporal_b, 1, kTemporalWindow / 2);
}

namespace {

struct GruTrace {
  std::size_t batch = 0, frames = 0, in = 0, hidden = 0;
  bool reverse = false;
  // Per step, in processing order: gate activations and the previous state.
  std::vector<RowMat> r, z, n, hn, h_prev;
};

}  // namespace

Var gru(Var x, const GruWeights& w, bool reverse, const Tensor& h0) {
  require(x.shape().size() == 3, "gru", "input must be [B, T, in], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), frames = x.dim(1), in = x.dim(2);
  require(w.w_ih.shape().size() == 2 && w.w_ih.dim(0) % 3 == 0, "gru", "w_ih must be [3H, in]");
  const std::size_t hidden = w.w_ih.dim(0) / 3;
  require(w.w_ih.dim(1) == in, "gru", "w_ih input width mismatch");
  require(w.w_hh.shape() == Shape{3 * hidden, hidden}, "gru", "w_hh must be [3H, H]");
  require(w.b_ih.shape() == Shape{3 * hidden} && w.b_hh.shape() == Shape{3 * hidden}, "gru", "biases must be [3H]");
  require(h0.size() == 0 || h0.shape() == Shape{batch, hidden}, "gru", "h0 must be [B, H]");

  const auto H = static_cast<Eigen::Index>(hidden);
  auto trace = std::make_shared<GruTrace>();
  trace->batch = batch;
  trace->frames = frames;
  trace->in = in;
  trace->hidden = hidden;
  trace->reverse = reverse;

  // Input projections for all steps at once: rows ordered (b, t).
  RowMat gi = as_matrix(x.value(), batch * frames, in) * as_matrix(w.w_ih.value(), 3 * hidden, in).transpose();
  gi.rowwise() += ConstMapVec(w.b_ih.value().data(), 3 * H).transpose();
  const auto Whh = as_matrix(w.w_hh.value(), 3 * hidden, hidden);
  const auto bhh = ConstMapVec(w.b_hh.value().data(), 3 * H).transpose();

  RowMat h = h0.size() ? RowMat(as_matrix(h0, batch, hidden)) : RowMat::Zero(static_cast<Eigen::Index>(batch), H);
  Tensor y({batch, frames, hidden});
  for (std::size_t step = 0; step < frames; ++step) {
    const std::size_t t = reverse ? frames - 1 - step : step;
    RowMat gh = h * Whh.transpose();
    gh.rowwise() += bhh;
    RowMat r(static_cast<Eigen::Index>(batch), H), z(r.rows(), H), n(r.rows(), H), hn(r.rows(), H);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto row_i = gi.row(static_cast<Eigen::Index>(b * frames + t));
      const auto bb = static_cast<Eigen::Index>(b);
      for (Eigen::Index k = 0; k < H; ++k) {
        r(bb, k) = 1.0 / (1.0 + std::exp(-(row_i(k) + gh(bb, k))));
        z(bb, k) = 1.0 / (1.0 + std::exp(-(row_i(H + k) + gh(bb, H + k))));
        hn(bb, k) = gh(bb, 2 * H + k);
        n(bb, k) = std::tanh(row_i(2 * H + k) + r(bb, k) * hn(bb, k));
      }
    }
    trace->h_prev.push_back(h);
    RowMat h_next = (1.0 - z.array()) * n.array() + z.array() * h.array();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(h_next.data() + b * hidden, hidden, y.data() + (b * frames + t) * hidden);
    }
    trace->r.push_back(std::move(r));
    trace->z.push_back(std::move(z));
    trace->n.push_back(std::move(n));
    trace->hn.push_back(std::move(hn));
    h = std::move(h_next);
  }

  return x.graph().emit(
      "gru", std::move(y), {x, w.w_ih, w.w_hh, w.b_ih, w.b_hh}, [trace](Graph& g, std::size_t self) {
        const GruTrace& tr = *trace;
        const std::size_t batch = tr.batch, frames = tr.frames, in = tr.in, hidden = tr.hidden;
        const auto H = static_cast<Eigen::Index>(hidden);
        const Tensor& gy = *g.grad(self);
        const std::size_t xi = g.parent(self, 0), wih = g.parent(self, 1), whh = g.parent(self, 2),
                          bih = g.parent(self, 3), bhh = g.parent(self, 4);
        const auto Whh = as_matrix(g.value(whh), 3 * hidden, hidden);
        RowMat dgi = RowMat::Zero(static_cast<Eigen::Index>(batch * frames), 3 * H);
        RowMat dWhh = RowMat::Zero(3 * H, H);
        Eigen::RowVectorXd dbhh = Eigen::RowVectorXd::Zero(3 * H);
        RowMat dh = RowMat::Zero(static_cast<Eigen::Index>(batch), H);
        for (std::size_t step = frames; step-- > 0;) {
          const std::size_t t = tr.reverse ? frames - 1 - step : step;
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < hidden; ++k) {
              dh(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) += gy[(b * frames + t) * hidden + k];
            }
          }
          const RowMat& r = tr.r[step];
          const RowMat& z = tr.z[step];
          const RowMat& n = tr.n[step];
          const RowMat& hn = tr.hn[step];
          const RowMat& hp = tr.h_prev[step];
          RowMat dgh(static_cast<Eigen::Index>(batch), 3 * H);
          for (std::size_t b = 0; b < batch; ++b) {
            const auto bb = static_cast<Eigen::Index>(b);
            auto drow = dgi.row(static_cast<Eigen::Index>(b * frames + t));
            for (Eigen::Index k = 0; k < H; ++k) {
              const double g_h = dh(bb, k);
              const double dn_pre = g_h * (1.0 - z(bb, k)) * (1.0 - n(bb, k) * n(bb, k));
              const double dz_pre = g_h * (hp(bb, k) - n(bb, k)) * z(bb, k) * (1.0 - z(bb, k));
              const double dr_pre = dn_pre * hn(bb, k) * r(bb, k) * (1.0 - r(bb, k));
              drow(k) = dr_pre;
              drow(H + k) = dz_pre;
              drow(2 * H + k) = dn_pre;
              dgh(bb, k) = dr_pre;
              dgh(bb, H + k) = dz_pre;
              dgh(bb, 2 * H + k) = dn_pre * r(bb, k);
            }
          }
          dWhh.noalias() += dgh.transpose() * hp;
          dbhh += dgh.colwise().sum();
          RowMat dh_prev = (dh.array() * z.array()).matrix();
          dh_prev.noalias() += dgh * Whh;
          dh = std::move(dh_prev);
        }
        if (Tensor* gw = g.grad(whh)) as_matrix(*gw, 3 * hidden, hidden) += dWhh;
        if (Tensor* gb = g.grad(bhh)) MapVec(gb->data(), 3 * H) += dbhh.transpose();
        if (Tensor* gb = g.grad(bih)) MapVec(gb->data(), 3 * H) += dgi.colwise().sum().transpose();
        if (Tensor* gw = g.grad(wih)) {
          as_matrix(*gw, 3 * hidden, in).noalias() += dgi.transpose() * as_matrix(g.value(xi), batch * frames, in);
        }
        if (Tensor* gx = g.grad(xi)) {
          as_matrix(*gx, batch * frames, in).noalias() += dgi * as_matrix(g.value(wih), 3 * hidden, in);
        }
      });
}

std::pair<Var, Var> gru_bidirectional(Var x, const GruWeights& forward, const GruWeights& backward) {
  return {gru(x, forward, false), gru(x, backward, true)};
}

}  // namespace s2ag::diff
