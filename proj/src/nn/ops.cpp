#include "rsvqa/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMatrix>;
using ConstMapMat = Eigen::Map<const RowMatrix>;

MapMat as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MapMat(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMapMat as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return ConstMapMat(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool cond, const char* what) {
  if (!cond) throw InvalidInput(what);
}

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw InvalidInput(std::string(op) + ": expected 2-D tensor, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
  }
}

template <typename F>
Tensor unary(const Tensor& x, F&& forward, std::function<double(double in, double out)> derivative) {
  std::vector<double> out(x.numel());
  const auto& in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [derivative](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * derivative(p.value[i], o.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw InvalidInput("matmul: inner dimensions differ");
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    auto go = as_matrix(o.grad, m, n);
    if (pa.requires_grad) as_matrix(pa.ensure_grad(), m, k).noalias() += go * as_matrix(pb.value, k, n).transpose();
    if (pb.requires_grad) as_matrix(pb.ensure_grad(), k, n).noalias() += as_matrix(pa.value, m, k).transpose() * go;
  });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_bt");
  require_2d(b, "matmul_bt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw InvalidInput("matmul_bt: inner dimensions differ");
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), n, k).transpose();
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    auto go = as_matrix(o.grad, m, n);
    if (pa.requires_grad) as_matrix(pa.ensure_grad(), m, k).noalias() += go * as_matrix(pb.value, n, k);
    if (pb.requires_grad) as_matrix(pb.ensure_grad(), n, k).noalias() += go.transpose() * as_matrix(pa.value, m, k);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_2d(x, "linear");
  require_2d(weight, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
  if (weight.dim(0) != in) {
    throw InvalidInput("linear: input width " + std::to_string(in) + " does not match weight " +
                       shape_string(weight.shape()));
  }
  if (bias.numel() != out_dim) throw InvalidInput("linear: bias length mismatch");
  std::vector<double> out(rows * out_dim);
  auto y = as_matrix(out, rows, out_dim);
  y.noalias() = as_matrix(x.values(), rows, in) * as_matrix(weight.values(), in, out_dim);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), static_cast<Eigen::Index>(out_dim));
  return make_result({rows, out_dim}, std::move(out), {x, weight, bias}, [rows, in, out_dim](Node& o) {
    auto& px = *o.parents[0];
    auto& pw = *o.parents[1];
    auto& pb = *o.parents[2];
    auto go = as_matrix(o.grad, rows, out_dim);
    if (px.requires_grad) as_matrix(px.ensure_grad(), rows, in).noalias() += go * as_matrix(pw.value, in, out_dim).transpose();
    if (pw.requires_grad) as_matrix(pw.ensure_grad(), in, out_dim).noalias() += as_matrix(px.value, rows, in).transpose() * go;
    if (pb.requires_grad) Eigen::Map<Eigen::RowVectorXd>(pb.ensure_grad().data(), static_cast<Eigen::Index>(out_dim)) += go.colwise().sum();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (auto& p : o.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = *o.parents[k];
      if (!p.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor one_minus(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double out) { return 1.0 - out * out; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw InvalidInput("dropout probability must be in [0,1)");
  if (!training || p == 0.0) return x;
  std::vector<double> mask(x.numel());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * mask[i];
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_2d(x, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * cols;
    double* y = out.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (y[c] = std::exp(in[c] - peak));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o.value.data() + r * cols;
      const double* gy = o.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * gy[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (gy[c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_2d(x, "layer_norm");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (gamma.numel() != cols || beta.numel() != cols) throw InvalidInput("layer_norm: affine size mismatch");
  std::vector<double> out(x.numel());
  std::vector<double> normalized(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (in[c] - mu) * inv_std[r];
      normalized[r * cols + c] = xhat;
      out[r * cols + c] = xhat * gamma.values()[c] + beta.values()[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [rows, cols, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& o) {
                       auto& px = *o.parents[0];
                       auto& pg = *o.parents[1];
                       auto& pb = *o.parents[2];
                       if (pg.requires_grad) {
                         auto& gg = pg.ensure_grad();
                         for (std::size_t i = 0; i < rows * cols; ++i) gg[i % cols] += o.grad[i] * normalized[i];
                       }
                       if (pb.requires_grad) {
                         auto& gb = pb.ensure_grad();
                         for (std::size_t i = 0; i < rows * cols; ++i) gb[i % cols] += o.grad[i];
                       }
                       if (!px.requires_grad) return;
                       auto& gx = px.ensure_grad();
                       const double n = static_cast<double>(cols);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double sum_g = 0.0, sum_gx = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double gh = o.grad[r * cols + c] * pg.value[c];
                           sum_g += gh;
                           sum_gx += gh * normalized[r * cols + c];
                         }
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double gh = o.grad[r * cols + c] * pg.value[c];
                           gx[r * cols + c] +=
                               inv_std[r] * (gh - sum_g / n - normalized[r * cols + c] * sum_gx / n);
                         }
                       }
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.dim(0) != rows) throw InvalidInput("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(parts[k].values().data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  return make_result({rows, total}, std::move(out), parts, [rows, total, widths](Node& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = *o.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += o.grad[r * total + off + c];
        }
      }
      off += widths[k];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin + count > cols) throw InvalidInput("slice_cols: range out of bounds");
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.values().data() + r * cols + begin, count, out.data() + r * count);
  }
  return make_result({rows, count}, std::move(out), {x}, [rows, cols, begin, count](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) g[r * cols + begin + c] += o.grad[r * count + c];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = parts[0].numel() / parts[0].dim(0);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() < 1 || p.numel() / p.dim(0) != cols) throw InvalidInput("concat_rows: row widths differ");
    rows += p.dim(0);
  }
  Shape shape = parts[0].shape();
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result(std::move(shape), std::move(out), parts, [](Node& o) {
    std::size_t off = 0;
    for (auto& p : o.parents) {
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[off + i];
      }
      off += p->value.size();
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() < 1 || begin + count > x.dim(0)) throw InvalidInput("slice_rows: range out of bounds");
  const std::size_t width = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin * width),
                          x.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * width));
  return make_result(std::move(shape), std::move(out), {x}, [begin, width](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * width + i] += o.grad[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) throw InvalidInput("reshape: element count mismatch");
  return make_result(std::move(shape), x.values(), {x}, [](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_2d(table, "embedding");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= vocab) throw InvalidInput("embedding: token id out of range");
    std::copy_n(table.values().data() + rows[i] * width, width, out.data() + i * width);
  }
  return make_result({rows.size(), width}, std::move(out), {table}, [rows, width](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < width; ++c) g[rows[i] * width + c] += o.grad[i * width + c];
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;
  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

// cols[(c*K + ky)*K + kx, oy*Wo + ox]
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                ix < static_cast<long>(g.width);
            row[oy * g.out_w + ox] =
                inside ? image[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* image) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            image[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] +=
                row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (x.rank() != 4 || weight.rank() != 4) throw InvalidInput("conv2d: expected 4-D input and weight");
  if (weight.dim(1) != x.dim(1)) {
    throw InvalidInput("conv2d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                       std::to_string(weight.dim(1)));
  }
  if (weight.dim(2) != weight.dim(3)) throw InvalidInput("conv2d: square kernels only");
  if (stride == 0) throw InvalidInput("conv2d: stride must be positive");
  const std::size_t batch = x.dim(0), out_ch = weight.dim(0);
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), stride, padding, 0, 0};
  if (g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel) {
    throw InvalidInput("conv2d: kernel larger than padded input");
  }
  g.out_h = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel) / stride + 1;
  if (bias.numel() != out_ch) throw InvalidInput("conv2d: bias length mismatch");

  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t out_size = out_ch * g.positions();
  std::vector<double> cols(batch * g.patch() * g.positions());
  std::vector<double> out(batch * out_size);
  auto w = as_matrix(weight.values(), out_ch, g.patch());
  for (std::size_t b = 0; b < batch; ++b) {
    double* col = cols.data() + b * g.patch() * g.positions();
    im2col(x.values().data() + b * in_size, g, col);
    MapMat y(out.data() + b * out_size, static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(g.positions()));
    y.noalias() = w * ConstMapMat(col, static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.positions()));
    y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.values().data(), static_cast<Eigen::Index>(out_ch));
  }
  return make_result(
      {batch, out_ch, g.out_h, g.out_w}, std::move(out), {x, weight, bias},
      [g, batch, out_ch, in_size, out_size, cols = std::move(cols)](Node& o) {
        auto& px = *o.parents[0];
        auto& pw = *o.parents[1];
        auto& pb = *o.parents[2];
        const auto pe = static_cast<Eigen::Index>(g.patch());
        const auto pos = static_cast<Eigen::Index>(g.positions());
        const auto oc = static_cast<Eigen::Index>(out_ch);
        std::vector<double> dcol(px.requires_grad ? g.patch() * g.positions() : 0);
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMapMat gy(o.grad.data() + b * out_size, oc, pos);
          ConstMapMat col(cols.data() + b * g.patch() * g.positions(), pe, pos);
          if (pw.requires_grad) as_matrix(pw.ensure_grad(), out_ch, g.patch()).noalias() += gy * col.transpose();
          if (pb.requires_grad) {
            Eigen::Map<Eigen::VectorXd>(pb.ensure_grad().data(), oc) += gy.rowwise().sum();
          }
          if (px.requires_grad) {
            MapMat dc(dcol.data(), pe, pos);
            dc.noalias() = as_matrix(pw.value, out_ch, g.patch()).transpose() * gy;
            col2im(dcol.data(), g, px.ensure_grad().data() + b * in_size);
          }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw InvalidInput("global_avg_pool: expected [B,C,H,W]");
  const std::size_t batch = x.dim(0), ch = x.dim(1), area = x.dim(2) * x.dim(3);
  std::vector<double> out(batch * ch);
  for (std::size_t i = 0; i < batch * ch; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < area; ++k) s += x.values()[i * area + k];
    out[i] = s / static_cast<double>(area);
  }
  return make_result({batch, ch}, std::move(out), {x}, [area](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const double inv = 1.0 / static_cast<double>(area);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      for (std::size_t k = 0; k < area; ++k) g[i * area + k] += o.grad[i] * inv;
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, {x}, [](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    for (auto& g : p.ensure_grad()) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  if (targets.size() != logits.numel()) throw InvalidInput("bce_with_logits: target count mismatch");
  const std::size_t n = logits.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.values()[i];
    // log(1 + exp(-|z|)) + max(z, 0) - z*t
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  std::vector<double> t(targets.begin(), targets.end());
  return make_result({1}, {total / static_cast<double>(n)}, {logits}, [n, t = std::move(t)](Node& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const double factor = o.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = p.value[i];
      const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      g[i] += factor * (s - t[i]);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index) {
  require_2d(logits, "cross_entropy");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (targets.size() != rows) throw InvalidInput("cross_entropy: target count mismatch");
  std::vector<double> probs(rows * cols);
  std::vector<int> t(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.values().data() + r * cols;
    const double peak = *std::max_element(z, z + cols);
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) denom += (probs[r * cols + c] = std::exp(z[c] - peak));
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= denom;
    if (t[r] == ignore_index) continue;
    if (t[r] < 0 || static_cast<std::size_t>(t[r]) >= cols) throw InvalidInput("cross_entropy: target out of range");
    total += -(z[t[r]] - peak - std::log(denom));
    ++counted;
  }
  const double norm = counted ? 1.0 / static_cast<double>(counted) : 0.0;
  return make_result({1}, {total * norm}, {logits},
                     [rows, cols, norm, ignore_index, t = std::move(t), probs = std::move(probs)](Node& o) {
                       auto& p = *o.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       const double factor = o.grad[0] * norm;
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (t[r] == ignore_index) continue;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double onehot = static_cast<int>(c) == t[r] ? 1.0 : 0.0;
                           g[r * cols + c] += factor * (probs[r * cols + c] - onehot);
                         }
                       }
                     });
}

}  // namespace rsvqa::nn
