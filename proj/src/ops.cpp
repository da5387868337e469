#include "sketchgrasp/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace sketchgrasp {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using detail::Node;

ConstMap cmap(const std::vector<float>& v, Eigen::Index rows, Eigen::Index cols) {
  return ConstMap(v.data(), rows, cols);
}

MutMap mmap(std::span<float> v, Eigen::Index rows, Eigen::Index cols) {
  return MutMap(v.data(), rows, cols);
}

// Bias gradient. A plain row loop, because Eigen's vectorized column sums
// depend on buffer alignment and would make training runs differ bitwise.
void add_column_sums(std::span<float> out, const std::vector<float>& dy, std::size_t rows,
                     std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = dy.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

enum class Broadcast { Same, LastDim };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (a.rank() >= 1 && b.numel() == static_cast<std::size_t>(a.shape().back())) {
    return Broadcast::LastDim;
  }
  mismatch(op, a, b);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) mismatch("matmul", a, b);
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  mmap(out, m, n).noalias() = cmap(a.node()->value, m, k) * cmap(b.node()->value, k, n);
  return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto dy = cmap(self.grad, m, n);
    if (pa.requires_grad) {
      mmap(pa.grad_buffer(), m, k).noalias() += dy * cmap(pb.value, k, n).transpose();
    }
    if (pb.requires_grad) {
      mmap(pb.grad_buffer(), k, n).noalias() += cmap(pa.value, m, k).transpose() * dy;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in) mismatch("linear", x, w);
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != static_cast<std::size_t>(out_dim)) mismatch("linear", w, bias);
  std::vector<float> out(static_cast<std::size_t>(n) * out_dim);
  auto y = mmap(out, n, out_dim);
  y.noalias() = cmap(x.node()->value, n, in) * cmap(w.node()->value, in, out_dim);
  if (has_bias) {
    Eigen::Map<const Eigen::RowVectorXf> bv(bias.data().data(), out_dim);
    y.rowwise() += bv;
  }
  std::vector<Tensor> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return detail::make_result(
      "linear", {n, out_dim}, std::move(out), std::move(parents),
      [n, in, out_dim, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        auto dy = cmap(self.grad, n, out_dim);
        if (px.requires_grad) {
          mmap(px.grad_buffer(), n, in).noalias() += dy * cmap(pw.value, in, out_dim).transpose();
        }
        if (pw.requires_grad) {
          mmap(pw.grad_buffer(), in, out_dim).noalias() += cmap(px.value, n, in).transpose() * dy;
        }
        if (has_bias && self.parents[2]->requires_grad) {
          add_column_sums(self.parents[2]->grad_buffer(), self.grad, n, out_dim);
        }
      });
}

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, BwdA da,
                          BwdB db) {
  const Broadcast kind = broadcast_kind(op, a, b);
  const std::size_t n = a.numel();
  const std::size_t period = kind == Broadcast::Same ? n : b.numel();
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % period]);
  return detail::make_result(op, a.shape(), std::move(out), {a, b},
                             [n, period, da, db](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               const auto& g = self.grad;
                               if (pa.requires_grad) {
                                 auto ga = pa.grad_buffer();
                                 for (std::size_t i = 0; i < n; ++i) {
                                   ga[i] += g[i] * da(pa.value[i], pb.value[i % period]);
                                 }
                               }
                               if (pb.requires_grad) {
                                 auto gb = pb.grad_buffer();
                                 for (std::size_t i = 0; i < n; ++i) {
                                   gb[i % period] += g[i] * db(pa.value[i], pb.value[i % period]);
                                 }
                               }
                             });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
      [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
      [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](float x, float y) { return x * y; }, [](float, float y) { return y; },
      [](float x, float) { return x; });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (float& v : out) v *= factor;
  return detail::make_result("scale", a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v = v > 0.0f ? v : 0.0f;
  return detail::make_result("relu", x.shape(), std::move(out), {x}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (self.value[i] > 0.0f) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return detail::make_result("sum", {1}, {static_cast<float>(acc)}, {x}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    const float s = self.grad[0];
    for (float& v : g) v += s;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
  require_rank(x, 3, "conv2d", "input");
  require_rank(w, 4, "conv2d", "kernel");
  const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  if (w.dim(2) != cin) mismatch("conv2d", x, w);
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != static_cast<std::size_t>(cout)) mismatch("conv2d", w, bias);
  const int ho = (h + 2 * padding - kh) / stride + 1;
  const int wo = (wd + 2 * padding - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) mismatch("conv2d", x, w);
  const int rows = ho * wo;
  const int patch = kh * kw * cin;

  // 1x1 stride-1 convolutions are plain matmuls over pixels.
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;
  std::vector<float> col;
  if (!pointwise) {
    col.assign(static_cast<std::size_t>(rows) * patch, 0.0f);
    const auto& xv = x.node()->value;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        float* dst = col.data() + (static_cast<std::size_t>(oy) * wo + ox) * patch;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= wd) continue;
            std::memcpy(dst + (ky * kw + kx) * cin,
                        xv.data() + (static_cast<std::size_t>(iy) * wd + ix) * cin,
                        sizeof(float) * cin);
          }
        }
      }
    }
  }
  const std::vector<float>& lhs = pointwise ? x.node()->value : col;
  std::vector<float> out(static_cast<std::size_t>(rows) * cout);
  auto y = mmap(out, rows, cout);
  y.noalias() = cmap(lhs, rows, patch) * cmap(w.node()->value, patch, cout);
  if (has_bias) {
    Eigen::Map<const Eigen::RowVectorXf> bv(bias.data().data(), cout);
    y.rowwise() += bv;
  }

  std::vector<Tensor> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return detail::make_result(
      "conv2d", {ho, wo, cout}, std::move(out), std::move(parents),
      [col = std::move(col), pointwise, h, wd, cin, kh, kw, cout, ho, wo, rows, patch, stride,
       padding, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        auto dy = cmap(self.grad, rows, cout);
        const std::vector<float>& lhs = pointwise ? px.value : col;
        if (pw.requires_grad) {
          mmap(pw.grad_buffer(), patch, cout).noalias() += cmap(lhs, rows, patch).transpose() * dy;
        }
        if (has_bias && self.parents[2]->requires_grad) {
          add_column_sums(self.parents[2]->grad_buffer(), self.grad, rows, cout);
        }
        if (!px.requires_grad) return;
        if (pointwise) {
          mmap(px.grad_buffer(), rows, patch).noalias() +=
              dy * cmap(pw.value, patch, cout).transpose();
          return;
        }
        std::vector<float> dcol(static_cast<std::size_t>(rows) * patch);
        mmap(dcol, rows, patch).noalias() = dy * cmap(pw.value, patch, cout).transpose();
        auto gx = px.grad_buffer();
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            const float* src = dcol.data() + (static_cast<std::size_t>(oy) * wo + ox) * patch;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - padding + kx;
                if (ix < 0 || ix >= wd) continue;
                float* dst = gx.data() + (static_cast<std::size_t>(iy) * wd + ix) * cin;
                const float* s = src + (ky * kw + kx) * cin;
                for (int c = 0; c < cin; ++c) dst[c] += s[c];
              }
            }
          }
        }
      });
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride) {
  require_rank(x, 3, "max_pool2d", "input");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (kernel < 1 || stride < 1 || kernel > h || kernel > w) {
    throw ShapeError("max_pool2d: kernel " + std::to_string(kernel) + " does not fit input " +
                     shape_str(x.shape()));
  }
  const int ho = (h - kernel) / stride + 1;
  const int wo = (w - kernel) / stride + 1;
  const auto& xv = x.node()->value;
  std::vector<float> out(static_cast<std::size_t>(ho) * wo * c);
  std::vector<std::size_t> argmax(out.size());
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      for (int ch = 0; ch < c; ++ch) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_idx = 0;
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const std::size_t idx =
                (static_cast<std::size_t>(oy * stride + ky) * w + (ox * stride + kx)) * c + ch;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(oy) * wo + ox) * c + ch;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  return detail::make_result("max_pool2d", {ho, wo, c}, std::move(out), {x},
                             [argmax = std::move(argmax)](Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < argmax.size(); ++i) {
                                 g[argmax[i]] += self.grad[i];
                               }
                             });
}

Tensor reduce_max(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("reduce_max: axis out of range for " + shape_str(s));
  }
  if (s[axis] == 0) throw ShapeError("reduce_max: empty axis in " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const auto& xv = x.node()->value;
  std::vector<float> out(outer * inner);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t best = o * len * inner + i;
      for (std::size_t k = 1; k < len; ++k) {
        const std::size_t idx = (o * len + k) * inner + i;
        if (xv[idx] > xv[best]) best = idx;
      }
      out[o * inner + i] = xv[best];
      argmax[o * inner + i] = best;
    }
  }
  Shape out_shape = s;
  out_shape[axis] = 1;
  return detail::make_result("reduce_max", std::move(out_shape), std::move(out), {x},
                             [argmax = std::move(argmax)](Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < argmax.size(); ++i) {
                                 g[argmax[i]] += self.grad[i];
                               }
                             });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis < 0) axis += static_cast<int>(first.size());
  if (axis < 0 || axis >= static_cast<int>(first.size())) {
    throw ShapeError("concat: axis out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) mismatch("concat", parts[0], p);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != axis && s[d] != first[d]) mismatch("concat", parts[0], p);
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) widths.push_back(static_cast<std::size_t>(p.dim(axis)) * inner);
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  std::vector<float> out(outer * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].node()->value;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * widths[k], widths[k], out.data() + o * total + offset);
    }
    offset += widths[k];
  }
  return detail::make_result(
      "concat", std::move(out_shape), std::move(out), {parts.begin(), parts.end()},
      [widths, outer, total](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          Node& p = *self.parents[k];
          if (p.requires_grad) {
            auto g = p.grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
              const float* src = self.grad.data() + o * total + offset;
              float* dst = g.data() + o * widths[k];
              for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
            }
          }
          offset += widths[k];
        }
      });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor gather_rows(const Tensor& x, std::span<const int> rows) {
  require_rank(x, 2, "gather_rows", "input");
  const int n = x.dim(0), d = x.dim(1);
  const auto& xv = x.node()->value;
  std::vector<int> idx(rows.begin(), rows.end());
  std::vector<float> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= n) {
      throw std::out_of_range("gather_rows: row " + std::to_string(idx[r]) +
                              " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(xv.data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
  }
  const int m = static_cast<int>(idx.size());
  return detail::make_result("gather_rows", {m, d}, std::move(out), {x},
                             [idx = std::move(idx), d](Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 float* dst = g.data() + static_cast<std::size_t>(idx[r]) * d;
                                 const float* src = self.grad.data() + r * d;
                                 for (int c = 0; c < d; ++c) dst[c] += src[c];
                               }
                             });
}

Tensor segment_max(const Tensor& x, std::span<const int> segment, int num_segments) {
  require_rank(x, 2, "segment_max", "input");
  const int m = x.dim(0), d = x.dim(1);
  if (static_cast<int>(segment.size()) != m) {
    throw ShapeError("segment_max: " + std::to_string(segment.size()) + " segment ids for " +
                     shape_str(x.shape()));
  }
  const auto& xv = x.node()->value;
  std::vector<float> out(static_cast<std::size_t>(num_segments) * d, 0.0f);
  std::vector<int> argmax(out.size(), -1);
  for (int r = 0; r < m; ++r) {
    const int s = segment[r];
    if (s < 0 || s >= num_segments) {
      throw std::out_of_range("segment_max: segment id " + std::to_string(s) + " out of range");
    }
    for (int c = 0; c < d; ++c) {
      const std::size_t o = static_cast<std::size_t>(s) * d + c;
      const float v = xv[static_cast<std::size_t>(r) * d + c];
      if (argmax[o] < 0 || v > out[o]) {
        out[o] = v;
        argmax[o] = r;
      }
    }
  }
  return detail::make_result("segment_max", {num_segments, d}, std::move(out), {x},
                             [argmax = std::move(argmax), d](Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               for (std::size_t o = 0; o < argmax.size(); ++o) {
                                 if (argmax[o] < 0) continue;
                                 g[static_cast<std::size_t>(argmax[o]) * d + o % d] += self.grad[o];
                               }
                             });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_str(logits.shape()));
  }
  const auto& z = logits.node()->value;
  std::vector<float> prob(z.size());
  std::vector<int> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    if (lab[r] < 0 || lab[r] >= c) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(lab[r]) +
                              " outside [0, " + std::to_string(c) + ")");
    }
    const float* row = z.data() + static_cast<std::size_t>(r) * c;
    const double mx = *std::max_element(row, row + c);
    double denom = 0.0;
    for (int k = 0; k < c; ++k) denom += std::exp(row[k] - mx);
    for (int k = 0; k < c; ++k) {
      prob[static_cast<std::size_t>(r) * c + k] = static_cast<float>(std::exp(row[k] - mx) / denom);
    }
    total += std::log(denom) + mx - row[lab[r]];
  }
  return detail::make_result("softmax_cross_entropy", {1}, {static_cast<float>(total)}, {logits},
                             [prob = std::move(prob), lab = std::move(lab), c](Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               const float s = self.grad[0];
                               for (std::size_t i = 0; i < prob.size(); ++i) g[i] += s * prob[i];
                               for (std::size_t r = 0; r < lab.size(); ++r) {
                                 g[r * c + lab[r]] -= s;
                               }
                             });
}

Tensor binary_cross_entropy(const Tensor& logits, std::span<const float> targets) {
  const std::size_t n = logits.numel();
  if (targets.size() != n) {
    throw ShapeError("binary_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + shape_str(logits.shape()));
  }
  const auto& z = logits.node()->value;
  std::vector<float> tgt(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = z[i];
    total += std::max(zi, 0.0) - zi * tgt[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  return detail::make_result("binary_cross_entropy", {1}, {static_cast<float>(total)}, {logits},
                             [tgt = std::move(tgt)](Node& self) {
                               Node& p = *self.parents[0];
                               auto g = p.grad_buffer();
                               const float s = self.grad[0];
                               for (std::size_t i = 0; i < tgt.size(); ++i) {
                                 const double sig = 1.0 / (1.0 + std::exp(-double(p.value[i])));
                                 g[i] += s * static_cast<float>(sig - tgt[i]);
                               }
                             });
}

Tensor smooth_l1(const Tensor& pred, std::span<const float> target,
                 std::span<const float> row_weights, float beta) {
  require_rank(pred, 2, "smooth_l1", "prediction");
  const int n = pred.dim(0), k = pred.dim(1);
  if (target.size() != pred.numel()) {
    throw ShapeError("smooth_l1: target length " + std::to_string(target.size()) +
                     " does not match " + shape_str(pred.shape()));
  }
  if (static_cast<int>(row_weights.size()) != n) {
    throw ShapeError("smooth_l1: " + std::to_string(row_weights.size()) + " row weights for " +
                     shape_str(pred.shape()));
  }
  if (!(beta > 0.0f)) throw std::invalid_argument("smooth_l1: beta must be positive");
  const auto& p = pred.node()->value;
  std::vector<float> tgt(target.begin(), target.end());
  std::vector<float> wts(row_weights.begin(), row_weights.end());
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    if (wts[r] == 0.0f) continue;
    double row = 0.0;
    for (int j = 0; j < k; ++j) {
      const double d = double(p[r * k + j]) - tgt[r * k + j];
      const double ad = std::abs(d);
      row += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
    }
    total += wts[r] * row;
  }
  return detail::make_result(
      "smooth_l1", {1}, {static_cast<float>(total)}, {pred},
      [tgt = std::move(tgt), wts = std::move(wts), k, beta](Node& self) {
        Node& pn = *self.parents[0];
        auto g = pn.grad_buffer();
        const float s = self.grad[0];
        for (std::size_t r = 0; r < wts.size(); ++r) {
          if (wts[r] == 0.0f) continue;
          for (int j = 0; j < k; ++j) {
            const std::size_t i = r * k + j;
            const float d = pn.value[i] - tgt[i];
            const float dd = std::abs(d) < beta ? d / beta : (d > 0.0f ? 1.0f : -1.0f);
            g[i] += s * wts[r] * dd;
          }
        }
      });
}

Tensor smooth_l1(const Tensor& pred, std::span<const float> target, float beta) {
  require_rank(pred, 2, "smooth_l1", "prediction");
  std::vector<float> ones(pred.dim(0), 1.0f);
  return smooth_l1(pred, target, ones, beta);
}

namespace {

struct BilinearTap {
  int i00, i01, i10, i11;
  float w00, w01, w10, w11;
};

BilinearTap bilinear_tap(double y, double x, int h, int w) {
  // Cell centers sit at integer + 0.5; positions beyond the outer centers clamp.
  double u = std::clamp(y - 0.5, 0.0, double(h - 1));
  double v = std::clamp(x - 0.5, 0.0, double(w - 1));
  const int y0 = static_cast<int>(std::floor(u));
  const int x0 = static_cast<int>(std::floor(v));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const float fy = static_cast<float>(u - y0);
  const float fx = static_cast<float>(v - x0);
  return {y0 * w + x0,
          y0 * w + x1,
          y1 * w + x0,
          y1 * w + x1,
          (1 - fy) * (1 - fx),
          (1 - fy) * fx,
          fy * (1 - fx),
          fy * fx};
}

}  // namespace

Tensor roi_align(const Tensor& fmap, std::span<const FeatureBox> boxes, int size) {
  require_rank(fmap, 3, "roi_align", "feature map");
  if (size < 1) throw std::invalid_argument("roi_align: output size must be positive");
  const int h = fmap.dim(0), w = fmap.dim(1), d = fmap.dim(2);
  const auto& fv = fmap.node()->value;
  const int r_count = static_cast<int>(boxes.size());
  const std::size_t bins = static_cast<std::size_t>(size) * size;
  std::vector<BilinearTap> taps;
  taps.reserve(boxes.size() * bins);
  for (const FeatureBox& b : boxes) {
    if (!(b.x1 > b.x0) || !(b.y1 > b.y0)) {
      throw std::invalid_argument("roi_align: zero-area box");
    }
    const double bh = (b.y1 - b.y0) / size;
    const double bw = (b.x1 - b.x0) / size;
    for (int py = 0; py < size; ++py) {
      for (int px = 0; px < size; ++px) {
        taps.push_back(bilinear_tap(b.y0 + (py + 0.5) * bh, b.x0 + (px + 0.5) * bw, h, w));
      }
    }
  }
  std::vector<float> out(taps.size() * d);
  for (std::size_t t = 0; t < taps.size(); ++t) {
    const BilinearTap& tp = taps[t];
    const float* a = fv.data() + static_cast<std::size_t>(tp.i00) * d;
    const float* b = fv.data() + static_cast<std::size_t>(tp.i01) * d;
    const float* c = fv.data() + static_cast<std::size_t>(tp.i10) * d;
    const float* e = fv.data() + static_cast<std::size_t>(tp.i11) * d;
    float* o = out.data() + t * d;
    for (int k = 0; k < d; ++k) o[k] = tp.w00 * a[k] + tp.w01 * b[k] + tp.w10 * c[k] + tp.w11 * e[k];
  }
  return detail::make_result("roi_align", {r_count, size, size, d}, std::move(out), {fmap},
                             [taps = std::move(taps), d](Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               for (std::size_t t = 0; t < taps.size(); ++t) {
                                 const BilinearTap& tp = taps[t];
                                 const float* src = self.grad.data() + t * d;
                                 float* a = g.data() + static_cast<std::size_t>(tp.i00) * d;
                                 float* b = g.data() + static_cast<std::size_t>(tp.i01) * d;
                                 float* c = g.data() + static_cast<std::size_t>(tp.i10) * d;
                                 float* e = g.data() + static_cast<std::size_t>(tp.i11) * d;
                                 for (int k = 0; k < d; ++k) {
                                   a[k] += tp.w00 * src[k];
                                   b[k] += tp.w01 * src[k];
                                   c[k] += tp.w10 * src[k];
                                   e[k] += tp.w11 * src[k];
                                 }
                               }
                             });
}

}  // namespace sketchgrasp
