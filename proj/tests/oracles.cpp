#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace oracle {

using sketchgrasp::Rng;

namespace {

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

Values uniform(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Values v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Bounded away from zero so a central difference never crosses a relu kink.
Values away_from_zero(Rng& rng, std::size_t n) {
  Values v(n);
  for (double& x : v) {
    const double u = rng.uniform(-1.0, 1.0);
    x = (u < 0 ? -1.0 : 1.0) * (0.05 + 0.95 * std::abs(u));
  }
  return v;
}

// Pairwise gaps of at least 0.05, so max selections are stable under the step.
Values distinct(Rng& rng, std::size_t n) {
  Values v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = -1.0 + 0.05 * static_cast<double>(i);
  rng.shuffle(v);
  return v;
}

// Round through float so the f32 op and the f64 reference see the same point.
Values as_float(Values v) {
  for (double& x : v) x = static_cast<float>(x);
  return v;
}

Values ref_matmul(const Values& a, const Values& b, int n, int k, int m) {
  Values out(static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      for (int p = 0; p < k; ++p) out[i * m + j] += a[i * k + p] * b[p * m + j];
  return out;
}

Values ref_relu(Values v) {
  for (double& x : v) x = std::max(x, 0.0);
  return v;
}

Values ref_conv2d(const Values& x, int h, int w, int cin, const Values& k, int kh, int kw,
                  int cout, const Values* bias, int stride, int pad) {
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  Values out(static_cast<std::size_t>(ho) * wo * cout, 0.0);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      for (int co = 0; co < cout; ++co) {
        double acc = bias ? (*bias)[co] : 0.0;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const int iy = oy * stride + ky - pad;
            const int ix = ox * stride + kx - pad;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            for (int ci = 0; ci < cin; ++ci) {
              acc += x[(iy * w + ix) * cin + ci] * k[((ky * kw + kx) * cin + ci) * cout + co];
            }
          }
        }
        out[(oy * wo + ox) * cout + co] = acc;
      }
    }
  }
  return out;
}

Values ref_max_pool(const Values& x, int h, int w, int c, int kernel, int stride) {
  const int ho = (h - kernel) / stride + 1;
  const int wo = (w - kernel) / stride + 1;
  Values out(static_cast<std::size_t>(ho) * wo * c, -1e300);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox)
      for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            double& o = out[(oy * wo + ox) * c + ch];
            o = std::max(o, x[((oy * stride + ky) * w + ox * stride + kx) * c + ch]);
          }
  return out;
}

// Reduce over the middle axis of an (outer x n x inner) view.
Values ref_reduce_max(const Values& x, int outer, int n, int inner) {
  Values out(static_cast<std::size_t>(outer) * inner, -1e300);
  for (int o = 0; o < outer; ++o)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < inner; ++j)
        out[o * inner + j] = std::max(out[o * inner + j], x[(o * n + i) * inner + j]);
  return out;
}

// Concatenate two tensors along the middle axis of (outer x n x inner) views.
Values ref_concat(const Values& a, int na, const Values& b, int nb, int outer, int inner) {
  Values out;
  for (int o = 0; o < outer; ++o) {
    out.insert(out.end(), a.begin() + o * na * inner, a.begin() + (o + 1) * na * inner);
    out.insert(out.end(), b.begin() + o * nb * inner, b.begin() + (o + 1) * nb * inner);
  }
  return out;
}

Tensor param(const Shape& shape, const Values& v) {
  return Tensor::parameter(shape, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

PrimitiveReport check_primitive(const PrimitiveCase& c, std::uint64_t seed, double step) {
  std::vector<Values> x;
  for (const auto& v : c.inputs) x.push_back(as_float(v));
  std::vector<Tensor> tensors;
  for (std::size_t i = 0; i < x.size(); ++i) tensors.push_back(param(c.shapes[i], x[i]));

  const Tensor out = c.op(tensors);
  const Values ref = c.reference(x);
  PrimitiveReport report{c.name};
  if (out.numel() != ref.size()) {
    report.forward_error = report.grad_error = INFINITY;
    return report;
  }
  for (std::size_t i = 0; i < ref.size(); ++i) {
    report.forward_error = std::max(report.forward_error,
                                    std::abs(out.data()[i] - ref[i]) / std::max(1.0, std::abs(ref[i])));
  }

  Rng rng(seed);
  Values r(ref.size());
  for (double& v : r) v = rng.normal();
  auto projected = [&](const std::vector<Values>& at) {
    const Values y = c.reference(at);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  const Tensor weights = Tensor::from_data(out.shape(), std::vector<float>(r.begin(), r.end()));
  sketchgrasp::backward(sketchgrasp::sum(sketchgrasp::mul(out, weights)));

  double diff2 = 0.0, norm2 = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const std::span<const float> grad =
        tensors[t].has_grad() ? tensors[t].grad() : std::span<const float>{};
    for (std::size_t i = 0; i < x[t].size(); ++i) {
      std::vector<Values> hi = x, lo = x;
      hi[t][i] += step;
      lo[t][i] -= step;
      const double numeric = (projected(hi) - projected(lo)) / (2.0 * step);
      const double analytic = i < grad.size() ? grad[i] : 0.0;
      diff2 += (analytic - numeric) * (analytic - numeric);
      norm2 += numeric * numeric;
    }
  }
  report.grad_error = std::sqrt(diff2) / std::max(std::sqrt(norm2), 1e-12);
  return report;
}

std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed) {
  using namespace sketchgrasp;
  Rng rng(seed);
  std::vector<PrimitiveCase> cases;

  cases.push_back({"matmul", {{3, 4}, {4, 5}}, {uniform(rng, 12), uniform(rng, 20)},
                   [](const auto& t) { return matmul(t[0], t[1]); },
                   [](const auto& v) { return ref_matmul(v[0], v[1], 3, 4, 5); }});

  cases.push_back({"linear", {{3, 4}, {4, 5}, {5}},
                   {uniform(rng, 12), uniform(rng, 20), uniform(rng, 5)},
                   [](const auto& t) { return linear(t[0], t[1], t[2]); },
                   [](const auto& v) {
                     Values y = ref_matmul(v[0], v[1], 3, 4, 5);
                     for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[2][i % 5];
                     return y;
                   }});

  cases.push_back({"add", {{2, 3, 4}, {2, 3, 4}}, {uniform(rng, 24), uniform(rng, 24)},
                   [](const auto& t) { return add(t[0], t[1]); },
                   [](const auto& v) {
                     Values y = v[0];
                     for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[1][i];
                     return y;
                   }});

  cases.push_back({"add_broadcast", {{2, 3, 4}, {4}}, {uniform(rng, 24), uniform(rng, 4)},
                   [](const auto& t) { return add(t[0], t[1]); },
                   [](const auto& v) {
                     Values y = v[0];
                     for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[1][i % 4];
                     return y;
                   }});

  cases.push_back({"sub", {{3, 4}, {3, 4}}, {uniform(rng, 12), uniform(rng, 12)},
                   [](const auto& t) { return sub(t[0], t[1]); },
                   [](const auto& v) {
                     Values y = v[0];
                     for (std::size_t i = 0; i < y.size(); ++i) y[i] -= v[1][i];
                     return y;
                   }});

  cases.push_back({"mul", {{3, 4}, {3, 4}}, {uniform(rng, 12), uniform(rng, 12)},
                   [](const auto& t) { return mul(t[0], t[1]); },
                   [](const auto& v) {
                     Values y = v[0];
                     for (std::size_t i = 0; i < y.size(); ++i) y[i] *= v[1][i];
                     return y;
                   }});

  cases.push_back({"mul_broadcast", {{2, 2, 3}, {3}}, {uniform(rng, 12), uniform(rng, 3)},
                   [](const auto& t) { return mul(t[0], t[1]); },
                   [](const auto& v) {
                     Values y = v[0];
                     for (std::size_t i = 0; i < y.size(); ++i) y[i] *= v[1][i % 3];
                     return y;
                   }});

  cases.push_back({"scale", {{5}}, {uniform(rng, 5)},
                   [](const auto& t) { return scale(t[0], 0.7f); },
                   [](const auto& v) {
                     Values y = v[0];
                     for (double& e : y) e *= double(0.7f);
                     return y;
                   }});

  cases.push_back({"relu", {{4, 5}}, {away_from_zero(rng, 20)},
                   [](const auto& t) { return relu(t[0]); },
                   [](const auto& v) { return ref_relu(v[0]); }});

  cases.push_back({"sum", {{3, 4}}, {uniform(rng, 12)},
                   [](const auto& t) { return sum(t[0]); },
                   [](const auto& v) { return Values{std::accumulate(v[0].begin(), v[0].end(), 0.0)}; }});

  cases.push_back({"reshape", {{2, 6}}, {uniform(rng, 12)},
                   [](const auto& t) { return reshape(t[0], {3, 2, 2}); },
                   [](const auto& v) { return v[0]; }});

  cases.push_back({"conv2d", {{5, 5, 2}, {3, 3, 2, 3}, {3}},
                   {uniform(rng, 50), uniform(rng, 54), uniform(rng, 3)},
                   [](const auto& t) { return conv2d(t[0], t[1], t[2], 1, 1); },
                   [](const auto& v) { return ref_conv2d(v[0], 5, 5, 2, v[1], 3, 3, 3, &v[2], 1, 1); }});

  cases.push_back({"conv2d_stride2", {{6, 6, 2}, {3, 3, 2, 2}, {2}},
                   {uniform(rng, 72), uniform(rng, 36), uniform(rng, 2)},
                   [](const auto& t) { return conv2d(t[0], t[1], t[2], 2, 1); },
                   [](const auto& v) { return ref_conv2d(v[0], 6, 6, 2, v[1], 3, 3, 2, &v[2], 2, 1); }});

  cases.push_back({"conv2d_1x1", {{4, 4, 3}, {1, 1, 3, 2}, {2}},
                   {uniform(rng, 48), uniform(rng, 6), uniform(rng, 2)},
                   [](const auto& t) { return conv2d(t[0], t[1], t[2], 1, 0); },
                   [](const auto& v) { return ref_conv2d(v[0], 4, 4, 3, v[1], 1, 1, 2, &v[2], 1, 0); }});

  cases.push_back({"conv2d_no_bias", {{4, 3, 1}, {2, 2, 1, 2}},
                   {uniform(rng, 12), uniform(rng, 8)},
                   [](const auto& t) { return conv2d(t[0], t[1], Tensor{}, 1, 0); },
                   [](const auto& v) { return ref_conv2d(v[0], 4, 3, 1, v[1], 2, 2, 2, nullptr, 1, 0); }});

  cases.push_back({"max_pool2d", {{4, 4, 2}}, {distinct(rng, 32)},
                   [](const auto& t) { return max_pool2d(t[0], 2, 2); },
                   [](const auto& v) { return ref_max_pool(v[0], 4, 4, 2, 2, 2); }});

  cases.push_back({"max_pool2d_overlap", {{5, 5, 1}}, {distinct(rng, 25)},
                   [](const auto& t) { return max_pool2d(t[0], 3, 2); },
                   [](const auto& v) { return ref_max_pool(v[0], 5, 5, 1, 3, 2); }});

  cases.push_back({"reduce_max_axis0", {{4, 3}}, {distinct(rng, 12)},
                   [](const auto& t) { return reduce_max(t[0], 0); },
                   [](const auto& v) { return ref_reduce_max(v[0], 1, 4, 3); }});

  cases.push_back({"reduce_max_axis1", {{2, 3, 2}}, {distinct(rng, 12)},
                   [](const auto& t) { return reduce_max(t[0], 1); },
                   [](const auto& v) { return ref_reduce_max(v[0], 2, 3, 2); }});

  cases.push_back({"concat_axis0", {{2, 3}, {1, 3}}, {uniform(rng, 6), uniform(rng, 3)},
                   [](const auto& t) { return concat({t[0], t[1]}, 0); },
                   [](const auto& v) { return ref_concat(v[0], 2, v[1], 1, 1, 3); }});

  cases.push_back({"concat_axis1", {{2, 3}, {2, 2}}, {uniform(rng, 6), uniform(rng, 4)},
                   [](const auto& t) { return concat({t[0], t[1]}, 1); },
                   [](const auto& v) { return ref_concat(v[0], 3, v[1], 2, 2, 1); }});

  cases.push_back({"concat_axis2", {{2, 2, 1}, {2, 2, 3}}, {uniform(rng, 4), uniform(rng, 12)},
                   [](const auto& t) { return concat({t[0], t[1]}, 2); },
                   [](const auto& v) { return ref_concat(v[0], 1, v[1], 3, 4, 1); }});

  cases.push_back({"gather_rows", {{4, 3}}, {uniform(rng, 12)},
                   [](const auto& t) {
                     const std::vector<int> rows{2, 0, 2, 3};
                     return gather_rows(t[0], rows);
                   },
                   [](const auto& v) {
                     Values y;
                     for (int r : {2, 0, 2, 3}) y.insert(y.end(), v[0].begin() + r * 3, v[0].begin() + r * 3 + 3);
                     return y;
                   }});

  cases.push_back({"segment_max", {{6, 2}}, {distinct(rng, 12)},
                   [](const auto& t) {
                     const std::vector<int> seg{0, 1, 0, 2, 1, 0};
                     return segment_max(t[0], seg, 4);
                   },
                   [](const auto& v) {
                     const int seg[] = {0, 1, 0, 2, 1, 0};
                     Values y(8, -1e300);
                     for (int r = 0; r < 6; ++r)
                       for (int c = 0; c < 2; ++c) y[seg[r] * 2 + c] = std::max(y[seg[r] * 2 + c], v[0][r * 2 + c]);
                     for (double& e : y)
                       if (e == -1e300) e = 0.0;
                     return y;
                   }});

  cases.push_back({"softmax_cross_entropy", {{4, 5}}, {uniform(rng, 20, -2.0, 2.0)},
                   [](const auto& t) {
                     const std::vector<int> labels{0, 3, 4, 1};
                     return softmax_cross_entropy(t[0], labels);
                   },
                   [](const auto& v) {
                     const int labels[] = {0, 3, 4, 1};
                     double s = 0.0;
                     for (int r = 0; r < 4; ++r) {
                       double z = 0.0;
                       for (int c = 0; c < 5; ++c) z += std::exp(v[0][r * 5 + c]);
                       s += std::log(z) - v[0][r * 5 + labels[r]];
                     }
                     return Values{s};
                   }});

  cases.push_back({"binary_cross_entropy", {{6}}, {uniform(rng, 6, -3.0, 3.0)},
                   [](const auto& t) {
                     const std::vector<float> targets{0, 1, 0.3f, 1, 0, 0.8f};
                     return binary_cross_entropy(t[0], targets);
                   },
                   [](const auto& v) {
                     const double targets[] = {0, 1, 0.3f, 1, 0, 0.8f};
                     double s = 0.0;
                     for (int i = 0; i < 6; ++i) s += bce_with_logit(v[0][i], targets[i]);
                     return Values{s};
                   }});

  {
    // Targets chosen so that some differences fall in each smooth L1 branch.
    const Values target = as_float(uniform(rng, 12, -2.5, 2.5));
    cases.push_back({"smooth_l1_weighted", {{4, 3}}, {uniform(rng, 12, -1.0, 1.0)},
                     [target](const auto& t) {
                       const std::vector<float> tg(target.begin(), target.end());
                       const std::vector<float> w{1.0f, 0.0f, 0.5f, 2.0f};
                       return smooth_l1(t[0], tg, w);
                     },
                     [target](const auto& v) {
                       const double w[] = {1.0, 0.0, 0.5, 2.0};
                       double s = 0.0;
                       for (int i = 0; i < 12; ++i) s += w[i / 3] * smooth_l1(v[0][i] - target[i]);
                       return Values{s};
                     }});
    cases.push_back({"smooth_l1", {{4, 3}}, {uniform(rng, 12, -1.0, 1.0)},
                     [target](const auto& t) {
                       const std::vector<float> tg(target.begin(), target.end());
                       return smooth_l1(t[0], tg);
                     },
                     [target](const auto& v) {
                       double s = 0.0;
                       for (int i = 0; i < 12; ++i) s += smooth_l1(v[0][i] - target[i]);
                       return Values{s};
                     }});
  }

  {
    const std::vector<FeatureBox> boxes{{0.3, 0.6, 3.9, 2.2}, {1.2, 0.1, 4.8, 3.7}};
    cases.push_back({"roi_align", {{4, 5, 2}}, {uniform(rng, 40)},
                     [boxes](const auto& t) { return roi_align(t[0], boxes, 3); },
                     [boxes](const auto& v) {
                       Values y;
                       for (const auto& b : boxes) {
                         const double bh = (b.y1 - b.y0) / 3, bw = (b.x1 - b.x0) / 3;
                         for (int py = 0; py < 3; ++py)
                           for (int px = 0; px < 3; ++px)
                             for (int ch = 0; ch < 2; ++ch)
                               y.push_back(bilinear_sample(v[0], 4, 5, 2, b.y0 + (py + 0.5) * bh,
                                                           b.x0 + (px + 0.5) * bw, ch));
                       }
                       return y;
                     }});
  }
  return cases;
}

PrimitiveCase composite_case(std::uint64_t seed) {
  using namespace sketchgrasp;
  Rng rng(seed);
  PrimitiveCase c;
  c.name = "composite";
  c.shapes = {{1, 6}, {6, 8}, {8}, {3, 3, 2, 3}, {3}, {11, 2}, {2}};
  for (const auto& s : c.shapes) c.inputs.push_back(uniform(rng, numel(s)));
  c.op = [](const std::vector<Tensor>& t) {
    const Tensor h1 = relu(linear(t[0], t[1], t[2]));
    const Tensor img = reshape(h1, {2, 2, 2});
    const Tensor conv = relu(conv2d(img, t[3], t[4], 1, 1));
    const Tensor pooled = reshape(max_pool2d(conv, 2, 2), {1, 3});
    const Tensor joined = concat({pooled, h1}, 1);
    return linear(joined, t[5], t[6]);
  };
  c.reference = [](const std::vector<Values>& v) {
    Values h1 = ref_matmul(v[0], v[1], 1, 6, 8);
    for (int i = 0; i < 8; ++i) h1[i] += v[2][i];
    h1 = ref_relu(h1);
    const Values conv = ref_relu(ref_conv2d(h1, 2, 2, 2, v[3], 3, 3, 3, &v[4], 1, 1));
    const Values pooled = ref_max_pool(conv, 2, 2, 3, 2, 2);
    Values joined = pooled;
    joined.insert(joined.end(), h1.begin(), h1.end());
    Values out = ref_matmul(joined, v[5], 1, 11, 2);
    for (int i = 0; i < 2; ++i) out[i] += v[6][i];
    return out;
  };
  return c;
}

bool inside_rect(const OrientedRect& r, double px, double py) {
  const double t = r.theta * M_PI / 180.0;
  const double dx = px - r.x, dy = py - r.y;
  const double u = dx * std::cos(t) + dy * std::sin(t);
  const double v = -dx * std::sin(t) + dy * std::cos(t);
  return std::abs(u) <= 0.5 * r.w && std::abs(v) <= 0.5 * r.h;
}

double raster_jaccard(const OrientedRect& a, const OrientedRect& b, int grid) {
  auto extent = [](const OrientedRect& r) {
    const double t = r.theta * M_PI / 180.0;
    const double ex = 0.5 * (std::abs(r.w * std::cos(t)) + std::abs(r.h * std::sin(t)));
    const double ey = 0.5 * (std::abs(r.w * std::sin(t)) + std::abs(r.h * std::cos(t)));
    return std::array<double, 4>{r.x - ex, r.y - ey, r.x + ex, r.y + ey};
  };
  const auto ea = extent(a), eb = extent(b);
  const double x0 = std::min(ea[0], eb[0]), y0 = std::min(ea[1], eb[1]);
  const double x1 = std::max(ea[2], eb[2]), y1 = std::max(ea[3], eb[3]);
  const double sx = (x1 - x0) / grid, sy = (y1 - y0) / grid;
  // inside_rect with the trigonometry hoisted out of the sampling loop.
  struct Frame {
    double x, y, c, s, hw, hh;
    bool contains(double px, double py) const {
      const double dx = px - x, dy = py - y;
      return std::abs(dx * c + dy * s) <= hw && std::abs(-dx * s + dy * c) <= hh;
    }
  };
  auto frame = [](const OrientedRect& r) {
    const double t = r.theta * M_PI / 180.0;
    return Frame{r.x, r.y, std::cos(t), std::sin(t), 0.5 * r.w, 0.5 * r.h};
  };
  const Frame fa = frame(a), fb = frame(b);
  long in_a = 0, in_b = 0, both = 0;
  for (int j = 0; j < grid; ++j) {
    const double py = y0 + (j + 0.5) * sy;
    for (int i = 0; i < grid; ++i) {
      const double px = x0 + (i + 0.5) * sx;
      const bool ia = fa.contains(px, py), ib = fb.contains(px, py);
      in_a += ia;
      in_b += ib;
      both += ia && ib;
    }
  }
  const long uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

double brute_angle_error(double a, double b) {
  double best = 1e300;
  for (int k = -12; k <= 12; ++k) best = std::min(best, std::abs(a - b + 180.0 * k));
  return best;
}

bool brute_is_correct(const OrientedRect& pred, std::span<const OrientedRect> gts,
                      const std::function<double(const OrientedRect&, const OrientedRect&)>& jaccard) {
  bool any = false;
  for (const auto& g : gts) {
    const bool overlap = jaccard(pred, g) > 0.25;
    const bool aligned = brute_angle_error(pred.theta, g.theta) < 30.0;
    any = any || (overlap && aligned);
  }
  return any;
}

OrientedRect random_rect(Rng& rng, double extent) {
  const double x = rng.uniform(0.0, extent), y = rng.uniform(0.0, extent);
  const double w = rng.uniform(4.0, 0.5 * extent), h = rng.uniform(4.0, 0.5 * extent);
  return OrientedRect(x, y, w, h, rng.uniform(0.0, 180.0));
}

double bce_with_logit(double z, double p) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  // Direct form while the sigmoid is representable; the stable form otherwise.
  if (s > 1e-12 && s < 1.0 - 1e-12) return -(p * std::log(s) + (1.0 - p) * std::log(1.0 - s));
  return std::max(z, 0.0) - z * p + std::log1p(std::exp(-std::abs(z)));
}

double smooth_l1(double d, double beta) {
  const double a = std::abs(d);
  return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}

double rpn_loss(std::span<const float> logits, std::span<const float> deltas,
                std::span<const float> labels, std::span<const float> targets, double n_cls,
                double n_reg) {
  double cls = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    cls += bce_with_logit(logits[i], labels[i]);
    double r = 0.0;
    for (int k = 0; k < 4; ++k) r += smooth_l1(double(deltas[i * 4 + k]) - targets[i * 4 + k]);
    reg += labels[i] * r;
  }
  return cls / n_cls + reg / n_reg;
}

double roi_loss(std::span<const float> logits, std::span<const float> deltas,
                std::span<const int> labels, std::span<const float> targets, double n_cls,
                double n_reg) {
  const std::size_t classes = logits.size() / labels.size();
  double cls = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double m = -1e300;
    for (std::size_t c = 0; c < classes; ++c) m = std::max(m, double(logits[i * classes + c]));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(logits[i * classes + c] - m);
    cls += m + std::log(z) - logits[i * classes + labels[i]];
    if (labels[i] != 0) {
      for (int k = 0; k < 4; ++k) reg += smooth_l1(double(deltas[i * 4 + k]) - targets[i * 4 + k]);
    }
  }
  return cls / n_cls + reg / n_reg;
}

std::pair<double, double> precision_recall(const std::vector<ScoredQuery>& queries, int k) {
  double p = 0.0, r = 0.0;
  for (const auto& q : queries) {
    const std::size_t m = std::min<std::size_t>(k, q.correct.size());
    const auto hits = std::count(q.correct.begin(), q.correct.begin() + m, true);
    if (m > 0) p += static_cast<double>(hits) / static_cast<double>(m);
    if (hits > 0) r += 1.0;
  }
  return {p / queries.size(), r / queries.size()};
}

double bilinear_sample(const Values& fmap, int h, int w, int d, double y, double x, int channel) {
  const double u = std::min(std::max(y - 0.5, 0.0), double(h - 1));
  const double v = std::min(std::max(x - 0.5, 0.0), double(w - 1));
  const int r0 = static_cast<int>(u), c0 = static_cast<int>(v);
  const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
  const double fy = u - r0, fx = v - c0;
  auto at = [&](int r, int c) { return fmap[(r * w + c) * d + channel]; };
  return (1 - fy) * ((1 - fx) * at(r0, c0) + fx * at(r0, c1)) +
         fy * ((1 - fx) * at(r1, c0) + fx * at(r1, c1));
}

}  // namespace oracle
