#include "vnp/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "vnp/error.hpp"

namespace vnp {

namespace {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatMap = Eigen::Map<RowMat<S>>;
template <class S>
using CMatMap = Eigen::Map<const RowMat<S>>;

template <class S>
MatMap<S> as_mat(Tensor<S>& t) {
  return MatMap<S>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <class S>
CMatMap<S> as_mat(const Tensor<S>& t) {
  return CMatMap<S>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Shape mat(std::size_t r, std::size_t c) { return Shape{r, c}; }

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

template <class S>
void check_same_graph(std::string_view op, Var<S> a, Var<S> b) {
  if (a.graph != b.graph) throw Error(std::string(op) + ": operands live on different graphs");
}

template <class S, class F, class DA, class DB>
Var<S> broadcast_binary(std::string_view op, Var<S> a, Var<S> b, F f, DA da, DB db) {
  check_same_graph(op, a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t ra = av.rows(), ca = av.cols(), rb = bv.rows(), cb = bv.cols();
  if ((ra != rb && ra != 1 && rb != 1) || (ca != cb && ca != 1 && cb != 1)) shape_error(op, av.shape(), bv.shape());
  const std::size_t r = std::max(ra, rb), c = std::max(ca, cb);
  Tensor<S> out(av.shape() == bv.shape() ? av.shape() : mat(r, c));
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ia = ra == 1 ? 0 : i, ib = rb == 1 ? 0 : i;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = f(av[ia * ca + (ca == 1 ? 0 : j)], bv[ib * cb + (cb == 1 ? 0 : j)]);
    }
  }
  return a.graph->record(op, std::move(out), {a, b}, [a, b, r, c, ra, ca, rb, cb, da, db](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    Tensor<S>* ga = g.needs_grad(a) ? &g.grad_buffer(a.id) : nullptr;
    Tensor<S>* gb = g.needs_grad(b) ? &g.grad_buffer(b.id) : nullptr;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t ia = ra == 1 ? 0 : i, ib = rb == 1 ? 0 : i;
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t ka = ia * ca + (ca == 1 ? 0 : j), kb = ib * cb + (cb == 1 ? 0 : j);
        const S gij = go[i * c + j];
        if (ga) (*ga)[ka] += gij * da(av[ka], bv[kb]);
        if (gb) (*gb)[kb] += gij * db(av[ka], bv[kb]);
      }
    }
  });
}

/// Elementwise unary op; dfn(x) is the derivative at input x.
template <class S, class F, class D>
Var<S> unary(std::string_view op, Var<S> x, F f, D dfn) {
  const auto& xv = x.value();
  Tensor<S> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Var<S> y = x.graph->record(op, std::move(out), {x}, [x, dfn](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    const auto& xv = g.value(x);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += go[i] * dfn(xv[i]);
  });
  return y;
}

template <class S>
S softplus_value(S x) {
  return std::max(x, S{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <class S>
S sigmoid_value(S x) {
  if (x >= 0) return S{1} / (S{1} + std::exp(-x));
  const S e = std::exp(x);
  return e / (S{1} + e);
}

void check_axis(std::string_view op, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError(std::string(op) + ": axis must be 0 or 1, got " + std::to_string(axis));
}

void check_segments(std::string_view op, const Segments& seg, std::size_t rows) {
  if (seg.rows() != rows) {
    throw ShapeError(std::string(op) + ": segments cover " + std::to_string(seg.rows()) + " rows but input has " +
                     std::to_string(rows));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Segments

Segments::Segments(std::vector<std::size_t> offsets) : offsets_(std::move(offsets)) {
  if (offsets_.empty() || offsets_.front() != 0) throw ShapeError("segments: offsets must start at 0");
  for (std::size_t i = 1; i < offsets_.size(); ++i) {
    if (offsets_[i] < offsets_[i - 1]) throw ShapeError("segments: offsets must be non-decreasing");
  }
}

Segments Segments::uniform(std::size_t count, std::size_t rows_each) {
  std::vector<std::size_t> off(count + 1);
  for (std::size_t i = 0; i <= count; ++i) off[i] = i * rows_each;
  return Segments(std::move(off));
}

Segments Segments::from_sizes(std::span<const std::size_t> sizes) {
  std::vector<std::size_t> off(sizes.size() + 1, 0);
  for (std::size_t i = 0; i < sizes.size(); ++i) off[i + 1] = off[i] + sizes[i];
  return Segments(std::move(off));
}

std::vector<std::size_t> Segments::row_owner() const {
  std::vector<std::size_t> owner(rows());
  for (std::size_t s = 0; s < count(); ++s)
    for (std::size_t r = begin(s); r < end(s); ++r) owner[r] = s;
  return owner;
}

// ---------------------------------------------------------------------------
// Elementwise

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  return broadcast_binary<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S{1}; }, [](S, S) { return S{1}; });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  return broadcast_binary<S>(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S{1}; }, [](S, S) { return S{-1}; });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  return broadcast_binary<S>(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; }, [](S x, S) { return x; });
}

template <class S>
Var<S> scale(Var<S> x, double c) {
  const S k = static_cast<S>(c);
  return unary<S>("scale", x, [k](S v) { return k * v; }, [k](S) { return k; });
}

template <class S>
Var<S> add_scalar(Var<S> x, double c) {
  const S k = static_cast<S>(c);
  return unary<S>("add_scalar", x, [k](S v) { return v + k; }, [](S) { return S{1}; });
}

template <class S>
Var<S> relu(Var<S> x) {
  const auto& xv = x.value();
  double margin = std::numeric_limits<double>::infinity();
  std::uint64_t pattern = 0xcbf29ce484222325ull;
  for (S v : xv.data()) {
    margin = std::min(margin, static_cast<double>(std::abs(v)));
    pattern = (pattern ^ (v > 0 ? 1u : 0u)) * 0x100000001b3ull;
  }
  x.graph->note_relu(margin, pattern);
  return unary<S>("relu", x, [](S v) { return v > 0 ? v : S{0}; }, [](S v) { return v > 0 ? S{1} : S{0}; });
}

template <class S>
Var<S> softplus(Var<S> x) {
  return unary<S>("softplus", x, [](S v) { return softplus_value(v); }, [](S v) { return sigmoid_value(v); });
}

template <class S>
Var<S> sigmoid(Var<S> x) {
  return unary<S>("sigmoid", x, [](S v) { return sigmoid_value(v); },
                  [](S v) {
                    const S s = sigmoid_value(v);
                    return s * (S{1} - s);
                  });
}

template <class S>
Var<S> exp(Var<S> x) {
  return unary<S>("exp", x, [](S v) { return std::exp(v); }, [](S v) { return std::exp(v); });
}

template <class S>
Var<S> log(Var<S> x) {
  for (S v : x.value().data())
    if (!(v > 0)) throw NumericError("log: non-positive input");
  return unary<S>("log", x, [](S v) { return std::log(v); }, [](S v) { return S{1} / v; });
}

template <class S>
Var<S> square(Var<S> x) {
  return unary<S>("square", x, [](S v) { return v * v; }, [](S v) { return S{2} * v; });
}

// ---------------------------------------------------------------------------
// Matrix products

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  check_same_graph("matmul", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av.shape(), bv.shape());
  Tensor<S> out(mat(av.rows(), bv.cols()));
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  return a.graph->record("matmul", std::move(out), {a, b}, [a, b](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    if (g.needs_grad(a)) as_mat(g.grad_buffer(a.id)).noalias() += as_mat(go) * as_mat(g.value(b)).transpose();
    if (g.needs_grad(b)) as_mat(g.grad_buffer(b.id)).noalias() += as_mat(g.value(a)).transpose() * as_mat(go);
  });
}

template <class S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  check_same_graph("linear", x, w);
  check_same_graph("linear", x, b);
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  if (xv.cols() != wv.rows()) shape_error("linear", xv.shape(), wv.shape());
  if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("linear", wv.shape(), bv.shape());
  const std::size_t rows = xv.rows(), out_cols = wv.cols();
  Tensor<S> out(mat(rows, out_cols));
  auto om = as_mat(out);
  om.noalias() = as_mat(xv) * as_mat(wv);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out_cols; ++j) out[i * out_cols + j] += bv[j];
  return x.graph->record("linear", std::move(out), {x, w, b}, [x, w, b](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    if (g.needs_grad(x)) as_mat(g.grad_buffer(x.id)).noalias() += as_mat(go) * as_mat(g.value(w)).transpose();
    if (g.needs_grad(w)) as_mat(g.grad_buffer(w.id)).noalias() += as_mat(g.value(x)).transpose() * as_mat(go);
    if (g.needs_grad(b)) {
      auto& gb = g.grad_buffer(b.id);
      const std::size_t r = go.rows(), c = go.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += go[i * c + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax and reductions

template <class S>
Var<S> softmax(Var<S> x, int axis) {
  check_axis("softmax", axis);
  const auto& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  // Iterate lines of length n with stride `step` between elements.
  const std::size_t lines = axis == 1 ? r : c, n = axis == 1 ? c : r;
  const std::size_t line_stride = axis == 1 ? c : 1, step = axis == 1 ? 1 : c;
  Tensor<S> out(xv.shape());
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_stride;
    S mx = -std::numeric_limits<S>::infinity();
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xv[base + k * step]);
    S total = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const S e = std::exp(xv[base + k * step] - mx);
      out[base + k * step] = e;
      total += e;
    }
    for (std::size_t k = 0; k < n; ++k) out[base + k * step] /= total;
  }
  return x.graph->record("softmax", std::move(out), {x},
                         [x, lines, n, line_stride, step](Graph<S>& g, const Tensor<S>& y, const Tensor<S>& go) {
                           auto& gx = g.grad_buffer(x.id);
                           for (std::size_t l = 0; l < lines; ++l) {
                             const std::size_t base = l * line_stride;
                             S dot = 0;
                             for (std::size_t k = 0; k < n; ++k) dot += go[base + k * step] * y[base + k * step];
                             for (std::size_t k = 0; k < n; ++k) {
                               const std::size_t idx = base + k * step;
                               gx[idx] += y[idx] * (go[idx] - dot);
                             }
                           }
                         });
}

template <class S>
Var<S> sum(Var<S> x) {
  const auto& xv = x.value();
  S total = 0;
  for (S v : xv.data()) total += v;
  return x.graph->record("sum", Tensor<S>::scalar(total), {x}, [x](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    auto& gx = g.grad_buffer(x.id);
    const S gv = go[0];
    for (auto& v : gx.data()) v += gv;
  });
}

template <class S>
Var<S> mean(Var<S> x) {
  const auto& xv = x.value();
  if (xv.size() == 0) throw ShapeError("mean: empty input");
  S total = 0;
  for (S v : xv.data()) total += v;
  const S n = static_cast<S>(xv.size());
  return x.graph->record("mean", Tensor<S>::scalar(total / n), {x}, [x, n](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    auto& gx = g.grad_buffer(x.id);
    const S gv = go[0] / n;
    for (auto& v : gx.data()) v += gv;
  });
}

template <class S>
Var<S> mean_pool(Var<S> x, int axis) {
  check_axis("mean_pool", axis);
  const auto& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if ((axis == 0 && r == 0) || (axis == 1 && c == 0)) throw ShapeError("mean_pool: empty reduction axis");
  Tensor<S> out(axis == 0 ? mat(1, c) : mat(r, 1));
  if (axis == 0) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += xv[i * c + j];
    for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<S>(r);
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      S total = 0;
      for (std::size_t j = 0; j < c; ++j) total += xv[i * c + j];
      out[i] = total / static_cast<S>(c);
    }
  }
  return x.graph->record("mean_pool", std::move(out), {x}, [x, axis, r, c](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        gx[i * c + j] += axis == 0 ? go[j] / static_cast<S>(r) : go[i] / static_cast<S>(c);
  });
}

template <class S>
Var<S> sum_cols(Var<S> x) {
  const auto& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor<S> out(mat(r, 1));
  for (std::size_t i = 0; i < r; ++i) {
    S total = 0;
    for (std::size_t j = 0; j < c; ++j) total += xv[i * c + j];
    out[i] = total;
  }
  return x.graph->record("sum_cols", std::move(out), {x}, [x, r, c](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += go[i];
  });
}

template <class S>
Var<S> segment_sum(Var<S> x, const Segments& seg) {
  const auto& xv = x.value();
  check_segments("segment_sum", seg, xv.rows());
  const std::size_t c = xv.cols(), b = seg.count();
  Tensor<S> out(mat(b, c));
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t i = seg.begin(s); i < seg.end(s); ++i)
      for (std::size_t j = 0; j < c; ++j) out[s * c + j] += xv[i * c + j];
  return x.graph->record("segment_sum", std::move(out), {x}, [x, seg, c](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t s = 0; s < seg.count(); ++s)
      for (std::size_t i = seg.begin(s); i < seg.end(s); ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += go[s * c + j];
  });
}

template <class S>
Var<S> segment_mean(Var<S> x, const Segments& seg) {
  const auto& xv = x.value();
  check_segments("segment_mean", seg, xv.rows());
  const std::size_t c = xv.cols(), b = seg.count();
  for (std::size_t s = 0; s < b; ++s)
    if (seg.size(s) == 0) throw ShapeError("segment_mean: segment " + std::to_string(s) + " is empty");
  Tensor<S> out(mat(b, c));
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = seg.begin(s); i < seg.end(s); ++i)
      for (std::size_t j = 0; j < c; ++j) out[s * c + j] += xv[i * c + j];
    const S n = static_cast<S>(seg.size(s));
    for (std::size_t j = 0; j < c; ++j) out[s * c + j] /= n;
  }
  return x.graph->record("segment_mean", std::move(out), {x}, [x, seg, c](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t s = 0; s < seg.count(); ++s) {
      const S n = static_cast<S>(seg.size(s));
      for (std::size_t i = seg.begin(s); i < seg.end(s); ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += go[s * c + j] / n;
    }
  });
}

template <class S>
Var<S> gather_rows(Var<S> x, std::vector<std::size_t> index) {
  const auto& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor<S> out(mat(index.size(), c));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= r) throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range");
    std::copy_n(xv.ptr() + index[i] * c, c, out.ptr() + i * c);
  }
  return x.graph->record("gather_rows", std::move(out), {x},
                         [x, index = std::move(index), c](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
                           auto& gx = g.grad_buffer(x.id);
                           for (std::size_t i = 0; i < index.size(); ++i)
                             for (std::size_t j = 0; j < c; ++j) gx[index[i] * c + j] += go[i * c + j];
                         });
}

// ---------------------------------------------------------------------------
// Shape ops

template <class S>
Var<S> concat(const std::vector<Var<S>>& parts, int axis) {
  check_axis("concat", axis);
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Graph<S>* graph = parts.front().graph;
  std::size_t r = 0, c = 0;
  for (const auto& p : parts) {
    check_same_graph("concat", parts.front(), p);
    const auto& v = p.value();
    if (axis == 1) {
      if (&p != &parts.front() && v.rows() != r) shape_error("concat", parts.front().shape(), v.shape());
      r = v.rows();
      c += v.cols();
    } else {
      if (&p != &parts.front() && v.cols() != c) shape_error("concat", parts.front().shape(), v.shape());
      c = v.cols();
      r += v.rows();
    }
  }
  Tensor<S> out(mat(r, c));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) {
        const std::size_t oi = axis == 1 ? i : offset + i, oj = axis == 1 ? offset + j : j;
        out[oi * c + oj] = v[i * v.cols() + j];
      }
    offset += axis == 1 ? v.cols() : v.rows();
  }
  return graph->record("concat", std::move(out), parts, [parts, axis, c](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const auto& v = g.value(p);
      if (g.needs_grad(p)) {
        auto& gp = g.grad_buffer(p.id);
        for (std::size_t i = 0; i < v.rows(); ++i)
          for (std::size_t j = 0; j < v.cols(); ++j) {
            const std::size_t oi = axis == 1 ? i : off + i, oj = axis == 1 ? off + j : j;
            gp[i * v.cols() + j] += go[oi * c + oj];
          }
      }
      off += axis == 1 ? v.cols() : v.rows();
    }
  });
}

template <class S>
Var<S> slice_cols(Var<S> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (begin > end || end > c) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                     to_string(xv.shape()));
  }
  const std::size_t w = end - begin;
  Tensor<S> out(mat(r, w));
  for (std::size_t i = 0; i < r; ++i) std::copy_n(xv.ptr() + i * c + begin, w, out.ptr() + i * w);
  return x.graph->record("slice_cols", std::move(out), {x}, [x, begin, w, r, c](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += go[i * w + j];
  });
}

// ---------------------------------------------------------------------------
// Normalization and attention

template <class S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, double eps) {
  check_same_graph("layer_norm", x, gamma);
  check_same_graph("layer_norm", x, beta);
  const auto& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gamma.value().size() != c || beta.value().size() != c) shape_error("layer_norm", xv.shape(), gamma.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<S> out(xv.shape());
  std::vector<S> xhat(r * c), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    S mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
    mu /= static_cast<S>(c);
    S var = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const S d = xv[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<S>(c);
    inv_std[i] = S{1} / std::sqrt(var + static_cast<S>(eps));
    for (std::size_t j = 0; j < c; ++j) {
      const S h = (xv[i * c + j] - mu) * inv_std[i];
      xhat[i * c + j] = h;
      out[i * c + j] = h * gv[j] + bv[j];
    }
  }
  return x.graph->record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
        const auto& gv = g.value(gamma);
        if (g.needs_grad(gamma) || g.needs_grad(beta)) {
          auto* gg = g.needs_grad(gamma) ? &g.grad_buffer(gamma.id) : nullptr;
          auto* gb = g.needs_grad(beta) ? &g.grad_buffer(beta.id) : nullptr;
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              if (gg) (*gg)[j] += go[i * c + j] * xhat[i * c + j];
              if (gb) (*gb)[j] += go[i * c + j];
            }
        }
        if (g.needs_grad(x)) {
          auto& gx = g.grad_buffer(x.id);
          for (std::size_t i = 0; i < r; ++i) {
            S m1 = 0, m2 = 0;
            for (std::size_t j = 0; j < c; ++j) {
              const S dh = go[i * c + j] * gv[j];
              m1 += dh;
              m2 += dh * xhat[i * c + j];
            }
            m1 /= static_cast<S>(c);
            m2 /= static_cast<S>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const S dh = go[i * c + j] * gv[j];
              gx[i * c + j] += inv_std[i] * (dh - m1 - xhat[i * c + j] * m2);
            }
          }
        }
      });
}

template <class S>
Var<S> multihead_attention(Var<S> q, Var<S> k, Var<S> v, std::size_t heads, const Segments& q_seg,
                           const Segments& kv_seg) {
  check_same_graph("attention", q, k);
  check_same_graph("attention", q, v);
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t d = qv.cols();
  if (kv.cols() != d || vv.cols() != d) shape_error("attention", qv.shape(), kv.shape());
  if (kv.rows() != vv.rows()) shape_error("attention", kv.shape(), vv.shape());
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible into " + std::to_string(heads) + " heads");
  }
  check_segments("attention", q_seg, qv.rows());
  check_segments("attention", kv_seg, kv.rows());
  if (q_seg.count() != kv_seg.count()) {
    throw ShapeError("attention: " + std::to_string(q_seg.count()) + " query sets vs " +
                     std::to_string(kv_seg.count()) + " key sets");
  }
  const std::size_t dh = d / heads;
  const S scale_factor = S{1} / std::sqrt(static_cast<S>(dh));

  // Attention probabilities for every (set, head) block, kept for backward.
  std::vector<std::size_t> p_offset(q_seg.count() * heads + 1, 0);
  for (std::size_t b = 0; b < q_seg.count(); ++b) {
    if (q_seg.size(b) > 0 && kv_seg.size(b) == 0) throw ShapeError("attention: empty key set " + std::to_string(b));
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t idx = b * heads + h;
      p_offset[idx + 1] = p_offset[idx] + q_seg.size(b) * kv_seg.size(b);
    }
  }
  std::vector<S> probs(p_offset.back());

  Tensor<S> out(mat(qv.rows(), d));
  auto qm = as_mat(qv);
  auto km = as_mat(kv);
  auto vm = as_mat(vv);
  auto om = as_mat(out);
  using Index = Eigen::Index;
  for (std::size_t b = 0; b < q_seg.count(); ++b) {
    const Index q0 = static_cast<Index>(q_seg.begin(b)), nq = static_cast<Index>(q_seg.size(b));
    const Index k0 = static_cast<Index>(kv_seg.begin(b)), nk = static_cast<Index>(kv_seg.size(b));
    if (nq == 0) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      const Index c0 = static_cast<Index>(h * dh), w = static_cast<Index>(dh);
      Eigen::Map<RowMat<S>> p(probs.data() + p_offset[b * heads + h], nq, nk);
      p.noalias() = qm.block(q0, c0, nq, w) * km.block(k0, c0, nk, w).transpose();
      for (Index i = 0; i < nq; ++i) {
        S mx = -std::numeric_limits<S>::infinity();
        for (Index j = 0; j < nk; ++j) mx = std::max(mx, p(i, j) * scale_factor);
        S total = 0;
        for (Index j = 0; j < nk; ++j) {
          const S e = std::exp(p(i, j) * scale_factor - mx);
          p(i, j) = e;
          total += e;
        }
        for (Index j = 0; j < nk; ++j) p(i, j) /= total;
      }
      om.block(q0, c0, nq, w).noalias() = p * vm.block(k0, c0, nk, w);
    }
  }

  return q.graph->record(
      "attention", std::move(out), {q, k, v},
      [q, k, v, heads, dh, scale_factor, q_seg, kv_seg, p_offset = std::move(p_offset),
       probs = std::move(probs)](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
        using Index = Eigen::Index;
        auto qm = as_mat(g.value(q));
        auto km = as_mat(g.value(k));
        auto vm = as_mat(g.value(v));
        auto gom = as_mat(go);
        const bool need_q = g.needs_grad(q), need_k = g.needs_grad(k), need_v = g.needs_grad(v);
        Tensor<S>* gq = need_q ? &g.grad_buffer(q.id) : nullptr;
        Tensor<S>* gk = need_k ? &g.grad_buffer(k.id) : nullptr;
        Tensor<S>* gv = need_v ? &g.grad_buffer(v.id) : nullptr;
        RowMat<S> dp, ds;
        for (std::size_t b = 0; b < q_seg.count(); ++b) {
          const Index q0 = static_cast<Index>(q_seg.begin(b)), nq = static_cast<Index>(q_seg.size(b));
          const Index k0 = static_cast<Index>(kv_seg.begin(b)), nk = static_cast<Index>(kv_seg.size(b));
          if (nq == 0) continue;
          for (std::size_t h = 0; h < heads; ++h) {
            const Index c0 = static_cast<Index>(h * dh), w = static_cast<Index>(dh);
            Eigen::Map<const RowMat<S>> p(probs.data() + p_offset[b * heads + h], nq, nk);
            auto go_blk = gom.block(q0, c0, nq, w);
            if (gv) as_mat(*gv).block(k0, c0, nk, w).noalias() += p.transpose() * go_blk;
            if (!gq && !gk) continue;
            dp.noalias() = go_blk * vm.block(k0, c0, nk, w).transpose();
            ds.resize(nq, nk);
            for (Index i = 0; i < nq; ++i) {
              S dot = 0;
              for (Index j = 0; j < nk; ++j) dot += dp(i, j) * p(i, j);
              for (Index j = 0; j < nk; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * scale_factor;
            }
            if (gq) as_mat(*gq).block(q0, c0, nq, w).noalias() += ds * km.block(k0, c0, nk, w);
            if (gk) as_mat(*gk).block(k0, c0, nk, w).noalias() += ds.transpose() * qm.block(q0, c0, nq, w);
          }
        }
      });
}

template <class S>
Var<S> scaled_dot_product_attention(Var<S> q, Var<S> k, Var<S> v) {
  return multihead_attention(q, k, v, 1, Segments::uniform(1, q.rows()), Segments::uniform(1, k.rows()));
}

// ---------------------------------------------------------------------------
// Sampling, modulation and densities

template <class S>
Var<S> gaussian_sample(Var<S> mu, Var<S> sigma, const Tensor<S>& noise) {
  check_same_graph("gaussian_sample", mu, sigma);
  const auto& mv = mu.value();
  const auto& sv = sigma.value();
  if (mv.shape() != sv.shape()) shape_error("gaussian_sample", mv.shape(), sv.shape());
  if (noise.shape() != mv.shape()) shape_error("gaussian_sample", mv.shape(), noise.shape());
  for (S s : sv.data())
    if (!(s > 0)) throw NumericError("gaussian_sample: sigma must be positive");
  Tensor<S> out(mv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[i] + sv[i] * noise[i];
  return mu.graph->record("gaussian_sample", std::move(out), {mu, sigma},
                          [mu, sigma, noise](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
                            if (g.needs_grad(mu)) {
                              auto& gm = g.grad_buffer(mu.id);
                              for (std::size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
                            }
                            if (g.needs_grad(sigma)) {
                              auto& gs = g.grad_buffer(sigma.id);
                              for (std::size_t i = 0; i < go.size(); ++i) gs[i] += go[i] * noise[i];
                            }
                          });
}

template <class S>
Var<S> modfc(Var<S> x, Var<S> style, Var<S> w, const Segments& seg, double eps) {
  check_same_graph("modfc", x, style);
  check_same_graph("modfc", x, w);
  const auto& xv = x.value();
  const auto& sv = style.value();
  const auto& wv = w.value();
  const std::size_t din = wv.rows(), dout = wv.cols(), rows = xv.rows(), b = seg.count();
  if (xv.cols() != din) shape_error("modfc", xv.shape(), wv.shape());
  if (sv.rows() != b || sv.cols() != din) shape_error("modfc", sv.shape(), wv.shape());
  check_segments("modfc", seg, rows);
  const auto owner = seg.row_owner();

  // out = ((x * s) W) / sqrt((s*s)(W*W) + eps), the demodulated product
  // without materialising one weight matrix per set.
  Tensor<S> xs(mat(rows, din));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < din; ++j) xs[i * din + j] = xv[i * din + j] * sv[owner[i] * din + j];
  Tensor<S> s2(mat(b, din)), w2(mat(din, dout));
  for (std::size_t i = 0; i < s2.size(); ++i) s2[i] = sv[i] * sv[i];
  for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = wv[i] * wv[i];
  Tensor<S> norm2(mat(b, dout));
  as_mat(norm2).noalias() = as_mat(s2) * as_mat(w2);
  Tensor<S> inv(mat(b, dout));
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = S{1} / std::sqrt(norm2[i] + static_cast<S>(eps));
  Tensor<S> proj(mat(rows, dout));
  as_mat(proj).noalias() = as_mat(xs) * as_mat(wv);
  Tensor<S> out(mat(rows, dout));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < dout; ++j) out[i * dout + j] = proj[i * dout + j] * inv[owner[i] * dout + j];

  return x.graph->record(
      "modfc", std::move(out), {x, style, w},
      [x, style, w, owner, din, dout, rows, b, xs = std::move(xs), s2 = std::move(s2), w2 = std::move(w2),
       inv = std::move(inv), proj = std::move(proj)](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
        const auto& xv = g.value(x);
        const auto& sv = g.value(style);
        const auto& wv = g.value(w);
        Tensor<S> dproj(mat(rows, dout));
        Tensor<S> dnorm2(mat(b, dout));
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < dout; ++j) {
            const std::size_t k = i * dout + j, kb = owner[i] * dout + j;
            dproj[k] = go[k] * inv[kb];
            dnorm2[kb] += go[k] * proj[k];
          }
        // d inv / d norm2 = -0.5 * inv^3
        for (std::size_t i = 0; i < dnorm2.size(); ++i) dnorm2[i] *= S{-0.5} * inv[i] * inv[i] * inv[i];

        const bool need_x = g.needs_grad(x), need_s = g.needs_grad(style), need_w = g.needs_grad(w);
        if (need_x || need_s) {
          Tensor<S> dxs(mat(rows, din));
          as_mat(dxs).noalias() = as_mat(dproj) * as_mat(wv).transpose();
          if (need_x) {
            auto& gx = g.grad_buffer(x.id);
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < din; ++j) gx[i * din + j] += dxs[i * din + j] * sv[owner[i] * din + j];
          }
          if (need_s) {
            auto& gs = g.grad_buffer(style.id);
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < din; ++j) gs[owner[i] * din + j] += dxs[i * din + j] * xv[i * din + j];
            Tensor<S> ds2(mat(b, din));
            as_mat(ds2).noalias() = as_mat(dnorm2) * as_mat(w2).transpose();
            for (std::size_t i = 0; i < ds2.size(); ++i) gs[i] += S{2} * sv[i] * ds2[i];
          }
        }
        if (need_w) {
          auto& gw = g.grad_buffer(w.id);
          as_mat(gw).noalias() += as_mat(xs).transpose() * as_mat(dproj);
          Tensor<S> dw2(mat(din, dout));
          as_mat(dw2).noalias() = as_mat(s2).transpose() * as_mat(dnorm2);
          for (std::size_t i = 0; i < dw2.size(); ++i) gw[i] += S{2} * wv[i] * dw2[i];
        }
      });
}

template <class S>
Tensor<S> modulated_weight(const Tensor<S>& w, const Tensor<S>& style, double eps) {
  const std::size_t din = w.rows(), dout = w.cols();
  if (style.size() != din) shape_error("modulated_weight", w.shape(), style.shape());
  Tensor<S> out(mat(din, dout));
  for (std::size_t j = 0; j < dout; ++j) {
    S total = 0;
    for (std::size_t i = 0; i < din; ++i) {
      const S m = style[i] * w[i * dout + j];
      out[i * dout + j] = m;
      total += m * m;
    }
    const S denom = std::sqrt(total + static_cast<S>(eps));
    for (std::size_t i = 0; i < din; ++i) out[i * dout + j] /= denom;
  }
  return out;
}

template <class S>
Var<S> gaussian_log_density(Var<S> y, Var<S> mu, Var<S> sigma) {
  check_same_graph("gaussian_log_density", y, mu);
  check_same_graph("gaussian_log_density", y, sigma);
  const auto& yv = y.value();
  const auto& mv = mu.value();
  const auto& sv = sigma.value();
  if (yv.shape() != mv.shape()) shape_error("gaussian_log_density", yv.shape(), mv.shape());
  if (yv.shape() != sv.shape()) shape_error("gaussian_log_density", yv.shape(), sv.shape());
  const S half_log_2pi = static_cast<S>(0.5 * std::log(2.0 * std::numbers::pi));
  Tensor<S> out(yv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(sv[i] > 0)) throw NumericError("gaussian_log_density: sigma must be positive");
    const S z = (yv[i] - mv[i]) / sv[i];
    out[i] = -half_log_2pi - std::log(sv[i]) - S{0.5} * z * z;
  }
  return y.graph->record("gaussian_log_density", std::move(out), {y, mu, sigma},
                         [y, mu, sigma](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
                           const auto& yv = g.value(y);
                           const auto& mv = g.value(mu);
                           const auto& sv = g.value(sigma);
                           Tensor<S>* gy = g.needs_grad(y) ? &g.grad_buffer(y.id) : nullptr;
                           Tensor<S>* gm = g.needs_grad(mu) ? &g.grad_buffer(mu.id) : nullptr;
                           Tensor<S>* gs = g.needs_grad(sigma) ? &g.grad_buffer(sigma.id) : nullptr;
                           for (std::size_t i = 0; i < go.size(); ++i) {
                             const S z = (yv[i] - mv[i]) / sv[i];
                             if (gy) (*gy)[i] -= go[i] * z / sv[i];
                             if (gm) (*gm)[i] += go[i] * z / sv[i];
                             if (gs) (*gs)[i] += go[i] * (z * z - S{1}) / sv[i];
                           }
                         });
}

template <class S>
Var<S> kl_diag_gaussian(Var<S> mq, Var<S> sq, Var<S> mp, Var<S> sp) {
  check_same_graph("kl_diag_gaussian", mq, sq);
  check_same_graph("kl_diag_gaussian", mq, mp);
  check_same_graph("kl_diag_gaussian", mq, sp);
  const auto& a = mq.value();
  for (const auto* t : {&sq.value(), &mp.value(), &sp.value()})
    if (t->shape() != a.shape()) shape_error("kl_diag_gaussian", a.shape(), t->shape());
  const auto& sqv = sq.value();
  const auto& mpv = mp.value();
  const auto& spv = sp.value();
  Tensor<S> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(sqv[i] > 0) || !(spv[i] > 0)) throw NumericError("kl_diag_gaussian: sigma must be positive");
    const S dm = a[i] - mpv[i];
    out[i] = std::log(spv[i] / sqv[i]) + (sqv[i] * sqv[i] + dm * dm) / (S{2} * spv[i] * spv[i]) - S{0.5};
  }
  return mq.graph->record("kl_diag_gaussian", std::move(out), {mq, sq, mp, sp},
                          [mq, sq, mp, sp](Graph<S>& g, const Tensor<S>&, const Tensor<S>& go) {
                            const auto& mqv = g.value(mq);
                            const auto& sqv = g.value(sq);
                            const auto& mpv = g.value(mp);
                            const auto& spv = g.value(sp);
                            Tensor<S>* gmq = g.needs_grad(mq) ? &g.grad_buffer(mq.id) : nullptr;
                            Tensor<S>* gsq = g.needs_grad(sq) ? &g.grad_buffer(sq.id) : nullptr;
                            Tensor<S>* gmp = g.needs_grad(mp) ? &g.grad_buffer(mp.id) : nullptr;
                            Tensor<S>* gsp = g.needs_grad(sp) ? &g.grad_buffer(sp.id) : nullptr;
                            for (std::size_t i = 0; i < go.size(); ++i) {
                              const S dm = mqv[i] - mpv[i];
                              const S vp = spv[i] * spv[i];
                              if (gmq) (*gmq)[i] += go[i] * dm / vp;
                              if (gmp) (*gmp)[i] -= go[i] * dm / vp;
                              if (gsq) (*gsq)[i] += go[i] * (sqv[i] / vp - S{1} / sqv[i]);
                              if (gsp) (*gsp)[i] += go[i] * (S{1} / spv[i] - (sqv[i] * sqv[i] + dm * dm) / (vp * spv[i]));
                            }
                          });
}

// ---------------------------------------------------------------------------

#define VNP_INSTANTIATE_OPS(S)                                                                                  \
  template Var<S> add(Var<S>, Var<S>);                                                                          \
  template Var<S> sub(Var<S>, Var<S>);                                                                          \
  template Var<S> mul(Var<S>, Var<S>);                                                                          \
  template Var<S> scale(Var<S>, double);                                                                        \
  template Var<S> add_scalar(Var<S>, double);                                                                   \
  template Var<S> relu(Var<S>);                                                                                 \
  template Var<S> softplus(Var<S>);                                                                             \
  template Var<S> sigmoid(Var<S>);                                                                              \
  template Var<S> exp(Var<S>);                                                                                  \
  template Var<S> log(Var<S>);                                                                                  \
  template Var<S> square(Var<S>);                                                                               \
  template Var<S> matmul(Var<S>, Var<S>);                                                                       \
  template Var<S> linear(Var<S>, Var<S>, Var<S>);                                                               \
  template Var<S> softmax(Var<S>, int);                                                                         \
  template Var<S> sum(Var<S>);                                                                                  \
  template Var<S> mean(Var<S>);                                                                                 \
  template Var<S> mean_pool(Var<S>, int);                                                                       \
  template Var<S> sum_cols(Var<S>);                                                                             \
  template Var<S> segment_sum(Var<S>, const Segments&);                                                         \
  template Var<S> segment_mean(Var<S>, const Segments&);                                                        \
  template Var<S> gather_rows(Var<S>, std::vector<std::size_t>);                                                \
  template Var<S> concat(const std::vector<Var<S>>&, int);                                                      \
  template Var<S> slice_cols(Var<S>, std::size_t, std::size_t);                                                 \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, double);                                                   \
  template Var<S> scaled_dot_product_attention(Var<S>, Var<S>, Var<S>);                                         \
  template Var<S> multihead_attention(Var<S>, Var<S>, Var<S>, std::size_t, const Segments&, const Segments&);   \
  template Var<S> gaussian_sample(Var<S>, Var<S>, const Tensor<S>&);                                            \
  template Var<S> modfc(Var<S>, Var<S>, Var<S>, const Segments&, double);                                       \
  template Tensor<S> modulated_weight(const Tensor<S>&, const Tensor<S>&, double);                              \
  template Var<S> gaussian_log_density(Var<S>, Var<S>, Var<S>);                                                 \
  template Var<S> kl_diag_gaussian(Var<S>, Var<S>, Var<S>, Var<S>);

VNP_INSTANTIATE_OPS(float)
VNP_INSTANTIATE_OPS(double)

#undef VNP_INSTANTIATE_OPS

}  // namespace vnp
