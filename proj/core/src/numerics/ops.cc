// Copyright 2026 The XSpan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xspan/numerics/ops.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_map>
#include <utility>

namespace xspan::numerics {
namespace {

using std::size_t;

std::atomic<double> g_ramp_gradient_factor{1.0};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const Tensor& x, int64_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(x.shape()));
  }
}

std::vector<double> copy_values(const Tensor& x) {
  return std::vector<double>(x.data().begin(), x.data().end());
}

// C[m x n] += A[m x k] . B[k x n]
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] . B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C[m x n] += A[k x m]^T . B[k x n]
void gemm_tn(const double* a, const double* b, double* c, int64_t k, int64_t m, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename F>
Tensor unary_map(const char* name, const Tensor& x, F&& value_fn,
                 std::function<double(double x, double y)> derivative) {
  std::vector<double> out(x.data().size());
  const auto xv = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = value_fn(xv[i]);
  return record_op(name, x.shape(), std::move(out), {x},
                   [x, derivative = std::move(derivative)](const detail::Node& o) {
                     double* gx = grad_target(x);
                     if (!gx) return;
                     const auto xv = x.data();
                     for (size_t i = 0; i < o.grad.size(); ++i) {
                       gx[i] += o.grad[i] * derivative(xv[i], o.data[i]);
                     }
                   });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

namespace testing_hooks {
void set_ramp_gradient_factor(double factor) { g_ramp_gradient_factor.store(factor); }
double ramp_gradient_factor() { return g_ramp_gradient_factor.load(); }
}  // namespace testing_hooks

Tensor record_op(const char* name, Shape shape, std::vector<double> values,
                 const std::vector<Tensor>& inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  Tape* tape = Tape::active();
  if (!tape) return out;
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs_grad) return out;
  out.node()->requires_grad = true;
  std::vector<Tape::NodePtr> nodes;
  nodes.reserve(inputs.size());
  for (const Tensor& t : inputs) nodes.push_back(t.node());
  const detail::Node* raw = out.node().get();
  tape->record(name, std::move(nodes), out.node(),
               [raw, fn = std::move(backward)] { fn(*raw); });
  return out;
}

double* grad_target(const Tensor& t) {
  if (!t.requires_grad()) return nullptr;
  return t.node()->ensure_grad().data();
}

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out = copy_values(a);
  const auto bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return record_op("add", a.shape(), std::move(out), {a, b}, [a, b](const detail::Node& o) {
    if (double* ga = grad_target(a)) {
      for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (double* gb = grad_target(b)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out = copy_values(a);
  const auto bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return record_op("sub", a.shape(), std::move(out), {a, b}, [a, b](const detail::Node& o) {
    if (double* ga = grad_target(a)) {
      for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (double* gb = grad_target(b)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out = copy_values(a);
  const auto bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return record_op("mul", a.shape(), std::move(out), {a, b}, [a, b](const detail::Node& o) {
    const auto av = a.data();
    const auto bv = b.data();
    if (double* ga = grad_target(a)) {
      for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * bv[i];
    }
    if (double* gb = grad_target(b)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * av[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out = copy_values(a);
  const auto bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  return record_op("div", a.shape(), std::move(out), {a, b}, [a, b](const detail::Node& o) {
    const auto bv = b.data();
    if (double* ga = grad_target(a)) {
      for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] / bv[i];
    }
    if (double* gb = grad_target(b)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i] * o.data[i] / bv[i];
    }
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out = copy_values(x);
  for (double& v : out) v += c;
  return record_op("add_scalar", x.shape(), std::move(out), {x}, [x](const detail::Node& o) {
    if (double* gx = grad_target(x)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out = copy_values(x);
  for (double& v : out) v *= c;
  return record_op("scale", x.shape(), std::move(out), {x}, [x, c](const detail::Node& o) {
    if (double* gx = grad_target(x)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * c;
    }
  });
}

Tensor add_row_vector(const Tensor& x, const Tensor& v) {
  require_rank(x, 2, "add_row_vector");
  require_rank(v, 1, "add_row_vector");
  const int64_t rows = x.dim(0);
  const int64_t cols = x.dim(1);
  if (v.dim(0) != cols) {
    throw DimensionError("add_row_vector: " + shape_string(x.shape()) + " + " +
                         shape_string(v.shape()));
  }
  std::vector<double> out = copy_values(x);
  const auto vv = v.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] += vv[c];
  }
  return record_op("add_row_vector", x.shape(), std::move(out), {x, v},
                   [x, v, rows, cols](const detail::Node& o) {
                     if (double* gx = grad_target(x)) {
                       for (size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
                     }
                     if (double* gv = grad_target(v)) {
                       for (int64_t r = 0; r < rows; ++r) {
                         for (int64_t c = 0; c < cols; ++c) gv[c] += o.grad[r * cols + c];
                       }
                     }
                   });
}

Tensor sigmoid(const Tensor& x) {
  return unary_map("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_map(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor clamp01ramp(const Tensor& x) {
  const double factor = g_ramp_gradient_factor.load();
  return unary_map(
      "clamp01ramp", x, [](double v) { return std::max(0.0, std::min(1.0, v)); },
      [factor](double v, double) { return (v > 0.0 && v < 1.0) ? factor : 0.0; });
}

// --- reductions and shape --------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return record_op("sum", Shape{}, {s}, {x}, [x](const detail::Node& o) {
    if (double* gx = grad_target(x)) {
      const double g = o.grad[0];
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  return record_op("reshape", std::move(shape), copy_values(x), {x}, [x](const detail::Node& o) {
    if (double* gx = grad_target(x)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const int64_t m = x.dim(0);
  const int64_t n = x.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  const auto xv = x.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  return record_op("transpose", Shape{n, m}, std::move(out), {x}, [x, m, n](const detail::Node& o) {
    if (double* gx = grad_target(x)) {
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[j * m + i];
      }
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const int64_t rank = parts.front().rank();
  if (rank != 1 && rank != 2) throw DimensionError("concat_rows: rank must be 1 or 2");
  const int64_t cols = rank == 2 ? parts.front().dim(1) : 1;
  int64_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank || (rank == 2 && p.dim(1) != cols)) {
      throw DimensionError("concat_rows: incompatible part " + shape_string(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows * cols));
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape = rank == 2 ? Shape{rows, cols} : Shape{rows};
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record_op("concat_rows", std::move(shape), std::move(out), inputs,
                   [inputs](const detail::Node& o) {
                     size_t offset = 0;
                     for (const Tensor& p : inputs) {
                       const auto n = static_cast<size_t>(p.numel());
                       if (double* gp = grad_target(p)) {
                         for (size_t i = 0; i < n; ++i) gp[i] += o.grad[offset + i];
                       }
                       offset += n;
                     }
                   });
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t length) {
  if (x.rank() != 1 && x.rank() != 2) throw DimensionError("slice_rows: rank must be 1 or 2");
  if (start < 0 || length < 0 || start + length > x.dim(0)) {
    throw DimensionError("slice_rows: range out of bounds for " + shape_string(x.shape()));
  }
  const int64_t cols = x.rank() == 2 ? x.dim(1) : 1;
  const auto xv = x.data();
  std::vector<double> out(xv.begin() + start * cols, xv.begin() + (start + length) * cols);
  Shape shape = x.rank() == 2 ? Shape{length, cols} : Shape{length};
  return record_op("slice_rows", std::move(shape), std::move(out), {x},
                   [x, start, cols](const detail::Node& o) {
                     if (double* gx = grad_target(x)) {
                       double* base = gx + start * cols;
                       for (size_t i = 0; i < o.grad.size(); ++i) base[i] += o.grad[i];
                     }
                   });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const int64_t rows = parts.front().dim(0);
  int64_t cols = 0;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw DimensionError("concat_cols: row count mismatch");
    cols += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(rows * cols));
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t pc = p.dim(1);
    const auto pv = p.data();
    for (int64_t r = 0; r < rows; ++r) {
      std::copy(pv.begin() + r * pc, pv.begin() + (r + 1) * pc, out.begin() + r * cols + offset);
    }
    offset += pc;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record_op("concat_cols", Shape{rows, cols}, std::move(out), inputs,
                   [inputs, rows, cols](const detail::Node& o) {
                     int64_t offset = 0;
                     for (const Tensor& p : inputs) {
                       const int64_t pc = p.dim(1);
                       if (double* gp = grad_target(p)) {
                         for (int64_t r = 0; r < rows; ++r) {
                           for (int64_t c = 0; c < pc; ++c) {
                             gp[r * pc + c] += o.grad[r * cols + offset + c];
                           }
                         }
                       }
                       offset += pc;
                     }
                   });
}

Tensor slice_cols(const Tensor& x, int64_t start, int64_t length) {
  require_rank(x, 2, "slice_cols");
  const int64_t rows = x.dim(0);
  const int64_t cols = x.dim(1);
  if (start < 0 || length < 0 || start + length > cols) {
    throw DimensionError("slice_cols: range out of bounds for " + shape_string(x.shape()));
  }
  std::vector<double> out(static_cast<size_t>(rows * length));
  const auto xv = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    std::copy(xv.begin() + r * cols + start, xv.begin() + r * cols + start + length,
              out.begin() + r * length);
  }
  return record_op("slice_cols", Shape{rows, length}, std::move(out), {x},
                   [x, rows, cols, start, length](const detail::Node& o) {
                     if (double* gx = grad_target(x)) {
                       for (int64_t r = 0; r < rows; ++r) {
                         for (int64_t c = 0; c < length; ++c) {
                           gx[r * cols + start + c] += o.grad[r * length + c];
                         }
                       }
                     }
                   });
}

namespace {

// Distinct source tensors of a gather, in first-seen order.
std::vector<Tensor> distinct_sources(std::span<const RowRef> refs) {
  std::vector<Tensor> sources;
  std::unordered_map<const detail::Node*, bool> seen;
  for (const RowRef& r : refs) {
    if (seen.emplace(r.source.node().get(), true).second) sources.push_back(r.source);
  }
  return sources;
}

}  // namespace

Tensor gather_rows(std::span<const RowRef> rows) {
  if (rows.empty()) throw DimensionError("gather_rows: no rows");
  const int64_t cols = rows.front().source.dim(1);
  std::vector<double> out;
  out.reserve(rows.size() * static_cast<size_t>(cols));
  for (const RowRef& r : rows) {
    require_rank(r.source, 2, "gather_rows");
    if (r.source.dim(1) != cols) throw DimensionError("gather_rows: column count mismatch");
    if (r.row < 0 || r.row >= r.source.dim(0)) throw DimensionError("gather_rows: row out of range");
    const auto sv = r.source.data();
    out.insert(out.end(), sv.begin() + r.row * cols, sv.begin() + (r.row + 1) * cols);
  }
  std::vector<RowRef> refs(rows.begin(), rows.end());
  const auto n = static_cast<int64_t>(refs.size());
  return record_op("gather_rows", Shape{n, cols}, std::move(out), distinct_sources(rows),
                   [refs = std::move(refs), cols](const detail::Node& o) {
                     for (size_t k = 0; k < refs.size(); ++k) {
                       double* gs = grad_target(refs[k].source);
                       if (!gs) continue;
                       double* dst = gs + refs[k].row * cols;
                       const double* src = o.grad.data() + k * cols;
                       for (int64_t c = 0; c < cols; ++c) dst[c] += src[c];
                     }
                   });
}

Tensor gather_elements(std::span<const RowRef> elements) {
  std::vector<double> out;
  out.reserve(elements.size());
  for (const RowRef& r : elements) {
    if (r.row < 0 || r.row >= r.source.numel()) {
      throw DimensionError("gather_elements: index out of range");
    }
    out.push_back(r.source.data()[static_cast<size_t>(r.row)]);
  }
  std::vector<RowRef> refs(elements.begin(), elements.end());
  const auto n = static_cast<int64_t>(refs.size());
  return record_op("gather_elements", Shape{n}, std::move(out), distinct_sources(elements),
                   [refs = std::move(refs)](const detail::Node& o) {
                     for (size_t k = 0; k < refs.size(); ++k) {
                       if (double* gs = grad_target(refs[k].source)) gs[refs[k].row] += o.grad[k];
                     }
                   });
}

Tensor repeat_rows(const Tensor& v, int64_t rows) {
  require_rank(v, 1, "repeat_rows");
  const int64_t cols = v.dim(0);
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r) out.insert(out.end(), v.data().begin(), v.data().end());
  return record_op("repeat_rows", Shape{rows, cols}, std::move(out), {v},
                   [v, rows, cols](const detail::Node& o) {
                     if (double* gv = grad_target(v)) {
                       for (int64_t r = 0; r < rows; ++r) {
                         for (int64_t c = 0; c < cols; ++c) gv[c] += o.grad[r * cols + c];
                       }
                     }
                   });
}

Tensor gather_table(const Tensor& table, std::span<const int64_t> index, Shape out_shape) {
  if (numel(out_shape) != static_cast<int64_t>(index.size())) {
    throw DimensionError("gather_table: index count does not match output shape");
  }
  const auto tv = table.data();
  std::vector<double> out(index.size());
  for (size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= table.numel()) {
      throw DimensionError("gather_table: index out of range");
    }
    out[k] = tv[static_cast<size_t>(index[k])];
  }
  std::vector<int64_t> idx(index.begin(), index.end());
  return record_op("gather_table", std::move(out_shape), std::move(out), {table},
                   [table, idx = std::move(idx)](const detail::Node& o) {
                     if (double* gt = grad_target(table)) {
                       for (size_t k = 0; k < idx.size(); ++k) gt[idx[k]] += o.grad[k];
                     }
                   });
}

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int64_t m = a.dim(0);
  const int64_t k = a.dim(1);
  const int64_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return record_op("matmul", Shape{m, n}, std::move(out), {a, b},
                   [a, b, m, k, n](const detail::Node& o) {
                     if (double* ga = grad_target(a)) gemm_nt(o.grad.data(), b.data().data(), ga, m, n, k);
                     if (double* gb = grad_target(b)) gemm_tn(a.data().data(), o.grad.data(), gb, m, k, n);
                   });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const int64_t m = a.dim(0);
  const int64_t k = a.dim(1);
  const int64_t n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return record_op("matmul_nt", Shape{m, n}, std::move(out), {a, b},
                   [a, b, m, k, n](const detail::Node& o) {
                     if (double* ga = grad_target(a)) gemm_nn(o.grad.data(), b.data().data(), ga, m, n, k);
                     if (double* gb = grad_target(b)) gemm_tn(o.grad.data(), a.data().data(), gb, m, n, k);
                   });
}

// --- normalization and probabilities ----------------------------------------

Tensor softmax(const Tensor& x, int64_t axis) {
  const int64_t rank = x.rank();
  if (rank == 0) throw DimensionError("softmax of a scalar");
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError("softmax: axis out of range");
  const Shape& s = x.shape();
  const int64_t len = s[static_cast<size_t>(axis)];
  if (len == 0) throw DimensionError("softmax over an empty axis");
  int64_t outer = 1;
  int64_t inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < rank; ++i) inner *= s[static_cast<size_t>(i)];

  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (int64_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (int64_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return record_op("softmax", s, std::move(out), {x},
                   [x, outer, inner, len](const detail::Node& o) {
                     double* gx = grad_target(x);
                     if (!gx) return;
                     for (int64_t oo = 0; oo < outer; ++oo) {
                       for (int64_t in = 0; in < inner; ++in) {
                         const int64_t base = oo * len * inner + in;
                         double dot = 0.0;
                         for (int64_t j = 0; j < len; ++j) {
                           dot += o.grad[base + j * inner] * o.data[base + j * inner];
                         }
                         for (int64_t j = 0; j < len; ++j) {
                           const int64_t k = base + j * inner;
                           gx[k] += o.data[k] * (o.grad[k] - dot);
                         }
                       }
                     }
                   });
}

Tensor masked_softmax(const Tensor& scores, const Tensor& mask) {
  require_rank(scores, 2, "masked_softmax");
  require_same_shape(scores, mask, "masked_softmax");
  const int64_t rows = scores.dim(0);
  const int64_t cols = scores.dim(1);
  const auto sv = scores.data();
  const auto mv = mask.data();
  std::vector<double> out(sv.size(), 0.0);
  // exp(s - c) / Z, kept for the mask gradient.
  auto unmasked = std::make_shared<std::vector<double>>(sv.size(), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int64_t j = 0; j < cols; ++j) {
      if (mv[base + j] > 0.0) {
        mx = std::max(mx, sv[base + j]);
        any = true;
      }
    }
    if (!any) {
      throw DegenerateRowError("masked_softmax: row " + std::to_string(r) +
                               " has no attendable entry");
    }
    double z = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double m = mv[base + j];
      if (m > 0.0) {
        const double e = std::exp(sv[base + j] - mx);
        (*unmasked)[base + j] = e;
        const double w = m * e;
        out[base + j] = w;
        z += w;
      }
    }
    if (!(z > 0.0)) {
      throw DegenerateRowError("masked_softmax: row " + std::to_string(r) + " has zero mass");
    }
    for (int64_t j = 0; j < cols; ++j) {
      if (mv[base + j] > 0.0) {
        out[base + j] /= z;
        (*unmasked)[base + j] /= z;
      }
    }
  }
  return record_op(
      "masked_softmax", scores.shape(), std::move(out), {scores, mask},
      [scores, mask, rows, cols, unmasked](const detail::Node& o) {
        double* gs = grad_target(scores);
        double* gm = grad_target(mask);
        const auto mv = mask.data();
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t base = r * cols;
          double dot = 0.0;
          for (int64_t j = 0; j < cols; ++j) dot += o.grad[base + j] * o.data[base + j];
          for (int64_t j = 0; j < cols; ++j) {
            const int64_t k = base + j;
            if (!(mv[k] > 0.0)) continue;
            const double centered = o.grad[k] - dot;
            if (gs) gs[k] += o.data[k] * centered;
            if (gm) gm[k] += (*unmasked)[k] * centered;
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(x, 2, "layer_norm");
  const int64_t rows = x.dim(0);
  const int64_t d = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
    throw DimensionError("layer_norm: parameter shape mismatch");
  }
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> out(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (int64_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int64_t c = 0; c < d; ++c) {
      const double h = (row[c] - mu) * rs;
      (*xhat)[r * d + c] = h;
      out[r * d + c] = h * gv[c] + bv[c];
    }
  }
  return record_op("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                   [x, gain, bias, rows, d, xhat, rstd](const detail::Node& o) {
                     double* gx = grad_target(x);
                     double* gg = grad_target(gain);
                     double* gb = grad_target(bias);
                     const auto gv = gain.data();
                     std::vector<double> gh(static_cast<size_t>(d));
                     for (int64_t r = 0; r < rows; ++r) {
                       const double* g = o.grad.data() + r * d;
                       const double* h = xhat->data() + r * d;
                       double mean_gh = 0.0;
                       double mean_ghh = 0.0;
                       for (int64_t c = 0; c < d; ++c) {
                         if (gb) gb[c] += g[c];
                         if (gg) gg[c] += g[c] * h[c];
                         gh[c] = g[c] * gv[c];
                         mean_gh += gh[c];
                         mean_ghh += gh[c] * h[c];
                       }
                       if (!gx) continue;
                       mean_gh /= static_cast<double>(d);
                       mean_ghh /= static_cast<double>(d);
                       const double rs = (*rstd)[r];
                       for (int64_t c = 0; c < d; ++c) {
                         gx[r * d + c] += rs * (gh[c] - mean_gh - h[c] * mean_ghh);
                       }
                     }
                   });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const int64_t vocab = table.dim(0);
  const int64_t d = table.dim(1);
  const auto tv = table.data();
  std::vector<double> out;
  out.reserve(ids.size() * static_cast<size_t>(d));
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw DimensionError("embedding: token id " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(vocab));
    }
    out.insert(out.end(), tv.begin() + id * d, tv.begin() + (id + 1) * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const auto n = static_cast<int64_t>(idv.size());
  return record_op("embedding", Shape{n, d}, std::move(out), {table},
                   [table, idv = std::move(idv), d](const detail::Node& o) {
                     if (double* gt = grad_target(table)) {
                       for (size_t k = 0; k < idv.size(); ++k) {
                         for (int64_t c = 0; c < d; ++c) gt[idv[k] * d + c] += o.grad[k * d + c];
                       }
                     }
                   });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const uint8_t> mask) {
  require_rank(logits, 2, "cross_entropy");
  const int64_t rows = logits.dim(0);
  const int64_t vocab = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != rows || static_cast<int64_t>(mask.size()) != rows) {
    throw DimensionError("cross_entropy: targets/mask length does not match logits rows");
  }
  const auto lv = logits.data();
  auto probs = std::make_shared<std::vector<double>>(lv.size(), 0.0);
  double total = 0.0;
  int64_t count = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const int t = targets[r];
    if (t < 0 || t >= vocab) throw DimensionError("cross_entropy: target outside vocabulary");
    const double* row = lv.data() + r * vocab;
    double mx = row[0];
    for (int64_t c = 1; c < vocab; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int64_t c = 0; c < vocab; ++c) {
      const double e = std::exp(row[c] - mx);
      (*probs)[r * vocab + c] = e;
      z += e;
    }
    for (int64_t c = 0; c < vocab; ++c) (*probs)[r * vocab + c] /= z;
    total += (mx + std::log(z)) - row[t];
    ++count;
  }
  const double loss = count ? total / static_cast<double>(count) : 0.0;
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<uint8_t> mv(mask.begin(), mask.end());
  return record_op("cross_entropy", Shape{}, {loss}, {logits},
                   [logits, probs, tv = std::move(tv), mv = std::move(mv), rows, vocab,
                    count](const detail::Node& o) {
                     double* gl = grad_target(logits);
                     if (!gl || count == 0) return;
                     const double g = o.grad[0] / static_cast<double>(count);
                     for (int64_t r = 0; r < rows; ++r) {
                       if (!mv[r]) continue;
                       for (int64_t c = 0; c < vocab; ++c) gl[r * vocab + c] += g * (*probs)[r * vocab + c];
                       gl[r * vocab + tv[r]] -= g;
                     }
                   });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto keep = std::make_shared<std::vector<double>>(static_cast<size_t>(x.numel()));
  std::vector<double> out = copy_values(x);
  for (size_t i = 0; i < out.size(); ++i) {
    (*keep)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] *= (*keep)[i];
  }
  return record_op("dropout", x.shape(), std::move(out), {x}, [x, keep](const detail::Node& o) {
    if (double* gx = grad_target(x)) {
      for (size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * (*keep)[i];
    }
  });
}

}  // namespace xspan::numerics
