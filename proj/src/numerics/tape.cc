#include "ipa/numerics/tape.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ipa::numerics {

// ---- ParamStore -------------------------------------------------------------

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(init.shape(), 0.0);
  p->value = std::move(init);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::add_uniform(const std::string& name, int fan_in, int fan_out,
                                   std::mt19937_64& rng) {
  return add_uniform_shape(name, {fan_in, fan_out}, 1.0 / std::sqrt(double(fan_in)), rng);
}

Parameter& ParamStore::add_uniform_shape(const std::string& name, std::vector<int> shape,
                                         double scale, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& v : t.values()) v = dist(rng);
  return add(name, std::move(t));
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return *params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

// ---- Var / Tape -------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::param(Parameter& p) {
  Var v = record(p.value, nullptr);
  nodes_[v.id].param = &p;
  return v;
}

Var Tape::record(Tensor value, Backward backward) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(backward), nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss belongs to another tape");
  if (value(loss.id).size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_string(value(loss.id).shape()));
  }
  grad_of(loss.id)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

// ---- helpers ----------------------------------------------------------------

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                   shape_string(b.shape()));
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("invalid Var");
  return *a.tape;
}

// Iterates the groups of a reduction along `axis`.
struct AxisView {
  int groups;
  int length;
  int group_stride;
  int elem_stride;
  AxisView(const Tensor& t, int axis) {
    if (axis == 1) {
      groups = t.rows();
      length = t.cols();
      group_stride = t.cols();
      elem_stride = 1;
    } else if (axis == 0) {
      groups = t.cols();
      length = t.rows();
      group_stride = 1;
      elem_stride = t.cols();
    } else {
      throw ShapeError("axis must be 0 or 1");
    }
  }
  std::size_t at(int g, int i) const {
    return static_cast<std::size_t>(g) * group_stride + static_cast<std::size_t>(i) * elem_stride;
  }
  std::vector<int> reduced_shape(const Tensor& t, int axis) const {
    return axis == 1 ? std::vector<int>{t.rows(), 1} : std::vector<int>{1, t.cols()};
  }
};

template <class F, class D>
Var unary(Var a, F f, D dfdx_from_x_y) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  int pa = a.id;
  return t.record(std::move(y), [pa, dfdx_from_x_y](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(pa);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad_of(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx_from_x_y(x[i], y[i]);
  });
}

}  // namespace

// ---- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) mismatch("matmul", A, B);
  const int m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::matrix(m, n);
  for (int i = 0; i < m; ++i) {
    double* crow = C.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = A.at(i, p);
      if (av == 0.0) continue;
      const double* brow = B.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  int ia = a.id, ib = b.id;
  return t.record(std::move(C), [ia, ib, m, k, n](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    Tensor& gA = tp.grad_of(ia);
    for (int i = 0; i < m; ++i) {
      const double* grow = G.data() + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double* brow = B.data() + static_cast<std::size_t>(p) * n;
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
        gA.at(i, p) += s;
      }
    }
    Tensor& gB = tp.grad_of(ib);
    for (int i = 0; i < m; ++i) {
      const double* grow = G.data() + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = A.at(i, p);
        if (av == 0.0) continue;
        double* gbrow = gB.data() + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
      }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) mismatch("matmul_nt", A, B);
  const int m = A.rows(), k = A.cols(), n = B.rows();
  Tensor C = Tensor::matrix(m, n);
  for (int i = 0; i < m; ++i) {
    const double* arow = A.data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = B.data() + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      C.at(i, j) = s;
    }
  }
  int ia = a.id, ib = b.id;
  return t.record(std::move(C), [ia, ib, m, k, n](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    Tensor& gA = tp.grad_of(ia);
    Tensor& gB = tp.grad_of(ib);
    for (int i = 0; i < m; ++i) {
      const double* arow = A.data() + static_cast<std::size_t>(i) * k;
      double* garow = gA.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < n; ++j) {
        const double g = G.at(i, j);
        if (g == 0.0) continue;
        const double* brow = B.data() + static_cast<std::size_t>(j) * k;
        double* gbrow = gB.data() + static_cast<std::size_t>(j) * k;
        for (int p = 0; p < k; ++p) {
          garow[p] += g * brow[p];
          gbrow[p] += g * arow[p];
        }
      }
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const int m = A.rows(), n = A.cols();
  Tensor C = Tensor::matrix(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) C.at(j, i) = A.at(i, j);
  int ia = a.id;
  return t.record(std::move(C), [ia, m, n](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    Tensor& gA = tp.grad_of(ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gA.at(i, j) += G.at(j, i);
  });
}

// ---- elementwise ------------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), "add");
  Tensor y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
  int ia = a.id, ib = b.id;
  return t.record(std::move(y), [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    Tensor& gb = tp.grad_of(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= B[i];
  int ia = a.id, ib = b.id;
  return t.record(std::move(y), [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    Tensor& gb = tp.grad_of(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same(a.value(), b.value(), "mul");
  Tensor y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
  int ia = a.id, ib = b.id;
  return t.record(std::move(y), [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    Tensor& gb = tp.grad_of(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) mismatch("add_row", A, R);
  const int m = A.rows(), n = A.cols();
  Tensor y = A;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.at(i, j) += R[j];
  int ia = a.id, ir = row.id;
  return t.record(std::move(y), [ia, ir, m, n](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    Tensor& gr = tp.grad_of(ir);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gr[j] += g.at(i, j);
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) mismatch("mul_row", A, R);
  const int m = A.rows(), n = A.cols();
  Tensor y = A;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.at(i, j) *= R[j];
  int ia = a.id, ir = row.id;
  return t.record(std::move(y), [ia, ir, m, n](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& R = tp.value(ir);
    Tensor& ga = tp.grad_of(ia);
    Tensor& gr = tp.grad_of(ir);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        ga.at(i, j) += g.at(i, j) * R[j];
        gr[j] += g.at(i, j) * A.at(i, j);
      }
  });
}

Var mul_col(Var a, Var col) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& C = col.value();
  if (C.cols() != 1 || C.rows() != A.rows()) mismatch("mul_col", A, C);
  const int m = A.rows(), n = A.cols();
  Tensor y = A;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.at(i, j) *= C[i];
  int ia = a.id, ic = col.id;
  return t.record(std::move(y), [ia, ic, m, n](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& C = tp.value(ic);
    Tensor& ga = tp.grad_of(ia);
    Tensor& gc = tp.grad_of(ic);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        ga.at(i, j) += g.at(i, j) * C[i];
        gc[i] += g.at(i, j) * A.at(i, j);
      }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var one_minus(Var a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a, double floor) {
  for (double v : a.value().values()) {
    if (!(v + floor > 0.0)) throw std::domain_error("log of non-positive value");
  }
  return unary(a, [floor](double x) { return std::log(x + floor); },
               [floor](double x, double) { return 1.0 / (x + floor); });
}

Var gelu(Var a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double th = std::tanh(kC * (x + kA * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * x * x);
      });
}

Var mul_const(Var a, const Tensor& c) {
  Tape& t = tape_of(a);
  require_same(a.value(), c, "mul_const");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
  int ia = a.id;
  return t.record(std::move(y), [ia, c](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
  });
}

Var add_const(Var a, const Tensor& c) {
  Tape& t = tape_of(a);
  require_same(a.value(), c, "add_const");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i];
  int ia = a.id;
  return t.record(std::move(y), [ia](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var masked_fill(Var a, const Tensor& mask, double fill) {
  Tape& t = tape_of(a);
  require_same(a.value(), mask, "masked_fill");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (mask[i] != 0.0) y[i] = fill;
  int ia = a.id;
  return t.record(std::move(y), [ia, mask](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (mask[i] == 0.0) ga[i] += g[i];
  });
}

// ---- structural -------------------------------------------------------------

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Tape& t = tape_of(parts[0]);
  const int m = parts[0].rows();
  int n = 0;
  for (const Var& p : parts) {
    if (p.rows() != m) mismatch("concat_cols", parts[0].value(), p.value());
    n += p.cols();
  }
  Tensor y = Tensor::matrix(m, n);
  std::vector<int> ids, offsets;
  int off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < v.cols(); ++j) y.at(i, off + j) = v.at(i, j);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.cols();
  }
  return t.record(std::move(y), [ids, offsets, m](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor& gp = tp.grad_of(ids[k]);
      const int w = gp.cols();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) gp.at(i, j) += g.at(i, offsets[k] + j);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Tape& t = tape_of(parts[0]);
  const int n = parts[0].cols();
  int m = 0;
  for (const Var& p : parts) {
    if (p.cols() != n) mismatch("concat_rows", parts[0].value(), p.value());
    m += p.rows();
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m) * n);
  std::vector<int> ids;
  for (const Var& p : parts) {
    const auto& v = p.value().storage();
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(p.id);
  }
  return t.record(Tensor({m, n}, std::move(data)), [ids](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      Tensor& gp = tp.grad_of(id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      off += gp.size();
    }
  });
}

Var slice_cols(Var a, int start, int count) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  if (start < 0 || count < 0 || start + count > A.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_string(A.shape()));
  }
  const int m = A.rows();
  Tensor y = Tensor::matrix(m, count);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j) y.at(i, j) = A.at(i, start + j);
  int ia = a.id;
  return t.record(std::move(y), [ia, start, count, m](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < count; ++j) ga.at(i, start + j) += g.at(i, j);
  });
}

Var slice_rows(Var a, int start, int count) {
  const Tensor& A = a.value();
  if (start < 0 || count < 0 || start + count > A.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_string(A.shape()));
  }
  std::vector<int> rows(count);
  for (int i = 0; i < count; ++i) rows[i] = start + i;
  return gather_rows(a, rows);
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const int n = A.cols();
  const int m = static_cast<int>(rows.size());
  Tensor y = Tensor::matrix(m, n);
  for (int i = 0; i < m; ++i) {
    if (rows[i] < 0 || rows[i] >= A.rows()) {
      throw ShapeError("gather_rows index " + std::to_string(rows[i]) + " out of " +
                       shape_string(A.shape()));
    }
    std::copy_n(A.data() + static_cast<std::size_t>(rows[i]) * n, n,
                y.data() + static_cast<std::size_t>(i) * n);
  }
  int ia = a.id;
  return t.record(std::move(y), [ia, rows, n](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double* dst = ga.data() + static_cast<std::size_t>(rows[i]) * n;
      const double* src = g.data() + i * n;
      for (int j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

Var embedding_lookup(Var table, const std::vector<int>& ids) { return gather_rows(table, ids); }

Var pick(Var a, int r, int c) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  if (r < 0 || r >= A.rows() || c < 0 || c >= A.cols()) {
    throw ShapeError("pick (" + std::to_string(r) + ", " + std::to_string(c) + ") out of " +
                     shape_string(A.shape()));
  }
  int ia = a.id;
  return t.record(Tensor({1, 1}, A.at(r, c)), [ia, r, c](Tape& tp, int self) {
    tp.grad_of(ia).at(r, c) += tp.grad(self)[0];
  });
}

// ---- reductions -------------------------------------------------------------

Var reduce_sum(Var a, int axis) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  AxisView ax(A, axis);
  Tensor y(ax.reduced_shape(A, axis));
  for (int g = 0; g < ax.groups; ++g) {
    double s = 0.0;
    for (int i = 0; i < ax.length; ++i) s += A[ax.at(g, i)];
    y[g] = s;
  }
  int ia = a.id;
  return t.record(std::move(y), [ia, ax](Tape& tp, int self) {
    const Tensor& gy = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (int g = 0; g < ax.groups; ++g)
      for (int i = 0; i < ax.length; ++i) ga[ax.at(g, i)] += gy[g];
  });
}

Var reduce_mean(Var a, int axis) {
  AxisView ax(a.value(), axis);
  if (ax.length == 0) throw ShapeError("mean over empty axis");
  return scale(reduce_sum(a, axis), 1.0 / ax.length);
}

Var reduce_max(Var a, int axis) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  AxisView ax(A, axis);
  if (ax.length == 0) throw ShapeError("max over empty axis");
  Tensor y(ax.reduced_shape(A, axis));
  std::vector<std::size_t> arg(ax.groups);
  for (int g = 0; g < ax.groups; ++g) {
    std::size_t best = ax.at(g, 0);
    for (int i = 1; i < ax.length; ++i)
      if (A[ax.at(g, i)] > A[best]) best = ax.at(g, i);
    arg[g] = best;
    y[g] = A[best];
  }
  int ia = a.id;
  return t.record(std::move(y), [ia, arg](Tape& tp, int self) {
    const Tensor& gy = tp.grad(self);
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t g = 0; g < arg.size(); ++g) ga[arg[g]] += gy[g];
  });
}

Var logsumexp(Var a, int axis) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  AxisView ax(A, axis);
  if (ax.length == 0) throw ShapeError("logsumexp over empty axis");
  Tensor y(ax.reduced_shape(A, axis));
  for (int g = 0; g < ax.groups; ++g) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < ax.length; ++i) mx = std::max(mx, A[ax.at(g, i)]);
    double s = 0.0;
    for (int i = 0; i < ax.length; ++i) s += std::exp(A[ax.at(g, i)] - mx);
    y[g] = mx + std::log(s);
  }
  int ia = a.id;
  return t.record(std::move(y), [ia, ax](Tape& tp, int self) {
    const Tensor& gy = tp.grad(self);
    const Tensor& A = tp.value(ia);
    const Tensor& Y = tp.value(self);
    Tensor& ga = tp.grad_of(ia);
    for (int g = 0; g < ax.groups; ++g)
      for (int i = 0; i < ax.length; ++i) {
        const std::size_t k = ax.at(g, i);
        ga[k] += gy[g] * std::exp(A[k] - Y[g]);
      }
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  int ia = a.id;
  return t.record(Tensor({1, 1}, s), [ia](Tape& tp, int self) {
    const double g = tp.grad(self)[0];
    Tensor& ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var softmax(Var a, int axis) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  AxisView ax(A, axis);
  Tensor y(A.shape());
  for (int g = 0; g < ax.groups; ++g) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < ax.length; ++i) mx = std::max(mx, A[ax.at(g, i)]);
    double s = 0.0;
    for (int i = 0; i < ax.length; ++i) {
      const double e = std::exp(A[ax.at(g, i)] - mx);
      y[ax.at(g, i)] = e;
      s += e;
    }
    for (int i = 0; i < ax.length; ++i) y[ax.at(g, i)] /= s;
  }
  int ia = a.id;
  return t.record(std::move(y), [ia, ax](Tape& tp, int self) {
    const Tensor& gy = tp.grad(self);
    const Tensor& Y = tp.value(self);
    Tensor& ga = tp.grad_of(ia);
    for (int g = 0; g < ax.groups; ++g) {
      double dot = 0.0;
      for (int i = 0; i < ax.length; ++i) dot += gy[ax.at(g, i)] * Y[ax.at(g, i)];
      for (int i = 0; i < ax.length; ++i) {
        const std::size_t k = ax.at(g, i);
        ga[k] += Y[k] * (gy[k] - dot);
      }
    }
  });
}

Var log_softmax(Var a, int axis) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  AxisView ax(A, axis);
  Tensor y(A.shape());
  for (int g = 0; g < ax.groups; ++g) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < ax.length; ++i) mx = std::max(mx, A[ax.at(g, i)]);
    double s = 0.0;
    for (int i = 0; i < ax.length; ++i) s += std::exp(A[ax.at(g, i)] - mx);
    const double lse = mx + std::log(s);
    for (int i = 0; i < ax.length; ++i) y[ax.at(g, i)] = A[ax.at(g, i)] - lse;
  }
  int ia = a.id;
  return t.record(std::move(y), [ia, ax](Tape& tp, int self) {
    const Tensor& gy = tp.grad(self);
    const Tensor& Y = tp.value(self);
    Tensor& ga = tp.grad_of(ia);
    for (int g = 0; g < ax.groups; ++g) {
      double gsum = 0.0;
      for (int i = 0; i < ax.length; ++i) gsum += gy[ax.at(g, i)];
      for (int i = 0; i < ax.length; ++i) {
        const std::size_t k = ax.at(g, i);
        ga[k] += gy[k] - std::exp(Y[k]) * gsum;
      }
    }
  });
}

// ---- fused layers -----------------------------------------------------------

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  Tape& t = tape_of(a);
  const Tensor& X = a.value();
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  const int m = X.rows(), n = X.cols();
  if (G.rows() != 1 || G.cols() != n) mismatch("layer_norm gain", X, G);
  if (!B.same_shape(G)) mismatch("layer_norm bias", G, B);
  Tensor y = Tensor::matrix(m, n);
  Tensor xhat = Tensor::matrix(m, n);
  std::vector<double> inv_std(m);
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += X.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (X.at(i, j) - mu) * (X.at(i, j) - mu);
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      xhat.at(i, j) = (X.at(i, j) - mu) * inv_std[i];
      y.at(i, j) = xhat.at(i, j) * G[j] + B[j];
    }
  }
  int ia = a.id, ig = gain.id, ib = bias.id;
  return t.record(std::move(y), [ia, ig, ib, m, n, xhat, inv_std](Tape& tp, int self) {
    const Tensor& gy = tp.grad(self);
    const Tensor& G = tp.value(ig);
    Tensor& ga = tp.grad_of(ia);
    Tensor& gg = tp.grad_of(ig);
    Tensor& gb = tp.grad_of(ib);
    std::vector<double> dxhat(n);
    for (int i = 0; i < m; ++i) {
      double s1 = 0.0, s2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double d = gy.at(i, j);
        gg[j] += d * xhat.at(i, j);
        gb[j] += d;
        dxhat[j] = d * G[j];
        s1 += dxhat[j];
        s2 += dxhat[j] * xhat.at(i, j);
      }
      for (int j = 0; j < n; ++j) {
        ga.at(i, j) += inv_std[i] / n * (n * dxhat[j] - s1 - xhat.at(i, j) * s2);
      }
    }
  });
}

Var dropout(Var a, double rate) {
  Tape& t = tape_of(a);
  if (!t.training || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  Tensor mask(a.value().shape());
  std::bernoulli_distribution keep(1.0 - rate);
  for (double& m : mask.values()) m = keep(t.rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul_const(a, mask);
}

Var scatter_add(Var src, const std::vector<int>& src_index, const std::vector<int>& dst_index,
                int out_rows, int out_cols) {
  Tape& t = tape_of(src);
  if (src_index.size() != dst_index.size()) throw ShapeError("scatter_add index length mismatch");
  const Tensor& S = src.value();
  Tensor y = Tensor::matrix(out_rows, out_cols);
  for (std::size_t i = 0; i < src_index.size(); ++i) {
    if (src_index[i] < 0 || static_cast<std::size_t>(src_index[i]) >= S.size() ||
        dst_index[i] < 0 || static_cast<std::size_t>(dst_index[i]) >= y.size()) {
      throw ShapeError("scatter_add index out of range");
    }
    y[dst_index[i]] += S[src_index[i]];
  }
  int is = src.id;
  return t.record(std::move(y), [is, src_index, dst_index](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& gs = tp.grad_of(is);
    for (std::size_t i = 0; i < src_index.size(); ++i) gs[src_index[i]] += g[dst_index[i]];
  });
}

Var safe_row_divide(Var num, Var den, Var fallback, double eps) {
  Tape& t = tape_of(num);
  const Tensor& Nm = num.value();
  const Tensor& D = den.value();
  const Tensor& F = fallback.value();
  require_same(Nm, F, "safe_row_divide");
  if (D.rows() != 1 || D.cols() != Nm.rows()) mismatch("safe_row_divide", Nm, D);
  const int m = Nm.rows(), n = Nm.cols();
  Tensor y = Tensor::matrix(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.at(i, j) = D[i] > eps ? Nm.at(i, j) / D[i] : F.at(i, j);
  int in = num.id, id = den.id, iff = fallback.id;
  return t.record(std::move(y), [in, id, iff, m, n, eps](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& Nm = tp.value(in);
    const Tensor& D = tp.value(id);
    Tensor& gn = tp.grad_of(in);
    Tensor& gd = tp.grad_of(id);
    Tensor& gf = tp.grad_of(iff);
    for (int i = 0; i < m; ++i) {
      if (D[i] > eps) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          gn.at(i, j) += g.at(i, j) / D[i];
          acc -= g.at(i, j) * Nm.at(i, j) / (D[i] * D[i]);
        }
        gd[i] += acc;
      } else {
        for (int j = 0; j < n; ++j) gf.at(i, j) += g.at(i, j);
      }
    }
  });
}

Var pool_spans(Var x, const std::vector<std::pair<int, int>>& spans, Pooling mode) {
  Tape& t = tape_of(x);
  const Tensor& X = x.value();
  const int d = X.cols();
  const int m = static_cast<int>(spans.size());
  Tensor y = Tensor::matrix(m, d);
  // For max pooling, the source row of each output entry.
  std::vector<int> arg(mode == Pooling::kMax ? static_cast<std::size_t>(m) * d : 0, -1);
  for (int s = 0; s < m; ++s) {
    const auto [b, e] = spans[s];
    if (b < 0 || e < b || e > X.rows()) {
      throw ShapeError("span [" + std::to_string(b) + ", " + std::to_string(e) + ") out of " +
                       shape_string(X.shape()));
    }
    if (b == e) continue;
    switch (mode) {
      case Pooling::kFirst:
        for (int j = 0; j < d; ++j) y.at(s, j) = X.at(b, j);
        break;
      case Pooling::kSum:
      case Pooling::kMean: {
        for (int r = b; r < e; ++r)
          for (int j = 0; j < d; ++j) y.at(s, j) += X.at(r, j);
        if (mode == Pooling::kMean)
          for (int j = 0; j < d; ++j) y.at(s, j) /= (e - b);
        break;
      }
      case Pooling::kMax:
        for (int j = 0; j < d; ++j) {
          int best = b;
          for (int r = b + 1; r < e; ++r)
            if (X.at(r, j) > X.at(best, j)) best = r;
          y.at(s, j) = X.at(best, j);
          arg[static_cast<std::size_t>(s) * d + j] = best;
        }
        break;
    }
  }
  int ix = x.id;
  return t.record(std::move(y), [ix, spans, mode, d, arg](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_of(ix);
    for (std::size_t s = 0; s < spans.size(); ++s) {
      const auto [b, e] = spans[s];
      if (b == e) continue;
      const int i = static_cast<int>(s);
      switch (mode) {
        case Pooling::kFirst:
          for (int j = 0; j < d; ++j) gx.at(b, j) += g.at(i, j);
          break;
        case Pooling::kSum:
        case Pooling::kMean: {
          const double w = mode == Pooling::kMean ? 1.0 / (e - b) : 1.0;
          for (int r = b; r < e; ++r)
            for (int j = 0; j < d; ++j) gx.at(r, j) += w * g.at(i, j);
          break;
        }
        case Pooling::kMax:
          for (int j = 0; j < d; ++j) gx.at(arg[s * d + j], j) += g.at(i, j);
          break;
      }
    }
  });
}

}  // namespace ipa::numerics
