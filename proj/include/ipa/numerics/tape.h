#ifndef IPA_NUMERICS_TAPE_H_
#define IPA_NUMERICS_TAPE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ipa/numerics/tensor.h"

namespace ipa::numerics {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named, insertion-ordered collection of trainable tensors. Pointers handed
// out by add()/get() stay valid for the lifetime of the store.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  // Weight of shape [fan_in, fan_out] drawn from uniform(-s, s),
  // s = 1 / sqrt(fan_in).
  Parameter& add_uniform(const std::string& name, int fan_in, int fan_out,
                         std::mt19937_64& rng);
  Parameter& add_uniform_shape(const std::string& name, std::vector<int> shape,
                               double scale, std::mt19937_64& rng);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<Parameter*> all();
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Tensor& grad() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node
// vector is already a topological order and backward() walks it once in
// reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);
  // Generic extension point: records a node with the given forward value and
  // backward rule. The rule reads grad_of(self) and accumulates into parents.
  Var record(Tensor value, Backward backward);

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& grad(int id) const { return nodes_[id].grad; }
  // Gradient buffer for accumulation, allocated lazily with zeros.
  Tensor& grad_of(int id);
  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. Parameter gradients are added
  // into Parameter::grad.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Training-time randomness (dropout) lives on the tape so that a forward
  // pass is a pure function of (params, inputs, seed).
  bool training = false;
  std::mt19937_64 rng{0};

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// ---- ops ------------------------------------------------------------------
// All ops take and return rank-2 values. Shape mismatches throw ShapeError
// with both shapes in the message.

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a [m x n] + row [1 x n], broadcast over rows.
Var add_row(Var a, Var row);
// a [m x n] * row [1 x n], broadcast over rows.
Var mul_row(Var a, Var row);
// a [m x n] * col [m x 1], broadcast over columns.
Var mul_col(Var a, Var col);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
// 1 - a
Var one_minus(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, int start, int count);
Var slice_rows(Var a, int start, int count);
// Row gather; embedding lookup is gather_rows(table, ids).
Var gather_rows(Var a, const std::vector<int>& rows);
Var embedding_lookup(Var table, const std::vector<int>& ids);
// Scalar a[r][c] as a 1x1 value.
Var pick(Var a, int r, int c);

Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
// log(a + floor); floor keeps the value finite when probabilities vanish.
Var log(Var a, double floor = 0.0);
// Tanh approximation of GELU (smooth everywhere).
Var gelu(Var a);

// Reductions. axis 0 collapses rows (result 1 x n); axis 1 collapses columns
// (result m x 1).
Var reduce_sum(Var a, int axis);
Var reduce_mean(Var a, int axis);
Var reduce_max(Var a, int axis);
Var logsumexp(Var a, int axis);
Var sum_all(Var a);

Var softmax(Var a, int axis = 1);
Var log_softmax(Var a, int axis = 1);

// Entries whose mask is nonzero are replaced by `fill` and receive no
// gradient. mask has the shape of a.
Var masked_fill(Var a, const Tensor& mask, double fill);
// Elementwise product with a fixed (non-differentiable) tensor.
Var mul_const(Var a, const Tensor& c);
Var add_const(Var a, const Tensor& c);

Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
// Inverted dropout with the tape's rng; identity when !tape.training or
// rate == 0.
Var dropout(Var a, double rate);

// out.flat[dst[i]] += src.flat[src_index[i]] for every entry pair.
Var scatter_add(Var src, const std::vector<int>& src_index,
                const std::vector<int>& dst_index, int out_rows, int out_cols);

// out[n] = num[n] / den[n] if den[n] > eps, else fallback[n].
// num, fallback: [N x S]; den: [1 x N].
Var safe_row_divide(Var num, Var den, Var fallback, double eps);

enum class Pooling { kFirst, kSum, kMean, kMax };
// Pools rows [start, end) of x per span. Empty spans pool to zeros.
Var pool_spans(Var x, const std::vector<std::pair<int, int>>& spans,
               Pooling mode);

}  // namespace ipa::numerics

#endif  // IPA_NUMERICS_TAPE_H_
