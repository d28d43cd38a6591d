#include "ipa/numerics/lstm.h"

#include <cmath>

namespace ipa::numerics {

StackedLstm::StackedLstm(ParamStore& store, const std::string& prefix, int input_dim,
                         int hidden, int layers, std::mt19937_64& rng)
    : input_dim_(input_dim), hidden_(hidden), layers_(layers) {
  for (int l = 0; l < layers; ++l) {
    const int in = (l == 0 ? input_dim : hidden) + hidden;
    const std::string base = prefix + "/layer" + std::to_string(l);
    weight_.push_back(&store.add_uniform(base + "/w", in, 4 * hidden, rng));
    bias_.push_back(&store.add_uniform_shape(base + "/b", {1, 4 * hidden},
                                             1.0 / std::sqrt(double(in)), rng));
  }
}

StackedLstm::Bound StackedLstm::bind(Tape& tape) const {
  Bound b;
  for (int l = 0; l < layers_; ++l) {
    b.weight.push_back(tape.param(*weight_[l]));
    b.bias.push_back(tape.param(*bias_[l]));
  }
  return b;
}

Var StackedLstm::step(const Bound& w, Var state, Var input) const {
  if (state.cols() != state_dim()) {
    throw ShapeError("lstm state " + shape_string(state.value().shape()) + " vs expected width " +
                     std::to_string(state_dim()));
  }
  if (input.cols() != input_dim_ || input.rows() != state.rows()) {
    throw ShapeError("lstm input " + shape_string(input.value().shape()) + " vs state " +
                     shape_string(state.value().shape()));
  }
  const int H = hidden_;
  std::vector<Var> next;
  Var x = input;
  for (int l = 0; l < layers_; ++l) {
    Var h = slice_cols(state, 2 * H * l, H);
    Var c = slice_cols(state, 2 * H * l + H, H);
    Var gates = add_row(matmul(concat_cols({x, h}), w.weight[l]), w.bias[l]);
    Var i = sigmoid(slice_cols(gates, 0, H));
    Var f = sigmoid(slice_cols(gates, H, H));
    Var g = tanh(slice_cols(gates, 2 * H, H));
    Var o = sigmoid(slice_cols(gates, 3 * H, H));
    Var c_next = f * c + i * g;
    Var h_next = o * tanh(c_next);
    next.push_back(h_next);
    next.push_back(c_next);
    x = h_next;
  }
  return concat_cols(next);
}

Var StackedLstm::output(Var state) const {
  return slice_cols(state, 2 * hidden_ * (layers_ - 1), hidden_);
}

}  // namespace ipa::numerics
