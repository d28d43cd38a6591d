#ifndef IPA_NUMERICS_LSTM_H_
#define IPA_NUMERICS_LSTM_H_

#include <random>
#include <string>
#include <vector>

#include "ipa/numerics/tape.h"

namespace ipa::numerics {

// Stacked LSTM whose recurrent state is packed row-wise as
// [h_1 | c_1 | h_2 | c_2 | ...], one row per independent sequence (the
// IPA-GNN runs one row per CFG node). Gate order is (input, forget, cell,
// output).
class StackedLstm {
 public:
  StackedLstm() = default;
  StackedLstm(ParamStore& store, const std::string& prefix, int input_dim, int hidden,
              int layers, std::mt19937_64& rng);

  // Parameters placed on a tape once per forward pass.
  struct Bound {
    std::vector<Var> weight;  // [(in + H) x 4H] per layer
    std::vector<Var> bias;    // [1 x 4H] per layer
  };
  Bound bind(Tape& tape) const;

  // state: [k x state_dim()], input: [k x input_dim()].
  Var step(const Bound& w, Var state, Var input) const;
  // Top-layer h.
  Var output(Var state) const;

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  int layers() const { return layers_; }
  int state_dim() const { return 2 * hidden_ * layers_; }

 private:
  std::vector<Parameter*> weight_;
  std::vector<Parameter*> bias_;
  int input_dim_ = 0;
  int hidden_ = 0;
  int layers_ = 0;
};

}  // namespace ipa::numerics

#endif  // IPA_NUMERICS_LSTM_H_
