#ifndef IPA_NUMERICS_CHECKPOINT_H_
#define IPA_NUMERICS_CHECKPOINT_H_

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "ipa/numerics/tape.h"

namespace ipa::numerics {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Textual checkpoint:
//   ipa-checkpoint 1
//   meta <key> <value...>
//   param <name> <rank> <dims...>
//   <values, %.17g, space separated>
// Values round-trip exactly.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;
};

void write_checkpoint(std::ostream& os, const ParamStore& params,
                      const std::map<std::string, std::string>& meta);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta);
Checkpoint load_checkpoint(const std::string& path);

// Copies tensors into matching parameters; every parameter must be present
// with the same shape.
void restore_params(const Checkpoint& ckpt, ParamStore& params);

}  // namespace ipa::numerics

#endif  // IPA_NUMERICS_CHECKPOINT_H_
