#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gradc/value.hpp"

namespace gradc::rt {

class TapeError : public EvalError {
 public:
  using EvalError::EvalError;
};

/// LIFO store of intermediate values shared by the forward and backward
/// passes of one evaluation. Pushing a Dense value shares its copy-on-write
/// buffer, so later writes to the original never reach the tape.
class Tape {
 public:
  void push(std::string label, Value v);
  /// Removes and returns the top entry; its label must equal `label`.
  Value pop(const std::string& label);

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t high_water() const { return high_water_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::pair<std::string, Value>> entries_;
  std::size_t high_water_ = 0;
};

}  // namespace gradc::rt
