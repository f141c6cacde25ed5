#include "gradc/tape.hpp"

#include <fmt/format.h>

namespace gradc::rt {

void Tape::push(std::string label, Value v) {
  entries_.emplace_back(std::move(label), std::move(v));
  high_water_ = std::max(high_water_, entries_.size());
}

Value Tape::pop(const std::string& label) {
  if (entries_.empty()) throw TapeError(fmt::format("pop '{}' from an empty tape", label));
  if (entries_.back().first != label)
    throw TapeError(fmt::format("tape label mismatch: expected '{}', top of tape is '{}'", label, entries_.back().first));
  Value v = std::move(entries_.back().second);
  entries_.pop_back();
  return v;
}

}  // namespace gradc::rt
