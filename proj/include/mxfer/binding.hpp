#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mxfer/error.hpp"
#include "mxfer/rotation.hpp"

namespace mxfer {

// One declared correspondence: target joint t is driven by source joint s.
struct BindingPair {
  std::size_t target = 0;
  std::size_t source = 0;
  // Replaces the rest-pose alignment computed from bone directions.
  std::optional<Mat3> alignment;
};

struct BindingSet {
  std::vector<BindingPair> pairs;
  bool bind_root_velocity = true;

  std::size_t size() const { return pairs.size(); }
};

// Checks the BindingSet invariants against joint counts. An empty pair list is
// accepted only when the root velocity is bound.
inline void validate_bindings(const BindingSet& b, std::size_t target_joints, std::size_t source_joints) {
  std::set<std::size_t> seen;
  for (const auto& p : b.pairs) {
    if (p.target >= target_joints || p.source >= source_joints) {
      throw Error(ErrorCode::IndexOutOfRange, "binding (" + std::to_string(p.target) + ", " +
                                                  std::to_string(p.source) + ") is outside the skeletons");
    }
    if (!seen.insert(p.target).second) {
      throw Error(ErrorCode::DuplicateTarget, "target joint " + std::to_string(p.target) + " is bound twice");
    }
    if (p.alignment && !is_rotation(*p.alignment, 1e-6)) {
      throw Error(ErrorCode::NotARotation, "alignment override for target joint " + std::to_string(p.target) +
                                               " is not a rotation");
    }
  }
  if (b.pairs.empty() && !b.bind_root_velocity) {
    throw Error(ErrorCode::InvalidBinding, "binding set is empty");
  }
}

}  // namespace mxfer
