#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mxfer/binding.hpp"
#include "mxfer/error.hpp"
#include "mxfer/motion.hpp"
#include "mxfer/rotation.hpp"
#include "mxfer/skeleton.hpp"

namespace mxfer {

// Sparse form of the block-identity correspondence matrix C (D_t x D_s): one
// block per bound pair plus, optionally, the root velocity block. The mask
// marks every target channel covered by a block.
struct CorrespondenceMap {
  struct Block {
    ChannelLayout::Range target;
    ChannelLayout::Range source;
    // Rest-pose alignment applied to 6D rotation blocks as A * R * A^T.
    std::optional<Mat3> alignment;
  };

  std::size_t source_width = 0;
  std::size_t target_width = 0;
  std::vector<Block> blocks;
  std::vector<std::uint8_t> mask;

  std::size_t bound_channel_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
};

// `alignments`, when given, holds one rotation per binding pair (see
// align_rest_pose); identity rotations are dropped so those blocks copy verbatim.
inline CorrespondenceMap build_map(const BindingSet& bindings, const ChannelLayout& source, const ChannelLayout& target,
                                   std::span<const Mat3> alignments = {}) {
  validate_bindings(bindings, target.joint_count, source.joint_count);
  require(source.joint_width == target.joint_width, ErrorCode::ShapeMismatch,
          "source and target layouts use different per-joint widths");
  require(alignments.empty() || alignments.size() == bindings.pairs.size(), ErrorCode::ShapeMismatch,
          "need one alignment per binding pair");

  CorrespondenceMap map;
  map.source_width = source.width();
  map.target_width = target.width();
  map.mask.assign(map.target_width, 0);
  if (bindings.bind_root_velocity) {
    map.blocks.push_back({ChannelLayout::root_velocity, ChannelLayout::root_velocity, std::nullopt});
  }
  for (std::size_t i = 0; i < bindings.pairs.size(); ++i) {
    const auto& p = bindings.pairs[i];
    CorrespondenceMap::Block b{target.channel_range(p.target), source.channel_range(p.source), std::nullopt};
    if (target.joint_width == 6) {
      const Mat3* a = !alignments.empty() ? &alignments[i] : (p.alignment ? &*p.alignment : nullptr);
      if (a && *a != Mat3::Identity()) b.alignment = *a;
    }
    map.blocks.push_back(b);
  }
  for (const auto& b : map.blocks) {
    for (std::size_t c = b.target.begin; c < b.target.end; ++c) map.mask[c] = 1;
  }
  return map;
}

// S * C^T: bound target channels copied from their source channels (rotation
// blocks conjugated by their alignment), everything else zero.
inline Matrix project_channels(const Matrix& source, const CorrespondenceMap& map) {
  if (static_cast<std::size_t>(source.cols()) != map.source_width) {
    throw Error(ErrorCode::ShapeMismatch, "source width " + std::to_string(source.cols()) + " != " +
                                              std::to_string(map.source_width));
  }
  Matrix out = Matrix::Zero(source.rows(), static_cast<Eigen::Index>(map.target_width));
  for (const auto& b : map.blocks) {
    const auto tb = static_cast<Eigen::Index>(b.target.begin);
    const auto sb = static_cast<Eigen::Index>(b.source.begin);
    const auto w = static_cast<Eigen::Index>(b.target.size());
    if (!b.alignment) {
      out.middleCols(tb, w) = source.middleCols(sb, w);
      continue;
    }
    const Mat3& a = *b.alignment;
    for (Eigen::Index f = 0; f < source.rows(); ++f) {
      const Vec6 six = source.row(f).segment<6>(sb);
      out.row(f).segment<6>(tb) = encode_rotation_6d(a * decode_rotation_6d(six) * a.transpose()).transpose();
    }
  }
  return out;
}

// An upward path of exactly L joints, leaf first, with each joint's unit rest
// bone direction (zero for degenerate bones).
struct Chain {
  std::vector<std::size_t> joints;
  std::vector<Vec3> directions;
};

inline std::vector<Chain> enumerate_chains(const Skeleton& skel, std::size_t length) {
  require(length >= 1, ErrorCode::InvalidConfig, "chain length must be at least 1");
  std::vector<Vec3> dirs(skel.joint_count(), Vec3::Zero());
  for (std::size_t j = 0; j < skel.joint_count(); ++j) {
    try {
      dirs[j] = bone_direction(skel, j);
    } catch (const Error&) {
      // zero-length bones contribute no direction
    }
  }
  std::vector<Chain> chains;
  for (std::size_t j = 0; j < skel.joint_count(); ++j) {
    Chain c;
    std::optional<std::size_t> cur = j;
    while (cur && c.joints.size() < length) {
      c.joints.push_back(*cur);
      c.directions.push_back(dirs[*cur]);
      cur = skel.joint(*cur).parent;
    }
    if (c.joints.size() == length) chains.push_back(std::move(c));
  }
  return chains;
}

// Mean cosine similarity of position-wise direction pairs.
inline double chain_similarity(const Chain& a, const Chain& b) {
  require(a.directions.size() == b.directions.size() && !a.directions.empty(), ErrorCode::ShapeMismatch,
          "chains differ in length");
  double sum = 0.0;
  for (std::size_t k = 0; k < a.directions.size(); ++k) {
    const double na = a.directions[k].norm();
    const double nb = b.directions[k].norm();
    if (na < 1e-12 || nb < 1e-12) continue;
    sum += std::clamp(a.directions[k].dot(b.directions[k]) / (na * nb), -1.0, 1.0);
  }
  return sum / static_cast<double>(a.directions.size());
}

struct BindingProposal {
  std::size_t source_chain = 0;
  std::size_t target_chain = 0;
  double score = 0.0;
  std::vector<BindingPair> pairs;
};

struct AutoBindResult {
  std::vector<BindingProposal> proposals;  // best first
  BindingSet bindings;                     // proposals merged, first assignment of a target wins
};

// Scores every (source chain, target chain) pair, keeps the top_k and binds
// their joints position-wise. Scores are compared at 1e-9 resolution; ties go
// to the lower (source, target) chain index.
inline AutoBindResult auto_bind(const Skeleton& source, const Skeleton& target, std::size_t chain_length,
                                std::size_t top_k) {
  const auto src = enumerate_chains(source, chain_length);
  const auto tgt = enumerate_chains(target, chain_length);
  if (src.empty() || tgt.empty()) {
    throw Error(ErrorCode::NoChains, "no chain of length " + std::to_string(chain_length) + " in the " +
                                         (src.empty() ? "source" : "target") + " skeleton");
  }

  struct Scored {
    std::int64_t key;
    std::size_t s;
    std::size_t t;
    double score;
  };
  std::vector<Scored> all;
  all.reserve(src.size() * tgt.size());
  for (std::size_t s = 0; s < src.size(); ++s) {
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      const double score = chain_similarity(src[s], tgt[t]);
      all.push_back({std::llround(score * 1e9), s, t, score});
    }
  }
  const std::size_t keep = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const Scored& a, const Scored& b) {
                      if (a.key != b.key) return a.key > b.key;
                      if (a.s != b.s) return a.s < b.s;
                      return a.t < b.t;
                    });

  AutoBindResult out;
  std::vector<bool> taken(target.joint_count(), false);
  for (std::size_t i = 0; i < keep; ++i) {
    BindingProposal p{all[i].s, all[i].t, all[i].score, {}};
    for (std::size_t k = 0; k < chain_length; ++k) {
      const BindingPair pair{tgt[all[i].t].joints[k], src[all[i].s].joints[k], std::nullopt};
      p.pairs.push_back(pair);
      if (!taken[pair.target]) {
        taken[pair.target] = true;
        out.bindings.pairs.push_back(pair);
      }
    }
    out.proposals.push_back(std::move(p));
  }
  return out;
}

// Whether a clip travels: the root strays further than half a median bone
// length from where it started.
inline bool carries_locomotion(const Skeleton& skel, const Motion& motion) {
  Vec3 p = Vec3::Zero();
  double furthest = 0.0;
  for (Eigen::Index f = 0; f < motion.features.rows(); ++f) {
    p += motion.features.row(f).head<3>().transpose();
    furthest = std::max(furthest, p.norm());
  }
  return furthest > 0.5 * skel.median_bone_length();
}

}  // namespace mxfer
