#pragma once

#include <span>
#include <string>
#include <vector>

#include "mxfer/error.hpp"
#include "mxfer/motion.hpp"
#include "mxfer/rotation.hpp"

namespace mxfer {

struct Patch {
  Matrix values;  // patch_size x D
  std::size_t motion_id = 0;
  std::size_t start = 0;
};

// Windows of `patch_size` frames at 0, step, 2*step, ... with no padding:
// floor((F - patch_size + 1) / step) of them.
inline std::size_t patch_count(std::size_t frames, std::size_t patch_size, std::size_t step) {
  if (frames < patch_size) return 0;
  return (frames - patch_size + 1) / step;
}

inline std::vector<std::size_t> patch_starts(std::size_t frames, std::size_t patch_size, std::size_t step) {
  std::vector<std::size_t> starts(patch_count(frames, patch_size, step));
  for (std::size_t i = 0; i < starts.size(); ++i) starts[i] = i * step;
  return starts;
}

inline void check_patch_params(std::size_t patch_size, std::size_t step) {
  require(patch_size >= 2, ErrorCode::InvalidConfig, "patch size must be at least 2");
  require(step >= 1, ErrorCode::InvalidConfig, "step must be at least 1");
}

inline std::vector<Patch> patchify(const Matrix& features, std::size_t patch_size, std::size_t step,
                                   std::size_t motion_id = 0) {
  check_patch_params(patch_size, step);
  const auto frames = static_cast<std::size_t>(features.rows());
  if (frames < patch_size) {
    throw Error(ErrorCode::TooShort, "motion " + std::to_string(motion_id) + " has " + std::to_string(frames) +
                                         " frames, patch size is " + std::to_string(patch_size));
  }
  std::vector<Patch> out;
  for (std::size_t s : patch_starts(frames, patch_size, step)) {
    out.push_back({features.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(patch_size)), motion_id, s});
  }
  return out;
}

inline std::vector<Patch> patchify(const Motion& motion, std::size_t patch_size, std::size_t step) {
  return patchify(motion.features, patch_size, step);
}

// Overlap-average accumulator: every output cell is the mean of the patch
// values placed over it.
class BlendAccumulator {
 public:
  BlendAccumulator(std::size_t frames, std::size_t width)
      : sum_(Matrix::Zero(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(width))), count_(frames, 0) {}

  template <typename Block>
  void add(std::size_t start, const Block& values) {
    const auto rows = values.rows();
    if (start + static_cast<std::size_t>(rows) > count_.size() || values.cols() != sum_.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "patch at frame " + std::to_string(start) + " does not fit the output");
    }
    sum_.middleRows(static_cast<Eigen::Index>(start), rows) += values;
    for (Eigen::Index r = 0; r < rows; ++r) ++count_[start + static_cast<std::size_t>(r)];
  }

  Matrix finish() && {
    for (std::size_t f = 0; f < count_.size(); ++f) {
      if (count_[f] == 0) throw Error(ErrorCode::CoverageGap, "frame " + std::to_string(f) + " is covered by no patch");
      sum_.row(static_cast<Eigen::Index>(f)) /= static_cast<double>(count_[f]);
    }
    return std::move(sum_);
  }

 private:
  Matrix sum_;
  std::vector<std::size_t> count_;
};

inline Matrix blend(std::span<const Patch> matched, std::size_t frames) {
  require(!matched.empty(), ErrorCode::CoverageGap, "nothing to blend");
  BlendAccumulator acc(frames, static_cast<std::size_t>(matched[0].values.cols()));
  for (const auto& p : matched) acc.add(p.start, p.values);
  return std::move(acc).finish();
}

// Pooled, normalized patches of all target example motions, ordered by
// (motion id, start frame). Immutable after construction.
class PatchDatabase {
 public:
  struct Origin {
    std::size_t motion_id = 0;
    std::size_t start = 0;
    bool operator==(const Origin&) const = default;
  };

  PatchDatabase() = default;

  std::size_t size() const { return origins_.size(); }
  bool empty() const { return origins_.empty(); }
  std::size_t patch_size() const { return patch_size_; }
  std::size_t step() const { return step_; }
  std::size_t width() const { return width_; }
  FeatureMode mode() const { return mode_; }
  const NormalizationStats& stats() const { return stats_; }
  const std::vector<Origin>& origins() const { return origins_; }
  const std::vector<std::size_t>& motion_frames() const { return motion_frames_; }

  // Row i holds patch i flattened frame-major (patch_size * width values).
  const Matrix& data() const { return data_; }

  auto patch_values(std::size_t i) const {
    return Eigen::Map<const Matrix>(data_.row(static_cast<Eigen::Index>(i)).data(),
                                    static_cast<Eigen::Index>(patch_size_), static_cast<Eigen::Index>(width_));
  }

  Patch patch(std::size_t i) const { return {patch_values(i), origins_.at(i).motion_id, origins_.at(i).start}; }

  friend PatchDatabase build_database(std::span<const Motion>, std::size_t, std::size_t, const NormalizationStats&);

 private:
  std::size_t patch_size_ = 0;
  std::size_t step_ = 1;
  std::size_t width_ = 0;
  FeatureMode mode_ = FeatureMode::rotation6d;
  NormalizationStats stats_;
  Matrix data_;
  std::vector<Origin> origins_;
  std::vector<std::size_t> motion_frames_;
};

inline PatchDatabase build_database(std::span<const Motion> targets, std::size_t patch_size, std::size_t step,
                                    const NormalizationStats& stats) {
  check_patch_params(patch_size, step);
  require(!targets.empty(), ErrorCode::EmptyDatabase, "no target example motions");
  const std::size_t width = targets[0].width();
  require(stats.width() == width, ErrorCode::ShapeMismatch, "normalization stats width mismatch");

  std::size_t total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& m = targets[i];
    require(m.width() == width && m.mode == targets[0].mode, ErrorCode::ShapeMismatch,
            "target motions differ in layout or feature mode");
    if (m.frames() < patch_size) {
      throw Error(ErrorCode::TooShort, "target motion " + std::to_string(i) + " has " + std::to_string(m.frames()) +
                                           " frames, patch size is " + std::to_string(patch_size));
    }
    total += patch_count(m.frames(), patch_size, step);
  }

  PatchDatabase db;
  db.patch_size_ = patch_size;
  db.step_ = step;
  db.width_ = width;
  db.mode_ = targets[0].mode;
  db.stats_ = stats;
  db.data_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(patch_size * width));
  db.origins_.reserve(total);

  const auto n = static_cast<Eigen::Index>(patch_size * width);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Matrix normalized = stats.apply(targets[i].features);
    db.motion_frames_.push_back(targets[i].frames());
    for (std::size_t s : patch_starts(targets[i].frames(), patch_size, step)) {
      db.data_.row(row++) = Eigen::Map<const Eigen::RowVectorXd>(
          normalized.row(static_cast<Eigen::Index>(s)).data(), n);
      db.origins_.push_back({i, s});
    }
  }
  return db;
}

}  // namespace mxfer
