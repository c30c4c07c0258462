#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mxfer/correspondence.hpp"
#include "mxfer/error.hpp"
#include "mxfer/motion.hpp"
#include "mxfer/patch.hpp"
#include "mxfer/rotation.hpp"

namespace mxfer {

struct TransferConfig {
  double alpha = 0.85;
  std::size_t patch_size = 11;
  std::size_t step = 1;
  std::size_t iterations = 3;
  std::size_t pyramid_levels = 3;
  FeatureMode feature_mode = FeatureMode::rotation6d;
  std::uint64_t seed = 0;
  bool normalize = true;
  // One flag per source frame; false marks a frame whose source pose is hidden.
  std::optional<std::vector<bool>> keyframe_mask;

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::InvalidConfig, "alpha must lie in [0, 1]");
    check_patch_params(patch_size, step);
    require(iterations >= 1, ErrorCode::InvalidConfig, "iterations must be at least 1");
    require(pyramid_levels >= 1, ErrorCode::InvalidConfig, "pyramid_levels must be at least 1");
  }
};

struct MatchRecord {
  std::size_t query_start = 0;
  std::size_t motion_id = 0;
  std::size_t start = 0;
  bool operator==(const MatchRecord&) const = default;
};

struct TransferResult {
  Motion motion;                                // F_s x D_t, de-normalized
  std::vector<double> energy;                   // summed matching cost per iteration
  std::vector<std::vector<MatchRecord>> trace;  // matches per iteration
  // Energies of every pyramid level, coarsest first; the last entry equals `energy`.
  std::vector<std::vector<double>> level_energy;
};

struct MatchResult {
  std::size_t index = 0;
  double cost = 0.0;
};

// Masked matching cost between two flattened patches:
//   (alpha * SSE over bound channels + (1 - alpha) * SSE over unbound) / (Ps * D).
// Both terms share the full element count as denominator.
inline double patch_cost(const double* query, const double* candidate, std::span<const std::uint8_t> mask,
                         double alpha, std::size_t patch_size) {
  const std::size_t width = mask.size();
  double bound = 0.0;
  double unbound = 0.0;
  for (std::size_t f = 0; f < patch_size; ++f) {
    const double* q = query + f * width;
    const double* c = candidate + f * width;
    for (std::size_t ch = 0; ch < width; ++ch) {
      const double d = c[ch] - q[ch];
      (mask[ch] ? bound : unbound) += d * d;
    }
  }
  return (alpha * bound + (1.0 - alpha) * unbound) / static_cast<double>(patch_size * width);
}

// Exhaustive argmin; ties go to the lowest database index, i.e. the lowest
// (motion id, start frame).
inline MatchResult match_patch(const Eigen::Ref<const Matrix>& query, const PatchDatabase& db,
                               std::span<const std::uint8_t> mask, double alpha) {
  if (db.empty()) throw Error(ErrorCode::EmptyDatabase, "patch database is empty");
  require(static_cast<std::size_t>(query.rows()) == db.patch_size() &&
              static_cast<std::size_t>(query.cols()) == db.width() && mask.size() == db.width(),
          ErrorCode::ShapeMismatch, "query shape does not match the database");
  const Matrix q = query;
  MatchResult best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < db.size(); ++i) {
    const double c = patch_cost(q.data(), db.data().row(static_cast<Eigen::Index>(i)).data(), mask, alpha, db.patch_size());
    if (c < best.cost) best = {i, c};
  }
  return best;
}

// Exact matcher that screens candidates with one matrix product per query
// block. Costs are expanded as |p|_w^2 - 2 p.q_w + |q|_w^2; every candidate
// within a rounding margin of the screened minimum is re-scored with
// patch_cost, so the selected index is the same as match_patch's.
class PatchMatcher {
 public:
  PatchMatcher(const PatchDatabase& db, std::span<const std::uint8_t> mask, double alpha)
      : db_(&db), mask_(mask.begin(), mask.end()), alpha_(alpha) {
    if (db.empty()) throw Error(ErrorCode::EmptyDatabase, "patch database is empty");
    require(mask.size() == db.width(), ErrorCode::ShapeMismatch, "mask width does not match the database");
    const auto n = static_cast<Eigen::Index>(db.patch_size() * db.width());
    sqrt_w_.resize(n);
    for (Eigen::Index e = 0; e < n; ++e) {
      const bool bound = mask_[static_cast<std::size_t>(e) % mask_.size()] != 0;
      sqrt_w_[e] = std::sqrt(bound ? alpha : 1.0 - alpha);
    }
    scaled_ = db.data().array().rowwise() * sqrt_w_.array();
    norms_ = scaled_.rowwise().squaredNorm();
    max_norm_ = norms_.maxCoeff();
  }

  std::size_t query_size() const { return static_cast<std::size_t>(sqrt_w_.size()); }

  // Each row of `queries` is one flattened query patch.
  std::vector<MatchResult> match_all(const Eigen::Ref<const Matrix>& queries) const {
    require(queries.cols() == sqrt_w_.size(), ErrorCode::ShapeMismatch, "query width does not match the database");
    std::vector<MatchResult> out(static_cast<std::size_t>(queries.rows()));
    constexpr Eigen::Index block = 64;
    std::vector<std::size_t> candidates;
    for (Eigen::Index b0 = 0; b0 < queries.rows(); b0 += block) {
      const Eigen::Index nb = std::min(block, queries.rows() - b0);
      const Matrix qs = queries.middleRows(b0, nb).array().rowwise() * sqrt_w_.array();
      const Matrix cross = qs * scaled_.transpose();
      for (Eigen::Index r = 0; r < nb; ++r) {
        const double qn = qs.row(r).squaredNorm();
        const auto approx = (norms_.transpose() - 2.0 * cross.row(r)).array() + qn;
        Eigen::Index arg = 0;
        const double lo = approx.minCoeff(&arg);
        const double margin = 1e-9 * (max_norm_ + qn) + std::numeric_limits<double>::min();
        candidates.clear();
        for (Eigen::Index i = 0; i < approx.size(); ++i) {
          if (approx[i] <= lo + margin) candidates.push_back(static_cast<std::size_t>(i));
        }
        const double* q = queries.row(b0 + r).data();
        MatchResult best{0, std::numeric_limits<double>::infinity()};
        for (std::size_t i : candidates) {
          const double c = patch_cost(q, db_->data().row(static_cast<Eigen::Index>(i)).data(), mask_, alpha_,
                                      db_->patch_size());
          if (c < best.cost) best = {i, c};
        }
        out[static_cast<std::size_t>(b0 + r)] = best;
      }
    }
    return out;
  }

  MatchResult match(const Eigen::Ref<const Matrix>& query) const {
    require(static_cast<std::size_t>(query.size()) == query_size(), ErrorCode::ShapeMismatch,
            "query shape does not match the database");
    Matrix flat(1, query.size());
    Eigen::Map<Matrix>(flat.data(), query.rows(), query.cols()) = query;
    return match_all(flat).front();
  }

 private:
  const PatchDatabase* db_;
  std::vector<std::uint8_t> mask_;
  double alpha_;
  Eigen::RowVectorXd sqrt_w_;
  Matrix scaled_;
  Eigen::VectorXd norms_;
  double max_norm_ = 0.0;
};

// Query windows for a sequence: the patch_starts() grid plus, when the grid
// leaves trailing frames uncovered, one window flush with the end.
inline std::vector<std::size_t> query_starts(std::size_t frames, std::size_t patch_size, std::size_t step) {
  auto starts = patch_starts(frames, patch_size, step);
  if (!starts.empty() && starts.back() + patch_size < frames) starts.push_back(frames - patch_size);
  return starts;
}

namespace detail {

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix n(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) n(r, c) = normal(rng);
  }
  return n;
}

inline std::vector<bool> visible_frames(const std::optional<std::vector<bool>>& keyframes, std::size_t frames) {
  if (!keyframes) return std::vector<bool>(frames, true);
  require(keyframes->size() == frames, ErrorCode::ShapeMismatch, "keyframe mask length differs from the source");
  return *keyframes;
}

// Source projected onto target channels, in the database's normalized space.
inline Matrix normalized_anchor(const Matrix& source, const CorrespondenceMap& map, const NormalizationStats& stats) {
  return stats.apply(project_channels(source, map));
}

// Writes the anchor into bound channels of visible frames.
inline void impose_anchor(Matrix& t, const Matrix& anchor, std::span<const std::uint8_t> mask,
                          const std::vector<bool>& visible) {
  for (Eigen::Index f = 0; f < t.rows(); ++f) {
    if (!visible[static_cast<std::size_t>(f)]) continue;
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      if (mask[static_cast<std::size_t>(c)]) t(f, c) = anchor(f, c);
    }
  }
}

struct LevelOutput {
  Matrix normalized;
  std::vector<double> energy;
  std::vector<std::vector<MatchRecord>> trace;
};

// The iterative matching-and-blending loop over an initialized estimate.
inline LevelOutput run_iterations(Matrix estimate, const Matrix& anchor, std::span<const std::uint8_t> mask,
                                  const std::vector<bool>& visible, const PatchDatabase& db, double alpha,
                                  std::size_t iterations) {
  const std::size_t frames = static_cast<std::size_t>(estimate.rows());
  const std::size_t ps = db.patch_size();
  const std::size_t width = db.width();
  if (frames < ps) {
    throw Error(ErrorCode::TooShort, "source has " + std::to_string(frames) + " frames, patch size is " +
                                         std::to_string(ps));
  }
  const PatchMatcher matcher(db, mask, alpha);
  const auto starts = query_starts(frames, ps, db.step());
  const auto n = static_cast<Eigen::Index>(ps * width);

  LevelOutput out;
  Matrix queries(static_cast<Eigen::Index>(starts.size()), n);
  for (std::size_t it = 0; it < iterations; ++it) {
    impose_anchor(estimate, anchor, mask, visible);
    for (std::size_t q = 0; q < starts.size(); ++q) {
      queries.row(static_cast<Eigen::Index>(q)) =
          Eigen::Map<const Eigen::RowVectorXd>(estimate.row(static_cast<Eigen::Index>(starts[q])).data(), n);
    }
    const auto matches = matcher.match_all(queries);

    BlendAccumulator acc(frames, width);
    double energy = 0.0;
    std::vector<MatchRecord> records;
    records.reserve(matches.size());
    for (std::size_t q = 0; q < matches.size(); ++q) {
      energy += matches[q].cost;
      acc.add(starts[q], db.patch_values(matches[q].index));
      const auto& o = db.origins()[matches[q].index];
      records.push_back({starts[q], o.motion_id, o.start});
    }
    estimate = std::move(acc).finish();
    out.energy.push_back(energy);
    out.trace.push_back(std::move(records));
  }
  out.normalized = std::move(estimate);
  return out;
}

inline Motion make_result_motion(Matrix features, double fps, FeatureMode mode) {
  Motion m;
  const auto width = static_cast<std::size_t>(features.cols());
  m.layout = {(width - 3) / joint_width(mode), joint_width(mode)};
  m.features = std::move(features);
  m.fps = fps;
  m.mode = mode;
  return m;
}

inline void check_inputs(const Motion& source, const CorrespondenceMap& map, FeatureMode db_mode, std::size_t db_width) {
  require(source.mode == db_mode, ErrorCode::ShapeMismatch, "source and targets use different feature modes");
  require(source.width() == map.source_width && db_width == map.target_width, ErrorCode::ShapeMismatch,
          "correspondence map does not match the motions");
}

inline Matrix downsample(const Matrix& m, std::size_t factor) {
  const auto rows = static_cast<Eigen::Index>((static_cast<std::size_t>(m.rows()) + factor - 1) / factor);
  Matrix out(rows, m.cols());
  for (Eigen::Index r = 0; r < rows; ++r) out.row(r) = m.row(r * static_cast<Eigen::Index>(factor));
  return out;
}

// Linear interpolation from a sequence sampled every other frame.
inline Matrix upsample(const Matrix& coarse, std::size_t frames) {
  Matrix out(static_cast<Eigen::Index>(frames), coarse.cols());
  const Eigen::Index last = coarse.rows() - 1;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto c0 = std::min(static_cast<Eigen::Index>(f / 2), last);
    const auto c1 = std::min(c0 + 1, last);
    const double t = (f % 2 == 1 && c1 != c0) ? 0.5 : 0.0;
    out.row(static_cast<Eigen::Index>(f)) = (1.0 - t) * coarse.row(c0) + t * coarse.row(c1);
  }
  return out;
}

}  // namespace detail

// Initial estimate: normalized S C^T on bound channels, standard normal noise
// on unbound channels and on every channel of hidden keyframe frames.
inline Matrix project_source(const Matrix& source, const CorrespondenceMap& map, const NormalizationStats& stats,
                             std::uint64_t seed, const std::optional<std::vector<bool>>& keyframe_mask = std::nullopt) {
  const Matrix anchor = detail::normalized_anchor(source, map, stats);
  const auto visible = detail::visible_frames(keyframe_mask, static_cast<std::size_t>(source.rows()));
  Matrix out = detail::standard_normal(anchor.rows(), anchor.cols(), seed);
  detail::impose_anchor(out, anchor, map.mask, visible);
  return out;
}

inline TransferResult transfer(const Motion& source, const PatchDatabase& db, const CorrespondenceMap& map,
                               const TransferConfig& config) {
  config.validate();
  if (db.empty()) throw Error(ErrorCode::EmptyDatabase, "patch database is empty");
  detail::check_inputs(source, map, db.mode(), db.width());
  const auto visible = detail::visible_frames(config.keyframe_mask, source.frames());
  const Matrix anchor = detail::normalized_anchor(source.features, map, db.stats());
  Matrix init = detail::standard_normal(anchor.rows(), anchor.cols(), config.seed);
  detail::impose_anchor(init, anchor, map.mask, visible);

  auto level = detail::run_iterations(std::move(init), anchor, map.mask, visible, db, config.alpha, config.iterations);
  TransferResult out;
  out.motion = detail::make_result_motion(db.stats().invert(level.normalized), source.fps, db.mode());
  out.energy = level.energy;
  out.level_energy = {level.energy};
  out.trace = std::move(level.trace);
  return out;
}

inline NormalizationStats stats_for(std::span<const Motion> targets, const TransferConfig& config) {
  require(!targets.empty(), ErrorCode::EmptyDatabase, "no target example motions");
  return config.normalize ? fit_normalization(targets) : NormalizationStats::identity(targets[0].width());
}

// Largest level count <= requested such that the source and at least one
// target still span a patch at the coarsest level.
inline std::size_t usable_pyramid_levels(std::size_t source_frames, std::span<const std::size_t> target_frames,
                                         std::size_t patch_size, std::size_t requested) {
  std::size_t longest_target = 0;
  for (auto f : target_frames) longest_target = std::max(longest_target, f);
  std::size_t levels = 0;
  std::size_t factor = 1;
  while (levels < requested) {
    const std::size_t s = (source_frames + factor - 1) / factor;
    const std::size_t t = (longest_target + factor - 1) / factor;
    if (s < patch_size || t < patch_size) break;
    ++levels;
    factor *= 2;
  }
  return levels;
}

// Coarse-to-fine schedule: each level halves the frame rate by stride
// sampling. The coarsest level starts from noise; finer levels start from the
// linearly upsampled previous result with the source re-imposed on bound
// channels.
inline TransferResult transfer_pyramid(const Motion& source, std::span<const Motion> targets,
                                       const CorrespondenceMap& map, const TransferConfig& config) {
  config.validate();
  const NormalizationStats stats = stats_for(targets, config);
  std::vector<std::size_t> target_frames;
  for (const auto& t : targets) target_frames.push_back(t.frames());
  const std::size_t levels = usable_pyramid_levels(source.frames(), target_frames, config.patch_size, config.pyramid_levels);
  if (levels == 0) {
    throw Error(ErrorCode::TooShort, "source or targets shorter than the patch size " + std::to_string(config.patch_size));
  }
  detail::check_inputs(source, map, targets[0].mode, targets[0].width());
  const auto visible_full = detail::visible_frames(config.keyframe_mask, source.frames());

  TransferResult out;
  Matrix previous;
  for (std::size_t lv = levels; lv-- > 0;) {
    const std::size_t factor = std::size_t{1} << lv;
    std::vector<Motion> level_targets;
    for (const auto& t : targets) {
      if ((t.frames() + factor - 1) / factor < config.patch_size) continue;
      Motion m = t;
      if (factor > 1) m.features = detail::downsample(t.features, factor);
      level_targets.push_back(std::move(m));
    }
    const PatchDatabase db = build_database(level_targets, config.patch_size, config.step, stats);
    const Matrix source_level = factor > 1 ? detail::downsample(source.features, factor) : source.features;
    std::vector<bool> visible(static_cast<std::size_t>(source_level.rows()));
    for (std::size_t f = 0; f < visible.size(); ++f) visible[f] = visible_full[f * factor];

    const Matrix anchor = detail::normalized_anchor(source_level, map, stats);
    Matrix init;
    if (previous.size() == 0) {
      init = detail::standard_normal(anchor.rows(), anchor.cols(), config.seed);
    } else {
      init = detail::upsample(previous, static_cast<std::size_t>(source_level.rows()));
    }
    detail::impose_anchor(init, anchor, map.mask, visible);

    auto level = detail::run_iterations(std::move(init), anchor, map.mask, visible, db, config.alpha, config.iterations);
    out.level_energy.push_back(level.energy);
    if (lv == 0) {
      out.motion = detail::make_result_motion(stats.invert(level.normalized), source.fps, db.mode());
      out.energy = std::move(level.energy);
      out.trace = std::move(level.trace);
    }
    previous = std::move(level.normalized);
  }
  return out;
}

// Independent runs with seeds seed, seed + 1, ..., seed + count - 1.
inline std::vector<TransferResult> generate_variants(const Motion& source, std::span<const Motion> targets,
                                                     const CorrespondenceMap& map, const TransferConfig& config,
                                                     std::size_t count) {
  require(count >= 1, ErrorCode::InvalidConfig, "variant count must be at least 1");
  std::vector<TransferResult> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TransferConfig c = config;
    c.seed = config.seed + i;
    out.push_back(transfer_pyramid(source, targets, map, c));
  }
  return out;
}

// Single-level variants against a prebuilt database.
inline std::vector<TransferResult> generate_variants(const Motion& source, const PatchDatabase& db,
                                                     const CorrespondenceMap& map, const TransferConfig& config,
                                                     std::size_t count) {
  require(count >= 1, ErrorCode::InvalidConfig, "variant count must be at least 1");
  std::vector<TransferResult> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TransferConfig c = config;
    c.seed = config.seed + i;
    out.push_back(transfer(source, db, map, c));
  }
  return out;
}

// Overwrites the bound channels of the result with the source's projection,
// leaving unbound channels as matched.
inline TransferResult copy_bound_channels(TransferResult result, const Motion& source, const CorrespondenceMap& map) {
  const Matrix projected = project_channels(source.features, map);
  require(projected.rows() == result.motion.features.rows() && projected.cols() == result.motion.features.cols(),
          ErrorCode::ShapeMismatch, "result and source projection differ in shape");
  for (Eigen::Index c = 0; c < projected.cols(); ++c) {
    if (map.mask[static_cast<std::size_t>(c)]) result.motion.features.col(c) = projected.col(c);
  }
  return result;
}

}  // namespace mxfer
