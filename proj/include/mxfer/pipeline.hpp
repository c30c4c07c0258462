#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mxfer/binding_io.hpp"
#include "mxfer/bvh.hpp"
#include "mxfer/correspondence.hpp"
#include "mxfer/metrics.hpp"
#include "mxfer/motion.hpp"
#include "mxfer/patch.hpp"
#include "mxfer/skeleton.hpp"
#include "mxfer/transfer.hpp"

namespace mxfer {

// A parsed BVH clip in feature form.
struct Character {
  Skeleton skeleton;
  Motion motion;  // rotation6d
  Vec3 root0 = Vec3::Zero();
};

inline Character load_character(const BvhFile& file) {
  Character c;
  c.skeleton = Skeleton::from_raw(file.joints);
  auto conv = raw_to_features(c.skeleton, file.motion);
  c.motion = std::move(conv.motion);
  c.root0 = conv.initial_root_position;
  return c;
}

inline Character load_character(const std::string& path) { return load_character(load_bvh(path)); }

// Example motions must all live on one skeleton.
inline void check_targets(std::span<const Character> targets) {
  require(!targets.empty(), ErrorCode::EmptyDatabase, "no target example motions");
  for (std::size_t i = 1; i < targets.size(); ++i) {
    if (!targets[i].skeleton.same_structure(targets[0].skeleton)) {
      throw Error(ErrorCode::ShapeMismatch, "target example " + std::to_string(i) + " uses a different skeleton");
    }
  }
}

inline CorrespondenceMap character_map(const Character& source, const Character& target, const BindingSet& bindings,
                                       FeatureMode mode) {
  if (mode == FeatureMode::rotation6d) {
    const auto align = align_rest_pose(source.skeleton, target.skeleton, bindings);
    return build_map(bindings, source.skeleton.layout(6), target.skeleton.layout(6), align);
  }
  return build_map(bindings, source.skeleton.layout(3), target.skeleton.layout(3));
}

struct JobOutput {
  CorrespondenceMap map;                 // in the feature mode of the run
  std::vector<TransferResult> results;   // one per variant, in the run's feature mode
  std::vector<Motion> rotations;         // one per variant, rotation6d on the target skeleton
  double seconds_per_variant = 0.0;
};

// Rotation features for a run in a positional mode: the target examples'
// rotation patches blended along the final matches.
inline Motion rotations_from_trace(const TransferResult& r, std::span<const Character> targets, std::size_t patch_size) {
  const std::size_t frames = r.motion.frames();
  const ChannelLayout layout = targets[0].skeleton.layout(6);
  BlendAccumulator acc(frames, layout.width());
  require(!r.trace.empty(), ErrorCode::CoverageGap, "transfer recorded no matches");
  for (const auto& m : r.trace.back()) {
    acc.add(m.query_start, targets[m.motion_id].motion.features.middleRows(static_cast<Eigen::Index>(m.start),
                                                                            static_cast<Eigen::Index>(patch_size)));
  }
  Motion out;
  out.features = std::move(acc).finish();
  out.features.leftCols<3>() = r.motion.features.leftCols<3>();
  out.fps = r.motion.fps;
  out.layout = layout;
  out.mode = FeatureMode::rotation6d;
  return out;
}

inline JobOutput run_transfer(const Character& source, std::span<const Character> targets, const BindingSet& bindings,
                              const TransferConfig& config, std::size_t variants) {
  config.validate();
  check_targets(targets);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (std::abs(targets[i].motion.fps - source.motion.fps) > 1e-3 * source.motion.fps) {
      throw Error(ErrorCode::ShapeMismatch, "target example " + std::to_string(i) + " runs at " +
                                                std::to_string(targets[i].motion.fps) + " fps, the source at " +
                                                std::to_string(source.motion.fps));
    }
    if (targets[i].motion.frames() < config.patch_size) {
      throw Error(ErrorCode::TooShort, "target example " + std::to_string(i) + " is shorter than the patch size");
    }
  }
  const FeatureMode mode = config.feature_mode;
  JobOutput out;
  out.map = character_map(source, targets[0], bindings, mode);

  std::vector<Motion> examples;
  for (const auto& t : targets) examples.push_back(to_feature_mode(t.skeleton, t.motion, mode));
  const Motion src = to_feature_mode(source.skeleton, source.motion, mode);

  const auto t0 = std::chrono::steady_clock::now();
  out.results = generate_variants(src, examples, out.map, config, variants);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.seconds_per_variant = seconds / static_cast<double>(variants);

  for (const auto& r : out.results) {
    out.rotations.push_back(mode == FeatureMode::rotation6d ? r.motion : rotations_from_trace(r, targets, config.patch_size));
  }
  return out;
}

struct ResultBvh {
  BvhFile file;
  std::vector<std::string> gimbal_warnings;
};

// The result starts where the first target example starts.
inline ResultBvh result_bvh(const Skeleton& target, const Motion& rotations, const Vec3& root0) {
  auto conv = features_to_raw(target, rotations, root0);
  return {{target.to_raw(), std::move(conv.raw)}, std::move(conv.gimbal_warnings)};
}

// Bound pairs whose target joint is a leaf, or every bound pair when none is.
inline std::vector<BindingPair> contact_pairs(const Skeleton& target, const BindingSet& bindings) {
  std::vector<BindingPair> leaves;
  for (const auto& p : bindings.pairs) {
    if (target.children(p.target).empty()) leaves.push_back(p);
  }
  return leaves.empty() ? bindings.pairs : leaves;
}

// {fid, freq_align, contact_consistency, diversity, binding_rate, fps}; a
// metric that cannot be computed for this input is null.
inline Json metrics_report(const Character& source, std::span<const Character> targets, const BindingSet& bindings,
                           const JobOutput& job) {
  const Skeleton& tgt = targets[0].skeleton;
  Json report;

  try {
    std::vector<Motion> real;
    for (const auto& t : targets) real.push_back(t.motion);
    report["fid"] = fid(tgt, real, job.rotations);
  } catch (const Error&) {
    report["fid"] = nullptr;
  }

  try {
    const CorrespondenceMap map = character_map(source, targets[0], bindings, FeatureMode::rotation6d);
    double sum = 0.0;
    for (const auto& r : job.rotations) sum += frequency_alignment(source.motion, r, map);
    report["freq_align"] = sum / static_cast<double>(job.rotations.size());
  } catch (const Error&) {
    report["freq_align"] = nullptr;
  }

  try {
    const auto pairs = contact_pairs(tgt, bindings);
    require(!pairs.empty(), ErrorCode::TooFew, "no bound joints");
    std::vector<std::size_t> sj;
    std::vector<std::size_t> tj;
    std::vector<std::pair<std::size_t, std::size_t>> pairing;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      sj.push_back(pairs[i].source);
      tj.push_back(pairs[i].target);
      pairing.emplace_back(i, i);
    }
    const auto sc = detect_contacts(source.skeleton, source.motion, sj, default_contact_thresholds(source.skeleton));
    double sum = 0.0;
    for (const auto& r : job.rotations) {
      const auto rc = detect_contacts(tgt, r, tj, default_contact_thresholds(tgt));
      sum += contact_consistency(sc, rc, pairing);
    }
    report["contact_consistency"] = sum / static_cast<double>(job.rotations.size());
  } catch (const Error&) {
    report["contact_consistency"] = nullptr;
  }

  if (job.rotations.size() >= 2) {
    std::vector<PositionTrack> tracks;
    for (const auto& r : job.rotations) tracks.push_back(motion_positions(tgt, r, targets[0].root0));
    report["diversity"] = diversity(tracks);
  } else {
    report["diversity"] = nullptr;
  }

  report["binding_rate"] = binding_rate(bindings.pairs.size(), source.skeleton.joint_count(), tgt.joint_count());
  report["fps"] = static_cast<double>(source.motion.frames()) / std::max(job.seconds_per_variant, 1e-9);
  return report;
}

inline Json energy_json(const JobOutput& job) {
  Json out = Json::array();
  for (const auto& r : job.results) out.push_back(r.energy);
  return out;
}

inline Json config_to_json(const TransferConfig& c) {
  return {{"alpha", c.alpha},       {"patch_size", c.patch_size},       {"step", c.step},
          {"iterations", c.iterations}, {"pyramid_levels", c.pyramid_levels},
          {"feature_mode", std::string(feature_mode_name(c.feature_mode))},
          {"seed", c.seed},         {"normalize", c.normalize}};
}

// Fields absent from `j` keep their current value.
inline TransferConfig config_from_json(const Json& j, TransferConfig c = {}) {
  require(j.is_object(), ErrorCode::InvalidConfig, "config must be a JSON object");
  try {
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("patch_size")) c.patch_size = j["patch_size"].get<std::size_t>();
    if (j.contains("step")) c.step = j["step"].get<std::size_t>();
    if (j.contains("iterations")) c.iterations = j["iterations"].get<std::size_t>();
    if (j.contains("pyramid_levels")) c.pyramid_levels = j["pyramid_levels"].get<std::size_t>();
    if (j.contains("feature_mode")) c.feature_mode = parse_feature_mode(j["feature_mode"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("normalize")) c.normalize = j["normalize"].get<bool>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

}  // namespace mxfer
