#pragma once

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "mxfer/correspondence.hpp"
#include "mxfer/error.hpp"
#include "mxfer/motion.hpp"
#include "mxfer/skeleton.hpp"
#include "mxfer/transfer.hpp"

namespace mxfer {

// frames x joints global positions.
using PositionTrack = std::vector<std::vector<Vec3>>;

// ---------------------------------------------------------------------------
// Frechet distance on kinematic features

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Rows are samples. Covariance uses the unbiased (n - 1) normalization.
inline Gaussian fit_gaussian(const Eigen::MatrixXd& samples) {
  require(samples.rows() >= 2, ErrorCode::InsufficientWindows, "need at least two samples to fit a covariance");
  Gaussian g;
  g.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
  return g;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), using
// Tr (S1 S2)^(1/2) = Tr (S1^(1/2) S2 S1^(1/2))^(1/2).
inline double frechet_distance(const Gaussian& a, const Gaussian& b) {
  require(a.mean.size() == b.mean.size(), ErrorCode::ShapeMismatch, "feature dimensions differ");
  const Eigen::MatrixXd s1 = psd_sqrt(a.cov);
  const Eigen::MatrixXd inner = s1 * b.cov * s1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

// Per window of `window` speed samples (stride window / 2): the mean and the
// standard deviation of every joint's speed, joints first then deviations.
inline Eigen::MatrixXd kinematic_features(const PositionTrack& positions, std::size_t window = 32) {
  require(window >= 2, ErrorCode::InvalidConfig, "window must be at least 2 frames");
  if (positions.size() < 2) return Eigen::MatrixXd(0, 0);
  const std::size_t joints = positions[0].size();
  const std::size_t samples = positions.size() - 1;
  Eigen::MatrixXd speed(static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(joints));
  for (std::size_t f = 0; f < samples; ++f) {
    for (std::size_t j = 0; j < joints; ++j) {
      speed(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(j)) = (positions[f + 1][j] - positions[f][j]).norm();
    }
  }
  const std::size_t stride = std::max<std::size_t>(1, window / 2);
  std::vector<Eigen::RowVectorXd> rows;
  for (std::size_t s = 0; s + window <= samples; s += stride) {
    const auto block = speed.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(window));
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(2 * joints));
    const Eigen::RowVectorXd mean = block.colwise().mean();
    row.head(static_cast<Eigen::Index>(joints)) = mean;
    row.tail(static_cast<Eigen::Index>(joints)) =
        ((block.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
    rows.push_back(row);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(2 * joints));
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = rows[r];
  return out;
}

inline Eigen::MatrixXd stack_features(std::span<const PositionTrack> tracks, std::size_t window) {
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& t : tracks) {
    parts.push_back(kinematic_features(t, window));
    if (parts.back().rows() == 0) continue;
    if (cols != 0 && parts.back().cols() != cols) throw Error(ErrorCode::ShapeMismatch, "tracks differ in joint count");
    cols = parts.back().cols();
    rows += parts.back().rows();
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    if (p.rows() == 0) continue;
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

inline double fid(std::span<const PositionTrack> real, std::span<const PositionTrack> generated, std::size_t window = 32) {
  const Eigen::MatrixXd a = stack_features(real, window);
  const Eigen::MatrixXd b = stack_features(generated, window);
  if (a.rows() < 2 || b.rows() < 2) {
    throw Error(ErrorCode::InsufficientWindows, "each side needs at least two " + std::to_string(window) +
                                                    "-frame windows");
  }
  require(a.cols() == b.cols(), ErrorCode::ShapeMismatch, "real and generated skeletons differ");
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

inline double fid(const Skeleton& skel, std::span<const Motion> real, std::span<const Motion> generated,
                  std::size_t window = 32) {
  std::vector<PositionTrack> a;
  std::vector<PositionTrack> b;
  for (const auto& m : real) a.push_back(motion_positions(skel, m, Vec3::Zero()));
  for (const auto& m : generated) b.push_back(motion_positions(skel, m, Vec3::Zero()));
  return fid(a, b, window);
}

// ---------------------------------------------------------------------------
// Spectra

inline std::vector<std::complex<double>> dft(std::span<const double> x) {
  std::vector<std::complex<double>> out;
  if (x.empty()) return out;
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> in(x.begin(), x.end());
  fft.fwd(out, in);
  out.resize(x.size());
  for (std::size_t k = x.size() / 2 + 1; k < x.size(); ++k) out[k] = std::conj(out[x.size() - k]);
  return out;
}

inline std::vector<double> remove_mean(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(1, x.size()));
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= mean;
  return out;
}

// Hann-windowed periodogram of the mean-removed signal, bins 0..N/2.
inline std::vector<double> periodogram(std::span<const double> x) {
  auto y = remove_mean(x);
  const std::size_t n = y.size();
  for (std::size_t t = 0; t < n; ++t) {
    y[t] *= 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n)));
  }
  const auto spec = dft(y);
  std::vector<double> psd(n / 2 + 1);
  for (std::size_t k = 0; k < psd.size(); ++k) psd[k] = std::norm(spec[k]) / static_cast<double>(n);
  return psd;
}

// Cosine similarity of two spectra; two silent spectra count as identical.
inline double spectrum_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  constexpr double silent = 1e-24;
  if (aa <= silent && bb <= silent) return 1.0;
  if (aa <= silent || bb <= silent) return 0.0;
  return ab / std::sqrt(aa * bb);
}

inline std::vector<double> column(const Matrix& m, Eigen::Index c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, c);
  return out;
}

// 100 x mean PSD cosine similarity over the bound target channels, comparing
// the result against the source projected through the map.
inline double frequency_alignment(const Motion& source, const Motion& result, const CorrespondenceMap& map) {
  require(source.frames() == result.frames(), ErrorCode::LengthMismatch, "source and result differ in frame count");
  require(result.width() == map.target_width, ErrorCode::ShapeMismatch, "result width does not match the map");
  if (map.bound_channel_count() == 0) throw Error(ErrorCode::NoBoundChannels, "map binds no channels");
  const Matrix projected = project_channels(source.features, map);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < map.mask.size(); ++c) {
    if (!map.mask[c]) continue;
    const auto a = periodogram(column(projected, static_cast<Eigen::Index>(c)));
    const auto b = periodogram(column(result.features, static_cast<Eigen::Index>(c)));
    sum += spectrum_similarity(a, b);
    ++count;
  }
  return 100.0 * sum / static_cast<double>(count);
}

struct DominantPhase {
  std::size_t bin = 0;
  double phase = 0.0;  // radians, argument of the DFT coefficient
};

// Largest-amplitude positive-frequency bin of the mean-removed signal.
inline DominantPhase dominant_phase(std::span<const double> signal) {
  require(signal.size() >= 8, ErrorCode::TooShort, "dominant phase needs at least 8 samples");
  const auto spec = dft(remove_mean(signal));
  DominantPhase best;
  double amp = -1.0;
  for (std::size_t k = 1; k <= signal.size() / 2; ++k) {
    const double a = std::abs(spec[k]);
    if (a > amp) {
      amp = a;
      best = {k, std::arg(spec[k])};
    }
  }
  if (amp < 1e-9) throw Error(ErrorCode::FlatSignal, "signal has no oscillating component");
  return best;
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

// ---------------------------------------------------------------------------
// Contacts

struct ContactTrack {
  std::vector<std::size_t> joints;
  std::vector<std::vector<bool>> contact;  // per labeled joint, per frame

  std::size_t frames() const { return contact.empty() ? 0 : contact[0].size(); }
};

struct ContactThresholds {
  double velocity = 0.0;  // length units per frame
  double height = 0.0;    // above the per-sequence floor
};

inline ContactThresholds default_contact_thresholds(const Skeleton& skel) {
  const double bone = skel.median_bone_length();
  return {0.05 * bone, 0.1 * bone};
}

// Contact when the joint is both slow and near its own 5th-percentile height
// (Y is up).
inline ContactTrack detect_contacts(const PositionTrack& positions, std::span<const std::size_t> joints,
                                    const ContactThresholds& thr) {
  ContactTrack out;
  const std::size_t frames = positions.size();
  for (std::size_t j : joints) {
    if (frames == 0 || j >= positions[0].size()) {
      throw Error(ErrorCode::UnknownJoint, "contact joint " + std::to_string(j) + " is not in the skeleton");
    }
    std::vector<double> heights(frames);
    for (std::size_t f = 0; f < frames; ++f) heights[f] = positions[f][j].y();
    std::vector<double> sorted = heights;
    std::sort(sorted.begin(), sorted.end());
    const double floor = sorted[static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(frames - 1)))];

    std::vector<bool> c(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      double speed = 0.0;
      if (frames > 1) {
        const std::size_t a = f + 1 < frames ? f : f - 1;
        speed = (positions[a + 1][j] - positions[a][j]).norm();
      }
      c[f] = speed < thr.velocity && heights[f] - floor < thr.height;
    }
    out.joints.push_back(j);
    out.contact.push_back(std::move(c));
  }
  return out;
}

inline ContactTrack detect_contacts(const Skeleton& skel, const Motion& motion, std::span<const std::size_t> joints,
                                    const ContactThresholds& thr) {
  for (std::size_t j : joints) {
    if (j >= skel.joint_count()) throw Error(ErrorCode::UnknownJoint, "contact joint " + std::to_string(j) + " is not in the skeleton");
  }
  return detect_contacts(motion_positions(skel, motion, Vec3::Zero()), joints, thr);
}

// 100 x fraction of agreeing (frame, pair) cells; `pairing` holds indices into
// the two tracks' joint lists.
inline double contact_consistency(const ContactTrack& source, const ContactTrack& result,
                                  std::span<const std::pair<std::size_t, std::size_t>> pairing) {
  require(source.frames() == result.frames(), ErrorCode::LengthMismatch, "contact tracks differ in length");
  require(!pairing.empty(), ErrorCode::TooFew, "no contact pairs");
  std::size_t agree = 0;
  std::size_t total = 0;
  for (const auto& [s, r] : pairing) {
    require(s < source.contact.size() && r < result.contact.size(), ErrorCode::UnknownJoint, "pair refers to an unlabeled joint");
    for (std::size_t f = 0; f < source.frames(); ++f) {
      agree += source.contact[s][f] == result.contact[r][f] ? 1 : 0;
      ++total;
    }
  }
  return 100.0 * static_cast<double>(agree) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Diversity, binding rate, throughput

// Mean over unordered pairs of the mean per-frame per-joint distance.
inline double diversity(std::span<const PositionTrack> variants) {
  require(variants.size() >= 2, ErrorCode::TooFew, "diversity needs at least two variants");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < variants.size(); ++a) {
    for (std::size_t b = a + 1; b < variants.size(); ++b) {
      const auto& x = variants[a];
      const auto& y = variants[b];
      require(x.size() == y.size() && !x.empty() && x[0].size() == y[0].size(), ErrorCode::ShapeMismatch,
              "variants differ in frame or joint count");
      double d = 0.0;
      for (std::size_t f = 0; f < x.size(); ++f) {
        for (std::size_t j = 0; j < x[f].size(); ++j) d += (x[f][j] - y[f][j]).norm();
      }
      sum += d / static_cast<double>(x.size() * x[0].size());
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

inline double diversity(const Skeleton& skel, std::span<const TransferResult> variants, const Vec3& initial_root_position) {
  std::vector<PositionTrack> tracks;
  for (const auto& v : variants) tracks.push_back(motion_positions(skel, v.motion, initial_root_position));
  return diversity(tracks);
}

// 2|M| / (J_S + J_T) x 100.
inline double binding_rate(std::size_t bound_pairs, std::size_t source_joints, std::size_t target_joints) {
  require(source_joints + target_joints > 0, ErrorCode::InvalidConfig, "joint counts must be positive");
  return 100.0 * 2.0 * static_cast<double>(bound_pairs) / static_cast<double>(source_joints + target_joints);
}

// Frames per second of `workload`: median of `runs` timed runs after `warmup`
// untimed ones.
inline double measure_fps(const std::function<void()>& workload, std::size_t frames, std::size_t runs = 5,
                          std::size_t warmup = 1) {
  require(runs >= 1, ErrorCode::InvalidConfig, "need at least one timed run");
  for (std::size_t i = 0; i < warmup; ++i) workload();
  std::vector<double> seconds;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    workload();
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(seconds.begin(), seconds.end());
  const double median = seconds[seconds.size() / 2];
  return static_cast<double>(frames) / std::max(median, 1e-9);
}

}  // namespace mxfer
