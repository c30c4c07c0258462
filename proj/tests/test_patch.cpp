#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mxfer/patch.hpp"

namespace {

using namespace mxfer;

Motion random_motion(std::size_t frames, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Motion m;
  m.features.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(width));
  for (Eigen::Index i = 0; i < m.features.size(); ++i) m.features.data()[i] = n(rng);
  m.layout = {(width - 3) / 6, 6};
  return m;
}

TEST(Patchify, Counts) {
  EXPECT_EQ(patchify(Matrix::Zero(100, 9), 11, 1).size(), 90u);
  const auto whole = patchify(Matrix::Ones(11, 9), 11, 1);
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole[0].values, Matrix::Ones(11, 9));
  const auto stepped = patchify(Matrix::Zero(20, 9), 11, 4);
  ASSERT_EQ(stepped.size(), 2u);
  EXPECT_EQ(stepped[0].start, 0u);
  EXPECT_EQ(stepped[1].start, 4u);
}

TEST(Patchify, Errors) {
  try {
    patchify(Matrix::Zero(10, 9), 11, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooShort);
  }
  EXPECT_THROW(patchify(Matrix::Zero(10, 9), 1, 1), Error);
  EXPECT_THROW(patchify(Matrix::Zero(10, 9), 2, 0), Error);
}

TEST(Blend, Examples) {
  std::vector<Patch> one{{Matrix::Constant(4, 2, 5.0), 0, 0}};
  EXPECT_EQ(blend(one, 4), Matrix::Constant(4, 2, 5.0));

  std::vector<Patch> two{{Matrix::Constant(3, 1, 1.0), 0, 0}, {Matrix::Constant(3, 1, 3.0), 0, 2}};
  const Matrix out = blend(two, 5);
  EXPECT_EQ(out(0, 0), 1.0);
  EXPECT_EQ(out(2, 0), 2.0);
  EXPECT_EQ(out(4, 0), 3.0);

  std::vector<Patch> gap{{Matrix::Zero(2, 1), 0, 0}, {Matrix::Zero(2, 1), 0, 3}};
  try {
    blend(gap, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CoverageGap);
  }
}

TEST(Blend, ReconstructsPatchifiedMotion) {
  const Motion m = random_motion(57, 15, 3);
  for (std::size_t ps : {2u, 5u, 11u}) {
    const auto patches = patchify(m.features, ps, 1);
    EXPECT_LE((blend(patches, m.frames()) - m.features).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Blend, PermutationInvariant) {
  auto patches = patchify(random_motion(40, 9, 4).features, 7, 2);
  const Matrix a = blend(patches, 39);
  std::mt19937_64 rng(1);
  std::shuffle(patches.begin(), patches.end(), rng);
  EXPECT_LE((blend(patches, 39) - a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildDatabase, PoolingAndOrder) {
  const std::vector<Motion> ms{random_motion(30, 9, 1), random_motion(30, 9, 2), random_motion(30, 9, 3)};
  const auto stats = NormalizationStats::identity(9);
  const auto single = build_database(std::span(ms).first(1), 11, 1, stats);
  const auto pooled = build_database(ms, 11, 1, stats);
  EXPECT_EQ(single.size(), 20u);
  EXPECT_EQ(pooled.size(), 60u);
  EXPECT_EQ(pooled.origins()[20], (PatchDatabase::Origin{1, 0}));
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_EQ(pooled.patch_values(i), single.patch_values(i));
  EXPECT_EQ(pooled.patch(45).values, ms[2].features.middleRows(5, 11));

  const std::vector<Motion> exact{random_motion(11, 9, 9)};
  EXPECT_EQ(build_database(exact, 11, 1, stats).size(), 1u);
}

TEST(BuildDatabase, CountFormulaAndNormalization) {
  const std::vector<Motion> ms{random_motion(31, 9, 1), random_motion(47, 9, 2)};
  const auto stats = fit_normalization(ms);
  const auto db = build_database(ms, 6, 3, stats);
  EXPECT_EQ(db.size(), (31u - 6 + 1) / 3 + (47u - 6 + 1) / 3);
  EXPECT_LE((db.patch(0).values - stats.apply(ms[0].features).topRows(6)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildDatabase, Errors) {
  const auto stats = NormalizationStats::identity(9);
  const std::vector<Motion> ms{random_motion(30, 9, 1), random_motion(8, 9, 2)};
  try {
    build_database(ms, 11, 1, stats);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooShort);
    EXPECT_NE(std::string(e.what()).find("motion 1"), std::string::npos);
  }
  EXPECT_THROW(build_database(std::span<const Motion>{}, 11, 1, stats), Error);
}

}  // namespace
