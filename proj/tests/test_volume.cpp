// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/errors.hpp"
#include "covren/volume.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>

namespace covren {
namespace {

using testing::random_vec;
using testing::random_volume;
using testing::TempDir;
using testing::uniform;

const AxisAlignedBox kBox{Vec3(-0.4, -0.2, 0.0), Vec3(0.4, 0.6, 0.5)};

TEST(SampleTrilinear, VoxelCenterReturnsStoredValue) {
  std::mt19937_64 rng(1);
  const ObjectVolume v = random_volume(rng, {5, 4, 6}, kBox, 10.0);
  for (int z = 0; z < 5; ++z) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 6; ++x) {
        const std::size_t i = v.grid.dims.index(z, y, x);
        const VolumeSample s = sample_trilinear(v, v.grid.voxel_center(z, y, x));
        ASSERT_NEAR(s.density, v.density[i], 1e-6);
        ASSERT_NEAR(s.radiance.y(), v.radiance[v.voxel_count() + i], 1e-6);
      }
    }
  }
}

TEST(SampleTrilinear, MidpointAveragesNeighbours) {
  std::mt19937_64 rng(2);
  const ObjectVolume v = random_volume(rng, {4, 4, 4}, kBox, 10.0);
  const Vec3 mid = 0.5 * (v.grid.voxel_center(1, 2, 1) + v.grid.voxel_center(1, 2, 2));
  const double expect =
      0.5 * (v.density[v.grid.dims.index(1, 2, 1)] + v.density[v.grid.dims.index(1, 2, 2)]);
  EXPECT_NEAR(sample_trilinear(v, mid).density, expect, 1e-6);
}

TEST(SampleTrilinear, OutsideBoxIsEmpty) {
  std::mt19937_64 rng(3);
  const ObjectVolume v = random_volume(rng, {4, 4, 4}, kBox, 10.0);
  for (int i = 0; i < 1000; ++i) {
    Vec3 p = random_vec(rng, -2.0, 2.0);
    if (kBox.contains(p)) continue;
    const VolumeSample s = sample_trilinear(v, p);
    ASSERT_EQ(s.density, 0.0);
    ASSERT_EQ(s.radiance, Vec3::Zero());
  }
}

TEST(SampleTrilinear, BoundaryHalfVoxelClampsToEdge) {
  ObjectVolume v({2, 2, 2}, testing::unit_box());
  for (std::size_t i = 0; i < 8; ++i) v.density[i] = static_cast<float>(i);
  // x below the first voxel center takes the x = 0 column value.
  const Vec3 p(-0.49, v.grid.voxel_center(0, 0, 0).y(), v.grid.voxel_center(0, 0, 0).z());
  EXPECT_NEAR(sample_trilinear(v, p).density, v.density[0], 1e-12);
}

TEST(StencilWeights, VoxelCenterHasSingleUnitWeight) {
  ObjectVolume v({3, 3, 3}, kBox);
  const WeightedSample ws = sample_trilinear_with_weights(v, v.grid.voxel_center(1, 1, 1));
  int ones = 0;
  int zeros = 0;
  for (double w : ws.stencil.weight) {
    if (std::abs(w - 1.0) < 1e-12) ++ones;
    if (std::abs(w) < 1e-12) ++zeros;
  }
  EXPECT_EQ(ones, 1);
  EXPECT_EQ(zeros, 7);
}

TEST(StencilWeights, CenterOfTwoCubedGridIsUniform) {
  ObjectVolume v({2, 2, 2}, kBox);
  const WeightedSample ws = sample_trilinear_with_weights(v, kBox.center());
  for (double w : ws.stencil.weight) EXPECT_NEAR(w, 0.125, 1e-12);
}

TEST(StencilWeights, InteriorWeightsSumToOne) {
  std::mt19937_64 rng(4);
  ObjectVolume v({7, 5, 3}, kBox);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p = kBox.min_corner + random_vec(rng, 0.0, 1.0).cwiseProduct(kBox.extent());
    const WeightedSample ws = sample_trilinear_with_weights(v, p);
    ASSERT_TRUE(ws.stencil.inside);
    double sum = 0.0;
    for (double w : ws.stencil.weight) {
      ASSERT_GE(w, 0.0);
      sum += w;
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(SampleTrilinear, ContinuityAndBounds) {
  std::mt19937_64 rng(5);
  const ObjectVolume v = random_volume(rng, {6, 6, 6}, kBox, 50.0);
  const double max_density = *std::max_element(v.density.begin(), v.density.end());
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p = kBox.min_corner + random_vec(rng, 0.0, 1.0).cwiseProduct(kBox.extent());
    Vec3 q = p + random_vec(rng, -1.0, 1.0).normalized() * (1e-6 * kBox.diagonal());
    if (!kBox.contains(q)) q = p;
    const WeightedSample a = sample_trilinear_with_weights(v, p);
    ASSERT_LE(std::abs(a.sample.density - sample_trilinear(v, q).density), 1e-4 * max_density);
    double lo = 1e30;
    double hi = -1e30;
    for (std::size_t c = 0; c < 8; ++c) {
      lo = std::min<double>(lo, v.density[a.stencil.index[c]]);
      hi = std::max<double>(hi, v.density[a.stencil.index[c]]);
    }
    ASSERT_GE(a.sample.density, lo - 1e-9);
    ASSERT_LE(a.sample.density, hi + 1e-9);
  }
}

TEST(VolumeFile, RoundTripIsBitExact) {
  TempDir dir("vol");
  std::mt19937_64 rng(6);
  ObjectVolume v = random_volume(rng, {8, 8, 8}, kBox, 20.0);
  v.background = false;
  save_volume(v, dir.path() / "a.covv");
  const ObjectVolume back = load_volume(dir.path() / "a.covv");
  EXPECT_EQ(back.grid.dims, v.grid.dims);
  EXPECT_EQ(back.grid.box.min_corner, v.grid.box.min_corner);
  EXPECT_EQ(back.grid.box.max_corner, v.grid.box.max_corner);
  EXPECT_EQ(0, std::memcmp(back.density.data(), v.density.data(), v.density.size() * 4));
  EXPECT_EQ(0, std::memcmp(back.radiance.data(), v.radiance.data(), v.radiance.size() * 4));
  EXPECT_EQ(0, std::memcmp(back.occupancy_logit.data(), v.occupancy_logit.data(),
                           v.occupancy_logit.size() * 4));
}

TEST(VolumeFile, TruncatedFileIsFormatError) {
  TempDir dir("vol");
  std::mt19937_64 rng(7);
  save_volume(random_volume(rng, {4, 4, 4}, kBox, 1.0), dir.path() / "a.covv");
  std::filesystem::resize_file(dir.path() / "a.covv", 200);
  try {
    load_volume(dir.path() / "a.covv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(VolumeFile, WrongMagicIsNamed) {
  TempDir dir("vol");
  std::ofstream(dir.path() / "bad.covv", std::ios::binary) << "NOPE0000000000000000000000000000";
  try {
    load_volume(dir.path() / "bad.covv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("NOPE"), std::string::npos);
  }
}

TEST(VolumeFile, OverflowingDimsAreRejected) {
  TempDir dir("vol");
  std::ofstream out(dir.path() / "big.covv", std::ios::binary);
  const std::uint32_t header[] = {1u, 1u << 20, 1u << 20, 1u << 20};
  out.write("COVV", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.close();
  EXPECT_THROW(load_volume(dir.path() / "big.covv"), FormatError);
}

TEST(VolumeFile, MissingFileIsIoError) {
  EXPECT_THROW(load_volume("/nonexistent/covren/x.covv"), IoError);
}

TEST(ObjectVolume, ValidateChecksInvariants) {
  ObjectVolume v({2, 2, 2}, kBox);
  EXPECT_NO_THROW(v.validate());
  v.density[3] = -1.0f;
  EXPECT_THROW(v.validate(), ContractError);
  v.density[3] = 0.0f;
  v.radiance[5] = 1.5f;
  EXPECT_THROW(v.validate(), ContractError);
}

}  // namespace
}  // namespace covren
