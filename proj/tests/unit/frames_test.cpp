// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dptnet/error.h"
#include "dptnet/frames.h"
#include "dptnet/numerics/grad_check.h"
#include "dptnet/numerics/ops.h"
#include "dptnet/segmentation.h"
#include "test_util.h"

namespace dptnet {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;
using TD = Tensor<double>;

void expect_values(const TD& t, std::initializer_list<double> expected, double tol = 1e-12) {
  ASSERT_EQ(t.size(), static_cast<Index>(expected.size()));
  Index i = 0;
  for (double e : expected) EXPECT_NEAR(t[i++], e, tol) << "at index " << i - 1;
}

double dot(const TD& a, const TD& b) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(Frame, EnumeratesOverlappingColumns) {
  const FrameMatrix<double> f = frame(TD::vector({1, 2, 3, 4}), 2, 1);
  EXPECT_EQ(f.layout.num_frames, 3);
  EXPECT_EQ(f.frames.shape(), (Shape{2, 3}));
  // Columns [1,2], [2,3], [3,4] stored row-major as frame_len x num_frames.
  expect_values(f.frames, {1, 2, 3, 2, 3, 4});
  EXPECT_EQ(f.layout.pad(), 0);
}

TEST(Frame, ShortSignalGivesOneColumn) {
  const FrameMatrix<double> f = frame(TD::vector({1, 2}), 2, 1);
  EXPECT_EQ(f.layout.num_frames, 1);
  expect_values(f.frames, {1, 2});
}

TEST(Frame, TailPaddingCoversEverySample) {
  const FrameLayout a = plan_frames(5, 4, 2);
  EXPECT_EQ(a.num_frames, 2);
  EXPECT_EQ(a.pad(), 1);
  const FrameLayout b = plan_frames(1, 8, 3);
  EXPECT_EQ(b.num_frames, 1);
  EXPECT_EQ(b.pad(), 7);
  const FrameMatrix<double> f = frame(TD::vector({1, 2, 3}), 2, 2);
  expect_values(f.frames, {1, 3, 2, 0});
}

TEST(Frame, RejectsBadGeometry) {
  EXPECT_THROW(plan_frames(0, 2, 1), ContractError);
  EXPECT_THROW(plan_frames(4, 0, 1), ContractError);
  EXPECT_THROW(plan_frames(4, 2, 0), ContractError);
  EXPECT_THROW(plan_frames(4, 2, 3), ContractError);
  EXPECT_THROW(frame(Waveform<double>{}, 2, 1), ContractError);
}

TEST(OverlapAdd, NormalizedInvertsFrame) {
  expect_values(overlap_add(frame(TD::vector({1, 2, 3, 4}), 2, 1), true), {1, 2, 3, 4});
}

TEST(OverlapAdd, UnnormalizedDoublesInteriorSamples) {
  // Frames [1,2], [2,3], [3,4] summed at offsets 0, 1, 2.
  expect_values(overlap_add(frame(TD::vector({1, 2, 3, 4}), 2, 1), false), {1, 4, 6, 4});
}

TEST(OverlapAdd, NoOverlapModesAgree) {
  std::mt19937_64 rng(5);
  const TD x = random_tensor({11}, rng);
  const FrameMatrix<double> f = frame(x, 4, 4);
  EXPECT_EQ(max_abs_diff(overlap_add(f, true), overlap_add(f, false)), 0.0);
  EXPECT_EQ(max_abs_diff(overlap_add(f, true), x), 0.0);
}

TEST(OverlapAdd, RoundTripGrid) {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (Index L : {2, 4, 8}) {
    for (Index hop = 1; hop <= L; ++hop) {
      for (Index n = 1; n <= 100; ++n) {
        const TD x = random_tensor({n}, rng);
        const TD y = overlap_add(frame(x, L, hop), true);
        ASSERT_EQ(y.size(), n);
        worst = std::max(worst, max_abs_diff(x, y));
      }
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Encode, HandExample) {
  const TD w({2, 2}, {1, 1, 1, -1});
  const FeatureMap<double> x = encode(frame(TD::vector({1, 2, 3, 4}), 2, 1), w);
  EXPECT_EQ(x.features.shape(), (Shape{2, 3}));
  expect_values(x.features, {3, 5, 7, 0, 0, 0});
}

TEST(Encode, ZeroFiltersGiveZeroFeatures) {
  std::mt19937_64 rng(2);
  const FeatureMap<double> x = encode(frame(random_tensor({9}, rng), 2, 1), TD({3, 2}));
  for (double v : x.features.data()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, OutputIsNonnegative) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMap<double> x =
        encode(frame(random_tensor({37}, rng), 4, 2), random_tensor({6, 4}, rng));
    for (double v : x.features.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(Encode, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(encode(frame(TD::vector({1, 2, 3}), 2, 1), TD({3, 3})), DimensionError);
  const FeatureMap<double> x = encode(frame(TD::vector({1, 2, 3}), 2, 1), TD({3, 2}));
  EXPECT_THROW(decode(x, TD({4, 2})), DimensionError);
}

TEST(Decode, ZeroFeaturesGiveSilenceOfInputLength) {
  const FrameMatrix<double> f = frame(TD::vector({1, 2, 3, 4, 5}), 2, 1);
  const FeatureMap<double> y{TD({3, f.layout.num_frames}), f.layout};
  const TD out = decode(y, TD::full({3, 2}, 1.0));
  ASSERT_EQ(out.size(), 5);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Decode, SingleFrameIsBasisTransposeTimesColumn) {
  const FrameMatrix<double> f = frame(TD::vector({0.5, -1.0}), 2, 2);
  ASSERT_EQ(f.layout.num_frames, 1);
  const FeatureMap<double> y{TD({3, 1}, {1.0, 2.0, -1.0}), f.layout};
  const TD v({3, 2}, {1, 2, 3, 4, 5, 6});
  // V^T y = [1 + 6 - 5, 2 + 8 - 6].
  expect_values(decode(y, v), {2, 4});
}

TEST(Decode, PreservesLengthForEveryPadding) {
  std::mt19937_64 rng(4);
  for (Index n = 1; n <= 30; ++n) {
    const TD w = random_tensor({5, 4}, rng);
    EXPECT_EQ(decode(encode(frame(random_tensor({n}, rng), 4, 3), w), w).size(), n);
  }
}

TEST(Decode, IsAdjointOfLinearEncoder) {
  std::mt19937_64 rng(6);
  for (Index hop : {1, 2}) {
    const TD x = random_tensor({23}, rng);
    const TD w = random_tensor({5, 2}, rng);
    const FeatureMap<double> ex = encode_linear(frame(x, 2, hop), w);
    const FeatureMap<double> y{random_tensor(ex.features.shape(), rng), ex.layout};
    EXPECT_NEAR(dot(ex.features, y.features), dot(x, decode(y, w)), 1e-12);
  }
}

TEST(Decode, EncodeDecodeGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const TD x = random_tensor({12}, rng);
  const TD w = random_tensor({4, 2}, rng);
  const TD v = random_tensor({4, 2}, rng);
  const TD r = random_tensor({12}, rng);
  auto f = [&](const TD&) {
    return testing::probe(decode(encode(frame(x, 2, 1), w), v), r);
  };
  EXPECT_LT(grad_check(f, x), 1e-4);
  EXPECT_LT(grad_check(f, w), 1e-4);
  EXPECT_LT(grad_check(f, v), 1e-4);
}

Index brute_force_chunks(Index I, Index K, Index H) {
  Index p = 1;
  while (K + (p - 1) * H < I) ++p;
  return p;
}

TEST(Segment, EnumeratesChunks) {
  std::mt19937_64 rng(1);
  const TD x = random_tensor({2, 4}, rng);
  const ChunkTensor<double> d = segment(x, 2, 1);
  EXPECT_EQ(d.layout.num_chunks, 3);
  EXPECT_EQ(d.data.shape(), (Shape{2, 2, 3}));
  for (Index n = 0; n < 2; ++n) {
    for (Index k = 0; k < 2; ++k) {
      for (Index p = 0; p < 3; ++p) EXPECT_EQ(d.data[(n * 2 + k) * 3 + p], x[n * 4 + p + k]);
    }
  }
}

TEST(Segment, SingleChunkEqualsInput) {
  std::mt19937_64 rng(2);
  const TD x = random_tensor({3, 5}, rng);
  const ChunkTensor<double> d = segment(x, 5, 5);
  EXPECT_EQ(d.layout.num_chunks, 1);
  EXPECT_EQ(max_abs_diff(ops::reshape(d.data, {3, 5}), x), 0.0);
  EXPECT_EQ(max_abs_diff(merge(d), x), 0.0);
}

TEST(Segment, PadsTailToWholeChunks) {
  const ChunkLayout c = plan_chunks(5, 4, 2);
  EXPECT_EQ(c.num_chunks, 2);
  EXPECT_EQ(c.pad(), 1);
  std::mt19937_64 rng(3);
  const ChunkTensor<double> d = segment(random_tensor({1, 5}, rng), 4, 2);
  EXPECT_EQ(d.data[3 * 2 + 1], 0.0);  // frame 5 of the padded map
}

TEST(Segment, ChunkCountMatchesEnumeration) {
  for (Index K = 1; K <= 8; ++K) {
    for (Index H = 1; H <= K; ++H) {
      for (Index I = 1; I <= 40; ++I) {
        const ChunkLayout c = plan_chunks(I, K, H);
        ASSERT_EQ(c.num_chunks, brute_force_chunks(I, K, H)) << I << " " << K << " " << H;
        ASSERT_GE(c.padded_frames(), I);
        if (I <= K) {
          ASSERT_EQ(c.pad(), K - I);
        } else {
          ASSERT_LT(c.pad(), H);
        }
      }
    }
  }
}

TEST(Segment, RejectsBadGeometry) {
  EXPECT_THROW(plan_chunks(0, 2, 1), ContractError);
  EXPECT_THROW(plan_chunks(4, 0, 1), ContractError);
  EXPECT_THROW(plan_chunks(4, 2, 3), ContractError);
  EXPECT_THROW(plan_chunks(4, 2, 0), ContractError);
}

TEST(Segment, DefaultChunkLength) {
  EXPECT_EQ(default_chunk_len(1), 2);
  EXPECT_EQ(default_chunk_len(8), 4);
  EXPECT_EQ(default_chunk_len(9), 6);  // ceil(sqrt(18)) = 5, rounded up to even
  EXPECT_EQ(default_chunk_len(32000), 254);
  for (Index I = 1; I < 5000; I += 7) {
    const Index K = default_chunk_len(I);
    EXPECT_EQ(K % 2, 0);
    EXPECT_GE(K * K, 2 * I);
    EXPECT_LT((K - 2) * (K - 2), 2 * I);
  }
}

TEST(Merge, RoundTripGrid) {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (Index K = 2; K <= 8; ++K) {
    for (Index H = 1; H <= K; ++H) {
      for (Index I = 1; I <= 40; ++I) {
        const TD x = random_tensor({3, I}, rng);
        worst = std::max(worst, max_abs_diff(merge(segment(x, K, H)), x));
      }
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Merge, AllOnesChunksGiveAllOnes) {
  const ChunkLayout layout = plan_chunks(4, 2, 1);
  const ChunkTensor<double> d{TD::full({2, 2, layout.num_chunks}, 1.0), layout};
  const TD x = merge(d);
  for (double v : x.data()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Merge, SegmentAndMergeGradients) {
  std::mt19937_64 rng(9);
  const TD x = random_tensor({3, 7}, rng);
  const ChunkTensor<double> shape = segment(x, 4, 2);
  const TD r = random_tensor(shape.data.shape(), rng);
  EXPECT_LT(grad_check([&](const TD& in) { return testing::probe(segment(in, 4, 2).data, r); }, x),
            1e-4);
  const TD d = random_tensor(shape.data.shape(), rng);
  const TD r2 = random_tensor({3, 7}, rng);
  EXPECT_LT(grad_check(
                [&](const TD& in) {
                  return testing::probe(merge(ChunkTensor<double>{in, shape.layout}), r2);
                },
                d),
            1e-4);
}

}  // namespace
}  // namespace dptnet
