#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace snapsci;
using namespace snapsci::testing;

TEST(Modulate, IdentityZeroAndOracle) {
  std::mt19937_64 rng(1);
  const auto cube = random_cube(4, 4, 3, rng);
  EXPECT_EQ(modulate(cube, Image<double>(4, 4, 1.0)).data, cube.data);
  for (double v : modulate(cube, Image<double>(4, 4, 0.0)).data) EXPECT_EQ(v, 0.0);
  const auto m = binary_mask(4, 4, rng);
  const auto out = modulate(cube, m);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 4; ++w) EXPECT_EQ(out(h, w, c), cube(h, w, c) * m(h, w));
  EXPECT_THROW(modulate(cube, Image<double>(4, 5, 1.0)), DimensionError);
}

TEST(Disperse, ZeroShiftIsIdentity) {
  std::mt19937_64 rng(2);
  const auto cube = random_cube(3, 5, 4, rng);
  EXPECT_EQ(disperse(cube, 0).data, cube.data);
}

TEST(Disperse, WidthAndCoordinateMap) {
  Cube<double> small(2, 2, 2, 1.0);
  EXPECT_EQ(disperse(small, 1).width, 3u);

  std::mt19937_64 rng(3);
  const auto cube = random_cube(3, 4, 3, rng);
  for (std::size_t s : {1u, 2u}) {
    const auto d = disperse(cube, s);
    ASSERT_EQ(d.width, 4 + s * 2);
    std::size_t nonzero_slots = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t wp = 0; wp < d.width; ++wp) {
          const bool inside = wp >= s * c && wp - s * c < 4;
          if (inside) {
            EXPECT_EQ(d(h, wp, c), cube(h, wp - s * c, c));
            ++nonzero_slots;
          } else {
            EXPECT_EQ(d(h, wp, c), 0.0);
          }
        }
    EXPECT_EQ(nonzero_slots, cube.size());
    EXPECT_EQ(undisperse(d, 4, s).data, cube.data);
  }
}

TEST(Masks, CassiChannelsAreTranslationsOfBase) {
  std::mt19937_64 rng(4);
  const auto base = binary_mask(5, 6, rng);
  for (std::size_t s : {1u, 2u}) {
    const auto masks = make_cassi_masks(base, 4, s);
    EXPECT_EQ(masks.sensor_width(), 6 + s * 3);
    EXPECT_EQ(masks.source_width(), 6u);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t wp = 0; wp < masks.sensor_width(); ++wp) {
          const bool inside = wp >= s * c && wp - s * c < 6;
          EXPECT_EQ(masks.per_channel(h, wp, c), inside ? base(h, wp - s * c) : 0.0);
        }
  }
}

TEST(Measure, AllOnesMasksSumChannels) {
  std::mt19937_64 rng(5);
  const auto cube = random_cube(3, 3, 4, rng);
  Cube<double> ones(3, 3, 4, 1.0);
  const auto y = measure(cube, make_cacti_masks(ones));
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t w = 0; w < 3; ++w) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 4; ++c) acc += cube(h, w, c);
      EXPECT_NEAR(y.data(h, w), acc, 1e-15);
    }
}

TEST(Measure, HandComputedCacti) {
  Cube<double> cube(2, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    cube.channel(0)[i] = 1.0;
    cube.channel(1)[i] = 2.0;
  }
  Cube<double> pats(2, 2, 2);
  const double m0[] = {1, 0, 0, 1}, m1[] = {0, 1, 1, 0};
  for (std::size_t i = 0; i < 4; ++i) {
    pats.channel(0)[i] = m0[i];
    pats.channel(1)[i] = m1[i];
  }
  const auto y = measure(cube, make_cacti_masks(pats));
  EXPECT_EQ(y.data.data, (std::vector<double>{1, 2, 2, 1}));
}

TEST(Measure, EqualsDensePhiOnRandomInstances) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t H = 2 + trial % 5, W = 3 + trial % 4, C = 1 + trial % 4;
    const auto cube = random_cube(H, W, C, rng);
    MaskSet<double> masks;
    if (trial % 2 == 0) {
      masks = make_cassi_masks(binary_mask(H, W, rng), C, 1 + trial % 3);
    } else {
      Cube<double> pats(H, W, C);
      for (std::size_t c = 0; c < C; ++c) {
        const auto m = covered_mask(H, W, rng);
        std::copy(m.data.begin(), m.data.end(), pats.channel(c).begin());
      }
      masks = make_cacti_masks(pats);
    }
    const auto y = measure(cube, masks);
    const auto ref = matvec(dense_phi(masks), cube.data);
    ASSERT_EQ(y.data.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data.data[i], ref[i], 1e-12);
  }
}

TEST(Measure, Linearity) {
  std::mt19937_64 rng(7);
  const auto f1 = random_cube(5, 6, 3, rng), f2 = random_cube(5, 6, 3, rng);
  const auto masks = make_cassi_masks(covered_mask(5, 6, rng), 3, 1);
  Cube<double> mix(5, 6, 3);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = 2.0 * f1.data[i] - 0.5 * f2.data[i];
  const auto y = measure(mix, masks), y1 = measure(f1, masks), y2 = measure(f2, masks);
  for (std::size_t i = 0; i < y.data.size(); ++i) EXPECT_NEAR(y.data.data[i], 2.0 * y1.data.data[i] - 0.5 * y2.data.data[i], 1e-12);
}

TEST(Measure, CassiWithZeroShiftMatchesUnifiedModel) {
  std::mt19937_64 rng(8);
  const auto cube = random_cube(4, 5, 3, rng);
  const auto base = covered_mask(4, 5, rng);
  const auto cassi = measure(cube, make_cassi_masks(base, 3, 0));
  Cube<double> pats(4, 5, 3);
  for (std::size_t c = 0; c < 3; ++c) std::copy(base.data.begin(), base.data.end(), pats.channel(c).begin());
  const auto cacti = measure(cube, make_cacti_masks(pats));
  EXPECT_EQ(cassi.data.data, cacti.data.data);
}

TEST(Measure, NoiseIsSeededAndOnMeasurementOnly) {
  std::mt19937_64 rng(9);
  const auto cube = random_cube(8, 8, 2, rng);
  const auto masks = make_cassi_masks(covered_mask(8, 8, rng), 2, 1);
  const auto clean = measure(cube, masks);
  const auto a = measure(cube, masks, 0.01, 5), b = measure(cube, masks, 0.01, 5), c = measure(cube, masks, 0.01, 6);
  EXPECT_EQ(a.data.data, b.data.data);
  EXPECT_NE(a.data.data, c.data.data);
  double acc = 0.0;
  for (std::size_t i = 0; i < clean.data.size(); ++i) acc += std::pow(a.data.data[i] - clean.data.data[i], 2);
  EXPECT_NEAR(std::sqrt(acc / static_cast<double>(clean.data.size())), 0.01, 0.004);
  EXPECT_THROW(measure(cube, masks, -1.0), ContractError);
  EXPECT_THROW(measure(random_cube(8, 7, 2, rng), masks), DimensionError);
}

TEST(NoiseStd, RangeMeanAndReproducibility) {
  std::mt19937_64 rng(10);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double s = sample_noise_std(rng);
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s, 0.05);
    acc += s;
  }
  EXPECT_NEAR(acc / n, 0.025, 0.001);
  std::mt19937_64 r1(3), r2(3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_noise_std(r1), sample_noise_std(r2));
}

TEST(SensingOp, SingleChannelAllOnesIsIdentity) {
  const auto masks = make_cassi_masks(Image<double>(3, 4, 1.0), 1, 1);
  const SensingOp<double> op(masks);
  std::mt19937_64 rng(11);
  const auto cube = random_cube(3, 4, 1, rng);
  EXPECT_EQ(op.apply_source(cube.data), cube.data);
}

TEST(SensingOp, RowNormsMatchDensePhiPhiT) {
  std::mt19937_64 rng(12);
  const auto masks = make_cassi_masks(covered_mask(3, 3, rng), 2, 1);
  const SensingOp<double> op(masks);
  const auto phi = dense_phi(masks);
  const auto rows = op.row_norms();
  ASSERT_EQ(rows.size(), phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    for (std::size_t j = 0; j < phi.size(); ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < phi[i].size(); ++k) g += phi[i][k] * phi[j][k];
      if (i == j) {
        EXPECT_NEAR(rows[i], g, 1e-14);
      } else {
        EXPECT_EQ(g, 0.0);  // Phi Phi^T is diagonal
      }
    }
  }
}

TEST(SensingOp, AdjointIdentity) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const auto masks = make_cassi_masks(covered_mask(5, 6, rng), 4, 1 + trial % 2);
    const SensingOp<double> op(masks);
    const auto f = random_cube(5, 6, 4, rng);
    std::vector<double> y(op.pixels());
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : y) v = u(rng);
    const auto Af = op.apply_source(f.data);
    const auto Aty = op.adjoint_source(y);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += Af[i] * y[i];
    for (std::size_t i = 0; i < f.size(); ++i) rhs += f.data[i] * Aty[i];
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(InitInput, SingleChannelOnesRecoversCube) {
  std::mt19937_64 rng(14);
  const auto cube = random_cube(4, 4, 1, rng);
  const auto masks = make_cassi_masks(Image<double>(4, 4, 1.0), 1, 1);
  EXPECT_EQ(init_input(measure(cube, masks), masks).data, cube.data);
}

TEST(InitInput, MatchesIndexOracleAndBackProjection) {
  std::mt19937_64 rng(15);
  const auto cube = random_cube(4, 4, 3, rng);
  const auto base = binary_mask(4, 4, rng);
  const std::size_t s = 1;
  const auto masks = make_cassi_masks(base, 3, s);
  const auto y = measure(cube, masks);
  const auto fy = init_input(y, masks);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 4; ++w) EXPECT_EQ(fy(h, w, c), base(h, w) * y.data(h, w + s * c));
  const auto bp = matvec_t(dense_phi(masks), y.data.data);
  for (std::size_t i = 0; i < bp.size(); ++i) EXPECT_NEAR(fy.data[i], bp[i], 1e-14);
  Measurement<double> wrong;
  wrong.data = Image<double>(4, 5);
  EXPECT_THROW(init_input(wrong, masks), DimensionError);
}

TEST(GenerateMask, ProbabilityAndSeeds) {
  MaskSpec all;
  all.p = 1.0;
  for (double v : generate_mask<double>(8, 8, all, 1).data) EXPECT_EQ(v, 1.0);
  const auto m = generate_mask<double>(256, 256, {}, 2);
  double ones = 0.0;
  for (double v : m.data) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    ones += v;
  }
  EXPECT_NEAR(ones / static_cast<double>(m.size()), 0.5, 0.02);
  EXPECT_EQ(generate_mask<double>(16, 16, {}, 9).data, generate_mask<double>(16, 16, {}, 9).data);
  MaskSpec bad;
  bad.p = 1.5;
  EXPECT_THROW(generate_mask<double>(4, 4, bad, 0), ContractError);
  MaskSpec gray;
  gray.kind = MaskKind::Gray;
  for (double v : generate_mask<double>(16, 16, gray, 3).data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
