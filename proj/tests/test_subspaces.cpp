#include "eqreg/subspaces.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace eqreg;

namespace {

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

std::shared_ptr<const EquivariantStructure> conv_c4(std::size_t h, std::vector<std::size_t> ch, const std::vector<Tap>& support) {
  auto g = cyclic_group(4);
  std::vector<Representation> reps;
  std::vector<LayerSubspace> layers;
  for (std::size_t k = 0; k < ch.size(); ++k) {
    reps.push_back(rotation_rep_on_grid(g, h, h, ch[k]));
    if (k + 1 < ch.size()) layers.push_back(conv_layer_subspace(h, h, ch[k], ch[k + 1], support));
  }
  return std::make_shared<EquivariantStructure>(reps, std::make_shared<AffineSubspace>(layers));
}

// Hand-rolled circular correlation operator with a single 1 -> 1 channel.
MatrixXd conv_operator(std::size_t h, const std::vector<Tap>& taps, const VectorXd& w) {
  const int H = static_cast<int>(h);
  MatrixXd k = MatrixXd::Zero(H * H, H * H);
  for (std::size_t t = 0; t < taps.size(); ++t)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < H; ++c) k(r * H + c, ((r + taps[t].dr + H) % H) * H + (c + taps[t].dc + H) % H) += w[static_cast<Eigen::Index>(t)];
  return k;
}

// |Pi_L Pi_G - Pi_G Pi_L|_F from dense projector matrices on one layer.
double dense_commutator(const LayerSubspace& l, const Representation& out, const Representation& in) {
  const auto n = static_cast<Eigen::Index>(l.rows * l.cols);
  const MatrixXd b = MatrixXd(l.basis);
  const MatrixXd pl = b * b.transpose();
  MatrixXd pg = MatrixXd::Zero(n, n);
  for (std::size_t g = 0; g < out.group().order(); ++g) {
    const MatrixXd po = out.matrix(g), pi = in.matrix(g);
    for (Eigen::Index j = 0; j < n; ++j) {
      MatrixXd e = MatrixXd::Zero(static_cast<Eigen::Index>(l.rows), static_cast<Eigen::Index>(l.cols));
      e.data()[j] = 1.0;
      pg.col(j) += (po.transpose() * e * pi).reshaped() / static_cast<double>(out.group().order());
    }
  }
  return (pl * pg - pg * pl).norm();
}

}  // namespace

TEST(Reynolds, SwapGroupOnDiagonalMatrix) {
  auto c2 = cyclic_group(2);
  auto swap = cyclic_shift_rep(c2, 2);
  EquivariantStructure s({swap, swap}, std::make_shared<AffineSubspace>(std::vector<LayerSubspace>{dense_layer_subspace(2, 2)}));
  MatrixXd a(2, 2);
  a << 1, 0, 0, 0;
  MatrixXd want(2, 2);
  want << 0.5, 0, 0, 0.5;
  EXPECT_LT((s.reynolds(ParamPoint({a}))[0] - want).norm(), 1e-15);
  EXPECT_EQ(s.dim_E(), 2u);
}

TEST(Reynolds, IdempotentAndSelfAdjoint) {
  auto s = conv_c4(4, {1, 2, 2}, full3x3_support());
  const ParamPoint a({random_matrix(32, 16, 1), random_matrix(32, 32, 2)});
  const ParamPoint b({random_matrix(32, 16, 3), random_matrix(32, 32, 4)});
  const ParamPoint ra = s->reynolds(a);
  EXPECT_LT((s->reynolds(ra) - ra).norm(), 1e-12);
  EXPECT_LT(std::abs(ra.dot(b) - a.dot(s->reynolds(b))), 1e-12);
  // range is equivariant
  for (std::size_t g = 0; g < 4; ++g) EXPECT_LT((s->act(g, ra) - ra).norm(), 1e-12);
}

TEST(ConvSubspace, ProjectionIsLeastSquaresFit) {
  const std::size_t h = 4;
  const auto taps = full3x3_support();
  const LayerSubspace l = conv_layer_subspace(h, h, 1, 1, taps);
  ASSERT_EQ(l.dim(), 9u);
  const MatrixXd a = random_matrix(16, 16, 7);
  const MatrixXd p = l.project(a);
  EXPECT_LT((l.project(p) - p).norm(), 1e-13);
  // oracle: least squares over the 9 kernel weights of a hand-built operator
  MatrixXd design(256, 9);
  for (Eigen::Index t = 0; t < 9; ++t) design.col(t) = conv_operator(h, taps, VectorXd::Unit(9, t)).reshaped();
  const VectorXd w = design.colPivHouseholderQr().solve(a.reshaped());
  const MatrixXd fit = conv_operator(h, taps, w);
  EXPECT_LT((p - fit).norm(), 1e-12);
  // any other conv operator is farther away
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 20; ++k) {
    VectorXd dw(9);
    for (auto& v : dw) v = 0.1 * n01(rng);
    EXPECT_GT((a - conv_operator(h, taps, w + dw)).norm(), (a - p).norm());
  }
}

TEST(ConvSubspace, BasisIsOrthonormal) {
  for (const auto& sup : {full3x3_support(), cross_support()}) {
    const LayerSubspace l = conv_layer_subspace(5, 5, 2, 3, sup);
    const MatrixXd b(l.basis);
    EXPECT_LT((b.transpose() * b - MatrixXd::Identity(b.cols(), b.cols())).norm(), 1e-12);
  }
}

TEST(ConvSubspace, RejectsDuplicateAndOutOfRangeTaps) {
  EXPECT_THROW(conv_layer_subspace(2, 2, 1, 1, full3x3_support()), std::invalid_argument);  // -1 == 1 mod 2
  EXPECT_THROW(conv_layer_subspace(3, 3, 1, 1, {{0, 3}}), std::invalid_argument);
  EXPECT_THROW(conv_layer_subspace(3, 3, 1, 1, {}), std::invalid_argument);
}

TEST(AffineSubspace, NonzeroOffsetRejected) {
  std::vector<LayerSubspace> ls{dense_layer_subspace(2, 2)};
  ParamPoint off({MatrixXd::Identity(2, 2)});
  EXPECT_THROW(AffineSubspace(ls, off), std::invalid_argument);
  EXPECT_NO_THROW(AffineSubspace(ls, ParamPoint({MatrixXd::Zero(2, 2)})));
}

TEST(Compatibility, SymmetricSupportsCommute) {
  for (const auto& sup : {full3x3_support(), cross_support()}) {
    auto s = conv_c4(3, {1, 2}, sup);
    EXPECT_TRUE(s->compatible());
    const auto rep = check_compatibility(*s);
    EXPECT_TRUE(rep.ok);
    EXPECT_LT(rep.commutator_norm, 1e-10);
    EXPECT_LT(dense_commutator(s->parent().layer(0), s->reps()[1], s->reps()[0]), 1e-10);
  }
}

TEST(Compatibility, AsymmetricTwoTapFails) {
  const std::vector<Tap> two{{0, 0}, {0, 1}};
  auto s = conv_c4(3, {1, 1}, two);
  const double oracle = dense_commutator(s->parent().layer(0), s->reps()[1], s->reps()[0]);
  EXPECT_GT(oracle, 0.1);
  const auto rep = check_compatibility(*s);
  EXPECT_FALSE(rep.ok);
  EXPECT_NEAR(rep.commutator_norm, oracle, 1e-10);
  EXPECT_NEAR(s->commutator_norm(), oracle, 1e-10);
  EXPECT_FALSE(s->compatible());
  const ParamPoint a = s->zeros();
  EXPECT_THROW(s->project_E(a), CompatibilityError);
  EXPECT_THROW(s->distance_to_E(a), CompatibilityError);
}

TEST(EquivariantSubspace, ProjectionOrdersAgree) {
  auto s = conv_c4(4, {1, 2, 2}, full3x3_support());
  const ParamPoint a({random_matrix(32, 16, 11), random_matrix(32, 32, 12)});
  const ParamPoint pe = s->project_E(a);
  EXPECT_LT((pe - s->reynolds(s->project_L(a))).norm(), 1e-10);
  EXPECT_LT((pe - s->project_L(s->reynolds(a))).norm(), 1e-10);
  const ParamPoint la = s->project_L(a);
  EXPECT_LT((pe + s->project_E_perp(a) - la).norm(), 1e-12);
  EXPECT_LT(std::abs(pe.dot(s->project_E_perp(a))), 1e-12);
}

TEST(EquivariantSubspace, DimensionsCountKernelOrbits) {
  // rotation orbits of 3x3 taps: centre, edges, corners
  EXPECT_EQ(conv_c4(4, {1, 1}, full3x3_support())->dim_E(), 3u);
  EXPECT_EQ(conv_c4(4, {2, 3}, full3x3_support())->dim_E(), 18u);
  EXPECT_EQ(conv_c4(4, {1, 1}, cross_support())->dim_E(), 2u);
}

TEST(EquivariantSubspace, BasisOrthonormalAndEquivariant) {
  auto s = conv_c4(4, {1, 2, 2}, full3x3_support());
  const std::size_t n = s->dim_E();
  MatrixXd gram(n, n);
  std::vector<ParamPoint> basis;
  for (std::size_t j = 0; j < n; ++j) basis.push_back(s->e_basis_element(j));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) gram(i, j) = basis[i].dot(basis[j]);
  EXPECT_LT((gram - MatrixXd::Identity(n, n)).norm(), 1e-12);
  for (const auto& b : basis) EXPECT_LT((s->reynolds(b) - b).norm(), 1e-12);
}

TEST(EquivariantSubspace, DistanceMatchesLeastSquares) {
  auto s = conv_c4(4, {1, 2}, full3x3_support());
  const ParamPoint a = s->project_L(ParamPoint({random_matrix(32, 16, 21)}));
  MatrixXd basis(a.size(), s->dim_E());
  for (std::size_t j = 0; j < s->dim_E(); ++j) basis.col(j) = s->e_basis_element(j).flatten();
  const VectorXd z = basis.colPivHouseholderQr().solve(a.flatten());
  EXPECT_NEAR(s->distance_to_E(a), (a.flatten() - basis * z).norm(), 1e-12);
}

TEST(EquivariantSubspace, RandomSamplersLandInTheRightBlocks) {
  auto s = conv_c4(4, {1, 2, 2}, full3x3_support());
  std::mt19937_64 rng(5);
  const ParamPoint e = s->random_in_E(rng);
  const ParamPoint p = s->random_in_E_perp(rng);
  EXPECT_LT(s->distance_to_E(e), 1e-12);
  EXPECT_LT(s->project_E(p).norm(), 1e-12);
  EXPECT_NEAR(s->distance_to_E(p), p.norm(), 1e-12);
  EXPECT_LT((s->from_e_coords(s->e_coords(e)) - e).norm(), 1e-12);
}
