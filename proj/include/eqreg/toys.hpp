#pragma once
// Small quadratic problems with known spectra, used as closed-form oracles
// for the attractor and local-convergence checks.

#include "eqreg/group.hpp"
#include "eqreg/risk.hpp"
#include "eqreg/subspaces.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>

namespace eqreg {

struct QuadraticToy {
  std::shared_ptr<const EquivariantStructure> structure;
  std::shared_ptr<const QuadraticRisk> risk;
  ParamPoint minimizer;
  /// Eigenvalues of the augmented Hessian on T E and on T E-perp.
  double lambda_E = 0.0;
  double lambda_perp_min = 0.0;
};

/// A single 1 x 4 linear layer, C4 cycling the four inputs, trivial output.
/// T E is spanned by (1,1,1,1)/2; T E-perp by the rotation pair and the
/// sign mode of the discrete Fourier basis. The augmented Hessian is
///   lambda_inv u0 u0^T + lambda_rot (u1 u1^T + u1' u1'^T) + lambda_sign u2 u2^T
/// and the minimizer is center * u0. `anisotropy` adds a symmetric term
/// whose group average vanishes, so the nominal Hessian differs while the
/// augmented one does not.
inline QuadraticToy circulant_toy(double lambda_inv, double lambda_rot, double lambda_sign, double center = 1.0,
                                  double anisotropy = 0.0, std::uint64_t seed = 0) {
  auto g = cyclic_group(4);
  std::vector<Representation> reps{cyclic_shift_rep(g, 4), trivial_rep(g, 1)};
  auto sub = std::make_shared<const AffineSubspace>(std::vector<LayerSubspace>{dense_layer_subspace(1, 4)});
  auto s = std::make_shared<const EquivariantStructure>(std::move(reps), sub);

  VectorXd u0(4), u1(4), u1p(4), u2(4);
  u0 << 0.5, 0.5, 0.5, 0.5;
  u1 << 1.0, 0.0, -1.0, 0.0;
  u1p << 0.0, 1.0, 0.0, -1.0;
  u1 /= std::sqrt(2.0);
  u1p /= std::sqrt(2.0);
  u2 << 0.5, -0.5, 0.5, -0.5;
  MatrixXd h = lambda_inv * u0 * u0.transpose() + lambda_rot * (u1 * u1.transpose() + u1p * u1p.transpose()) +
               lambda_sign * u2 * u2.transpose();
  if (anisotropy != 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    MatrixXd m(4, 4);
    for (Eigen::Index i = 0; i < 16; ++i) m.data()[i] = n01(rng);
    m = 0.5 * (m + m.transpose()).eval();
    MatrixXd avg = MatrixXd::Zero(4, 4);
    for (std::size_t k = 0; k < 4; ++k) {
      const MatrixXd t = parameter_action_matrix(*s, k);
      avg += t.transpose() * m * t;
    }
    h += anisotropy * (m - avg / 4.0);
  }
  ParamPoint center_pt = s->zeros();
  center_pt[0] = center * u0.transpose();
  auto risk = std::make_shared<const QuadraticRisk>(QuadraticRisk::centred(s, h, center_pt));
  return {s, risk, center_pt, lambda_inv, std::min(lambda_rot, lambda_sign)};
}

}  // namespace eqreg
