#pragma once
// Architecture subspace L, the equivariant maps H_G, their intersection E,
// and the orthogonal projections between them.
//
// Every layer subspace is linear and carried by a sparse matrix S whose
// orthonormal columns span T L inside vec(A_i). The equivariant part T E is
// stored in L-coordinates: a dense k x e matrix Q with orthonormal columns,
// so that S Q spans T E and Pi_E = S Q Q^T S^T.

#include "eqreg/group.hpp"
#include "eqreg/network.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eqreg {

using SparseMat = Eigen::SparseMatrix<double>;
using SparseVec = Eigen::SparseVector<double>;

/// Raised by projections that require Pi_L Pi_G = Pi_G Pi_L when the
/// structure does not satisfy it.
class CompatibilityError : public std::runtime_error {
 public:
  CompatibilityError(const std::string& what, double commutator)
      : std::runtime_error(what), commutator_norm(commutator) {}
  double commutator_norm;
};

struct Tap {
  int dr = 0;
  int dc = 0;
  friend bool operator==(const Tap&, const Tap&) = default;
};

inline std::vector<Tap> full3x3_support() {
  std::vector<Tap> t;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) t.push_back({dr, dc});
  return t;
}

inline std::vector<Tap> cross_support() { return {{0, 0}, {-1, 0}, {1, 0}, {0, -1}, {0, 1}}; }

/// Linear subspace of (rows x cols) matrices with an orthonormal basis.
struct LayerSubspace {
  std::size_t rows = 0;
  std::size_t cols = 0;
  SparseMat basis;  // (rows*cols) x k, orthonormal columns
  std::string kind;

  std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }

  VectorXd coords(const MatrixXd& a) const {
    check(a);
    return basis.transpose() * a.reshaped();
  }
  MatrixXd from_coords(const VectorXd& c) const {
    VectorXd v = basis * c;
    return v.reshaped(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  MatrixXd project(const MatrixXd& a) const { return from_coords(coords(a)); }
  MatrixXd basis_element(std::size_t k) const { return from_coords(VectorXd::Unit(basis.cols(), static_cast<Eigen::Index>(k))); }

 private:
  void check(const MatrixXd& a) const {
    if (static_cast<std::size_t>(a.rows()) != rows || static_cast<std::size_t>(a.cols()) != cols)
      throw std::invalid_argument("layer subspace: shape mismatch");
  }
};

inline LayerSubspace dense_layer_subspace(std::size_t rows, std::size_t cols) {
  LayerSubspace s{rows, cols, SparseMat(static_cast<Eigen::Index>(rows * cols), static_cast<Eigen::Index>(rows * cols)), "dense"};
  s.basis.setIdentity();
  return s;
}

/// Circular convolutions from in_ch to out_ch channels on an h x w grid:
/// (K x)[o, r, c] = sum_{i, tap} w[o, i, tap] x[i, (r + dr) mod h, (c + dc) mod w].
/// One basis element per (out, in, tap), normalized to unit Frobenius norm.
inline LayerSubspace conv_layer_subspace(std::size_t h, std::size_t w, std::size_t in_ch, std::size_t out_ch,
                                         const std::vector<Tap>& support) {
  if (h == 0 || w == 0 || in_ch == 0 || out_ch == 0) throw std::invalid_argument("conv_subspace: empty shape");
  if (support.empty()) throw std::invalid_argument("conv_subspace: empty support");
  const auto H = static_cast<int>(h), W = static_cast<int>(w);
  std::vector<std::pair<int, int>> wrapped;
  for (const auto& t : support) {
    if (std::abs(t.dr) >= H || std::abs(t.dc) >= W) throw std::invalid_argument("conv_subspace: tap outside grid range");
    std::pair<int, int> m{((t.dr % H) + H) % H, ((t.dc % W) + W) % W};
    if (std::find(wrapped.begin(), wrapped.end(), m) != wrapped.end())
      throw std::invalid_argument("conv_subspace: duplicate tap (after circular wrap)");
    wrapped.push_back(m);
  }
  const std::size_t hw = h * w;
  const std::size_t rows = out_ch * hw, cols = in_ch * hw;
  const std::size_t taps = support.size();
  const double v = 1.0 / std::sqrt(static_cast<double>(hw));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(out_ch * in_ch * taps * hw);
  for (std::size_t o = 0; o < out_ch; ++o)
    for (std::size_t i = 0; i < in_ch; ++i)
      for (std::size_t t = 0; t < taps; ++t) {
        const auto col_k = static_cast<Eigen::Index>((o * in_ch + i) * taps + t);
        for (int r = 0; r < H; ++r)
          for (int c = 0; c < W; ++c) {
            const std::size_t row = o * hw + static_cast<std::size_t>(r * W + c);
            const auto sr = static_cast<std::size_t>(((r + support[t].dr) % H + H) % H);
            const auto sc = static_cast<std::size_t>(((c + support[t].dc) % W + W) % W);
            const std::size_t col = i * hw + sr * w + sc;
            trips.emplace_back(static_cast<Eigen::Index>(col * rows + row), col_k, v);
          }
      }
  LayerSubspace s{rows, cols, SparseMat(static_cast<Eigen::Index>(rows * cols), static_cast<Eigen::Index>(out_ch * in_ch * taps)), "conv"};
  s.basis.setFromTriplets(trips.begin(), trips.end());
  return s;
}

/// The architecture subspace L: a product of per-layer linear subspaces.
class AffineSubspace {
 public:
  explicit AffineSubspace(std::vector<LayerSubspace> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("subspace needs at least one layer");
  }
  /// Only linear subspaces are supported; a nonzero offset is rejected.
  AffineSubspace(std::vector<LayerSubspace> layers, const ParamPoint& offset) : AffineSubspace(std::move(layers)) {
    if (offset.squared_norm() != 0.0) throw std::invalid_argument("subspace offset must be zero (linear L only)");
  }

  std::size_t num_layers() const { return layers_.size(); }
  const LayerSubspace& layer(std::size_t i) const { return layers_[i]; }
  std::size_t tangent_dim() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.dim();
    return n;
  }

  ParamPoint zeros() const {
    std::vector<MatrixXd> ls;
    for (const auto& l : layers_)
      ls.push_back(MatrixXd::Zero(static_cast<Eigen::Index>(l.rows), static_cast<Eigen::Index>(l.cols)));
    return ParamPoint(std::move(ls));
  }

  ParamPoint project(const ParamPoint& a) const {
    check(a);
    std::vector<MatrixXd> ls;
    for (std::size_t i = 0; i < layers_.size(); ++i) ls.push_back(layers_[i].project(a[i]));
    return ParamPoint(std::move(ls));
  }

  /// Unit basis direction k of layer i, embedded as a full parameter tuple.
  ParamPoint basis_element(std::size_t layer, std::size_t k) const {
    ParamPoint p = zeros();
    p[layer] = layers_[layer].basis_element(k);
    return p;
  }

  void check(const ParamPoint& a) const {
    if (a.num_layers() != layers_.size()) throw std::invalid_argument("subspace: layer count mismatch");
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (static_cast<std::size_t>(a[i].rows()) != layers_[i].rows || static_cast<std::size_t>(a[i].cols()) != layers_[i].cols)
        throw std::invalid_argument("subspace: layer shape mismatch");
  }

 private:
  std::vector<LayerSubspace> layers_;
};

inline AffineSubspace conv_subspace(std::size_t h, std::size_t w, std::size_t in_ch, std::size_t out_ch,
                                    const std::vector<Tap>& support) {
  return AffineSubspace({conv_layer_subspace(h, w, in_ch, out_ch, support)});
}

namespace detail {

/// Layer-wise Reynolds average of a sparse vectorized (rows x cols) matrix.
inline SparseVec reynolds_sparse(const Representation& out, const Representation& in, const SparseVec& b) {
  const std::size_t rows = out.dim(), cols = in.dim();
  const auto& G = out.group();
  const double inv = 1.0 / static_cast<double>(G.order());
  if (out.is_permutation() && in.is_permutation()) {
    // (P^T B Q) has B[r][c] at (p^{-1}(r), q^{-1}(c)), and p^{-1} is the permutation of g^{-1}.
    std::vector<std::pair<Eigen::Index, double>> acc;
    for (SparseVec::InnerIterator it(b); it; ++it) {
      const auto idx = static_cast<std::size_t>(it.index());
      const std::size_t r = idx % rows, c = idx / rows;
      for (std::size_t g = 0; g < G.order(); ++g) {
        const std::size_t gi = G.inverse(g);
        const std::size_t r2 = out.permutation(gi)[r], c2 = in.permutation(gi)[c];
        acc.emplace_back(static_cast<Eigen::Index>(c2 * rows + r2), it.value() * inv);
      }
    }
    std::sort(acc.begin(), acc.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    SparseVec res(b.size());
    for (std::size_t k = 0; k < acc.size();) {
      double s = 0.0;
      std::size_t j = k;
      for (; j < acc.size() && acc[j].first == acc[k].first; ++j) s += acc[j].second;
      if (s != 0.0) res.insertBack(acc[k].first) = s;
      k = j;
    }
    return res;
  }
  const MatrixXd dense = VectorXd(b).reshaped(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  MatrixXd avg = haar_average(G, [&](std::size_t g) { return conjugate(out, in, g, dense); });
  VectorXd flat = avg.reshaped();
  return flat.sparseView();
}

/// Modified Gram-Schmidt over sparse inputs. Columns with residual norm
/// below `drop_tol` are discarded. Overlap bookkeeping skips q_j whose
/// support is disjoint from the current residual (their coefficient is
/// exactly zero), so the result equals plain MGS.
inline MatrixXd sparse_mgs(const std::vector<SparseVec>& vecs, Eigen::Index dim, double drop_tol) {
  std::vector<VectorXd> qs;
  std::vector<std::vector<Eigen::Index>> q_support;
  std::vector<std::vector<std::size_t>> owners(static_cast<std::size_t>(dim));  // coordinate -> q indices
  VectorXd w = VectorXd::Zero(dim);
  std::vector<char> in_support(static_cast<std::size_t>(dim), 0);
  for (const auto& v : vecs) {
    std::vector<Eigen::Index> support;
    std::set<std::size_t> pending;
    auto touch = [&](Eigen::Index i, std::size_t after) {
      if (!in_support[static_cast<std::size_t>(i)]) {
        in_support[static_cast<std::size_t>(i)] = 1;
        support.push_back(i);
        for (auto j : owners[static_cast<std::size_t>(i)])
          if (j >= after) pending.insert(j);
      }
    };
    for (SparseVec::InnerIterator it(v); it; ++it) {
      w[it.index()] = it.value();
      touch(it.index(), 0);
    }
    while (!pending.empty()) {
      const std::size_t j = *pending.begin();
      pending.erase(pending.begin());
      double d = 0.0;
      for (auto i : q_support[j]) d += qs[j][i] * w[i];
      if (d == 0.0) continue;
      for (auto i : q_support[j]) {
        w[i] -= d * qs[j][i];
        touch(i, j + 1);
      }
    }
    double nrm2 = 0.0;
    for (auto i : support) nrm2 += w[i] * w[i];
    const double nrm = std::sqrt(nrm2);
    if (nrm > drop_tol) {
      VectorXd q = VectorXd::Zero(dim);
      std::vector<Eigen::Index> qsup;
      for (auto i : support)
        if (w[i] != 0.0) {
          q[i] = w[i] / nrm;
          qsup.push_back(i);
          owners[static_cast<std::size_t>(i)].push_back(qs.size());
        }
      std::sort(qsup.begin(), qsup.end());
      qs.push_back(std::move(q));
      q_support.push_back(std::move(qsup));
    }
    for (auto i : support) {
      w[i] = 0.0;
      in_support[static_cast<std::size_t>(i)] = 0;
    }
  }
  MatrixXd out(dim, static_cast<Eigen::Index>(qs.size()));
  for (std::size_t j = 0; j < qs.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = qs[j];
  return out;
}

}  // namespace detail

/// Representations on every network space together with the architecture
/// subspace; computes the equivariant subspace T E = T L  cap  H_G.
class EquivariantStructure {
 public:
  static constexpr double kCompatibilityTol = 1e-10;
  static constexpr double kDropTol = 1e-10;

  EquivariantStructure(std::vector<Representation> reps, std::shared_ptr<const AffineSubspace> parent)
      : reps_(std::move(reps)), parent_(std::move(parent)) {
    if (!parent_) throw std::invalid_argument("structure requires a subspace");
    if (reps_.size() != parent_->num_layers() + 1) throw std::invalid_argument("structure: need one representation per space");
    for (std::size_t i = 0; i < parent_->num_layers(); ++i) {
      const auto& l = parent_->layer(i);
      if (reps_[i + 1].dim() != l.rows || reps_[i].dim() != l.cols)
        throw std::invalid_argument("structure: representation dims do not match layer " + std::to_string(i));
      if (&reps_[i].group() != &reps_[0].group() && reps_[i].group().order() != reps_[0].group().order())
        throw std::invalid_argument("structure: representations of different groups");
    }
    build();
  }

  const std::vector<Representation>& reps() const { return reps_; }
  const AffineSubspace& parent() const { return *parent_; }
  const std::shared_ptr<const AffineSubspace>& parent_ptr() const { return parent_; }
  const FiniteGroup& group() const { return reps_.front().group(); }
  std::size_t num_layers() const { return parent_->num_layers(); }
  /// Orthonormal basis of T E for layer i in L-coordinates.
  const MatrixXd& e_basis(std::size_t i) const { return e_basis_[i]; }

  std::size_t dim_L() const { return parent_->tangent_dim(); }
  std::size_t dim_E() const {
    std::size_t n = 0;
    for (const auto& q : e_basis_) n += static_cast<std::size_t>(q.cols());
    return n;
  }
  std::size_t dim_E_perp() const { return dim_L() - dim_E(); }

  /// Frobenius norm of [Pi_L, Pi_G], computed from the leakage of the
  /// Reynolds-averaged L basis out of L: |C|_F^2 = 2 sum_k |(I - Pi_L) Pi_G s_k|^2.
  double commutator_norm() const { return commutator_norm_; }
  bool compatible() const { return commutator_norm_ < kCompatibilityTol; }

  ParamPoint zeros() const { return parent_->zeros(); }

  /// rho_{i+1}(g)^{-1} A_i rho_i(g) on every layer.
  ParamPoint act(std::size_t g, const ParamPoint& a) const {
    parent_->check(a);
    std::vector<MatrixXd> ls;
    for (std::size_t i = 0; i < num_layers(); ++i) ls.push_back(conjugate(reps_[i + 1], reps_[i], g, a[i]));
    return ParamPoint(std::move(ls));
  }

  /// Pi_G: layer-wise uniform average of the conjugation action.
  ParamPoint reynolds(const ParamPoint& a) const {
    parent_->check(a);
    std::vector<MatrixXd> ls;
    for (std::size_t i = 0; i < num_layers(); ++i)
      ls.push_back(haar_average(group(), [&](std::size_t g) { return conjugate(reps_[i + 1], reps_[i], g, a[i]); }));
    return ParamPoint(std::move(ls));
  }

  ParamPoint project_L(const ParamPoint& a) const { return parent_->project(a); }

  ParamPoint project_E(const ParamPoint& a) const {
    require_compatible();
    return from_l_coords(e_part(l_coords(a)));
  }

  /// Component in T E-perp, the complement of T E inside T L.
  ParamPoint project_E_perp(const ParamPoint& a) const {
    require_compatible();
    auto c = l_coords(a);
    auto e = e_part(c);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= e[i];
    return from_l_coords(c);
  }

  double distance_to_E(const ParamPoint& a) const {
    require_compatible();
    auto c = l_coords(a);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const VectorXd r = c[i] - e_basis_[i] * (e_basis_[i].transpose() * c[i]);
      s += r.squaredNorm();
    }
    return std::sqrt(s);
  }

  std::vector<VectorXd> l_coords(const ParamPoint& a) const {
    parent_->check(a);
    std::vector<VectorXd> c;
    for (std::size_t i = 0; i < num_layers(); ++i) c.push_back(parent_->layer(i).coords(a[i]));
    return c;
  }

  ParamPoint from_l_coords(const std::vector<VectorXd>& c) const {
    std::vector<MatrixXd> ls;
    for (std::size_t i = 0; i < num_layers(); ++i) ls.push_back(parent_->layer(i).from_coords(c[i]));
    return ParamPoint(std::move(ls));
  }

  /// Coordinates in the orthonormal T E basis, concatenated over layers.
  VectorXd e_coords(const ParamPoint& a) const {
    require_compatible();
    auto c = l_coords(a);
    VectorXd out(static_cast<Eigen::Index>(dim_E()));
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      out.segment(off, e_basis_[i].cols()) = e_basis_[i].transpose() * c[i];
      off += e_basis_[i].cols();
    }
    return out;
  }

  ParamPoint from_e_coords(const VectorXd& z) const {
    if (static_cast<std::size_t>(z.size()) != dim_E()) throw std::invalid_argument("from_e_coords: size mismatch");
    std::vector<VectorXd> c;
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      c.push_back(e_basis_[i] * z.segment(off, e_basis_[i].cols()));
      off += e_basis_[i].cols();
    }
    return from_l_coords(c);
  }

  /// Unit-norm T E basis element j (concatenated numbering over layers).
  ParamPoint e_basis_element(std::size_t j) const {
    return from_e_coords(VectorXd::Unit(static_cast<Eigen::Index>(dim_E()), static_cast<Eigen::Index>(j)));
  }

  /// Random point of E: standard Gaussian coefficients in the T E basis,
  /// layer i scaled by layer_scales[i] (all ones when empty).
  template <class Rng>
  ParamPoint random_in_E(Rng& rng, const std::vector<double>& layer_scales = {}) const {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<VectorXd> c;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      const double s = layer_scales.empty() ? 1.0 : layer_scales[i];
      VectorXd z(e_basis_[i].cols());
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = s * n01(rng);
      c.push_back(e_basis_[i] * z);
    }
    return from_l_coords(c);
  }

  /// Isotropic Gaussian in T E-perp: projection of an isotropic Gaussian in
  /// T L, layer i scaled by layer_scales[i].
  template <class Rng>
  ParamPoint random_in_E_perp(Rng& rng, const std::vector<double>& layer_scales = {}) const {
    require_compatible();
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<VectorXd> c;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      const double s = layer_scales.empty() ? 1.0 : layer_scales[i];
      VectorXd z(static_cast<Eigen::Index>(parent_->layer(i).dim()));
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = s * n01(rng);
      z -= e_basis_[i] * (e_basis_[i].transpose() * z);
      c.push_back(std::move(z));
    }
    return from_l_coords(c);
  }

  void require_compatible() const {
    if (!compatible()) {
      std::ostringstream os;
      os << "projection onto E refused: Pi_L and Pi_G do not commute (commutator norm " << commutator_norm_ << ")";
      throw CompatibilityError(os.str(), commutator_norm_);
    }
  }

 private:
  std::vector<VectorXd> e_part(const std::vector<VectorXd>& c) const {
    std::vector<VectorXd> e;
    for (std::size_t i = 0; i < c.size(); ++i) e.push_back(e_basis_[i] * (e_basis_[i].transpose() * c[i]));
    return e;
  }

  void build() {
    double leak2 = 0.0;
    for (std::size_t i = 0; i < num_layers(); ++i) {
      const auto& l = parent_->layer(i);
      std::vector<SparseVec> averaged;
      averaged.reserve(l.dim());
      for (Eigen::Index k = 0; k < l.basis.cols(); ++k) {
        const SparseVec s = l.basis.col(k);
        const SparseVec r = detail::reynolds_sparse(reps_[i + 1], reps_[i], s);
        SparseVec rc = (l.basis.transpose() * r).pruned();
        const SparseVec back = l.basis * rc;
        leak2 += (r - back).squaredNorm();
        averaged.push_back(std::move(rc));
      }
      e_basis_.push_back(detail::sparse_mgs(averaged, l.basis.cols(), kDropTol));
    }
    commutator_norm_ = std::sqrt(2.0 * leak2);
  }

  std::vector<Representation> reps_;
  std::shared_ptr<const AffineSubspace> parent_;
  std::vector<MatrixXd> e_basis_;
  double commutator_norm_ = 0.0;
};

struct CompatibilityReport {
  bool ok = false;
  double commutator_norm = 0.0;
};

/// |Pi_L Pi_G - Pi_G Pi_L|_F assembled column by column from every
/// canonical direction of the full parameter space.
inline CompatibilityReport check_compatibility(const EquivariantStructure& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.num_layers(); ++i) {
    const auto& l = s.parent().layer(i);
    const auto& out = s.reps()[i + 1];
    const auto& in = s.reps()[i];
    const SparseMat st = l.basis.transpose();
    const auto n = static_cast<Eigen::Index>(l.rows * l.cols);
    for (Eigen::Index j = 0; j < n; ++j) {
      SparseVec e(n);
      e.insert(j) = 1.0;
      const SparseVec lg = l.basis * SparseVec(st * detail::reynolds_sparse(out, in, e));
      const SparseVec gl = detail::reynolds_sparse(out, in, l.basis * SparseVec(st * e));
      total += (lg - gl).squaredNorm();
    }
  }
  const double nrm = std::sqrt(total);
  return {nrm < EquivariantStructure::kCompatibilityTol, nrm};
}

}  // namespace eqreg
