#pragma once
// Finite groups, orthogonal representations, and exact uniform averaging.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eqreg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Table-driven finite group. Element 0 is always the identity.
class FiniteGroup {
 public:
  using Table = std::vector<std::vector<std::size_t>>;

  /// Builds a group from its Cayley table, validating the group axioms
  /// exhaustively. Throws std::invalid_argument on any violation.
  explicit FiniteGroup(Table cayley) : cayley_(std::move(cayley)) {
    const std::size_t n = cayley_.size();
    if (n == 0) throw std::invalid_argument("group must have at least one element");
    for (const auto& row : cayley_) {
      if (row.size() != n) throw std::invalid_argument("cayley table must be square");
      for (auto v : row)
        if (v >= n) throw std::invalid_argument("cayley entry out of range");
    }
    for (std::size_t g = 0; g < n; ++g)
      if (cayley_[0][g] != g || cayley_[g][0] != g)
        throw std::invalid_argument("element 0 is not the identity");
    inverses_.assign(n, n);
    for (std::size_t g = 0; g < n; ++g)
      for (std::size_t h = 0; h < n; ++h)
        if (cayley_[g][h] == 0) inverses_[g] = h;
    for (std::size_t g = 0; g < n; ++g)
      if (inverses_[g] == n || cayley_[inverses_[g]][g] != 0)
        throw std::invalid_argument("element without two-sided inverse");
    if (!is_associative()) throw std::invalid_argument("cayley table is not associative");
  }

  std::size_t order() const { return cayley_.size(); }
  std::size_t identity() const { return 0; }
  std::size_t compose(std::size_t a, std::size_t b) const { return cayley_[a][b]; }
  std::size_t inverse(std::size_t g) const { return inverses_[g]; }
  const Table& cayley() const { return cayley_; }
  const std::vector<std::size_t>& inverses() const { return inverses_; }

  bool is_associative() const {
    const std::size_t n = order();
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < n; ++c)
          if (cayley_[cayley_[a][b]][c] != cayley_[a][cayley_[b][c]]) return false;
    return true;
  }

 private:
  Table cayley_;
  std::vector<std::size_t> inverses_;
};

using GroupPtr = std::shared_ptr<const FiniteGroup>;

/// Z/nZ with composition (a + b) mod n.
inline GroupPtr cyclic_group(std::size_t n) {
  if (n == 0) throw std::invalid_argument("cyclic_group: order must be positive");
  FiniteGroup::Table t(n, std::vector<std::size_t>(n));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) t[a][b] = (a + b) % n;
  return std::make_shared<const FiniteGroup>(std::move(t));
}

/// A representation rho: G -> O(dim), stored densely. When every matrix is
/// a permutation the index maps are cached as well and used by the fast
/// paths in apply() and conjugate().
class Representation {
 public:
  /// perm[a] is the image of basis index a, i.e. rho(g) e_a = e_{perm[a]}.
  using Permutation = std::vector<std::size_t>;

  Representation(GroupPtr group, std::vector<MatrixXd> matrices)
      : group_(std::move(group)), matrices_(std::move(matrices)) {
    if (!group_) throw std::invalid_argument("representation requires a group");
    if (matrices_.size() != group_->order())
      throw std::invalid_argument("one matrix per group element required");
    dim_ = static_cast<std::size_t>(matrices_.front().rows());
    if (dim_ == 0) throw std::invalid_argument("representation dimension must be positive");
    for (const auto& m : matrices_)
      if (static_cast<std::size_t>(m.rows()) != dim_ || static_cast<std::size_t>(m.cols()) != dim_)
        throw std::invalid_argument("representation matrices must be dim x dim");
    detect_permutations();
  }

  const FiniteGroup& group() const { return *group_; }
  const GroupPtr& group_ptr() const { return group_; }
  std::size_t dim() const { return dim_; }
  const MatrixXd& matrix(std::size_t g) const { return matrices_[g]; }
  const std::vector<MatrixXd>& matrices() const { return matrices_; }
  bool is_permutation() const { return perms_.has_value(); }
  const Permutation& permutation(std::size_t g) const { return (*perms_)[g]; }

  /// rho(g) x
  VectorXd apply(std::size_t g, const VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_)
      throw std::invalid_argument("representation apply: dimension mismatch");
    if (perms_) {
      VectorXd y(x.size());
      const auto& p = (*perms_)[g];
      for (std::size_t a = 0; a < dim_; ++a) y[static_cast<Eigen::Index>(p[a])] = x[static_cast<Eigen::Index>(a)];
      return y;
    }
    return matrices_[g] * x;
  }

  /// max_{g,h} |rho(gh) - rho(g) rho(h)|
  double homomorphism_residual() const {
    double r = 0.0;
    const auto& G = *group_;
    for (std::size_t g = 0; g < G.order(); ++g)
      for (std::size_t h = 0; h < G.order(); ++h)
        r = std::max(r, (matrices_[G.compose(g, h)] - matrices_[g] * matrices_[h]).cwiseAbs().maxCoeff());
    r = std::max(r, (matrices_[0] - MatrixXd::Identity(dim_, dim_)).cwiseAbs().maxCoeff());
    return r;
  }

  /// max_g |rho(g)^T rho(g) - I|
  double orthogonality_residual() const {
    double r = 0.0;
    for (const auto& m : matrices_)
      r = std::max(r, (m.transpose() * m - MatrixXd::Identity(dim_, dim_)).cwiseAbs().maxCoeff());
    return r;
  }

 private:
  void detect_permutations() {
    std::vector<Permutation> perms;
    perms.reserve(matrices_.size());
    for (const auto& m : matrices_) {
      Permutation p(dim_, dim_);
      std::vector<bool> hit(dim_, false);
      for (std::size_t a = 0; a < dim_; ++a) {
        for (std::size_t b = 0; b < dim_; ++b) {
          const double v = m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a));
          if (v == 1.0) {
            if (p[a] != dim_ || hit[b]) return;
            p[a] = b;
            hit[b] = true;
          } else if (v != 0.0) {
            return;
          }
        }
        if (p[a] == dim_) return;
      }
      perms.push_back(std::move(p));
    }
    perms_ = std::move(perms);
  }

  GroupPtr group_;
  std::vector<MatrixXd> matrices_;
  std::size_t dim_ = 0;
  std::optional<std::vector<Permutation>> perms_;
};

inline MatrixXd permutation_matrix(const Representation::Permutation& p) {
  const auto n = static_cast<Eigen::Index>(p.size());
  MatrixXd m = MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) m(static_cast<Eigen::Index>(p[static_cast<std::size_t>(a)]), a) = 1.0;
  return m;
}

inline Representation trivial_rep(GroupPtr group, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("trivial_rep: dim must be positive");
  const auto n = static_cast<Eigen::Index>(dim);
  std::vector<MatrixXd> ms(group->order(), MatrixXd::Identity(n, n));
  return Representation(std::move(group), std::move(ms));
}

/// Representation of a cyclic group generated by a single permutation:
/// rho(k) = P^k. The generator must have order dividing |G|.
inline Representation cyclic_permutation_rep(GroupPtr group, const Representation::Permutation& generator) {
  const std::size_t n = group->order();
  const std::size_t d = generator.size();
  if (d == 0) throw std::invalid_argument("permutation rep: empty generator");
  for (std::size_t k = 1; k < n; ++k)
    if (group->compose(k - 1, 1) != k)
      throw std::invalid_argument("permutation rep: group is not cyclic in index order");
  std::vector<MatrixXd> ms;
  Representation::Permutation cur(d);
  for (std::size_t a = 0; a < d; ++a) cur[a] = a;
  for (std::size_t k = 0; k < n; ++k) {
    ms.push_back(permutation_matrix(cur));
    Representation::Permutation next(d);
    for (std::size_t a = 0; a < d; ++a) next[a] = generator[cur[a]];
    cur = std::move(next);
  }
  for (std::size_t a = 0; a < d; ++a)
    if (cur[a] != a) throw std::invalid_argument("permutation rep: generator order does not divide |G|");
  return Representation(std::move(group), std::move(ms));
}

/// Flattened index of pixel (r, c) in channel ch on an h x w grid.
/// Layout is channel-major: ch * h * w + r * w + c.
inline std::size_t grid_index(std::size_t h, std::size_t w, std::size_t ch, std::size_t r, std::size_t c) {
  return ch * h * w + r * w + c;
}

/// C4 acting on an h x h x channels image by 90 degree rotations. The
/// generator sends pixel (r, c) to (c, h - 1 - r) in every channel.
inline Representation rotation_rep_on_grid(GroupPtr group, std::size_t height, std::size_t width,
                                           std::size_t channels) {
  if (group->order() != 4) throw std::invalid_argument("rotation_rep_on_grid: group must have order 4");
  if (height != width) throw std::invalid_argument("rotation_rep_on_grid: grid must be square");
  if (height == 0 || channels == 0) throw std::invalid_argument("rotation_rep_on_grid: empty grid");
  const std::size_t h = height;
  Representation::Permutation gen(h * h * channels);
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < h; ++c)
        gen[grid_index(h, h, ch, r, c)] = grid_index(h, h, ch, c, h - 1 - r);
  return cyclic_permutation_rep(std::move(group), gen);
}

/// Cyclic shift of `dim` coordinates by dim / |G| positions per generator step.
inline Representation cyclic_shift_rep(GroupPtr group, std::size_t dim) {
  const std::size_t n = group->order();
  if (dim == 0 || dim % n != 0) throw std::invalid_argument("cyclic_shift_rep: dim must be a positive multiple of |G|");
  const std::size_t s = dim / n;
  Representation::Permutation gen(dim);
  for (std::size_t a = 0; a < dim; ++a) gen[a] = (a + s) % dim;
  return cyclic_permutation_rep(std::move(group), gen);
}

/// (1/|G|) sum_g f(g), summed in element-index order.
inline MatrixXd haar_average(const FiniteGroup& group, const std::function<MatrixXd(std::size_t)>& f) {
  MatrixXd acc = f(0);
  for (std::size_t g = 1; g < group.order(); ++g) {
    MatrixXd v = f(g);
    if (v.rows() != acc.rows() || v.cols() != acc.cols())
      throw std::invalid_argument("haar_average: shape mismatch across group elements");
    acc += v;
  }
  return acc / static_cast<double>(group.order());
}

/// rho_out(g)^{-1} A rho_in(g), i.e. the conjugation action on linear maps.
inline MatrixXd conjugate(const Representation& out, const Representation& in, std::size_t g, const MatrixXd& a) {
  if (static_cast<std::size_t>(a.rows()) != out.dim() || static_cast<std::size_t>(a.cols()) != in.dim())
    throw std::invalid_argument("conjugate: layer shape does not match representations");
  if (out.is_permutation() && in.is_permutation()) {
    // (P^T A Q)[r][c] = A[p(r)][q(c)]
    const auto& p = out.permutation(g);
    const auto& q = in.permutation(g);
    MatrixXd res(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const auto qc = static_cast<Eigen::Index>(q[static_cast<std::size_t>(c)]);
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        res(r, c) = a(static_cast<Eigen::Index>(p[static_cast<std::size_t>(r)]), qc);
    }
    return res;
  }
  return out.matrix(g).transpose() * a * in.matrix(g);
}

}  // namespace eqreg
