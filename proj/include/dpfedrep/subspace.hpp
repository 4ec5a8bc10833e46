#pragma once

// Orthonormal-basis primitives: QR re-orthonormalization, top-k symmetric
// eigenvectors, spectral norm and the principal-angle distance.
//
// Everything here is templated on the scalar type and header-only. Only
// deterministic Eigen decompositions are used (Householder QR, Jacobi SVD,
// tridiagonal QL for self-adjoint problems), so identical inputs give
// bit-identical outputs.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dpfedrep/error.hpp"

namespace dpfedrep {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Tolerance on ||Q^T Q - I||_F accepted by OrthonormalBasis (floored at
/// 1e3 k machine-epsilon for low-precision scalars).
inline constexpr double kOrthonormalTol = 1e-10;

/// d x k matrix with orthonormal columns. Construction validates the
/// invariant.
template <typename Scalar>
class OrthonormalBasis {
 public:
  OrthonormalBasis() = default;

  explicit OrthonormalBasis(Mat<Scalar> cols, double tol = kOrthonormalTol) : cols_(std::move(cols)) {
    if (cols_.cols() == 0 || cols_.cols() > cols_.rows())
      throw Error(ErrorCode::InvalidArgument, "orthonormal basis needs 1 <= k <= d, got d=" +
                                                  std::to_string(cols_.rows()) +
                                                  " k=" + std::to_string(cols_.cols()));
    const Scalar dev =
        (cols_.transpose() * cols_ - Mat<Scalar>::Identity(cols_.cols(), cols_.cols())).norm();
    const double floor = 1e3 * double(cols_.cols()) * double(Eigen::NumTraits<Scalar>::epsilon());
    if (!(double(dev) <= std::max(tol, floor)))
      throw Error(ErrorCode::InvalidArgument,
                  "columns are not orthonormal (deviation " + std::to_string(double(dev)) + ")");
  }

  /// First k columns of the d x d identity.
  static OrthonormalBasis canonical(Eigen::Index d, Eigen::Index k) {
    return OrthonormalBasis(Mat<Scalar>::Identity(d, k));
  }

  const Mat<Scalar>& matrix() const noexcept { return cols_; }
  Eigen::Index ambient_dim() const noexcept { return cols_.rows(); }
  Eigen::Index rank() const noexcept { return cols_.cols(); }

 private:
  Mat<Scalar> cols_;
};

/// k x k upper-triangular R factor; entries below the diagonal are exactly zero.
template <typename Scalar>
class UpperTriangularFactor {
 public:
  UpperTriangularFactor() = default;
  explicit UpperTriangularFactor(const Mat<Scalar>& m) : entries_(m.template triangularView<Eigen::Upper>()) {}

  const Mat<Scalar>& matrix() const noexcept { return entries_; }

 private:
  Mat<Scalar> entries_;
};

template <typename Scalar>
struct QrFactors {
  OrthonormalBasis<Scalar> q;
  UpperTriangularFactor<Scalar> r;
};

/// Thin QR with the sign convention diag(R) >= 0, which makes the
/// factorization unique. Throws RankDeficient when the smallest singular
/// value of `m` is not above 1e-12 times the largest.
template <typename Derived>
auto qr_orthonormalize(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index d = m.rows();
  const Eigen::Index k = m.cols();
  if (k == 0 || k > d)
    throw Error(ErrorCode::RankDeficient, "need 1 <= k <= d for QR, got " + std::to_string(d) + "x" +
                                              std::to_string(k));
  Mat<Scalar> a = m;
  if (!a.allFinite()) throw Error(ErrorCode::RankDeficient, "non-finite entries in QR input");

  const Vec<Scalar> sv = Eigen::JacobiSVD<Mat<Scalar>>(a).singularValues();
  if (!(sv(k - 1) > Scalar(1e-12) * sv(0)))
    throw Error(ErrorCode::RankDeficient,
                "smallest singular value " + std::to_string(double(sv(k - 1))) + " vs largest " +
                    std::to_string(double(sv(0))));

  Eigen::HouseholderQR<Mat<Scalar>> qr(a);
  Mat<Scalar> q = qr.householderQ() * Mat<Scalar>::Identity(d, k);
  Mat<Scalar> r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (r(j, j) < Scalar(0)) {
      q.col(j) = -q.col(j);
      r.row(j) = -r.row(j);
    }
  }
  return QrFactors<Scalar>{OrthonormalBasis<Scalar>(std::move(q)),
                           UpperTriangularFactor<Scalar>(r)};
}

/// Largest singular value. Zero for empty or all-zero input.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return Scalar(0);
  const Mat<Scalar> a = m;
  return Eigen::JacobiSVD<Mat<Scalar>>(a).singularValues()(0);
}

template <typename Scalar>
struct EigenBasis {
  OrthonormalBasis<Scalar> basis;
  Vec<Scalar> values;  ///< top-k eigenvalues, descending
  bool degenerate_gap = false;  ///< lambda_k - lambda_{k+1} < 1e-12: the span is not unique
};

/// Eigenvectors for the k algebraically largest eigenvalues of a symmetric
/// matrix. Each column's largest-magnitude entry is made positive.
template <typename Derived>
auto top_k_eigvecs(const Eigen::MatrixBase<Derived>& z, Eigen::Index k) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index d = z.rows();
  if (z.cols() != d) throw Error(ErrorCode::DimensionMismatch, "top_k_eigvecs needs a square matrix");
  if (k < 1 || k > d) throw Error(ErrorCode::InvalidArgument, "top_k_eigvecs needs 1 <= k <= d");
  const Mat<Scalar> a = z;
  if ((a - a.transpose()).norm() > Scalar(1e-10) * std::max(Scalar(1), a.norm()))
    throw Error(ErrorCode::InvalidArgument, "top_k_eigvecs needs a symmetric matrix");

  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(a);
  // Eigen sorts ascending.
  Mat<Scalar> vecs(d, k);
  Vec<Scalar> vals(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    vecs.col(j) = es.eigenvectors().col(d - 1 - j);
    vals(j) = es.eigenvalues()(d - 1 - j);
    Eigen::Index arg = 0;
    vecs.col(j).cwiseAbs().maxCoeff(&arg);
    if (vecs(arg, j) < Scalar(0)) vecs.col(j) = -vecs.col(j);
  }
  bool degenerate = false;
  if (k < d) degenerate = (es.eigenvalues()(d - k) - es.eigenvalues()(d - k - 1)) < Scalar(1e-12);
  return EigenBasis<Scalar>{OrthonormalBasis<Scalar>(std::move(vecs), 1e-8), std::move(vals), degenerate};
}

/// Principal-angle distance ||(I - A A^T) B||_2, clamped to [0, 1].
template <typename Scalar>
Scalar principal_dist(const OrthonormalBasis<Scalar>& a, const OrthonormalBasis<Scalar>& b) {
  if (a.ambient_dim() != b.ambient_dim() || a.rank() != b.rank())
    throw Error(ErrorCode::DimensionMismatch,
                "principal_dist needs equal shapes, got " + std::to_string(a.ambient_dim()) + "x" +
                    std::to_string(a.rank()) + " and " + std::to_string(b.ambient_dim()) + "x" +
                    std::to_string(b.rank()));
  const Mat<Scalar> residual = b.matrix() - a.matrix() * (a.matrix().transpose() * b.matrix());
  return std::clamp(spectral_norm(residual), Scalar(0), Scalar(1));
}

using Basis = OrthonormalBasis<double>;

}  // namespace dpfedrep
