#include "stratarm/least_squares.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

namespace stratarm {

namespace {

Index numerical_rank(const Eigen::ColPivHouseholderQR<MatrixXd>& qr, Index cols) {
  if (cols == 0) return 0;
  const MatrixXd r = qr.matrixR().topLeftCorner(cols, cols).template triangularView<Eigen::Upper>();
  const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(r).singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  const double cutoff = kRankTolerance * sv[0];
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) rank += sv[i] > cutoff;
  return rank;
}

void require_shape(const MatrixXd& design, const VectorXd& response) {
  if (design.rows() != response.size()) {
    throw Error(ErrorCode::kInvalidArgument, "design and response row counts differ");
  }
  if (design.rows() < design.cols()) {
    throw Error(ErrorCode::kRankDeficient, "fewer observations than regressors");
  }
}

}  // namespace

LeastSquaresFit try_solve_least_squares(const MatrixXd& design, const VectorXd& response) {
  require_shape(design, response);
  LeastSquaresFit fit;
  const Index cols = design.cols();
  if (cols == 0) {
    fit.coefficients = VectorXd(0);
    fit.residuals = response;
    fit.full_rank = true;
    return fit;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  fit.rank = numerical_rank(qr, cols);
  fit.full_rank = fit.rank == cols;
  if (fit.full_rank) {
    fit.coefficients = qr.solve(response);
  } else {
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(design);
    cod.setThreshold(kRankTolerance);
    fit.coefficients = cod.solve(response);
  }
  fit.residuals = response - design * fit.coefficients;
  return fit;
}

LeastSquaresFit solve_least_squares(const MatrixXd& design, const VectorXd& response,
                                    const char* what) {
  LeastSquaresFit fit = try_solve_least_squares(design, response);
  if (!fit.full_rank) {
    throw Error(ErrorCode::kRankDeficient,
                std::string(what) + ": regressors are collinear (rank " +
                    std::to_string(fit.rank) + " of " + std::to_string(design.cols()) + ")");
  }
  return fit;
}

MatrixXd gram_inverse(const MatrixXd& design) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  const Index cols = design.cols();
  if (design.rows() < cols || numerical_rank(qr, cols) != cols) {
    throw Error(ErrorCode::kRankDeficient, "gram matrix is singular");
  }
  // X P = Q R  =>  (X'X)^{-1} = P R^{-1} R^{-T} P'.
  const MatrixXd r = qr.matrixR().topLeftCorner(cols, cols).template triangularView<Eigen::Upper>();
  const MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(cols, cols));
  const MatrixXd inner = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation();
  return perm * inner * perm.transpose();
}

VectorXd leverages(const MatrixXd& design) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  const Index cols = design.cols();
  if (design.rows() < cols || numerical_rank(qr, cols) != cols) {
    throw Error(ErrorCode::kRankDeficient, "leverages need a full-rank design");
  }
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(design.rows(), cols);
  return q.rowwise().squaredNorm();
}

}  // namespace stratarm
