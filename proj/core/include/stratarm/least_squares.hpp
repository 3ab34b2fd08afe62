#pragma once

#include "stratarm/data.hpp"

namespace stratarm {

// Result of min ||response - design * coefficients||^2.
struct LeastSquaresFit {
  VectorXd coefficients;
  VectorXd residuals;
  bool full_rank = false;
  Index rank = 0;
};

// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-10;

// Column-pivoted Householder QR; the rank is read off the singular values of
// R (which equal those of the design). Never throws on collinearity: when the
// design is rank deficient the minimum-norm solution is returned with
// full_rank == false.
LeastSquaresFit try_solve_least_squares(const MatrixXd& design, const VectorXd& response);

// As above but throws kRankDeficient when the design is not of full column
// rank. `what` names the regression in the error message.
LeastSquaresFit solve_least_squares(const MatrixXd& design, const VectorXd& response,
                                    const char* what = "least squares");

// Diagonal of the hat matrix X (X'X)^{-1} X'. Throws kRankDeficient.
VectorXd leverages(const MatrixXd& design);

// (X'X)^{-1} for a full-rank design. Throws kRankDeficient.
MatrixXd gram_inverse(const MatrixXd& design);

}  // namespace stratarm
