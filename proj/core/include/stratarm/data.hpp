#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "stratarm/error.hpp"

namespace stratarm {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Treatment proportion a/k for a group of k units with exactly a treated.
class Propensity {
 public:
  // Throws kInvalidArgument unless 1 <= a < k and gcd(a, k) == 1.
  Propensity(int a, int k);

  // Parses "a/k".
  static Propensity parse(const std::string& text);

  int treated() const noexcept { return a_; }
  int group_size() const noexcept { return k_; }
  double p() const noexcept { return static_cast<double>(a_) / k_; }
  // s = sqrt(p (1 - p)), the scale of the canonical adjusted form.
  double scale() const noexcept;
  std::string to_string() const;

  friend bool operator==(const Propensity&, const Propensity&) = default;
  friend auto operator<=>(const Propensity&, const Propensity&) = default;

 private:
  int a_;
  int k_;
};

// Per-unit records of a (possibly completed) experiment. Rows are units.
struct ExperimentData {
  MatrixXd psi;  // stratification variables, n x d_psi
  MatrixXd h;    // adjustment covariates, n x d_h
  MatrixXd z;    // strata controls z(psi), n x d_z (may have zero columns)
  VectorXd y;    // outcome
  VectorXd d;    // treatment, entries in {0, 1}
  // Realized treatment uptake when `d` is an instrument (noncompliance).
  std::optional<VectorXd> uptake;

  Index n() const noexcept { return y.size(); }
  Index dim_psi() const noexcept { return psi.cols(); }
  Index dim_h() const noexcept { return h.cols(); }
  Index dim_z() const noexcept { return z.cols(); }

  Index treated_count() const;

  // Shape and domain checks; throws kInvalidArgument / kNonBinaryTreatment.
  void validate() const;

  // Rows `units` of every field, in the given order.
  ExperimentData subset(std::span<const Index> units) const;
};

// Column-wise centering at the sample mean.
MatrixXd demean(const MatrixXd& m);

// Sample covariance with the 1/n convention.
MatrixXd covariance_n(const MatrixXd& m);

}  // namespace stratarm
