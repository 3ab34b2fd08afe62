#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stratarm/data.hpp"
#include "stratarm/design.hpp"

namespace stratarm {

enum class EstimatorId { kUnadj, kNaive, kLin, kFe, kPlin, kGo, kTom, kAdaptive, kAipw };

// Lowercase flag names: "unadj", "naive", "lin", "fe", "plin", "go", "tom",
// "adaptive", "aipw".
std::string_view to_string(EstimatorId id);
EstimatorId parse_estimator(std::string_view name);

// Whether the estimator needs group structure from a design.
bool needs_design(EstimatorId id);

// The regression whose coefficient on D is tau_hat, kept for the HC2
// baseline. `extra_leverage` holds hat-matrix mass absorbed by group fixed
// effects (1/k per unit) when the regression was run on within-transformed
// columns.
struct RegressionRecord {
  MatrixXd design;
  VectorXd residuals;
  Index coefficient = 1;
  VectorXd extra_leverage;
};

// Pieces of an adjusted Wald estimate tau = tau_w / tau_d.
struct LateParts {
  double tau_w = 0.0;
  double tau_d = 0.0;
  VectorXd gamma_w;
  VectorXd gamma_d;
  VectorXd gamma_q;  // gamma_w - tau * gamma_d
};

// tau_hat = (Ybar_1 - Ybar_0) - s * gamma_hat'(wbar_1 - wbar_0), w = (h, z) for
// z variants and w = h otherwise, s = sqrt(p (1 - p)).
struct AdjustedEstimate {
  EstimatorId estimator = EstimatorId::kUnadj;
  bool with_z = false;
  double tau_hat = 0.0;
  VectorXd gamma_hat;
  // Y - s * gamma_hat' w for ATE estimators; the modified outcome
  // W - tau * uptake - s * gamma_q' w for Wald estimators.
  VectorXd augmented_outcomes;
  double p = 0.5;
  std::optional<Propensity> propensity;
  Index n = 0;
  std::optional<RegressionRecord> regression;
  std::optional<EstimatorId> adaptive_choice;
  std::optional<LateParts> late;
  std::vector<std::string> notes;

  double scale() const;
  // Label such as "plin+z" or "adaptive(lin+z)".
  std::string label() const;
};

AdjustedEstimate diff_means(const ExperimentData& data);
AdjustedEstimate lin(const ExperimentData& data, bool include_z);
AdjustedEstimate naive(const ExperimentData& data, bool include_z);
AdjustedEstimate fixed_effects(const ExperimentData& data, const Design& design, bool include_z);
AdjustedEstimate partialled_lin(const ExperimentData& data, const Design& design, bool include_z);
AdjustedEstimate group_ols(const ExperimentData& data, const Design& design, bool include_z);
AdjustedEstimate tom(const ExperimentData& data, const Design& design, bool include_z);
// LIN versus PLIN, whichever has the smaller exact variance estimate (LIN on
// ties). Pairs groups on data.psi.
AdjustedEstimate adaptive(const ExperimentData& data, const Design& design, bool include_z = true);

// Dispatch by id. Design-free estimators ignore `design`; design-based ones
// throw kDesignMismatch when it is null.
AdjustedEstimate estimate(EstimatorId id, const ExperimentData& data, const Design* design,
                          bool include_z);

// First-stage threshold below which a Wald ratio is refused.
inline constexpr double kWeakFirstStage = 1e-6;

// Ratio of the backbone estimator on the outcome to the same estimator on
// data.uptake; data.d is the instrument. Backbone in {PLIN, GO, TOM}.
AdjustedEstimate wald_late(const ExperimentData& data, const Design& design, EstimatorId backbone,
                           bool include_z = false);

// Each column minus its group mean; rows of leftover units are left as is.
MatrixXd within_group_center(const MatrixXd& m, const Design& design);

struct AipwCoefficients {
  VectorXd gamma0;
  VectorXd gamma1;
};

// (gamma_1 - gamma_0)' E_n h + E_n[D (Y - gamma_1'h) / p_i]
//   - E_n[(1 - D)(Y - gamma_0'h) / (1 - p_i)], p_i the unit's group a/k.
// gamma_hat stacks (gamma_0, gamma_1).
AdjustedEstimate aipw_varying(const ExperimentData& data, const Design& design,
                              const AipwCoefficients& gamma);
// The pooled within-group coefficient for aipw_varying. The weighted
// covariates are collinear when the propensity is constant, so this throws
// kRankDeficient on such designs.
AipwCoefficients aipw_coefficients(const ExperimentData& data, const Design& design);

std::string estimate_to_json(const AdjustedEstimate& estimate);

}  // namespace stratarm
