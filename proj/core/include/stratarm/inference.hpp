#pragma once

#include <string>

#include "stratarm/adjust.hpp"
#include "stratarm/design.hpp"

namespace stratarm {

enum class VarianceMethod { kExact, kEhwHc2 };
std::string_view to_string(VarianceMethod method);

struct VarianceComponents {
  double sample_term = 0.0;
  double v1 = 0.0;
  double v0 = 0.0;
  double v10 = 0.0;

  // sample_term - v1 - v0 - 2 v10
  double combined() const { return sample_term - v1 - v0 - 2.0 * v10; }
};

// Variance on the sqrt(n)(tau_hat - tau) scale and the matching normal CI.
struct VarianceReport {
  VarianceMethod method = VarianceMethod::kExact;
  double tau_hat = 0.0;
  double v_hat = 0.0;
  double raw_v_hat = 0.0;  // before clamping at zero
  bool clamped = false;
  VarianceComponents components;
  double alpha = 0.05;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Index n = 0;

  double standard_error() const;
  double ci_length() const { return ci_high - ci_low; }
  bool covers(double value) const { return ci_low <= value && value <= ci_high; }
};

// z_{1 - alpha / 2} of the standard normal.
double normal_critical_value(double alpha);

// The four components for augmented outcomes `ya` under a constant-propensity
// design, with v1 and v0 taken over unions of paired groups.
VarianceComponents exact_components(const VectorXd& ya, const VectorXd& d, const Design& design,
                                    const GroupPairing& pairing);

VarianceReport exact_variance(const AdjustedEstimate& estimate, const ExperimentData& data,
                              const Design& design, const GroupPairing& pairing,
                              double alpha = 0.05);

// HC2 sandwich on the estimator's defining regression. Throws
// kNotRegressionBased for GO, TOM, ADAPTIVE, AIPW and Wald estimates.
VarianceReport ehw_hc2_variance(const AdjustedEstimate& estimate, const ExperimentData& data,
                                double alpha = 0.05);

// Exact combination on the modified outcomes of a Wald estimate, divided by
// the squared first stage.
VarianceReport late_variance(const AdjustedEstimate& estimate, const ExperimentData& data,
                             const Design& design, const GroupPairing& pairing,
                             double alpha = 0.05);

std::string variance_to_json(const VarianceReport& report);

}  // namespace stratarm
