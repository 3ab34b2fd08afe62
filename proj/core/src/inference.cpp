#include "stratarm/inference.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "json.hpp"
#include "stratarm/least_squares.hpp"

namespace stratarm {
namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  }
}

VarianceReport finish(VarianceMethod method, double tau, double raw, VarianceComponents parts,
                      Index n, double alpha) {
  VarianceReport report;
  report.method = method;
  report.tau_hat = tau;
  report.raw_v_hat = raw;
  report.clamped = raw < 0.0;
  report.v_hat = report.clamped ? 0.0 : raw;
  report.components = parts;
  report.alpha = alpha;
  report.n = n;
  const double half = normal_critical_value(alpha) * report.standard_error();
  report.ci_low = tau - half;
  report.ci_high = tau + half;
  return report;
}

void check_pairing(const Design& design, const GroupPairing& pairing) {
  if (static_cast<Index>(pairing.partner.size()) != design.group_count() ||
      pairing.unions.empty()) {
    throw Error(ErrorCode::kMissingPairing, "pairing does not match the design's groups");
  }
  std::vector<int> seen(static_cast<std::size_t>(design.group_count()), 0);
  for (const auto& u : pairing.unions) {
    for (Index g : u) {
      if (g < 0 || g >= design.group_count()) {
        throw Error(ErrorCode::kMissingPairing, "pairing refers to a group outside the design");
      }
      ++seen[static_cast<std::size_t>(g)];
    }
  }
  for (int count : seen) {
    if (count != 1) {
      throw Error(ErrorCode::kMissingPairing, "pairing unions must cover every group once");
    }
  }
}

}  // namespace

std::string_view to_string(VarianceMethod method) {
  return method == VarianceMethod::kExact ? "exact" : "ehw_hc2";
}

double VarianceReport::standard_error() const {
  return n > 0 ? std::sqrt(v_hat / static_cast<double>(n)) : 0.0;
}

double normal_critical_value(double alpha) {
  check_alpha(alpha);
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

VarianceComponents exact_components(const VectorXd& ya, const VectorXd& d, const Design& design,
                                    const GroupPairing& pairing) {
  check_pairing(design, pairing);
  const double p = design.common_propensity().p();
  const auto n = static_cast<double>(ya.size());

  VarianceComponents parts;
  const VectorXd weighted = (d.array() - p) * ya.array() / (p - p * p);
  parts.sample_term = (weighted.array() - weighted.mean()).square().sum() / n;

  for (const auto& u : pairing.unions) {
    double sum1 = 0.0, sq1 = 0.0, sum0 = 0.0, sq0 = 0.0;
    int treated = 0, size = 0;
    for (Index g : u) {
      for (Index i : design.groups[static_cast<std::size_t>(g)]) {
        ++size;
        if (d[i] != 0.0) {
          ++treated;
          sum1 += ya[i];
          sq1 += ya[i] * ya[i];
        } else {
          sum0 += ya[i];
          sq0 += ya[i] * ya[i];
        }
      }
    }
    if (treated <= 1 || size - treated <= 1) {
      throw Error(ErrorCode::kDegenerateUnion,
                  "a union of paired groups has at most one unit in an arm");
    }
    // Sum over ordered pairs i != j equals (sum)^2 - sum of squares.
    parts.v1 += (sum1 * sum1 - sq1) / (treated - 1);
    parts.v0 += (sum0 * sum0 - sq0) / (size - treated - 1);
  }
  parts.v1 *= (1.0 - p) / (p * p) / n;
  parts.v0 *= p / ((1.0 - p) * (1.0 - p)) / n;

  for (const auto& group : design.groups) {
    double sum1 = 0.0, sum0 = 0.0;
    int treated = 0;
    for (Index i : group) {
      if (d[i] != 0.0) {
        ++treated;
        sum1 += ya[i];
      } else {
        sum0 += ya[i];
      }
    }
    const auto k = static_cast<double>(group.size());
    parts.v10 += k / (treated * (k - treated)) * sum1 * sum0;
  }
  parts.v10 /= n;
  return parts;
}

VarianceReport exact_variance(const AdjustedEstimate& estimate, const ExperimentData& data,
                              const Design& design, const GroupPairing& pairing, double alpha) {
  check_alpha(alpha);
  check_design(data, design);
  if (estimate.augmented_outcomes.size() != data.n()) {
    throw Error(ErrorCode::kInvalidArgument, "estimate was computed on different data");
  }
  const auto parts = exact_components(estimate.augmented_outcomes, data.d, design, pairing);
  return finish(VarianceMethod::kExact, estimate.tau_hat, parts.combined(), parts, data.n(), alpha);
}

VarianceReport ehw_hc2_variance(const AdjustedEstimate& estimate, const ExperimentData& data,
                                double alpha) {
  check_alpha(alpha);
  if (!estimate.regression) {
    throw Error(ErrorCode::kNotRegressionBased,
                "HC2 is defined only for regression estimators, not " + estimate.label());
  }
  const auto& reg = *estimate.regression;
  if (reg.design.rows() != data.n()) {
    throw Error(ErrorCode::kInvalidArgument, "estimate was computed on different data");
  }
  const MatrixXd bread = gram_inverse(reg.design);
  VectorXd lev = leverages(reg.design);
  if (reg.extra_leverage.size() == lev.size()) lev += reg.extra_leverage;
  VectorXd omega(lev.size());
  for (Index i = 0; i < lev.size(); ++i) {
    if (lev[i] >= 1.0 - 1e-12) {
      throw Error(ErrorCode::kRankDeficient, "HC2 undefined: a unit has leverage one");
    }
    omega[i] = reg.residuals[i] * reg.residuals[i] / (1.0 - lev[i]);
  }
  const VectorXd row = reg.design * bread.col(reg.coefficient);
  const double var_tau = (row.array().square() * omega.array()).sum();
  const double v = var_tau * static_cast<double>(data.n());
  VarianceComponents parts;
  parts.sample_term = v;
  return finish(VarianceMethod::kEhwHc2, estimate.tau_hat, v, parts, data.n(), alpha);
}

VarianceReport late_variance(const AdjustedEstimate& estimate, const ExperimentData& data,
                             const Design& design, const GroupPairing& pairing, double alpha) {
  check_alpha(alpha);
  if (!estimate.late) {
    throw Error(ErrorCode::kInvalidArgument, "late_variance needs a Wald estimate");
  }
  const double tau_d = estimate.late->tau_d;
  if (std::abs(tau_d) <= kWeakFirstStage) {
    throw Error(ErrorCode::kWeakFirstStage, "first-stage estimate is numerically zero");
  }
  check_design(data, design);
  auto parts = exact_components(estimate.augmented_outcomes, data.d, design, pairing);
  const double scale = 1.0 / (tau_d * tau_d);
  parts.sample_term *= scale;
  parts.v1 *= scale;
  parts.v0 *= scale;
  parts.v10 *= scale;
  return finish(VarianceMethod::kExact, estimate.tau_hat, parts.combined(), parts, data.n(), alpha);
}

std::string variance_to_json(const VarianceReport& report) {
  nlohmann::json j;
  j["method"] = std::string(to_string(report.method));
  j["tau"] = report.tau_hat;
  j["v_hat"] = report.v_hat;
  j["clamped"] = report.clamped;
  j["se"] = report.standard_error();
  j["alpha"] = report.alpha;
  j["ci"] = {report.ci_low, report.ci_high};
  j["components"] = {{"sample_term", report.components.sample_term},
                     {"v1", report.components.v1},
                     {"v0", report.components.v0},
                     {"v10", report.components.v10}};
  return j.dump();
}

}  // namespace stratarm
