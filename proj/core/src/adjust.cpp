#include "stratarm/adjust.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "json.hpp"
#include "stratarm/inference.hpp"
#include "stratarm/least_squares.hpp"

namespace stratarm {
namespace {

constexpr std::array<std::pair<EstimatorId, std::string_view>, 9> kNames{{
    {EstimatorId::kUnadj, "unadj"},
    {EstimatorId::kNaive, "naive"},
    {EstimatorId::kLin, "lin"},
    {EstimatorId::kFe, "fe"},
    {EstimatorId::kPlin, "plin"},
    {EstimatorId::kGo, "go"},
    {EstimatorId::kTom, "tom"},
    {EstimatorId::kAdaptive, "adaptive"},
    {EstimatorId::kAipw, "aipw"},
}};

struct ArmSplit {
  Index n1 = 0;
  Index n0 = 0;
  double p() const { return static_cast<double>(n1) / static_cast<double>(n1 + n0); }
};

ArmSplit arms(const ExperimentData& data) {
  data.validate();
  ArmSplit split;
  split.n1 = data.treated_count();
  split.n0 = data.n() - split.n1;
  if (split.n1 == 0 || split.n0 == 0) {
    throw Error(ErrorCode::kEmptyArm, "both treatment arms need at least one unit");
  }
  return split;
}

// Difference of arm means for every column of m.
VectorXd arm_difference(const MatrixXd& m, const VectorXd& d) {
  VectorXd sum1 = VectorXd::Zero(m.cols()), sum0 = VectorXd::Zero(m.cols());
  Index n1 = 0;
  for (Index i = 0; i < m.rows(); ++i) {
    if (d[i] != 0.0) {
      sum1 += m.row(i).transpose();
      ++n1;
    } else {
      sum0 += m.row(i).transpose();
    }
  }
  return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(m.rows() - n1);
}

double mean_difference(const VectorXd& y, const VectorXd& d) {
  return arm_difference(MatrixXd(y), d)[0];
}

// z columns that vary somewhere; constant columns would be collinear with
// the intercept and are dropped.
std::vector<Index> usable_z(const ExperimentData& data, std::vector<std::string>& notes) {
  std::vector<Index> keep;
  for (Index j = 0; j < data.dim_z(); ++j) {
    const auto col = data.z.col(j);
    if (col.maxCoeff() > col.minCoeff()) {
      keep.push_back(j);
    } else {
      notes.push_back("z column " + std::to_string(j + 1) + " is constant and was dropped");
    }
  }
  return keep;
}

// Covariates entering an estimator: h, then the kept z columns.
struct Covariates {
  MatrixXd h;
  MatrixXd z;
  std::vector<Index> z_kept;
  Index full_width = 0;  // d_h + d_z when z is requested, d_h otherwise

  // Canonical gamma of full width from coefficients on (h, kept z).
  VectorXd expand(const VectorXd& compact) const {
    VectorXd out = VectorXd::Zero(full_width);
    out.head(h.cols()) = compact.head(h.cols());
    for (std::size_t j = 0; j < z_kept.size(); ++j) {
      out[h.cols() + z_kept[j]] = compact[h.cols() + static_cast<Index>(j)];
    }
    return out;
  }
};

Covariates covariates(const ExperimentData& data, bool include_z, std::vector<std::string>& notes) {
  Covariates c;
  c.h = data.h;
  c.full_width = data.dim_h();
  if (include_z) {
    c.z_kept = usable_z(data, notes);
    c.z = data.z(Eigen::all, c.z_kept);
    c.full_width += data.dim_z();
  } else {
    c.z = MatrixXd(data.n(), 0);
  }
  return c;
}

MatrixXd hcat(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Raw (h, z) block matching the canonical gamma's width.
MatrixXd canonical_w(const ExperimentData& data, bool include_z) {
  return include_z ? hcat(data.h, data.z) : data.h;
}

AdjustedEstimate finish(EstimatorId id, bool include_z, const ExperimentData& data, double p,
                        double tau, VectorXd gamma) {
  AdjustedEstimate est;
  est.estimator = id;
  est.with_z = include_z;
  est.tau_hat = tau;
  est.p = p;
  est.n = data.n();
  est.gamma_hat = std::move(gamma);
  const double s = std::sqrt(p * (1.0 - p));
  est.augmented_outcomes = data.y;
  if (est.gamma_hat.size() > 0) {
    est.augmented_outcomes -= s * canonical_w(data, include_z) * est.gamma_hat;
  }
  return est;
}

// Interacted regression Y ~ 1 + D + x + D x on centred x. Returns tau and the
// canonical gamma on x.
struct Interacted {
  double tau;
  VectorXd gamma;
  RegressionRecord record;
};

Interacted interacted_fit(const VectorXd& y, const VectorXd& d, const MatrixXd& x, double p,
                          const char* what) {
  const Index n = y.size(), q = x.cols();
  MatrixXd design(n, 2 + 2 * q);
  design.col(0).setOnes();
  design.col(1) = d;
  design.middleCols(2, q) = x;
  design.rightCols(q) = x.array().colwise() * d.array();
  auto fit = solve_least_squares(design, y, what);
  const VectorXd a0 = fit.coefficients.segment(2, q);
  const VectorXd a1 = a0 + fit.coefficients.tail(q);
  Interacted out;
  out.tau = fit.coefficients[1];
  out.gamma = a1 * std::sqrt((1.0 - p) / p) + a0 * std::sqrt(p / (1.0 - p));
  out.record.design = std::move(design);
  out.record.residuals = std::move(fit.residuals);
  out.record.coefficient = 1;
  return out;
}

double design_p(const ExperimentData& data, const Design& design) {
  check_design(data, design);
  return design.common_propensity().p();
}

}  // namespace

std::string_view to_string(EstimatorId id) {
  for (const auto& [key, name] : kNames) {
    if (key == id) return name;
  }
  return "unknown";
}

EstimatorId parse_estimator(std::string_view name) {
  for (const auto& [key, label] : kNames) {
    if (label == name) return key;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown estimator '" + std::string(name) + "'");
}

bool needs_design(EstimatorId id) {
  switch (id) {
    case EstimatorId::kUnadj:
    case EstimatorId::kNaive:
    case EstimatorId::kLin:
      return false;
    default:
      return true;
  }
}

double AdjustedEstimate::scale() const { return std::sqrt(p * (1.0 - p)); }

std::string AdjustedEstimate::label() const {
  std::string name(to_string(estimator));
  if (adaptive_choice) {
    name += "(" + std::string(to_string(*adaptive_choice)) + (with_z ? "+z" : "") + ")";
  } else if (with_z) {
    name += "+z";
  }
  if (late) name = "wald_" + name;
  return name;
}

MatrixXd within_group_center(const MatrixXd& m, const Design& design) {
  MatrixXd out = m;
  for (const auto& group : design.groups) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(m.cols());
    for (Index u : group) mean += m.row(u);
    mean /= static_cast<double>(group.size());
    for (Index u : group) out.row(u) -= mean;
  }
  return out;
}

AdjustedEstimate diff_means(const ExperimentData& data) {
  const auto split = arms(data);
  auto est = finish(EstimatorId::kUnadj, false, data, split.p(), mean_difference(data.y, data.d),
                    VectorXd::Zero(data.dim_h()));
  RegressionRecord record;
  record.design = MatrixXd::Ones(data.n(), 2);
  record.design.col(1) = data.d;
  record.residuals.resize(data.n());
  // Residuals of Y ~ 1 + D are deviations from the arm means.
  const double mean1 = (data.y.array() * data.d.array()).sum() / static_cast<double>(split.n1);
  const double mean0 = (data.y.array() * (1.0 - data.d.array())).sum() / static_cast<double>(split.n0);
  for (Index i = 0; i < data.n(); ++i) {
    record.residuals[i] = data.y[i] - (data.d[i] != 0.0 ? mean1 : mean0);
  }
  est.regression = std::move(record);
  return est;
}

AdjustedEstimate lin(const ExperimentData& data, bool include_z) {
  const auto split = arms(data);
  std::vector<std::string> notes;
  const auto cov = covariates(data, include_z, notes);
  const double p = split.p();
  auto fit = interacted_fit(data.y, data.d, demean(hcat(cov.h, cov.z)), p, "lin");
  auto est = finish(EstimatorId::kLin, include_z, data, p, fit.tau, cov.expand(fit.gamma));
  est.regression = std::move(fit.record);
  est.notes = std::move(notes);
  return est;
}

AdjustedEstimate naive(const ExperimentData& data, bool include_z) {
  const auto split = arms(data);
  std::vector<std::string> notes;
  const auto cov = covariates(data, include_z, notes);
  const double p = split.p();
  const MatrixXd w = hcat(cov.h, cov.z);
  MatrixXd design(data.n(), 2 + w.cols());
  design.col(0).setOnes();
  design.col(1) = data.d;
  design.rightCols(w.cols()) = w;
  auto fit = solve_least_squares(design, data.y, "naive");
  const VectorXd gamma = fit.coefficients.tail(w.cols()) / std::sqrt(p * (1.0 - p));
  auto est = finish(EstimatorId::kNaive, include_z, data, p, fit.coefficients[1], cov.expand(gamma));
  est.regression = RegressionRecord{std::move(design), std::move(fit.residuals), 1, {}};
  est.notes = std::move(notes);
  return est;
}

AdjustedEstimate fixed_effects(const ExperimentData& data, const Design& design, bool include_z) {
  arms(data);
  const double p = design_p(data, design);
  const double s = std::sqrt(p * (1.0 - p));
  std::vector<std::string> notes;
  const auto cov = covariates(data, include_z, notes);
  const MatrixXd h_check = within_group_center(cov.h, design);

  RegressionRecord record;
  VectorXd coef;
  if (!include_z) {
    // Group dummies absorbed by the within transformation.
    MatrixXd x(data.n(), 1 + h_check.cols());
    x.col(0) = data.d.array() - p;
    x.rightCols(h_check.cols()) = h_check;
    const VectorXd y_check = within_group_center(MatrixXd(data.y), design).col(0);
    auto fit = solve_least_squares(x, y_check, "fixed effects");
    coef = fit.coefficients;
    record.design = std::move(x);
    record.residuals = std::move(fit.residuals);
    record.coefficient = 0;
    record.extra_leverage = VectorXd::Zero(data.n());
    for (const auto& group : design.groups) {
      for (Index u : group) record.extra_leverage[u] = 1.0 / static_cast<double>(group.size());
    }
  } else {
    MatrixXd x(data.n(), 2 + h_check.cols() + cov.z.cols());
    x.col(0).setOnes();
    x.col(1) = data.d;
    x.middleCols(2, h_check.cols()) = h_check;
    x.rightCols(cov.z.cols()) = cov.z;
    auto fit = solve_least_squares(x, data.y, "fixed effects");
    coef = fit.coefficients.tail(fit.coefficients.size() - 1);
    record.design = std::move(x);
    record.residuals = std::move(fit.residuals);
    record.coefficient = 1;
  }
  const VectorXd gamma = coef.tail(coef.size() - 1) / s;
  auto est = finish(EstimatorId::kFe, include_z, data, p, coef[0], cov.expand(gamma));
  est.propensity = design.common_propensity();
  est.regression = std::move(record);
  est.notes = std::move(notes);
  return est;
}

AdjustedEstimate partialled_lin(const ExperimentData& data, const Design& design, bool include_z) {
  arms(data);
  const double p = design_p(data, design);
  std::vector<std::string> notes;
  const auto cov = covariates(data, include_z, notes);
  const MatrixXd x = hcat(within_group_center(cov.h, design), demean(cov.z));
  auto fit = interacted_fit(data.y, data.d, x, p, "partialled lin");
  auto est = finish(EstimatorId::kPlin, include_z, data, p, fit.tau, cov.expand(fit.gamma));
  est.propensity = design.common_propensity();
  est.regression = std::move(fit.record);
  est.notes = std::move(notes);
  return est;
}

AdjustedEstimate group_ols(const ExperimentData& data, const Design& design, bool include_z) {
  arms(data);
  const double p = design_p(data, design);
  const double s = std::sqrt(p * (1.0 - p));
  const Index groups = design.group_count();
  if (groups < 2) throw Error(ErrorCode::kSingleGroup, "group OLS needs at least two groups");

  const Index dh = data.dim_h();
  VectorXd y_g = VectorXd::Zero(groups);
  MatrixXd x_g = MatrixXd::Zero(groups, 1 + dh);
  x_g.col(0).setOnes();
  for (Index g = 0; g < groups; ++g) {
    const auto& units = design.groups[static_cast<std::size_t>(g)];
    const auto k = static_cast<double>(units.size());
    for (Index u : units) {
      const double w = data.d[u] != 0.0 ? 1.0 / p : -1.0 / (1.0 - p);
      y_g[g] += w * data.y[u] / k;
      x_g.row(g).tail(dh) += w * data.h.row(u) / k;
    }
  }
  auto fit = solve_least_squares(x_g, y_g, "group OLS");
  double tau = fit.coefficients[0];
  VectorXd gamma = fit.coefficients.tail(dh) / s;
  std::vector<std::string> notes;
  if (include_z && data.dim_z() > 0) {
    const auto plin = partialled_lin(data, design, true);
    const VectorXd alpha = plin.gamma_hat.tail(data.dim_z());
    tau -= s * alpha.dot(arm_difference(data.z, data.d));
    VectorXd stacked(dh + data.dim_z());
    stacked << gamma, alpha;
    gamma = std::move(stacked);
    notes = plin.notes;
  } else if (include_z) {
    gamma.conservativeResize(dh);
  }
  auto est = finish(EstimatorId::kGo, include_z, data, p, tau, std::move(gamma));
  est.propensity = design.common_propensity();
  est.notes = std::move(notes);
  return est;
}

AdjustedEstimate tom(const ExperimentData& data, const Design& design, bool include_z) {
  const auto split = arms(data);
  const double p = design_p(data, design);
  std::vector<std::string> notes;
  const auto cov = covariates(data, include_z, notes);
  const MatrixXd w = hcat(within_group_center(cov.h, design), cov.z);
  const Index q = w.cols();

  VectorXd gamma_compact = VectorXd::Zero(q);
  if (q > 0) {
    const MatrixXd centered = demean(w);
    // var_n(w)^{-1} = n (W'W)^{-1} on centred W.
    const MatrixXd var_inv = gram_inverse(centered) * static_cast<double>(data.n());
    auto arm_cov = [&](bool treated, Index count) {
      VectorXd w_mean = VectorXd::Zero(q);
      double y_mean = 0.0;
      for (Index i = 0; i < data.n(); ++i) {
        if ((data.d[i] != 0.0) == treated) {
          w_mean += w.row(i).transpose();
          y_mean += data.y[i];
        }
      }
      w_mean /= static_cast<double>(count);
      y_mean /= static_cast<double>(count);
      VectorXd c = VectorXd::Zero(q);
      for (Index i = 0; i < data.n(); ++i) {
        if ((data.d[i] != 0.0) == treated) {
          c += (w.row(i).transpose() - w_mean) * (data.y[i] - y_mean);
        }
      }
      return VectorXd(c / static_cast<double>(count));
    };
    gamma_compact = var_inv * (arm_cov(true, split.n1) * std::sqrt((1.0 - p) / p) +
                               arm_cov(false, split.n0) * std::sqrt(p / (1.0 - p)));
  }
  const VectorXd gamma = cov.expand(gamma_compact);
  const double tau =
      mean_difference(data.y, data.d) -
      std::sqrt(p * (1.0 - p)) * gamma.dot(arm_difference(canonical_w(data, include_z), data.d));
  auto est = finish(EstimatorId::kTom, include_z, data, p, tau, gamma);
  est.propensity = design.common_propensity();
  est.notes = std::move(notes);
  return est;
}

AdjustedEstimate adaptive(const ExperimentData& data, const Design& design, bool include_z) {
  auto lin_est = lin(data, include_z);
  auto plin_est = partialled_lin(data, design, include_z);
  const auto pairing = pair_groups(design, data.psi);
  const double v_lin =
      exact_components(lin_est.augmented_outcomes, data.d, design, pairing).combined();
  const double v_plin =
      exact_components(plin_est.augmented_outcomes, data.d, design, pairing).combined();
  AdjustedEstimate chosen = v_lin <= v_plin ? std::move(lin_est) : std::move(plin_est);
  chosen.adaptive_choice = chosen.estimator;
  chosen.estimator = EstimatorId::kAdaptive;
  chosen.propensity = design.common_propensity();
  chosen.regression.reset();
  return chosen;
}

AdjustedEstimate estimate(EstimatorId id, const ExperimentData& data, const Design* design,
                          bool include_z) {
  if (needs_design(id) && design == nullptr) {
    throw Error(ErrorCode::kDesignMismatch,
                std::string(to_string(id)) + " needs a design with group structure");
  }
  switch (id) {
    case EstimatorId::kUnadj: return diff_means(data);
    case EstimatorId::kNaive: return naive(data, include_z);
    case EstimatorId::kLin: return lin(data, include_z);
    case EstimatorId::kFe: return fixed_effects(data, *design, include_z);
    case EstimatorId::kPlin: return partialled_lin(data, *design, include_z);
    case EstimatorId::kGo: return group_ols(data, *design, include_z);
    case EstimatorId::kTom: return tom(data, *design, include_z);
    case EstimatorId::kAdaptive: return adaptive(data, *design, include_z);
    case EstimatorId::kAipw:
      return aipw_varying(data, *design, aipw_coefficients(data, *design));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown estimator");
}

AdjustedEstimate wald_late(const ExperimentData& data, const Design& design, EstimatorId backbone,
                           bool include_z) {
  if (backbone != EstimatorId::kPlin && backbone != EstimatorId::kGo &&
      backbone != EstimatorId::kTom) {
    throw Error(ErrorCode::kInvalidArgument, "Wald estimators are built on plin, go or tom only");
  }
  if (!data.uptake) {
    throw Error(ErrorCode::kMissingColumn, "Wald estimation needs a treatment-uptake column");
  }
  const auto numerator = estimate(backbone, data, &design, include_z);
  ExperimentData first_stage = data;
  first_stage.y = *data.uptake;
  const auto denominator = estimate(backbone, first_stage, &design, include_z);
  const double tau_d = denominator.tau_hat;
  if (std::abs(tau_d) <= kWeakFirstStage) {
    throw Error(ErrorCode::kWeakFirstStage,
                "first-stage estimate " + std::to_string(tau_d) + " is numerically zero");
  }
  LateParts parts;
  parts.tau_w = numerator.tau_hat;
  parts.tau_d = tau_d;
  parts.gamma_w = numerator.gamma_hat;
  parts.gamma_d = denominator.gamma_hat;
  const double tau = parts.tau_w / tau_d;
  parts.gamma_q = parts.gamma_w - tau * parts.gamma_d;

  AdjustedEstimate est = numerator;
  est.tau_hat = tau;
  est.gamma_hat = parts.gamma_q;
  est.augmented_outcomes = data.y - tau * *data.uptake;
  if (parts.gamma_q.size() > 0) {
    est.augmented_outcomes -= est.scale() * canonical_w(data, include_z) * parts.gamma_q;
  }
  est.regression.reset();
  est.late = std::move(parts);
  return est;
}

AdjustedEstimate aipw_varying(const ExperimentData& data, const Design& design,
                              const AipwCoefficients& gamma) {
  arms(data);
  check_design(data, design);
  const VectorXd p = design.unit_propensity();
  for (Index i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 1.0)) {
      throw Error(ErrorCode::kDegeneratePropensity, "unit propensity outside (0, 1)");
    }
  }
  const Index dh = data.dim_h();
  if (gamma.gamma0.size() != dh || gamma.gamma1.size() != dh) {
    throw Error(ErrorCode::kInvalidArgument, "AIPW coefficients must have one entry per h column");
  }
  const auto n = static_cast<double>(data.n());
  const VectorXd fit1 = data.h * gamma.gamma1;
  const VectorXd fit0 = data.h * gamma.gamma0;
  double tau = (fit1 - fit0).sum() / n;
  for (Index i = 0; i < data.n(); ++i) {
    if (data.d[i] != 0.0) {
      tau += (data.y[i] - fit1[i]) / p[i] / n;
    } else {
      tau -= (data.y[i] - fit0[i]) / (1.0 - p[i]) / n;
    }
  }
  AdjustedEstimate est;
  est.estimator = EstimatorId::kAipw;
  est.tau_hat = tau;
  est.gamma_hat.resize(2 * dh);
  est.gamma_hat << gamma.gamma0, gamma.gamma1;
  est.p = static_cast<double>(data.treated_count()) / n;
  est.n = data.n();
  est.augmented_outcomes = data.y;
  if (design.constant_propensity()) est.propensity = design.common_propensity();
  return est;
}

AipwCoefficients aipw_coefficients(const ExperimentData& data, const Design& design) {
  check_design(data, design);
  const VectorXd p = design.unit_propensity();
  const Index dh = data.dim_h();
  MatrixXd hp(data.n(), 2 * dh);
  VectorXd y_tm(data.n());
  VectorXd weight(data.n());
  const auto owner = design.group_of();
  for (Index i = 0; i < data.n(); ++i) {
    const double pi = p[i];
    if (!(pi > 0.0 && pi < 1.0)) {
      throw Error(ErrorCode::kDegeneratePropensity, "unit propensity outside (0, 1)");
    }
    hp.row(i).head(dh) = data.h.row(i) * std::sqrt(pi / (1.0 - pi));
    hp.row(i).tail(dh) = data.h.row(i) * std::sqrt((1.0 - pi) / pi);
    y_tm[i] = data.d[i] != 0.0 ? data.y[i] * std::sqrt(1.0 - pi) * std::pow(pi, -1.5)
                               : data.y[i] * std::sqrt(pi) * std::pow(1.0 - pi, -1.5);
    const auto k = static_cast<double>(design.groups[static_cast<std::size_t>(owner[i])].size());
    weight[i] = std::sqrt(k / (k - 1.0));
  }
  const MatrixXd rows = within_group_center(hp, design).array().colwise() * weight.array();
  // Normal equations of this weighted regression are the pooled moment ratio.
  const auto fit = solve_least_squares(rows, y_tm.cwiseProduct(weight), "aipw coefficient");
  return {fit.coefficients.head(dh), fit.coefficients.tail(dh)};
}

std::string estimate_to_json(const AdjustedEstimate& est) {
  nlohmann::json j;
  j["estimator"] = est.label();
  j["tau"] = est.tau_hat;
  j["gamma"] = std::vector<double>(est.gamma_hat.data(), est.gamma_hat.data() + est.gamma_hat.size());
  if (est.propensity) {
    j["p"] = {{"a", est.propensity->treated()}, {"k", est.propensity->group_size()}};
  } else {
    j["p"] = est.p;
  }
  j["n"] = est.n;
  if (est.adaptive_choice) j["chosen"] = std::string(to_string(*est.adaptive_choice));
  if (est.late) {
    j["first_stage"] = est.late->tau_d;
    j["reduced_form"] = est.late->tau_w;
  }
  if (!est.notes.empty()) j["notes"] = est.notes;
  return j.dump();
}

}  // namespace stratarm
