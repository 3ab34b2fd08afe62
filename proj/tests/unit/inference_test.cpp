#include <gtest/gtest.h>

#include "stratarm/adjust.hpp"
#include "stratarm/error.hpp"
#include "stratarm/inference.hpp"
#include "support/oracles.hpp"

namespace stratarm {
namespace {

ErrorCode code_of(const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

// Direct sums over index pairs.
VarianceComponents pairwise_components(const VectorXd& y, const VectorXd& d, const Design& design,
                                       const GroupPairing& pairing) {
  const double p = design.common_propensity().p();
  const auto n = static_cast<double>(y.size());
  VarianceComponents out;
  VectorXd w(y.size());
  for (Index i = 0; i < y.size(); ++i) w[i] = (d[i] - p) * y[i] / (p * (1 - p));
  const double mean = w.mean();
  for (Index i = 0; i < y.size(); ++i) out.sample_term += (w[i] - mean) * (w[i] - mean) / n;

  for (const auto& u : pairing.unions) {
    std::vector<Index> units;
    for (Index g : u) {
      for (Index i : design.groups[static_cast<std::size_t>(g)]) units.push_back(i);
    }
    double treated = 0.0;
    for (Index i : units) treated += d[i];
    const double control = static_cast<double>(units.size()) - treated;
    for (Index i : units) {
      for (Index j : units) {
        if (i == j) continue;
        if (d[i] == 1.0 && d[j] == 1.0) out.v1 += y[i] * y[j] / (treated - 1);
        if (d[i] == 0.0 && d[j] == 0.0) out.v0 += y[i] * y[j] / (control - 1);
      }
    }
  }
  out.v1 *= (1 - p) / (p * p) / n;
  out.v0 *= p / ((1 - p) * (1 - p)) / n;
  for (const auto& g : design.groups) {
    const double k = static_cast<double>(g.size());
    double a = 0.0;
    for (Index i : g) a += d[i];
    for (Index i : g) {
      for (Index j : g) {
        if (d[i] == 1.0 && d[j] == 0.0) out.v10 += k / (a * (k - a)) * y[i] * y[j] / n;
      }
    }
  }
  return out;
}

TEST(ExactVariance, MatchesPairwiseOracle) {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const Propensity prop = trial % 3 == 0 ? Propensity(1, 2) : trial % 3 == 1 ? Propensity(1, 3) : Propensity(2, 3);
    const Index groups = 4 + static_cast<Index>(rng.below(9));
    const auto [data, design] = oracle::random_instance(rng, groups, prop, 2, 1);
    const auto pairing = pair_groups(design, data.psi);
    for (auto id : {EstimatorId::kUnadj, EstimatorId::kLin, EstimatorId::kPlin, EstimatorId::kTom}) {
      const auto est = estimate(id, data, &design, false);
      const auto ours = exact_components(est.augmented_outcomes, data.d, design, pairing);
      const auto ref = pairwise_components(est.augmented_outcomes, data.d, design, pairing);
      EXPECT_NEAR(ours.sample_term, ref.sample_term, 1e-9);
      EXPECT_NEAR(ours.v1, ref.v1, 1e-9);
      EXPECT_NEAR(ours.v0, ref.v0, 1e-9);
      EXPECT_NEAR(ours.v10, ref.v10, 1e-9);
      const auto report = exact_variance(est, data, design, pairing, 0.1);
      EXPECT_NEAR(report.raw_v_hat, ref.combined(), 1e-9);
      const double half = normal_critical_value(0.1) * std::sqrt(report.v_hat / data.n());
      EXPECT_NEAR(report.ci_high - report.ci_low, 2 * half, 1e-12);
      EXPECT_EQ(report.clamped, ref.combined() < 0);
    }
  }
}

TEST(ExactVariance, ConstantOutcomeHasZeroVariance) {
  Rng rng(62);
  auto [data, design] = oracle::random_instance(rng, 10, Propensity(1, 3), 1, 0);
  data.y.setConstant(3.0);
  const auto pairing = pair_groups(design, data.psi);
  const auto report = exact_variance(diff_means(data), data, design, pairing);
  EXPECT_NEAR(report.raw_v_hat, 0.0, 1e-9);
}

TEST(ExactVariance, CriticalValue) {
  EXPECT_NEAR(normal_critical_value(0.05), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_critical_value(0.10), 1.644853626951472, 1e-12);
  EXPECT_EQ(code_of([] { normal_critical_value(1.5); }), ErrorCode::kInvalidArgument);
}

TEST(ExactVariance, PairingErrors) {
  Rng rng(63);
  const auto [data, design] = oracle::random_instance(rng, 6, Propensity(1, 2), 1, 0);
  const auto est = diff_means(data);
  GroupPairing empty;
  EXPECT_EQ(code_of([&] { exact_variance(est, data, design, empty); }), ErrorCode::kMissingPairing);
  GroupPairing doubled = pair_groups(design, data.psi);
  doubled.unions.push_back(doubled.unions.front());
  EXPECT_EQ(code_of([&] { exact_variance(est, data, design, doubled); }), ErrorCode::kMissingPairing);
  // A union of a single pair has one treated unit per arm.
  GroupPairing singles;
  singles.partner.assign(6, -1);
  for (Index g = 0; g < 6; ++g) singles.unions.push_back({g});
  EXPECT_EQ(code_of([&] { exact_variance(est, data, design, singles); }), ErrorCode::kDegenerateUnion);
}

// Textbook HC2: full hat matrix of the explicit regression.
double textbook_hc2(const MatrixXd& x, const VectorXd& y, Index coef) {
  const MatrixXd bread = (x.transpose() * x).inverse();
  const VectorXd e = y - x * (bread * x.transpose() * y);
  const MatrixXd hat = x * bread * x.transpose();
  MatrixXd meat = MatrixXd::Zero(x.cols(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    meat += x.row(i).transpose() * x.row(i) * e[i] * e[i] / (1 - hat(i, i));
  }
  return (bread * meat * bread)(coef, coef);
}

TEST(Hc2, MatchesTextbookSandwich) {
  Rng rng(64);
  for (int trial = 0; trial < 30; ++trial) {
    const auto [data, design] = oracle::random_instance(rng, 12 + static_cast<Index>(rng.below(8)), Propensity(1, 3), 2, 1);
    const auto n = static_cast<double>(data.n());

    MatrixXd x_unadj(data.n(), 2);
    x_unadj << VectorXd::Ones(data.n()), data.d;
    EXPECT_NEAR(ehw_hc2_variance(diff_means(data), data).v_hat, n * textbook_hc2(x_unadj, data.y, 1), 1e-8);

    const MatrixXd hc = oracle::center_columns(data.h);
    MatrixXd x_lin(data.n(), 6);
    x_lin << VectorXd::Ones(data.n()), data.d, hc, hc.array().colwise() * data.d.array();
    EXPECT_NEAR(ehw_hc2_variance(lin(data, false), data).v_hat, n * textbook_hc2(x_lin, data.y, 1), 1e-8);

    // FE: the dummy-variable regression, whose leverages include the 1/k
    // absorbed by the group dummies.
    MatrixXd x_fe = MatrixXd::Zero(data.n(), 3 + design.group_count());
    x_fe.col(0) = data.d;
    x_fe.middleCols(1, 2) = data.h;
    for (Index g = 0; g < design.group_count(); ++g) {
      for (Index u : design.groups[static_cast<std::size_t>(g)]) x_fe(u, 3 + g) = 1.0;
    }
    EXPECT_NEAR(ehw_hc2_variance(fixed_effects(data, design, false), data).v_hat,
                n * textbook_hc2(x_fe, data.y, 0), 1e-8);
  }
}

TEST(Hc2, OnlyForRegressionEstimators) {
  Rng rng(65);
  const auto [data, design] = oracle::random_instance(rng, 12, Propensity(1, 2), 1, 1);
  for (auto id : {EstimatorId::kGo, EstimatorId::kTom, EstimatorId::kAdaptive}) {
    const auto est = estimate(id, data, &design, false);
    EXPECT_EQ(code_of([&] { ehw_hc2_variance(est, data); }), ErrorCode::kNotRegressionBased);
  }
  for (auto id : {EstimatorId::kUnadj, EstimatorId::kNaive, EstimatorId::kLin, EstimatorId::kFe,
                  EstimatorId::kPlin}) {
    EXPECT_NO_THROW(ehw_hc2_variance(estimate(id, data, &design, false), data));
  }
}

TEST(LateVariance, ScalesByFirstStage) {
  Rng rng(66);
  auto [data, design] = oracle::random_instance(rng, 20, Propensity(1, 2), 1, 0);
  VectorXd uptake = data.d;
  for (Index i = 0; i < data.n(); i += 3) uptake[i] = 0.0;
  data.uptake = uptake;
  const auto pairing = pair_groups(design, data.psi);
  const auto w = wald_late(data, design, EstimatorId::kPlin, false);
  const auto report = late_variance(w, data, design, pairing);
  const auto raw = exact_components(w.augmented_outcomes, data.d, design, pairing);
  const double td = w.late->tau_d;
  EXPECT_NEAR(report.raw_v_hat, raw.combined() / (td * td), 1e-10);
  EXPECT_NEAR(report.components.v10, raw.v10 / (td * td), 1e-12);
  EXPECT_EQ(code_of([&] { late_variance(diff_means(data), data, design, pairing); }),
            ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace stratarm
