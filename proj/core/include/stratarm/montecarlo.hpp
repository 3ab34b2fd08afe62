#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stratarm/adjust.hpp"
#include "stratarm/design.hpp"
#include "stratarm/rng.hpp"

namespace stratarm {

// Y(d) = psi'Q_d psi + psi'L_d + c_d u + eps_d,  h = psi'Q_h psi + psi'L_h + u,
// psi ~ N(0, I_m), u ~ N(0, 1), eps_d ~ N(0, noise_variance), z = psi.
struct ModelParams {
  MatrixXd q_h, q0, q1;
  VectorXd l_h, l0, l1;
  double c0 = 0.0;
  double c1 = 0.0;
  double noise_variance = 0.1;
  Propensity propensity{1, 2};

  Index dim() const { return l_h.size(); }
  // E[Y(1) - Y(0)] = trace(Q_1 - Q_0).
  double true_ate() const { return (q1 - q0).trace(); }
  // c_1 sqrt((1-p)/p) + c_0 sqrt(p/(1-p)).
  double optimal_gamma() const;
};

// Models 1-6 at dimension m. Throws kUnknownModel.
ModelParams model_params(int model_id, Index m);

struct EstimatorSpec {
  EstimatorId id = EstimatorId::kUnadj;
  bool with_z = false;

  std::string label() const;
  friend bool operator==(const EstimatorSpec&, const EstimatorSpec&) = default;
};

// Parses "plin", "lin+z", ... ("+z" selects the strata-control variant).
EstimatorSpec parse_estimator_spec(const std::string& text);

// Default simulation set: the six no-z estimators, their z variants and ADAPTIVE.
std::vector<EstimatorSpec> table_estimators();

enum class DesignKind { kMatched, kComplete };

struct SimScenario {
  std::string name;
  DesignKind design = DesignKind::kMatched;
  int model_id = 1;                   // 0 selects `custom`
  std::optional<ModelParams> custom;  // used when model_id == 0
  Index n = 600;
  Index dim_psi = 2;
  std::optional<Propensity> propensity;  // overrides the model's p
  std::vector<EstimatorSpec> estimators;
  Index reps = 2000;
  std::uint64_t master_seed = 0;
  double alpha = 0.05;
  bool ehw = false;
  unsigned jobs = 0;  // 0: hardware concurrency
  bool keep_draws = false;

  ModelParams params() const;
};

// One replication's data with both potential outcomes kept.
struct SimDraw {
  ExperimentData data;  // y and d filled by the design step
  VectorXd y1, y0;
  double true_ate = 0.0;
  // Oracle partially linear fits F_d = E[Y(d) | X].
  VectorXd f1, f0;
  // Complier indicator for noncompliance draws; uptake = D * compliance.
  std::optional<VectorXd> compliance;
};

SimDraw generate_model(const SimScenario& scenario, Index rep_index);
SimDraw generate_model(const ModelParams& params, Index n, Rng& rng);

struct RepOutcome {
  bool ok = false;
  std::string error;
  double true_ate = 0.0;
  std::vector<double> tau, v_hat, ci_length, hc2_length;
  std::vector<char> covered, hc2_covered;
  std::vector<VectorXd> gamma;
  std::vector<int> adaptive_lin;  // 1 when ADAPTIVE chose LIN, -1 when n/a
};

struct EstimatorMetrics {
  EstimatorSpec spec;
  double mse = 0.0;
  double relative_mse = 0.0;
  double relative_mse_se = 0.0;
  double bias = 0.0;
  double bias_se = 0.0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double mean_ci_length = 0.0;
  double ci_length_change = 0.0;  // percent vs UNADJ
  double ci_length_change_se = 0.0;
  double hc2_coverage = 0.0;
  double hc2_mean_ci_length = 0.0;
  bool has_hc2 = false;
  double mean_v_hat = 0.0;
  double n_var_tau = 0.0;  // n times the Monte Carlo variance of tau_hat
  VectorXd mean_gamma;
  double adaptive_lin_share = -1.0;
  double excess_risk = 0.0;
};

struct SimResult {
  std::string scenario;
  int model_id = 0;
  Index n = 0;
  Index dim_psi = 0;
  Index reps = 0;
  Index failures = 0;
  std::uint64_t master_seed = 0;
  std::vector<EstimatorMetrics> metrics;
  std::vector<RepOutcome> draws;  // filled when keep_draws is set

  const EstimatorMetrics& at(const std::string& label) const;
};

// Largest tolerated share of failed replications.
inline constexpr double kFailureBudget = 0.01;

// Runs `body(rep)` for rep in [0, reps) on `jobs` threads (0: hardware
// concurrency). Exceptions propagate after all workers stop.
void parallel_reps(Index reps, unsigned jobs, const std::function<void(Index)>& body);

using DrawSource = std::function<SimDraw(Index rep, Rng& rng)>;

// Per replication: draw, assign matched tuples on psi, compute the
// estimators with exact (and optionally HC2) intervals, score against the
// draw's true ATE. Throws kFailureBudget when too many replications fail.
SimResult run_replications(const SimScenario& scenario, const DrawSource& source);
SimResult run_scenario(const SimScenario& scenario);

// R_k = mean over results of (relative MSE_k - min_j relative MSE_j), for
// every estimator label present in all results. Also written back into the
// results' metrics.
std::map<std::string, double> compute_excess_risk(std::vector<SimResult>& results);

// Nearest-neighbour imputation: Yhat_i(d) = Y_i when D_i = d, otherwise Y of
// the closest unit in arm d on `match` (ties to the lowest index).
struct ImputedOutcomes {
  VectorXd y1, y0;
};
ImputedOutcomes impute_outcomes(const ExperimentData& raw, const MatrixXd& match);

// Replays counterfactual designs on the imputed table: draw assignments with
// `scenario.propensity` over raw.psi, reveal imputed outcomes, estimate.
// Scenario n, model and dim_psi are taken from the data.
SimResult impute_replay(const ExperimentData& raw, const MatrixXd& match, SimScenario scenario);

// AIPW with the supplied outcome models f_d and a constant propensity p.
double oracle_semiparam(const ExperimentData& data, const VectorXd& f1, const VectorXd& f0,
                        double p);

// One-sided noncompliance: compliers (probability depending on psi) take
// treatment when assigned; never-takers do not. The effect of uptake is 1
// for compliers, so the LATE is 1.
SimDraw generate_noncompliance(Index n, Index m, Rng& rng);

// Scenario documents: JSON {"scenarios": [...]} or a single object, or the
// TOML subset of flat key = value pairs inside [[scenario]] tables.
std::vector<SimScenario> parse_scenarios(const std::string& text, bool toml);

std::string result_to_csv(const std::vector<SimResult>& results);
std::string result_to_json(const std::vector<SimResult>& results);

}  // namespace stratarm
