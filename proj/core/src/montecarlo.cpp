#include "stratarm/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "stratarm/inference.hpp"

namespace stratarm {
namespace {

MatrixXd off_diagonal_ones(Index m) {
  return MatrixXd::Ones(m, m) - MatrixXd::Identity(m, m);
}

double sample_sd(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double mean_of(const std::vector<double>& x) {
  return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::vector<EstimatorSpec> with_unadj_first(std::vector<EstimatorSpec> specs) {
  const EstimatorSpec unadj{EstimatorId::kUnadj, false};
  specs.erase(std::remove(specs.begin(), specs.end(), unadj), specs.end());
  specs.insert(specs.begin(), unadj);
  return specs;
}

Design draw_design(const SimScenario& scenario, const MatrixXd& psi, const Propensity& prop,
                   std::uint64_t seed) {
  return scenario.design == DesignKind::kMatched ? assign_matched_tuples(psi, prop, seed)
                                                 : assign_complete(psi.rows(), prop, seed);
}

RepOutcome run_one(const SimScenario& scenario, const std::vector<EstimatorSpec>& specs,
                   const Propensity& prop, const DrawSource& source, Index rep) {
  RepOutcome out;
  Rng rng(derive_seed(scenario.master_seed, static_cast<std::uint64_t>(rep)));
  SimDraw draw = source(rep, rng);
  out.true_ate = draw.true_ate;
  try {
    const Design full = draw_design(scenario, draw.data.psi, prop, rng.next());
    draw.data.d = full.treatment;
    draw.data.y = (full.treatment.array() > 0.5).select(draw.y1, draw.y0);
    ExperimentData data;
    Design design;
    if (full.leftover.empty()) {
      data = std::move(draw.data);
      design = full;
    } else {
      auto restricted = restrict_to_groups(draw.data, full);
      data = std::move(restricted.data);
      design = std::move(restricted.design);
    }
    const auto pairing = pair_groups(design, data.psi);
    for (const auto& spec : specs) {
      const auto est = estimate(spec.id, data, &design, spec.with_z);
      const auto var = exact_variance(est, data, design, pairing, scenario.alpha);
      out.tau.push_back(est.tau_hat);
      out.v_hat.push_back(var.v_hat);
      out.ci_length.push_back(var.ci_length());
      out.covered.push_back(var.covers(draw.true_ate));
      out.gamma.push_back(est.gamma_hat);
      out.adaptive_lin.push_back(
          est.adaptive_choice ? (*est.adaptive_choice == EstimatorId::kLin ? 1 : 0) : -1);
      if (scenario.ehw && est.regression) {
        const auto hc2 = ehw_hc2_variance(est, data, scenario.alpha);
        out.hc2_length.push_back(hc2.ci_length());
        out.hc2_covered.push_back(hc2.covers(draw.true_ate));
      } else {
        out.hc2_length.push_back(std::nan(""));
        out.hc2_covered.push_back(-1);
      }
    }
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

std::vector<EstimatorMetrics> aggregate(const std::vector<EstimatorSpec>& specs,
                                        const std::vector<RepOutcome>& reps, Index units) {
  std::vector<const RepOutcome*> ok;
  for (const auto& r : reps) {
    if (r.ok) ok.push_back(&r);
  }
  const auto count = static_cast<double>(ok.size());
  std::vector<EstimatorMetrics> metrics(specs.size());
  if (ok.empty()) {
    for (std::size_t k = 0; k < specs.size(); ++k) metrics[k].spec = specs[k];
    return metrics;
  }
  const auto root = std::sqrt(count);

  std::vector<std::vector<double>> sq_err(specs.size()), err(specs.size()), len(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    for (const auto* r : ok) {
      const double e = r->tau[k] - r->true_ate;
      err[k].push_back(e);
      sq_err[k].push_back(e * e);
      len[k].push_back(r->ci_length[k]);
    }
  }
  const double mse_u = mean_of(sq_err[0]);
  const double len_u = mean_of(len[0]);

  for (std::size_t k = 0; k < specs.size(); ++k) {
    auto& m = metrics[k];
    m.spec = specs[k];
    m.mse = mean_of(sq_err[k]);
    m.relative_mse = k == 0 ? 100.0 : 100.0 * m.mse / mse_u;
    m.bias = mean_of(err[k]);
    m.bias_se = sample_sd(err[k]) / root;
    m.mean_ci_length = mean_of(len[k]);
    m.ci_length_change = k == 0 ? 0.0 : 100.0 * (m.mean_ci_length / len_u - 1.0);

    std::vector<double> mse_infl, len_infl, v_hat, tau, cover;
    const double mse_ratio = m.mse / mse_u;
    const double len_ratio = m.mean_ci_length / len_u;
    Index hc2_count = 0, hc2_cov = 0;
    double hc2_len = 0.0;
    VectorXd gamma_sum = VectorXd::Zero(ok.front()->gamma[k].size());
    Index lin_votes = 0, votes = 0;
    for (std::size_t r = 0; r < ok.size(); ++r) {
      const auto& rep = *ok[r];
      mse_infl.push_back((sq_err[k][r] - mse_ratio * sq_err[0][r]) / mse_u);
      len_infl.push_back((len[k][r] - len_ratio * len[0][r]) / len_u);
      v_hat.push_back(rep.v_hat[k]);
      tau.push_back(rep.tau[k]);
      cover.push_back(rep.covered[k]);
      if (rep.hc2_covered[k] >= 0) {
        ++hc2_count;
        hc2_cov += rep.hc2_covered[k];
        hc2_len += rep.hc2_length[k];
      }
      if (rep.gamma[k].size() == gamma_sum.size()) gamma_sum += rep.gamma[k];
      if (rep.adaptive_lin[k] >= 0) {
        ++votes;
        lin_votes += rep.adaptive_lin[k];
      }
    }
    m.relative_mse_se = k == 0 ? 0.0 : 100.0 * sample_sd(mse_infl) / root;
    m.ci_length_change_se = k == 0 ? 0.0 : 100.0 * sample_sd(len_infl) / root;
    m.coverage = mean_of(cover);
    m.coverage_se = std::sqrt(m.coverage * (1.0 - m.coverage) / count);
    m.mean_v_hat = mean_of(v_hat);
    const double sd_tau = sample_sd(tau);
    m.n_var_tau = static_cast<double>(units) * sd_tau * sd_tau;
    m.mean_gamma = gamma_sum / count;
    if (hc2_count > 0) {
      m.has_hc2 = true;
      m.hc2_coverage = static_cast<double>(hc2_cov) / static_cast<double>(hc2_count);
      m.hc2_mean_ci_length = hc2_len / static_cast<double>(hc2_count);
    }
    if (votes > 0) m.adaptive_lin_share = static_cast<double>(lin_votes) / static_cast<double>(votes);
  }
  return metrics;
}

}  // namespace

double ModelParams::optimal_gamma() const {
  const double p = propensity.p();
  return c1 * std::sqrt((1.0 - p) / p) + c0 * std::sqrt(p / (1.0 - p));
}

ModelParams model_params(int model_id, Index m) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "model dimension must be at least 1");
  const auto md = static_cast<double>(m);
  const MatrixXd a = off_diagonal_ones(m);
  ModelParams params;
  params.q_h = a / (md * md);
  params.q0 = a / md;
  params.q1 = a / md;
  params.l0 = VectorXd::Ones(m);
  params.l1 = 2.0 * VectorXd::Ones(m);
  params.l_h = VectorXd::Ones(m);
  params.c0 = -3.0;
  params.c1 = -3.0;
  params.propensity = Propensity(2, 3);
  switch (model_id) {
    case 1:
      break;
    case 2:
    case 3:
      params.c0 = -4.0;
      params.c1 = -1.0;
      if (model_id == 3) params.propensity = Propensity(1, 2);
      break;
    case 4:
    case 5:
      params.c0 = 2.0;
      params.c1 = 4.0;
      if (model_id == 5) params.propensity = Propensity(1, 2);
      break;
    case 6:
      params.q_h = a / 100.0;
      break;
    default:
      throw Error(ErrorCode::kUnknownModel, "model " + std::to_string(model_id) + " is not 1-6");
  }
  return params;
}

std::string EstimatorSpec::label() const {
  return std::string(to_string(id)) + (with_z ? "+z" : "");
}

EstimatorSpec parse_estimator_spec(const std::string& text) {
  EstimatorSpec spec;
  std::string name = text;
  if (name.size() > 2 && name.compare(name.size() - 2, 2, "+z") == 0) {
    spec.with_z = true;
    name.resize(name.size() - 2);
  }
  spec.id = parse_estimator(name);
  if (spec.id == EstimatorId::kAipw) {
    throw Error(ErrorCode::kInvalidArgument, "aipw needs a varying-propensity design");
  }
  return spec;
}

std::vector<EstimatorSpec> table_estimators() {
  std::vector<EstimatorSpec> specs;
  for (bool z : {false, true}) {
    for (auto id : {EstimatorId::kNaive, EstimatorId::kLin, EstimatorId::kFe, EstimatorId::kPlin,
                    EstimatorId::kGo, EstimatorId::kTom}) {
      specs.push_back({id, z});
    }
  }
  specs.push_back({EstimatorId::kAdaptive, true});
  return with_unadj_first(specs);
}

ModelParams SimScenario::params() const {
  ModelParams params;
  if (model_id == 0) {
    if (!custom) throw Error(ErrorCode::kUnknownModel, "custom scenario without parameters");
    params = *custom;
  } else {
    params = model_params(model_id, dim_psi);
  }
  if (propensity) params.propensity = *propensity;
  return params;
}

SimDraw generate_model(const ModelParams& params, Index n, Rng& rng) {
  const Index m = params.dim();
  SimDraw draw;
  draw.data.psi.resize(n, m);
  draw.data.h.resize(n, 1);
  draw.y1.resize(n);
  draw.y0.resize(n);
  draw.f1.resize(n);
  draw.f0.resize(n);
  const double noise_sd = std::sqrt(params.noise_variance);
  VectorXd psi(m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) psi[j] = rng.normal();
    const double u = rng.normal();
    const double eps0 = noise_sd * rng.normal();
    const double eps1 = noise_sd * rng.normal();
    draw.data.psi.row(i) = psi.transpose();
    draw.data.h(i, 0) = psi.dot(params.q_h * psi) + psi.dot(params.l_h) + u;
    draw.f0[i] = psi.dot(params.q0 * psi) + psi.dot(params.l0) + params.c0 * u;
    draw.f1[i] = psi.dot(params.q1 * psi) + psi.dot(params.l1) + params.c1 * u;
    draw.y0[i] = draw.f0[i] + eps0;
    draw.y1[i] = draw.f1[i] + eps1;
  }
  draw.data.z = draw.data.psi;
  draw.data.d = VectorXd::Zero(n);
  draw.data.y = draw.y0;
  draw.true_ate = params.true_ate();
  return draw;
}

SimDraw generate_model(const SimScenario& scenario, Index rep_index) {
  const auto params = scenario.params();
  Rng rng(derive_seed(scenario.master_seed, static_cast<std::uint64_t>(rep_index)));
  return generate_model(params, scenario.n, rng);
}

SimDraw generate_noncompliance(Index n, Index m, Rng& rng) {
  SimDraw draw;
  draw.data.psi.resize(n, m);
  draw.data.h.resize(n, 1);
  draw.y1.resize(n);
  draw.y0.resize(n);
  VectorXd compliance(n);
  const MatrixXd a = off_diagonal_ones(m) / static_cast<double>(m);
  const double noise_sd = std::sqrt(0.1);
  VectorXd psi(m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) psi[j] = rng.normal();
    const double u = rng.normal();
    const double eps = noise_sd * rng.normal();
    const double complier_prob = 1.0 / (1.0 + std::exp(-(0.5 + psi[0])));
    compliance[i] = rng.uniform() < complier_prob ? 1.0 : 0.0;
    draw.data.psi.row(i) = psi.transpose();
    draw.data.h(i, 0) = psi.sum() / static_cast<double>(m) + u;
    draw.y0[i] = psi.dot(a * psi) + psi.sum() - 2.0 * u + eps;
    // Outcome under instrument = 1: compliers take up treatment (effect 1).
    draw.y1[i] = draw.y0[i] + compliance[i];
  }
  draw.data.z = draw.data.psi;
  draw.data.d = VectorXd::Zero(n);
  draw.data.y = draw.y0;
  draw.compliance = std::move(compliance);
  draw.true_ate = 1.0;
  return draw;
}

const EstimatorMetrics& SimResult::at(const std::string& label) const {
  for (const auto& m : metrics) {
    if (m.spec.label() == label) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "no estimator '" + label + "' in result");
}

void parallel_reps(Index reps, unsigned jobs, const std::function<void(Index)>& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<Index>(jobs, std::max<Index>(reps, 1)));
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const Index rep = next.fetch_add(1);
      if (rep >= reps) return;
      try {
        body(rep);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(reps);
        return;
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

SimResult run_replications(const SimScenario& scenario, const DrawSource& source) {
  if (scenario.reps < 1) throw Error(ErrorCode::kConfig, "reps must be at least 1");
  const auto specs = with_unadj_first(scenario.estimators);
  const auto params_prop = scenario.propensity ? *scenario.propensity : scenario.params().propensity;
  std::vector<RepOutcome> reps(static_cast<std::size_t>(scenario.reps));
  parallel_reps(scenario.reps, scenario.jobs, [&](Index rep) {
    reps[static_cast<std::size_t>(rep)] = run_one(scenario, specs, params_prop, source, rep);
  });

  SimResult result;
  result.scenario = scenario.name;
  result.model_id = scenario.model_id;
  result.dim_psi = scenario.dim_psi;
  result.reps = scenario.reps;
  result.master_seed = scenario.master_seed;
  std::string first_error;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++result.failures;
      if (first_error.empty()) first_error = r.error;
    }
  }
  if (static_cast<double>(result.failures) > kFailureBudget * static_cast<double>(scenario.reps)) {
    throw Error(ErrorCode::kFailureBudget,
                std::to_string(result.failures) + " of " + std::to_string(scenario.reps) +
                    " replications failed in scenario '" + scenario.name + "' (first: " +
                    first_error + ")");
  }
  const Index k = params_prop.group_size();
  result.n = scenario.n / k * k;
  result.metrics = aggregate(specs, reps, result.n);
  if (scenario.keep_draws) result.draws = std::move(reps);
  return result;
}

SimResult run_scenario(const SimScenario& scenario) {
  const auto params = scenario.params();
  return run_replications(scenario, [&](Index, Rng& rng) {
    return generate_model(params, scenario.n, rng);
  });
}

std::map<std::string, double> compute_excess_risk(std::vector<SimResult>& results) {
  if (results.empty()) throw Error(ErrorCode::kInvalidArgument, "no scenarios to compare");
  std::set<std::string> common;
  for (const auto& m : results.front().metrics) common.insert(m.spec.label());
  for (const auto& r : results) {
    std::set<std::string> here;
    for (const auto& m : r.metrics) {
      if (common.count(m.spec.label())) here.insert(m.spec.label());
    }
    common = std::move(here);
  }
  std::map<std::string, double> risk;
  for (const auto& label : common) risk[label] = 0.0;
  for (auto& r : results) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : r.metrics) {
      if (common.count(m.spec.label())) best = std::min(best, m.relative_mse);
    }
    for (auto& m : r.metrics) {
      if (!common.count(m.spec.label())) continue;
      m.excess_risk = m.relative_mse - best;
      risk[m.spec.label()] += m.excess_risk / static_cast<double>(results.size());
    }
  }
  return risk;
}

ImputedOutcomes impute_outcomes(const ExperimentData& raw, const MatrixXd& match) {
  raw.validate();
  if (match.rows() != raw.n()) {
    throw Error(ErrorCode::kInvalidArgument, "matching columns must have one row per unit");
  }
  std::vector<Index> arm1, arm0;
  for (Index i = 0; i < raw.n(); ++i) (raw.d[i] != 0.0 ? arm1 : arm0).push_back(i);
  if (arm1.empty() || arm0.empty()) {
    throw Error(ErrorCode::kEmptyArm, "imputation needs units in both arms");
  }
  auto nearest = [&](Index i, const std::vector<Index>& arm) {
    Index best = arm.front();
    double best_dist = std::numeric_limits<double>::infinity();
    for (Index j : arm) {
      const double dist = (match.row(i) - match.row(j)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    return best;
  };
  ImputedOutcomes out{VectorXd(raw.n()), VectorXd(raw.n())};
  for (Index i = 0; i < raw.n(); ++i) {
    const bool treated = raw.d[i] != 0.0;
    out.y1[i] = treated ? raw.y[i] : raw.y[nearest(i, arm1)];
    out.y0[i] = treated ? raw.y[nearest(i, arm0)] : raw.y[i];
  }
  return out;
}

SimResult impute_replay(const ExperimentData& raw, const MatrixXd& match, SimScenario scenario) {
  if (!scenario.propensity) {
    throw Error(ErrorCode::kConfig, "replay needs the counterfactual design's propensity");
  }
  const auto imputed = impute_outcomes(raw, match);
  SimDraw base;
  base.data = raw;
  base.data.uptake.reset();
  base.y1 = imputed.y1;
  base.y0 = imputed.y0;
  base.true_ate = (imputed.y1 - imputed.y0).mean();
  scenario.n = raw.n();
  scenario.dim_psi = raw.dim_psi();
  scenario.model_id = 0;
  if (!scenario.custom) scenario.custom = model_params(1, std::max<Index>(1, raw.dim_psi()));
  if (scenario.estimators.empty()) {
    for (auto id : {EstimatorId::kNaive, EstimatorId::kLin, EstimatorId::kFe, EstimatorId::kPlin,
                    EstimatorId::kGo, EstimatorId::kTom}) {
      scenario.estimators.push_back({id, false});
    }
  }
  return run_replications(scenario, [&](Index, Rng&) { return base; });
}

double oracle_semiparam(const ExperimentData& data, const VectorXd& f1, const VectorXd& f0,
                        double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kDegeneratePropensity, "propensity must lie in (0, 1)");
  }
  if (f1.size() != data.n() || f0.size() != data.n()) {
    throw Error(ErrorCode::kInvalidArgument, "outcome models need one value per unit");
  }
  const auto n = static_cast<double>(data.n());
  double total = (f1 - f0).sum();
  for (Index i = 0; i < data.n(); ++i) {
    if (data.d[i] != 0.0) {
      total += (data.y[i] - f1[i]) / p;
    } else {
      total -= (data.y[i] - f0[i]) / (1.0 - p);
    }
  }
  return total / n;
}

// ---- scenario documents ----------------------------------------------------

namespace {

using nlohmann::json;

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

json toml_value(const std::string& text, int line_no) {
  const std::string v = trim(text);
  auto fail = [&]() -> json {
    throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": cannot read value '" + v + "'");
  };
  if (v.empty()) return fail();
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') return fail();
    return v.substr(1, v.size() - 2);
  }
  if (v.front() == '[') {
    if (v.back() != ']') return fail();
    json arr = json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::string item;
    bool quoted = false;
    for (char c : inner) {
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) {
        if (!trim(item).empty()) arr.push_back(toml_value(item, line_no));
        item.clear();
      } else {
        item += c;
      }
    }
    if (!trim(item).empty()) arr.push_back(toml_value(item, line_no));
    return arr;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  try {
    std::size_t used = 0;
    if (v.find_first_of(".eE") == std::string::npos) {
      const long long i = std::stoll(v, &used);
      if (used == v.size()) return i;
    } else {
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    }
  } catch (const std::logic_error&) {
  }
  return fail();
}

json toml_to_json(const std::string& text) {
  json doc = json::object();
  json defaults = json::object();
  json scenarios = json::array();
  json* current = &defaults;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body == "[[scenario]]") {
      scenarios.push_back(json::object());
      current = &scenarios.back();
      continue;
    }
    if (body.front() == '[') {
      throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": unsupported table " + body);
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    (*current)[key] = toml_value(body.substr(eq + 1), line_no);
  }
  doc["defaults"] = defaults;
  doc["scenarios"] = scenarios;
  return doc;
}

const std::set<std::string> kScenarioKeys = {
    "name", "model", "n", "dim_psi", "prop", "estimators", "reps", "seed", "alpha", "ehw",
    "jobs", "design", "c0", "c1", "qh_scale", "q0_scale", "q1_scale", "l0_scale", "l1_scale",
    "lh_scale", "noise_variance"};

SimScenario scenario_from_json(const json& j, std::size_t index) {
  for (const auto& [key, value] : j.items()) {
    if (!kScenarioKeys.count(key)) {
      throw Error(ErrorCode::kConfig, "unknown scenario key '" + key + "'");
    }
  }
  try {
    SimScenario s;
    s.name = j.value("name", "scenario" + std::to_string(index + 1));
    if (j.contains("model")) {
      const auto& model = j.at("model");
      s.model_id = model.is_string() && model.get<std::string>() == "custom" ? 0 : model.get<int>();
    }
    s.n = j.value("n", s.n);
    s.dim_psi = j.value("dim_psi", s.dim_psi);
    if (j.contains("prop")) s.propensity = Propensity::parse(j.at("prop").get<std::string>());
    if (j.contains("estimators")) {
      const auto& list = j.at("estimators");
      std::vector<std::string> names;
      if (list.is_string()) {
        std::stringstream ss(list.get<std::string>());
        std::string item;
        while (std::getline(ss, item, ',')) names.push_back(trim(item));
      } else {
        names = list.get<std::vector<std::string>>();
      }
      for (const auto& name : names) s.estimators.push_back(parse_estimator_spec(name));
    } else {
      s.estimators = table_estimators();
    }
    s.reps = j.value("reps", s.reps);
    s.master_seed = j.value("seed", s.master_seed);
    s.alpha = j.value("alpha", s.alpha);
    s.ehw = j.value("ehw", s.ehw);
    s.jobs = j.value("jobs", s.jobs);
    const std::string design = j.value("design", std::string("matched"));
    if (design == "matched") {
      s.design = DesignKind::kMatched;
    } else if (design == "complete") {
      s.design = DesignKind::kComplete;
    } else {
      throw Error(ErrorCode::kConfig, "design must be 'matched' or 'complete'");
    }
    if (s.model_id == 0) {
      ModelParams p = model_params(1, s.dim_psi);
      const MatrixXd a = off_diagonal_ones(s.dim_psi);
      const VectorXd ones = VectorXd::Ones(s.dim_psi);
      p.c0 = j.value("c0", p.c0);
      p.c1 = j.value("c1", p.c1);
      if (j.contains("qh_scale")) p.q_h = j.at("qh_scale").get<double>() * a;
      if (j.contains("q0_scale")) p.q0 = j.at("q0_scale").get<double>() * a;
      if (j.contains("q1_scale")) p.q1 = j.at("q1_scale").get<double>() * a;
      if (j.contains("l0_scale")) p.l0 = j.at("l0_scale").get<double>() * ones;
      if (j.contains("l1_scale")) p.l1 = j.at("l1_scale").get<double>() * ones;
      if (j.contains("lh_scale")) p.l_h = j.at("lh_scale").get<double>() * ones;
      p.noise_variance = j.value("noise_variance", p.noise_variance);
      s.custom = p;
    } else {
      model_params(s.model_id, s.dim_psi);
    }
    if (s.reps < 1 || s.n < 2 || s.dim_psi < 1) {
      throw Error(ErrorCode::kConfig, "scenario '" + s.name + "': n, dim_psi and reps must be positive");
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("scenario: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, e.what());
  }
}

}  // namespace

std::vector<SimScenario> parse_scenarios(const std::string& text, bool toml) {
  json doc;
  if (toml) {
    doc = toml_to_json(text);
  } else {
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("config JSON: ") + e.what());
    }
  }
  json defaults = json::object();
  json list;
  if (doc.is_array()) {
    list = doc;
  } else if (doc.is_object() && doc.contains("scenarios")) {
    for (const auto& [key, value] : doc.items()) {
      if (key != "scenarios" && key != "defaults") {
        throw Error(ErrorCode::kConfig, "unknown top-level key '" + key + "'");
      }
    }
    if (doc.contains("defaults")) defaults = doc.at("defaults");
    list = doc.at("scenarios");
  } else if (doc.is_object()) {
    list = json::array({doc});
  } else {
    throw Error(ErrorCode::kConfig, "config must be an object or an array of scenarios");
  }
  if (list.empty()) {
    if (defaults.empty()) throw Error(ErrorCode::kConfig, "config defines no scenarios");
    list = json::array({json::object()});
  }
  std::vector<SimScenario> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    json merged = defaults;
    merged.update(list[i]);
    out.push_back(scenario_from_json(merged, i));
  }
  return out;
}

std::string result_to_csv(const std::vector<SimResult>& results) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "scenario,model,n,dim_psi,reps,failures,estimator,relative_mse,relative_mse_se,"
         "excess_risk,bias,bias_se,coverage,coverage_se,mean_ci_length,ci_length_change,"
         "ci_length_change_se,hc2_coverage,hc2_mean_ci_length,mean_v_hat,n_var_tau,mean_gamma_1,"
         "adaptive_lin_share\n";
  for (const auto& r : results) {
    for (const auto& m : r.metrics) {
      out << r.scenario << ',' << r.model_id << ',' << r.n << ',' << r.dim_psi << ',' << r.reps
          << ',' << r.failures << ',' << m.spec.label() << ',' << m.relative_mse << ','
          << m.relative_mse_se << ',' << m.excess_risk << ',' << m.bias << ',' << m.bias_se << ','
          << m.coverage << ',' << m.coverage_se << ',' << m.mean_ci_length << ','
          << m.ci_length_change << ',' << m.ci_length_change_se << ',';
      if (m.has_hc2) {
        out << m.hc2_coverage << ',' << m.hc2_mean_ci_length;
      } else {
        out << ',';
      }
      out << ',' << m.mean_v_hat << ',' << m.n_var_tau << ',';
      if (m.mean_gamma.size() > 0) out << m.mean_gamma[0];
      out << ',';
      if (m.adaptive_lin_share >= 0.0) out << m.adaptive_lin_share;
      out << '\n';
    }
  }
  return out.str();
}

std::string result_to_json(const std::vector<SimResult>& results) {
  json arr = json::array();
  for (const auto& r : results) {
    json jr;
    jr["scenario"] = r.scenario;
    jr["model"] = r.model_id;
    jr["n"] = r.n;
    jr["dim_psi"] = r.dim_psi;
    jr["reps"] = r.reps;
    jr["failures"] = r.failures;
    jr["seed"] = r.master_seed;
    json metrics = json::array();
    for (const auto& m : r.metrics) {
      json jm;
      jm["estimator"] = m.spec.label();
      jm["relative_mse"] = {{"value", m.relative_mse}, {"se", m.relative_mse_se}};
      jm["excess_risk"] = m.excess_risk;
      jm["bias"] = {{"value", m.bias}, {"se", m.bias_se}};
      jm["coverage"] = {{"value", m.coverage}, {"se", m.coverage_se}};
      jm["ci_length_change"] = {{"value", m.ci_length_change}, {"se", m.ci_length_change_se}};
      jm["mean_ci_length"] = m.mean_ci_length;
      if (m.has_hc2) {
        jm["hc2"] = {{"coverage", m.hc2_coverage}, {"mean_ci_length", m.hc2_mean_ci_length}};
      }
      jm["mean_v_hat"] = m.mean_v_hat;
      jm["n_var_tau"] = m.n_var_tau;
      jm["mean_gamma"] = std::vector<double>(m.mean_gamma.data(), m.mean_gamma.data() + m.mean_gamma.size());
      if (m.adaptive_lin_share >= 0.0) jm["adaptive_lin_share"] = m.adaptive_lin_share;
      metrics.push_back(jm);
    }
    jr["metrics"] = metrics;
    arr.push_back(jr);
  }
  return arr.dump(2);
}

}  // namespace stratarm
