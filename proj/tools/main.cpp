// stratarm command-line tool: design, estimate, simulate, replay.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "stratarm/adjust.hpp"
#include "stratarm/csv.hpp"
#include "stratarm/design.hpp"
#include "stratarm/inference.hpp"
#include "stratarm/montecarlo.hpp"
#include "stratarm/version.hpp"

using namespace stratarm;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitStratum = 3;
constexpr int kExitBudget = 4;
constexpr int kExitEstimation = 5;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kStratumTooSmall:
      return kExitStratum;
    case ErrorCode::kFailureBudget:
      return kExitBudget;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMissingColumn:
    case ErrorCode::kNonNumericCell:
    case ErrorCode::kNonBinaryTreatment:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kUnknownModel:
    case ErrorCode::kConfig:
    case ErrorCode::kIo:
      return kExitUsage;
    default:
      return kExitEstimation;
  }
}

struct Run {
  std::string invocation;
  std::optional<std::uint64_t> seed_flag;

  // Explicit --seed wins; STRATARM_SEED replaces only the default of 0.
  std::uint64_t seed() const {
    if (seed_flag) return *seed_flag;
    if (const char* env = std::getenv("STRATARM_SEED")) {
      try {
        std::size_t used = 0;
        const auto value = std::stoull(env, &used);
        if (used == std::string(env).size()) return value;
      } catch (const std::logic_error&) {
      }
      throw Error(ErrorCode::kConfig, std::string("STRATARM_SEED is not an integer: ") + env);
    }
    return 0;
  }

  json tool(std::uint64_t seed) const {
    return {{"name", "stratarm"},
            {"version", std::string(kVersion)},
            {"seed", seed},
            {"rng", std::string(Rng::kName)},
            {"invocation", invocation}};
  }

  std::string csv_banner(std::uint64_t seed) const {
    return "# stratarm " + std::string(kVersion) + " seed=" + std::to_string(seed) +
           " invocation=\"" + invocation + "\"\n";
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first != std::string::npos) items.push_back(item.substr(first, last - first + 1));
  }
  return items;
}

std::string fmt_num(double value, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << value;
  return out.str();
}

// ---- design ------------------------------------------------------------------

struct DesignArgs {
  std::string in, out, prop, coarse_col, prop_col;
  bool complete = false;
};

int cmd_design(const DesignArgs& args, const Run& run) {
  const auto seed = run.seed();
  const auto table = read_csv(args.in);
  CsvSchema schema;
  schema.require_outcome = false;
  schema.require_treatment = false;
  const auto data = to_experiment_data(table, schema);

  Design design;
  if (!args.prop_col.empty()) {
    std::vector<Propensity> props;
    const auto col = table.find(args.prop_col);
    if (!col) throw Error(ErrorCode::kMissingColumn, "column '" + args.prop_col + "' not found");
    for (const auto& row : table.rows) props.push_back(Propensity::parse(row[*col]));
    design = assign_varying_propensity(data.psi, props, seed);
  } else {
    if (args.prop.empty()) throw Error(ErrorCode::kConfig, "--prop a/k is required");
    const auto prop = Propensity::parse(args.prop);
    if (!args.coarse_col.empty()) {
      design = assign_coarse(table.integer(args.coarse_col), prop, seed);
      if (data.dim_psi() > 0) design.homogeneity_score = homogeneity_score(design.groups, data.psi);
    } else if (args.complete) {
      design = assign_complete(static_cast<Index>(table.rows.size()), prop, seed);
    } else {
      if (data.dim_psi() == 0) {
        throw Error(ErrorCode::kMissingColumn, "matched designs need psi_* columns");
      }
      design = assign_matched_tuples(data.psi, prop, seed);
    }
  }

  json doc = json::parse(design_to_json(design));
  doc["tool"] = run.tool(seed);
  const std::string text = doc.dump(2) + "\n";
  std::ostream& summary = args.out.empty() ? std::cerr : std::cout;
  if (args.out.empty()) {
    std::cout << text;
  } else {
    write_file(args.out, text);
  }
  summary << "groups: " << design.group_count() << "  leftover: " << design.leftover.size()
          << "  homogeneity_score: " << design.homogeneity_score
          << "  groups_hash: " << groups_hash(design.groups) << "\n";
  return 0;
}

// ---- estimate ------------------------------------------------------------------

struct EstimateArgs {
  std::string in, out, design, est, uptake_col, groups_col;
  double alpha = 0.05;
  bool with_z = false, ehw = false, late = false;
};

int cmd_estimate(const EstimateArgs& args, const Run& run) {
  const auto seed = run.seed();
  const auto table = read_csv(args.in);
  CsvSchema schema;
  if (!args.uptake_col.empty()) schema.uptake = args.uptake_col;
  if (args.late && !schema.uptake) throw Error(ErrorCode::kConfig, "--late needs --uptake-col");
  ExperimentData data = to_experiment_data(table, schema);
  data.validate();

  std::optional<Design> design;
  std::string design_source = "none";
  if (!args.design.empty()) {
    design = design_from_json(read_file(args.design));
    design_source = args.design;
  } else if (!args.groups_col.empty()) {
    design = design_from_labels(table.integer(args.groups_col), data.d);
    design_source = "column:" + args.groups_col;
  }
  std::vector<Index> units;
  if (design) {
    if (design->n_units != data.n()) {
      throw Error(ErrorCode::kDesignMismatch, "design has " + std::to_string(design->n_units) +
                                                  " units, data has " + std::to_string(data.n()));
    }
    // Realized treatments come from the data file; the design supplies groups.
    design->treatment = data.d;
    if (!design->leftover.empty()) {
      auto restricted = restrict_to_groups(data, *design);
      data = std::move(restricted.data);
      design = std::move(restricted.design);
    }
    check_design(data, *design);
  }

  std::vector<EstimatorId> ids;
  const std::string list = args.est.empty() ? (args.late ? "plin,go,tom" : "unadj,naive,lin,fe,plin,go,tom")
                                            : args.est;
  for (const auto& name : split_list(list)) ids.push_back(parse_estimator(name));

  std::optional<GroupPairing> pairing;
  if (design && design->constant_propensity() && design->group_count() >= 2) {
    pairing = pair_groups(*design, data.psi);
  }

  json rows = json::array();
  std::cout << std::left << std::setw(22) << "estimator" << std::right << std::setw(12) << "tau"
            << std::setw(12) << "se" << std::setw(26) << "ci" << "  gamma";
  if (args.ehw) std::cout << "  [hc2 se]";
  std::cout << "\n";
  for (const auto id : ids) {
    AdjustedEstimate est;
    std::optional<VarianceReport> exact;
    if (args.late) {
      if (!design) throw Error(ErrorCode::kDesignMismatch, "Wald estimators need a design");
      est = wald_late(data, *design, id, args.with_z);
      if (pairing) exact = late_variance(est, data, *design, *pairing, args.alpha);
    } else {
      est = estimate(id, data, design ? &*design : nullptr, args.with_z);
      if (pairing) exact = exact_variance(est, data, *design, *pairing, args.alpha);
    }
    std::optional<VarianceReport> hc2;
    if (args.ehw && est.regression) hc2 = ehw_hc2_variance(est, data, args.alpha);

    std::ostringstream gamma;
    for (Index j = 0; j < est.gamma_hat.size(); ++j) {
      gamma << (j ? "," : "") << fmt_num(est.gamma_hat[j]);
    }
    std::cout << std::left << std::setw(22) << est.label() << std::right << std::setw(12)
              << fmt_num(est.tau_hat);
    if (exact) {
      std::cout << std::setw(12) << fmt_num(exact->standard_error())
                << std::setw(26)
                << ("[" + fmt_num(exact->ci_low) + ", " + fmt_num(exact->ci_high) + "]");
    } else {
      std::cout << std::setw(12) << "-" << std::setw(26) << "-";
    }
    std::cout << "  " << (gamma.str().empty() ? "-" : gamma.str());
    if (args.ehw) std::cout << "  " << (hc2 ? fmt_num(hc2->standard_error()) : std::string("n/a"));
    std::cout << "\n";

    json row = json::parse(estimate_to_json(est));
    if (exact) row["exact"] = json::parse(variance_to_json(*exact));
    if (hc2) row["ehw_hc2"] = json::parse(variance_to_json(*hc2));
    rows.push_back(row);
  }

  if (!args.out.empty()) {
    json doc;
    doc["tool"] = run.tool(seed);
    doc["design"] = design_source;
    if (design) doc["groups_hash"] = groups_hash(design->groups);
    doc["alpha"] = args.alpha;
    doc["estimates"] = rows;
    write_file(args.out, doc.dump(2) + "\n");
  }
  if (design) std::cerr << "groups_hash: " << groups_hash(design->groups) << "\n";
  return 0;
}

// ---- simulate / replay -----------------------------------------------------------

void emit_results(std::vector<SimResult>& results, const std::string& out, const Run& run,
                  std::uint64_t seed) {
  compute_excess_risk(results);
  const std::string csv = run.csv_banner(seed) + result_to_csv(results);
  if (out.empty()) {
    std::cout << csv;
    return;
  }
  write_file(out + ".csv", csv);
  json doc;
  doc["tool"] = run.tool(seed);
  doc["results"] = json::parse(result_to_json(results));
  write_file(out + ".json", doc.dump(2) + "\n");
  std::cerr << "wrote " << out << ".csv and " << out << ".json\n";
}

struct SimulateArgs {
  std::string config, out;
  Index reps = 0;
  unsigned jobs = 0;
  bool ehw = false;
};

int cmd_simulate(const SimulateArgs& args, const Run& run) {
  const std::string text = read_file(args.config);
  const bool toml = args.config.size() > 5 && args.config.substr(args.config.size() - 5) == ".toml";
  auto scenarios = parse_scenarios(text, toml);
  const bool seed_given = run.seed_flag || std::getenv("STRATARM_SEED");
  const auto seed = run.seed();
  std::vector<SimResult> results;
  for (auto& s : scenarios) {
    if (args.reps > 0) s.reps = args.reps;
    if (args.jobs > 0) s.jobs = args.jobs;
    if (seed_given) s.master_seed = seed;
    if (args.ehw) s.ehw = true;
    std::cerr << "scenario " << s.name << ": model " << s.model_id << ", n " << s.n << ", m "
              << s.dim_psi << ", reps " << s.reps << "\n";
    results.push_back(run_scenario(s));
  }
  emit_results(results, args.out, run, seed_given ? seed : scenarios.front().master_seed);
  return 0;
}

struct ReplayArgs {
  std::string in, out, design = "matched:1/2", est, match_cols = "psi,h";
  Index reps = 200;
  unsigned jobs = 0;
  bool with_z = false;
};

int cmd_replay(const ReplayArgs& args, const Run& run) {
  const auto seed = run.seed();
  const auto data = load_csv(args.in);
  const auto colon = args.design.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kConfig, "--design expects kind:a/k");
  SimScenario scenario;
  scenario.name = "replay";
  const std::string kind = args.design.substr(0, colon);
  if (kind == "matched") {
    scenario.design = DesignKind::kMatched;
  } else if (kind == "complete") {
    scenario.design = DesignKind::kComplete;
  } else {
    throw Error(ErrorCode::kConfig, "unknown design kind '" + kind + "'");
  }
  scenario.propensity = Propensity::parse(args.design.substr(colon + 1));
  scenario.reps = args.reps;
  scenario.jobs = args.jobs;
  scenario.master_seed = seed;
  for (const auto& name : split_list(args.est.empty() ? "naive,lin,fe,plin,go,tom" : args.est)) {
    scenario.estimators.push_back(parse_estimator_spec(args.with_z ? name + "+z" : name));
  }
  MatrixXd match(data.n(), 0);
  for (const auto& block : split_list(args.match_cols)) {
    const MatrixXd* part = block == "psi" ? &data.psi : block == "h" ? &data.h : block == "z" ? &data.z : nullptr;
    if (!part) throw Error(ErrorCode::kConfig, "--match-cols takes psi, h and z");
    MatrixXd grown(data.n(), match.cols() + part->cols());
    grown << match, *part;
    match = std::move(grown);
  }
  std::vector<SimResult> results{impute_replay(data, match, scenario)};
  emit_results(results, args.out, run, seed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Run run;
  for (int i = 0; i < argc; ++i) run.invocation += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Stratified experiment design, covariate-adjusted ATE estimation and inference"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::uint64_t seed_value = 0;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_value, "Random seed (default 0, or STRATARM_SEED)");
  };

  DesignArgs design_args;
  auto* design = app.add_subcommand("design", "Assign treatments from a covariate CSV");
  design->add_option("--in", design_args.in, "CSV with psi_* columns")->required();
  design->add_option("--out", design_args.out, "Design JSON output (default stdout)");
  design->add_option("--prop", design_args.prop, "Propensity a/k");
  design->add_option("--coarse-col", design_args.coarse_col, "Integer stratum column");
  design->add_option("--prop-col", design_args.prop_col, "Per-unit a/k column (varying propensity)");
  design->add_flag("--complete", design_args.complete, "Complete randomization");
  add_seed(design);

  EstimateArgs est_args;
  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate the ATE from a completed experiment");
  estimate_cmd->add_option("--in", est_args.in, "CSV with y, d, psi_*, h_*, z_*")->required();
  estimate_cmd->add_option("--out", est_args.out, "JSON output");
  estimate_cmd->add_option("--design", est_args.design, "Design JSON from `design`");
  estimate_cmd->add_option("--groups-col", est_args.groups_col, "Integer group column");
  estimate_cmd->add_option("--est", est_args.est, "Comma-separated estimators");
  estimate_cmd->add_flag("--with-z", est_args.with_z, "Add strata controls z_*");
  estimate_cmd->add_option("--alpha", est_args.alpha, "CI level is 1 - alpha");
  estimate_cmd->add_flag("--ehw", est_args.ehw, "Add HC2 standard errors");
  estimate_cmd->add_flag("--late", est_args.late, "Adjusted Wald (LATE) estimators");
  estimate_cmd->add_option("--uptake-col", est_args.uptake_col, "Treatment uptake column");
  add_seed(estimate_cmd);

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run Monte Carlo scenarios");
  simulate->add_option("--config", sim_args.config, "Scenario file (.json or .toml)")->required();
  simulate->add_option("--out", sim_args.out, "Output prefix for .csv and .json");
  simulate->add_option("--reps", sim_args.reps, "Override replications");
  simulate->add_option("--jobs", sim_args.jobs, "Worker threads");
  simulate->add_flag("--ehw", sim_args.ehw, "Also score HC2 intervals");
  add_seed(simulate);

  ReplayArgs replay_args;
  auto* replay = app.add_subcommand("replay", "Replay counterfactual designs on imputed outcomes");
  replay->add_option("--in", replay_args.in, "Completed experiment CSV")->required();
  replay->add_option("--out", replay_args.out, "Output prefix for .csv and .json");
  replay->add_option("--design", replay_args.design, "matched:a/k or complete:a/k");
  replay->add_option("--reps", replay_args.reps, "Replications");
  replay->add_option("--jobs", replay_args.jobs, "Worker threads");
  replay->add_option("--est", replay_args.est, "Comma-separated estimators");
  replay->add_flag("--with-z", replay_args.with_z, "Strata-control variants");
  replay->add_option("--match-cols", replay_args.match_cols, "Imputation columns: psi,h,z");
  add_seed(replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  for (auto* sub : {design, estimate_cmd, simulate, replay}) {
    if (sub->parsed() && sub->count("--seed") > 0) run.seed_flag = seed_value;
  }

  try {
    if (design->parsed()) return cmd_design(design_args, run);
    if (estimate_cmd->parsed()) return cmd_estimate(est_args, run);
    if (simulate->parsed()) return cmd_simulate(sim_args, run);
    if (replay->parsed()) return cmd_replay(replay_args, run);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  return kExitUsage;
}
