// stabconf: conformal prediction regions, stability-based coverage bounds,
// and Monte Carlo validation experiments from the command line.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 internal error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "stabconf/bounds.hpp"
#include "stabconf/conformal.hpp"
#include "stabconf/dataset.hpp"
#include "stabconf/ridge.hpp"
#include "stabconf/simlab.hpp"
#include "stabconf/trainer.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct CliError : std::runtime_error {
  int code;
  CliError(int code_, const std::string& what_)
      : std::runtime_error(what_), code(code_) {}
};

std::string human4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw CliError(kExitConfig, "--x: non-numeric component '" + item + "'");
    }
  }
  if (out.empty()) throw CliError(kExitConfig, "--x: empty vector");
  return out;
}

std::vector<long long> parse_n_list(const std::string& text) {
  std::vector<long long> out;
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    // "1e3:1e7" scans whole decades.
    const double lo = std::stod(text.substr(0, colon));
    const double hi = std::stod(text.substr(colon + 1));
    if (!(lo >= 2.0) || !(hi >= lo))
      throw CliError(kExitConfig, "--n range: need 2 <= lo <= hi");
    for (double v = lo; v <= hi * (1.0 + 1e-12); v *= 10.0)
      out.push_back(static_cast<long long>(std::llround(v)));
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const double v = std::stod(item);
      out.push_back(static_cast<long long>(std::llround(v)));
    }
  }
  if (out.empty()) throw CliError(kExitConfig, "--n: empty list");
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw stabconf::DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw stabconf::DataError("cannot write '" + path + "'");
  out << content;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string method;
  double alpha = 0.1;
  std::string data_path;
  std::string cal_path;
  std::string x_text;
  double b = 1.0;
  double B = 1.0;
  std::string trainer_name = "ridge";
  double lambda = 1.0;
  std::string penalty = "per_sample";
  double epsilon = 0.0;
  std::size_t folds = 5;
  std::size_t grid_n = 2001;
  double grid_margin = 1.0;
  std::optional<double> grid_lo, grid_hi;
  bool exact = false;
  std::string out_path;
};

stabconf::Trainer make_trainer(const PredictArgs& args) {
  if (args.trainer_name == "ridge")
    return stabconf::ridge_trainer(
        {args.lambda, stabconf::ridge::penalty_from_string(args.penalty)});
  if (args.trainer_name == "mean") return stabconf::mean_trainer();
  throw CliError(kExitConfig, "--trainer: expected 'ridge' or 'mean', got '" +
                                  args.trainer_name + "'");
}

int run_predict(const PredictArgs& args) {
  using namespace stabconf;
  const DomainBounds dom{args.b, args.B};
  const Dataset data = load_csv(args.data_path, dom);
  const std::vector<double> x = parse_vector(args.x_text);
  if (x.size() != data.dim())
    throw CliError(kExitConfig, "--x: dimension " + std::to_string(x.size()) +
                                    " does not match data dimension " +
                                    std::to_string(data.dim()));
  const Trainer trainer = make_trainer(args);

  std::string region_json;
  std::string summary;
  if (args.method == "split") {
    if (args.cal_path.empty())
      throw CliError(kExitConfig, "--cal-data is required for method 'split'");
    const Dataset cal = load_csv(args.cal_path, dom);
    const auto region = conformal::split_conformal(data, cal, x, args.alpha, trainer);
    region_json = conformal::to_json(region, args.method, args.alpha);
    summary = "[" + human4(region.lo()) + ", " + human4(region.hi()) + "]";
    if (region.is_entire())
      std::cerr << "warning: region is (-inf, inf); alpha below 1/(n_cal+1)\n";
  } else if (args.method == "full") {
    conformal::GridSpec grid =
        conformal::GridSpec::around(args.B, args.grid_margin, args.grid_n);
    if (args.grid_lo) grid.lo = *args.grid_lo;
    if (args.grid_hi) grid.hi = *args.grid_hi;
    grid.validate();
    if (args.exact) {
      if (args.trainer_name != "ridge")
        throw CliError(kExitConfig, "--exact requires --trainer ridge");
      const auto region = conformal::full_conformal_ridge_exact(
          data, x, args.alpha,
          {args.lambda, ridge::penalty_from_string(args.penalty)});
      region_json = conformal::to_json(region, "full_exact", args.alpha);
      std::ostringstream ss;
      for (const auto& part : region.parts())
        ss << "[" << human4(part.lo()) << ", " << human4(part.hi()) << "] ";
      summary = ss.str();
    } else {
      const auto region = conformal::full_conformal(data, x, args.alpha, trainer, grid);
      region_json = conformal::to_json(region, args.method, args.alpha);
      std::size_t accepted = 0;
      for (char a : region.accepted) accepted += a ? 1 : 0;
      summary = std::to_string(accepted) + "/" +
                std::to_string(region.grid.size()) + " grid points accepted" +
                " (resolution " + human4(region.resolution()) + ")";
    }
  } else {
    conformal::IntervalRegion region = conformal::IntervalRegion(0, 0);
    if (args.method == "jackknife+") {
      region = conformal::jackknife_plus(data, x, args.alpha, trainer);
    } else if (args.method == "jackknife+eps") {
      region = conformal::jackknife_plus_inflated(data, x, args.alpha,
                                                  args.epsilon, trainer);
    } else if (args.method == "jackknife") {
      region = conformal::jackknife_baseline(data, x, args.alpha, trainer);
    } else if (args.method == "cv+") {
      region = conformal::cv_plus(data, x, args.alpha, args.folds, trainer);
    } else {
      throw CliError(kExitConfig, "--method: unknown method '" + args.method + "'");
    }
    region_json = conformal::to_json(region, args.method, args.alpha);
    summary = "[" + human4(region.lo()) + ", " + human4(region.hi()) + "]";
    if (region.is_entire())
      std::cerr << "warning: region is (-inf, inf); alpha below 1/(n+1)\n";
  }

  if (!args.out_path.empty()) write_file(args.out_path, region_json + "\n");
  std::cout << args.method << " region at alpha=" << human4(args.alpha) << ": "
            << summary << "\n";
  if (args.out_path.empty()) std::cout << region_json << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bound / compare
// ---------------------------------------------------------------------------

struct BoundArgs {
  std::string name;
  double alpha = 0.1;
  double eps = 0.05;
  double delta = 0.05;
  std::string n_text = "1000";
  int p = 1;
  double b = 1.0;
  double B = 1.0;
  double lambda = 1.0;
  std::optional<double> L;
  std::optional<long long> m;
  std::optional<long long> K;
  double gamma = 0.1;
  std::string variant = "out";
  std::string out_path;
};

stabconf::ridge::StabilityProfile profile_from(const BoundArgs& args) {
  auto profile =
      stabconf::ridge::stability_constants(args.p, args.b, args.B, args.lambda);
  if (args.L) {
    const double L = *args.L;
    if (!(L > 0.0)) throw CliError(kExitConfig, "--L must be positive");
    profile.L = [L](long long) { return L; };
  }
  return profile;
}

int run_bound(const BoundArgs& args) {
  using namespace stabconf;
  const auto profile = profile_from(args);

  if (args.name == "compare") {
    const auto n_list = parse_n_list(args.n_text);
    const auto table = bounds::rate_comparison_table(
        n_list, profile, args.alpha, args.eps, args.delta, args.gamma);
    const std::string csv = table.to_csv();
    if (!args.out_path.empty()) write_file(args.out_path, csv);
    std::cout << csv;
    if (table.crossover_n)
      std::cout << "# crossover_n," << *table.crossover_n << "\n";
    else
      std::cout << "# crossover_n,none\n";
    return kExitOk;
  }

  if (args.name == "bianbarber") {
    if (!args.m || !args.K)
      throw CliError(kExitConfig, "bianbarber needs --m and --K");
    const double t = bounds::bian_barber_cv_bound(args.alpha, *args.K, *args.m,
                                                  args.delta);
    json j;
    j["name"] = "bian_barber";
    j["threshold"] = t;
    j["failure_prob"] = args.delta;
    j["vacuous"] = !(t < 1.0);
    const std::string text = j.dump();
    if (!args.out_path.empty()) write_file(args.out_path, text + "\n");
    std::cout << "bian_barber threshold " << human4(t) << " at failure prob "
              << human4(args.delta) << (t < 1.0 ? "" : " (vacuous)") << "\n"
              << text << "\n";
    return kExitOk;
  }

  bounds::Inputs in;
  in.alpha = args.alpha;
  in.eps = args.eps;
  in.delta = args.delta;
  in.n = std::stoll(args.n_text);
  in.profile = profile;
  in.m = args.m;
  in.K = args.K;
  in.gamma = args.gamma;

  bounds::Report report;
  if (args.name == "theorem1") {
    report = bounds::jackknife_plus_bound(in);
  } else if (args.name == "theorem2") {
    report = bounds::full_conformal_bound(in);
  } else if (args.name == "corollary1") {
    report = bounds::cv_plus_bound(in);
  } else if (args.name == "liangbarber") {
    const auto variant = args.variant == "in"
                             ? bounds::LiangBarberVariant::FullConformalIn
                             : bounds::LiangBarberVariant::JackknifePlus;
    report = bounds::liang_barber_bound(in, variant);
  } else {
    throw CliError(kExitConfig, "--name: unknown bound '" + args.name + "'");
  }

  const std::string text = report.to_json();
  if (!args.out_path.empty()) write_file(args.out_path, text + "\n");
  std::cout << report.name << ": P(P_e > " << human4(report.threshold)
            << ") <= " << human4(report.failure_prob)
            << (report.vacuous ? " (vacuous)" : "") << "\n"
            << text << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

struct ExperimentArgs {
  std::string config_path;
  std::optional<unsigned> workers;
  std::string out_json;
  std::string out_csv;
};

int run_experiment(const ExperimentArgs& args) {
  using namespace stabconf;
  const std::string text = read_file(args.config_path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CliError(kExitConfig,
                   std::string("config: JSON parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type"))
    throw CliError(kExitConfig, "config: top-level 'type' key required");
  const std::string type = j.at("type").get<std::string>();

  std::string seed_source = "config";
  if (const char* env = std::getenv("STABCONF_SEED")) {
    try {
      j["seed"] = static_cast<std::uint64_t>(std::stoull(env));
    } catch (const std::exception&) {
      throw CliError(kExitConfig, "STABCONF_SEED: not a valid unsigned integer");
    }
    seed_source = "env:STABCONF_SEED";
    std::cerr << "note: seed overridden by STABCONF_SEED\n";
  }
  if (args.workers) j["workers"] = *args.workers;

  std::string out_json = args.out_json;
  std::string out_csv = args.out_csv;
  if (out_json.empty() && j.contains("out_json"))
    out_json = j.at("out_json").get<std::string>();
  if (out_csv.empty() && j.contains("out_csv"))
    out_csv = j.at("out_csv").get<std::string>();

  std::string report_json, report_csv, headline;
  if (type == "coverage") {
    const auto config = simlab::coverage_config_from_json(j.dump());
    const auto report = simlab::coverage_experiment(config);
    json out = json::parse(report.to_json());
    out["seed_source"] = seed_source;
    report_json = out.dump();
    report_csv = report.to_csv();
    headline = "coverage " + report.method + ": mean P_e = " +
               human4(report.mean_pe) + " (se " + human4(report.se_mean) +
               ") over " + std::to_string(report.trials) + " trials";
  } else if (type == "concentration") {
    const auto config = simlab::concentration_config_from_json(j.dump());
    const auto table = simlab::concentration_experiment(config);
    json out = json::parse(table.to_json());
    out["seed_source"] = seed_source;
    report_json = out.dump();
    report_csv = table.to_csv();
    headline = "concentration " + table.target + ": " +
               std::to_string(table.rows.size()) + " rows, n = " +
               std::to_string(table.n);
  } else if (type == "rate") {
    const auto config = simlab::rate_config_from_json(j.dump());
    const auto table = simlab::rate_experiment(config);
    json out;
    out["config_hash"] = table.config_hash;
    out["base_seed"] = table.base_seed;
    out["seed_source"] = seed_source;
    if (table.crossover_n) out["crossover_n"] = *table.crossover_n;
    report_json = out.dump();
    report_csv = table.to_csv();
    headline = "rate experiment: " + std::to_string(table.rows.size()) +
               " sample sizes" +
               (table.crossover_n
                    ? ", crossover n* = " + std::to_string(*table.crossover_n)
                    : "");
  } else {
    throw CliError(kExitConfig, "config: unknown type '" + type + "'");
  }

  if (!out_json.empty()) write_file(out_json, report_json + "\n");
  if (!out_csv.empty()) write_file(out_csv, report_csv);
  std::cout << headline << "\n";
  if (out_json.empty() && out_csv.empty()) std::cout << report_json << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal prediction regions with stability-based "
               "training-conditional coverage bounds"};
  app.require_subcommand(1);
  bool json_errors = false;
  app.add_flag("--json-errors", json_errors,
               "emit structured error JSON on stderr");

  PredictArgs predict;
  auto* cmd_predict = app.add_subcommand("predict", "construct a prediction region");
  cmd_predict->add_option("--method", predict.method,
                          "split|full|jackknife|jackknife+|jackknife+eps|cv+")
      ->required();
  cmd_predict->add_option("--alpha", predict.alpha, "miscoverage level")->required();
  cmd_predict->add_option("--data", predict.data_path, "training CSV")->required();
  cmd_predict->add_option("--cal-data", predict.cal_path, "calibration CSV (split)");
  cmd_predict->add_option("--x", predict.x_text, "test point, comma separated")
      ->required();
  cmd_predict->add_option("--b", predict.b, "feature ball radius");
  cmd_predict->add_option("--B", predict.B, "response box bound");
  cmd_predict->add_option("--trainer", predict.trainer_name, "ridge|mean");
  cmd_predict->add_option("--lambda", predict.lambda, "ridge regularization");
  cmd_predict->add_option("--penalty", predict.penalty, "per_sample|fixed_total");
  cmd_predict->add_option("--epsilon", predict.epsilon, "jackknife+eps inflation");
  cmd_predict->add_option("--k", predict.folds, "cv+ fold count");
  cmd_predict->add_option("--grid-n", predict.grid_n, "full-conformal grid size");
  cmd_predict->add_option("--grid-margin", predict.grid_margin,
                          "grid margin beyond [-B, B]");
  double grid_lo = 0.0, grid_hi = 0.0;
  auto* opt_lo = cmd_predict->add_option("--grid-lo", grid_lo, "grid lower edge");
  auto* opt_hi = cmd_predict->add_option("--grid-hi", grid_hi, "grid upper edge");
  cmd_predict->add_flag("--exact", predict.exact, "exact ridge region (full)");
  cmd_predict->add_option("--out", predict.out_path, "region JSON output path");

  BoundArgs bound;
  auto* cmd_bound = app.add_subcommand("bound", "evaluate a coverage bound");
  cmd_bound->add_option("--name", bound.name,
                        "theorem1|theorem2|corollary1|bianbarber|liangbarber|compare")
      ->required();
  cmd_bound->add_option("--alpha", bound.alpha, "miscoverage level");
  cmd_bound->add_option("--eps", bound.eps, "epsilon split");
  cmd_bound->add_option("--delta", bound.delta, "delta split");
  cmd_bound->add_option("--n", bound.n_text, "sample size (compare: list or lo:hi)");
  cmd_bound->add_option("--p", bound.p, "model dimension");
  cmd_bound->add_option("--b", bound.b, "feature ball radius");
  cmd_bound->add_option("--B", bound.B, "response box bound");
  cmd_bound->add_option("--lambda", bound.lambda, "ridge regularization");
  double L_value = 0.0;
  auto* opt_L = cmd_bound->add_option("--L", L_value, "residual density bound");
  long long m_value = 0;
  auto* opt_m = cmd_bound->add_option("--m", m_value, "fold/augmentation size");
  long long K_value = 0;
  auto* opt_K = cmd_bound->add_option("--K", K_value, "fold count");
  cmd_bound->add_option("--gamma", bound.gamma, "inflation (liangbarber/compare)");
  cmd_bound->add_option("--variant", bound.variant, "out|in (liangbarber)");
  cmd_bound->add_option("--out", bound.out_path, "output path");

  ExperimentArgs experiment;
  auto* cmd_experiment =
      app.add_subcommand("experiment", "run a Monte Carlo experiment from JSON");
  cmd_experiment->add_option("--config", experiment.config_path, "config JSON path")
      ->required();
  unsigned workers_value = 0;
  auto* opt_workers =
      cmd_experiment->add_option("--workers", workers_value, "worker threads");
  cmd_experiment->add_option("--out-json", experiment.out_json, "report JSON path");
  cmd_experiment->add_option("--out-csv", experiment.out_csv, "report CSV path");

  BoundArgs compare;
  compare.name = "compare";
  auto* cmd_compare =
      app.add_subcommand("compare", "rate comparison table across sample sizes");
  cmd_compare->add_option("--n", compare.n_text, "n list or lo:hi decades");
  cmd_compare->add_option("--alpha", compare.alpha, "miscoverage level");
  cmd_compare->add_option("--eps", compare.eps, "epsilon split");
  cmd_compare->add_option("--delta", compare.delta, "delta split");
  cmd_compare->add_option("--p", compare.p, "model dimension");
  cmd_compare->add_option("--b", compare.b, "feature ball radius");
  cmd_compare->add_option("--B", compare.B, "response box bound");
  cmd_compare->add_option("--lambda", compare.lambda, "ridge regularization");
  double cmp_L = 0.0;
  auto* opt_cmp_L = cmd_compare->add_option("--L", cmp_L, "residual density bound");
  cmd_compare->add_option("--gamma", compare.gamma, "Liang-Barber inflation");
  cmd_compare->add_option("--out", compare.out_path, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const auto emit_error = [&](int code, const char* type, const std::string& msg) {
    if (json_errors) {
      json j;
      j["type"] = type;
      j["message"] = msg;
      std::cerr << j.dump() << "\n";
    } else {
      std::cerr << "error: " << msg << "\n";
    }
    return code;
  };

  try {
    if (cmd_predict->parsed()) {
      if (*opt_lo) predict.grid_lo = grid_lo;
      if (*opt_hi) predict.grid_hi = grid_hi;
      return run_predict(predict);
    }
    if (cmd_bound->parsed()) {
      if (*opt_L) bound.L = L_value;
      if (*opt_m) bound.m = m_value;
      if (*opt_K) bound.K = K_value;
      return run_bound(bound);
    }
    if (cmd_experiment->parsed()) {
      if (*opt_workers) experiment.workers = workers_value;
      return run_experiment(experiment);
    }
    if (cmd_compare->parsed()) {
      if (*opt_cmp_L) compare.L = cmp_L;
      return run_bound(compare);
    }
    return emit_error(kExitConfig, "config", "no subcommand given");
  } catch (const CliError& e) {
    const char* type = e.code == kExitData ? "data" : "config";
    return emit_error(e.code, type, e.what());
  } catch (const stabconf::DataError& e) {
    return emit_error(kExitData, "data", e.what());
  } catch (const std::invalid_argument& e) {
    return emit_error(kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return emit_error(kExitInternal, "internal", e.what());
  }
}
