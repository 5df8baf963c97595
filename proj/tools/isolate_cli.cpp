// Command-line pipeline: simulate cohorts, build risk-set matched designs,
// report covariate balance, and run gamma-sensitivity inference. All
// commands are deterministic given their input bytes.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "isolate/balance.hpp"
#include "isolate/config.hpp"
#include "isolate/errors.hpp"
#include "isolate/inference.hpp"
#include "isolate/io.hpp"
#include "isolate/matching.hpp"
#include "isolate/simulate.hpp"

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitBracket = 4;

int run_match(const std::string& cohort_path, const std::string& config_path,
              const std::string& out_design, std::string out_unmatched,
              int threads) {
  auto cohort = isolate::read_cohort_csv(isolate::read_file(cohort_path));
  auto config = isolate::parse_run_config(isolate::read_file(config_path));

  auto design = isolate::build_risk_set_match(
      cohort, isolate::make_eligibility(config),
      isolate::make_distance_spec(config), threads);
  if (design.sets.empty()) {
    std::cerr << "isolate match: no matched sets could be formed\n";
    return kExitInfeasible;
  }
  isolate::write_file(out_design, isolate::write_design_csv(design));
  if (out_unmatched.empty()) out_unmatched = out_design + ".unmatched.csv";
  isolate::write_file(out_unmatched, isolate::write_unmatched_csv(design));
  return 0;
}

int run_balance(const std::string& design_path, const std::string& cohort_path,
                const std::vector<std::string>& vars,
                const std::string& config_path, const std::string& out_table,
                const std::string& qq_outcome, const std::string& out_qq,
                const std::string& box_outcome, const std::string& out_box) {
  auto cohort = isolate::read_cohort_csv(isolate::read_file(cohort_path));
  auto design = isolate::read_design_csv(isolate::read_file(design_path));

  std::function<std::string(const isolate::HistoryView&, const std::string&)>
      resolver;
  if (!config_path.empty()) {
    auto config = isolate::parse_run_config(isolate::read_file(config_path));
    resolver = isolate::make_exact_resolver(config);
    design.config_echo.exact_variables = config.exact_variables;
    design.config_echo.set_size = config.set_size;
  }

  if (!vars.empty()) {
    auto table = isolate::balance_table(design, cohort, vars, resolver);
    isolate::write_file(out_table, isolate::write_balance_csv(table));
  }
  if (!qq_outcome.empty()) {
    auto points = isolate::qq_data(design, cohort, qq_outcome);
    isolate::write_file(out_qq, isolate::write_qq_json(qq_outcome, points));
  }
  if (!box_outcome.empty()) {
    auto groups = isolate::outcome_boxplot_data(design, cohort, box_outcome);
    isolate::write_file(out_box,
                        isolate::write_boxplot_json(box_outcome, groups));
  }
  return 0;
}

int run_infer(const std::string& design_path, const std::string& cohort_path,
              const std::string& outcome, const std::string& dose,
              const std::string& model, const std::string& gammas_arg,
              const std::string& config_path, const std::string& out_report,
              const std::string& out_table) {
  auto cohort = isolate::read_cohort_csv(isolate::read_file(cohort_path));
  auto design = isolate::read_design_csv(isolate::read_file(design_path));

  isolate::RunConfig config;
  if (!config_path.empty()) {
    config = isolate::parse_run_config(isolate::read_file(config_path));
  }
  auto options = isolate::make_inference_options(config);
  if (!gammas_arg.empty()) {
    options.gammas.clear();
    std::string cur;
    for (char c : gammas_arg + ",") {
      if (c == ',') {
        if (!cur.empty()) {
          char* end = nullptr;
          double g = std::strtod(cur.c_str(), &end);
          if (end == cur.c_str() || *end != '\0') {
            throw isolate::ConfigError("bad gamma value '" + cur + "'");
          }
          options.gammas.push_back(g);
        }
        cur.clear();
      } else {
        cur += c;
      }
    }
  }
  auto spec = isolate::make_statistic_spec(config);

  isolate::SensitivityReport report;
  if (model == "tobit") {
    report = isolate::infer_tobit(design, cohort, outcome, spec, options);
  } else if (model == "ratio") {
    if (dose.empty()) {
      throw isolate::ConfigError("--model ratio requires --dose");
    }
    report =
        isolate::infer_proportional(design, cohort, outcome, dose, spec, options);
  } else {
    throw isolate::ConfigError("--model must be tobit or ratio");
  }

  if (!out_report.empty()) {
    isolate::write_file(out_report, isolate::write_report_json(report));
  }
  if (!out_table.empty()) {
    isolate::write_file(out_table, isolate::write_report_csv(report));
  }
  return 0;
}

int run_simulate(const std::string& spec_path, const std::string& out_path,
                 const std::string& truth_path) {
  auto spec = isolate::parse_sim_spec(isolate::read_file(spec_path));
  auto result = isolate::simulate_cohort(spec);
  isolate::write_file(out_path, isolate::write_cohort_csv(result.cohort));
  if (!truth_path.empty()) {
    isolate::write_file(truth_path, isolate::write_truth_json(result.truth));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-set matching and gamma-sensitivity inference"};
  app.require_subcommand(1);

  std::string cohort_path, config_path, design_path, out_design, out_unmatched;
  std::string balance_table = "balance.csv";
  std::string report_table, out_report, outcome, dose, model, gammas;
  std::string qq_outcome = "", out_qq = "qq.json";
  std::string box_outcome = "", out_box = "boxplot.json";
  std::string spec_path, out_path, truth_path;
  std::vector<std::string> vars;
  int threads = 0;

  auto* match = app.add_subcommand("match", "Build a risk-set matched design");
  match->add_option("--cohort", cohort_path)->required();
  match->add_option("--config", config_path)->required();
  match->add_option("--out-design", out_design)->required();
  match->add_option("--out-unmatched", out_unmatched);
  match->add_option("--threads", threads);

  auto* balance = app.add_subcommand("balance", "Covariate balance reports");
  balance->add_option("--design", design_path)->required();
  balance->add_option("--cohort", cohort_path)->required();
  balance->add_option("--vars", vars)->delimiter(',');
  balance->add_option("--config", config_path);
  balance->add_option("--out-table", balance_table);
  balance->add_option("--qq-outcome", qq_outcome);
  balance->add_option("--out-qq", out_qq);
  balance->add_option("--box-outcome", box_outcome);
  balance->add_option("--out-box", out_box);

  auto* infer = app.add_subcommand("infer", "Gamma-sensitivity inference");
  infer->add_option("--design", design_path)->required();
  infer->add_option("--cohort", cohort_path)->required();
  infer->add_option("--outcome", outcome)->required();
  infer->add_option("--dose", dose);
  infer->add_option("--model", model)->required();
  infer->add_option("--gammas", gammas);
  infer->add_option("--config", config_path);
  infer->add_option("--out-report", out_report);
  infer->add_option("--out-table", report_table);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort");
  simulate->add_option("--spec", spec_path)->required();
  simulate->add_option("--out", out_path)->required();
  simulate->add_option("--truth", truth_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (match->parsed()) {
      return run_match(cohort_path, config_path, out_design, out_unmatched,
                       threads);
    }
    if (balance->parsed()) {
      return run_balance(design_path, cohort_path, vars, config_path,
                         balance_table, qq_outcome, out_qq, box_outcome,
                         out_box);
    }
    if (infer->parsed()) {
      return run_infer(design_path, cohort_path, outcome, dose, model, gammas,
                       config_path, out_report, report_table);
    }
    if (simulate->parsed()) {
      return run_simulate(spec_path, out_path, truth_path);
    }
  } catch (const isolate::SchemaError& e) {
    std::cerr << "isolate: schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const isolate::ConfigError& e) {
    std::cerr << "isolate: config error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const isolate::UnknownVariable& e) {
    std::cerr << "isolate: unknown variable: " << e.what() << "\n";
    return kExitSchema;
  } catch (const isolate::UnresolvableCovariate& e) {
    std::cerr << "isolate: unresolvable covariate: " << e.what() << "\n";
    return kExitSchema;
  } catch (const isolate::BracketFailure& e) {
    std::cerr << "isolate: estimating equation has no root in the expanded "
                 "bracket: "
              << e.what() << "\n";
    return kExitBracket;
  } catch (const isolate::ZeroDoseEffect& e) {
    std::cerr << "isolate: dose unaffected by treatment: " << e.what() << "\n";
    return kExitBracket;
  } catch (const isolate::EmptyDesign& e) {
    std::cerr << "isolate: empty design: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const isolate::Error& e) {
    std::cerr << "isolate: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
