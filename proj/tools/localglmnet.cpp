// localglmnet: fit and interpret LocalGLMnet regression models.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lgn/commands.hpp"

namespace {

using lgn::cli::FitOptions;
using lgn::cli::ReportOptions;

void add_fit_options(CLI::App& cmd, FitOptions& o, std::string& truth) {
  cmd.add_option("--learn", o.learn, "Learning data CSV")->required();
  cmd.add_option("--test", o.test, "Test data CSV (out-of-sample losses are NA without it)");
  cmd.add_option("--schema", o.schema, "Column schema file")->required();
  cmd.add_option("--spec", o.spec, "Model architecture file");
  cmd.add_option("--train-config", o.train_config, "Training configuration file");
  cmd.add_option("--out", o.out_dir, "Output directory")->required();
  cmd.add_option("--seed", o.seed, "Seed (overrides the training configuration)");
  cmd.add_option("--truth", truth, "Known true mean: none or synthetic")
      ->check(CLI::IsMember({"none", "synthetic"}));
  cmd.add_option("--control", o.control, "Control column: none, normal or uniform")
      ->check(CLI::IsMember({"none", "normal", "uniform"}));
}

void add_model_options(CLI::App& cmd, ReportOptions& o) {
  cmd.add_option("--model", o.model, "Fitted model file (model.json)")->required();
  cmd.add_option("--data", o.data, "Data CSV to interpret on")->required();
  cmd.add_option("--schema", o.schema, "Column schema file")->required();
  cmd.add_option("--out", o.out_dir, "Output directory")->required();
  cmd.add_option("--seed", o.seed, "Seed for the control column and the plot subsample");
  cmd.add_option("--interactions", o.interactions,
                 "Focal features for interaction profiles (default: all non one-hot)")
      ->delimiter(',');
  cmd.add_option("--knots", o.smoother.interior_knots, "Interior spline knots");
  cmd.add_option("--lambda", o.smoother.lambda, "Spline roughness penalty");
  cmd.add_option("--grid", o.smoother.grid_points, "Points per smoothed curve");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LocalGLMnet: regression with interpretable, feature-dependent GLM coefficients"};
  app.require_subcommand(1);

  lgn::cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic Gaussian example");
  synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--n-learn", synth.n_learn, "Learning instances");
  synth_cmd->add_option("--n-test", synth.n_test, "Test instances");
  synth_cmd->add_option("--seed", synth.seed, "Seed");

  FitOptions fit;
  std::string fit_truth = "none";
  auto* fit_cmd = app.add_subcommand("fit", "Fit null, GLM and LocalGLMnet models");
  add_fit_options(*fit_cmd, fit, fit_truth);

  FitOptions refit;
  std::string refit_truth = "none";
  refit.control = "none";
  auto* refit_cmd =
      app.add_subcommand("drop-refit", "Refit LocalGLMnet without the listed features");
  add_fit_options(*refit_cmd, refit, refit_truth);
  refit_cmd->add_option("--drop", refit.drop, "Features or categorical columns to drop")
      ->required()
      ->delimiter(',');

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Variable selection, importance and plots");
  add_model_options(*report_cmd, report);
  report_cmd->add_option("--alpha", report.alpha, "Significance level of the selection test");
  report_cmd->add_option("--margin", report.margin,
                         "Droppable when at most margin*alpha of attentions lie outside");
  report_cmd->add_option("--sample", report.sample, "Instances shown in scatter plots");
  report_cmd->add_option("--control", report.control,
                         "Feature that sizes the selection interval (default: the control column)");

  ReportOptions inter;
  auto* inter_cmd = app.add_subcommand("interactions", "Smoothed attention gradients");
  add_model_options(*inter_cmd, inter);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lgn::cli::kExitConfig;
  }

  try {
    if (*synth_cmd) {
      lgn::cli::run_synth(synth, std::cerr);
    } else if (*fit_cmd) {
      fit.truth = fit_truth == "synthetic" ? lgn::cli::Truth::Synthetic : lgn::cli::Truth::None;
      lgn::cli::run_fit(fit, std::cerr);
    } else if (*refit_cmd) {
      refit.truth = refit_truth == "synthetic" ? lgn::cli::Truth::Synthetic : lgn::cli::Truth::None;
      lgn::cli::run_fit(refit, std::cerr);
    } else if (*report_cmd) {
      lgn::cli::run_report(report, std::cerr);
    } else if (*inter_cmd) {
      lgn::cli::run_interactions(inter, std::cerr);
    }
  } catch (const std::exception& e) {
    const auto [code, label] = lgn::cli::classify(std::current_exception());
    std::cerr << "localglmnet: " << label << ": " << e.what() << '\n';
    return code;
  }
  return lgn::cli::kExitOk;
}
