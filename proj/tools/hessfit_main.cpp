#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "hessfit/io.hpp"

using namespace hessfit;

int main(int argc, char** argv) {
  CLI::App app{"Local-PCA quadratic-fit Hessian estimation on manifold point clouds"};
  app.require_subcommand(1);

  std::string config_path, out, fvals_out, out_prefix;

  auto* sample_cmd = app.add_subcommand(
      "sample", "Draw a point cloud from a model/density config and write CSV");
  sample_cmd->add_option("--config", config_path,
                         "JSON config {model, params, density, field, n, seed}")
      ->required();
  sample_cmd->add_option("--out", out, "output cloud CSV")->required();
  sample_cmd->add_option("--fvals-out", fvals_out,
                         "also write field values (needs \"field\" in the config)");

  auto* est_cmd = app.add_subcommand(
      "estimate", "Estimate f, grad and Hess at one query point");
  EstimateConfig ec;
  est_cmd->add_option("--cloud", ec.cloud_path, "point cloud CSV")->required();
  est_cmd->add_option("--fvals", ec.fvals, "fvals CSV or a catalog field name")
      ->required();
  est_cmd->add_option("--z", ec.z, "comma-separated coordinates or index:<i>")
      ->required();
  est_cmd->add_option("--eps", ec.eps, "neighborhood radius")->required();
  est_cmd->add_option("--dim", ec.dim, "intrinsic dimension d")->required();
  est_cmd->add_option("--out", ec.out_path, "output JSON")->required();

  auto* mom_cmd = app.add_subcommand(
      "moments", "Closed forms vs quadrature vs Monte Carlo for the moment oracles");
  MomentsConfig mc;
  mom_cmd->add_option("--d", mc.d, "dimension")->required();
  mom_cmd->add_option("--delta", mc.delta, "truncation parameter in [0,1)")->required();
  mom_cmd->add_option("--eps", mc.eps, "ball radius for the Greeks")->required();
  mom_cmd->add_option("--report", mc.report_path, "output CSV")->required();
  mom_cmd->add_option("--mc-samples", mc.mc_samples, "Monte Carlo sample count");
  mom_cmd->add_option("--seed", mc.seed, "Monte Carlo seed");

  auto* gram_cmd = app.add_subcommand(
      "gram", "Empirical Gram matrix deviation experiment");
  gram_cmd->add_option("--config", config_path, "JSON gram config")->required();
  gram_cmd->add_option("--out", out, "output CSV")->required();

  auto* conv_cmd = app.add_subcommand(
      "converge", "Error-vs-eps convergence experiment");
  conv_cmd->add_option("--config", config_path, "JSON convergence config")->required();
  conv_cmd->add_option("--out-prefix", out_prefix, "output path prefix")->required();

  CLI11_PARSE(app, argc, argv);

  RunConfig rc;
  try {
    if (sample_cmd->parsed()) {
      rc.sub = Subcommand::Sample;
      rc.sample = parse_sample_config(Json::parse(read_text(config_path), nullptr, true));
      rc.sample_out = out;
      rc.sample_fvals_out = fvals_out;
    } else if (est_cmd->parsed()) {
      rc.sub = Subcommand::Estimate;
      rc.estimate = ec;
    } else if (mom_cmd->parsed()) {
      rc.sub = Subcommand::Moments;
      rc.moments = mc;
    } else if (gram_cmd->parsed()) {
      rc.sub = Subcommand::Gram;
      rc.gram.gram = parse_gram_config(Json::parse(read_text(config_path)));
      rc.gram.out_path = out;
    } else if (conv_cmd->parsed()) {
      rc.sub = Subcommand::Converge;
      rc.converge.conv = parse_converge_config(Json::parse(read_text(config_path)));
      rc.converge.out_prefix = out_prefix;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ParseError: " << e.what() << "\n";
    return 2;
  }
  return run(rc);
}
