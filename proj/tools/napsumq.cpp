#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "napsumq/pipeline.hpp"

namespace {

using nlohmann::json;
using namespace napsumq;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

Schema schema_from_config(const json& cfg) {
  const auto& node = cfg.at("schema");
  return node.is_string() ? load_schema(node.get<std::string>())
                          : schema_from_json(node);
}

InferenceMethod inference_from_string(const std::string& s) {
  if (s == "laplace") return InferenceMethod::laplace;
  if (s == "nuts") return InferenceMethod::nuts;
  throw ConfigError("inference must be 'laplace' or 'nuts', got '" + s + "'");
}

Backend backend_from_string(const std::string& s) {
  if (s == "enumeration") return Backend::enumeration;
  if (s == "junction_tree") return Backend::junction_tree;
  throw ConfigError("backend must be 'enumeration' or 'junction_tree', got '" + s + "'");
}

NutsConfig nuts_from_json(const json& j) {
  NutsConfig n;
  n.chains = j.value("chains", n.chains);
  n.warmup = j.value("warmup", n.warmup);
  n.samples = j.value("samples", n.samples);
  n.max_depth = j.value("max_depth", n.max_depth);
  n.target_accept = j.value("target_accept", n.target_accept);
  return n;
}

Dataset dataset_from_config(const json& cfg, const Schema& schema) {
  const auto& node = cfg.at("data");
  if (node.is_string()) {
    MissingPolicy policy = MissingPolicy::error;
    if (cfg.value("missing_policy", "error") == "drop_rows") policy = MissingPolicy::drop_rows;
    return load_csv(node.get<std::string>(), schema, policy);
  }
  if (node.is_object() && node.contains("toy"))
    return sample_toy_data(node.at("toy").at("n").get<long>(),
                           node.at("toy").value("seed", std::uint64_t{0}));
  if (node.is_object() && node.contains("standin"))
    return sample_standin_data(node.at("standin").at("n").get<long>(),
                               node.at("standin").value("seed", std::uint64_t{0}));
  throw ConfigError("data must be a CSV path or a {\"toy\"|\"standin\": {\"n\": ...}} spec");
}

int cmd_generate(const std::string& config_path) {
  const json cfg = load_json(config_path);
  PipelineConfig pc;
  pc.schema = schema_from_config(cfg);
  pc.scopes = scopes_from_json(cfg.at("scopes"), pc.schema);
  pc.budget = {cfg.at("epsilon").get<double>(), cfg.at("delta").get<double>()};
  pc.m = cfg.value("m", 100);
  pc.n_syn = cfg.at("n_syn").get<long>();
  pc.inference = inference_from_string(cfg.value("inference", "laplace"));
  if (cfg.contains("nuts")) pc.nuts = nuts_from_json(cfg.at("nuts"));
  pc.backend = backend_from_string(cfg.value("backend", "enumeration"));
  pc.prior_std = cfg.value("prior_std", 10.0);
  pc.seed = cfg.value("seed", std::uint64_t{0});
  const bool mi_downstream = cfg.value("mi_downstream", true);
  const std::string out_dir = cfg.at("output_dir").get<std::string>();

  Dataset data = dataset_from_config(cfg, pc.schema);
  NapsuResult res = run_napsu_mq(pc, data, mi_downstream,
                                 [](const std::string& stage) { std::cerr << "stage: " << stage << "\n"; });

  std::filesystem::create_directories(out_dir);
  write_json(release_to_json(res.release), out_dir + "/release.json");
  write_json(scopes_to_json(pc.scopes, pc.schema), out_dir + "/query_spec.json");

  json posterior;
  posterior["method"] = pc.inference == InferenceMethod::laplace ? "laplace" : "nuts";
  posterior["calibrated_sigma"] = res.calibrated_sigma;
  posterior["n"] = res.n;
  posterior["laplace_mean"] = std::vector<double>(
      res.laplace.mean.data(), res.laplace.mean.data() + res.laplace.mean.size());
  if (res.nuts) posterior["diagnostics"] = diagnostics_to_json(*res.nuts);
  write_json(posterior, out_dir + "/posterior.json");
  if (res.nuts) samples_to_csv(*res.nuts, out_dir + "/posterior_samples.csv");

  for (std::size_t i = 0; i < res.synthetic.size(); ++i)
    write_csv(res.synthetic[i], out_dir + "/synthetic_" + std::to_string(i) + ".csv");
  std::cout << "wrote " << res.synthetic.size() << " synthetic datasets to " << out_dir
            << "\n";
  return 0;
}

int cmd_analyze(const std::string& config_path) {
  const json cfg = load_json(config_path);
  Schema schema = schema_from_config(cfg);

  DownstreamSpec spec;
  spec.response = schema.index_of(cfg.at("response").get<std::string>());
  for (const auto& name : cfg.at("predictors"))
    spec.predictors.push_back(schema.index_of(name.get<std::string>()));
  spec.drop_outliers = cfg.value("drop_outliers", true);
  spec.outlier_threshold = cfg.value("outlier_threshold", 1e3);
  spec.levels = cfg.value("levels", std::vector<double>{0.95});

  std::vector<Dataset> datasets;
  for (const auto& path : cfg.at("datasets"))
    datasets.push_back(load_csv(path.get<std::string>(), schema, MissingPolicy::error));
  const long n_original = cfg.at("n_original").get<long>();

  MiRunResult mi = run_mi_analysis(datasets, spec, n_original);
  json out;
  out["m"] = mi.combined.m;
  out["dropped_fraction"] = mi.dropped_fraction;
  out["coefficients"] = combined_to_json(mi.combined, spec.levels);
  const std::string out_path = cfg.value("output", std::string("results.json"));
  write_json(out, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_experiment(const std::string& config_path) {
  const json cfg = load_json(config_path);
  const std::string setup = cfg.value("setup", "toy");
  ExperimentConfig ec;
  if (setup == "toy")
    ec = toy_setup();
  else if (setup == "standin")
    ec = standin_setup();
  else
    throw ConfigError("setup must be 'toy' or 'standin', got '" + setup + "'");

  ec.n = cfg.value("n", ec.n);
  ec.n_syn = cfg.value("n_syn", ec.n_syn);
  ec.m = cfg.value("m", ec.m);
  ec.delta = cfg.value("delta", ec.delta);
  ec.repeats = cfg.value("repeats", ec.repeats);
  ec.seed = cfg.value("seed", std::uint64_t{0});
  if (cfg.contains("epsilons")) ec.epsilons = cfg.at("epsilons").get<std::vector<double>>();
  ec.mode = experiment_mode_from_string(cfg.value("mode", "na_mi"));
  if (cfg.contains("inference"))
    ec.inference = inference_from_string(cfg.at("inference").get<std::string>());
  if (cfg.contains("nuts")) ec.nuts = nuts_from_json(cfg.at("nuts"));
  if (cfg.contains("levels"))
    ec.downstream.levels = cfg.at("levels").get<std::vector<double>>();

  ExperimentReport report = run_coverage_experiment(ec);
  const std::string out_dir = cfg.at("output_dir").get<std::string>();
  std::filesystem::create_directories(out_dir);
  write_json(report_to_json(report), out_dir + "/report.json");
  emit_plot_data(report, out_dir);
  std::cout << "experiment finished in " << report.runtime_seconds << " s, report in "
            << out_dir << "\n";
  return 0;
}

int cmd_calibrate(double epsilon, double delta, double sensitivity) {
  PrivacyBudget budget{epsilon, delta};
  const double sigma = calibrate_sigma(budget, sensitivity);
  json out;
  out["epsilon"] = epsilon;
  out["delta"] = delta;
  out["sensitivity"] = sensitivity;
  out["sigma"] = sigma;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private synthetic tabular data with noise-aware "
               "inference and multiple-imputation analysis"};
  app.require_subcommand(1);

  std::string generate_config, analyze_config, experiment_config;
  auto* generate = app.add_subcommand("generate", "Release noisy marginals and generate synthetic datasets");
  generate->add_option("-c,--config", generate_config, "JSON config file")->required();
  auto* analyze = app.add_subcommand("analyze", "Combine analyses across synthetic datasets");
  analyze->add_option("-c,--config", analyze_config, "JSON config file")->required();
  auto* experiment = app.add_subcommand("experiment", "Run the coverage experiment harness");
  experiment->add_option("-c,--config", experiment_config, "JSON config file")->required();

  double epsilon = 0, delta = 0, sensitivity = 0;
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the Gaussian mechanism noise scale");
  calibrate->add_option("-e,--epsilon", epsilon, "Privacy parameter epsilon")->required();
  calibrate->add_option("-d,--delta", delta, "Privacy parameter delta")->required();
  calibrate->add_option("-s,--sensitivity", sensitivity, "L2 sensitivity")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(generate_config);
    if (analyze->parsed()) return cmd_analyze(analyze_config);
    if (experiment->parsed()) return cmd_experiment(experiment_config);
    if (calibrate->parsed()) return cmd_calibrate(epsilon, delta, sensitivity);
  } catch (const napsumq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const napsumq::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
