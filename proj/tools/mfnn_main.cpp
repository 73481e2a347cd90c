#include <CLI11.hpp>

#include <iostream>

#include "mfnn/commands.hpp"
#include "mfnn/dataset.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mfnn - multiplication-free tiny network training, export and search"};
  app.require_subcommand(1);

  std::string config_path, resume_path, checkpoint_path, out_path, model_path, data_spec;
  std::string mult_ckpt, mf_ckpt, graph_spec = "mobilenetv2_w035";
  std::string gen_out, gen_kind = "ten";
  int resolution = 160;
  std::uint64_t gen_seed = 0;
  int gen_n = 1000, gen_size = 32;

  auto* train = app.add_subcommand("train", "augmented training from a config file");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  std::string fit_family = "shift";
  double fit_prior_scale = 0.05;
  auto* fit = app.add_subcommand("fit-remap", "fit the weight-sharing remap bank");
  fit->add_option("--mult", mult_ckpt, "directly trained multiplicative checkpoint")->required();
  fit->add_option("--mf", mf_ckpt, "directly trained multiplication-free checkpoint")->required();
  fit->add_option("--out", out_path, "bank file to write")->required();
  fit->add_option("--family", fit_family, "target operator family (shift | add)");
  fit->add_option("--prior-scale", fit_prior_scale, "fixed Laplace scale for the shift family");

  auto* exp = app.add_subcommand("export", "freeze the target part of a checkpoint");
  exp->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  exp->add_option("--out", out_path, "exported model file")->required();

  auto* ev = app.add_subcommand("eval", "integer-path evaluation of an exported model");
  ev->add_option("--model", model_path, "exported model file")->required();
  ev->add_option("--data", data_spec, "dataset path or synthetic spec")->required();

  auto* search = app.add_subcommand("search", "two-stage evolutionary architecture search");
  search->add_option("--config", config_path, "search config JSON")->required();

  auto* cost = app.add_subcommand("cost", "op counts, energy and latency proxy");
  cost->add_option("--graph", graph_spec, "preset name or run config file");
  cost->add_option("--resolution", resolution, "input resolution");

  auto* gen = app.add_subcommand("dataset-gen", "write a synthetic dataset to disk");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--kind", gen_kind, "two | ten");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--n", gen_n, "sample count");
  gen->add_option("--size", gen_size, "image edge length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const mfnn::RunConfig cfg = mfnn::load_run_config(config_path);
      const auto outcome =
          mfnn::cmd_train(cfg, std::cout,
                          resume_path.empty() ? std::nullopt
                                              : std::optional<std::string>(resume_path));
      std::cout << "final accuracy " << outcome.final_accuracy << "\n"
                << "checkpoint " << outcome.checkpoint_path << "\n"
                << "metrics " << outcome.metrics_path << "\n";
    } else if (*fit) {
      mfnn::cmd_fit_remap(mult_ckpt, mf_ckpt, out_path, std::cout, fit_family, fit_prior_scale);
    } else if (*exp) {
      mfnn::cmd_export(checkpoint_path, out_path, std::cout);
    } else if (*ev) {
      mfnn::cmd_eval(model_path, data_spec, std::cout);
    } else if (*search) {
      const mfnn::SearchConfig cfg = mfnn::load_search_config(config_path);
      const auto outcome = mfnn::cmd_search(cfg, std::cout);
      std::cout << "ledger " << outcome.ledger_path << "\n";
    } else if (*cost) {
      mfnn::cmd_cost(graph_spec, resolution, std::cout);
    } else if (*gen) {
      mfnn::Dataset d = gen_kind == "two" ? mfnn::synthetic_two_class(gen_seed, gen_n, gen_size)
                                          : mfnn::synthetic_ten_class(gen_seed, gen_n, gen_size);
      mfnn::write_dataset(d, gen_out);
      std::cout << "wrote " << d.size() << " images to " << gen_out << "\n";
    }
  } catch (const mfnn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
