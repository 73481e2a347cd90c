#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "mfnn/cost_model.hpp"
#include "mfnn/model.hpp"
#include "mfnn/nas.hpp"
#include "mfnn/optim.hpp"

namespace mfnn {

// Everything one training run needs; fully serializable as JSON.
struct RunConfig {
  ArchSpec arch;
  FamilySpec families;
  AugSpec aug;
  QuantSpec quant;
  HwsSpec hws;
  OptimizerConfig optim;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  bool reorder = true;
  int epochs = 20;
  int batch = 64;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  std::string data;     // path or synthetic spec
  std::string out_dir = "run";
  std::string pretrained_remap;  // optional remap bank file
  std::string preset;            // informational echo
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_json(const RunConfig& c);

// Named method presets: base, netaug, shift, augshift, add, augadd.
void apply_preset(RunConfig& c, const std::string& name);

struct TrainOutcome {
  double final_accuracy = 0.0;
  int epochs_run = 0;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Augmented training per config: per-epoch reorder, checkpoint, metrics CSV.
// `resume_from` continues a run at its saved epoch. `session_epochs` caps how
// many epochs run before returning (schedules still span cfg.epochs), so an
// interrupted run can be emulated and later resumed.
TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log,
                       const std::optional<std::string>& resume_from = std::nullopt,
                       const std::optional<int>& session_epochs = std::nullopt);

// Fits the heterogeneous-weight-sharing bank from two directly trained
// checkpoints (multiplicative source, multiplication-free target family).
void cmd_fit_remap(const std::string& mult_checkpoint, const std::string& mf_checkpoint,
                   const std::string& out_path, std::ostream& log,
                   const std::string& family = "shift", double fixed_prior_scale = 0.05);

// Loads a bank file written by cmd_fit_remap.
RemapPretrainResult load_remap_bank_file(const std::string& path);
void save_remap_bank_file(const RemapPretrainResult& bank, const std::string& path);

// Freezes and writes the standalone multiplication-free model.
void cmd_export(const std::string& checkpoint_path, const std::string& out_path,
                std::ostream& log);

struct EvalOutcome {
  double top1 = 0.0;
  CostReport cost;
};

// Integer eval path over an exported model file.
EvalOutcome cmd_eval(const std::string& model_path, const std::string& data, std::ostream& log);

struct SearchConfig {
  SearchSpace space;
  EvolveOptions evolve;
  EvalOptions eval;
  std::string data;
  std::string out_dir = "search";
  std::uint64_t seed = 0;
  int top_k = 3;  // best candidates written out as train configs
  bool fitness_is_neg_energy = false;  // cost-only search (no training)
};

SearchConfig load_search_config(const std::string& path);
SearchConfig parse_search_config(const std::string& json_text);

struct SearchOutcome {
  std::string ledger_path;
  std::vector<Candidate> ranked;
};

SearchOutcome cmd_search(const SearchConfig& cfg, std::ostream& log);

// Op counts + energy + latency proxy for a graph (preset name or a model
// config file).
CostReport cmd_cost(const std::string& graph_spec, int resolution, std::ostream& log);

}  // namespace mfnn
