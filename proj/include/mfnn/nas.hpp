#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfnn/cost_model.hpp"
#include "mfnn/dataset.hpp"
#include "mfnn/model.hpp"
#include "mfnn/train.hpp"

namespace mfnn {

// One searchable stage of the backbone: up to max_depth repeated blocks, the
// first carrying the stride / channel change.
struct StageSpec {
  int out_ch = 8;
  double expand = 2.0;
  int stride = 1;
  int kernel = 3;
  int max_depth = 2;
};

struct SearchSpace {
  int in_channels = 3;
  int resolution = 32;
  int num_classes = 10;
  int stem_channels = 8;
  int stem_stride = 2;
  ActKind act = ActKind::ReLU;
  std::vector<StageSpec> stages;
  std::vector<OpFamily> block_types{OpFamily::Mult, OpFamily::Shift, OpFamily::Add};
  std::vector<double> width_multiples{2.2, 2.4, 2.8, 3.2};
  std::vector<double> expand_multiples{2.2, 2.4, 2.8, 3.2};
  std::vector<double> mutation_starts{0.05, 0.10, 0.15, 0.20};
  std::vector<double> mutation_stops{0.50, 0.60, 0.70};
  QuantSpec quant;
  HwsSpec hws;

  int total_layers() const;
};

struct HardwareLimits {
  double max_energy_mj = 1e30;
  double max_latency_ms = 1e30;
  double max_params_m = 1e30;

  // Name of the tightest violated limit, empty when feasible.
  std::string violated(const CostReport& r) const;
};

// One search point. TargetNet layers are the per-stage prefix of length
// target_depth; SubNet extends it by depth-augmentation layers.
struct Candidate {
  std::vector<int> target_depth;  // per stage, >= 1
  std::vector<int> subnet_depth;  // per stage, target <= subnet <= max
  std::vector<int> block_type;    // per layer (stage-major), index into block_types
  int width_idx = 0;
  int expand_idx = 0;
  int start_idx = 0;
  int stop_idx = 0;

  double fitness = 0.0;
  CostReport cost;
  bool feasible = false;
  bool trained = false;
  std::string note;  // "infeasible:<limit>" or "diverged"

  std::string gene_key() const;
  std::uint64_t id() const;
};

// Mask-level SubNet cut: selected layers form the deployable prefix of the
// training net; unselected layers adjacent to a selected one participate as
// depth augmentation, the rest are dropped.
struct SubnetPlan {
  std::vector<int> layers;          // supernet indices, in order
  std::vector<bool> depth_aug;      // parallel to layers
  std::vector<int> target_layers;   // subset of layers with depth_aug false
};

SubnetPlan cut_subnet(int supernet_layers, const std::vector<int>& selected_mask);

// Flip steps for the multiplication-free target layers, evenly spaced in
// [start*T, stop*T], shallow first.
struct MutationSchedule {
  double start_fraction = 0.0;
  double stop_fraction = 0.0;
  std::vector<std::pair<std::int64_t, int>> flips;  // (step, target-layer index)
};

MutationSchedule mutation_schedule(const SearchSpace& space, const Candidate& c,
                                   std::int64_t total_steps);

// Deployable-part graph of a candidate (cost model input; no weights built).
GraphDesc candidate_target_graph(const SearchSpace& space, const Candidate& c);

// Materializes the augmented training model: SubNet blocks with the extras
// flagged as depth augmentation, genes applied as final (gene) families.
AugModel build_candidate_model(const SearchSpace& space, const Candidate& c, std::uint64_t seed);

struct EvalOptions {
  HardwareLimits limits;
  int budget_epochs = 4;
  int batch = 64;
  double alpha1 = 1.0, alpha2 = 1.0;
  float lr = 0.05f;
  double val_fraction = 0.25;
  int input_resolution = 32;
};

// Cost gate first (infeasible -> fitness exactly 0, never trained), then a
// short augmented training run under the candidate's mutation schedule;
// fitness = validation top-1.
void evaluate_candidate(const SearchSpace& space, Candidate& c, const Dataset& data,
                        const EvalOptions& opts, std::uint64_t global_seed);

struct EvolveOptions {
  int population = 12;
  int generations = 8;
  int tournament = 3;
  double mutation_prob = 0.1;
  int feasibility_screen = 100;  // cost-only pre-exploration budget
  int max_init_attempts = 2000;
  HardwareLimits limits;
};

using CandidateEvaluator = std::function<void(Candidate&)>;

// (mu + lambda) evolution with tournament selection and uniform crossover.
// The evaluator fills fitness/cost; identical genes are evaluated once.
// Returns all evaluated candidates sorted by descending fitness.
std::vector<Candidate> evolve(const SearchSpace& space, const EvolveOptions& opts,
                              std::uint64_t seed, const CandidateEvaluator& evaluator);

Candidate random_candidate(const SearchSpace& space, Rng& rng);
// Exhaustive enumeration for small spaces (test oracle support).
std::vector<Candidate> enumerate_candidates(const SearchSpace& space);

std::string ledger_csv(const std::vector<Candidate>& ranked, std::uint64_t seed);

}  // namespace mfnn
