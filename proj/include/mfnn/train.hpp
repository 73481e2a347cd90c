#pragma once

#include <cstdint>
#include <vector>

#include "mfnn/dataset.hpp"
#include "mfnn/model.hpp"
#include "mfnn/optim.hpp"

namespace mfnn {

struct JointLosses {
  double target = 0;
  double augmented = 0;
};

// One step of Alg.-style augmented training: a target-only pass and an
// augmented pass on the same batch, loss = a1 * L_t + a2 * L_a, one backward,
// Nesterov SGD update of the shared wide weights. With a2 == 0 the augmented
// pass is skipped and this is a plain training step.
JointLosses joint_step(AugModel& m, SgdOptimizer& opt, const Tensor& x,
                       const std::vector<int>& labels, double alpha1, double alpha2,
                       float label_smoothing);

// Scheduled operator flip: at `step`, block `block` turns multiplication-free
// (plus optionally the stem / classifier head).
struct MutationEvent {
  std::int64_t step = 0;
  int block = 0;
  bool flip_stem = false;
  bool flip_head = false;
};

struct TrainSettings {
  int epochs = 20;
  int batch = 64;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  bool reorder = true;
  std::uint64_t seed = 0;
  OptimizerConfig optim;
  std::vector<MutationEvent> mutations;  // sorted by step
  bool decay_depth_aug = true;
  double divergence_threshold = 50.0;  // loss above this counts as divergence
};

struct EpochStats {
  double loss_target = 0;
  double loss_aug = 0;
  double lr_first = 0;
};

class Trainer {
 public:
  Trainer(AugModel& model, const TrainSettings& s);

  EpochStats run_epoch(const Dataset& train, int epoch);
  // Target-path top-1 accuracy in eval mode.
  double evaluate(const Dataset& data, int batch = 128);

  SgdOptimizer& optimizer() { return opt_; }
  const TrainSettings& settings() const { return settings_; }
  std::int64_t total_steps(const Dataset& train) const;

 private:
  void apply_schedules(std::int64_t step, std::int64_t horizon);

  AugModel& model_;
  TrainSettings settings_;
  SgdOptimizer opt_;
  std::size_t next_mutation_ = 0;
};

// Top-1 accuracy of logits vs labels.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace mfnn
