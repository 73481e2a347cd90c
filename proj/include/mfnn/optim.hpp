#pragma once

#include <cstdint>
#include <vector>

#include "mfnn/tensor.hpp"

namespace mfnn {

struct OptimizerConfig {
  float lr = 0.05f;
  float momentum = 0.9f;
  bool nesterov = true;
  float weight_decay = 4e-5f;
  std::int64_t cosine_horizon = 0;  // total steps; 0 disables the schedule
  float label_smoothing = 0.1f;
};

// lr0 * 0.5 * (1 + cos(pi * step / horizon)); reaches 0 at step == horizon.
double cosine_lr(double lr0, std::int64_t step, std::int64_t horizon);

// Per-parameter Nesterov SGD state. Parameters are registered once and
// addressed by index so momentum buffers survive across steps while the tape
// is rebuilt.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  int register_param(std::vector<int> shape);
  void apply(int index, Tensor& param, const Tensor& grad, bool decay);
  void step_end() { ++step_; }

  double current_lr() const;
  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  const OptimizerConfig& config() const { return cfg_; }
  OptimizerConfig& config_mut() { return cfg_; }

  std::vector<Tensor>& momentum_buffers() { return momentum_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> momentum_;
  std::int64_t step_ = 0;
};

}  // namespace mfnn
