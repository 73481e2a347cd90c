#pragma once

#include <string>
#include <vector>

#include "mfnn/model.hpp"
#include "mfnn/quant.hpp"

namespace mfnn {

// One exported conv: target slice only, weight finalized (remapped, and for
// shift layers rounded through the 5-bit codes), with its target-mode BN.
struct ExportedConv {
  std::string name;
  bool depthwise = false;
  int c_in = 0, c_out = 0, k = 1, stride = 1, pad = 0;
  OpFamily family = OpFamily::Mult;
  int p_min = -15, p_max = 0;
  PowTwoWeight qweight;  // shift family
  Tensor weight;         // mult/add family
  Tensor bn_gamma, bn_beta, bn_mean, bn_var;

  Tensor weight_value() const;  // dequantized view for the float path
};

struct ExportedBlock {
  bool has_expand = true;
  ExportedConv expand, dw, project;
  bool residual = false;
};

// Standalone multiplication-free model; forward_float reproduces the
// augmented model's target-only path bit for bit, forward_integer runs the
// shift layers on the integer eval path.
struct ExportedModel {
  int in_channels = 3, num_classes = 10, resolution = 32;
  ActKind act = ActKind::ReLU;
  ExportedConv stem;
  std::vector<ExportedBlock> blocks;
  OpFamily fc_family = OpFamily::Mult;
  int fc_p_min = -15, fc_p_max = 0;
  PowTwoWeight fc_qweight;
  Tensor fc_weight;
  Tensor fc_bias;

  Tensor forward_float(const Tensor& x) const;
  Tensor forward_integer(const Tensor& x) const;
  GraphDesc graph() const;
};

// Freezes the target part of a trained augmented model.
ExportedModel export_target(const AugModel& m);

void save_exported(const ExportedModel& m, const std::string& path);
ExportedModel load_exported(const std::string& path);

}  // namespace mfnn
