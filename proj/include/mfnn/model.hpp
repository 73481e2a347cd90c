#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfnn/cost_model.hpp"
#include "mfnn/hws.hpp"
#include "mfnn/mf_ops.hpp"
#include "mfnn/ops.hpp"
#include "mfnn/rng.hpp"

namespace mfnn {

enum class OpFamily { Mult, Shift, Add };

std::string to_string(OpFamily f);
OpFamily family_from_string(const std::string& s);

// Tape leaf ids for this step's parameters, keyed by tensor address.
struct Binding {
  Tape* tape = nullptr;
  std::map<const Tensor*, int> ids;
  int id(const Tensor& t) const;
};

// One wide convolution with a target/augment partition on both channel axes.
// The target slice is always channels [0, ct); only it is exported.
struct AugConv {
  std::string name;
  bool depthwise = false;
  int ct_in = 0, ca_in = 0;
  int ct_out = 0, ca_out = 0;
  int k = 1, stride = 1, pad = 0;
  OpFamily family = OpFamily::Mult;      // operator of the target slice
  OpFamily aug_family = OpFamily::Mult;  // operator of the augmented slice
  int p_min = -15, p_max = 0;
  Tensor weight;  // [ct_out+ca_out, (ct_in+ca_in)/groups, k, k]

  RemapMode hws_mode = RemapMode::Identity;
  const RemapBank* bank = nullptr;

  int wide_in() const { return ct_in + ca_in; }
  int wide_out() const { return ct_out + ca_out; }
  // Kernel-slice length of the target sub-block (the HWS shape class).
  int target_slice_dim() const { return depthwise ? k * k : ct_in * k * k; }

  void init(Rng& rng);
  // Target-slice weight after HWS remapping, as a tape node.
  int remapped_target_weight(Tape& t, const Binding& bind, bool training) const;
  int forward(Tape& t, const Binding& bind, int x, bool augmented, bool training) const;
  // Value-path equivalent of the target forward for finalized weights.
  Tensor target_weight_value(bool training = false) const;
};

struct AugBN {
  std::string name;
  int ct = 0, ca = 0;
  Tensor gamma, beta;                // ct+ca, shared across modes
  BatchNormBuffers target_stats;     // ct channels
  BatchNormBuffers aug_stats;        // ct+ca channels

  void init();
  int forward(Tape& t, const Binding& bind, int x, bool augmented, bool training);
};

struct AugFC {
  std::string name;
  int ct_in = 0, ca_in = 0, d_out = 0;
  OpFamily family = OpFamily::Mult;
  OpFamily aug_family = OpFamily::Mult;
  int p_min = -15, p_max = 0;
  Tensor weight;  // [d_out, ct_in+ca_in]
  Tensor bias;    // [d_out], rides on the multiplication-free term
  RemapMode hws_mode = RemapMode::Identity;
  const RemapBank* bank = nullptr;

  void init(Rng& rng);
  int remapped_target_weight(Tape& t, const Binding& bind, bool training) const;
  int forward(Tape& t, const Binding& bind, int x, bool augmented, bool training) const;
  Tensor target_weight_value(bool training = false) const;
};

enum class ActKind { ReLU, HSwish };

struct Bottleneck {
  AugConv expand;  // absent when expand ratio == 1 (has_expand false)
  bool has_expand = true;
  AugBN bn1;
  AugConv dw;
  AugBN bn2;
  AugConv project;
  AugBN bn3;
  bool residual = false;
  // Depth-augmentation blocks train inside the augmented pass only and decay
  // out of it; they never join the target path.
  bool depth_aug = false;
  float depth_scale = 1.0f;
  ActKind act = ActKind::ReLU;
  OpFamily gene_family = OpFamily::Mult;  // family after mutation completes

  int forward(Tape& t, const Binding& bind, int x, bool augmented, bool training);
  void set_family(OpFamily f);
};

struct BlockSpec {
  int out_ch = 8;
  double expand = 2.0;
  int stride = 1;
  int kernel = 3;
};

struct ArchSpec {
  int in_channels = 3;
  int resolution = 32;
  int num_classes = 10;
  int stem_channels = 8;
  int stem_stride = 2;
  std::vector<BlockSpec> blocks;
  ActKind act = ActKind::ReLU;
};

struct AugSpec {
  double width_multiple = 1.0;   // c_a = round((w-1) * c_t)
  double expand_multiple = 1.0;  // applied to the bottleneck hidden width
  // Operator of the augmented slice: ordinary convolution (hybrid
  // computation) or the target family (homogeneous augmentation, used by the
  // shift-only-augmentation ablation).
  bool homogeneous = false;
};

struct FamilySpec {
  OpFamily stem = OpFamily::Mult;
  std::vector<OpFamily> blocks;  // broadcast if size 1
  OpFamily head = OpFamily::Mult;
};

struct QuantSpec {
  int p_min = -15;
  int p_max = 0;
};

struct HwsSpec {
  RemapMode mode = RemapMode::Identity;
  LaplacePrior shift_prior{0.0, 0.05};  // narrow prior for shift operators
  LaplacePrior add_prior{0.0, 0.5};
};

int augmented_channels(int ct, double multiple);

class AugModel {
 public:
  AugModel() = default;
  AugModel(const ArchSpec& arch, const AugSpec& aug, const FamilySpec& fam, const QuantSpec& q,
           const HwsSpec& hws, std::uint64_t seed);

  // Registers every trainable parameter on the tape; forwards share the ids.
  Binding bind(Tape& t);
  // x: [N, C, H, W] leaf. Returns logits node.
  int forward(Tape& t, const Binding& bind, int x, bool augmented, bool training);

  struct ParamRef {
    std::string name;
    Tensor* tensor;
    bool decay;  // conv/fc weights decay, BN affine and bias do not
  };
  std::vector<ParamRef> params();

  // Target-path inference on finalized weights (used after training and by
  // the exported-model equality check).
  Tensor infer_target(const Tensor& x);

  // Mutation: flip one block's target operator to its gene family.
  void mutate_block(int index);
  bool block_mult_free(int index) const;
  int block_count() const { return static_cast<int>(blocks_.size()); }
  void set_depth_scale(float s);

  // Epoch-boundary importance reordering (per bottleneck expansion group).
  // Returns one permutation per reordered block.
  std::vector<std::vector<int>> reorder_all();

  // Deterministic derived quantities for export / cost.
  GraphDesc target_graph() const;

  ArchSpec arch;
  AugSpec aug;
  FamilySpec families;
  QuantSpec quant;
  HwsSpec hws;

  AugConv stem;
  AugBN stem_bn;
  std::vector<Bottleneck>& blocks() { return blocks_; }
  const std::vector<Bottleneck>& blocks() const { return blocks_; }
  AugFC head;

  RemapBank shift_bank;
  RemapBank add_bank;
  void install_remap_nets(OpFamily family, const RemapPretrainResult& fitted);
  void set_hws_mode(RemapMode mode);

 private:
  std::vector<Bottleneck> blocks_;
  void wire_banks();
};

// Per-channel L1 importance order (descending, stable) of a conv weight's
// leading axis.
std::vector<int> l1_channel_order(const Tensor& w);

// Applies `perm` (new_index -> old_index) to the expansion group of one
// bottleneck: expand output channels, both expansion BNs, depthwise channels,
// and the consumer's input channels. Throws AlignmentError on size mismatch.
std::vector<int> reorder_expansion(Bottleneck& blk);

// Poison helper for tests: overwrite augmented-slice channels with NaN.
void poison_augmented_channels(AugModel& m);

}  // namespace mfnn
