#include "mfnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mfnn {

std::string to_string(OpFamily f) {
  switch (f) {
    case OpFamily::Mult: return "mult";
    case OpFamily::Shift: return "shift";
    case OpFamily::Add: return "add";
  }
  return "?";
}

OpFamily family_from_string(const std::string& s) {
  if (s == "mult") return OpFamily::Mult;
  if (s == "shift") return OpFamily::Shift;
  if (s == "add") return OpFamily::Add;
  throw ConfigError("unknown operator family: " + s);
}

int Binding::id(const Tensor& t) const {
  auto it = ids.find(&t);
  if (it == ids.end()) throw Error("tensor not bound on this tape");
  return it->second;
}

int augmented_channels(int ct, double multiple) {
  if (multiple < 1.0) throw ConfigError("augmentation multiple must be >= 1");
  return static_cast<int>(std::lround((multiple - 1.0) * ct));
}

namespace {

// Live remap assets for one layer's target slice: Gaussian stats come from
// the current weights, the Laplace prior and net from the family bank.
struct RemapPlan {
  RemapMode mode = RemapMode::Identity;
  const RemapNet* net = nullptr;
  GaussianStats g;
  LaplacePrior l;
};

RemapPlan plan_remap(const Tensor& target_slice, OpFamily family, RemapMode mode,
                     const RemapBank* bank, int slice_dim) {
  RemapPlan p;
  if (family == OpFamily::Mult || mode == RemapMode::Identity || bank == nullptr)
    return p;
  auto it = bank->nets.find(slice_dim);
  if (it == bank->nets.end()) return p;  // no net for this shape class
  try {
    p.g = fit_gaussian(target_slice);
  } catch (const DegenerateDistributionError&) {
    return p;  // constant slice carries no distribution to remap
  }
  p.mode = mode;
  p.net = &it->second;
  p.l = bank->prior;
  return p;
}

Tensor gather_block(const Tensor& w, int o0, int o1, int i0, int i1) {
  const int O = w.dim(0), I = w.dim(1);
  const int kk = w.ndim() == 4 ? w.dim(2) * w.dim(3) : 1;
  std::vector<int> shape = w.shape;
  shape[0] = o1 - o0;
  shape[1] = i1 - i0;
  Tensor out(shape);
  for (int o = o0; o < o1; ++o)
    for (int i = i0; i < i1; ++i)
      std::copy_n(w.data.data() + (static_cast<std::size_t>(o) * I + i) * kk, kk,
                  out.data.data() +
                      (static_cast<std::size_t>(o - o0) * (i1 - i0) + (i - i0)) * kk);
  (void)O;
  return out;
}

int apply_remap_node(Tape& t, int w_node, const RemapPlan& p, bool training) {
  if (p.mode == RemapMode::Identity || p.net == nullptr) return w_node;
  return remap_op(t, w_node, *p.net, p.g, p.l, p.mode, training);
}

Tensor apply_remap_value(const Tensor& w, const RemapPlan& p, bool training) {
  if (p.mode == RemapMode::Identity || p.net == nullptr) return w;
  return remap(w, *p.net, p.g, p.l, p.mode, training);
}

int mf_conv(Tape& t, int x, int w, const Conv2dParams& cp, OpFamily family, int p_min,
            int p_max) {
  switch (family) {
    case OpFamily::Mult: return conv2d(t, x, w, cp);
    case OpFamily::Shift: return shift_conv_train(t, x, w, cp, p_min, p_max);
    case OpFamily::Add: return add_conv(t, x, w, cp);
  }
  throw Error("unreachable");
}

}  // namespace

void AugConv::init(Rng& rng) {
  const int cin_slice = depthwise ? 1 : wide_in();
  weight = Tensor({wide_out(), cin_slice, k, k});
  const double std = std::sqrt(2.0 / (static_cast<double>(cin_slice) * k * k));
  for (auto& v : weight.data) v = static_cast<float>(rng.normal(0.0, std));
}

int AugConv::remapped_target_weight(Tape& t, const Binding& bind, bool training) const {
  const int wid = bind.id(weight);
  const int in_hi = depthwise ? 1 : ct_in;
  int wt = slice_block(t, wid, 0, ct_out, 0, in_hi);
  const RemapPlan p = plan_remap(gather_block(weight, 0, ct_out, 0, in_hi), family, hws_mode,
                                 bank, target_slice_dim());
  return apply_remap_node(t, wt, p, training);
}

Tensor AugConv::target_weight_value(bool training) const {
  const int in_hi = depthwise ? 1 : ct_in;
  Tensor wt = gather_block(weight, 0, ct_out, 0, in_hi);
  const RemapPlan p = plan_remap(wt, family, hws_mode, bank, target_slice_dim());
  Tensor used = apply_remap_value(wt, p, training);
  if (family == OpFamily::Shift)
    used = dequantize(canonicalize(quantize_pow2(used, p_min, p_max)));
  return used;
}

int AugConv::forward(Tape& t, const Binding& bind, int x, bool augmented, bool training) const {
  const int wid = bind.id(weight);
  const Conv2dParams tp{stride, pad, depthwise ? ct_in : 1};
  if (!augmented) {
    if (t.val(x).dim(1) != ct_in)
      throw DimensionError(name + ": target run expects " + std::to_string(ct_in) + " channels");
    const int wt = remapped_target_weight(t, bind, training);
    return mf_conv(t, x, wt, tp, family, p_min, p_max);
  }
  if (t.val(x).dim(1) != wide_in())
    throw DimensionError(name + ": augmented run expects " + std::to_string(wide_in()) +
                         " channels");
  if (depthwise) {
    // out = cat(MFConv(x_t, W_t), Conv(x_a, W_a))
    const int wt = remapped_target_weight(t, bind, training);
    if (ca_in == 0)
      return mf_conv(t, x, wt, tp, family, p_min, p_max);
    const int xt = slice_channels(t, x, 0, ct_in);
    const int xa = slice_channels(t, x, ct_in, wide_in());
    const int wa = slice_block(t, wid, ct_out, wide_out(), 0, 1);
    const int yt = mf_conv(t, xt, wt, tp, family, p_min, p_max);
    const int ya = mf_conv(t, xa, wa, Conv2dParams{stride, pad, ca_in}, aug_family, p_min, p_max);
    return concat_channels(t, yt, ya);
  }
  // Regular conv: Y_t = MFConv(X_t) + MConv(X_a); Y_a = MConv(X).
  const int wt = remapped_target_weight(t, bind, training);
  int yt;
  if (ca_in == 0) {
    yt = mf_conv(t, x, wt, tp, family, p_min, p_max);
  } else {
    const int xt = slice_channels(t, x, 0, ct_in);
    const int xa = slice_channels(t, x, ct_in, wide_in());
    const int wta = slice_block(t, wid, 0, ct_out, ct_in, wide_in());
    yt = add(t, mf_conv(t, xt, wt, tp, family, p_min, p_max),
             mf_conv(t, xa, wta, Conv2dParams{stride, pad, 1}, aug_family, p_min, p_max));
  }
  if (ca_out == 0) return yt;
  const int wa = slice_block(t, wid, ct_out, wide_out(), 0, wide_in());
  const int ya = mf_conv(t, x, wa, Conv2dParams{stride, pad, 1}, aug_family, p_min, p_max);
  return concat_channels(t, yt, ya);
}

void AugBN::init() {
  gamma = Tensor::full({ct + ca}, 1.0f);
  beta = Tensor::zeros({ct + ca});
  target_stats = {Tensor::zeros({ct}), Tensor::full({ct}, 1.0f)};
  aug_stats = {Tensor::zeros({ct + ca}), Tensor::full({ct + ca}, 1.0f)};
}

int AugBN::forward(Tape& t, const Binding& bind, int x, bool augmented, bool training) {
  const int g = bind.id(gamma);
  const int b = bind.id(beta);
  if (augmented) return batch_norm(t, x, g, b, aug_stats, training);
  return batch_norm(t, x, slice1d(t, g, 0, ct), slice1d(t, b, 0, ct), target_stats, training);
}

void AugFC::init(Rng& rng) {
  weight = Tensor({d_out, ct_in + ca_in});
  const double std = std::sqrt(1.0 / (ct_in + ca_in));
  for (auto& v : weight.data) v = static_cast<float>(rng.normal(0.0, std));
  bias = Tensor::zeros({d_out});
}

int AugFC::remapped_target_weight(Tape& t, const Binding& bind, bool training) const {
  int wt = slice_block(t, bind.id(weight), 0, d_out, 0, ct_in);
  const RemapPlan p =
      plan_remap(gather_block(weight, 0, d_out, 0, ct_in), family, hws_mode, bank, ct_in);
  return apply_remap_node(t, wt, p, training);
}

Tensor AugFC::target_weight_value(bool training) const {
  Tensor wt = gather_block(weight, 0, d_out, 0, ct_in);
  const RemapPlan p = plan_remap(wt, family, hws_mode, bank, ct_in);
  Tensor used = apply_remap_value(wt, p, training);
  if (family == OpFamily::Shift)
    used = dequantize(canonicalize(quantize_pow2(used, p_min, p_max)));
  return used;
}

int AugFC::forward(Tape& t, const Binding& bind, int x, bool augmented, bool training) const {
  const int bid = bind.id(bias);
  const int wt = remapped_target_weight(t, bind, training);
  auto mf_linear = [&](int xin, int win) {
    return family == OpFamily::Shift ? shift_linear(t, xin, win, bid, p_min, p_max)
                                     : linear(t, xin, win, bid);
  };
  if (!augmented) {
    if (t.val(x).dim(1) != ct_in) throw DimensionError(name + ": target run width mismatch");
    return mf_linear(x, wt);
  }
  if (t.val(x).dim(1) != ct_in + ca_in)
    throw DimensionError(name + ": augmented run width mismatch");
  if (ca_in == 0) return mf_linear(x, wt);
  const int xt = slice_channels(t, x, 0, ct_in);
  const int xa = slice_channels(t, x, ct_in, ct_in + ca_in);
  const int wa = slice_block(t, bind.id(weight), 0, d_out, ct_in, ct_in + ca_in);
  // Y = Y_t + Y_a, no output widening; bias rides on the MF term.
  const int ya = aug_family == OpFamily::Shift ? shift_linear(t, xa, wa, std::nullopt, p_min, p_max)
                                               : linear(t, xa, wa);
  return add(t, mf_linear(xt, wt), ya);
}

namespace {

int activate(Tape& t, int x, ActKind a) {
  return a == ActKind::ReLU ? relu(t, x) : hard_swish(t, x);
}

}  // namespace

int Bottleneck::forward(Tape& t, const Binding& bind, int x, bool augmented, bool training) {
  int h = x;
  if (has_expand) {
    h = expand.forward(t, bind, h, augmented, training);
    h = bn1.forward(t, bind, h, augmented, training);
    h = activate(t, h, act);
  }
  h = dw.forward(t, bind, h, augmented, training);
  h = bn2.forward(t, bind, h, augmented, training);
  h = activate(t, h, act);
  h = project.forward(t, bind, h, augmented, training);
  h = bn3.forward(t, bind, h, augmented, training);
  if (depth_aug) return add(t, x, scale(t, h, depth_scale));
  if (residual) return add(t, x, h);
  return h;
}

void Bottleneck::set_family(OpFamily f) {
  if (has_expand) expand.family = f;
  dw.family = f;
  project.family = f;
}

AugModel::AugModel(const ArchSpec& a, const AugSpec& g, const FamilySpec& fam, const QuantSpec& q,
                   const HwsSpec& h, std::uint64_t seed)
    : arch(a), aug(g), families(fam), quant(q), hws(h) {
  Rng rng(derive_seed(seed, 0x6d6f64656cull));
  shift_bank.prior = h.shift_prior;
  add_bank.prior = h.add_prior;

  auto fam_of_block = [&](std::size_t i) {
    if (fam.blocks.empty()) return OpFamily::Mult;
    return fam.blocks.size() == 1 ? fam.blocks[0] : fam.blocks.at(i);
  };

  stem.name = "stem";
  stem.ct_in = a.in_channels;
  stem.ca_in = 0;
  stem.ct_out = a.stem_channels;
  stem.ca_out = augmented_channels(a.stem_channels, g.width_multiple);
  stem.k = 3;
  stem.stride = a.stem_stride;
  stem.pad = 1;
  stem.family = fam.stem;
  stem.aug_family = g.homogeneous ? fam.stem : OpFamily::Mult;
  stem.p_min = q.p_min;
  stem.p_max = q.p_max;
  stem.init(rng);
  stem_bn.name = "stem.bn";
  stem_bn.ct = stem.ct_out;
  stem_bn.ca = stem.ca_out;
  stem_bn.init();

  int ct_prev = stem.ct_out;
  int ca_prev = stem.ca_out;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const BlockSpec& spec = a.blocks[i];
    Bottleneck blk;
    blk.act = a.act;
    blk.gene_family = fam_of_block(i);
    const std::string base = "block" + std::to_string(i);
    const int ht = std::max(1, static_cast<int>(std::lround(ct_prev * spec.expand)));
    const int ha = augmented_channels(ht, g.expand_multiple);
    const int ct_out = spec.out_ch;
    const int ca_out = augmented_channels(ct_out, g.width_multiple);
    blk.has_expand = spec.expand != 1.0;

    if (blk.has_expand) {
      blk.expand.name = base + ".expand";
      blk.expand.ct_in = ct_prev;
      blk.expand.ca_in = ca_prev;
      blk.expand.ct_out = ht;
      blk.expand.ca_out = ha;
      blk.expand.k = 1;
      blk.expand.stride = 1;
      blk.expand.pad = 0;
      blk.expand.family = blk.gene_family;
      blk.expand.aug_family = g.homogeneous ? blk.gene_family : OpFamily::Mult;
      blk.expand.p_min = q.p_min;
      blk.expand.p_max = q.p_max;
      blk.expand.init(rng);
      blk.bn1.name = base + ".bn1";
      blk.bn1.ct = ht;
      blk.bn1.ca = ha;
      blk.bn1.init();
    }
    const int dw_ct = blk.has_expand ? ht : ct_prev;
    const int dw_ca = blk.has_expand ? ha : ca_prev;
    blk.dw.name = base + ".dw";
    blk.dw.depthwise = true;
    blk.dw.ct_in = dw_ct;
    blk.dw.ca_in = dw_ca;
    blk.dw.ct_out = dw_ct;
    blk.dw.ca_out = dw_ca;
    blk.dw.k = spec.kernel;
    blk.dw.stride = spec.stride;
    blk.dw.pad = spec.kernel / 2;
    blk.dw.family = blk.gene_family;
    blk.dw.aug_family = g.homogeneous ? blk.gene_family : OpFamily::Mult;
    blk.dw.p_min = q.p_min;
    blk.dw.p_max = q.p_max;
    blk.dw.init(rng);
    blk.bn2.name = base + ".bn2";
    blk.bn2.ct = dw_ct;
    blk.bn2.ca = dw_ca;
    blk.bn2.init();

    blk.project.name = base + ".project";
    blk.project.ct_in = dw_ct;
    blk.project.ca_in = dw_ca;
    blk.project.ct_out = ct_out;
    blk.project.ca_out = ca_out;
    blk.project.k = 1;
    blk.project.stride = 1;
    blk.project.pad = 0;
    blk.project.family = blk.gene_family;
    blk.project.aug_family = g.homogeneous ? blk.gene_family : OpFamily::Mult;
    blk.project.p_min = q.p_min;
    blk.project.p_max = q.p_max;
    blk.project.init(rng);
    blk.bn3.name = base + ".bn3";
    blk.bn3.ct = ct_out;
    blk.bn3.ca = ca_out;
    blk.bn3.init();

    blk.residual = spec.stride == 1 && ct_prev == ct_out && ca_prev == ca_out;
    // Blocks start multiplicative; mutation flips them to the gene family.
    blk.set_family(OpFamily::Mult);
    blocks_.push_back(std::move(blk));
    ct_prev = ct_out;
    ca_prev = ca_out;
  }
  // Outside a mutation schedule the block family is simply its gene.
  for (auto& blk : blocks_) blk.set_family(blk.gene_family);

  head.name = "head";
  head.ct_in = ct_prev;
  head.ca_in = ca_prev;
  head.d_out = a.num_classes;
  head.family = fam.head;
  head.aug_family = g.homogeneous ? fam.head : OpFamily::Mult;
  head.p_min = q.p_min;
  head.p_max = q.p_max;
  head.init(rng);

  wire_banks();
}

void AugModel::wire_banks() {
  auto bank_for = [&](OpFamily f) -> const RemapBank* {
    if (f == OpFamily::Shift) return &shift_bank;
    if (f == OpFamily::Add) return &add_bank;
    return nullptr;
  };
  // Banks follow the configured/gene family so mutation does not rewire
  // mid-training (a multiplicative slice skips the remap anyway).
  stem.hws_mode = hws.mode;
  stem.bank = bank_for(stem.family);
  for (auto& blk : blocks_) {
    const RemapBank* b = bank_for(blk.gene_family);
    for (AugConv* c : {&blk.expand, &blk.dw, &blk.project}) {
      c->hws_mode = hws.mode;
      c->bank = b;
    }
  }
  head.hws_mode = hws.mode;
  head.bank = bank_for(head.family);
}

void AugModel::install_remap_nets(OpFamily family, const RemapPretrainResult& fitted) {
  RemapBank& bank = family == OpFamily::Add ? add_bank : shift_bank;
  bank.nets = fitted.nets;
  bank.prior = fitted.prior;
  bank.source_stats = fitted.source_stats;
  wire_banks();
}

void AugModel::set_hws_mode(RemapMode mode) {
  hws.mode = mode;
  wire_banks();
}

Binding AugModel::bind(Tape& t) {
  Binding b;
  b.tape = &t;
  for (const auto& p : params()) b.ids[p.tensor] = t.leaf(*p.tensor);
  return b;
}

std::vector<AugModel::ParamRef> AugModel::params() {
  std::vector<ParamRef> out;
  auto conv = [&](AugConv& c) { out.push_back({c.name + ".w", &c.weight, true}); };
  auto bn = [&](AugBN& n) {
    out.push_back({n.name + ".gamma", &n.gamma, false});
    out.push_back({n.name + ".beta", &n.beta, false});
  };
  conv(stem);
  bn(stem_bn);
  for (auto& blk : blocks_) {
    if (blk.has_expand) {
      conv(blk.expand);
      bn(blk.bn1);
    }
    conv(blk.dw);
    bn(blk.bn2);
    conv(blk.project);
    bn(blk.bn3);
  }
  out.push_back({head.name + ".w", &head.weight, true});
  out.push_back({head.name + ".b", &head.bias, false});
  return out;
}

int AugModel::forward(Tape& t, const Binding& bind, int x, bool augmented, bool training) {
  int h = stem.forward(t, bind, x, augmented, training);
  h = stem_bn.forward(t, bind, h, augmented, training);
  h = activate(t, h, arch.act);
  for (auto& blk : blocks_) {
    if (blk.depth_aug && !augmented) continue;  // never in the target path
    h = blk.forward(t, bind, h, augmented, training);
  }
  h = global_avg_pool(t, h);
  return head.forward(t, bind, h, augmented, training);
}

Tensor AugModel::infer_target(const Tensor& x) {
  Tape t;
  Binding b = bind(t);
  const int xid = t.leaf(x, false);
  const int logits = forward(t, b, xid, false, false);
  return t.val(logits);
}

void AugModel::mutate_block(int index) {
  Bottleneck& blk = blocks_.at(static_cast<std::size_t>(index));
  blk.set_family(blk.gene_family);
}

bool AugModel::block_mult_free(int index) const {
  const Bottleneck& blk = blocks_.at(static_cast<std::size_t>(index));
  const bool dw_free = blk.dw.family != OpFamily::Mult;
  const bool pj_free = blk.project.family != OpFamily::Mult;
  const bool ex_free = !blk.has_expand || blk.expand.family != OpFamily::Mult;
  return dw_free && pj_free && ex_free;
}

void AugModel::set_depth_scale(float s) {
  for (auto& blk : blocks_)
    if (blk.depth_aug) blk.depth_scale = s;
}

std::vector<int> l1_channel_order(const Tensor& w) {
  const int c = w.dim(0);
  const std::int64_t per = w.numel() / c;
  std::vector<double> norms(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < c; ++i)
    for (std::int64_t j = 0; j < per; ++j)
      norms[static_cast<std::size_t>(i)] += std::abs(w.data[static_cast<std::size_t>(i * per + j)]);
  std::vector<int> order(static_cast<std::size_t>(c));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norms[static_cast<std::size_t>(a)] > norms[static_cast<std::size_t>(b)]; });
  return order;
}

namespace {

// new_index -> old_index permutations applied in place.
void permute_dim0(Tensor& w, const std::vector<int>& perm) {
  const int c = w.dim(0);
  if (static_cast<int>(perm.size()) != c) throw AlignmentError("permutation/channel mismatch");
  const std::int64_t per = w.numel() / c;
  Tensor old = w;
  for (int i = 0; i < c; ++i)
    std::copy_n(old.data.data() + static_cast<std::int64_t>(perm[static_cast<std::size_t>(i)]) * per,
                per, w.data.data() + static_cast<std::int64_t>(i) * per);
}

void permute_dim1(Tensor& w, const std::vector<int>& perm) {
  const int o = w.dim(0), i_dim = w.dim(1);
  if (static_cast<int>(perm.size()) != i_dim) throw AlignmentError("permutation/channel mismatch");
  const int kk = w.ndim() == 4 ? w.dim(2) * w.dim(3) : 1;
  Tensor old = w;
  for (int o_i = 0; o_i < o; ++o_i)
    for (int i = 0; i < i_dim; ++i)
      std::copy_n(old.data.data() +
                      (static_cast<std::size_t>(o_i) * i_dim + perm[static_cast<std::size_t>(i)]) * kk,
                  kk, w.data.data() + (static_cast<std::size_t>(o_i) * i_dim + i) * kk);
}

void permute_bn(AugBN& bn, const std::vector<int>& perm) {
  permute_dim0(bn.gamma, perm);
  permute_dim0(bn.beta, perm);
  permute_dim0(bn.aug_stats.running_mean, perm);
  permute_dim0(bn.aug_stats.running_var, perm);
  // Channels entering the target slice from the augmented side have no
  // target-mode history; seed them from the augmented-mode statistics.
  Tensor old_mean = bn.target_stats.running_mean;
  Tensor old_var = bn.target_stats.running_var;
  for (int i = 0; i < bn.ct; ++i) {
    const int src = perm[static_cast<std::size_t>(i)];
    if (src < bn.ct) {
      bn.target_stats.running_mean.data[static_cast<std::size_t>(i)] =
          old_mean.data[static_cast<std::size_t>(src)];
      bn.target_stats.running_var.data[static_cast<std::size_t>(i)] =
          old_var.data[static_cast<std::size_t>(src)];
    } else {
      bn.target_stats.running_mean.data[static_cast<std::size_t>(i)] =
          bn.aug_stats.running_mean.data[static_cast<std::size_t>(i)];
      bn.target_stats.running_var.data[static_cast<std::size_t>(i)] =
          bn.aug_stats.running_var.data[static_cast<std::size_t>(i)];
    }
  }
}

}  // namespace

std::vector<int> reorder_expansion(Bottleneck& blk) {
  const int width = blk.dw.wide_out();
  if (!blk.has_expand) {
    // The expansion group is tied to the block input; nothing local to sort.
    std::vector<int> id(static_cast<std::size_t>(width));
    std::iota(id.begin(), id.end(), 0);
    return id;
  }
  if (blk.expand.wide_out() != width || blk.project.wide_in() != width)
    throw AlignmentError(blk.dw.name + ": expansion group widths disagree");
  const std::vector<int> perm = l1_channel_order(blk.dw.weight);
  permute_dim0(blk.expand.weight, perm);
  permute_bn(blk.bn1, perm);
  permute_dim0(blk.dw.weight, perm);
  permute_bn(blk.bn2, perm);
  permute_dim1(blk.project.weight, perm);
  return perm;
}

std::vector<std::vector<int>> AugModel::reorder_all() {
  std::vector<std::vector<int>> perms;
  for (auto& blk : blocks_) perms.push_back(reorder_expansion(blk));
  return perms;
}

GraphDesc AugModel::target_graph() const {
  GraphDesc g;
  g.in_channels = arch.in_channels;
  g.num_classes = arch.num_classes;
  g.layers.push_back({"stem", GraphLayer::Kind::Conv, to_string(stem.family), stem.ct_in,
                      stem.ct_out, stem.k, stem.stride, stem.pad, 1});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Bottleneck& blk = blocks_[i];
    if (blk.depth_aug) continue;
    const std::string base = "block" + std::to_string(i);
    const std::string fam = to_string(blk.gene_family);
    if (blk.has_expand)
      g.layers.push_back({base + ".expand", GraphLayer::Kind::Conv, fam, blk.expand.ct_in,
                          blk.expand.ct_out, 1, 1, 0, 1});
    g.layers.push_back({base + ".dw", GraphLayer::Kind::DWConv, fam, blk.dw.ct_in, blk.dw.ct_out,
                        blk.dw.k, blk.dw.stride, blk.dw.pad, blk.dw.ct_in});
    g.layers.push_back({base + ".project", GraphLayer::Kind::Conv, fam, blk.project.ct_in,
                        blk.project.ct_out, 1, 1, 0, 1});
  }
  g.layers.push_back({"head", GraphLayer::Kind::FC, to_string(head.family), head.ct_in, head.d_out,
                      1, 1, 0, 1});
  return g;
}

void poison_augmented_channels(AugModel& m) {
  const float nan = std::nanf("");
  auto poison_conv = [nan](AugConv& c) {
    const int kk = c.k * c.k;
    const int ci = c.depthwise ? 1 : c.wide_in();
    for (int o = 0; o < c.wide_out(); ++o)
      for (int i = 0; i < ci; ++i)
        for (int e = 0; e < kk; ++e) {
          const bool aug_out = o >= c.ct_out;
          const bool aug_in = !c.depthwise && i >= c.ct_in;
          if (aug_out || aug_in)
            c.weight.data[(static_cast<std::size_t>(o) * ci + i) * kk + e] = nan;
        }
  };
  auto poison_bn = [nan](AugBN& b) {
    for (int i = b.ct; i < b.ct + b.ca; ++i) {
      b.gamma.data[static_cast<std::size_t>(i)] = nan;
      b.beta.data[static_cast<std::size_t>(i)] = nan;
      b.aug_stats.running_mean.data[static_cast<std::size_t>(i)] = nan;
      b.aug_stats.running_var.data[static_cast<std::size_t>(i)] = nan;
    }
  };
  poison_conv(m.stem);
  poison_bn(m.stem_bn);
  for (auto& blk : m.blocks()) {
    if (blk.has_expand) {
      poison_conv(blk.expand);
      poison_bn(blk.bn1);
    }
    poison_conv(blk.dw);
    poison_bn(blk.bn2);
    poison_conv(blk.project);
    poison_bn(blk.bn3);
  }
  for (int o = 0; o < m.head.d_out; ++o)
    for (int i = m.head.ct_in; i < m.head.ct_in + m.head.ca_in; ++i)
      m.head.weight.data[static_cast<std::size_t>(o) * (m.head.ct_in + m.head.ca_in) + i] = nan;
}

}  // namespace mfnn
