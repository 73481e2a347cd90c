#include "mfnn/export.hpp"

#include <cmath>

#include "mfnn/serialize.hpp"

namespace mfnn {

namespace {

constexpr std::uint32_t kExportMagic = 0x584e464du;  // "MFNX"
constexpr std::uint32_t kExportVersion = 1;

Tensor bn_eval(const Tensor& x, const Tensor& g, const Tensor& b, const Tensor& mean,
               const Tensor& var, float eps = 1e-5f) {
  const int n = x.dim(0), c = x.dim(1);
  const int hw = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  Tensor y(x.shape);
  for (int ci = 0; ci < c; ++ci) {
    const float is = 1.0f / std::sqrt(var.data[static_cast<std::size_t>(ci)] + eps);
    const float gg = g.data[static_cast<std::size_t>(ci)];
    const float bb = b.data[static_cast<std::size_t>(ci)];
    const float mu = mean.data[static_cast<std::size_t>(ci)];
    for (int ni = 0; ni < n; ++ni) {
      const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * hw;
      for (int k = 0; k < hw; ++k) {
        const float xh = (x.data[off + k] - mu) * is;
        y.data[off + k] = gg * xh + bb;
      }
    }
  }
  return y;
}

Tensor activate_value(const Tensor& x, ActKind a) {
  Tensor y = x;
  if (a == ActKind::ReLU) {
    for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
  } else {
    for (auto& v : y.data) {
      const float r6 = std::min(std::max(v + 3.0f, 0.0f), 6.0f);
      v = v * r6 / 6.0f;
    }
  }
  return y;
}

Tensor gap_value(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      const float* src = x.data.data() + (static_cast<std::size_t>(i) * c + j) * hw;
      for (int k = 0; k < hw; ++k) acc += src[k];
      y.at2(i, j) = static_cast<float>(acc / hw);
    }
  return y;
}

Tensor add_value(const Tensor& a, const Tensor& b) {
  Tensor y = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
  return y;
}

ExportedConv freeze_conv(const AugConv& c, const AugBN& bn) {
  ExportedConv out;
  out.name = c.name;
  out.depthwise = c.depthwise;
  out.c_in = c.ct_in;
  out.c_out = c.ct_out;
  out.k = c.k;
  out.stride = c.stride;
  out.pad = c.pad;
  out.family = c.family;
  out.p_min = c.p_min;
  out.p_max = c.p_max;
  // target_weight_value already applies HWS; for shift it also rounds
  // through the 5-bit codes, so quantizing again is lossless.
  Tensor w = c.target_weight_value(false);
  if (c.family == OpFamily::Shift)
    out.qweight = canonicalize(quantize_pow2(w, c.p_min, c.p_max));
  else
    out.weight = std::move(w);
  if (bn.ct != c.ct_out) throw AlignmentError(c.name + ": bn width disagrees with conv output");
  out.bn_gamma = Tensor({bn.ct});
  out.bn_beta = Tensor({bn.ct});
  std::copy_n(bn.gamma.data.data(), bn.ct, out.bn_gamma.data.data());
  std::copy_n(bn.beta.data.data(), bn.ct, out.bn_beta.data.data());
  out.bn_mean = bn.target_stats.running_mean;
  out.bn_var = bn.target_stats.running_var;
  return out;
}

}  // namespace

Tensor ExportedConv::weight_value() const {
  return family == OpFamily::Shift ? dequantize(qweight) : weight;
}

ExportedModel export_target(const AugModel& m) {
  ExportedModel out;
  out.in_channels = m.arch.in_channels;
  out.num_classes = m.arch.num_classes;
  out.resolution = m.arch.resolution;
  out.act = m.arch.act;
  out.stem = freeze_conv(m.stem, m.stem_bn);
  for (const auto& blk : m.blocks()) {
    if (blk.depth_aug) continue;  // training-only depth augmentation
    ExportedBlock eb;
    eb.has_expand = blk.has_expand;
    if (blk.has_expand) eb.expand = freeze_conv(blk.expand, blk.bn1);
    eb.dw = freeze_conv(blk.dw, blk.bn2);
    eb.project = freeze_conv(blk.project, blk.bn3);
    eb.residual = blk.residual;
    if (eb.residual && eb.project.c_out != (eb.has_expand ? eb.expand.c_in : eb.dw.c_in))
      throw AlignmentError(blk.project.name + ": residual channels misaligned");
    out.blocks.push_back(std::move(eb));
  }
  out.fc_family = m.head.family;
  out.fc_p_min = m.head.p_min;
  out.fc_p_max = m.head.p_max;
  Tensor fw = m.head.target_weight_value(false);
  if (m.head.family == OpFamily::Shift)
    out.fc_qweight = canonicalize(quantize_pow2(fw, m.head.p_min, m.head.p_max));
  else
    out.fc_weight = std::move(fw);
  out.fc_bias = m.head.bias;
  return out;
}

namespace {

Tensor conv_forward_float(const ExportedConv& c, const Tensor& x) {
  const Conv2dParams p{c.stride, c.pad, c.depthwise ? c.c_in : 1};
  Tensor y;
  if (c.family == OpFamily::Add)
    y = l1dist_conv_value(x, c.weight, p);
  else
    y = conv2d_value(x, c.weight_value(), p);
  return bn_eval(y, c.bn_gamma, c.bn_beta, c.bn_mean, c.bn_var);
}

Tensor conv_forward_integer(const ExportedConv& c, const Tensor& x) {
  const Conv2dParams p{c.stride, c.pad, c.depthwise ? c.c_in : 1};
  Tensor y;
  if (c.family == OpFamily::Shift) {
    y = shift_conv_eval(quantize_activation(x), c.qweight, p, c.name);
  } else if (c.family == OpFamily::Add) {
    y = add_conv_eval16(x, c.weight, p, c.name);
  } else {
    y = conv2d_value(x, c.weight, p);
  }
  return bn_eval(y, c.bn_gamma, c.bn_beta, c.bn_mean, c.bn_var);
}

template <typename ConvFn>
Tensor run_exported(const ExportedModel& m, const Tensor& x, ConvFn conv_fn, bool integer_fc) {
  Tensor h = conv_fn(m.stem, x);
  h = activate_value(h, m.act);
  for (const auto& blk : m.blocks) {
    Tensor in = h;
    if (blk.has_expand) {
      h = conv_fn(blk.expand, h);
      h = activate_value(h, m.act);
    }
    h = conv_fn(blk.dw, h);
    h = activate_value(h, m.act);
    h = conv_fn(blk.project, h);
    if (blk.residual) h = add_value(in, h);
  }
  h = gap_value(h);
  if (m.fc_family == OpFamily::Shift) {
    if (integer_fc) return shift_linear_eval(quantize_activation(h), m.fc_qweight, &m.fc_bias, "head");
    return linear_value(h, dequantize(m.fc_qweight), &m.fc_bias);
  }
  return linear_value(h, m.fc_weight, &m.fc_bias);
}

}  // namespace

Tensor ExportedModel::forward_float(const Tensor& x) const {
  return run_exported(*this, x, conv_forward_float, false);
}

Tensor ExportedModel::forward_integer(const Tensor& x) const {
  return run_exported(*this, x, conv_forward_integer, true);
}

GraphDesc ExportedModel::graph() const {
  GraphDesc g;
  g.in_channels = in_channels;
  g.num_classes = num_classes;
  auto push = [&](const ExportedConv& c) {
    g.layers.push_back({c.name,
                        c.depthwise ? GraphLayer::Kind::DWConv : GraphLayer::Kind::Conv,
                        to_string(c.family), c.c_in, c.c_out, c.k, c.stride, c.pad,
                        c.depthwise ? c.c_in : 1});
  };
  push(stem);
  for (const auto& blk : blocks) {
    if (blk.has_expand) push(blk.expand);
    push(blk.dw);
    push(blk.project);
  }
  g.layers.push_back({"head", GraphLayer::Kind::FC, to_string(fc_family),
                      fc_family == OpFamily::Shift ? static_cast<int>(fc_qweight.shape[1])
                                                   : fc_weight.dim(1),
                      num_classes, 1, 1, 0, 1});
  return g;
}

namespace {

void write_pow2(Writer& w, const PowTwoWeight& q) {
  w.u32(static_cast<std::uint32_t>(q.shape.size()));
  for (int d : q.shape) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(q.p_min + 1000));
  w.u32(static_cast<std::uint32_t>(q.p_max + 1000));
  w.bytes(pack_codes(pow2_codes(q)));
}

PowTwoWeight read_pow2(Reader& r) {
  const std::uint32_t nd = r.u32();
  if (nd > 8) throw FormatError("implausible weight rank", r.offset() - 4);
  PowTwoWeight q;
  std::int64_t numel = 1;
  for (std::uint32_t i = 0; i < nd; ++i) {
    q.shape.push_back(static_cast<int>(r.u32()));
    numel *= q.shape.back();
  }
  q.p_min = static_cast<int>(r.u32()) - 1000;
  q.p_max = static_cast<int>(r.u32()) - 1000;
  if (q.p_max - q.p_min != 15) throw FormatError("exponent window is not 16 levels", r.offset());
  const auto packed = r.bytes();
  const auto codes = unpack_codes(packed, static_cast<std::size_t>(numel));
  q.sign.resize(static_cast<std::size_t>(numel));
  q.exponent.resize(static_cast<std::size_t>(numel));
  for (std::size_t i = 0; i < codes.size(); ++i)
    decode_pow2(codes[i], q.p_min, q.sign[i], q.exponent[i]);
  return q;
}

void write_conv(Writer& w, const ExportedConv& c) {
  w.str(c.name);
  w.u8(c.depthwise ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(c.c_in));
  w.u32(static_cast<std::uint32_t>(c.c_out));
  w.u32(static_cast<std::uint32_t>(c.k));
  w.u32(static_cast<std::uint32_t>(c.stride));
  w.u32(static_cast<std::uint32_t>(c.pad));
  w.str(to_string(c.family));
  w.u32(static_cast<std::uint32_t>(c.p_min + 1000));
  w.u32(static_cast<std::uint32_t>(c.p_max + 1000));
  if (c.family == OpFamily::Shift)
    write_pow2(w, c.qweight);
  else
    w.tensor(c.weight);
  w.tensor(c.bn_gamma);
  w.tensor(c.bn_beta);
  w.tensor(c.bn_mean);
  w.tensor(c.bn_var);
}

ExportedConv read_conv(Reader& r) {
  ExportedConv c;
  c.name = r.str();
  c.depthwise = r.u8() != 0;
  c.c_in = static_cast<int>(r.u32());
  c.c_out = static_cast<int>(r.u32());
  c.k = static_cast<int>(r.u32());
  c.stride = static_cast<int>(r.u32());
  c.pad = static_cast<int>(r.u32());
  c.family = family_from_string(r.str());
  c.p_min = static_cast<int>(r.u32()) - 1000;
  c.p_max = static_cast<int>(r.u32()) - 1000;
  if (c.family == OpFamily::Shift)
    c.qweight = read_pow2(r);
  else
    c.weight = r.tensor();
  c.bn_gamma = r.tensor();
  c.bn_beta = r.tensor();
  c.bn_mean = r.tensor();
  c.bn_var = r.tensor();
  return c;
}

}  // namespace

void save_exported(const ExportedModel& m, const std::string& path) {
  Writer w;
  w.u32(kExportMagic);
  w.u32(kExportVersion);
  w.u32(static_cast<std::uint32_t>(m.in_channels));
  w.u32(static_cast<std::uint32_t>(m.num_classes));
  w.u32(static_cast<std::uint32_t>(m.resolution));
  w.u8(m.act == ActKind::ReLU ? 0 : 1);
  write_conv(w, m.stem);
  w.u32(static_cast<std::uint32_t>(m.blocks.size()));
  for (const auto& blk : m.blocks) {
    w.u8(blk.has_expand ? 1 : 0);
    if (blk.has_expand) write_conv(w, blk.expand);
    write_conv(w, blk.dw);
    write_conv(w, blk.project);
    w.u8(blk.residual ? 1 : 0);
  }
  w.str(to_string(m.fc_family));
  w.u32(static_cast<std::uint32_t>(m.fc_p_min + 1000));
  w.u32(static_cast<std::uint32_t>(m.fc_p_max + 1000));
  if (m.fc_family == OpFamily::Shift)
    write_pow2(w, m.fc_qweight);
  else
    w.tensor(m.fc_weight);
  w.tensor(m.fc_bias);
  w.save(path);
}

ExportedModel load_exported(const std::string& path) {
  Reader r = Reader::from_file(path);
  if (r.u32() != kExportMagic) throw FormatError("not an exported model file", 0);
  if (r.u32() != kExportVersion) throw FormatError("unsupported export version", 4);
  ExportedModel m;
  m.in_channels = static_cast<int>(r.u32());
  m.num_classes = static_cast<int>(r.u32());
  m.resolution = static_cast<int>(r.u32());
  m.act = r.u8() == 0 ? ActKind::ReLU : ActKind::HSwish;
  m.stem = read_conv(r);
  const std::uint32_t nb = r.u32();
  for (std::uint32_t i = 0; i < nb; ++i) {
    ExportedBlock blk;
    blk.has_expand = r.u8() != 0;
    if (blk.has_expand) blk.expand = read_conv(r);
    blk.dw = read_conv(r);
    blk.project = read_conv(r);
    blk.residual = r.u8() != 0;
    m.blocks.push_back(std::move(blk));
  }
  m.fc_family = family_from_string(r.str());
  m.fc_p_min = static_cast<int>(r.u32()) - 1000;
  m.fc_p_max = static_cast<int>(r.u32()) - 1000;
  if (m.fc_family == OpFamily::Shift)
    m.fc_qweight = read_pow2(r);
  else
    m.fc_weight = r.tensor();
  m.fc_bias = r.tensor();
  return m;
}

}  // namespace mfnn
