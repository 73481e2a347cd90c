#include "mfnn/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfnn {

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::Mult: return "mult";
    case OpKind::Add: return "add";
    case OpKind::Shift: return "shift";
  }
  return "?";
}

std::string to_string(Dtype d) {
  switch (d) {
    case Dtype::FP32: return "fp32";
    case Dtype::FP16: return "fp16";
    case Dtype::INT32: return "int32";
    case Dtype::INT8: return "int8";
  }
  return "?";
}

EnergyTable EnergyTable::cmos45() {
  EnergyTable t;
  t.pj[{OpKind::Mult, Dtype::FP32}] = 3.7;
  t.pj[{OpKind::Mult, Dtype::FP16}] = 0.9;
  t.pj[{OpKind::Mult, Dtype::INT32}] = 3.1;
  t.pj[{OpKind::Mult, Dtype::INT8}] = 0.2;
  t.pj[{OpKind::Add, Dtype::FP32}] = 1.1;
  t.pj[{OpKind::Add, Dtype::FP16}] = 0.4;
  t.pj[{OpKind::Add, Dtype::INT32}] = 0.1;
  t.pj[{OpKind::Add, Dtype::INT8}] = 0.03;
  t.pj[{OpKind::Shift, Dtype::INT32}] = 0.13;
  t.pj[{OpKind::Shift, Dtype::INT8}] = 0.024;
  return t;
}

double EnergyTable::lookup(OpKind k, Dtype d) const {
  auto it = pj.find({k, d});
  if (it == pj.end())
    throw ConfigError("no energy entry for " + to_string(k) + "/" + to_string(d));
  if (it->second <= 0.0) throw ConfigError("energy entries must be positive");
  return it->second;
}

double OpCount::total_mults() const {
  double s = 0;
  for (const auto& l : layers) s += l.mults;
  return s;
}
double OpCount::total_adds() const {
  double s = 0;
  for (const auto& l : layers) s += l.adds;
  return s;
}
double OpCount::total_shifts() const {
  double s = 0;
  for (const auto& l : layers) s += l.shifts;
  return s;
}
double OpCount::total_params() const {
  double s = 0;
  for (const auto& l : layers) s += l.params;
  return s;
}

namespace {

int make_divisible(double v, int divisor = 8) {
  int nv = std::max(divisor, (static_cast<int>(v + divisor / 2.0) / divisor) * divisor);
  if (nv < 0.9 * v) nv += divisor;
  return nv;
}

void book_taps(LayerOps& ops, const std::string& family, double taps, double adds_per_add_tap) {
  if (family == "mult") {
    ops.mults = taps;
    ops.adds = taps;
  } else if (family == "shift") {
    ops.shifts = taps;
    ops.adds = taps;
    ops.add_dtype = Dtype::INT32;
  } else if (family == "add") {
    ops.adds = taps * adds_per_add_tap;
    ops.add_dtype = Dtype::INT32;
  } else {
    throw ConfigError("unknown operator family: " + family);
  }
}

}  // namespace

GraphDesc mobilenet_v2_w035(int num_classes) {
  const double width = 0.35;
  // t (expand), c (channels), n (repeats), s (stride)
  const int cfg[7][4] = {{1, 16, 1, 1}, {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
                         {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  GraphDesc g;
  g.in_channels = 3;
  g.num_classes = num_classes;
  const int stem = make_divisible(32 * width);
  g.layers.push_back({"stem", GraphLayer::Kind::Conv, "mult", 3, stem, 3, 2, 1, 1});
  int cin = stem;
  int bi = 0;
  for (const auto& row : cfg) {
    const int t = row[0], n = row[2];
    const int cout = make_divisible(row[1] * width);
    for (int i = 0; i < n; ++i, ++bi) {
      const int stride = i == 0 ? row[3] : 1;
      const int hidden = t == 1 ? cin : cin * t;
      const std::string base = "block" + std::to_string(bi);
      if (t != 1)
        g.layers.push_back(
            {base + ".expand", GraphLayer::Kind::Conv, "mult", cin, hidden, 1, 1, 0, 1});
      g.layers.push_back(
          {base + ".dw", GraphLayer::Kind::DWConv, "mult", hidden, hidden, 3, stride, 1, hidden});
      g.layers.push_back(
          {base + ".project", GraphLayer::Kind::Conv, "mult", hidden, cout, 1, 1, 0, 1});
      cin = cout;
    }
  }
  const int last = 1280;  // sub-unit width multipliers keep the full head width
  g.layers.push_back({"head_conv", GraphLayer::Kind::Conv, "mult", cin, last, 1, 1, 0, 1});
  g.layers.push_back({"classifier", GraphLayer::Kind::FC, "mult", last, num_classes, 1, 1, 0, 1});
  return g;
}

OpCount count_ops(const GraphDesc& graph, int input_resolution, const CountOptions& opt) {
  if (input_resolution <= 0) throw ConfigError("input resolution must be positive");
  OpCount out;
  int h = input_resolution;
  int c = graph.in_channels;
  for (const auto& l : graph.layers) {
    LayerOps ops;
    ops.name = l.name;
    if (l.kind == GraphLayer::Kind::FC) {
      if (l.c_in != c) throw ConfigError("fc input width disagrees with the running shape");
      const double taps = static_cast<double>(l.c_in) * l.c_out;
      ops.params = taps + l.c_out;
      book_taps(ops, l.family, taps, opt.addconv_adds_per_tap);
      out.layers.push_back(ops);
      c = l.c_out;
      h = 1;
      continue;
    }
    if (l.c_in != c)
      throw ConfigError("layer " + l.name + " input channels disagree with the running shape");
    const int oh = (h + 2 * l.pad - l.k) / l.stride + 1;
    if (oh <= 0) throw ConfigError("layer " + l.name + " output collapsed to zero size");
    const double taps = static_cast<double>(l.c_out) *
                        (static_cast<double>(l.c_in) / l.groups) * l.k * l.k * oh * oh;
    ops.params =
        static_cast<double>(l.c_out) * (static_cast<double>(l.c_in) / l.groups) * l.k * l.k;
    book_taps(ops, l.family, taps, opt.addconv_adds_per_tap);
    out.layers.push_back(ops);
    c = l.c_out;
    h = oh;
  }
  return out;
}

double energy_mj(const OpCount& counts, const EnergyTable& table) {
  double pj = 0.0;
  for (const auto& l : counts.layers) {
    if (l.mults > 0) pj += l.mults * table.lookup(OpKind::Mult, l.mult_dtype);
    if (l.adds > 0) pj += l.adds * table.lookup(OpKind::Add, l.add_dtype);
    if (l.shifts > 0) pj += l.shifts * table.lookup(OpKind::Shift, l.shift_dtype);
  }
  return pj * 1e-9;  // pJ -> mJ
}

double latency_proxy_ms(const OpCount& counts, const ThroughputModel& tp) {
  if (tp.mults_per_ms <= 0 || tp.adds_per_ms <= 0 || tp.shifts_per_ms <= 0)
    throw ConfigError("throughputs must be positive");
  return counts.total_mults() / tp.mults_per_ms + counts.total_adds() / tp.adds_per_ms +
         counts.total_shifts() / tp.shifts_per_ms;
}

CostReport cost_report(const GraphDesc& graph, int input_resolution, const EnergyTable& table,
                       const ThroughputModel& tp, const CountOptions& opt) {
  const OpCount counts = count_ops(graph, input_resolution, opt);
  CostReport r;
  r.energy_mj = energy_mj(counts, table);
  r.latency_proxy_ms = latency_proxy_ms(counts, tp);
  r.params_m = counts.total_params() / 1e6;
  r.mults_m = counts.total_mults() / 1e6;
  r.adds_m = counts.total_adds() / 1e6;
  r.shifts_m = counts.total_shifts() / 1e6;
  return r;
}

std::string op_count_csv(const OpCount& counts) {
  std::ostringstream os;
  os << "layer,mults,adds,shifts,params\n";
  for (const auto& l : counts.layers)
    os << l.name << ',' << l.mults << ',' << l.adds << ',' << l.shifts << ',' << l.params << '\n';
  return os.str();
}

}  // namespace mfnn
