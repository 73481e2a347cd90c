#pragma once

#include <map>
#include <string>
#include <vector>

#include "mfnn/error.hpp"

namespace mfnn {

enum class OpKind { Mult, Add, Shift };
enum class Dtype { FP32, FP16, INT32, INT8 };

std::string to_string(OpKind k);
std::string to_string(Dtype d);

// Energy in pJ per scalar operation; seeded from 45nm CMOS measurements.
struct EnergyTable {
  std::map<std::pair<OpKind, Dtype>, double> pj;

  static EnergyTable cmos45();
  double lookup(OpKind k, Dtype d) const;
};

// Per-layer operation tallies. Counts are raw (not millions).
struct LayerOps {
  std::string name;
  double mults = 0, adds = 0, shifts = 0;
  Dtype mult_dtype = Dtype::FP32;
  Dtype add_dtype = Dtype::FP32;
  Dtype shift_dtype = Dtype::INT32;
  double params = 0;
};

struct OpCount {
  std::vector<LayerOps> layers;
  double total_mults() const;
  double total_adds() const;
  double total_shifts() const;
  double total_params() const;
};

struct CostReport {
  double energy_mj = 0;
  double latency_proxy_ms = 0;
  double params_m = 0;
  double mults_m = 0, adds_m = 0, shifts_m = 0;
};

// Static layer graph for counting; families follow the glossary
// (mult | shift | add).
struct GraphLayer {
  std::string name;
  enum class Kind { Conv, DWConv, FC } kind = Kind::Conv;
  std::string family = "mult";
  int c_in = 0, c_out = 0, k = 1, stride = 1, pad = 0, groups = 1;
};

struct GraphDesc {
  int in_channels = 3;
  int num_classes = 10;
  std::vector<GraphLayer> layers;
};

// MobileNetV2 at width 0.35 with the standard divisible-by-8 channel rounding.
GraphDesc mobilenet_v2_w035(int num_classes = 100);

struct CountOptions {
  // Adds booked per tap by an adder-conv layer (subtract + accumulate).
  double addconv_adds_per_tap = 2.0;
};

// Conv taps = C_out * C_in/groups * K^2 * H' * W'; one accumulate-add per tap.
// Shift layers book taps as shifts, adder layers as addconv_adds_per_tap adds.
OpCount count_ops(const GraphDesc& graph, int input_resolution, const CountOptions& opt = {});

double energy_mj(const OpCount& counts, const EnergyTable& table);

// Throughputs in ops/ms per kind; latency = sum(count / throughput).
struct ThroughputModel {
  double mults_per_ms = 2.0e6;
  double adds_per_ms = 8.0e6;
  double shifts_per_ms = 8.0e6;
};

double latency_proxy_ms(const OpCount& counts, const ThroughputModel& tp);

CostReport cost_report(const GraphDesc& graph, int input_resolution,
                       const EnergyTable& table = EnergyTable::cmos45(),
                       const ThroughputModel& tp = {}, const CountOptions& opt = {});

// CSV rows: layer, mults, adds, shifts, params.
std::string op_count_csv(const OpCount& counts);

}  // namespace mfnn
