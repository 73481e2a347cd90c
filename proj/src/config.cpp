#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mfnn/commands.hpp"

namespace mfnn {

using nlohmann::json;

namespace {

ActKind act_from_string(const std::string& s) {
  if (s == "relu") return ActKind::ReLU;
  if (s == "hswish") return ActKind::HSwish;
  throw ConfigError("unknown activation: " + s);
}

std::string act_to_string(ActKind a) { return a == ActKind::ReLU ? "relu" : "hswish"; }

RemapMode mode_from_string(const std::string& s) {
  if (s == "identity") return RemapMode::Identity;
  if (s == "bias") return RemapMode::Bias;
  if (s == "direct") return RemapMode::Direct;
  throw ConfigError("unknown hws mode: " + s);
}

std::string mode_to_string(RemapMode m) {
  switch (m) {
    case RemapMode::Identity: return "identity";
    case RemapMode::Bias: return "bias";
    case RemapMode::Direct: return "direct";
  }
  return "identity";
}

ArchSpec parse_arch(const json& j) {
  ArchSpec a;
  a.in_channels = j.value("in_channels", 3);
  a.resolution = j.value("resolution", 32);
  a.num_classes = j.value("num_classes", 10);
  a.stem_channels = j.value("stem_channels", 8);
  a.stem_stride = j.value("stem_stride", 2);
  a.act = act_from_string(j.value("activation", "relu"));
  if (j.contains("blocks")) {
    for (const auto& b : j.at("blocks")) {
      BlockSpec s;
      s.out_ch = b.value("out", 8);
      s.expand = b.value("expand", 2.0);
      s.stride = b.value("stride", 1);
      s.kernel = b.value("kernel", 3);
      a.blocks.push_back(s);
    }
  }
  return a;
}

json arch_json(const ArchSpec& a) {
  json j;
  j["in_channels"] = a.in_channels;
  j["resolution"] = a.resolution;
  j["num_classes"] = a.num_classes;
  j["stem_channels"] = a.stem_channels;
  j["stem_stride"] = a.stem_stride;
  j["activation"] = act_to_string(a.act);
  j["blocks"] = json::array();
  for (const auto& b : a.blocks)
    j["blocks"].push_back(
        {{"out", b.out_ch}, {"expand", b.expand}, {"stride", b.stride}, {"kernel", b.kernel}});
  return j;
}

}  // namespace

void apply_preset(RunConfig& c, const std::string& name) {
  static const std::vector<std::string> known{"base",     "netaug", "shift",
                                              "augshift", "add",    "augadd"};
  if (std::find(known.begin(), known.end(), name) == known.end())
    throw ConfigError("unknown preset: " + name);
  c.preset = name;
  auto all_families = [&](OpFamily f) {
    c.families.stem = f;
    c.families.blocks = {f};
    c.families.head = f;
  };
  if (name == "base") {
    all_families(OpFamily::Mult);
    c.aug.width_multiple = 1.0;
    c.aug.expand_multiple = 1.0;
    c.alpha2 = 0.0;
    c.hws.mode = RemapMode::Identity;
  } else if (name == "netaug") {
    all_families(OpFamily::Mult);
    c.hws.mode = RemapMode::Identity;
  } else if (name == "shift") {
    all_families(OpFamily::Shift);
    c.aug.width_multiple = 1.0;
    c.aug.expand_multiple = 1.0;
    c.alpha2 = 0.0;
    c.hws.mode = RemapMode::Identity;
  } else if (name == "augshift") {
    all_families(OpFamily::Shift);
    c.hws.mode = RemapMode::Bias;
  } else if (name == "add") {
    all_families(OpFamily::Add);
    // stem and classifier stay multiplicative in the adder configuration
    c.families.stem = OpFamily::Mult;
    c.families.head = OpFamily::Mult;
    c.aug.width_multiple = 1.0;
    c.aug.expand_multiple = 1.0;
    c.alpha2 = 0.0;
    c.hws.mode = RemapMode::Identity;
  } else if (name == "augadd") {
    all_families(OpFamily::Add);
    c.families.stem = OpFamily::Mult;
    c.families.head = OpFamily::Mult;
    c.hws.mode = RemapMode::Bias;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig c;
  if (j.contains("arch")) c.arch = parse_arch(j.at("arch"));
  if (j.contains("preset")) apply_preset(c, j.at("preset").get<std::string>());
  if (j.contains("families")) {
    const auto& f = j.at("families");
    c.families.stem = family_from_string(f.value("stem", "mult"));
    c.families.blocks.clear();
    if (f.contains("blocks")) {
      if (f.at("blocks").is_string()) {
        c.families.blocks = {family_from_string(f.at("blocks").get<std::string>())};
      } else {
        for (const auto& b : f.at("blocks"))
          c.families.blocks.push_back(family_from_string(b.get<std::string>()));
      }
    }
    c.families.head = family_from_string(f.value("head", "mult"));
  }
  if (j.contains("aug")) {
    const auto& a = j.at("aug");
    c.aug.width_multiple = a.value("width_multiple", c.aug.width_multiple);
    c.aug.expand_multiple = a.value("expand_multiple", c.aug.expand_multiple);
    if (a.contains("operators")) {
      const std::string ops = a.at("operators").get<std::string>();
      if (ops == "target")
        c.aug.homogeneous = true;
      else if (ops == "mult")
        c.aug.homogeneous = false;
      else
        throw ConfigError("aug.operators must be 'mult' or 'target'");
    }
    c.alpha1 = a.value("alpha1", c.alpha1);
    c.alpha2 = a.value("alpha2", c.alpha2);
    c.reorder = a.value("reorder", c.reorder);
  }
  if (j.contains("hws")) {
    const auto& h = j.at("hws");
    if (h.contains("mode")) c.hws.mode = mode_from_string(h.at("mode").get<std::string>());
    c.pretrained_remap = h.value("pretrained", c.pretrained_remap);
    if (h.contains("shift_prior")) {
      c.hws.shift_prior.location = h.at("shift_prior").value("location", 0.0);
      c.hws.shift_prior.scale = h.at("shift_prior").value("scale", 0.05);
    }
    if (h.contains("add_prior")) {
      c.hws.add_prior.location = h.at("add_prior").value("location", 0.0);
      c.hws.add_prior.scale = h.at("add_prior").value("scale", 0.5);
    }
  }
  if (j.contains("quant")) {
    c.quant.p_min = j.at("quant").value("p_min", -15);
    c.quant.p_max = j.at("quant").value("p_max", 0);
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    c.optim.lr = o.value("lr", 0.05f);
    c.optim.momentum = o.value("momentum", 0.9f);
    c.optim.nesterov = o.value("nesterov", true);
    c.optim.weight_decay = o.value("weight_decay", 4e-5f);
    c.optim.label_smoothing = o.value("label_smoothing", 0.1f);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.epochs = t.value("epochs", c.epochs);
    c.batch = t.value("batch", c.batch);
    c.seed = t.value("seed", static_cast<std::uint64_t>(0));
    c.val_fraction = t.value("val_fraction", c.val_fraction);
  }
  c.data = j.value("data", c.data);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (c.data.empty()) throw ConfigError("config is missing a data source");
  if (c.arch.blocks.empty()) throw ConfigError("config describes no blocks");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& c) {
  json j;
  j["arch"] = arch_json(c.arch);
  json fams;
  fams["stem"] = to_string(c.families.stem);
  json blocks = json::array();
  for (OpFamily f : c.families.blocks) blocks.push_back(to_string(f));
  fams["blocks"] = blocks;
  fams["head"] = to_string(c.families.head);
  j["families"] = fams;
  j["aug"] = {{"width_multiple", c.aug.width_multiple},
              {"expand_multiple", c.aug.expand_multiple},
              {"operators", c.aug.homogeneous ? "target" : "mult"},
              {"alpha1", c.alpha1},
              {"alpha2", c.alpha2},
              {"reorder", c.reorder}};
  j["hws"] = {{"mode", mode_to_string(c.hws.mode)},
              {"pretrained", c.pretrained_remap},
              {"shift_prior",
               {{"location", c.hws.shift_prior.location}, {"scale", c.hws.shift_prior.scale}}},
              {"add_prior",
               {{"location", c.hws.add_prior.location}, {"scale", c.hws.add_prior.scale}}}};
  j["quant"] = {{"p_min", c.quant.p_min}, {"p_max", c.quant.p_max}};
  j["optim"] = {{"lr", c.optim.lr},
                {"momentum", c.optim.momentum},
                {"nesterov", c.optim.nesterov},
                {"weight_decay", c.optim.weight_decay},
                {"label_smoothing", c.optim.label_smoothing}};
  j["train"] = {{"epochs", c.epochs},
                {"batch", c.batch},
                {"seed", c.seed},
                {"val_fraction", c.val_fraction}};
  j["data"] = c.data;
  j["out_dir"] = c.out_dir;
  if (!c.preset.empty()) j["preset"] = c.preset;
  return j.dump(2);
}

namespace {

StageSpec parse_stage(const json& j) {
  StageSpec s;
  s.out_ch = j.value("out", 8);
  s.expand = j.value("expand", 2.0);
  s.stride = j.value("stride", 1);
  s.kernel = j.value("kernel", 3);
  s.max_depth = j.value("max_depth", 2);
  return s;
}

}  // namespace

SearchConfig parse_search_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("search config parse error: ") + e.what());
  }
  SearchConfig c;
  const auto& sp = j.at("space");
  c.space.in_channels = sp.value("in_channels", 3);
  c.space.resolution = sp.value("resolution", 32);
  c.space.num_classes = sp.value("num_classes", 10);
  c.space.stem_channels = sp.value("stem_channels", 8);
  c.space.stem_stride = sp.value("stem_stride", 2);
  for (const auto& st : sp.at("stages")) c.space.stages.push_back(parse_stage(st));
  if (sp.contains("block_types")) {
    c.space.block_types.clear();
    for (const auto& b : sp.at("block_types"))
      c.space.block_types.push_back(family_from_string(b.get<std::string>()));
  }
  auto load_doubles = [&](const char* key, std::vector<double>& dst) {
    if (sp.contains(key)) {
      dst.clear();
      for (const auto& v : sp.at(key)) dst.push_back(v.get<double>());
    }
  };
  load_doubles("width_multiples", c.space.width_multiples);
  load_doubles("expand_multiples", c.space.expand_multiples);
  load_doubles("mutation_starts", c.space.mutation_starts);
  load_doubles("mutation_stops", c.space.mutation_stops);

  if (j.contains("limits")) {
    const auto& l = j.at("limits");
    c.evolve.limits.max_energy_mj = l.value("max_energy_mj", 1e30);
    c.evolve.limits.max_latency_ms = l.value("max_latency_ms", 1e30);
    c.evolve.limits.max_params_m = l.value("max_params_m", 1e30);
    c.eval.limits = c.evolve.limits;
  }
  if (j.contains("evolve")) {
    const auto& e = j.at("evolve");
    c.evolve.population = e.value("population", c.evolve.population);
    c.evolve.generations = e.value("generations", c.evolve.generations);
    c.evolve.tournament = e.value("tournament", c.evolve.tournament);
    c.evolve.mutation_prob = e.value("mutation_prob", c.evolve.mutation_prob);
    c.evolve.feasibility_screen = e.value("feasibility_screen", c.evolve.feasibility_screen);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.budget_epochs = e.value("budget_epochs", c.eval.budget_epochs);
    c.eval.batch = e.value("batch", c.eval.batch);
    c.eval.lr = e.value("lr", c.eval.lr);
    c.eval.val_fraction = e.value("val_fraction", c.eval.val_fraction);
  }
  c.eval.input_resolution = c.space.resolution;
  c.data = j.value("data", std::string{});
  c.out_dir = j.value("out_dir", c.out_dir);
  c.seed = j.value("seed", static_cast<std::uint64_t>(0));
  c.top_k = j.value("top_k", c.top_k);
  c.fitness_is_neg_energy = j.value("fitness_is_neg_energy", false);
  if (!c.fitness_is_neg_energy && c.data.empty())
    throw ConfigError("search config needs a data source for trained fitness");
  return c;
}

SearchConfig load_search_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open search config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_search_config(ss.str());
}

}  // namespace mfnn
