#include "mfnn/nas.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace mfnn {

int SearchSpace::total_layers() const {
  int n = 0;
  for (const auto& s : stages) n += s.max_depth;
  return n;
}

std::string HardwareLimits::violated(const CostReport& r) const {
  // Report the tightest violation (largest overshoot ratio).
  double worst = 1.0;
  std::string name;
  if (r.energy_mj / max_energy_mj > worst) {
    worst = r.energy_mj / max_energy_mj;
    name = "energy";
  }
  if (r.latency_proxy_ms / max_latency_ms > worst) {
    worst = r.latency_proxy_ms / max_latency_ms;
    name = "latency";
  }
  if (r.params_m / max_params_m > worst) {
    worst = r.params_m / max_params_m;
    name = "params";
  }
  return name;
}

std::string Candidate::gene_key() const {
  std::ostringstream os;
  for (int v : target_depth) os << v << ',';
  os << '|';
  for (int v : subnet_depth) os << v << ',';
  os << '|';
  for (int v : block_type) os << v << ',';
  os << '|' << width_idx << '|' << expand_idx << '|' << start_idx << '|' << stop_idx;
  return os.str();
}

std::uint64_t Candidate::id() const {
  const std::string key = gene_key();
  std::uint64_t h = 1469598103934665603ull;
  for (char c : key) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

SubnetPlan cut_subnet(int supernet_layers, const std::vector<int>& selected_mask) {
  if (static_cast<int>(selected_mask.size()) != supernet_layers)
    throw ConfigError("selection mask length disagrees with the supernet");
  if (std::none_of(selected_mask.begin(), selected_mask.end(), [](int v) { return v != 0; }))
    throw ConfigError("empty selection is not a valid candidate");
  SubnetPlan plan;
  for (int i = 0; i < supernet_layers; ++i) {
    const bool selected = selected_mask[static_cast<std::size_t>(i)] != 0;
    const bool left = i > 0 && selected_mask[static_cast<std::size_t>(i) - 1] != 0;
    const bool right =
        i + 1 < supernet_layers && selected_mask[static_cast<std::size_t>(i) + 1] != 0;
    if (selected) {
      plan.layers.push_back(i);
      plan.depth_aug.push_back(false);
      plan.target_layers.push_back(i);
    } else if (left || right) {
      plan.layers.push_back(i);
      plan.depth_aug.push_back(true);
    }
  }
  return plan;
}

namespace {

void check_candidate(const SearchSpace& space, const Candidate& c) {
  const std::size_t n = space.stages.size();
  if (c.target_depth.size() != n || c.subnet_depth.size() != n)
    throw ConfigError("candidate stage genes disagree with the space");
  if (static_cast<int>(c.block_type.size()) != space.total_layers())
    throw ConfigError("candidate layer genes disagree with the space");
  for (std::size_t s = 0; s < n; ++s) {
    const int td = c.target_depth[s], sd = c.subnet_depth[s];
    if (td < 1) throw ConfigError("empty stage is not a valid candidate");
    if (td > sd || sd > space.stages[s].max_depth)
      throw ConfigError("candidate depths violate target <= subnet <= max");
  }
  for (int bt : c.block_type)
    if (bt < 0 || bt >= static_cast<int>(space.block_types.size()))
      throw ConfigError("block type gene out of range");
  if (c.width_idx < 0 || c.width_idx >= static_cast<int>(space.width_multiples.size()) ||
      c.expand_idx < 0 || c.expand_idx >= static_cast<int>(space.expand_multiples.size()) ||
      c.start_idx < 0 || c.start_idx >= static_cast<int>(space.mutation_starts.size()) ||
      c.stop_idx < 0 || c.stop_idx >= static_cast<int>(space.mutation_stops.size()))
    throw ConfigError("scalar gene out of range");
}

// Stage-major offset of layer l in stage s.
int layer_offset(const SearchSpace& space, int stage, int layer) {
  int off = 0;
  for (int s = 0; s < stage; ++s) off += space.stages[static_cast<std::size_t>(s)].max_depth;
  return off + layer;
}

}  // namespace

MutationSchedule mutation_schedule(const SearchSpace& space, const Candidate& c,
                                   std::int64_t total_steps) {
  check_candidate(space, c);
  MutationSchedule sched;
  sched.start_fraction = space.mutation_starts.at(static_cast<std::size_t>(c.start_idx));
  sched.stop_fraction = space.mutation_stops.at(static_cast<std::size_t>(c.stop_idx));
  if (sched.start_fraction >= sched.stop_fraction)
    throw ConfigError("mutation start must precede mutation stop");
  // Shallow-to-deep list of target layers whose gene is multiplication-free.
  std::vector<int> mf_layers;
  int target_index = 0;
  for (std::size_t s = 0; s < space.stages.size(); ++s)
    for (int l = 0; l < c.target_depth[s]; ++l, ++target_index) {
      const int gene = c.block_type[static_cast<std::size_t>(layer_offset(space, static_cast<int>(s), l))];
      if (space.block_types[static_cast<std::size_t>(gene)] != OpFamily::Mult)
        mf_layers.push_back(target_index);
    }
  const double t0 = sched.start_fraction * static_cast<double>(total_steps);
  const double t1 = sched.stop_fraction * static_cast<double>(total_steps);
  const int n = static_cast<int>(mf_layers.size());
  for (int i = 0; i < n; ++i) {
    const double frac = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    const auto step = static_cast<std::int64_t>(std::llround(t0 + frac * (t1 - t0)));
    sched.flips.emplace_back(step, mf_layers[static_cast<std::size_t>(i)]);
  }
  return sched;
}

GraphDesc candidate_target_graph(const SearchSpace& space, const Candidate& c) {
  check_candidate(space, c);
  GraphDesc g;
  g.in_channels = space.in_channels;
  g.num_classes = space.num_classes;
  g.layers.push_back({"stem", GraphLayer::Kind::Conv, "shift", space.in_channels,
                      space.stem_channels, 3, space.stem_stride, 1, 1});
  int cin = space.stem_channels;
  int bi = 0;
  for (std::size_t s = 0; s < space.stages.size(); ++s) {
    const StageSpec& st = space.stages[s];
    for (int l = 0; l < c.target_depth[s]; ++l, ++bi) {
      const std::string fam = to_string(
          space.block_types[static_cast<std::size_t>(c.block_type[static_cast<std::size_t>(
              layer_offset(space, static_cast<int>(s), l))])]);
      const int stride = l == 0 ? st.stride : 1;
      const int hidden = std::max(1, static_cast<int>(std::lround(cin * st.expand)));
      const std::string base = "block" + std::to_string(bi);
      if (st.expand != 1.0)
        g.layers.push_back({base + ".expand", GraphLayer::Kind::Conv, fam, cin, hidden, 1, 1, 0, 1});
      g.layers.push_back({base + ".dw", GraphLayer::Kind::DWConv, fam, hidden, hidden, st.kernel,
                          stride, st.kernel / 2, hidden});
      g.layers.push_back(
          {base + ".project", GraphLayer::Kind::Conv, fam, hidden, st.out_ch, 1, 1, 0, 1});
      cin = st.out_ch;
    }
  }
  // Stem/head follow the first/last target genes at the end of mutation;
  // for counting we book the stem as shift-class only when any block is
  // multiplication-free.
  bool any_mf = false;
  for (const auto& l : g.layers)
    if (l.family != "mult") any_mf = true;
  g.layers.front().family = any_mf ? "shift" : "mult";
  g.layers.push_back(
      {"head", GraphLayer::Kind::FC, any_mf ? "shift" : "mult", cin, space.num_classes, 1, 1, 0, 1});
  return g;
}

AugModel build_candidate_model(const SearchSpace& space, const Candidate& c, std::uint64_t seed) {
  check_candidate(space, c);
  ArchSpec arch;
  arch.in_channels = space.in_channels;
  arch.resolution = space.resolution;
  arch.num_classes = space.num_classes;
  arch.stem_channels = space.stem_channels;
  arch.stem_stride = space.stem_stride;
  arch.act = space.act;
  FamilySpec fam;
  std::vector<std::pair<int, bool>> layer_plan;  // (stage, depth_aug)
  bool any_mf = false;
  for (std::size_t s = 0; s < space.stages.size(); ++s) {
    for (int l = 0; l < c.subnet_depth[s]; ++l) {
      const bool aug = l >= c.target_depth[s];
      BlockSpec b;
      b.out_ch = space.stages[s].out_ch;
      b.expand = space.stages[s].expand;
      b.stride = l == 0 ? space.stages[s].stride : 1;
      b.kernel = space.stages[s].kernel;
      arch.blocks.push_back(b);
      layer_plan.emplace_back(static_cast<int>(s), aug);
      OpFamily f = OpFamily::Mult;
      if (!aug) {
        f = space.block_types[static_cast<std::size_t>(
            c.block_type[static_cast<std::size_t>(layer_offset(space, static_cast<int>(s), l))])];
        if (f != OpFamily::Mult) any_mf = true;
      }
      fam.blocks.push_back(f);
    }
  }
  fam.stem = any_mf ? OpFamily::Shift : OpFamily::Mult;
  fam.head = any_mf ? OpFamily::Shift : OpFamily::Mult;

  AugSpec aug;
  aug.width_multiple = space.width_multiples.at(static_cast<std::size_t>(c.width_idx));
  aug.expand_multiple = space.expand_multiples.at(static_cast<std::size_t>(c.expand_idx));

  AugModel m(arch, aug, fam, space.quant, space.hws, seed);
  for (std::size_t i = 0; i < layer_plan.size(); ++i) {
    if (layer_plan[i].second) {
      Bottleneck& blk = m.blocks()[i];
      if (!blk.residual)
        throw ConfigError("depth augmentation requires a residual-shaped block");
      blk.depth_aug = true;
      blk.gene_family = OpFamily::Mult;
      blk.set_family(OpFamily::Mult);
    }
  }
  return m;
}

void evaluate_candidate(const SearchSpace& space, Candidate& c, const Dataset& data,
                        const EvalOptions& opts, std::uint64_t global_seed) {
  c.cost = cost_report(candidate_target_graph(space, c), opts.input_resolution);
  const std::string violation = opts.limits.violated(c.cost);
  if (!violation.empty()) {
    // Over-limit settings are stopped before any training and scored zero.
    c.fitness = 0.0;
    c.feasible = false;
    c.trained = false;
    c.note = "infeasible:" + violation;
    return;
  }
  c.feasible = true;
  const std::uint64_t cand_seed = derive_seed(global_seed, c.id());

  const int val_n = std::max(1, static_cast<int>(data.size() * opts.val_fraction));
  const Dataset train = slice_dataset(data, 0, data.size() - val_n);
  const Dataset val = slice_dataset(data, data.size() - val_n, data.size());

  AugModel model = build_candidate_model(space, c, cand_seed);
  TrainSettings settings;
  settings.epochs = opts.budget_epochs;
  settings.batch = opts.batch;
  settings.alpha1 = opts.alpha1;
  settings.alpha2 = opts.alpha2;
  settings.seed = cand_seed;
  settings.optim.lr = opts.lr;
  const std::int64_t per_epoch = (train.size() + settings.batch - 1) / settings.batch;
  const std::int64_t total = per_epoch * settings.epochs;
  settings.optim.cosine_horizon = total;

  // Block-mutation run: start fully multiplicative, flip shallow-to-deep.
  const MutationSchedule sched = mutation_schedule(space, c, total);
  for (int i = 0; i < model.block_count(); ++i)
    if (!model.blocks()[static_cast<std::size_t>(i)].depth_aug)
      model.blocks()[static_cast<std::size_t>(i)].set_family(OpFamily::Mult);
  model.stem.family = OpFamily::Mult;
  model.head.family = OpFamily::Mult;
  std::vector<MutationEvent> events;
  // Target-layer index -> model block index (depth-aug blocks interleave).
  std::vector<int> target_to_block;
  for (int i = 0; i < model.block_count(); ++i)
    if (!model.blocks()[static_cast<std::size_t>(i)].depth_aug) target_to_block.push_back(i);
  for (std::size_t i = 0; i < sched.flips.size(); ++i) {
    MutationEvent ev;
    ev.step = sched.flips[i].first;
    ev.block = target_to_block.at(static_cast<std::size_t>(sched.flips[i].second));
    ev.flip_stem = i == 0;
    ev.flip_head = i + 1 == sched.flips.size();
    events.push_back(ev);
  }
  TrainSettings with_sched = settings;
  with_sched.mutations = events;
  Trainer t2(model, with_sched);
  try {
    for (int e = 0; e < with_sched.epochs; ++e) t2.run_epoch(train, e);
  } catch (const DivergenceError&) {
    c.fitness = 0.0;
    c.trained = true;
    c.note = "diverged";
    return;
  }
  c.trained = true;
  c.fitness = t2.evaluate(val);
}

Candidate random_candidate(const SearchSpace& space, Rng& rng) {
  Candidate c;
  for (const auto& st : space.stages) {
    const int td = rng.uniform_int(1, st.max_depth);
    const int sd = rng.uniform_int(td, st.max_depth);
    c.target_depth.push_back(td);
    c.subnet_depth.push_back(sd);
  }
  for (int i = 0; i < space.total_layers(); ++i)
    c.block_type.push_back(rng.uniform_int(0, static_cast<int>(space.block_types.size()) - 1));
  c.width_idx = rng.uniform_int(0, static_cast<int>(space.width_multiples.size()) - 1);
  c.expand_idx = rng.uniform_int(0, static_cast<int>(space.expand_multiples.size()) - 1);
  c.start_idx = rng.uniform_int(0, static_cast<int>(space.mutation_starts.size()) - 1);
  c.stop_idx = rng.uniform_int(0, static_cast<int>(space.mutation_stops.size()) - 1);
  return c;
}

std::vector<Candidate> enumerate_candidates(const SearchSpace& space) {
  std::vector<Candidate> out;
  std::vector<Candidate> partial{Candidate{}};
  // depths per stage
  for (const auto& st : space.stages) {
    std::vector<Candidate> next;
    for (const auto& base : partial)
      for (int td = 1; td <= st.max_depth; ++td)
        for (int sd = td; sd <= st.max_depth; ++sd) {
          Candidate c = base;
          c.target_depth.push_back(td);
          c.subnet_depth.push_back(sd);
          next.push_back(c);
        }
    partial = std::move(next);
  }
  // block types per layer
  for (int l = 0; l < space.total_layers(); ++l) {
    std::vector<Candidate> next;
    for (const auto& base : partial)
      for (int b = 0; b < static_cast<int>(space.block_types.size()); ++b) {
        Candidate c = base;
        c.block_type.push_back(b);
        next.push_back(c);
      }
    partial = std::move(next);
  }
  for (const auto& base : partial)
    for (int w = 0; w < static_cast<int>(space.width_multiples.size()); ++w)
      for (int e = 0; e < static_cast<int>(space.expand_multiples.size()); ++e)
        for (int s0 = 0; s0 < static_cast<int>(space.mutation_starts.size()); ++s0)
          for (int s1 = 0; s1 < static_cast<int>(space.mutation_stops.size()); ++s1) {
            Candidate c = base;
            c.width_idx = w;
            c.expand_idx = e;
            c.start_idx = s0;
            c.stop_idx = s1;
            out.push_back(c);
          }
  return out;
}

namespace {

Candidate crossover(const Candidate& a, const Candidate& b, Rng& rng) {
  Candidate c = a;
  auto pick_vec = [&](std::vector<int>& dst, const std::vector<int>& other) {
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (rng.uniform() < 0.5) dst[i] = other[i];
  };
  pick_vec(c.target_depth, b.target_depth);
  pick_vec(c.subnet_depth, b.subnet_depth);
  pick_vec(c.block_type, b.block_type);
  if (rng.uniform() < 0.5) c.width_idx = b.width_idx;
  if (rng.uniform() < 0.5) c.expand_idx = b.expand_idx;
  if (rng.uniform() < 0.5) c.start_idx = b.start_idx;
  if (rng.uniform() < 0.5) c.stop_idx = b.stop_idx;
  return c;
}

void mutate_genes(const SearchSpace& space, Candidate& c, Rng& rng, double p) {
  for (std::size_t s = 0; s < space.stages.size(); ++s) {
    if (rng.uniform() < p)
      c.target_depth[s] = rng.uniform_int(1, space.stages[s].max_depth);
    if (rng.uniform() < p)
      c.subnet_depth[s] = rng.uniform_int(1, space.stages[s].max_depth);
  }
  for (auto& bt : c.block_type)
    if (rng.uniform() < p)
      bt = rng.uniform_int(0, static_cast<int>(space.block_types.size()) - 1);
  if (rng.uniform() < p)
    c.width_idx = rng.uniform_int(0, static_cast<int>(space.width_multiples.size()) - 1);
  if (rng.uniform() < p)
    c.expand_idx = rng.uniform_int(0, static_cast<int>(space.expand_multiples.size()) - 1);
  if (rng.uniform() < p)
    c.start_idx = rng.uniform_int(0, static_cast<int>(space.mutation_starts.size()) - 1);
  if (rng.uniform() < p)
    c.stop_idx = rng.uniform_int(0, static_cast<int>(space.mutation_stops.size()) - 1);
}

void repair(const SearchSpace& space, Candidate& c) {
  for (std::size_t s = 0; s < space.stages.size(); ++s) {
    c.target_depth[s] = std::clamp(c.target_depth[s], 1, space.stages[s].max_depth);
    c.subnet_depth[s] = std::clamp(c.subnet_depth[s], c.target_depth[s], space.stages[s].max_depth);
  }
}

}  // namespace

std::vector<Candidate> evolve(const SearchSpace& space, const EvolveOptions& opts,
                              std::uint64_t seed, const CandidateEvaluator& evaluator) {
  if (space.stages.empty()) throw ConfigError("search space has no stages");
  Rng rng(derive_seed(seed, 0x65766full));
  std::map<std::string, Candidate> seen;

  auto eval_cached = [&](Candidate& c) {
    repair(space, c);
    const std::string key = c.gene_key();
    auto it = seen.find(key);
    if (it != seen.end()) {
      c = it->second;
      return;
    }
    c.cost = cost_report(candidate_target_graph(space, c), space.resolution);
    evaluator(c);
    seen.emplace(key, c);
  };

  // Feasibility pre-screen on the cost model only; the largest feasible
  // structure seeds the population.
  std::vector<Candidate> feasible_pool;
  int attempts = 0;
  while (static_cast<int>(feasible_pool.size()) < opts.feasibility_screen &&
         attempts < opts.max_init_attempts) {
    ++attempts;
    Candidate c = random_candidate(space, rng);
    c.cost = cost_report(candidate_target_graph(space, c), space.resolution);
    if (opts.limits.violated(c.cost).empty()) feasible_pool.push_back(c);
  }
  if (feasible_pool.empty())
    throw ExhaustionError("no feasible candidate found in " + std::to_string(attempts) +
                          " attempts");
  // Distinct structures only; repeated draws of one genome must not flood
  // the initial population.
  {
    std::map<std::string, Candidate> uniq;
    for (auto& c : feasible_pool) uniq.emplace(c.gene_key(), c);
    feasible_pool.clear();
    for (auto& [k, c] : uniq) feasible_pool.push_back(c);
  }
  std::stable_sort(feasible_pool.begin(), feasible_pool.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.cost.energy_mj > b.cost.energy_mj;
                   });

  // Seed with the largest feasible structure plus random feasible samples.
  std::vector<Candidate> pop;
  pop.push_back(feasible_pool.front());
  std::vector<Candidate> rest(feasible_pool.begin() + 1, feasible_pool.end());
  rng.shuffle(rest);
  for (std::size_t i = 0; i < rest.size() && static_cast<int>(pop.size()) < opts.population; ++i)
    pop.push_back(rest[i]);
  while (static_cast<int>(pop.size()) < opts.population)
    pop.push_back(feasible_pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(feasible_pool.size()) - 1))]);
  for (auto& c : pop) eval_cached(c);

  auto by_fitness = [](const Candidate& a, const Candidate& b) { return a.fitness > b.fitness; };
  std::stable_sort(pop.begin(), pop.end(), by_fitness);

  for (int gen = 0; gen < opts.generations; ++gen) {
    std::vector<Candidate> offspring;
    for (int i = 0; i < opts.population; ++i) {
      auto tourney = [&]() -> const Candidate& {
        int best = rng.uniform_int(0, static_cast<int>(pop.size()) - 1);
        for (int t = 1; t < opts.tournament; ++t) {
          const int ch = rng.uniform_int(0, static_cast<int>(pop.size()) - 1);
          if (pop[static_cast<std::size_t>(ch)].fitness > pop[static_cast<std::size_t>(best)].fitness)
            best = ch;
        }
        return pop[static_cast<std::size_t>(best)];
      };
      Candidate child = crossover(tourney(), tourney(), rng);
      mutate_genes(space, child, rng, opts.mutation_prob);
      eval_cached(child);
      offspring.push_back(std::move(child));
    }
    pop.insert(pop.end(), offspring.begin(), offspring.end());
    std::stable_sort(pop.begin(), pop.end(), by_fitness);
    pop.resize(static_cast<std::size_t>(opts.population));
  }

  std::vector<Candidate> ranked;
  ranked.reserve(seen.size());
  for (auto& [k, c] : seen) ranked.push_back(c);
  std::stable_sort(ranked.begin(), ranked.end(), by_fitness);
  return ranked;
}

std::string ledger_csv(const std::vector<Candidate>& ranked, std::uint64_t seed) {
  std::ostringstream os;
  os << "rank,genes,fitness,energy_mj,latency_ms,params_m,feasible,trained,note,seed\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const Candidate& c = ranked[i];
    os << i << ",\"" << c.gene_key() << "\"," << c.fitness << ',' << c.cost.energy_mj << ','
       << c.cost.latency_proxy_ms << ',' << c.cost.params_m << ',' << (c.feasible ? 1 : 0) << ','
       << (c.trained ? 1 : 0) << ',' << c.note << ',' << derive_seed(seed, c.id()) << '\n';
  }
  return os.str();
}

}  // namespace mfnn
