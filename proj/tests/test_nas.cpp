#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "mfnn/nas.hpp"
#include "mfnn/rng.hpp"

using namespace mfnn;

namespace {

// Two stages, small option lists: 2*3*2*2*... kept enumerable.
SearchSpace toy_space() {
  SearchSpace s;
  s.stages = {{8, 2.0, 2, 3, 2}, {12, 2.0, 2, 3, 1}};
  s.block_types = {OpFamily::Shift, OpFamily::Add};
  s.width_multiples = {2.2};
  s.expand_multiples = {2.2};
  s.mutation_starts = {0.10};
  s.mutation_stops = {0.70};
  s.resolution = 16;
  s.num_classes = 2;
  s.stem_channels = 6;
  return s;
}

}  // namespace

TEST_CASE("cut_subnet mask semantics") {
  {
    const SubnetPlan plan = cut_subnet(4, {1, 1, 1, 1});
    CHECK(plan.layers == std::vector<int>{0, 1, 2, 3});
    CHECK(plan.target_layers.size() == 4);
    CHECK(std::none_of(plan.depth_aug.begin(), plan.depth_aug.end(), [](bool b) { return b; }));
  }
  {
    // 3 selected layers; the skipped one participates as depth augmentation
    const SubnetPlan plan = cut_subnet(4, {1, 1, 0, 1});
    CHECK(plan.target_layers == std::vector<int>{0, 1, 3});
    REQUIRE(plan.layers == std::vector<int>{0, 1, 2, 3});
    CHECK(plan.depth_aug == std::vector<bool>{false, false, true, false});
  }
  {
    // trailing unselected layers with no selected neighbor are dropped
    const SubnetPlan plan = cut_subnet(4, {1, 1, 0, 0});
    CHECK(plan.layers == std::vector<int>{0, 1, 2});
    CHECK(plan.depth_aug == std::vector<bool>{false, false, true});
  }
  CHECK_THROWS_AS(cut_subnet(3, {0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(cut_subnet(3, {1, 1}), ConfigError);
}

TEST_CASE("candidate subset invariant holds for random draws") {
  SearchSpace space = toy_space();
  Rng rng(51);
  for (int i = 0; i < 200; ++i) {
    const Candidate c = random_candidate(space, rng);
    for (std::size_t s = 0; s < space.stages.size(); ++s) {
      CHECK(c.target_depth[s] >= 1);
      CHECK(c.target_depth[s] <= c.subnet_depth[s]);
      CHECK(c.subnet_depth[s] <= space.stages[s].max_depth);
    }
  }
}

TEST_CASE("mutation schedule spacing examples") {
  SearchSpace space = toy_space();
  space.stages = {{8, 2.0, 2, 3, 3}};
  space.mutation_starts = {0.10, 0.05};
  space.mutation_stops = {0.70};
  Candidate c;
  c.target_depth = {3};
  c.subnet_depth = {3};
  c.block_type = {0, 0, 0};
  c.start_idx = 0;
  c.stop_idx = 0;
  const MutationSchedule sched = mutation_schedule(space, c, 100);
  REQUIRE(sched.flips.size() == 3);
  CHECK(sched.flips[0].first == 10);
  CHECK(sched.flips[1].first == 40);
  CHECK(sched.flips[2].first == 70);
  // shallow to deep
  CHECK(sched.flips[0].second == 0);
  CHECK(sched.flips[1].second == 1);
  CHECK(sched.flips[2].second == 2);

  Candidate single = c;
  single.target_depth = {1};
  single.block_type = {0, 0, 0};
  single.start_idx = 1;  // 5%
  const MutationSchedule s2 = mutation_schedule(space, single, 100);
  REQUIRE(s2.flips.size() == 1);
  CHECK(s2.flips[0].first == 5);

  SearchSpace bad = space;
  bad.mutation_starts = {0.8};
  CHECK_THROWS_AS(mutation_schedule(bad, c, 100), ConfigError);
}

TEST_CASE("after the schedule runs every target layer is multiplication-free") {
  SearchSpace space = toy_space();
  Candidate c;
  c.target_depth = {2, 1};
  c.subnet_depth = {2, 1};
  c.block_type = {0, 1, 0};  // shift, add, shift
  c.width_idx = c.expand_idx = c.start_idx = c.stop_idx = 0;

  AugModel m = build_candidate_model(space, c, 7);
  // mutation-run protocol: start multiplicative
  for (int i = 0; i < m.block_count(); ++i)
    if (!m.blocks()[static_cast<std::size_t>(i)].depth_aug)
      m.blocks()[static_cast<std::size_t>(i)].set_family(OpFamily::Mult);
  for (int i = 0; i < m.block_count(); ++i) CHECK_FALSE(m.block_mult_free(i));

  const MutationSchedule sched = mutation_schedule(space, c, 50);
  for (const auto& [step, target_idx] : sched.flips) m.mutate_block(target_idx);
  for (int i = 0; i < m.block_count(); ++i) CHECK(m.block_mult_free(i));
  CHECK(m.blocks()[0].dw.family == OpFamily::Shift);
  CHECK(m.blocks()[1].dw.family == OpFamily::Add);
}

TEST_CASE("depth augmentation blocks join the augmented pass but never the target path") {
  SearchSpace space = toy_space();
  Candidate c;
  c.target_depth = {1, 1};
  c.subnet_depth = {2, 1};  // one depth-augmentation layer in stage 0
  c.block_type = {0, 0, 0};
  AugModel m = build_candidate_model(space, c, 9);
  REQUIRE(m.block_count() == 3);
  CHECK(m.blocks()[1].depth_aug);
  // target graph skips it
  const GraphDesc g = m.target_graph();
  int dw_layers = 0;
  for (const auto& l : g.layers)
    if (l.kind == GraphLayer::Kind::DWConv) ++dw_layers;
  CHECK(dw_layers == 2);

  // depth scale decays to zero
  m.set_depth_scale(0.25f);
  CHECK(m.blocks()[1].depth_scale == 0.25f);
  CHECK(m.blocks()[0].depth_scale == 1.0f);

  // with scale 0 the augmented pass ignores the block entirely
  Dataset d = synthetic_two_class(3, 8, 16);
  std::vector<int> idx{0, 1, 2, 3};
  m.set_depth_scale(0.0f);
  Tape t1;
  Binding b1 = m.bind(t1);
  const Tensor with_block = t1.val(m.forward(t1, b1, t1.leaf(d.batch(idx), false), true, false));
  // poison the depth-aug block; a zero scale must still mask a finite change
  for (auto& v : m.blocks()[1].dw.weight.data) v += 10.0f;
  Tape t2;
  Binding b2 = m.bind(t2);
  const Tensor poisoned = t2.val(m.forward(t2, b2, t2.leaf(d.batch(idx), false), true, false));
  CHECK(with_block.data == poisoned.data);
}

TEST_CASE("infeasible candidates score exactly zero and are never trained") {
  SearchSpace space = toy_space();
  Candidate c;
  c.target_depth = {2, 1};
  c.subnet_depth = {2, 1};
  c.block_type = {0, 0, 0};
  EvalOptions opts;
  opts.limits.max_energy_mj = 1e-12;  // everything violates
  Dataset d = synthetic_two_class(5, 16, 16);
  evaluate_candidate(space, c, d, opts, 1);
  CHECK(c.fitness == 0.0);
  CHECK_FALSE(c.feasible);
  CHECK_FALSE(c.trained);
  CHECK(c.note.rfind("infeasible:", 0) == 0);
}

TEST_CASE("identical candidates evaluate to identical fitness") {
  SearchSpace space = toy_space();
  Candidate a, b;
  a.target_depth = b.target_depth = {1, 1};
  a.subnet_depth = b.subnet_depth = {1, 1};
  a.block_type = b.block_type = {0, 0, 0};
  EvalOptions opts;
  opts.budget_epochs = 1;
  opts.batch = 16;
  Dataset d = synthetic_two_class(5, 48, 16);
  evaluate_candidate(space, a, d, opts, 33);
  evaluate_candidate(space, b, d, opts, 33);
  CHECK(a.fitness == b.fitness);
  CHECK(a.trained);
  CHECK(a.fitness > 0.0);
}

TEST_CASE("toy-space sanity run reaches high accuracy") {
  SearchSpace space = toy_space();
  Candidate c;
  c.target_depth = {1, 1};
  c.subnet_depth = {1, 1};
  c.block_type = {0, 0, 0};
  EvalOptions opts;
  opts.budget_epochs = 4;
  opts.batch = 25;
  Dataset d = synthetic_two_class(9, 200, 16);
  evaluate_candidate(space, c, d, opts, 5);
  CHECK(c.fitness > 0.9);
}

namespace {

CandidateEvaluator neg_energy_eval(const HardwareLimits& limits) {
  return [limits](Candidate& c) {
    const std::string v = limits.violated(c.cost);
    if (!v.empty()) {
      c.fitness = 0.0;
      c.feasible = false;
      c.note = "infeasible:" + v;
      return;
    }
    c.feasible = true;
    c.fitness = -c.cost.energy_mj;
  };
}

}  // namespace

TEST_CASE("evolution finds the brute-force optimum on an enumerable space") {
  SearchSpace space = toy_space();  // 2 stages -> depth combos 3 * 1, types 2^3 -> 24 candidates
  const auto all = enumerate_candidates(space);
  REQUIRE(all.size() <= 64);
  HardwareLimits limits;  // everything feasible
  double best = 1e30;
  for (auto c : all) {
    const CostReport r = cost_report(candidate_target_graph(space, c), space.resolution);
    best = std::min(best, r.energy_mj);
  }
  EvolveOptions opts;
  opts.population = 6;
  opts.generations = 6;
  opts.limits = limits;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ranked = evolve(space, opts, seed, neg_energy_eval(limits));
    REQUIRE_FALSE(ranked.empty());
    if (std::abs(-ranked.front().fitness - best) < 1e-12) ++hits;
  }
  CHECK(hits == 3);
}

TEST_CASE("population of one with zero generations returns the seed candidate") {
  SearchSpace space = toy_space();
  EvolveOptions opts;
  opts.population = 1;
  opts.generations = 0;
  const auto ranked = evolve(space, opts, 4, neg_energy_eval(opts.limits));
  REQUIRE(ranked.size() == 1);
  // the seed is the largest feasible structure by energy
  CHECK(ranked.front().fitness == -ranked.front().cost.energy_mj);
}

TEST_CASE("an infeasible space raises exhaustion") {
  SearchSpace space = toy_space();
  EvolveOptions opts;
  opts.limits.max_params_m = 1e-9;
  opts.max_init_attempts = 50;
  CHECK_THROWS_AS(evolve(space, opts, 2, neg_energy_eval(opts.limits)), ExhaustionError);
}

TEST_CASE("fixed seed fixes the search trajectory") {
  SearchSpace space = toy_space();
  EvolveOptions opts;
  opts.population = 5;
  opts.generations = 3;
  const auto r1 = evolve(space, opts, 77, neg_energy_eval(opts.limits));
  const auto r2 = evolve(space, opts, 77, neg_energy_eval(opts.limits));
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].gene_key() == r2[i].gene_key());
    CHECK(r1[i].fitness == r2[i].fitness);
  }
  CHECK(ledger_csv(r1, 77) == ledger_csv(r2, 77));
}
