#include "mfnn/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mfnn/dataset.hpp"
#include "mfnn/export.hpp"
#include "mfnn/serialize.hpp"
#include "mfnn/train.hpp"

namespace fs = std::filesystem;

namespace mfnn {

namespace {

constexpr std::uint32_t kBankMagic = 0x42524d66u;  // "fMRB"

// Deterministic shuffled split: validation takes every k-th shuffled index.
void split_dataset(const Dataset& all, double val_fraction, std::uint64_t seed, Dataset& train,
                   Dataset& val) {
  const int n = all.size();
  const int nval = std::max(1, static_cast<int>(n * val_fraction));
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, 0x73706c6974ull));
  rng.shuffle(idx);

  auto take = [&](int from, int to) {
    Dataset d;
    d.width = all.width;
    d.height = all.height;
    d.channels = all.channels;
    d.num_classes = all.num_classes;
    const std::size_t per = all.sample_bytes();
    for (int i = from; i < to; ++i) {
      const int src = idx[static_cast<std::size_t>(i)];
      d.pixels.insert(d.pixels.end(),
                      all.pixels.begin() + static_cast<std::ptrdiff_t>(src * per),
                      all.pixels.begin() + static_cast<std::ptrdiff_t>((src + 1) * per));
      d.labels.push_back(all.labels[static_cast<std::size_t>(src)]);
    }
    return d;
  };
  train = take(0, n - nval);
  val = take(n - nval, n);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

void save_remap_bank_file(const RemapPretrainResult& bank, const std::string& path) {
  Writer w;
  w.u32(kBankMagic);
  w.u32(1);
  RemapBank rb;
  rb.nets = bank.nets;
  rb.prior = bank.prior;
  rb.source_stats = bank.source_stats;
  write_remap_bank(w, rb);
  w.save(path);
}

RemapPretrainResult load_remap_bank_file(const std::string& path) {
  Reader r = Reader::from_file(path);
  if (r.u32() != kBankMagic) throw FormatError("not a remap bank file", 0);
  if (r.u32() != 1) throw FormatError("unsupported remap bank version", 4);
  const RemapBank rb = read_remap_bank(r);
  RemapPretrainResult out;
  out.nets = rb.nets;
  out.prior = rb.prior;
  out.source_stats = rb.source_stats;
  return out;
}

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log,
                       const std::optional<std::string>& resume_from,
                       const std::optional<int>& session_epochs) {
  const Dataset all = open_dataset(cfg.data);
  if (all.size() < 4) throw ConfigError("dataset too small to split");
  if (all.num_classes != cfg.arch.num_classes)
    throw ConfigError("dataset has " + std::to_string(all.num_classes) +
                      " classes but the model expects " + std::to_string(cfg.arch.num_classes));
  Dataset train, val;
  split_dataset(all, cfg.val_fraction, cfg.seed, train, val);

  fs::create_directories(cfg.out_dir);
  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  const std::string ckpt_path = (fs::path(cfg.out_dir) / "last.ckpt").string();
  const std::string runlog_path = (fs::path(cfg.out_dir) / "run.log").string();

  AugModel model;
  int start_epoch = 0;

  TrainSettings settings;
  settings.epochs = cfg.epochs;
  settings.batch = cfg.batch;
  settings.alpha1 = cfg.alpha1;
  settings.alpha2 = cfg.alpha2;
  settings.reorder = cfg.reorder;
  settings.seed = cfg.seed;
  settings.optim = cfg.optim;

  std::optional<LoadedCheckpoint> loaded;
  if (resume_from) {
    loaded = load_checkpoint(*resume_from);
    model = std::move(loaded->model);
    start_epoch = static_cast<int>(loaded->meta.epoch);
    log << "resumed from " << *resume_from << " at epoch " << start_epoch << "\n";
  } else {
    model = AugModel(cfg.arch, cfg.aug, cfg.families, cfg.quant, cfg.hws, cfg.seed);
    if (!cfg.pretrained_remap.empty()) {
      const RemapPretrainResult bank = load_remap_bank_file(cfg.pretrained_remap);
      const OpFamily fam = cfg.families.blocks.empty() ? OpFamily::Shift : cfg.families.blocks[0];
      model.install_remap_nets(fam == OpFamily::Add ? OpFamily::Add : OpFamily::Shift, bank);
    }
    // start a fresh metrics file with the header
    std::ofstream metrics(metrics_path, std::ios::trunc);
    metrics << "epoch,lr,loss_target,loss_aug,target_accuracy\n";
  }

  Trainer trainer(model, settings);
  trainer.optimizer().config_mut().cosine_horizon = trainer.total_steps(train);
  if (loaded) {
    trainer.optimizer().momentum_buffers() = std::move(loaded->momentum);
    trainer.optimizer().set_step_count(loaded->optimizer_step);
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::ofstream runlog(runlog_path, std::ios::app);
  TrainOutcome out;
  const int last_epoch =
      session_epochs ? std::min(cfg.epochs, start_epoch + *session_epochs) : cfg.epochs;
  for (int epoch = start_epoch; epoch < last_epoch; ++epoch) {
    const EpochStats es = trainer.run_epoch(train, epoch);
    const double acc = trainer.evaluate(val);
    std::ofstream metrics(metrics_path, std::ios::app);
    metrics << epoch << ',' << format_double(es.lr_first) << ',' << format_double(es.loss_target)
            << ',' << format_double(es.loss_aug) << ',' << format_double(acc) << '\n';
    const auto wall =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    runlog << "epoch " << epoch << " wall_ms " << wall << " acc " << acc << "\n";
    log << "epoch " << epoch << " loss_t " << es.loss_target << " loss_a " << es.loss_aug
        << " val_acc " << acc << "\n";
    Checkpoint meta;
    meta.epoch = static_cast<std::uint32_t>(epoch + 1);
    meta.step = trainer.optimizer().step_count();
    meta.arch = cfg.arch;
    meta.aug = cfg.aug;
    meta.families = cfg.families;
    meta.quant = cfg.quant;
    meta.hws = cfg.hws;
    meta.model_seed = cfg.seed;
    meta.mutation_done = true;  // plain runs have no mutation schedule
    save_checkpoint(ckpt_path, model, trainer.optimizer(), meta);
    out.final_accuracy = acc;
    out.epochs_run = epoch + 1;
  }
  out.checkpoint_path = ckpt_path;
  out.metrics_path = metrics_path;
  return out;
}

void cmd_fit_remap(const std::string& mult_checkpoint, const std::string& mf_checkpoint,
                   const std::string& out_path, std::ostream& log, const std::string& family,
                   double fixed_prior_scale) {
  LoadedCheckpoint src = load_checkpoint(mult_checkpoint);
  LoadedCheckpoint dst = load_checkpoint(mf_checkpoint);
  std::vector<Tensor> mult_w, mf_w;
  auto harvest = [](AugModel& m, std::vector<Tensor>& out) {
    // Direct-trained models carry no augmented channels; conv weights are the
    // paired samples.
    out.push_back(m.stem.weight);
    for (auto& blk : m.blocks()) {
      if (blk.has_expand) out.push_back(blk.expand.weight);
      out.push_back(blk.dw.weight);
      out.push_back(blk.project.weight);
    }
  };
  harvest(src.model, mult_w);
  harvest(dst.model, mf_w);
  RemapFitOptions opts;
  if (family_from_string(family) == OpFamily::Shift) {
    // shift weights track the source weights; the bias prior stays narrow
    opts.prior_source = RemapFitOptions::PriorSource::Fixed;
    opts.fixed_prior = {0.0, fixed_prior_scale};
  }
  RemapPretrainResult fitted = pretrain_remapper(mult_w, mf_w, opts);
  save_remap_bank_file(fitted, out_path);
  log << "fitted " << fitted.nets.size() << " shape classes; prior location "
      << fitted.prior.location << " scale " << fitted.prior.scale << "\n";
}

void cmd_export(const std::string& checkpoint_path, const std::string& out_path,
                std::ostream& log) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  if (!loaded.meta.mutation_done)
    throw ConfigError("checkpoint has an unfinished mutation schedule; finish training first");
  const ExportedModel exported = export_target(loaded.model);
  save_exported(exported, out_path);
  log << "exported target model to " << out_path << "\n";
}

EvalOutcome cmd_eval(const std::string& model_path, const std::string& data, std::ostream& log) {
  const ExportedModel m = load_exported(model_path);
  const Dataset d = open_dataset(data);
  if (d.size() == 0) throw ConfigError("empty dataset");
  if (d.width != d.height) throw ConfigError("non-square images are not supported");
  if (d.width != m.resolution)
    throw ConfigError("dataset resolution " + std::to_string(d.width) +
                      " does not match the model descriptor " + std::to_string(m.resolution));
  int hit = 0;
  const int batch = 64;
  for (int at = 0; at < d.size(); at += batch) {
    const int hi = std::min(d.size(), at + batch);
    std::vector<int> idx;
    for (int i = at; i < hi; ++i) idx.push_back(i);
    const Tensor logits = m.forward_integer(d.batch(idx));
    const auto pred = argmax_rows(logits);
    const auto labels = d.batch_labels(idx);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (pred[i] == labels[i]) ++hit;
  }
  EvalOutcome out;
  out.top1 = static_cast<double>(hit) / d.size();
  out.cost = cost_report(m.graph(), m.resolution);
  log << "top1 " << out.top1 << " energy_mj " << out.cost.energy_mj << " latency_ms(proxy) "
      << out.cost.latency_proxy_ms << "\n";
  return out;
}

SearchOutcome cmd_search(const SearchConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.out_dir);
  Dataset data;
  if (!cfg.fitness_is_neg_energy) data = open_dataset(cfg.data);

  CandidateEvaluator evaluator;
  if (cfg.fitness_is_neg_energy) {
    evaluator = [&](Candidate& c) {
      const std::string violation = cfg.evolve.limits.violated(c.cost);
      if (!violation.empty()) {
        c.fitness = 0.0;
        c.feasible = false;
        c.note = "infeasible:" + violation;
        return;
      }
      c.feasible = true;
      c.fitness = -c.cost.energy_mj;
    };
  } else {
    evaluator = [&](Candidate& c) {
      evaluate_candidate(cfg.space, c, data, cfg.eval, cfg.seed);
    };
  }

  std::vector<Candidate> ranked;
  try {
    ranked = evolve(cfg.space, cfg.evolve, cfg.seed, evaluator);
  } catch (const ExhaustionError& e) {
    log << "search failed: " << e.what() << "\n";
    throw;
  }

  const std::string ledger_path = (fs::path(cfg.out_dir) / "ledger.csv").string();
  std::ofstream ledger(ledger_path, std::ios::trunc);
  ledger << ledger_csv(ranked, cfg.seed);
  log << "evaluated " << ranked.size() << " unique candidates; best fitness "
      << (ranked.empty() ? 0.0 : ranked.front().fitness) << "\n";

  // Best candidates ready for cmd_train.
  const int k = std::min<int>(cfg.top_k, static_cast<int>(ranked.size()));
  for (int i = 0; i < k; ++i) {
    const Candidate& c = ranked[static_cast<std::size_t>(i)];
    RunConfig rc;
    rc.arch.in_channels = cfg.space.in_channels;
    rc.arch.resolution = cfg.space.resolution;
    rc.arch.num_classes = cfg.space.num_classes;
    rc.arch.stem_channels = cfg.space.stem_channels;
    rc.arch.stem_stride = cfg.space.stem_stride;
    rc.arch.act = cfg.space.act;
    FamilySpec fam;
    bool any_mf = false;
    int li = 0;
    for (std::size_t s = 0; s < cfg.space.stages.size(); ++s) {
      for (int l = 0; l < c.target_depth[s]; ++l) {
        BlockSpec b;
        b.out_ch = cfg.space.stages[s].out_ch;
        b.expand = cfg.space.stages[s].expand;
        b.stride = l == 0 ? cfg.space.stages[s].stride : 1;
        b.kernel = cfg.space.stages[s].kernel;
        rc.arch.blocks.push_back(b);
        int off = 0;
        for (std::size_t ss = 0; ss < s; ++ss) off += cfg.space.stages[ss].max_depth;
        const OpFamily f =
            cfg.space.block_types[static_cast<std::size_t>(c.block_type[static_cast<std::size_t>(off + l)])];
        fam.blocks.push_back(f);
        if (f != OpFamily::Mult) any_mf = true;
        ++li;
      }
    }
    fam.stem = any_mf ? OpFamily::Shift : OpFamily::Mult;
    fam.head = any_mf ? OpFamily::Shift : OpFamily::Mult;
    rc.families = fam;
    rc.aug.width_multiple = cfg.space.width_multiples[static_cast<std::size_t>(c.width_idx)];
    rc.aug.expand_multiple = cfg.space.expand_multiples[static_cast<std::size_t>(c.expand_idx)];
    rc.quant = cfg.space.quant;
    rc.hws = cfg.space.hws;
    rc.data = cfg.data.empty() ? "synthetic10:0:2000:32" : cfg.data;
    rc.out_dir = (fs::path(cfg.out_dir) / ("top" + std::to_string(i))).string();
    rc.seed = cfg.seed;
    std::ofstream cf(fs::path(cfg.out_dir) / ("top" + std::to_string(i) + ".json"));
    cf << run_config_json(rc) << "\n";
  }

  return SearchOutcome{ledger_path, std::move(ranked)};
}

CostReport cmd_cost(const std::string& graph_spec, int resolution, std::ostream& log) {
  GraphDesc graph;
  if (graph_spec == "mobilenetv2_w035" || graph_spec == "mbv2-0.35") {
    graph = mobilenet_v2_w035();
  } else {
    // a run config file: cost of its target model
    const RunConfig rc = load_run_config(graph_spec);
    AugModel m(rc.arch, rc.aug, rc.families, rc.quant, rc.hws, rc.seed);
    graph = m.target_graph();
  }
  const OpCount counts = count_ops(graph, resolution);
  const CostReport r = cost_report(graph, resolution);
  log << op_count_csv(counts);
  log << "total mults(M) " << r.mults_m << " shifts(M) " << r.shifts_m << " adds(M) " << r.adds_m
      << "\n";
  log << "energy_mj " << r.energy_mj << " latency_ms(proxy) " << r.latency_proxy_ms << " params_m "
      << r.params_m << "\n";
  return r;
}

}  // namespace mfnn
