#include "mfnn/train.hpp"

#include <cmath>

namespace mfnn {

namespace {

std::string first_nonfinite_layer(AugModel& m) {
  for (const auto& p : m.params())
    if (!p.tensor->all_finite()) return p.name;
  return "loss";
}

}  // namespace

JointLosses joint_step(AugModel& m, SgdOptimizer& opt, const Tensor& x,
                       const std::vector<int>& labels, double alpha1, double alpha2,
                       float label_smoothing) {
  Tape t;
  Binding bind = m.bind(t);
  const int xid = t.leaf(x, false);

  const int logits_t = m.forward(t, bind, xid, false, true);
  const int loss_t = cross_entropy_label_smoothed(t, logits_t, labels, label_smoothing);

  JointLosses out;
  out.target = t.val(loss_t).data[0];

  int loss_total;
  if (alpha2 != 0.0) {
    const int logits_a = m.forward(t, bind, xid, true, true);
    const int loss_a = cross_entropy_label_smoothed(t, logits_a, labels, label_smoothing);
    out.augmented = t.val(loss_a).data[0];
    loss_total = add(t, scale(t, loss_t, static_cast<float>(alpha1)),
                     scale(t, loss_a, static_cast<float>(alpha2)));
  } else {
    out.augmented = out.target;
    loss_total = scale(t, loss_t, static_cast<float>(alpha1));
  }

  if (!std::isfinite(out.target) || !std::isfinite(out.augmented))
    throw DivergenceError("non-finite loss", first_nonfinite_layer(m));

  t.backward(loss_total);

  auto params = m.params();
  // Parameter registration order is stable for one model instance, so slot i
  // belongs to params[i].
  if (opt.momentum_buffers().size() != params.size()) {
    if (!opt.momentum_buffers().empty())
      throw Error("optimizer state does not match the model parameter list");
    for (const auto& p : params) opt.register_param(p.tensor->shape);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const int node = bind.id(*params[i].tensor);
    if (!t.has_grad(node)) continue;
    opt.apply(static_cast<int>(i), *params[i].tensor, t.grad(node), params[i].decay);
  }
  opt.step_end();
  // NaN/Inf is an error state; rectifiers can launder a poisoned activation
  // into finite logits, so the loss check alone is not enough.
  for (const auto& p : params)
    if (!p.tensor->all_finite())
      throw DivergenceError("non-finite parameter after update", p.name);
  return out;
}

Trainer::Trainer(AugModel& model, const TrainSettings& s)
    : model_(model), settings_(s), opt_(s.optim) {}

std::int64_t Trainer::total_steps(const Dataset& train) const {
  const std::int64_t per_epoch =
      (train.size() + settings_.batch - 1) / settings_.batch;
  return per_epoch * settings_.epochs;
}

void Trainer::apply_schedules(std::int64_t step, std::int64_t horizon) {
  while (next_mutation_ < settings_.mutations.size() &&
         settings_.mutations[next_mutation_].step <= step) {
    const MutationEvent& ev = settings_.mutations[next_mutation_];
    model_.mutate_block(ev.block);
    if (ev.flip_stem) model_.stem.family = model_.families.stem;
    if (ev.flip_head) model_.head.family = model_.families.head;
    ++next_mutation_;
  }
  if (settings_.decay_depth_aug && horizon > 0) {
    const float s =
        std::max(0.0f, 1.0f - static_cast<float>(step) / static_cast<float>(horizon));
    model_.set_depth_scale(s);
  }
}

EpochStats Trainer::run_epoch(const Dataset& train, int epoch) {
  if (train.size() == 0) throw ConfigError("empty training set");
  std::vector<int> order(static_cast<std::size_t>(train.size()));
  for (int i = 0; i < train.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  Rng shuffle_rng(derive_seed(settings_.seed, 0x657065ull + static_cast<std::uint64_t>(epoch)));
  shuffle_rng.shuffle(order);

  const std::int64_t horizon = total_steps(train);
  EpochStats stats;
  stats.lr_first = opt_.current_lr();
  int batches = 0;
  for (int at = 0; at < train.size(); at += settings_.batch, ++batches) {
    const int hi = std::min(train.size(), at + settings_.batch);
    std::vector<int> idx(order.begin() + at, order.begin() + hi);
    apply_schedules(opt_.step_count(), horizon);
    const JointLosses l =
        joint_step(model_, opt_, train.batch(idx), train.batch_labels(idx), settings_.alpha1,
                   settings_.alpha2, settings_.optim.label_smoothing);
    if (l.target > settings_.divergence_threshold || l.augmented > settings_.divergence_threshold)
      throw DivergenceError("loss exceeded the divergence threshold",
                            first_nonfinite_layer(model_));
    stats.loss_target += l.target;
    stats.loss_aug += l.augmented;
  }
  stats.loss_target /= batches;
  stats.loss_aug /= batches;
  if (settings_.reorder) model_.reorder_all();
  return stats;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  const auto pred = argmax_rows(logits);
  int hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (pred[i] == labels[i]) ++hit;
  return labels.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
}

double Trainer::evaluate(const Dataset& data, int batch) {
  int hit = 0;
  for (int at = 0; at < data.size(); at += batch) {
    const int hi = std::min(data.size(), at + batch);
    std::vector<int> idx;
    for (int i = at; i < hi; ++i) idx.push_back(i);
    const Tensor logits = model_.infer_target(data.batch(idx));
    const auto pred = argmax_rows(logits);
    const auto labels = data.batch_labels(idx);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (pred[i] == labels[i]) ++hit;
  }
  return data.size() == 0 ? 0.0 : static_cast<double>(hit) / data.size();
}

}  // namespace mfnn
