#include "mfnn/tape.hpp"

namespace mfnn {

int Tape::leaf(Tensor value, bool needs_grad) {
  recs_.push_back(Rec{std::move(value), Tensor{}, {}, nullptr, needs_grad});
  return static_cast<int>(recs_.size()) - 1;
}

int Tape::node(Tensor value, std::vector<int> inputs, BackwardFn back) {
  bool needs = false;
  for (int i : inputs) {
    if (i < 0 || i >= size()) throw Error("tape node references an unknown input");
    needs = needs || recs_[static_cast<std::size_t>(i)].needs;
  }
  recs_.push_back(Rec{std::move(value), Tensor{}, std::move(inputs), std::move(back), needs});
  return static_cast<int>(recs_.size()) - 1;
}

Tensor& Tape::grad(int id) {
  Rec& r = recs_[static_cast<std::size_t>(id)];
  if (r.grad.data.empty()) r.grad = Tensor::zeros(r.value.shape);
  return r.grad;
}

void Tape::backward(int root) {
  Tensor& g = grad(root);
  for (auto& v : g.data) v = 1.0f;
  for (int id = root; id >= 0; --id) {
    Rec& r = recs_[static_cast<std::size_t>(id)];
    if (r.back && !r.grad.data.empty()) r.back(*this, id);
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  require_same_shape(dst, src, "gradient accumulation");
  const std::size_t n = src.data.size();
  for (std::size_t i = 0; i < n; ++i) dst.data[i] += src.data[i];
}

}  // namespace mfnn
