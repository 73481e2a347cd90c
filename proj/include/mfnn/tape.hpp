#pragma once

#include <functional>
#include <vector>

#include "mfnn/tensor.hpp"

namespace mfnn {

class Tape;

// Pulls the gradient of node `self` back into the gradients of its inputs.
using BackwardFn = std::function<void(Tape&, int self)>;

// Define-by-run gradient tape. Nodes are appended in execution order, so node
// ids form a topological order and backward() is a single reverse sweep that
// touches every node once.
class Tape {
 public:
  int leaf(Tensor value, bool needs_grad = true);
  int node(Tensor value, std::vector<int> inputs, BackwardFn back);

  // False when no leaf that wants gradients feeds this node; ops use it to
  // skip dead backward work (e.g. d(loss)/d(input image)).
  bool needs_grad(int id) const { return recs_[static_cast<std::size_t>(id)].needs; }

  const Tensor& val(int id) const { return recs_[static_cast<std::size_t>(id)].value; }
  Tensor& val_mut(int id) { return recs_[static_cast<std::size_t>(id)].value; }

  // Gradient buffer, allocated to zeros on first access.
  Tensor& grad(int id);
  bool has_grad(int id) const { return !recs_[static_cast<std::size_t>(id)].grad.data.empty(); }

  // Seeds d(root)/d(root) = 1 and replays recorded ops in reverse order.
  void backward(int root);

  int size() const { return static_cast<int>(recs_.size()); }
  void clear() { recs_.clear(); }

 private:
  struct Rec {
    Tensor value;
    Tensor grad;  // empty until touched
    std::vector<int> inputs;
    BackwardFn back;  // null for leaves
    bool needs = true;
  };
  std::vector<Rec> recs_;
};

// Adds src into dst elementwise (gradient accumulation helper).
void accumulate(Tensor& dst, const Tensor& src);

}  // namespace mfnn
