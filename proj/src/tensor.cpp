#include "mfnn/tensor.hpp"

#include <cmath>
#include <string>

namespace mfnn {

std::int64_t Tensor::checked_numel(const std::vector<int>& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string("shape mismatch in ") + what);
}

}  // namespace mfnn
