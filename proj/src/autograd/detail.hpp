#pragma once

#include <functional>
#include <vector>

#include "vdip/autograd.hpp"

namespace vdip::ad::detail {

/// Creates a node whose gradient closure runs only if some input needs it.
Var make_node(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward);

inline bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

/// Index reflected into [0, n) the way reflection padding does; falls back to
/// clamping when the extent is too small to reflect.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  if (i < 0) i = 0;
  if (i >= n) i = n - 1;
  return i;
}

void require_rank(const Tensor& t, int rank, const char* op);

}  // namespace vdip::ad::detail
