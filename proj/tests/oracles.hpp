#pragma once

// Test-only oracles, independent of the library's gradient path.

#include "xsrl/autodiff.hpp"

#include <cmath>
#include <functional>

namespace oracles {

using xsrl::Index;
using xsrl::Scalar;
using xsrl::Tensor;

/// Central finite difference of a freshly re-evaluated scalar function with
/// respect to one tensor entry.
template <typename F>
Scalar fd_partial(F&& eval, Tensor& t, Index i, Scalar h = 1e-5) {
  const Scalar saved = t[i];
  t[i] = saved + h;
  const Scalar up = eval();
  t[i] = saved - h;
  const Scalar dn = eval();
  t[i] = saved;
  return (up - dn) / (2 * h);
}

/// Relative-error check with an absolute floor, per the gradient suite.
inline bool grad_close(Scalar ad, Scalar fd, Scalar rel = 1e-4, Scalar floor_abs = 1e-7) {
  const Scalar diff = std::abs(ad - fd);
  const Scalar scale = std::max(std::abs(ad), std::abs(fd));
  return diff <= std::max(floor_abs, rel * scale);
}

}  // namespace oracles
