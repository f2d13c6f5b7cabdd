#pragma once

#include <functional>

#include "pcbdet/tensor.hpp"

namespace pcbdet {

using TensorFn = std::function<Tensor(const Tensor&)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued f at `point`. h must be > 0.
double finite_diff_check(const TensorFn& f, const Tensor& point, double h);

// Same check for a scalar recomputed by f() while perturbing `param` in
// place (a live model parameter). Checks at most max_coords coordinates,
// sampled with rng when given, all coordinates otherwise.
double finite_diff_check_param(const std::function<Tensor()>& f, Tensor param,
                               double h, int max_coords = -1,
                               Rng* rng = nullptr);

}  // namespace pcbdet
