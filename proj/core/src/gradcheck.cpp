#include "pcbdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pcbdet {

namespace {

double relative_error(double analytic, double numeric) {
  if (!std::isfinite(analytic) || !std::isfinite(numeric))
    return std::numeric_limits<double>::infinity();
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double finite_diff_check(const TensorFn& f, const Tensor& point, double h) {
  check(h > 0.0, "finite_diff_check: h must be > 0");

  Tensor probe = Tensor::from_data(point.shape(), point.values(), true);
  Tensor y = f(probe);
  check(y.numel() == 1, "finite_diff_check: f must be scalar-valued");
  backward(y);
  std::vector<double> analytic = probe.has_grad()
                                     ? probe.grad()
                                     : std::vector<double>(probe.numel(), 0.0);

  NoGradGuard no_grad;
  double max_err = 0.0;
  std::vector<double> values = point.values();
  for (size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up =
        f(Tensor::from_data(point.shape(), values, false)).item();
    values[i] = saved - h;
    const double down =
        f(Tensor::from_data(point.shape(), values, false)).item();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    max_err = std::max(max_err, relative_error(analytic[i], numeric));
  }
  return max_err;
}

double finite_diff_check_param(const std::function<Tensor()>& f, Tensor param,
                               double h, int max_coords, Rng* rng) {
  check(h > 0.0, "finite_diff_check_param: h must be > 0");
  check(param.requires_grad(), "finite_diff_check_param: param must require grad");

  param.zero_grad();
  Tensor y = f();
  check(y.numel() == 1, "finite_diff_check_param: f must be scalar-valued");
  backward(y);
  std::vector<double> analytic = param.has_grad()
                                     ? param.grad()
                                     : std::vector<double>(param.numel(), 0.0);
  param.zero_grad();

  std::vector<int64_t> coords(param.numel());
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && max_coords < param.numel()) {
    check(rng != nullptr, "finite_diff_check_param: sampling needs an rng");
    for (int i = 0; i < max_coords; ++i)
      std::swap(coords[i],
                coords[rng->uniform_int(i, param.numel() - 1)]);
    coords.resize(max_coords);
  }

  NoGradGuard no_grad;
  double max_err = 0.0;
  auto& values = param.values_mut();
  for (int64_t idx : coords) {
    const double saved = values[idx];
    values[idx] = saved + h;
    const double up = f().item();
    values[idx] = saved - h;
    const double down = f().item();
    values[idx] = saved;
    const double numeric = (up - down) / (2.0 * h);
    max_err = std::max(max_err, relative_error(analytic[idx], numeric));
  }
  return max_err;
}

}  // namespace pcbdet
