#include "dawgen/fd_check.hpp"

#include <cmath>

#include "dawgen/error.hpp"

namespace dawgen {

std::vector<double> analytic_gradient(const std::function<Tensor()>& loss_fn,
                                      const Tensor& param) {
  Tensor loss = loss_fn();
  backward(loss);
  return param.grad();
}

double finite_difference_check(const std::function<Tensor()>& loss_fn,
                               Tensor param, double h,
                               const std::vector<int>& coords) {
  if (h <= 0.0) throw Error("finite_difference_check: h must be positive");

  std::vector<double> analytic = analytic_gradient(loss_fn, param);

  std::vector<int> idx = coords;
  if (idx.empty()) {
    idx.resize(param.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  }

  std::vector<double> base = param.values();
  double max_rel = 0.0;
  for (int i : idx) {
    std::vector<double> perturbed = base;
    perturbed[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)] + h;
    param.set_values(perturbed);
    double up = loss_fn().item();
    perturbed[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)] - h;
    param.set_values(perturbed);
    double down = loss_fn().item();
    param.set_values(base);
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error("finite_difference_check: non-finite loss at perturbed point");
    double g_fd = (up - down) / (2.0 * h);
    double rel = std::abs(analytic[static_cast<std::size_t>(i)] - g_fd) /
                 std::max(std::abs(g_fd), 1e-8);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace dawgen
