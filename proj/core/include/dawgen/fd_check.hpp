#pragma once

#include <functional>
#include <vector>

#include "dawgen/tensor.hpp"

namespace dawgen {

/// Independent gradient oracle: compares the analytic gradient of
/// `loss_fn` w.r.t. `param` against central finite differences.
///
/// `loss_fn` must rebuild the graph from the current leaf values on every
/// call (define-by-run). Returns the max over checked coordinates of
///   |g_analytic - g_fd| / max(|g_fd|, 1e-8).
/// When `coords` is empty, every coordinate is checked.
double finite_difference_check(const std::function<Tensor()>& loss_fn,
                               Tensor param, double h = 1e-4,
                               const std::vector<int>& coords = {});

/// Analytic gradient of loss_fn w.r.t. param, as a flat vector.
std::vector<double> analytic_gradient(const std::function<Tensor()>& loss_fn,
                                      const Tensor& param);

}  // namespace dawgen
