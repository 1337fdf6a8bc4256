#pragma once

#include <vector>

#include "dawgen/tensor.hpp"

namespace dawgen {

/// Removes the component of syn that opposes real. If the two already agree
/// (dot >= 0) syn is returned bit-exactly; otherwise syn is projected onto
/// the plane orthogonal to real.
std::vector<double> grad_project(const std::vector<double>& syn,
                                 const std::vector<double>& real);

struct SurgeryResult {
  bool conflict = false;      // was syn . real < 0 before projection
  double dot = 0.0;           // raw syn . real
};

/// In-place update P <- P - eta * (real + epsilon * syn'), where syn' is the
/// projected synthetic gradient when project=true and raw syn otherwise.
SurgeryResult surgery_step(Tensor& p, const std::vector<double>& real,
                           const std::vector<double>& syn, double eta,
                           double epsilon, bool project);

}  // namespace dawgen
