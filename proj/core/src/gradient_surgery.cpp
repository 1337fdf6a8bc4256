#include "dawgen/gradient_surgery.hpp"

#include <cmath>

#include "dawgen/error.hpp"

namespace dawgen {
namespace {

double dot_vec(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_finite(const std::vector<double>& v, const char* name) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(std::string(name) + ": non-finite entry");
}

}  // namespace

std::vector<double> grad_project(const std::vector<double>& syn,
                                 const std::vector<double>& real) {
  if (syn.size() != real.size())
    throw Error("grad_project: length mismatch");
  require_finite(syn, "grad_project syn");
  require_finite(real, "grad_project real");
  double rr = dot_vec(real, real);
  if (rr == 0.0) throw Error("grad_project: zero real gradient");
  double sr = dot_vec(syn, real);
  if (sr >= 0.0) return syn;
  double c = sr / rr;
  std::vector<double> out(syn.size());
  for (std::size_t i = 0; i < syn.size(); ++i) out[i] = syn[i] - c * real[i];
  return out;
}

SurgeryResult surgery_step(Tensor& p, const std::vector<double>& real,
                           const std::vector<double>& syn, double eta,
                           double epsilon, bool project) {
  std::size_t n = p.values().size();
  if (real.size() != n || syn.size() != n)
    throw Error("surgery_step: gradient length mismatch");
  require_finite(real, "surgery_step real");
  require_finite(syn, "surgery_step syn");

  SurgeryResult res;
  res.dot = dot_vec(syn, real);
  res.conflict = res.dot < 0.0;

  const std::vector<double>* use = &syn;
  std::vector<double> projected;
  if (project && res.conflict) {
    projected = grad_project(syn, real);
    use = &projected;
  }

  std::vector<double> v = p.values();
  for (std::size_t i = 0; i < n; ++i)
    v[i] -= eta * (real[i] + epsilon * (*use)[i]);
  p.set_values(v);
  return res;
}

}  // namespace dawgen
