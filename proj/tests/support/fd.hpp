#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "selfgnn/tensor.hpp"

namespace selfgnn::testing {

// Central finite differences against a scalar function of a flat parameter
// pack. `f` must be a pure function of the tensors it receives.
struct FdReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "tensor i entry k"
  bool pass(double tol) const { return max_rel_err < tol; }
};

inline FdReport finite_difference_check(
    const std::function<double(const std::vector<Tensor>&)>& f, std::vector<Tensor> params,
    const std::vector<Tensor>& analytic, double h = 1e-5, double denom_floor = 1e-3) {
  FdReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].numel(); ++k) {
      const double orig = params[i][k];
      params[i][k] = orig + h;
      const double fp = f(params);
      params[i][k] = orig - h;
      const double fm = f(params);
      params[i][k] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[i][k];
      const double denom = std::max({std::fabs(fd), std::fabs(an), denom_floor});
      const double rel = std::fabs(fd - an) / denom;
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "tensor " + std::to_string(i) + " entry " + std::to_string(k) +
                       " analytic=" + std::to_string(an) + " fd=" + std::to_string(fd);
      }
    }
  }
  return report;
}

}  // namespace selfgnn::testing
