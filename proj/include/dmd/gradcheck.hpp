#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "dmd/tensor.hpp"

namespace dmd {

// Central-difference gradient verification. `f` must be deterministic and
// return a scalar; x is evaluated analytically (tape) and numerically and
// the max per-coordinate relative error is returned.
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                double eps) {
  if (eps <= 0.0) throw TensorError("finite_diff_check requires eps > 0");

  Tensor xa(x.shape(), x.data(), true);
  Tensor loss = f(xa);
  if (loss.size() != 1) throw TensorError("finite_diff_check: f must return a scalar");
  backward(loss);
  const std::vector<double> analytic =
      xa.has_grad() ? xa.grad() : std::vector<double>(xa.size(), 0.0);

  double max_rel = 0.0;
  std::vector<double> work = x.data();
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double orig = work[i];
    work[i] = orig + eps;
    const double fp = f(Tensor(x.shape(), work)).item();
    work[i] = orig - eps;
    const double fm = f(Tensor(x.shape(), work)).item();
    work[i] = orig;
    clear_tape();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    max_rel = std::max(max_rel, err);
  }
  return max_rel;
}

}  // namespace dmd
