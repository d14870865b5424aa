#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "mfsb/tensor.hpp"

namespace mfsb {

struct GradCheckOptions {
  double step = 1e-5;
  /// 0 checks every coordinate; otherwise an evenly strided subset of at
  /// most this many coordinates per parameter.
  std::size_t max_coords_per_param = 0;
  /// Lower bound on the relative-error denominator. Central differences
  /// carry absolute noise near eps * |f| / h, so coordinates whose gradient
  /// sits below that scale are compared in absolute terms.
  double denominator_floor = 1e-8;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of the scalar `loss_fn` against central
/// differences (f(p+h) - f(p-h)) / 2h, coordinate by coordinate. Relative
/// error uses max(|analytic|, |numeric|, denominator_floor) as denominator. Parameters
/// with requires_grad == false are skipped. `loss_fn` must be deterministic;
/// two baseline evaluations that disagree raise a determinism error.
///
/// `loss_fn` is called both under a tape and with no tape active, and must
/// build its graph from the live parameter values on every call.
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                std::span<Tensor> params,
                                const GradCheckOptions& options = {});

}  // namespace mfsb
