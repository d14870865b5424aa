#include "mfsb/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mfsb/error.hpp"

namespace mfsb {

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                std::span<Tensor> params,
                                const GradCheckOptions& options) {
  if (!(options.step > 0.0)) fail(ErrorKind::Config, "gradient check step must be positive");

  for (auto& p : params) p.zero_grad();
  std::vector<std::vector<double>> analytic(params.size());
  {
    Tape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].requires_grad()) continue;
      if (params[i].has_grad()) {
        analytic[i].assign(params[i].grad().begin(), params[i].grad().end());
      } else {
        analytic[i].assign(params[i].numel(), 0.0);  // not reachable from the loss
      }
      params[i].zero_grad();
    }
  }

  auto evaluate = [&] { return loss_fn().item(); };
  const double base_a = evaluate();
  const double base_b = evaluate();
  if (base_a != base_b) {
    fail(ErrorKind::Determinism, "loss function returned different values for identical inputs");
  }

  GradCheckReport report;
  const double h = options.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].requires_grad()) continue;
    auto values = params[i].mutable_values();
    const std::size_t n = values.size();
    std::size_t stride = 1;
    if (options.max_coords_per_param && n > options.max_coords_per_param) {
      stride = (n + options.max_coords_per_param - 1) / options.max_coords_per_param;
    }
    for (std::size_t c = 0; c < n; c += stride) {
      const double original = values[c];
      values[c] = original + h;
      const double up = evaluate();
      values[c] = original - h;
      const double down = evaluate();
      values[c] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = i;
        report.worst_coord = c;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mfsb
