#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mfsb/composition_space.hpp"

namespace mfsb {

/// Pair scores of every evaluation sample against a candidate list, with the
/// seen/unseen status needed for calibration. Row-major [samples, candidates].
struct ScoreTable {
  std::vector<PairId> candidates;
  std::vector<bool> candidate_seen;
  std::vector<PairId> truth;
  std::vector<bool> truth_seen;
  std::vector<double> scores;

  std::size_t n_samples() const { return truth.size(); }
  std::size_t n_candidates() const { return candidates.size(); }
  double score(std::size_t sample, std::size_t candidate) const {
    return scores[sample * candidates.size() + candidate];
  }
  void validate() const;
};

/// Argmax with `bias` added to seen candidates; ties go to the lowest pair id.
/// +inf restricts the argmax to seen candidates, -inf to unseen ones (when
/// the list has any).
std::vector<PairId> predict_pairs(const ScoreTable& table, double bias);

struct CurvePoint {
  double bias;
  double seen_acc;
  double unseen_acc;
};

/// Largest |best seen score - best unseen score| over samples; biases beyond
/// +-Delta cannot change any prediction.
double sweep_range(const ScoreTable& table);

/// n_points biases evenly spaced over [-Delta, +Delta] plus both infinite
/// endpoints, ascending. Needs seen and unseen samples.
std::vector<CurvePoint> bias_sweep(const ScoreTable& table, std::size_t n_points);

struct EvalReport {
  World world = World::Open;
  double seen_acc = 0.0;    // best seen accuracy over the sweep
  double unseen_acc = 0.0;  // best unseen accuracy over the sweep
  double harmonic_mean = 0.0;
  double auc = 0.0;
  std::vector<CurvePoint> curve;
};

double harmonic_mean(double s, double u);
/// Trapezoid area under U(S), points sorted by S ascending then U descending.
double curve_auc(std::span<const CurvePoint> curve);
EvalReport summarize(std::span<const CurvePoint> curve, World world);

/// Fraction of rows whose argmax (lowest index on ties) equals the target.
double argmax_accuracy(std::span<const std::vector<double>> logits, std::span<const std::size_t> targets);

struct PrimitiveAccuracy {
  std::optional<double> state;   // absent when the attr branch is inactive
  std::optional<double> object;  // absent when the obj branch is inactive
};

/// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(std::string_view text);

/// `method,world,S,U,HM,AUC`; ratios in shortest round-trip form.
void write_report_csv_header(std::ostream& out);
void write_report_csv_row(std::ostream& out, const std::string& method, const EvalReport& report);

}  // namespace mfsb
