#include "mfsb/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "mfsb/error.hpp"

namespace mfsb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Best seen and best unseen candidate of one sample.
struct Best {
  double seen_score = -kInf, unseen_score = -kInf;
  std::size_t seen = 0, unseen = 0;  // candidate positions
  bool has_seen = false, has_unseen = false;
};

bool better(double score, PairId id, double best_score, PairId best_id) {
  return score > best_score || (score == best_score && id < best_id);
}

std::vector<Best> best_per_sample(const ScoreTable& t) {
  std::vector<Best> out(t.n_samples());
  for (std::size_t i = 0; i < t.n_samples(); ++i) {
    Best& b = out[i];
    for (std::size_t c = 0; c < t.n_candidates(); ++c) {
      const double s = t.score(i, c);
      if (t.candidate_seen[c]) {
        if (!b.has_seen || better(s, t.candidates[c], b.seen_score, t.candidates[b.seen])) {
          b.seen_score = s, b.seen = c, b.has_seen = true;
        }
      } else if (!b.has_unseen || better(s, t.candidates[c], b.unseen_score, t.candidates[b.unseen])) {
        b.unseen_score = s, b.unseen = c, b.has_unseen = true;
      }
    }
  }
  return out;
}

std::size_t choose(const ScoreTable& t, const Best& b, double bias) {
  if (!b.has_unseen) return b.seen;
  if (!b.has_seen) return b.unseen;
  if (bias == kInf) return b.seen;
  if (bias == -kInf) return b.unseen;
  return better(b.seen_score + bias, t.candidates[b.seen], b.unseen_score, t.candidates[b.unseen]) ? b.seen
                                                                                                 : b.unseen;
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void ScoreTable::validate() const {
  if (candidates.empty()) fail(ErrorKind::Config, "empty candidate set");
  if (candidate_seen.size() != candidates.size()) fail(ErrorKind::Dimension, "candidate flags do not match candidates");
  if (truth_seen.size() != truth.size()) fail(ErrorKind::Dimension, "truth flags do not match samples");
  if (scores.size() != truth.size() * candidates.size()) {
    fail(ErrorKind::Dimension, "score table holds " + std::to_string(scores.size()) + " values for " +
                                   std::to_string(truth.size()) + "x" + std::to_string(candidates.size()));
  }
}

std::vector<PairId> predict_pairs(const ScoreTable& table, double bias) {
  table.validate();
  if (std::isnan(bias)) fail(ErrorKind::Numeric, "bias is NaN");
  const auto best = best_per_sample(table);
  std::vector<PairId> out(table.n_samples());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = table.candidates[choose(table, best[i], bias)];
  return out;
}

double sweep_range(const ScoreTable& table) {
  table.validate();
  double delta = 0.0;
  for (const Best& b : best_per_sample(table)) {
    if (b.has_seen && b.has_unseen) delta = std::max(delta, std::abs(b.seen_score - b.unseen_score));
  }
  return delta;
}

std::vector<CurvePoint> bias_sweep(const ScoreTable& table, std::size_t n_points) {
  table.validate();
  if (n_points < 3) fail(ErrorKind::Config, "bias sweep needs at least 3 points");
  std::size_t n_seen = 0, n_unseen = 0;
  for (bool s : table.truth_seen) (s ? n_seen : n_unseen) += 1;
  if (n_seen == 0 || n_unseen == 0) {
    fail(ErrorKind::Metric, "evaluation set has " + std::to_string(n_seen) + " seen and " +
                                std::to_string(n_unseen) + " unseen samples; both are required");
  }
  const auto best = best_per_sample(table);
  double delta = 0.0;
  for (const Best& b : best)
    if (b.has_seen && b.has_unseen) delta = std::max(delta, std::abs(b.seen_score - b.unseen_score));

  std::vector<double> biases{-kInf};
  for (std::size_t k = 0; k < n_points; ++k) {
    biases.push_back(-delta + 2.0 * delta * static_cast<double>(k) / static_cast<double>(n_points - 1));
  }
  biases.push_back(kInf);

  std::vector<CurvePoint> curve;
  for (double bias : biases) {
    std::size_t hit_seen = 0, hit_unseen = 0;
    for (std::size_t i = 0; i < table.n_samples(); ++i) {
      if (table.candidates[choose(table, best[i], bias)] != table.truth[i]) continue;
      (table.truth_seen[i] ? hit_seen : hit_unseen) += 1;
    }
    curve.push_back({bias, static_cast<double>(hit_seen) / static_cast<double>(n_seen),
                     static_cast<double>(hit_unseen) / static_cast<double>(n_unseen)});
  }
  for (std::size_t k = 1; k < curve.size(); ++k) {
    if (curve[k].seen_acc < curve[k - 1].seen_acc || curve[k].unseen_acc > curve[k - 1].unseen_acc) {
      fail(ErrorKind::Metric, "bias sweep lost monotonicity at bias " + fmt(curve[k].bias));
    }
  }
  return curve;
}

double harmonic_mean(double s, double u) { return s + u > 0.0 ? 2.0 * s * u / (s + u) : 0.0; }

double curve_auc(std::span<const CurvePoint> curve) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : curve) pts.emplace_back(p.seen_acc, p.unseen_acc);
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second > b.second;
  });
  double area = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    area += (pts[k].first - pts[k - 1].first) * (pts[k].second + pts[k - 1].second) / 2.0;
  }
  return area;
}

EvalReport summarize(std::span<const CurvePoint> curve, World world) {
  EvalReport r;
  r.world = world;
  r.curve.assign(curve.begin(), curve.end());
  for (const auto& p : curve) {
    r.seen_acc = std::max(r.seen_acc, p.seen_acc);
    r.unseen_acc = std::max(r.unseen_acc, p.unseen_acc);
    r.harmonic_mean = std::max(r.harmonic_mean, harmonic_mean(p.seen_acc, p.unseen_acc));
  }
  r.auc = curve_auc(curve);
  return r;
}

double argmax_accuracy(std::span<const std::vector<double>> logits, std::span<const std::size_t> targets) {
  if (logits.size() != targets.size()) fail(ErrorKind::Dimension, "logit rows and targets differ in count");
  if (logits.empty()) fail(ErrorKind::Metric, "accuracy over zero samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& row = logits[i];
    hits += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == targets[i];
  }
  return static_cast<double>(hits) / static_cast<double>(logits.size());
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_report_csv_header(std::ostream& out) { out << "method,world,S,U,HM,AUC\n"; }

void write_report_csv_row(std::ostream& out, const std::string& method, const EvalReport& r) {
  out << csv_field(method) << ',' << to_string(r.world) << ',' << fmt(r.seen_acc) << ',' << fmt(r.unseen_acc) << ','
      << fmt(r.harmonic_mean) << ',' << fmt(r.auc) << '\n';
}

}  // namespace mfsb
