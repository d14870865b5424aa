#include "mfsb/synth_data.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mfsb/error.hpp"
#include "mfsb/rng.hpp"

namespace mfsb {

namespace {

void normalize(std::span<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n < kMinNorm) fail(ErrorKind::Degenerate, "cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

Tensor unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v = gaussian_vector(rows * cols, 1.0, rng);
  for (std::size_t r = 0; r < rows; ++r) normalize(std::span<double>(v).subspan(r * cols, cols));
  return Tensor({rows, cols}, std::move(v));
}

std::vector<double> latent_sum(const GeneratorSpec& gen, std::size_t s, std::size_t o) {
  const std::size_t d = gen.input_dim();
  std::vector<double> v(d);
  for (std::size_t c = 0; c < d; ++c) v[c] = gen.latent_state.at(s, c) + gen.latent_object.at(o, c);
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorKind::Io, "dataset line " + std::to_string(line) + ": bad real '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& text, std::size_t line) {
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorKind::Io, "dataset line " + std::to_string(line) + ": bad integer '" + text + "'");
  }
  return v;
}

constexpr const char* kMagic = "# mfsb-dataset v1";

}  // namespace

GeneratorSpec build_generator(const CompositionSpace& space, std::size_t d_in, std::uint64_t seed,
                              double noise_sigma) {
  if (d_in < 8) fail(ErrorKind::Config, "d_in must be at least 8, got " + std::to_string(d_in));
  if (!(noise_sigma >= 0.0)) fail(ErrorKind::Config, "noise_sigma must be >= 0");
  Rng rng = make_rng(seed, Stream::Latent);
  GeneratorSpec gen;
  gen.latent_state = unit_rows(space.n_states(), d_in, rng);
  gen.latent_object = unit_rows(space.n_objects(), d_in, rng);
  gen.noise_sigma = noise_sigma;
  return gen;
}

std::uint64_t sample_seed(std::uint64_t seed, PairId pair, std::size_t sample_id) {
  return hash_seed({seed, static_cast<std::uint64_t>(Stream::Noise), pair, sample_id});
}

Sample synthesize_sample(const CompositionSpace& space, PairId pair, const GeneratorSpec& gen,
                         std::uint64_t seed, double noise_sigma) {
  if (!(noise_sigma >= 0.0)) fail(ErrorKind::Config, "noise_sigma must be >= 0");
  const Pair p = space.pair(pair);
  Sample s;
  s.pair = pair;
  s.state = p.state;
  s.object = p.object;
  s.features = latent_sum(gen, p.state, p.object);
  Rng rng(seed);
  const auto eps = gaussian_vector(s.features.size(), noise_sigma, rng);
  for (std::size_t c = 0; c < eps.size(); ++c) s.features[c] += eps[c];
  normalize(s.features);
  return s;
}

const std::vector<Sample>& Dataset::samples(Partition p) const {
  switch (p) {
    case Partition::Train: return train;
    case Partition::Val: return val;
    case Partition::Test: return test;
  }
  return test;
}

Dataset materialize_dataset(const CompositionSpace& space, const Split& split, const GeneratorSpec& gen,
                            double noise_sigma, std::uint64_t seed) {
  Dataset data;
  data.d_in = gen.input_dim();
  data.noise_sigma = noise_sigma;
  data.seed = seed;
  for (Partition part : {Partition::Train, Partition::Val, Partition::Test}) {
    auto& out = part == Partition::Train ? data.train : part == Partition::Val ? data.val : data.test;
    for (const SampleRef& ref : split.samples(part)) {
      Sample s = synthesize_sample(space, ref.pair, gen, sample_seed(seed, ref.pair, ref.sample_id), noise_sigma);
      s.sample_id = ref.sample_id;
      s.partition = part;
      out.push_back(std::move(s));
    }
  }
  return data;
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << kMagic << '\n';
  out << "n " << data.size() << " d_in " << data.d_in << " sigma " << format_double(data.noise_sigma)
      << " seed " << data.seed << '\n';
  for (Partition part : {Partition::Train, Partition::Val, Partition::Test}) {
    for (const Sample& s : data.samples(part)) {
      out << s.sample_id << '\t' << s.state << '\t' << s.object << '\t' << to_string(part);
      for (double v : s.features) out << '\t' << format_double(v);
      out << '\n';
    }
  }
}

Dataset read_dataset(std::istream& in, const CompositionSpace& space) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) fail(ErrorKind::Io, "not a dataset file (bad magic line)");
  if (!std::getline(in, line)) fail(ErrorKind::Io, "dataset header missing");
  Dataset data;
  std::size_t n = 0;
  {
    std::istringstream header(line);
    std::string k1, k2, k3, k4, sigma;
    if (!(header >> k1 >> n >> k2 >> data.d_in >> k3 >> sigma >> k4 >> data.seed) || k1 != "n" ||
        k2 != "d_in" || k3 != "sigma" || k4 != "seed") {
      fail(ErrorKind::Io, "dataset line 2: malformed header");
    }
    data.noise_sigma = parse_double(sigma, 2);
  }
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4 + data.d_in) {
      fail(ErrorKind::Io, "dataset line " + std::to_string(line_no) + ": expected " +
                              std::to_string(4 + data.d_in) + " fields, got " + std::to_string(fields.size()));
    }
    Sample s;
    s.sample_id = parse_u64(fields[0], line_no);
    s.state = parse_u64(fields[1], line_no);
    s.object = parse_u64(fields[2], line_no);
    if (s.state >= space.n_states() || s.object >= space.n_objects()) {
      fail(ErrorKind::Io, "dataset line " + std::to_string(line_no) + ": pair outside the space");
    }
    s.pair = space.pair_id(s.state, s.object);
    if (fields[3] == "train") s.partition = Partition::Train;
    else if (fields[3] == "val") s.partition = Partition::Val;
    else if (fields[3] == "test") s.partition = Partition::Test;
    else fail(ErrorKind::Io, "dataset line " + std::to_string(line_no) + ": bad split " + fields[3]);
    for (std::size_t c = 0; c < data.d_in; ++c) s.features.push_back(parse_double(fields[4 + c], line_no));
    auto& out = s.partition == Partition::Train ? data.train : s.partition == Partition::Val ? data.val : data.test;
    out.push_back(std::move(s));
  }
  if (data.size() != n) {
    fail(ErrorKind::Io, "dataset header promises " + std::to_string(n) + " rows, found " + std::to_string(data.size()));
  }
  return data;
}

PairId nearest_latent_sum(const CompositionSpace& space, const GeneratorSpec& gen,
                          std::span<const double> features, std::span<const PairId> candidates) {
  if (candidates.empty()) fail(ErrorKind::Config, "no candidate pairs");
  PairId best = candidates.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (PairId id : candidates) {
    const Pair p = space.pair(id);
    auto proto = latent_sum(gen, p.state, p.object);
    normalize(proto);
    double score = 0.0;
    for (std::size_t c = 0; c < proto.size(); ++c) score += proto[c] * features[c];
    if (score > best_score || (score == best_score && id < best)) {
      best_score = score;
      best = id;
    }
  }
  return best;
}

double oracle_accuracy(const CompositionSpace& space, const GeneratorSpec& gen,
                       std::span<const Sample> samples, std::span<const PairId> candidates) {
  if (samples.empty()) fail(ErrorKind::Metric, "oracle accuracy over zero samples");
  std::size_t hits = 0;
  for (const Sample& s : samples) hits += nearest_latent_sum(space, gen, s.features, candidates) == s.pair;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace mfsb
