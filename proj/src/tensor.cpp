#include "mfsb/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfsb/error.hpp"

namespace mfsb {

using detail::TensorData;
using DataPtr = std::shared_ptr<TensorData>;

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Degenerate: return "degenerate-input";
    case ErrorKind::Index: return "index";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Determinism: return "determinism";
    case ErrorKind::Config: return "config";
    case ErrorKind::Split: return "split";
    case ErrorKind::Vocabulary: return "vocabulary";
    case ErrorKind::Metric: return "metric";
    case ErrorKind::Io: return "io";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::EmptyContext: return "empty-context";
  }
  return "unknown";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

void check_shape(const Shape& shape) {
  if (shape.empty()) fail(ErrorKind::Dimension, "shape must have at least one axis");
  for (auto s : shape) {
    if (s == 0) fail(ErrorKind::Dimension, "zero-length axis in shape " + shape_string(shape));
  }
}

std::vector<double>& ensure_grad(TensorData& t) {
  if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
  return t.grad;
}

// Gradient sink for an input, or nullptr when it does not require one.
double* sink(const DataPtr& t) {
  if (!t->requires_grad) return nullptr;
  return ensure_grad(*t).data();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::Dimension, std::string(op) + ": shapes " + shape_string(a.shape()) +
                                   " and " + shape_string(b.shape()) + " differ");
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    fail(ErrorKind::Dimension, std::string(op) + ": expected rank " + std::to_string(rank) +
                                   ", got " + shape_string(a.shape()));
  }
}

void require_defined(const char* op, const Tensor& a) {
  if (!a.defined()) fail(ErrorKind::Contract, std::string(op) + ": undefined tensor");
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (mfsb::numel(shape) != values.size()) {
    fail(ErrorKind::Dimension, "shape " + shape_string(shape) + " needs " +
                                   std::to_string(mfsb::numel(shape)) + " values, got " +
                                   std::to_string(values.size()));
  }
  data_ = std::make_shared<TensorData>();
  data_->shape = std::move(shape);
  data_->values = std::move(values);
  data_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto n = mfsb::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  std::vector<double> flat;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& row : rows) {
    if (row.size() != cols) fail(ErrorKind::Dimension, "ragged matrix literal");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(flat), requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined("shape", *this);
  return data_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    fail(ErrorKind::Index, "axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return mfsb::numel(shape()); }

std::span<const double> Tensor::values() const {
  require_defined("values", *this);
  return data_->values;
}

std::span<double> Tensor::mutable_values() {
  require_defined("mutable_values", *this);
  if (data_->node) fail(ErrorKind::Contract, "cannot mutate a tensor recorded on a tape");
  return data_->values;
}

double Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::Contract, "item() on non-scalar " + shape_string(shape()));
  return data_->values[0];
}

double Tensor::operator[](std::size_t flat_index) const {
  if (flat_index >= numel()) fail(ErrorKind::Index, "flat index out of range");
  return data_->values[flat_index];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require_rank("at", *this, 2);
  if (row >= data_->shape[0] || col >= data_->shape[1]) {
    fail(ErrorKind::Index, "at(" + std::to_string(row) + "," + std::to_string(col) +
                               ") outside " + shape_string(data_->shape));
  }
  return data_->values[row * data_->shape[1] + col];
}

bool Tensor::requires_grad() const { return data_ && data_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  require_defined("set_requires_grad", *this);
  if (data_->node) fail(ErrorKind::Contract, "requires_grad is fixed for recorded tensors");
  data_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return data_ && !data_->node; }

std::optional<std::size_t> Tensor::node_id() const {
  return data_ ? data_->node : std::nullopt;
}

bool Tensor::has_grad() const { return data_ && !data_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined("grad", *this);
  return data_->grad;
}

void Tensor::zero_grad() {
  require_defined("zero_grad", *this);
  data_->grad.clear();
}

Tensor Tensor::detach() const {
  require_defined("detach", *this);
  return Tensor(data_->shape, data_->values, false);
}

Tensor Tensor::clone() const {
  require_defined("clone", *this);
  return Tensor(data_->shape, data_->values, data_->requires_grad && !data_->node);
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)), previous_(g_active_tape) {
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

NoGradScope::NoGradScope() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = saved_; }

void Tape::backward(const Tensor& loss) {
  if (consumed_) fail(ErrorKind::Contract, "backward already ran on this tape");
  require_defined("backward", loss);
  if (loss.numel() != 1) {
    fail(ErrorKind::Contract, "backward needs a scalar loss, got " + shape_string(loss.shape()));
  }
  const auto& data = loss.storage();
  if (!data->node || data->tape_id != id_) {
    fail(ErrorKind::Contract, "loss was not recorded on this tape");
  }
  consumed_ = true;
  ensure_grad(*data)[0] += 1.0;
  // Nodes were appended in evaluation order, so reverse order is a valid
  // topological order for the adjoint sweep.
  for (std::size_t i = *data->node + 1; i-- > 0;) {
    auto& node = nodes_[i];
    ensure_grad(*node.output);
    node.rule(*node.output);
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) fail(ErrorKind::Contract, "backward called with no active tape");
  tape->backward(loss);
}

// Creates an op result, recording `rule` when a tape is active and any input
// requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
                   std::function<void(TensorData&)> rule) {
  Tensor out(std::move(shape), std::move(values), false);
  Tape* tape = Tape::active();
  if (!tape) return out;
  bool needs = false;
  for (const auto& in : inputs) {
    if (!in.requires_grad()) continue;
    const auto& d = in.storage();
    if (d->node && d->tape_id != tape->id_) {
      fail(ErrorKind::Contract, "input tensor was recorded on a different tape");
    }
    needs = true;
  }
  if (!needs) return out;
  if (tape->consumed_) fail(ErrorKind::Contract, "recording onto a consumed tape");
  out.data_->requires_grad = true;
  out.data_->tape_id = tape->id_;
  out.data_->node = tape->nodes_.size();
  Tape::Node node;
  for (const auto& in : inputs) node.inputs.push_back(in.storage());
  node.output = out.data_;
  node.rule = std::move(rule);
  tape->nodes_.push_back(std::move(node));
  return out;
}

namespace {

Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                   std::function<void(TensorData&)> rule) {
  return mfsb::make_result(std::move(shape), std::move(values),
                           std::span<const Tensor>(inputs.begin(), inputs.size()), std::move(rule));
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  DataPtr pa = a.storage(), pb = b.storage();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    if (double* gb = sink(pb))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  DataPtr pa = a.storage(), pb = b.storage();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    if (double* gb = sink(pb))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  DataPtr pa = a.storage(), pb = b.storage();
  return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * pb->values[i];
    if (double* gb = sink(pb))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * pa->values[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  DataPtr pa = a.storage();
  return make_result(a.shape(), std::move(out), {a}, [pa, factor](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * factor;
  });
}

Tensor tanh(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  DataPtr pa = a.storage();
  return make_result(a.shape(), std::move(out), {a}, [pa](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        ga[i] += o.grad[i] * (1.0 - o.values[i] * o.values[i]);
  });
}

// ---- matrix products ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorKind::Dimension, "matmul: " + shape_string(a.shape()) + " x " +
                                   shape_string(b.shape()) + " inner dimensions disagree");
  }
  const double* A = a.values().data();
  const double* B = b.values().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += aip * brow[j];
    }
  }
  DataPtr pa = a.storage(), pb = b.storage();
  return make_result({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](TensorData& o) {
    const double* G = o.grad.data();
    if (double* ga = sink(pa)) {
      const double* Bv = pb->values.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (double* gb = sink(pb)) {
      const double* Av = pa->values.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = Av[i * k + p];
          double* row = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += aip * G[i * n + j];
        }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    fail(ErrorKind::Dimension, "matmul_nt: " + shape_string(a.shape()) + " x " +
                                   shape_string(b.shape()) + "^T inner dimensions disagree");
  }
  const double* A = a.values().data();
  const double* B = b.values().data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
      out[i * n + j] = acc;
    }
  DataPtr pa = a.storage(), pb = b.storage();
  return make_result({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](TensorData& o) {
    const double* G = o.grad.data();
    if (double* ga = sink(pa)) {
      const double* Bv = pb->values.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * Bv[j * k + p];
        }
    }
    if (double* gb = sink(pb)) {
      const double* Av = pa->values.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * Av[i * k + p];
        }
    }
  });
}

// ---- structural -----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  if (mfsb::numel(shape) != a.numel()) {
    fail(ErrorKind::Dimension, "reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  DataPtr pa = a.storage();
  return make_result(std::move(shape), std::move(out), {a}, [pa](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat_rows: no inputs");
  const std::size_t cols = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank("concat_rows", p, 2);
    if (p.dim(1) != cols) {
      fail(ErrorKind::Dimension, "concat_rows: column mismatch " + shape_string(parts[0].shape()) +
                                     " vs " + shape_string(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());

  std::vector<DataPtr> storages;
  for (const auto& p : parts) storages.push_back(p.storage());
  return make_result({rows, cols}, std::move(out), parts, [storages, cols](TensorData& o) {
    std::size_t offset = 0;
    for (const auto& s : storages) {
      const std::size_t len = s->shape[0] * cols;
      if (double* g = sink(s))
        for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[offset + i];
      offset += len;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", a, 2);
  if (begin >= end || end > a.dim(0)) {
    fail(ErrorKind::Index, "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                               ") of " + shape_string(a.shape()));
  }
  const std::size_t cols = a.dim(1);
  auto v = a.values();
  std::vector<double> out(v.begin() + begin * cols, v.begin() + end * cols);
  DataPtr pa = a.storage();
  return make_result({end - begin, cols}, std::move(out), {a}, [pa, begin, cols](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[begin * cols + i] += o.grad[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat_cols: no inputs");
  require_rank("concat_cols", parts[0], 2);
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != rows) fail(ErrorKind::Dimension, "concat_cols: row mismatch");
    cols += p.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    auto v = p.values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.begin() + r * pc, pc, out.begin() + r * cols + offset);
    offset += pc;
  }
  std::vector<DataPtr> storages;
  for (const auto& p : parts) storages.push_back(p.storage());
  return make_result({rows, cols}, std::move(out), parts, [storages, rows, cols](TensorData& o) {
    std::size_t off = 0;
    for (const auto& s : storages) {
      const std::size_t pc = s->shape[1];
      if (double* g = sink(s))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += o.grad[r * cols + off + c];
      off += pc;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  if (begin >= end || end > a.dim(1)) {
    fail(ErrorKind::Index, "slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                               ") of " + shape_string(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1), w = end - begin;
  auto v = a.values();
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(v.begin() + r * cols + begin, w, out.begin() + r * w);
  DataPtr pa = a.storage();
  return make_result({rows, w}, std::move(out), {a}, [pa, rows, cols, begin, w](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += o.grad[r * w + c];
  });
}

Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank("index_rows", a, 2);
  if (rows.empty()) fail(ErrorKind::Index, "index_rows: empty row list");
  const std::size_t cols = a.dim(1), n = a.dim(0);
  auto v = a.values();
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  for (auto r : rows) {
    if (r >= n) fail(ErrorKind::Index, "index_rows: row " + std::to_string(r) + " of " + std::to_string(n));
    out.insert(out.end(), v.begin() + r * cols, v.begin() + (r + 1) * cols);
  }
  DataPtr pa = a.storage();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({idx.size(), cols}, std::move(out), {a}, [pa, idx, cols](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) ga[idx[i] * cols + c] += o.grad[i * cols + c];
  });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  DataPtr pa = a.storage();
  return make_result({1}, {acc}, {a}, [pa](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < pa->values.size(); ++i) ga[i] += o.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    fail(ErrorKind::Dimension, "dot: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  auto av = a.values(), bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  DataPtr pa = a.storage(), pb = b.storage();
  return make_result({1}, {acc}, {a, b}, [pa, pb](TensorData& o) {
    const double g = o.grad[0];
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < pa->values.size(); ++i) ga[i] += g * pb->values[i];
    if (double* gb = sink(pb))
      for (std::size_t i = 0; i < pb->values.size(); ++i) gb[i] += g * pa->values[i];
  });
}

Tensor mean_rows(const Tensor& a) {
  require_rank("mean_rows", a, 2);
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  auto v = a.values();
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += v[r * cols + c];
  const double inv = 1.0 / static_cast<double>(rows);
  for (auto& x : out) x *= inv;
  DataPtr pa = a.storage();
  return make_result({cols}, std::move(out), {a}, [pa, rows, cols, inv](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += o.grad[c] * inv;
  });
}

Tensor mean_row_groups(const Tensor& a, std::size_t group) {
  require_rank("mean_row_groups", a, 2);
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (group == 0 || rows % group != 0) {
    fail(ErrorKind::Dimension, "mean_row_groups: " + std::to_string(rows) +
                                   " rows not divisible into groups of " + std::to_string(group));
  }
  const std::size_t n = rows / group;
  auto v = a.values();
  std::vector<double> out(n * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.data() + (r / group) * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += v[r * cols + c];
  }
  const double inv = 1.0 / static_cast<double>(group);
  for (auto& x : out) x *= inv;
  DataPtr pa = a.storage();
  return make_result({n, cols}, std::move(out), {a}, [pa, rows, cols, group, inv](TensorData& o) {
    if (double* ga = sink(pa))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          ga[r * cols + c] += o.grad[(r / group) * cols + c] * inv;
  });
}

// ---- softmax / similarity / loss -------------------------------------------

Tensor softmax_last_dim(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t slices = x.numel() / n;
  auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t s = 0; s < slices; ++s) {
    const double* in = v.data() + s * n;
    double* y = out.data() + s * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(in[i])) fail(ErrorKind::Numeric, "softmax: non-finite input");
      mx = std::max(mx, in[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::exp(in[i] - mx);
      z += y[i];
    }
    for (std::size_t i = 0; i < n; ++i) y[i] /= z;
  }
  DataPtr px = x.storage();
  return make_result(x.shape(), std::move(out), {x}, [px, n, slices](TensorData& o) {
    double* gx = sink(px);
    if (!gx) return;
    for (std::size_t s = 0; s < slices; ++s) {
      const double* y = o.values.data() + s * n;
      const double* gy = o.grad.data() + s * n;
      double inner = 0.0;
      for (std::size_t i = 0; i < n; ++i) inner += gy[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) gx[s * n + i] += y[i] * (gy[i] - inner);
    }
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_rank("cosine_similarity", a, 1);
  require_same_shape("cosine_similarity", a, b);
  auto av = a.values(), bv = b.values();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < kMinNorm || nb < kMinNorm) {
    fail(ErrorKind::Degenerate, "cosine_similarity: zero-norm input");
  }
  const double c = ab / (na * nb);
  DataPtr pa = a.storage(), pb = b.storage();
  return make_result({1}, {c}, {a, b}, [pa, pb, na, nb, c](TensorData& o) {
    const double g = o.grad[0];
    const auto& A = pa->values;
    const auto& B = pb->values;
    // d/da = b/(|a||b|) - c a/|a|^2
    if (double* ga = sink(pa))
      for (std::size_t i = 0; i < A.size(); ++i)
        ga[i] += g * (B[i] / (na * nb) - c * A[i] / (na * na));
    if (double* gb = sink(pb))
      for (std::size_t i = 0; i < B.size(); ++i)
        gb[i] += g * (A[i] / (na * nb) - c * B[i] / (nb * nb));
  });
}

Tensor cosine_rows(const Tensor& v, const Tensor& m) {
  require_rank("cosine_rows", v, 1);
  require_rank("cosine_rows", m, 2);
  const std::size_t n = m.dim(0), d = m.dim(1);
  if (v.dim(0) != d) {
    fail(ErrorKind::Dimension, "cosine_rows: " + shape_string(v.shape()) + " vs rows of " +
                                   shape_string(m.shape()));
  }
  auto vv = v.values(), mv = m.values();
  double vvn = 0.0;
  for (double x : vv) vvn += x * x;
  const double nv = std::sqrt(vvn);
  if (nv < kMinNorm) fail(ErrorKind::Degenerate, "cosine_rows: zero-norm query vector");
  std::vector<double> out(n), norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double ab = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      ab += vv[c] * mv[r * d + c];
      bb += mv[r * d + c] * mv[r * d + c];
    }
    norms[r] = std::sqrt(bb);
    if (norms[r] < kMinNorm) {
      fail(ErrorKind::Degenerate, "cosine_rows: zero-norm row " + std::to_string(r));
    }
    out[r] = ab / (nv * norms[r]);
  }
  DataPtr pv = v.storage(), pm = m.storage();
  return make_result({n}, std::move(out), {v, m}, [pv, pm, n, d, nv, norms](TensorData& o) {
    const auto& V = pv->values;
    const auto& M = pm->values;
    double* gv = sink(pv);
    double* gm = sink(pm);
    for (std::size_t r = 0; r < n; ++r) {
      const double g = o.grad[r];
      if (g == 0.0) continue;
      const double c = o.values[r];
      const double nr = norms[r];
      const double* row = M.data() + r * d;
      if (gv)
        for (std::size_t k = 0; k < d; ++k) gv[k] += g * (row[k] / (nv * nr) - c * V[k] / (nv * nv));
      if (gm)
        for (std::size_t k = 0; k < d; ++k)
          gm[r * d + k] += g * (V[k] / (nv * nr) - c * row[k] / (nr * nr));
    }
  });
}

Tensor cross_entropy_from_logits(const Tensor& logits, std::size_t target) {
  require_rank("cross_entropy_from_logits", logits, 1);
  const std::size_t n = logits.dim(0);
  if (target >= n) {
    fail(ErrorKind::Index, "cross_entropy: target " + std::to_string(target) + " with " +
                               std::to_string(n) + " classes");
  }
  auto v = logits.values();
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorKind::Numeric, "cross_entropy: non-finite logit");
    mx = std::max(mx, x);
  }
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  const double loss = lse - v[target];
  DataPtr pl = logits.storage();
  return make_result({1}, {loss}, {logits}, [pl, n, target, mx, z](TensorData& o) {
    double* gl = sink(pl);
    if (!gl) return;
    const double g = o.grad[0];
    const auto& L = pl->values;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::exp(L[i] - mx) / z;
      gl[i] += g * (p - (i == target ? 1.0 : 0.0));
    }
  });
}

}  // namespace mfsb
