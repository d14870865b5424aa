#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfsb {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  // Set for tensors produced by a recorded op: (tape id, node index).
  std::uint64_t tape_id = 0;
  std::optional<std::size_t> node;
};

}  // namespace detail

/// Dense row-major f64 array. Copies are shallow handles onto shared
/// storage; use clone() or detach() for an independent copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// 1-D tensor.
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  /// 2-D tensor from nested rows; rows must share a length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Write access to leaf storage. Refused for tensors recorded on a tape,
  /// since their backward rules captured the old values.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  std::optional<std::size_t> node_id() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

  const detail::TensorData* raw() const { return data_.get(); }
  const std::shared_ptr<detail::TensorData>& storage() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> data) : data_(std::move(data)) {}
  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>, std::span<const Tensor>,
                            std::function<void(detail::TensorData&)>);

  std::shared_ptr<detail::TensorData> data_;
};

/// Define-by-run gradient tape. Constructing a Tape makes it the active tape
/// of the calling thread until it is destroyed; ops whose inputs require
/// gradients record onto it. With no active tape, ops compute values only.
///
/// A tape supports exactly one backward pass. A second call throws a
/// contract error: the recorded intermediates already hold accumulated
/// gradients, so replaying would double-count.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }
  bool consumed() const { return consumed_; }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    std::function<void(detail::TensorData&)> rule;  // receives the output
  };

  friend Tensor make_result(Shape, std::vector<double>, std::span<const Tensor>,
                            std::function<void(detail::TensorData&)>);

  std::uint64_t id_;
  Tape* previous_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

/// Suspends recording on this thread for its lifetime; ops compute values
/// only. A Tape constructed inside the scope records normally.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* saved_;
};

/// Runs backward on the active tape.
void backward(const Tensor& loss);

// ---- differentiable ops -------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor tanh(const Tensor& a);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
/// Gathers rows of a 2-D tensor.
Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows);

Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
/// [L,d] -> [d]
Tensor mean_rows(const Tensor& a);
/// [n*L, d] -> [n, d], averaging consecutive blocks of `group` rows.
Tensor mean_row_groups(const Tensor& a, std::size_t group);

Tensor softmax_last_dim(const Tensor& x);

/// dot(a,b)/(|a||b|) for equal-length vectors. Zero-norm input is rejected.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// Cosine of v [d] against every row of m [n,d] -> [n].
Tensor cosine_rows(const Tensor& v, const Tensor& m);

/// -log softmax(logits)[target], in log-sum-exp form.
Tensor cross_entropy_from_logits(const Tensor& logits, std::size_t target);

/// Norms below this are treated as zero by the cosine ops.
inline constexpr double kMinNorm = 1e-12;

}  // namespace mfsb
