#pragma once

// Dense rank-2 tensors and a reverse-mode gradient tape.
//
// A Tensor is a shared handle: copies alias the same storage. Leaves are made
// with Tensor::constant / Tensor::parameter; every other tensor is produced by
// an op that records itself on a Tape. Gradients computed by a tape are kept
// on the tape until Tape::backward writes them to the leaves, so separate
// tapes can run over the same parameters from different threads.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sstgcn::num {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  void fill(double v);
  Matrix& operator+=(const Matrix& other);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-differentiable) products used by the graph code and by oracles.
Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transposed(const Matrix& a);

namespace detail {
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool has_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  const Matrix& value() const { return node_->value; }
  // Only for leaves (optimizer updates, finite differences).
  Matrix& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  // Zero-filled matrix of the right shape when no gradient was written yet.
  const Matrix& grad() const;
  void zero_grad();

  double item() const;

  const detail::Node* id() const { return node_.get(); }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

enum class Activation { kSigmoid, kTanh, kRelu, kPrelu, kSoftmaxRows, kIdentity };

enum class LeafGrads {
  kWrite,       // store dLoss/dLeaf into every requires_grad leaf on the tape
  kKeepOnTape,  // leave leaves untouched; read results with Tape::gradient
};

class Tape {
 public:
  // grad_in[i] is null when input i does not require a gradient.
  using BackwardRule =
      std::function<void(const Matrix& grad_out, std::span<Matrix* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Tensor record(Matrix value, std::vector<Tensor> inputs, BackwardRule rule);

  void backward(const Tensor& loss, LeafGrads mode = LeafGrads::kWrite);

  // dLoss/dT from the last backward; zeros when T was not reached.
  Matrix gradient(const Tensor& t) const;

  std::size_t size() const { return records_.size(); }
  void clear();

 private:
  struct Record {
    std::vector<Tensor> inputs;
    std::vector<std::size_t> input_slots;
    std::size_t output_slot = 0;
    bool needs_grad = false;
    BackwardRule rule;
  };

  std::size_t slot_for(const Tensor& t);

  std::vector<Record> records_;
  std::vector<Tensor> slots_;
  std::vector<bool> is_output_;
  std::unordered_map<const detail::Node*, std::size_t> slot_index_;
  std::vector<Matrix> grads_;
};

// Differentiable ops. All raise ShapeError on nonconformable inputs.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
// x[m x n] + 1 b^T with b[1 x n].
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor transpose(Tape& tape, const Tensor& x);
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);
Tensor sum(Tape& tape, const Tensor& x);

// Parameter-free activations; kPrelu is rejected here, use prelu().
Tensor activate(Tape& tape, const Tensor& x, Activation kind);
// alpha is a trainable 1x1 slope shared by every element.
Tensor prelu(Tape& tape, const Tensor& x, const Tensor& alpha);

inline constexpr double kProbabilityClip = 1e-12;

// Binary cross-entropy of a 1x1 probability against a 0/1 label, with the
// probability clipped to [1e-12, 1 - 1e-12]. The clip has zero derivative.
Tensor binary_cross_entropy(Tape& tape, const Tensor& probability, double label);

// Max over entries of |analytic - central difference| / max(1, |analytic|)
// for d f / d theta. f must build its graph on the tape it receives.
double grad_check(const std::function<Tensor(Tape&)>& f, Tensor theta, double eps = 1e-5);

}  // namespace sstgcn::num
