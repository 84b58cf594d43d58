#include "sstgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sstgcn/errors.hpp"

namespace sstgcn::num {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "matrix data length " << data_.size() << " does not match shape [" << rows << "x"
        << cols << "]";
    throw ShapeError(msg.str());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged row list");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  std::ostringstream s;
  s << "[" << rows_ << "x" << cols_ << "]";
  return s.str();
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other)) {
    throw ShapeError("cannot add " + other.shape_string() + " into " + shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner dimensions disagree: " + a.shape_string() + " x " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = &out(i, 0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* b_row = b.values().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transposed(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->grad = Matrix(value.rows(), value.cols());
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

const Matrix& Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (!node_->requires_grad) return;
  node_->grad = Matrix(rows(), cols());
  node_->has_grad = false;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ShapeError("item() needs a 1x1 tensor, got " + value().shape_string());
  }
  return value()[0];
}

// ---------------------------------------------------------------------------
// Tape

std::size_t Tape::slot_for(const Tensor& t) {
  auto [it, inserted] = slot_index_.try_emplace(t.id(), slots_.size());
  if (inserted) {
    slots_.push_back(t);
    is_output_.push_back(false);
  }
  return it->second;
}

Tensor Tape::record(Matrix value, std::vector<Tensor> inputs, BackwardRule rule) {
  Record rec;
  rec.input_slots.reserve(inputs.size());
  for (const auto& in : inputs) {
    rec.input_slots.push_back(slot_for(in));
    rec.needs_grad = rec.needs_grad || in.requires_grad();
  }
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = rec.needs_grad;
  Tensor out(std::move(node));
  rec.output_slot = slot_for(out);
  is_output_[rec.output_slot] = true;
  rec.inputs = std::move(inputs);
  rec.rule = std::move(rule);
  records_.push_back(std::move(rec));
  return out;
}

void Tape::backward(const Tensor& loss, LeafGrads mode) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward needs a scalar (1x1) loss");
  }
  auto found = slot_index_.find(loss.id());
  if (found == slot_index_.end() || !is_output_[found->second]) {
    throw ContractError("backward loss was not produced on this tape");
  }

  grads_.assign(slots_.size(), Matrix());
  grads_[found->second] = Matrix(1, 1, 1.0);

  std::vector<Matrix*> grad_in;
  for (auto rec = records_.rbegin(); rec != records_.rend(); ++rec) {
    if (!rec->needs_grad) continue;
    const Matrix& g_out = grads_[rec->output_slot];
    if (g_out.empty()) continue;
    grad_in.assign(rec->inputs.size(), nullptr);
    for (std::size_t i = 0; i < rec->inputs.size(); ++i) {
      if (!rec->inputs[i].requires_grad()) continue;
      Matrix& g = grads_[rec->input_slots[i]];
      if (g.empty()) g = Matrix(rec->inputs[i].rows(), rec->inputs[i].cols());
      grad_in[i] = &g;
    }
    rec->rule(g_out, grad_in);
  }

  if (mode == LeafGrads::kWrite) {
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      if (is_output_[s] || !slots_[s].requires_grad()) continue;
      auto& node = *slots_[s].node_;
      node.grad = grads_[s].empty() ? Matrix(node.value.rows(), node.value.cols()) : grads_[s];
      node.has_grad = true;
    }
  }
}

Matrix Tape::gradient(const Tensor& t) const {
  auto found = slot_index_.find(t.id());
  if (found == slot_index_.end() || found->second >= grads_.size() ||
      grads_[found->second].empty()) {
    return Matrix(t.rows(), t.cols());
  }
  return grads_[found->second];
}

void Tape::clear() {
  records_.clear();
  slots_.clear();
  is_output_.clear();
  slot_index_.clear();
  grads_.clear();
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shapes differ " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  Matrix out = multiply(a.value(), b.value());
  return tape.record(std::move(out), {a, b},
                     [a, b](const Matrix& g, std::span<Matrix* const> gin) {
                       if (gin[0]) *gin[0] += multiply(g, transposed(b.value()));
                       if (gin[1]) *gin[1] += multiply(transposed(a.value()), g);
                     });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Matrix out = a.value();
  out += b.value();
  return tape.record(std::move(out), {a, b}, [](const Matrix& g, std::span<Matrix* const> gin) {
    if (gin[0]) *gin[0] += g;
    if (gin[1]) *gin[1] += g;
  });
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_bias: bias " + bias.value().shape_string() + " does not fit " +
                     x.value().shape_string());
  }
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias.value()[j];
  return tape.record(std::move(out), {x, bias}, [](const Matrix& g, std::span<Matrix* const> gin) {
    if (gin[0]) *gin[0] += g;
    if (gin[1]) {
      Matrix& gb = *gin[1];
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape.record(std::move(out), {a, b},
                     [a, b](const Matrix& g, std::span<Matrix* const> gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (gin[0]) (*gin[0])[i] += g[i] * b.value()[i];
                         if (gin[1]) (*gin[1])[i] += g[i] * a.value()[i];
                       }
                     });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  Matrix out = x.value();
  for (auto& v : out.values()) v *= factor;
  return tape.record(std::move(out), {x}, [factor](const Matrix& g, std::span<Matrix* const> gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += factor * g[i];
  });
}

Tensor transpose(Tape& tape, const Tensor& x) {
  return tape.record(transposed(x.value()), {x},
                     [](const Matrix& g, std::span<Matrix* const> gin) {
                       *gin[0] += transposed(g);
                     });
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts differ " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
  const std::size_t p = a.cols();
  const std::size_t q = b.cols();
  Matrix out(a.rows(), p + q);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < p; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < q; ++j) out(i, p + j) = b.value()(i, j);
  }
  return tape.record(std::move(out), {a, b},
                     [p, q](const Matrix& g, std::span<Matrix* const> gin) {
                       for (std::size_t i = 0; i < g.rows(); ++i) {
                         if (gin[0])
                           for (std::size_t j = 0; j < p; ++j) (*gin[0])(i, j) += g(i, j);
                         if (gin[1])
                           for (std::size_t j = 0; j < q; ++j) (*gin[1])(i, j) += g(i, p + j);
                       }
                     });
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + x.value().shape_string());
  }
  Matrix out(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x.value()(i, begin + j);
  return tape.record(std::move(out), {x},
                     [begin, count](const Matrix& g, std::span<Matrix* const> gin) {
                       for (std::size_t i = 0; i < g.rows(); ++i)
                         for (std::size_t j = 0; j < count; ++j) (*gin[0])(i, begin + j) += g(i, j);
                     });
}

Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return tape.record(Matrix(1, 1, total), {x}, [](const Matrix& g, std::span<Matrix* const> gin) {
    for (auto& v : gin[0]->values()) v += g[0];
  });
}

Tensor activate(Tape& tape, const Tensor& x, Activation kind) {
  Matrix out = x.value();
  switch (kind) {
    case Activation::kIdentity:
      return tape.record(std::move(out), {x}, [](const Matrix& g, std::span<Matrix* const> gin) {
        *gin[0] += g;
      });
    case Activation::kSigmoid: {
      for (auto& v : out.values()) v = sigmoid(v);
      Matrix y = out;
      return tape.record(std::move(out), {x},
                         [y = std::move(y)](const Matrix& g, std::span<Matrix* const> gin) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*gin[0])[i] += g[i] * y[i] * (1.0 - y[i]);
                         });
    }
    case Activation::kTanh: {
      for (auto& v : out.values()) v = std::tanh(v);
      Matrix y = out;
      return tape.record(std::move(out), {x},
                         [y = std::move(y)](const Matrix& g, std::span<Matrix* const> gin) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*gin[0])[i] += g[i] * (1.0 - y[i] * y[i]);
                         });
    }
    case Activation::kRelu: {
      for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
      return tape.record(std::move(out), {x}, [x](const Matrix& g, std::span<Matrix* const> gin) {
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x.value()[i] > 0.0) (*gin[0])[i] += g[i];
      });
    }
    case Activation::kSoftmaxRows: {
      for (std::size_t r = 0; r < out.rows(); ++r) {
        double peak = out(r, 0);
        for (std::size_t c = 1; c < out.cols(); ++c) peak = std::max(peak, out(r, c));
        double total = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) {
          out(r, c) = std::exp(out(r, c) - peak);
          total += out(r, c);
        }
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= total;
      }
      Matrix y = out;
      return tape.record(std::move(out), {x},
                         [y = std::move(y)](const Matrix& g, std::span<Matrix* const> gin) {
                           for (std::size_t r = 0; r < g.rows(); ++r) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
                             for (std::size_t c = 0; c < g.cols(); ++c)
                               (*gin[0])(r, c) += y(r, c) * (g(r, c) - dot);
                           }
                         });
    }
    case Activation::kPrelu:
      throw ContractError("prelu needs a slope tensor; call prelu()");
  }
  throw ContractError("unknown activation");
}

Tensor prelu(Tape& tape, const Tensor& x, const Tensor& alpha) {
  if (alpha.rows() != 1 || alpha.cols() != 1) {
    throw ShapeError("prelu slope must be 1x1, got " + alpha.value().shape_string());
  }
  const double a = alpha.value()[0];
  Matrix out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : a * v;
  return tape.record(std::move(out), {x, alpha},
                     [x, a](const Matrix& g, std::span<Matrix* const> gin) {
                       double g_alpha = 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double xi = x.value()[i];
                         if (xi > 0.0) {
                           if (gin[0]) (*gin[0])[i] += g[i];
                         } else {
                           if (gin[0]) (*gin[0])[i] += a * g[i];
                           g_alpha += xi * g[i];
                         }
                       }
                       if (gin[1]) (*gin[1])[0] += g_alpha;
                     });
}

Tensor binary_cross_entropy(Tape& tape, const Tensor& probability, double label) {
  if (probability.rows() != 1 || probability.cols() != 1) {
    throw ShapeError("binary_cross_entropy needs a 1x1 probability, got " +
                     probability.value().shape_string());
  }
  const double raw = probability.value()[0];
  const double p = std::clamp(raw, kProbabilityClip, 1.0 - kProbabilityClip);
  const bool clipped = p != raw;
  const double loss = -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  return tape.record(Matrix(1, 1, loss), {probability},
                     [p, label, clipped](const Matrix& g, std::span<Matrix* const> gin) {
                       if (clipped) return;
                       (*gin[0])[0] += g[0] * (-label / p + (1.0 - label) / (1.0 - p));
                     });
}

double grad_check(const std::function<Tensor(Tape&)>& f, Tensor theta, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check step must be positive");

  Tape tape;
  Tensor out = f(tape);
  tape.backward(out, LeafGrads::kKeepOnTape);
  const Matrix analytic = tape.gradient(theta);

  auto evaluate = [&f] {
    Tape probe;
    const double v = f(probe).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
  };

  Matrix& values = theta.mutable_value();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = evaluate();
    values[i] = saved - eps;
    const double down = evaluate();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    if (!std::isfinite(analytic[i])) throw NumericError("grad_check: analytic gradient not finite");
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace sstgcn::num
