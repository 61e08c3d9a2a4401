#pragma once

// Dense row-major float64 tensors with a reverse-mode autodiff tape.
//
// A Tensor is a shared handle: copying it aliases the same storage, the way
// parameters are passed around a model. Use clone() for an independent copy.
//
// Operations record themselves on the thread's active Tape when at least one
// input requires a gradient. Without an active tape every op is a plain
// forward computation and its result is a constant.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "dyndta/error.hpp"

namespace dyndta {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 for leaves

  std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Glorot-style uniform draw in [-bound, bound].
  static Tensor uniform(Shape shape, double bound, std::mt19937_64& rng,
                        bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // True when this tensor was produced by an op recorded on a tape.
  bool is_recorded() const;

  // Independent copy of value (and requires_grad flag), with no gradient.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>);

  std::shared_ptr<detail::Node> node_;
};

using BackwardFn = std::function<void(std::span<const double> out_grad)>;

// Records operations for one forward/backward pass. Constructing a Tape makes
// it the active tape of the calling thread until it is destroyed. Tapes nest;
// the previous one is restored on destruction.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept;

  // Marks `output` as produced on this tape and stores its backward rule.
  void record(std::span<const Tensor> inputs, Tensor& output, BackwardFn fn);

  // Propagates d(loss)/d(node) to every requires_grad tensor reachable from
  // loss. Leaf gradients accumulate; the tape is cleared afterwards.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return entries_.size(); }
  std::uint64_t id() const noexcept { return id_; }

 private:
  struct Entry {
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::shared_ptr<detail::Node> output;
    BackwardFn fn;
  };

  std::vector<Entry> entries_;
  std::uint64_t id_;
  Tape* previous_;
};

// Runs backward on the calling thread's active tape.
void backward(const Tensor& loss);

// Builds a result tensor that will not require grad unless recorded.
Tensor make_result(Shape shape, std::vector<double> values);

// ---- operations ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
// a[m x n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);
Tensor softmax_last(const Tensor& x);
Tensor conv1d_dilated(const Tensor& seq, const Tensor& weights,
                      const Tensor& bias, std::size_t dilation);
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
Tensor global_max_pool(const Tensor& x);
Tensor outer_product3(const Tensor& a, const Tensor& b, const Tensor& c);
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor sum(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// Concatenates along the last axis. Inputs must agree on all leading extents.
Tensor concat(std::span<const Tensor> parts);

}  // namespace dyndta
