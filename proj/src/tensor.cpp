#include "dyndta/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dyndta {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::DetachedTensor: return "DetachedTensor";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::LexError: return "LexError";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::UnclosedBranch: return "UnclosedBranch";
    case ErrorCode::UnmatchedRingClosure: return "UnmatchedRingClosure";
    case ErrorCode::EmptyMolecule: return "EmptyMolecule";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::DuplicatePdbId: return "DuplicatePdbId";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::NoRecords: return "NoRecords";
    case ErrorCode::UnknownVariant: return "UnknownVariant";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, op + ": " + detail);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(ErrorCode::InvalidArgument, std::string(op) + ": undefined tensor");
}

#ifndef NDEBUG
void assert_finite(const std::vector<double>& v) {
  for (double x : v) assert(std::isfinite(x));
}
#else
void assert_finite(const std::vector<double>&) {}
#endif

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

// Records `out` when a tape is active and any input needs a gradient.
void maybe_record(std::initializer_list<Tensor> inputs, Tensor& out, BackwardFn fn) {
  Tape* tape = Tape::active();
  if (!tape) return;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return;
  std::vector<Tensor> in(inputs);
  tape->record(in, out, std::move(fn));
}

}  // namespace

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---- Tensor --------------------------------------------------------------

Tensor make_result(Shape shape, std::vector<double> values) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  assert(shape_numel(node->shape) == node->value.size());
  assert_finite(node->value);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  Tensor t = make_result(std::move(shape), std::vector<double>(n, value));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    shape_error("Tensor::from", shape_str(shape) + " needs " +
                                    std::to_string(shape_numel(shape)) + " values, got " +
                                    std::to_string(values.size()));
  }
  Tensor t = make_result(std::move(shape), std::move(values));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double bound, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return from(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw Error(ErrorCode::IndexOutOfRange, "axis " + std::to_string(axis));
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
  require_defined(*this, "data");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  require_defined(*this, "mutable_data");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) shape_error("at", "rank-2 tensor expected, got " + shape_str(shape()));
  if (row >= node_->shape[0] || col >= node_->shape[1]) {
    throw Error(ErrorCode::IndexOutOfRange, "at(" + std::to_string(row) + "," + std::to_string(col) + ")");
  }
  return node_->value[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  require_defined(*this, "set_requires_grad");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require_defined(*this, "mutable_grad");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::is_recorded() const { return node_ && node_->tape_id != 0; }

Tensor Tensor::clone() const {
  require_defined(*this, "clone");
  Tensor t = make_result(node_->shape, node_->value);
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

// ---- Tape ----------------------------------------------------------------

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)), previous_(g_active_tape) {
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::record(std::span<const Tensor> inputs, Tensor& output, BackwardFn fn) {
  Entry e;
  e.inputs.reserve(inputs.size());
  for (const auto& t : inputs) e.inputs.push_back(t.node());
  output.node()->requires_grad = true;
  output.node()->tape_id = id_;
  e.output = output.node();
  e.fn = std::move(fn);
  entries_.push_back(std::move(e));
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward on tensor of shape " + shape_str(loss.shape()));
  }
  const auto& node = loss.node();
  if (!node->requires_grad || (node->tape_id != 0 && node->tape_id != id_)) {
    throw Error(ErrorCode::DetachedTensor, "loss is not connected to the active tape");
  }
  node->grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->fn(it->output->grad);
  }
  entries_.clear();
  // Tensors recorded before this point are no longer attached to a live tape.
  id_ = g_next_tape_id.fetch_add(1);
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw Error(ErrorCode::DetachedTensor, "backward called with no active tape");
  tape->backward(loss);
}

// ---- operations ----------------------------------------------------------

namespace {

struct Grad {
  // Gradient sink of an input node, or empty when it needs no gradient.
  static std::span<double> of(const std::shared_ptr<detail::Node>& n) {
    return n->requires_grad ? n->grad_buffer() : std::span<double>{};
  }
};

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2) {
    shape_error("matmul", "rank-2 operands required, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Tensor r = make_result({m, n}, std::move(out));
  auto an = a.node(), bn = b.node();
  maybe_record({a, b}, r, [an, bn, m, k, n](std::span<const double> g) {
    if (auto ga = Grad::of(an); !ga.empty()) {
      // dA = G * B^T
      const auto& B = bn->value;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = g.data() + i * n;
          const double* brow = B.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
    }
    if (auto gb = Grad::of(bn); !gb.empty()) {
      // dB = A^T * G
      const auto& A = an->value;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          const double* grow = g.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
  });
  return r;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) shape_error("transpose", "rank-2 tensor expected, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  Tensor r = make_result({n, m}, std::move(out));
  auto an = a.node();
  maybe_record({a}, r, [an, m, n](std::span<const double> g) {
    auto ga = Grad::of(an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
  return r;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  if (a.shape() != b.shape()) shape_error("add", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  Tensor r = make_result(a.shape(), std::move(out));
  auto an = a.node(), bn = b.node();
  maybe_record({a, b}, r, [an, bn](std::span<const double> g) {
    for (const auto& node : {an, bn}) {
      auto gx = Grad::of(node);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    }
  });
  return r;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_defined(a, "add_bias");
  require_defined(bias, "add_bias");
  if (a.rank() != 2 || bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
    shape_error("add_bias", shape_str(a.shape()) + " + " + shape_str(bias.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto A = a.data();
  auto Bv = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i * n + j] + Bv[j];
  Tensor r = make_result(a.shape(), std::move(out));
  auto an = a.node(), bn = bias.node();
  maybe_record({a, bias}, r, [an, bn, m, n](std::span<const double> g) {
    if (auto ga = Grad::of(an); !ga.empty())
      for (std::size_t i = 0; i < m * n; ++i) ga[i] += g[i];
    if (auto gb = Grad::of(bn); !gb.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
  });
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape()) shape_error("mul", shape_str(a.shape()) + " * " + shape_str(b.shape()));
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  Tensor r = make_result(a.shape(), std::move(out));
  auto an = a.node(), bn = b.node();
  maybe_record({a, b}, r, [an, bn](std::span<const double> g) {
    if (auto ga = Grad::of(an); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bn->value[i];
    if (auto gb = Grad::of(bn); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * an->value[i];
  });
  return r;
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * factor;
  Tensor r = make_result(a.shape(), std::move(out));
  auto an = a.node();
  maybe_record({a}, r, [an, factor](std::span<const double> g) {
    auto ga = Grad::of(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
  });
  return r;
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
  Tensor r = make_result(x.shape(), std::move(out));
  auto xn = x.node();
  // gradient at exactly zero is zero
  maybe_record({x}, r, [xn](std::span<const double> g) {
    auto gx = Grad::of(xn);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xn->value[i] > 0.0) gx[i] += g[i];
  });
  return r;
}

Tensor softmax_last(const Tensor& x) {
  require_defined(x, "softmax_last");
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw Error(ErrorCode::EmptyInput, "softmax_last needs a non-empty trailing axis");
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = X.data() + r * n;
    double* o = out.data() + r * n;
    double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  Tensor res = make_result(x.shape(), std::move(out));
  auto xn = x.node();
  std::weak_ptr<detail::Node> yw = res.node();
  maybe_record({x}, res, [xn, yw, rows, n](std::span<const double> g) {
    auto yn = yw.lock();
    auto gx = Grad::of(xn);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = yn->value.data() + r * n;
      const double* gr = g.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gr[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[j] * (gr[j] - dot);
    }
  });
  return res;
}

Tensor conv1d_dilated(const Tensor& seq, const Tensor& weights, const Tensor& bias,
                      std::size_t dilation) {
  require_defined(seq, "conv1d_dilated");
  require_defined(weights, "conv1d_dilated");
  require_defined(bias, "conv1d_dilated");
  if (dilation == 0) throw Error(ErrorCode::InvalidArgument, "conv1d_dilated: dilation must be positive");
  if (seq.rank() != 2 || weights.rank() != 3 || bias.rank() != 1) {
    shape_error("conv1d_dilated", "expected seq[C_in x N], weights[C_out x C_in x K], bias[C_out]; got " +
                                      shape_str(seq.shape()) + ", " + shape_str(weights.shape()) + ", " +
                                      shape_str(bias.shape()));
  }
  const std::size_t c_in = seq.dim(0), n = seq.dim(1);
  const std::size_t c_out = weights.dim(0), k = weights.dim(2);
  if (weights.dim(1) != c_in || bias.dim(0) != c_out || k == 0) {
    shape_error("conv1d_dilated", "channel mismatch: seq " + shape_str(seq.shape()) + ", weights " +
                                      shape_str(weights.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t span_len = (k - 1) * dilation + 1;
  if (n < span_len) {
    throw Error(ErrorCode::SequenceTooShort, "conv1d_dilated: length " + std::to_string(n) +
                                                 " shorter than receptive field " + std::to_string(span_len));
  }
  const std::size_t n_out = n - (k - 1) * dilation;
  auto S = seq.data();
  auto W = weights.data();
  auto Bv = bias.data();
  std::vector<double> out(c_out * n_out);
  for (std::size_t co = 0; co < c_out; ++co) {
    double* o = out.data() + co * n_out;
    std::fill(o, o + n_out, Bv[co]);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      for (std::size_t j = 0; j < k; ++j) {
        const double w = W[(co * c_in + ci) * k + j];
        const double* s = S.data() + ci * n + j * dilation;
        for (std::size_t i = 0; i < n_out; ++i) o[i] += w * s[i];
      }
    }
  }
  Tensor r = make_result({c_out, n_out}, std::move(out));
  auto sn = seq.node(), wn = weights.node(), bn = bias.node();
  maybe_record({seq, weights, bias}, r,
               [sn, wn, bn, c_in, c_out, k, n, n_out, dilation](std::span<const double> g) {
                 auto gs = Grad::of(sn);
                 auto gw = Grad::of(wn);
                 auto gb = Grad::of(bn);
                 for (std::size_t co = 0; co < c_out; ++co) {
                   const double* go = g.data() + co * n_out;
                   if (!gb.empty()) {
                     double total = 0.0;
                     for (std::size_t i = 0; i < n_out; ++i) total += go[i];
                     gb[co] += total;
                   }
                   for (std::size_t ci = 0; ci < c_in; ++ci) {
                     for (std::size_t j = 0; j < k; ++j) {
                       const std::size_t widx = (co * c_in + ci) * k + j;
                       const std::size_t off = ci * n + j * dilation;
                       if (!gw.empty()) {
                         const double* s = sn->value.data() + off;
                         double acc = 0.0;
                         for (std::size_t i = 0; i < n_out; ++i) acc += go[i] * s[i];
                         gw[widx] += acc;
                       }
                       if (!gs.empty()) {
                         const double w = wn->value[widx];
                         double* gsrow = gs.data() + off;
                         for (std::size_t i = 0; i < n_out; ++i) gsrow[i] += w * go[i];
                       }
                     }
                   }
                 }
               });
  return r;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_defined(table, "embedding_lookup");
  if (table.rank() != 2) shape_error("embedding_lookup", "table must be rank-2, got " + shape_str(table.shape()));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  auto T = table.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw Error(ErrorCode::IndexOutOfRange, "embedding id " + std::to_string(ids[r]) +
                                                  " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(T.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  }
  Tensor res = make_result({ids.size(), d}, std::move(out));
  auto tn = table.node();
  std::vector<int> id_copy(ids.begin(), ids.end());
  maybe_record({table}, res, [tn, id_copy = std::move(id_copy), d](std::span<const double> g) {
    auto gt = Grad::of(tn);
    for (std::size_t r = 0; r < id_copy.size(); ++r) {
      double* row = gt.data() + static_cast<std::size_t>(id_copy[r]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += g[r * d + j];
    }
  });
  return res;
}

Tensor global_max_pool(const Tensor& x) {
  require_defined(x, "global_max_pool");
  if (x.rank() != 2) shape_error("global_max_pool", "rank-2 tensor expected, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (rows == 0) throw Error(ErrorCode::EmptyInput, "global_max_pool over zero rows");
  auto X = x.data();
  std::vector<double> out(X.begin(), X.begin() + static_cast<std::ptrdiff_t>(d));
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      if (X[r * d + j] > out[j]) {  // strict: ties keep the lowest row
        out[j] = X[r * d + j];
        argmax[j] = r;
      }
  Tensor res = make_result({d}, std::move(out));
  auto xn = x.node();
  maybe_record({x}, res, [xn, argmax = std::move(argmax), d](std::span<const double> g) {
    auto gx = Grad::of(xn);
    for (std::size_t j = 0; j < d; ++j) gx[argmax[j] * d + j] += g[j];
  });
  return res;
}

Tensor outer_product3(const Tensor& a, const Tensor& b, const Tensor& c) {
  require_defined(a, "outer_product3");
  require_defined(b, "outer_product3");
  require_defined(c, "outer_product3");
  if (a.rank() != 1 || b.rank() != 1 || c.rank() != 1) {
    shape_error("outer_product3", "rank-1 inputs required, got " + shape_str(a.shape()) + ", " +
                                      shape_str(b.shape()) + ", " + shape_str(c.shape()));
  }
  const std::size_t p = a.numel(), q = b.numel(), rr = c.numel();
  auto A = a.data();
  auto B = b.data();
  auto C = c.data();
  std::vector<double> out(p * q * rr);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      const double ab = A[i] * B[j];
      double* o = out.data() + (i * q + j) * rr;
      for (std::size_t l = 0; l < rr; ++l) o[l] = ab * C[l];
    }
  Tensor res = make_result({p * q * rr}, std::move(out));
  auto an = a.node(), bn = b.node(), cn = c.node();
  maybe_record({a, b, c}, res, [an, bn, cn, p, q, rr](std::span<const double> g) {
    auto ga = Grad::of(an);
    auto gb = Grad::of(bn);
    auto gc = Grad::of(cn);
    const auto& A = an->value;
    const auto& B = bn->value;
    const auto& C = cn->value;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j) {
        const double* go = g.data() + (i * q + j) * rr;
        double gc_dot = 0.0;  // sum_l g[i,j,l] * c[l]
        for (std::size_t l = 0; l < rr; ++l) gc_dot += go[l] * C[l];
        if (!ga.empty()) ga[i] += gc_dot * B[j];
        if (!gb.empty()) gb[j] += gc_dot * A[i];
        if (!gc.empty()) {
          const double ab = A[i] * B[j];
          for (std::size_t l = 0; l < rr; ++l) gc[l] += go[l] * ab;
        }
      }
  });
  return res;
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  require_defined(x, "dropout");
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : 0.0;
  auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * mask[i];
  Tensor r = make_result(x.shape(), std::move(out));
  auto xn = x.node();
  maybe_record({x}, r, [xn, mask = std::move(mask)](std::span<const double> g) {
    auto gx = Grad::of(xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
  });
  return r;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_defined(pred, "mse_loss");
  require_defined(target, "mse_loss");
  if (pred.numel() != target.numel()) {
    throw Error(ErrorCode::LengthMismatch, "mse_loss: " + std::to_string(pred.numel()) + " predictions vs " +
                                               std::to_string(target.numel()) + " targets");
  }
  if (pred.numel() == 0) throw Error(ErrorCode::EmptyInput, "mse_loss on empty input");
  const std::size_t m = pred.numel();
  auto P = pred.data();
  auto T = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = T[i] - P[i];
    total += r * r;
  }
  Tensor res = make_result({}, {total / static_cast<double>(m)});
  auto pn = pred.node(), tn = target.node();
  maybe_record({pred, target}, res, [pn, tn, m](std::span<const double> g) {
    const double scale = 2.0 * g[0] / static_cast<double>(m);
    if (auto gp = Grad::of(pn); !gp.empty())
      for (std::size_t i = 0; i < m; ++i) gp[i] += scale * (pn->value[i] - tn->value[i]);
    if (auto gt = Grad::of(tn); !gt.empty())
      for (std::size_t i = 0; i < m; ++i) gt[i] += scale * (tn->value[i] - pn->value[i]);
  });
  return res;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  auto X = x.data();
  Tensor r = make_result({}, {std::accumulate(X.begin(), X.end(), 0.0)});
  auto xn = x.node();
  maybe_record({x}, r, [xn](std::span<const double> g) {
    auto gx = Grad::of(xn);
    for (auto& v : gx) v += g[0];
  });
  return r;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    shape_error("reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  auto X = x.data();
  Tensor r = make_result(std::move(shape), std::vector<double>(X.begin(), X.end()));
  auto xn = x.node();
  maybe_record({x}, r, [xn](std::span<const double> g) {
    auto gx = Grad::of(xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
  return r;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::EmptyInput, "concat of zero tensors");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  if (first.empty()) shape_error("concat", "scalars cannot be concatenated; reshape to [1] first");
  Shape lead(first.begin(), first.end() - 1);
  const std::size_t rows = shape_numel(lead);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      shape_error("concat", shape_str(first) + " vs " + shape_str(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto P = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(P.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor res = make_result(std::move(out_shape), std::move(out));

  Tape* tape = Tape::active();
  bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tape && any) {
    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record(parts, res, [nodes, widths, rows, total](std::span<const double> g) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (auto gx = Grad::of(nodes[k]); !gx.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < widths[k]; ++j) gx[r * widths[k] + j] += g[r * total + off + j];
        off += widths[k];
      }
    });
  }
  return res;
}

}  // namespace dyndta
