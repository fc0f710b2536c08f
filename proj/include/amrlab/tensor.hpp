#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace amr {

class gradient_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Row count may be zero (empty graphs).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

/// Reverse-mode tape over Tensor-valued nodes. Parameters are registered
/// with an external gradient accumulator; backward() walks the recording in
/// reverse and adds into those accumulators. Aggregations sum in sorted
/// order, so forward values are invariant under row permutations.
class Tape {
 public:
  /// Constant input (no gradient tracked).
  int constant(Tensor value);

  /// Parameter leaf; `grad` (same shape) accumulates the gradient, may be
  /// null to observe a parameter without accumulating.
  int param(const Tensor* value, Tensor* grad);

  /// y = x W + b (b is [1, out], broadcast; pass -1 for no bias).
  int linear(int x, int w, int b);

  int tanh(int x);
  int softplus(int x);  // log(1 + e^x), numerically stable
  int exp(int x);
  int square(int x);

  int add(int a, int b);       // same shape
  int sub(int a, int b);       // same shape
  int mul(int a, int b);       // elementwise, same shape
  int minimum(int a, int b);   // ties route gradient to a
  int maximum(int a, int b);   // ties route gradient to a
  int scale(int x, double s);
  int clamp(int x, double lo, double hi);

  /// Concatenate along columns (equal row counts).
  int concat(const std::vector<int>& xs);

  /// y_i = x[index[i]]; backward scatter-adds. Also used to broadcast a
  /// single row with an all-zero index.
  int gather_rows(int x, std::vector<int> index, int out_rows);

  /// y_s = mean of rows i with segment[i] == s; empty segments give zeros.
  /// Summands are sorted per column before adding.
  int segment_mean(int x, std::vector<int> segment, int n_segments);

  /// Per-row layer normalization with learnable gain/shift ([1, c] each).
  int layer_norm(int x, int gamma, int beta, double eps = 1e-5);

  int mean_all(int x);  // [1,1]
  int sum_all(int x);   // [1,1]

  /// log(sum(exp(x))) over all entries of a column vector, max-shifted.
  int logsumexp(int x);

  const Tensor& value(int id) const { return nodes_[id].pv ? *nodes_[id].pv : nodes_[id].val; }

  /// Backpropagates from a scalar node, accumulating into parameter grads.
  void backward(int loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kConst, kParam, kLinear, kTanh, kSoftplus, kExp, kSquare, kAdd, kSub, kMul,
    kMin, kMax, kScale, kClamp, kConcat, kGather, kSegMean, kLayerNorm,
    kMeanAll, kSumAll, kLogSumExp,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> ins;      // concat only
    std::vector<int> index;    // gather / segment ids
    double x0 = 0.0, x1 = 0.0;
    Tensor val;
    const Tensor* pv = nullptr;  // set for params
    Tensor* pgrad = nullptr;
    Tensor grad;
    bool needs_grad = false;
  };

  int push(Node n);
  const Tensor& val_of(int id) const { return value(id); }
  Tensor& grad_of(int id);
  void accumulate(int id, const Tensor& g);

  std::vector<Node> nodes_;
};

}  // namespace amr
