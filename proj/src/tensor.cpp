#include "amrlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace amr {

namespace {

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int Tape::push(Node n) {
  if (n.op != Op::kConst && n.op != Op::kParam) {
    for (int in : {n.a, n.b, n.c})
      if (in >= 0 && nodes_[in].needs_grad) n.needs_grad = true;
    for (int in : n.ins)
      if (nodes_[in].needs_grad) n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.val = std::move(value);
  return push(std::move(n));
}

int Tape::param(const Tensor* value, Tensor* grad) {
  Node n;
  n.op = Op::kParam;
  n.pv = value;
  n.pgrad = grad;
  n.needs_grad = grad != nullptr;
  return push(std::move(n));
}

namespace {

// Y[r] = bias + X[r] W, one row at a time. Each output row depends only on
// its own input row with a fixed summation order, so row permutations move
// results bit-exactly.
void gemm_bias(const double* __restrict X, int rows, int K, const double* __restrict W, int N,
               const double* __restrict bias, double* __restrict Y) {
  for (int r = 0; r < rows; ++r) {
    double* __restrict y = Y + static_cast<std::size_t>(r) * N;
    if (bias)
      for (int o = 0; o < N; ++o) y[o] = bias[o];
    else
      for (int o = 0; o < N; ++o) y[o] = 0.0;
    const double* __restrict xr = X + static_cast<std::size_t>(r) * K;
    for (int k = 0; k < K; ++k) {
      const double xv = xr[k];
      const double* __restrict wk = W + static_cast<std::size_t>(k) * N;
      for (int o = 0; o < N; ++o) y[o] += xv * wk[o];
    }
  }
}

// GX[r] += GY[r] W^T
void gemm_grad_x(const double* __restrict GY, int rows, int N, const double* __restrict W, int K,
                 double* __restrict GX) {
  for (int r = 0; r < rows; ++r) {
    const double* __restrict gyr = GY + static_cast<std::size_t>(r) * N;
    double* __restrict gxr = GX + static_cast<std::size_t>(r) * K;
    for (int k = 0; k < K; ++k) {
      const double* __restrict wk = W + static_cast<std::size_t>(k) * N;
      double acc = 0.0;
      for (int o = 0; o < N; ++o) acc += gyr[o] * wk[o];
      gxr[k] += acc;
    }
  }
}

// GW += X^T GY
void gemm_grad_w(const double* __restrict X, int rows, int K, const double* __restrict GY, int N,
                 double* __restrict GW) {
  for (int r = 0; r < rows; ++r) {
    const double* __restrict xr = X + static_cast<std::size_t>(r) * K;
    const double* __restrict gyr = GY + static_cast<std::size_t>(r) * N;
    for (int k = 0; k < K; ++k) {
      const double xv = xr[k];
      double* __restrict gwk = GW + static_cast<std::size_t>(k) * N;
      for (int o = 0; o < N; ++o) gwk[o] += xv * gyr[o];
    }
  }
}

}  // namespace

int Tape::linear(int x, int w, int b) {
  const Tensor& X = val_of(x);
  const Tensor& W = val_of(w);
  if (X.cols != W.rows) throw gradient_error("linear: inner dimension mismatch");
  Node n;
  n.op = Op::kLinear;
  n.a = x;
  n.b = w;
  n.c = b;
  n.val = Tensor(X.rows, W.cols);
  gemm_bias(X.v.data(), X.rows, X.cols, W.v.data(), W.cols,
            b >= 0 ? val_of(b).v.data() : nullptr, n.val.v.data());
  return push(std::move(n));
}

int Tape::tanh(int x) {
  Node n;
  n.op = Op::kTanh;
  n.a = x;
  n.val = val_of(x);
  for (double& v : n.val.v) v = std::tanh(v);
  return push(std::move(n));
}

int Tape::softplus(int x) {
  Node n;
  n.op = Op::kSoftplus;
  n.a = x;
  n.val = val_of(x);
  for (double& v : n.val.v) v = stable_softplus(v);
  return push(std::move(n));
}

int Tape::exp(int x) {
  Node n;
  n.op = Op::kExp;
  n.a = x;
  n.val = val_of(x);
  for (double& v : n.val.v) v = std::exp(v);
  return push(std::move(n));
}

int Tape::square(int x) {
  Node n;
  n.op = Op::kSquare;
  n.a = x;
  n.val = val_of(x);
  for (double& v : n.val.v) v *= v;
  return push(std::move(n));
}

namespace {
void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw gradient_error(std::string(what) + ": shape mismatch");
}
}  // namespace

int Tape::add(int a, int b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  check_same(val_of(a), val_of(b), "add");
  n.val = val_of(a);
  const Tensor& B = val_of(b);
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] += B.v[i];
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  check_same(val_of(a), val_of(b), "sub");
  n.val = val_of(a);
  const Tensor& B = val_of(b);
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] -= B.v[i];
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  check_same(val_of(a), val_of(b), "mul");
  n.val = val_of(a);
  const Tensor& B = val_of(b);
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] *= B.v[i];
  return push(std::move(n));
}

int Tape::minimum(int a, int b) {
  Node n;
  n.op = Op::kMin;
  n.a = a;
  n.b = b;
  check_same(val_of(a), val_of(b), "minimum");
  n.val = val_of(a);
  const Tensor& B = val_of(b);
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] = std::min(n.val.v[i], B.v[i]);
  return push(std::move(n));
}

int Tape::maximum(int a, int b) {
  Node n;
  n.op = Op::kMax;
  n.a = a;
  n.b = b;
  check_same(val_of(a), val_of(b), "maximum");
  n.val = val_of(a);
  const Tensor& B = val_of(b);
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] = std::max(n.val.v[i], B.v[i]);
  return push(std::move(n));
}

int Tape::scale(int x, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = x;
  n.x0 = s;
  n.val = val_of(x);
  for (double& v : n.val.v) v *= s;
  return push(std::move(n));
}

int Tape::clamp(int x, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.a = x;
  n.x0 = lo;
  n.x1 = hi;
  n.val = val_of(x);
  for (double& v : n.val.v) v = std::clamp(v, lo, hi);
  return push(std::move(n));
}

int Tape::concat(const std::vector<int>& xs) {
  if (xs.empty()) throw gradient_error("concat: no inputs");
  Node n;
  n.op = Op::kConcat;
  n.ins = xs;
  int cols = 0;
  const int rows = val_of(xs[0]).rows;
  for (int id : xs) {
    if (val_of(id).rows != rows) throw gradient_error("concat: row mismatch");
    cols += val_of(id).cols;
  }
  n.val = Tensor(rows, cols);
  for (int r = 0; r < rows; ++r) {
    double* out = n.val.row(r);
    for (int id : xs) {
      const Tensor& X = val_of(id);
      const double* src = X.row(r);
      for (int c = 0; c < X.cols; ++c) *out++ = src[c];
    }
  }
  return push(std::move(n));
}

int Tape::gather_rows(int x, std::vector<int> index, int out_rows) {
  const Tensor& X = val_of(x);
  if (static_cast<int>(index.size()) != out_rows)
    throw gradient_error("gather_rows: index size mismatch");
  Node n;
  n.op = Op::kGather;
  n.a = x;
  n.index = std::move(index);
  n.val = Tensor(out_rows, X.cols);
  for (int r = 0; r < out_rows; ++r) {
    const double* src = X.row(n.index[r]);
    double* dst = n.val.row(r);
    for (int c = 0; c < X.cols; ++c) dst[c] = src[c];
  }
  return push(std::move(n));
}

int Tape::segment_mean(int x, std::vector<int> segment, int n_segments) {
  const Tensor& X = val_of(x);
  if (static_cast<int>(segment.size()) != X.rows)
    throw gradient_error("segment_mean: segment size mismatch");
  Node n;
  n.op = Op::kSegMean;
  n.a = x;
  n.index = std::move(segment);
  n.val = Tensor(n_segments, X.cols);

  std::vector<std::vector<int>> members(n_segments);
  for (int r = 0; r < X.rows; ++r) members[n.index[r]].push_back(r);
  // Members are summed in row-content order (bytewise), which is invariant
  // under row permutations, so aggregated values are bit-identical however
  // the rows arrive. Identical rows contribute identical values in any
  // order.
  auto row_less = [&X](int a, int b) {
    const double* ra = X.row(a);
    const double* rb = X.row(b);
    const int cmp = std::memcmp(ra, rb, static_cast<std::size_t>(X.cols) * sizeof(double));
    return cmp < 0;
  };
  for (int s = 0; s < n_segments; ++s) {
    auto& group = members[s];
    if (group.empty()) continue;  // empty aggregation stays zero
    std::sort(group.begin(), group.end(), row_less);
    double* out = n.val.row(s);
    const double inv = 1.0 / static_cast<double>(group.size());
    for (int r : group) {
      const double* src = X.row(r);
      for (int c = 0; c < X.cols; ++c) out[c] += src[c];
    }
    for (int c = 0; c < X.cols; ++c) out[c] *= inv;
  }
  return push(std::move(n));
}

int Tape::layer_norm(int x, int gamma, int beta, double eps) {
  const Tensor& X = val_of(x);
  const Tensor& G = val_of(gamma);
  if (G.cols != X.cols) throw gradient_error("layer_norm: gain width mismatch");
  Node n;
  n.op = Op::kLayerNorm;
  n.a = x;
  n.b = gamma;
  n.c = beta;
  n.x0 = eps;
  n.val = Tensor(X.rows, X.cols);
  const double* g = G.row(0);
  const double* be = val_of(beta).row(0);
  for (int r = 0; r < X.rows; ++r) {
    const double* xr = X.row(r);
    double mean = 0.0;
    for (int c = 0; c < X.cols; ++c) mean += xr[c];
    mean /= X.cols;
    double var = 0.0;
    for (int c = 0; c < X.cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= X.cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    double* y = n.val.row(r);
    for (int c = 0; c < X.cols; ++c) y[c] = g[c] * ((xr[c] - mean) * inv) + be[c];
  }
  return push(std::move(n));
}

int Tape::mean_all(int x) {
  Node n;
  n.op = Op::kMeanAll;
  n.a = x;
  n.val = Tensor(1, 1);
  const Tensor& X = val_of(x);
  double acc = 0.0;
  for (double v : X.v) acc += v;
  n.val.v[0] = X.size() ? acc / static_cast<double>(X.size()) : 0.0;
  return push(std::move(n));
}

int Tape::sum_all(int x) {
  Node n;
  n.op = Op::kSumAll;
  n.a = x;
  n.val = Tensor(1, 1);
  double acc = 0.0;
  for (double v : val_of(x).v) acc += v;
  n.val.v[0] = acc;
  return push(std::move(n));
}

int Tape::logsumexp(int x) {
  const Tensor& X = val_of(x);
  if (X.cols != 1 || X.rows == 0) throw gradient_error("logsumexp: need a non-empty column");
  Node n;
  n.op = Op::kLogSumExp;
  n.a = x;
  n.val = Tensor(1, 1);
  const double m = *std::max_element(X.v.begin(), X.v.end());
  std::vector<double> terms(X.v.size());
  for (std::size_t i = 0; i < X.v.size(); ++i) terms[i] = std::exp(X.v[i] - m);
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  n.val.v[0] = m + std::log(acc);
  return push(std::move(n));
}

Tensor& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.rows == 0 && n.grad.cols == 0) {
    const Tensor& v = value(id);
    n.grad = Tensor(v.rows, v.cols);
  }
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  if (id < 0 || !nodes_[id].needs_grad) return;
  Tensor& dst = grad_of(id);
  for (std::size_t i = 0; i < g.size(); ++i) dst.v[i] += g.v[i];
}

void Tape::backward(int loss) {
  const Tensor& L = value(loss);
  if (L.rows != 1 || L.cols != 1) throw gradient_error("backward: loss must be a scalar");
  if (!nodes_[loss].needs_grad)
    throw gradient_error("backward: loss does not depend on any parameter");
  grad_of(loss).v[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Tensor& gy = n.grad;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        if (n.pgrad)
          for (std::size_t i = 0; i < gy.size(); ++i) n.pgrad->v[i] += gy.v[i];
        break;
      case Op::kLinear: {
        const Tensor& X = val_of(n.a);
        const Tensor& W = val_of(n.b);
        if (nodes_[n.a].needs_grad)
          gemm_grad_x(gy.v.data(), X.rows, W.cols, W.v.data(), X.cols,
                      grad_of(n.a).v.data());
        if (nodes_[n.b].needs_grad)
          gemm_grad_w(X.v.data(), X.rows, X.cols, gy.v.data(), W.cols,
                      grad_of(n.b).v.data());
        if (n.c >= 0 && nodes_[n.c].needs_grad) {
          Tensor& gb = grad_of(n.c);
          for (int r = 0; r < gy.rows; ++r) {
            const double* gyr = gy.row(r);
            for (int o = 0; o < gy.cols; ++o) gb.v[o] += gyr[o];
          }
        }
        break;
      }
      case Op::kTanh: {
        Tensor g = gy;
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= 1.0 - n.val.v[i] * n.val.v[i];
        accumulate(n.a, g);
        break;
      }
      case Op::kSoftplus: {
        const Tensor& X = val_of(n.a);
        Tensor g = gy;
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= sigmoid(X.v[i]);
        accumulate(n.a, g);
        break;
      }
      case Op::kExp: {
        Tensor g = gy;
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= n.val.v[i];
        accumulate(n.a, g);
        break;
      }
      case Op::kSquare: {
        const Tensor& X = val_of(n.a);
        Tensor g = gy;
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= 2.0 * X.v[i];
        accumulate(n.a, g);
        break;
      }
      case Op::kAdd:
        accumulate(n.a, gy);
        accumulate(n.b, gy);
        break;
      case Op::kSub: {
        accumulate(n.a, gy);
        if (nodes_[n.b].needs_grad) {
          Tensor g = gy;
          for (double& v : g.v) v = -v;
          accumulate(n.b, g);
        }
        break;
      }
      case Op::kMul: {
        if (nodes_[n.a].needs_grad) {
          Tensor g = gy;
          const Tensor& B = val_of(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= B.v[i];
          accumulate(n.a, g);
        }
        if (nodes_[n.b].needs_grad) {
          Tensor g = gy;
          const Tensor& A = val_of(n.a);
          for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= A.v[i];
          accumulate(n.b, g);
        }
        break;
      }
      case Op::kMin:
      case Op::kMax: {
        const Tensor& A = val_of(n.a);
        const Tensor& B = val_of(n.b);
        Tensor ga = gy, gb = gy;
        for (std::size_t i = 0; i < gy.size(); ++i) {
          const bool take_a = n.op == Op::kMin ? A.v[i] <= B.v[i] : A.v[i] >= B.v[i];
          (take_a ? gb : ga).v[i] = 0.0;
        }
        accumulate(n.a, ga);
        accumulate(n.b, gb);
        break;
      }
      case Op::kScale: {
        Tensor g = gy;
        for (double& v : g.v) v *= n.x0;
        accumulate(n.a, g);
        break;
      }
      case Op::kClamp: {
        const Tensor& X = val_of(n.a);
        Tensor g = gy;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (X.v[i] <= n.x0 || X.v[i] >= n.x1) g.v[i] = 0.0;
        accumulate(n.a, g);
        break;
      }
      case Op::kConcat: {
        int offset = 0;
        for (int id_in : n.ins) {
          const Tensor& X = val_of(id_in);
          if (nodes_[id_in].needs_grad) {
            Tensor g(X.rows, X.cols);
            for (int r = 0; r < X.rows; ++r)
              for (int c = 0; c < X.cols; ++c) g.at(r, c) = gy.at(r, offset + c);
            accumulate(id_in, g);
          }
          offset += X.cols;
        }
        break;
      }
      case Op::kGather: {
        if (nodes_[n.a].needs_grad) {
          const Tensor& X = val_of(n.a);
          Tensor g(X.rows, X.cols);
          for (int r = 0; r < gy.rows; ++r) {
            double* dst = g.row(n.index[r]);
            const double* src = gy.row(r);
            for (int c = 0; c < gy.cols; ++c) dst[c] += src[c];
          }
          accumulate(n.a, g);
        }
        break;
      }
      case Op::kSegMean: {
        if (nodes_[n.a].needs_grad) {
          const Tensor& X = val_of(n.a);
          std::vector<int> count(n.val.rows, 0);
          for (int r = 0; r < X.rows; ++r) ++count[n.index[r]];
          Tensor g(X.rows, X.cols);
          for (int r = 0; r < X.rows; ++r) {
            const int s = n.index[r];
            const double* src = gy.row(s);
            double* dst = g.row(r);
            const double inv = 1.0 / count[s];
            for (int c = 0; c < X.cols; ++c) dst[c] = src[c] * inv;
          }
          accumulate(n.a, g);
        }
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& X = val_of(n.a);
        const Tensor& G = val_of(n.b);
        const int C = X.cols;
        Tensor gx(X.rows, C), gg(1, C), gb(1, C);
        for (int r = 0; r < X.rows; ++r) {
          const double* xr = X.row(r);
          const double* gyr = gy.row(r);
          double mean = 0.0;
          for (int c = 0; c < C; ++c) mean += xr[c];
          mean /= C;
          double var = 0.0;
          for (int c = 0; c < C; ++c) var += (xr[c] - mean) * (xr[c] - mean);
          var /= C;
          const double inv = 1.0 / std::sqrt(var + n.x0);
          // dxhat = gy * gamma; dx via the usual two-reduction form.
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int c = 0; c < C; ++c) {
            const double xhat = (xr[c] - mean) * inv;
            const double dxhat = gyr[c] * G.v[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            gg.v[c] += gyr[c] * xhat;
            gb.v[c] += gyr[c];
          }
          double* gxr = gx.row(r);
          for (int c = 0; c < C; ++c) {
            const double xhat = (xr[c] - mean) * inv;
            const double dxhat = gyr[c] * G.v[c];
            gxr[c] = inv * (dxhat - sum_dxhat / C - xhat * sum_dxhat_xhat / C);
          }
        }
        accumulate(n.a, gx);
        accumulate(n.b, gg);
        accumulate(n.c, gb);
        break;
      }
      case Op::kMeanAll: {
        if (nodes_[n.a].needs_grad) {
          const Tensor& X = val_of(n.a);
          Tensor g(X.rows, X.cols);
          const double s = X.size() ? gy.v[0] / static_cast<double>(X.size()) : 0.0;
          for (double& v : g.v) v = s;
          accumulate(n.a, g);
        }
        break;
      }
      case Op::kSumAll: {
        if (nodes_[n.a].needs_grad) {
          const Tensor& X = val_of(n.a);
          Tensor g(X.rows, X.cols);
          for (double& v : g.v) v = gy.v[0];
          accumulate(n.a, g);
        }
        break;
      }
      case Op::kLogSumExp: {
        if (nodes_[n.a].needs_grad) {
          const Tensor& X = val_of(n.a);
          Tensor g(X.rows, 1);
          for (int r = 0; r < X.rows; ++r) g.v[r] = gy.v[0] * std::exp(X.v[r] - n.val.v[0]);
          accumulate(n.a, g);
        }
        break;
      }
    }
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace amr
