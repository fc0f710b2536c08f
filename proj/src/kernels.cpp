#include "amrlab/kernels.hpp"

#include <algorithm>

namespace amr {

namespace {
constexpr std::size_t kBlock = 1024;

double block_sum(const double* a, const double* b, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
  return s;
}
}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  const std::size_t nblocks = (n + kBlock - 1) / kBlock;
  if (nblocks <= 1) return block_sum(a, b, 0, n);
  std::vector<double> partial(nblocks);
#pragma omp parallel for schedule(static)
  for (long long k = 0; k < static_cast<long long>(nblocks); ++k) {
    const std::size_t lo = k * kBlock;
    partial[k] = block_sum(a, b, lo, std::min(n, lo + kBlock));
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

double dot_serial(const double* a, const double* b, std::size_t n) {
  const std::size_t nblocks = (n + kBlock - 1) / kBlock;
  if (nblocks <= 1) return block_sum(a, b, 0, n);
  std::vector<double> partial(nblocks);
  for (std::size_t k = 0; k < nblocks; ++k) {
    const std::size_t lo = k * kBlock;
    partial[k] = block_sum(a, b, lo, std::min(n, lo + kBlock));
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

void spmv(std::vector<double>& y, const std::vector<std::size_t>& offsets,
          const std::vector<unsigned>& cols, const std::vector<double>& vals,
          const std::vector<double>& x) {
  const long long n = static_cast<long long>(offsets.size()) - 1;
#pragma omp parallel for schedule(static)
  for (long long r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) s += vals[k] * x[cols[k]];
    y[r] = s;
  }
}

void spmv_serial(std::vector<double>& y, const std::vector<std::size_t>& offsets,
                 const std::vector<unsigned>& cols, const std::vector<double>& vals,
                 const std::vector<double>& x) {
  const std::size_t n = offsets.size() - 1;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) s += vals[k] * x[cols[k]];
    y[r] = s;
  }
}

}  // namespace amr
