#pragma once

#include <cstddef>
#include <vector>

namespace amr {

/// Low-level numeric kernels. The parallel versions are written as row/block
/// maps with a fixed reduction order, so their results are bit-identical to
/// the serial twins for any thread count. The twins stay around for the
/// consistency tests and the benchmark.

/// Dot product with fixed 1024-element block pairing.
double dot(const double* a, const double* b, std::size_t n);
double dot_serial(const double* a, const double* b, std::size_t n);

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a.data(), b.data(), a.size());
}

/// y = A x for CSR (offsets, cols, vals).
void spmv(std::vector<double>& y, const std::vector<std::size_t>& offsets,
          const std::vector<unsigned>& cols, const std::vector<double>& vals,
          const std::vector<double>& x);
void spmv_serial(std::vector<double>& y, const std::vector<std::size_t>& offsets,
                 const std::vector<unsigned>& cols, const std::vector<double>& vals,
                 const std::vector<double>& x);

}  // namespace amr
