#include <chrono>
#include <cstdio>

#include "amrlab/error_metrics.hpp"
#include "amrlab/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace amr;

namespace {

using clock_type = std::chrono::steady_clock;

template <typename F>
double time_ms(F&& fn, int repeats) {
  const auto t0 = clock_type::now();
  for (int i = 0; i < repeats; ++i) fn();
  const auto t1 = clock_type::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-24s %10.3f ms %10.3f ms   x%.2f\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  std::printf("%-24s %13s %13s\n", "kernel", "serial", "parallel");

  // A production-sized problem: sampled Poisson instance, heavily refined.
  const PdeProblem problem = sample_poisson(2024);
  const TriMesh coarse = build_initial_mesh(problem.geometry, 0.4);
  const TriMesh fine = uniform_refine(coarse, 5);
  const SparseSystem sys = assemble_stiffness(fine);

  std::vector<double> x(sys.n()), y(sys.n());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.01 * i);

  report("spmv",
         time_ms([&] { spmv_serial(y, sys.row_offsets, sys.col_indices, sys.values, x); }, 50),
         time_ms([&] { spmv(y, sys.row_offsets, sys.col_indices, sys.values, x); }, 50));

  volatile double sink = 0.0;
  report("dot",
         time_ms([&] { sink = dot_serial(x.data(), y.data(), x.size()); }, 200),
         time_ms([&] { sink = dot(x.data(), y.data(), x.size()); }, 200));
  (void)sink;

  // Error integration against a deep reference, the episode hot path.
  const ReferenceSolution ref = make_reference(problem, coarse, 5);
  MarkVector half;
  half.marks.resize(coarse.n_elements());
  for (std::size_t i = 0; i < half.marks.size(); ++i) half.marks[i] = i % 2 == 0;
  const TriMesh mid = refine(coarse, half).first;
  const Solution sol = solve_problem(problem, mid);

  std::vector<double> err_serial, err_parallel;
  const double ms_serial =
      time_ms([&] { err_serial = raw_element_errors_serial(mid, sol, ref); }, 5);
  const double ms_parallel = time_ms([&] { err_parallel = raw_element_errors(mid, sol, ref); }, 5);
  report("element errors", ms_serial, ms_parallel);

  // The parallel kernels are maps with fixed reduction order; confirm they
  // agree bit for bit before trusting the timings.
  bool equal = err_serial.size() == err_parallel.size();
  for (std::size_t i = 0; equal && i < err_serial.size(); ++i)
    equal = err_serial[i] == err_parallel[i];
  std::printf("bitwise serial/parallel agreement: %s\n", equal ? "yes" : "NO");
  return equal ? 0 : 1;
}
