#include <cmath>

#include "amrlab/error_metrics.hpp"
#include "amrlab/kernels.hpp"
#include "amrlab/rng.hpp"
#include "doctest.h"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace amr;

namespace {

template <typename F>
auto with_threads(int n, F&& fn) {
#ifdef _OPENMP
  const int keep = omp_get_max_threads();
  omp_set_num_threads(n);
  auto out = fn();
  omp_set_num_threads(keep);
  return out;
#else
  (void)n;
  return fn();
#endif
}

}  // namespace

TEST_CASE("dot and spmv: parallel results are bit-identical to serial") {
  Rng rng(42);
  const std::size_t n = 50000;
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.uniform(-1.0, 1.0);
    b[i] = rng.uniform(-1.0, 1.0);
  }
  const double serial = dot_serial(a.data(), b.data(), n);
  CHECK(dot(a.data(), b.data(), n) == serial);
  CHECK(with_threads(1, [&] { return dot(a.data(), b.data(), n); }) == serial);
  CHECK(with_threads(2, [&] { return dot(a.data(), b.data(), n); }) == serial);

  const PdeProblem p = sample_poisson(9);
  const TriMesh mesh = uniform_refine(build_initial_mesh(p.geometry, 0.4), 3);
  const SparseSystem sys = assemble_stiffness(mesh);
  std::vector<double> x(sys.n()), y_serial(sys.n()), y_par(sys.n());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  spmv_serial(y_serial, sys.row_offsets, sys.col_indices, sys.values, x);
  for (int threads : {1, 2, 4}) {
    with_threads(threads, [&] {
      spmv(y_par, sys.row_offsets, sys.col_indices, sys.values, x);
      return 0;
    });
    CHECK(y_par == y_serial);
  }
}

TEST_CASE("element error integration: parallel equals serial bitwise") {
  const PdeProblem p = sample_poisson(31);
  const TriMesh coarse = build_initial_mesh(p.geometry, 0.4);
  const ReferenceSolution ref = make_reference(p, coarse, 3);

  Rng rng(3);
  MarkVector mv;
  mv.marks.resize(coarse.n_elements());
  for (std::size_t i = 0; i < mv.marks.size(); ++i) mv.marks[i] = rng.bernoulli(0.5);
  const TriMesh mesh = refine(coarse, mv).first;
  const Solution sol = solve_problem(p, mesh);

  const auto serial = raw_element_errors_serial(mesh, sol, ref);
  for (int threads : {1, 2, 4}) {
    const auto par = with_threads(threads, [&] { return raw_element_errors(mesh, sol, ref); });
    CHECK(par == serial);
  }
}

TEST_CASE("load assembly and solves do not depend on the thread count") {
  const PdeProblem p = sample_poisson(17);
  const TriMesh mesh = uniform_refine(build_initial_mesh(p.geometry, 0.4), 2);
  const auto rhs1 = with_threads(1, [&] {
    return assemble_load(mesh, [&](Vec2 q) { return eval_load(p, q); });
  });
  const auto rhs2 = with_threads(2, [&] {
    return assemble_load(mesh, [&](Vec2 q) { return eval_load(p, q); });
  });
  CHECK(rhs1 == rhs2);

  const auto sol1 = with_threads(1, [&] { return solve_problem(p, mesh); });
  const auto sol2 = with_threads(2, [&] { return solve_problem(p, mesh); });
  CHECK(sol1.values == sol2.values);
}
