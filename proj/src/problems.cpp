#include "amrlab/problems.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace amr {

double GmmLoad::density(Vec2 p) const {
  double sum = 0.0;
  for (const GmmComponent& c : components) {
    const double det = c.cov_xx * c.cov_yy - c.cov_xy * c.cov_xy;
    const double dx = p.x - c.mean.x, dy = p.y - c.mean.y;
    const double quad = (c.cov_yy * dx * dx - 2.0 * c.cov_xy * dx * dy + c.cov_xx * dy * dy) / det;
    sum += c.weight * std::exp(-0.5 * quad) / (2.0 * M_PI * std::sqrt(det));
  }
  return sum;
}

PdeProblem sample_laplace(Rng& rng, bool swap_bc) {
  const double wx = rng.uniform(0.05, 0.25);
  const double wy = rng.uniform(0.05, 0.25);
  const double cx = rng.uniform(0.2, 0.8);
  const double cy = rng.uniform(0.2, 0.8);

  PdeProblem p;
  p.geometry.kind = DomainKind::square_with_hole;
  p.geometry.hole_lo = {cx - 0.5 * wx, cy - 0.5 * wy};
  p.geometry.hole_hi = {cx + 0.5 * wx, cy + 0.5 * wy};
  p.bc[BoundaryTag::outer] = swap_bc ? 1.0 : 0.0;
  p.bc[BoundaryTag::inner] = swap_bc ? 0.0 : 1.0;
  p.seed = rng.key();
  return p;
}

PdeProblem sample_laplace(std::uint64_t seed, bool swap_bc) {
  Rng rng(seed);
  PdeProblem p = sample_laplace(rng, swap_bc);
  p.seed = seed;
  return p;
}

PdeProblem sample_poisson(Rng& rng) {
  PdeProblem p;
  p.geometry.kind = DomainKind::l_shaped;
  p.geometry.cutoff = {rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95)};

  GmmLoad load;
  load.components.resize(3);
  for (GmmComponent& c : load.components) {
    int attempts = 0;
    for (;;) {
      c.mean = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
      if (p.geometry.contains(c.mean, 0.0)) break;
      if (++attempts >= 10000)
        throw sampling_error("sample_poisson: mean rejection cap exceeded");
    }
  }
  const double log_lo = std::log(0.0003), log_hi = std::log(0.003);
  for (GmmComponent& c : load.components) {
    const double v1 = std::exp(rng.uniform(log_lo, log_hi));
    const double v2 = std::exp(rng.uniform(log_lo, log_hi));
    const double angle = rng.uniform(0.0, M_PI);
    const double ca = std::cos(angle), sa = std::sin(angle);
    // R diag(v1, v2) R^T
    c.cov_xx = ca * ca * v1 + sa * sa * v2;
    c.cov_xy = ca * sa * (v1 - v2);
    c.cov_yy = sa * sa * v1 + ca * ca * v2;
  }
  double wsum = 0.0;
  for (GmmComponent& c : load.components) {
    c.weight = std::exp(rng.normal()) + 1.0;
    wsum += c.weight;
  }
  for (GmmComponent& c : load.components) c.weight /= wsum;

  p.load = std::move(load);
  p.bc[BoundaryTag::outer] = 0.0;
  p.seed = rng.key();
  return p;
}

PdeProblem sample_poisson(std::uint64_t seed) {
  Rng rng(seed);
  PdeProblem p = sample_poisson(rng);
  p.seed = seed;
  return p;
}

double eval_load(const PdeProblem& problem, Vec2 p) {
  if (!problem.load) throw invalid_problem_error("eval_load: problem has no load function");
  return problem.load->density(p);
}

std::vector<PdeProblem> sample_eval_suite(PdeFamily family, std::uint64_t seed, int n) {
  if (n < 1) throw std::invalid_argument("sample_eval_suite: n must be positive");
  const Rng base(seed);
  std::vector<PdeProblem> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));
    out.push_back(family == PdeFamily::laplace ? sample_laplace(rng) : sample_poisson(rng));
  }
  return out;
}

namespace {

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& tok) {
  return std::strtod(tok.c_str(), nullptr);
}

}  // namespace

void write_problem(std::ostream& os, const PdeProblem& p) {
  os << "pde-problem v1\n";
  os << "family " << (p.family() == PdeFamily::laplace ? "laplace" : "poisson") << '\n';
  os << "seed " << p.seed << '\n';
  if (p.geometry.kind == DomainKind::square_with_hole) {
    os << "geometry square_with_hole " << hex(p.geometry.hole_lo.x) << ' '
       << hex(p.geometry.hole_lo.y) << ' ' << hex(p.geometry.hole_hi.x) << ' '
       << hex(p.geometry.hole_hi.y) << '\n';
  } else if (p.geometry.kind == DomainKind::l_shaped) {
    os << "geometry l_shaped " << hex(p.geometry.cutoff.x) << ' ' << hex(p.geometry.cutoff.y)
       << '\n';
  } else {
    os << "geometry unit_square\n";
  }
  for (const auto& [tag, value] : p.bc)
    os << "bc " << (tag == BoundaryTag::outer ? "outer" : "inner") << ' ' << hex(value) << '\n';
  if (p.load) {
    os << "components " << p.load->components.size() << '\n';
    for (const GmmComponent& c : p.load->components)
      os << "component " << hex(c.mean.x) << ' ' << hex(c.mean.y) << ' ' << hex(c.cov_xx) << ' '
         << hex(c.cov_xy) << ' ' << hex(c.cov_yy) << ' ' << hex(c.weight) << '\n';
  }
  os << "end\n";
}

std::string problem_to_string(const PdeProblem& p) {
  std::ostringstream os;
  write_problem(os, p);
  return os.str();
}

PdeProblem read_problem(std::istream& is) {
  std::string line;
  std::getline(is, line);
  if (line != "pde-problem v1") throw invalid_problem_error("read_problem: bad header: " + line);

  PdeProblem p;
  bool poisson = false;
  std::size_t expect_components = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "end") break;
    if (tok == "family") {
      ls >> tok;
      poisson = tok == "poisson";
    } else if (tok == "seed") {
      ls >> p.seed;
    } else if (tok == "geometry") {
      ls >> tok;
      std::string a, b, c, d;
      if (tok == "square_with_hole") {
        p.geometry.kind = DomainKind::square_with_hole;
        ls >> a >> b >> c >> d;
        p.geometry.hole_lo = {parse_double(a), parse_double(b)};
        p.geometry.hole_hi = {parse_double(c), parse_double(d)};
      } else if (tok == "l_shaped") {
        p.geometry.kind = DomainKind::l_shaped;
        ls >> a >> b;
        p.geometry.cutoff = {parse_double(a), parse_double(b)};
      } else {
        p.geometry.kind = DomainKind::unit_square;
      }
    } else if (tok == "bc") {
      std::string tag, value;
      ls >> tag >> value;
      p.bc[tag == "outer" ? BoundaryTag::outer : BoundaryTag::inner] = parse_double(value);
    } else if (tok == "components") {
      ls >> expect_components;
      p.load = GmmLoad{};
    } else if (tok == "component") {
      if (!p.load) throw invalid_problem_error("read_problem: component before components");
      std::string a, b, c, d, e, f;
      ls >> a >> b >> c >> d >> e >> f;
      p.load->components.push_back({{parse_double(a), parse_double(b)},
                                    parse_double(c),
                                    parse_double(d),
                                    parse_double(e),
                                    parse_double(f)});
    } else if (!tok.empty()) {
      throw invalid_problem_error("read_problem: unknown field: " + tok);
    }
  }
  if (poisson != p.load.has_value())
    throw invalid_problem_error("read_problem: family/load mismatch");
  if (p.load && p.load->components.size() != expect_components)
    throw invalid_problem_error("read_problem: component count mismatch");
  return p;
}

}  // namespace amr
