#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symdeg/expr.hpp"
#include "symdeg/integrate.hpp"
#include "symdeg/linalg.hpp"

namespace symdeg {

/// Multi-index alpha with |alpha| = sum of entries.
struct MultiIndex {
  std::vector<int> entries;

  int order() const {
    int s = 0;
    for (int e : entries) s += e;
    return s;
  }
  bool operator==(const MultiIndex& o) const { return entries == o.entries; }

  std::string print() const {
    std::string s = "(";
    for (size_t i = 0; i < entries.size(); ++i)
      s += (i ? "," : "") + std::to_string(entries[i]);
    return s + ")";
  }
};

/// Family of principal symbols p(lambda, x, xi) = sum_{|alpha|=k}
/// a_alpha(lambda, x) xi^alpha with m x m expression-valued coefficients.
///
/// The problem is presented in Sigma-chart coordinates: the lambda
/// variables are the q chart angles of the embedded sphere (the pullback
/// along the embedding is absorbed into the coefficient expressions), and
/// d, the dimension of the full parameter manifold, travels separately as
/// certificate data. Coordinates are pre-scaled so K x {0} lies in the
/// unit ball of R^(2n); K itself lies in {|x| <= k_radius}.
struct SymbolFamily {
  int n = 0;  // space dimension
  int m = 0;  // system size
  int k = 0;  // operator order
  int d = 0;  // asserted dimension of the parameter manifold
  std::vector<std::string> lambda_vars;  // q Sigma-chart angles
  std::vector<std::string> x_vars;       // n
  std::vector<std::string> xi_vars;      // n (declared, never referenced by coefficients)
  std::vector<std::pair<MultiIndex, std::vector<Expr>>> coefficients;  // matrix row-major
  double k_radius = 1.0;
  std::vector<double> basepoint;  // nu, in Sigma-chart angles

  int q() const { return static_cast<int>(lambda_vars.size()); }

  /// Concatenated declared variable list the coefficient expressions are
  /// compiled against: lambda, then x, then xi.
  std::vector<std::string> variable_list() const {
    std::vector<std::string> v = lambda_vars;
    v.insert(v.end(), x_vars.begin(), x_vars.end());
    v.insert(v.end(), xi_vars.begin(), xi_vars.end());
    return v;
  }

  void validate() const {
    if (m < 1 || n < 1 || k < 1) throw Error("symbol family requires m, n, k >= 1");
    if (k_radius <= 0.0 || k_radius > 1.0)
      throw Error("k_radius must lie in (0, 1] after normalization");
    if (static_cast<int>(x_vars.size()) != n || static_cast<int>(xi_vars.size()) != n)
      throw Error("x and xi variable lists must have length n");
    if (basepoint.size() != lambda_vars.size())
      throw Error("basepoint must give one chart coordinate per lambda variable");
    if (coefficients.empty()) throw Error("symbol family has no coefficients");
    for (const auto& [alpha, matrix] : coefficients) {
      if (static_cast<int>(alpha.entries.size()) != n)
        throw Error("multi-index " + alpha.print() + " does not have n entries");
      for (int e : alpha.entries)
        if (e < 0) throw Error("multi-index " + alpha.print() + " has a negative entry");
      if (alpha.order() != k)
        throw Error("multi-index " + alpha.print() + " has order != k (principal part only)");
      if (matrix.size() != static_cast<size_t>(m) * static_cast<size_t>(m))
        throw Error("coefficient matrix for " + alpha.print() + " is not m x m");
    }
  }
};

namespace detail {

/// a_alpha(lambda, x) * xi^alpha accumulated over alpha, in dual arithmetic.
/// Bindings are positional against family.variable_list().
inline void eval_symbol_jet(const SymbolFamily& f, std::span<const Dual> bindings,
                            int directions, MatrixJet& out) {
  out.resize(f.m, directions);
  const int q = f.q();
  for (const auto& [alpha, matrix] : f.coefficients) {
    Dual xi_pow = Dual::constant(Complex(1, 0), directions);
    for (int c = 0; c < f.n; ++c) {
      const int e = alpha.entries[static_cast<size_t>(c)];
      if (e != 0) xi_pow = xi_pow * pow_int(bindings[static_cast<size_t>(q + f.n + c)], e);
    }
    for (int r = 0; r < f.m; ++r)
      for (int c = 0; c < f.m; ++c) {
        const Expr& e = matrix[static_cast<size_t>(r) * static_cast<size_t>(f.m) + static_cast<size_t>(c)];
        const Dual v = e.eval_dual(bindings) * xi_pow;
        out.value(r, c) += v.v;
        for (int kdir = 0; kdir < directions; ++kdir) out.partials[static_cast<size_t>(kdir)](r, c) += v.d[kdir];
      }
  }
}

inline std::vector<Dual> plain_bindings(const SymbolFamily& f, std::span<const Complex> lambda,
                                        std::span<const Complex> x, std::span<const Complex> xi) {
  std::vector<Dual> b;
  b.reserve(lambda.size() + x.size() + xi.size());
  for (Complex v : lambda) b.push_back(Dual::constant(v, 0));
  for (Complex v : x) b.push_back(Dual::constant(v, 0));
  for (Complex v : xi) b.push_back(Dual::constant(v, 0));
  (void)f;
  return b;
}

}  // namespace detail

/// p(lambda, x, xi) as a plain matrix.
inline Mat eval_p(const SymbolFamily& f, std::span<const Complex> lambda,
                  std::span<const Complex> x, std::span<const Complex> xi) {
  const auto b = detail::plain_bindings(f, lambda, x, xi);
  MatrixJet jet;
  detail::eval_symbol_jet(f, b, 0, jet);
  return jet.value;
}

inline Mat eval_p_real(const SymbolFamily& f, std::span<const double> lambda,
                       std::span<const double> x, std::span<const double> xi) {
  std::vector<Complex> lc(lambda.begin(), lambda.end());
  std::vector<Complex> xc(x.begin(), x.end());
  std::vector<Complex> xic(xi.begin(), xi.end());
  return eval_p(f, lc, xc, xic);
}

struct SamplingSpec {
  int lambda_per_dim = 8;
  int x_per_dim = 8;
  int xi_directions = 32;
  double sv_threshold = 1e-8;
  double locality_tolerance = 1e-10;
  double x_box_halfwidth = 1.5;  // sampling box for x, covers inside and beyond K
};

struct SampleWitness {
  std::vector<double> lambda;
  std::vector<double> x;
  std::vector<double> xi;
};

struct EllipticityReport {
  bool pass = false;
  double min_singular_value = 0.0;
  double min_abs_det = 0.0;
  double worst_condition = 0.0;
  double threshold = 0.0;
  long samples = 0;
  SampleWitness worst;
};

struct LocalityReport {
  bool pass = false;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  long samples = 0;
  std::vector<double> witness_lambda;
  std::vector<double> witness_x;
  MultiIndex witness_alpha;
  int witness_row = 0, witness_col = 0;
};

namespace detail {

/// Inclusive lattice over the angle box of one or more sphere charts:
/// theta axes cover [0, pi] endpoints included, phi axes cover [0, 2 pi).
/// Endpoints are included on purpose: validation must hit boundary
/// parameter values (an ellipticity failure often sits exactly there).
inline std::vector<std::vector<double>> angle_lattice(const std::vector<int>& factor_dims,
                                                      int per_dim) {
  std::vector<bool> periodic;
  for (int fd : factor_dims) {
    for (int l = 0; l < fd - 1; ++l) periodic.push_back(false);
    if (fd >= 1) periodic.push_back(true);
  }
  std::vector<std::vector<double>> pts;
  const int q = static_cast<int>(periodic.size());
  if (q == 0) {
    pts.push_back({});
    return pts;
  }
  std::vector<int> idx(static_cast<size_t>(q), 0);
  for (;;) {
    std::vector<double> p(static_cast<size_t>(q));
    for (int aidx = 0; aidx < q; ++aidx) {
      if (!periodic[static_cast<size_t>(aidx)])
        p[static_cast<size_t>(aidx)] =
            per_dim == 1 ? 0.0 : std::numbers::pi * idx[static_cast<size_t>(aidx)] / (per_dim - 1);
      else
        p[static_cast<size_t>(aidx)] = 2.0 * std::numbers::pi * idx[static_cast<size_t>(aidx)] / per_dim;
    }
    pts.push_back(std::move(p));
    int carry = q - 1;
    while (carry >= 0 && ++idx[static_cast<size_t>(carry)] == per_dim) {
      idx[static_cast<size_t>(carry)] = 0;
      --carry;
    }
    if (carry < 0) break;
  }
  return pts;
}

inline std::vector<std::vector<double>> lambda_lattice(int q, int per_dim) {
  return angle_lattice(q > 0 ? std::vector<int>{q} : std::vector<int>{}, per_dim);
}

inline std::vector<std::vector<double>> box_lattice(int n, int per_dim, double halfwidth) {
  std::vector<std::vector<double>> pts;
  std::vector<int> idx(static_cast<size_t>(n), 0);
  for (;;) {
    std::vector<double> p(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c)
      p[static_cast<size_t>(c)] =
          per_dim == 1 ? 0.0 : -halfwidth + 2.0 * halfwidth * idx[static_cast<size_t>(c)] / (per_dim - 1);
    pts.push_back(std::move(p));
    int carry = n - 1;
    while (carry >= 0 && ++idx[static_cast<size_t>(carry)] == per_dim) {
      idx[static_cast<size_t>(carry)] = 0;
      --carry;
    }
    if (carry < 0) break;
  }
  return pts;
}

/// Roughly `count` unit directions in R^n from an inclusive angle lattice
/// on S^(n-1).
inline std::vector<std::vector<double>> unit_directions(int n, int count) {
  std::vector<std::vector<double>> dirs;
  if (n == 1) {
    dirs.push_back({1.0});
    dirs.push_back({-1.0});
    return dirs;
  }
  const int axes = n - 1;
  int per_axis = std::max(2, static_cast<int>(std::llround(std::pow(double(count), 1.0 / axes))));
  const SphereChart chart(axes == 0 ? 1 : n - 1);
  std::vector<int> idx(static_cast<size_t>(axes), 0);
  std::vector<double> angles(static_cast<size_t>(axes));
  for (;;) {
    for (int aidx = 0; aidx < axes; ++aidx) {
      if (aidx < axes - 1)
        angles[static_cast<size_t>(aidx)] = std::numbers::pi * (idx[static_cast<size_t>(aidx)] + 0.5) / per_axis;
      else
        angles[static_cast<size_t>(aidx)] = 2.0 * std::numbers::pi * idx[static_cast<size_t>(aidx)] / per_axis;
    }
    std::vector<double> u(static_cast<size_t>(n));
    chart.ambient(angles.data(), u.data());
    dirs.push_back(u);
    int carry = axes - 1;
    while (carry >= 0 && ++idx[static_cast<size_t>(carry)] == per_axis) {
      idx[static_cast<size_t>(carry)] = 0;
      --carry;
    }
    if (carry < 0) break;
  }
  return dirs;
}

}  // namespace detail

/// Interior-ellipticity screen: sample p over lambda, x, and unit-xi
/// lattices, track the minimum singular value, |det|, and condition
/// number. PASS iff the minimum singular value stays above the threshold.
/// Failures are report entries, never exceptions.
inline EllipticityReport check_ellipticity(const SymbolFamily& f, const SamplingSpec& spec = {}) {
  EllipticityReport rep;
  rep.threshold = spec.sv_threshold;
  rep.min_singular_value = std::numeric_limits<double>::infinity();
  rep.min_abs_det = std::numeric_limits<double>::infinity();
  rep.worst_condition = 0.0;
  const auto lambdas = detail::lambda_lattice(f.q(), spec.lambda_per_dim);
  const auto xs = detail::box_lattice(f.n, spec.x_per_dim, spec.x_box_halfwidth);
  const auto xis = detail::unit_directions(f.n, spec.xi_directions);
  for (const auto& lam : lambdas)
    for (const auto& x : xs)
      for (const auto& xi : xis) {
        const Mat p = eval_p_real(f, lam, x, xi);
        Eigen::JacobiSVD<Mat> svd(p);
        const double smin = svd.singularValues().minCoeff();
        const double smax = svd.singularValues().maxCoeff();
        const double adet = std::abs(p.determinant());
        ++rep.samples;
        if (smin < rep.min_singular_value) {
          rep.min_singular_value = smin;
          rep.worst = {lam, x, xi};
        }
        rep.min_abs_det = std::min(rep.min_abs_det, adet);
        rep.worst_condition = std::max(rep.worst_condition, smin > 0.0 ? smax / smin
                                       : std::numeric_limits<double>::infinity());
      }
  rep.pass = rep.min_singular_value >= rep.threshold;
  return rep;
}

/// H3(ii) screen: for every sampled x outside K (|x| >= k_radius) the
/// coefficients must agree with their value at the basepoint across the
/// sampled lambda lattice, within the locality tolerance.
inline LocalityReport check_locality(const SymbolFamily& f, const SamplingSpec& spec = {}) {
  LocalityReport rep;
  rep.tolerance = spec.locality_tolerance;
  const auto lambdas = detail::lambda_lattice(f.q(), spec.lambda_per_dim);
  auto xs = detail::box_lattice(f.n, spec.x_per_dim, spec.x_box_halfwidth);
  // Shell points just outside the seam, where a violation is most likely.
  for (const auto& dir : detail::unit_directions(f.n, 8))
    for (double scale : {1.0 + 1e-6, 1.1, 1.35}) {
      std::vector<double> x(dir);
      for (double& c : x) c *= scale * f.k_radius;
      xs.push_back(std::move(x));
    }
  std::vector<Complex> nu(f.basepoint.begin(), f.basepoint.end());
  for (const auto& x : xs) {
    double r2 = 0.0;
    for (double c : x) r2 += c * c;
    if (r2 < f.k_radius * f.k_radius) continue;
    std::vector<Complex> xc(x.begin(), x.end());
    for (const auto& [alpha, matrix] : f.coefficients) {
      std::vector<Complex> at_nu(matrix.size());
      {
        std::vector<Dual> b;
        for (Complex v : nu) b.push_back(Dual::constant(v, 0));
        for (Complex v : xc) b.push_back(Dual::constant(v, 0));
        for (int c = 0; c < f.n; ++c) b.push_back(Dual::constant(Complex(0, 0), 0));
        for (size_t e = 0; e < matrix.size(); ++e) at_nu[e] = matrix[e].eval_dual(b).v;
      }
      for (const auto& lam : lambdas) {
        std::vector<Dual> b;
        for (double v : lam) b.push_back(Dual::constant(Complex(v, 0), 0));
        for (Complex v : xc) b.push_back(Dual::constant(v, 0));
        for (int c = 0; c < f.n; ++c) b.push_back(Dual::constant(Complex(0, 0), 0));
        ++rep.samples;
        for (size_t e = 0; e < matrix.size(); ++e) {
          const double dev = std::abs(matrix[e].eval_dual(b).v - at_nu[e]);
          if (dev > rep.max_deviation) {
            rep.max_deviation = dev;
            rep.witness_lambda = lam;
            rep.witness_x = x;
            rep.witness_alpha = alpha;
            rep.witness_row = static_cast<int>(e) / f.m;
            rep.witness_col = static_cast<int>(e) % f.m;
          }
        }
      }
    }
  }
  rep.pass = rep.max_deviation <= rep.tolerance;
  return rep;
}

/// The reduced symbol sigma = p(lambda,x,xi) p(nu,x,xi)^-1 of the family,
/// extended by the identity for x outside K. On the integration sphere
/// the two branches agree wherever H3 holds, which check_locality
/// screens; no mollification is applied at the seam.
///
/// As a SymbolMap, chart directions are (Sigma angles..., fiber angles...)
/// and the fiber ambient pair is read as (x, xi).
class ReducedSymbol : public SymbolMap {
 public:
  explicit ReducedSymbol(SymbolFamily family, double condition_cap = 1e12)
      : family_(std::move(family)), condition_cap_(condition_cap) {
    family_.validate();
  }

  const SymbolFamily& family() const { return family_; }

  int matrix_dim() const override { return family_.m; }

  void eval_jet(const GridNode& node, MatrixJet& out) const override {
    const int q = family_.q();
    const int n = family_.n;
    const int dims = static_cast<int>(node.angles.size());
    const int fiber_ambient = q > 0 ? q + 1 : 0;
    double r2 = 0.0;
    for (int c = 0; c < n; ++c) {
      const double xc = node.ambient[static_cast<size_t>(fiber_ambient + c)];
      r2 += xc * xc;
    }
    if (r2 >= family_.k_radius * family_.k_radius) {
      out = MatrixJet::identity(family_.m, dims);
      return;
    }
    // Bindings: lambda = chart angles (seeded with unit partials), (x, xi)
    // = fiber embedding with its chart derivatives.
    std::vector<Dual> bindings;
    bindings.reserve(static_cast<size_t>(q + 2 * n));
    for (int a = 0; a < q; ++a)
      bindings.push_back(Dual::variable(Complex(node.angles[static_cast<size_t>(a)], 0), dims, a));
    for (int c = 0; c < 2 * n; ++c) {
      Dual v = Dual::constant(Complex(node.ambient[static_cast<size_t>(fiber_ambient + c)], 0), dims);
      for (int kdir = 0; kdir < dims; ++kdir)
        v.d[kdir] = Complex(
            node.dambient[static_cast<size_t>(fiber_ambient + c) * static_cast<size_t>(dims) +
                          static_cast<size_t>(kdir)],
            0.0);
      bindings.push_back(v);
    }
    MatrixJet p;
    detail::eval_symbol_jet(family_, bindings, dims, p);
    // Same (x, xi) jets at lambda = nu; the lambda partials of p_nu vanish.
    for (int a = 0; a < q; ++a)
      bindings[static_cast<size_t>(a)] =
          Dual::constant(Complex(family_.basepoint[static_cast<size_t>(a)], 0), dims);
    MatrixJet p_nu;
    detail::eval_symbol_jet(family_, bindings, dims, p_nu);
    const MatrixJet p_nu_inv =
        inverse_jet(p_nu, condition_cap_, "p(nu, x, xi) at " + detail::node_witness(node));
    out = multiply(p, p_nu_inv);
  }

  /// sigma at an arbitrary point (plain value, no derivatives).
  Mat eval_sigma(std::span<const double> lambda, std::span<const double> x,
                 std::span<const double> xi) const {
    double r2 = 0.0;
    for (double c : x) r2 += c * c;
    if (r2 >= family_.k_radius * family_.k_radius)
      return Mat::Identity(family_.m, family_.m);
    const Mat p = eval_p_real(family_, lambda, x, xi);
    const Mat pn = eval_p_real(family_, family_.basepoint, x, xi);
    const Mat pn_inv = invert_monitored(pn, condition_cap_, "p(nu, x, xi)");
    return p * pn_inv;
  }

 private:
  SymbolFamily family_;
  double condition_cap_;
};

/// Construct the reduced symbol. The caller is responsible for having run
/// check_ellipticity (PASS at sampling resolution) first; a singular
/// p(nu, x, xi) later still raises a located error.
inline ReducedSymbol reduce(SymbolFamily f, double condition_cap = 1e12) {
  return ReducedSymbol(std::move(f), condition_cap);
}

/// GL(m, C)-valued map given directly by an m x m matrix of expressions in
/// the chart angles of the integration domain (Sigma angles first, fiber
/// angles second). This is how test maps bypass the reduction pipeline.
class DirectSigmaMap : public SymbolMap {
 public:
  DirectSigmaMap(int m, std::vector<std::string> chart_vars, std::vector<Expr> entries)
      : m_(m), vars_(std::move(chart_vars)), entries_(std::move(entries)) {
    if (entries_.size() != static_cast<size_t>(m_) * static_cast<size_t>(m_))
      throw Error("direct sigma: entry list is not m x m");
  }

  static DirectSigmaMap parse(int m, const std::vector<std::string>& chart_vars,
                              const std::vector<std::string>& sources) {
    std::vector<Expr> entries;
    entries.reserve(sources.size());
    for (const auto& s : sources) entries.push_back(Expr::parse(s, chart_vars));
    return DirectSigmaMap(m, chart_vars, std::move(entries));
  }

  int matrix_dim() const override { return m_; }
  const std::vector<std::string>& chart_vars() const { return vars_; }

  void eval_jet(const GridNode& node, MatrixJet& out) const override {
    const int dims = static_cast<int>(node.angles.size());
    if (dims != static_cast<int>(vars_.size()))
      throw Error("direct sigma: grid dimension does not match declared chart variables");
    std::vector<Dual> bindings;
    bindings.reserve(vars_.size());
    for (int a = 0; a < dims; ++a)
      bindings.push_back(Dual::variable(Complex(node.angles[static_cast<size_t>(a)], 0), dims, a));
    out.resize(m_, dims);
    for (int r = 0; r < m_; ++r)
      for (int c = 0; c < m_; ++c) {
        const Dual v = entries_[static_cast<size_t>(r) * static_cast<size_t>(m_) +
                                static_cast<size_t>(c)].eval_dual(bindings);
        out.value(r, c) = v.v;
        for (int kdir = 0; kdir < dims; ++kdir) out.partials[static_cast<size_t>(kdir)](r, c) = v.d[kdir];
      }
  }

  Mat eval_value(std::span<const double> angles) const {
    std::vector<Complex> slots;
    slots.reserve(angles.size());
    for (double a : angles) slots.emplace_back(a, 0.0);
    Mat out(m_, m_);
    for (int r = 0; r < m_; ++r)
      for (int c = 0; c < m_; ++c)
        out(r, c) = entries_[static_cast<size_t>(r) * static_cast<size_t>(m_) +
                             static_cast<size_t>(c)].eval(slots);
    return out;
  }

 private:
  int m_;
  std::vector<std::string> vars_;
  std::vector<Expr> entries_;
};

/// Invertibility screen for direct-sigma maps: sample the chart angle box
/// (inclusive lattice) and track singular values of sigma, mirroring the
/// ellipticity report for symbol families.
inline EllipticityReport check_invertibility(const DirectSigmaMap& map, const SamplingSpec& spec = {}) {
  EllipticityReport rep;
  rep.threshold = spec.sv_threshold;
  rep.min_singular_value = std::numeric_limits<double>::infinity();
  rep.min_abs_det = std::numeric_limits<double>::infinity();
  const int dims = static_cast<int>(map.chart_vars().size());
  const auto pts = detail::lambda_lattice(dims, spec.lambda_per_dim);
  for (const auto& p : pts) {
    const Mat s = map.eval_value(p);
    Eigen::JacobiSVD<Mat> svd(s);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    ++rep.samples;
    if (smin < rep.min_singular_value) {
      rep.min_singular_value = smin;
      rep.worst.lambda = p;
    }
    rep.min_abs_det = std::min(rep.min_abs_det, std::abs(s.determinant()));
    rep.worst_condition = std::max(rep.worst_condition, smin > 0.0 ? smax / smin
                                   : std::numeric_limits<double>::infinity());
  }
  rep.pass = rep.min_singular_value >= rep.threshold;
  return rep;
}

}  // namespace symdeg
