#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "symdeg/errors.hpp"

namespace symdeg {

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on
/// P_n with the asymptotic start t = cos(pi (k - 1/4)/(n + 1/2)).
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<size_t>(n), 0.0);
  w.assign(static_cast<size_t>(n), 0.0);
  const int half = (n + 1) / 2;
  for (int k = 0; k < half; ++k) {
    double t = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / pp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[static_cast<size_t>(n - 1 - k)] = t;
    x[static_cast<size_t>(k)] = -t;
    const double wk = 2.0 / ((1.0 - t * t) * pp * pp);
    w[static_cast<size_t>(k)] = wk;
    w[static_cast<size_t>(n - 1 - k)] = wk;
  }
}

/// Surface area of the unit sphere S^dim: 2 pi^((dim+1)/2) / Gamma((dim+1)/2).
inline double sphere_area(int dim) {
  const double s = 0.5 * (dim + 1);
  return 2.0 * std::pow(std::numbers::pi, s) / std::tgamma(s);
}

/// Hyperspherical chart on S^dim with angles u_0..u_{dim-2} in [0,pi]
/// ("theta") and u_{dim-1} in [0,2pi) ("phi"). The embedding follows the
/// convention (sin t cos p, sin t sin p, cos t) on S^2:
///   C_t = (prod_{l<t} sin u_l) cos u_t,  C_dim = prod_{l<dim} sin u_l,
///   X = (C_{dim-1}, C_dim, C_{dim-2}, ..., C_0).
/// The area Jacobian is sin^{dim-1} u_0 sin^{dim-2} u_1 ... sin u_{dim-2}.
struct SphereChart {
  int dim;

  explicit SphereChart(int dim_) : dim(dim_) {
    if (dim < 1) throw Error("sphere dimension must be >= 1");
  }

  double jacobian(const double* angles) const {
    double j = 1.0;
    for (int l = 0; l < dim - 1; ++l) j *= std::pow(std::sin(angles[l]), dim - 1 - l);
    return j;
  }

  /// Ambient coordinates (size dim+1).
  void ambient(const double* angles, double* out) const {
    std::vector<double> c(static_cast<size_t>(dim) + 1);
    double prefix = 1.0;
    for (int t = 0; t < dim; ++t) {
      c[static_cast<size_t>(t)] = prefix * std::cos(angles[t]);
      prefix *= std::sin(angles[t]);
    }
    c[static_cast<size_t>(dim)] = prefix;
    place(c.data(), out);
  }

  /// Ambient coordinates plus the (dim+1) x dim derivative matrix
  /// d out_k / d angle_i, row-major in `jac`.
  void ambient_jet(const double* angles, double* out, double* jac) const {
    const int nc = dim + 1;
    std::vector<double> c(static_cast<size_t>(nc));
    std::vector<double> dc(static_cast<size_t>(nc) * static_cast<size_t>(dim), 0.0);
    // C_t = cos u_t * prod_{l<t} sin u_l; derivative w.r.t. u_i replaces one
    // factor at a time, so no division by sin is ever needed.
    for (int t = 0; t <= dim; ++t) {
      const bool last = t == dim;
      double base = 1.0;
      for (int l = 0; l < (last ? dim : t); ++l) base *= std::sin(angles[l]);
      c[static_cast<size_t>(t)] = last ? base : base * std::cos(angles[t]);
      for (int i = 0; i < dim; ++i) {
        double d = 0.0;
        if (!last && i == t) {
          double prod = -std::sin(angles[t]);
          for (int l = 0; l < t; ++l) prod *= std::sin(angles[l]);
          d = prod;
        } else if (i < (last ? dim : t)) {
          double prod = std::cos(angles[i]);
          for (int l = 0; l < (last ? dim : t); ++l)
            if (l != i) prod *= std::sin(angles[l]);
          d = last ? prod : prod * std::cos(angles[t]);
        }
        dc[static_cast<size_t>(t) * static_cast<size_t>(dim) + static_cast<size_t>(i)] = d;
      }
    }
    place(c.data(), out);
    std::vector<double> row(static_cast<size_t>(nc));
    for (int i = 0; i < dim; ++i) {
      for (int t = 0; t <= dim; ++t)
        row[static_cast<size_t>(t)] = dc[static_cast<size_t>(t) * static_cast<size_t>(dim) + static_cast<size_t>(i)];
      std::vector<double> placed(static_cast<size_t>(nc));
      place(row.data(), placed.data());
      for (int k = 0; k < nc; ++k)
        jac[static_cast<size_t>(k) * static_cast<size_t>(dim) + static_cast<size_t>(i)] = placed[static_cast<size_t>(k)];
    }
  }

  /// Sign of det[X, dX/du_0, ..., dX/du_{dim-1}] on the open chart:
  /// +1 when the angle order is positively oriented for the boundary
  /// orientation of S^dim (outward normal first).
  int orientation_sign() const {
    const int nc = dim + 1;
    std::vector<double> angles(static_cast<size_t>(dim), 1.0);  // generic interior point
    std::vector<double> x(static_cast<size_t>(nc)), jac(static_cast<size_t>(nc) * static_cast<size_t>(dim));
    ambient_jet(angles.data(), x.data(), jac.data());
    // Column matrix [X | dX] with Gaussian elimination for the det sign.
    std::vector<double> m(static_cast<size_t>(nc) * static_cast<size_t>(nc));
    for (int r = 0; r < nc; ++r) {
      m[static_cast<size_t>(r) * static_cast<size_t>(nc)] = x[static_cast<size_t>(r)];
      for (int cidx = 0; cidx < dim; ++cidx)
        m[static_cast<size_t>(r) * static_cast<size_t>(nc) + static_cast<size_t>(cidx) + 1] =
            jac[static_cast<size_t>(r) * static_cast<size_t>(dim) + static_cast<size_t>(cidx)];
    }
    double det = 1.0;
    for (int cidx = 0; cidx < nc; ++cidx) {
      int piv = cidx;
      for (int r = cidx + 1; r < nc; ++r)
        if (std::abs(m[static_cast<size_t>(r) * static_cast<size_t>(nc) + static_cast<size_t>(cidx)]) >
            std::abs(m[static_cast<size_t>(piv) * static_cast<size_t>(nc) + static_cast<size_t>(cidx)]))
          piv = r;
      if (piv != cidx) {
        for (int k = 0; k < nc; ++k)
          std::swap(m[static_cast<size_t>(piv) * static_cast<size_t>(nc) + static_cast<size_t>(k)],
                    m[static_cast<size_t>(cidx) * static_cast<size_t>(nc) + static_cast<size_t>(k)]);
        det = -det;
      }
      const double p = m[static_cast<size_t>(cidx) * static_cast<size_t>(nc) + static_cast<size_t>(cidx)];
      det *= p;
      if (p == 0.0) return 0;
      for (int r = cidx + 1; r < nc; ++r) {
        const double f = m[static_cast<size_t>(r) * static_cast<size_t>(nc) + static_cast<size_t>(cidx)] / p;
        for (int k = cidx; k < nc; ++k)
          m[static_cast<size_t>(r) * static_cast<size_t>(nc) + static_cast<size_t>(k)] -=
              f * m[static_cast<size_t>(cidx) * static_cast<size_t>(nc) + static_cast<size_t>(k)];
      }
    }
    return det > 0.0 ? 1 : -1;
  }

 private:
  // Reorder (C_0..C_dim) into the ambient layout (C_{dim-1}, C_dim, C_{dim-2}, ..., C_0).
  void place(const double* c, double* out) const {
    out[0] = c[dim - 1];
    out[1] = c[dim];
    for (int j = 0; j + 2 <= dim; ++j) out[2 + j] = c[dim - 2 - j];
  }
};

/// One quadrature node of a (product) grid. Angle order is Sigma factor
/// first, fiber factor second; `weight` carries the area Jacobian so that
/// summing weights reproduces the product of sphere areas, `box_weight`
/// is the bare chart-box weight used when integrating differential forms.
struct GridNode {
  std::vector<double> angles;
  double weight = 0.0;
  double box_weight = 0.0;
  std::vector<double> ambient;   // factor embeddings, concatenated
  std::vector<double> dambient;  // row-major (ambient_size x total_dim)
};

/// Tensor quadrature grid on a sphere or a product of two spheres.
/// Gauss-Legendre on each theta axis, uniform midpoint nodes on each
/// periodic phi axis; nodes are strictly interior so chart poles are
/// never sampled.
class QuadratureGrid {
 public:
  struct Axis {
    std::vector<double> t;
    std::vector<double> w;
    bool periodic = false;
  };
  struct Factor {
    int dim = 0;
    int angle_offset = 0;
    int ambient_offset = 0;
  };

  /// Grid on a single sphere S^dim.
  static QuadratureGrid sphere(int dim, int resolution) {
    QuadratureGrid g;
    g.append_factor(dim, resolution);
    g.finalize();
    return g;
  }

  /// Grid on S^q x S^(2n-1), Sigma factor first. q = 0 drops the Sigma
  /// factor (the domain of the single-sphere trace integrals).
  static QuadratureGrid product(int q, int n, int resolution) {
    if (n < 1) throw Error("fiber requires n >= 1");
    QuadratureGrid g;
    if (q > 0) g.append_factor(q, resolution);
    g.append_factor(2 * n - 1, resolution);
    g.finalize();
    return g;
  }

  int total_dim() const { return total_dim_; }
  std::uint64_t size() const { return size_; }
  const std::vector<Factor>& factors() const { return factors_; }
  int ambient_size() const { return ambient_size_; }

  /// Product orientation sign relative to the boundary orientation of each
  /// factor (outward normal first). Public so orientation-reversal
  /// properties can be tested directly.
  int orientation_sign = 1;

  /// Load node `index` (mixed-radix decomposition, axis 0 slowest). The
  /// node's buffers are reused across calls.
  void load_node(std::uint64_t index, GridNode& node) const {
    const int d = total_dim_;
    node.angles.resize(static_cast<size_t>(d));
    node.ambient.resize(static_cast<size_t>(ambient_size_));
    node.dambient.assign(static_cast<size_t>(ambient_size_) * static_cast<size_t>(d), 0.0);
    double box = 1.0;
    for (int ax = d - 1; ax >= 0; --ax) {
      const Axis& a = axes_[static_cast<size_t>(ax)];
      const std::uint64_t m = a.t.size();
      const std::uint64_t k = index % m;
      index /= m;
      node.angles[static_cast<size_t>(ax)] = a.t[static_cast<size_t>(k)];
      box *= a.w[static_cast<size_t>(k)];
    }
    node.box_weight = box;
    double jac = 1.0;
    for (const Factor& f : factors_) {
      const SphereChart chart(f.dim);
      jac *= chart.jacobian(node.angles.data() + f.angle_offset);
      std::vector<double> jrows(static_cast<size_t>(f.dim + 1) * static_cast<size_t>(f.dim));
      chart.ambient_jet(node.angles.data() + f.angle_offset,
                        node.ambient.data() + f.ambient_offset, jrows.data());
      for (int r = 0; r <= f.dim; ++r)
        for (int cidx = 0; cidx < f.dim; ++cidx)
          node.dambient[static_cast<size_t>(f.ambient_offset + r) * static_cast<size_t>(d) +
                        static_cast<size_t>(f.angle_offset + cidx)] =
              jrows[static_cast<size_t>(r) * static_cast<size_t>(f.dim) + static_cast<size_t>(cidx)];
    }
    node.weight = box * jac;
  }

 private:
  std::vector<Axis> axes_;
  std::vector<Factor> factors_;
  int total_dim_ = 0;
  int ambient_size_ = 0;
  std::uint64_t size_ = 1;

  void append_factor(int dim, int resolution) {
    if (resolution < 4) throw Error("grid resolution must be >= 4 per axis");
    Factor f;
    f.dim = dim;
    f.angle_offset = total_dim_;
    f.ambient_offset = ambient_size_;
    factors_.push_back(f);
    std::vector<double> gx, gw;
    gauss_legendre(resolution, gx, gw);
    for (int l = 0; l < dim - 1; ++l) {
      Axis ax;
      ax.t.reserve(gx.size());
      ax.w.reserve(gx.size());
      for (size_t k = 0; k < gx.size(); ++k) {
        ax.t.push_back(0.5 * std::numbers::pi * (gx[k] + 1.0));
        ax.w.push_back(0.5 * std::numbers::pi * gw[k]);
      }
      axes_.push_back(std::move(ax));
    }
    Axis phi;
    phi.periodic = true;
    const double h = 2.0 * std::numbers::pi / resolution;
    for (int k = 0; k < resolution; ++k) {
      phi.t.push_back(h * (k + 0.5));
      phi.w.push_back(h);
    }
    axes_.push_back(std::move(phi));
    total_dim_ += dim;
    ambient_size_ += dim + 1;
  }

  void finalize() {
    size_ = 1;
    for (const Axis& a : axes_) size_ *= a.t.size();
    orientation_sign = 1;
    for (const Factor& f : factors_) orientation_sign *= SphereChart(f.dim).orientation_sign();
  }
};

}  // namespace symdeg
