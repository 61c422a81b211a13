#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "symdeg/forms.hpp"
#include "symdeg/geometry.hpp"
#include "symdeg/linalg.hpp"

namespace symdeg {

/// Exact normalization constant (j-1)! / ((2 pi i)^j (2j-1)!), staged as a
/// reduced rational times pi^(-j) times i^(-j). The factorial quotient
/// (j-1)!/(2j-1)! collapses to 1 / (j (j+1) ... (2j-1)), so the whole
/// rational part is 1 / (2^j j (j+1) ... (2j-1)); that denominator fits
/// unsigned 128-bit arithmetic through j = 20, which is where the staging
/// stops by contract.
struct NormalizationConstant {
  int j = 0;
  unsigned long long den_lo = 0;   // low 64 bits of the exact denominator
  unsigned long long den_hi = 0;   // high 64 bits
  int pi_power = 0;                // always -j
  int i_power = 0;                 // -j reduced mod 4, in {0,1,2,3}
  Complex value{};

  static NormalizationConstant fedosov(int j) {
    if (j < 1 || j > 20) throw Error("normalization constant: j must be in [1, 20]");
    unsigned __int128 den = 1;
    for (int t = j; t <= 2 * j - 1; ++t) den *= static_cast<unsigned>(t);
    for (int t = 0; t < j; ++t) den *= 2u;
    NormalizationConstant c;
    c.j = j;
    c.den_lo = static_cast<unsigned long long>(den);
    c.den_hi = static_cast<unsigned long long>(den >> 64);
    c.pi_power = -j;
    c.i_power = ((-j) % 4 + 4) % 4;
    static const Complex kIPow[4] = {Complex(1, 0), Complex(0, 1), Complex(-1, 0), Complex(0, -1)};
    const double den_d = static_cast<double>(den);
    c.value = kIPow[c.i_power] * std::pow(std::numbers::pi, c.pi_power) / den_d;
    return c;
  }

  std::string rational() const {
    if (den_hi == 0) return "1/" + std::to_string(den_lo);
    // Decimal print of the 128-bit denominator.
    unsigned __int128 v = (static_cast<unsigned __int128>(den_hi) << 64) | den_lo;
    std::string digits;
    while (v != 0) {
      digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
      v /= 10;
    }
    return "1/" + digits;
  }

  std::string describe() const {
    static const char* kIPowText[4] = {"1", "i", "-1", "-i"};
    return "(" + rational() + ") * pi^(" + std::to_string(pi_power) + ") * (" +
           kIPowText[i_power] + ")";
  }

  bool operator==(const NormalizationConstant& o) const {
    return den_lo == o.den_lo && den_hi == o.den_hi && pi_power == o.pi_power &&
           i_power == o.i_power;
  }
};

/// A chart-wise GL(m, C)-valued map on the integration domain: given a
/// grid node it returns sigma and its partial derivatives along every
/// chart direction. Implementations must be reentrant; the integrator
/// calls eval_jet concurrently from several workers.
class SymbolMap {
 public:
  virtual ~SymbolMap() = default;
  virtual int matrix_dim() const = 0;
  virtual void eval_jet(const GridNode& node, MatrixJet& out) const = 0;
};

struct IntegrationOptions {
  int resolution = 24;
  int max_refinements = 3;
  double snap_tolerance = 0.05;
  double imag_tolerance = 1e-3;
  double condition_cap = 1e12;
  int threads = 0;  // 0: hardware concurrency
};

/// Degree / pairing outcome. `raw` is the normalized integral at the
/// finest resolution reached; `snapped` is present only when raw sits
/// within the snap tolerances of an integer.
struct DegreeResult {
  Complex raw{};
  std::optional<long long> snapped;
  double abs_error_estimate = 0.0;
  double imag_residual = 0.0;
  std::vector<int> resolutions_used;
  std::vector<std::pair<int, Complex>> trace;  // (resolution, raw) ladder
  int orientation_sign = 1;
  NormalizationConstant constant;
  bool converged = false;
};

namespace detail {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline Complex tree_sum(std::span<const Complex> v) {
  if (v.size() == 0) return Complex(0, 0);
  if (v.size() == 1) return v[0];
  if (v.size() == 2) return v[0] + v[1];
  const size_t half = v.size() / 2;
  return tree_sum(v.subspan(0, half)) + tree_sum(v.subspan(half));
}

inline std::string node_witness(const GridNode& node) {
  std::string s = "chart point (";
  for (size_t i = 0; i < node.angles.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", node.angles[i]);
    s += (i == 0 ? "" : ", ");
    s += buf;
  }
  return s + ")";
}

}  // namespace detail

/// Integral of the top coefficient of tr((sigma^-1 d sigma)^D) over the
/// grid, with the grid's orientation sign applied. Node contributions are
/// accumulated per fixed-size block in grid order and the block sums are
/// combined by pairwise tree summation, so the result is bit-stable for
/// any worker count.
inline Complex integrate_top_form(const SymbolMap& map, const QuadratureGrid& grid,
                                  const IntegrationOptions& opts = {}) {
  constexpr std::uint64_t kBlock = 4096;
  const std::uint64_t n = grid.size();
  const std::uint64_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<Complex> block_sums(static_cast<size_t>(nblocks), Complex(0, 0));

  std::atomic<std::uint64_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    GridNode node;
    MatrixJet jet;
    TopFormWorkspace ws;
    try {
      for (;;) {
        const std::uint64_t b = next.fetch_add(1);
        if (b >= nblocks) return;
        const std::uint64_t lo = b * kBlock;
        const std::uint64_t hi = std::min(n, lo + kBlock);
        Complex acc(0, 0);
        for (std::uint64_t idx = lo; idx < hi; ++idx) {
          grid.load_node(idx, node);
          map.eval_jet(node, jet);
          MaurerCartanFrame fr =
              frame(jet, opts.condition_cap, detail::node_witness(node));
          acc += node.box_weight * top_form(fr, ws);
        }
        block_sums[static_cast<size_t>(b)] = acc;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const int nthreads = static_cast<int>(std::min<std::uint64_t>(
      static_cast<std::uint64_t>(detail::resolve_threads(opts.threads)),
      nblocks ? nblocks : 1));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  return static_cast<double>(grid.orientation_sign) *
         detail::tree_sum(std::span<const Complex>(block_sums.data(), block_sums.size()));
}

namespace detail {

template <typename GridFactory>
DegreeResult snap_ladder(const SymbolMap& map, const NormalizationConstant& constant,
                         Complex constant_sign, const GridFactory& make_grid,
                         const IntegrationOptions& opts) {
  DegreeResult res;
  res.constant = constant;

  auto raw_at = [&](int resolution) {
    const QuadratureGrid grid = make_grid(resolution);
    res.orientation_sign = grid.orientation_sign;
    const Complex integral = integrate_top_form(map, grid, opts);
    return constant_sign * constant.value * integral;
  };

  auto next_res = [](int r) { return std::max(r + 1, static_cast<int>(std::llround(1.5 * r))); };

  int r_coarse = opts.resolution;
  Complex raw_coarse = raw_at(r_coarse);
  res.resolutions_used.push_back(r_coarse);
  res.trace.emplace_back(r_coarse, raw_coarse);

  for (int round = 0; round <= opts.max_refinements; ++round) {
    const int r_fine = next_res(r_coarse);
    const Complex raw_fine = raw_at(r_fine);
    res.resolutions_used.push_back(r_fine);
    res.trace.emplace_back(r_fine, raw_fine);

    res.raw = raw_fine;
    res.abs_error_estimate = std::abs(raw_fine - raw_coarse);
    res.imag_residual = std::abs(raw_fine.imag());
    const long long nearest = std::llround(raw_fine.real());
    if (std::abs(raw_fine - Complex(static_cast<double>(nearest), 0.0)) <= opts.snap_tolerance &&
        res.imag_residual <= opts.imag_tolerance) {
      res.snapped = nearest;
      res.converged = true;
      return res;
    }
    r_coarse = r_fine;
    raw_coarse = raw_fine;
  }
  res.converged = false;  // report says "refine"
  return res;
}

}  // namespace detail

/// deg(sigma; Sigma): the normalized integral of tr((sigma^-1 d sigma)^(q+2n-1))
/// over S^q x S^(2n-1) with the constant at j = q/2 + n. Evaluated at the
/// requested resolution and at 1.5x that (rounded); the difference is the
/// error estimate. If the result does not snap to an integer within the
/// tolerances the resolution ladder grows by 1.5x per round, up to
/// max_refinements extra rounds.
inline DegreeResult degree(const SymbolMap& map, int q, int n,
                           const IntegrationOptions& opts = {}) {
  if (q % 2 != 0 || q < 0) throw Error("degree: q must be even and >= 0");
  if (n < 1) throw Error("degree: n must be >= 1");
  const NormalizationConstant c = NormalizationConstant::fedosov(q / 2 + n);
  return detail::snap_ladder(
      map, c, Complex(1, 0),
      [&](int r) { return QuadratureGrid::product(q, n, r); }, opts);
}

/// Single term of the Fedosov sum: (j-1)!/((2 pi i)^j (2j-1)!) times the
/// integral of tr((G^-1 dG)^(2j-1)) over a sphere of dimension 2j-1.
/// Returns the positive-constant value; the global minus sign of the
/// Fedosov series is applied by chern_pairing.
inline DegreeResult odd_trace_integral(const SymbolMap& map, int j,
                                       const IntegrationOptions& opts = {}) {
  if (j < 1) throw Error("odd_trace_integral: j must be >= 1");
  const NormalizationConstant c = NormalizationConstant::fedosov(j);
  return detail::snap_ladder(
      map, c, Complex(1, 0),
      [&](int r) { return QuadratureGrid::sphere(2 * j - 1, r); }, opts);
}

/// <ch_{q/2}(Ind S), [S^q]> via the Fedosov formula: the single surviving
/// term j = n + q/2 of the series (every other term has the wrong form
/// degree against [S^q]), including the series' leading minus sign. Under
/// the conventions recorded in reports this equals -degree(sigma, q, n).
inline DegreeResult chern_pairing(const SymbolMap& map, int q, int n,
                                  const IntegrationOptions& opts = {}) {
  if (q % 2 != 0 || q < 0) throw Error("chern_pairing: q must be even and >= 0");
  if (n < 1) throw Error("chern_pairing: n must be >= 1");
  const NormalizationConstant c = NormalizationConstant::fedosov(q / 2 + n);
  return detail::snap_ladder(
      map, c, Complex(-1, 0),
      [&](int r) { return QuadratureGrid::product(q, n, r); }, opts);
}

}  // namespace symdeg
