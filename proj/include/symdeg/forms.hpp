#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "symdeg/linalg.hpp"

namespace symdeg {

/// The Maurer-Cartan frame at a node: A_i = sigma^-1 d sigma / d u_i for
/// each chart direction u_i of the integration domain.
struct MaurerCartanFrame {
  std::vector<Mat> a;
};

/// Build the frame from a sigma jet. Inversion is partial-pivot LU with
/// condition monitoring; a near-singular sigma means the input violates
/// ellipticity at this node and integration must stop with the witness.
inline MaurerCartanFrame frame(const MatrixJet& sigma, double condition_cap,
                               const std::string& where) {
  const Mat inv = invert_monitored(sigma.value, condition_cap, where);
  MaurerCartanFrame f;
  f.a.resize(sigma.partials.size());
  for (size_t i = 0; i < sigma.partials.size(); ++i) f.a[i] = inv * sigma.partials[i];
  return f;
}

/// Reusable buffers for top_form.
struct TopFormWorkspace {
  std::vector<Mat> table;
};

/// Coefficient of du_1 ^ ... ^ du_D in tr((sigma^-1 d sigma)^D), i.e. the
/// fully antisymmetrized trace
///   sum_{pi in S_D} sign(pi) tr(A_{pi(1)} ... A_{pi(D)}).
///
/// Computed by subset dynamic programming instead of permutation
/// enumeration: with
///   P(S) = sum over orderings tau of S, sign(tau) A_{tau(1)} ... A_{tau(|S|)},
/// expanding on the leading factor gives
///   P(S) = sum_{j in S} (-1)^{rank of j in S} A_j P(S - {j}),
/// and the answer is tr(P({1..D})). Cost O(2^D D m^3) versus O(D! D m^3).
inline Complex top_form(std::span<const Mat> a, TopFormWorkspace& ws) {
  const int d = static_cast<int>(a.size());
  if (d == 0) return Complex(0.0, 0.0);
  const int m = static_cast<int>(a[0].rows());
  if (d > 20) throw Error("top_form: dimension too large for subset DP");
  const std::uint32_t full = (d == 32) ? 0xffffffffu : ((1u << d) - 1u);
  ws.table.resize(static_cast<size_t>(full) + 1);
  ws.table[0] = Mat::Identity(m, m);
  for (std::uint32_t s = 1; s <= full; ++s) {
    Mat& acc = ws.table[s];
    acc.setZero(m, m);
    for (int j = 0; j < d; ++j) {
      const std::uint32_t bit = 1u << j;
      if ((s & bit) == 0) continue;
      const int rank = std::popcount(s & (bit - 1u));
      if (rank % 2 == 0)
        acc.noalias() += a[static_cast<size_t>(j)] * ws.table[s ^ bit];
      else
        acc.noalias() -= a[static_cast<size_t>(j)] * ws.table[s ^ bit];
    }
  }
  return ws.table[full].trace();
}

inline Complex top_form(const MaurerCartanFrame& f, TopFormWorkspace& ws) {
  return top_form(std::span<const Mat>(f.a.data(), f.a.size()), ws);
}

}  // namespace symdeg
