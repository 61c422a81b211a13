#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>

#include "symdeg/errors.hpp"

namespace symdeg {

using Complex = std::complex<double>;

/// Upper bound on simultaneous differentiation directions. The chart
/// dimension q + 2n - 1 stays well below this for every supported domain.
inline constexpr int kMaxPartials = 12;

/// Forward-mode dual number over the complex field: a value plus one
/// partial derivative per active direction. Directions are positional;
/// all duals mixed in one computation must agree on `n`.
struct Dual {
  Complex v{};
  int n = 0;
  std::array<Complex, kMaxPartials> d{};

  Dual() = default;
  explicit Dual(Complex value, int directions = 0) : v(value), n(directions) {}

  /// Constant: no derivative in any direction.
  static Dual constant(Complex value, int directions) {
    return Dual(value, directions);
  }

  /// Seed for the variable carried by `direction`.
  static Dual variable(Complex value, int directions, int direction) {
    Dual r(value, directions);
    r.d[static_cast<size_t>(direction)] = Complex(1.0, 0.0);
    return r;
  }

  bool has_partials() const { return n > 0; }
};

inline Dual operator+(const Dual& a, const Dual& b) {
  Dual r(a.v + b.v, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}

inline Dual operator-(const Dual& a, const Dual& b) {
  Dual r(a.v - b.v, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}

inline Dual operator-(const Dual& a) {
  Dual r(-a.v, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = -a.d[i];
  return r;
}

inline Dual operator*(const Dual& a, const Dual& b) {
  Dual r(a.v * b.v, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

inline Dual operator*(double s, const Dual& a) {
  Dual r(s * a.v, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = s * a.d[i];
  return r;
}

inline Dual operator/(const Dual& a, const Dual& b) {
  const Complex q = a.v / b.v;
  Dual r(q, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = (a.d[i] - q * b.d[i]) / b.v;
  return r;
}

inline Dual sin(const Dual& a) {
  const Complex s = std::sin(a.v), c = std::cos(a.v);
  Dual r(s, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = c * a.d[i];
  return r;
}

inline Dual cos(const Dual& a) {
  const Complex s = std::sin(a.v), c = std::cos(a.v);
  Dual r(c, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = -s * a.d[i];
  return r;
}

inline Dual exp(const Dual& a) {
  const Complex e = std::exp(a.v);
  Dual r(e, a.n);
  for (int i = 0; i < r.n; ++i) r.d[i] = e * a.d[i];
  return r;
}

inline Dual sqrt(const Dual& a) {
  const Complex s = std::sqrt(a.v);
  Dual r(s, a.n);
  if (r.n > 0) {
    const Complex g = 0.5 / s;
    for (int i = 0; i < r.n; ++i) r.d[i] = g * a.d[i];
  }
  return r;
}

/// Complex conjugation. Only legal on subexpressions that do not depend
/// on an active variable; the expression evaluator enforces that, so the
/// partials here are exact (all zero).
inline Dual conj(const Dual& a) {
  Dual r(std::conj(a.v), a.n);
  return r;
}

/// Integer power by binary exponentiation on the value and the chain rule
/// e*v^(e-1) on the partials. 0^0 evaluates to 1.
inline Dual pow_int(const Dual& a, int e) {
  auto ipow = [](Complex base, int p) {
    Complex acc(1.0, 0.0);
    for (int k = 0; k < p; ++k) acc *= base;
    return acc;
  };
  Dual r;
  r.n = a.n;
  if (e == 0) {
    r.v = Complex(1.0, 0.0);
    return r;
  }
  if (e > 0) {
    r.v = ipow(a.v, e);
    if (a.n > 0) {
      const Complex g = static_cast<double>(e) * ipow(a.v, e - 1);
      for (int i = 0; i < a.n; ++i) r.d[i] = g * a.d[i];
    }
    return r;
  }
  if (a.v == Complex(0.0, 0.0))
    throw EvalError("zero raised to a negative power");
  r.v = Complex(1.0, 0.0) / ipow(a.v, -e);
  if (a.n > 0) {
    const Complex g = static_cast<double>(e) * r.v / a.v;
    for (int i = 0; i < a.n; ++i) r.d[i] = g * a.d[i];
  }
  return r;
}

}  // namespace symdeg
