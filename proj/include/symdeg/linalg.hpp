#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "symdeg/dual.hpp"
#include "symdeg/errors.hpp"

namespace symdeg {

using Mat = Eigen::MatrixXcd;

/// A matrix value together with its partial derivatives along the chart
/// directions of the enclosing integration domain.
struct MatrixJet {
  Mat value;
  std::vector<Mat> partials;

  void resize(int m, int directions) {
    value.setZero(m, m);
    partials.resize(static_cast<size_t>(directions));
    for (auto& p : partials) p.setZero(m, m);
  }

  int directions() const { return static_cast<int>(partials.size()); }

  static MatrixJet identity(int m, int directions) {
    MatrixJet j;
    j.resize(m, directions);
    j.value = Mat::Identity(m, m);
    return j;
  }
};

/// Inverse with 1-norm condition monitoring. `where` names the evaluation
/// point for the error witness.
inline Mat invert_monitored(const Mat& a, double condition_cap, const std::string& where,
                            double* condition_out = nullptr) {
  Eigen::PartialPivLU<Mat> lu(a);
  const Mat inv = lu.inverse();
  const double cond = a.cwiseAbs().colwise().sum().maxCoeff() *
                      inv.cwiseAbs().colwise().sum().maxCoeff();
  if (condition_out != nullptr) *condition_out = cond;
  if (!std::isfinite(cond) || cond > condition_cap)
    throw SingularMatrixError("matrix numerically singular (condition " +
                                  std::to_string(cond) + " above cap) at " + where,
                              cond);
  return inv;
}

/// Product rule: (AB)' = A'B + AB'.
inline MatrixJet multiply(const MatrixJet& a, const MatrixJet& b) {
  MatrixJet r;
  r.value = a.value * b.value;
  r.partials.resize(a.partials.size());
  for (size_t i = 0; i < a.partials.size(); ++i)
    r.partials[i] = a.partials[i] * b.value + a.value * b.partials[i];
  return r;
}

/// Jet of the inverse: (A^-1)' = -A^-1 A' A^-1.
inline MatrixJet inverse_jet(const MatrixJet& a, double condition_cap, const std::string& where) {
  MatrixJet r;
  r.value = invert_monitored(a.value, condition_cap, where);
  r.partials.resize(a.partials.size());
  for (size_t i = 0; i < a.partials.size(); ++i)
    r.partials[i] = -r.value * a.partials[i] * r.value;
  return r;
}

}  // namespace symdeg
