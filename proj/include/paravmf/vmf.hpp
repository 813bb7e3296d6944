#pragma once

#include "paravmf/common.hpp"

namespace paravmf {

/// log I_v(kappa) for the modified Bessel function of the first kind.
///
/// Uses the ascending power series (log-space, with a log1p tail so that small
/// arguments keep full relative accuracy) for kappa <= max(series_cutoff, v) and
/// an asymptotic expansion beyond: the large-argument Hankel expansion for
/// v < 6, the Debye uniform expansion otherwise. Throws DomainError for negative
/// or non-finite arguments.
double log_bessel_i(double order, double kappa);

/// I_{v+1}(kappa) / I_v(kappa), evaluated with a continued fraction. In [0, 1).
double bessel_ratio(double order, double kappa);

/// log C_d(kappa) with C_d(kappa) = kappa^v / ((2 pi)^{d/2} I_v(kappa)), v = d/2 - 1.
/// kappa = 0 returns the analytic limit.
double log_norm_const(int dim, double kappa);

namespace bessel_detail {

inline constexpr double kSeriesCutoff = 12.0;
inline constexpr double kDebyeMinOrder = 6.0;

inline double series_limit(double order) { return order > kSeriesCutoff ? order : kSeriesCutoff; }

/// log(sum_j t_j / t_0) of the ascending series, t_j = (kappa/2)^{v+2j} / (j! Gamma(v+j+1)).
double log_series_tail(double order, double kappa);
double log_bessel_i_series(double order, double kappa);
double log_bessel_i_asymptotic(double order, double kappa);

}  // namespace bessel_detail

struct VmfConfig {
  int dim = 300;
  double lambda1 = 0.02;

  double order() const { return 0.5 * dim - 1.0; }
  void validate() const;
};

struct VmfEvaluation {
  double loss = 0.0;
  Vector grad;
  double kappa = 0.0;
};

/// Negative log-likelihood of the unit target `target` under a vMF distribution
/// whose mean direction and concentration are given by `pred`:
///   loss = -log C_d(|pred|) - pred . target + lambda1 |pred|
/// The gradient with respect to `pred` is R_v(k) pred/k - target + lambda1 pred/k.
VmfEvaluation nll_vmf(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target,
                      const VmfConfig& cfg);

/// Loss only; skips the gradient work.
double nll_vmf_value(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target,
                     const VmfConfig& cfg);

}  // namespace paravmf
