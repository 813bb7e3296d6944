#include "paravmf/vmf.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace paravmf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kDebyeTerms = 12;

void check_args(double order, double kappa) {
  if (!std::isfinite(order) || order < 0.0) {
    throw DomainError("bessel order must be finite and >= 0");
  }
  if (!std::isfinite(kappa) || kappa < 0.0) {
    throw DomainError("bessel argument must be finite and >= 0");
  }
}

// Coefficients of the Debye polynomials U_k(p), built from
//   U_{k+1}(p) = p^2 (1 - p^2) U_k'(p) / 2 + 1/8 * int_0^p (1 - 5 t^2) U_k(t) dt.
// U_k has degree 3k.
struct DebyePolynomials {
  std::array<std::vector<double>, kDebyeTerms + 1> coeff;

  DebyePolynomials() {
    coeff[0] = {1.0};
    for (int k = 0; k < kDebyeTerms; ++k) {
      const auto& u = coeff[k];
      std::vector<double> next(u.size() + 3, 0.0);
      for (std::size_t i = 1; i < u.size(); ++i) {
        const double du = static_cast<double>(i) * u[i];  // coefficient of p^{i-1}
        next[i + 1] += 0.5 * du;
        next[i + 3] -= 0.5 * du;
      }
      for (std::size_t i = 0; i < u.size(); ++i) {
        next[i + 1] += u[i] / (8.0 * static_cast<double>(i + 1));
        next[i + 3] -= 5.0 * u[i] / (8.0 * static_cast<double>(i + 3));
      }
      coeff[k + 1] = std::move(next);
    }
  }

  double eval(int k, double p) const {
    const auto& c = coeff[k];
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * p + *it;
    return acc;
  }
};

const DebyePolynomials& debye() {
  static const DebyePolynomials polys;
  return polys;
}

double log_bessel_hankel(double order, double x) {
  const double mu = 4.0 * order * order;
  double term = 1.0;
  double sum = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 500; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    const double mag = std::abs(term);
    if (mag == 0.0) break;
    // Past the order the terms shrink until the expansion starts to diverge.
    if (k > order && mag >= prev) break;
    sum += term;
    if (mag < 1e-17 * std::abs(sum)) break;
    prev = mag;
  }
  return x - 0.5 * (kLog2Pi + std::log(x)) + std::log(sum);
}

double log_bessel_debye(double order, double x) {
  const double z = x / order;
  const double root = std::sqrt(1.0 + z * z);
  const double p = 1.0 / root;
  const double eta = root + std::log(z / (1.0 + root));
  double sum = 0.0;
  double inv_pow = 1.0;
  for (int k = 0; k <= kDebyeTerms; ++k) {
    sum += debye().eval(k, p) * inv_pow;
    inv_pow /= order;
  }
  return order * eta - 0.5 * (kLog2Pi + std::log(order)) - 0.25 * std::log1p(z * z) + std::log(sum);
}

}  // namespace

namespace bessel_detail {

double log_series_tail(double order, double kappa) {
  const double q = 0.25 * kappa * kappa;
  // tail = exp(log_scale) * sum; `term` is expressed in the same scale.
  double sum = 0.0;
  double term = 1.0;
  double log_scale = 0.0;
  for (int j = 1; j < 100000; ++j) {
    const double ratio = q / (static_cast<double>(j) * (order + j));
    term *= ratio;
    sum += term;
    if (ratio < 1.0 && term <= 1e-17 * (sum + std::exp(-log_scale))) break;
    if (sum > 1e280) {
      log_scale += std::log(sum);
      term /= sum;
      sum = 1.0;
    }
  }
  if (log_scale == 0.0) return std::log1p(sum);
  return log_scale + std::log(sum + std::exp(-log_scale));
}

double log_bessel_i_series(double order, double kappa) {
  check_args(order, kappa);
  if (kappa == 0.0) {
    return order == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return order * std::log(0.5 * kappa) - std::lgamma(order + 1.0) + log_series_tail(order, kappa);
}

double log_bessel_i_asymptotic(double order, double kappa) {
  check_args(order, kappa);
  if (kappa == 0.0) throw DomainError("asymptotic expansion needs a positive argument");
  return order < kDebyeMinOrder ? log_bessel_hankel(order, kappa) : log_bessel_debye(order, kappa);
}

}  // namespace bessel_detail

double log_bessel_i(double order, double kappa) {
  check_args(order, kappa);
  if (kappa <= bessel_detail::series_limit(order)) {
    return bessel_detail::log_bessel_i_series(order, kappa);
  }
  return bessel_detail::log_bessel_i_asymptotic(order, kappa);
}

double bessel_ratio(double order, double kappa) {
  check_args(order, kappa);
  if (kappa == 0.0) return 0.0;
  if (kappa > 1e4) {
    return std::exp(log_bessel_i(order + 1.0, kappa) - log_bessel_i(order, kappa));
  }
  // R_v = 1 / (b_0 + 1 / (b_1 + ...)), b_j = 2 (v + 1 + j) / kappa; modified Lentz.
  constexpr double tiny = 1e-300;
  double f = 2.0 * (order + 1.0) / kappa;
  double c = f;
  double d = 0.0;
  for (int j = 1; j < 1000000; ++j) {
    const double b = 2.0 * (order + 1.0 + j) / kappa;
    d = b + d;
    if (d == 0.0) d = tiny;
    c = b + 1.0 / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / f;
}

double log_norm_const(int dim, double kappa) {
  if (dim < 2) throw DomainError("vMF dimension must be >= 2");
  const double order = 0.5 * dim - 1.0;
  check_args(order, kappa);
  const double half_dim_log2pi = 0.5 * dim * kLog2Pi;
  if (kappa <= bessel_detail::series_limit(order)) {
    // kappa^v / I_v(kappa) = 2^v Gamma(v+1) / tail, exact at kappa = 0.
    const double tail = kappa == 0.0 ? 0.0 : bessel_detail::log_series_tail(order, kappa);
    return order * std::numbers::ln2 + std::lgamma(order + 1.0) - half_dim_log2pi - tail;
  }
  return order * std::log(kappa) - half_dim_log2pi - bessel_detail::log_bessel_i_asymptotic(order, kappa);
}

void VmfConfig::validate() const {
  if (dim < 2) throw ConfigError("vMF dimension must be >= 2");
  if (!(lambda1 >= 0.0)) throw ConfigError("vMF lambda1 must be >= 0");
}

namespace {

double checked_norm(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target,
                    const VmfConfig& cfg) {
  if (pred.size() != cfg.dim || target.size() != cfg.dim) {
    throw DomainError("vMF vector size does not match the configured dimension");
  }
  if (!pred.allFinite()) throw DomainError("vMF prediction is not finite");
  if (std::abs(target.norm() - 1.0) > 1e-6) throw DomainError("vMF target must be unit-normalized");
  return pred.norm();
}

}  // namespace

double nll_vmf_value(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target,
                     const VmfConfig& cfg) {
  const double kappa = checked_norm(pred, target, cfg);
  return -log_norm_const(cfg.dim, kappa) - pred.dot(target) + cfg.lambda1 * kappa;
}

VmfEvaluation nll_vmf(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target,
                      const VmfConfig& cfg) {
  VmfEvaluation out;
  out.kappa = checked_norm(pred, target, cfg);
  out.loss = -log_norm_const(cfg.dim, out.kappa) - pred.dot(target) + cfg.lambda1 * out.kappa;
  if (out.kappa == 0.0) {
    out.grad = -target;
  } else {
    const double scale = (bessel_ratio(cfg.order(), out.kappa) + cfg.lambda1) / out.kappa;
    out.grad = scale * pred - target;
  }
  return out;
}

}  // namespace paravmf
