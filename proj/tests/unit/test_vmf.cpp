#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "paravmf/vmf.hpp"

using namespace paravmf;

TEST_CASE("log_bessel_i reproduces tabulated values") {
  CHECK(std::exp(log_bessel_i(0, 1.0)) == doctest::Approx(1.2660658777520082).epsilon(1e-14));
  CHECK(std::exp(log_bessel_i(1, 1.0)) == doctest::Approx(0.5651591039924851).epsilon(1e-14));
  CHECK(std::exp(log_bessel_i(0, 10.0)) == doctest::Approx(2815.716628466254).epsilon(1e-13));
  // I_{1/2}(x) = sqrt(2 / (pi x)) sinh x
  for (double x : {0.5, 3.0, 30.0, 300.0}) {
    const double expected = 0.5 * std::log(2.0 / (M_PI * x)) + x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0);
    CHECK(log_bessel_i(0.5, x) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("log_bessel_i at zero and its domain") {
  CHECK(log_bessel_i(0, 0) == 0.0);
  CHECK(std::isinf(log_bessel_i(3, 0)));
  CHECK_THROWS_AS(log_bessel_i(-1, 1), DomainError);
  CHECK_THROWS_AS(log_bessel_i(1, -1), DomainError);
  CHECK_THROWS_AS(log_bessel_i(1, std::nan("")), DomainError);
}

TEST_CASE("log_bessel_i agrees with the series oracle") {
  for (double v : {0.0, 1.0, 7.0, 149.0}) {
    for (double k : {1e-6, 1e-3, 0.1, 1.0, 5.0, 11.9, 12.1, 20.0, 50.0}) {
      CAPTURE(v);
      CAPTURE(k);
      const double ref = oracle::log_bessel_series(v, k);
      CHECK(std::abs(log_bessel_i(v, k) - ref) <= 1e-8 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("large arguments stay finite") {
  for (double v : {0.0, 2.0, 149.0}) {
    for (double k : {1e3, 1e5, 1e8}) {
      CHECK(std::isfinite(log_bessel_i(v, k)));
      CHECK(log_bessel_i(v, k) < k);
    }
  }
}

TEST_CASE("bessel_ratio matches the ratio of Bessel values") {
  for (double v : {0.0, 1.0, 7.0, 149.0}) {
    for (double k : {1e-3, 0.5, 5.0, 50.0, 500.0}) {
      const double direct = std::exp(log_bessel_i(v + 1, k) - log_bessel_i(v, k));
      CHECK(bessel_ratio(v, k) == doctest::Approx(direct).epsilon(1e-9));
      CHECK(bessel_ratio(v, k) < 1.0);
    }
  }
  CHECK(bessel_ratio(3, 0) == 0.0);
}

TEST_CASE("log_norm_const matches the closed form in three dimensions") {
  // C_3(k) = k / (4 pi sinh k), C_3(0) = 1 / (4 pi)
  CHECK(log_norm_const(3, 0.0) == doctest::Approx(-std::log(4 * M_PI)).epsilon(1e-14));
  for (double k : {1e-4, 0.3, 2.0, 11.0, 13.0, 80.0}) {
    const double expected = std::log(k) - std::log(4 * M_PI) - (k + std::log1p(-std::exp(-2 * k)) - std::log(2.0));
    CHECK(log_norm_const(3, k) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(log_norm_const(1, 1.0), DomainError);
}

TEST_CASE("negative log normalizer increases with kappa") {
  for (int d : {2, 4, 300}) {
    double prev = -log_norm_const(d, 0.0);
    for (int i = 1; i <= 200; ++i) {
      const double cur = -log_norm_const(d, 0.25 * i);
      CHECK(cur > prev);
      prev = cur;
    }
  }
}

TEST_CASE("nll_vmf gradient matches finite differences") {
  gen::Rng rng(7);
  for (int d : {4, 16, 300}) {
    VmfConfig cfg{d, 0.02};
    for (int trial = 0; trial < 10; ++trial) {
      const double kappa = gen::log_uniform(rng, 1e-2, 200);
      const Vector pred = kappa * gen::unit(rng, d);
      const Vector target = gen::unit(rng, d);
      const VmfEvaluation ev = nll_vmf(pred, target, cfg);
      CHECK(ev.loss == doctest::Approx(nll_vmf_value(pred, target, cfg)).epsilon(1e-15));
      Vector fd(d);
      const double h = 1e-5 * std::max(1.0, kappa);
      for (int i = 0; i < d; ++i) {
        Vector p = pred, m = pred;
        p[i] += h;
        m[i] -= h;
        fd[i] = (nll_vmf_value(p, target, cfg) - nll_vmf_value(m, target, cfg)) / (2 * h);
      }
      CHECK((ev.grad - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("nll_vmf rejects malformed inputs") {
  VmfConfig cfg{4, 0.02};
  Vector target = Vector::Unit(4, 0);
  CHECK_THROWS_AS(nll_vmf(Vector::Ones(3), Vector::Unit(3, 0), cfg), DomainError);
  CHECK_THROWS_AS(nll_vmf(Vector::Ones(4), 2 * target, cfg), DomainError);
  Vector bad = Vector::Ones(4);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(nll_vmf(bad, target, cfg), DomainError);
  // The zero vector has a defined loss and a subgradient.
  const VmfEvaluation zero = nll_vmf(Vector::Zero(4), target, cfg);
  CHECK(std::isfinite(zero.loss));
  CHECK(zero.grad.isApprox(-target));
}

TEST_CASE("loss is lowest when the prediction points at the target") {
  VmfConfig cfg{16, 0.02};
  gen::Rng rng(3);
  const Vector target = gen::unit(rng, 16);
  const double aligned = nll_vmf_value(5.0 * target, target, cfg);
  for (int i = 0; i < 20; ++i) CHECK(nll_vmf_value(5.0 * gen::unit(rng, 16), target, cfg) > aligned);
}
