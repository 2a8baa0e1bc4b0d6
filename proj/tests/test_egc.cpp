#include <doctest.h>

#include "vns/characteristics.hpp"
#include "vns/egc.hpp"
#include "vns/kinetic.hpp"
#include "vns/oracle.hpp"

#include <cmath>

using namespace vns;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidConfig;
}

}  // namespace

TEST_CASE("t0 values") {
  CHECK(t0(1.0, 1.0, 1.0) == 3.0);
  CHECK(t0(1.0, 1.0, 2.0) == 2.0);
  CHECK(t0(1e-12, 1e-12, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("exit sets") {
  SUBCASE("value at t0") {
    for (double g : {0.5, 1.0, 2.0, 9.81}) {
      const double s = 1.0 + 2.0 / g;
      const EgcSets e = egc_sets(s, g);
      CHECK(e.L == doctest::Approx(0.5 * g * std::exp(-s)).epsilon(1e-12));
      CHECK(e.L > 0.0);
      CHECK(e.R > 0.0);
    }
  }
  SUBCASE("g = 1, s = 3") {
    const EgcSets e = egc_sets(3.0, 1.0);
    CHECK(e.L == doctest::Approx(0.5 * (2.0 + std::exp(-3.0)) - 1.0).epsilon(1e-14));
    CHECK(e.L == doctest::Approx(0.0249).epsilon(1e-2));
    CHECK(e.R == doctest::Approx(0.5 * (3.0 / (1.0 - std::exp(-3.0)) - 1.0) - 1.0).epsilon(1e-14));
  }
  SUBCASE("linear growth") {
    const double g = 1.5;
    const EgcSets e = egc_sets(1e6, g);
    CHECK(e.L / 1e6 == doctest::Approx(g / 2).epsilon(1e-5));
    CHECK(e.R / 1e6 == doctest::Approx(g / 2).epsilon(1e-5));
  }
  SUBCASE("domain") {
    CHECK(code_of([] { egc_sets(2.9, 1.0); }) == Errc::DomainError);
    const EgcSets h = shifted_egc_sets(3.7, 1.0);
    const EgcSets r = egc_sets(3.2, 1.0);
    CHECK(h.L == r.L);
    CHECK(h.R == r.R);
  }
  SUBCASE("positivity and comparison ratio on a dense grid") {
    for (double g : {0.5, 1.0, 4.0}) {
      const double s0 = 1.0 + 2.0 / g;
      const EgcSets e0 = egc_sets(s0, g);
      const double ratio0 = (1 + s0) / (1 + e0.L);
      for (int i = 1; i <= 2000; ++i) {
        const double s = s0 + 0.01 * i;
        const EgcSets e = egc_sets(s, g);
        CHECK(e.L > 0.0);
        CHECK(e.R > 0.0);
        CHECK((1 + s) / (1 + e.L) <= ratio0 * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("kappa values") {
  CHECK(kappa(0.5, 1.0) == doctest::Approx((std::exp(-0.5) - 0.5) / 2).epsilon(1e-14));
  CHECK(kappa(0.5, 1.0) == doctest::Approx(0.05327).epsilon(1e-4));
  CHECK(kappa(0.5, 9.81) == doctest::Approx(0.5226).epsilon(1e-3));
  // quadratic vanishing
  for (double a : {1e-2, 1e-3, 1e-4, 1e-6}) CHECK(kappa(a, 1.0) / (a * a) == doctest::Approx(0.25).epsilon(0.01));
  CHECK(kappa(2e-3, 1.0) == doctest::Approx((std::exp(-2e-3) + 2e-3 - 1) / 2).epsilon(1e-9));
}

TEST_CASE("corner exit time is the gravity-only supremum") {
  for (double g : {1.0, 2.0}) {
    const double c = gravity_corner_sup(1.0, 1.0, g);
    CHECK(c == doctest::Approx(oracle::reference_exit_time(1.0, 1.0, g, 1e-4)).epsilon(1e-8));
    CHECK(c < t0(1.0, 1.0, g));
  }
}

TEST_CASE("Halton points lie in the unit cube and are distinct") {
  const auto a = halton6(1);
  CHECK(a[0] == 0.5);
  CHECK(a[1] == doctest::Approx(1.0 / 3.0));
  CHECK(a[5] == doctest::Approx(1.0 / 13.0));
  const auto b = halton6(2);
  CHECK(b[0] == 0.25);
  for (std::uint64_t n = 1; n < 500; ++n)
    for (double x : halton6(n)) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
}

TEST_CASE("gravity-only EGC") {
  EgcOptions opt;
  const EgcQuery q{1.0, 1.0, 3.0};
  const EgcReport r = verify_egc(q, Mode::gravity_only, VelocitySampler::zero(), 20000, 1, opt);
  CHECK(r.satisfied);
  CHECK(r.max_exit_time < 3.0);
  CHECK(r.margin == doctest::Approx(3.0 - r.max_exit_time));
  CHECK(r.sample_count == 20000);
  CHECK(r.unexited == 0);
  CHECK(r.budget_used == 0.0);
  const double sup = gravity_corner_sup(1.0, 1.0, 1.0);
  CHECK(r.max_exit_time <= sup);
  // The sampled maximum approaches the corner value as the sample grows.
  double prev = 0.0;
  for (long n : {100L, 1000L, 10000L, 100000L}) {
    const EgcReport s = verify_egc(q, Mode::gravity_only, VelocitySampler::zero(), n, 1, opt);
    CHECK(s.max_exit_time >= prev);
    CHECK(s.max_exit_time <= sup);
    prev = s.max_exit_time;
  }
  const EgcReport coarse = verify_egc(q, Mode::gravity_only, VelocitySampler::zero(), 1000, 1, opt);
  CHECK(sup - prev < 0.5 * (sup - coarse.max_exit_time));
  CHECK(sup - prev < 0.05);
  // A horizon below the supremum fails.
  const EgcReport f = verify_egc(EgcQuery{1.0, 1.0, 2.0}, Mode::gravity_only,
                                 VelocitySampler::zero(), 5000, 1, opt);
  CHECK_FALSE(f.satisfied);
}

TEST_CASE("perturbed EGC under a small prescribed field") {
  const double g = 1.0;
  PrescribedFieldSpec s;
  s.budget = kappa(0.5, g);
  s.budget_kind = "u";
  s.horizon = t0(1.0, 1.0, g) + 0.5;
  EgcOptions opt;
  const PrescribedField f(s, opt.domain);
  CHECK(f.budget_u(s.horizon) == doctest::Approx(kappa(0.5, g)).epsilon(1e-9));
  const EgcReport r =
      verify_egc(EgcQuery{1.0, 1.0, s.horizon}, Mode::prescribed_field, f.sampler(), 4000, 2, opt);
  CHECK(r.satisfied);
  CHECK(r.budget_used <= kappa(0.5, g) * (1 + 1e-6));
}

TEST_CASE("adversarial upward field is only reported") {
  EgcOptions opt;
  const VelocitySampler up = VelocitySampler::constant(Vec3(0, 0, 2.0));
  const EgcReport r = verify_egc(EgcQuery{1.0, 1.0, 3.0}, Mode::prescribed_field, up, 200, 3, opt);
  CHECK_FALSE(r.satisfied);
  CHECK(r.unexited > 0);
}

TEST_CASE("moment decay prediction") {
  const Domain d{2.0, 2.0, 32.0};
  InitialDataSpec p;
  p.family = DataFamily::poly_decay;
  p.q = 8.0;
  p.m = 3.0;
  const double g = 1.0;
  SUBCASE("inactive up to T0") {
    const MomentDecayBound b = predicted_moment_decay(p, d, 3.5, 2, 2, 8, 0, g);
    CHECK_FALSE(b.active);
  }
  SUBCASE("exponent hypothesis") {
    CHECK(code_of([&] { predicted_moment_decay(p, d, 5.0, 2, 2, 5.0, 0, g); }) ==
          Errc::ExponentViolation);
  }
  SUBCASE("second term vanishes for compact vertical support") {
    InitialDataSpec box;
    box.L = 0.5;
    box.R = 100.0;
    const MomentDecayBound b = predicted_moment_decay(box, d, 5.0, 2, 2, 8, 0, g);
    REQUIRE(b.active);
    REQUIRE(b.L_t > box.L);
    REQUIRE(b.R_t < box.R);
    const double first = functional_N(box, d, 8) / std::pow(1 + b.R_t, 2);
    CHECK(b.bound_point == doctest::Approx(first).epsilon(1e-12));
  }
  SUBCASE("rate (1+t)^-2") {
    const MomentDecayBound a = predicted_moment_decay(p, d, 100.0, 2, 2, 8, 0, g);
    const MomentDecayBound b = predicted_moment_decay(p, d, 1000.0, 2, 2, 8, 0, g);
    const double slope = std::log(b.bound_point / a.bound_point) / std::log(1001.0 / 101.0);
    CHECK(slope == doctest::Approx(-2.0).epsilon(0.05));
    CHECK(a.L_t == doctest::Approx(shifted_egc_sets(100.0, g).L));
    // (1 + x3^2) / (1 + x3^3) is not integrable, so the L^1 bound is infinite.
    CHECK(std::isinf(a.bound_Lr));
  }
}

TEST_CASE("split representation after the EGC time") {
  InitialDataSpec s;
  s.family = DataFamily::poly_decay;
  s.Lmax = 8.0;
  const Domain d{2.0, 2.0, 8.0};
  ParticleEnsemble e = sample_initial(s, d, 5000, 4);
  AdvanceOptions opt;
  opt.gravity_closed_form = true;
  double t = 0.0;
  for (int k = 0; k < 40; ++k) {
    advance_ensemble(e, t, 0.2, VelocitySampler::zero(), opt);
    t += 0.2;
    if (t > 3.5) CHECK(split_representation_violations(e, t, 1.0) == 0);
  }
  CHECK(e.alive_count() > 0);
}
