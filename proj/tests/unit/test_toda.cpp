#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "lattice_laws/errors.hpp"
#include "lattice_laws/experiment.hpp"
#include "lattice_laws/toda.hpp"
#include "oracles.hpp"

using namespace lattice_laws;
using namespace lattice_laws::toda;

namespace {

TodaState one_site_b(double b0) {
  TodaState s = TodaState::vacuum({0, 1});
  s.b[0] = b0;
  return s;
}

TodaState random_state(int index, int window = 32) {
  experiment::ExperimentConfig c;
  c.window_size = window;
  return experiment::generate_toda_state(c, index);
}

class SilenceWarnings : public ::testing::Environment {
 public:
  void SetUp() override {
    set_warning_handler([](std::string_view) {});
  }
};

}  // namespace

TEST(TodaFlaschka, Vacuum) {
  const TodaPhase p{{0, 3}, {0, 0, 0}, {0, 0, 0}};
  const TodaState s = flaschka_forward(p);
  for (double a : s.a) EXPECT_DOUBLE_EQ(a, 0.5);
  for (double b : s.b) EXPECT_DOUBLE_EQ(b, 0.0);
}

TEST(TodaFlaschka, StretchAndMomentum) {
  const TodaPhase p{{0, 3}, {0, 2 * std::log(2.0), 0}, {3, 0, 0}};
  const TodaState s = flaschka_forward(p);
  EXPECT_NEAR(s.a_at(0), 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(s.b_at(0), -1.5);
}

TEST(TodaVectorField, VacuumIsFixed) {
  const auto r = toda_vector_field(TodaState::vacuum({-4, 9}));
  for (double v : r.da_dt.values) EXPECT_EQ(v, 0.0);
  for (double v : r.db_dt.values) EXPECT_EQ(v, 0.0);
}

TEST(TodaVectorField, HandOracles) {
  const auto r = toda_vector_field(one_site_b(1.0), {-2, 5});
  EXPECT_DOUBLE_EQ(r.da_dt[0], -0.5);
  EXPECT_DOUBLE_EQ(r.da_dt[-1], 0.5);
  for (double v : r.db_dt.values) EXPECT_EQ(v, 0.0);

  TodaState s = TodaState::vacuum({0, 1});
  s.a[0] = 1.0;
  const auto q = toda_vector_field(s, {-1, 4});
  EXPECT_DOUBLE_EQ(q.db_dt[0], 1.5);
  EXPECT_DOUBLE_EQ(q.db_dt[1], -1.5);
}

TEST(TodaEnergy, Values) {
  EXPECT_EQ(energy(TodaState::vacuum({0, 5})), 0.0);
  EXPECT_DOUBLE_EQ(energy(one_site_b(1.0)), 2.0);
  TodaState s = TodaState::vacuum({0, 1});
  s.a[0] = 1.0 / (2.0 * std::numbers::e);
  EXPECT_NEAR(energy(s), 1.135335283236613, 1e-12);
}

TEST(TodaCasimirs, Values) {
  EXPECT_DOUBLE_EQ(casimirs(one_site_b(1.0)).P, -2.0);
  TodaState s = TodaState::vacuum({0, 1});
  s.a[0] = 0.25;
  EXPECT_NEAR(casimirs(s).M, 2 * std::log(2.0), 1e-15);
}

TEST(TodaBall, Membership) {
  EXPECT_TRUE(in_ball(TodaState::vacuum({0, 3}), Kappa(1.0), 0.1));
  EXPECT_TRUE(in_ball(one_site_b(std::sqrt(0.009 / 2)), Kappa(1.0), 0.1));
  EXPECT_FALSE(in_ball(one_site_b(std::sqrt(0.011 / 2)), Kappa(1.0), 0.1));
}

TEST(TodaBall, PolicyWarnsThenThrows) {
  int warnings = 0;
  auto previous = set_warning_handler([&](std::string_view) { ++warnings; });
  // H = 0.02: outside the 0.1-ball (0.01) but inside the 0.2-ball (0.04).
  EXPECT_NO_THROW(green_table(one_site_b(0.1), Kappa(1.0), LaxSign::plus));
  EXPECT_EQ(warnings, 1);
  EXPECT_THROW(green_table(one_site_b(0.2), Kappa(1.0), LaxSign::plus), OutOfBall);
  set_warning_handler(previous);
}

TEST(TodaKappa, RejectsBelowOne) { EXPECT_THROW(Kappa(0.5), DomainError); }

TEST(TodaLaxMatrix, VacuumEntries) {
  const auto m = lax_matrix(TodaState::vacuum({0, 3}), Kappa(1.0), LaxSign::plus);
  for (int i = 0; i < m.rows(); ++i) {
    EXPECT_DOUBLE_EQ(m(i, i), std::cosh(1.0));
    if (i + 1 < m.rows()) EXPECT_DOUBLE_EQ(m(i, i + 1), -0.5);
  }
}

TEST(TodaLaxMatrix, SignedDiagonal) {
  const TodaState s = one_site_b(0.1);
  const auto m = lax_matrix(s, Kappa(1.0), LaxSign::plus, {0, 1});
  EXPECT_DOUBLE_EQ(m(0, 0), std::cosh(1.0) - 0.1);
}

TEST(TodaLaxMatrix, Involution) {
  const TodaState s = random_state(3);
  const Kappa k(2.0);
  const Eigen::MatrixXd plus = lax_matrix(s, k, LaxSign::plus).to_dense();
  const Eigen::MatrixXd minus = lax_matrix(s, k, LaxSign::minus).to_dense();
  const int n = static_cast<int>(plus.rows());
  const int first = padded_window(s, k).first;
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = ((first + i) % 2 == 0) ? 1.0 : -1.0;
  const Eigen::MatrixXd lhs = plus - 2 * std::cosh(2.0) * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd rhs = -(u.asDiagonal() * minus * u.asDiagonal());
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TodaFreeGreen, Values) {
  EXPECT_NEAR(free_green(0, 0, 1.0), 0.850918128239322, 1e-12);
  EXPECT_NEAR(free_green(3, 0, 1.0), 0.042365, 1e-6);
  EXPECT_EQ(free_green(2, 7, 1.3), free_green(7, 2, 1.3));
}

TEST(TodaGreenTable, VacuumMatchesFreeGreen) {
  const TodaState s = TodaState::vacuum({0, 8});
  for (double kv : {1.0, 2.0, 3.0}) {
    const GreenTable g = green_table(s, Kappa(kv), LaxSign::minus);
    const LatticeWindow r = report_window(s, Kappa(kv));
    for (int n = r.first; n <= r.last(); ++n)
      for (int m = r.first; m <= r.last(); ++m) EXPECT_NEAR(g(n, m), free_green(n, m, kv), 1e-11);
  }
}

TEST(TodaGreenTable, FirstOrderNeumannCorrection) {
  // L = L0 - b0 e0 e0^T for the plus sign, so G - G0 = b0 G0(., 0) G0(0, .) + O(b0^2).
  const double b0 = 0.05;
  const GreenTable g = green_table(one_site_b(b0), Kappa(1.0), LaxSign::plus);
  for (int n = -3; n <= 3; ++n)
    for (int m = -3; m <= 3; ++m) {
      const double first_order = b0 * free_green(n, 0, 1.0) * free_green(0, m, 1.0);
      EXPECT_NEAR(g(n, m) - free_green(n, m, 1.0), first_order, 2 * b0 * b0);
    }
}

TEST(TodaGreenTable, PositiveAndSymmetricOnRandomStates) {
  for (int i = 0; i < 10; ++i) {
    const TodaState s = random_state(i);
    for (double kv : {1.0, 3.0})
      for (LaxSign sg : {LaxSign::plus, LaxSign::minus}) {
        const GreenTable g = green_table(s, Kappa(kv), sg);
        EXPECT_GT(min_green_entry(g, g.window()), 0.0);
        EXPECT_LT((g.kernel().values - g.kernel().values.transpose()).cwiseAbs().maxCoeff(), 1e-15);
      }
  }
}

TEST(TodaDensities, VacuumIsZero) {
  const TodaState s = TodaState::vacuum({0, 6});
  const GreenTable g = green_table(s, Kappa(1.0), LaxSign::plus);
  for (double v : gamma_density(s, Kappa(1.0), LaxSign::plus, g).values) EXPECT_NEAR(v, 0.0, 1e-13);
  for (double v : rho_density(s, Kappa(1.0), LaxSign::plus, g).values) EXPECT_NEAR(v, 0.0, 1e-13);
}

TEST(TodaDensities, GammaMatchesDenseInverse) {
  const double b0 = 0.05;
  const double k = 1.0;
  const TodaState s = one_site_b(b0);
  const GreenTable g = green_table(s, Kappa(k), LaxSign::plus);
  const auto gamma = gamma_density(s, Kappa(k), LaxSign::plus, g);

  std::vector<double> a(81, 0.5), b(81, 0.0);
  b[40] = b0;
  const Eigen::MatrixXd inv = oracle::toda_dense(81, k, 1.0, a, b).inverse();
  const double sh = std::sinh(k);
  const double expected = inv(40, 40) - 1.0 / sh - b0 / (sh * sh);
  EXPECT_NEAR(gamma[0], expected, 1e-10);
}

TEST(TodaDensities, NonNegativeOnRandomStates) {
  for (int i = 0; i < 10; ++i) {
    const TodaState s = random_state(i);
    for (double kv : {1.0, 2.0, 3.0})
      for (LaxSign sg : {LaxSign::plus, LaxSign::minus}) {
        const auto r = density_report(s, Kappa(kv), sg);
        for (double v : r.rho.values) EXPECT_GE(v, -1e-12);
        for (double v : r.gamma.values) EXPECT_GE(v, -1e-12);
      }
  }
}

TEST(TodaDensities, RhoFormsAgree) {
  const TodaState s = random_state(5);
  const GreenTable g = green_table(s, Kappa(2.0), LaxSign::minus);
  const RhoForms f = rho_forms(s, Kappa(2.0), LaxSign::minus, g);
  for (std::size_t i = 0; i < f.original.values.size(); ++i) {
    EXPECT_NEAR(f.original.values[i], f.arcsinh.values[i], 1e-11);
    EXPECT_NEAR(f.original.values[i], f.log_ratio.values[i], 1e-11);
  }
}

TEST(TodaDensities, SignFlipSymmetry) {
  const TodaState s = random_state(2);
  TodaState flipped = s;
  for (double& b : flipped.b) b = -b;
  const auto plus = rho_density(s, Kappa(1.0), LaxSign::plus, green_table(s, Kappa(1.0), LaxSign::plus));
  const auto minus =
      rho_density(flipped, Kappa(1.0), LaxSign::minus, green_table(flipped, Kappa(1.0), LaxSign::minus));
  for (std::size_t i = 0; i < plus.values.size(); ++i) EXPECT_NEAR(plus.values[i], minus.values[i], 1e-12);
}

TEST(TodaIdentities, RandomStatesWithinTolerance) {
  for (int i = 0; i < 5; ++i) {
    const TodaState s = random_state(i);
    for (double kv : {1.0, 2.0, 3.0})
      for (LaxSign sg : {LaxSign::plus, LaxSign::minus}) {
        const auto r = density_report(s, Kappa(kv), sg);
        for (const auto& [name, v] : r.residuals) {
          const double tol = name.rfind("ledger", 0) == 0 ? 1e-8 : 1e-9;
          EXPECT_LT(v, tol) << name << " kappa=" << kv;
        }
      }
  }
}

// Time derivative by finite differences along the flow, independent of the
// analytic chain rule through dG/dt.
TEST(TodaConservation, AnalyticRateMatchesFiniteDifference) {
  // The flow moves the sites next to the support too, so widen first.
  const TodaState s = random_state(4, 16).embedded({-2, 20});
  const Kappa k(1.0);
  const double h = 1e-5;
  const auto v = toda_vector_field(s);
  auto shifted = [&](double t) {
    TodaState out = s;
    for (std::size_t i = 0; i < s.a.size(); ++i) {
      out.a[i] += t * v.da_dt.values[i];
      out.b[i] += t * v.db_dt.values[i];
    }
    return out;
  };
  for (LaxSign sg : {LaxSign::plus, LaxSign::minus}) {
    const TodaState sp = shifted(h), sm = shifted(-h);
    const auto rp = rho_density(sp, k, sg, green_table(sp, k, sg));
    const auto rm = rho_density(sm, k, sg, green_table(sm, k, sg));
    const auto gp = gamma_density(sp, k, sg, green_table(sp, k, sg));
    const auto gm = gamma_density(sm, k, sg, green_table(sm, k, sg));
    const auto rates = density_time_derivative(s, k, sg);
    for (int n = s.window.first; n < s.window.end(); ++n) {
      EXPECT_NEAR((rp[n] - rm[n]) / (2 * h), rates.drho_dt[n], 1e-6) << n;
      EXPECT_NEAR((gp[n] - gm[n]) / (2 * h), rates.dgamma_dt[n], 1e-6) << n;
    }
  }
}

TEST(TodaConservation, CurrentsBalanceRates) {
  const TodaState s = random_state(8);
  for (LaxSign sg : {LaxSign::plus, LaxSign::minus}) {
    const Kappa k(2.0);
    const GreenTable g = green_table(s, k, sg);
    const auto rates = density_time_derivative(s, k, sg, g);
    const auto j = currents(s, k, sg, g);
    const LatticeWindow w = report_window(s, k);
    for (int n = w.first; n < w.last(); ++n) {
      EXPECT_NEAR(sign_value(sg) * rates.drho_dt[n], j.rho_current[n + 1] - j.rho_current[n], 1e-9);
      EXPECT_NEAR(sign_value(sg) * rates.dgamma_dt[n], j.gamma_current[n + 1] - j.gamma_current[n], 1e-9);
    }
  }
}

TEST(TodaMacroscopic, LogDetMatchesDenseLU) {
  const TodaState s = random_state(6, 12);
  const Kappa k(1.0);
  const auto l = macroscopic_check(s, k, LaxSign::plus);
  const LatticeWindow w = padded_window(s, k);
  std::vector<double> a(w.size), b(w.size), a0(w.size, 0.5), b0(w.size, 0.0);
  for (int n = w.first; n < w.end(); ++n) {
    a[w.offset(n)] = s.a_at(n);
    b[w.offset(n)] = s.b_at(n);
  }
  const double dense = oracle::log_abs_det(oracle::toda_dense(w.size, 1.0, 1.0, a, b)) -
                       oracle::log_abs_det(oracle::toda_dense(w.size, 1.0, 1.0, a0, b0));
  EXPECT_NEAR(l.log_det, dense, 1e-10);
  EXPECT_NEAR(l.log_det_pivots, dense, 1e-10);
  EXPECT_NEAR(l.lhs_rho, l.rhs_rho, 1e-8);
  EXPECT_NEAR(l.lhs_gamma, l.rhs_gamma, 1e-8);
}

// Sum of rho at two kappas against the integral of -sinh(k) * sum gamma in between.
TEST(TodaMacroscopic, KappaDerivativeLinksTheLedgers) {
  const TodaState s = random_state(1, 12);
  const double k = 2.0, h = 1e-4;
  auto sum_rho = [&](double kv) { return macroscopic_check(s, Kappa(kv), LaxSign::plus).lhs_rho; };
  const double lhs = (sum_rho(k + h) - sum_rho(k - h)) / (2 * h);
  const double rhs = -std::sinh(k) * macroscopic_check(s, Kappa(k), LaxSign::plus).lhs_gamma;
  EXPECT_NEAR(lhs, rhs, 1e-7);
}

TEST(TodaConvexity, ProbesOnRandomDirections) {
  const TodaState s = random_state(9, 16);
  for (int d = 0; d < 5; ++d) {
    Direction dir{std::vector<double>(16), std::vector<double>(16)};
    double norm2 = 0;
    for (int i = 0; i < 16; ++i) {
      dir.c[i] = experiment::counter_uniform(3, d, i, 0);
      dir.d[i] = experiment::counter_uniform(3, d, i, 1);
      norm2 += dir.c[i] * dir.c[i] + dir.d[i] * dir.d[i];
    }
    for (int i = 0; i < 16; ++i) {
      dir.c[i] /= std::sqrt(norm2);
      dir.d[i] /= std::sqrt(norm2);
    }
    const auto p = convexity_probe(s, Kappa(1.0), LaxSign::plus, dir, 7, 1e-3);
    EXPECT_GE(p.rho_second_diff, -1e-6);
    EXPECT_GE(p.gamma_second_diff, -1e-6);
    EXPECT_LT(std::abs(p.a_gradient), 1e-8);
  }
}

TEST(TodaErrors, DegenerateAndInvalidInputs) {
  TodaState bad = TodaState::vacuum({0, 2});
  bad.a[1] = -0.1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

::testing::Environment* const silence = ::testing::AddGlobalTestEnvironment(new SilenceWarnings);
