#include <cmath>

#include "doctest.h"
#include "test_support.hpp"

#include "chc/error.hpp"
#include "chc/experiment.hpp"
#include "chc/frame.hpp"

using namespace chc;

TEST_SUITE("frame") {

TEST_CASE("Meyer step") {
  CHECK(meyer_step(0.0) == 0.0);
  CHECK(meyer_step(1.0) == 1.0);
  CHECK(meyer_step(-3.0) == 0.0);
  CHECK(meyer_step(7.0) == 1.0);
  for (double x = 0.0; x <= 1.0; x += 0.01) CHECK(meyer_step(x) + meyer_step(1.0 - x) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("kernel systems are tight") {
  for (const auto& [j, t, r] : {std::tuple{57, 0.1, 10.0}, {2, 1.0, 1.0}, {12, 0.5, 3.0}, {30, 0.05, 20.0}}) {
    const auto sys = design_system(j, t, r);
    double worst = 0.0;
    for (int i = 0; i <= 20000; ++i) worst = std::max(worst, std::abs(sys.tightness(2.0 * i / 20000) - 1.0));
    CHECK(worst < 1e-12);
    CHECK(sys.warp(0.0) == 0.0);
    CHECK(sys.warp(2.0) == doctest::Approx(j - 1).epsilon(1e-12));
    CHECK(sys.kernel(0, 0.0) == doctest::Approx(1.0));
    CHECK(sys.kernel(j - 1, 2.0) == doctest::Approx(1.0));
  }
}

TEST_CASE("warp is monotone and invertible") {
  const auto sys = design_system();
  double prev = -1.0;
  for (int i = 0; i <= 4000; ++i) {
    const double l = 2.0 * i / 4000;
    const double w = sys.warp(l);
    CHECK(w > prev);
    prev = w;
    CHECK(sys.unwarp(w) == doctest::Approx(l).epsilon(1e-10));
  }
  // About twenty narrow kernels sit below the transition.
  const int narrow = int(std::floor(sys.warp(sys.transition())));
  CHECK(narrow >= 17);
  CHECK(narrow <= 21);
}

TEST_CASE("invalid systems are rejected") {
  CHECK_THROWS_AS(design_system(1), ArgumentError);
  CHECK_THROWS_AS(design_system(10, 0.0), ArgumentError);
  CHECK_THROWS_AS(design_system(10, 2.0), ArgumentError);
  CHECK_THROWS_AS(design_system(10, 0.1, 0.5), ArgumentError);
  CHECK_THROWS_AS(design_system(3, 0.01, 50.0), ArgumentError);
  const auto sys = design_system(5);
  CHECK_THROWS_AS(sys.kernel(5, 0.1), ArgumentError);
}

TEST_CASE("centers of mass") {
  const auto sys = design_system();
  std::vector<double> c;
  for (int j = 0; j < sys.count(); ++j) c.push_back(center_of_mass(sys, j));
  CHECK(std::is_sorted(c.begin(), c.end()));
  CHECK(std::adjacent_find(c.begin(), c.end()) == c.end());
  CHECK(c.back() == 2.0);
  // Trapezoid cross-check.
  for (int j : {0, 1, 19, 20, 40}) {
    const int n = 1000000;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double l = 2.0 * i / n;
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      const double k2 = std::pow(sys.kernel(j, l), 2);
      num += w * l * k2;
      den += w * k2;
    }
    CHECK(c[j] == doctest::Approx(num / den).epsilon(1e-6));
  }
  // A kernel fully inside the linear region is symmetric in lambda.
  const auto [lo, hi] = sys.support(5);
  CHECK(c[5] == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-10));
}

TEST_CASE("Chebyshev projection") {
  const auto p = fit_kernel([](double) { return 0.7; }, 1e-12, 100);
  CHECK(p.degree() == 0);
  CHECK(p(1.3) == doctest::Approx(0.7));
  const auto cubic = chebyshev_project([](double l) { return l * l * l - l; }, 3);
  CHECK(sup_error(cubic, [](double l) { return l * l * l - l; }) < 1e-13);
}

TEST_CASE("narrow kernels need high degree and the search is minimal") {
  // Bump of half-width 0.005 around 0.3.
  auto bump = [](double l) { return std::cos(0.5 * M_PI * meyer_step(std::abs(l - 0.3) / 0.005)); };
  const double budget = 1e-3;
  const auto p = fit_kernel(bump, budget, 3000);
  CHECK(p.degree() >= 100);
  CHECK(sup_error(p, bump) <= budget);
  CHECK(sup_error(chebyshev_project(bump, p.degree() - 1), bump) > budget);
  CHECK_THROWS_AS(fit_kernel(bump, budget, 50), NumericError);
}

TEST_CASE("fitted bank on a small system") {
  const auto sys = design_system(8, 0.4, 2.0);
  const auto bank = chebyshev_fit(sys);
  REQUIRE(bank.count() == 8);
  CHECK(bank.joint_deviation <= 0.01);
  for (int j = 0; j < 8; ++j) {
    CHECK(bank.kernels[j].index == j);
    CHECK(bank.centers[j] == doctest::Approx(center_of_mass(sys, j)));
    CHECK(sup_error(bank.kernels[j], [&](double l) { return sys.kernel(j, l); }) <= 0.01 / 16 + 1e-12);
  }

  const auto dir = test::scratch("bank_json");
  write_bank_json((dir / "b.json").string(), sys, bank, "x");
  const auto back = read_bank_json((dir / "b.json").string());
  REQUIRE(back.count() == 8);
  for (int j = 0; j < 8; ++j) CHECK(back.kernels[j].coefficients == bank.kernels[j].coefficients);
  CHECK(back.centers == bank.centers);
  write_kernel_csv((dir / "k.csv").string(), sys, &bank, 101);
  const auto csv = test::slurp(dir / "k.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 102);
  test::spit(dir / "bad.json", "{\"kernels\": []}");
  CHECK_THROWS_AS(read_bank_json((dir / "bad.json").string()), FormatError);
}

TEST_CASE("filters on a graph") {
  const LaplacianOperator op(cycle_adjacency(60));
  const auto s = eig_dense(op);
  const auto f = white_noise_signal(60, 4);
  const auto g = white_noise_signal(60, 5);

  const auto one = chebyshev_project([](double) { return 1.0; }, 0);
  CHECK((apply_filter(op, one, f) - f).norm() < 1e-13);

  const auto sys = design_system(6, 0.5, 1.0);
  const auto bank = chebyshev_fit(sys);
  // Eigenvector in, scaled eigenvector out.
  const Eigen::VectorXd u = s.vectors.col(7);
  for (const auto& k : bank.kernels) {
    CHECK((apply_filter(op, k, u) - k(s.values[7]) * u).norm() < 1e-10);
  }
  // Linearity.
  const auto& k = bank.kernels[2];
  CHECK((apply_filter(op, k, Eigen::VectorXd(2.0 * f - g)) - (2.0 * apply_filter(op, k, f) - apply_filter(op, k, g))).norm() < 1e-11);
  RowMatrix block(60, 2);
  block.col(0) = f;
  block.col(1) = g;
  const RowMatrix fb = apply_filter(op, k, block);
  CHECK((Eigen::VectorXd(fb.col(1)) - apply_filter(op, k, g)).norm() < 1e-13);
  // Bank energies sum to about ||f||^2 and match single filters.
  const auto e = apply_bank(op, bank, f);
  double total = 0.0;
  for (int j = 0; j < bank.count(); ++j) {
    total += e[j];
    CHECK(e[j] == doctest::Approx(apply_filter(op, bank.kernels[j], f).squaredNorm()).epsilon(1e-10));
  }
  CHECK(std::abs(total / f.squaredNorm() - 1.0) <= bank.joint_deviation + 1e-12);
}

}
