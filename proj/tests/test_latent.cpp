#include <gtest/gtest.h>

#include "mvgvae/latent.hpp"
#include "oracles.hpp"

using namespace mvg;

TEST(LogBessel, MatchesMultiprecisionSeries) {
  for (double nu : {0.0, 0.5, 4.0, 24.0, 49.0}) {
    for (double x : {0.01, 1.0, 5.0, 30.0, 80.0, 300.0, 700.0, 2000.0}) {
      const double ref = oracle::log_bessel_i(nu, x);
      EXPECT_NEAR(log_bessel_i(nu, x), ref, 1e-9 * std::max(1.0, std::abs(ref))) << "nu=" << nu << " x=" << x;
    }
  }
}

TEST(LogBessel, AgreesWithBoostInRange) {
  for (double nu : {0.0, 1.0, 3.5, 10.0})
    for (double x : {0.3, 2.0, 15.0, 60.0})
      EXPECT_NEAR(log_bessel_i(nu, x), std::log(boost::math::cyl_bessel_i(nu, x)), 1e-10);
}

TEST(LogBessel, NeverNanForLargeArguments) {
  for (double nu : {0.0, 24.0, 500.0, 5000.0})
    for (double x : {1e3, 1e5, 1e8}) EXPECT_TRUE(std::isfinite(log_bessel_i(nu, x)));
}

TEST(VmfLogNorm, UniformLimit) {
  for (int d : {2, 3, 10, 50}) {
    EXPECT_DOUBLE_EQ(vmf_log_norm(0.0, d), -log_sphere_area(d));
    EXPECT_NEAR(vmf_log_norm(1e-9, d), std::lgamma(0.5 * d) - std::log(2 * std::pow(std::numbers::pi, 0.5 * d)), 1e-8);
  }
}

TEST(VmfLogNorm, ThreeDimensionalClosedForm) {
  for (double k : {0.01, 0.5, 2.0, 10.0, 80.0, 400.0, 1000.0, 1e5})
    EXPECT_NEAR(vmf_log_norm(k, 3), oracle::vmf_log_norm_d3(k), 1e-8) << "kappa=" << k;
}

TEST(VmfLogNorm, Kappa80Dim50MatchesSeries) {
  EXPECT_NEAR(vmf_log_norm(80.0, 50), oracle::vmf_log_norm(80.0, 50), 1e-8);
}

TEST(VmfKl, ZeroAtZeroKappa) {
  for (int d : {2, 10, 50}) EXPECT_EQ(vmf_kl_uniform(0.0, d), 0.0);
}

TEST(VmfKl, MonotoneInKappa) {
  double prev = 0;
  for (int k = 0; k <= 100; ++k) {
    const double kl = vmf_kl_uniform(k, 50);
    EXPECT_GE(kl, prev) << "kappa=" << k;
    prev = kl;
  }
}

TEST(VmfKl, MatchesPolarQuadrature) {
  double mass = 0;
  const double ref = oracle::vmf_kl_quadrature(80.0, 50, &mass);
  EXPECT_NEAR(mass, 1.0, 1e-10);
  EXPECT_NEAR(vmf_kl_uniform(80.0, 50), ref, 1e-5);
  EXPECT_NEAR(vmf_kl_uniform(5.0, 10), oracle::vmf_kl_quadrature(5.0, 10), 1e-7);
}

TEST(VmfSample, UnitNormAndMeanResultant) {
  const int d = 10;
  const double kappa = 5.0;
  Rng rng = make_rng(3, "test.vmf");
  Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(d, -1.0, 2.0);
  mu /= mu.norm();
  const long n = 100000;
  double dot = 0, worst = 0;
  for (long i = 0; i < n; ++i) {
    const auto x = vmf_sample({mu, kappa}, rng);
    worst = std::max(worst, std::abs(x.norm() - 1.0));
    dot += x.dot(mu);
  }
  EXPECT_LE(worst, 1e-6);
  EXPECT_NEAR(dot / n, oracle::mean_resultant(kappa, d), 0.005);
  EXPECT_NEAR(vmf_mean_resultant(kappa, d), oracle::mean_resultant(kappa, d), 1e-12);
}

TEST(VmfSample, ConcentrationAndUniformLimits) {
  Rng rng = make_rng(4, "test.vmf");
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(16);
  mu[3] = 1;
  for (int i = 0; i < 100; ++i) EXPECT_GT(vmf_sample({mu, 1e6}, rng).dot(mu), 0.999);
  double dot = 0;
  for (int i = 0; i < 20000; ++i) dot += vmf_sample({mu, 0.0}, rng).dot(mu);
  EXPECT_NEAR(dot / 20000, 0.0, 0.01);
  EXPECT_THROW(vmf_sample({2 * mu, 1.0}, rng), Error);
}

TEST(VmfSample, HouseholderMapsE1ToMu) {
  Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(6, 0.3, -1.0);
  mu /= mu.norm();
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(6);
  e1[0] = 1;
  EXPECT_LT((householder_apply(mu, e1) - mu).norm(), 1e-12);
  // Isometry.
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(6, 1.0, 2.0);
  EXPECT_NEAR(householder_apply(mu, x).norm(), x.norm(), 1e-12);
}

TEST(VmfSample, PathwiseGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(5, "test.vmf.grad");
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 8;
    Eigen::VectorXd mu = standard_normal(d, rng);
    mu /= mu.norm();
    const Eigen::VectorXd x0 = draw_vmf_noise(30.0, d, rng).x0;
    const Eigen::VectorXd w = standard_normal(d, rng);  // loss = w . y
    const Eigen::VectorXd ana = householder_vjp_mu<Eigen::VectorXd>(mu, x0, w);
    Eigen::VectorXd num(d);
    const double eps = 1e-6;
    for (int i = 0; i < d; ++i) {
      Eigen::VectorXd up = mu, dn = mu;
      up[i] += eps;
      dn[i] -= eps;
      num[i] = (w.dot(householder_apply(up, x0)) - w.dot(householder_apply(dn, x0))) / (2 * eps);
    }
    EXPECT_LT((ana - num).norm() / std::max(ana.norm(), num.norm()), 1e-4);
  }
}

TEST(GaussSample, ReparameterizationProperties) {
  Rng a = make_rng(6, "test.gauss"), b = make_rng(6, "test.gauss");
  GaussPosterior post{Eigen::VectorXd::LinSpaced(4, -1.0, 1.0), Eigen::VectorXd::Constant(4, 0.5)};
  EXPECT_EQ(gauss_sample(post, a), gauss_sample(post, b));
  GaussPosterior sharp{post.mu, Eigen::VectorXd::Zero(4)};
  EXPECT_EQ(gauss_sample(sharp, a), post.mu);

  const long n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
  for (long i = 0; i < n; ++i) sum += gauss_sample(post, a);
  for (int k = 0; k < 4; ++k) EXPECT_LE(std::abs(sum[k] / n - post.mu[k]), 4 * post.sigma[k] / std::sqrt(double(n)));
}

TEST(GaussSample, PathwiseGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(7, "test.gauss.grad");
  const int d = 5;
  const Eigen::VectorXd mu = standard_normal(d, rng), logsig = 0.3 * standard_normal(d, rng);
  const Eigen::VectorXd eps_noise = standard_normal(d, rng), w = standard_normal(d, rng);
  auto loss = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& ls) {
    const Eigen::VectorXd z = m + ls.array().exp().matrix().cwiseProduct(eps_noise);
    return w.dot(z) + 0.5 * z.squaredNorm();
  };
  const Eigen::VectorXd z = mu + logsig.array().exp().matrix().cwiseProduct(eps_noise);
  const Eigen::VectorXd gz = w + z;
  const Eigen::VectorXd g_mu = gz;
  const Eigen::VectorXd g_ls = gz.cwiseProduct(logsig.array().exp().matrix()).cwiseProduct(eps_noise);
  const double h = 1e-6;
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd up = mu, dn = mu;
    up[i] += h;
    dn[i] -= h;
    EXPECT_NEAR((loss(up, logsig) - loss(dn, logsig)) / (2 * h), g_mu[i], 1e-4 * std::max(1.0, std::abs(g_mu[i])));
    up = logsig;
    dn = logsig;
    up[i] += h;
    dn[i] -= h;
    EXPECT_NEAR((loss(mu, up) - loss(mu, dn)) / (2 * h), g_ls[i], 1e-4 * std::max(1.0, std::abs(g_ls[i])));
  }
}

TEST(GaussKl, ClosedFormCases) {
  EXPECT_EQ(gauss_kl_std({Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)}), 0.0);
  EXPECT_DOUBLE_EQ(gauss_kl_std({Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1)}), 0.5);
}

TEST(GaussKl, MatchesMonteCarlo) {
  Eigen::VectorXd mu(4), sigma(4);
  mu << 0.5, -1.2, 0.1, 2.0;
  sigma << 0.7, 1.3, 0.2, 1.0;
  const auto mc = oracle::gauss_kl_monte_carlo(mu, sigma, 1000000, 17);
  EXPECT_LE(std::abs(gauss_kl_std({mu, sigma}) - mc.mean), 3 * mc.stderr_);
}
