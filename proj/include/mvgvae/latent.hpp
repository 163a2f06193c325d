#pragma once

// The two latent distributions: von Mises-Fisher on the unit sphere for the
// semantic variable and a diagonal Gaussian for the syntactic variable.

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "mvgvae/util/error.hpp"
#include "mvgvae/util/rng.hpp"

namespace mvg {

struct LatentConfig {
  int d_sem = 50;
  int d_syn = 50;
  double kappa = 80.0;
  double lambda_y = 1e-4;
  double lambda_z = 1e-3;

  void validate() const {
    if (d_sem < 2 || d_syn < 2) throw ConfigError("latent: d_sem and d_syn must be >= 2");
    if (!(kappa >= 0)) throw ConfigError("latent: kappa must be >= 0");
    if (!(lambda_y >= 0) || !(lambda_z >= 0)) throw ConfigError("latent: KL weights must be >= 0");
  }
};

struct VmfPosterior {
  Eigen::VectorXd mu;  // unit mean direction
  double kappa = 0.0;
};

struct GaussPosterior {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;  // per-dimension standard deviation, > 0
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

/// Power series sum_k (x/2)^(2k+nu) / (k! Gamma(k+nu+1)), accumulated in log space.
inline double log_bessel_i_series(double nu, double x) {
  const double lhx = std::log(x / 2);
  double acc = -std::numeric_limits<double>::infinity();
  double peak = acc;
  for (int k = 0; k < 1000000; ++k) {
    const double t = (2.0 * k + nu) * lhx - std::lgamma(k + 1.0) - std::lgamma(k + nu + 1.0);
    acc = log_add(acc, t);
    peak = std::max(peak, t);
    // Terms decrease monotonically once k exceeds the peak index.
    if (t < peak && t < acc - 40.0) break;
  }
  return acc;
}

/// Debye uniform asymptotic expansion with four correction terms. Written in
/// terms of R = sqrt(nu^2 + x^2) so that nu = 0 needs no special case.
inline double log_bessel_i_debye(double nu, double x) {
  const double r = std::hypot(nu, x);
  const double t = nu / r;
  const double s = 1.0 / r;  // t / nu
  const double t2 = t * t;
  // u_k(t) / nu^k = s^k * (u_k(t) / t^k)
  const double p1 = (3.0 - 5.0 * t2) / 24.0;
  const double p2 = (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0;
  const double p3 =
      (30375.0 - 369603.0 * t2 + 765765.0 * t2 * t2 - 425425.0 * t2 * t2 * t2) / 414720.0;
  const double p4 = (4465125.0 - 94121676.0 * t2 + 349922430.0 * t2 * t2 -
                     446185740.0 * t2 * t2 * t2 + 185910725.0 * t2 * t2 * t2 * t2) /
                    39813120.0;
  const double corr = 1.0 + s * (p1 + s * (p2 + s * (p3 + s * p4)));
  const double eta = r + (nu > 0 ? nu * std::log(x / (nu + r)) : 0.0);
  return eta - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(r) + std::log(corr);
}

}  // namespace detail

/// log I_nu(x) for nu >= 0, x >= 0. Never overflows: the series runs in log
/// space and large arguments switch to the uniform asymptotic expansion.
inline double log_bessel_i(double nu, double x) {
  if (x < 0 || nu < 0) throw Error("log_bessel_i: negative argument");
  if (x == 0) return nu == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (std::hypot(nu, x) >= 500.0) return detail::log_bessel_i_debye(nu, x);
  return detail::log_bessel_i_series(nu, x);
}

/// log of the surface area of the unit sphere S^{d-1} in R^d.
inline double log_sphere_area(int d) {
  return std::log(2.0) + 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d);
}

/// log C_d(kappa), the vMF density normalizer: kappa^{d/2-1} / ((2 pi)^{d/2} I_{d/2-1}(kappa)).
inline double vmf_log_norm(double kappa, int d) {
  if (d < 2) throw Error("vmf_log_norm: d must be >= 2");
  if (kappa < 0) throw Error("vmf_log_norm: kappa must be >= 0");
  if (kappa == 0) return -log_sphere_area(d);
  const double nu = 0.5 * d - 1.0;
  return nu * std::log(kappa) - 0.5 * d * std::log(2.0 * std::numbers::pi) -
         log_bessel_i(nu, kappa);
}

/// Mean resultant length A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa) = E[mu . x].
inline double vmf_mean_resultant(double kappa, int d) {
  if (kappa == 0) return 0.0;
  const double nu = 0.5 * d - 1.0;
  return std::exp(log_bessel_i(nu + 1.0, kappa) - log_bessel_i(nu, kappa));
}

/// KL(vMF(mu, kappa) || Uniform(S^{d-1})); independent of mu.
inline double vmf_kl_uniform(double kappa, int d) {
  if (kappa < 0) throw Error("vmf_kl_uniform: kappa must be >= 0");
  if (kappa == 0) return 0.0;
  const double kl = kappa * vmf_mean_resultant(kappa, d) + vmf_log_norm(kappa, d) + log_sphere_area(d);
  return std::max(0.0, kl);
}

/// Noise for one vMF draw, independent of the mean direction: a sample `x0`
/// from vMF(e1, kappa). The draw for mean mu is householder_apply(mu, x0).
struct VmfNoise {
  Eigen::VectorXd x0;
};

inline Eigen::VectorXd uniform_on_sphere(int d, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(d);
  double n = 0;
  do {
    for (int i = 0; i < d; ++i) v[i] = normal(rng);
    n = v.norm();
  } while (n == 0);
  return v / n;
}

/// Rejection sampler for the polar component w = mu . x (Wood, 1994). With
/// kappa fixed it has no trainable parameters.
inline double vmf_sample_polar(double kappa, int d, Rng& rng) {
  const double dm1 = d - 1.0;
  const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);
  std::gamma_distribution<double> gamma(0.5 * dm1, 1.0);
  for (;;) {
    const double g1 = gamma(rng), g2 = gamma(rng);
    const double z = g1 / (g1 + g2);
    const double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = uniform01(rng);
    if (u <= 0) continue;
    if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) return std::clamp(w, -1.0, 1.0);
  }
}

inline VmfNoise draw_vmf_noise(double kappa, int d, Rng& rng) {
  VmfNoise n;
  if (kappa == 0) {
    n.x0 = uniform_on_sphere(d, rng);
    return n;
  }
  const double w = vmf_sample_polar(kappa, d, rng);
  const Eigen::VectorXd v = uniform_on_sphere(d - 1, rng);
  n.x0.resize(d);
  n.x0[0] = w;
  n.x0.tail(d - 1) = std::sqrt(std::max(0.0, 1.0 - w * w)) * v;
  return n;
}

/// Below this squared distance between mu and e1 the reflection is the identity.
inline constexpr double kHouseholderEps = 1e-14;

/// Reflection H(mu) x0 with H = I - 2 u u^T / (u^T u), u = e1 - mu, which maps e1 to mu.
template <class Vec>
Vec householder_apply(const Vec& mu, const Vec& x0) {
  Vec u = -mu;
  u[0] += 1;
  const auto uu = u.squaredNorm();
  if (uu < kHouseholderEps) return x0;
  const auto s = u.dot(x0);
  return x0 - (2 * s / uu) * u;
}

/// Vector-Jacobian product of householder_apply with respect to mu.
template <class Vec>
Vec householder_vjp_mu(const Vec& mu, const Vec& x0, const Vec& grad_out) {
  Vec u = -mu;
  u[0] += 1;
  const auto uu = u.squaredNorm();
  if (uu < kHouseholderEps) return Vec::Zero(mu.size());
  const auto s = u.dot(x0);
  const auto gu_dot = grad_out.dot(u);
  // y = x0 - 2 s u / uu ; d/du, then chain through u = e1 - mu.
  Vec grad_u = -2 * (s / uu) * grad_out - (2 * gu_dot / uu) * x0 + (4 * gu_dot * s / (uu * uu)) * u;
  return -grad_u;
}

/// One vMF draw with the given mean; deterministic in `rng`.
inline Eigen::VectorXd vmf_sample(const VmfPosterior& post, Rng& rng) {
  if (std::abs(post.mu.norm() - 1.0) > 1e-6) throw Error("vmf_sample: mean direction is not unit");
  const VmfNoise n = draw_vmf_noise(post.kappa, static_cast<int>(post.mu.size()), rng);
  if (post.kappa == 0) return n.x0;
  Eigen::VectorXd y = householder_apply<Eigen::VectorXd>(post.mu, n.x0);
  return y / y.norm();
}

inline Eigen::VectorXd standard_normal(int d, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd e(d);
  for (int i = 0; i < d; ++i) e[i] = normal(rng);
  return e;
}

/// Reparameterized draw mu + sigma * eps.
inline Eigen::VectorXd gauss_sample(const GaussPosterior& post, Rng& rng) {
  const Eigen::VectorXd eps = standard_normal(static_cast<int>(post.mu.size()), rng);
  return post.mu + post.sigma.cwiseProduct(eps);
}

/// KL(N(mu, diag sigma^2) || N(0, I)).
inline double gauss_kl_std(const GaussPosterior& post) {
  double kl = 0;
  for (Eigen::Index i = 0; i < post.mu.size(); ++i) {
    const double s2 = post.sigma[i] * post.sigma[i];
    kl += s2 + post.mu[i] * post.mu[i] - 1.0 - std::log(s2);
  }
  return 0.5 * kl;
}

}  // namespace mvg
