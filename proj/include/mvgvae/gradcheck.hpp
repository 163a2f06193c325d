#pragma once

// Central-difference verification of analytic gradients.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mvgvae/autodiff.hpp"
#include "mvgvae/util/rng.hpp"

namespace mvg {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Entries probed per tensor; 0 probes all of them. Probed entries are a
  /// seeded random subset.
  int max_entries = 0;
  std::uint64_t seed = 1;
  /// Gradient norms below this floor count as zero when forming the ratio.
  double floor = 1e-8;
};

struct TensorCheck {
  std::string name;
  double rel_err = 0;
  int probed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  std::string worst;
  bool finite = true;
  std::string failure;  // names the offending tensor when non-finite values appear
  std::vector<TensorCheck> tensors;
};

/// Compares analytic parameter gradients of `loss` with central differences.
/// Relative error per tensor is |a - n|_2 / max(|a|_2, |n|_2, floor) over the
/// probed entries; the report carries the maximum over tensors.
inline GradCheckReport grad_check(const std::vector<ad::Param<double>*>& params,
                                  const std::function<ad::Var(ad::Graph<double>&)>& loss,
                                  const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  for (auto* p : params) p->zero_grad();
  {
    ad::Graph<double> g;
    try {
      const ad::Var out = loss(g);
      g.backward(out);
    } catch (const NumericError& e) {
      rep.finite = false;
      rep.failure = std::string("forward/backward: ") + e.what();
      return rep;
    }
  }
  auto eval = [&]() {
    ad::Graph<double> g;
    return g.scalar(loss(g));
  };
  Rng rng = make_rng(opt.seed, "gradcheck");
  for (auto* p : params) {
    TensorCheck tc;
    tc.name = p->name;
    const Eigen::Index n = p->value.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) idx[static_cast<std::size_t>(k)] = k;
    if (opt.max_entries > 0 && n > opt.max_entries) {
      for (Eigen::Index k = 0; k < opt.max_entries; ++k)
        std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(k) + uniform_index(rng, static_cast<std::size_t>(n - k))]);
      idx.resize(static_cast<std::size_t>(opt.max_entries));
    }
    double diff2 = 0, a2 = 0, n2 = 0;
    for (Eigen::Index k : idx) {
      if (!std::isfinite(p->grad.data()[k])) {
        rep.finite = false;
        rep.failure = "non-finite analytic gradient in " + p->name;
        return rep;
      }
      double& v = p->value.data()[k];
      const double orig = v;
      double up, down;
      try {
        v = orig + opt.eps;
        up = eval();
        v = orig - opt.eps;
        down = eval();
      } catch (const NumericError& e) {
        v = orig;
        rep.finite = false;
        rep.failure = "non-finite loss while perturbing " + p->name + ": " + e.what();
        return rep;
      }
      v = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        rep.finite = false;
        rep.failure = "non-finite loss while perturbing " + p->name;
        return rep;
      }
      const double num = (up - down) / (2 * opt.eps);
      const double ana = p->grad.data()[k];
      diff2 += (ana - num) * (ana - num);
      a2 += ana * ana;
      n2 += num * num;
      ++tc.probed;
    }
    tc.rel_err = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), opt.floor});
    if (tc.rel_err >= rep.max_rel_err) {
      rep.max_rel_err = tc.rel_err;
      rep.worst = tc.name;
    }
    rep.tensors.push_back(tc);
  }
  return rep;
}

}  // namespace mvg
