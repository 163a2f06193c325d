#pragma once

// String-overlap metrics (BLEU, ROUGE) and Pearson correlation.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mvgvae/util/error.hpp"
#include "mvgvae/util/strings.hpp"

namespace mvg {

using Sentence = std::vector<std::string>;

enum class MetricMode { word, character };

/// In character mode every token is split into its UTF-8 code points and the
/// spaces between tokens disappear.
inline Sentence metric_units(const Sentence& s, MetricMode mode) {
  if (mode == MetricMode::word) return s;
  Sentence out;
  for (const auto& w : s)
    for (auto& c : utf8_chars(w)) out.push_back(std::move(c));
  return out;
}

namespace detail {

inline std::map<std::vector<std::string>, int> ngram_counts(const Sentence& s, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++counts[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  return counts;
}

}  // namespace detail

/// Corpus BLEU in [0, 100]: geometric mean of clipped 1..4-gram precisions
/// times the brevity penalty. An order n >= 2 with zero matches contributes
/// 1 / (total + 1) instead of zero.
inline double bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                   MetricMode mode = MetricMode::word) {
  if (hypotheses.empty()) throw Error("bleu: empty hypothesis set");
  if (hypotheses.size() != references.size())
    throw Error("bleu: hypothesis/reference count mismatch");
  constexpr int kMaxOrder = 4;
  double matches[kMaxOrder] = {0, 0, 0, 0};
  double totals[kMaxOrder] = {0, 0, 0, 0};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const Sentence h = metric_units(hypotheses[i], mode);
    const Sentence r = metric_units(references[i], mode);
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto hc = detail::ngram_counts(h, n);
      const auto rc = detail::ngram_counts(r, n);
      for (const auto& [g, c] : hc) {
        totals[n - 1] += c;
        auto it = rc.find(g);
        if (it != rc.end()) matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    double p;
    if (matches[n] > 0) {
      p = matches[n] / totals[n];
    } else if (n == 0) {
      return 0.0;
    } else {
      p = 1.0 / (totals[n] + 1.0);
    }
    log_sum += std::log(p);
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_sum / kMaxOrder);
}

namespace detail {

inline double f_measure(double overlap, double hyp_total, double ref_total) {
  if (hyp_total == 0 || ref_total == 0) return 0.0;
  const double p = overlap / hyp_total;
  const double r = overlap / ref_total;
  return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
}

inline std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// ROUGE-N F-measure for one pair.
inline double rouge_n(const Sentence& hyp, const Sentence& ref, int n,
                      MetricMode mode = MetricMode::word) {
  if (n < 1) throw Error("rouge_n: n must be >= 1");
  const auto h = detail::ngram_counts(metric_units(hyp, mode), n);
  const auto r = detail::ngram_counts(metric_units(ref, mode), n);
  double overlap = 0, ht = 0, rt = 0;
  for (const auto& [g, c] : h) {
    ht += c;
    auto it = r.find(g);
    if (it != r.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : r) rt += c;
  return detail::f_measure(overlap, ht, rt);
}

/// ROUGE-L F-measure (beta = 1) for one pair.
inline double rouge_l(const Sentence& hyp, const Sentence& ref, MetricMode mode = MetricMode::word) {
  const Sentence h = metric_units(hyp, mode);
  const Sentence r = metric_units(ref, mode);
  return detail::f_measure(static_cast<double>(detail::lcs_length(h, r)),
                           static_cast<double>(h.size()), static_cast<double>(r.size()));
}

inline double rouge_n(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs, int n,
                      MetricMode mode = MetricMode::word) {
  if (n < 1) throw Error("rouge_n: n must be >= 1");
  if (hyps.size() != refs.size()) throw Error("rouge_n: list length mismatch");
  if (hyps.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) s += rouge_n(hyps[i], refs[i], n, mode);
  return s / static_cast<double>(hyps.size());
}

inline double rouge_l(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs,
                      MetricMode mode = MetricMode::word) {
  if (hyps.size() != refs.size()) throw Error("rouge_l: list length mismatch");
  if (hyps.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) s += rouge_l(hyps[i], refs[i], mode);
  return s / static_cast<double>(hyps.size());
}

/// Product-moment correlation. Throws on fewer than two points or constant input.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) throw Error("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw Error("pearson: constant input, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace mvg
