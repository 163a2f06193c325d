#pragma once

// Disentanglement probes: sentence similarity correlation and length-
// stratified syntactic retrieval, each scored for both latent variables with
// Oracle and Random baselines.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvgvae/control.hpp"
#include "mvgvae/corpus.hpp"
#include "mvgvae/metrics.hpp"
#include "mvgvae/trees.hpp"
#include "mvgvae/util/rng.hpp"

namespace mvg {

inline constexpr int kProbeReportSchema = 1;

enum class ProbeKind { semantic, syntactic };

/// Scores of both variables on one probe. delta = sem - syn for semantic
/// probes and syn - sem for syntactic probes.
struct ProbeReport {
  std::string name;
  ProbeKind kind = ProbeKind::semantic;
  double sem = 0;
  double syn = 0;
  double delta = 0;
  double oracle = std::numeric_limits<double>::quiet_NaN();
  double random = std::numeric_limits<double>::quiet_NaN();
  double bov = std::numeric_limits<double>::quiet_NaN();
  long n = 0;
  std::vector<std::string> warnings;

  void finalize() { delta = kind == ProbeKind::semantic ? sem - syn : syn - sem; }
  /// Score of the variable the probe targets.
  double targeted() const { return kind == ProbeKind::semantic ? sem : syn; }
};

inline nlohmann::ordered_json to_json(const ProbeReport& r) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  nlohmann::ordered_json j;
  j["schema"] = kProbeReportSchema;
  j["name"] = r.name;
  j["kind"] = r.kind == ProbeKind::semantic ? "semantic" : "syntactic";
  j["sem"] = r.sem;
  j["syn"] = r.syn;
  j["delta"] = r.delta;
  j["oracle"] = num(r.oracle);
  j["random"] = num(r.random);
  j["bov"] = num(r.bov);
  j["n"] = r.n;
  j["warnings"] = r.warnings;
  return j;
}

/// CSV with one row per metric of each report.
inline std::string probe_csv(const std::vector<ProbeReport>& reports) {
  std::string out = "probe,metric,value\n";
  for (const auto& r : reports) {
    auto row = [&](const char* m, double v) {
      if (!std::isnan(v)) out += r.name + "," + m + "," + format_double(v) + "\n";
    };
    row("sem", r.sem);
    row("syn", r.syn);
    row("delta", r.delta);
    row("oracle", r.oracle);
    row("random", r.random);
    row("bov", r.bov);
    row("n", static_cast<double>(r.n));
  }
  return out;
}

inline constexpr int kRandomRuns = 10;

// ---------------------------------------------------------------------------
// Sentence similarity

/// Pearson correlation between gold similarity and the cosine similarity of
/// each representation. Oracle correlates gold with itself; Random is the
/// mean over seeded runs of uniform random scores.
inline ProbeReport similarity_report(const Eigen::MatrixXd& ya, const Eigen::MatrixXd& yb, const Eigen::MatrixXd& za,
                                     const Eigen::MatrixXd& zb, const std::vector<double>& gold, std::uint64_t seed,
                                     const Eigen::MatrixXd* bova = nullptr, const Eigen::MatrixXd* bovb = nullptr) {
  ProbeReport r;
  r.name = "sts";
  r.kind = ProbeKind::semantic;
  r.n = static_cast<long>(gold.size());
  auto cosines = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    std::vector<double> c(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) c[i] = cosine(a.row(static_cast<Eigen::Index>(i)), b.row(static_cast<Eigen::Index>(i)));
    return c;
  };
  r.sem = pearson(cosines(ya, yb), gold);
  r.syn = pearson(cosines(za, zb), gold);
  if (bova && bovb) r.bov = pearson(cosines(*bova, *bovb), gold);
  r.oracle = pearson(gold, gold);
  double acc = 0;
  for (int run = 0; run < kRandomRuns; ++run) {
    Rng rng = make_rng(seed, "probe.sts.random", static_cast<std::uint64_t>(run));
    std::vector<double> x(gold.size());
    for (auto& v : x) v = uniform01(rng);
    acc += pearson(x, gold);
  }
  r.random = acc / kRandomRuns;
  r.finalize();
  return r;
}

template <class S>
ProbeReport sts_probe(ModelParams<S>& p, const BpeModel& bpe, const std::vector<Words>& a, const std::vector<Words>& b,
                      const std::vector<double>& gold, const std::string& lang, std::uint64_t seed) {
  if (a.size() != b.size() || a.size() != gold.size()) throw Error("sts_probe: length mismatch");
  const auto ya = encode_representations(p, bpe, a, lang, LatentVariable::semantic);
  const auto yb = encode_representations(p, bpe, b, lang, LatentVariable::semantic);
  const auto za = encode_representations(p, bpe, a, lang, LatentVariable::syntactic);
  const auto zb = encode_representations(p, bpe, b, lang, LatentVariable::syntactic);
  const auto ba = bag_of_vectors(p, bpe, a, lang);
  const auto bb = bag_of_vectors(p, bpe, b, lang);
  return similarity_report(ya, yb, za, zb, gold, seed, &ba, &bb);
}

// ---------------------------------------------------------------------------
// Retrieval

/// Queries and candidates of one length stratum.
struct Stratum {
  int length = 0;
  std::vector<std::size_t> queries;
  std::vector<std::size_t> candidates;
};

/// Groups sentences by token count (1..max_length), draws up to `per_length`
/// queries per stratum and leaves the rest as candidates. Strata with fewer
/// than two sentences are skipped and reported in `warnings`.
inline std::vector<Stratum> stratify(const std::vector<std::size_t>& lengths, int max_length, int per_length,
                                     std::uint64_t seed, std::vector<std::string>* warnings) {
  std::map<int, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < lengths.size(); ++i)
    if (static_cast<int>(lengths[i]) <= max_length && lengths[i] > 0) by_len[static_cast<int>(lengths[i])].push_back(i);
  std::vector<Stratum> out;
  for (auto& [len, idx] : by_len) {
    if (idx.size() < 2) {
      if (warnings) warnings->push_back("length " + std::to_string(len) + ": fewer than 2 sentences, skipped");
      continue;
    }
    Rng rng = make_rng(seed, "probe.stratum", static_cast<std::uint64_t>(len));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    const std::size_t nq = std::min<std::size_t>(static_cast<std::size_t>(per_length), idx.size() / 2);
    Stratum s;
    s.length = len;
    s.queries.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(nq, 1)));
    s.candidates.assign(idx.begin() + static_cast<std::ptrdiff_t>(s.queries.size()), idx.end());
    std::sort(s.queries.begin(), s.queries.end());
    std::sort(s.candidates.begin(), s.candidates.end());
    out.push_back(std::move(s));
  }
  return out;
}

/// Mean score of retrieving, for every query, its nearest candidate under
/// `rep` (ties to the lowest index) and scoring the pair with `metric`.
template <class Metric>
double retrieval_score(const std::vector<Stratum>& strata, const Eigen::MatrixXd& rep, Metric&& metric) {
  double total = 0;
  long n = 0;
  for (const auto& s : strata)
    for (auto q : s.queries) {
      std::size_t best = s.candidates.front();
      double best_sim = -std::numeric_limits<double>::infinity();
      for (auto c : s.candidates) {
        const double sim = cosine(rep.row(static_cast<Eigen::Index>(q)), rep.row(static_cast<Eigen::Index>(c)));
        if (sim > best_sim) {
          best_sim = sim;
          best = c;
        }
      }
      total += metric(q, best);
      ++n;
    }
  return n ? total / static_cast<double>(n) : 0.0;
}

template <class Metric>
double oracle_score(const std::vector<Stratum>& strata, Metric&& metric) {
  double total = 0;
  long n = 0;
  for (const auto& s : strata)
    for (auto q : s.queries) {
      double best = -std::numeric_limits<double>::infinity();
      for (auto c : s.candidates) best = std::max(best, metric(q, c));
      total += best;
      ++n;
    }
  return n ? total / static_cast<double>(n) : 0.0;
}

template <class Metric>
double random_score(const std::vector<Stratum>& strata, Metric&& metric, std::uint64_t seed, const std::string& name) {
  double acc = 0;
  for (int run = 0; run < kRandomRuns; ++run) {
    Rng rng = make_rng(seed, "probe." + name + ".random", static_cast<std::uint64_t>(run));
    double total = 0;
    long n = 0;
    for (const auto& s : strata)
      for (auto q : s.queries) {
        total += metric(q, s.candidates[uniform_index(rng, s.candidates.size())]);
        ++n;
      }
    acc += n ? total / static_cast<double>(n) : 0.0;
  }
  return acc / kRandomRuns;
}

/// Representations the retrieval probes compare.
struct ProbeRepresentations {
  Eigen::MatrixXd sem, syn, bov;
};

template <class S>
ProbeRepresentations probe_representations(ModelParams<S>& p, const BpeModel& bpe, const std::vector<Words>& sentences,
                                           const std::string& lang) {
  return {encode_representations(p, bpe, sentences, lang, LatentVariable::semantic),
          encode_representations(p, bpe, sentences, lang, LatentVariable::syntactic), bag_of_vectors(p, bpe, sentences, lang)};
}

struct SyntaxProbeResult {
  ProbeReport pos;       // POS accuracy of the retrieved neighbour
  ProbeReport f1;        // labeled F1 of the retrieved neighbour
};

struct SyntaxProbeOptions {
  int max_length = 30;
  int per_length = 300;
  std::uint64_t seed = 1;
};

/// Syntactic retrieval over a parse bank: nearest candidate of equal length,
/// scored by POS accuracy and labeled F1 against the query's gold parse.
inline SyntaxProbeResult syntax_probe_from(const ProbeRepresentations& reps, const ParseBank& bank,
                                           const SyntaxProbeOptions& opt) {
  std::vector<std::size_t> lengths;
  for (const auto& e : bank.entries) lengths.push_back(e.tokens.size());
  SyntaxProbeResult res;
  std::vector<std::string> warnings;
  const auto strata = stratify(lengths, opt.max_length, opt.per_length, opt.seed, &warnings);
  long n = 0;
  for (const auto& s : strata) n += static_cast<long>(s.queries.size());
  auto pos = [&](std::size_t q, std::size_t c) { return pos_accuracy(bank.entries[q].pos, bank.entries[c].pos); };
  auto f1 = [&](std::size_t q, std::size_t c) { return labeled_f1(bank.entries[q].tree, bank.entries[c].tree); };
  auto fill = [&](ProbeReport& r, const char* name, auto&& metric) {
    r.name = name;
    r.kind = ProbeKind::syntactic;
    r.n = n;
    r.warnings = warnings;
    if (strata.empty()) {
      r.warnings.push_back("no usable strata");
      return;
    }
    r.sem = retrieval_score(strata, reps.sem, metric);
    r.syn = retrieval_score(strata, reps.syn, metric);
    if (reps.bov.rows() > 0) r.bov = retrieval_score(strata, reps.bov, metric);
    r.oracle = oracle_score(strata, metric);
    r.random = random_score(strata, metric, opt.seed, name);
    r.finalize();
  };
  fill(res.pos, "syntax_pos", pos);
  fill(res.f1, "syntax_f1", f1);
  return res;
}

template <class S>
SyntaxProbeResult syntax_probe(ModelParams<S>& p, const BpeModel& bpe, const ParseBank& bank, const SyntaxProbeOptions& opt) {
  std::vector<Words> sentences;
  for (const auto& e : bank.entries) sentences.push_back(e.tokens);
  return syntax_probe_from(probe_representations(p, bpe, sentences, bank.lang), bank, opt);
}

/// Gold-label retrieval: for each query, the nearest other sentence (whole
/// pool, any length) and whether it carries the same label. Oracle is 1 when
/// a same-label candidate exists; Random draws a uniform other sentence.
inline ProbeReport label_retrieval_from(const ProbeRepresentations& reps, const std::vector<long>& labels,
                                        const std::string& name, ProbeKind kind, int max_queries,
                                        std::uint64_t seed) {
  ProbeReport r;
  r.name = name;
  r.kind = kind;
  const std::size_t N = labels.size();
  if (N < 2) throw Error(name + ": need at least two sentences");
  std::vector<std::size_t> queries(N);
  for (std::size_t i = 0; i < N; ++i) queries[i] = i;
  Rng rng = make_rng(seed, "probe." + name + ".queries");
  for (std::size_t i = N; i > 1; --i) std::swap(queries[i - 1], queries[uniform_index(rng, i)]);
  if (max_queries > 0 && queries.size() > static_cast<std::size_t>(max_queries)) queries.resize(static_cast<std::size_t>(max_queries));
  std::sort(queries.begin(), queries.end());
  auto score = [&](const Eigen::MatrixXd& rep) {
    double hits = 0;
    for (auto q : queries) {
      std::size_t best = q == 0 ? 1 : 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < N; ++c) {
        if (c == q) continue;
        const double sim = cosine(rep.row(static_cast<Eigen::Index>(q)), rep.row(static_cast<Eigen::Index>(c)));
        if (sim > best_sim) {
          best_sim = sim;
          best = c;
        }
      }
      hits += labels[best] == labels[q] ? 1.0 : 0.0;
    }
    return hits / static_cast<double>(queries.size());
  };
  r.sem = score(reps.sem);
  r.syn = score(reps.syn);
  if (reps.bov.rows() > 0) r.bov = score(reps.bov);
  double oracle = 0;
  for (auto q : queries) {
    bool any = false;
    for (std::size_t c = 0; c < N && !any; ++c) any = c != q && labels[c] == labels[q];
    oracle += any ? 1.0 : 0.0;
  }
  r.oracle = oracle / static_cast<double>(queries.size());
  double acc = 0;
  for (int run = 0; run < kRandomRuns; ++run) {
    Rng rr = make_rng(seed, "probe." + name + ".random", static_cast<std::uint64_t>(run));
    double hits = 0;
    for (auto q : queries) {
      std::size_t c = uniform_index(rr, N - 1);
      if (c >= q) ++c;
      hits += labels[c] == labels[q] ? 1.0 : 0.0;
    }
    acc += hits / static_cast<double>(queries.size());
  }
  r.random = acc / kRandomRuns;
  r.n = static_cast<long>(queries.size());
  r.finalize();
  return r;
}

/// Semantic retrieval: does the neighbour realize the query's frame?
inline ProbeReport frame_retrieval_from(const ProbeRepresentations& reps, const std::vector<long>& frames,
                                        int max_queries, std::uint64_t seed) {
  return label_retrieval_from(reps, frames, "frame_retrieval", ProbeKind::semantic, max_queries, seed);
}

/// Syntactic retrieval: does the neighbour have the query's full POS
/// sequence? Sentence-level POS accuracy; where templates are
/// POS-distinguishable this is template identity.
inline ProbeReport template_retrieval_from(const ProbeRepresentations& reps, const ParseBank& bank, int max_queries,
                                           std::uint64_t seed) {
  std::map<std::vector<std::string>, long> ids;
  std::vector<long> labels;
  for (const auto& e : bank.entries) labels.push_back(ids.emplace(e.pos, static_cast<long>(ids.size())).first->second);
  return label_retrieval_from(reps, labels, "template_retrieval", ProbeKind::syntactic, max_queries, seed);
}

}  // namespace mvg
