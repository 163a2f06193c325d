#pragma once

// Exemplar-controlled generation by latent swapping, and nearest-neighbour
// retrieval over the two latent representations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mvgvae/corpus.hpp"
#include "mvgvae/network.hpp"
#include "mvgvae/subword.hpp"
#include "mvgvae/util/parallel.hpp"

namespace mvg {

struct GenerationRequest {
  Words sem;
  std::string sem_lang;
  Words syn;
  std::string syn_lang;
  std::string tgt_lang;
  int beam = 10;
  /// Maximum number of generated subwords after the tag, end token included.
  int max_len = 64;

  void validate() const {
    if (syn_lang != tgt_lang) throw Error("generation: exemplar language must equal the target language");
    if (beam < 1) throw Error("generation: beam must be >= 1");
    if (max_len < 1) throw Error("generation: max_len must be >= 1");
  }

  static GenerationRequest from_triple(const EvalTriple& t, int beam, int max_len) {
    return {t.sem, t.sem_lang, t.syn, t.tgt_lang, t.tgt_lang, beam, max_len};
  }
};

struct LatentPair {
  Eigen::VectorXd y;
  Eigen::VectorXd z;
};

struct Generation {
  Words words;
  std::vector<int> ids;  // generated subwords, tag and end token excluded
  double score = 0;      // log-probability divided by generated length
  bool truncated = false;
};

/// Posterior means: y from the shared semantic encoder on the semantic
/// input, z from the target language's syntactic encoder on the exemplar.
template <class S>
LatentPair encode_latents(ModelParams<S>& p, const BpeModel& bpe, const GenerationRequest& req) {
  req.validate();
  p.config.lang_index(req.sem_lang);
  p.config.lang_index(req.tgt_lang);
  const SubwordSeq sem = bpe.encode(req.sem, req.sem_lang);
  const SubwordSeq syn = bpe.encode(req.syn, req.syn_lang);
  return {sem_encode(p, sem).mu, syn_encode(p, syn, req.tgt_lang).mu};
}

namespace detail {

struct Hyp {
  std::vector<int> ids;
  double logp = 0;
  int row = 0;  // decoder state row
};

inline bool emittable(const ModelConfig& c, int id) { return id == special::eos || !c.is_special(id) || id == special::unk; }

}  // namespace detail

/// Beam search with length-normalized scoring. The decoder reads <s> and the
/// forced target tag before the first scored step. Candidates are ranked by
/// cumulative log-probability, ties broken by (hypothesis, token) order.
template <class S>
Generation beam_search(const ModelParams<S>& p, const LatentPair& lat, int tag, int beam, int max_len) {
  using M = ad::Mat<S>;
  if (beam < 1) throw Error("beam_search: beam must be >= 1");
  const M y = lat.y.transpose().template cast<S>();
  const M z = lat.z.transpose().template cast<S>();
  DecoderState<S> st = decoder_start(p, y, z);
  decoder_step(p, st, {special::bos});
  M logp = decoder_step(p, st, {tag});

  std::vector<detail::Hyp> alive = {detail::Hyp{{}, 0.0, 0}};
  std::vector<detail::Hyp> finished;
  struct Cand {
    double logp;
    int hyp;
    int token;
  };
  for (int step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<Cand> cands;
    for (int h = 0; h < static_cast<int>(alive.size()); ++h) {
      const auto row = logp.row(alive[h].row);
      // Per hypothesis only the best `beam` tokens can survive.
      std::vector<Cand> local;
      for (int v = 0; v < p.config.vocab; ++v)
        if (detail::emittable(p.config, v)) local.push_back({alive[h].logp + static_cast<double>(row(v)), h, v});
      const auto keep = std::min<std::size_t>(local.size(), static_cast<std::size_t>(beam));
      std::partial_sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(keep), local.end(),
                        [](const Cand& a, const Cand& b) { return a.logp > b.logp || (a.logp == b.logp && a.token < b.token); });
      cands.insert(cands.end(), local.begin(), local.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.hyp != b.hyp) return a.hyp < b.hyp;
      return a.token < b.token;
    });
    std::vector<detail::Hyp> next;
    std::vector<int> rows, tokens;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size() + finished.size()) >= beam) break;
      detail::Hyp h = alive[c.hyp];
      h.logp = c.logp;
      if (c.token == special::eos) {
        finished.push_back(std::move(h));
        continue;
      }
      h.ids.push_back(c.token);
      rows.push_back(alive[c.hyp].row);
      tokens.push_back(c.token);
      h.row = static_cast<int>(next.size());
      next.push_back(std::move(h));
    }
    if (static_cast<int>(finished.size()) >= beam || next.empty()) {
      alive.clear();
      break;
    }
    // Gather the surviving decoder rows and advance them.
    DecoderState<S> ns;
    ns.h.resize(static_cast<Eigen::Index>(rows.size()), st.h.cols());
    ns.c.resize(ns.h.rows(), st.c.cols());
    ns.yz.resize(ns.h.rows(), st.yz.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      ns.h.row(r) = st.h.row(rows[r]);
      ns.c.row(r) = st.c.row(rows[r]);
      ns.yz.row(r) = st.yz.row(rows[r]);
    }
    st = std::move(ns);
    logp = decoder_step(p, st, tokens);
    alive = std::move(next);
  }

  auto norm = [](const detail::Hyp& h, bool ended) {
    return h.logp / static_cast<double>(h.ids.size() + (ended ? 1 : 0));
  };
  Generation g;
  const detail::Hyp* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& h : finished)
    if (!best || norm(h, true) > best_score) {
      best = &h;
      best_score = norm(h, true);
    }
  if (!best) {
    g.truncated = true;
    for (const auto& h : alive)
      if (!best || norm(h, false) > best_score) {
        best = &h;
        best_score = norm(h, false);
      }
  }
  if (best) {
    g.ids = best->ids;
    g.score = best_score;
  }
  return g;
}

/// Greedy decoding: the most probable emittable token at every step.
template <class S>
Generation greedy_decode(const ModelParams<S>& p, const LatentPair& lat, int tag, int max_len) {
  using M = ad::Mat<S>;
  DecoderState<S> st = decoder_start(p, M(lat.y.transpose().template cast<S>()), M(lat.z.transpose().template cast<S>()));
  decoder_step(p, st, {special::bos});
  M logp = decoder_step(p, st, {tag});
  Generation g;
  double total = 0;
  for (int step = 0; step < max_len; ++step) {
    int arg = -1;
    for (int v = 0; v < p.config.vocab; ++v)
      if (detail::emittable(p.config, v) && (arg < 0 || logp(0, v) > logp(0, arg))) arg = v;
    total += static_cast<double>(logp(0, arg));
    if (arg == special::eos) {
      g.score = total / static_cast<double>(g.ids.size() + 1);
      return g;
    }
    g.ids.push_back(arg);
    logp = decoder_step(p, st, {arg});
  }
  g.truncated = true;
  g.score = g.ids.empty() ? 0.0 : total / static_cast<double>(g.ids.size());
  return g;
}

template <class S>
Generation generate_from_latents(const ModelParams<S>& p, const BpeModel& bpe, const LatentPair& lat,
                                 const std::string& tgt_lang, int beam, int max_len) {
  Generation g = beam_search(p, lat, bpe.tag_id(tgt_lang), beam, max_len);
  g.words = bpe.decode(g.ids);
  return g;
}

template <class S>
Generation controlled_generate(ModelParams<S>& p, const BpeModel& bpe, const GenerationRequest& req) {
  const LatentPair lat = encode_latents(p, bpe, req);
  return generate_from_latents(p, bpe, lat, req.tgt_lang, req.beam, req.max_len);
}

/// Generates for every triple. Encoding runs serially; decoding runs on up
/// to `threads` workers and is order-independent.
template <class S>
std::vector<Generation> generate_triples(ModelParams<S>& p, const BpeModel& bpe, const std::vector<EvalTriple>& triples,
                                         int beam, int max_len, int threads = 0) {
  std::vector<LatentPair> lat;
  lat.reserve(triples.size());
  for (const auto& t : triples) lat.push_back(encode_latents(p, bpe, GenerationRequest::from_triple(t, beam, max_len)));
  std::vector<Generation> out(triples.size());
  const ModelParams<S>& cp = p;
  parallel_for(triples.size(), [&](std::size_t i) {
    out[i] = generate_from_latents(cp, bpe, lat[i], triples[i].tgt_lang, beam, max_len);
  }, threads > 0 ? threads : thread_budget());
  return out;
}

// ---------------------------------------------------------------------------
// Representations and retrieval

enum class LatentVariable { semantic, syntactic };

inline const char* to_string(LatentVariable v) { return v == LatentVariable::semantic ? "semantic" : "syntactic"; }

inline LatentVariable parse_variable(const std::string& s) {
  if (s == "semantic" || s == "sem") return LatentVariable::semantic;
  if (s == "syntactic" || s == "syn") return LatentVariable::syntactic;
  throw Error("unknown latent variable '" + s + "' (expected semantic or syntactic)");
}

/// One row per sentence: the vMF mean direction or the Gaussian mean.
template <class S>
Eigen::MatrixXd encode_representations(ModelParams<S>& p, const BpeModel& bpe, const std::vector<Words>& sentences,
                                       const std::string& lang, LatentVariable var) {
  const int lid = p.config.lang_index(lang);
  const int dim = var == LatentVariable::semantic ? p.config.latent.d_sem : p.config.latent.d_syn;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(sentences.size()), dim);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < sentences.size(); start += kChunk) {
    const std::size_t end = std::min(sentences.size(), start + kChunk);
    std::vector<SubwordSeq> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(bpe.encode(sentences[i], lang));
    std::vector<const SubwordSeq*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    ad::Graph<S> g;
    const ad::Var v = var == LatentVariable::semantic ? net::sem_mean(g, p, ptrs) : net::syn_posterior(g, p, ptrs, lid).mu;
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        g.value(v).template cast<double>();
  }
  return out;
}

/// Averaged semantic-encoder embeddings, the bag-of-vectors baseline.
template <class S>
Eigen::MatrixXd bag_of_vectors(const ModelParams<S>& p, const BpeModel& bpe, const std::vector<Words>& sentences,
                               const std::string& lang) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sentences.size()), p.config.d_emb);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto ids = net::content_ids(p.config, bpe.encode(sentences[i], lang));
    for (int id : ids) out.row(static_cast<Eigen::Index>(i)) += p.sem_embed.value.row(id).template cast<double>();
    if (!ids.empty()) out.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(ids.size());
  }
  return out;
}

inline double cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

struct Neighbor {
  std::size_t index = 0;
  double score = 0;
};

/// Top-k pool rows by cosine similarity to `query`; ties go to the lower index.
inline std::vector<Neighbor> rank_by_cosine(const Eigen::RowVectorXd& query, const Eigen::MatrixXd& pool, std::size_t k) {
  std::vector<Neighbor> all(static_cast<std::size_t>(pool.rows()));
  for (Eigen::Index i = 0; i < pool.rows(); ++i) all[static_cast<std::size_t>(i)] = {static_cast<std::size_t>(i), cosine(query, pool.row(i))};
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
  });
  all.resize(k);
  return all;
}

template <class S>
std::vector<Neighbor> nearest_neighbors(ModelParams<S>& p, const BpeModel& bpe, const Words& query,
                                        const std::vector<Words>& pool, const std::string& lang, LatentVariable var,
                                        std::size_t k) {
  if (pool.empty()) throw Error("nearest_neighbors: empty pool");
  if (k == 0) return {};
  const Eigen::MatrixXd q = encode_representations(p, bpe, {query}, lang, var);
  const Eigen::MatrixXd m = encode_representations(p, bpe, pool, lang, var);
  return rank_by_cosine(q.row(0), m, k);
}

}  // namespace mvg
