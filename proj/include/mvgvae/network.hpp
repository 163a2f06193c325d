#pragma once

// Model parameters and the differentiable encoders, decoder and word-position
// classifier, plus a tape-free decoder step for inference and the checkpoint
// container.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvgvae/autodiff.hpp"
#include "mvgvae/latent.hpp"
#include "mvgvae/subword.hpp"
#include "mvgvae/util/error.hpp"
#include "mvgvae/util/rng.hpp"

namespace mvg {

struct ModelConfig {
  std::vector<std::string> languages;  // same order as the BPE model's tags
  int vocab = 0;
  int d_emb = 128;
  int hidden = 512;
  int max_len = 64;
  double init_scale = 0.1;
  LatentConfig latent;

  void validate() const {
    if (languages.empty()) throw ConfigError("model: at least one language required");
    if (vocab < special::first_tag + static_cast<int>(languages.size()))
      throw ConfigError("model: vocab smaller than the reserved symbols");
    if (d_emb < 1 || hidden < 1) throw ConfigError("model: d_emb and hidden must be >= 1");
    if (max_len < 1) throw ConfigError("model: max_len must be >= 1");
    if (!(init_scale > 0)) throw ConfigError("model: init_scale must be > 0");
    latent.validate();
  }
  int lang_index(const std::string& code) const {
    for (std::size_t i = 0; i < languages.size(); ++i)
      if (languages[i] == code) return static_cast<int>(i);
    throw Error("model: undeclared language " + code);
  }
  bool is_special(int id) const { return id < special::first_tag + static_cast<int>(languages.size()); }
  int tag_id(int lang) const { return special::first_tag + lang; }
};

inline nlohmann::ordered_json to_json(const LatentConfig& c) {
  return {{"d_sem", c.d_sem}, {"d_syn", c.d_syn}, {"kappa", c.kappa}, {"lambda_y", c.lambda_y}, {"lambda_z", c.lambda_z}};
}

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["languages"] = c.languages;
  j["vocab"] = c.vocab;
  j["d_emb"] = c.d_emb;
  j["hidden"] = c.hidden;
  j["max_len"] = c.max_len;
  j["init_scale"] = c.init_scale;
  j["latent"] = to_json(c.latent);
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.languages = j.at("languages").get<std::vector<std::string>>();
  c.vocab = j.at("vocab").get<int>();
  c.d_emb = j.at("d_emb").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.init_scale = j.at("init_scale").get<double>();
  const auto& l = j.at("latent");
  c.latent.d_sem = l.at("d_sem").get<int>();
  c.latent.d_syn = l.at("d_syn").get<int>();
  c.latent.kappa = l.at("kappa").get<double>();
  c.latent.lambda_y = l.at("lambda_y").get<double>();
  c.latent.lambda_z = l.at("lambda_z").get<double>();
  return c;
}

template <class S>
struct LstmParams {
  ad::Param<S> wx, wh, b;
};

template <class S>
struct FfnParams {
  std::vector<ad::Param<S>> w, b;
};

template <class S>
struct SynEncoderParams {
  LstmParams<S> fwd, bwd;
  FfnParams<S> ffn;
};

/// Every trainable tensor. Semantic components are shared; syntactic
/// encoders are indexed by language.
template <class S>
struct ModelParams {
  ModelConfig config;
  ad::Param<S> sem_embed, syn_embed, dec_embed;
  FfnParams<S> sem_ffn;
  std::vector<SynEncoderParams<S>> syn;
  LstmParams<S> dec;
  ad::Param<S> dec_init_w, dec_init_b;
  ad::Param<S> out_w, out_b;
  FfnParams<S> wpl_ffn;

  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for_each([&](const ad::Param<S>& p) { n += static_cast<std::size_t>(p.value.size()); });
    return n;
  }
  void zero_grad() {
    for_each([](ad::Param<S>& p) { p.zero_grad(); });
  }

  /// Fresh parameters, uniform in [-init_scale, init_scale] with recurrent
  /// forget-gate biases set to +1. Deterministic in `seed`.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

 private:
  template <class Self, class F>
  static void visit(Self& m, F& f) {
    f(m.sem_embed);
    f(m.syn_embed);
    f(m.dec_embed);
    visit_ffn(m.sem_ffn, f);
    for (auto& e : m.syn) {
      visit_lstm(e.fwd, f);
      visit_lstm(e.bwd, f);
      visit_ffn(e.ffn, f);
    }
    visit_lstm(m.dec, f);
    f(m.dec_init_w);
    f(m.dec_init_b);
    f(m.out_w);
    f(m.out_b);
    visit_ffn(m.wpl_ffn, f);
  }
  template <class L, class F>
  static void visit_lstm(L& l, F& f) {
    f(l.wx);
    f(l.wh);
    f(l.b);
  }
  template <class N, class F>
  static void visit_ffn(N& n, F& f) {
    for (std::size_t i = 0; i < n.w.size(); ++i) {
      f(n.w[i]);
      f(n.b[i]);
    }
  }
};

namespace detail {

template <class S>
ad::Param<S> make_param(std::string name, Eigen::Index rows, Eigen::Index cols) {
  ad::Param<S> p;
  p.name = std::move(name);
  p.value.setZero(rows, cols);
  p.grad.setZero(rows, cols);
  return p;
}

template <class S>
LstmParams<S> make_lstm(const std::string& name, int in, int hidden) {
  return {make_param<S>(name + ".wx", in, 4 * hidden), make_param<S>(name + ".wh", hidden, 4 * hidden),
          make_param<S>(name + ".b", 1, 4 * hidden)};
}

template <class S>
FfnParams<S> make_ffn(const std::string& name, const std::vector<int>& dims) {
  FfnParams<S> f;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    f.w.push_back(make_param<S>(name + ".w" + std::to_string(i), dims[i], dims[i + 1]));
    f.b.push_back(make_param<S>(name + ".b" + std::to_string(i), 1, dims[i + 1]));
  }
  return f;
}

}  // namespace detail

template <class S>
ModelParams<S> ModelParams<S>::init(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  using detail::make_ffn;
  using detail::make_lstm;
  using detail::make_param;
  ModelParams m;
  m.config = c;
  const int V = c.vocab, E = c.d_emb, H = c.hidden, ds = c.latent.d_sem, dz = c.latent.d_syn;
  m.sem_embed = make_param<S>("sem_embed", V, E);
  m.syn_embed = make_param<S>("syn_embed", V, E);
  m.dec_embed = make_param<S>("dec_embed", V, E);
  m.sem_ffn = make_ffn<S>("sem_ffn", {E, H, ds});
  for (const auto& lang : c.languages) {
    SynEncoderParams<S> e;
    e.fwd = make_lstm<S>("syn." + lang + ".fwd", E, H);
    e.bwd = make_lstm<S>("syn." + lang + ".bwd", E, H);
    e.ffn = make_ffn<S>("syn." + lang + ".ffn", {2 * H, H, 2 * dz});
    m.syn.push_back(std::move(e));
  }
  m.dec = make_lstm<S>("dec", E + ds + dz, H);
  m.dec_init_w = make_param<S>("dec_init.w", ds + dz, H);
  m.dec_init_b = make_param<S>("dec_init.b", 1, H);
  m.out_w = make_param<S>("out.w", H, V);
  m.out_b = make_param<S>("out.b", 1, V);
  m.wpl_ffn = make_ffn<S>("wpl_ffn", {E + dz, H, H, c.max_len});

  Rng rng = make_rng(seed, "init");
  const double s = c.init_scale;
  m.for_each([&](ad::Param<S>& p) {
    for (Eigen::Index k = 0; k < p.value.size(); ++k)
      p.value.data()[k] = static_cast<S>((2.0 * uniform01(rng) - 1.0) * s);
  });
  auto forget_bias = [H](LstmParams<S>& l) { l.b.value.middleCols(H, H).setConstant(S(1)); };
  for (auto& e : m.syn) {
    forget_bias(e.fwd);
    forget_bias(e.bwd);
  }
  forget_bias(m.dec);
  return m;
}

/// Converts parameters to another scalar type.
template <class T, class S>
ModelParams<T> cast_params(const ModelParams<S>& src) {
  ModelParams<T> out = ModelParams<T>::init(src.config, 0);
  std::vector<const ad::Param<S>*> from;
  src.for_each([&](const ad::Param<S>& p) { from.push_back(&p); });
  std::size_t i = 0;
  out.for_each([&](ad::Param<T>& p) {
    p.value = from[i++]->value.template cast<T>();
    p.grad.setZero(p.value.rows(), p.value.cols());
  });
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable components

namespace net {

using ad::Graph;
using ad::Var;

template <class S>
Var ffn(Graph<S>& g, FfnParams<S>& f, Var x) {
  for (std::size_t i = 0; i < f.w.size(); ++i) {
    x = g.affine(x, f.w[i], f.b[i]);
    if (i + 1 < f.w.size()) x = g.tanh(x);
  }
  return x;
}

/// Token IDs of a sequence with the reserved symbols removed.
inline std::vector<int> content_ids(const ModelConfig& c, const SubwordSeq& s) {
  std::vector<int> out;
  for (int id : s.ids)
    if (!c.is_special(id)) out.push_back(id);
  return out;
}

/// Mean directions of the semantic posteriors, one unit row per sequence.
template <class S>
Var sem_mean(Graph<S>& g, ModelParams<S>& p, const std::vector<const SubwordSeq*>& seqs) {
  std::vector<std::vector<int>> bags;
  for (const auto* s : seqs) {
    bags.push_back(content_ids(p.config, *s));
    if (bags.back().empty()) throw Error("sem_encode: sequence holds only special tokens");
  }
  return g.row_normalize(ffn(g, p.sem_ffn, g.bag_mean(p.sem_embed, bags)));
}

struct SynPosterior {
  Var mu, logsig;
};

/// Syntactic posteriors of sequences of one language.
template <class S>
SynPosterior syn_posterior(Graph<S>& g, ModelParams<S>& p, const std::vector<const SubwordSeq*>& seqs, int lang) {
  if (lang < 0 || lang >= static_cast<int>(p.syn.size())) throw Error("syn_encode: undeclared language");
  if (seqs.empty()) throw Error("syn_encode: empty batch");
  auto& enc = p.syn[lang];
  const int H = p.config.hidden;
  const auto B = static_cast<Eigen::Index>(seqs.size());
  int T = 0;
  for (const auto* s : seqs) T = std::max(T, static_cast<int>(s->size()));
  std::vector<Var> x(T);
  std::vector<std::vector<S>> mask(T, std::vector<S>(B, S(0)));
  for (int t = 0; t < T; ++t) {
    std::vector<int> ids(B, special::pad);
    for (Eigen::Index r = 0; r < B; ++r)
      if (t < static_cast<int>(seqs[r]->size())) {
        ids[r] = seqs[r]->ids[t];
        mask[t][r] = S(1);
      }
    x[t] = g.lookup(p.syn_embed, ids);
  }
  const Var zero = g.constant(ad::Mat<S>::Zero(B, H));
  Var hf = zero, cf = zero, hb = zero, cb = zero;
  for (int t = 0; t < T; ++t) std::tie(hf, cf) = g.lstm(x[t], hf, cf, enc.fwd.wx, enc.fwd.wh, enc.fwd.b, mask[t]);
  for (int t = T - 1; t >= 0; --t)
    std::tie(hb, cb) = g.lstm(x[t], hb, cb, enc.bwd.wx, enc.bwd.wh, enc.bwd.b, mask[t]);
  const Var out = ffn(g, enc.ffn, g.concat_cols({hf, hb}));
  const int d = p.config.latent.d_syn;
  return {g.slice_cols(out, 0, d), g.slice_cols(out, d, d)};
}

/// Syntactic posteriors of sequences of mixed languages, in input order.
template <class S>
SynPosterior syn_posterior_mixed(Graph<S>& g, ModelParams<S>& p, const std::vector<const SubwordSeq*>& seqs) {
  std::map<int, std::vector<int>> groups;
  for (std::size_t r = 0; r < seqs.size(); ++r) groups[p.config.lang_index(seqs[r]->lang)].push_back(static_cast<int>(r));
  if (groups.size() == 1) return syn_posterior(g, p, seqs, groups.begin()->first);
  std::vector<Var> mus, sigs;
  std::vector<int> where(seqs.size());
  int row = 0;
  for (const auto& [lang, rows] : groups) {
    std::vector<const SubwordSeq*> part;
    for (int r : rows) {
      part.push_back(seqs[r]);
      where[r] = row++;
    }
    const SynPosterior sp = syn_posterior(g, p, part, lang);
    mus.push_back(sp.mu);
    sigs.push_back(sp.logsig);
  }
  return {g.gather_rows(g.concat_rows(mus), where), g.gather_rows(g.concat_rows(sigs), where)};
}

/// Teacher-forced decoder logits. Inputs are column-aligned token IDs; row
/// t * B + b of the result holds the logits after reading inputs[b][0..t].
template <class S>
Var decoder_logits(Graph<S>& g, ModelParams<S>& p, Var y, Var z, const std::vector<std::vector<int>>& inputs) {
  const auto B = static_cast<Eigen::Index>(inputs.size());
  const auto& yv = g.value(y);
  const auto& zv = g.value(z);
  if (yv.rows() != B || zv.rows() != B || yv.cols() != p.config.latent.d_sem || zv.cols() != p.config.latent.d_syn)
    throw Error("decode_logits: latent dimension mismatch");
  int T = 0;
  for (const auto& in : inputs) T = std::max(T, static_cast<int>(in.size()));
  const Var yz = g.concat_cols({y, z});
  Var h = g.affine(yz, p.dec_init_w, p.dec_init_b);
  Var c = g.constant(ad::Mat<S>::Zero(B, p.config.hidden));
  std::vector<Var> hs;
  for (int t = 0; t < T; ++t) {
    std::vector<int> ids(B, special::pad);
    std::vector<S> mask(B, S(0));
    for (Eigen::Index r = 0; r < B; ++r)
      if (t < static_cast<int>(inputs[r].size())) {
        ids[r] = inputs[r][t];
        mask[r] = S(1);
      }
    const Var x = g.concat_cols({g.lookup(p.dec_embed, ids), yz});
    std::tie(h, c) = g.lstm(x, h, c, p.dec.wx, p.dec.wh, p.dec.b, mask);
    hs.push_back(h);
  }
  return g.affine(g.concat_rows(hs), p.out_w, p.out_b);
}

/// Summed negative log-likelihood of `seqs` under the decoder. The decoder
/// reads <s> followed by the sequence (tag first) and predicts the sequence
/// followed by </s>.
template <class S>
Var decoder_nll(Graph<S>& g, ModelParams<S>& p, Var y, Var z, const std::vector<const SubwordSeq*>& seqs) {
  const auto B = seqs.size();
  std::vector<std::vector<int>> inputs(B);
  int T = 0;
  for (std::size_t r = 0; r < B; ++r) {
    inputs[r].push_back(special::bos);
    inputs[r].insert(inputs[r].end(), seqs[r]->ids.begin(), seqs[r]->ids.end());
    T = std::max(T, static_cast<int>(inputs[r].size()));
  }
  const Var logits = decoder_logits(g, p, y, z, inputs);
  std::vector<int> targets(static_cast<std::size_t>(T) * B, special::pad);
  std::vector<S> weights(targets.size(), S(0));
  for (int t = 0; t < T; ++t)
    for (std::size_t r = 0; r < B; ++r) {
      const int len = static_cast<int>(seqs[r]->size());
      if (t > len) continue;
      targets[t * B + r] = t < len ? seqs[r]->ids[t] : special::eos;
      weights[t * B + r] = S(1);
    }
  return g.softmax_xent(logits, std::move(targets), std::move(weights));
}

/// Position logits for every non-tag position of every sequence, row order
/// sequence-major. `z` has one row per sequence. Fills `targets` with the
/// word boundary of each row.
template <class S>
Var wpl_logits(Graph<S>& g, ModelParams<S>& p, const std::vector<const SubwordSeq*>& seqs, Var z,
               std::vector<int>* targets = nullptr) {
  std::vector<int> ids, owner;
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    const auto& s = *seqs[r];
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (s.word_boundary[t] == SubwordSeq::kTagBoundary) continue;
      if (s.word_boundary[t] >= p.config.max_len) throw Error("wpl: word position exceeds max_len");
      ids.push_back(s.ids[t]);
      owner.push_back(static_cast<int>(r));
      if (targets) targets->push_back(s.word_boundary[t]);
    }
  }
  if (ids.empty()) throw Error("wpl: no content positions");
  const Var x = g.concat_cols({g.lookup(p.syn_embed, ids), g.gather_rows(z, owner)});
  return ffn(g, p.wpl_ffn, x);
}

}  // namespace net

// ---------------------------------------------------------------------------
// Single-sentence interface

template <class S>
VmfPosterior sem_encode(ModelParams<S>& p, const SubwordSeq& seq) {
  ad::Graph<S> g;
  const auto mu = net::sem_mean(g, p, {&seq});
  return {g.value(mu).row(0).transpose().template cast<double>(), p.config.latent.kappa};
}

template <class S>
GaussPosterior syn_encode(ModelParams<S>& p, const SubwordSeq& seq, const std::string& lang) {
  ad::Graph<S> g;
  const auto sp = net::syn_posterior(g, p, {&seq}, p.config.lang_index(lang));
  GaussPosterior out;
  out.mu = g.value(sp.mu).row(0).transpose().template cast<double>();
  out.sigma = g.value(sp.logsig).row(0).transpose().template cast<double>().array().exp().matrix();
  return out;
}

/// Teacher-forced logits for one decoder input sequence `prefix`, which
/// starts with <s> followed by the target-language tag.
template <class S>
ad::Mat<S> decode_logits(ModelParams<S>& p, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                         const std::vector<int>& prefix, int lang_tag) {
  if (y.size() != p.config.latent.d_sem || z.size() != p.config.latent.d_syn)
    throw Error("decode_logits: latent dimension mismatch");
  if (prefix.empty() || prefix[0] != special::bos) throw Error("decode_logits: prefix must start with <s>");
  if (prefix.size() > 1 && prefix[1] != lang_tag) throw Error("decode_logits: second input must be the language tag");
  ad::Graph<S> g;
  const auto yv = g.constant(y.transpose().template cast<S>());
  const auto zv = g.constant(z.transpose().template cast<S>());
  return g.value(net::decoder_logits(g, p, yv, zv, {prefix}));
}

template <class S>
ad::Mat<S> wpl_logits(ModelParams<S>& p, const SubwordSeq& seq, const Eigen::VectorXd& z) {
  ad::Graph<S> g;
  const auto zv = g.constant(z.transpose().template cast<S>());
  return g.value(net::wpl_logits(g, p, {&seq}, zv));
}

// ---------------------------------------------------------------------------
// Tape-free decoder for inference

template <class S>
struct DecoderState {
  ad::Mat<S> h, c, yz;
};

/// Decoder state before reading <s>, one row per hypothesis.
template <class S>
DecoderState<S> decoder_start(const ModelParams<S>& p, const ad::Mat<S>& y, const ad::Mat<S>& z) {
  DecoderState<S> st;
  st.yz.resize(y.rows(), y.cols() + z.cols());
  st.yz << y, z;
  st.h = st.yz * p.dec_init_w.value;
  st.h.rowwise() += p.dec_init_b.value.row(0);
  st.c.setZero(y.rows(), p.config.hidden);
  return st;
}

/// Reads one token per row and returns next-token log-probabilities.
template <class S>
ad::Mat<S> decoder_step(const ModelParams<S>& p, DecoderState<S>& st, const std::vector<int>& tokens) {
  using M = ad::Mat<S>;
  const Eigen::Index B = st.h.rows(), H = p.config.hidden, E = p.config.d_emb;
  M x(B, E + st.yz.cols());
  for (Eigen::Index r = 0; r < B; ++r) {
    x.row(r).head(E) = p.dec_embed.value.row(tokens[r]);
    x.row(r).tail(st.yz.cols()) = st.yz.row(r);
  }
  M pre(B, 4 * H);
  pre.noalias() = x * p.dec.wx.value;
  pre.noalias() += st.h * p.dec.wh.value;
  pre.rowwise() += p.dec.b.value.row(0);
  auto sig = [](const auto& m) { return (S(1) / (S(1) + (-m.array()).exp())).matrix(); };
  const M i = sig(pre.middleCols(0, H));
  const M f = sig(pre.middleCols(H, H));
  const M g = pre.middleCols(2 * H, H).array().tanh().matrix();
  const M o = sig(pre.middleCols(3 * H, H));
  st.c = f.cwiseProduct(st.c) + i.cwiseProduct(g);
  st.h = o.cwiseProduct(st.c.array().tanh().matrix());
  M logits(B, p.config.vocab);
  logits.noalias() = st.h * p.out_w.value;
  logits.rowwise() += p.out_b.value.row(0);
  for (Eigen::Index r = 0; r < B; ++r) {
    const S m = logits.row(r).maxCoeff();
    const S lse = m + std::log((logits.row(r).array() - m).exp().sum());
    logits.row(r).array() -= lse;
  }
  return logits;
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
// Layout (little-endian host order):
//   "MVGCKPT\0" | u32 version | u32 scalar bytes | u64 meta length | meta JSON
//   | u64 tensor count | per tensor: u32 name length, name, u64 rows, u64 cols, data

inline constexpr char kCheckpointMagic[8] = {'M', 'V', 'G', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  std::vector<double> data;  // row-major
};

struct CheckpointFile {
  std::uint32_t scalar_bytes = 4;
  nlohmann::ordered_json meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw Error("checkpoint: missing tensor " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
};

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const CheckpointFile& ck) {
  if (ck.scalar_bytes != 4 && ck.scalar_bytes != 8) throw Error("checkpoint: scalar size must be 4 or 8");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, ck.scalar_bytes);
  const std::string meta = ck.meta.dump();
  detail::put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::put<std::uint64_t>(out, ck.tensors.size());
  for (const auto& t : ck.tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols));
    for (double v : t.data) {
      if (ck.scalar_bytes == 4)
        detail::put<float>(out, static_cast<float>(v));
      else
        detail::put<double>(out, v);
    }
  }
  if (!out) throw Error("checkpoint: write failed for " + path);
}

inline CheckpointFile read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw Error("checkpoint: bad magic in " + path);
  if (detail::get<std::uint32_t>(in) != kCheckpointVersion) throw Error("checkpoint: unsupported version");
  CheckpointFile ck;
  ck.scalar_bytes = detail::get<std::uint32_t>(in);
  if (ck.scalar_bytes != 4 && ck.scalar_bytes != 8) throw Error("checkpoint: bad scalar size");
  std::string meta(detail::get<std::uint64_t>(in), '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!in) throw Error("checkpoint: truncated meta block");
  ck.meta = nlohmann::ordered_json::parse(meta);
  const auto n = detail::get<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < n; ++k) {
    NamedTensor t;
    t.name.resize(detail::get<std::uint32_t>(in));
    in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    t.rows = static_cast<Eigen::Index>(detail::get<std::uint64_t>(in));
    t.cols = static_cast<Eigen::Index>(detail::get<std::uint64_t>(in));
    t.data.resize(static_cast<std::size_t>(t.rows * t.cols));
    for (auto& v : t.data) v = ck.scalar_bytes == 4 ? detail::get<float>(in) : detail::get<double>(in);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <class S>
NamedTensor to_named(const std::string& name, const ad::Mat<S>& m) {
  NamedTensor t{name, m.rows(), m.cols(), {}};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

template <class S>
void from_named(const NamedTensor& t, ad::Mat<S>& m) {
  if (t.rows != m.rows() || t.cols != m.cols())
    throw Error("checkpoint: shape mismatch for " + t.name + " (file " + std::to_string(t.rows) + "x" +
                std::to_string(t.cols) + ", model " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<S>(t.data[static_cast<std::size_t>(k)]);
}

template <class S>
void add_params(CheckpointFile& ck, const ModelParams<S>& p) {
  ck.scalar_bytes = sizeof(S);
  ck.meta["model"] = to_json(p.config);
  p.for_each([&](const ad::Param<S>& q) { ck.tensors.push_back(to_named(q.name, q.value)); });
}

/// Builds parameters from a checkpoint whose model block defines the shapes.
template <class S>
ModelParams<S> params_from_checkpoint(const CheckpointFile& ck) {
  if (!ck.meta.contains("model")) throw Error("checkpoint: missing model block");
  ModelParams<S> p = ModelParams<S>::init(model_config_from_json(ck.meta["model"]), 0);
  p.for_each([&](ad::Param<S>& q) { from_named(ck.get(q.name), q.value); });
  return p;
}

}  // namespace mvg
