#pragma once

// Training objective (ELBO on both sides, PRL, WPL), Adam with global-norm
// clipping, and the training loop with dev-BLEU early stopping, checkpoints
// and exact resume.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvgvae/control.hpp"
#include "mvgvae/corpus.hpp"
#include "mvgvae/latent.hpp"
#include "mvgvae/metrics.hpp"
#include "mvgvae/network.hpp"
#include "mvgvae/util/rng.hpp"

namespace mvg {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip = 5.0;
  double noise = 0.9;
  /// Steps between dev evaluations; 0 evaluates once per epoch.
  int eval_every = 0;
  /// Non-improving evaluations tolerated before stopping; negative disables.
  int patience = 5;
  std::uint64_t seed = 1;
  int dev_beam = 4;
  int dev_max_len = 32;
  /// Stop after this many optimizer steps in total (0: no limit). Used to
  /// interrupt and resume runs.
  long max_steps = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(noise >= 0 && noise <= 1)) throw ConfigError("train: noise must lie in [0, 1]");
    if (!(lr > 0)) throw ConfigError("train: lr must be > 0");
    if (!(clip > 0)) throw ConfigError("train: clip must be > 0");
    if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
    if (dev_beam < 1 || dev_max_len < 1) throw ConfigError("train: dev_beam and dev_max_len must be >= 1");
    if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},     {"batch_size", c.batch_size}, {"lr", c.lr},
          {"beta1", c.beta1},       {"beta2", c.beta2},           {"adam_eps", c.adam_eps},
          {"clip", c.clip},         {"noise", c.noise},           {"eval_every", c.eval_every},
          {"patience", c.patience}, {"seed", c.seed},             {"dev_beam", c.dev_beam},
          {"dev_max_len", c.dev_max_len}, {"max_steps", c.max_steps}};
}

// ---------------------------------------------------------------------------
// Losses

/// One side of a batch: clean sequences (decoder targets, semantic encoder,
/// word positions) and the syntactic encoder's possibly noised input.
struct SideInput {
  std::vector<const SubwordSeq*> clean;
  std::vector<const SubwordSeq*> syn_input;
};

/// Reparameterization noise for one side. x0 rows are vMF(e1, kappa) draws;
/// eps rows are standard normal.
template <class S>
struct SideNoise {
  ad::Mat<S> x0_elbo, eps_elbo, x0_prl, eps_prl, eps_wpl;
};

/// Noise for a whole batch; `use_means` replaces every sample by the
/// posterior mean.
template <class S>
struct BatchNoise {
  SideNoise<S> side[2];
  bool use_means = false;
};

template <class S>
SideNoise<S> draw_side_noise(int rows, const LatentConfig& lc, Rng& rng) {
  SideNoise<S> n;
  auto vmf = [&] {
    ad::Mat<S> m(rows, lc.d_sem);
    for (int r = 0; r < rows; ++r) m.row(r) = draw_vmf_noise(lc.kappa, lc.d_sem, rng).x0.transpose().template cast<S>();
    return m;
  };
  auto normal = [&] {
    ad::Mat<S> m(rows, lc.d_syn);
    for (int r = 0; r < rows; ++r) m.row(r) = standard_normal(lc.d_syn, rng).transpose().template cast<S>();
    return m;
  };
  n.x0_elbo = vmf();
  n.eps_elbo = normal();
  n.x0_prl = vmf();
  n.eps_prl = normal();
  n.eps_wpl = normal();
  return n;
}

template <class S>
BatchNoise<S> draw_batch_noise(int rows0, int rows1, const LatentConfig& lc, Rng& rng) {
  BatchNoise<S> b;
  b.side[0] = draw_side_noise<S>(rows0, lc, rng);
  b.side[1] = draw_side_noise<S>(rows1, lc, rng);
  return b;
}

template <class S>
BatchNoise<S> mean_noise() {
  BatchNoise<S> b;
  b.use_means = true;
  return b;
}

/// Graph handles of every loss term of one batch. All terms are batch means.
struct LossVars {
  ad::Var elbo[2];
  ad::Var prl;
  ad::Var wpl;
  ad::Var total;
};

/// Scalar values of the terms for logging.
struct LossValues {
  double elbo[2] = {0, 0};
  double rec[2] = {0, 0};
  double kl_z = 0;  // mean per sentence over both sides
  double kl_y = 0;  // per sentence; constant for fixed kappa
  double prl = 0;
  double wpl = 0;
  double total = 0;
};

namespace detail {

template <class S>
struct Encoded {
  ad::Var y_mu;
  net::SynPosterior z;
};

template <class S>
Encoded<S> encode_side(ad::Graph<S>& g, ModelParams<S>& p, const SideInput& in) {
  if (in.clean.empty() || in.clean.size() != in.syn_input.size()) throw Error("loss: malformed batch side");
  return {net::sem_mean(g, p, in.clean), net::syn_posterior_mixed(g, p, in.syn_input)};
}

template <class S>
ad::Var sample_y(ad::Graph<S>& g, const ModelParams<S>& p, ad::Var mu, const ad::Mat<S>& x0, bool means) {
  if (means) return mu;
  if (p.config.latent.kappa == 0) return g.constant(x0);
  return g.householder(mu, x0);
}

template <class S>
ad::Var sample_z(ad::Graph<S>& g, const net::SynPosterior& z, const ad::Mat<S>& eps, bool means) {
  if (means) return z.mu;
  return g.add(z.mu, g.cmul(g.exp(z.logsig), g.constant(eps)));
}

}  // namespace detail

/// Builds all loss terms for a batch of pairs. Side k of row r is one side
/// of pair r. Values are written to `values` when given.
template <class S>
LossVars build_losses(ad::Graph<S>& g, ModelParams<S>& p, const SideInput (&side)[2], const BatchNoise<S>& noise,
                      LossValues* values = nullptr) {
  const auto& lc = p.config.latent;
  const auto B = side[0].clean.size();
  if (side[1].clean.size() != B) throw Error("loss: sides differ in size");
  const S invB = S(1) / static_cast<S>(B);
  detail::Encoded<S> enc[2] = {detail::encode_side(g, p, side[0]), detail::encode_side(g, p, side[1])};
  const double kl_y = vmf_kl_uniform(lc.kappa, lc.d_sem);
  LossVars lv;
  LossValues vals;
  vals.kl_y = kl_y;
  const std::vector<S> ones(B, S(1));

  ad::Var prl_y[2], prl_z[2];
  for (int s = 0; s < 2; ++s) {
    const auto& nz = noise.side[s];
    const ad::Var y = detail::sample_y(g, p, enc[s].y_mu, nz.x0_elbo, noise.use_means);
    const ad::Var z = detail::sample_z(g, enc[s].z, nz.eps_elbo, noise.use_means);
    const ad::Var rec = net::decoder_nll(g, p, y, z, side[s].clean);
    const ad::Var klz = g.gauss_kl(enc[s].z.mu, enc[s].z.logsig, ones);
    ad::Mat<S> kly(1, 1);
    kly(0, 0) = static_cast<S>(lc.lambda_y * kl_y);
    lv.elbo[s] = g.add(g.scale(g.add(rec, g.scale(klz, static_cast<S>(lc.lambda_z))), invB), g.constant(kly));
    vals.rec[s] = static_cast<double>(g.scalar(rec)) / static_cast<double>(B);
    vals.kl_z += static_cast<double>(g.scalar(klz)) / static_cast<double>(2 * B);
    vals.elbo[s] = static_cast<double>(g.scalar(lv.elbo[s]));
    prl_y[s] = detail::sample_y(g, p, enc[s].y_mu, nz.x0_prl, noise.use_means);
    prl_z[s] = detail::sample_z(g, enc[s].z, nz.eps_prl, noise.use_means);
  }
  // Each side is rebuilt from its own syntax and its partner's semantics.
  const ad::Var prl0 = net::decoder_nll(g, p, prl_y[1], prl_z[0], side[0].clean);
  const ad::Var prl1 = net::decoder_nll(g, p, prl_y[0], prl_z[1], side[1].clean);
  lv.prl = g.scale(g.add(prl0, prl1), invB);

  std::vector<ad::Var> wpl_logits;
  std::vector<int> targets;
  for (int s = 0; s < 2; ++s) {
    const ad::Var z = detail::sample_z(g, enc[s].z, noise.side[s].eps_wpl, noise.use_means);
    wpl_logits.push_back(net::wpl_logits(g, p, side[s].clean, z, &targets));
  }
  const ad::Var all = g.concat_rows(wpl_logits);
  const std::vector<S> w(targets.size(), S(1));
  lv.wpl = g.scale(g.softmax_xent(all, targets, w), S(1) / static_cast<S>(targets.size()));

  lv.total = g.add(g.add(g.add(lv.elbo[0], lv.elbo[1]), lv.prl), lv.wpl);
  vals.prl = static_cast<double>(g.scalar(lv.prl));
  vals.wpl = static_cast<double>(g.scalar(lv.wpl));
  vals.total = static_cast<double>(g.scalar(lv.total));
  if (!std::isfinite(vals.total)) throw NumericError("loss: non-finite total");
  if (values) *values = vals;
  return lv;
}

/// ELBO loss of a batch of sentences: mean over the batch of reconstruction
/// NLL plus weighted KL terms.
template <class S>
ad::Var elbo_loss(ad::Graph<S>& g, ModelParams<S>& p, const SideInput& in, const SideNoise<S>& noise, bool use_means) {
  const auto& lc = p.config.latent;
  const auto enc = detail::encode_side(g, p, in);
  const ad::Var y = detail::sample_y(g, p, enc.y_mu, noise.x0_elbo, use_means);
  const ad::Var z = detail::sample_z(g, enc.z, noise.eps_elbo, use_means);
  const ad::Var rec = net::decoder_nll(g, p, y, z, in.clean);
  const ad::Var klz = g.gauss_kl(enc.z.mu, enc.z.logsig, std::vector<S>(in.clean.size(), S(1)));
  ad::Mat<S> kly(1, 1);
  kly(0, 0) = static_cast<S>(lc.lambda_y * vmf_kl_uniform(lc.kappa, lc.d_sem));
  return g.add(g.scale(g.add(rec, g.scale(klz, static_cast<S>(lc.lambda_z))), S(1) / static_cast<S>(in.clean.size())),
               g.constant(kly));
}

template <class S>
ad::Var prl_loss(ad::Graph<S>& g, ModelParams<S>& p, const SideInput (&side)[2], const BatchNoise<S>& noise) {
  return build_losses(g, p, side, noise).prl;
}

template <class S>
ad::Var wpl_loss(ad::Graph<S>& g, ModelParams<S>& p, const SideInput (&side)[2], const BatchNoise<S>& noise) {
  return build_losses(g, p, side, noise).wpl;
}

template <class S>
ad::Var total_loss(ad::Graph<S>& g, ModelParams<S>& p, const SideInput (&side)[2], const BatchNoise<S>& noise) {
  return build_losses(g, p, side, noise).total;
}

// ---------------------------------------------------------------------------
// Optimizer

/// Adam with per-tensor step counts. Tensors no operation touched in a step
/// keep their values and moments unchanged.
template <class S>
struct AdamState {
  std::vector<ad::Mat<S>> m, v;
  std::vector<long> steps;

  void init(const ModelParams<S>& p) {
    m.clear();
    v.clear();
    steps.clear();
    p.for_each([&](const ad::Param<S>& q) {
      m.push_back(ad::Mat<S>::Zero(q.value.rows(), q.value.cols()));
      v.push_back(ad::Mat<S>::Zero(q.value.rows(), q.value.cols()));
      steps.push_back(0);
    });
  }
};

/// Returns the global gradient norm before clipping.
template <class S>
double adam_update(ModelParams<S>& p, AdamState<S>& st, const TrainConfig& cfg) {
  double sq = 0;
  p.for_each([&](const ad::Param<S>& q) {
    if (q.touched) sq += static_cast<double>(q.grad.squaredNorm());
  });
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
  const S scale = norm > cfg.clip ? static_cast<S>(cfg.clip / norm) : S(1);
  std::size_t i = 0;
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  p.for_each([&](ad::Param<S>& q) {
    const std::size_t k = i++;
    if (!q.touched) return;
    const long t = ++st.steps[k];
    const S lr_t = static_cast<S>(cfg.lr * std::sqrt(1.0 - std::pow(cfg.beta2, static_cast<double>(t))) /
                                  (1.0 - std::pow(cfg.beta1, static_cast<double>(t))));
    const auto g = (q.grad.array() * scale);
    st.m[k].array() = b1 * st.m[k].array() + (S(1) - b1) * g;
    st.v[k].array() = b2 * st.v[k].array() + (S(1) - b2) * g.square();
    q.value.array() -= lr_t * st.m[k].array() / (st.v[k].array().sqrt() + static_cast<S>(cfg.adam_eps));
  });
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRow {
  long step = 0;
  double elbo = 0, kl_z = 0, kl_y = 0, prl = 0, wpl = 0;
  std::optional<double> dev_bleu;
};

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "step,elbo,kl_z,kl_y,prl,wpl,dev_bleu\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + format_double(r.elbo) + "," + format_double(r.kl_z) + "," +
           format_double(r.kl_y) + "," + format_double(r.prl) + "," + format_double(r.wpl) + "," +
           (r.dev_bleu ? format_double(*r.dev_bleu) : std::string()) + "\n";
  }
  return out;
}

template <class S>
struct TrainState {
  ModelParams<S> params;
  AdamState<S> adam;
  long step = 0;
  int epoch = 0;  // epochs completed
  double best_dev_bleu = -1;
  long best_step = -1;
  int bad_evals = 0;
  bool stopped_early = false;
  std::vector<MetricsRow> log;
};

/// Everything a run depends on besides the configs.
struct TrainData {
  BpeModel bpe;
  BitextCorpus corpus;
  std::vector<EvalTriple> dev;
};

namespace detail {

inline nlohmann::ordered_json log_to_json(const std::vector<MetricsRow>& rows) {
  auto a = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j = {{"step", r.step}, {"elbo", r.elbo}, {"kl_z", r.kl_z}, {"kl_y", r.kl_y}, {"prl", r.prl}, {"wpl", r.wpl}};
    j["dev_bleu"] = r.dev_bleu ? nlohmann::ordered_json(*r.dev_bleu) : nlohmann::ordered_json(nullptr);
    a.push_back(j);
  }
  return a;
}

inline std::vector<MetricsRow> log_from_json(const nlohmann::json& a) {
  std::vector<MetricsRow> rows;
  for (const auto& j : a) {
    MetricsRow r;
    r.step = j.at("step").get<long>();
    r.elbo = j.at("elbo").get<double>();
    r.kl_z = j.at("kl_z").get<double>();
    r.kl_y = j.at("kl_y").get<double>();
    r.prl = j.at("prl").get<double>();
    r.wpl = j.at("wpl").get<double>();
    if (!j.at("dev_bleu").is_null()) r.dev_bleu = j.at("dev_bleu").get<double>();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

/// Checkpoint holding parameters, optimizer moments, progress, the BPE
/// model and the configs, so that a run can resume exactly.
template <class S>
CheckpointFile make_train_checkpoint(const TrainState<S>& st, const TrainConfig& cfg, const BpeModel& bpe) {
  CheckpointFile ck;
  add_params(ck, st.params);
  ck.meta["bpe"] = bpe.to_string();
  nlohmann::ordered_json t;
  t["config"] = to_json(cfg);
  t["step"] = st.step;
  t["epoch"] = st.epoch;
  t["best_dev_bleu"] = st.best_dev_bleu;
  t["best_step"] = st.best_step;
  t["bad_evals"] = st.bad_evals;
  t["stopped_early"] = st.stopped_early;
  t["adam_steps"] = st.adam.steps;
  t["log"] = detail::log_to_json(st.log);
  ck.meta["train"] = t;
  std::size_t i = 0;
  st.params.for_each([&](const ad::Param<S>& q) {
    ck.tensors.push_back(to_named("adam.m/" + q.name, st.adam.m[i]));
    ck.tensors.push_back(to_named("adam.v/" + q.name, st.adam.v[i]));
    ++i;
  });
  return ck;
}

template <class S>
TrainState<S> train_state_from_checkpoint(const CheckpointFile& ck) {
  TrainState<S> st;
  st.params = params_from_checkpoint<S>(ck);
  st.adam.init(st.params);
  if (!ck.meta.contains("train")) throw Error("checkpoint: no training state");
  const auto& t = ck.meta["train"];
  st.step = t.at("step").get<long>();
  st.epoch = t.at("epoch").get<int>();
  st.best_dev_bleu = t.at("best_dev_bleu").get<double>();
  st.best_step = t.at("best_step").get<long>();
  st.bad_evals = t.at("bad_evals").get<int>();
  st.stopped_early = t.at("stopped_early").get<bool>();
  st.adam.steps = t.at("adam_steps").get<std::vector<long>>();
  st.log = detail::log_from_json(t.at("log"));
  std::size_t i = 0;
  st.params.for_each([&](const ad::Param<S>& q) {
    from_named(ck.get("adam.m/" + q.name), st.adam.m[i]);
    from_named(ck.get("adam.v/" + q.name), st.adam.v[i]);
    ++i;
  });
  return st;
}

inline BpeModel bpe_from_checkpoint(const CheckpointFile& ck) {
  if (!ck.meta.contains("bpe")) throw Error("checkpoint: missing BPE model");
  return BpeModel::from_string(ck.meta["bpe"].get<std::string>());
}

struct TrainPaths {
  std::string out_dir;  // receives last.ckpt, best.ckpt, metrics.csv
  std::string resume;   // optional checkpoint to continue from
};

struct TrainResult {
  long steps = 0;
  int epochs = 0;
  double best_dev_bleu = -1;
  long best_step = -1;
  bool stopped_early = false;
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::string metrics_path;
};

/// BLEU of controlled generation on the dev triples.
template <class S>
double dev_bleu(ModelParams<S>& p, const BpeModel& bpe, const std::vector<EvalTriple>& dev, int beam, int max_len) {
  if (dev.empty()) return 0.0;
  const auto gens = generate_triples(p, bpe, dev, beam, max_len);
  std::vector<Sentence> hyps, refs;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    hyps.push_back(gens[i].words);
    refs.push_back(dev[i].ref);
  }
  return bleu(hyps, refs);
}

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Trains from scratch (or from `paths.resume`). Deterministic in
/// (configs, data): batch order, word noise and latent noise are drawn from
/// streams indexed by epoch and step, so a resumed run continues exactly.
/// `on_step` observes each logged row.
template <class S = float>
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const TrainData& data, const TrainPaths& paths,
                  const std::function<void(const MetricsRow&)>& on_step = {}) {
  cfg.validate();
  model_cfg.validate();
  if (data.corpus.pairs.empty()) throw Error("train: empty corpus");
  namespace fs = std::filesystem;
  fs::create_directories(paths.out_dir);
  const std::string last_path = (fs::path(paths.out_dir) / "last.ckpt").string();
  const std::string best_path = (fs::path(paths.out_dir) / "best.ckpt").string();
  const std::string metrics_path = (fs::path(paths.out_dir) / "metrics.csv").string();

  TrainState<S> st;
  if (!paths.resume.empty()) {
    st = train_state_from_checkpoint<S>(read_checkpoint(paths.resume));
    if (!(to_json(st.params.config) == to_json(model_cfg))) throw Error("train: resume checkpoint has a different model config");
  } else {
    st.params = ModelParams<S>::init(model_cfg, cfg.seed);
    st.adam.init(st.params);
  }

  const EncodedCorpus enc = encode_corpus(data.corpus, data.bpe);
  std::map<std::string, std::vector<std::string>> vocab;
  for (const auto& l : data.corpus.languages()) vocab[l] = word_vocabulary(data.corpus, l);
  BpeEncoder encoder(data.bpe);
  const long steps_per_epoch = static_cast<long>((enc.size() + cfg.batch_size - 1) / cfg.batch_size);
  const long eval_every = cfg.eval_every > 0 ? cfg.eval_every : steps_per_epoch;
  const long total_steps = steps_per_epoch * cfg.epochs;

  auto save = [&](const std::string& path) { write_checkpoint(path, make_train_checkpoint(st, cfg, data.bpe)); };
  auto write_metrics = [&] {
    std::ofstream out(metrics_path, std::ios::binary);
    out << metrics_csv(st.log);
  };

  std::vector<Batch> batches;
  long batches_epoch = -1;
  while (st.step < total_steps && !st.stopped_early) {
    if (cfg.max_steps > 0 && st.step >= cfg.max_steps) break;
    const long epoch = st.step / steps_per_epoch;
    if (epoch != batches_epoch) {
      batches = make_batches(enc, cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch));
      batches_epoch = epoch;
    }
    const Batch& b = batches[static_cast<std::size_t>(st.step % steps_per_epoch)];

    // Noised syntactic-encoder inputs.
    Rng word_rng = make_rng(cfg.seed, "noise", static_cast<std::uint64_t>(st.step));
    std::vector<SubwordSeq> noised[2];
    SideInput side[2];
    for (int s = 0; s < 2; ++s) {
      noised[s].reserve(b.pair_index.size());
      for (auto i : b.pair_index) {
        const auto& seq = enc.pairs[i].seq[s];
        noised[s].push_back(encoder.encode(noise_words(enc.pairs[i].words[s], vocab[seq.lang], cfg.noise, word_rng), seq.lang));
      }
      for (std::size_t k = 0; k < b.pair_index.size(); ++k) {
        side[s].clean.push_back(&enc.pairs[b.pair_index[k]].seq[s]);
        side[s].syn_input.push_back(&noised[s][k]);
      }
    }
    Rng sample_rng = make_rng(cfg.seed, "sampling", static_cast<std::uint64_t>(st.step));
    const auto noise = draw_batch_noise<S>(static_cast<int>(b.pair_index.size()), static_cast<int>(b.pair_index.size()),
                                           model_cfg.latent, sample_rng);
    LossValues vals;
    try {
      st.params.zero_grad();
      ad::Graph<S> g;
      const LossVars lv = build_losses(g, st.params, side, noise, &vals);
      g.backward(lv.total);
      adam_update(st.params, st.adam, cfg);
    } catch (const NumericError& e) {
      write_metrics();
      throw TrainingDiverged("train: diverged at step " + std::to_string(st.step) + ": " + e.what() +
                             " (last checkpoint left at " + last_path + ")");
    }
    ++st.step;
    MetricsRow row{st.step, vals.elbo[0] + vals.elbo[1], vals.kl_z, vals.kl_y, vals.prl, vals.wpl, std::nullopt};
    if (st.step % steps_per_epoch == 0) st.epoch = static_cast<int>(st.step / steps_per_epoch);
    if (st.step % eval_every == 0 || st.step == total_steps) {
      const double bleu_dev = dev_bleu(st.params, data.bpe, data.dev, cfg.dev_beam, cfg.dev_max_len);
      row.dev_bleu = bleu_dev;
      if (bleu_dev > st.best_dev_bleu) {
        st.best_dev_bleu = bleu_dev;
        st.best_step = st.step;
        st.bad_evals = 0;
        st.log.push_back(row);
        save(best_path);
      } else {
        ++st.bad_evals;
        st.log.push_back(row);
        if (cfg.patience >= 0 && st.bad_evals > cfg.patience) st.stopped_early = true;
      }
      save(last_path);
      write_metrics();
    } else {
      st.log.push_back(row);
    }
    if (on_step) on_step(row);
  }
  save(last_path);
  write_metrics();
  if (!std::filesystem::exists(best_path)) save(best_path);

  TrainResult r;
  r.steps = st.step;
  r.epochs = st.epoch;
  r.best_dev_bleu = st.best_dev_bleu;
  r.best_step = st.best_step;
  r.stopped_early = st.stopped_early;
  r.best_checkpoint = best_path;
  r.last_checkpoint = last_path;
  r.metrics_path = metrics_path;
  return r;
}

}  // namespace mvg
