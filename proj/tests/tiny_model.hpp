#pragma once

// Small double-precision models and random batches for gradient checks.

#include <random>
#include <vector>

#include "mvgvae/gradcheck.hpp"
#include "mvgvae/objective.hpp"

namespace tiny {

using namespace mvg;

/// d_sem = d_syn = 8, hidden = 16, vocab = 50.
inline ModelConfig config() {
  ModelConfig c;
  c.languages = {"l1", "l2"};
  c.vocab = 50;
  c.d_emb = 6;
  c.hidden = 16;
  c.max_len = 12;
  c.init_scale = 0.3;
  c.latent.d_sem = 8;
  c.latent.d_syn = 8;
  return c;
}

/// Random sequence: language tag, then `words` words of 1-2 subwords each.
inline SubwordSeq random_seq(const ModelConfig& c, const std::string& lang, int words, std::mt19937_64& rng) {
  SubwordSeq s;
  s.lang = lang;
  s.ids.push_back(c.tag_id(c.lang_index(lang)));
  s.word_boundary.push_back(SubwordSeq::kTagBoundary);
  const int first = special::first_tag + static_cast<int>(c.languages.size());
  for (int w = 0; w < words; ++w) {
    const int pieces = 1 + static_cast<int>(rng() % 2);
    for (int k = 0; k < pieces; ++k) {
      s.ids.push_back(first + static_cast<int>(rng() % static_cast<unsigned>(c.vocab - first)));
      s.word_boundary.push_back(w);
    }
  }
  return s;
}

/// A batch of `rows` pairs with varying lengths; side 0 is l1, side 1 is l2.
struct Batch {
  std::vector<SubwordSeq> clean[2], noised[2];
  SideInput side[2];

  Batch(const ModelConfig& c, int rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int s = 0; s < 2; ++s) {
      const std::string lang = c.languages[s];
      for (int r = 0; r < rows; ++r) {
        clean[s].push_back(random_seq(c, lang, 1 + static_cast<int>(rng() % 4), rng));
        noised[s].push_back(random_seq(c, lang, 1 + static_cast<int>(rng() % 4), rng));
      }
    }
    for (int s = 0; s < 2; ++s)
      for (int r = 0; r < rows; ++r) {
        side[s].clean.push_back(&clean[s][r]);
        side[s].syn_input.push_back(&noised[s][r]);
      }
  }
};

inline std::vector<ad::Param<double>*> all_params(ModelParams<double>& p) {
  std::vector<ad::Param<double>*> out;
  p.for_each([&](ad::Param<double>& q) { out.push_back(&q); });
  return out;
}

inline BatchNoise<double> noise(const ModelConfig& c, int rows, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test.noise");
  return draw_batch_noise<double>(rows, rows, c.latent, rng);
}

/// Probes at most this many entries per tensor to bound runtime.
inline GradCheckOptions options(std::uint64_t seed = 1) {
  GradCheckOptions o;
  o.eps = 1e-5;
  o.max_entries = 40;
  o.seed = seed;
  return o;
}

}  // namespace tiny
