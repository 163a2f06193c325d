#pragma once

// Declarative run configuration shared by every command.
//
// Resolution order: defaults, then the JSON config file, then `--set
// path=value` overrides and dedicated flags such as --seed. Unknown keys and
// type mismatches are collected across the whole document and reported
// together.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvgvae/network.hpp"
#include "mvgvae/objective.hpp"
#include "mvgvae/synthetic.hpp"
#include "mvgvae/util/error.hpp"
#include "mvgvae/util/rng.hpp"

namespace mvg {

/// Sizes of the files written by gen-synth.
struct SynthConfig {
  int test_triples = 200;  // per task direction
  int dev_triples = 25;    // per task direction
  int probe_frames = 100;  // frames per probe grid; each rendered through every template
  int sts_pairs = 1000;
};

struct DataConfig {
  std::string src_lang = "l1";
  std::string tgt_lang = "l2";
  int bpe_merges = 2000;
};

struct GenerateConfig {
  int beam = 10;
  int max_len = 64;
};

struct ProbeConfig {
  int max_queries = 0;  // 0: every sentence is a query
  int max_length = 30;
  int per_length = 300;
};

/// Everything a command needs besides its input files. Model languages and
/// vocabulary size come from the BPE model, and every seed is derived from
/// `seed`, so neither appears as a key.
struct RunConfig {
  std::uint64_t seed = 1;
  SyntheticWorldConfig world = SyntheticWorldConfig::defaults();
  SynthConfig synth;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  GenerateConfig generate;
  ProbeConfig probe;

  /// Copies the top-level seed into the components that carry their own.
  void propagate_seed() {
    world.seed = seed;
    train.seed = seed;
  }

  void validate() const {
    if (synth.test_triples < 0 || synth.dev_triples < 0 || synth.sts_pairs < 0)
      throw ConfigError("synth: counts must be >= 0");
    if (synth.probe_frames < 1) throw ConfigError("synth: probe_frames must be >= 1");
    if (data.bpe_merges < 0) throw ConfigError("data: bpe_merges must be >= 0");
    if (data.src_lang.empty() || data.tgt_lang.empty()) throw ConfigError("data: languages must be non-empty");
    if (generate.beam < 1 || generate.max_len < 1) throw ConfigError("generate: beam and max_len must be >= 1");
    if (probe.max_queries < 0 || probe.max_length < 1 || probe.per_length < 2)
      throw ConfigError("probe: max_queries >= 0, max_length >= 1, per_length >= 2 required");
    if (model.d_emb < 1 || model.hidden < 1 || model.max_len < 1 || !(model.init_scale > 0))
      throw ConfigError("model: d_emb, hidden, max_len and init_scale must be positive");
    model.latent.validate();
    train.validate();
  }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  auto world = to_json(c.world);
  world.erase("seed");
  j["world"] = world;
  j["synth"] = {{"test_triples", c.synth.test_triples},
                {"dev_triples", c.synth.dev_triples},
                {"probe_frames", c.synth.probe_frames},
                {"sts_pairs", c.synth.sts_pairs}};
  j["data"] = {{"src_lang", c.data.src_lang}, {"tgt_lang", c.data.tgt_lang}, {"bpe_merges", c.data.bpe_merges}};
  j["model"] = {{"d_emb", c.model.d_emb},
                {"hidden", c.model.hidden},
                {"max_len", c.model.max_len},
                {"init_scale", c.model.init_scale},
                {"latent", to_json(c.model.latent)}};
  auto train = to_json(c.train);
  train.erase("seed");
  j["train"] = train;
  j["generate"] = {{"beam", c.generate.beam}, {"max_len", c.generate.max_len}};
  j["probe"] = {{"max_queries", c.probe.max_queries},
                {"max_length", c.probe.max_length},
                {"per_length", c.probe.per_length}};
  return j;
}

namespace detail {

/// Reads j[key] into `out` when present; a type mismatch is recorded in `bad`.
template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where,
                std::vector<std::string>& bad) {
  if (!j.is_object() || !j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad.push_back((where.empty() ? "" : where + ".") + key + " (wrong type)");
  }
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  return j.is_object() && j.contains(key) ? j.at(key) : empty;
}

}  // namespace detail

/// Parses a config document over the defaults. Throws ConfigError naming
/// every unknown or mistyped key.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  std::vector<std::string> bad;
  using detail::read_field;
  using detail::section;
  detail::reject_unknown(j, {"seed", "world", "synth", "data", "model", "train", "generate", "probe"}, "", bad);
  read_field(j, "seed", c.seed, "", bad);

  if (j.is_object() && j.contains("world")) {
    const auto& w = j.at("world");
    if (w.is_object() && w.contains("seed")) bad.push_back("world.seed (use the top-level seed)");
    try {
      c.world = world_config_from_json(w, bad, "world");
    } catch (const nlohmann::json::exception&) {
      bad.push_back("world (wrong type)");
    }
  }

  const auto& s = section(j, "synth");
  detail::reject_unknown(s, {"test_triples", "dev_triples", "probe_frames", "sts_pairs"}, "synth", bad);
  read_field(s, "test_triples", c.synth.test_triples, "synth", bad);
  read_field(s, "dev_triples", c.synth.dev_triples, "synth", bad);
  read_field(s, "probe_frames", c.synth.probe_frames, "synth", bad);
  read_field(s, "sts_pairs", c.synth.sts_pairs, "synth", bad);

  const auto& d = section(j, "data");
  detail::reject_unknown(d, {"src_lang", "tgt_lang", "bpe_merges"}, "data", bad);
  read_field(d, "src_lang", c.data.src_lang, "data", bad);
  read_field(d, "tgt_lang", c.data.tgt_lang, "data", bad);
  read_field(d, "bpe_merges", c.data.bpe_merges, "data", bad);

  const auto& m = section(j, "model");
  detail::reject_unknown(m, {"d_emb", "hidden", "max_len", "init_scale", "latent"}, "model", bad);
  read_field(m, "d_emb", c.model.d_emb, "model", bad);
  read_field(m, "hidden", c.model.hidden, "model", bad);
  read_field(m, "max_len", c.model.max_len, "model", bad);
  read_field(m, "init_scale", c.model.init_scale, "model", bad);
  const auto& l = section(m, "latent");
  detail::reject_unknown(l, {"d_sem", "d_syn", "kappa", "lambda_y", "lambda_z"}, "model.latent", bad);
  read_field(l, "d_sem", c.model.latent.d_sem, "model.latent", bad);
  read_field(l, "d_syn", c.model.latent.d_syn, "model.latent", bad);
  read_field(l, "kappa", c.model.latent.kappa, "model.latent", bad);
  read_field(l, "lambda_y", c.model.latent.lambda_y, "model.latent", bad);
  read_field(l, "lambda_z", c.model.latent.lambda_z, "model.latent", bad);

  const auto& t = section(j, "train");
  detail::reject_unknown(t,
                         {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "clip", "noise", "eval_every",
                          "patience", "dev_beam", "dev_max_len", "max_steps"},
                         "train", bad);
  read_field(t, "epochs", c.train.epochs, "train", bad);
  read_field(t, "batch_size", c.train.batch_size, "train", bad);
  read_field(t, "lr", c.train.lr, "train", bad);
  read_field(t, "beta1", c.train.beta1, "train", bad);
  read_field(t, "beta2", c.train.beta2, "train", bad);
  read_field(t, "adam_eps", c.train.adam_eps, "train", bad);
  read_field(t, "clip", c.train.clip, "train", bad);
  read_field(t, "noise", c.train.noise, "train", bad);
  read_field(t, "eval_every", c.train.eval_every, "train", bad);
  read_field(t, "patience", c.train.patience, "train", bad);
  read_field(t, "dev_beam", c.train.dev_beam, "train", bad);
  read_field(t, "dev_max_len", c.train.dev_max_len, "train", bad);
  read_field(t, "max_steps", c.train.max_steps, "train", bad);

  const auto& g = section(j, "generate");
  detail::reject_unknown(g, {"beam", "max_len"}, "generate", bad);
  read_field(g, "beam", c.generate.beam, "generate", bad);
  read_field(g, "max_len", c.generate.max_len, "generate", bad);

  const auto& p = section(j, "probe");
  detail::reject_unknown(p, {"max_queries", "max_length", "per_length"}, "probe", bad);
  read_field(p, "max_queries", c.probe.max_queries, "probe", bad);
  read_field(p, "max_length", c.probe.max_length, "probe", bad);
  read_field(p, "per_length", c.probe.per_length, "probe", bad);

  if (!bad.empty()) {
    std::string msg = "invalid config keys: ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
    throw ConfigError(msg);
  }
  c.propagate_seed();
  c.validate();
  return c;
}

/// Applies one `dotted.path=value` override to a config document. The value
/// is read as JSON when it parses, otherwise as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must read path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override has an empty path component: " + assignment);
    if (!node->is_object()) *node = nlohmann::json::object();
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0, e.byte);
  }
}

/// Defaults < file < overrides < explicit seed.
inline RunConfig resolve_run_config(const std::string& config_path, const std::vector<std::string>& overrides,
                                    const std::optional<std::uint64_t>& seed) {
  nlohmann::json doc = config_path.empty() ? nlohmann::json::object() : read_json_file(config_path);
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return run_config_from_json(doc);
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Provenance hash of the resolved configuration.
inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

}  // namespace mvg
