#pragma once

// Command implementations behind the `mvg` tool. Each command reads only the
// files it is given and writes only the paths it is given; reports carry the
// config hash and seed.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvgvae/config.hpp"
#include "mvgvae/control.hpp"
#include "mvgvae/corpus.hpp"
#include "mvgvae/metrics.hpp"
#include "mvgvae/objective.hpp"
#include "mvgvae/probes.hpp"
#include "mvgvae/subword.hpp"
#include "mvgvae/synthetic.hpp"
#include "mvgvae/trees.hpp"
#include "mvgvae/util/strings.hpp"

namespace mvg {

inline constexpr int kReportSchema = 1;

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out) throw Error("write failed for " + path);
}

/// Content digest of an input file, recorded in reports instead of its path.
inline std::string file_digest(const std::string& path) { return hex64(fnv1a(read_text_file(path))); }

/// One whitespace-tokenized sentence per line; blank lines are rejected.
inline std::vector<Words> load_sentences(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Words> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto w = split_ws(line);
    if (w.empty()) throw ParseError(path + ": empty sentence on line " + std::to_string(lineno), lineno, 0);
    out.push_back(std::move(w));
  }
  return out;
}

struct SimilarityData {
  std::vector<Words> a, b;
  std::vector<double> gold;
};

/// `sentence_a<TAB>sentence_b<TAB>gold` per line.
inline SimilarityData load_similarity_pairs(const std::string& path) {
  std::istringstream in(read_text_file(path));
  SimilarityData d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cols = split_char(line, '\t');
    if (cols.size() != 3)
      throw ParseError(path + " line " + std::to_string(lineno) + ": expected 3 tab-separated columns", lineno, 0);
    d.a.push_back(split_ws(cols[0]));
    d.b.push_back(split_ws(cols[1]));
    try {
      std::size_t used = 0;
      d.gold.push_back(std::stod(cols[2], &used));
      if (used != cols[2].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ParseError(path + " line " + std::to_string(lineno) + ": gold score is not a number", lineno, 0);
    }
  }
  return d;
}

/// `frame<TAB>template` per line, aligned with a parse bank.
inline std::vector<SentenceGold> load_gold_labels(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<SentenceGold> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cols = split_char(line, '\t');
    try {
      if (cols.size() != 2) throw std::invalid_argument("columns");
      out.push_back({std::stol(cols[0]), std::stoi(cols[1])});
    } catch (const std::exception&) {
      throw ParseError(path + " line " + std::to_string(lineno) + ": expected frame<TAB>template", lineno, 0);
    }
  }
  return out;
}

struct Hypothesis {
  Words words;
  double score = 0;
  bool truncated = false;
};

inline std::string hypotheses_jsonl(const std::vector<Generation>& gens) {
  std::string out;
  for (const auto& g : gens) {
    nlohmann::ordered_json j = {{"hypothesis", join(g.words)}, {"score", g.score}, {"truncated", g.truncated}};
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<Hypothesis> load_hypotheses(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Hypothesis> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({split_ws(j.at("hypothesis").get<std::string>()), j.at("score").get<double>(),
                     j.at("truncated").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what(), lineno, 0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline nlohmann::ordered_json report_header(const RunConfig& cfg, const std::string& command) {
  return {{"schema", kReportSchema}, {"command", command}, {"config_hash", config_hash(cfg)}, {"seed", cfg.seed}};
}

/// Writes `<prefix>.json` and `<prefix>.csv`. CSV rows are
/// config_hash,seed,<name>,<metric>,<value>.
inline void write_report(const std::string& prefix, const RunConfig& cfg, const nlohmann::ordered_json& json,
                         const std::vector<std::tuple<std::string, std::string, double>>& rows) {
  const std::string hash = config_hash(cfg);
  std::string csv = "config_hash,seed,name,metric,value\n";
  for (const auto& [name, metric, value] : rows)
    csv += hash + "," + std::to_string(cfg.seed) + "," + name + "," + metric + "," + format_double(value) + "\n";
  write_text_file(prefix + ".json", json.dump(2) + "\n");
  write_text_file(prefix + ".csv", csv);
}

inline void write_probe_report(const std::string& prefix, const RunConfig& cfg, nlohmann::ordered_json json,
                               const std::vector<ProbeReport>& probes) {
  json["probes"] = nlohmann::ordered_json::array();
  std::vector<std::tuple<std::string, std::string, double>> rows;
  for (const auto& r : probes) {
    json["probes"].push_back(to_json(r));
    for (auto [m, v] : {std::pair{"sem", r.sem}, {"syn", r.syn}, {"delta", r.delta}, {"oracle", r.oracle},
                        {"random", r.random}, {"bov", r.bov}, {"n", static_cast<double>(r.n)}})
      if (!std::isnan(v)) rows.emplace_back(r.name, m, v);
  }
  write_report(prefix, cfg, json, rows);
}

// ---------------------------------------------------------------------------
// Commands

/// Languages of a direction pair as "sem-tgt".
inline std::string direction_name(const std::string& sem, const std::string& tgt) { return sem + "-" + tgt; }

/// Synthetic world files under `out_dir`:
///   world.json, bitext.tsv, bank.<lang>.txt, gold.tsv (frame, template per side),
///   test.<sem>-<tgt>.jsonl for all four directions, dev.jsonl,
///   probe.<lang>.txt with probe.<lang>.gold.tsv, sts.<lang>.tsv.
inline void cmd_gen_synth(const RunConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const SyntheticWorld world(cfg.world);
  const SyntheticBitext bt = gen_synthetic_bitext(world);
  auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  fs::create_directories(out_dir);
  write_text_file(path("world.json"), to_json(cfg.world).dump(2) + "\n");
  save_bitext_tsv(path("bitext.tsv"), bt.corpus);
  std::string gold;
  for (std::size_t i = 0; i < bt.corpus.size(); ++i)
    gold += std::to_string(bt.gold[0][i].frame) + "\t" + std::to_string(bt.gold[0][i].template_id) + "\t" +
            std::to_string(bt.gold[1][i].template_id) + "\n";
  write_text_file(path("gold.tsv"), gold);

  std::set<long> train_frames;
  for (const auto& g : bt.gold[0]) train_frames.insert(g.frame);
  std::vector<EvalTriple> dev;
  for (int l = 0; l < 2; ++l) {
    const std::string lang = world.lang_code(l);
    save_parse_bank(path("bank." + lang + ".txt"), bt.bank[l]);
    for (int t = 0; t < 2; ++t) {
      const std::string tgt = world.lang_code(t);
      std::vector<EvalTriple> test;
      for (auto& st : gen_synthetic_triples(world, bt, cfg.synth.test_triples, lang, tgt, substream_seed(cfg.seed, "synth.test")))
        test.push_back(std::move(st.triple));
      save_triples(path("test." + direction_name(lang, tgt) + ".jsonl"), test);
      for (auto& st : gen_synthetic_triples(world, bt, cfg.synth.dev_triples, lang, tgt, substream_seed(cfg.seed, "synth.dev")))
        dev.push_back(std::move(st.triple));
    }
    const auto grid = gen_frame_grid(world, cfg.synth.probe_frames, lang, substream_seed(cfg.seed, "synth.probe"), train_frames);
    save_parse_bank(path("probe." + lang + ".txt"), grid.bank);
    std::string labels;
    for (const auto& g : grid.gold) labels += std::to_string(g.frame) + "\t" + std::to_string(g.template_id) + "\n";
    write_text_file(path("probe." + lang + ".gold.tsv"), labels);
    std::string sts;
    for (const auto& p : gen_similarity_pairs(world, cfg.synth.sts_pairs, lang, substream_seed(cfg.seed, "synth.sts")))
      sts += join(p.a) + "\t" + join(p.b) + "\t" + format_double(p.gold) + "\n";
    write_text_file(path("sts." + lang + ".tsv"), sts);
  }
  save_triples(path("dev.jsonl"), dev);
}

inline BitextCorpus load_corpus(const RunConfig& cfg, const std::string& path) {
  BitextCorpus c = load_bitext_tsv(path, cfg.data.src_lang, cfg.data.tgt_lang);
  validate(c);
  return c;
}

/// Joint subword model over both sides of the corpus.
inline BpeModel train_bpe(const BitextCorpus& corpus, int merges) {
  std::vector<Words> sentences;
  sentences.reserve(2 * corpus.size());
  for (const auto& p : corpus.pairs) {
    sentences.push_back(p.src_tokens);
    sentences.push_back(p.tgt_tokens);
  }
  return BpeModel::train(sentences, merges, corpus.languages());
}

inline void cmd_bpe(const RunConfig& cfg, const std::string& corpus_path, const std::string& out_path) {
  const BpeModel bpe = train_bpe(load_corpus(cfg, corpus_path), cfg.data.bpe_merges);
  std::ostringstream os;
  bpe.save(os);
  write_text_file(out_path, os.str());
}

struct TrainInputs {
  std::string corpus;
  std::string dev;     // optional triples for checkpoint selection
  std::string bpe;     // optional; trained from the corpus when empty
  std::string resume;  // optional checkpoint
};

/// Writes last.ckpt, best.ckpt, metrics.csv and train.json under `out_dir`.
inline TrainResult cmd_train(const RunConfig& cfg, const TrainInputs& in, const std::string& out_dir,
                             const std::function<void(const MetricsRow&)>& on_step = {}) {
  TrainData data;
  data.corpus = load_corpus(cfg, in.corpus);
  data.bpe = in.bpe.empty() ? train_bpe(data.corpus, cfg.data.bpe_merges) : BpeModel::load_file(in.bpe);
  for (const auto& l : data.corpus.languages()) data.bpe.tag_id(l);  // throws for a language the BPE lacks
  if (!in.dev.empty()) data.dev = load_triples(in.dev);
  ModelConfig mc = cfg.model;
  mc.languages = data.bpe.languages();
  mc.vocab = data.bpe.vocab_size();
  const TrainResult res = train<float>(mc, cfg.train, data, {out_dir, in.resume}, on_step);

  auto j = report_header(cfg, "train");
  j["inputs"] = {{"corpus", file_digest(in.corpus)},
                 {"dev", in.dev.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(file_digest(in.dev))},
                 {"bpe", in.bpe.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(file_digest(in.bpe))}};
  j["model"] = to_json(mc);
  j["steps"] = res.steps;
  j["epochs"] = res.epochs;
  j["best_dev_bleu"] = res.best_dev_bleu;
  j["best_step"] = res.best_step;
  j["stopped_early"] = res.stopped_early;
  j["checkpoint_digest"] = file_digest(res.best_checkpoint);
  write_text_file((std::filesystem::path(out_dir) / "train.json").string(), j.dump(2) + "\n");
  return res;
}

/// A trained model as loaded for inference.
struct LoadedModel {
  ModelParams<float> params;
  BpeModel bpe;
};

inline LoadedModel load_model(const std::string& checkpoint) {
  const CheckpointFile ck = read_checkpoint(checkpoint);
  if (ck.scalar_bytes != sizeof(float)) throw Error("checkpoint: expected single-precision tensors in " + checkpoint);
  return {params_from_checkpoint<float>(ck), bpe_from_checkpoint(ck)};
}

inline std::vector<Generation> generate_with(LoadedModel& m, const RunConfig& cfg, const std::vector<EvalTriple>& triples) {
  return generate_triples(m.params, m.bpe, triples, cfg.generate.beam, cfg.generate.max_len);
}

/// One JSON line per triple: hypothesis, score, truncated. Several triple
/// files (any mix of task directions) share one loaded model; output i
/// belongs to input i.
inline void cmd_generate(const RunConfig& cfg, const std::string& checkpoint, const std::vector<std::string>& triples_paths,
                         const std::vector<std::string>& out_paths) {
  if (triples_paths.size() != out_paths.size())
    throw ConfigError("generate: " + std::to_string(triples_paths.size()) + " triple files but " +
                      std::to_string(out_paths.size()) + " outputs");
  std::vector<std::vector<EvalTriple>> inputs;
  for (const auto& t : triples_paths) inputs.push_back(load_triples(t));
  LoadedModel m = load_model(checkpoint);
  for (std::size_t i = 0; i < inputs.size(); ++i) write_text_file(out_paths[i], hypotheses_jsonl(generate_with(m, cfg, inputs[i])));
}

struct EvalInputs {
  std::string hypotheses;
  std::string triples;
  std::string bank;   // parse bank of the target language; looked up by yield
  std::string world;  // world config; parses any sentence of the synthetic languages
  bool character = false;
};

/// Fraction of hypothesis tokens that are words of the target language.
inline double lexicon_rate(const SyntheticWorld& world, const std::vector<Hypothesis>& hyps,
                           const std::vector<EvalTriple>& triples) {
  std::size_t total = 0, hits = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& lex = world.lexicon(world.lang_index(triples[i].tgt_lang));
    for (const auto& w : hyps[i].words) {
      ++total;
      hits += lex.count(w);
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

/// BLEU, ROUGE-1/2/L and the tree-edit ST scores against references (ST-r)
/// and exemplars (ST-s). `kind` selects which triples are accepted.
inline nlohmann::ordered_json cmd_eval_generation(const RunConfig& cfg, TaskKind kind, const EvalInputs& in,
                                                  const std::string& out_prefix) {
  const std::string command = kind == TaskKind::paraphrase ? "eval-para" : "eval-mt";
  const auto hyps = load_hypotheses(in.hypotheses);
  const auto triples = load_triples(in.triples);
  if (hyps.size() != triples.size())
    throw Error(command + ": " + std::to_string(hyps.size()) + " hypotheses for " + std::to_string(triples.size()) + " triples");
  for (std::size_t i = 0; i < triples.size(); ++i)
    if (triples[i].task_kind() != kind)
      throw Error(command + ": triple " + std::to_string(i + 1) + " is a " + to_string(triples[i].task_kind()) + " triple");
  if (in.bank.empty() && in.world.empty()) throw ConfigError(command + ": need a parse bank or a world config for ST scores");

  std::optional<SyntheticWorld> world;
  if (!in.world.empty()) {
    std::vector<std::string> bad;
    auto wc = world_config_from_json(read_json_file(in.world), bad);
    if (!bad.empty()) throw ConfigError(in.world + ": unknown keys " + join(bad, ", "));
    world.emplace(std::move(wc));
  }
  std::optional<ParseBank> bank;
  if (!in.bank.empty()) bank = load_parse_bank(in.bank, triples.empty() ? "" : triples[0].tgt_lang);
  auto parse = [&](const Words& w, const std::string& lang) -> std::optional<ParseTree> {
    if (bank && (triples.empty() || lang == bank->lang))
      if (const auto* e = bank->find(w)) return strip_tokens(e->tree);
    if (world) return strip_tokens(world->parse(w, world->lang_index(lang)));
    return std::nullopt;
  };

  const MetricMode mode = in.character ? MetricMode::character : MetricMode::word;
  std::vector<Sentence> h, r;
  std::vector<ParseTree> th, tr, ts;
  long unparsed = 0;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    h.push_back(hyps[i].words);
    r.push_back(triples[i].ref);
    const auto& lang = triples[i].tgt_lang;
    auto ph = parse(hyps[i].words, lang), pr = parse(triples[i].ref, lang), ps = parse(triples[i].syn, lang);
    if (!ph || !pr || !ps) {
      ++unparsed;
      continue;
    }
    th.push_back(std::move(*ph));
    tr.push_back(std::move(*pr));
    ts.push_back(std::move(*ps));
  }
  long truncated = 0;
  for (const auto& x : hyps) truncated += x.truncated;

  std::vector<std::tuple<std::string, std::string, double>> rows = {
      {command, "bleu", bleu(h, r, mode)},     {command, "rouge1", rouge_n(h, r, 1, mode)},
      {command, "rouge2", rouge_n(h, r, 2, mode)}, {command, "rougeL", rouge_l(h, r, mode)}};
  if (!th.empty()) {
    rows.emplace_back(command, "st_r", st_score(th, tr));
    rows.emplace_back(command, "st_s", st_score(th, ts));
  }
  if (world && !triples.empty()) rows.emplace_back(command, "target_lexicon_rate", lexicon_rate(*world, hyps, triples));
  rows.emplace_back(command, "n", static_cast<double>(triples.size()));
  rows.emplace_back(command, "st_n", static_cast<double>(th.size()));
  rows.emplace_back(command, "truncated", static_cast<double>(truncated));

  auto j = report_header(cfg, command);
  j["inputs"] = {{"hypotheses", file_digest(in.hypotheses)}, {"triples", file_digest(in.triples)}};
  if (!in.bank.empty()) j["inputs"]["bank"] = file_digest(in.bank);
  if (!in.world.empty()) j["inputs"]["world"] = file_digest(in.world);
  j["mode"] = in.character ? "character" : "word";
  nlohmann::ordered_json metrics;
  for (const auto& [name, metric, value] : rows) metrics[metric] = value;
  if (th.empty()) metrics["st_r"] = metrics["st_s"] = nullptr;
  j["metrics"] = metrics;
  if (unparsed) j["warnings"] = {std::to_string(unparsed) + " triples without parses excluded from ST"};
  write_report(out_prefix, cfg, j, rows);
  return j;
}

inline ProbeReport cmd_eval_sts(const RunConfig& cfg, const std::string& checkpoint, const std::string& pairs_path,
                                const std::string& lang, const std::string& out_prefix) {
  LoadedModel m = load_model(checkpoint);
  const auto d = load_similarity_pairs(pairs_path);
  const ProbeReport r = sts_probe(m.params, m.bpe, d.a, d.b, d.gold, lang, cfg.seed);
  auto j = report_header(cfg, "eval-sts");
  j["inputs"] = {{"checkpoint", file_digest(checkpoint)}, {"pairs", file_digest(pairs_path)}};
  j["lang"] = lang;
  write_probe_report(out_prefix, cfg, j, {r});
  return r;
}

/// Syntactic probes over a parse bank; with gold labels also frame retrieval.
inline std::vector<ProbeReport> cmd_eval_syn(const RunConfig& cfg, const std::string& checkpoint,
                                             const std::string& bank_path, const std::string& lang,
                                             const std::string& gold_path, const std::string& out_prefix) {
  LoadedModel m = load_model(checkpoint);
  const ParseBank bank = load_parse_bank(bank_path, lang);
  std::vector<Words> sentences;
  for (const auto& e : bank.entries) sentences.push_back(e.tokens);
  const auto reps = probe_representations(m.params, m.bpe, sentences, lang);
  std::vector<ProbeReport> out;
  const auto sp = syntax_probe_from(reps, bank, {cfg.probe.max_length, cfg.probe.per_length, cfg.seed});
  out.push_back(sp.pos);
  out.push_back(sp.f1);
  out.push_back(template_retrieval_from(reps, bank, cfg.probe.max_queries, cfg.seed));
  if (!gold_path.empty()) {
    const auto gold = load_gold_labels(gold_path);
    if (gold.size() != bank.size())
      throw Error("eval-syn: " + std::to_string(gold.size()) + " gold labels for " + std::to_string(bank.size()) + " trees");
    std::vector<long> frames;
    for (const auto& g : gold) frames.push_back(g.frame);
    out.push_back(frame_retrieval_from(reps, frames, cfg.probe.max_queries, cfg.seed));
  }
  auto j = report_header(cfg, "eval-syn");
  j["inputs"] = {{"checkpoint", file_digest(checkpoint)}, {"bank", file_digest(bank_path)}};
  if (!gold_path.empty()) j["inputs"]["gold"] = file_digest(gold_path);
  j["lang"] = lang;
  write_probe_report(out_prefix, cfg, j, out);
  return out;
}

/// Top-k pool sentences by cosine similarity of one latent variable.
inline nlohmann::ordered_json cmd_nn(const RunConfig& cfg, const std::string& checkpoint, const std::string& queries_path,
                                     const std::string& pool_path, const std::string& lang, LatentVariable var,
                                     std::size_t k, const std::string& out_prefix) {
  LoadedModel m = load_model(checkpoint);
  const auto queries = load_sentences(queries_path);
  const auto pool = load_sentences(pool_path);
  if (pool.empty()) throw Error("nn: empty pool");
  const Eigen::MatrixXd q = encode_representations(m.params, m.bpe, queries, lang, var);
  const Eigen::MatrixXd reps = encode_representations(m.params, m.bpe, pool, lang, var);
  auto j = report_header(cfg, "nn");
  j["inputs"] = {{"checkpoint", file_digest(checkpoint)}, {"queries", file_digest(queries_path)}, {"pool", file_digest(pool_path)}};
  j["lang"] = lang;
  j["variable"] = to_string(var);
  j["k"] = k;
  j["results"] = nlohmann::ordered_json::array();
  std::string csv = "config_hash,seed,query,rank,index,score,sentence\n";
  const std::string prov = config_hash(cfg) + "," + std::to_string(cfg.seed) + ",";
  for (std::size_t i = 0; i < queries.size(); ++i) {
    nlohmann::ordered_json r = {{"query", join(queries[i])}, {"neighbors", nlohmann::ordered_json::array()}};
    const auto nn = rank_by_cosine(q.row(static_cast<Eigen::Index>(i)), reps, k);
    for (std::size_t rank = 0; rank < nn.size(); ++rank) {
      const std::string sentence = join(pool[nn[rank].index]);
      r["neighbors"].push_back({{"rank", rank + 1}, {"index", nn[rank].index}, {"score", nn[rank].score}, {"sentence", sentence}});
      csv += prov + std::to_string(i) + "," + std::to_string(rank + 1) + "," + std::to_string(nn[rank].index) + "," +
             format_double(nn[rank].score) + "," + csv_quote(sentence) + "\n";
    }
    j["results"].push_back(std::move(r));
  }
  write_text_file(out_prefix + ".json", j.dump(2) + "\n");
  write_text_file(out_prefix + ".csv", csv);
  return j;
}

}  // namespace mvg
