#pragma once

// Bitext, evaluation triples and parse banks: in-memory types, file formats,
// word noising and batching.

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvgvae/subword.hpp"
#include "mvgvae/trees.hpp"
#include "mvgvae/util/error.hpp"
#include "mvgvae/util/rng.hpp"
#include "mvgvae/util/strings.hpp"

namespace mvg {

using Words = std::vector<std::string>;

struct BitextPair {
  std::string src_lang;
  std::string tgt_lang;
  Words src_tokens;
  Words tgt_tokens;

  friend bool operator==(const BitextPair&, const BitextPair&) = default;
};

struct BitextCorpus {
  std::vector<BitextPair> pairs;
  /// Set for English-English style paraphrase corpora where both sides share a language.
  bool monolingual = false;
  /// Records dropped while loading because a side was empty.
  std::size_t rejected = 0;

  std::size_t size() const { return pairs.size(); }
  /// Languages in order of first appearance.
  std::vector<std::string> languages() const {
    std::vector<std::string> out;
    for (const auto& p : pairs)
      for (const auto* l : {&p.src_lang, &p.tgt_lang})
        if (std::find(out.begin(), out.end(), *l) == out.end()) out.push_back(*l);
    return out;
  }
};

enum class TaskKind { paraphrase, translation };

inline const char* to_string(TaskKind k) {
  return k == TaskKind::paraphrase ? "paraphrase" : "translation";
}

/// Semantic input, syntactic exemplar and reference. The exemplar and the
/// reference are always in the target language.
struct EvalTriple {
  Words sem;
  Words syn;
  Words ref;
  std::string sem_lang;
  std::string tgt_lang;

  TaskKind task_kind() const {
    return sem_lang == tgt_lang ? TaskKind::paraphrase : TaskKind::translation;
  }
  friend bool operator==(const EvalTriple&, const EvalTriple&) = default;
};

struct ParseBankEntry {
  Words tokens;
  std::vector<std::string> pos;
  ParseTree tree;
};

struct ParseBank {
  std::string lang;
  std::vector<ParseBankEntry> entries;

  std::size_t size() const { return entries.size(); }
  /// Entry whose yield equals `tokens`, if any.
  const ParseBankEntry* find(const Words& tokens) const {
    for (const auto& e : entries)
      if (e.tokens == tokens) return &e;
    return nullptr;
  }
};

inline ParseBankEntry make_bank_entry(ParseTree tree) {
  ParseBankEntry e;
  e.tokens = tree_yield(tree);
  e.pos = tree_pos(tree);
  if (e.pos.size() != e.tokens.size())
    throw Error("parse bank: every token must sit under a POS preterminal: " + to_brackets(tree));
  e.tree = std::move(tree);
  return e;
}

// ---------------------------------------------------------------------------
// Bitext files

namespace detail {

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

/// Reads `src<TAB>tgt` lines. A line without exactly two columns raises
/// ParseError naming the line; a record with an empty side is skipped and counted.
inline BitextCorpus read_bitext_tsv(std::istream& in, const std::string& src_lang,
                                    const std::string& tgt_lang) {
  BitextCorpus corpus;
  corpus.monolingual = src_lang == tgt_lang;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(std::move(line));
    const auto cols = split_char(line, '\t');
    if (cols.size() != 2)
      throw ParseError("bitext line " + std::to_string(lineno) + ": expected 2 tab-separated columns, found " +
                           std::to_string(cols.size()),
                       lineno, 0);
    BitextPair p{src_lang, tgt_lang, split_ws(cols[0]), split_ws(cols[1])};
    if (p.src_tokens.empty() || p.tgt_tokens.empty()) {
      ++corpus.rejected;
      continue;
    }
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

inline BitextCorpus load_bitext_tsv(const std::string& path, const std::string& src_lang,
                                    const std::string& tgt_lang) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open bitext file: " + path);
  return read_bitext_tsv(in, src_lang, tgt_lang);
}

/// Two line-aligned files, one sentence per line.
inline BitextCorpus load_bitext_files(const std::string& src_path, const std::string& tgt_path,
                                      const std::string& src_lang, const std::string& tgt_lang) {
  std::ifstream a(src_path, std::ios::binary), b(tgt_path, std::ios::binary);
  if (!a) throw Error("cannot open bitext file: " + src_path);
  if (!b) throw Error("cannot open bitext file: " + tgt_path);
  BitextCorpus corpus;
  corpus.monolingual = src_lang == tgt_lang;
  std::string la, lb;
  std::size_t lineno = 0;
  for (;;) {
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool gb = static_cast<bool>(std::getline(b, lb));
    if (!ga && !gb) break;
    ++lineno;
    if (ga != gb)
      throw ParseError("paired files differ in length at line " + std::to_string(lineno), lineno, 0);
    BitextPair p{src_lang, tgt_lang, split_ws(detail::strip_cr(la)), split_ws(detail::strip_cr(lb))};
    if (p.src_tokens.empty() || p.tgt_tokens.empty()) {
      ++corpus.rejected;
      continue;
    }
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

inline void write_bitext_tsv(std::ostream& out, const BitextCorpus& corpus) {
  for (const auto& p : corpus.pairs) out << join(p.src_tokens) << '\t' << join(p.tgt_tokens) << '\n';
}

inline void save_bitext_tsv(const std::string& path, const BitextCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write bitext file: " + path);
  write_bitext_tsv(out, corpus);
}

inline void validate(const BitextCorpus& corpus) {
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto& p = corpus.pairs[i];
    if (p.src_tokens.empty() || p.tgt_tokens.empty())
      throw Error("bitext pair " + std::to_string(i) + " has an empty side");
    if (!corpus.monolingual && p.src_lang == p.tgt_lang)
      throw Error("bitext pair " + std::to_string(i) + " has identical languages in a bilingual corpus");
    for (const auto* side : {&p.src_tokens, &p.tgt_tokens})
      for (const auto& w : *side)
        if (w.find_first_of(" \t\r\n") != std::string::npos || w.empty())
          throw Error("bitext pair " + std::to_string(i) + " has a token with whitespace");
  }
}

// ---------------------------------------------------------------------------
// Triples (JSON lines)

inline std::string triple_to_line(const EvalTriple& t) {
  nlohmann::ordered_json j;
  j["sem"] = join(t.sem);
  j["syn"] = join(t.syn);
  j["ref"] = join(t.ref);
  j["sem_lang"] = t.sem_lang;
  j["tgt_lang"] = t.tgt_lang;
  return j.dump();
}

inline EvalTriple triple_from_line(const std::string& line, std::size_t lineno = 0) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("triples line " + std::to_string(lineno) + ": " + e.what(), lineno, 0);
  }
  for (const char* key : {"sem", "syn", "ref", "sem_lang", "tgt_lang"})
    if (!j.contains(key) || !j[key].is_string())
      throw ParseError("triples line " + std::to_string(lineno) + ": missing string field '" + key + "'",
                       lineno, 0);
  EvalTriple t;
  t.sem = split_ws(j["sem"].get<std::string>());
  t.syn = split_ws(j["syn"].get<std::string>());
  t.ref = split_ws(j["ref"].get<std::string>());
  t.sem_lang = j["sem_lang"].get<std::string>();
  t.tgt_lang = j["tgt_lang"].get<std::string>();
  return t;
}

inline std::vector<EvalTriple> load_triples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open triples file: " + path);
  std::vector<EvalTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(std::move(line));
    if (line.empty()) continue;
    out.push_back(triple_from_line(line, lineno));
  }
  return out;
}

inline void save_triples(const std::string& path, const std::vector<EvalTriple>& triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write triples file: " + path);
  for (const auto& t : triples) out << triple_to_line(t) << '\n';
}

// ---------------------------------------------------------------------------
// Parse banks: one bracketed tree per line.

inline ParseBank read_parse_bank(std::istream& in, const std::string& lang) {
  ParseBank bank;
  bank.lang = lang;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(std::move(line));
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      bank.entries.push_back(make_bank_entry(parse_brackets(line)));
    } catch (const ParseError& e) {
      throw ParseError("parse bank line " + std::to_string(lineno) + ": " + e.what(), lineno,
                       e.offset());
    }
  }
  return bank;
}

inline ParseBank load_parse_bank(const std::string& path, const std::string& lang) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open parse bank: " + path);
  return read_parse_bank(in, lang);
}

inline void save_parse_bank(const std::string& path, const ParseBank& bank) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write parse bank: " + path);
  for (const auto& e : bank.entries) out << to_brackets(e.tree) << '\n';
}

// ---------------------------------------------------------------------------
// Word noising

/// Replaces each word independently with probability p by a different word
/// drawn uniformly from `vocab`. Length is preserved.
inline Words noise_words(const Words& tokens, const std::vector<std::string>& vocab, double p,
                         Rng& rng) {
  if (!(p >= 0 && p <= 1)) throw ConfigError("noise_words: p must lie in [0, 1]");
  Words out = tokens;
  if (p == 0 || vocab.empty()) return out;
  for (auto& w : out) {
    if (uniform01(rng) >= p) continue;
    if (vocab.size() == 1) {
      w = vocab.front();
      continue;
    }
    // Uniform over vocab \ {w} when w is in vocab; over vocab otherwise.
    const bool present = std::binary_search(vocab.begin(), vocab.end(), w);
    const std::size_t n = present ? vocab.size() - 1 : vocab.size();
    std::size_t k = uniform_index(rng, n);
    if (present) {
      const auto self = static_cast<std::size_t>(
          std::lower_bound(vocab.begin(), vocab.end(), w) - vocab.begin());
      if (k >= self) ++k;
    }
    w = vocab[k];
  }
  return out;
}

inline Words noise_words(const Words& tokens, const std::vector<std::string>& vocab, double p,
                         std::uint64_t seed) {
  Rng rng = make_rng(seed, "noise");
  return noise_words(tokens, vocab, p, rng);
}

/// Sorted word types of one language, the replacement pool for noising.
inline std::vector<std::string> word_vocabulary(const BitextCorpus& corpus, const std::string& lang) {
  std::vector<std::string> v;
  for (const auto& p : corpus.pairs) {
    if (p.src_lang == lang) v.insert(v.end(), p.src_tokens.begin(), p.src_tokens.end());
    if (p.tgt_lang == lang) v.insert(v.end(), p.tgt_tokens.begin(), p.tgt_tokens.end());
  }
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// ---------------------------------------------------------------------------
// Encoded corpus and batching

struct EncodedPair {
  Words words[2];
  SubwordSeq seq[2];
};

struct EncodedCorpus {
  std::vector<EncodedPair> pairs;
  std::size_t size() const { return pairs.size(); }
};

inline EncodedCorpus encode_corpus(const BitextCorpus& corpus, const BpeModel& bpe) {
  EncodedCorpus out;
  BpeEncoder enc(bpe);
  out.pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    EncodedPair e;
    e.words[0] = p.src_tokens;
    e.words[1] = p.tgt_tokens;
    e.seq[0] = enc.encode(p.src_tokens, p.src_lang);
    e.seq[1] = enc.encode(p.tgt_tokens, p.tgt_lang);
    out.pairs.push_back(std::move(e));
  }
  return out;
}

/// A padded block of token IDs, row-major [sentence][position], pad = special::pad.
struct PaddedIds {
  int rows = 0;
  int cols = 0;
  std::vector<int> ids;
  std::vector<int> lengths;

  int at(int r, int c) const { return ids[static_cast<std::size_t>(r) * cols + c]; }
};

inline PaddedIds pad_sequences(const std::vector<const SubwordSeq*>& seqs) {
  PaddedIds p;
  p.rows = static_cast<int>(seqs.size());
  for (const auto* s : seqs) p.cols = std::max(p.cols, static_cast<int>(s->size()));
  p.ids.assign(static_cast<std::size_t>(p.rows) * p.cols, special::pad);
  for (int r = 0; r < p.rows; ++r) {
    p.lengths.push_back(static_cast<int>(seqs[r]->size()));
    std::copy(seqs[r]->ids.begin(), seqs[r]->ids.end(), p.ids.begin() + static_cast<std::ptrdiff_t>(r) * p.cols);
  }
  return p;
}

struct Batch {
  std::vector<std::size_t> pair_index;
  PaddedIds side[2];
};

/// Shuffled batches for one epoch. Every pair appears exactly once; the order
/// depends only on (seed, epoch).
inline std::vector<Batch> make_batches(const EncodedCorpus& corpus, int batch_size,
                                       std::uint64_t seed, std::uint64_t epoch = 0) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "data.shuffle", epoch);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    b.pair_index.assign(order.begin() + start, order.begin() + end);
    for (int s = 0; s < 2; ++s) {
      std::vector<const SubwordSeq*> seqs;
      for (auto i : b.pair_index) seqs.push_back(&corpus.pairs[i].seq[s]);
      b.side[s] = pad_sequences(seqs);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace mvg
