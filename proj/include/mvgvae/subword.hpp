#pragma once

// Byte-pair encoding with word-boundary tracking and language tags.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvgvae/util/error.hpp"
#include "mvgvae/util/strings.hpp"

namespace mvg {

/// Appended to the last symbol of every word.
inline constexpr std::string_view kEndOfWord = "</w>";

namespace special {
inline constexpr int pad = 0;
inline constexpr int unk = 1;
inline constexpr int bos = 2;
inline constexpr int eos = 3;
inline constexpr int first_tag = 4;
}  // namespace special

/// Subword IDs of one sentence. ids[0] is the language tag, whose boundary
/// entry is kTagBoundary; every other position holds the index of the
/// original word it came from.
struct SubwordSeq {
  static constexpr int kTagBoundary = -1;
  std::vector<int> ids;
  std::vector<int> word_boundary;
  std::string lang;

  std::size_t size() const { return ids.size(); }
  int word_count() const { return word_boundary.empty() ? 0 : word_boundary.back() + 1; }
};

class BpeModel {
 public:
  BpeModel() = default;

  /// Learns `n_merges` merges over the word frequencies of `sentences`.
  /// Ties in pair frequency go to the lexicographically smallest pair.
  static BpeModel train(const std::vector<std::vector<std::string>>& sentences, int n_merges,
                        std::vector<std::string> languages);

  static BpeModel load(std::istream& in);
  static BpeModel load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open BPE model file: " + path);
    return load(in);
  }
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write BPE model file: " + path);
    save(out);
  }
  std::string to_string() const {
    std::ostringstream os;
    save(os);
    return os.str();
  }
  static BpeModel from_string(const std::string& s) {
    std::istringstream is(s);
    return load(is);
  }

  /// Segments a single word into subword symbols.
  std::vector<std::string> segment(const std::string& word) const;
  std::vector<int> encode_word(const std::string& word) const;
  SubwordSeq encode(const std::vector<std::string>& words, const std::string& lang) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& languages() const { return languages_; }
  int tag_id(const std::string& lang) const;
  bool is_special(int id) const { return id >= 0 && id < special::first_tag + num_languages(); }
  bool is_tag(int id) const { return id >= special::first_tag && id < special::first_tag + num_languages(); }
  int num_languages() const { return static_cast<int>(languages_.size()); }
  int id_of(const std::string& symbol) const {
    auto it = index_.find(symbol);
    return it == index_.end() ? special::unk : it->second;
  }

  friend bool operator==(const BpeModel& a, const BpeModel& b) {
    return a.languages_ == b.languages_ && a.merges_ == b.merges_ && a.vocab_ == b.vocab_;
  }

 private:
  void build_indices();
  static std::string pair_key(const std::string& a, const std::string& b) {
    return a + '\x1f' + b;
  }

  std::vector<std::string> languages_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  std::unordered_map<std::string, int> merge_rank_;
};

inline std::vector<std::string> initial_symbols(const std::string& word) {
  auto chars = utf8_chars(word);
  if (!chars.empty()) chars.back() += kEndOfWord;
  return chars;
}

inline std::string tag_symbol(const std::string& lang) { return "<" + lang + ">"; }

inline BpeModel BpeModel::train(const std::vector<std::vector<std::string>>& sentences,
                                int n_merges, std::vector<std::string> languages) {
  if (n_merges < 0) throw ConfigError("bpe_train: n_merges must be >= 0");
  if (sentences.empty()) throw Error("bpe_train: empty corpus");
  if (languages.empty()) throw ConfigError("bpe_train: at least one language required");

  std::map<std::string, long> word_freq;
  for (const auto& s : sentences)
    for (const auto& w : s)
      if (!w.empty()) ++word_freq[w];

  // Symbols are interned; words are symbol-id sequences.
  std::vector<std::string> sym_str;
  std::unordered_map<std::string, int> sym_id;
  auto intern = [&](const std::string& s) {
    auto it = sym_id.find(s);
    if (it != sym_id.end()) return it->second;
    int id = static_cast<int>(sym_str.size());
    sym_str.push_back(s);
    sym_id.emplace(s, id);
    return id;
  };

  struct Word {
    std::vector<int> syms;
    long freq;
  };
  std::vector<Word> words;
  std::set<std::string> base_symbols;
  for (const auto& [w, f] : word_freq) {
    Word word{{}, f};
    for (const auto& s : initial_symbols(w)) {
      base_symbols.insert(s);
      word.syms.push_back(intern(s));
    }
    words.push_back(std::move(word));
  }

  using Pair = std::pair<int, int>;
  std::map<Pair, long> counts;
  std::map<Pair, std::set<std::size_t>> where;
  // Ordered by count desc, then by (left string, right string) asc.
  struct Entry {
    long count;
    std::string a, b;
    Pair p;
    bool operator<(const Entry& o) const {
      if (count != o.count) return count > o.count;
      if (a != o.a) return a < o.a;
      return b < o.b;
    }
  };
  std::set<Entry> queue;
  auto adjust = [&](Pair p, long delta, std::size_t wi) {
    long& c = counts[p];
    if (c > 0) queue.erase(Entry{c, sym_str[p.first], sym_str[p.second], p});
    c += delta;
    if (c > 0) queue.insert(Entry{c, sym_str[p.first], sym_str[p.second], p});
    if (delta > 0) where[p].insert(wi);
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    const auto& s = words[wi].syms;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust({s[i], s[i + 1]}, words[wi].freq, wi);
  }

  BpeModel model;
  model.languages_ = std::move(languages);
  for (int m = 0; m < n_merges && !queue.empty(); ++m) {
    const Entry best = *queue.begin();
    const Pair p = best.p;
    const int merged = intern(best.a + best.b);
    model.merges_.emplace_back(best.a, best.b);
    const std::set<std::size_t> affected = where[p];
    for (std::size_t wi : affected) {
      auto& s = words[wi].syms;
      const long f = words[wi].freq;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust({s[i], s[i + 1]}, -f, wi);
      std::vector<int> out;
      for (std::size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == p.first && s[i + 1] == p.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(s[i]);
          ++i;
        }
      }
      s = std::move(out);
      for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust({s[i], s[i + 1]}, f, wi);
    }
  }

  model.vocab_ = {"<pad>", "<unk>", "<s>", "</s>"};
  for (const auto& l : model.languages_) model.vocab_.push_back(tag_symbol(l));
  std::set<std::string> seen(model.vocab_.begin(), model.vocab_.end());
  for (const auto& s : base_symbols)
    if (seen.insert(s).second) model.vocab_.push_back(s);
  for (const auto& [a, b] : model.merges_)
    if (seen.insert(a + b).second) model.vocab_.push_back(a + b);
  model.build_indices();
  return model;
}

inline void BpeModel::build_indices() {
  index_.clear();
  merge_rank_.clear();
  for (int i = 0; i < static_cast<int>(vocab_.size()); ++i) index_.emplace(vocab_[i], i);
  for (int r = 0; r < static_cast<int>(merges_.size()); ++r)
    merge_rank_.emplace(pair_key(merges_[r].first, merges_[r].second), r);
}

inline std::vector<std::string> BpeModel::segment(const std::string& word) const {
  std::vector<std::string> syms = initial_symbols(word);
  for (;;) {
    int best_rank = -1;
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find(pair_key(syms[i], syms[i + 1]));
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank < 0) break;
    const auto& [a, b] = merges_[best_rank];
    std::vector<std::string> out;
    for (std::size_t i = 0; i < syms.size();) {
      if (i >= best_at && i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
        out.push_back(a + b);
        i += 2;
      } else {
        out.push_back(syms[i]);
        ++i;
      }
    }
    syms = std::move(out);
  }
  return syms;
}

inline std::vector<int> BpeModel::encode_word(const std::string& word) const {
  std::vector<int> ids;
  for (const auto& s : segment(word)) ids.push_back(id_of(s));
  return ids;
}

inline int BpeModel::tag_id(const std::string& lang) const {
  for (int i = 0; i < num_languages(); ++i)
    if (languages_[i] == lang) return special::first_tag + i;
  throw Error("unknown language code: " + lang);
}

inline SubwordSeq BpeModel::encode(const std::vector<std::string>& words,
                                   const std::string& lang) const {
  SubwordSeq seq;
  seq.lang = lang;
  seq.ids.push_back(tag_id(lang));
  seq.word_boundary.push_back(SubwordSeq::kTagBoundary);
  for (int w = 0; w < static_cast<int>(words.size()); ++w) {
    for (int id : encode_word(words[w])) {
      seq.ids.push_back(id);
      seq.word_boundary.push_back(w);
    }
  }
  return seq;
}

inline std::vector<std::string> BpeModel::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  std::string cur;
  bool open = false;
  for (int id : ids) {
    if (id < 0 || id >= vocab_size()) throw Error("bpe_decode: unknown id " + std::to_string(id));
    if (id == special::unk) {
      words.push_back(cur + "<unk>");
      cur.clear();
      open = false;
      continue;
    }
    if (is_special(id)) continue;
    const std::string& s = vocab_[id];
    if (s.size() >= kEndOfWord.size() &&
        s.compare(s.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0) {
      words.push_back(cur + s.substr(0, s.size() - kEndOfWord.size()));
      cur.clear();
      open = false;
    } else {
      cur += s;
      open = true;
    }
  }
  if (open) words.push_back(cur);
  return words;
}

inline void BpeModel::save(std::ostream& out) const {
  out << "#mvgvae-bpe 1\n";
  out << "languages " << languages_.size();
  for (const auto& l : languages_) out << ' ' << l;
  out << "\nmerges " << merges_.size() << '\n';
  for (const auto& [a, b] : merges_) out << a << ' ' << b << '\n';
  out << "vocab " << vocab_.size() << '\n';
  for (std::size_t i = 0; i < vocab_.size(); ++i) out << i << ' ' << vocab_[i] << '\n';
}

inline BpeModel BpeModel::load(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::vector<std::string> {
    if (!std::getline(in, line)) throw ParseError("BPE model: unexpected end of file", lineno, 0);
    ++lineno;
    return split_ws(line);
  };
  auto bad = [&](const std::string& why) {
    return ParseError("BPE model line " + std::to_string(lineno) + ": " + why, lineno, 0);
  };
  auto head = next();
  if (head.size() != 2 || head[0] != "#mvgvae-bpe" || head[1] != "1") throw bad("bad header");
  BpeModel m;
  auto langs = next();
  if (langs.size() < 2 || langs[0] != "languages") throw bad("expected languages");
  const std::size_t nl = std::stoul(langs[1]);
  if (langs.size() != nl + 2) throw bad("language count mismatch");
  m.languages_.assign(langs.begin() + 2, langs.end());
  auto mh = next();
  if (mh.size() != 2 || mh[0] != "merges") throw bad("expected merges");
  const std::size_t nm = std::stoul(mh[1]);
  for (std::size_t i = 0; i < nm; ++i) {
    auto p = next();
    if (p.size() != 2) throw bad("merge line needs two symbols");
    m.merges_.emplace_back(p[0], p[1]);
  }
  auto vh = next();
  if (vh.size() != 2 || vh[0] != "vocab") throw bad("expected vocab");
  const std::size_t nv = std::stoul(vh[1]);
  for (std::size_t i = 0; i < nv; ++i) {
    auto p = next();
    if (p.size() != 2 || std::stoul(p[0]) != i) throw bad("vocab line must be '<id> <symbol>'");
    m.vocab_.push_back(p[1]);
  }
  if (m.vocab_.size() < static_cast<std::size_t>(special::first_tag + m.num_languages()))
    throw bad("vocabulary lacks reserved symbols");
  m.build_indices();
  return m;
}

/// Memoizing per-word encoder for training loops. Not thread-safe; use one per consumer.
class BpeEncoder {
 public:
  explicit BpeEncoder(const BpeModel& model) : model_(&model) {}

  SubwordSeq encode(const std::vector<std::string>& words, const std::string& lang) {
    SubwordSeq seq;
    seq.lang = lang;
    seq.ids.push_back(model_->tag_id(lang));
    seq.word_boundary.push_back(SubwordSeq::kTagBoundary);
    for (int w = 0; w < static_cast<int>(words.size()); ++w) {
      auto it = cache_.find(words[w]);
      if (it == cache_.end()) it = cache_.emplace(words[w], model_->encode_word(words[w])).first;
      for (int id : it->second) {
        seq.ids.push_back(id);
        seq.word_boundary.push_back(w);
      }
    }
    return seq;
  }

  const BpeModel& model() const { return *model_; }

 private:
  const BpeModel* model_;
  std::unordered_map<std::string, std::vector<int>> cache_;
};

}  // namespace mvg
