#pragma once

// A synthetic two-language bitext world with gold semantics and syntax.
//
// A sentence realizes one semantic frame (one lexeme per role) through one
// syntactic template of its language. Translation pairs share the frame and
// draw their templates independently, so frame and template are never
// confounded. Parse trees and POS sequences follow mechanically from the
// templates.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mvgvae/corpus.hpp"
#include "mvgvae/trees.hpp"
#include "mvgvae/util/error.hpp"
#include "mvgvae/util/rng.hpp"

namespace mvg {

struct RoleSpec {
  std::string name;
  int size = 20;
};

/// Surface-form generator and grammar of one synthetic language.
struct LanguageSpec {
  std::string code;
  std::string consonants;
  std::string vowels;
  /// "CV" or "CVC"
  std::string syllable = "CV";
  int syllables_per_stem = 2;
  /// Verb-form suffixes keyed by form name ("past", "prog", ...). The form
  /// "base" always has an empty suffix.
  std::map<std::string, std::string> suffixes;
  /// Bracketed template trees. Slot leaves read `<role>` or `<role:form>`.
  std::vector<std::string> templates;
};

struct SyntheticWorldConfig {
  std::vector<RoleSpec> roles;
  std::vector<LanguageSpec> languages;  // exactly two
  int n_pairs = 10000;
  std::uint64_t seed = 1;

  static SyntheticWorldConfig defaults();
};

inline SyntheticWorldConfig SyntheticWorldConfig::defaults() {
  SyntheticWorldConfig c;
  c.roles = {{"agent", 20}, {"action", 20}, {"patient", 20}, {"place", 20}};
  LanguageSpec a;
  a.code = "l1";
  a.consonants = "bdfgklmnprst";
  a.vowels = "aeiou";
  a.syllable = "CV";
  a.suffixes = {{"past", "ed"}, {"prog", "ing"}};
  a.templates = {
      "(S (NP (DT the) (NN <agent>)) (VP (VBD <action:past>) (NP (DT the) (NN <patient>)) "
      "(PP (IN in) (NP (DT the) (NN <place>)))))",
      "(S (PP (IN in) (NP (DT the) (NN <place>))) (NP (DT the) (NN <agent>)) (VP (VBD "
      "<action:past>) (NP (DT the) (NN <patient>))))",
      "(S (NP (DT the) (NN <agent>)) (VP (VBZ is) (VP (VBG <action:prog>) (NP (DT the) (NN "
      "<patient>)) (PP (IN at) (NP (DT the) (NN <place>))))))",
      "(SQ (VBD did) (NP (DT the) (NN <agent>)) (VP (VB <action>) (NP (DT the) (NN <patient>)) "
      "(PP (IN in) (NP (DT the) (NN <place>)))))",
      "(S (NP (DT the) (NN <patient>)) (VP (VBD was) (VP (VBN <action:past>) (PP (IN by) (NP "
      "(DT the) (NN <agent>))) (PP (IN in) (NP (DT the) (NN <place>))))))",
      "(S (PP (IN at) (NP (DT the) (NN <place>))) (NP (DT the) (NN <patient>)) (VP (VBD was) "
      "(VP (VBN <action:past>) (PP (IN by) (NP (DT the) (NN <agent>))))))",
  };
  LanguageSpec b;
  b.code = "l2";
  b.consonants = "chjqvwxz";
  b.vowels = "aeiou";
  b.syllable = "CVC";
  b.suffixes = {{"past", "zu"}, {"prog", "vy"}};
  b.templates = {
      "(S (NP (NN <agent>) (PRT wa)) (PP (NN <place>) (PO ce)) (NP (NN <patient>) (PRT jo)) "
      "(VP (VBD <action:past>)))",
      "(S (PP (NN <place>) (PO ce)) (NP (NN <agent>) (PRT wa)) (NP (NN <patient>) (PRT jo)) "
      "(VP (VBD <action:past>)))",
      "(S (NP (NN <patient>) (PRT wa)) (PP (NN <agent>) (PO hu)) (PP (NN <place>) (PO ce)) (VP "
      "(VBN <action:past>) (AUX xa)))",
      "(S (NP (NN <agent>) (PRT wa)) (NP (NN <patient>) (PRT jo)) (PP (NN <place>) (PO ce)) (VP "
      "(VBG <action:prog>) (AUX quo)))",
      "(SQ (NP (NN <agent>) (PRT wa)) (PP (NN <place>) (PO ce)) (NP (NN <patient>) (PRT jo)) "
      "(VP (VB <action>) (AUX vu)) (QP xi))",
      "(SQ (PP (NN <place>) (PO ce)) (NP (NN <patient>) (PRT wa)) (PP (NN <agent>) (PO hu)) "
      "(VP (VBN <action:past>) (AUX xa)) (QP xi))",
  };
  c.languages = {a, b};
  return c;
}

/// Gold annotation of one synthetic sentence.
struct SentenceGold {
  long frame = 0;
  int template_id = 0;  // global index: language offset + local index
  friend bool operator==(const SentenceGold&, const SentenceGold&) = default;
};

class SyntheticWorld {
 public:
  struct Slot {
    int role;
    std::string form;
  };
  struct Template {
    int id = 0;  // global
    int lang = 0;
    ParseTree skeleton;
    std::vector<std::string> pos;
    /// Per yield position: slot index into `slots`, or -1 for a literal word.
    std::vector<int> slot_at;
    std::vector<Slot> slots;
    std::vector<std::string> literal;  // literal word per position (empty for slots)
  };

  explicit SyntheticWorld(SyntheticWorldConfig config);

  const SyntheticWorldConfig& config() const { return config_; }
  int num_roles() const { return static_cast<int>(config_.roles.size()); }
  int num_languages() const { return static_cast<int>(config_.languages.size()); }
  int lang_index(const std::string& code) const {
    for (int i = 0; i < num_languages(); ++i)
      if (config_.languages[i].code == code) return i;
    throw Error("synthetic world: unknown language " + code);
  }
  const std::string& lang_code(int l) const { return config_.languages[l].code; }
  const std::vector<Template>& templates() const { return templates_; }
  /// Global template ids of one language.
  std::vector<int> templates_of(int lang) const {
    std::vector<int> ids;
    for (const auto& t : templates_)
      if (t.lang == lang) ids.push_back(t.id);
    return ids;
  }
  long num_frames() const {
    long n = 1;
    for (const auto& r : config_.roles) n *= r.size;
    return n;
  }
  std::vector<int> frame_fillers(long frame) const {
    std::vector<int> f(num_roles());
    for (int r = num_roles() - 1; r >= 0; --r) {
      f[r] = static_cast<int>(frame % config_.roles[r].size);
      frame /= config_.roles[r].size;
    }
    return f;
  }
  long frame_id(const std::vector<int>& fillers) const {
    long id = 0;
    for (int r = 0; r < num_roles(); ++r) id = id * config_.roles[r].size + fillers[r];
    return id;
  }
  const std::string& stem(int lang, int role, int lexeme) const { return stems_[lang][role][lexeme]; }
  std::string surface(int lang, int role, int lexeme, const std::string& form) const;

  /// Full parse tree of the sentence realizing `frame` through `template_id`.
  ParseTree render(long frame, int template_id) const;
  Words render_words(long frame, int template_id) const { return tree_yield(render(frame, template_id)); }

  /// Recognizes a sentence generated by one of the language's templates.
  struct Analysis {
    ParseTree tree;
    SentenceGold gold;
  };
  std::optional<Analysis> analyze(const Words& words, int lang) const;

  /// Parse used for scoring arbitrary generated text: the template parse when
  /// the sentence is grammatical, otherwise a flat FRAG tree whose POS labels
  /// come from the lexicon (X for unknown words).
  ParseTree parse(const Words& words, int lang) const;

  /// Every word form of a language: function words and inflected content words.
  const std::set<std::string>& lexicon(int lang) const { return lexicon_[lang]; }

 private:
  SyntheticWorldConfig config_;
  std::vector<Template> templates_;
  std::vector<std::vector<std::vector<std::string>>> stems_;  // [lang][role][lexeme]
  std::vector<std::set<std::string>> lexicon_;
  // surface word -> (role, lexeme, form) per language
  std::vector<std::unordered_map<std::string, std::vector<std::tuple<int, int, std::string>>>> inverse_;
  std::vector<std::unordered_map<std::string, std::string>> word_pos_;
};

namespace detail {

inline void collect_template_leaves(const ParseTree& t, const std::string& parent_label,
                                    std::vector<std::pair<std::string, std::string>>& out) {
  if (t.is_token) {
    out.emplace_back(parent_label, t.label);
    return;
  }
  for (const auto& c : t.children) collect_template_leaves(c, t.label, out);
}

inline ParseTree fill_template(const ParseTree& t, const std::vector<std::string>& words,
                               std::size_t& pos) {
  if (t.is_token) return ParseTree::token(words[pos++]);
  ParseTree out = ParseTree::node(t.label);
  for (const auto& c : t.children) out.children.push_back(fill_template(c, words, pos));
  return out;
}

}  // namespace detail

inline SyntheticWorld::SyntheticWorld(SyntheticWorldConfig config) : config_(std::move(config)) {
  if (config_.languages.size() != 2) throw ConfigError("synthetic world: exactly two languages required");
  if (config_.languages[0].code == config_.languages[1].code)
    throw ConfigError("synthetic world: language codes must differ");
  if (config_.roles.empty()) throw ConfigError("synthetic world: at least one role required");
  for (const auto& r : config_.roles)
    if (r.size < 1) throw ConfigError("synthetic world: role '" + r.name + "' needs >= 1 lexeme");
  if (config_.n_pairs < 0) throw ConfigError("synthetic world: n_pairs must be >= 0");

  std::map<std::string, int> role_index;
  for (int r = 0; r < num_roles(); ++r) role_index[config_.roles[r].name] = r;

  // Templates.
  for (int l = 0; l < num_languages(); ++l) {
    const auto& spec = config_.languages[l];
    if (spec.templates.size() < 2)
      throw ConfigError("synthetic world: language " + spec.code + " needs >= 2 templates");
    std::set<std::vector<std::string>> pos_seen;
    for (const auto& text : spec.templates) {
      Template t;
      t.id = static_cast<int>(templates_.size());
      t.lang = l;
      t.skeleton = parse_brackets(text);
      std::vector<std::pair<std::string, std::string>> leaves;
      detail::collect_template_leaves(t.skeleton, "", leaves);
      std::vector<int> role_count(num_roles(), 0);
      for (const auto& [pos, word] : leaves) {
        t.pos.push_back(pos);
        if (word.size() > 2 && word.front() == '<' && word.back() == '>') {
          std::string body = word.substr(1, word.size() - 2);
          std::string form = "base";
          if (auto c = body.find(':'); c != std::string::npos) {
            form = body.substr(c + 1);
            body = body.substr(0, c);
          }
          auto it = role_index.find(body);
          if (it == role_index.end()) throw ConfigError("synthetic world: unknown role in template: " + word);
          if (form != "base" && !spec.suffixes.count(form))
            throw ConfigError("synthetic world: unknown form '" + form + "' in language " + spec.code);
          ++role_count[it->second];
          t.slot_at.push_back(static_cast<int>(t.slots.size()));
          t.slots.push_back({it->second, form});
          t.literal.emplace_back();
        } else {
          t.slot_at.push_back(-1);
          t.literal.push_back(word);
        }
      }
      for (int r = 0; r < num_roles(); ++r)
        if (role_count[r] != 1)
          throw ConfigError("synthetic world: every template must realize each role exactly once: " + text);
      if (tree_pos(t.skeleton).size() != t.pos.size())
        throw ConfigError("synthetic world: template leaves must sit under POS nodes: " + text);
      if (!pos_seen.insert(t.pos).second)
        throw ConfigError("synthetic world: templates of language " + spec.code +
                          " are not distinguishable by POS sequence");
      templates_.push_back(std::move(t));
    }
  }

  // Stems: deterministic in the seed, unique within a language, and disjoint
  // from function words and from every inflected form.
  stems_.resize(num_languages());
  lexicon_.resize(num_languages());
  inverse_.resize(num_languages());
  word_pos_.resize(num_languages());
  for (int l = 0; l < num_languages(); ++l) {
    const auto& spec = config_.languages[l];
    if (spec.consonants.empty() || spec.vowels.empty())
      throw ConfigError("synthetic world: language " + spec.code + " needs consonants and vowels");
    std::set<std::string> taken;
    for (const auto& t : templates_)
      if (t.lang == l)
        for (const auto& w : t.literal)
          if (!w.empty()) taken.insert(w);
    Rng rng = make_rng(config_.seed, "world.lexicon." + spec.code);
    auto syllable = [&] {
      std::string s;
      s += spec.consonants[uniform_index(rng, spec.consonants.size())];
      s += spec.vowels[uniform_index(rng, spec.vowels.size())];
      if (spec.syllable == "CVC") s += spec.consonants[uniform_index(rng, spec.consonants.size())];
      return s;
    };
    std::vector<std::string> forms = {"base"};
    for (const auto& [f, suf] : spec.suffixes) forms.push_back(f);
    auto with_suffix = [&](const std::string& stem, const std::string& form) {
      return form == "base" ? stem : stem + spec.suffixes.at(form);
    };
    stems_[l].resize(num_roles());
    for (int r = 0; r < num_roles(); ++r) {
      int attempts = 0;
      while (static_cast<int>(stems_[l][r].size()) < config_.roles[r].size) {
        if (++attempts > 100000)
          throw ConfigError("synthetic world: cannot generate enough distinct stems for " + spec.code);
        std::string stem;
        for (int k = 0; k < std::max(1, spec.syllables_per_stem); ++k) stem += syllable();
        bool clash = false;
        for (const auto& f : forms) clash = clash || taken.count(with_suffix(stem, f));
        if (clash) continue;
        for (const auto& f : forms) taken.insert(with_suffix(stem, f));
        stems_[l][r].push_back(stem);
      }
    }
    // Lexicon and inverse index over the forms actually used by templates.
    for (const auto& t : templates_) {
      if (t.lang != l) continue;
      for (std::size_t i = 0; i < t.literal.size(); ++i) {
        if (t.slot_at[i] < 0) {
          lexicon_[l].insert(t.literal[i]);
          word_pos_[l].emplace(t.literal[i], t.pos[i]);
          continue;
        }
        const auto& slot = t.slots[t.slot_at[i]];
        for (int x = 0; x < config_.roles[slot.role].size; ++x) {
          const std::string w = surface(l, slot.role, x, slot.form);
          if (lexicon_[l].insert(w).second) inverse_[l][w].emplace_back(slot.role, x, slot.form);
          word_pos_[l].emplace(w, t.pos[i]);
        }
      }
    }
  }
  for (const auto& w : lexicon_[0])
    if (lexicon_[1].count(w))
      throw ConfigError("synthetic world: languages share the word form '" + w + "'");
}

inline std::string SyntheticWorld::surface(int lang, int role, int lexeme, const std::string& form) const {
  const std::string& s = stems_[lang][role][lexeme];
  if (form == "base") return s;
  return s + config_.languages[lang].suffixes.at(form);
}

inline ParseTree SyntheticWorld::render(long frame, int template_id) const {
  const Template& t = templates_.at(template_id);
  const auto fillers = frame_fillers(frame);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < t.literal.size(); ++i) {
    if (t.slot_at[i] < 0) {
      words.push_back(t.literal[i]);
    } else {
      const Slot& s = t.slots[t.slot_at[i]];
      words.push_back(surface(t.lang, s.role, fillers[s.role], s.form));
    }
  }
  std::size_t pos = 0;
  return detail::fill_template(t.skeleton, words, pos);
}

inline std::optional<SyntheticWorld::Analysis> SyntheticWorld::analyze(const Words& words, int lang) const {
  for (const auto& t : templates_) {
    if (t.lang != lang || t.literal.size() != words.size()) continue;
    std::vector<int> fillers(num_roles(), -1);
    bool ok = true;
    for (std::size_t i = 0; i < words.size() && ok; ++i) {
      if (t.slot_at[i] < 0) {
        ok = words[i] == t.literal[i];
        continue;
      }
      const Slot& s = t.slots[t.slot_at[i]];
      ok = false;
      auto it = inverse_[lang].find(words[i]);
      if (it == inverse_[lang].end()) break;
      for (const auto& [role, lex, form] : it->second)
        if (role == s.role && form == s.form) {
          fillers[role] = lex;
          ok = true;
        }
    }
    if (!ok) continue;
    Analysis a;
    a.gold = {frame_id(fillers), t.id};
    std::size_t pos = 0;
    a.tree = detail::fill_template(t.skeleton, words, pos);
    return a;
  }
  return std::nullopt;
}

inline ParseTree SyntheticWorld::parse(const Words& words, int lang) const {
  if (auto a = analyze(words, lang)) return a->tree;
  ParseTree root = ParseTree::node("FRAG");
  for (const auto& w : words) {
    auto it = word_pos_[lang].find(w);
    root.children.push_back(ParseTree::node(it == word_pos_[lang].end() ? "X" : it->second, {ParseTree::token(w)}));
  }
  if (words.empty()) root.children.push_back(ParseTree::node("X", {ParseTree::token("<empty>")}));
  return root;
}

// ---------------------------------------------------------------------------
// Corpus generation

struct SyntheticBitext {
  BitextCorpus corpus;
  ParseBank bank[2];
  std::vector<SentenceGold> gold[2];  // aligned with corpus.pairs
};

/// Each pair renders one frame through independently drawn templates of
/// the two languages. Deterministic in config.seed.
inline SyntheticBitext gen_synthetic_bitext(const SyntheticWorld& world) {
  const auto& cfg = world.config();
  SyntheticBitext out;
  for (int l = 0; l < 2; ++l) out.bank[l].lang = world.lang_code(l);
  const auto t0 = world.templates_of(0);
  const auto t1 = world.templates_of(1);
  Rng rng = make_rng(cfg.seed, "world.pairs");
  for (int i = 0; i < cfg.n_pairs; ++i) {
    const long frame = static_cast<long>(uniform_index(rng, static_cast<std::size_t>(world.num_frames())));
    const int ta = t0[uniform_index(rng, t0.size())];
    const int tb = t1[uniform_index(rng, t1.size())];
    ParseTree a = world.render(frame, ta);
    ParseTree b = world.render(frame, tb);
    out.corpus.pairs.push_back({world.lang_code(0), world.lang_code(1), tree_yield(a), tree_yield(b)});
    out.bank[0].entries.push_back(make_bank_entry(std::move(a)));
    out.bank[1].entries.push_back(make_bank_entry(std::move(b)));
    out.gold[0].push_back({frame, ta});
    out.gold[1].push_back({frame, tb});
  }
  return out;
}

/// Triples with gold labels for each of the three sentences.
struct SyntheticTriple {
  EvalTriple triple;
  SentenceGold sem_gold, syn_gold, ref_gold;
};

/// Index of the pool sentence nearest to `ref_pos` by POS edit distance among
/// those whose frame differs from `ref_frame`; ties go to the lowest index.
inline std::optional<std::size_t> mine_exemplar(const ParseBank& pool, const std::vector<SentenceGold>& gold,
                                                const std::vector<std::string>& ref_pos, long ref_frame) {
  std::optional<std::size_t> best;
  int best_d = 0;
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    if (gold[i].frame == ref_frame) continue;
    const int d = pos_seq_edit_distance(pool.entries[i].pos, ref_pos);
    if (!best || d < best_d) {
      best = i;
      best_d = d;
      if (d == 0) break;
    }
  }
  return best;
}

/// Builds n evaluation triples: the reference and the semantic input share a
/// frame but not a template; the exemplar is mined from the target-language
/// side of `bitext` as the nearest POS-sequence neighbor of the reference
/// with a different frame.
inline std::vector<SyntheticTriple> gen_synthetic_triples(const SyntheticWorld& world,
                                                          const SyntheticBitext& bitext, int n,
                                                          const std::string& sem_lang,
                                                          const std::string& tgt_lang, std::uint64_t seed) {
  std::vector<SyntheticTriple> out;
  if (n <= 0) return out;
  const int ls = world.lang_index(sem_lang);
  const int lt = world.lang_index(tgt_lang);
  const auto sem_templates = world.templates_of(ls);
  const auto tgt_templates = world.templates_of(lt);
  if (ls == lt && sem_templates.size() < 2)
    throw Error("gen_synthetic_triples: paraphrase triples need >= 2 templates");
  if (world.num_frames() < 2) throw Error("gen_synthetic_triples: need >= 2 frames");
  const ParseBank& pool = bitext.bank[lt];
  const auto& pool_gold = bitext.gold[lt];
  Rng rng = make_rng(seed, "triples." + sem_lang + "." + tgt_lang);
  for (int i = 0; i < n; ++i) {
    const long frame = static_cast<long>(uniform_index(rng, static_cast<std::size_t>(world.num_frames())));
    const int t_ref = tgt_templates[uniform_index(rng, tgt_templates.size())];
    int t_sem;
    do {
      t_sem = sem_templates[uniform_index(rng, sem_templates.size())];
    } while (t_sem == t_ref);
    SyntheticTriple st;
    const ParseTree ref_tree = world.render(frame, t_ref);
    const auto ref_pos = tree_pos(ref_tree);
    const auto ex = mine_exemplar(pool, pool_gold, ref_pos, frame);
    if (!ex || pool_gold[*ex].template_id != t_ref)
      throw Error("gen_synthetic_triples: pool lacks a different-frame sentence with template " +
                  std::to_string(t_ref));
    st.triple.ref = tree_yield(ref_tree);
    st.triple.sem = world.render_words(frame, t_sem);
    st.triple.syn = pool.entries[*ex].tokens;
    st.triple.sem_lang = sem_lang;
    st.triple.tgt_lang = tgt_lang;
    st.ref_gold = {frame, t_ref};
    st.sem_gold = {frame, t_sem};
    st.syn_gold = pool_gold[*ex];
    out.push_back(std::move(st));
  }
  return out;
}

/// Checks the four triple conditions independently of the generator.
inline bool triple_is_valid(const SyntheticWorld& world, const SyntheticTriple& t) {
  const int ls = world.lang_index(t.triple.sem_lang);
  const int lt = world.lang_index(t.triple.tgt_lang);
  auto sem = world.analyze(t.triple.sem, ls);
  auto syn = world.analyze(t.triple.syn, lt);
  auto ref = world.analyze(t.triple.ref, lt);
  if (!sem || !syn || !ref) return false;
  return ref->gold.frame == sem->gold.frame && ref->gold.template_id == syn->gold.template_id &&
         syn->gold.frame != ref->gold.frame && sem->gold.template_id != ref->gold.template_id &&
         pos_seq_edit_distance(tree_pos(sem->tree), tree_pos(ref->tree)) > 0;
}

/// Sentence pairs with graded gold similarity: the fraction of roles whose
/// filler is shared. The number of shared roles is drawn uniformly.
struct SimilarityPair {
  Words a, b;
  double gold = 0;
};

inline std::vector<SimilarityPair> gen_similarity_pairs(const SyntheticWorld& world, int n,
                                                        const std::string& lang, std::uint64_t seed) {
  const int l = world.lang_index(lang);
  const auto tids = world.templates_of(l);
  Rng rng = make_rng(seed, "sts." + lang);
  std::vector<SimilarityPair> out;
  const int roles = world.num_roles();
  for (int i = 0; i < n; ++i) {
    auto fa = world.frame_fillers(static_cast<long>(uniform_index(rng, static_cast<std::size_t>(world.num_frames()))));
    auto fb = fa;
    const int keep = static_cast<int>(uniform_index(rng, roles + 1));
    std::vector<int> order(roles);
    for (int r = 0; r < roles; ++r) order[r] = r;
    for (int r = roles; r > 1; --r) std::swap(order[r - 1], order[uniform_index(rng, r)]);
    int shared = roles;
    for (int k = keep; k < roles; ++k) {
      const int r = order[k];
      const int size = world.config().roles[r].size;
      if (size < 2) continue;
      int x = static_cast<int>(uniform_index(rng, size - 1));
      if (x >= fa[r]) ++x;
      fb[r] = x;
      --shared;
    }
    SimilarityPair p;
    p.a = world.render_words(world.frame_id(fa), tids[uniform_index(rng, tids.size())]);
    p.b = world.render_words(world.frame_id(fb), tids[uniform_index(rng, tids.size())]);
    p.gold = static_cast<double>(shared) / roles;
    out.push_back(std::move(p));
  }
  return out;
}

/// Held-out sentences of one language with gold labels; `frames` distinct
/// frames each rendered through every template of the language.
struct LabeledSentences {
  std::string lang;
  std::vector<Words> sentences;
  std::vector<SentenceGold> gold;
  ParseBank bank;
};

inline LabeledSentences gen_frame_grid(const SyntheticWorld& world, int frames, const std::string& lang,
                                       std::uint64_t seed, const std::set<long>& exclude = {}) {
  const int l = world.lang_index(lang);
  LabeledSentences out;
  out.lang = lang;
  out.bank.lang = lang;
  Rng rng = make_rng(seed, "grid." + lang);
  std::set<long> used;
  while (static_cast<int>(used.size()) < frames && static_cast<long>(used.size() + exclude.size()) < world.num_frames()) {
    const long f = static_cast<long>(uniform_index(rng, static_cast<std::size_t>(world.num_frames())));
    if (exclude.count(f) || !used.insert(f).second) continue;
    for (int t : world.templates_of(l)) {
      ParseTree tree = world.render(f, t);
      out.sentences.push_back(tree_yield(tree));
      out.gold.push_back({f, t});
      out.bank.entries.push_back(make_bank_entry(std::move(tree)));
    }
  }
  return out;
}

/// `n` sentences of one language with random frames and templates.
inline LabeledSentences gen_labeled_sentences(const SyntheticWorld& world, int n, const std::string& lang,
                                              std::uint64_t seed) {
  const int l = world.lang_index(lang);
  const auto tids = world.templates_of(l);
  LabeledSentences out;
  out.lang = lang;
  out.bank.lang = lang;
  Rng rng = make_rng(seed, "labeled." + lang);
  for (int i = 0; i < n; ++i) {
    const long f = static_cast<long>(uniform_index(rng, static_cast<std::size_t>(world.num_frames())));
    const int t = tids[uniform_index(rng, tids.size())];
    ParseTree tree = world.render(f, t);
    out.sentences.push_back(tree_yield(tree));
    out.gold.push_back({f, t});
    out.bank.entries.push_back(make_bank_entry(std::move(tree)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON form of the world configuration

inline nlohmann::ordered_json to_json(const SyntheticWorldConfig& c) {
  nlohmann::ordered_json j;
  j["roles"] = nlohmann::ordered_json::array();
  for (const auto& r : c.roles) j["roles"].push_back({{"name", r.name}, {"size", r.size}});
  j["languages"] = nlohmann::ordered_json::array();
  for (const auto& l : c.languages) {
    nlohmann::ordered_json lj;
    lj["code"] = l.code;
    lj["consonants"] = l.consonants;
    lj["vowels"] = l.vowels;
    lj["syllable"] = l.syllable;
    lj["syllables_per_stem"] = l.syllables_per_stem;
    lj["suffixes"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : l.suffixes) lj["suffixes"][k] = v;
    lj["templates"] = l.templates;
    j["languages"].push_back(lj);
  }
  j["n_pairs"] = c.n_pairs;
  j["seed"] = c.seed;
  return j;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                           const std::string& where, std::vector<std::string>& bad) {
  if (!j.is_object()) {
    bad.push_back(where + " (expected object)");
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) bad.push_back(where.empty() ? it.key() : where + "." + it.key());
  }
}

}  // namespace detail

/// Reads a world configuration; missing keys keep their defaults and unknown
/// keys are collected into `bad`.
inline SyntheticWorldConfig world_config_from_json(const nlohmann::json& j, std::vector<std::string>& bad,
                                                   const std::string& where = "world") {
  SyntheticWorldConfig c = SyntheticWorldConfig::defaults();
  detail::reject_unknown(j, {"roles", "languages", "n_pairs", "seed"}, where, bad);
  if (!j.is_object()) return c;
  if (j.contains("roles")) {
    c.roles.clear();
    for (const auto& r : j["roles"]) {
      detail::reject_unknown(r, {"name", "size"}, where + ".roles[]", bad);
      c.roles.push_back({r.value("name", std::string("role")), r.value("size", 20)});
    }
  }
  if (j.contains("languages")) {
    const auto defaults = c.languages;
    c.languages.clear();
    std::size_t k = 0;
    for (const auto& lj : j["languages"]) {
      detail::reject_unknown(lj, {"code", "consonants", "vowels", "syllable", "syllables_per_stem", "suffixes", "templates"},
                             where + ".languages[]", bad);
      LanguageSpec l = k < defaults.size() ? defaults[k] : LanguageSpec{};
      l.code = lj.value("code", l.code);
      l.consonants = lj.value("consonants", l.consonants);
      l.vowels = lj.value("vowels", l.vowels);
      l.syllable = lj.value("syllable", l.syllable);
      l.syllables_per_stem = lj.value("syllables_per_stem", l.syllables_per_stem);
      if (lj.contains("suffixes")) l.suffixes = lj["suffixes"].get<std::map<std::string, std::string>>();
      if (lj.contains("templates")) l.templates = lj["templates"].get<std::vector<std::string>>();
      c.languages.push_back(std::move(l));
      ++k;
    }
  }
  c.n_pairs = j.value("n_pairs", c.n_pairs);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace mvg
