#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "mvgvae/corpus.hpp"
#include "mvgvae/synthetic.hpp"

using namespace mvg;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mvg_test_corpus_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticWorldConfig small_world(int pairs, std::uint64_t seed) {
  auto c = SyntheticWorldConfig::defaults();
  c.n_pairs = pairs;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Bitext, ParsesTwoLineTsv) {
  std::istringstream in("a b\tx y z\nc\tw\n");
  const auto c = read_bitext_tsv(in, "l1", "l2");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.pairs[0].src_tokens, (Words{"a", "b"}));
  EXPECT_EQ(c.pairs[1].tgt_tokens, (Words{"w"}));
  EXPECT_EQ(c.pairs[1].tgt_lang, "l2");
  EXPECT_NO_THROW(validate(c));
}

TEST(Bitext, OneColumnLineNamesTheLine) {
  std::istringstream in("a\tb\nlonely\n");
  try {
    read_bitext_tsv(in, "l1", "l2");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Bitext, EmptySideRejectedAndCounted) {
  std::istringstream in("a\tb\n \tc\nd\t\n");
  const auto c = read_bitext_tsv(in, "l1", "l2");
  EXPECT_EQ(c.size(), 1u);
  EXPECT_EQ(c.rejected, 2u);
}

TEST(Bitext, FiveThousandPairsRoundTripByteIdentically) {
  const SyntheticWorld world(small_world(5000, 3));
  const auto bt = gen_synthetic_bitext(world);
  const std::string a = temp_path("a.tsv"), b = temp_path("b.tsv");
  save_bitext_tsv(a, bt.corpus);
  const auto loaded = load_bitext_tsv(a, "l1", "l2");
  EXPECT_EQ(loaded.pairs, bt.corpus.pairs);
  save_bitext_tsv(b, loaded);
  EXPECT_EQ(std::hash<std::string>{}(slurp(a)), std::hash<std::string>{}(slurp(b)));
  EXPECT_EQ(slurp(a), slurp(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Bitext, PairedFiles) {
  const std::string a = temp_path("src.txt"), b = temp_path("tgt.txt");
  std::ofstream(a) << "x y\nz\n";
  std::ofstream(b) << "p\nq r\n";
  const auto c = load_bitext_files(a, b, "l1", "l2");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.pairs[1].tgt_tokens, (Words{"q", "r"}));
  std::ofstream(b) << "p\n";
  EXPECT_THROW(load_bitext_files(a, b, "l1", "l2"), ParseError);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Bitext, ValidateRejectsSameLanguageInBilingualCorpus) {
  BitextCorpus c;
  c.pairs.push_back({"l1", "l1", {"a"}, {"b"}});
  EXPECT_THROW(validate(c), Error);
  c.monolingual = true;
  EXPECT_NO_THROW(validate(c));
}

TEST(Triples, JsonLinesRoundTrip) {
  const EvalTriple t{{"a", "b"}, {"c"}, {"d", "e"}, "l1", "l2"};
  EXPECT_EQ(triple_from_line(triple_to_line(t)), t);
  EXPECT_EQ(t.task_kind(), TaskKind::translation);
  EXPECT_THROW(triple_from_line("{\"sem\": \"a\"}", 4), ParseError);
  EXPECT_THROW(triple_from_line("not json", 1), ParseError);
}

TEST(ParseBankIo, RoundTripAndPosFromPreterminals) {
  std::istringstream in("(S (NP (DT the) (NN dog)) (VP (VBD ran)))\n\n(S (NN x))\n");
  const auto bank = read_parse_bank(in, "en");
  ASSERT_EQ(bank.size(), 2u);
  EXPECT_EQ(bank.entries[0].pos, (std::vector<std::string>{"DT", "NN", "VBD"}));
  EXPECT_EQ(bank.entries[0].tokens, (Words{"the", "dog", "ran"}));
  std::istringstream bad("(S (NN x))\n(S (NN x)\n");
  try {
    read_parse_bank(bad, "en");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream bare("(S x y)\n");
  EXPECT_THROW(read_parse_bank(bare, "en"), Error);
}

TEST(NoiseWords, LimitsAndDeterminism) {
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
  const Words s = {"a", "b", "c", "d", "e", "a"};
  EXPECT_EQ(noise_words(s, vocab, 0.0, 1u), s);
  const Words all = noise_words(s, vocab, 1.0, 1u);
  ASSERT_EQ(all.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NE(all[i], s[i]);
  EXPECT_EQ(noise_words(s, vocab, 0.5, 7u), noise_words(s, vocab, 0.5, 7u));
  EXPECT_THROW(noise_words(s, vocab, 1.5, 1u), ConfigError);
}

TEST(NoiseWords, EmpiricalRateNearP) {
  std::vector<std::string> vocab;
  for (int i = 0; i < 50; ++i) vocab.push_back("w" + std::to_string(i));
  std::sort(vocab.begin(), vocab.end());
  Rng rng = make_rng(2, "test.noise");
  long replaced = 0, total = 0;
  for (int s = 0; s < 10000; ++s) {
    Words w;
    for (int k = 0; k < 10; ++k) w.push_back(vocab[uniform_index(rng, vocab.size())]);
    const Words out = noise_words(w, vocab, 0.9, rng);
    for (int k = 0; k < 10; ++k) replaced += out[k] != w[k];
    total += 10;
  }
  EXPECT_NEAR(static_cast<double>(replaced) / total, 0.9, 0.005);
}

TEST(Batches, SizesOrderAndCoverage) {
  const SyntheticWorld world(small_world(10, 1));
  const auto bt = gen_synthetic_bitext(world);
  std::vector<Words> sents;
  for (const auto& p : bt.corpus.pairs) {
    sents.push_back(p.src_tokens);
    sents.push_back(p.tgt_tokens);
  }
  const auto bpe = BpeModel::train(sents, 30, {"l1", "l2"});
  const auto enc = encode_corpus(bt.corpus, bpe);
  const auto b = make_batches(enc, 3, 5, 0);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b[0].pair_index.size(), 3u);
  EXPECT_EQ(b[3].pair_index.size(), 1u);
  EXPECT_THROW(make_batches(enc, 0, 5), ConfigError);

  auto order = [](const std::vector<Batch>& v) {
    std::vector<std::size_t> o;
    for (const auto& x : v) o.insert(o.end(), x.pair_index.begin(), x.pair_index.end());
    return o;
  };
  EXPECT_EQ(order(make_batches(enc, 3, 5, 0)), order(b));
  // Two epochs cover the corpus multiset twice.
  std::vector<std::size_t> both = order(b);
  const auto e1 = order(make_batches(enc, 3, 5, 1));
  both.insert(both.end(), e1.begin(), e1.end());
  std::sort(both.begin(), both.end());
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < 10; ++i) expected.insert(expected.end(), {i, i});
  EXPECT_EQ(both, expected);

  // Padding uses the pad id beyond each length.
  for (const auto& x : b)
    for (int r = 0; r < x.side[0].rows; ++r)
      for (int c = x.side[0].lengths[r]; c < x.side[0].cols; ++c) EXPECT_EQ(x.side[0].at(r, c), special::pad);
}

TEST(SyntheticWorld, DeterministicGeneration) {
  const SyntheticWorld w1(small_world(500, 42)), w2(small_world(500, 42));
  const auto a = gen_synthetic_bitext(w1), b = gen_synthetic_bitext(w2);
  EXPECT_EQ(a.corpus.pairs, b.corpus.pairs);
  for (int l = 0; l < 2; ++l) {
    ASSERT_EQ(a.bank[l].size(), b.bank[l].size());
    for (std::size_t i = 0; i < a.bank[l].size(); ++i) EXPECT_EQ(a.bank[l].entries[i].tree, b.bank[l].entries[i].tree);
    EXPECT_EQ(a.gold[l], b.gold[l]);
  }
  const auto c = gen_synthetic_bitext(SyntheticWorld(small_world(500, 43)));
  EXPECT_NE(a.corpus.pairs, c.corpus.pairs);
}

TEST(SyntheticWorld, PairsShareFramesAndBanksMatchTokens) {
  const SyntheticWorld world(small_world(300, 5));
  const auto bt = gen_synthetic_bitext(world);
  EXPECT_NO_THROW(validate(bt.corpus));
  for (std::size_t i = 0; i < bt.corpus.size(); ++i) {
    EXPECT_EQ(bt.gold[0][i].frame, bt.gold[1][i].frame);
    EXPECT_EQ(bt.bank[0].entries[i].tokens, bt.corpus.pairs[i].src_tokens);
    EXPECT_EQ(bt.bank[1].entries[i].tokens, bt.corpus.pairs[i].tgt_tokens);
    for (int l = 0; l < 2; ++l) {
      const auto an = world.analyze(bt.bank[l].entries[i].tokens, l);
      ASSERT_TRUE(an.has_value());
      EXPECT_EQ(an->gold, bt.gold[l][i]);
      EXPECT_EQ(an->tree, bt.bank[l].entries[i].tree);
    }
  }
}

TEST(SyntheticWorld, TemplateUsageUniformByChiSquare) {
  const SyntheticWorld world(small_world(10000, 11));
  const auto bt = gen_synthetic_bitext(world);
  const double n = 10000;
  boost::math::chi_squared dist(5);
  for (int l = 0; l < 2; ++l) {
    std::map<int, double> counts;
    for (const auto& g : bt.gold[l]) counts[g.template_id] += 1;
    ASSERT_EQ(counts.size(), 6u);
    const double e = n / 6, sd = std::sqrt(n * (1.0 / 6) * (5.0 / 6));
    double chi2 = 0;
    for (const auto& [t, c] : counts) {
      EXPECT_LE(std::abs(c - e), 3 * sd) << "template " << t;
      chi2 += (c - e) * (c - e) / e;
    }
    EXPECT_LT(chi2, boost::math::quantile(dist, 0.999));
  }
}

TEST(SyntheticWorld, RejectsIndistinguishableTemplates) {
  auto c = SyntheticWorldConfig::defaults();
  // Second template with the same POS sequence as the first.
  c.languages[0].templates[1] =
      "(S (NP (DT the) (NN <agent>)) (VP (VBD <action:past>) (NP (DT the) (NN <patient>)) "
      "(PP (IN at) (NP (DT the) (NN <place>)))))";
  EXPECT_THROW(SyntheticWorld{c}, ConfigError);
  auto one = SyntheticWorldConfig::defaults();
  one.languages[1].templates.resize(1);
  EXPECT_THROW(SyntheticWorld{one}, ConfigError);
}

TEST(SyntheticTriples, EmptyAndValid) {
  const SyntheticWorld world(small_world(2000, 7));
  const auto bt = gen_synthetic_bitext(world);
  EXPECT_TRUE(gen_synthetic_triples(world, bt, 0, "l1", "l2", 1).empty());
  for (auto [s, t] : {std::pair{"l1", "l1"}, {"l2", "l2"}, {"l1", "l2"}, {"l2", "l1"}}) {
    const auto triples = gen_synthetic_triples(world, bt, 100, s, t, 3);
    ASSERT_EQ(triples.size(), 100u);
    for (const auto& st : triples) {
      EXPECT_TRUE(triple_is_valid(world, st));
      EXPECT_EQ(st.triple.tgt_lang, t);
      EXPECT_EQ(st.triple.task_kind(), std::string(s) == t ? TaskKind::paraphrase : TaskKind::translation);
    }
  }
}

TEST(SyntheticTriples, ExemplarIsBruteForceMinimum) {
  const SyntheticWorld world(small_world(600, 8));
  const auto bt = gen_synthetic_bitext(world);
  const auto triples = gen_synthetic_triples(world, bt, 60, "l2", "l1", 4);
  const auto& pool = bt.bank[0];
  for (const auto& st : triples) {
    const auto ref_pos = world.analyze(st.triple.ref, 0)->tree;
    const auto pos = tree_pos(ref_pos);
    int best = std::numeric_limits<int>::max();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (bt.gold[0][i].frame == st.ref_gold.frame) continue;
      const int d = sequence_edit_distance(pool.entries[i].pos, pos);
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    EXPECT_EQ(st.triple.syn, pool.entries[arg].tokens);
  }
}

TEST(SyntheticWorld, ConfigJsonRoundTripAndUnknownKeys) {
  const auto c = SyntheticWorldConfig::defaults();
  std::vector<std::string> bad;
  const auto back = world_config_from_json(to_json(c), bad, "world");
  EXPECT_TRUE(bad.empty());
  EXPECT_EQ(to_json(back), to_json(c));
  auto j = to_json(c);
  j["bogus"] = 1;
  j["languages"][0]["extra"] = true;
  world_config_from_json(j, bad, "world");
  EXPECT_EQ(bad.size(), 2u);
}
