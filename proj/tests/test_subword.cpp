#include <gtest/gtest.h>

#include <random>

#include "mvgvae/subword.hpp"

using namespace mvg;

namespace {

using Corpus = std::vector<std::vector<std::string>>;

// Textbook BPE: recount all adjacent pairs after every merge and take the
// most frequent, ties to the lexicographically smallest (left, right).
std::vector<std::pair<std::string, std::string>> naive_bpe(const Corpus& corpus, int n_merges) {
  std::map<std::string, long> freq;
  for (const auto& s : corpus)
    for (const auto& w : s) ++freq[w];
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [w, f] : freq) words.emplace_back(initial_symbols(w), f);
  std::vector<std::pair<std::string, std::string>> merges;
  for (int m = 0; m < n_merges; ++m) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    const auto p = best->first;
    merges.push_back(p);
    for (auto& [syms, f] : words) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == p.first && syms[i + 1] == p.second) {
          out.push_back(p.first + p.second);
          i += 2;
        } else {
          out.push_back(syms[i++]);
        }
      }
      syms = out;
    }
  }
  return merges;
}

Corpus random_corpus(std::uint64_t seed, int sentences) {
  std::mt19937_64 rng(seed);
  const std::string letters = "abcde";
  Corpus c;
  for (int s = 0; s < sentences; ++s) {
    std::vector<std::string> sent;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int w = 0; w < n; ++w) {
      std::string word;
      const int len = 1 + static_cast<int>(rng() % 6);
      for (int k = 0; k < len; ++k) word += letters[rng() % letters.size()];
      sent.push_back(word);
    }
    c.push_back(sent);
  }
  return c;
}

}  // namespace

TEST(BpeTrain, LowLowerFirstMerge) {
  // Pair counts: (l,o)=3, (o,w</w>)=2, (o,w)=1, (w,e)=1, (e,r</w>)=1.
  const auto m = BpeModel::train({{"low", "low", "lower"}}, 1, {"en"});
  ASSERT_EQ(m.merges().size(), 1u);
  EXPECT_EQ(m.merges()[0], std::make_pair(std::string("l"), std::string("o")));
}

TEST(BpeTrain, MatchesNaiveReference) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Corpus c = random_corpus(seed, 60);
    for (int n : {0, 1, 5, 40, 200}) {
      const auto m = BpeModel::train(c, n, {"a"});
      EXPECT_EQ(m.merges(), naive_bpe(c, n)) << "seed " << seed << " merges " << n;
    }
  }
}

TEST(BpeTrain, ZeroMergesGivesCharacters) {
  const auto m = BpeModel::train({{"ab", "ba"}}, 0, {"x"});
  EXPECT_TRUE(m.merges().empty());
  // specials (4) + tag + a, b, a</w>, b</w>
  EXPECT_EQ(m.vocab_size(), 4 + 1 + 4);
  EXPECT_EQ(m.segment("ab"), (std::vector<std::string>{"a", "b</w>"}));
}

TEST(BpeTrain, DeterministicAndValidated) {
  const Corpus c = random_corpus(9, 100);
  EXPECT_EQ(BpeModel::train(c, 50, {"a", "b"}), BpeModel::train(c, 50, {"a", "b"}));
  EXPECT_THROW(BpeModel::train(c, -1, {"a"}), ConfigError);
  EXPECT_THROW(BpeModel::train({}, 3, {"a"}), Error);
}

TEST(BpeTrain, ReservedIdsNeverProducedByMerges) {
  const Corpus c = random_corpus(3, 100);
  const auto m = BpeModel::train(c, 100, {"a", "b"});
  for (const auto& s : c)
    for (const auto& w : s)
      for (int id : m.encode_word(w)) EXPECT_FALSE(m.is_special(id));
}

TEST(BpeEncode, PlayingFetchBoundaries) {
  const std::string text =
      "#mvgvae-bpe 1\nlanguages 1 en\nmerges 9\n"
      "p l\npl a\npla y\ni n\nin g</w>\nf e\nfe t\nfet c\nfetc h</w>\n"
      "vocab 8\n0 <pad>\n1 <unk>\n2 <s>\n3 </s>\n4 <en>\n5 play\n6 ing</w>\n7 fetch</w>\n";
  const auto m = BpeModel::from_string(text);
  const auto seq = m.encode({"playing", "fetch"}, "en");
  EXPECT_EQ(seq.ids, (std::vector<int>{4, 5, 6, 7}));
  EXPECT_EQ(seq.word_boundary, (std::vector<int>{SubwordSeq::kTagBoundary, 0, 0, 1}));
  EXPECT_EQ(seq.word_count(), 2);
  EXPECT_EQ(m.decode(seq.ids), (std::vector<std::string>{"playing", "fetch"}));
}

TEST(BpeEncode, RoundTripAndConcatenation) {
  const Corpus c = random_corpus(4, 200);
  const auto m = BpeModel::train(c, 80, {"a", "b"});
  std::vector<int> concat_ids;
  for (const auto& s : c) {
    const auto seq = m.encode(s, "b");
    EXPECT_EQ(seq.ids.front(), m.tag_id("b"));
    EXPECT_EQ(m.decode(seq.ids), s);
    // Boundaries non-decreasing, max + 1 = word count.
    for (std::size_t i = 2; i < seq.word_boundary.size(); ++i) EXPECT_LE(seq.word_boundary[i - 1], seq.word_boundary[i]);
    EXPECT_EQ(seq.word_count(), static_cast<int>(s.size()));
    concat_ids.insert(concat_ids.end(), seq.ids.begin(), seq.ids.end());
  }
  std::vector<int> again;
  BpeEncoder enc(m);
  for (const auto& s : c) {
    const auto seq = enc.encode(s, "b");
    EXPECT_EQ(seq.ids, m.encode(s, "b").ids);
    again.insert(again.end(), seq.ids.begin(), seq.ids.end());
  }
  EXPECT_EQ(again, concat_ids);
}

TEST(BpeEncode, UnknownsAndErrors) {
  const auto m = BpeModel::train({{"abc"}}, 2, {"x"});
  const auto seq = m.encode({"zz"}, "x");
  EXPECT_EQ(seq.ids[1], special::unk);
  EXPECT_THROW(m.encode({"abc"}, "nope"), Error);
  EXPECT_TRUE(m.decode({}).empty());
  EXPECT_TRUE(m.decode({special::bos, m.tag_id("x"), special::eos, special::pad}).empty());
  EXPECT_THROW(m.decode({m.vocab_size()}), Error);
}

TEST(BpeModelFile, SaveLoadRoundTrip) {
  const auto m = BpeModel::train(random_corpus(5, 80), 60, {"l1", "l2"});
  const std::string text = m.to_string();
  const auto back = BpeModel::from_string(text);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.to_string(), text);
  EXPECT_THROW(BpeModel::from_string("#mvgvae-bpe 2\n"), ParseError);
  EXPECT_THROW(BpeModel::from_string(text.substr(0, text.size() / 2)), ParseError);
}
