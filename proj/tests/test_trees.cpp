#include <gtest/gtest.h>

#include <random>
#include <set>

#include "mvgvae/trees.hpp"
#include "tree_oracle.hpp"

using namespace mvg;
using namespace tree_oracle;

TEST(Brackets, ParsesSmallTree) {
  const auto t = parse_brackets("(S (N dog))");
  EXPECT_EQ(t.label, "S");
  ASSERT_EQ(t.children.size(), 1u);
  EXPECT_TRUE(t.children[0].is_preterminal());
  EXPECT_EQ(tree_yield(t), std::vector<std::string>{"dog"});
  EXPECT_EQ(tree_pos(t), std::vector<std::string>{"N"});
}

TEST(Brackets, UnbalancedReportsOffset) {
  try {
    parse_brackets("(S (N dog)");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 10u);
  }
  EXPECT_THROW(parse_brackets("( (N dog))"), ParseError);
  EXPECT_THROW(parse_brackets(""), ParseError);
  EXPECT_THROW(parse_brackets("(S (N dog)))"), ParseError);
}

TEST(Brackets, PrintParseRoundTripOnThousandTrees) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const ParseTree t = random_tree(rng, 12, true);
    const std::string text = to_brackets(t);
    EXPECT_EQ(parse_brackets(text), t);
    EXPECT_EQ(to_brackets(parse_brackets(text)), text);
  }
}

TEST(TreeEditDistance, HandCases) {
  const auto a = parse_brackets("(S (NP) (VP))");
  const auto b = parse_brackets("(S (NP))");
  EXPECT_EQ(tree_edit_distance(a, a), 0);
  EXPECT_EQ(tree_edit_distance(a, b), 1);
  EXPECT_EQ(tree_edit_distance(parse_brackets("(A (B) (C))"), parse_brackets("(A (C) (B))")), 2);
  // Tokens are ignored.
  EXPECT_EQ(tree_edit_distance(parse_brackets("(S (N dog))"), parse_brackets("(S (N cat))")), 0);
}

TEST(TreeEditDistance, MatchesExhaustiveEditScriptSearch) {
  const std::string labels = "AB";
  std::vector<FNode> trees;
  for (int n = 1; n <= 4; ++n)
    for (auto& t : all_trees(n, labels)) trees.push_back(t);
  ASSERT_EQ(trees.size(), 2u + 4u + 16u + 80u);
  long agree = 0, total = 0;
  for (const auto& a : trees) {
    const auto dist = bfs(ser(Forest{a}), 4, labels);
    const ParseTree ta = to_tree(a);
    for (const auto& b : trees) {
      ++total;
      const int expected = dist.at(ser(Forest{b}));
      const int got = tree_edit_distance(ta, to_tree(b));
      if (expected == got) ++agree;
      else ADD_FAILURE() << ser(Forest{a}) << " vs " << ser(Forest{b}) << ": " << got << " != " << expected;
    }
  }
  EXPECT_EQ(agree, total);
}

TEST(TreeEditDistance, MetricAxiomsOnRandomPairs) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const ParseTree a = random_tree(rng, 9, false);
    const ParseTree b = random_tree(rng, 9, false);
    const ParseTree c = random_tree(rng, 9, false);
    const int ab = tree_edit_distance(a, b);
    EXPECT_EQ(ab, tree_edit_distance(b, a));
    EXPECT_EQ(tree_edit_distance(a, a), 0);
    EXPECT_EQ(ab == 0, a == b);
    EXPECT_LE(ab, tree_edit_distance(a, c) + tree_edit_distance(c, b));
    EXPECT_LE(ab, static_cast<int>(a.size() + b.size()));
  }
}

TEST(StScore, OwnParseIsZero) {
  const auto t = parse_brackets("(S (NP (DT the) (NN dog)) (VP (VBD barked)))");
  EXPECT_EQ(st_score({t}, {t}), 0.0);
}

TEST(StScore, MeanOfPerPairDistances) {
  const std::vector<ParseTree> h = {parse_brackets("(S (NP) (VP))"), parse_brackets("(A (B) (C))"),
                                    parse_brackets("(X)")};
  const std::vector<ParseTree> r = {parse_brackets("(S (NP))"), parse_brackets("(A (C) (B))"),
                                    parse_brackets("(Y (Z) (W))")};
  // 1 deletion; 2 relabels; 1 relabel + 2 insertions.
  EXPECT_DOUBLE_EQ(st_score(h, r), (1.0 + 2.0 + 3.0) / 3.0);
  EXPECT_DOUBLE_EQ(st_score({h[0]}, {r[0]}), 1.0);
  EXPECT_THROW(st_score(h, {r[0]}), Error);
}

TEST(LabeledF1, HandCountedTwoOfThree) {
  // Spans excluding preterminals: S[0,3], NP[0,2], VP[2,3] vs S[0,3], NP[0,2], PP[2,3].
  const auto a = parse_brackets("(S (NP (DT a) (NN b)) (VP (VB c)))");
  const auto b = parse_brackets("(S (NP (DT a) (NN b)) (PP (VB c)))");
  const auto s = labeled_prf(a, b);
  EXPECT_DOUBLE_EQ(s.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(labeled_f1(a, a), 1.0);
  EXPECT_DOUBLE_EQ(labeled_f1(parse_brackets("(A (X a) (X b))"), parse_brackets("(B (X a) (X b))")), 0.0);
  EXPECT_THROW(labeled_f1(a, parse_brackets("(S (N a))")), Error);
}

TEST(LabeledF1, SymmetricOnRandomTrees) {
  std::mt19937_64 rng(9);
  int compared = 0;
  for (int i = 0; i < 2000 && compared < 300; ++i) {
    const ParseTree a = random_tree(rng, 10, true);
    const ParseTree b = random_tree(rng, 10, true);
    if (tree_yield(a).size() != tree_yield(b).size()) continue;
    ++compared;
    EXPECT_DOUBLE_EQ(labeled_f1(a, b), labeled_f1(b, a));
  }
  EXPECT_GT(compared, 50);
}

TEST(PosAccuracy, Basics) {
  EXPECT_DOUBLE_EQ(pos_accuracy({"A", "B", "C", "D"}, {"A", "B", "C", "D"}), 1.0);
  EXPECT_DOUBLE_EQ(pos_accuracy({"A", "B", "C", "D"}, {"A", "B", "X", "D"}), 0.75);
  EXPECT_THROW(pos_accuracy({"A"}, {"A", "B"}), Error);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> a(10), b(10);
    int same = 0;
    for (int k = 0; k < 10; ++k) {
      a[k] = std::string(1, static_cast<char>('A' + rng() % 3));
      b[k] = std::string(1, static_cast<char>('A' + rng() % 3));
      same += a[k] == b[k];
    }
    EXPECT_DOUBLE_EQ(pos_accuracy(a, b), same / 10.0);
  }
}

namespace {
int levenshtein_rec(const std::vector<std::string>& a, std::size_t i, const std::vector<std::string>& b, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  return std::min({levenshtein_rec(a, i + 1, b, j) + 1, levenshtein_rec(a, i, b, j + 1) + 1,
                   levenshtein_rec(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1)});
}
}  // namespace

TEST(PosSeqEditDistance, MatchesRecursiveOracle) {
  EXPECT_EQ(pos_seq_edit_distance({"DT", "NN"}, {"DT", "NN"}), 0);
  EXPECT_EQ(pos_seq_edit_distance({"DT", "NN"}, {"DT", "JJ", "NN"}), 1);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> a(rng() % 7), b(rng() % 7);
    for (auto& x : a) x = std::string(1, static_cast<char>('A' + rng() % 3));
    for (auto& x : b) x = std::string(1, static_cast<char>('A' + rng() % 3));
    const int d = pos_seq_edit_distance(a, b);
    EXPECT_EQ(d, levenshtein_rec(a, 0, b, 0));
    EXPECT_LE(d, static_cast<int>(std::max(a.size(), b.size())));
  }
}
