#pragma once

// Bracketed constituency trees and the tree/sequence distances used for
// syntactic evaluation.

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mvgvae/util/error.hpp"

namespace mvg {

/// Labeled ordered tree. Word tokens are leaves flagged with `is_token`;
/// every other node is a constituent whose label is a nonterminal or POS tag.
struct ParseTree {
  std::string label;
  std::vector<ParseTree> children;
  bool is_token = false;

  static ParseTree token(std::string word) { return ParseTree{std::move(word), {}, true}; }
  static ParseTree node(std::string label, std::vector<ParseTree> kids = {}) {
    return ParseTree{std::move(label), std::move(kids), false};
  }

  /// A POS node: a constituent dominating exactly one token.
  bool is_preterminal() const {
    return !is_token && children.size() == 1 && children.front().is_token;
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& c : children) n += c.size();
    return n;
  }

  friend bool operator==(const ParseTree&, const ParseTree&) = default;
};

namespace detail {

class BracketReader {
 public:
  explicit BracketReader(std::string_view text) : s_(text) {}

  ParseTree read_root() {
    skip_ws();
    if (pos_ >= s_.size()) fail("empty input");
    if (s_[pos_] != '(') fail("expected '('");
    ParseTree t = read_node();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after tree");
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("bracket parse error at offset " + std::to_string(pos_) + ": " + msg, 0,
                     pos_);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' ||
                                s_[pos_] == '\r'))
      ++pos_;
  }

  std::string read_atom() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != '(' && s_[pos_] != ')' && s_[pos_] != ' ' &&
           s_[pos_] != '\t' && s_[pos_] != '\n' && s_[pos_] != '\r')
      ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  ParseTree read_node() {
    ++pos_;  // '('
    skip_ws();
    std::string label = read_atom();
    if (label.empty()) fail("empty label");
    ParseTree t = ParseTree::node(std::move(label));
    for (;;) {
      skip_ws();
      if (pos_ >= s_.size()) fail("unbalanced brackets: missing ')'");
      char c = s_[pos_];
      if (c == ')') {
        ++pos_;
        return t;
      }
      if (c == '(') {
        t.children.push_back(read_node());
      } else {
        t.children.push_back(ParseTree::token(read_atom()));
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline void print_into(const ParseTree& t, std::string& out) {
  if (t.is_token) {
    out += t.label;
    return;
  }
  out += '(';
  out += t.label;
  for (const auto& c : t.children) {
    out += ' ';
    print_into(c, out);
  }
  out += ')';
}

inline void collect_yield(const ParseTree& t, std::vector<std::string>& out) {
  if (t.is_token) {
    out.push_back(t.label);
    return;
  }
  for (const auto& c : t.children) collect_yield(c, out);
}

inline void collect_pos(const ParseTree& t, std::vector<std::string>& out) {
  if (t.is_preterminal()) {
    out.push_back(t.label);
    return;
  }
  for (const auto& c : t.children) collect_pos(c, out);
}

}  // namespace detail

/// Reads one PTB-style tree, e.g. `(S (NP (DT the) (NN dog)) (VP (VBD ran)))`.
/// Throws ParseError carrying the character offset on unbalanced input or empty labels.
inline ParseTree parse_brackets(std::string_view text) {
  return detail::BracketReader(text).read_root();
}

/// Canonical single-line rendering; inverse of parse_brackets on canonical text.
inline std::string to_brackets(const ParseTree& t) {
  std::string out;
  detail::print_into(t, out);
  return out;
}

inline std::vector<std::string> tree_yield(const ParseTree& t) {
  std::vector<std::string> out;
  detail::collect_yield(t, out);
  return out;
}

inline std::vector<std::string> tree_pos(const ParseTree& t) {
  std::vector<std::string> out;
  detail::collect_pos(t, out);
  return out;
}

/// Drops word tokens, keeping constituents and POS nodes.
inline ParseTree strip_tokens(const ParseTree& t) {
  ParseTree out = ParseTree::node(t.label);
  for (const auto& c : t.children)
    if (!c.is_token) out.children.push_back(strip_tokens(c));
  return out;
}

namespace detail {

struct PostorderTree {
  std::vector<std::string> labels;  // postorder
  std::vector<int> leftmost;        // leftmost leaf descendant (postorder index)
  std::vector<int> keyroots;
};

inline int postorder_walk(const ParseTree& t, PostorderTree& out) {
  int first_leaf = -1;
  for (const auto& c : t.children) {
    if (c.is_token) continue;
    int lm = postorder_walk(c, out);
    if (first_leaf < 0) first_leaf = lm;
  }
  int idx = static_cast<int>(out.labels.size());
  out.labels.push_back(t.label);
  out.leftmost.push_back(first_leaf < 0 ? idx : first_leaf);
  return out.leftmost.back();
}

inline PostorderTree postorder(const ParseTree& t) {
  PostorderTree p;
  postorder_walk(t, p);
  // Keyroots: for each distinct leftmost value, the highest node having it.
  std::map<int, int> highest;
  for (int i = 0; i < static_cast<int>(p.labels.size()); ++i) highest[p.leftmost[i]] = i;
  for (const auto& [lm, node] : highest) p.keyroots.push_back(node);
  std::sort(p.keyroots.begin(), p.keyroots.end());
  return p;
}

}  // namespace detail

/// Zhang–Shasha ordered tree edit distance with unit insert/delete/relabel
/// costs. Token leaves are ignored, so callers may pass full parse trees.
inline int tree_edit_distance(const ParseTree& a, const ParseTree& b) {
  const auto ta = detail::postorder(a);
  const auto tb = detail::postorder(b);
  const int n = static_cast<int>(ta.labels.size());
  const int m = static_cast<int>(tb.labels.size());
  std::vector<std::vector<int>> td(n, std::vector<int>(m, 0));
  std::vector<std::vector<int>> fd(n + 1, std::vector<int>(m + 1, 0));

  for (int i : ta.keyroots) {
    for (int j : tb.keyroots) {
      const int li = ta.leftmost[i];
      const int lj = tb.leftmost[j];
      // fd indices are offset so that row 0 / column 0 is the empty forest.
      const int rows = i - li + 2;
      const int cols = j - lj + 2;
      fd[0][0] = 0;
      for (int x = 1; x < rows; ++x) fd[x][0] = fd[x - 1][0] + 1;
      for (int y = 1; y < cols; ++y) fd[0][y] = fd[0][y - 1] + 1;
      for (int x = 1; x < rows; ++x) {
        const int ni = li + x - 1;
        for (int y = 1; y < cols; ++y) {
          const int nj = lj + y - 1;
          const int del = fd[x - 1][y] + 1;
          const int ins = fd[x][y - 1] + 1;
          if (ta.leftmost[ni] == li && tb.leftmost[nj] == lj) {
            const int rel = fd[x - 1][y - 1] + (ta.labels[ni] == tb.labels[nj] ? 0 : 1);
            fd[x][y] = std::min({del, ins, rel});
            td[ni][nj] = fd[x][y];
          } else {
            const int px = ta.leftmost[ni] - li;
            const int py = tb.leftmost[nj] - lj;
            fd[x][y] = std::min({del, ins, fd[px][py] + td[ni][nj]});
          }
        }
      }
    }
  }
  return td[n - 1][m - 1];
}

/// Mean tree edit distance over aligned lists (the ST metric; lower is better).
inline double st_score(const std::vector<ParseTree>& hypotheses,
                       const std::vector<ParseTree>& targets) {
  if (hypotheses.size() != targets.size())
    throw Error("st_score: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                std::to_string(targets.size()) + " targets");
  if (hypotheses.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    sum += tree_edit_distance(hypotheses[i], targets[i]);
  return sum / static_cast<double>(hypotheses.size());
}

using LabeledSpan = std::tuple<std::string, int, int>;

namespace detail {

inline int collect_spans(const ParseTree& t, int start, std::vector<LabeledSpan>& out) {
  if (t.is_token) return start + 1;
  int end = start;
  for (const auto& c : t.children) end = collect_spans(c, end, out);
  if (!t.is_preterminal()) out.emplace_back(t.label, start, end);
  return end;
}

}  // namespace detail

/// Labeled constituents (label, start, end) with end exclusive; POS nodes excluded.
inline std::vector<LabeledSpan> labeled_spans(const ParseTree& t) {
  std::vector<LabeledSpan> spans;
  detail::collect_spans(t, 0, spans);
  std::sort(spans.begin(), spans.end());
  return spans;
}

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision/recall/F1 over multisets of labeled spans.
inline PrfScore labeled_prf(const ParseTree& guess, const ParseTree& gold) {
  if (tree_yield(guess).size() != tree_yield(gold).size())
    throw Error("labeled_f1: trees yield sentences of different lengths");
  const auto a = labeled_spans(guess);
  const auto b = labeled_spans(gold);
  if (a.empty() && b.empty()) return {1.0, 1.0, 1.0};
  std::vector<LabeledSpan> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  PrfScore s;
  const double match = static_cast<double>(common.size());
  s.precision = a.empty() ? 0.0 : match / static_cast<double>(a.size());
  s.recall = b.empty() ? 0.0 : match / static_cast<double>(b.size());
  s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
  return s;
}

inline double labeled_f1(const ParseTree& a, const ParseTree& b) { return labeled_prf(a, b).f1; }

/// Fraction of positions with equal labels; sequences must have equal length.
inline double pos_accuracy(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size())
    throw Error("pos_accuracy: length mismatch " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  if (a.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += (a[i] == b[i]);
  return static_cast<double>(same) / static_cast<double>(a.size());
}

/// Levenshtein distance over label sequences with unit costs.
template <class Seq>
int sequence_edit_distance(const Seq& a, const Seq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline int pos_seq_edit_distance(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b) {
  return sequence_edit_distance(a, b);
}

}  // namespace mvg
