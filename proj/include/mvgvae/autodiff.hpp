#pragma once

// Tape-based reverse-mode differentiation over row-major Eigen matrices.
//
// Rows are batch items. A Graph records every operation of one forward pass;
// backward() replays the tape in reverse. Parameters live outside the graph
// and receive their gradients directly, which lets the optimizer skip
// parameters no operation touched.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mvgvae/latent.hpp"
#include "mvgvae/util/error.hpp"

namespace mvg::ad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  /// Set by any graph operation that reads the parameter.
  bool touched = false;

  void zero_grad() {
    grad.setZero(value.rows(), value.cols());
    touched = false;
  }
};

/// Handle to a graph node. Only meaningful for the graph that created it.
struct Var {
  int id = -1;
};

template <class S>
class Graph {
 public:
  using M = Mat<S>;

  const M& value(Var v) const { return nodes_.at(v.id).value; }
  S scalar(Var v) const { return value(v)(0, 0); }
  bool requires_grad(Var v) const { return nodes_[v.id].needs; }
  /// Gradient of a node, allocated as zeros on first access.
  M& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  std::size_t size() const { return nodes_.size(); }

  Var constant(M m) { return push(std::move(m), false, nullptr); }

  /// Rows of an embedding table.
  Var lookup(Param<S>& table, const std::vector<int>& ids) {
    M out(static_cast<Eigen::Index>(ids.size()), table.value.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) out.row(r) = table.value.row(check_id(table, ids[r]));
    table.touched = true;
    Param<S>* t = &table;
    return push(std::move(out), true, [this, t, ids](int self) {
      const M& g = nodes_[self].grad;
      ensure_grad(*t);
      for (std::size_t r = 0; r < ids.size(); ++r) t->grad.row(ids[r]) += g.row(r);
    });
  }

  /// Mean of embedding rows per bag; one output row per bag. Bags must be non-empty.
  Var bag_mean(Param<S>& table, const std::vector<std::vector<int>>& bags) {
    M out = M::Zero(static_cast<Eigen::Index>(bags.size()), table.value.cols());
    for (std::size_t r = 0; r < bags.size(); ++r) {
      if (bags[r].empty()) throw Error("bag_mean: empty bag");
      for (int id : bags[r]) out.row(r) += table.value.row(check_id(table, id));
      out.row(r) /= static_cast<S>(bags[r].size());
    }
    table.touched = true;
    Param<S>* t = &table;
    return push(std::move(out), true, [this, t, bags](int self) {
      const M& g = nodes_[self].grad;
      ensure_grad(*t);
      for (std::size_t r = 0; r < bags.size(); ++r) {
        const S inv = S(1) / static_cast<S>(bags[r].size());
        for (int id : bags[r]) t->grad.row(id) += inv * g.row(r);
      }
    });
  }

  /// x W + b with b broadcast over rows.
  Var affine(Var x, Param<S>& w, Param<S>& b) {
    const M& xv = value(x);
    if (xv.cols() != w.value.rows() || b.value.cols() != w.value.cols() || b.value.rows() != 1)
      throw Error("affine: shape mismatch for " + w.name);
    M out(xv.rows(), w.value.cols());
    out.noalias() = xv * w.value;
    out.rowwise() += b.value.row(0);
    w.touched = b.touched = true;
    Param<S>* wp = &w;
    Param<S>* bp = &b;
    return push(std::move(out), true, [this, x, wp, bp](int self) {
      const M& g = nodes_[self].grad;
      ensure_grad(*wp);
      ensure_grad(*bp);
      wp->grad.noalias() += value(x).transpose() * g;
      bp->grad += g.colwise().sum();
      if (requires_grad(x)) grad(x).noalias() += g * wp->value.transpose();
    });
  }

  /// Elementwise sum; `b` may be a single row broadcast over the rows of `a`.
  Var add(Var a, Var b) {
    const M& av = value(a);
    const M& bv = value(b);
    const bool bcast = bv.rows() == 1 && av.rows() != 1;
    if (av.cols() != bv.cols() || (!bcast && av.rows() != bv.rows())) throw Error("add: shape mismatch");
    M out = av;
    if (bcast)
      out.rowwise() += bv.row(0);
    else
      out += bv;
    return push(std::move(out), needs(a) || needs(b), [this, a, b, bcast](int self) {
      const M& g = nodes_[self].grad;
      if (requires_grad(a)) grad(a) += g;
      if (requires_grad(b)) {
        if (bcast)
          grad(b) += g.colwise().sum();
        else
          grad(b) += g;
      }
    });
  }

  Var sub(Var a, Var b) { return add(a, scale(b, S(-1))); }

  Var cmul(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw Error("cmul: shape mismatch");
    M out = value(a).cwiseProduct(value(b));
    return push(std::move(out), needs(a) || needs(b), [this, a, b](int self) {
      const M& g = nodes_[self].grad;
      if (requires_grad(a)) grad(a) += g.cwiseProduct(value(b));
      if (requires_grad(b)) grad(b) += g.cwiseProduct(value(a));
    });
  }

  Var scale(Var a, S s) {
    M out = value(a) * s;
    return push(std::move(out), needs(a), [this, a, s](int self) { grad(a) += nodes_[self].grad * s; });
  }

  Var tanh(Var a) {
    M out = value(a).array().tanh().matrix();
    return push(std::move(out), needs(a), [this, a](int self) {
      const M& y = nodes_[self].value;
      grad(a).array() += nodes_[self].grad.array() * (S(1) - y.array().square());
    });
  }

  Var exp(Var a) {
    M out = value(a).array().exp().matrix();
    return push(std::move(out), needs(a), [this, a](int self) {
      grad(a).array() += nodes_[self].grad.array() * nodes_[self].value.array();
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat_cols: no inputs");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    bool any = false;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw Error("concat_cols: row mismatch");
      cols += value(p).cols();
      any = any || needs(p);
    }
    M out(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      out.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    return push(std::move(out), any, [this, parts](int self) {
      Eigen::Index c = 0;
      for (Var p : parts) {
        const Eigen::Index w = value(p).cols();
        if (requires_grad(p)) grad(p) += nodes_[self].grad.middleCols(c, w);
        c += w;
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat_rows: no inputs");
    const Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    bool any = false;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw Error("concat_rows: column mismatch");
      rows += value(p).rows();
      any = any || needs(p);
    }
    M out(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      out.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    return push(std::move(out), any, [this, parts](int self) {
      Eigen::Index r = 0;
      for (Var p : parts) {
        const Eigen::Index h = value(p).rows();
        if (requires_grad(p)) grad(p) += nodes_[self].grad.middleRows(r, h);
        r += h;
      }
    });
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || n < 0 || start + n > value(a).cols()) throw Error("slice_cols: out of range");
    M out = value(a).middleCols(start, n);
    return push(std::move(out), needs(a), [this, a, start, n](int self) {
      grad(a).middleCols(start, n) += nodes_[self].grad;
    });
  }

  /// out[r] = a[index[r]].
  Var gather_rows(Var a, const std::vector<int>& index) {
    const M& av = value(a);
    M out(static_cast<Eigen::Index>(index.size()), av.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (index[r] < 0 || index[r] >= av.rows()) throw Error("gather_rows: index out of range");
      out.row(r) = av.row(index[r]);
    }
    return push(std::move(out), needs(a), [this, a, index](int self) {
      M& ga = grad(a);
      const M& g = nodes_[self].grad;
      for (std::size_t r = 0; r < index.size(); ++r) ga.row(index[r]) += g.row(r);
    });
  }

  /// Each row divided by its Euclidean norm.
  Var row_normalize(Var a) {
    const M& av = value(a);
    Eigen::Matrix<S, Eigen::Dynamic, 1> norms = av.rowwise().norm();
    for (Eigen::Index r = 0; r < norms.size(); ++r)
      if (!(norms[r] > S(0))) throw NumericError("row_normalize: zero or non-finite row");
    M out = av;
    for (Eigen::Index r = 0; r < av.rows(); ++r) out.row(r) /= norms[r];
    return push(std::move(out), needs(a), [this, a, norms](int self) {
      const M& y = nodes_[self].value;
      const M& g = nodes_[self].grad;
      M& ga = grad(a);
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const S d = g.row(r).dot(y.row(r));
        ga.row(r) += (g.row(r) - d * y.row(r)) / norms[r];
      }
    });
  }

  /// Row-wise Householder reflection of fixed noise x0 onto mean directions mu.
  Var householder(Var mu, M x0) {
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    const M& mv = value(mu);
    if (mv.rows() != x0.rows() || mv.cols() != x0.cols()) throw Error("householder: shape mismatch");
    M out(mv.rows(), mv.cols());
    for (Eigen::Index r = 0; r < mv.rows(); ++r)
      out.row(r) = householder_apply<Vec>(mv.row(r).transpose(), x0.row(r).transpose()).transpose();
    return push(std::move(out), needs(mu), [this, mu, x0 = std::move(x0)](int self) {
      const M& g = nodes_[self].grad;
      M& gm = grad(mu);
      const M& mv = value(mu);
      for (Eigen::Index r = 0; r < mv.rows(); ++r)
        gm.row(r) += householder_vjp_mu<Vec>(mv.row(r).transpose(), x0.row(r).transpose(),
                                             g.row(r).transpose())
                         .transpose();
    });
  }

  /// sum_r w_r * -log softmax(logits_r)[target_r]; rows with zero weight are skipped.
  Var softmax_xent(Var logits, std::vector<int> targets, std::vector<S> weights) {
    const M& lv = value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != lv.rows() || weights.size() != targets.size())
      throw Error("softmax_xent: target count mismatch");
    auto probs = std::make_shared<M>(lv.rows(), lv.cols());
    S total = 0;
    for (Eigen::Index r = 0; r < lv.rows(); ++r) {
      if (weights[r] == S(0)) {
        probs->row(r).setZero();
        continue;
      }
      if (targets[r] < 0 || targets[r] >= lv.cols()) throw Error("softmax_xent: target out of range");
      const S m = lv.row(r).maxCoeff();
      probs->row(r) = (lv.row(r).array() - m).exp().matrix();
      const S z = probs->row(r).sum();
      probs->row(r) /= z;
      total += weights[r] * (m + std::log(z) - lv(r, targets[r]));
    }
    M out(1, 1);
    out(0, 0) = total;
    return push(std::move(out), needs(logits),
                [this, logits, probs, targets = std::move(targets), weights = std::move(weights)](int self) {
                  const S g = nodes_[self].grad(0, 0);
                  M& gl = grad(logits);
                  for (Eigen::Index r = 0; r < gl.rows(); ++r) {
                    if (weights[r] == S(0)) continue;
                    gl.row(r) += (g * weights[r]) * probs->row(r);
                    gl(r, targets[r]) -= g * weights[r];
                  }
                });
  }

  /// sum_r w_r * KL(N(mu_r, exp(logsig_r)^2) || N(0, I)).
  Var gauss_kl(Var mu, Var logsig, std::vector<S> weights) {
    const M& m = value(mu);
    const M& ls = value(logsig);
    if (m.rows() != ls.rows() || m.cols() != ls.cols() || static_cast<Eigen::Index>(weights.size()) != m.rows())
      throw Error("gauss_kl: shape mismatch");
    S total = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      S kl = 0;
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        kl += std::exp(2 * ls(r, c)) + m(r, c) * m(r, c) - S(1) - 2 * ls(r, c);
      total += weights[r] * S(0.5) * kl;
    }
    M out(1, 1);
    out(0, 0) = total;
    return push(std::move(out), needs(mu) || needs(logsig), [this, mu, logsig, weights = std::move(weights)](int self) {
      const S g = nodes_[self].grad(0, 0);
      const M& m = value(mu);
      const M& ls = value(logsig);
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const S w = g * weights[r];
        if (requires_grad(mu)) grad(mu).row(r) += w * m.row(r);
        if (requires_grad(logsig)) grad(logsig).row(r).array() += w * ((2 * ls.row(r).array()).exp() - S(1));
      }
    });
  }

  Var sum(Var a) {
    M out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), needs(a), [this, a](int self) {
      grad(a).array() += nodes_[self].grad(0, 0);
    });
  }

  /// One LSTM step over a batch (gate order i, f, g, o). Rows with mask 0
  /// carry (h, c) through unchanged. Returns (h', c').
  std::pair<Var, Var> lstm(Var x, Var h, Var c, Param<S>& wx, Param<S>& wh, Param<S>& b,
                           const std::vector<S>& mask) {
    const M& xv = value(x);
    const M& hv = value(h);
    const M& cv = value(c);
    const Eigen::Index H = hv.cols();
    if (wx.value.rows() != xv.cols() || wx.value.cols() != 4 * H || wh.value.rows() != H ||
        wh.value.cols() != 4 * H || b.value.cols() != 4 * H || cv.cols() != H || xv.rows() != hv.rows() ||
        static_cast<Eigen::Index>(mask.size()) != xv.rows())
      throw Error("lstm: shape mismatch for " + wx.name);
    wx.touched = wh.touched = b.touched = true;
    auto cache = std::make_shared<LstmCache>();
    cache->mask = mask;
    M pre(xv.rows(), 4 * H);
    pre.noalias() = xv * wx.value;
    pre.noalias() += hv * wh.value;
    pre.rowwise() += b.value.row(0);
    auto sig = [](const auto& m) { return (S(1) / (S(1) + (-m.array()).exp())).matrix(); };
    cache->i = sig(pre.middleCols(0, H));
    cache->f = sig(pre.middleCols(H, H));
    cache->g = pre.middleCols(2 * H, H).array().tanh().matrix();
    cache->o = sig(pre.middleCols(3 * H, H));
    M c_new = cache->f.cwiseProduct(cv) + cache->i.cwiseProduct(cache->g);
    cache->tc = c_new.array().tanh().matrix();
    M h_new = cache->o.cwiseProduct(cache->tc);
    for (Eigen::Index r = 0; r < xv.rows(); ++r)
      if (mask[r] == S(0)) {
        c_new.row(r) = cv.row(r);
        h_new.row(r) = hv.row(r);
      }
    cache->d_o.setZero(xv.rows(), H);

    Param<S>* wxp = &wx;
    Param<S>* whp = &wh;
    Param<S>* bp = &b;
    // The cell node precedes the hidden node on the tape, so the hidden
    // node's backward (which fills d_o and adds into the cell gradient)
    // runs first.
    const Var c_var = push(std::move(c_new), true, [this, x, h, c, wxp, whp, bp, cache](int self) {
      M& gc_new = grad(Var{self});
      const M& cv = value(c);
      const Eigen::Index rows = cv.rows();
      const Eigen::Index H = cv.cols();
      M dpre = M::Zero(rows, 4 * H);
      M dc_prev = M::Zero(rows, H);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (cache->mask[r] == S(0)) {
          dc_prev.row(r) = gc_new.row(r);
          continue;
        }
        const auto dc = gc_new.row(r).array();
        const auto i = cache->i.row(r).array();
        const auto f = cache->f.row(r).array();
        const auto g = cache->g.row(r).array();
        const auto o = cache->o.row(r).array();
        dpre.row(r).segment(0, H) = (dc * g * i * (S(1) - i)).matrix();
        dpre.row(r).segment(H, H) = (dc * cv.row(r).array() * f * (S(1) - f)).matrix();
        dpre.row(r).segment(2 * H, H) = (dc * i * (S(1) - g * g)).matrix();
        dpre.row(r).segment(3 * H, H) = (cache->d_o.row(r).array() * o * (S(1) - o)).matrix();
        dc_prev.row(r) = (dc * f).matrix();
      }
      ensure_grad(*wxp);
      ensure_grad(*whp);
      ensure_grad(*bp);
      wxp->grad.noalias() += value(x).transpose() * dpre;
      whp->grad.noalias() += value(h).transpose() * dpre;
      bp->grad += dpre.colwise().sum();
      if (requires_grad(x)) grad(x).noalias() += dpre * wxp->value.transpose();
      if (requires_grad(h)) grad(h).noalias() += dpre * whp->value.transpose();
      if (requires_grad(c)) grad(c) += dc_prev;
    });
    const Var h_var = push(std::move(h_new), true, [this, h, c_var, cache](int self) {
      const M& gh = nodes_[self].grad;
      M& gc = grad(c_var);
      for (Eigen::Index r = 0; r < gh.rows(); ++r) {
        if (cache->mask[r] == S(0)) {
          if (requires_grad(h)) grad(h).row(r) += gh.row(r);
          continue;
        }
        cache->d_o.row(r) = gh.row(r).cwiseProduct(cache->tc.row(r));
        gc.row(r).array() +=
            gh.row(r).array() * cache->o.row(r).array() * (S(1) - cache->tc.row(r).array().square());
      }
    });
    return {h_var, c_var};
  }

  /// Reverse pass from a 1x1 node with seed gradient `seed`.
  void backward(Var loss, S seed = S(1)) {
    if (value(loss).size() != 1) throw Error("backward: loss must be a scalar");
    grad(loss)(0, 0) += seed;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs || !n.back) continue;
      if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
      n.back(i);
    }
  }

 private:
  struct LstmCache {
    M i, f, g, o, tc, d_o;
    std::vector<S> mask;
  };
  struct Node {
    M value;
    M grad;
    bool needs = false;
    std::function<void(int)> back;
  };

  static int check_id(const Param<S>& table, int id) {
    if (id < 0 || id >= table.value.rows()) throw Error("lookup: id out of range for " + table.name);
    return id;
  }
  static void ensure_grad(Param<S>& p) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      p.grad.setZero(p.value.rows(), p.value.cols());
  }
  bool needs(Var v) const { return nodes_[v.id].needs; }

  Var push(M value, bool needs_grad, std::function<void(int)> back) {
    for (Eigen::Index k = 0; k < value.size(); ++k)
      if (!std::isfinite(static_cast<double>(value.data()[k])))
        throw NumericError("non-finite value produced at graph node " + std::to_string(nodes_.size()));
    nodes_.push_back(Node{std::move(value), M(), needs_grad, needs_grad ? std::move(back) : nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace mvg::ad
