// Copyright (c) 2026 The pvadbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pvad/error.hpp"
#include "pvad/tensor.hpp"

namespace pvad::nn {

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

// Reverse-mode tape over matrix-valued nodes.  One Graph instance per
// forward pass; nodes are created in topological order and walked in
// reverse by backward().  Frame-recurrent ops (lstm, running means,
// cosine) are fused sequence ops: forward work is strictly per frame so
// truncating the input reproduces a bit-identical prefix of the output.
class Graph {
 public:
  using Id = int;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----

  Id input(Mat v) { return push(std::move(v), false, nullptr); }

  Id input_row(const Eigen::VectorXd& v) {
    Mat m(1, v.size());
    m.row(0) = v.transpose();
    return input(std::move(m));
  }

  Id constant(int rows, int cols, double fill) {
    return input(Mat::Constant(rows, cols, fill));
  }

  // Binds a ParameterSet entry; gradients accumulate into ps.grad(name).
  Id param(ParameterSet& ps, const std::string& name) {
    const int pi = ps.index_of(name);
    Mat v = ps.value(pi).map();
    Id id = push(std::move(v), true, nullptr);
    nodes_[usz(id)].backprop = [pi, id, &ps](Graph& g) {
      ps.grad(pi).map() += g.nodes_[usz(id)].grad;
    };
    bound_sets_.push_back(&ps);
    return id;
  }

  // ---- ops ----

  // y = x * w^T + b, applied row-wise.  w is [out x in], b is [out].
  Id affine(Id xi, Id wi, Id bi) {
    const Mat& x = val(xi);
    const Mat& w = val(wi);
    const Mat& b = val(bi);
    if (x.cols() != w.cols()) throw ShapeError("affine: input dim mismatch");
    if (b.rows() != w.rows() || b.cols() != 1) throw ShapeError("affine: bias dim mismatch");
    const auto T = x.rows();
    Mat y(T, w.rows());
    for (Eigen::Index t = 0; t < T; ++t)
      y.row(t) = (w * x.row(t).transpose() + b.col(0)).transpose();
    Id id = push(std::move(y), any_grad({xi, wi, bi}), nullptr);
    nodes_[usz(id)].backprop = [xi, wi, bi, id](Graph& g) {
      const Mat& dy = g.nodes_[usz(id)].grad;
      if (g.needs(wi)) g.add_grad(wi, dy.transpose() * g.val(xi));
      if (g.needs(bi)) g.add_grad(bi, dy.colwise().sum().transpose());
      if (g.needs(xi)) g.add_grad(xi, dy * g.val(wi));
    };
    return id;
  }

  Id tanh_op(Id xi) {
    Mat y = val(xi).array().tanh();
    Id id = push(std::move(y), any_grad({xi}), nullptr);
    nodes_[usz(id)].backprop = [xi, id](Graph& g) {
      const Mat& y = g.val(id);
      const Mat& dy = g.nodes_[usz(id)].grad;
      if (g.needs(xi)) g.add_grad(xi, (dy.array() * (1.0 - y.array().square())).matrix());
    };
    return id;
  }

  // y = gamma .* h + beta, all three the same shape.
  Id film(Id hi, Id gi, Id bi) {
    const Mat& h = val(hi);
    if (h.rows() != val(gi).rows() || h.cols() != val(gi).cols() ||
        h.rows() != val(bi).rows() || h.cols() != val(bi).cols())
      throw ShapeError("film: gamma/beta shape mismatch");
    Mat y = (val(gi).array() * h.array() + val(bi).array()).matrix();
    Id id = push(std::move(y), any_grad({hi, gi, bi}), nullptr);
    nodes_[usz(id)].backprop = [hi, gi, bi, id](Graph& g) {
      const Mat& dy = g.nodes_[usz(id)].grad;
      if (g.needs(hi)) g.add_grad(hi, (dy.array() * g.val(gi).array()).matrix());
      if (g.needs(gi)) g.add_grad(gi, (dy.array() * g.val(hi).array()).matrix());
      if (g.needs(bi)) g.add_grad(bi, dy);
    };
    return id;
  }

  Id broadcast_rows(Id vi, Eigen::Index rows) {
    const Mat& v = val(vi);
    if (v.rows() != 1) throw ShapeError("broadcast_rows: expected a single row");
    Mat y = v.replicate(rows, 1);
    Id id = push(std::move(y), any_grad({vi}), nullptr);
    nodes_[usz(id)].backprop = [vi, id](Graph& g) {
      if (g.needs(vi)) g.add_grad(vi, g.nodes_[usz(id)].grad.colwise().sum());
    };
    return id;
  }

  Id concat_cols(Id ai, Id bi) {
    const Mat& a = val(ai);
    const Mat& b = val(bi);
    if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch");
    Mat y(a.rows(), a.cols() + b.cols());
    y.leftCols(a.cols()) = a;
    y.rightCols(b.cols()) = b;
    const auto ac = a.cols();
    Id id = push(std::move(y), any_grad({ai, bi}), nullptr);
    nodes_[usz(id)].backprop = [ai, bi, ac, id](Graph& g) {
      const Mat& dy = g.nodes_[usz(id)].grad;
      if (g.needs(ai)) g.add_grad(ai, dy.leftCols(ac));
      if (g.needs(bi)) g.add_grad(bi, dy.rightCols(dy.cols() - ac));
    };
    return id;
  }

  Id slice_cols(Id xi, Eigen::Index from, Eigen::Index n) {
    const Mat& x = val(xi);
    if (from < 0 || from + n > x.cols()) throw ShapeError("slice_cols: out of range");
    Mat y = x.middleCols(from, n);
    Id id = push(std::move(y), any_grad({xi}), nullptr);
    nodes_[usz(id)].backprop = [xi, from, n, id](Graph& g) {
      if (!g.needs(xi)) return;
      const Mat& x = g.val(xi);
      Mat dx = Mat::Zero(x.rows(), x.cols());
      dx.middleCols(from, n) = g.nodes_[usz(id)].grad;
      g.add_grad(xi, dx);
    };
    return id;
  }

  Id mean_rows(Id xi) {
    const Mat& x = val(xi);
    Mat y = x.colwise().mean();
    Id id = push(std::move(y), any_grad({xi}), nullptr);
    nodes_[usz(id)].backprop = [xi, id](Graph& g) {
      if (!g.needs(xi)) return;
      const Mat& x = g.val(xi);
      const Mat& dy = g.nodes_[usz(id)].grad;
      Mat dx(x.rows(), x.cols());
      dx.rowwise() = (dy.row(0) / static_cast<double>(x.rows()));
      g.add_grad(xi, dx);
    };
    return id;
  }

  Id l2_normalize_rows(Id xi) {
    const Mat& x = val(xi);
    Mat y(x.rows(), x.cols());
    std::vector<double> norms(usz(static_cast<int>(x.rows())));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double n = x.row(r).norm();
      if (n < 1e-12) n = 1e-12;
      norms[static_cast<std::size_t>(r)] = n;
      y.row(r) = x.row(r) / n;
    }
    auto cache = std::make_shared<std::vector<double>>(std::move(norms));
    Id id = push(std::move(y), any_grad({xi}), nullptr);
    nodes_[usz(id)].backprop = [xi, id, cache](Graph& g) {
      if (!g.needs(xi)) return;
      const Mat& y = g.val(id);
      const Mat& dy = g.nodes_[usz(id)].grad;
      Mat dx(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double n = (*cache)[static_cast<std::size_t>(r)];
        const double dot = dy.row(r).dot(y.row(r));
        dx.row(r) = (dy.row(r) - dot * y.row(r)) / n;
      }
      g.add_grad(xi, dx);
    };
    return id;
  }

  // Per-frame cosine similarity between rows of x and a single row v.
  // Rows (or v) with near-zero norm produce 0 with zero gradient.
  Id cosine_vs_row(Id xi, Id vi) {
    const Mat& x = val(xi);
    const Mat& v = val(vi);
    if (v.rows() != 1 || v.cols() != x.cols()) throw ShapeError("cosine_vs_row: dim mismatch");
    const double vn = v.row(0).norm();
    Mat y(x.rows(), 1);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      const double xn = x.row(t).norm();
      y(t, 0) = (xn < 1e-12 || vn < 1e-12) ? 0.0 : x.row(t).dot(v.row(0)) / (xn * vn);
    }
    Id id = push(std::move(y), any_grad({xi, vi}), nullptr);
    nodes_[usz(id)].backprop = [xi, vi, id](Graph& g) {
      const Mat& x = g.val(xi);
      const Mat& v = g.val(vi);
      const Mat& y = g.val(id);
      const Mat& dy = g.nodes_[usz(id)].grad;
      const double vn = v.row(0).norm();
      Mat dx = Mat::Zero(x.rows(), x.cols());
      Mat dv = Mat::Zero(1, v.cols());
      for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const double xn = x.row(t).norm();
        if (xn < 1e-12 || vn < 1e-12) continue;
        const double c = y(t, 0);
        const double d = dy(t, 0);
        dx.row(t) = d * (v.row(0) / (xn * vn) - c * x.row(t) / (xn * xn));
        dv.row(0) += d * (x.row(t) / (xn * vn) - c * v.row(0) / (vn * vn));
      }
      if (g.needs(xi)) g.add_grad(xi, dx);
      if (g.needs(vi)) g.add_grad(vi, dv);
    };
    return id;
  }

  // Causal prefix means: row t is the mean of rows 0..t.
  Id running_mean_rows(Id xi) {
    const Mat& x = val(xi);
    Mat y(x.rows(), x.cols());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      acc += x.row(t);
      y.row(t) = acc / static_cast<double>(t + 1);
    }
    Id id = push(std::move(y), any_grad({xi}), nullptr);
    nodes_[usz(id)].backprop = [xi, id](Graph& g) {
      if (!g.needs(xi)) return;
      const Mat& dy = g.nodes_[usz(id)].grad;
      Mat dx(dy.rows(), dy.cols());
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dy.cols());
      for (Eigen::Index t = dy.rows() - 1; t >= 0; --t) {
        acc += dy.row(t) / static_cast<double>(t + 1);
        dx.row(t) = acc;
      }
      g.add_grad(xi, dx);
    };
    return id;
  }

  // Full-sequence LSTM with combined bias: gates [i f g o],
  // c_t = f.c_{t-1} + i.g, h_t = o.tanh(c_t).  w_ih is [4H x In],
  // w_hh [4H x H], b [4H].  Returns all hidden states [T x H].
  Id lstm(Id xi, Id wih_i, Id whh_i, Id b_i) {
    return lstm_with_state(xi, wih_i, whh_i, b_i, Eigen::VectorXd(), Eigen::VectorXd());
  }

  Id lstm_with_state(Id xi, Id wih_i, Id whh_i, Id b_i, const Eigen::VectorXd& h0,
                     const Eigen::VectorXd& c0) {
    const Mat& x = val(xi);
    const Mat& wih = val(wih_i);
    const Mat& whh = val(whh_i);
    const Mat& b = val(b_i);
    const Eigen::Index H = whh.cols();
    if (wih.rows() != 4 * H || whh.rows() != 4 * H)
      throw ShapeError("lstm: weight shapes inconsistent");
    if (wih.cols() != x.cols()) throw ShapeError("lstm: input dim mismatch");
    if (b.rows() != 4 * H || b.cols() != 1) throw ShapeError("lstm: bias dim mismatch");
    if (h0.size() != 0 && h0.size() != H) throw ShapeError("lstm: h0 dim mismatch");
    if (c0.size() != 0 && c0.size() != H) throw ShapeError("lstm: c0 dim mismatch");

    const Eigen::Index T = x.rows();
    auto cache = std::make_shared<LstmCache>();
    cache->gates.resize(T, 4 * H);
    cache->tanh_c.resize(T, H);
    cache->c.resize(T, H);
    cache->h_prev.resize(T, H);

    Eigen::RowVectorXd h = h0.size() ? Eigen::RowVectorXd(h0.transpose())
                                     : Eigen::RowVectorXd::Zero(H);
    Eigen::RowVectorXd c = c0.size() ? Eigen::RowVectorXd(c0.transpose())
                                     : Eigen::RowVectorXd::Zero(H);
    Mat out(T, H);
    Eigen::VectorXd pre(4 * H);
    for (Eigen::Index t = 0; t < T; ++t) {
      cache->h_prev.row(t) = h;
      pre = wih * x.row(t).transpose() + whh * h.transpose() + b.col(0);
      auto gate = cache->gates.row(t);
      for (Eigen::Index j = 0; j < H; ++j) {
        gate(j) = sigmoid(pre(j));              // i
        gate(H + j) = sigmoid(pre(H + j));      // f
        gate(2 * H + j) = std::tanh(pre(2 * H + j));  // g
        gate(3 * H + j) = sigmoid(pre(3 * H + j));    // o
      }
      for (Eigen::Index j = 0; j < H; ++j)
        c(j) = gate(H + j) * c(j) + gate(j) * gate(2 * H + j);
      cache->c.row(t) = c;
      for (Eigen::Index j = 0; j < H; ++j) {
        cache->tanh_c(t, j) = std::tanh(c(j));
        h(j) = gate(3 * H + j) * cache->tanh_c(t, j);
      }
      out.row(t) = h;
    }

    Id id = push(std::move(out), any_grad({xi, wih_i, whh_i, b_i}), cache);
    nodes_[usz(id)].backprop = [xi, wih_i, whh_i, b_i, id, cache, c0](Graph& g) {
      const Mat& x = g.val(xi);
      const Mat& wih = g.val(wih_i);
      const Mat& whh = g.val(whh_i);
      const Mat& dH = g.nodes_[usz(id)].grad;
      const Eigen::Index T = x.rows();
      const Eigen::Index H = whh.cols();

      Mat dgates(T, 4 * H);
      Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(H);
      Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(H);
      for (Eigen::Index t = T - 1; t >= 0; --t) {
        const auto gate = cache->gates.row(t);
        for (Eigen::Index j = 0; j < H; ++j) {
          const double i_g = gate(j);
          const double f_g = gate(H + j);
          const double g_g = gate(2 * H + j);
          const double o_g = gate(3 * H + j);
          const double tc = cache->tanh_c(t, j);
          const double dh = dH(t, j) + dh_next(j);
          const double dc = dc_next(j) + dh * o_g * (1.0 - tc * tc);
          const double c_prev = (t == 0) ? (c0.size() ? c0(j) : 0.0) : cache->c(t - 1, j);
          dgates(t, j) = dc * g_g * i_g * (1.0 - i_g);
          dgates(t, H + j) = dc * c_prev * f_g * (1.0 - f_g);
          dgates(t, 2 * H + j) = dc * i_g * (1.0 - g_g * g_g);
          dgates(t, 3 * H + j) = dh * tc * o_g * (1.0 - o_g);
          dc_next(j) = dc * f_g;
        }
        dh_next = dgates.row(t) * whh;
      }
      if (g.needs(wih_i)) g.add_grad(wih_i, dgates.transpose() * x);
      if (g.needs(whh_i)) g.add_grad(whh_i, dgates.transpose() * cache->h_prev);
      if (g.needs(b_i)) g.add_grad(b_i, dgates.colwise().sum().transpose());
      if (g.needs(xi)) g.add_grad(xi, dgates * wih);
    };
    return id;
  }

  // Final cell state of an lstm node (for the spec-level (hT, cT) surface).
  Eigen::VectorXd lstm_final_cell(Id lstm_id) const {
    const auto& node = nodes_.at(usz(lstm_id));
    auto cache = std::static_pointer_cast<LstmCache>(node.cache);
    if (!cache || cache->c.rows() == 0) throw UsageError("lstm_final_cell: not an lstm node");
    return cache->c.row(cache->c.rows() - 1).transpose();
  }

  // Mean per-row softmax cross entropy against integer labels.
  // Stable via max subtraction; gradient is (softmax - onehot) / T.
  Id softmax_ce(Id li, std::vector<int> labels) {
    const Mat& logits = val(li);
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
      throw ShapeError("softmax_ce: one label per row required");
    const Eigen::Index C = logits.cols();
    for (int lab : labels)
      if (lab < 0 || lab >= C) throw ShapeError("softmax_ce: label out of range");
    auto probs = std::make_shared<Mat>(softmax_of(logits));
    double loss = 0.0;
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
      const double m = logits.row(t).maxCoeff();
      double lse = 0.0;
      for (Eigen::Index j = 0; j < C; ++j) lse += std::exp(logits(t, j) - m);
      loss += m + std::log(lse) - logits(t, static_cast<Eigen::Index>(labels[usz(static_cast<int>(t))]));
    }
    loss /= static_cast<double>(logits.rows());
    Mat y(1, 1);
    y(0, 0) = loss;
    Id id = push(std::move(y), any_grad({li}), probs);
    auto labs = std::make_shared<std::vector<int>>(std::move(labels));
    nodes_[usz(id)].backprop = [li, id, probs, labs](Graph& g) {
      if (!g.needs(li)) return;
      const double up = g.nodes_[usz(id)].grad(0, 0);
      const Eigen::Index T = probs->rows();
      Mat dl = *probs;
      for (Eigen::Index t = 0; t < T; ++t) dl(t, (*labs)[static_cast<std::size_t>(t)]) -= 1.0;
      dl *= up / static_cast<double>(T);
      g.add_grad(li, dl);
    };
    return id;
  }

  // Row-wise softmax of a node's value (pure helper, not a node).
  Mat softmax_rows(Id li) const { return softmax_of(val(li)); }

  static Mat softmax_of(const Mat& logits) {
    Mat p(logits.rows(), logits.cols());
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
      const double m = logits.row(t).maxCoeff();
      double sum = 0.0;
      for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        p(t, j) = std::exp(logits(t, j) - m);
        sum += p(t, j);
      }
      p.row(t) /= sum;
    }
    return p;
  }

  // ---- access / backward ----

  const Mat& val(Id id) const {
    if (id < 0 || usz(id) >= nodes_.size()) throw UsageError("graph: invalid node id");
    return nodes_[usz(id)].value;
  }

  const Mat& grad(Id id) const {
    const auto& n = nodes_.at(usz(id));
    if (!n.grad_alloc) {
      static const Mat empty;
      return empty;
    }
    return n.grad;
  }

  // Reverse pass from a scalar root.  Zeroes the gradients of every
  // bound ParameterSet first, so untouched parameters read as zero.
  void backward(Id root) {
    if (nodes_.empty()) throw UsageError("backward: no forward pass recorded");
    if (root < 0 || usz(root) >= nodes_.size()) throw UsageError("backward: invalid root");
    if (backward_done_) throw UsageError("backward: already called on this graph");
    const Mat& rv = val(root);
    if (rv.rows() != 1 || rv.cols() != 1) throw UsageError("backward: root must be scalar");
    backward_done_ = true;
    for (ParameterSet* ps : bound_sets_) ps->zero_grads();
    add_grad(root, Mat::Ones(1, 1));
    for (int id = root; id >= 0; --id) {
      auto& n = nodes_[usz(id)];
      if (n.grad_alloc && n.requires_grad && n.backprop) n.backprop(*this);
    }
  }

  bool backward_done() const { return backward_done_; }

 private:
  struct LstmCache {
    Mat gates;   // activated [i f g o], T x 4H
    Mat tanh_c;  // T x H
    Mat c;       // T x H
    Mat h_prev;  // T x H, row t = h_{t-1}
  };

  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::function<void(Graph&)> backprop;
    std::shared_ptr<void> cache;
  };

  static std::size_t usz(int id) { return static_cast<std::size_t>(id); }

  bool needs(Id id) const { return nodes_[usz(id)].requires_grad; }

  bool any_grad(std::initializer_list<Id> ids) const {
    for (Id id : ids)
      if (needs(id)) return true;
    return false;
  }

  template <typename Derived>
  void add_grad(Id id, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[usz(id)];
    if (!n.grad_alloc) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.grad_alloc = true;
    }
    n.grad += g;
  }

  Id push(Mat value, bool requires_grad, std::shared_ptr<void> cache) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.cache = std::move(cache);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<ParameterSet*> bound_sets_;
  bool backward_done_ = false;
};

}  // namespace pvad::nn
