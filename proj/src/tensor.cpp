#include "partmotion/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace partmotion::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

double* Node::grad_data() {
  if (grad.empty()) grad.assign(static_cast<size_t>(size()), 0.0);
  return grad.data();
}

namespace {

std::shared_ptr<Node> make_node(int rows, int cols, std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->val.resize(static_cast<size_t>(rows) * cols);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  return n;
}

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

MatMap map(Node& n) { return MatMap(n.val.data(), n.rows, n.cols); }
CMatMap cmap(const Node& n) { return CMatMap(n.val.data(), n.rows, n.cols); }
MatMap gmap(Node& n) { return MatMap(n.grad_data(), n.rows, n.cols); }

}  // namespace

Tensor Tensor::zeros(int rows, int cols) {
  auto n = make_node(rows, cols, {});
  return Tensor(n);
}

Tensor Tensor::full(int rows, int cols, double v) {
  auto n = make_node(rows, cols, {});
  std::fill(n->val.begin(), n->val.end(), v);
  return Tensor(n);
}

Tensor Tensor::from(int rows, int cols, std::vector<double> vals) {
  check(static_cast<int64_t>(vals.size()) == static_cast<int64_t>(rows) * cols,
        "Tensor::from: size mismatch");
  auto n = make_node(rows, cols, {});
  n->val = std::move(vals);
  return Tensor(n);
}

Tensor Tensor::randn(int rows, int cols, double stddev, Rng& rng) {
  auto n = make_node(rows, cols, {});
  for (auto& v : n->val) v = rng.normal() * stddev;
  return Tensor(n);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  auto n = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  map(*n) = cmap(*a.node()) + cmap(*b.node());
  n->backward_fn = [](Node& self) {
    if (self.parents[0]->requires_grad) gmap(*self.parents[0]) += gmap(self);
    if (self.parents[1]->requires_grad) gmap(*self.parents[1]) += gmap(self);
  };
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  auto n = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  map(*n) = cmap(*a.node()) - cmap(*b.node());
  n->backward_fn = [](Node& self) {
    if (self.parents[0]->requires_grad) gmap(*self.parents[0]) += gmap(self);
    if (self.parents[1]->requires_grad) gmap(*self.parents[1]) -= gmap(self);
  };
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  auto n = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  map(*n) = cmap(*a.node()).cwiseProduct(cmap(*b.node()));
  n->backward_fn = [](Node& self) {
    if (self.parents[0]->requires_grad)
      gmap(*self.parents[0]) += gmap(self).cwiseProduct(cmap(*self.parents[1]));
    if (self.parents[1]->requires_grad)
      gmap(*self.parents[1]) += gmap(self).cwiseProduct(cmap(*self.parents[0]));
  };
  return Tensor(n);
}

Tensor scale(const Tensor& a, double s) {
  auto n = make_node(a.rows(), a.cols(), {a.node()});
  map(*n) = cmap(*a.node()) * s;
  n->backward_fn = [s](Node& self) {
    if (self.parents[0]->requires_grad) gmap(*self.parents[0]) += gmap(self) * s;
  };
  return Tensor(n);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check(bias.rows() == 1 && bias.cols() == x.cols(), "add_bias: bias shape");
  auto n = make_node(x.rows(), x.cols(), {x.node(), bias.node()});
  map(*n) = cmap(*x.node()).rowwise() + cmap(*bias.node()).row(0);
  n->backward_fn = [](Node& self) {
    if (self.parents[0]->requires_grad) gmap(*self.parents[0]) += gmap(self);
    if (self.parents[1]->requires_grad)
      gmap(*self.parents[1]).row(0) += gmap(self).colwise().sum();
  };
  return Tensor(n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.rows(), "matmul: inner dim mismatch");
  auto n = make_node(a.rows(), b.cols(), {a.node(), b.node()});
  map(*n).noalias() = cmap(*a.node()) * cmap(*b.node());
  n->backward_fn = [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) gmap(a).noalias() += gmap(self) * cmap(b).transpose();
    if (b.requires_grad) gmap(b).noalias() += cmap(a).transpose() * gmap(self);
  };
  return Tensor(n);
}

Tensor gelu(const Tensor& x) {
  auto n = make_node(x.rows(), x.cols(), {x.node()});
  const double c = std::sqrt(2.0 / M_PI);
  const double* xv = x.data();
  for (int64_t i = 0; i < n->size(); ++i) {
    const double u = c * (xv[i] + 0.044715 * xv[i] * xv[i] * xv[i]);
    n->val[i] = 0.5 * xv[i] * (1.0 + std::tanh(u));
  }
  n->backward_fn = [c](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    double* gx = x.grad_data();
    const double* g = self.grad.data();
    for (int64_t i = 0; i < self.size(); ++i) {
      const double v = x.val[i];
      const double u = c * (v + 0.044715 * v * v * v);
      const double t = std::tanh(u);
      const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  };
  return Tensor(n);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const int N = x.rows(), C = x.cols();
  check(gain.rows() == 1 && gain.cols() == C && bias.rows() == 1 && bias.cols() == C,
        "layer_norm: gain/bias shape");
  auto n = make_node(N, C, {x.node(), gain.node(), bias.node()});
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * C);
  auto inv_std = std::make_shared<std::vector<double>>(N);
  const double* xv = x.data();
  const double* gv = gain.data();
  const double* bv = bias.data();
  for (int r = 0; r < N; ++r) {
    const double* row = xv + static_cast<int64_t>(r) * C;
    double mean = 0.0;
    for (int c = 0; c < C; ++c) mean += row[c];
    mean /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= C;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int c = 0; c < C; ++c) {
      const double xh = (row[c] - mean) * is;
      (*xhat)[static_cast<int64_t>(r) * C + c] = xh;
      n->val[static_cast<int64_t>(r) * C + c] = xh * gv[c] + bv[c];
    }
  }
  n->backward_fn = [xhat, inv_std, N, C](Node& self) {
    Node& x = *self.parents[0];
    Node& gain = *self.parents[1];
    Node& bias = *self.parents[2];
    const double* g = self.grad.data();
    const double* gv = gain.val.data();
    for (int r = 0; r < N; ++r) {
      const double* grow = g + static_cast<int64_t>(r) * C;
      const double* xh = xhat->data() + static_cast<int64_t>(r) * C;
      if (gain.requires_grad) {
        double* gg = gain.grad_data();
        for (int c = 0; c < C; ++c) gg[c] += grow[c] * xh[c];
      }
      if (bias.requires_grad) {
        double* gb = bias.grad_data();
        for (int c = 0; c < C; ++c) gb[c] += grow[c];
      }
      if (x.requires_grad) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int c = 0; c < C; ++c) {
          const double dxh = grow[c] * gv[c];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xh[c];
        }
        double* gx = x.grad_data() + static_cast<int64_t>(r) * C;
        const double is = (*inv_std)[r];
        for (int c = 0; c < C; ++c) {
          const double dxh = grow[c] * gv[c];
          gx[c] += is * (dxh - sum_dxhat / C - xh[c] * sum_dxhat_xhat / C);
        }
      }
    }
  };
  return Tensor(n);
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  const int N = static_cast<int>(ids.size());
  const int d = table.cols();
  for (int id : ids) check(id >= 0 && id < table.rows(), "embedding: id out of range");
  auto n = make_node(N, d, {table.node()});
  const double* tv = table.data();
  for (int r = 0; r < N; ++r)
    std::copy(tv + static_cast<int64_t>(ids[r]) * d, tv + static_cast<int64_t>(ids[r] + 1) * d,
              n->val.begin() + static_cast<int64_t>(r) * d);
  n->backward_fn = [ids, d](Node& self) {
    Node& table = *self.parents[0];
    if (!table.requires_grad) return;
    double* gt = table.grad_data();
    const double* g = self.grad.data();
    for (size_t r = 0; r < ids.size(); ++r)
      for (int c = 0; c < d; ++c) gt[static_cast<int64_t>(ids[r]) * d + c] += g[r * d + c];
  };
  return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "concat_cols: empty input");
  const int N = xs[0].rows();
  int total = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& x : xs) {
    check(x.rows() == N, "concat_cols: row mismatch");
    total += x.cols();
    parents.push_back(x.node());
  }
  auto n = make_node(N, total, parents);
  int off = 0;
  for (const auto& x : xs) {
    map(*n).block(0, off, N, x.cols()) = cmap(*x.node());
    off += x.cols();
  }
  n->backward_fn = [N](Node& self) {
    int off = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) gmap(*p) += gmap(self).block(0, off, N, p->cols);
      off += p->cols;
    }
  };
  return Tensor(n);
}

Tensor sum_all(const Tensor& x) {
  auto n = make_node(1, 1, {x.node()});
  double s = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) s += x.data()[i];
  n->val[0] = s;
  n->backward_fn = [](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    const double g = self.grad[0];
    double* gx = x.grad_data();
    for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
  };
  return Tensor(n);
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Tensor detach(const Tensor& x) {
  auto n = make_node(x.rows(), x.cols(), {});
  n->val = x.node()->val;
  return Tensor(n);
}

Tensor straight_through(const Tensor& e, const Tensor& q) {
  check(e.rows() == q.rows() && e.cols() == q.cols(), "straight_through: shape mismatch");
  auto n = make_node(e.rows(), e.cols(), {e.node()});
  n->val = q.node()->val;  // forward value is q, bit for bit
  n->backward_fn = [](Node& self) {
    if (self.parents[0]->requires_grad) gmap(*self.parents[0]) += gmap(self);
  };
  return Tensor(n);
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int seqlen,
                        int heads) {
  const int d = q.cols();
  check(q.rows() == batch * seqlen && k.rows() == q.rows() && v.rows() == q.rows(),
        "causal_attention: row mismatch");
  check(k.cols() == d && v.cols() == d && d % heads == 0, "causal_attention: dim mismatch");
  const int hd = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  auto n = make_node(batch * seqlen, d, {q.node(), k.node(), v.node()});
  // probs[(b*heads + h)*T*T + i*T + j], lower triangle only
  auto probs =
      std::make_shared<std::vector<double>>(static_cast<size_t>(batch) * heads * seqlen * seqlen, 0.0);
  const auto Q = cmap(*q.node());
  const auto K = cmap(*k.node());
  const auto V = cmap(*v.node());
  auto O = map(*n);
  std::vector<double> srow(seqlen);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto Qb = Q.block(b * seqlen, h * hd, seqlen, hd);
      const auto Kb = K.block(b * seqlen, h * hd, seqlen, hd);
      const auto Vb = V.block(b * seqlen, h * hd, seqlen, hd);
      double* P = probs->data() + (static_cast<size_t>(b) * heads + h) * seqlen * seqlen;
      for (int i = 0; i < seqlen; ++i) {
        // row i attends to rows 0..i only; later rows never enter the sums
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
          srow[j] = sc * Qb.row(i).dot(Kb.row(j));
          mx = std::max(mx, srow[j]);
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          srow[j] = std::exp(srow[j] - mx);
          z += srow[j];
        }
        double* prow = P + static_cast<size_t>(i) * seqlen;
        for (int j = 0; j <= i; ++j) prow[j] = srow[j] / z;
        auto orow = O.block(b * seqlen + i, h * hd, 1, hd);
        orow.setZero();
        for (int j = 0; j <= i; ++j) orow += prow[j] * Vb.row(j);
      }
    }
  }
  n->backward_fn = [probs, batch, seqlen, heads, hd, sc](Node& self) {
    Node& qn = *self.parents[0];
    Node& kn = *self.parents[1];
    Node& vn = *self.parents[2];
    const auto Q = cmap(qn);
    const auto K = cmap(kn);
    const auto V = cmap(vn);
    auto GO = gmap(self);
    std::vector<double> dp(seqlen), ds(seqlen);
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const auto Qb = Q.block(b * seqlen, h * hd, seqlen, hd);
        const auto Kb = K.block(b * seqlen, h * hd, seqlen, hd);
        const auto Vb = V.block(b * seqlen, h * hd, seqlen, hd);
        const double* P = probs->data() + (static_cast<size_t>(b) * heads + h) * seqlen * seqlen;
        for (int i = 0; i < seqlen; ++i) {
          const auto go = GO.block(b * seqlen + i, h * hd, 1, hd);
          const double* prow = P + static_cast<size_t>(i) * seqlen;
          double dot = 0.0;
          for (int j = 0; j <= i; ++j) {
            dp[j] = go.row(0).dot(Vb.row(j));
            dot += dp[j] * prow[j];
          }
          for (int j = 0; j <= i; ++j) ds[j] = prow[j] * (dp[j] - dot);
          if (vn.requires_grad) {
            auto GV = gmap(vn);
            for (int j = 0; j <= i; ++j)
              GV.block(b * seqlen + j, h * hd, 1, hd) += prow[j] * go;
          }
          if (qn.requires_grad) {
            auto gq = gmap(qn).block(b * seqlen + i, h * hd, 1, hd);
            for (int j = 0; j <= i; ++j) gq += sc * ds[j] * Kb.row(j);
          }
          if (kn.requires_grad) {
            auto GK = gmap(kn);
            for (int j = 0; j <= i; ++j)
              GK.block(b * seqlen + j, h * hd, 1, hd) += sc * ds[j] * Qb.row(i);
          }
        }
      }
    }
  };
  return Tensor(n);
}

int conv_out_len(int t_in, int kernel, int stride, int pad) {
  return (t_in + 2 * pad - kernel) / stride + 1;
}

Tensor im2col(const Tensor& x, int batch, int t_in, int kernel, int stride, int pad) {
  const int C = x.cols();
  check(x.rows() == batch * t_in, "im2col: row mismatch");
  const int t_out = conv_out_len(t_in, kernel, stride, pad);
  check(t_out >= 1, "im2col: empty output");
  auto n = make_node(batch * t_out, kernel * C, {x.node()});
  const double* xv = x.data();
  std::fill(n->val.begin(), n->val.end(), 0.0);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < t_out; ++t) {
      double* row = n->val.data() + (static_cast<int64_t>(b) * t_out + t) * kernel * C;
      for (int k = 0; k < kernel; ++k) {
        const int src = t * stride - pad + k;
        if (src < 0 || src >= t_in) continue;
        const double* srow = xv + (static_cast<int64_t>(b) * t_in + src) * C;
        std::copy(srow, srow + C, row + static_cast<int64_t>(k) * C);
      }
    }
  }
  n->backward_fn = [batch, t_in, kernel, stride, pad, C, t_out](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    double* gx = x.grad_data();
    const double* g = self.grad.data();
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < t_out; ++t) {
        const double* row = g + (static_cast<int64_t>(b) * t_out + t) * kernel * C;
        for (int k = 0; k < kernel; ++k) {
          const int src = t * stride - pad + k;
          if (src < 0 || src >= t_in) continue;
          double* drow = gx + (static_cast<int64_t>(b) * t_in + src) * C;
          const double* srow = row + static_cast<int64_t>(k) * C;
          for (int c = 0; c < C; ++c) drow[c] += srow[c];
        }
      }
    }
  };
  return Tensor(n);
}

Tensor upsample_rows(const Tensor& x, int batch, int t_in, int factor) {
  const int C = x.cols();
  check(x.rows() == batch * t_in, "upsample_rows: row mismatch");
  auto n = make_node(batch * t_in * factor, C, {x.node()});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < t_in; ++t)
      for (int f = 0; f < factor; ++f)
        map(*n).row((b * t_in + t) * factor + f) = cmap(*x.node()).row(b * t_in + t);
  n->backward_fn = [batch, t_in, factor](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    auto gx = gmap(x);
    auto g = gmap(self);
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < t_in; ++t)
        for (int f = 0; f < factor; ++f) gx.row(b * t_in + t) += g.row((b * t_in + t) * factor + f);
  };
  return Tensor(n);
}

Tensor time_diff(const Tensor& x, int batch, int t_in) {
  const int C = x.cols();
  check(x.rows() == batch * t_in && t_in >= 2, "time_diff: bad shape");
  auto n = make_node(batch * (t_in - 1), C, {x.node()});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t + 1 < t_in; ++t)
      map(*n).row(b * (t_in - 1) + t) =
          cmap(*x.node()).row(b * t_in + t + 1) - cmap(*x.node()).row(b * t_in + t);
  n->backward_fn = [batch, t_in](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    auto gx = gmap(x);
    auto g = gmap(self);
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t + 1 < t_in; ++t) {
        gx.row(b * t_in + t + 1) += g.row(b * (t_in - 1) + t);
        gx.row(b * t_in + t) -= g.row(b * (t_in - 1) + t);
      }
  };
  return Tensor(n);
}

Tensor cross_entropy_sum(const Tensor& logits, const std::vector<int>& targets,
                         const std::vector<uint8_t>& valid) {
  const int N = logits.rows(), V = logits.cols();
  check(static_cast<int>(targets.size()) == N && static_cast<int>(valid.size()) == N,
        "cross_entropy_sum: target size mismatch");
  auto n = make_node(1, 1, {logits.node()});
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * V, 0.0);
  const double* lv = logits.data();
  double total = 0.0;
  for (int r = 0; r < N; ++r) {
    if (!valid[r]) continue;
    check(targets[r] >= 0 && targets[r] < V, "cross_entropy_sum: target out of range");
    const double* row = lv + static_cast<int64_t>(r) * V;
    double mx = row[0];
    for (int c = 1; c < V; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < V; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[r]];
    double* prow = probs->data() + static_cast<int64_t>(r) * V;
    for (int c = 0; c < V; ++c) prow[c] = std::exp(row[c] - lse);
  }
  n->val[0] = total;
  n->backward_fn = [probs, targets, valid, V](Node& self) {
    Node& logits = *self.parents[0];
    if (!logits.requires_grad) return;
    const double g = self.grad[0];
    double* gl = logits.grad_data();
    for (size_t r = 0; r < targets.size(); ++r) {
      if (!valid[r]) continue;
      const double* prow = probs->data() + r * V;
      double* grow = gl + r * V;
      for (int c = 0; c < V; ++c) grow[c] += g * prow[c];
      grow[targets[r]] -= g;
    }
  };
  return Tensor(n);
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  check(p < 1.0, "dropout: p must be < 1");
  auto n = make_node(x.rows(), x.cols(), {x.node()});
  auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(x.size()));
  const double keep = 1.0 - p;
  for (int64_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
    n->val[i] = x.data()[i] * (*mask)[i];
  }
  n->backward_fn = [mask](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    double* gx = x.grad_data();
    for (int64_t i = 0; i < self.size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
  };
  return Tensor(n);
}

Tensor prepend_rows(const Tensor& cond, const Tensor& toks, int batch, int t_len) {
  const int d = cond.cols();
  check(cond.rows() == batch && toks.cols() == d && toks.rows() == batch * t_len,
        "prepend_rows: shape mismatch");
  auto n = make_node(batch * (t_len + 1), d, {cond.node(), toks.node()});
  for (int b = 0; b < batch; ++b) {
    map(*n).row(b * (t_len + 1)) = cmap(*cond.node()).row(b);
    for (int t = 0; t < t_len; ++t)
      map(*n).row(b * (t_len + 1) + 1 + t) = cmap(*toks.node()).row(b * t_len + t);
  }
  n->backward_fn = [batch, t_len](Node& self) {
    Node& cond = *self.parents[0];
    Node& toks = *self.parents[1];
    auto g = gmap(self);
    for (int b = 0; b < batch; ++b) {
      if (cond.requires_grad) gmap(cond).row(b) += g.row(b * (t_len + 1));
      if (toks.requires_grad)
        for (int t = 0; t < t_len; ++t)
          gmap(toks).row(b * t_len + t) += g.row(b * (t_len + 1) + 1 + t);
    }
  };
  return Tensor(n);
}

Tensor add_positions(const Tensor& x, const Tensor& pos, int batch, int t_len) {
  const int d = x.cols();
  check(x.rows() == batch * t_len && pos.cols() == d && pos.rows() >= t_len,
        "add_positions: shape mismatch");
  auto n = make_node(batch * t_len, d, {x.node(), pos.node()});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < t_len; ++t)
      map(*n).row(b * t_len + t) = cmap(*x.node()).row(b * t_len + t) + cmap(*pos.node()).row(t);
  n->backward_fn = [batch, t_len](Node& self) {
    Node& x = *self.parents[0];
    Node& pos = *self.parents[1];
    auto g = gmap(self);
    if (x.requires_grad) gmap(x) += g;
    if (pos.requires_grad)
      for (int b = 0; b < batch; ++b)
        for (int t = 0; t < t_len; ++t) gmap(pos).row(t) += g.row(b * t_len + t);
  };
  return Tensor(n);
}

void backward(const Tensor& root) {
  if (!(root.rows() == 1 && root.cols() == 1))
    throw std::invalid_argument("backward: root must be scalar");
  // iterative post-order over the DAG
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_data()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->requires_grad && !n->grad.empty()) n->backward_fn(*n);
  }
}

void softmax_row(const double* logits, int n, double* out_probs) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out_probs[i] = std::exp(logits[i] - mx);
    z += out_probs[i];
  }
  for (int i = 0; i < n; ++i) out_probs[i] /= z;
}

double mse_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mse_value: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

int64_t param_count(const std::vector<NamedParam>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

bool all_finite(const Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t.data()[i])) return false;
  return true;
}

}  // namespace partmotion::ag
