#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "partmotion/rng.hpp"

namespace partmotion::ag {

// Reverse-mode autodiff over dense row-major double matrices. Every tensor is
// 2-D (rows x cols); scalars are 1x1 and batched sequences are flattened to
// (batch*time) x channels with the batch/time split passed to the ops that
// need it. Graphs are plain shared_ptr DAGs with no global tape, so separate
// training sessions can run on separate threads.

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> val;
  std::vector<double> grad;  // allocated lazily by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents' grads

  int64_t size() const { return static_cast<int64_t>(rows) * cols; }
  double* grad_data();  // zero-allocates on first use
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(int rows, int cols);
  static Tensor full(int rows, int cols, double v);
  static Tensor from(int rows, int cols, std::vector<double> vals);
  static Tensor scalar(double v) { return full(1, 1, v); }
  static Tensor randn(int rows, int cols, double stddev, Rng& rng);

  bool defined() const { return n_ != nullptr; }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  int64_t size() const { return n_->size(); }
  double* data() { return n_->val.data(); }
  const double* data() const { return n_->val.data(); }
  double& at(int r, int c) { return n_->val[static_cast<int64_t>(r) * n_->cols + c]; }
  double at(int r, int c) const { return n_->val[static_cast<int64_t>(r) * n_->cols + c]; }
  double value() const { return n_->val[0]; }  // scalar convenience
  const std::vector<double>& values() const { return n_->val; }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    n_->requires_grad = b;
    return *this;
  }
  double* grad() { return n_->grad_data(); }
  const std::vector<double>& grad_vec() const { return n_->grad; }

  std::shared_ptr<Node> node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

// A named learnable tensor; the unit optimizers, checkpoints, and the
// gradient checker all operate on.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

// ---- graph ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);          // (N,C) + (1,C)
Tensor matmul(const Tensor& a, const Tensor& b);               // (N,K)x(K,M)
Tensor gelu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor detach(const Tensor& x);

// Forward value equals q bit-for-bit; the output gradient passes through to e
// unchanged and q receives none (the surrogate e + sg(q - e)).
Tensor straight_through(const Tensor& e, const Tensor& q);

// Causal multi-head self attention. q,k,v are (B*T, H*Dh); row t of sample b
// attends to rows <= t of the same sample only — later rows never enter the
// arithmetic, which keeps prefixes bit-exact under suffix edits.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int seqlen,
                        int heads);

// Patch extraction for temporal conv: x is (B*T, C), output row (b, t_out)
// holds the K taps [k*C + c] with zero padding; conv = matmul(im2col, W).
Tensor im2col(const Tensor& x, int batch, int t_in, int kernel, int stride, int pad);
int conv_out_len(int t_in, int kernel, int stride, int pad);

Tensor upsample_rows(const Tensor& x, int batch, int t_in, int factor);
Tensor time_diff(const Tensor& x, int batch, int t_in);  // frame deltas per sample

// Sum over rows with valid[i] != 0 of (logsumexp(row) - row[target[i]]).
Tensor cross_entropy_sum(const Tensor& logits, const std::vector<int>& targets,
                         const std::vector<uint8_t>& valid);

Tensor dropout(const Tensor& x, double p, Rng& rng);

// Interleaves a per-sample condition row in front of each sample's token rows:
// out row (b,0) = cond row b, out row (b,1+t) = toks row (b*t_len + t).
Tensor prepend_rows(const Tensor& cond, const Tensor& toks, int batch, int t_len);

// out row (b,t) = x row (b,t) + pos row t.
Tensor add_positions(const Tensor& x, const Tensor& pos, int batch, int t_len);

void backward(const Tensor& root);  // root must be scalar

// ---- value-only helpers (no graph) ----
void softmax_row(const double* logits, int n, double* out_probs);
double mse_value(const std::vector<double>& a, const std::vector<double>& b);
int64_t param_count(const std::vector<NamedParam>& params);
bool all_finite(const Tensor& t);

}  // namespace partmotion::ag
