#pragma once
// Stateless layer kit. Every forward has a matching backward that takes the
// upstream gradient and returns gradients for inputs and weights; parameter
// gradients are returned, never accumulated, so callers decide where they go.

#include <vector>

#include "kbc/nn/tensor.hpp"

namespace kbc::nn {

// ---- affine: Y = W X + b 1^T ------------------------------------------------

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b);

struct AffineGrads {
  Matrix dx, dw, db;
};
AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dy);

// ---- elementwise activations ------------------------------------------------

Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& dy);
Matrix sigmoid(const Matrix& x);
Matrix sigmoid_backward(const Matrix& y, const Matrix& dy);  // y = sigmoid(x)
Matrix tanh(const Matrix& x);
Matrix tanh_backward(const Matrix& y, const Matrix& dy);     // y = tanh(x)

// ---- softmax ----------------------------------------------------------------

Vector softmax(const Vector& x);
// Normalizes each row across its columns.
Matrix softmax_rows(const Matrix& q);
Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp);

// ---- 1-D convolution --------------------------------------------------------
//
// X is d_e x n, output H is d_h x n ("same" length, zero padding of
// floor(w/2) on each side). The d_h x w x d_e kernel is stored flattened as a
// d_h x (w * d_e) matrix: W(f, j * d_e + e) = W[f, j, e].

Matrix conv1d(const Matrix& x, const Matrix& w, const Matrix& b, int width);

struct Conv1dGrads {
  Matrix dx, dw, db;
};
Conv1dGrads conv1d_backward(const Matrix& x, const Matrix& w, int width, const Matrix& dh);

// ---- range max-pooling ------------------------------------------------------

struct PoolResult {
  Vector value;
  std::vector<int> argmax;  // column per row; -1 for an empty range
};

// Per-row max over columns [lo, hi]. An empty range (lo > hi) yields zeros.
PoolResult max_pool_range(const Matrix& h, int lo, int hi);
// Adds the routed gradient into dh.
void max_pool_range_backward(const PoolResult& pool, const Vector& dv, Matrix& dh);

// ---- LSTM -------------------------------------------------------------------
//
// Gate rows are stacked [input; forget; cell; output] in wx (4h x d),
// wh (4h x h) and b (4h x 1).

struct LstmCache {
  Matrix x;
  Matrix i, f, g, o;  // post-activation gates, h x n
  Matrix c, h;        // cell and hidden states, h x n
  bool reverse = false;
};

Matrix lstm_forward(const Matrix& x, const Matrix& wx, const Matrix& wh, const Matrix& b, bool reverse,
                    LstmCache* cache);

struct LstmGrads {
  Matrix dx, dwx, dwh, db;
};
LstmGrads lstm_backward(const Matrix& wx, const Matrix& wh, const LstmCache& cache, const Matrix& dh_out);

struct BiLstmWeights {
  const Matrix& fwd_wx;
  const Matrix& fwd_wh;
  const Matrix& fwd_b;
  const Matrix& bwd_wx;
  const Matrix& bwd_wh;
  const Matrix& bwd_b;
};

struct BiLstmCache {
  LstmCache fwd, bwd;
};

// Output is 2h x n: forward states on top, backward states below.
Matrix bilstm_forward(const Matrix& x, const BiLstmWeights& w, BiLstmCache* cache);

struct BiLstmGrads {
  Matrix dx;
  LstmGrads fwd, bwd;
};
BiLstmGrads bilstm_backward(const BiLstmWeights& w, const BiLstmCache& cache, const Matrix& dh_out);

// ---- graph convolution ------------------------------------------------------
//
// h_i = relu(sum_j A_ij W h_j + b), i.e. H = relu(W H_prev A^T + b 1^T).

struct GcnCache {
  Matrix h_prev;
  Matrix z;  // pre-activation
};

Matrix gcn_layer(const Matrix& h_prev, const Matrix& a, const Matrix& w, const Matrix& b, GcnCache* cache);

struct GcnGrads {
  Matrix dh_prev, dw, db;
};
GcnGrads gcn_backward(const Matrix& a, const Matrix& w, const GcnCache& cache, const Matrix& dh);

bool all_finite(const Matrix& m);

}  // namespace kbc::nn
