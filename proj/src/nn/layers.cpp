#include "kbc/nn/layers.hpp"

#include <cmath>
#include <string>

namespace kbc::nn {

namespace {

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  require_shape(w.cols() == x.rows(), "affine W " + dims(w) + " vs x " + dims(x));
  require_shape(b.rows() == w.rows() && b.cols() == 1, "affine bias " + dims(b));
  return (w * x).colwise() + b.col(0);
}

AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dy) {
  require_shape(dy.rows() == w.rows() && dy.cols() == x.cols(), "affine dy " + dims(dy));
  return {w.transpose() * dy, dy * x.transpose(), dy.rowwise().sum()};
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& x, const Matrix& dy) {
  return (x.array() > 0.0).select(dy, Matrix::Zero(dy.rows(), dy.cols()));
}

Matrix sigmoid(const Matrix& x) { return x.unaryExpr([](double v) { return sigmoid_scalar(v); }); }

Matrix sigmoid_backward(const Matrix& y, const Matrix& dy) {
  return dy.array() * y.array() * (1.0 - y.array());
}

Matrix tanh(const Matrix& x) { return x.array().tanh(); }

Matrix tanh_backward(const Matrix& y, const Matrix& dy) { return dy.array() * (1.0 - y.array().square()); }

Vector softmax(const Vector& x) {
  Vector e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix& q) {
  Matrix p(q.rows(), q.cols());
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    auto row = q.row(r).array();
    Eigen::ArrayXd e = (row - row.maxCoeff()).exp().transpose();
    p.row(r) = (e / e.sum()).transpose();
  }
  return p;
}

Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp) {
  // dq_rc = p_rc (dp_rc - sum_k p_rk dp_rk)
  Vector inner = (p.array() * dp.array()).rowwise().sum();
  return p.array() * (dp.colwise() - inner).array();
}

Matrix conv1d(const Matrix& x, const Matrix& w, const Matrix& b, int width) {
  const int d_e = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  const int pad = width / 2;
  require_shape(n >= 1, "conv1d needs at least one column");
  require_shape(width >= 1 && width <= n + 2 * pad, "conv1d width " + std::to_string(width));
  require_shape(w.cols() == width * d_e, "conv1d kernel " + dims(w) + " for d_e=" + std::to_string(d_e));
  require_shape(b.rows() == w.rows() && b.cols() == 1, "conv1d bias " + dims(b));
  Matrix h(w.rows(), n);
  for (int t = 0; t < n; ++t) h.col(t) = b.col(0);
  for (int j = 0; j < width; ++j) {
    auto wj = w.middleCols(j * d_e, d_e);
    // Output column t reads input column t + j - pad.
    const int t_lo = std::max(0, pad - j);
    const int t_hi = std::min(n - 1, n - 1 + pad - j);
    if (t_lo > t_hi) continue;
    h.middleCols(t_lo, t_hi - t_lo + 1).noalias() += wj * x.middleCols(t_lo + j - pad, t_hi - t_lo + 1);
  }
  return h;
}

Conv1dGrads conv1d_backward(const Matrix& x, const Matrix& w, int width, const Matrix& dh) {
  const int d_e = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  const int pad = width / 2;
  require_shape(dh.rows() == w.rows() && dh.cols() == n, "conv1d dh " + dims(dh));
  Conv1dGrads g{Matrix::Zero(d_e, n), Matrix::Zero(w.rows(), w.cols()), dh.rowwise().sum()};
  for (int j = 0; j < width; ++j) {
    const int t_lo = std::max(0, pad - j);
    const int t_hi = std::min(n - 1, n - 1 + pad - j);
    if (t_lo > t_hi) continue;
    const int len = t_hi - t_lo + 1;
    auto xs = x.middleCols(t_lo + j - pad, len);
    auto dhs = dh.middleCols(t_lo, len);
    g.dw.middleCols(j * d_e, d_e).noalias() += dhs * xs.transpose();
    g.dx.middleCols(t_lo + j - pad, len).noalias() += w.middleCols(j * d_e, d_e).transpose() * dhs;
  }
  return g;
}

PoolResult max_pool_range(const Matrix& h, int lo, int hi) {
  PoolResult out{Vector::Zero(h.rows()), std::vector<int>(h.rows(), -1)};
  if (lo > hi) return out;
  require_shape(lo >= 0 && hi < h.cols(), "pool range [" + std::to_string(lo) + "," + std::to_string(hi) +
                                              "] over " + std::to_string(h.cols()) + " columns");
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    int best = lo;
    for (int c = lo + 1; c <= hi; ++c) {
      if (h(r, c) > h(r, best)) best = c;
    }
    out.value(r) = h(r, best);
    out.argmax[r] = best;
  }
  return out;
}

void max_pool_range_backward(const PoolResult& pool, const Vector& dv, Matrix& dh) {
  for (std::size_t r = 0; r < pool.argmax.size(); ++r) {
    if (pool.argmax[r] >= 0) dh(static_cast<Eigen::Index>(r), pool.argmax[r]) += dv(static_cast<Eigen::Index>(r));
  }
}

Matrix lstm_forward(const Matrix& x, const Matrix& wx, const Matrix& wh, const Matrix& b, bool reverse,
                    LstmCache* cache) {
  const int hd = static_cast<int>(wh.cols());
  const int n = static_cast<int>(x.cols());
  require_shape(n >= 1, "lstm needs at least one step");
  require_shape(wx.rows() == 4 * hd && wx.cols() == x.rows(), "lstm wx " + dims(wx) + " vs x " + dims(x));
  require_shape(wh.rows() == 4 * hd, "lstm wh " + dims(wh));
  require_shape(b.rows() == 4 * hd && b.cols() == 1, "lstm bias " + dims(b));
  LstmCache local;
  LstmCache& c = cache ? *cache : local;
  c.x = x;
  c.reverse = reverse;
  c.i.resize(hd, n);
  c.f.resize(hd, n);
  c.g.resize(hd, n);
  c.o.resize(hd, n);
  c.c.resize(hd, n);
  c.h.resize(hd, n);
  Matrix pre = (wx * x).colwise() + b.col(0);
  Vector h_prev = Vector::Zero(hd), c_prev = Vector::Zero(hd);
  for (int k = 0; k < n; ++k) {
    const int t = reverse ? n - 1 - k : k;
    Vector a = pre.col(t) + wh * h_prev;
    c.i.col(t) = sigmoid(a.segment(0, hd));
    c.f.col(t) = sigmoid(a.segment(hd, hd));
    c.g.col(t) = a.segment(2 * hd, hd).array().tanh();
    c.o.col(t) = sigmoid(a.segment(3 * hd, hd));
    c.c.col(t) = c.f.col(t).cwiseProduct(c_prev) + c.i.col(t).cwiseProduct(c.g.col(t));
    c.h.col(t) = c.o.col(t).cwiseProduct(c.c.col(t).array().tanh().matrix());
    h_prev = c.h.col(t);
    c_prev = c.c.col(t);
  }
  return c.h;
}

LstmGrads lstm_backward(const Matrix& wx, const Matrix& wh, const LstmCache& c, const Matrix& dh_out) {
  const int hd = static_cast<int>(wh.cols());
  const int n = static_cast<int>(c.x.cols());
  require_shape(dh_out.rows() == hd && dh_out.cols() == n, "lstm dh " + dims(dh_out));
  LstmGrads g{Matrix::Zero(c.x.rows(), n), Matrix::Zero(wx.rows(), wx.cols()), Matrix::Zero(wh.rows(), wh.cols()),
              Matrix::Zero(4 * hd, 1)};
  Vector dh_rec = Vector::Zero(hd), dc_rec = Vector::Zero(hd);
  Matrix da_all(4 * hd, n);
  for (int k = n - 1; k >= 0; --k) {
    const int t = c.reverse ? n - 1 - k : k;
    const int prev = c.reverse ? t + 1 : t - 1;
    const bool has_prev = k > 0;
    Vector dh = dh_out.col(t) + dh_rec;
    Eigen::ArrayXd tc = c.c.col(t).array().tanh();
    Eigen::ArrayXd i = c.i.col(t).array(), f = c.f.col(t).array(), gg = c.g.col(t).array(), o = c.o.col(t).array();
    Eigen::ArrayXd d_o = dh.array() * tc;
    Eigen::ArrayXd dc = dh.array() * o * (1.0 - tc.square()) + dc_rec.array();
    Eigen::ArrayXd c_prev = has_prev ? Eigen::ArrayXd(c.c.col(prev).array()) : Eigen::ArrayXd::Zero(hd);
    Vector da(4 * hd);
    da.segment(0, hd) = (dc * gg * i * (1.0 - i)).matrix();
    da.segment(hd, hd) = (dc * c_prev * f * (1.0 - f)).matrix();
    da.segment(2 * hd, hd) = (dc * i * (1.0 - gg.square())).matrix();
    da.segment(3 * hd, hd) = (d_o * o * (1.0 - o)).matrix();
    dc_rec = (dc * f).matrix();
    if (has_prev) g.dwh.noalias() += da * c.h.col(prev).transpose();
    dh_rec = wh.transpose() * da;
    da_all.col(t) = da;
  }
  g.dwx.noalias() = da_all * c.x.transpose();
  g.db = da_all.rowwise().sum();
  g.dx.noalias() = wx.transpose() * da_all;
  return g;
}

Matrix bilstm_forward(const Matrix& x, const BiLstmWeights& w, BiLstmCache* cache) {
  BiLstmCache local;
  BiLstmCache& c = cache ? *cache : local;
  Matrix hf = lstm_forward(x, w.fwd_wx, w.fwd_wh, w.fwd_b, false, &c.fwd);
  Matrix hb = lstm_forward(x, w.bwd_wx, w.bwd_wh, w.bwd_b, true, &c.bwd);
  Matrix out(hf.rows() + hb.rows(), x.cols());
  out.topRows(hf.rows()) = hf;
  out.bottomRows(hb.rows()) = hb;
  return out;
}

BiLstmGrads bilstm_backward(const BiLstmWeights& w, const BiLstmCache& cache, const Matrix& dh_out) {
  const auto hf = w.fwd_wh.cols();
  const auto hb = w.bwd_wh.cols();
  require_shape(dh_out.rows() == hf + hb, "bilstm dh " + dims(dh_out));
  BiLstmGrads g;
  g.fwd = lstm_backward(w.fwd_wx, w.fwd_wh, cache.fwd, dh_out.topRows(hf));
  g.bwd = lstm_backward(w.bwd_wx, w.bwd_wh, cache.bwd, dh_out.bottomRows(hb));
  g.dx = g.fwd.dx + g.bwd.dx;
  return g;
}

Matrix gcn_layer(const Matrix& h_prev, const Matrix& a, const Matrix& w, const Matrix& b, GcnCache* cache) {
  require_shape(a.rows() == a.cols() && a.rows() == h_prev.cols(),
                "gcn adjacency " + dims(a) + " vs H " + dims(h_prev));
  require_shape(w.cols() == h_prev.rows(), "gcn W " + dims(w) + " vs H " + dims(h_prev));
  require_shape(b.rows() == w.rows() && b.cols() == 1, "gcn bias " + dims(b));
  Matrix z = (w * h_prev * a.transpose()).colwise() + b.col(0);
  if (cache) {
    cache->h_prev = h_prev;
    cache->z = z;
  }
  return relu(z);
}

GcnGrads gcn_backward(const Matrix& a, const Matrix& w, const GcnCache& cache, const Matrix& dh) {
  require_shape(dh.rows() == cache.z.rows() && dh.cols() == cache.z.cols(), "gcn dh " + dims(dh));
  Matrix dz = relu_backward(cache.z, dh);
  Matrix agg = cache.h_prev * a.transpose();
  return {w.transpose() * dz * a, dz * agg.transpose(), dz.rowwise().sum()};
}

}  // namespace kbc::nn
