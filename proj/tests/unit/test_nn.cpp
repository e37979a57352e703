#include <sstream>

#include "doctest.h"
#include "kbc/nn/checkpoint.hpp"
#include "kbc/nn/layers.hpp"
#include "kbc/nn/optimizer.hpp"
#include "support/gradcheck.hpp"

using namespace kbc::nn;
using kbc::testing::gradient_error;
using kbc::testing::random_matrix;

namespace {

constexpr double kTol = 1e-4;
constexpr int kPoints = 5;

// Scalar probe <R, Y> so that dL/dY = R.
double probe(const Matrix& y, const Matrix& r) { return (y.array() * r.array()).sum(); }

}  // namespace

TEST_CASE("affine and activations: values") {
  Matrix x(2, 1);
  x << 3, -4;
  CHECK(affine(x, Matrix::Identity(2, 2), Matrix::Zero(2, 1)) == x);
  Vector z = Vector::Zero(2);
  Vector s = softmax(z);
  CHECK(s(0) == doctest::Approx(0.5));
  CHECK(s(1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(affine(x, Matrix::Identity(3, 3), Matrix::Zero(3, 1)), ShapeError);
  CHECK(relu(x)(1) == 0.0);
  CHECK(sigmoid(Matrix::Zero(1, 1))(0) == 0.5);
  std::mt19937_64 rng(1);
  Matrix q = random_matrix(rng, 3, 4);
  Matrix p = softmax_rows(q);
  for (int r = 0; r < 3; ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("affine, activation and softmax gradients match finite differences") {
  std::mt19937_64 rng(100);
  for (int point = 0; point < kPoints; ++point) {
    Matrix x = random_matrix(rng, 4, 3), w = random_matrix(rng, 5, 4), b = random_matrix(rng, 5, 1);
    Matrix r = random_matrix(rng, 5, 3);
    auto g = affine_backward(x, w, r);
    auto f = [&] { return probe(affine(x, w, b), r); };
    CHECK(gradient_error(x, g.dx, f) < kTol);
    CHECK(gradient_error(w, g.dw, f) < kTol);
    CHECK(gradient_error(b, g.db, f) < kTol);

    Matrix a = random_matrix(rng, 3, 4), ra = random_matrix(rng, 3, 4);
    CHECK(gradient_error(a, relu_backward(a, ra), [&] { return probe(relu(a), ra); }) < kTol);
    CHECK(gradient_error(a, sigmoid_backward(sigmoid(a), ra), [&] { return probe(sigmoid(a), ra); }) < kTol);
    CHECK(gradient_error(a, tanh_backward(kbc::nn::tanh(a), ra), [&] { return probe(kbc::nn::tanh(a), ra); }) < kTol);
    CHECK(gradient_error(a, softmax_rows_backward(softmax_rows(a), ra), [&] { return probe(softmax_rows(a), ra); }) <
          kTol);
  }
}

TEST_CASE("conv1d values") {
  SUBCASE("width 1 identity kernel") {
    std::mt19937_64 rng(2);
    Matrix x = random_matrix(rng, 3, 5);
    CHECK(conv1d(x, Matrix::Identity(3, 3), Matrix::Zero(3, 1), 1).isApprox(x));
  }
  SUBCASE("hand case with zero padding") {
    Matrix x(1, 3);
    x << 1, 2, 3;
    Matrix w(1, 3);
    w << 1, 0, 0;
    Matrix h = conv1d(x, w, Matrix::Zero(1, 1), 3);
    CHECK(h(0, 0) == 0.0);
    CHECK(h(0, 1) == 1.0);
    CHECK(h(0, 2) == 2.0);
  }
  SUBCASE("kernel shape is checked") {
    CHECK_THROWS_AS(conv1d(Matrix::Zero(2, 3), Matrix::Zero(1, 5), Matrix::Zero(1, 1), 3), ShapeError);
  }
}

TEST_CASE("conv1d gradients match finite differences") {
  std::mt19937_64 rng(101);
  for (int point = 0; point < kPoints; ++point) {
    for (int width : {1, 2, 3, 5}) {
      Matrix x = random_matrix(rng, 3, 4), w = random_matrix(rng, 2, width * 3), b = random_matrix(rng, 2, 1);
      Matrix r = random_matrix(rng, 2, 4);
      auto g = conv1d_backward(x, w, width, r);
      auto f = [&] { return probe(conv1d(x, w, b, width), r); };
      CHECK(gradient_error(x, g.dx, f) < kTol);
      CHECK(gradient_error(w, g.dw, f) < kTol);
      CHECK(gradient_error(b, g.db, f) < kTol);
    }
  }
}

TEST_CASE("range max-pooling") {
  Matrix h(1, 3);
  h << 1, 5, 2;
  CHECK(max_pool_range(h, 0, 2).value(0) == 5.0);
  CHECK(max_pool_range(h, 2, 2).value(0) == 2.0);
  auto empty = max_pool_range(h, 2, 1);
  CHECK(empty.value(0) == 0.0);
  CHECK(empty.argmax[0] == -1);

  std::mt19937_64 rng(102);
  for (int point = 0; point < kPoints; ++point) {
    Matrix hm = random_matrix(rng, 4, 6);
    Vector dv = random_matrix(rng, 4, 1);
    auto pool = max_pool_range(hm, 1, 4);
    Matrix dh = Matrix::Zero(4, 6);
    max_pool_range_backward(pool, dv, dh);
    for (int rr = 0; rr < 4; ++rr) {
      for (int c = 0; c < 6; ++c) {
        if (c != pool.argmax[rr]) CHECK(dh(rr, c) == 0.0);
      }
    }
    CHECK(gradient_error(hm, dh, [&] { return max_pool_range(hm, 1, 4).value.dot(dv); }) < kTol);
  }
}

TEST_CASE("LSTM properties and gradients") {
  std::mt19937_64 rng(103);
  const int d = 3, hd = 2;
  Matrix fwx = random_matrix(rng, 4 * hd, d), fwh = random_matrix(rng, 4 * hd, hd), fb = random_matrix(rng, 4 * hd, 1);
  Matrix bwx = random_matrix(rng, 4 * hd, d), bwh = random_matrix(rng, 4 * hd, hd), bb = random_matrix(rng, 4 * hd, 1);

  SUBCASE("single step: both directions read the same input") {
    Matrix x = random_matrix(rng, d, 1);
    BiLstmWeights same{fwx, fwh, fb, fwx, fwh, fb};
    Matrix out = bilstm_forward(x, same, nullptr);
    CHECK(out.rows() == 2 * hd);
    CHECK(out.topRows(hd).isApprox(out.bottomRows(hd)));
  }

  SUBCASE("reversing the input swaps the streams up to reversal") {
    Matrix x = random_matrix(rng, d, 5);
    Matrix xr = x.rowwise().reverse();
    BiLstmWeights w{fwx, fwh, fb, bwx, bwh, bb};
    BiLstmWeights swapped{bwx, bwh, bb, fwx, fwh, fb};
    Matrix out = bilstm_forward(x, w, nullptr);
    Matrix out_r = bilstm_forward(xr, swapped, nullptr);
    CHECK(out_r.topRows(hd).isApprox(out.bottomRows(hd).rowwise().reverse()));
    CHECK(out_r.bottomRows(hd).isApprox(out.topRows(hd).rowwise().reverse()));
  }

  SUBCASE("BiLSTM gradients through 4 timesteps") {
    for (int point = 0; point < kPoints; ++point) {
      Matrix x = random_matrix(rng, d, 4);
      Matrix r = random_matrix(rng, 2 * hd, 4);
      Matrix w1 = random_matrix(rng, 4 * hd, d), w2 = random_matrix(rng, 4 * hd, hd), w3 = random_matrix(rng, 4 * hd, 1);
      Matrix w4 = random_matrix(rng, 4 * hd, d), w5 = random_matrix(rng, 4 * hd, hd), w6 = random_matrix(rng, 4 * hd, 1);
      BiLstmWeights w{w1, w2, w3, w4, w5, w6};
      BiLstmCache cache;
      bilstm_forward(x, w, &cache);
      auto g = bilstm_backward(w, cache, r);
      auto f = [&] { return probe(bilstm_forward(x, w, nullptr), r); };
      CHECK(gradient_error(x, g.dx, f) < kTol);
      CHECK(gradient_error(w1, g.fwd.dwx, f) < kTol);
      CHECK(gradient_error(w2, g.fwd.dwh, f) < kTol);
      CHECK(gradient_error(w3, g.fwd.db, f) < kTol);
      CHECK(gradient_error(w4, g.bwd.dwx, f) < kTol);
      CHECK(gradient_error(w5, g.bwd.dwh, f) < kTol);
      CHECK(gradient_error(w6, g.bwd.db, f) < kTol);
    }
  }
}

TEST_CASE("GCN layer") {
  SUBCASE("identity propagation") {
    std::mt19937_64 rng(5);
    Matrix h = random_matrix(rng, 3, 4).cwiseAbs();
    CHECK(gcn_layer(h, Matrix::Identity(4, 4), Matrix::Identity(3, 3), Matrix::Zero(3, 1), nullptr).isApprox(h));
  }
  SUBCASE("two-node averaging") {
    Matrix a = Matrix::Constant(2, 2, 0.5);
    Matrix h(1, 2);
    h << 2, 4;
    Matrix out = gcn_layer(h, a, Matrix::Identity(1, 1), Matrix::Zero(1, 1), nullptr);
    CHECK(out(0, 0) == doctest::Approx(3.0));
    CHECK(out(0, 1) == doctest::Approx(3.0));
  }
  SUBCASE("gradients") {
    std::mt19937_64 rng(104);
    for (int point = 0; point < kPoints; ++point) {
      Matrix h = random_matrix(rng, 3, 4), w = random_matrix(rng, 5, 3), b = random_matrix(rng, 5, 1);
      Matrix a = random_matrix(rng, 4, 4).cwiseAbs();
      a = (a + a.transpose()).eval();
      Matrix r = random_matrix(rng, 5, 4);
      GcnCache cache;
      gcn_layer(h, a, w, b, &cache);
      auto g = gcn_backward(a, w, cache, r);
      auto f = [&] { return probe(gcn_layer(h, a, w, b, nullptr), r); };
      CHECK(gradient_error(h, g.dh_prev, f) < kTol);
      CHECK(gradient_error(w, g.dw, f) < kTol);
      CHECK(gradient_error(b, g.db, f) < kTol);
    }
  }
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient is a fixed point") {
    ParameterStore ps;
    auto& p = ps.add("x", 2, 2);
    p.value.setConstant(1.5);
    Adam adam;
    adam.step(ps);
    CHECK(p.value == Matrix::Constant(2, 2, 1.5));
  }
  SUBCASE("quadratic bowl converges") {
    ParameterStore ps;
    auto& p = ps.add("x", 1, 1);
    p.value(0, 0) = 1.0;
    Adam adam(AdamConfig{0.05});
    for (int i = 0; i < 500; ++i) {
      p.grad(0, 0) = 2 * p.value(0, 0);
      adam.step(ps);
    }
    CHECK(p.value(0, 0) * p.value(0, 0) < 1e-3);
  }
  SUBCASE("non-finite gradient fails fast") {
    ParameterStore ps;
    auto& p = ps.add("x", 1, 1);
    p.grad(0, 0) = std::nan("");
    Adam adam;
    CHECK_THROWS_AS(adam.step(ps), kbc::Error);
    CHECK(p.value(0, 0) == 0.0);
  }
  SUBCASE("seeded runs are bit-identical") {
    auto run = [] {
      kbc::Rng rng(9);
      ParameterStore ps;
      auto& p = ps.add_uniform("w", 3, 3, rng);
      Adam adam(AdamConfig{0.01});
      for (int i = 0; i < 50; ++i) {
        p.grad = p.value * 2 + Matrix::Constant(3, 3, 0.1);
        adam.step(ps);
      }
      return Matrix(p.value);
    };
    CHECK(run() == run());
  }
}

TEST_CASE("checkpoint round-trips exactly") {
  kbc::Rng rng(3);
  ParameterStore ps;
  ps.add_uniform("conv.w", 4, 6, rng);
  ps.add_uniform("conv.b", 4, 1, rng);
  Checkpoint ck;
  ck.meta["kind"] = "test model";
  ck.vocabs["words"] = {"a", "b", "<unk>"};
  ck.add_parameters(ps);
  std::stringstream ss;
  ck.save(ss);
  auto loaded = Checkpoint::load(ss);
  CHECK(loaded.meta.at("kind") == "test model");
  CHECK(loaded.vocabs.at("words").size() == 3);
  ParameterStore other;
  other.add("conv.w", 4, 6);
  other.add("conv.b", 4, 1);
  loaded.restore_parameters(other);
  CHECK(other.get("conv.w").value == ps.get("conv.w").value);
  CHECK(other.get("conv.b").value == ps.get("conv.b").value);
  ParameterStore wrong;
  wrong.add("conv.w", 4, 5);
  wrong.add("conv.b", 4, 1);
  CHECK_THROWS_AS(loaded.restore_parameters(wrong), ShapeError);
}
