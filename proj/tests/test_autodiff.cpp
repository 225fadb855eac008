#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ckann/autodiff.hpp"

using namespace ckann;
using namespace ckann::ad;

namespace {
Tensor make_rand(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}
}  // namespace

TEST_CASE("elementwise fixed points") {
  Tensor x = Tensor::from({3}, {0.0, -2.0, 2.0});
  CHECK(tanh_t(x).at(0) == 0.0);
  CHECK(relu_t(x).at(1) == 0.0);
  CHECK(relu_t(x).at(2) == 2.0);
  CHECK(sigmoid_t(x).at(0) == Catch::Approx(0.5));
}

TEST_CASE("dropout is identity in eval mode") {
  Rng rng(1);
  Tensor x = make_rand({4, 5}, rng);
  Tensor y = dropout(x, 0.5, false, rng);
  CHECK(y.values() == x.values());
}

TEST_CASE("dropout scales kept values while training") {
  Rng rng(2);
  Tensor x = Tensor::from({1000}, std::vector<double>(1000, 1.0));
  Tensor y = dropout(x, 0.5, true, rng);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.at(i) != 0.0) {
      CHECK(y.at(i) == Catch::Approx(2.0));
      ++kept;
    }
  }
  CHECK(kept > 400);
  CHECK(kept < 600);
}

TEST_CASE("concat shape algebra") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 3});
  auto c = concat(a, b, 0);
  CHECK(c.shape() == Shape{6, 3});
  Tensor d = Tensor::zeros({2, 5});
  CHECK(concat(a, d, 1).shape() == Shape{2, 8});
  CHECK_THROWS_AS(concat(a, d, 0), DimensionMismatch);
}

TEST_CASE("softmax basics") {
  Tensor x = Tensor::from({3}, {0.0, 0.0, 0.0});
  auto y = softmax_vec(x);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(y.at(i) == Catch::Approx(1.0 / 3.0).margin(1e-15));

  Rng rng(3);
  Tensor a = make_rand({5}, rng, -2, 2);
  std::vector<double> shifted = a.values();
  for (auto& v : shifted) v += 17.25;
  auto ya = softmax_vec(a);
  auto yb = softmax_vec(Tensor::from({5}, shifted));
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(std::abs(ya.at(i) - yb.at(i)) <= 1e-12);

  auto big = softmax_vec(Tensor::from({2}, {1000.0, 0.0}));
  CHECK(big.at(0) == Catch::Approx(1.0));
  CHECK(big.at(1) == Catch::Approx(0.0).margin(1e-300));
  CHECK(std::isfinite(big.at(0)));
}

TEST_CASE("softmax rows and columns normalize") {
  Rng rng(4);
  Tensor m = make_rand({4, 6}, rng, -3, 3);
  auto r = softmax(m, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += r.at(i, j);
    CHECK(s == Catch::Approx(1.0).epsilon(1e-9));
  }
  auto c = softmax(m, 0);
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += c.at(i, j);
    CHECK(s == Catch::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("conv1d with width-1 identity kernel is tanh") {
  Rng rng(5);
  std::size_t d = 4;
  Tensor x = make_rand({6, d}, rng);
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  Tensor kernel = Tensor::from({d, d}, eye);
  Tensor bias = Tensor::zeros({d});
  auto y = conv1d(x, kernel, bias, 1);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y.at(i) == Catch::Approx(std::tanh(x.at(i))).margin(1e-15));
}

TEST_CASE("conv1d zero input and bias gives zeros, same length") {
  Tensor x = Tensor::zeros({7, 3});
  Rng rng(6);
  Tensor kernel = make_rand({2 * 3, 5}, rng);
  Tensor bias = Tensor::zeros({5});
  auto y = conv1d(x, kernel, bias, 2);
  CHECK(y.shape() == Shape{7, 5});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.at(i) == 0.0);
  // width wider than the sequence still keeps the length
  Tensor one = make_rand({1, 3}, rng);
  Tensor k3 = make_rand({3 * 3, 2}, rng);
  CHECK(conv1d(one, k3, Tensor::zeros({2}), 3).shape() == Shape{1, 2});
}

TEST_CASE("pooling arithmetic") {
  Tensor m = Tensor::from({2, 2}, {1, 3, 5, 7});
  auto mean_rows = mean_reduce(m, 0);
  CHECK(mean_rows.at(0) == Catch::Approx(3.0));
  CHECK(mean_rows.at(1) == Catch::Approx(5.0));

  Tensor single = Tensor::from({1, 3}, {4, -1, 2});
  auto mx = max_reduce(single, 0);
  CHECK(mx.values() == std::vector<double>{4, -1, 2});

  Tensor rep = Tensor::from({3, 2}, {1.5, -2, 1.5, -2, 1.5, -2});
  auto mr = mean_reduce(rep, 0);
  CHECK(mr.at(0) == Catch::Approx(1.5));
  CHECK(mr.at(1) == Catch::Approx(-2.0));
}

namespace {
LstmWeights random_lstm(std::size_t d_in, std::size_t hidden, Rng& rng) {
  LstmWeights w;
  w.w_x = make_rand({d_in, 4 * hidden}, rng, -0.5, 0.5);
  w.w_h = make_rand({hidden, 4 * hidden}, rng, -0.5, 0.5);
  w.b = make_rand({4 * hidden}, rng, -0.5, 0.5);
  return w;
}
}  // namespace

TEST_CASE("bilstm output shape") {
  Rng rng(7);
  std::size_t hidden = 3;
  auto fwd = random_lstm(4, hidden, rng);
  auto bwd = random_lstm(4, hidden, rng);
  Tensor x = make_rand({5, 4}, rng);
  auto h = bilstm(x, fwd, bwd, hidden);
  CHECK(h.shape() == Shape{5, 2 * hidden});
}

TEST_CASE("bilstm direction symmetry with shared weights") {
  Rng rng(8);
  std::size_t hidden = 3, L = 5, d = 4;
  auto w = random_lstm(d, hidden, rng);
  Tensor x = make_rand({L, d}, rng);
  std::vector<double> rev(x.size());
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < d; ++j)
      rev[(L - 1 - i) * d + j] = x.at(i, j);
  auto h = bilstm(x, w, w, hidden);
  auto hr = bilstm(Tensor::from({L, d}, rev), w, w, hidden);
  // forward half of the reversed run equals the backward half of the
  // original run at the mirrored position, and vice versa
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t j = 0; j < hidden; ++j) {
      CHECK(hr.at(t, j) == Catch::Approx(h.at(L - 1 - t, hidden + j)).margin(1e-12));
      CHECK(hr.at(t, hidden + j) == Catch::Approx(h.at(L - 1 - t, j)).margin(1e-12));
    }
}

TEST_CASE("bilstm zero weights give zero output") {
  LstmWeights w;
  w.w_x = Tensor::zeros({4, 12});
  w.w_h = Tensor::zeros({3, 12});
  w.b = Tensor::zeros({12});
  Rng rng(9);
  auto h = bilstm(make_rand({5, 4}, rng), w, w, 3);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h.at(i) == 0.0);
}

TEST_CASE("backward of plain sum gives ones") {
  Rng rng(10);
  Tensor p = make_rand({3, 2}, rng);
  p.set_requires_grad(true);
  backward(sum_all(p));
  for (double g : p.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward through zero scaling annihilates gradients") {
  Rng rng(11);
  Tensor p = make_rand({4}, rng);
  p.set_requires_grad(true);
  backward(scale(sum_all(tanh_t(p)), 0.0));
  for (double g : p.grad()) CHECK(g == 0.0);
}

TEST_CASE("detached tensors contribute zero gradient") {
  Rng rng(12);
  Tensor p = make_rand({4}, rng);
  p.set_requires_grad(true);
  Tensor d = detach(tanh_t(p));
  backward(sum_all(d));
  CHECK(p.grad().empty());  // never touched by backward
}

TEST_CASE("parameters off the loss path keep zero gradients") {
  Rng rng(13);
  Tensor used = make_rand({3}, rng);
  Tensor unused = make_rand({3}, rng);
  used.set_requires_grad(true);
  unused.set_requires_grad(true);
  used.zero_grad();
  unused.zero_grad();
  backward(sum_all(mul(used, used)));
  bool any = false;
  for (double g : unused.grad()) any = any || g != 0.0;
  CHECK_FALSE(any);
}

TEST_CASE("finite differences agree for smooth composites") {
  Rng rng(14);
  Tensor w = make_rand({4, 6}, rng);
  Tensor x = make_rand({4}, rng);
  auto f = [](const std::vector<Tensor>& in) {
    return sum_all(tanh_t(vecmat(in[1], in[0])));
  };
  CHECK(grad_check(f, {w, x}) <= 1e-6);
}

TEST_CASE("finite differences are near-exact for linear maps") {
  Rng rng(15);
  Tensor w = make_rand({5, 3}, rng);
  Tensor x = make_rand({5}, rng);
  auto f = [](const std::vector<Tensor>& in) {
    return sum_all(vecmat(in[1], in[0]));
  };
  CHECK(grad_check(f, {w, x}) <= 1e-9);
}

TEST_CASE("softmax cross-entropy composite gradient") {
  Rng rng(16);
  Tensor logits = make_rand({5}, rng, -2, 2);
  auto f = [](const std::vector<Tensor>& in) {
    Tensor p = softmax_vec(in[0]);
    return scale(log_t(pick(p, 2)), -1.0);
  };
  CHECK(grad_check(f, {logits}) <= 1e-6);
}

TEST_CASE("gradient suite covers every kernel") {
  Rng rng(17);
  double tol_smooth = 1e-6;
  double tol_kinked = 1e-4;

  SECTION("matmul") {
    auto f = [](const std::vector<Tensor>& in) {
      return sum_all(matmul(in[0], in[1]));
    };
    CHECK(grad_check(f, {make_rand({3, 4}, rng), make_rand({4, 2}, rng)}) <= tol_smooth);
  }
  SECTION("matmul_nt") {
    auto f = [](const std::vector<Tensor>& in) {
      return sum_all(tanh_t(matmul_nt(in[0], in[1])));
    };
    CHECK(grad_check(f, {make_rand({3, 4}, rng), make_rand({5, 4}, rng)}) <= tol_smooth);
  }
  SECTION("matvec and matvec_t") {
    auto f = [](const std::vector<Tensor>& in) {
      return sum_all(tanh_t(matvec(in[0], in[1])));
    };
    CHECK(grad_check(f, {make_rand({3, 4}, rng), make_rand({4}, rng)}) <= tol_smooth);
    auto g = [](const std::vector<Tensor>& in) {
      return sum_all(tanh_t(matvec_t(in[0], in[1])));
    };
    CHECK(grad_check(g, {make_rand({3, 4}, rng), make_rand({3}, rng)}) <= tol_smooth);
  }
  SECTION("add sub mul divide") {
    auto f = [](const std::vector<Tensor>& in) {
      Tensor s = add(in[0], in[1]);
      s = sub(s, mul(in[0], in[1]));
      return sum_all(divide(s, add_const(mul(in[1], in[1]), 1.5)));
    };
    CHECK(grad_check(f, {make_rand({2, 3}, rng), make_rand({2, 3}, rng)}) <= tol_smooth);
  }
  SECTION("scale add_const sqrt log clamp") {
    auto f = [](const std::vector<Tensor>& in) {
      Tensor pos = add_const(mul(in[0], in[0]), 0.7);
      return sum_all(add(log_t(pos), sqrt_t(clamp_t(pos, 0.1, 50.0))));
    };
    CHECK(grad_check(f, {make_rand({5}, rng)}) <= tol_smooth);
  }
  SECTION("activations") {
    auto f = [](const std::vector<Tensor>& in) {
      return sum_all(add(tanh_t(in[0]), sigmoid_t(in[0])));
    };
    CHECK(grad_check(f, {make_rand({4, 3}, rng)}) <= tol_smooth);
    // keep relu inputs away from the kink
    Tensor x = make_rand({6}, rng, 0.5, 2.0);
    Tensor y = make_rand({6}, rng, -2.0, -0.5);
    auto g = [](const std::vector<Tensor>& in) {
      return sum_all(add(relu_t(in[0]), relu_t(in[1])));
    };
    CHECK(grad_check(g, {x, y}) <= tol_kinked);
  }
  SECTION("concat rows row slice stack tile") {
    auto f = [](const std::vector<Tensor>& in) {
      Tensor c = concat(in[0], in[1], 1);
      Tensor picked = rows(c, {1, 0, 1});
      Tensor r = row(picked, 2);
      Tensor s = slice(r, 1, 3);
      Tensor st = stack_rows({s, s});
      Tensor tiled = tile_rowvec(r, 2);
      return add(sum_all(tanh_t(st)), sum_all(tanh_t(tiled)));
    };
    CHECK(grad_check(f, {make_rand({2, 3}, rng), make_rand({2, 2}, rng)}) <= tol_smooth);
  }
  SECTION("add_rowvec scale_rows") {
    auto f = [](const std::vector<Tensor>& in) {
      return sum_all(tanh_t(scale_rows(add_rowvec(in[0], in[1]), in[2])));
    };
    CHECK(grad_check(f, {make_rand({3, 4}, rng), make_rand({4}, rng),
                         make_rand({3}, rng)}) <= tol_smooth);
  }
  SECTION("reductions") {
    auto f = [](const std::vector<Tensor>& in) {
      return add(sum_all(tanh_t(mean_reduce(in[0], 0))),
                 sum_all(tanh_t(mean_reduce(in[0], 1))));
    };
    auto g = [](const std::vector<Tensor>& in) {
      Tensor a = max_reduce(in[0], 0);
      Tensor b = max_reduce(in[0], 1);
      return add(sum_all(tanh_t(a)), sum_all(tanh_t(b)));
    };
    CHECK(grad_check(f, {make_rand({3, 4}, rng)}) <= tol_smooth);
    CHECK(grad_check(g, {make_rand({3, 4}, rng)}) <= tol_kinked);
  }
  SECTION("softmax axes") {
    auto f = [](const std::vector<Tensor>& in) {
      Tensor r = softmax(in[0], 1);
      Tensor c = softmax(in[0], 0);
      return add(sum_all(mul(r, r)), sum_all(mul(c, c)));
    };
    CHECK(grad_check(f, {make_rand({3, 4}, rng, -2, 2)}) <= tol_smooth);
  }
  SECTION("dot pick") {
    auto f = [](const std::vector<Tensor>& in) {
      Tensor sm = softmax_vec(in[0]);
      return add(dot(in[0], in[1]), pick(sm, 1));
    };
    CHECK(grad_check(f, {make_rand({4}, rng), make_rand({4}, rng)}) <= tol_smooth);
  }
  SECTION("conv1d widths 1 2 3") {
    for (std::size_t width : {1u, 2u, 3u}) {
      auto f = [width](const std::vector<Tensor>& in) {
        return sum_all(conv1d(in[0], in[1], in[2], width));
      };
      CHECK(grad_check(f, {make_rand({5, 3}, rng),
                           make_rand({width * 3, 2}, rng),
                           make_rand({2}, rng)}) <= tol_smooth);
    }
  }
  SECTION("dropout with a frozen mask") {
    auto f = [](const std::vector<Tensor>& in) {
      Rng mask_rng(42);  // identical mask on every call
      return sum_all(dropout(in[0], 0.4, true, mask_rng));
    };
    CHECK(grad_check(f, {make_rand({4, 4}, rng)}) <= tol_kinked);
  }
  SECTION("bilstm") {
    auto w = random_lstm(3, 2, rng);
    auto v = random_lstm(3, 2, rng);
    Tensor x = make_rand({4, 3}, rng);
    auto f = [&w, &v](const std::vector<Tensor>& in) {
      LstmWeights fw{in[1], in[2], in[3]};
      LstmWeights bw{in[4], in[5], in[6]};
      return sum_all(bilstm(in[0], fw, bw, 2));
    };
    CHECK(grad_check(f, {x, w.w_x, w.w_h, w.b, v.w_x, v.w_h, v.b}) <= tol_smooth);
  }
}
