#include <doctest.h>

#include <cmath>
#include <random>

#include "pato/tensor.hpp"

using namespace pato;

namespace {

Eigen::ArrayXd randu(std::int64_t n, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Eigen::ArrayXd v(n);
  for (std::int64_t i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

// Direct convolution, written independently of the im2col path: stride 1,
// zero padding k/2, weights laid out [cout][cin][dz][dy][dx] with dx fastest.
Eigen::ArrayXd conv_oracle(const Eigen::ArrayXd& xv, const TensorShape& xs,
                           const Param& w, const Param& b) {
  const int k = w.shape.nx, pad = k / 2, cout = w.shape.n, cin = w.shape.c;
  const std::int64_t vox = xs.spatial();
  Eigen::ArrayXd out(std::int64_t(xs.n) * cout * vox);
  for (int s = 0; s < xs.n; ++s)
    for (int co = 0; co < cout; ++co)
      for (int z = 0; z < xs.nz; ++z)
        for (int y = 0; y < xs.ny; ++y)
          for (int x = 0; x < xs.nx; ++x) {
            double acc = b.w[co];
            for (int ci = 0; ci < cin; ++ci)
              for (int dz = 0; dz < k; ++dz)
                for (int dy = 0; dy < k; ++dy)
                  for (int dx = 0; dx < k; ++dx) {
                    const int sx = x + dx - pad, sy = y + dy - pad, sz = z + dz - pad;
                    if (sx < 0 || sx >= xs.nx || sy < 0 || sy >= xs.ny || sz < 0 || sz >= xs.nz)
                      continue;
                    acc += w.w[(((std::int64_t(co) * cin + ci) * k + dz) * k + dy) * k + dx] *
                           xv[(std::int64_t(s) * cin + ci) * vox + sx +
                              std::int64_t(xs.nx) * (sy + std::int64_t(xs.ny) * sz)];
                  }
            out[(std::int64_t(s) * cout + co) * vox + x +
                std::int64_t(xs.nx) * (y + std::int64_t(xs.ny) * z)] = acc;
          }
  return out;
}

// Central-difference check of dJ/dstore against an analytic gradient computed
// beforehand. value() must rebuild the graph from the current store contents.
void fd_check(Eigen::ArrayXd& store, const Eigen::ArrayXd& agrad,
              const std::function<double()>& value, double h = 1e-6) {
  REQUIRE(agrad.size() == store.size());
  for (std::int64_t i = 0; i < store.size(); ++i) {
    const double keep = store[i];
    store[i] = keep + h;
    const double fp = value();
    store[i] = keep - h;
    const double fm = value();
    store[i] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    CAPTURE(i);
    CHECK(std::abs(fd - agrad[i]) <=
          1e-6 * std::max({std::abs(fd), std::abs(agrad[i]), 1.0}));
  }
}

}  // namespace

TEST_CASE("conv3d matches a direct convolution oracle") {
  const TensorShape xs{2, 2, 4, 3, 3};
  const Eigen::ArrayXd xv = randu(xs.count(), 101);
  Param w = make_param(TensorShape{3, 2, 3, 3, 3});
  w.w = randu(w.w.size(), 102, -0.4, 0.4);
  Param b = make_param(TensorShape{1, 3, 1, 1, 1});
  b.w = randu(b.w.size(), 103, -0.2, 0.2);

  const Eigen::ArrayXd want = conv_oracle(xv, xs, w, b);

  Tape t;
  const int y = t.conv3d(t.leaf(xs, xv), w, b);
  CHECK(t.shape(y) == TensorShape{2, 3, 4, 3, 3});
  const Eigen::ArrayXd& got = t.val(y);
  REQUIRE(got.size() == want.size());
  for (std::int64_t i = 0; i < got.size(); ++i) {
    CAPTURE(i);
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv3d with a unit kernel is an affine map per channel") {
  const TensorShape xs{1, 1, 3, 2, 2};
  const Eigen::ArrayXd xv = randu(xs.count(), 7);
  Param w = make_param(TensorShape{1, 1, 1, 1, 1});
  w.w[0] = 2.5;
  Param b = make_param(TensorShape{1, 1, 1, 1, 1});
  b.w[0] = -0.25;

  Tape t;
  const int y = t.conv3d(t.leaf(xs, xv), w, b);
  CHECK((t.val(y) == (2.5 * xv - 0.25)).all());
}

TEST_CASE("conv3d gradients match central differences") {
  const TensorShape xs{1, 2, 4, 3, 3};
  Eigen::ArrayXd xv = randu(xs.count(), 201);
  Param w = make_param(TensorShape{3, 2, 3, 3, 3});
  w.w = randu(w.w.size(), 202, -0.3, 0.3);
  Param b = make_param(TensorShape{1, 3, 1, 1, 1});
  b.w = randu(b.w.size(), 203, -0.2, 0.2);
  const Eigen::ArrayXd y0 = randu(3 * xs.spatial(), 204);

  auto value = [&]() {
    Tape t;
    return t.val(t.mse(t.conv3d(t.leaf(xs, xv), w, b), y0))[0];
  };

  Eigen::ArrayXd gx, gw, gb;
  {
    Tape t;
    const int x = t.leaf(xs, xv);
    const int j = t.mse(t.conv3d(x, w, b), y0);
    t.backward(j);
    gx = t.grad(x);
    gw = w.g;
    gb = b.g;
  }
  fd_check(xv, gx, value);
  fd_check(w.w, gw, value);
  fd_check(b.w, gb, value);
}

TEST_CASE("conv3d validates kernel and channel shapes") {
  Tape t;
  const int x = t.leaf(TensorShape{1, 2, 2, 2, 2}, Eigen::ArrayXd::Zero(16));
  Param even = make_param(TensorShape{1, 2, 2, 2, 2});
  Param bias1 = make_param(TensorShape{1, 1, 1, 1, 1});
  CHECK_THROWS_AS(t.conv3d(x, even, bias1), std::invalid_argument);
  Param wrongC = make_param(TensorShape{1, 3, 3, 3, 3});
  CHECK_THROWS_AS(t.conv3d(x, wrongC, bias1), std::invalid_argument);
  Param ok = make_param(TensorShape{2, 2, 3, 3, 3});
  CHECK_THROWS_AS(t.conv3d(x, ok, bias1), std::invalid_argument);  // bias for 1 channel, not 2
}

TEST_CASE("relu and sigmoid match their closed forms with correct gradients") {
  const TensorShape xs{1, 2, 3, 2, 2};
  // magnitudes >= 0.25 so finite differences never cross the relu kink
  Eigen::ArrayXd xv = randu(xs.count(), 301, 0.25, 1.0);
  for (std::int64_t i = 0; i < xv.size(); ++i)
    if (i % 2 == 1) xv[i] = -xv[i];
  const Eigen::ArrayXd y0 = randu(xs.count(), 302);

  {
    Tape t;
    const int y = t.relu(t.leaf(xs, xv));
    CHECK((t.val(y) == xv.max(0.0)).all());
  }
  {
    Tape t;
    const int y = t.sigmoid(t.leaf(xs, xv));
    for (std::int64_t i = 0; i < xv.size(); ++i)
      CHECK(t.val(y)[i] == doctest::Approx(1.0 / (1.0 + std::exp(-xv[i]))).epsilon(1e-15));
  }

  auto valueR = [&]() {
    Tape t;
    return t.val(t.mse(t.relu(t.leaf(xs, xv)), y0))[0];
  };
  auto valueS = [&]() {
    Tape t;
    return t.val(t.mse(t.sigmoid(t.leaf(xs, xv)), y0))[0];
  };
  Eigen::ArrayXd gr, gs;
  {
    Tape t;
    const int x = t.leaf(xs, xv);
    t.backward(t.mse(t.relu(x), y0));
    gr = t.grad(x);
  }
  {
    Tape t;
    const int x = t.leaf(xs, xv);
    t.backward(t.mse(t.sigmoid(x), y0));
    gs = t.grad(x);
  }
  fd_check(xv, gr, valueR);
  fd_check(xv, gs, valueS);
}

TEST_CASE("maxpool2 picks window maxima and routes gradients to the winners") {
  const TensorShape xs{1, 2, 4, 2, 2};
  Eigen::ArrayXd xv = randu(xs.count(), 401);
  for (std::int64_t i = 0; i < xv.size(); ++i) xv[i] += 1e-3 * double(i);  // break ties
  const Eigen::ArrayXd y0 = randu(xs.count() / 8, 402);

  Tape t;
  const int x = t.leaf(xs, xv);
  const int y = t.maxpool2(x);
  REQUIRE(t.shape(y) == TensorShape{1, 2, 2, 1, 1});

  // independent window scan
  const std::int64_t vox = xs.spatial();
  std::int64_t o = 0;
  for (int c = 0; c < 2; ++c)
    for (int x0 = 0; x0 < 2; ++x0, ++o) {
      double best = -1e300;
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            best = std::max(best, xv[c * vox + (2 * x0 + dx) + 4 * (dy + 2 * dz)]);
      CHECK(t.val(y)[o] == best);
    }

  auto value = [&]() {
    Tape t2;
    return t2.val(t2.mse(t2.maxpool2(t2.leaf(xs, xv)), y0))[0];
  };
  Eigen::ArrayXd g;
  {
    Tape t2;
    const int x2 = t2.leaf(xs, xv);
    t2.backward(t2.mse(t2.maxpool2(x2), y0));
    g = t2.grad(x2);
  }
  fd_check(xv, g, value);

  // a tied window sends its whole subgradient to the lowest linear index
  Eigen::ArrayXd flat = Eigen::ArrayXd::Constant(8, 0.5);
  Tape t3;
  const int xf = t3.leaf(TensorShape{1, 1, 2, 2, 2}, flat);
  t3.backward(t3.maxpool2(xf));
  CHECK(t3.grad(xf)[0] == 1.0);
  CHECK((t3.grad(xf).tail(7) == 0.0).all());

  Tape t4;
  CHECK_THROWS_AS(t4.maxpool2(t4.leaf(TensorShape{1, 1, 3, 2, 2}, Eigen::ArrayXd::Zero(12))),
                  std::invalid_argument);
}

TEST_CASE("upsample2 repeats parent values and accumulates child gradients") {
  const TensorShape xs{1, 2, 2, 1, 2};
  Eigen::ArrayXd xv = randu(xs.count(), 501);
  const Eigen::ArrayXd y0 = randu(xs.count() * 8, 502);

  Tape t;
  const int x = t.leaf(xs, xv);
  const int y = t.upsample2(x);
  REQUIRE(t.shape(y) == TensorShape{1, 2, 4, 2, 4});
  const std::int64_t ivox = xs.spatial(), ovox = 8 * ivox;
  for (int c = 0; c < 2; ++c)
    for (int kz = 0; kz < 4; ++kz)
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 4; ++i)
          CHECK(t.val(y)[c * ovox + i + 4 * (j + 2 * kz)] ==
                xv[c * ivox + i / 2 + 2 * (j / 2 + 1 * (kz / 2))]);

  auto value = [&]() {
    Tape t2;
    return t2.val(t2.mse(t2.upsample2(t2.leaf(xs, xv)), y0))[0];
  };
  Eigen::ArrayXd g;
  {
    Tape t2;
    const int x2 = t2.leaf(xs, xv);
    t2.backward(t2.mse(t2.upsample2(x2), y0));
    g = t2.grad(x2);
  }
  fd_check(xv, g, value);
}

TEST_CASE("crop keeps the low corner block and zero-extends gradients") {
  const TensorShape xs{1, 2, 4, 3, 3};
  Eigen::ArrayXd xv = randu(xs.count(), 601);
  const Eigen::ArrayXd y0 = randu(std::int64_t(2) * 3 * 2 * 2, 602);

  Tape t;
  const int x = t.leaf(xs, xv);
  const int y = t.crop_spatial(x, 3, 2, 2);
  REQUIRE(t.shape(y) == TensorShape{1, 2, 3, 2, 2});
  const std::int64_t ivox = xs.spatial();
  for (int c = 0; c < 2; ++c)
    for (int kz = 0; kz < 2; ++kz)
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 3; ++i)
          CHECK(t.val(y)[c * 12 + i + 3 * (j + 2 * kz)] == xv[c * ivox + i + 4 * (j + 3 * kz)]);

  auto value = [&]() {
    Tape t2;
    return t2.val(t2.mse(t2.crop_spatial(t2.leaf(xs, xv), 3, 2, 2), y0))[0];
  };
  Eigen::ArrayXd g;
  {
    Tape t2;
    const int x2 = t2.leaf(xs, xv);
    t2.backward(t2.mse(t2.crop_spatial(x2, 3, 2, 2), y0));
    g = t2.grad(x2);
    // dropped voxels get exactly zero
    for (int c = 0; c < 2; ++c) CHECK(g[c * ivox + 3 + 4 * (0 + 3 * 0)] == 0.0);
  }
  fd_check(xv, g, value);

  Tape t3;
  CHECK_THROWS_AS(t3.crop_spatial(t3.leaf(TensorShape{1, 1, 2, 2, 2}, Eigen::ArrayXd::Zero(8)), 3, 2, 2),
                  std::invalid_argument);
}

TEST_CASE("concat, add, and broadcast multiply compose with exact values") {
  const TensorShape as{1, 2, 2, 2, 2}, bs{1, 1, 2, 2, 2}, ms{1, 1, 2, 2, 2};
  Eigen::ArrayXd av = randu(as.count(), 701);
  Eigen::ArrayXd bv = randu(bs.count(), 702);
  Eigen::ArrayXd mv = randu(ms.count(), 703);
  const Eigen::ArrayXd y0 = randu(3 * 8, 704);

  {
    Tape t;
    const int y = t.concat_c(t.leaf(as, av), t.leaf(bs, bv));
    REQUIRE(t.shape(y) == TensorShape{1, 3, 2, 2, 2});
    CHECK((t.val(y).head(16) == av).all());
    CHECK((t.val(y).tail(8) == bv).all());
  }
  {
    Tape t;
    const int y = t.mul_bcast(t.leaf(as, av), t.leaf(ms, mv));
    for (int c = 0; c < 2; ++c)
      for (int v = 0; v < 8; ++v) CHECK(t.val(y)[c * 8 + v] == av[c * 8 + v] * mv[v]);
  }
  {
    Tape t;
    const int y = t.add(t.leaf(bs, bv), t.leaf(ms, mv));
    CHECK((t.val(y) == bv + mv).all());
    CHECK_THROWS_AS(t.add(t.leaf(as, av), t.leaf(bs, bv)), std::invalid_argument);
    CHECK_THROWS_AS(t.mul_bcast(t.leaf(ms, mv), t.leaf(as, av)), std::invalid_argument);
    CHECK_THROWS_AS(t.concat_c(t.leaf(as, av), t.leaf(TensorShape{1, 1, 2, 2, 1}, Eigen::ArrayXd::Zero(4))),
                    std::invalid_argument);
  }

  auto value = [&]() {
    Tape t;
    const int gated = t.mul_bcast(t.concat_c(t.leaf(as, av), t.leaf(bs, bv)), t.leaf(ms, mv));
    return t.val(t.mse(gated, y0))[0];
  };
  Eigen::ArrayXd ga, gb, gm;
  {
    Tape t;
    const int a = t.leaf(as, av), b = t.leaf(bs, bv), m = t.leaf(ms, mv);
    t.backward(t.mse(t.mul_bcast(t.concat_c(a, b), m), y0));
    ga = t.grad(a);
    gb = t.grad(b);
    gm = t.grad(m);
  }
  fd_check(av, ga, value);
  fd_check(bv, gb, value);
  fd_check(mv, gm, value);
}

TEST_CASE("channel mean and max reduce across channels") {
  const TensorShape xs{1, 3, 2, 2, 1};
  Eigen::ArrayXd xv = randu(xs.count(), 801);
  const Eigen::ArrayXd y0 = randu(4, 802);
  const std::int64_t vox = 4;

  {
    Tape t;
    const int y = t.channel_mean(t.leaf(xs, xv));
    REQUIRE(t.shape(y) == TensorShape{1, 1, 2, 2, 1});
    for (int v = 0; v < 4; ++v)
      CHECK(t.val(y)[v] ==
            doctest::Approx((xv[v] + xv[vox + v] + xv[2 * vox + v]) / 3.0).epsilon(1e-15));
  }
  {
    Tape t;
    const int y = t.channel_max(t.leaf(xs, xv));
    for (int v = 0; v < 4; ++v)
      CHECK(t.val(y)[v] == std::max({xv[v], xv[vox + v], xv[2 * vox + v]}));
  }

  auto valueMean = [&]() {
    Tape t;
    return t.val(t.mse(t.channel_mean(t.leaf(xs, xv)), y0))[0];
  };
  auto valueMax = [&]() {
    Tape t;
    return t.val(t.mse(t.channel_max(t.leaf(xs, xv)), y0))[0];
  };
  Eigen::ArrayXd gmean, gmax;
  {
    Tape t;
    const int x = t.leaf(xs, xv);
    t.backward(t.mse(t.channel_mean(x), y0));
    gmean = t.grad(x);
  }
  {
    Tape t;
    const int x = t.leaf(xs, xv);
    t.backward(t.mse(t.channel_max(x), y0));
    gmax = t.grad(x);
  }
  fd_check(xv, gmean, valueMean);
  fd_check(xv, gmax, valueMax);

  // tied channels route the subgradient to the lowest channel
  Eigen::ArrayXd tied = Eigen::ArrayXd::Constant(xs.count(), 0.3);
  Tape t;
  const int x = t.leaf(xs, tied);
  t.backward(t.mse(t.channel_max(x), Eigen::ArrayXd::Zero(4)));
  CHECK((t.grad(x).head(4) != 0.0).all());
  CHECK((t.grad(x).tail(8) == 0.0).all());
}

TEST_CASE("global max returns the peak with a one-hot subgradient") {
  const TensorShape xs{1, 1, 3, 2, 2};
  Eigen::ArrayXd xv = randu(xs.count(), 901);
  xv[7] = 2.0;  // unique peak

  Tape t;
  const int x = t.leaf(xs, xv);
  const int y = t.global_max(x);
  CHECK(t.val(y)[0] == 2.0);
  t.backward(y, 3.0);
  for (std::int64_t i = 0; i < xv.size(); ++i) CHECK(t.grad(x)[i] == (i == 7 ? 3.0 : 0.0));

  // mask restricts the argmax
  std::vector<std::uint8_t> mask(size_t(xs.spatial()), 0);
  mask[2] = mask[3] = 1;
  Tape t2;
  const int x2 = t2.leaf(xs, xv);
  const int y2 = t2.global_max(x2, &mask);
  CHECK(t2.val(y2)[0] == std::max(xv[2], xv[3]));

  // ties resolve to the lowest linear index
  Eigen::ArrayXd tied = Eigen::ArrayXd::Constant(12, 0.25);
  Tape t3;
  const int x3 = t3.leaf(xs, tied);
  t3.backward(t3.global_max(x3));
  CHECK(t3.grad(x3)[0] == 1.0);
  CHECK((t3.grad(x3).tail(11) == 0.0).all());

  std::vector<std::uint8_t> empty(size_t(xs.spatial()), 0);
  Tape t4;
  CHECK_THROWS_AS(t4.global_max(t4.leaf(xs, xv), &empty), std::invalid_argument);
  Tape t5;
  CHECK_THROWS_AS(t5.global_max(t5.leaf(TensorShape{1, 2, 2, 1, 1}, Eigen::ArrayXd::Zero(4))),
                  std::invalid_argument);
}

TEST_CASE("mse matches its closed form") {
  Eigen::ArrayXd p(3), y(3);
  p << 1.0, 2.0, 3.0;
  y << 1.5, 2.0, 1.0;
  Tape t;
  const int x = t.leaf(TensorShape{1, 1, 3, 1, 1}, p);
  const int j = t.mse(x, y);
  CHECK(t.val(j)[0] == doctest::Approx((0.25 + 0.0 + 4.0) / 3.0).epsilon(1e-15));
  t.backward(j);
  for (int i = 0; i < 3; ++i)
    CHECK(t.grad(x)[i] == doctest::Approx(2.0 / 3.0 * (p[i] - y[i])).epsilon(1e-15));
  CHECK_THROWS_AS(t.mse(x, Eigen::ArrayXd::Zero(4)), std::invalid_argument);
}

TEST_CASE("backward seed scales every gradient linearly") {
  const TensorShape xs{1, 1, 2, 2, 2};
  Eigen::ArrayXd xv = randu(xs.count(), 1001);
  const Eigen::ArrayXd y0 = randu(xs.count(), 1002);

  Eigen::ArrayXd g1, g3;
  {
    Tape t;
    const int x = t.leaf(xs, xv);
    t.backward(t.mse(t.sigmoid(x), y0), 1.0);
    g1 = t.grad(x);
  }
  {
    Tape t;
    const int x = t.leaf(xs, xv);
    t.backward(t.mse(t.sigmoid(x), y0), 3.0);
    g3 = t.grad(x);
  }
  for (std::int64_t i = 0; i < g1.size(); ++i)
    CHECK(g3[i] == doctest::Approx(3.0 * g1[i]).epsilon(1e-14));
}

TEST_CASE("parameter gradients accumulate across uses and backward passes") {
  const TensorShape xs{1, 1, 2, 2, 2};
  Eigen::ArrayXd xv = randu(xs.count(), 1101);
  Param w = make_param(TensorShape{1, 1, 3, 3, 3});
  w.w = randu(w.w.size(), 1102, -0.3, 0.3);
  Param b = make_param(TensorShape{1, 1, 1, 1, 1});
  b.w[0] = 0.1;
  const Eigen::ArrayXd y0 = randu(xs.count(), 1103);

  // the same kernel applied twice: gradients from both uses must sum
  auto value = [&]() {
    Tape t;
    const int x = t.leaf(xs, xv);
    return t.val(t.mse(t.add(t.conv3d(x, w, b), t.conv3d(x, w, b)), y0))[0];
  };
  Eigen::ArrayXd gw;
  {
    w.g.setZero();
    b.g.setZero();
    Tape t;
    const int x = t.leaf(xs, xv);
    const int j = t.mse(t.add(t.conv3d(x, w, b), t.conv3d(x, w, b)), y0);
    t.backward(j);
    gw = w.g;

    // a second backward on the same tape adds in again
    t.backward(j);
    CHECK((w.g == 2.0 * gw).all());
    w.g.setZero();
    b.g.setZero();
  }
  fd_check(w.w, gw, value);
}

TEST_CASE("leaf rejects a value that does not match its shape") {
  Tape t;
  CHECK_THROWS_AS(t.leaf(TensorShape{1, 1, 2, 2, 2}, Eigen::ArrayXd::Zero(7)),
                  std::invalid_argument);
}
