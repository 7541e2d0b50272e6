#include <doctest.h>

#include <cmath>

#include "rfenet/layers.hpp"
#include "rfenet/ops.hpp"
#include "test_util.hpp"

using namespace rfenet;
using testutil::gradcheck;
using testutil::random_mat;
using testutil::random_tensor;

namespace {

// Half-pixel bilinear sampling written directly from the definition.
double bilinear_reference(const Tensor<double>& x, Index c, int b, int oy, int ox, int out_h,
                          int out_w) {
  auto coord = [](int o, int in, int out, int& i0, int& i1, double& frac) {
    double src = (o + 0.5) * double(in) / double(out) - 0.5;
    if (src < 0) src = 0;
    i0 = std::min(int(std::floor(src)), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    frac = src - i0;
  };
  int y0, y1, x0, x1;
  double fy, fx;
  coord(oy, x.h, out_h, y0, y1, fy);
  coord(ox, x.w, out_w, x0, x1, fx);
  return (1 - fy) * ((1 - fx) * x.at(c, b, y0, x0) + fx * x.at(c, b, y0, x1)) +
         fy * ((1 - fx) * x.at(c, b, y1, x0) + fx * x.at(c, b, y1, x1));
}

// Direct zero-padded convolution.
Tensor<double> conv_reference(const Tensor<double>& x, const Mat<double>& w, ConvGeometry geom) {
  const int k = geom.kernel, p = geom.pad();
  const int ho = geom.out_size(x.h), wo = geom.out_size(x.w);
  Tensor<double> y = Tensor<double>::zeros(w.rows(), x.n, ho, wo);
  for (Index co = 0; co < w.rows(); ++co)
    for (int b = 0; b < x.n; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = 0;
          for (Index ci = 0; ci < x.channels(); ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * geom.stride - p + ky * geom.dilation;
                const int ix = ox * geom.stride - p + kx * geom.dilation;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += w(co, (ci * k + ky) * k + kx) * x.at(ci, b, iy, ix);
              }
          y.at(co, b, oy, ox) = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("bilinear resize matches the half-pixel definition") {
  std::mt19937_64 rng(1);
  const Tensor<double> x = random_tensor<double>(3, 2, 5, 7, rng);
  for (auto [oh, ow] : {std::pair{10, 14}, {3, 4}, {8, 8}, {5, 7}, {1, 1}, {16, 3}}) {
    const Tensor<double> y = bilinear_resize(x, oh, ow);
    REQUIRE(y.h == oh);
    REQUIRE(y.w == ow);
    for (Index c = 0; c < 3; ++c)
      for (int b = 0; b < 2; ++b)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            CHECK(y.at(c, b, oy, ox) ==
                  doctest::Approx(bilinear_reference(x, c, b, oy, ox, oh, ow)).epsilon(1e-12));
  }
}

TEST_CASE("bilinear adjoint satisfies <R x, y> = <x, R^T y>") {
  std::mt19937_64 rng(2);
  const Tensor<double> x = random_tensor<double>(2, 2, 4, 6, rng);
  const Tensor<double> y = random_tensor<double>(2, 2, 9, 5, rng);
  const double lhs = (bilinear_resize(x, 9, 5).data.array() * y.data.array()).sum();
  Tensor<double> rty = Tensor<double>::zeros(2, 2, 4, 6);
  bilinear_resize_adjoint_add(y, rty);
  const double rhs = (x.data.array() * rty.data.array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("im2col convolution matches direct convolution") {
  std::mt19937_64 rng(3);
  for (ConvGeometry geom : {ConvGeometry{3, 1, 1}, {3, 2, 1}, {3, 1, 2}, {5, 1, 1}, {1, 1, 1},
                            {1, 2, 1}, {9, 1, 1}}) {
    CAPTURE(geom.kernel);
    CAPTURE(geom.stride);
    CAPTURE(geom.dilation);
    const Tensor<double> x = random_tensor<double>(3, 2, 8, 6, rng);
    const Mat<double> w = random_mat<double>(4, 3 * geom.kernel * geom.kernel, rng);
    Graph<double> g(false);
    ParameterSet<double> ps;
    auto& wp = ps.add("w", w);
    Var<double> y = ops::conv2d(g.input(x), g.param(wp), Var<double>{}, geom);
    const Tensor<double> ref = conv_reference(x, w, geom);
    REQUIRE(y.value().same_layout(ref));
    CHECK((y.data() - ref.data).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("group norm output has zero mean and unit variance per group") {
  std::mt19937_64 rng(4);
  ParameterSet<double> ps;
  auto& gam = ps.add("g", Mat<double>::Ones(8, 1));
  auto& bet = ps.add("b", Mat<double>::Zero(8, 1));
  Graph<double> g(false);
  const Tensor<double> x = random_tensor<double>(8, 2, 4, 4, rng);
  Var<double> y = ops::group_norm(g.input(x), g.param(gam), g.param(bet), 4, 1e-12);
  for (int b = 0; b < 2; ++b)
    for (int gi = 0; gi < 4; ++gi) {
      auto blk = y.data().block(gi * 2, b * 16, 2, 16);
      CHECK(std::abs(blk.mean()) < 1e-12);
      CHECK((blk.array() - blk.mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("default group count is the largest of 4, 2, 1 dividing the width") {
  CHECK(default_groups(16) == 4);
  CHECK(default_groups(6) == 2);
  CHECK(default_groups(3) == 1);
}

TEST_CASE("elementary ops have correct gradients") {
  std::mt19937_64 rng(5);
  ParameterSet<double> ps;
  auto& x = ps.add("x", random_mat<double>(4, 2 * 6 * 5, rng));
  auto& a = ps.add("a", random_mat<double>(1, 2 * 6 * 5, rng, 0.1, 0.9));
  auto& w = ps.add("w", random_mat<double>(6, 4 * 9, rng, -0.5, 0.5));
  auto& wb = ps.add("wb", random_mat<double>(6, 1, rng));
  auto& gam = ps.add("gamma", random_mat<double>(6, 1, rng, 0.5, 1.5));
  auto& bet = ps.add("beta", random_mat<double>(6, 1, rng));
  Parameter<double> rm{"rm", Mat<double>::Zero(6, 1), {}, false};
  Parameter<double> rv{"rv", Mat<double>::Ones(6, 1), {}, false};
  const Mat<double> probe_scalar = random_mat<double>(1, 1, rng);

  SUBCASE("conv, group norm, relu, resize") {
    // Normalization removes any per-channel offset, so the bias gradient is
    // exactly zero and finite differences only see rounding noise.
    wb.trainable = false;
    for (ConvGeometry geom : {ConvGeometry{3, 1, 1}, {3, 2, 1}, {3, 1, 2}}) {
      const int ho = geom.out_size(6), wo = geom.out_size(5);
      const Mat<double> probe = random_mat<double>(6, 2 * 7 * 9, rng);
      auto r = gradcheck(ps, [&](Graph<double>& g) {
        Var<double> xv = g.param(x, 2, 6, 5);
        Var<double> y = ops::conv2d(xv, g.param(w), g.param(wb), geom);
        y = ops::group_norm(y, g.param(gam), g.param(bet), 2, 1e-5);
        y = ops::relu(y);
        REQUIRE(y.h() == ho);
        REQUIRE(y.w() == wo);
        return ops::dot(ops::resize(y, 7, 9), probe);
      });
      CAPTURE(r.worst);
      CHECK(r.max_rel_error < 1e-5);
      CHECK(wb.grad.cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("batch norm in training mode") {
    wb.trainable = false;  // cancelled by the batch mean
    const Mat<double> probe = random_mat<double>(6, 60, rng);
    auto r = gradcheck(ps, [&](Graph<double>& g) {
      Var<double> y = ops::conv2d(g.param(x, 2, 6, 5), g.param(w), g.param(wb), {3, 1, 1});
      y = ops::batch_norm(y, g.param(gam), g.param(bet), rm, rv, 0.1, 1e-5);
      return ops::dot(y, probe);
    });
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < 1e-5);
  }
  SUBCASE("gate, sigmoid, concat, slice, pooling") {
    const Mat<double> probe = random_mat<double>(6, 60, rng);
    auto r = gradcheck(ps, [&](Graph<double>& g) {
      Var<double> xv = g.param(x, 2, 6, 5);
      Var<double> av = ops::sigmoid(g.param(a, 2, 6, 5));
      Var<double> gated = ops::gate(xv, av);
      Var<double> pooled = ops::broadcast_spatial(ops::global_avg_pool(xv), 6, 5);
      Var<double> cat = ops::concat_channels<double>({gated, pooled, xv});
      Var<double> sl = ops::slice_channels(cat, 2, 6);
      return ops::add(ops::dot(sl, probe), ops::scale(ops::sum_squares(av), 0.5));
    });
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("resize to the same size is the identity node") {
  Graph<double> g(true);
  std::mt19937_64 rng(6);
  Var<double> x = g.input(random_tensor<double>(2, 1, 4, 4, rng));
  CHECK(ops::resize(x, 4, 4).id == x.id);
}

TEST_CASE("shape errors are reported") {
  Graph<double> g(false);
  std::mt19937_64 rng(7);
  Var<double> a = g.input(random_tensor<double>(2, 1, 4, 4, rng));
  Var<double> b = g.input(random_tensor<double>(2, 1, 4, 5, rng));
  CHECK_THROWS_AS(ops::add(a, b), ShapeError);
  CHECK_THROWS_AS(ops::concat_channels<double>({a, b}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>(Mat<double>::Zero(1, 5), 1, 2, 2), ShapeError);
}
