#include <random>

#include "doctest.h"

#include "atom/prpool.hpp"
#include "testutil.hpp"

using namespace atom;
using testutil::finite_diff;
using testutil::random_tensor;
using testutil::rel_err;

TEST_CASE("bilinear_at examples") {
  // 2x2 map with values {0,1;2,3}, one channel.
  Tensor<double> map({2, 2, 1}, {0, 1, 2, 3});
  CHECK(bilinear_at(map, 0.0, 0.0)[0] == doctest::Approx(0.0));
  CHECK(bilinear_at(map, 1.0, 0.0)[0] == doctest::Approx(1.0));
  CHECK(bilinear_at(map, 0.0, 1.0)[0] == doctest::Approx(2.0));
  // Patch center.
  CHECK(bilinear_at(map, 0.5, 0.5)[0] == doctest::Approx(1.5));

  Tensor<double> cmap = Tensor<double>::full({4, 4, 2}, 3.25);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(0.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    auto v = bilinear_at(cmap, dist(rng), dist(rng));
    CHECK(v[0] == doctest::Approx(3.25));
    CHECK(v[1] == doctest::Approx(3.25));
  }
  // Far outside: zero padding.
  CHECK(bilinear_at(cmap, -5.0, 1.0)[0] == doctest::Approx(0.0));
}

TEST_CASE("integer-aligned boxes reproduce plain average pooling") {
  std::mt19937_64 rng(2);
  Tensor<double> map = random_tensor(rng, {8, 8, 3});
  // Box covering columns 2..5 and rows 1..7 exactly (w=4, h=6), K=2:
  // each bin is the average of a 3x2 block of the bilinear surface, which
  // over aligned whole cells equals the average of cell-centered means.
  const int k = 2;
  BoundingBox box = BoundingBox::from_corners(2, 1, 6, 7);
  Tensor<double> pooled = prpool_forward(map, box, k);
  for (int p = 0; p < k; ++p) {
    for (int q = 0; q < k; ++q) {
      for (int c = 0; c < 3; ++c) {
        // Oracle: integral of the bilinear surface over aligned unit cells
        // equals the mean of the 4 corner samples per cell.
        double acc = 0;
        int cells = 0;
        for (int y = 1 + p * 3; y < 1 + (p + 1) * 3; ++y) {
          for (int x = 2 + q * 2; x < 2 + (q + 1) * 2; ++x) {
            acc += 0.25 * (map.at(y, x, c) + map.at(y, x + 1, c) +
                           map.at(y + 1, x, c) + map.at(y + 1, x + 1, c));
            ++cells;
          }
        }
        CHECK(pooled.at(p, q, c) == doctest::Approx(acc / cells).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("constant map pools to the constant for any box") {
  Tensor<double> map = Tensor<double>::full({10, 12, 2}, 0.7);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(2.0, 8.0), size(0.5, 4.0);
  for (int t = 0; t < 10; ++t) {
    BoundingBox box(pos(rng), pos(rng), size(rng), size(rng));
    Tensor<double> pooled = prpool_forward(map, box, 3);
    // Interior boxes only (box entirely inside the sample grid).
    if (box.x1() < 0 || box.y1() < 0 || box.x2() > 11 || box.y2() > 9) continue;
    for (int64_t i = 0; i < pooled.size(); ++i) {
      CHECK(pooled[i] == doctest::Approx(0.7).epsilon(1e-12));
    }
  }
}

TEST_CASE("K=1 over the whole aligned map equals the global mean") {
  std::mt19937_64 rng(4);
  Tensor<double> map = random_tensor(rng, {6, 6, 1});
  BoundingBox box = BoundingBox::from_corners(0, 0, 5, 5);
  Tensor<double> pooled = prpool_forward(map, box, 1);
  // Oracle: mean of per-cell bilinear means over the 5x5 whole cells.
  double acc = 0;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      acc += 0.25 * (map.at(y, x, 0) + map.at(y, x + 1, 0) +
                     map.at(y + 1, x, 0) + map.at(y + 1, x + 1, 0));
    }
  }
  CHECK(pooled[0] == doctest::Approx(acc / 25.0).epsilon(1e-12));
}

TEST_CASE("degenerate boxes are rejected") {
  Tensor<double> map({4, 4, 1});
  CHECK_THROWS_AS(prpool_forward(map, BoundingBox(2, 2, 0, 1), 2), Error);
  CHECK_THROWS_AS(prpool_forward(map, BoundingBox(2, 2, 1, 1e-9), 2), Error);
  CHECK_THROWS_AS(prpool_forward(map, BoundingBox(2, 2, 1, 1), 0), Error);
}

TEST_CASE("box gradients match finite differences") {
  std::mt19937_64 rng(5);
  Tensor<double> map = random_tensor(rng, {9, 9, 2});
  const int k = 3;
  const std::vector<BoundingBox> boxes = {
      {4.0, 4.0, 3.0, 2.0},
      {2.3, 5.1, 4.7, 3.9},
      {4.5, 4.5, 9.5, 9.5},   // larger than the map: zero-padding region
      {0.7, 1.1, 2.2, 1.8},   // near the border
  };
  for (const auto& box : boxes) {
    Tensor<double> proj = random_tensor(rng, {k, k, 2});
    auto scalar = [&](const TensorD& b) {
      Tensor<double> pooled = prpool_forward(
          map, BoundingBox(b[0], b[1], b[2], b[3]), k);
      double s = 0;
      for (int64_t i = 0; i < pooled.size(); ++i) s += pooled[i] * proj[i];
      return s;
    };
    TensorD b0({4}, {box.cx, box.cy, box.w, box.h});
    TensorD fd = finite_diff(scalar, b0, 1e-6);

    auto bv = Var<double>::leaf(b0, true);
    auto pooled = prpool_op(Var<double>::constant(map), bv, k);
    auto s = dot(flatten(pooled),
                 Var<double>::constant(proj.reshaped({k * k * 2})));
    TensorD g = backprop(s, {bv})[0];
    INFO("box " << box.cx << "," << box.cy << "," << box.w << "," << box.h);
    CHECK(rel_err(g, fd) < 1e-4);
  }
}

TEST_CASE("map gradient matches finite differences") {
  std::mt19937_64 rng(6);
  Tensor<double> map = random_tensor(rng, {5, 5, 1});
  BoundingBox box(2.2, 2.7, 3.1, 2.4);
  const int k = 2;
  Tensor<double> proj = random_tensor(rng, {k, k, 1});

  auto scalar = [&](const TensorD& m) {
    Tensor<double> pooled = prpool_forward(m, box, k);
    double s = 0;
    for (int64_t i = 0; i < pooled.size(); ++i) s += pooled[i] * proj[i];
    return s;
  };
  TensorD fd = finite_diff(scalar, map, 1e-6);

  auto mv = Var<double>::leaf(map, true);
  auto bv = Var<double>::constant(TensorD({4}, {box.cx, box.cy, box.w, box.h}));
  auto pooled = prpool_op(mv, bv, k);
  auto s = dot(flatten(pooled), Var<double>::constant(proj.reshaped({k * k})));
  TensorD g = backprop(s, {mv})[0];
  CHECK(rel_err(g, fd) < 1e-6);
}

TEST_CASE("translation consistency under integer shifts") {
  std::mt19937_64 rng(7);
  Tensor<double> map = random_tensor(rng, {12, 12, 1});
  // Shifted copy: content moved by (+2, +3) with zeros rolled in.
  Tensor<double> shifted({12, 12, 1});
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      const int si = i - 3, sj = j - 2;
      if (si >= 0 && si < 12 && sj >= 0 && sj < 12) {
        shifted.at(i, j, 0) = map.at(si, sj, 0);
      }
    }
  }
  BoundingBox box(4.3, 4.9, 3.7, 2.9);  // interior, away from borders
  BoundingBox moved(box.cx + 2, box.cy + 3, box.w, box.h);
  Tensor<double> a = prpool_forward(map, box, 3);
  Tensor<double> b = prpool_forward(shifted, moved, 3);
  CHECK(rel_err(b, a) < 1e-12);
}

TEST_CASE("pooled output is continuous in the box coordinates") {
  std::mt19937_64 rng(8);
  Tensor<double> map = random_tensor(rng, {9, 9, 1});
  BoundingBox box(4.1, 3.9, 3.3, 3.8);
  const int k = 2;
  const double delta = 1e-3;
  Tensor<double> base = prpool_forward(map, box, k);

  // Analytic gradient of the sum of bins w.r.t. cx.
  auto bv = Var<double>::leaf(TensorD({4}, {box.cx, box.cy, box.w, box.h}),
                              true);
  auto pooled = prpool_op(Var<double>::constant(map), bv, k);
  TensorD g = backprop(sum(pooled), {bv})[0];

  Tensor<double> moved =
      prpool_forward(map, BoundingBox(box.cx + delta, box.cy, box.w, box.h), k);
  double diff = 0;
  for (int64_t i = 0; i < base.size(); ++i) diff += moved[i] - base[i];
  CHECK(diff == doctest::Approx(g[0] * delta).epsilon(5e-3));
}

TEST_CASE("prpool is first-order only: create_graph sweeps reject it") {
  // A create_graph sweep whose incoming gradient is itself differentiable
  // (the double-backprop pattern) cannot pass through prpool.
  std::mt19937_64 rng(9);
  Tensor<double> map = random_tensor(rng, {6, 6, 1});
  auto bv = Var<double>::leaf(TensorD({4}, {2.5, 2.5, 2.0, 2.0}), true);
  auto pooled = flatten(prpool_op(Var<double>::constant(map), bv, 2));
  auto u = Var<double>::leaf(pooled.value(), true);
  CHECK_THROWS_AS(backprop_vars(dot(pooled, u), {bv}, /*create_graph=*/true),
                  Error);
  // With a constant seed the same sweep degrades gracefully to values.
  auto grads = backprop_vars(sum(pooled), {bv}, /*create_graph=*/true);
  CHECK(grads[0].size() == 4);
}

TEST_CASE("box encode/decode") {
  BoundingBox b(10, 20, 4, 8);
  BoundingBox rt = box_decode(box_encode(b));
  CHECK(rt.cx == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(rt.cy == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(rt.w == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(rt.h == doctest::Approx(8.0).epsilon(1e-9));

  auto e = box_encode(BoundingBox(0, 0, 1, 1));
  for (double v : e) CHECK(v == doctest::Approx(0.0));

  // log-width ordering is preserved.
  CHECK(box_encode(BoundingBox(0, 0, 2, 1))[2] <
        box_encode(BoundingBox(0, 0, 5, 1))[2]);

  CHECK_THROWS_AS(box_encode(BoundingBox(0, 0, -1, 1)), Error);
  CHECK_THROWS_AS(
      box_decode({0.0, 0.0, std::numeric_limits<double>::infinity(), 0.0}),
      Error);
}

TEST_CASE("corner conversion is lossless") {
  BoundingBox b = BoundingBox::from_corners(1.25, -2.5, 7.75, 9.5);
  CHECK(b.x1() == doctest::Approx(1.25));
  CHECK(b.y1() == doctest::Approx(-2.5));
  CHECK(b.x2() == doctest::Approx(7.75));
  CHECK(b.y2() == doctest::Approx(9.5));
}
