#include <cmath>
#include <filesystem>
#include <random>

#include "cpima/datagen.hpp"
#include "doctest.h"

using namespace cpima;

TEST_CASE("circle branch frequencies match the tree probabilities") {
  std::mt19937_64 rng(3);
  CircleDataset ds = generate_circles(10000, 16, 16, rng);
  int red = 0, red_small = 0, near = 0;
  double r_red_small = 0.0;
  int n_red_small = 0;
  for (const CircleLabels& l : ds.labels) {
    if (l.hue == 0) {
      ++red;
      if (l.radius_branch == 0) {
        ++red_small;
        r_red_small += l.r;
        ++n_red_small;
      }
    }
    if (l.shift_branch == 0) ++near;
  }
  CHECK(std::abs(red / 10000.0 - 0.5) < 0.015);
  CHECK(std::abs(static_cast<double>(red_small) / red - 0.6) < 0.02);
  CHECK(std::abs(near / 10000.0 - 0.7) < 0.014);  // 3 binomial SE
  CHECK(std::abs(r_red_small / n_red_small - 4.0) < 0.02);
}

TEST_CASE("circle branch means cover every leaf of the tree") {
  std::mt19937_64 rng(5);
  CircleDataset ds = generate_circles(20000, 16, 16, rng);
  double rsum[2][2] = {{0, 0}, {0, 0}};
  int rcnt[2][2] = {{0, 0}, {0, 0}};
  double ssum[2][2] = {{0, 0}, {0, 0}};
  int scnt[2][2] = {{0, 0}, {0, 0}};
  for (const CircleLabels& l : ds.labels) {
    rsum[l.hue][l.radius_branch] += l.r;
    ++rcnt[l.hue][l.radius_branch];
    ssum[l.radius_branch][l.shift_branch] += l.s;
    ++scnt[l.radius_branch][l.shift_branch];
  }
  const double rmean[2][2] = {{4, 5}, {6, 7}};
  for (int h = 0; h < 2; ++h)
    for (int b = 0; b < 2; ++b)
      CHECK(std::abs(rsum[h][b] / rcnt[h][b] - rmean[h][b]) < 0.03);
  const double smean[2][2] = {{-6, -3}, {0, 3}};
  for (int b = 0; b < 2; ++b)
    for (int f = 0; f < 2; ++f)
      CHECK(std::abs(ssum[b][f] / scnt[b][f] - smean[b][f]) < 0.06);
}

TEST_CASE("circle images are valid and hue renders the right channel") {
  std::mt19937_64 rng(7);
  CircleDataset ds = generate_circles(50, 16, 16, rng);
  for (size_t i = 0; i < ds.images.size(); ++i) {
    const Tensor& img = ds.images[i];
    REQUIRE(img.shape == Shape{16, 16, 3});
    double mass[3] = {0, 0, 0};
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) {
          double v = img.at({y, x, c});
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          mass[c] += v;
        }
    CHECK(mass[1] == 0.0);  // green never used
    if (ds.labels[i].hue == 0) {
      CHECK(mass[0] > 1.0);
      CHECK(mass[2] == 0.0);
    } else {
      CHECK(mass[2] > 1.0);
      CHECK(mass[0] == 0.0);
    }
    // disc area scales with radius squared (loose sanity band)
    double scale = 16.0 / 28.0;
    double expect = std::numbers::pi * std::pow(ds.labels[i].r * scale, 2);
    CHECK(mass[0] + mass[2] > 0.5 * expect);
    CHECK(mass[0] + mass[2] < 1.8 * expect);
  }
}

TEST_CASE("circle generation is deterministic and validates inputs") {
  std::mt19937_64 a(11), b(11);
  CircleDataset d1 = generate_circles(20, 16, 16, a);
  CircleDataset d2 = generate_circles(20, 16, 16, b);
  for (size_t i = 0; i < 20; ++i) {
    CHECK(d1.labels[i].r == d2.labels[i].r);
    CHECK(d1.images[i].data == d2.images[i].data);
  }
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(generate_circles(0, 16, 16, rng), std::invalid_argument);
  CHECK_THROWS_AS(generate_circles(5, 4, 16, rng), std::invalid_argument);
}

TEST_CASE("curves: noiseless samples are exactly piecewise linear") {
  std::mt19937_64 rng(13);
  auto ds = generate_curves(50, 100, rng, 0.0);
  for (const CurveSample& s : ds) {
    for (int g = 0; g < 100; ++g) {
      double t = g / 99.0;
      double want = s.intercept + s.slope1 * std::min(t, s.breakpoint) +
                    s.slope2 * std::max(0.0, t - s.breakpoint);
      CHECK(s.curve[g] == doctest::Approx(want).epsilon(1e-14));
      CHECK(s.curve[g] >= 0.0);
      CHECK(s.curve[g] <= 1.0);
    }
    if (s.type == 0) {
      CHECK(s.breakpoint >= 0.2);
      CHECK(s.breakpoint <= 0.3);
    } else {
      CHECK(s.breakpoint >= 0.5);
      CHECK(s.breakpoint <= 0.6);
    }
  }
}

TEST_CASE("curves: type frequency and value bounds with noise") {
  std::mt19937_64 rng(17);
  auto ds = generate_curves(10000, 100, rng);
  int a = 0;
  for (const CurveSample& s : ds) {
    if (s.type == 0) ++a;
    for (double v : s.curve.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(std::abs(a / 10000.0 - 0.5) < 0.015);
}

TEST_CASE("binary tensor round-trip") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t({3, 4, 2});
  for (double& v : t.data) v = nd(rng);
  std::string path = "/tmp/cpima_test_tensor.bin";
  write_tensor(path, t);
  Tensor r = read_tensor(path);
  CHECK(r.shape == t.shape);
  CHECK(r.data == t.data);
  CHECK_THROWS_AS(read_tensor("/tmp/cpima_no_such_file.bin"),
                  std::runtime_error);
}

TEST_CASE("dataset save/load round-trips") {
  std::mt19937_64 rng(23);
  std::string cdir = "/tmp/cpima_test_circles";
  std::filesystem::remove_all(cdir);
  CircleDataset ds = generate_circles(12, 16, 16, rng);
  save_circles(ds, cdir);
  CircleDataset back = load_circles(cdir);
  REQUIRE(back.images.size() == 12);
  for (size_t i = 0; i < 12; ++i) {
    CHECK(back.images[i].data == ds.images[i].data);
    CHECK(back.labels[i].hue == ds.labels[i].hue);
    CHECK(back.labels[i].radius_branch == ds.labels[i].radius_branch);
    CHECK(back.labels[i].shift_branch == ds.labels[i].shift_branch);
  }

  std::string kdir = "/tmp/cpima_test_curves";
  std::filesystem::remove_all(kdir);
  auto cv = generate_curves(9, 50, rng);
  save_curves(cv, kdir);
  auto cb = load_curves(kdir);
  REQUIRE(cb.size() == 9);
  for (size_t i = 0; i < 9; ++i) {
    CHECK(cb[i].curve.data == cv[i].curve.data);
    CHECK(cb[i].image.data == cv[i].image.data);
    CHECK(cb[i].type == cv[i].type);
    CHECK(cb[i].breakpoint == doctest::Approx(cv[i].breakpoint).epsilon(1e-5));
  }
}
