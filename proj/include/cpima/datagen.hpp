#pragma once

#include <random>
#include <string>

#include "cpima/tensor.hpp"

namespace cpima {

// Generative factors of one circle image. The three binary labels are the
// branch choices of the probability tree; r and s are the sampled radius and
// horizontal shift in 28-pixel reference units.
struct CircleLabels {
  int hue;           // 0 = red, 1 = blue
  int radius_branch; // 0 = small, 1 = large (within hue)
  int shift_branch;  // 0 = near (p=0.7), 1 = far (p=0.3)
  double r;
  double s;
};

struct CircleDataset {
  int height = 0, width = 0;
  std::vector<Tensor> images;  // each H x W x 3, values in [0,1]
  std::vector<CircleLabels> labels;
  int rejections = 0;  // redraws forced by out-of-bounds circles
};

// Probability tree: hue 0.5/0.5; radius branch 0.6/0.4 with means
// red {4, 5} / blue {6, 7} and variance 0.25; shift branch 0.7/0.3 with
// means {-6, -3} on the small-radius branch and {0, 3} on the large one,
// variance 0.5. Units are pixels on a 28x28 reference canvas, rescaled to
// the requested size; circles are rasterized with a 1-pixel soft edge.
CircleDataset generate_circles(int n, int height, int width,
                               std::mt19937_64& rng);

// Two-type synthetic piecewise-linear curves with a paired procedural image.
struct CurveSample {
  Tensor curve;  // [grid_len], values in [0,1]
  Tensor image;  // [16] flat 4x4 texture keyed to the type
  int type;      // 0 = A, 1 = B
  double breakpoint, slope1, slope2, intercept;
};

// Type A: breakpoint ~ U(0.2,0.3), slopes (2.5, 0.2); type B: breakpoint ~
// U(0.5,0.6), slopes (0.6, 1.2); intercept 0.02; additive noise sigma
// (default 0.02) clamped to [0,1]; type frequencies 0.5/0.5.
std::vector<CurveSample> generate_curves(int n, int grid_len,
                                         std::mt19937_64& rng,
                                         double noise_std = 0.02);

inline constexpr double kCurveSlope1A = 2.5, kCurveSlope2A = 0.2;
inline constexpr double kCurveSlope1B = 0.6, kCurveSlope2B = 1.2;
inline constexpr double kCurveIntercept = 0.02;

// Flat binary tensor file: 8-byte magic "CPTNSR01", int64 ndim, int64 dims,
// then row-major IEEE-754 doubles, all little-endian.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// Directory layout: images.bin [N,H,W,3] + labels.csv + meta.json.
void save_circles(const CircleDataset& ds, const std::string& dir);
CircleDataset load_circles(const std::string& dir);

// Directory layout: curves.bin [N,G] + images.bin [N,16] + labels.csv +
// meta.json.
void save_curves(const std::vector<CurveSample>& ds, const std::string& dir);
std::vector<CurveSample> load_curves(const std::string& dir);

}  // namespace cpima
