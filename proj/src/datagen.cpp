#include "cpima/datagen.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cpima {

namespace {

constexpr double kRefCanvas = 28.0;

// un-normalized rasterization helper: soft-edged disc coverage
double coverage(double dist, double radius) {
  return std::clamp(radius + 0.5 - dist, 0.0, 1.0);
}

Tensor rasterize_circle(int height, int width, double radius_px, double cx,
                        double cy, int hue) {
  Tensor img({height, width, 3});
  int ch = hue == 0 ? 0 : 2;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      double a = coverage(std::sqrt(dx * dx + dy * dy), radius_px);
      if (a > 0.0) img.at({y, x, ch}) = a;
    }
  return img;
}

}  // namespace

CircleDataset generate_circles(int n, int height, int width,
                               std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("generate_circles: n must be >= 1");
  if (height < 8 || width < 8)
    throw std::invalid_argument("generate_circles: image must be at least 8x8");
  const double radius_mean[2][2] = {{4.0, 5.0}, {6.0, 7.0}};  // [hue][branch]
  const double shift_mean[2] = {-6.0, 0.0};  // small/large radius branch base
  const double shift_far_offset = 3.0;
  const double radius_std = std::sqrt(0.25), shift_std = std::sqrt(0.5);
  const double scale = std::min(height, width) / kRefCanvas;

  CircleDataset ds;
  ds.height = height;
  ds.width = width;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    CircleLabels lab;
    lab.hue = u(rng) < 0.5 ? 0 : 1;
    lab.radius_branch = u(rng) < 0.6 ? 0 : 1;
    lab.shift_branch = u(rng) < 0.7 ? 0 : 1;
    double base = shift_mean[lab.radius_branch] +
                  (lab.shift_branch == 1 ? shift_far_offset : 0.0);
    for (;;) {
      lab.r = radius_mean[lab.hue][lab.radius_branch] + radius_std * nd(rng);
      lab.s = base + shift_std * nd(rng);
      double radius_px = lab.r * scale;
      double cx = width / 2.0 + lab.s * scale, cy = height / 2.0;
      if (radius_px > 0.5 && cx - radius_px >= 0.0 &&
          cx + radius_px <= width && cy - radius_px >= 0.0 &&
          cy + radius_px <= height)
        break;
      ++ds.rejections;
    }
    ds.images.push_back(rasterize_circle(height, width, lab.r * scale,
                                         width / 2.0 + lab.s * scale,
                                         height / 2.0, lab.hue));
    ds.labels.push_back(lab);
  }
  return ds;
}

std::vector<CurveSample> generate_curves(int n, int grid_len,
                                         std::mt19937_64& rng,
                                         double noise_std) {
  if (n < 1) throw std::invalid_argument("generate_curves: n must be >= 1");
  if (grid_len < 4)
    throw std::invalid_argument("generate_curves: grid too short");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<CurveSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    CurveSample s;
    s.type = u(rng) < 0.5 ? 0 : 1;
    if (s.type == 0) {
      s.breakpoint = 0.2 + 0.1 * u(rng);
      s.slope1 = kCurveSlope1A;
      s.slope2 = kCurveSlope2A;
    } else {
      s.breakpoint = 0.5 + 0.1 * u(rng);
      s.slope1 = kCurveSlope1B;
      s.slope2 = kCurveSlope2B;
    }
    s.intercept = kCurveIntercept;
    s.curve = Tensor({grid_len});
    for (int g = 0; g < grid_len; ++g) {
      double t = static_cast<double>(g) / (grid_len - 1);
      double v = s.intercept + s.slope1 * std::min(t, s.breakpoint) +
                 s.slope2 * std::max(0.0, t - s.breakpoint);
      v += noise_std * nd(rng);
      s.curve[g] = std::clamp(v, 0.0, 1.0);
    }
    // 4x4 texture: type A brightens left-to-right, type B top-to-bottom
    s.image = Tensor({16});
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        double v = s.type == 0 ? x / 3.0 : y / 3.0;
        v += noise_std * nd(rng);
        s.image[4 * y + x] = std::clamp(v, 0.0, 1.0);
      }
    out.push_back(std::move(s));
  }
  return out;
}

void write_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_tensor: cannot open " + path);
  f.write("CPTNSR01", 8);
  int64_t nd = t.ndim();
  f.write(reinterpret_cast<const char*>(&nd), 8);
  for (int d : t.shape) {
    int64_t v = d;
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write_tensor: short write to " + path);
}

Tensor read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_tensor: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "CPTNSR01")
    throw std::runtime_error("read_tensor: bad magic in " + path);
  int64_t nd = 0;
  f.read(reinterpret_cast<char*>(&nd), 8);
  if (!f || nd < 0 || nd > 8)
    throw std::runtime_error("read_tensor: bad rank in " + path);
  Shape s;
  for (int64_t i = 0; i < nd; ++i) {
    int64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f || v <= 0) throw std::runtime_error("read_tensor: bad dim in " + path);
    s.push_back(static_cast<int>(v));
  }
  Tensor t(s);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("read_tensor: short read from " + path);
  return t;
}

void save_circles(const CircleDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  int n = static_cast<int>(ds.images.size());
  Tensor stack({n, ds.height, ds.width, 3});
  int per = ds.height * ds.width * 3;
  for (int i = 0; i < n; ++i)
    std::copy(ds.images[static_cast<size_t>(i)].data.begin(),
              ds.images[static_cast<size_t>(i)].data.end(),
              stack.data.begin() + static_cast<long>(i) * per);
  write_tensor(dir + "/images.bin", stack);

  std::ofstream csv(dir + "/labels.csv");
  csv << "index,hue,radius_branch,shift_branch,r,s\n";
  for (int i = 0; i < n; ++i) {
    const CircleLabels& l = ds.labels[static_cast<size_t>(i)];
    csv << i << "," << l.hue << "," << l.radius_branch << ","
        << l.shift_branch << "," << l.r << "," << l.s << "\n";
  }

  nlohmann::json meta;
  meta["kind"] = "circles";
  meta["n"] = n;
  meta["height"] = ds.height;
  meta["width"] = ds.width;
  meta["rejections"] = ds.rejections;
  std::ofstream(dir + "/meta.json") << meta.dump(2) << "\n";
}

CircleDataset load_circles(const std::string& dir) {
  std::ifstream mf(dir + "/meta.json");
  if (!mf) throw std::runtime_error("load_circles: missing meta.json in " + dir);
  nlohmann::json meta = nlohmann::json::parse(mf);
  if (meta.at("kind") != "circles")
    throw std::runtime_error("load_circles: dataset kind mismatch");
  CircleDataset ds;
  ds.height = meta.at("height");
  ds.width = meta.at("width");
  ds.rejections = meta.at("rejections");
  Tensor stack = read_tensor(dir + "/images.bin");
  int n = stack.shape[0], per = ds.height * ds.width * 3;
  for (int i = 0; i < n; ++i) {
    Tensor img({ds.height, ds.width, 3});
    std::copy(stack.data.begin() + static_cast<long>(i) * per,
              stack.data.begin() + static_cast<long>(i + 1) * per,
              img.data.begin());
    ds.images.push_back(std::move(img));
  }
  std::ifstream csv(dir + "/labels.csv");
  if (!csv) throw std::runtime_error("load_circles: missing labels.csv");
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    std::istringstream is(line);
    std::string tok;
    CircleLabels l{};
    std::getline(is, tok, ',');  // index
    std::getline(is, tok, ',');
    l.hue = std::stoi(tok);
    std::getline(is, tok, ',');
    l.radius_branch = std::stoi(tok);
    std::getline(is, tok, ',');
    l.shift_branch = std::stoi(tok);
    std::getline(is, tok, ',');
    l.r = std::stod(tok);
    std::getline(is, tok, ',');
    l.s = std::stod(tok);
    ds.labels.push_back(l);
  }
  if (ds.labels.size() != ds.images.size())
    throw std::runtime_error("load_circles: label/image count mismatch");
  return ds;
}

void save_curves(const std::vector<CurveSample>& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  int n = static_cast<int>(ds.size());
  if (n == 0) throw std::invalid_argument("save_curves: empty dataset");
  int G = ds[0].curve.size();
  Tensor curves({n, G}), images({n, 16});
  for (int i = 0; i < n; ++i) {
    std::copy(ds[static_cast<size_t>(i)].curve.data.begin(),
              ds[static_cast<size_t>(i)].curve.data.end(),
              curves.data.begin() + static_cast<long>(i) * G);
    std::copy(ds[static_cast<size_t>(i)].image.data.begin(),
              ds[static_cast<size_t>(i)].image.data.end(),
              images.data.begin() + static_cast<long>(i) * 16);
  }
  write_tensor(dir + "/curves.bin", curves);
  write_tensor(dir + "/images.bin", images);
  std::ofstream csv(dir + "/labels.csv");
  csv << "index,type,breakpoint,slope1,slope2,intercept\n";
  for (int i = 0; i < n; ++i) {
    const CurveSample& s = ds[static_cast<size_t>(i)];
    csv << i << "," << s.type << "," << s.breakpoint << "," << s.slope1 << ","
        << s.slope2 << "," << s.intercept << "\n";
  }
  nlohmann::json meta;
  meta["kind"] = "curves";
  meta["n"] = n;
  meta["grid_len"] = G;
  std::ofstream(dir + "/meta.json") << meta.dump(2) << "\n";
}

std::vector<CurveSample> load_curves(const std::string& dir) {
  std::ifstream mf(dir + "/meta.json");
  if (!mf) throw std::runtime_error("load_curves: missing meta.json in " + dir);
  nlohmann::json meta = nlohmann::json::parse(mf);
  if (meta.at("kind") != "curves")
    throw std::runtime_error("load_curves: dataset kind mismatch");
  Tensor curves = read_tensor(dir + "/curves.bin");
  Tensor images = read_tensor(dir + "/images.bin");
  int n = curves.shape[0], G = curves.shape[1];
  std::vector<CurveSample> ds(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds[static_cast<size_t>(i)].curve = Tensor({G});
    std::copy(curves.data.begin() + static_cast<long>(i) * G,
              curves.data.begin() + static_cast<long>(i + 1) * G,
              ds[static_cast<size_t>(i)].curve.data.begin());
    ds[static_cast<size_t>(i)].image = Tensor({16});
    std::copy(images.data.begin() + static_cast<long>(i) * 16,
              images.data.begin() + static_cast<long>(i + 1) * 16,
              ds[static_cast<size_t>(i)].image.data.begin());
  }
  std::ifstream csv(dir + "/labels.csv");
  if (!csv) throw std::runtime_error("load_curves: missing labels.csv");
  std::string line;
  std::getline(csv, line);
  int i = 0;
  while (std::getline(csv, line) && i < n) {
    std::istringstream is(line);
    std::string tok;
    CurveSample& s = ds[static_cast<size_t>(i)];
    std::getline(is, tok, ',');
    std::getline(is, tok, ',');
    s.type = std::stoi(tok);
    std::getline(is, tok, ',');
    s.breakpoint = std::stod(tok);
    std::getline(is, tok, ',');
    s.slope1 = std::stod(tok);
    std::getline(is, tok, ',');
    s.slope2 = std::stod(tok);
    std::getline(is, tok, ',');
    s.intercept = std::stod(tok);
    ++i;
  }
  if (i != n) throw std::runtime_error("load_curves: label/curve count mismatch");
  return ds;
}

}  // namespace cpima
