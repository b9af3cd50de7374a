#include "atom/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "atom/common.hpp"

namespace fs = std::filesystem;

namespace atom {

void write_ppm(const std::string& path, const TensorF& img) {
  check(img.rank() == 3 && img.shape()[2] == 3,
        "write_ppm: image must be [H, W, 3]");
  const int h = img.shape()[0], w = img.shape()[1];
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot write image: ", path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::string bytes;
  bytes.reserve(static_cast<size_t>(h) * w * 3);
  for (int64_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img[i], 0.0f, 1.0f);
    bytes.push_back(static_cast<char>(std::lround(v * 255.0f)));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(f.good(), "write failed for image: ", path);
}

TensorF read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open image: ", path);
  std::string magic;
  f >> magic;
  check(magic == "P6", "unsupported image format '", magic, "' in ", path);
  int w = 0, h = 0, maxval = 0;
  // Skip whitespace and '#' comment lines between header fields.
  auto next_int = [&]() {
    int c = f.get();
    while (c == '#' || std::isspace(c)) {
      if (c == '#') {
        while (c != '\n' && c != EOF) c = f.get();
      }
      c = f.get();
    }
    f.unget();
    int v;
    f >> v;
    return v;
  };
  w = next_int();
  h = next_int();
  maxval = next_int();
  check(w > 0 && h > 0, "bad image dimensions in ", path);
  check(maxval == 255, "unsupported maxval ", maxval, " in ", path);
  f.get();  // single whitespace after header
  std::vector<char> bytes(static_cast<size_t>(w) * h * 3);
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(f.gcount() == static_cast<std::streamsize>(bytes.size()),
        "truncated image data in ", path);
  TensorF img({h, w, 3});
  for (int64_t i = 0; i < img.size(); ++i) {
    img[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0f;
  }
  return img;
}

void save_sequence(const std::string& dir, const Sequence& seq) {
  check(seq.frames.size() == seq.ground_truth.size(),
        "save_sequence: ", seq.frames.size(), " frames vs ",
        seq.ground_truth.size(), " ground-truth boxes");
  fs::create_directories(dir);
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%08zu.ppm", i + 1);
    write_ppm((fs::path(dir) / name).string(), seq.frames[i]);
  }
  std::ofstream gt(fs::path(dir) / "groundtruth.txt");
  check(gt.good(), "cannot write ground truth in ", dir);
  for (const auto& b : seq.ground_truth) {
    char line[128];
    std::snprintf(line, sizeof(line), "%.4f,%.4f,%.4f,%.4f\n", b.x1(), b.y1(),
                  b.w, b.h);
    gt << line;
  }
}

Sequence load_sequence(const std::string& dir) {
  const fs::path gt_path = fs::path(dir) / "groundtruth.txt";
  check(fs::exists(gt_path), "missing ground-truth file: ", gt_path.string());

  Sequence seq;
  seq.name = fs::path(dir).filename().string();

  std::ifstream gt(gt_path);
  std::string line;
  int line_no = 0;
  while (std::getline(gt, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double x, y, w, h;
    if (!(ss >> x >> y >> w >> h)) {
      fail("malformed ground-truth line ", line_no, " in ", gt_path.string(),
           ": '", line, "'");
    }
    seq.ground_truth.push_back(BoundingBox::from_xywh(x, y, w, h));
  }

  std::vector<fs::path> frame_paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ppm") frame_paths.push_back(entry.path());
  }
  std::sort(frame_paths.begin(), frame_paths.end());
  for (const auto& p : frame_paths) seq.frames.push_back(read_ppm(p.string()));

  check(seq.frames.size() == seq.ground_truth.size(), "sequence ", dir, ": ",
        seq.frames.size(), " frames but ", seq.ground_truth.size(),
        " ground-truth lines");
  check(!seq.frames.empty(), "sequence ", dir, " is empty");
  return seq;
}

}  // namespace atom
