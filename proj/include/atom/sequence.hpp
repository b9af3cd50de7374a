#ifndef ATOM_SEQUENCE_HPP_
#define ATOM_SEQUENCE_HPP_

#include <string>
#include <vector>

#include "atom/box.hpp"
#include "atom/tensor.hpp"

namespace atom {

// A tracking sequence: frames as [H, W, 3] float images in [0, 1] plus one
// ground-truth box per frame.
struct Sequence {
  std::string name;
  std::vector<TensorF> frames;
  std::vector<BoundingBox> ground_truth;

  int size() const { return static_cast<int>(frames.size()); }
};

// On-disk layout: <dir>/00000001.ppm ... plus <dir>/groundtruth.txt with
// one "x,y,w,h" line per frame (top-left corner + size, pixels).
void save_sequence(const std::string& dir, const Sequence& seq);
Sequence load_sequence(const std::string& dir);

void write_ppm(const std::string& path, const TensorF& img);
TensorF read_ppm(const std::string& path);

}  // namespace atom

#endif  // ATOM_SEQUENCE_HPP_
