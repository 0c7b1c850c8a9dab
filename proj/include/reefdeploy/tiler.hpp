#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "reefdeploy/core.hpp"

namespace reefdeploy {

// One cell of the patch grid in frame pixel coordinates.
struct PatchRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  int index = 0;  // row * cols + col

  bool operator==(const PatchRect&) const = default;
};

// Row-major flat index of a grid cell.
inline int patch_index(int row, int col, const GridSpec& grid) {
  validate(grid);
  if (row < 0 || row >= grid.rows || col < 0 || col >= grid.cols) {
    throw std::out_of_range("patch (" + std::to_string(row) + "," + std::to_string(col) +
                            ") outside " + std::to_string(grid.rows) + "x" +
                            std::to_string(grid.cols) + " grid");
  }
  return row * grid.cols + col;
}

inline std::pair<int, int> patch_row_col(int index, const GridSpec& grid) {
  validate(grid);
  if (index < 0 || index >= grid.patch_count()) {
    throw std::out_of_range("patch index " + std::to_string(index) + " outside grid");
  }
  return {index / grid.cols, index % grid.cols};
}

// Divides a frame into rows x cols equally sized rectangles in row-major
// order. All patches are floor(W/cols) x floor(H/rows); residual pixels on
// the right and bottom edges are excluded so classifier backends always see
// uniform patch dimensions.
inline std::vector<PatchRect> tile(int frame_w, int frame_h, const GridSpec& grid) {
  validate(grid);
  const int patch_w = frame_w / grid.cols;
  const int patch_h = frame_h / grid.rows;
  if (patch_w <= 0 || patch_h <= 0) {
    throw std::invalid_argument("frame " + std::to_string(frame_w) + "x" +
                                std::to_string(frame_h) + " too small for a " +
                                std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                                " grid (patch dimension would be 0)");
  }
  std::vector<PatchRect> rects;
  rects.reserve(grid.patch_count());
  for (int row = 0; row < grid.rows; ++row) {
    for (int col = 0; col < grid.cols; ++col) {
      rects.push_back(PatchRect{col * patch_w, row * patch_h, patch_w, patch_h,
                                row * grid.cols + col});
    }
  }
  return rects;
}

}  // namespace reefdeploy
