#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bb/tensor.hpp"

namespace bb {

/// Raised on malformed dataset files; carries the byte offset of the problem.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, std::size_t offset);
  std::size_t offset;
};

struct Dataset {
  Shape sample_shape;            // e.g. {1, 28, 28}
  std::vector<double> images;    // row-major, one sample after another
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return numel(sample_shape); }
  Dataset subset(const std::vector<std::size_t>& indices) const;
  Dataset take(std::size_t n) const;
};

/// Reads an IDX image/label pair. Images scale to [0, 1]; optional
/// standardization subtracts the dataset mean and divides by the stddev.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       bool standardize = false);

/// Deterministic Gaussian class blobs. Class centers sit on a scaled simplex;
/// `margin` controls separation (0 gives fully overlapping classes).
Dataset synth_dataset(std::uint64_t seed, std::size_t n, int classes, std::size_t features = 16,
                      double margin = 4.0);

}  // namespace bb
