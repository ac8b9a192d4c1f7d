#include "bb/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace bb {

FormatError::FormatError(const std::string& msg, std::size_t off)
    : std::runtime_error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.sample_shape = sample_shape;
  out.classes = classes;
  const std::size_t ss = sample_size();
  out.images.reserve(indices.size() * ss);
  out.labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    out.images.insert(out.images.end(), images.begin() + static_cast<std::ptrdiff_t>(idx * ss),
                      images.begin() + static_cast<std::ptrdiff_t>((idx + 1) * ss));
    out.labels.push_back(labels[idx]);
  }
  return out;
}

Dataset Dataset::take(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return subset(idx);
}

namespace {

std::uint32_t read_u32_be(std::istream& in, std::size_t& offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw FormatError("truncated IDX header", offset);
  offset += 4;
  return (std::uint32_t{buf[0]} << 24) | (std::uint32_t{buf[1]} << 16) |
         (std::uint32_t{buf[2]} << 8) | std::uint32_t{buf[3]};
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       bool standardize) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("cannot open " + images_path, 0);
  std::size_t off = 0;
  const std::uint32_t magic = read_u32_be(img, off);
  if (magic != 0x00000803u)
    throw FormatError("bad image magic in " + images_path, off - 4);
  const std::uint32_t n = read_u32_be(img, off);
  const std::uint32_t rows = read_u32_be(img, off);
  const std::uint32_t cols = read_u32_be(img, off);
  const std::size_t count = std::size_t{n} * rows * cols;
  std::vector<unsigned char> raw(count);
  img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(img.gcount()) != count)
    throw FormatError("truncated image data in " + images_path,
                      off + static_cast<std::size_t>(img.gcount()));

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("cannot open " + labels_path, 0);
  std::size_t loff = 0;
  const std::uint32_t lmagic = read_u32_be(lab, loff);
  if (lmagic != 0x00000801u)
    throw FormatError("bad label magic in " + labels_path, loff - 4);
  const std::uint32_t ln = read_u32_be(lab, loff);
  if (ln != n)
    throw FormatError("label count " + std::to_string(ln) + " does not match image count " +
                          std::to_string(n),
                      loff);
  std::vector<unsigned char> lraw(ln);
  lab.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(ln));
  if (static_cast<std::size_t>(lab.gcount()) != ln)
    throw FormatError("truncated label data in " + labels_path,
                      loff + static_cast<std::size_t>(lab.gcount()));

  Dataset d;
  d.sample_shape = {1, rows, cols};
  d.classes = 10;
  d.images.resize(count);
  for (std::size_t i = 0; i < count; ++i) d.images[i] = raw[i] / 255.0;
  d.labels.resize(ln);
  for (std::size_t i = 0; i < ln; ++i) {
    if (lraw[i] > 9) throw FormatError("label out of range in " + labels_path, loff + i);
    d.labels[i] = lraw[i];
  }
  if (standardize) {
    double mean = 0.0;
    for (double v : d.images) mean += v;
    mean /= static_cast<double>(d.images.size());
    double var = 0.0;
    for (double v : d.images) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(d.images.size())) + 1e-12;
    for (double& v : d.images) v = (v - mean) / sd;
  }
  return d;
}

Dataset synth_dataset(std::uint64_t seed, std::size_t n, int classes, std::size_t features,
                      double margin) {
  if (classes < 1) throw std::invalid_argument("synth_dataset: need at least one class");
  if (n < static_cast<std::size_t>(classes))
    throw std::invalid_argument("synth_dataset: need at least one sample per class");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Random unit directions as class centers, scaled by the margin.
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(classes));
  for (auto& c : centers) {
    c.resize(features);
    double norm = 0.0;
    for (double& v : c) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm) + 1e-12;
    for (double& v : c) v = v / norm * margin;
  }
  Dataset d;
  d.sample_shape = {features};
  d.classes = classes;
  d.images.resize(n * features);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
    d.labels[i] = cls;
    for (std::size_t f = 0; f < features; ++f)
      d.images[i * features + f] = centers[static_cast<std::size_t>(cls)][f] + gauss(rng);
  }
  return d;
}

}  // namespace bb
