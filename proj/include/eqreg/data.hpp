#pragma once
// Datasets: synthetic C4 tasks, IDX (MNIST) ingestion, orbit expansion.

#include "eqreg/group.hpp"
#include "eqreg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eqreg {

struct Dataset {
  std::vector<LabeledSample> samples;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::size_t num_classes = 0;

  std::size_t size() const { return samples.size(); }
  std::size_t input_dim() const { return height * width * channels; }
};

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), byte_offset(offset) {}
  std::size_t byte_offset;
};

inline VectorXd one_hot(std::size_t k, std::size_t n) {
  VectorXd v = VectorXd::Zero(static_cast<Eigen::Index>(n));
  v[static_cast<Eigen::Index>(k)] = 1.0;
  return v;
}

inline std::size_t argmax(const VectorXd& v) {
  Eigen::Index k = 0;
  v.maxCoeff(&k);
  return static_cast<std::size_t>(k);
}

namespace detail {

// Single-channel h x h image rotated by the C4 generator: (r, c) -> (c, h-1-r).
inline VectorXd rotate90(const VectorXd& img, std::size_t h) {
  VectorXd out(img.size());
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < h; ++c)
      out[static_cast<Eigen::Index>(c * h + (h - 1 - r))] = img[static_cast<Eigen::Index>(r * h + c)];
  return out;
}

inline double block_mean(const VectorXd& img, std::size_t h, std::size_t r0, std::size_t c0, std::size_t n) {
  double s = 0.0;
  for (std::size_t r = r0; r < r0 + n; ++r)
    for (std::size_t c = c0; c < c0 + n; ++c) s += img[static_cast<Eigen::Index>(r * h + c)];
  return s / static_cast<double>(n * n);
}

inline double border_mean(const VectorXd& img, std::size_t h) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < h; ++c)
      if (r == 0 || c == 0 || r == h - 1 || c == h - 1) {
        s += img[static_cast<Eigen::Index>(r * h + c)];
        ++n;
      }
  return s / static_cast<double>(n);
}

inline VectorXd random_image(std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorXd img(static_cast<Eigen::Index>(h * h));
  for (Eigen::Index k = 0; k < img.size(); ++k) img[k] = u(rng);
  return img;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const char* what) {
  if (off + 4 > b.size()) throw FormatError(std::string("truncated ") + what, b.size());
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

inline void write_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v >> 24));
  b.push_back(static_cast<unsigned char>(v >> 16));
  b.push_back(static_cast<unsigned char>(v >> 8));
  b.push_back(static_cast<unsigned char>(v));
}

inline std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Mean intensity of the centre 2x2 block, averaged over the four rotations
/// of the image, minus the mean intensity of the border ring.
inline double center_minus_border(const VectorXd& img, std::size_t h) {
  const std::size_t r0 = (h - 1) / 2;
  const std::size_t n = std::min<std::size_t>(2, h);
  const std::size_t s0 = std::min(r0, h - n);
  double acc = 0.0;
  VectorXd cur = img;
  for (int k = 0; k < 4; ++k) {
    acc += detail::block_mean(cur, h, s0, s0, n);
    cur = detail::rotate90(cur, h);
  }
  return acc / 4.0 - detail::border_mean(img, h);
}

/// Index of the brightest corner quadrant: 0 top-left, 1 top-right,
/// 2 bottom-right, 3 bottom-left. The middle row/column of odd grids is ignored.
inline std::size_t brightest_quadrant(const VectorXd& img, std::size_t h) {
  const std::size_t q = h / 2;
  const std::size_t off = h - q;
  const double m[4] = {detail::block_mean(img, h, 0, 0, q), detail::block_mean(img, h, 0, off, q),
                       detail::block_mean(img, h, off, off, q), detail::block_mean(img, h, off, 0, q)};
  return static_cast<std::size_t>(std::max_element(m, m + 4) - m);
}

/// h x h single-channel images with iid uniform pixels; label 1 iff the
/// rotation-averaged centre block is brighter than the border ring.
inline Dataset synth_invariant_task(std::size_t n, std::size_t h, std::uint64_t seed) {
  if (h < 2) throw std::invalid_argument("synth_invariant_task: h must be at least 2");
  std::mt19937_64 rng(seed);
  Dataset d{{}, h, h, 1, 2};
  d.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    VectorXd img = detail::random_image(h, rng);
    const std::size_t label = center_minus_border(img, h) > 0.0 ? 1 : 0;
    d.samples.push_back({std::move(img), one_hot(label, 2)});
  }
  return d;
}

/// Orientation-dependent control task: uniform noise plus a +2 offset on one
/// randomly chosen quadrant; the label is the brightest quadrant.
inline Dataset synth_asymmetric_task(std::size_t n, std::size_t h, std::uint64_t seed) {
  if (h < 2) throw std::invalid_argument("synth_asymmetric_task: h must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 3);
  const std::size_t q = h / 2, off = h - q;
  const std::size_t r0[4] = {0, 0, off, off}, c0[4] = {0, off, off, 0};
  Dataset d{{}, h, h, 1, 4};
  d.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    VectorXd img = detail::random_image(h, rng);
    const int b = pick(rng);
    for (std::size_t r = 0; r < q; ++r)
      for (std::size_t c = 0; c < q; ++c) img[(r0[b] + r) * h + c0[b] + c] += 2.0;
    const std::size_t label = brightest_quadrant(img, h);
    d.samples.push_back({std::move(img), one_hot(label, 4)});
  }
  return d;
}

/// Parses an IDX image file (magic 0x00000803) and label file (magic
/// 0x00000801). Pixels are scaled to [0, 1]; targets are 10-class one-hot.
/// A limit above the file count is clamped and reported through `warning`
/// (or standard error when `warning` is null).
inline Dataset read_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit,
                        std::string* warning = nullptr) {
  const auto img = detail::slurp(images_path);
  const auto lab = detail::slurp(labels_path);
  const std::uint32_t im_magic = detail::read_be32(img, 0, "image header");
  if (im_magic != 0x00000803u) throw FormatError("bad image magic number", 0);
  const std::uint32_t lb_magic = detail::read_be32(lab, 0, "label header");
  if (lb_magic != 0x00000801u) throw FormatError("bad label magic number", 0);
  const std::size_t count = detail::read_be32(img, 4, "image header");
  const std::size_t rows = detail::read_be32(img, 8, "image header");
  const std::size_t cols = detail::read_be32(img, 12, "image header");
  const std::size_t lcount = detail::read_be32(lab, 4, "label header");
  if (count != lcount)
    throw FormatError("image/label count mismatch (" + std::to_string(count) + " vs " + std::to_string(lcount) + ")", 4);
  std::size_t n = limit;
  if (limit > count) {
    const std::string msg = "read_idx: limit " + std::to_string(limit) + " exceeds file count " + std::to_string(count) +
                            "; returning " + std::to_string(count) + " samples";
    if (warning) *warning = msg;
    else std::cerr << "warning: " << msg << '\n';
    n = count;
  }
  const std::size_t px = rows * cols;
  if (16 + n * px > img.size()) throw FormatError("truncated image payload", img.size());
  if (8 + n > lab.size()) throw FormatError("truncated label payload", lab.size());
  Dataset d{{}, rows, cols, 1, 10};
  d.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    VectorXd x(static_cast<Eigen::Index>(px));
    for (std::size_t p = 0; p < px; ++p) x[static_cast<Eigen::Index>(p)] = img[16 + k * px + p] / 255.0;
    const std::size_t y = lab[8 + k];
    if (y >= 10) throw FormatError("label out of range", 8 + k);
    d.samples.push_back({std::move(x), one_hot(y, 10)});
  }
  return d;
}

/// Serializes an image dataset back to IDX byte streams (images, labels).
inline std::pair<std::vector<unsigned char>, std::vector<unsigned char>> to_idx_bytes(const Dataset& d) {
  std::vector<unsigned char> img, lab;
  detail::write_be32(img, 0x00000803u);
  detail::write_be32(img, static_cast<std::uint32_t>(d.size()));
  detail::write_be32(img, static_cast<std::uint32_t>(d.height));
  detail::write_be32(img, static_cast<std::uint32_t>(d.width));
  detail::write_be32(lab, 0x00000801u);
  detail::write_be32(lab, static_cast<std::uint32_t>(d.size()));
  for (const auto& s : d.samples) {
    for (Eigen::Index p = 0; p < s.input.size(); ++p)
      img.push_back(static_cast<unsigned char>(std::lround(s.input[p] * 255.0)));
    lab.push_back(static_cast<unsigned char>(argmax(s.target)));
  }
  return {std::move(img), std::move(lab)};
}

/// Orbit expansion {(rho_in(g) x, rho_out(g) y)}: group element outer,
/// sample inner.
inline Dataset symmetrize(const Dataset& d, const Representation& rho_in, const Representation& rho_out) {
  Dataset out = d;
  out.samples.clear();
  out.samples.reserve(d.size() * rho_in.group().order());
  for (std::size_t g = 0; g < rho_in.group().order(); ++g)
    for (const auto& s : d.samples) out.samples.push_back({rho_in.apply(g, s.input), rho_out.apply(g, s.target)});
  return out;
}

}  // namespace eqreg
