#pragma once

// MNIST IDX (ubyte) reader/writer and binary digit-pair regression tasks.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ftlab/error.hpp"
#include "ftlab/linalg.hpp"
#include "ftlab/random.hpp"

namespace ftlab {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

using Bytes = std::vector<std::uint8_t>;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  Bytes pixels;  // count * rows * cols, row-major per image
};

struct IdxLabels {
  std::uint32_t count = 0;
  Bytes labels;
};

// Pixels stay as bytes (60000 x 784 doubles would be ~380 MB); rows are
// scaled to [0, 1] when a task matrix is built.
struct MnistRaw {
  IdxImages images;
  IdxLabels labels;

  std::size_t size() const { return images.count; }
  std::size_t pixels_per_image() const {
    return static_cast<std::size_t>(images.rows) * images.cols;
  }
  std::uint8_t label(std::size_t i) const { return labels.labels[i]; }
};

namespace detail {

inline std::uint32_t read_be32(const Bytes& buf, std::size_t offset, const char* what) {
  if (offset + 4 > buf.size()) {
    std::ostringstream os;
    os << "idx: truncated " << what << " at byte offset " << offset << " (file has " << buf.size()
       << " bytes)";
    throw parse_error(os.str());
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void write_be32(Bytes& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v >> 24));
  buf.push_back(static_cast<std::uint8_t>(v >> 16));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
  buf.push_back(static_cast<std::uint8_t>(v));
}

inline void check_magic(std::uint32_t got, std::uint32_t want) {
  if (got != want) {
    std::ostringstream os;
    os << "idx: bad magic 0x" << std::hex << got << ", expected 0x" << want;
    throw parse_error(os.str());
  }
}

inline void check_payload(const Bytes& buf, std::size_t header, std::size_t payload) {
  if (buf.size() < header + payload) {
    std::ostringstream os;
    os << "idx: truncated payload at byte offset " << buf.size() << ", expected " << header + payload
       << " bytes";
    throw parse_error(os.str());
  }
}

}  // namespace detail

inline IdxImages parse_idx_images(const Bytes& buf) {
  detail::check_magic(detail::read_be32(buf, 0, "magic"), kIdxImagesMagic);
  IdxImages out;
  out.count = detail::read_be32(buf, 4, "image count");
  out.rows = detail::read_be32(buf, 8, "row count");
  out.cols = detail::read_be32(buf, 12, "column count");
  const std::size_t payload = std::size_t{out.count} * out.rows * out.cols;
  detail::check_payload(buf, 16, payload);
  out.pixels.assign(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return out;
}

inline IdxLabels parse_idx_labels(const Bytes& buf) {
  detail::check_magic(detail::read_be32(buf, 0, "magic"), kIdxLabelsMagic);
  IdxLabels out;
  out.count = detail::read_be32(buf, 4, "label count");
  detail::check_payload(buf, 8, out.count);
  out.labels.assign(buf.begin() + 8, buf.begin() + 8 + out.count);
  return out;
}

inline Bytes encode_idx_images(const IdxImages& img) {
  if (img.pixels.size() != std::size_t{img.count} * img.rows * img.cols) {
    throw invalid_argument("encode_idx_images: pixel buffer does not match the header");
  }
  Bytes buf;
  detail::write_be32(buf, kIdxImagesMagic);
  detail::write_be32(buf, img.count);
  detail::write_be32(buf, img.rows);
  detail::write_be32(buf, img.cols);
  buf.insert(buf.end(), img.pixels.begin(), img.pixels.end());
  return buf;
}

inline Bytes encode_idx_labels(const IdxLabels& lab) {
  if (lab.labels.size() != lab.count) throw invalid_argument("encode_idx_labels: count mismatch");
  Bytes buf;
  detail::write_be32(buf, kIdxLabelsMagic);
  detail::write_be32(buf, lab.count);
  buf.insert(buf.end(), lab.labels.begin(), lab.labels.end());
  return buf;
}

inline Bytes read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  Bytes buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

inline void write_file_bytes(const std::string& path, const Bytes& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error("write failed: " + path);
}

inline MnistRaw load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  MnistRaw out;
  try {
    out.images = parse_idx_images(read_file_bytes(images_path));
  } catch (const parse_error& e) {
    throw parse_error(images_path + ": " + e.what());
  }
  try {
    out.labels = parse_idx_labels(read_file_bytes(labels_path));
  } catch (const parse_error& e) {
    throw parse_error(labels_path + ": " + e.what());
  }
  if (out.images.count != out.labels.count) {
    std::ostringstream os;
    os << "load_mnist_idx: " << out.images.count << " images but " << out.labels.count << " labels";
    throw parse_error(os.str());
  }
  for (auto l : out.labels.labels) {
    if (l > 9) throw parse_error("load_mnist_idx: label outside 0-9");
  }
  return out;
}

// Rows of the selected images scaled to [0, 1].
inline Matrix image_rows(const MnistRaw& raw, const std::vector<std::size_t>& idx) {
  const std::size_t p = raw.pixels_per_image();
  Matrix x(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::uint8_t* px = raw.images.pixels.data() + idx[i] * p;
    for (std::size_t j = 0; j < p; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    }
  }
  return x;
}

struct MnistTaskOptions {
  bool center = false;
  std::size_t max_train = 0;  // 0: full split; otherwise a seeded subsample
};

// Digit group (a, b): a -> +1, b -> -1.
struct MnistTask {
  std::pair<int, int> digit_pair{0, 1};
  Matrix x_train;
  Vector y_train;
  Matrix x_test;
  Vector y_test;
  Vector teacher;
  Vector mean;  // subtracted from both splits when centering, else zero
};

// Minimum-norm least squares.
inline Vector min_norm_lstsq(const Matrix& x, const Vector& y) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
  return cod.solve(y);
}

inline double zero_one_error(const Matrix& x, const Vector& y, const Vector& w) {
  if (x.rows() == 0) return 0.0;
  const Vector score = x * w;
  long wrong = 0;
  for (Eigen::Index i = 0; i < score.size(); ++i) {
    const double pred = score(i) >= 0.0 ? 1.0 : -1.0;
    if (pred != y(i)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(x.rows());
}

inline MnistTask build_mnist_task(const MnistRaw& train, const MnistRaw& test, std::pair<int, int> digits,
                                  std::uint64_t seed, const MnistTaskOptions& opt = {}) {
  const auto [da, db] = digits;
  if (da == db) throw invalid_argument("build_mnist_task: digit pair must name two distinct digits");
  if (da < 0 || da > 9 || db < 0 || db > 9) throw invalid_argument("build_mnist_task: digits must lie in 0-9");
  if (train.pixels_per_image() != test.pixels_per_image()) {
    throw dimension_mismatch("build_mnist_task: train and test images differ in size");
  }

  auto pick = [&](const MnistRaw& raw) {
    std::vector<std::size_t> idx;
    bool seen_a = false, seen_b = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const int l = raw.label(i);
      if (l == da || l == db) idx.push_back(i);
      seen_a = seen_a || l == da;
      seen_b = seen_b || l == db;
    }
    if (!seen_a || !seen_b) {
      std::ostringstream os;
      os << "build_mnist_task: digit " << (seen_a ? db : da) << " is missing";
      throw invalid_argument(os.str());
    }
    return idx;
  };
  auto labels = [&](const MnistRaw& raw, const std::vector<std::size_t>& idx) {
    Vector y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) y(static_cast<Eigen::Index>(i)) = raw.label(idx[i]) == da ? 1.0 : -1.0;
    return y;
  };

  std::vector<std::size_t> tr = pick(train);
  const std::vector<std::size_t> te = pick(test);
  if (opt.max_train > 0 && opt.max_train < tr.size()) {
    Rng rng = make_rng(seed);
    std::shuffle(tr.begin(), tr.end(), rng);
    tr.resize(opt.max_train);
    std::sort(tr.begin(), tr.end());
  }

  MnistTask task;
  task.digit_pair = digits;
  task.x_train = image_rows(train, tr);
  task.y_train = labels(train, tr);
  task.x_test = image_rows(test, te);
  task.y_test = labels(test, te);
  task.mean = Vector::Zero(task.x_train.cols());
  if (opt.center) {
    task.mean = task.x_train.colwise().mean().transpose();
    task.x_train.rowwise() -= task.mean.transpose();
    task.x_test.rowwise() -= task.mean.transpose();
  }
  task.teacher = min_norm_lstsq(task.x_train, task.y_train);
  return task;
}

}  // namespace ftlab
