#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ganlab {

namespace detail {
// Tensor buffers churn at hundreds of KB; keep them inside the malloc
// arena instead of round-tripping through mmap on every allocation.
inline bool tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 28);
#endif
  return true;
}
inline const bool allocator_tuned = tune_allocator();
}  // namespace detail

// Error taxonomy: config/usage problems exit the CLI with code 1,
// numeric failures with code 2.
class error : public std::runtime_error {
public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class shape_error : public error {
public:
  explicit shape_error(const std::string& msg) : error(msg) {}
};

class config_error : public error {
public:
  explicit config_error(const std::string& msg) : error(msg) {}
};

class numeric_error : public error {
public:
  explicit numeric_error(const std::string& msg) : error(msg) {}
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Dense row-major array of doubles. The data buffer is shared between
// copies and reshapes; treat a Tensor as immutable once it leaves the
// function that built it. `uninit` skips the zero fill for buffers that
// are fully overwritten right away.
class Tensor {
  struct Raw {};
  explicit Tensor(Raw) {}

public:
  Tensor() : len_(1), data_(new double[1]) { data_[0] = 0.0; }

  static Tensor uninit(Shape shape) {
    Tensor t{Raw{}};
    t.shape_ = std::move(shape);
    t.check_shape();
    t.len_ = static_cast<size_t>(shape_numel(t.shape_));
    t.data_ = std::shared_ptr<double[]>(new double[t.len_]);
    return t;
  }

  static Tensor zeros(Shape shape) {
    Tensor t = uninit(std::move(shape));
    std::memset(t.data_.get(), 0, t.len_ * sizeof(double));
    return t;
  }

  static Tensor full(Shape shape, double v) {
    Tensor t = uninit(std::move(shape));
    for (size_t i = 0; i < t.len_; ++i) t.data_[i] = v;
    return t;
  }

  static Tensor scalar(double v) { return full({}, v); }

  static Tensor from_vector(Shape shape, const std::vector<double>& data) {
    Tensor t = uninit(std::move(shape));
    if (t.len_ != data.size())
      throw shape_error("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(t.shape_));
    std::memcpy(t.data_.get(), data.data(), t.len_ * sizeof(double));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(len_); }
  int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }

  int64_t rows() const {
    if (rank() != 2) throw shape_error("rows() on tensor of shape " + shape_str(shape_));
    return shape_[0];
  }
  int64_t cols() const {
    if (rank() != 2) throw shape_error("cols() on tensor of shape " + shape_str(shape_));
    return shape_[1];
  }

  const double* data() const { return data_.get(); }
  double* mutable_data() { return data_.get(); }

  double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double at(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }

  double item() const {
    if (numel() != 1) throw shape_error("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  // Shares the buffer; only the shape metadata changes.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw shape_error("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.len_ = len_;
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t = uninit(shape_);
    std::memcpy(t.data_.get(), data_.get(), len_ * sizeof(double));
    return t;
  }

  bool all_finite() const {
    for (size_t i = 0; i < len_; ++i)
      if (!std::isfinite(data_[i])) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
  void check_shape() const {
    for (int64_t d : shape_)
      if (d <= 0)
        throw shape_error("non-positive dimension in shape " + shape_str(shape_));
  }

  Shape shape_;
  size_t len_ = 0;
  std::shared_ptr<double[]> data_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw error(msg);
}

}  // namespace ganlab
