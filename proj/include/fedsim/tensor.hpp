#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. data().size() == shape_size(shape())
// always holds. Zero-length dimensions are allowed so that empty inputs can
// be represented and rejected by the operations that need data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  // Rank-2 literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Counts floating multiplications performed by instrumented kernels.
struct OpCounter {
  std::uint64_t multiplies = 0;
};

Tensor matmul(const Tensor& a, const Tensor& b, OpCounter* counter = nullptr);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// x[R x C] + bias[C] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// Softmax along one axis with max subtraction. Throws NumericError on
// non-finite input.
Tensor softmax(const Tensor& x, std::size_t axis);

Tensor rand_normal(SeededRng& rng, Shape shape, double mean, double stddev);

// Select rows of a rank-2 tensor in the given order.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_rows(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

// Binary container: "FCT1", u32 rank, u32 dims[rank], little-endian f64 data.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

namespace io {
void write_u32(std::ostream& out, std::uint32_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
double read_f64(std::istream& in);
}  // namespace io

}  // namespace fedsim
