#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace motalign::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles with value semantics. Copies share the
// underlying buffer; the buffer is cloned on the first mutable access while
// shared, so a Tensor observed by a graph never changes under it.
//
// Rank 0 (shape {}) is a scalar holding one element.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_->size(); }

  std::span<const double> data() const noexcept { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  // Copy-on-write access.
  std::span<double> mutable_data();

  bool requires_grad() const noexcept { return requires_grad_; }
  Tensor& set_requires_grad(bool on) noexcept {
    requires_grad_ = on;
    return *this;
  }

  Tensor reshaped(Shape shape) const;

  bool is_finite() const noexcept;
  // Throws NumericError naming `what` if any entry is NaN or infinite.
  void validate_finite(std::string_view what) const;

  bool bitwise_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  bool requires_grad_ = false;
};

}  // namespace motalign::ad
