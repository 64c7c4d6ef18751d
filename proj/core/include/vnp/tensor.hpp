#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vnp {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major tensor. Rank 0, 1 and 2 are the working ranks: rank 1 is
/// treated as a 1 x n row and rank 0 as 1 x 1 by every matrix-shaped op.
template <class S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<S> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, S value);
  static Tensor scalar(S value) { return Tensor(Shape{}, {value}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<S> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }
  static Tensor column(std::vector<S> data) {
    const std::size_t n = data.size();
    return Tensor(Shape{n, 1}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Matrix view dimensions (see class comment for low ranks).
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<S> data() noexcept { return data_; }
  std::span<const S> data() const noexcept { return data_; }
  S* ptr() noexcept { return data_.data(); }
  const S* ptr() const noexcept { return data_.data(); }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }
  S& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const S& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Single element of a one-element tensor.
  S item() const;

  bool all_finite() const noexcept;
  void fill(S value);
  Tensor reshaped(Shape shape) const;

  template <class T>
  Tensor<T> cast() const {
    std::vector<T> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
    return Tensor<T>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_{};
  std::vector<S> data_ = std::vector<S>(1, S{0});
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vnp
