#include "vnp/tensor.hpp"

#include <cmath>
#include <sstream>

#include "vnp/error.hpp"

namespace vnp {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class S>
Tensor<S>::Tensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), S{0}) {}

template <class S>
Tensor<S>::Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw ShapeError("tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

template <class S>
Tensor<S> Tensor<S>::full(Shape shape, S value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

template <class S>
std::size_t Tensor<S>::rows() const {
  switch (shape_.size()) {
    case 0:
    case 1:
      return 1;
    case 2:
      return shape_[0];
    default:
      throw ShapeError("tensor: rank " + std::to_string(shape_.size()) + " has no matrix view");
  }
}

template <class S>
std::size_t Tensor<S>::cols() const {
  switch (shape_.size()) {
    case 0:
      return 1;
    case 1:
      return shape_[0];
    case 2:
      return shape_[1];
    default:
      throw ShapeError("tensor: rank " + std::to_string(shape_.size()) + " has no matrix view");
  }
}

template <class S>
S Tensor<S>::item() const {
  if (data_.size() != 1) throw ShapeError("tensor: item() on shape " + to_string(shape_));
  return data_[0];
}

template <class S>
bool Tensor<S>::all_finite() const noexcept {
  for (S v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

template <class S>
void Tensor<S>::fill(S value) {
  for (auto& v : data_) v = value;
}

template <class S>
Tensor<S> Tensor<S>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace vnp
