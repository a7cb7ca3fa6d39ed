#include "deltaquant/tensor.hpp"

#include <sstream>

namespace dq {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a != b) {
    throw ShapeError(what + ": shape " + to_string(a) + " does not match " + to_string(b));
  }
}

void require_finite(const Tensor& t) {
  if (!t.all_finite()) throw InvalidValue("tensor '" + t.name + "' has non-finite elements");
}

}  // namespace dq
