#include "swae/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace swae {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int extent : shape) {
    if (extent <= 0) {
      throw std::invalid_argument("tensor shape has non-positive extent " +
                                  std::to_string(extent));
    }
    n *= extent;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::zeros(Shape s) { return Tensor(std::move(s)); }

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::row(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

int Tensor::rows() const {
  if (shape.empty()) throw std::logic_error("rows() on rank-0 tensor");
  return shape[0];
}

int Tensor::cols() const {
  if (rank() == 1) return shape[0];
  if (rank() == 2) return shape[1];
  throw std::logic_error("cols() on tensor of rank " + std::to_string(rank()));
}

double& Tensor::at(int r, int c) {
  return data[static_cast<size_t>(r) * cols() + c];
}

double Tensor::at(int r, int c) const {
  return data[static_cast<size_t>(r) * cols() + c];
}

bool Tensor::finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace swae
