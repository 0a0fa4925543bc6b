#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace swae {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. Rank is usually 1 (bias/vector) or
// 2 (batch x features); ops that need matrix semantics check rank
// themselves.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);  // shape {1, n}
  static Tensor matrix(int rows, int cols, std::vector<double> values);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;

  double& at(int r, int c);
  double at(int r, int c) const;

  bool finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  Tensor& with_grad(bool flag = true) {
    requires_grad = flag;
    return *this;
  }
};

}  // namespace swae
