#include "remeanflow/tensor.hpp"

#include <cmath>

#include "remeanflow/util.hpp"

namespace rmf {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(values_.begin(), values_.end()) {
  for (std::size_t s : shape)
    if (s == 0) fail("Tensor: zero extent in shape");
  if (shape_product(shape) != values.size())
    fail("Tensor: shape/value count mismatch");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) fail("Tensor::from_rows: no rows");
  std::size_t d = rows[0].size();
  std::vector<double> v;
  v.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.size() != d) fail("Tensor::from_rows: ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), d}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) fail("Tensor::rows: not 2-D");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) fail("Tensor::cols: not 2-D");
  return shape[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return values[i * cols() + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return values[i * cols() + j];
}

std::vector<double> Tensor::row(std::size_t i) const {
  std::size_t c = cols();
  return std::vector<double>(values.begin() + i * c,
                             values.begin() + (i + 1) * c);
}

bool Tensor::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const std::string& context) const {
  if (!all_finite()) fail("non-finite value in " + context);
}

DualTensor::DualTensor(Tensor p, Tensor t)
    : primal(std::move(p)), tangent(std::move(t)) {
  if (!primal.same_shape(tangent))
    fail("DualTensor: primal/tangent shape mismatch");
}

}  // namespace rmf
