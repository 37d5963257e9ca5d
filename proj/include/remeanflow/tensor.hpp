#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <string>
#include <vector>

namespace rmf {

// 64-byte aligned storage. Vectorized kernels peel loops based on the buffer
// address; pinning the alignment makes results independent of heap layout,
// which keeps training bit-for-bit reproducible.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t(alignment)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    ::operator delete(p, n * sizeof(T), std::align_val_t(alignment));
  }
  template <class U>
  bool operator==(const AlignedAlloc<U>&) const noexcept {
    return true;
  }
};

using AlignedVector = std::vector<double, AlignedAlloc<double>>;

// Dense row-major f64 array. The only numeric carrier in the project.
struct Tensor {
  std::vector<std::size_t> shape;
  AlignedVector values;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t size() const { return values.size(); }
  std::size_t ndim() const { return shape.size(); }

  // 2-D accessors; throw on rank mismatch.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;

  std::vector<double> row(std::size_t i) const;

  bool all_finite() const;
  // Throws Error naming `context` if any value is NaN/Inf.
  void require_finite(const std::string& context) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// primal/tangent pair for forward-mode differentiation.
struct DualTensor {
  Tensor primal;
  Tensor tangent;

  DualTensor() = default;
  DualTensor(Tensor p, Tensor t);
};

}  // namespace rmf
