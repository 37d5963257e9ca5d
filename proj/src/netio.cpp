#include "remeanflow/netio.hpp"

#include "remeanflow/util.hpp"

namespace rmf {

Tensor assemble_net_input(const Tensor& state,
                          const std::vector<const std::vector<double>*>& scalars,
                          std::size_t num_classes,
                          const std::vector<int>* cls) {
  std::size_t n = state.rows();
  std::size_t d = state.cols();
  for (const auto* s : scalars)
    if (s->size() != n) fail("assemble_net_input: scalar column length mismatch");
  if (cls && cls->size() != n)
    fail("assemble_net_input: class column length mismatch");
  std::size_t width = d + scalars.size() + num_classes;
  Tensor out = Tensor::zeros({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.values.data() + i * width;
    const double* src = state.values.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) row[j] = src[j];
    for (std::size_t k = 0; k < scalars.size(); ++k)
      row[d + k] = (*scalars[k])[i];
    if (num_classes > 0 && cls) {
      int c = (*cls)[i];
      if (c >= static_cast<int>(num_classes))
        fail("assemble_net_input: class index out of range");
      if (c >= 0) row[d + scalars.size() + c] = 1.0;
    }
  }
  return out;
}

}  // namespace rmf
