#pragma once

#include <vector>

#include "remeanflow/tensor.hpp"

namespace rmf {

// Builds the network input (batch, d + #scalars + num_classes): state rows,
// then one column per scalar sequence, then a one-hot class block. cls
// entries < 0 (or a null cls) leave the one-hot block zero.
Tensor assemble_net_input(const Tensor& state,
                          const std::vector<const std::vector<double>*>& scalars,
                          std::size_t num_classes,
                          const std::vector<int>* cls);

}  // namespace rmf
