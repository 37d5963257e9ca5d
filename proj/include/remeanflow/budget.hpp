#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace rmf {

enum class Phase : int {
  kStage1Train = 0,
  kReflowSampling = 1,
  kStage3Train = 2,
  kEval = 3,
};

inline constexpr int kNumPhases = 4;

std::string phase_name(Phase p);

// Compute accounting in model-forward-evaluation counts plus a FLOPs view
// derived from a configurable per-forward cost. Counters only grow.
struct BudgetLedger {
  std::array<std::uint64_t, kNumPhases> forward_evals{};
  std::array<std::uint64_t, kNumPhases> train_steps{};
  double flops_per_forward = 0.0;

  void add_forward(Phase p, std::uint64_t n) {
    forward_evals[static_cast<int>(p)] += n;
  }
  void add_train_step(Phase p, std::uint64_t n = 1) {
    train_steps[static_cast<int>(p)] += n;
  }
  std::uint64_t total_forward_evals() const;
  std::uint64_t total_train_steps() const;
  void merge(const BudgetLedger& other);
};

// Total Train FLOPs = iters * batch * fwd_equivalents * flops_per_forward,
// where fwd_equivalents counts forward plus backward passes in
// forward-pass units (backward = 2x forward, one JVP = one backward).
double train_flops(double iters, double batch, double fwd_equivalents,
                   double flops_per_forward);

// Total Sample FLOPs = samples * steps * forwards_per_step * flops_per_forward.
double sample_flops(double samples, double steps, double forwards_per_step,
                    double flops_per_forward);

}  // namespace rmf
