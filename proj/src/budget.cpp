#include "remeanflow/budget.hpp"

#include "remeanflow/util.hpp"

namespace rmf {

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kStage1Train: return "stage1_train";
    case Phase::kReflowSampling: return "reflow_sampling";
    case Phase::kStage3Train: return "stage3_train";
    case Phase::kEval: return "eval";
  }
  fail("phase_name: bad phase");
}

std::uint64_t BudgetLedger::total_forward_evals() const {
  std::uint64_t n = 0;
  for (auto v : forward_evals) n += v;
  return n;
}

std::uint64_t BudgetLedger::total_train_steps() const {
  std::uint64_t n = 0;
  for (auto v : train_steps) n += v;
  return n;
}

void BudgetLedger::merge(const BudgetLedger& other) {
  for (int i = 0; i < kNumPhases; ++i) {
    forward_evals[i] += other.forward_evals[i];
    train_steps[i] += other.train_steps[i];
  }
}

double train_flops(double iters, double batch, double fwd_equivalents,
                   double flops_per_forward) {
  if (flops_per_forward <= 0.0) fail("train_flops: flops_per_forward <= 0");
  return iters * batch * fwd_equivalents * flops_per_forward;
}

double sample_flops(double samples, double steps, double forwards_per_step,
                    double flops_per_forward) {
  if (flops_per_forward <= 0.0) fail("sample_flops: flops_per_forward <= 0");
  return samples * steps * forwards_per_step * flops_per_forward;
}

}  // namespace rmf
