#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remeanflow/rng.hpp"

namespace rmf {

// One data-noise pair: x lives at t=0, z at t=1.
struct Coupling {
  std::vector<double> x;
  std::vector<double> z;
  int cls = -1;  // -1 = unconditional
  double distance = 0.0;

  static double compute_distance(const std::vector<double>& x,
                                 const std::vector<double>& z);
};

struct CouplingProvenance {
  std::string generator_checkpoint;  // checkpoint id / digest
  std::string solver;
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  bool truncated = false;
};

struct CouplingSet {
  std::vector<Coupling> couplings;
  CouplingProvenance provenance;

  std::size_t size() const { return couplings.size(); }
  std::size_t dim() const;
  bool has_class() const;
  void validate() const;
};

// Binary format, little-endian: header {magic "RMFC", version u32, n u64,
// d u32, has_class u8}, then per record d f64 x, d f64 z, optional u32
// class, f64 distance. A provenance trailer (u64 length + JSON) follows the
// records.
void save_couplings(const std::string& path, const CouplingSet& set);
CouplingSet load_couplings(const std::string& path);

// CSV mirror for inspection: x..., z..., [class,] distance.
void export_couplings_csv(const std::string& path, const CouplingSet& set);

// Keeps couplings with distance <= q, q the nearest-rank (100-k)th
// percentile of the distances. Input is untouched.
CouplingSet truncate_by_distance(const CouplingSet& set, double k_percent);

// Nearest-rank percentile of an unsorted array (p in (0, 100]).
double nearest_rank_percentile(std::vector<double> values, double p);

// Max over random coupling pairs of |x'-x''| / |z'-z''|; diagnostic for
// how strongly nearby noise points can map apart.
double empirical_lipschitz(const CouplingSet& set, std::size_t n_pairs,
                           Rng& rng);

}  // namespace rmf
