#include "remeanflow/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "remeanflow/util.hpp"

namespace rmf {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail("load_couplings: truncated file reading " + what);
  return v;
}

}  // namespace

double Coupling::compute_distance(const std::vector<double>& x,
                                  const std::vector<double>& z) {
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - z[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

std::size_t CouplingSet::dim() const {
  if (couplings.empty()) fail("CouplingSet: empty set has no dimension");
  return couplings[0].x.size();
}

bool CouplingSet::has_class() const {
  return !couplings.empty() && couplings[0].cls >= 0;
}

void CouplingSet::validate() const {
  if (couplings.empty()) return;
  std::size_t d = dim();
  bool classy = has_class();
  for (const auto& c : couplings) {
    if (c.x.size() != d || c.z.size() != d)
      fail("CouplingSet: inconsistent dimensions");
    if ((c.cls >= 0) != classy)
      fail("CouplingSet: mixed conditional/unconditional records");
    if (std::abs(c.distance - Coupling::compute_distance(c.x, c.z)) > 1e-9)
      fail("CouplingSet: stored distance disagrees with |x - z|");
  }
}

void save_couplings(const std::string& path, const CouplingSet& set) {
  set.validate();
  if (set.provenance.generator_checkpoint.empty() ||
      set.provenance.solver.empty())
    fail("save_couplings: provenance fields must be non-empty");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("save_couplings: cannot open '" + path + "'");
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(set.size()));
  write_raw(out, static_cast<std::uint32_t>(set.couplings.empty()
                                                ? 0
                                                : set.dim()));
  write_raw(out, static_cast<std::uint8_t>(set.has_class() ? 1 : 0));
  for (const auto& c : set.couplings) {
    out.write(reinterpret_cast<const char*>(c.x.data()),
              static_cast<std::streamsize>(c.x.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(c.z.data()),
              static_cast<std::streamsize>(c.z.size() * sizeof(double)));
    if (set.has_class()) write_raw(out, static_cast<std::uint32_t>(c.cls));
    write_raw(out, c.distance);
  }
  nlohmann::json prov = {
      {"generator_checkpoint", set.provenance.generator_checkpoint},
      {"solver", set.provenance.solver},
      {"steps", set.provenance.steps},
      {"seed", set.provenance.seed},
      {"truncated", set.provenance.truncated}};
  std::string blob = prov.dump();
  write_raw(out, static_cast<std::uint64_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail("save_couplings: write failed for '" + path + "'");
}

CouplingSet load_couplings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("load_couplings: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail("load_couplings: bad magic in '" + path + "'");
  auto version = read_raw<std::uint32_t>(in, "version");
  if (version != kVersion)
    fail("load_couplings: unsupported version in '" + path + "'");
  auto n = read_raw<std::uint64_t>(in, "count");
  auto d = read_raw<std::uint32_t>(in, "dimension");
  auto has_class = read_raw<std::uint8_t>(in, "class flag");

  CouplingSet set;
  set.couplings.resize(n);
  for (auto& c : set.couplings) {
    c.x.resize(d);
    c.z.resize(d);
    in.read(reinterpret_cast<char*>(c.x.data()), d * sizeof(double));
    in.read(reinterpret_cast<char*>(c.z.data()), d * sizeof(double));
    if (has_class) c.cls = static_cast<int>(read_raw<std::uint32_t>(in, "class"));
    c.distance = read_raw<double>(in, "distance");
    if (!in) fail("load_couplings: truncated record in '" + path + "'");
  }
  auto blob_len = read_raw<std::uint64_t>(in, "provenance length");
  std::string blob(blob_len, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_len));
  if (!in) fail("load_couplings: truncated provenance in '" + path + "'");
  auto prov = nlohmann::json::parse(blob);
  set.provenance.generator_checkpoint =
      prov.at("generator_checkpoint").get<std::string>();
  set.provenance.solver = prov.at("solver").get<std::string>();
  set.provenance.steps = prov.at("steps").get<std::uint64_t>();
  set.provenance.seed = prov.at("seed").get<std::uint64_t>();
  set.provenance.truncated = prov.at("truncated").get<bool>();
  set.validate();
  return set;
}

void export_couplings_csv(const std::string& path, const CouplingSet& set) {
  std::ofstream out(path);
  if (!out) fail("export_couplings_csv: cannot open '" + path + "'");
  std::size_t d = set.couplings.empty() ? 0 : set.dim();
  for (std::size_t j = 0; j < d; ++j) out << "x" << j << ",";
  for (std::size_t j = 0; j < d; ++j) out << "z" << j << ",";
  if (set.has_class()) out << "class,";
  out << "distance\n";
  out.precision(17);
  for (const auto& c : set.couplings) {
    for (double v : c.x) out << v << ",";
    for (double v : c.z) out << v << ",";
    if (set.has_class()) out << c.cls << ",";
    out << c.distance << "\n";
  }
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) fail("nearest_rank_percentile: empty array");
  if (p <= 0.0 || p > 100.0) fail("nearest_rank_percentile: p outside (0,100]");
  std::sort(values.begin(), values.end());
  auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  if (rank == 0) rank = 1;
  return values[rank - 1];
}

CouplingSet truncate_by_distance(const CouplingSet& set, double k_percent) {
  if (set.couplings.empty()) fail("truncate_by_distance: empty coupling set");
  if (k_percent < 0.0 || k_percent >= 100.0)
    fail("truncate_by_distance: k must be in [0, 100)");
  // k = 0 is the identity, including the truncated flag.
  if (k_percent == 0.0) return set;
  CouplingSet out;
  out.provenance = set.provenance;
  out.provenance.truncated = true;
  std::vector<double> distances;
  distances.reserve(set.size());
  for (const auto& c : set.couplings) distances.push_back(c.distance);
  double q = nearest_rank_percentile(std::move(distances), 100.0 - k_percent);
  for (const auto& c : set.couplings)
    if (c.distance <= q) out.couplings.push_back(c);
  return out;
}

double empirical_lipschitz(const CouplingSet& set, std::size_t n_pairs,
                           Rng& rng) {
  if (set.size() < 2) fail("empirical_lipschitz: need >= 2 couplings");
  double best = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    std::size_t a = static_cast<std::size_t>(rng.uniform() * set.size());
    std::size_t b = static_cast<std::size_t>(rng.uniform() * set.size());
    if (a == b) continue;
    const auto& ca = set.couplings[a];
    const auto& cb = set.couplings[b];
    double dz = Coupling::compute_distance(ca.z, cb.z);
    if (dz < 1e-12) continue;
    double dx = Coupling::compute_distance(ca.x, cb.x);
    best = std::max(best, dx / dz);
  }
  return best;
}

}  // namespace rmf
