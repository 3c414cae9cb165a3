#include "pigan/families.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "pigan/common.hpp"
#include "pigan/rng.hpp"

namespace pigan::families {

using linalg::ComplexMatrix;
using qstate::BlochForm;

namespace {

constexpr double kBoundaryTol = 1e-9;
constexpr double kTwoPi = 6.283185307179586476925287;

// Tetrahedron of valid Bell-diagonal states and the per-vertex sign patterns
constexpr std::array<char, 4> kVertexNames = {'A', 'B', 'C', 'D'};
constexpr std::array<std::array<double, 3>, 4> kVertices = {{
    {1.0, -1.0, 1.0},
    {-1.0, 1.0, 1.0},
    {1.0, 1.0, -1.0},
    {-1.0, -1.0, -1.0},
}};

double signed_sum_best_vertex(const std::array<double, 3>& c) {
  double best = -4.0;
  for (const auto& v : kVertices) {
    const double s = v[0] * c[0] + v[1] * c[1] + v[2] * c[2];
    if (s > best) best = s;
  }
  return best;
}

double broadcast_threshold(Task task) {
  return task == Task::LocalBroadcast ? 2.25 : 5.0 / 3.0;
}

}  // namespace

std::string to_string(Family f) {
  return f == Family::WernerLike ? "werner_like" : "bell_diagonal";
}

std::string to_string(Task t) {
  switch (t) {
    case Task::Teleportation: return "teleportation";
    case Task::LocalBroadcast: return "local_broadcast";
    case Task::NonlocalBroadcast: return "nonlocal_broadcast";
  }
  return "";
}

Family family_from_string(const std::string& s) {
  if (s == "werner_like") return Family::WernerLike;
  if (s == "bell_diagonal") return Family::BellDiagonal;
  throw ConfigError("unknown family: " + s);
}

Task task_from_string(const std::string& s) {
  if (s == "teleportation") return Task::Teleportation;
  if (s == "local_broadcast") return Task::LocalBroadcast;
  if (s == "nonlocal_broadcast") return Task::NonlocalBroadcast;
  throw ConfigError("unknown task: " + s);
}

double task_multiplier(Task t) {
  switch (t) {
    case Task::Teleportation: return 1.0;
    case Task::NonlocalBroadcast: return 1.2;
    case Task::LocalBroadcast: return 1.5;
  }
  return 1.0;
}

double WernerLikeParams::beta() const {
  return std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
}

DensityCandidate werner_like_state(const WernerLikeParams& params) {
  if (params.p < 0.0 || params.p > 1.0 || params.alpha < 0.0 || params.alpha > 1.0)
    throw std::invalid_argument("werner_like_state: parameters outside [0,1]");
  const double a = params.alpha, b = params.beta(), p = params.p;
  ComplexMatrix m(4, 4);
  m(0, 0) = p * a * a;
  m(0, 3) = p * a * b;
  m(3, 0) = p * a * b;
  m(3, 3) = p * b * b;
  const double mix = (1.0 - p) / 4.0;
  for (int i = 0; i < 4; ++i) m(i, i) += mix;
  return DensityCandidate(m);
}

std::array<double, 4> bell_diagonal_eigenvalues(const BellDiagonalParams& params) {
  const auto& c = params.c;
  std::array<double, 4> lam{};
  for (int m = 0; m < 2; ++m)
    for (int n = 0; n < 2; ++n) {
      const double sm = (m == 0) ? 1.0 : -1.0;
      const double sn = (n == 0) ? 1.0 : -1.0;
      lam[2 * m + n] = 0.25 * (1.0 + sm * c[0] - sm * sn * c[1] + sn * c[2]);
    }
  return lam;
}

bool bell_params_valid(const BellDiagonalParams& params) {
  for (double ci : params.c)
    if (std::abs(ci) > 1.0) return false;
  for (double lam : bell_diagonal_eigenvalues(params))
    if (lam < -1e-12) return false;
  return true;
}

DensityCandidate bell_diagonal_state(const BellDiagonalParams& params) {
  if (!bell_params_valid(params))
    throw std::invalid_argument(
        "bell_diagonal_state: parameters do not describe a valid state");
  ComplexMatrix m = linalg::scale(ComplexMatrix::identity(4), 0.25);
  for (int i = 1; i <= 3; ++i)
    m = linalg::add(m, linalg::scale(qstate::pauli_pair(i, i), 0.25 * params.c[i - 1]));
  return DensityCandidate(m);
}

bool criterion(Task task, const WernerLikeParams& params) {
  const double ab = params.alpha * params.beta();
  if (task == Task::Teleportation)
    return params.p * (1.0 + 4.0 * ab) > 1.0 + kBoundaryTol;
  // broadcasting: PPT entanglement; smallest partial-transpose eigenvalue
  // is (1-p)/4 - p*alpha*beta for this family
  return (1.0 - params.p) / 4.0 - params.p * ab < -kBoundaryTol;
}

bool criterion(Task task, const BellDiagonalParams& params) {
  if (task == Task::Teleportation) {
    const double n = std::abs(params.c[0]) + std::abs(params.c[1]) + std::abs(params.c[2]);
    return n > 1.0 + kBoundaryTol;
  }
  return signed_sum_best_vertex(params.c) > broadcast_threshold(task) + kBoundaryTol;
}

bool criterion(Family family, Task task, const DensityCandidate& rho) {
  if (task == Task::Teleportation)
    return qstate::teleportation_score(rho).n > 1.0 + kBoundaryTol;
  if (family == Family::WernerLike)
    return qstate::min_eig_pt(rho) < -kBoundaryTol;
  const BlochForm f = qstate::bloch_decompose(rho);
  const std::array<double, 3> c = {f.t[0][0], f.t[1][1], f.t[2][2]};
  return signed_sum_best_vertex(c) > broadcast_threshold(task) + kBoundaryTol;
}

double offfamily_residual(Family family, const DensityCandidate& rho) {
  const BlochForm f = qstate::bloch_decompose(rho);
  double off = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) off += f.t[i][j] * f.t[i][j];
  off = std::sqrt(off);
  if (family == Family::BellDiagonal) {
    const double na = std::sqrt(f.a[0] * f.a[0] + f.a[1] * f.a[1] + f.a[2] * f.a[2]);
    const double nb = std::sqrt(f.b[0] * f.b[0] + f.b[1] * f.b[1] + f.b[2] * f.b[2]);
    return na + nb + off;
  }
  // Werner-like states carry a z component on both local vectors
  const double na = std::sqrt(f.a[0] * f.a[0] + f.a[1] * f.a[1]);
  const double nb = std::sqrt(f.b[0] * f.b[0] + f.b[1] * f.b[1]);
  return na + nb + off;
}

namespace {

struct TupleKey {
  std::int64_t k0, k1, k2;
  bool operator==(const TupleKey&) const = default;
};

struct TupleKeyHash {
  std::size_t operator()(const TupleKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t v : {k.k0, k.k1, k.k2}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

std::int64_t quantize(double v) { return std::llround(v * 1e12); }

}  // namespace

std::vector<Sample> sample_dataset(Family family, Task task, std::size_t n,
                                   std::uint64_t seed, double* acceptance_rate) {
  if (n < 1) throw std::invalid_argument("sample_dataset: n >= 1 required");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(n);
  std::unordered_set<TupleKey, TupleKeyHash> seen;
  std::uint64_t proposals = 0;
  while (out.size() < n) {
    ++proposals;
    if (proposals >= 10000000ULL &&
        static_cast<double>(out.size()) / static_cast<double>(proposals) < 1e-4)
      throw NumericError(
          "sample_dataset: acceptance rate below 1e-4 after 1e7 proposals "
          "(misconfigured criterion)",
          static_cast<double>(out.size()) / static_cast<double>(proposals));
    if (family == Family::WernerLike) {
      WernerLikeParams params{rng.uniform(), 0.0};
      params.alpha = std::abs(std::cos(rng.uniform(0.0, kTwoPi)));
      if (!criterion(task, params)) continue;
      if (!seen.insert({quantize(params.p), quantize(params.alpha), 0}).second)
        continue;
      out.push_back({params, werner_like_state(params)});
    } else {
      BellDiagonalParams params{};
      for (double& ci : params.c) ci = rng.uniform(-1.0, 1.0);
      if (!bell_params_valid(params)) continue;
      if (!criterion(task, params)) continue;
      if (!seen.insert({quantize(params.c[0]), quantize(params.c[1]),
                        quantize(params.c[2])}).second)
        continue;
      out.push_back({params, bell_diagonal_state(params)});
    }
  }
  if (acceptance_rate)
    *acceptance_rate = static_cast<double>(n) / static_cast<double>(proposals);
  return out;
}

RegionGeometry region_export(Family family, Task task, std::size_t resolution) {
  if (resolution < 2)
    throw std::invalid_argument("region_export: resolution >= 2 required");
  RegionGeometry geo{family, task, {}, {}};
  if (family == Family::BellDiagonal) {
    BellRegion region;
    region.tetrahedron = kVertices;
    region.octahedron = {{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    double cut;  // magnitude of the two cut coordinates on each edge
    switch (task) {
      case Task::Teleportation:
        region.threshold = 1.0;
        cut = 0.0;
        break;
      case Task::NonlocalBroadcast:
        region.threshold = 5.0 / 3.0;
        cut = 1.0 / 3.0;
        break;
      case Task::LocalBroadcast:
        region.threshold = 9.0 / 4.0;
        cut = 5.0 / 8.0;
        break;
    }
    for (int v = 0; v < 4; ++v) {
      BellSubRegion sub;
      sub.vertex = kVertexNames[v];
      sub.sign = kVertices[v];
      sub.corners[0] = kVertices[v];
      int slot = 1;
      // cut point on each edge toward the other three vertices: coordinates
      // where the vertices agree stay at +-1, the two that differ move to
      // +-cut (exact rationals: 0, 1/3, 5/8)
      for (int w = 0; w < 4; ++w) {
        if (w == v) continue;
        std::array<double, 3> corner;
        for (int i = 0; i < 3; ++i)
          corner[i] = (kVertices[v][i] == kVertices[w][i]) ? kVertices[v][i]
                                                           : kVertices[v][i] * cut;
        sub.corners[slot++] = corner;
      }
      region.subregions[v] = sub;
    }
    geo.bell.push_back(region);
  } else {
    WernerRegion region;
    region.boundary.reserve(resolution);
    for (std::size_t k = 0; k < resolution; ++k) {
      const double alpha =
          static_cast<double>(k) / static_cast<double>(resolution - 1);
      const double beta = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
      region.boundary.push_back({alpha, 1.0 / (1.0 + 4.0 * alpha * beta)});
    }
    geo.werner.push_back(region);
  }
  return geo;
}

}  // namespace pigan::families
