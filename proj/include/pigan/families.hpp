#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pigan/qstate.hpp"

namespace pigan::families {

using qstate::DensityCandidate;

enum class Family { WernerLike, BellDiagonal };
enum class Task { Teleportation, LocalBroadcast, NonlocalBroadcast };

std::string to_string(Family f);
std::string to_string(Task t);
Family family_from_string(const std::string& s);
Task task_from_string(const std::string& s);

// Task-specific loss multiplier m_task
double task_multiplier(Task t);

// p |psi><psi| + (1-p)/4 I with |psi> = alpha|00> + beta|11>, beta = sqrt(1-alpha^2)
struct WernerLikeParams {
  double p;
  double alpha;
  double beta() const;
};

// 1/4 (I(x)I + sum_i c_i s_i(x)s_i)
struct BellDiagonalParams {
  std::array<double, 3> c;
};

using FamilyParams = std::variant<WernerLikeParams, BellDiagonalParams>;

DensityCandidate werner_like_state(const WernerLikeParams& params);
DensityCandidate bell_diagonal_state(const BellDiagonalParams& params);

// The four eigenvalues 1/4 [1 + (-1)^m c1 - (-1)^(m+n) c2 + (-1)^n c3],
// (m,n) in {0,1}^2 in row-major order.
std::array<double, 4> bell_diagonal_eigenvalues(const BellDiagonalParams& params);
bool bell_params_valid(const BellDiagonalParams& params);

// Usefulness criteria. Boundary ties are conservative: a statistic within
// 1e-9 of its threshold counts as not useful.
//
// Closed-form parameter routes (teleportation: N > 1; broadcasting for
// Werner-like: PPT negativity; for Bell-diagonal: the near-vertex sub-
// tetrahedra with signed-sum thresholds 9/4 (local) and 5/3 (nonlocal)).
bool criterion(Task task, const WernerLikeParams& params);
bool criterion(Task task, const BellDiagonalParams& params);
// Numeric state route; for Bell-diagonal broadcasting tasks the state is
// projected to c~_i = t_ii before the region test.
bool criterion(Family family, Task task, const DensityCandidate& rho);

// Drift of a candidate away from its target family's Bloch structure:
// off-diagonal correlation mass plus the disallowed local-vector components.
double offfamily_residual(Family family, const DensityCandidate& rho);

struct Sample {
  FamilyParams params;
  DensityCandidate rho;
};

// Rejection sampling of task-useful states, deterministic under `seed`.
// Werner-like: p ~ U[0,1], alpha = |cos theta| with theta ~ U[0,2pi);
// Bell-diagonal: c_i ~ U[-1,1] filtered for state validity. Duplicate
// parameter tuples are rejected at 1e-12 granularity. Raises NumericError if
// the acceptance rate stays below 1e-4 after 1e7 proposals.
std::vector<Sample> sample_dataset(Family family, Task task, std::size_t n,
                                   std::uint64_t seed,
                                   double* acceptance_rate = nullptr);

struct BellSubRegion {
  char vertex;                                  // 'A'..'D'
  std::array<double, 3> sign;                   // vertex sign pattern
  std::array<std::array<double, 3>, 4> corners; // vertex first, then cut points
};

struct BellRegion {
  std::array<std::array<double, 3>, 4> tetrahedron;  // A, B, C, D
  std::array<std::array<double, 3>, 6> octahedron;   // +-e_i
  double threshold;                                  // signed-sum threshold
  std::array<BellSubRegion, 4> subregions;
};

struct WernerRegion {
  // boundary curve p = 1/(1+4 alpha beta), sampled as (alpha, p) pairs
  std::vector<std::array<double, 2>> boundary;
};

struct RegionGeometry {
  Family family;
  Task task;
  // exactly one of these is populated, per family
  std::vector<BellRegion> bell;
  std::vector<WernerRegion> werner;
};

RegionGeometry region_export(Family family, Task task, std::size_t resolution);

}  // namespace pigan::families
