#pragma once

#include "pato/buildsim.hpp"
#include "pato/problems.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace pato {

/// One training sample: an optimized channel geometry, where it came from,
/// and (once evaluated) its crack-index label on the same grid.
struct SampleRecord {
  std::string id;
  std::string family;
  double vtarget = 0.0;
  unsigned seed = 0;
  FieldD geometry;
  FieldD label;  // peak-shear crack index; dims match geometry once evaluated
  bool evaluated = false;
};

struct VariantConfig {
  CouponSpec coupon;
  std::vector<ProblemFamily> families;
  std::vector<double> vtargets;
  std::vector<unsigned> seeds;
  int maxIters = 40;
  double changeTol = 1e-3;
  MaterialSpec material;
  SolverOpts solver;
};

/// Runs the optimizer over the cartesian grid families x vtargets x seeds.
/// Failed runs are reported on stderr and skipped; order is deterministic.
std::vector<SampleRecord> generate_variants(const VariantConfig& cfg);

// ---- similarity and selection -------------------------------------------

/// Central xz-slice (j = ny/2) thresholded to a bit mask. The designs are
/// near-constant along y, so one slice stands in for the volume when
/// comparing shapes.
BitSlice binarize_central_slice(const FieldD& f, double threshold = 0.5);

/// Dice overlap 2|A&B| / (|A|+|B|); two empty sets count as identical (1).
double dice(const BitSlice& a, const BitSlice& b);

/// Pairwise Dice similarities. Symmetric, unit diagonal, entries in [0,1];
/// those invariants are checked before the matrix is returned.
Eigen::MatrixXd affinity_matrix(const std::vector<BitSlice>& slices);

/// Throws unless S is square, symmetric, unit-diagonal, entries in [0,1].
void validate_affinity(const Eigen::MatrixXd& S);

struct ApOptions {
  double damping = 0.5;        // in [0.5, 1)
  double preference = std::numeric_limits<double>::quiet_NaN();  // NaN: median similarity
  int maxIter = 1000;
};

/// Clusters from responsibility/availability message passing. Exemplars are
/// actual sample indices, one per cluster, ascending.
struct ExemplarSet {
  std::vector<int> exemplars;
  std::vector<int> assignment;  // sample -> index into exemplars
  bool converged = false;
  int iterations = 0;
};
ExemplarSet affinity_propagation(const Eigen::MatrixXd& S, const ApOptions& opts = {});

/// Greedy diversity extension of the rank-1 exemplars: each round visits the
/// clusters in order and admits the member farthest (min 1 - dice over all
/// already selected) from the selection, if that distance clears the
/// threshold. Stops on the first round with no admission. Ties: lowest id.
struct RankedSelection {
  std::vector<int> ids;
  std::vector<int> ranks;  // parallel to ids; rank-1 entries come first
};
RankedSelection rank_k_exemplars(const Eigen::MatrixXd& S, const ExemplarSet& clusters,
                                 double distThreshold = 0.05);

/// Classical scaling of d = 1 - s into the top-2 eigenspace. Negative
/// eigenvalues (non-Euclidean input) are clipped to zero.
Eigen::MatrixX2d classical_mds(const Eigen::MatrixXd& S);

// ---- augmentation and evaluation ----------------------------------------

/// Originals followed by rotated copies (geometry and label both turned 180
/// degrees about z), ids suffixed with "_r180".
std::vector<SampleRecord> augment_rotate180(const std::vector<SampleRecord>& samples);

/// Label for one geometry: volume-average down to lowDims, run the build
/// simulation there, upsample the crack index to trainDims trilinearly.
/// Solver failures propagate.
FieldD evaluate_sample(const FieldD& geom, const GridDims& lowDims, const GridDims& trainDims,
                       const MaterialSpec& mat, const BuildSpec& spec,
                       const SolverOpts& opts = {});

/// Half resolution per axis (floor, at least 2), voxel size doubled so the
/// physical extent is preserved. The default speed/fidelity trade.
GridDims half_dims(const GridDims& d);

/// Evaluates every unevaluated record in place on a small worker pool.
/// Returns per-record failure messages (empty when everything succeeded);
/// failed records stay unevaluated. Output is identical for any nWorkers.
struct EvalFailure {
  int index;
  std::string message;
};
std::vector<EvalFailure> evaluate_all(std::vector<SampleRecord>& recs, const GridDims& lowDims,
                                      const MaterialSpec& mat, const BuildSpec& spec,
                                      const SolverOpts& opts = {}, int nWorkers = 1);

// ---- persistence ----------------------------------------------------------

/// Seed-deterministic shuffle split; indices come back sorted.
struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> test;
};
DatasetSplit split_dataset(int n, double testFraction, unsigned seed);

/// manifest.json plus one raw field file per geometry/label under dir.
void save_dataset(const std::string& dir, const std::vector<SampleRecord>& recs);
std::vector<SampleRecord> load_dataset(const std::string& dir);

void write_affinity_csv(const std::string& path, const Eigen::MatrixXd& S);
void write_mds_csv(const std::string& path, const std::vector<std::string>& ids,
                   const Eigen::MatrixX2d& coords);

}  // namespace pato
