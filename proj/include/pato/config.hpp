#pragma once

#include "pato/dataset.hpp"
#include "pato/pato.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pato {

/// Malformed or out-of-contract run configuration. The CLI maps this to its
/// own exit code, distinct from IO and solver failures.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One JSON document drives every subcommand. Sections are optional and
/// default sensibly; unknown keys anywhere are rejected. Paths that stay
/// empty resolve against outDir (dataset -> outDir/dataset, checkpoint ->
/// outDir/models/net.bin).
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string outDir = "out";

  CouponSpec coupon;
  MaterialSpec material;
  SolverOpts solver;
  BuildSpec build;

  struct Topo {
    ProblemFamily family = ProblemFamily::SymmetricThermal;
    double vtarget = 0.3;
    int maxIters = 60;
    double moveLimit = 0.2;
    double changeTol = 0.01;
  } topo;

  struct Dataset {
    std::string dir;
    std::vector<ProblemFamily> families = {
        ProblemFamily::SymmetricThermal, ProblemFamily::AsymmetricThermal,
        ProblemFamily::HydrostaticPressure, ProblemFamily::SegmentLoaded};
    std::vector<double> vtargets = {0.35, 0.5};
    std::vector<unsigned> seeds = {0, 1, 2, 3, 4};
    int maxIters = 40;
    double changeTol = 1e-3;
    GridDims lowDims{0, 0, 0, 0.0};  // zero: half the coupon grid per axis
    double testFraction = 0.25;
    bool augment = true;
  } dataset;

  struct Select {
    double damping = 0.9;
    double preference = std::numeric_limits<double>::quiet_NaN();
    int maxIter = 1000;
    double distThreshold = 0.05;
  } select;

  struct Surrogate {
    UNetSpec net;
    TrainConfig train;
    std::string checkpoint;
  } surrogate;

  struct Pato {
    double w = 0.95;
    SensScaling scaling = SensScaling::MaxAbsNormalized;
    std::string checkpoint;
    GridDims surrogateDims{0, 0, 0, 0.0};  // zero: the design grid
  } pato;

  struct Sweep {
    std::vector<double> vtargets = {0.3, 0.4, 0.5};
    std::vector<double> ws = {0.0, 0.95};
  } sweep;

  struct Predict {
    std::string checkpoint;
    std::string input;
  } predict;

  struct Crack {
    std::string input;  // empty: the built-in no-go coupon
  } crack;

  struct Export {
    std::string input;
    std::string output;
    std::string name = "field";
  } exp;

  nlohmann::json effective;  // the validated document, hashed into manifests
};

RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// FNV-1a over the canonical (sorted-key) dump of the effective document,
/// as 16 hex digits. Stable across runs for equal configs.
std::string config_hash(const RunConfig& cfg);

}  // namespace pato
