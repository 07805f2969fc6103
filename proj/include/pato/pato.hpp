#pragma once

#include "pato/crackindex.hpp"
#include "pato/optimizer.hpp"
#include "pato/surrogate.hpp"

#include <string>
#include <vector>

namespace pato {

enum class SensScaling { Raw, MaxAbsNormalized };

/// w*dZeta + (1-w)*dCompliance in physical-density space. w=0 and w=1 return
/// the untouched constituent bitwise, so a w=0 run reduces exactly to plain
/// compliance optimization. MaxAbsNormalized rescales each field to unit peak
/// magnitude before blending; the two gradients carry incommensurate units
/// and a raw blend can let one of them vanish numerically.
FieldD blend_sensitivity(const FieldD& dCompliance, const FieldD& dZeta, double w,
                         SensScaling mode);

/// Surrogate peak crack index of one physical density field together with its
/// gradient on that field's own grid. When netDims has different cell counts
/// the density is resampled trilinearly to the surrogate grid first and the
/// gradient is pulled back through the adjoint of that resampling. The mask
/// (surrogate-grid cells) restricts where the peak is taken; empty means the
/// whole field.
struct ZetaEval {
  double zeta = 0.0;
  FieldD grad;
};
ZetaEval zeta_and_gradient(UNet& net, const FieldD& rhoPhys, const GridDims& netDims,
                           const std::vector<std::uint8_t>* mask = nullptr);

struct PATOConfig {
  TOProblem problem;  // carries Vtarget, physics, filters, loads, material
  double w = 0.95;    // producibility weight, in [0, 1]
  SensScaling scaling = SensScaling::Raw;
  std::string checkpoint;  // trained surrogate; required whenever w > 0
  // Grid the surrogate was trained on. Zero extents: use the design grid.
  GridDims surrogateDims{0, 0, 0, 0.0};
  std::vector<std::uint8_t> zetaMask;  // surrogate-grid cells; empty: everywhere
  BuildSpec build;                     // final-design verification settings
};

struct PATOResult {
  TOResult opt;
  double zetaSurrogate = 0.0;  // peak predicted crack index of the final design
  double zetaSim = 0.0;        // peak MSSI from one full build simulation of it
  FieldD zetaField;            // surrogate prediction, on the surrogate grid
  FieldD mssiSim;              // simulated MSSI, on the design grid
};

/// The compliance loop with the blended sensitivity: per iteration the hook
/// adds the surrogate peak gradient and logs the peak itself as zeta in the
/// history. Finishes with a surrogate prediction and one full build
/// simulation of the final design. With w=0 and no checkpoint this is
/// exactly to_loop plus the verification pass.
PATOResult pato_loop(const PATOConfig& cfg);

struct TradeoffRecord {
  double vtarget = 0.0;
  double w = 0.0;
  double compliance = 0.0;
  double maxMssiSurrogate = 0.0;
  double maxMssiSim = 0.0;
  int iters = 0;
  bool converged = false;  // the loop stalled below changeTol before maxIters
  std::string error;       // nonempty when the run failed; numbers are NaN then
};

/// One pato_loop per (Vtarget, w) pair, both lists sorted ascending first so
/// the records come back ordered by (vtarget, w). A failed run is reported on
/// stderr, recorded with its message, and the sweep continues. Deterministic
/// for any worker count.
std::vector<TradeoffRecord> tradeoff_sweep(const PATOConfig& base,
                                           std::vector<double> vtargets, std::vector<double> ws,
                                           int nWorkers = 1);

/// CSV: vtarget,w,compliance,max_mssi_surrogate,max_mssi_sim,iters,converged
void write_tradeoff_csv(const std::string& path, const std::vector<TradeoffRecord>& records);

}  // namespace pato
