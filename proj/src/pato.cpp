#include "pato/pato.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <thread>

namespace pato {

namespace {

void check_weight(double w) {
  if (!(w >= 0.0 && w <= 1.0))
    throw std::invalid_argument("producibility weight w must lie in [0, 1]");
}

bool same_cells(const GridDims& a, const GridDims& b) {
  return a.nx == b.nx && a.ny == b.ny && a.nz == b.nz;
}

}  // namespace

FieldD blend_sensitivity(const FieldD& dCompliance, const FieldD& dZeta, double w,
                         SensScaling mode) {
  check_weight(w);
  if (w == 0.0) return dCompliance;
  if (w == 1.0) return dZeta;
  if (!(dCompliance.dims == dZeta.dims))
    throw std::invalid_argument("blend: sensitivity fields live on different grids");

  double sc = 1.0, sz = 1.0;
  if (mode == SensScaling::MaxAbsNormalized) {
    const double mc = dCompliance.values.abs().maxCoeff();
    const double mz = dZeta.values.abs().maxCoeff();
    if (mc > 0.0) sc = 1.0 / mc;
    if (mz > 0.0) sz = 1.0 / mz;
  }
  FieldD out = make_field<double>(dCompliance.dims);
  out.values = (1.0 - w) * (sc * dCompliance.values) + w * (sz * dZeta.values);
  return out;
}

ZetaEval zeta_and_gradient(UNet& net, const FieldD& rhoPhys, const GridDims& netDims,
                           const std::vector<std::uint8_t>* mask) {
  validate_dims(rhoPhys.dims);
  ZetaEval out;
  if (netDims.nx <= 0 || same_cells(netDims, rhoPhys.dims)) {
    GradResult g = net.input_gradient(rhoPhys, mask);
    out.zeta = g.maxValue;
    out.grad = std::move(g.inputGradient);
    return out;
  }
  const FieldD low = trilinear_resample(rhoPhys, netDims);
  GradResult g = net.input_gradient(low, mask);
  out.zeta = g.maxValue;
  out.grad = trilinear_resample_adjoint(g.inputGradient, rhoPhys.dims);
  return out;
}

PATOResult pato_loop(const PATOConfig& cfg) {
  check_weight(cfg.w);
  std::optional<UNet> net;
  if (!cfg.checkpoint.empty()) net.emplace(load_checkpoint(cfg.checkpoint));
  if (cfg.w > 0.0 && !net)
    throw std::invalid_argument("pato: w > 0 needs a surrogate checkpoint");

  const GridDims designDims = cfg.problem.mask.dims;
  const GridDims netDims = cfg.surrogateDims.nx > 0 ? cfg.surrogateDims : designDims;
  const std::vector<std::uint8_t>* mask = cfg.zetaMask.empty() ? nullptr : &cfg.zetaMask;
  if (mask && std::int64_t(mask->size()) != netDims.cellCount())
    throw std::invalid_argument("pato: zeta mask does not match the surrogate grid");

  SensitivityHook hook = [&](const FieldD& rhoPhys, const FieldD& dCompliance) -> HookResult {
    HookResult h;
    if (net) {
      ZetaEval z = zeta_and_gradient(*net, rhoPhys, netDims, mask);
      h.zeta = z.zeta;
      h.gradPhys = blend_sensitivity(dCompliance, z.grad, cfg.w, cfg.scaling);
    } else {
      h.gradPhys = dCompliance;
    }
    return h;
  };

  PATOResult out;
  out.opt = run_loop(cfg.problem, &hook);

  if (net) {
    const FieldD low = same_cells(netDims, designDims)
                           ? out.opt.density
                           : trilinear_resample(out.opt.density, netDims);
    out.zetaField = net->predict(low);
    if (mask) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::int64_t v = 0; v < out.zetaField.values.size(); ++v)
        if ((*mask)[size_t(v)]) best = std::max(best, out.zetaField.values[v]);
      out.zetaSurrogate = best;
    } else {
      out.zetaSurrogate = out.zetaField.values.maxCoeff();
    }
  }

  const BuildResult build =
      simulate_build(out.opt.density, cfg.problem.material, cfg.build, cfg.problem.solver);
  CrackFields cracks = crack_field_from_build(build, cfg.problem.material);
  out.mssiSim = std::move(cracks.mssi);
  out.zetaSim = out.mssiSim.values.maxCoeff();
  return out;
}

std::vector<TradeoffRecord> tradeoff_sweep(const PATOConfig& base, std::vector<double> vtargets,
                                           std::vector<double> ws, int nWorkers) {
  if (vtargets.empty() || ws.empty())
    throw std::invalid_argument("sweep: need at least one Vtarget and one w");
  if (nWorkers < 1) throw std::invalid_argument("sweep: nWorkers must be >= 1");
  std::sort(vtargets.begin(), vtargets.end());
  std::sort(ws.begin(), ws.end());

  struct Job {
    double vtarget;
    double w;
  };
  std::vector<Job> jobs;
  for (double vt : vtargets)
    for (double w : ws) jobs.push_back(Job{vt, w});

  std::vector<TradeoffRecord> records(jobs.size());
  std::atomic<size_t> next{0};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      TradeoffRecord& r = records[i];
      r.vtarget = jobs[i].vtarget;
      r.w = jobs[i].w;
      try {
        PATOConfig cfg = base;
        cfg.problem.Vtarget = jobs[i].vtarget;
        cfg.w = jobs[i].w;
        const PATOResult res = pato_loop(cfg);
        r.compliance = res.opt.objective;
        r.maxMssiSurrogate = res.zetaSurrogate;
        r.maxMssiSim = res.zetaSim;
        r.iters = int(res.opt.history.size());
        r.converged = !res.opt.history.empty() &&
                      res.opt.history.back().maxChange < cfg.problem.changeTol;
      } catch (const std::exception& e) {
        r.compliance = r.maxMssiSurrogate = r.maxMssiSim = nan;
        r.iters = 0;
        r.converged = false;
        r.error = e.what();
        std::fprintf(stderr, "sweep point (Vtarget=%g, w=%g) failed: %s\n", r.vtarget, r.w,
                     e.what());
      }
    }
  };

  if (nWorkers == 1 || jobs.size() == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min<int>(nWorkers, int(jobs.size()));
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return records;
}

void write_tradeoff_csv(const std::string& path, const std::vector<TradeoffRecord>& records) {
  if (records.empty()) throw std::invalid_argument("nothing to emit: empty sweep");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fprintf(f, "vtarget,w,compliance,max_mssi_surrogate,max_mssi_sim,iters,converged\n");
  for (const TradeoffRecord& r : records)
    std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", r.vtarget, r.w, r.compliance,
                 r.maxMssiSurrogate, r.maxMssiSim, r.iters, r.converged ? 1 : 0);
  std::fclose(f);
}

}  // namespace pato
