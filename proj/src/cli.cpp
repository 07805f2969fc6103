#include "pato/cli.hpp"

#include "pato/crackindex.hpp"
#include "pato/io.hpp"
#include "pato/rng.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

namespace pato {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

fs::path sub_dir(const RunConfig& cfg, const char* name) {
  fs::path p = fs::path(cfg.outDir) / name;
  fs::create_directories(p);
  return p;
}

std::string dataset_dir(const RunConfig& cfg) {
  return cfg.dataset.dir.empty() ? (fs::path(cfg.outDir) / "dataset").string()
                                 : cfg.dataset.dir;
}

std::string model_path(const RunConfig& cfg) {
  return cfg.surrogate.checkpoint.empty()
             ? (fs::path(cfg.outDir) / "models" / "net.bin").string()
             : cfg.surrogate.checkpoint;
}

std::string pato_model_path(const RunConfig& cfg) {
  return cfg.pato.checkpoint.empty() ? model_path(cfg) : cfg.pato.checkpoint;
}

GridDims low_dims_of(const RunConfig& cfg) {
  if (cfg.dataset.lowDims.nx <= 0) return half_dims(cfg.coupon.dims);
  GridDims d = cfg.dataset.lowDims;
  d.h = cfg.coupon.dims.h * double(cfg.coupon.dims.nx) / double(d.nx);
  return d;
}

TOProblem to_problem(const RunConfig& cfg) {
  TOProblem p = make_problem(cfg.topo.family, cfg.coupon, cfg.topo.vtarget,
                             unsigned(substream_seed(cfg.seed, "topo-load")));
  p.material = cfg.material;
  p.solver = cfg.solver;
  p.maxIters = cfg.topo.maxIters;
  p.moveLimit = cfg.topo.moveLimit;
  p.changeTol = cfg.topo.changeTol;
  return p;
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs, const json& results) {
  json m;
  m["command"] = command;
  m["configHash"] = config_hash(cfg);
  m["seed"] = cfg.seed;
  m["threads"] = cfg.threads;
  m["outputs"] = outputs;
  m["results"] = results;
  m["versions"] = {{"pato", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"checkpointFormat", 1},
                   {"rawFieldFormat", 1}};
  const fs::path path = sub_dir(cfg, "") / "manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << m.dump(2) << '\n';
}

json field_summary_json(const FieldD& f) {
  const FieldSummary s = summarize_field(f);
  return {{"max", s.maxValue}, {"at", {s.i, s.j, s.k}}, {"p99", s.p99}};
}

int cmd_topo(const RunConfig& cfg) {
  const TOProblem prob = to_problem(cfg);
  const TOResult res = to_loop(prob);
  const fs::path fields = sub_dir(cfg, "fields");
  const fs::path csv = sub_dir(cfg, "csv");
  write_raw((fields / "density.raw").string(), res.density);
  write_vtk((fields / "density.vtk").string(), "density", res.density);
  write_history_csv((csv / "history.csv").string(), res.history);
  const bool converged =
      !res.history.empty() && res.history.back().maxChange < prob.changeTol;
  write_manifest(cfg, "topo",
                 {"fields/density.raw", "fields/density.vtk", "csv/history.csv"},
                 {{"objective", res.objective},
                  {"volumeFraction", res.volumeFraction},
                  {"iterations", res.history.size()},
                  {"converged", converged}});
  std::printf("topo: objective %.8g, volume %.4f, %zu iterations\n", res.objective,
              res.volumeFraction, res.history.size());
  return exitOk;
}

int cmd_pato(const RunConfig& cfg) {
  PATOConfig pc;
  pc.problem = to_problem(cfg);
  pc.w = cfg.pato.w;
  pc.scaling = cfg.pato.scaling;
  if (cfg.pato.w > 0.0 || !cfg.pato.checkpoint.empty()) pc.checkpoint = pato_model_path(cfg);
  pc.surrogateDims = cfg.pato.surrogateDims;
  pc.build = cfg.build;
  const PATOResult res = pato_loop(pc);

  const fs::path fields = sub_dir(cfg, "fields");
  const fs::path csv = sub_dir(cfg, "csv");
  write_raw((fields / "density.raw").string(), res.opt.density);
  write_vtk((fields / "density.vtk").string(), "density", res.opt.density);
  write_history_csv((csv / "history.csv").string(), res.opt.history);
  std::vector<std::string> outputs = {"fields/density.raw", "fields/density.vtk",
                                      "csv/history.csv"};
  json results = {{"objective", res.opt.objective},
                  {"volumeFraction", res.opt.volumeFraction},
                  {"iterations", res.opt.history.size()},
                  {"w", cfg.pato.w},
                  {"maxMssiSim", res.zetaSim}};
  write_vtk((fields / "mssi_sim.vtk").string(), "mssi", res.mssiSim);
  outputs.push_back("fields/mssi_sim.vtk");
  if (!pc.checkpoint.empty()) {
    write_raw((fields / "zeta_pred.raw").string(), res.zetaField);
    write_vtk((fields / "zeta_pred.vtk").string(), "zeta", res.zetaField);
    outputs.push_back("fields/zeta_pred.raw");
    outputs.push_back("fields/zeta_pred.vtk");
    results["maxMssiSurrogate"] = res.zetaSurrogate;
  }
  write_manifest(cfg, "pato", outputs, results);
  std::printf("pato: objective %.8g, surrogate peak %.6g, simulated peak %.6g\n",
              res.opt.objective, res.zetaSurrogate, res.zetaSim);
  return exitOk;
}

int cmd_sweep(const RunConfig& cfg) {
  PATOConfig base;
  base.problem = to_problem(cfg);
  base.scaling = cfg.pato.scaling;
  base.surrogateDims = cfg.pato.surrogateDims;
  base.build = cfg.build;
  bool needNet = false;
  for (double w : cfg.sweep.ws) needNet = needNet || w > 0.0;
  if (needNet || !cfg.pato.checkpoint.empty()) {
    base.checkpoint = pato_model_path(cfg);
    load_checkpoint(base.checkpoint);  // fail fast on a bad path, not per point
  }

  const std::vector<TradeoffRecord> recs =
      tradeoff_sweep(base, cfg.sweep.vtargets, cfg.sweep.ws, cfg.threads);
  const fs::path csv = sub_dir(cfg, "csv");
  write_tradeoff_csv((csv / "sweep.csv").string(), recs);
  size_t failed = 0;
  for (const TradeoffRecord& r : recs) failed += !r.error.empty();
  write_manifest(cfg, "sweep", {"csv/sweep.csv"},
                 {{"points", recs.size()}, {"failed", failed}});
  std::printf("sweep: %zu points, %zu failed -> csv/sweep.csv\n", recs.size(), failed);
  return failed == recs.size() ? exitSolver : exitOk;
}

int cmd_gen_data(const RunConfig& cfg) {
  VariantConfig vc;
  vc.coupon = cfg.coupon;
  vc.families = cfg.dataset.families;
  vc.vtargets = cfg.dataset.vtargets;
  vc.seeds = cfg.dataset.seeds;
  vc.maxIters = cfg.dataset.maxIters;
  vc.changeTol = cfg.dataset.changeTol;
  vc.material = cfg.material;
  vc.solver = cfg.solver;
  const std::vector<SampleRecord> recs = generate_variants(vc);
  const size_t requested =
      cfg.dataset.families.size() * cfg.dataset.vtargets.size() * cfg.dataset.seeds.size();
  if (recs.empty()) {
    std::fprintf(stderr, "gen-data: every variant failed\n");
    return exitSolver;
  }
  const std::string dir = dataset_dir(cfg);
  save_dataset(dir, recs);
  write_manifest(cfg, "gen-data", {dir},
                 {{"samples", recs.size()}, {"requested", requested}});
  std::printf("gen-data: %zu of %zu samples -> %s\n", recs.size(), requested, dir.c_str());
  return exitOk;
}

int cmd_eval(const RunConfig& cfg) {
  const std::string dir = dataset_dir(cfg);
  std::vector<SampleRecord> recs = load_dataset(dir);
  const GridDims low = low_dims_of(cfg);
  const std::vector<EvalFailure> failures =
      evaluate_all(recs, low, cfg.material, cfg.build, cfg.solver, cfg.threads);
  save_dataset(dir, recs);
  for (const EvalFailure& f : failures)
    std::fprintf(stderr, "eval: sample %d: %s\n", f.index, f.message.c_str());
  size_t evaluated = 0;
  for (const SampleRecord& r : recs) evaluated += r.evaluated;
  write_manifest(cfg, "eval", {dir},
                 {{"evaluated", evaluated},
                  {"failed", failures.size()},
                  {"lowDims", {low.nx, low.ny, low.nz}}});
  std::printf("eval: %zu of %zu samples labeled at %dx%dx%d\n", evaluated, recs.size(),
              low.nx, low.ny, low.nz);
  return failures.empty() ? exitOk : exitSolver;
}

int cmd_select(const RunConfig& cfg) {
  const std::vector<SampleRecord> recs = load_dataset(dataset_dir(cfg));
  if (recs.size() < 2) throw std::runtime_error("select: need at least two samples");
  std::vector<BitSlice> slices;
  std::vector<std::string> ids;
  for (const SampleRecord& r : recs) {
    slices.push_back(binarize_central_slice(r.geometry));
    ids.push_back(r.id);
  }
  const Eigen::MatrixXd S = affinity_matrix(slices);
  ApOptions ap;
  ap.damping = cfg.select.damping;
  ap.preference = cfg.select.preference;
  ap.maxIter = cfg.select.maxIter;
  const ExemplarSet ex = affinity_propagation(S, ap);
  const RankedSelection ranked = rank_k_exemplars(S, ex, cfg.select.distThreshold);

  const fs::path csv = sub_dir(cfg, "csv");
  write_affinity_csv((csv / "affinity.csv").string(), S);
  write_mds_csv((csv / "mds.csv").string(), ids, classical_mds(S));

  json sel;
  sel["converged"] = ex.converged;
  sel["iterations"] = ex.iterations;
  json ems = json::array();
  for (int e : ex.exemplars) ems.push_back(ids[size_t(e)]);
  sel["exemplars"] = ems;
  sel["assignment"] = ex.assignment;
  json picks = json::array();
  for (size_t i = 0; i < ranked.ids.size(); ++i)
    picks.push_back({{"id", ids[size_t(ranked.ids[i])]}, {"rank", ranked.ranks[i]}});
  sel["selected"] = picks;
  const fs::path selPath = sub_dir(cfg, "") / "selection.json";
  std::ofstream out(selPath);
  if (!out) throw std::runtime_error("cannot write " + selPath.string());
  out << sel.dump(2) << '\n';

  write_manifest(cfg, "select", {"csv/affinity.csv", "csv/mds.csv", "selection.json"},
                 {{"clusters", ex.exemplars.size()},
                  {"selected", ranked.ids.size()},
                  {"converged", ex.converged}});
  std::printf("select: %zu clusters, %zu exemplars picked from %zu samples\n",
              ex.exemplars.size(), ranked.ids.size(), recs.size());
  return exitOk;
}

int cmd_train(const RunConfig& cfg) {
  std::vector<SampleRecord> recs = load_dataset(dataset_dir(cfg));
  std::erase_if(recs, [](const SampleRecord& r) { return !r.evaluated; });
  if (recs.size() < 4)
    throw std::runtime_error("train: need at least four evaluated samples, have " +
                             std::to_string(recs.size()));

  const DatasetSplit split = split_dataset(int(recs.size()), cfg.dataset.testFraction,
                                           unsigned(substream_seed(cfg.seed, "split")));
  std::vector<SampleRecord> trainRecs, valRecs;
  for (int i : split.train) trainRecs.push_back(recs[size_t(i)]);
  for (int i : split.test) valRecs.push_back(recs[size_t(i)]);
  // rotated copies join the training side only; held-out samples stay original
  if (cfg.dataset.augment) trainRecs = augment_rotate180(trainRecs);

  std::vector<TrainSample> trainSet, valSet;
  for (const SampleRecord& r : trainRecs) trainSet.push_back({r.geometry, r.label});
  for (const SampleRecord& r : valRecs) valSet.push_back({r.geometry, r.label});

  UNet net(cfg.surrogate.net, unsigned(substream_seed(cfg.seed, "weights")));
  TrainConfig tc = cfg.surrogate.train;
  tc.seed = unsigned(substream_seed(cfg.seed, "batches"));
  const TrainResult tr = train(net, trainSet, valSet, tc);

  const std::string ckpt = model_path(cfg);
  fs::create_directories(fs::path(ckpt).parent_path());
  save_checkpoint(ckpt, net);
  const fs::path csv = sub_dir(cfg, "csv");
  write_history_csv((csv / "train_history.csv").string(), tr.history);

  double heldOut = std::numeric_limits<double>::quiet_NaN();
  if (!valRecs.empty()) {
    heldOut = 0.0;
    for (const SampleRecord& r : valRecs) heldOut += mre(net.predict(r.geometry), r.label);
    heldOut /= double(valRecs.size());
  }
  write_manifest(cfg, "train", {ckpt, "csv/train_history.csv"},
                 {{"epochs", tr.history.size()},
                  {"bestEpoch", tr.bestEpoch},
                  {"bestValLoss", tr.bestValLoss},
                  {"stoppedEarly", tr.stoppedEarly},
                  {"heldOutMre", heldOut},
                  {"trainSamples", trainSet.size()},
                  {"valSamples", valSet.size()}});
  std::printf("train: %zu epochs, best val loss %.6g at epoch %d, held-out MRE %.4f\n",
              tr.history.size(), tr.bestValLoss, tr.bestEpoch, heldOut);
  return exitOk;
}

int cmd_predict(const RunConfig& cfg) {
  if (cfg.predict.input.empty()) throw ConfigError("config: predict.input is required");
  UNet net = load_checkpoint(
      cfg.predict.checkpoint.empty() ? model_path(cfg) : cfg.predict.checkpoint);
  const FieldD rho = read_raw(cfg.predict.input);
  const FieldD pred = net.predict(rho);
  const fs::path fields = sub_dir(cfg, "fields");
  write_raw((fields / "prediction.raw").string(), pred);
  write_vtk((fields / "prediction.vtk").string(), "crack_index", pred);
  write_manifest(cfg, "predict", {"fields/prediction.raw", "fields/prediction.vtk"},
                 {{"prediction", field_summary_json(pred)}});
  const FieldSummary s = summarize_field(pred);
  std::printf("predict: peak %.6g at (%d, %d, %d)\n", s.maxValue, s.i, s.j, s.k);
  return exitOk;
}

int cmd_crack_index(const RunConfig& cfg) {
  const FieldD rho =
      cfg.crack.input.empty() ? nogo_density(cfg.coupon) : read_raw(cfg.crack.input);
  const BuildResult br = simulate_build(rho, cfg.material, cfg.build, cfg.solver);
  const CrackFields cf = crack_field_from_build(br, cfg.material);
  const fs::path fields = sub_dir(cfg, "fields");
  const fs::path csv = sub_dir(cfg, "csv");
  write_crack_vtk((fields / "crack_indices.vtk").string(), cf);
  write_raw((fields / "mssi.raw").string(), cf.mssi);
  write_crack_summary_csv((csv / "crack_summary.csv").string(), cf);
  write_manifest(cfg, "crack-index",
                 {"fields/crack_indices.vtk", "fields/mssi.raw", "csv/crack_summary.csv"},
                 {{"mssi", field_summary_json(cf.mssi)},
                  {"sfi", field_summary_json(cf.sfi)},
                  {"tsi", field_summary_json(cf.tsi)}});
  const FieldSummary s = summarize_field(cf.mssi);
  std::printf("crack-index: peak MSSI %.6g at (%d, %d, %d)\n", s.maxValue, s.i, s.j, s.k);
  return exitOk;
}

int cmd_export(const RunConfig& cfg) {
  if (cfg.exp.input.empty() || cfg.exp.output.empty())
    throw ConfigError("config: export.input and export.output are required");
  const FieldD f = read_raw(cfg.exp.input);
  write_vtk(cfg.exp.output, cfg.exp.name, f);
  write_manifest(cfg, "export", {cfg.exp.output},
                 {{"cells", f.values.size()}, {"name", cfg.exp.name}});
  std::printf("export: %s -> %s\n", cfg.exp.input.c_str(), cfg.exp.output.c_str());
  return exitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"build-aware voxel topology optimization"};
  app.require_subcommand(1);

  std::string configPath, outOverride;
  std::uint64_t seedOverride = 0;
  int threadsOverride = 1;

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&);
  };
  const Cmd cmds[] = {
      {"gen-data", "optimize the variant grid and store the geometries", cmd_gen_data},
      {"select", "cluster stored geometries and pick exemplars", cmd_select},
      {"eval", "label stored geometries with the low-res build simulation", cmd_eval},
      {"train", "fit the crack-index surrogate on an evaluated dataset", cmd_train},
      {"predict", "apply a trained surrogate to a density field", cmd_predict},
      {"topo", "plain compliance topology optimization", cmd_topo},
      {"pato", "producibility-weighted topology optimization", cmd_pato},
      {"sweep", "trade-off sweep over volume targets and weights", cmd_sweep},
      {"crack-index", "build simulation and crack indices for one geometry", cmd_crack_index},
      {"export", "convert a raw field file to VTK", cmd_export},
  };
  std::map<const CLI::App*, int (*)(const RunConfig&)> dispatch;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", configPath, "JSON run configuration")->required();
    sub->add_option("--out", outOverride, "output directory override");
    sub->add_option("--seed", seedOverride, "seed override");
    sub->add_option("--threads", threadsOverride, "worker thread cap override")
        ->check(CLI::PositiveNumber);
    dispatch[sub] = c.fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    RunConfig cfg = load_config(configPath);
    if (sub->count("--seed")) {
      cfg.seed = seedOverride;
      cfg.effective["seed"] = seedOverride;
    }
    if (sub->count("--out")) {
      cfg.outDir = outOverride;
      cfg.effective["outDir"] = outOverride;
    }
    if (sub->count("--threads")) {
      cfg.threads = threadsOverride;
      cfg.effective["threads"] = threadsOverride;
    }
    return dispatch[sub](cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return exitConfig;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return exitSolver;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exitMissing;
  }
}

}  // namespace pato
