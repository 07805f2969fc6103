#include "pato/config.hpp"

#include "pato/rng.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace pato {

namespace {

using nlohmann::json;

/// Section reader that tracks which keys were consumed; done() rejects the
/// rest, so typos surface instead of silently falling back to defaults.
class Keys {
 public:
  Keys(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: " + name_ + " must be an object");
  }

  const json* find(const char* k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  double num(const char* k, double def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_number()) throw bad(k, "a number");
    return v->get<double>();
  }

  int integer(const char* k, int def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_number_integer()) throw bad(k, "an integer");
    return v->get<int>();
  }

  std::uint64_t u64(const char* k, std::uint64_t def) {
    const json* v = find(k);
    if (!v) return def;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    // in-memory documents store small literals signed; parsed text does not
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0)
      return std::uint64_t(v->get<std::int64_t>());
    throw bad(k, "a non-negative integer");
  }

  bool boolean(const char* k, bool def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_boolean()) throw bad(k, "a boolean");
    return v->get<bool>();
  }

  std::string str(const char* k, std::string def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_string()) throw bad(k, "a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const char* k, std::vector<double> def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_array()) throw bad(k, "an array of numbers");
    std::vector<double> out;
    for (const json& e : *v) {
      if (!e.is_number()) throw bad(k, "an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<int> integers(const char* k, std::vector<int> def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_array()) throw bad(k, "an array of integers");
    std::vector<int> out;
    for (const json& e : *v) {
      if (!e.is_number_integer()) throw bad(k, "an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::vector<std::string> strings(const char* k, std::vector<std::string> def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_array()) throw bad(k, "an array of strings");
    std::vector<std::string> out;
    for (const json& e : *v) {
      if (!e.is_string()) throw bad(k, "an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  void done() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key()))
        throw ConfigError("config: unknown key \"" + item.key() + "\" in " + name_);
  }

 private:
  ConfigError bad(const char* k, const char* want) const {
    return ConfigError("config: " + name_ + "." + k + " must be " + want);
  }

  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

ProblemFamily family_from(const std::string& s, const std::string& where) {
  for (ProblemFamily f :
       {ProblemFamily::SymmetricThermal, ProblemFamily::AsymmetricThermal,
        ProblemFamily::HydrostaticPressure, ProblemFamily::SegmentLoaded})
    if (problem_family_name(f) == s) return f;
  throw ConfigError("config: " + where + ": unknown problem family \"" + s + "\"");
}

UNetVariant variant_from(const std::string& s) {
  for (UNetVariant v :
       {UNetVariant::Plain, UNetVariant::SpatialAttention, UNetVariant::AttentionGate})
    if (unet_variant_name(v) == s) return v;
  throw ConfigError("config: surrogate.variant: unknown variant \"" + s + "\"");
}

SensScaling scaling_from(const std::string& s) {
  if (s == "raw") return SensScaling::Raw;
  if (s == "normalized") return SensScaling::MaxAbsNormalized;
  throw ConfigError("config: pato.scaling must be \"raw\" or \"normalized\"");
}

GridDims dims_from(Keys& k, const char* key, GridDims def) {
  std::vector<int> t = k.integers(key, {});
  if (t.empty()) return def;
  if (t.size() != 3) throw ConfigError(std::string("config: ") + key + " needs three entries");
  return GridDims{t[0], t[1], t[2], def.h};
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

void validate(const RunConfig& c) {
  try {
    validate_material(c.material);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check(c.threads >= 1, "threads must be at least 1");
  check(!c.outDir.empty(), "outDir must not be empty");
  const GridDims& d = c.coupon.dims;
  check(d.nx >= 2 && d.ny >= 1 && d.nz >= 2 && d.h > 0.0, "coupon grid is degenerate");
  check(c.coupon.shell >= 0, "coupon.shell must not be negative");
  check(c.solver.cgTol > 0.0 && c.solver.cgMaxIter >= 1, "solver settings out of range");
  check(c.build.layersPerStep >= 1, "build.layersPerStep must be at least 1");
  check(c.build.rhoActive > 0.0 && c.build.rhoActive <= 1.0,
        "build.rhoActive must lie in (0, 1]");
  check(c.topo.vtarget > 0.0 && c.topo.vtarget < 1.0, "topo.vtarget must lie in (0, 1)");
  check(c.topo.maxIters >= 1, "topo.maxIters must be at least 1");
  check(c.topo.moveLimit > 0.0 && c.topo.changeTol > 0.0, "topo step controls must be positive");
  check(!c.dataset.families.empty(), "dataset.families must not be empty");
  check(!c.dataset.vtargets.empty(), "dataset.vtargets must not be empty");
  check(!c.dataset.seeds.empty(), "dataset.seeds must not be empty");
  for (double v : c.dataset.vtargets)
    check(v > 0.0 && v < 1.0, "dataset.vtargets entries must lie in (0, 1)");
  check(c.dataset.maxIters >= 1 && c.dataset.changeTol > 0.0, "dataset loop controls out of range");
  check(c.dataset.testFraction >= 0.0 && c.dataset.testFraction < 1.0,
        "dataset.testFraction must lie in [0, 1)");
  if (c.dataset.lowDims.nx != 0)
    check(c.dataset.lowDims.nx >= 2 && c.dataset.lowDims.ny >= 1 && c.dataset.lowDims.nz >= 2,
          "dataset.lowDims is degenerate");
  check(c.select.damping >= 0.5 && c.select.damping < 1.0,
        "select.damping must lie in [0.5, 1)");
  check(c.select.maxIter >= 1, "select.maxIter must be at least 1");
  check(c.select.distThreshold >= 0.0, "select.distThreshold must not be negative");
  check(c.surrogate.net.ladder.size() >= 2, "surrogate.ladder needs at least two entries");
  for (int w : c.surrogate.net.ladder)
    check(w >= 1, "surrogate.ladder entries must be positive");
  check(c.surrogate.net.kernel >= 1 && c.surrogate.net.kernel % 2 == 1,
        "surrogate.kernel must be odd and positive");
  check(c.surrogate.train.lr > 0.0, "surrogate.lr must be positive");
  check(c.surrogate.train.batchSize >= 1, "surrogate.batchSize must be at least 1");
  check(c.surrogate.train.maxEpochs >= 1, "surrogate.maxEpochs must be at least 1");
  check(c.surrogate.train.patience >= 1, "surrogate.patience must be at least 1");
  check(c.pato.w >= 0.0 && c.pato.w <= 1.0, "pato.w must lie in [0, 1]");
  if (c.pato.surrogateDims.nx != 0)
    check(c.pato.surrogateDims.nx >= 2 && c.pato.surrogateDims.ny >= 1 &&
              c.pato.surrogateDims.nz >= 2,
          "pato.surrogateDims is degenerate");
  check(!c.sweep.vtargets.empty() && !c.sweep.ws.empty(), "sweep lists must not be empty");
  for (double v : c.sweep.vtargets)
    check(v > 0.0 && v < 1.0, "sweep.vtargets entries must lie in (0, 1)");
  for (double w : c.sweep.ws) check(w >= 0.0 && w <= 1.0, "sweep.ws entries must lie in [0, 1]");
}

}  // namespace

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  Keys top(doc, "run config");
  cfg.seed = top.u64("seed", cfg.seed);
  cfg.threads = top.integer("threads", cfg.threads);
  cfg.outDir = top.str("outDir", cfg.outDir);

  if (const json* s = top.find("coupon")) {
    Keys k(*s, "coupon");
    GridDims& d = cfg.coupon.dims;
    d.nx = k.integer("nx", d.nx);
    d.ny = k.integer("ny", d.ny);
    d.nz = k.integer("nz", d.nz);
    d.h = k.num("h", d.h);
    cfg.coupon.shell = k.integer("shell", cfg.coupon.shell);
    cfg.coupon.notchWidth = k.num("notchWidth", cfg.coupon.notchWidth);
    cfg.coupon.notchHeight = k.num("notchHeight", cfg.coupon.notchHeight);
    cfg.coupon.notchGap = k.integer("notchGap", cfg.coupon.notchGap);
    cfg.coupon.channelRadius = k.num("channelRadius", cfg.coupon.channelRadius);
    k.done();
  }

  if (const json* s = top.find("material")) {
    Keys k(*s, "material");
    MaterialSpec& m = cfg.material;
    m.E0 = k.num("E0", m.E0);
    m.nu = k.num("nu", m.nu);
    m.k0 = k.num("k0", m.k0);
    m.Emin = k.num("Emin", m.Emin);
    m.kmin = k.num("kmin", m.kmin);
    m.p = k.num("penal", m.p);
    m.sigmaYield = k.num("sigmaYield", m.sigmaYield);
    m.sigmaUTS = k.num("sigmaUTS", m.sigmaUTS);
    m.epsUTS = k.num("epsUTS", m.epsUTS);
    k.done();
  }

  if (const json* s = top.find("solver")) {
    Keys k(*s, "solver");
    cfg.solver.cgTol = k.num("cgTol", cfg.solver.cgTol);
    cfg.solver.cgMaxIter = k.integer("cgMaxIter", cfg.solver.cgMaxIter);
    k.done();
  }

  if (const json* s = top.find("build")) {
    Keys k(*s, "build");
    cfg.build.layersPerStep = k.integer("layersPerStep", cfg.build.layersPerStep);
    cfg.build.rhoActive = k.num("rhoActive", cfg.build.rhoActive);
    std::vector<double> e = k.numbers("inherentStrain", {});
    if (!e.empty()) {
      if (e.size() != 3) throw ConfigError("config: build.inherentStrain needs three entries");
      cfg.build.inherent = InherentStrain{e[0], e[1], e[2]};
    }
    k.done();
  }

  if (const json* s = top.find("topo")) {
    Keys k(*s, "topo");
    cfg.topo.family = family_from(k.str("family", problem_family_name(cfg.topo.family)),
                                  "topo.family");
    cfg.topo.vtarget = k.num("vtarget", cfg.topo.vtarget);
    cfg.topo.maxIters = k.integer("maxIters", cfg.topo.maxIters);
    cfg.topo.moveLimit = k.num("moveLimit", cfg.topo.moveLimit);
    cfg.topo.changeTol = k.num("changeTol", cfg.topo.changeTol);
    k.done();
  }

  if (const json* s = top.find("dataset")) {
    Keys k(*s, "dataset");
    cfg.dataset.dir = k.str("dir", cfg.dataset.dir);
    std::vector<std::string> fams = k.strings("families", {});
    if (!fams.empty()) {
      cfg.dataset.families.clear();
      for (const std::string& f : fams)
        cfg.dataset.families.push_back(family_from(f, "dataset.families"));
    }
    cfg.dataset.vtargets = k.numbers("vtargets", cfg.dataset.vtargets);
    std::vector<int> seeds = k.integers("seeds", {});
    if (!seeds.empty()) {
      cfg.dataset.seeds.clear();
      for (int s2 : seeds) {
        if (s2 < 0) throw ConfigError("config: dataset.seeds entries must not be negative");
        cfg.dataset.seeds.push_back(unsigned(s2));
      }
    }
    cfg.dataset.maxIters = k.integer("maxIters", cfg.dataset.maxIters);
    cfg.dataset.changeTol = k.num("changeTol", cfg.dataset.changeTol);
    cfg.dataset.lowDims = dims_from(k, "lowDims", cfg.dataset.lowDims);
    cfg.dataset.testFraction = k.num("testFraction", cfg.dataset.testFraction);
    cfg.dataset.augment = k.boolean("augment", cfg.dataset.augment);
    k.done();
  }

  if (const json* s = top.find("select")) {
    Keys k(*s, "select");
    cfg.select.damping = k.num("damping", cfg.select.damping);
    cfg.select.preference = k.num("preference", cfg.select.preference);
    cfg.select.maxIter = k.integer("maxIter", cfg.select.maxIter);
    cfg.select.distThreshold = k.num("distThreshold", cfg.select.distThreshold);
    k.done();
  }

  if (const json* s = top.find("surrogate")) {
    Keys k(*s, "surrogate");
    cfg.surrogate.net.variant =
        variant_from(k.str("variant", unet_variant_name(cfg.surrogate.net.variant)));
    std::vector<int> ladder = k.integers("ladder", {});
    if (!ladder.empty()) cfg.surrogate.net.ladder = ladder;
    cfg.surrogate.net.kernel = k.integer("kernel", cfg.surrogate.net.kernel);
    cfg.surrogate.train.lr = k.num("lr", cfg.surrogate.train.lr);
    cfg.surrogate.train.batchSize = k.integer("batchSize", cfg.surrogate.train.batchSize);
    cfg.surrogate.train.maxEpochs = k.integer("maxEpochs", cfg.surrogate.train.maxEpochs);
    cfg.surrogate.train.patience = k.integer("patience", cfg.surrogate.train.patience);
    cfg.surrogate.train.minDelta = k.num("minDelta", cfg.surrogate.train.minDelta);
    cfg.surrogate.checkpoint = k.str("checkpoint", cfg.surrogate.checkpoint);
    k.done();
  }

  if (const json* s = top.find("pato")) {
    Keys k(*s, "pato");
    cfg.pato.w = k.num("w", cfg.pato.w);
    cfg.pato.scaling = scaling_from(
        k.str("scaling", cfg.pato.scaling == SensScaling::Raw ? "raw" : "normalized"));
    cfg.pato.checkpoint = k.str("checkpoint", cfg.pato.checkpoint);
    cfg.pato.surrogateDims = dims_from(k, "surrogateDims", cfg.pato.surrogateDims);
    k.done();
  }

  if (const json* s = top.find("sweep")) {
    Keys k(*s, "sweep");
    cfg.sweep.vtargets = k.numbers("vtargets", cfg.sweep.vtargets);
    cfg.sweep.ws = k.numbers("ws", cfg.sweep.ws);
    k.done();
  }

  if (const json* s = top.find("predict")) {
    Keys k(*s, "predict");
    cfg.predict.checkpoint = k.str("checkpoint", cfg.predict.checkpoint);
    cfg.predict.input = k.str("input", cfg.predict.input);
    k.done();
  }

  if (const json* s = top.find("crack")) {
    Keys k(*s, "crack");
    cfg.crack.input = k.str("input", cfg.crack.input);
    k.done();
  }

  if (const json* s = top.find("export")) {
    Keys k(*s, "export");
    cfg.exp.input = k.str("input", cfg.exp.input);
    cfg.exp.output = k.str("output", cfg.exp.output);
    cfg.exp.name = k.str("name", cfg.exp.name);
    k.done();
  }

  top.done();
  validate(cfg);
  cfg.effective = doc;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return parse_config(doc);
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                (unsigned long long)fnv1a64(cfg.effective.dump()));
  return buf;
}

}  // namespace pato
