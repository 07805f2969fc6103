#include "pato/dataset.hpp"

#include "pato/crackindex.hpp"
#include "pato/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace pato {

std::vector<SampleRecord> generate_variants(const VariantConfig& cfg) {
  std::vector<SampleRecord> out;
  for (ProblemFamily fam : cfg.families)
    for (double vt : cfg.vtargets)
      for (unsigned seed : cfg.seeds) {
        char idbuf[96];
        std::snprintf(idbuf, sizeof idbuf, "%s_v%03d_s%u", problem_family_name(fam).c_str(),
                      int(std::lround(vt * 100)), seed);
        try {
          TOProblem prob = make_problem(fam, cfg.coupon, vt, seed);
          prob.maxIters = cfg.maxIters;
          prob.changeTol = cfg.changeTol;
          prob.material = cfg.material;
          prob.solver = cfg.solver;
          TOResult r = run_loop(prob);
          SampleRecord rec;
          rec.id = idbuf;
          rec.family = problem_family_name(fam);
          rec.vtarget = vt;
          rec.seed = seed;
          rec.geometry = std::move(r.density);
          out.push_back(std::move(rec));
        } catch (const std::exception& e) {
          std::fprintf(stderr, "variant %s failed: %s\n", idbuf, e.what());
        }
      }
  return out;
}

BitSlice binarize_central_slice(const FieldD& f, double threshold) {
  validate_dims(f.dims);
  return binarize(central_xz_slice(f), threshold);
}

double dice(const BitSlice& a, const BitSlice& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("dice: shape mismatch");
  const std::int64_t na = (a != 0).count();
  const std::int64_t nb = (b != 0).count();
  const std::int64_t nab = ((a != 0) && (b != 0)).count();
  if (na + nb == 0) return 1.0;
  return 2.0 * double(nab) / double(na + nb);
}

Eigen::MatrixXd affinity_matrix(const std::vector<BitSlice>& slices) {
  const int n = int(slices.size());
  if (n == 0) throw std::invalid_argument("affinity: empty sample set");
  Eigen::MatrixXd S(n, n);
  for (int i = 0; i < n; ++i) {
    S(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) S(i, j) = S(j, i) = dice(slices[size_t(i)], slices[size_t(j)]);
  }
  validate_affinity(S);
  return S;
}

void validate_affinity(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols() || S.rows() < 1) throw std::invalid_argument("affinity: not square");
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    if (S(i, i) != 1.0) throw std::invalid_argument("affinity: diagonal must be 1");
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      if (!(S(i, j) >= 0.0 && S(i, j) <= 1.0))
        throw std::invalid_argument("affinity: entries must lie in [0,1]");
      if (S(i, j) != S(j, i)) throw std::invalid_argument("affinity: not symmetric");
    }
  }
}

ExemplarSet affinity_propagation(const Eigen::MatrixXd& S, const ApOptions& opts) {
  validate_affinity(S);
  if (!(opts.damping >= 0.5 && opts.damping < 1.0))
    throw std::invalid_argument("affinity propagation: damping must lie in [0.5, 1)");
  if (opts.maxIter < 1) throw std::invalid_argument("affinity propagation: maxIter must be >= 1");
  const int n = int(S.rows());

  ExemplarSet result;
  if (n == 1) {
    result.exemplars = {0};
    result.assignment = {0};
    result.converged = true;
    result.iterations = 0;
    return result;
  }

  double pref = opts.preference;
  if (std::isnan(pref)) {
    std::vector<double> off;
    off.reserve(size_t(n) * (n - 1));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) off.push_back(S(i, j));
    std::nth_element(off.begin(), off.begin() + off.size() / 2, off.end());
    const double hi = off[off.size() / 2];
    if (off.size() % 2 == 0) {
      const double lo = *std::max_element(off.begin(), off.begin() + off.size() / 2);
      pref = 0.5 * (lo + hi);
    } else {
      pref = hi;
    }
  }

  Eigen::MatrixXd sim = S;
  sim.diagonal().setConstant(pref);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);

  const double lam = opts.damping;
  int stable = 0;
  int it = 0;
  for (; it < opts.maxIter; ++it) {
    // Responsibilities: how strongly i wants k as exemplar versus the best
    // alternative.
    Eigen::MatrixXd Rnew(n, n);
    for (int i = 0; i < n; ++i) {
      double m1 = -std::numeric_limits<double>::infinity(), m2 = m1;
      int k1 = -1;
      for (int k = 0; k < n; ++k) {
        const double v = A(i, k) + sim(i, k);
        if (v > m1) {
          m2 = m1;
          m1 = v;
          k1 = k;
        } else if (v > m2) {
          m2 = v;
        }
      }
      for (int k = 0; k < n; ++k) Rnew(i, k) = sim(i, k) - (k == k1 ? m2 : m1);
    }
    Rnew = lam * R + (1.0 - lam) * Rnew;

    // Availabilities: accumulated evidence that k is a good exemplar.
    Eigen::MatrixXd Anew(n, n);
    for (int k = 0; k < n; ++k) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i)
        if (i != k) sum += std::max(0.0, Rnew(i, k));
      for (int i = 0; i < n; ++i) {
        if (i == k) {
          Anew(k, k) = sum;
        } else {
          const double without = sum - std::max(0.0, Rnew(i, k));
          Anew(i, k) = std::min(0.0, Rnew(k, k) + without);
        }
      }
    }
    Anew = lam * A + (1.0 - lam) * Anew;

    const double delta =
        std::max((Rnew - R).cwiseAbs().maxCoeff(), (Anew - A).cwiseAbs().maxCoeff());
    R = Rnew;
    A = Anew;
    stable = delta < 1e-6 ? stable + 1 : 0;
    if (stable >= 10) {
      ++it;
      break;
    }
  }
  result.converged = stable >= 10;
  result.iterations = it;

  for (int k = 0; k < n; ++k)
    if (R(k, k) + A(k, k) > 0.0) result.exemplars.push_back(k);
  if (result.exemplars.empty()) {
    // Degenerate outcome (all self-evidence nonpositive): keep the result
    // usable by electing the strongest candidate, lowest index on ties.
    int best = 0;
    for (int k = 1; k < n; ++k)
      if (R(k, k) + A(k, k) > R(best, best) + A(best, best)) best = k;
    result.exemplars.push_back(best);
    result.converged = false;
  }

  result.assignment.assign(size_t(n), 0);
  for (int i = 0; i < n; ++i) {
    int bestC = 0;
    for (int c = 1; c < int(result.exemplars.size()); ++c)
      if (S(i, result.exemplars[size_t(c)]) > S(i, result.exemplars[size_t(bestC)])) bestC = c;
    result.assignment[size_t(i)] = bestC;
  }
  // An exemplar always owns itself, even on similarity ties.
  for (int c = 0; c < int(result.exemplars.size()); ++c)
    result.assignment[size_t(result.exemplars[size_t(c)])] = c;
  return result;
}

RankedSelection rank_k_exemplars(const Eigen::MatrixXd& S, const ExemplarSet& clusters,
                                 double distThreshold) {
  validate_affinity(S);
  const int n = int(S.rows());
  const int nc = int(clusters.exemplars.size());
  if (nc < 1 || int(clusters.assignment.size()) != n)
    throw std::invalid_argument("rank-k: cluster structure does not match the matrix");

  RankedSelection sel;
  std::vector<char> picked(size_t(n), 0);
  for (int c = 0; c < nc; ++c) {
    const int e = clusters.exemplars[size_t(c)];
    if (e < 0 || e >= n) throw std::invalid_argument("rank-k: exemplar out of range");
    sel.ids.push_back(e);
    sel.ranks.push_back(1);
    picked[size_t(e)] = 1;
  }

  for (int rank = 2;; ++rank) {
    bool admitted = false;
    for (int c = 0; c < nc; ++c) {
      int best = -1;
      double bestDist = -1.0;
      for (int i = 0; i < n; ++i) {
        if (picked[size_t(i)] || clusters.assignment[size_t(i)] != c) continue;
        double dmin = std::numeric_limits<double>::infinity();
        for (int s : sel.ids) dmin = std::min(dmin, 1.0 - S(i, s));
        if (dmin > bestDist) {
          bestDist = dmin;
          best = i;
        }
      }
      if (best >= 0 && bestDist >= distThreshold) {
        sel.ids.push_back(best);
        sel.ranks.push_back(rank);
        picked[size_t(best)] = 1;
        admitted = true;
      }
    }
    if (!admitted) break;
  }
  return sel;
}

Eigen::MatrixX2d classical_mds(const Eigen::MatrixXd& S) {
  validate_affinity(S);
  const Eigen::Index n = S.rows();
  Eigen::MatrixXd D2 = (Eigen::MatrixXd::Ones(n, n) - S).array().square();
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n) -
                      Eigen::MatrixXd::Constant(n, n, 1.0 / double(n));
  Eigen::MatrixXd B = -0.5 * J * D2 * J;
  B = 0.5 * (B + B.transpose());  // symmetrize roundoff before the eigensolve

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  Eigen::MatrixX2d coords = Eigen::MatrixX2d::Zero(n, 2);
  for (int c = 0; c < 2 && c < int(n); ++c) {
    const Eigen::Index idx = n - 1 - c;  // eigenvalues come back ascending
    const double lam = std::max(0.0, es.eigenvalues()[idx]);
    coords.col(c) = es.eigenvectors().col(idx) * std::sqrt(lam);
  }
  return coords;
}

std::vector<SampleRecord> augment_rotate180(const std::vector<SampleRecord>& samples) {
  std::vector<SampleRecord> out = samples;
  out.reserve(samples.size() * 2);
  for (const SampleRecord& s : samples) {
    SampleRecord r = s;
    r.id += "_r180";
    r.geometry = rotate180_z(s.geometry);
    if (s.evaluated) r.label = rotate180_z(s.label);
    out.push_back(std::move(r));
  }
  return out;
}

FieldD evaluate_sample(const FieldD& geom, const GridDims& lowDims, const GridDims& trainDims,
                       const MaterialSpec& mat, const BuildSpec& spec, const SolverOpts& opts) {
  validate_dims(lowDims);
  validate_dims(trainDims);
  if (lowDims.nx > trainDims.nx || lowDims.ny > trainDims.ny || lowDims.nz > trainDims.nz)
    throw std::invalid_argument("evaluate: low-res dims must not exceed training dims");
  const FieldD low = downsample_volume_average(geom, lowDims);
  const BuildResult build = simulate_build(low, mat, spec, opts);
  const CrackFields cf = crack_field_from_build(build, mat);
  return trilinear_resample(cf.mssi, trainDims);
}

GridDims half_dims(const GridDims& d) {
  GridDims out;
  out.nx = std::max(2, d.nx / 2);
  out.ny = std::max(2, d.ny / 2);
  out.nz = std::max(2, d.nz / 2);
  out.h = d.h * double(d.nx) / double(out.nx);
  return out;
}

std::vector<EvalFailure> evaluate_all(std::vector<SampleRecord>& recs, const GridDims& lowDims,
                                      const MaterialSpec& mat, const BuildSpec& spec,
                                      const SolverOpts& opts, int nWorkers) {
  if (nWorkers < 1) throw std::invalid_argument("evaluate: nWorkers must be >= 1");
  std::atomic<size_t> next{0};
  std::mutex mu;
  std::vector<EvalFailure> failures;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= recs.size()) return;
      SampleRecord& r = recs[i];
      if (r.evaluated) continue;
      try {
        r.label = evaluate_sample(r.geometry, lowDims, r.geometry.dims, mat, spec, opts);
        r.evaluated = true;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        failures.push_back({int(i), e.what()});
      }
    }
  };
  if (nWorkers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nWorkers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  std::sort(failures.begin(), failures.end(),
            [](const EvalFailure& a, const EvalFailure& b) { return a.index < b.index; });
  return failures;
}

DatasetSplit split_dataset(int n, double testFraction, unsigned seed) {
  if (n < 0) throw std::invalid_argument("split: negative size");
  if (!(testFraction >= 0.0 && testFraction <= 1.0))
    throw std::invalid_argument("split: test fraction must lie in [0,1]");
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int nTest = int(std::lround(testFraction * n));
  DatasetSplit s;
  s.test.assign(idx.begin(), idx.begin() + nTest);
  s.train.assign(idx.begin() + nTest, idx.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void save_dataset(const std::string& dir, const std::vector<SampleRecord>& recs) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["samples"] = nlohmann::json::array();
  for (const SampleRecord& r : recs) {
    const std::string geomFile = "geometry_" + r.id + ".raw";
    write_raw(dir + "/" + geomFile, r.geometry);
    nlohmann::json j{{"id", r.id},       {"family", r.family},      {"vtarget", r.vtarget},
                     {"seed", r.seed},   {"geometry", geomFile},    {"evaluated", r.evaluated}};
    if (r.evaluated) {
      const std::string labelFile = "label_" + r.id + ".raw";
      write_raw(dir + "/" + labelFile, r.label);
      j["label"] = labelFile;
    }
    manifest["samples"].push_back(std::move(j));
  }
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("cannot open " + dir + "/manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + dir + "/manifest.json");
}

std::vector<SampleRecord> load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("cannot open " + dir + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(in);
  std::vector<SampleRecord> recs;
  for (const auto& j : manifest.at("samples")) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.vtarget = j.at("vtarget").get<double>();
    r.seed = j.at("seed").get<unsigned>();
    r.geometry = read_raw(dir + "/" + j.at("geometry").get<std::string>());
    r.evaluated = j.at("evaluated").get<bool>();
    if (r.evaluated) r.label = read_raw(dir + "/" + j.at("label").get<std::string>());
    recs.push_back(std::move(r));
  }
  return recs;
}

void write_affinity_csv(const std::string& path, const Eigen::MatrixXd& S) {
  validate_affinity(S);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  char buf[32];
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", S(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_mds_csv(const std::string& path, const std::vector<std::string>& ids,
                   const Eigen::MatrixX2d& coords) {
  if (Eigen::Index(ids.size()) != coords.rows())
    throw std::invalid_argument("mds csv: id count does not match coordinates");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "id,x,y\n";
  char buf[80];
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", coords(i, 0), coords(i, 1));
    out << ids[size_t(i)] << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace pato
