#include "pato/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace pato {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

int pad_to(int n, int mult) { return (n + mult - 1) / mult * mult; }

void check_open_unit(const Eigen::ArrayXd& v) {
  if (!(v > 0.0).all() || !(v < 1.0).all())
    throw std::logic_error("attention coefficients left (0,1)");
}

// Padded input leaf, network graph, and the output cropped back to the
// field's own dims, all on the caller's tape.
struct RunNodes {
  int input = -1;
  int cropped = -1;
  UNet::Graph graph;
  int px = 0, py = 0, pz = 0;
};

RunNodes run_on(Tape& t, UNet& net, const FieldD& rho) {
  validate_dims(rho.dims);
  const int mult = 1 << net.levels();
  RunNodes r;
  r.px = pad_to(rho.dims.nx, mult);
  r.py = pad_to(rho.dims.ny, mult);
  r.pz = pad_to(rho.dims.nz, mult);
  Eigen::ArrayXd pv = Eigen::ArrayXd::Zero(std::int64_t(r.px) * r.py * r.pz);
  for (int k = 0; k < rho.dims.nz; ++k)
    for (int j = 0; j < rho.dims.ny; ++j)
      for (int i = 0; i < rho.dims.nx; ++i)
        pv[i + std::int64_t(r.px) * (j + std::int64_t(r.py) * k)] = rho.at(i, j, k);
  r.input = t.leaf(TensorShape{1, 1, r.px, r.py, r.pz}, std::move(pv));
  r.graph = net.build(t, r.input);
  r.cropped = t.crop_spatial(r.graph.out, rho.dims.nx, rho.dims.ny, rho.dims.nz);
  return r;
}

void adam_step(const std::vector<Param*>& ps, double lr, int t) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (Param* p : ps) {
    p->m = b1 * p->m + (1.0 - b1) * p->g;
    p->v = b2 * p->v + (1.0 - b2) * p->g.square();
    p->w -= lr * (p->m / c1) / ((p->v / c2).sqrt() + eps);
  }
}

}  // namespace

std::string unet_variant_name(UNetVariant v) {
  switch (v) {
    case UNetVariant::Plain: return "plain";
    case UNetVariant::SpatialAttention: return "spatial_attention";
    case UNetVariant::AttentionGate: return "attention_gate";
  }
  throw std::invalid_argument("unknown network variant");
}

UNet::UNet(const UNetSpec& spec, unsigned seed) : spec_(spec) {
  require(spec_.ladder.size() >= 2, "network ladder needs at least one level plus a bottleneck");
  for (int c : spec_.ladder) require(c >= 1, "network ladder channels must be >= 1");
  require(spec_.kernel >= 1 && spec_.kernel % 2 == 1, "network kernel must be odd");

  std::mt19937 rng(seed);
  auto glorot = [&rng](Param& p) {
    const int k3 = p.shape.nx * p.shape.ny * p.shape.nz;
    const double limit = std::sqrt(6.0 / double((p.shape.c + p.shape.n) * k3));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::int64_t i = 0; i < p.w.size(); ++i) p.w[i] = dist(rng);
  };
  auto conv = [&](int cout, int cin, int k) {
    Param p = make_param(TensorShape{cout, cin, k, k, k});
    glorot(p);
    return p;
  };
  auto bias = [](int cout) { return make_param(TensorShape{1, cout, 1, 1, 1}); };

  const int L = levels();
  const int k = spec_.kernel;
  const std::vector<int>& lad = spec_.ladder;

  for (int l = 0; l < L; ++l) {
    const int cin = l == 0 ? 1 : lad[size_t(l) - 1];
    encAw_.push_back(conv(lad[size_t(l)], cin, k));
    encAb_.push_back(bias(lad[size_t(l)]));
    encBw_.push_back(conv(lad[size_t(l)], lad[size_t(l)], k));
    encBb_.push_back(bias(lad[size_t(l)]));
  }
  botAw_ = conv(lad[size_t(L)], lad[size_t(L) - 1], k);
  botAb_ = bias(lad[size_t(L)]);
  botBw_ = conv(lad[size_t(L)], lad[size_t(L)], k);
  botBb_ = bias(lad[size_t(L)]);
  if (spec_.variant == UNetVariant::SpatialAttention) {
    saW_ = conv(1, 2, 7);
    saB_ = bias(1);
  }
  for (int l = 0; l < L; ++l) {
    const int cUp = l == L - 1 ? lad[size_t(L)] : lad[size_t(l) + 1];
    upW_.push_back(conv(lad[size_t(l)], cUp, k));
    upB_.push_back(bias(lad[size_t(l)]));
    mergeAw_.push_back(conv(lad[size_t(l)], 2 * lad[size_t(l)], k));
    mergeAb_.push_back(bias(lad[size_t(l)]));
    mergeBw_.push_back(conv(lad[size_t(l)], lad[size_t(l)], k));
    mergeBb_.push_back(bias(lad[size_t(l)]));
    if (spec_.variant == UNetVariant::AttentionGate) {
      const int fint = std::max(1, lad[size_t(l)] / 2);
      agXw_.push_back(conv(fint, lad[size_t(l)], 1));
      agXb_.push_back(bias(fint));
      agGw_.push_back(conv(fint, lad[size_t(l)], 1));
      agGb_.push_back(bias(fint));
      agPw_.push_back(conv(1, fint, 1));
      Param pb = bias(1);
      pb.w.setConstant(2.0);  // gates start nearly open
      agPb_.push_back(std::move(pb));
    }
  }
  outW_ = conv(1, lad[0], 1);
  outB_ = bias(1);
}

std::vector<Param*> UNet::params() {
  std::vector<Param*> ps;
  const int L = levels();
  for (int l = 0; l < L; ++l) {
    ps.push_back(&encAw_[size_t(l)]);
    ps.push_back(&encAb_[size_t(l)]);
    ps.push_back(&encBw_[size_t(l)]);
    ps.push_back(&encBb_[size_t(l)]);
  }
  ps.push_back(&botAw_);
  ps.push_back(&botAb_);
  ps.push_back(&botBw_);
  ps.push_back(&botBb_);
  if (spec_.variant == UNetVariant::SpatialAttention) {
    ps.push_back(&saW_);
    ps.push_back(&saB_);
  }
  for (int l = 0; l < L; ++l) {
    ps.push_back(&upW_[size_t(l)]);
    ps.push_back(&upB_[size_t(l)]);
    ps.push_back(&mergeAw_[size_t(l)]);
    ps.push_back(&mergeAb_[size_t(l)]);
    ps.push_back(&mergeBw_[size_t(l)]);
    ps.push_back(&mergeBb_[size_t(l)]);
    if (spec_.variant == UNetVariant::AttentionGate) {
      ps.push_back(&agXw_[size_t(l)]);
      ps.push_back(&agXb_[size_t(l)]);
      ps.push_back(&agGw_[size_t(l)]);
      ps.push_back(&agGb_[size_t(l)]);
      ps.push_back(&agPw_[size_t(l)]);
      ps.push_back(&agPb_[size_t(l)]);
    }
  }
  ps.push_back(&outW_);
  ps.push_back(&outB_);
  return ps;
}

std::vector<const Param*> UNet::params() const {
  std::vector<Param*> ps = const_cast<UNet*>(this)->params();
  return {ps.begin(), ps.end()};
}

UNet::Graph UNet::build(Tape& t, int x) {
  const TensorShape xs = t.shape(x);
  const int mult = 1 << levels();
  require(xs.n == 1 && xs.c == 1, "network input must be a single-sample, single-channel tensor");
  require(xs.nx % mult == 0 && xs.ny % mult == 0 && xs.nz % mult == 0,
          "network input dims must be divisible by 2^levels");

  Graph g;
  std::vector<int> skips;
  int h = x;
  const int L = levels();
  for (int l = 0; l < L; ++l) {
    h = t.relu(t.conv3d(h, encAw_[size_t(l)], encAb_[size_t(l)]));
    h = t.relu(t.conv3d(h, encBw_[size_t(l)], encBb_[size_t(l)]));
    skips.push_back(h);
    h = t.maxpool2(h);
  }
  h = t.relu(t.conv3d(h, botAw_, botAb_));
  h = t.relu(t.conv3d(h, botBw_, botBb_));
  if (spec_.variant == UNetVariant::SpatialAttention) {
    const int maps = t.concat_c(t.channel_mean(h), t.channel_max(h));
    const int amap = t.sigmoid(t.conv3d(maps, saW_, saB_));
    check_open_unit(t.val(amap));
    g.attention.push_back(amap);
    h = t.mul_bcast(h, amap);
  }
  for (int l = L - 1; l >= 0; --l) {
    const int up = t.relu(t.conv3d(t.upsample2(h), upW_[size_t(l)], upB_[size_t(l)]));
    int s = skips[size_t(l)];
    if (spec_.variant == UNetVariant::AttentionGate) {
      const int q = t.relu(t.add(t.conv3d(s, agXw_[size_t(l)], agXb_[size_t(l)]),
                                 t.conv3d(up, agGw_[size_t(l)], agGb_[size_t(l)])));
      const int alpha = t.sigmoid(t.conv3d(q, agPw_[size_t(l)], agPb_[size_t(l)]));
      check_open_unit(t.val(alpha));
      g.attention.push_back(alpha);
      s = t.mul_bcast(s, alpha);
    }
    h = t.relu(t.conv3d(t.concat_c(s, up), mergeAw_[size_t(l)], mergeAb_[size_t(l)]));
    h = t.relu(t.conv3d(h, mergeBw_[size_t(l)], mergeBb_[size_t(l)]));
  }
  g.out = t.conv3d(h, outW_, outB_);
  std::reverse(g.attention.begin(), g.attention.end());  // finest first
  return g;
}

FieldD UNet::predict(const FieldD& rho) {
  Tape t;
  const RunNodes r = run_on(t, *this, rho);
  FieldD out;
  out.dims = rho.dims;
  out.values = t.val(r.cropped);
  return out;
}

double UNet::predict_max(const FieldD& rho, const std::vector<std::uint8_t>* mask) {
  Tape t;
  const RunNodes r = run_on(t, *this, rho);
  return t.val(t.global_max(r.cropped, mask))[0];
}

GradResult UNet::input_gradient(const FieldD& rho, const std::vector<std::uint8_t>* mask) {
  Tape t;
  const RunNodes r = run_on(t, *this, rho);
  const int peak = t.global_max(r.cropped, mask);
  t.backward(peak);

  GradResult res;
  res.maxValue = t.val(peak)[0];
  res.inputGradient = make_field<double>(rho.dims);
  const Eigen::ArrayXd& g = t.grad(r.input);
  for (int k = 0; k < rho.dims.nz; ++k)
    for (int j = 0; j < rho.dims.ny; ++j)
      for (int i = 0; i < rho.dims.nx; ++i)
        res.inputGradient.at(i, j, k) = g[i + std::int64_t(r.px) * (j + std::int64_t(r.py) * k)];
  return res;
}

std::vector<FieldD> UNet::attention_maps(const FieldD& rho) {
  Tape t;
  const RunNodes r = run_on(t, *this, rho);
  std::vector<FieldD> maps;
  for (int id : r.graph.attention) {
    const TensorShape& s = t.shape(id);
    const int factor = r.px / s.nx;
    FieldD f;
    f.dims = GridDims{s.nx, s.ny, s.nz, rho.dims.h * factor};
    f.values = t.val(id);
    maps.push_back(std::move(f));
  }
  return maps;
}

double mre(const FieldD& pred, const FieldD& truth, double eps) {
  if (!(pred.dims == truth.dims)) throw std::invalid_argument("mre: field dims differ");
  return ((truth.values - pred.values).abs() /
          (eps + truth.values.abs().max(pred.values.abs())))
      .mean();
}

TrainResult train(UNet& net, const std::vector<TrainSample>& trainSet,
                  const std::vector<TrainSample>& valSet, const TrainConfig& cfg) {
  require(!trainSet.empty(), "train: empty training set");
  require(cfg.lr > 0.0, "train: learning rate must be > 0");
  require(cfg.batchSize >= 1, "train: batch size must be >= 1");
  require(cfg.maxEpochs >= 1, "train: maxEpochs must be >= 1");
  require(cfg.patience >= 1, "train: patience must be >= 1");
  for (const auto& s : trainSet)
    require(s.input.dims == s.target.dims, "train: sample input and target dims differ");
  for (const auto& s : valSet)
    require(s.input.dims == s.target.dims, "train: sample input and target dims differ");

  const std::vector<Param*> ps = net.params();
  std::mt19937 rng(cfg.seed);
  std::vector<size_t> order(trainSet.size());
  std::iota(order.begin(), order.end(), size_t(0));

  TrainResult res;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Eigen::ArrayXd> snapshot;
  int sinceBest = 0;
  int step = 0;

  for (int epoch = 1; epoch <= cfg.maxEpochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double trainLoss = 0.0;
    for (size_t b0 = 0; b0 < order.size(); b0 += size_t(cfg.batchSize)) {
      const size_t b1 = std::min(order.size(), b0 + size_t(cfg.batchSize));
      for (Param* p : ps) p->g.setZero();
      for (size_t i = b0; i < b1; ++i) {
        const TrainSample& s = trainSet[order[i]];
        Tape t;
        const RunNodes r = run_on(t, net, s.input);
        const int loss = t.mse(r.cropped, s.target.values);
        t.backward(loss, 1.0 / double(b1 - b0));
        trainLoss += t.val(loss)[0];
      }
      adam_step(ps, cfg.lr, ++step);
    }
    trainLoss /= double(trainSet.size());

    double valLoss = std::numeric_limits<double>::quiet_NaN();
    double valMre = std::numeric_limits<double>::quiet_NaN();
    if (!valSet.empty()) {
      valLoss = valMre = 0.0;
      for (const TrainSample& s : valSet) {
        const FieldD p = net.predict(s.input);
        valLoss += (p.values - s.target.values).square().mean();
        valMre += mre(p, s.target);
      }
      valLoss /= double(valSet.size());
      valMre /= double(valSet.size());
    }

    if (!std::isfinite(trainLoss) || (!valSet.empty() && !std::isfinite(valLoss)))
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
    res.history.push_back(EpochStats{epoch, trainLoss, valLoss, valMre});

    if (!valSet.empty()) {
      if (valLoss < best - cfg.minDelta) {
        best = valLoss;
        res.bestEpoch = epoch;
        sinceBest = 0;
        snapshot.clear();
        for (Param* p : ps) snapshot.push_back(p->w);
      } else if (++sinceBest >= cfg.patience) {
        res.stoppedEarly = true;
        break;
      }
    }
  }

  if (!snapshot.empty())
    for (size_t i = 0; i < ps.size(); ++i) ps[i]->w = snapshot[i];
  res.bestValLoss = valSet.empty() ? std::numeric_limits<double>::quiet_NaN() : best;
  return res;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fprintf(f, "epoch,train_loss,val_loss,val_mre\n");
  for (const EpochStats& e : history)
    std::fprintf(f, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.trainLoss, e.valLoss, e.valMre);
  std::fclose(f);
}

namespace {

void put32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void put64(std::ofstream& f, std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
std::uint32_t get32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t get64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const UNet& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.write("PATO", 4);
  put32(f, 1);  // format version
  put32(f, std::uint32_t(net.spec().variant));
  put32(f, std::uint32_t(net.spec().kernel));
  put32(f, std::uint32_t(net.spec().ladder.size()));
  for (int c : net.spec().ladder) put32(f, std::uint32_t(c));
  const std::vector<const Param*> ps = net.params();
  put64(f, ps.size());
  for (const Param* p : ps) {
    put64(f, std::uint64_t(p->w.size()));
    f.write(reinterpret_cast<const char*>(p->w.data()), std::streamsize(8 * p->w.size()));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

UNet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  char magic[4] = {};
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "PATO")
    throw std::runtime_error(path + " is not a model checkpoint");
  if (get32(f) != 1) throw std::runtime_error("unsupported checkpoint version in " + path);

  UNetSpec spec;
  const std::uint32_t variant = get32(f);
  if (variant > 2) throw std::runtime_error("corrupt checkpoint: bad variant tag");
  spec.variant = UNetVariant(variant);
  spec.kernel = int(get32(f));
  spec.ladder.resize(get32(f));
  for (int& c : spec.ladder) c = int(get32(f));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);

  UNet net(spec, 0);
  const std::vector<Param*> ps = net.params();
  if (get64(f) != ps.size()) throw std::runtime_error("corrupt checkpoint: parameter count mismatch");
  for (Param* p : ps) {
    if (get64(f) != std::uint64_t(p->w.size()))
      throw std::runtime_error("corrupt checkpoint: weight blob size mismatch");
    f.read(reinterpret_cast<char*>(p->w.data()), std::streamsize(8 * p->w.size()));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  }
  return net;
}

}  // namespace pato
