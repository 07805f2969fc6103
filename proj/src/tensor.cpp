#include "pato/tensor.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pato {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using CRowMap = Eigen::Map<const RowMat>;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Patch matrix for one sample: rows run over (ci, dz, dy, dx), columns over
// voxels in storage order; out-of-domain taps are zero.
Eigen::MatrixXd im2col(const Eigen::ArrayXd& xv, const TensorShape& xs, int sample, int k) {
  const int pad = k / 2;
  const std::int64_t vox = xs.spatial();
  const std::int64_t base = sample * xs.c * vox;
  Eigen::MatrixXd M(std::int64_t(xs.c) * k * k * k, vox);
  std::int64_t col = 0;
  for (int z = 0; z < xs.nz; ++z)
    for (int y = 0; y < xs.ny; ++y)
      for (int x = 0; x < xs.nx; ++x, ++col) {
        std::int64_t r = 0;
        for (int ci = 0; ci < xs.c; ++ci)
          for (int dz = 0; dz < k; ++dz) {
            const int sz = z + dz - pad;
            for (int dy = 0; dy < k; ++dy) {
              const int sy = y + dy - pad;
              for (int dx = 0; dx < k; ++dx, ++r) {
                const int sx = x + dx - pad;
                const bool in = sx >= 0 && sx < xs.nx && sy >= 0 && sy < xs.ny && sz >= 0 && sz < xs.nz;
                M(r, col) = in ? xv[base + ci * vox + sx + std::int64_t(xs.nx) * (sy + std::int64_t(xs.ny) * sz)] : 0.0;
              }
            }
          }
      }
  return M;
}

void col2im_add(Eigen::ArrayXd& acc, const TensorShape& xs, int sample, int k,
                const Eigen::MatrixXd& G) {
  const int pad = k / 2;
  const std::int64_t vox = xs.spatial();
  const std::int64_t base = sample * xs.c * vox;
  std::int64_t col = 0;
  for (int z = 0; z < xs.nz; ++z)
    for (int y = 0; y < xs.ny; ++y)
      for (int x = 0; x < xs.nx; ++x, ++col) {
        std::int64_t r = 0;
        for (int ci = 0; ci < xs.c; ++ci)
          for (int dz = 0; dz < k; ++dz) {
            const int sz = z + dz - pad;
            for (int dy = 0; dy < k; ++dy) {
              const int sy = y + dy - pad;
              for (int dx = 0; dx < k; ++dx, ++r) {
                const int sx = x + dx - pad;
                if (sx >= 0 && sx < xs.nx && sy >= 0 && sy < xs.ny && sz >= 0 && sz < xs.nz)
                  acc[base + ci * vox + sx + std::int64_t(xs.nx) * (sy + std::int64_t(xs.ny) * sz)] += G(r, col);
              }
            }
          }
      }
}

}  // namespace

Param make_param(const TensorShape& s) {
  Param p;
  p.shape = s;
  p.w = Eigen::ArrayXd::Zero(s.count());
  p.g = Eigen::ArrayXd::Zero(s.count());
  p.m = Eigen::ArrayXd::Zero(s.count());
  p.v = Eigen::ArrayXd::Zero(s.count());
  return p;
}

int Tape::push(const TensorShape& s, Eigen::ArrayXd v, std::function<void()> back) {
  assert(v.size() == s.count());
  nodes_.push_back(Node{s, std::move(v), {}, std::move(back)});
  const int id = int(nodes_.size()) - 1;
  check(id);
  return id;
}

void Tape::check(int id) const {
#ifndef NDEBUG
  assert(nodes_[size_t(id)].val.allFinite());
#else
  (void)id;
#endif
}

int Tape::leaf(const TensorShape& s, Eigen::ArrayXd v) {
  require(v.size() == s.count(), "tensor leaf: value size does not match shape");
  return push(s, std::move(v), {});
}

int Tape::param(Param& p) {
  Param* pp = &p;
  const int id = push(p.shape, p.w, {});
  nodes_[size_t(id)].back = [this, id, pp] { pp->g += nodes_[size_t(id)].grad; };
  return id;
}

int Tape::conv3d(int x, Param& w, Param& b) {
  const TensorShape xs = shape(x);
  const int k = w.shape.nx;
  const int cout = w.shape.n, cin = w.shape.c;
  require(k >= 1 && k % 2 == 1 && w.shape.ny == k && w.shape.nz == k,
          "conv3d: kernel must be cubic with odd extent");
  require(cin == xs.c, "conv3d: input channels do not match the kernel");
  require(b.shape.count() == cout, "conv3d: bias size must equal output channels");

  const TensorShape os{xs.n, cout, xs.nx, xs.ny, xs.nz};
  const std::int64_t vox = xs.spatial();
  const std::int64_t rows = std::int64_t(cin) * k * k * k;
  const int wn = param(w), bn = param(b);

  Eigen::ArrayXd out(os.count());
  CRowMap W(nodes_[size_t(wn)].val.data(), cout, rows);
  for (int s = 0; s < xs.n; ++s) {
    const Eigen::MatrixXd M = im2col(nodes_[size_t(x)].val, xs, s, k);
    RowMap O(out.data() + std::int64_t(s) * cout * vox, cout, vox);
    O.noalias() = W * M;
    O.colwise() += Eigen::Map<const Eigen::VectorXd>(nodes_[size_t(bn)].val.data(), cout);
  }

  const int id = push(os, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, wn, bn, xs, k, cout, rows, vox] {
    CRowMap W(nodes_[size_t(wn)].val.data(), cout, rows);
    RowMap dW(nodes_[size_t(wn)].grad.data(), cout, rows);
    Eigen::Map<Eigen::VectorXd> dB(nodes_[size_t(bn)].grad.data(), cout);
    for (int s = 0; s < xs.n; ++s) {
      const Eigen::MatrixXd M = im2col(nodes_[size_t(x)].val, xs, s, k);
      CRowMap dO(nodes_[size_t(id)].grad.data() + std::int64_t(s) * cout * vox, cout, vox);
      dW.noalias() += dO * M.transpose();
      dB.noalias() += dO.rowwise().sum();
      const Eigen::MatrixXd G = W.transpose() * dO;
      col2im_add(nodes_[size_t(x)].grad, xs, s, k, G);
    }
  };
  return id;
}

int Tape::relu(int x) {
  const int id = push(shape(x), nodes_[size_t(x)].val.max(0.0), {});
  nodes_[size_t(id)].back = [this, id, x] {
    nodes_[size_t(x)].grad += (nodes_[size_t(x)].val > 0.0)
                                  .select(nodes_[size_t(id)].grad, Eigen::ArrayXd::Zero(nodes_[size_t(id)].grad.size()));
  };
  return id;
}

int Tape::sigmoid(int x) {
  Eigen::ArrayXd s = 1.0 / (1.0 + (-nodes_[size_t(x)].val).exp());
  const int id = push(shape(x), std::move(s), {});
  nodes_[size_t(id)].back = [this, id, x] {
    const Eigen::ArrayXd& sv = nodes_[size_t(id)].val;
    nodes_[size_t(x)].grad += nodes_[size_t(id)].grad * sv * (1.0 - sv);
  };
  return id;
}

int Tape::maxpool2(int x) {
  const TensorShape xs = shape(x);
  require(xs.nx % 2 == 0 && xs.ny % 2 == 0 && xs.nz % 2 == 0,
          "maxpool2: spatial dims must be even");
  const TensorShape os{xs.n, xs.c, xs.nx / 2, xs.ny / 2, xs.nz / 2};
  const std::int64_t ivox = xs.spatial();
  Eigen::ArrayXd out(os.count());
  std::vector<std::int64_t> arg(size_t(os.count()));
  const Eigen::ArrayXd& xv = nodes_[size_t(x)].val;

  std::int64_t o = 0;
  for (std::int64_t nc = 0; nc < std::int64_t(xs.n) * xs.c; ++nc) {
    const std::int64_t base = nc * ivox;
    for (int z = 0; z < os.nz; ++z)
      for (int y = 0; y < os.ny; ++y)
        for (int x0 = 0; x0 < os.nx; ++x0, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t bi = -1;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::int64_t v = base + (2 * x0 + dx) +
                                       std::int64_t(xs.nx) * ((2 * y + dy) + std::int64_t(xs.ny) * (2 * z + dz));
                if (xv[v] > best) {
                  best = xv[v];
                  bi = v;
                }
              }
          out[o] = best;
          arg[size_t(o)] = bi;
        }
  }

  const int id = push(os, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, arg = std::move(arg)] {
    const Eigen::ArrayXd& g = nodes_[size_t(id)].grad;
    for (std::int64_t o = 0; o < g.size(); ++o) nodes_[size_t(x)].grad[arg[size_t(o)]] += g[o];
  };
  return id;
}

int Tape::upsample2(int x) {
  const TensorShape xs = shape(x);
  const TensorShape os{xs.n, xs.c, xs.nx * 2, xs.ny * 2, xs.nz * 2};
  const std::int64_t ivox = xs.spatial(), ovox = os.spatial();
  Eigen::ArrayXd out(os.count());
  const Eigen::ArrayXd& xv = nodes_[size_t(x)].val;
  for (std::int64_t nc = 0; nc < std::int64_t(xs.n) * xs.c; ++nc)
    for (int z = 0; z < os.nz; ++z)
      for (int y = 0; y < os.ny; ++y)
        for (int x0 = 0; x0 < os.nx; ++x0)
          out[nc * ovox + x0 + std::int64_t(os.nx) * (y + std::int64_t(os.ny) * z)] =
              xv[nc * ivox + x0 / 2 + std::int64_t(xs.nx) * (y / 2 + std::int64_t(xs.ny) * (z / 2))];

  const int id = push(os, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, xs, os, ivox, ovox] {
    const Eigen::ArrayXd& g = nodes_[size_t(id)].grad;
    Eigen::ArrayXd& dx = nodes_[size_t(x)].grad;
    for (std::int64_t nc = 0; nc < std::int64_t(xs.n) * xs.c; ++nc)
      for (int z = 0; z < os.nz; ++z)
        for (int y = 0; y < os.ny; ++y)
          for (int x0 = 0; x0 < os.nx; ++x0)
            dx[nc * ivox + x0 / 2 + std::int64_t(xs.nx) * (y / 2 + std::int64_t(xs.ny) * (z / 2))] +=
                g[nc * ovox + x0 + std::int64_t(os.nx) * (y + std::int64_t(os.ny) * z)];
  };
  return id;
}

int Tape::crop_spatial(int x, int nx, int ny, int nz) {
  const TensorShape xs = shape(x);
  require(nx >= 1 && ny >= 1 && nz >= 1 && nx <= xs.nx && ny <= xs.ny && nz <= xs.nz,
          "crop: target extents must fit inside the source");
  const TensorShape os{xs.n, xs.c, nx, ny, nz};
  const std::int64_t ivox = xs.spatial(), ovox = os.spatial();
  Eigen::ArrayXd out(os.count());
  const Eigen::ArrayXd& xv = nodes_[size_t(x)].val;
  for (std::int64_t nc = 0; nc < std::int64_t(xs.n) * xs.c; ++nc)
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x0 = 0; x0 < nx; ++x0)
          out[nc * ovox + x0 + std::int64_t(nx) * (y + std::int64_t(ny) * z)] =
              xv[nc * ivox + x0 + std::int64_t(xs.nx) * (y + std::int64_t(xs.ny) * z)];

  const int id = push(os, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, xs, os, ivox, ovox] {
    const Eigen::ArrayXd& g = nodes_[size_t(id)].grad;
    Eigen::ArrayXd& dx = nodes_[size_t(x)].grad;
    for (std::int64_t nc = 0; nc < std::int64_t(xs.n) * xs.c; ++nc)
      for (int z = 0; z < os.nz; ++z)
        for (int y = 0; y < os.ny; ++y)
          for (int x0 = 0; x0 < os.nx; ++x0)
            dx[nc * ivox + x0 + std::int64_t(xs.nx) * (y + std::int64_t(xs.ny) * z)] +=
                g[nc * ovox + x0 + std::int64_t(os.nx) * (y + std::int64_t(os.ny) * z)];
  };
  return id;
}

int Tape::concat_c(int a, int b) {
  const TensorShape as = shape(a), bs = shape(b);
  require(as.n == bs.n && as.nx == bs.nx && as.ny == bs.ny && as.nz == bs.nz,
          "concat: batch and spatial dims must match");
  const TensorShape os{as.n, as.c + bs.c, as.nx, as.ny, as.nz};
  const std::int64_t vox = as.spatial();
  Eigen::ArrayXd out(os.count());
  for (int s = 0; s < as.n; ++s) {
    out.segment(std::int64_t(s) * os.c * vox, std::int64_t(as.c) * vox) =
        nodes_[size_t(a)].val.segment(std::int64_t(s) * as.c * vox, std::int64_t(as.c) * vox);
    out.segment(std::int64_t(s) * os.c * vox + std::int64_t(as.c) * vox, std::int64_t(bs.c) * vox) =
        nodes_[size_t(b)].val.segment(std::int64_t(s) * bs.c * vox, std::int64_t(bs.c) * vox);
  }
  const int id = push(os, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, a, b, as, bs, os, vox] {
    const Eigen::ArrayXd& g = nodes_[size_t(id)].grad;
    for (int s = 0; s < as.n; ++s) {
      nodes_[size_t(a)].grad.segment(std::int64_t(s) * as.c * vox, std::int64_t(as.c) * vox) +=
          g.segment(std::int64_t(s) * os.c * vox, std::int64_t(as.c) * vox);
      nodes_[size_t(b)].grad.segment(std::int64_t(s) * bs.c * vox, std::int64_t(bs.c) * vox) +=
          g.segment(std::int64_t(s) * os.c * vox + std::int64_t(as.c) * vox, std::int64_t(bs.c) * vox);
    }
  };
  return id;
}

int Tape::add(int a, int b) {
  require(shape(a) == shape(b), "add: shapes must match");
  const int id = push(shape(a), nodes_[size_t(a)].val + nodes_[size_t(b)].val, {});
  nodes_[size_t(id)].back = [this, id, a, b] {
    nodes_[size_t(a)].grad += nodes_[size_t(id)].grad;
    nodes_[size_t(b)].grad += nodes_[size_t(id)].grad;
  };
  return id;
}

int Tape::mul_bcast(int x, int map) {
  const TensorShape xs = shape(x), ms = shape(map);
  require(ms.c == 1 && ms.n == xs.n && ms.nx == xs.nx && ms.ny == xs.ny && ms.nz == xs.nz,
          "mul: map must be single-channel with matching batch and spatial dims");
  const std::int64_t vox = xs.spatial();
  Eigen::ArrayXd out(xs.count());
  for (int s = 0; s < xs.n; ++s)
    for (int c = 0; c < xs.c; ++c)
      out.segment((std::int64_t(s) * xs.c + c) * vox, vox) =
          nodes_[size_t(x)].val.segment((std::int64_t(s) * xs.c + c) * vox, vox) *
          nodes_[size_t(map)].val.segment(std::int64_t(s) * vox, vox);

  const int id = push(xs, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, map, xs, vox] {
    const Eigen::ArrayXd& g = nodes_[size_t(id)].grad;
    for (int s = 0; s < xs.n; ++s)
      for (int c = 0; c < xs.c; ++c) {
        const std::int64_t off = (std::int64_t(s) * xs.c + c) * vox;
        nodes_[size_t(x)].grad.segment(off, vox) +=
            g.segment(off, vox) * nodes_[size_t(map)].val.segment(std::int64_t(s) * vox, vox);
        nodes_[size_t(map)].grad.segment(std::int64_t(s) * vox, vox) +=
            g.segment(off, vox) * nodes_[size_t(x)].val.segment(off, vox);
      }
  };
  return id;
}

int Tape::channel_mean(int x) {
  const TensorShape xs = shape(x);
  const TensorShape os{xs.n, 1, xs.nx, xs.ny, xs.nz};
  const std::int64_t vox = xs.spatial();
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(os.count());
  for (int s = 0; s < xs.n; ++s) {
    for (int c = 0; c < xs.c; ++c)
      out.segment(std::int64_t(s) * vox, vox) +=
          nodes_[size_t(x)].val.segment((std::int64_t(s) * xs.c + c) * vox, vox);
    out.segment(std::int64_t(s) * vox, vox) /= double(xs.c);
  }
  const int id = push(os, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, xs, vox] {
    for (int s = 0; s < xs.n; ++s)
      for (int c = 0; c < xs.c; ++c)
        nodes_[size_t(x)].grad.segment((std::int64_t(s) * xs.c + c) * vox, vox) +=
            nodes_[size_t(id)].grad.segment(std::int64_t(s) * vox, vox) / double(xs.c);
  };
  return id;
}

int Tape::channel_max(int x) {
  const TensorShape xs = shape(x);
  const TensorShape os{xs.n, 1, xs.nx, xs.ny, xs.nz};
  const std::int64_t vox = xs.spatial();
  Eigen::ArrayXd out(os.count());
  std::vector<int> arg(size_t(os.count()));
  const Eigen::ArrayXd& xv = nodes_[size_t(x)].val;
  for (int s = 0; s < xs.n; ++s)
    for (std::int64_t v = 0; v < vox; ++v) {
      double best = xv[std::int64_t(s) * xs.c * vox + v];
      int bc = 0;
      for (int c = 1; c < xs.c; ++c) {
        const double cand = xv[(std::int64_t(s) * xs.c + c) * vox + v];
        if (cand > best) {
          best = cand;
          bc = c;
        }
      }
      out[std::int64_t(s) * vox + v] = best;
      arg[size_t(std::int64_t(s) * vox + v)] = bc;
    }
  const int id = push(os, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, xs, vox, arg = std::move(arg)] {
    const Eigen::ArrayXd& g = nodes_[size_t(id)].grad;
    for (int s = 0; s < xs.n; ++s)
      for (std::int64_t v = 0; v < vox; ++v)
        nodes_[size_t(x)].grad[(std::int64_t(s) * xs.c + arg[size_t(std::int64_t(s) * vox + v)]) * vox + v] +=
            g[std::int64_t(s) * vox + v];
  };
  return id;
}

int Tape::global_max(int x, const std::vector<std::uint8_t>* mask) {
  const TensorShape xs = shape(x);
  require(xs.n == 1 && xs.c == 1, "global max: expects a single-sample, single-channel tensor");
  if (mask) require(std::int64_t(mask->size()) == xs.spatial(), "global max: mask size mismatch");
  const Eigen::ArrayXd& xv = nodes_[size_t(x)].val;
  std::int64_t bi = -1;
  double best = -std::numeric_limits<double>::infinity();
  for (std::int64_t v = 0; v < xs.spatial(); ++v) {
    if (mask && (*mask)[size_t(v)] == 0) continue;
    if (xv[v] > best) {
      best = xv[v];
      bi = v;
    }
  }
  require(bi >= 0, "global max: mask excludes every voxel");

  Eigen::ArrayXd out(1);
  out[0] = best;
  const int id = push(TensorShape{}, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, x, bi] {
    nodes_[size_t(x)].grad[bi] += nodes_[size_t(id)].grad[0];
  };
  return id;
}

int Tape::mse(int pred, const Eigen::ArrayXd& target) {
  const Eigen::ArrayXd& pv = nodes_[size_t(pred)].val;
  require(pv.size() == target.size(), "mse: prediction and target sizes differ");
  Eigen::ArrayXd out(1);
  out[0] = (pv - target).square().mean();
  const int id = push(TensorShape{}, std::move(out), {});
  nodes_[size_t(id)].back = [this, id, pred, target] {
    const Eigen::ArrayXd& pv = nodes_[size_t(pred)].val;
    nodes_[size_t(pred)].grad +=
        nodes_[size_t(id)].grad[0] * 2.0 / double(pv.size()) * (pv - target);
  };
  return id;
}

void Tape::backward(int node, double seed) {
  require(node >= 0 && node < size(), "backward: node id out of range");
  for (int i = 0; i <= node; ++i)
    nodes_[size_t(i)].grad = Eigen::ArrayXd::Zero(nodes_[size_t(i)].shape.count());
  nodes_[size_t(node)].grad.setConstant(seed);
  for (int i = node; i >= 0; --i)
    if (nodes_[size_t(i)].back) nodes_[size_t(i)].back();
}

}  // namespace pato
