#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace pato {

/// Dense tensor extents: batch, channels, then x/y/z. Storage puts x fastest,
/// then y, z, channel, batch, so channel 0 of a single-sample tensor aliases
/// a Field3 directly. Conv weights reuse this as {cout, cin, k, k, k}.
struct TensorShape {
  int n = 1, c = 1, nx = 1, ny = 1, nz = 1;

  std::int64_t spatial() const { return std::int64_t(nx) * ny * nz; }
  std::int64_t count() const { return std::int64_t(n) * c * spatial(); }
  bool operator==(const TensorShape&) const = default;
};

/// Learnable blob: values, gradient accumulator, Adam moments. Gradients are
/// summed into g by Tape::backward; the training step owns zeroing them.
struct Param {
  TensorShape shape;
  Eigen::ArrayXd w, g, m, v;
};

Param make_param(const TensorShape& s);

/// Eager reverse-mode tape. Each op computes its value immediately and
/// records a closure that scatters the node's gradient to its inputs.
/// Node ids are indices into the tape; a tape is built once per forward
/// pass and discarded. Values are checked finite after every op in debug
/// builds.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf holding external values (network input, no parents).
  int leaf(const TensorShape& s, Eigen::ArrayXd v);
  /// Leaf aliasing a parameter; backward adds into p.g. p must outlive the tape.
  int param(Param& p);

  /// 3D convolution, stride 1, zero padding k/2 (k odd), per-channel bias.
  /// w is {cout, cin, k, k, k} with cin matching x; b is {1, cout, 1, 1, 1}.
  int conv3d(int x, Param& w, Param& b);
  int relu(int x);
  int sigmoid(int x);
  /// 2x2x2 max pooling, stride 2; spatial dims must be even. Ties go to the
  /// lowest linear index within the window.
  int maxpool2(int x);
  /// Nearest-neighbor doubling of each spatial axis.
  int upsample2(int x);
  /// Corner block [0,nx) x [0,ny) x [0,nz) of every channel; the inverse of
  /// zero-padding a volume up to pooling-friendly dims.
  int crop_spatial(int x, int nx, int ny, int nz);
  /// Channel concatenation; batches and spatial dims must match.
  int concat_c(int a, int b);
  int add(int a, int b);
  /// Per-voxel scale of every channel of x by the single-channel map.
  int mul_bcast(int x, int map);
  int channel_mean(int x);
  /// Per-voxel max over channels; ties go to the lowest channel.
  int channel_max(int x);
  /// Max over voxels of a single-sample, single-channel tensor, optionally
  /// restricted to mask != 0 (size = spatial count). The winner takes the
  /// whole subgradient; ties go to the lowest linear index.
  int global_max(int x, const std::vector<std::uint8_t>* mask = nullptr);
  /// Mean squared error against fixed targets (scalar node).
  int mse(int pred, const Eigen::ArrayXd& target);

  /// Reverse pass from node, seeding its gradient with seed (scalar nodes)
  /// or seed in every entry otherwise. Gradients of all earlier nodes are
  /// (re)initialized to zero first.
  void backward(int node, double seed = 1.0);

  const TensorShape& shape(int id) const { return nodes_[size_t(id)].shape; }
  const Eigen::ArrayXd& val(int id) const { return nodes_[size_t(id)].val; }
  const Eigen::ArrayXd& grad(int id) const { return nodes_[size_t(id)].grad; }
  int size() const { return int(nodes_.size()); }

 private:
  struct Node {
    TensorShape shape;
    Eigen::ArrayXd val, grad;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  int push(const TensorShape& s, Eigen::ArrayXd v, std::function<void()> back);
  void check(int id) const;
};

}  // namespace pato
