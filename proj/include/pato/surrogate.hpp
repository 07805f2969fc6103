#pragma once

#include "pato/grid.hpp"
#include "pato/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pato {

/// Three encoder-decoder variants: plain skips, a sigmoid spatial gate on the
/// bottleneck (channel mean/max maps through a wide kernel), or additive
/// attention gates on every skip connection.
enum class UNetVariant { Plain, SpatialAttention, AttentionGate };

std::string unet_variant_name(UNetVariant v);

/// ladder lists the encoder widths per level, last entry the bottleneck; the
/// decoder mirrors it. levels = ladder.size() - 1 poolings, so inputs are
/// zero-padded up to a multiple of 2^levels and cropped back on output.
struct UNetSpec {
  UNetVariant variant = UNetVariant::Plain;
  std::vector<int> ladder = {8, 16, 32, 64};
  int kernel = 3;
};

struct GradResult {
  double maxValue = 0.0;
  FieldD inputGradient;
};

/// Volumetric regression network. One input channel (density), one linear
/// output channel; two ReLU convolutions per block; nearest-neighbor
/// upsampling followed by a convolution in the decoder. Weights are
/// Glorot-uniform from the seed, biases zero except the attention-gate score
/// bias (+2, so gates start open).
class UNet {
 public:
  UNet(const UNetSpec& spec, unsigned seed);

  const UNetSpec& spec() const { return spec_; }
  int levels() const { return int(spec_.ladder.size()) - 1; }
  /// Stable declared order; checkpoints serialize exactly this sequence.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  /// Prediction on the field's grid (padding handled internally).
  FieldD predict(const FieldD& rho);
  /// Max of the prediction over mask != 0 (cell-sized mask; default: the
  /// whole original field). Bitwise equal to the max over predict().
  double predict_max(const FieldD& rho, const std::vector<std::uint8_t>* mask = nullptr);
  /// Reverse pass from the masked max back to the input voxels.
  GradResult input_gradient(const FieldD& rho, const std::vector<std::uint8_t>* mask = nullptr);

  /// Attention diagnostics on the padded grid: one field per skip level
  /// (finest first) for the gated variant, the bottleneck map for the
  /// spatial variant, empty for plain. Values strictly inside (0,1).
  std::vector<FieldD> attention_maps(const FieldD& rho);

  /// Wires the network onto a caller-owned tape; x is the input node id
  /// ({1,1,X,Y,Z} with even-enough dims). Returns the output node id and,
  /// for attention variants, the map node ids.
  struct Graph {
    int out = -1;
    std::vector<int> attention;
  };
  Graph build(Tape& tape, int x);

 private:
  UNetSpec spec_;
  // per encoder level: two conv blocks
  std::vector<Param> encAw_, encAb_, encBw_, encBb_;
  Param botAw_, botAb_, botBw_, botBb_;
  Param saW_, saB_;  // spatial attention kernel (7) on [mean,max] maps
  // per decoder level, finest first
  std::vector<Param> upW_, upB_, mergeAw_, mergeAb_, mergeBw_, mergeBb_;
  std::vector<Param> agXw_, agXb_, agGw_, agGb_, agPw_, agPb_;  // attention gates
  Param outW_, outB_;
};

/// Mean relative error (1/n) sum |y-p| / (eps + max(|y|,|p|)).
double mre(const FieldD& pred, const FieldD& truth, double eps = 1e-8);

struct TrainSample {
  FieldD input;
  FieldD target;
};

struct TrainConfig {
  double lr = 1e-4;  // Adam
  int batchSize = 4;
  int maxEpochs = 150;
  int patience = 5;       // epochs without val improvement before stopping
  double minDelta = 1e-9; // improvement below this does not reset patience
  unsigned seed = 0;      // shuffling order
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double trainLoss = 0.0;
  double valLoss = 0.0;
  double valMre = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int bestEpoch = 0;
  double bestValLoss = 0.0;
  bool stoppedEarly = false;
};

/// Minibatch Adam on the mean squared error. Validation loss drives early
/// stopping and best-weights restoration; with an empty validation set the
/// run goes the full maxEpochs and keeps the final weights (val columns NaN).
/// Throws on divergence (non-finite loss), naming the epoch.
TrainResult train(UNet& net, const std::vector<TrainSample>& trainSet,
                  const std::vector<TrainSample>& valSet, const TrainConfig& cfg);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

/// Versioned binary checkpoint: magic "PATO", format version, architecture
/// descriptor, then the weight blobs in params() order.
void save_checkpoint(const std::string& path, const UNet& net);
UNet load_checkpoint(const std::string& path);

}  // namespace pato
