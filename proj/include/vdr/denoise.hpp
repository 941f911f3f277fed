#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vdr/core.hpp"
#include "vdr/nn.hpp"
#include "vdr/rng.hpp"

namespace vdr {

using Mat = nn::Matrix<double>;
using Vec = nn::Vector<double>;

// ---------------------------------------------------------------------------
// Training data

struct Provenance {
  int t_index = 0;
  int factor = 1;
};

/// Every slice of the noisy histogram at every aggregation factor.
struct TrainingSet {
  std::vector<Slice2D> items;
  std::vector<Provenance> provenance;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

/// Coarsens each slice of `noisy` by every factor (factor 1 is the slice
/// itself). Items are ordered factor-major, then by time.
TrainingSet prepare_training_set(const Histogram3D& noisy, const std::vector<int>& factors);

// ---------------------------------------------------------------------------
// Model

/// B x l codebook trained by exponential moving averages.
struct Codebook {
  Mat entries;                  ///< B x l
  Vec ema_cluster_size;         ///< B
  Mat ema_embed_sum;            ///< B x l
  double decay = 0.99;
  double ema_eps = 1e-5;

  /// Codebook whose EMA state is consistent with `entries` (unit cluster sizes).
  static Codebook from_entries(Mat entries, double decay = 0.99, double ema_eps = 1e-5);

  int size() const { return static_cast<int>(entries.rows()); }
  int dim() const { return static_cast<int>(entries.cols()); }

  /// Index of the entry nearest to `z` in L2; ties go to the lowest index.
  int nearest(const Eigen::Ref<const Vec>& z) const;
};

enum class LayerKind { Conv, ConvTranspose };

struct ConvLayer {
  LayerKind kind = LayerKind::Conv;
  int in_channels = 1;
  int out_channels = 1;
  nn::ConvShape shape;
  bool relu = false;
  /// Conv: out x (in*k*k). ConvTranspose: in x (out*k*k).
  Mat weight;
  Vec bias;

  int output_side(int in_side) const {
    return kind == LayerKind::Conv ? shape.conv_out(in_side) : shape.transpose_out(in_side);
  }
  Mat apply(const Mat& input, int in_side) const;
};

/// Channel widths of the fixed encoder/decoder.
struct Architecture {
  int hidden1 = 32;
  int hidden2 = 64;
  int latent_dim = 64;       ///< l
  int codebook_size = 128;   ///< B

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Encoder: conv4x4/2 (1->h1) relu, conv4x4/2 (h1->h2) relu, conv3x3 (h2->l).
/// Decoder mirrors it with transposed convolutions, so side M maps to
/// M/4 latent positions per axis and back to M.
struct ModelParams {
  std::vector<ConvLayer> encoder;
  std::vector<ConvLayer> decoder;
  Codebook codebook;
  double input_scale = 1.0;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; codebook
  /// entries drawn from N(0, 1).
  static ModelParams init(const Architecture& arch, std::uint64_t seed);
  /// All weights, biases and codebook entries zero.
  static ModelParams zeros(const Architecture& arch);

  Architecture architecture() const;
};

struct TrainConfig {
  double alpha = 1.0;
  double beta_commit = 0.25;
  int batch_size = 8;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 30;
  std::uint64_t seed = 0;
  double ema_decay = 0.99;
  double ema_eps = 1e-5;
  /// Entries whose EMA cluster size falls below this are reseeded from
  /// latents of the current batch; 0 disables reseeding.
  double restart_threshold = 0.0;
  Architecture arch;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Forward / loss / backward

/// Cached activations of one batch item.
struct ItemTrace {
  int side = 0;
  std::vector<int> enc_side;    ///< input side of each encoder layer
  std::vector<int> dec_side;
  std::vector<Mat> enc_input;   ///< input of each encoder layer
  std::vector<Mat> enc_pre;     ///< pre-activation output of each encoder layer
  Mat z;                        ///< l x positions
  Mat z_q;                      ///< quantized latents (decoder input)
  std::vector<int> assignments;
  std::vector<Mat> dec_input;
  std::vector<Mat> dec_pre;
  Mat reconstruction;           ///< 1 x side^2
};

struct ForwardResult {
  std::vector<ItemTrace> items;

  std::vector<Slice2D> reconstructions() const;
  std::vector<Mat> latents() const;
  std::vector<Mat> quantized() const;
  std::vector<std::vector<int>> assignments() const;
};

/// Quantization held fixed at a reference point: item i's decoder input is
/// z + offsets[i] and its reported z_q is codes[i]. Used to probe the
/// straight-through surrogate with finite differences.
struct FrozenQuantization {
  std::vector<Mat> codes;
  std::vector<Mat> offsets;

  static FrozenQuantization from(const ForwardResult& reference);
};

/// Runs encoder -> nearest-codebook quantization -> decoder on every item.
ForwardResult forward(const ModelParams& model, std::span<const Slice2D> batch,
                      const FrozenQuantization* frozen = nullptr);

struct LossBreakdown {
  double reconstruction = 0.0;  ///< L_C: sum of squared differences
  double codebook = 0.0;        ///< ||sg(z) - z_q||^2
  double commitment = 0.0;      ///< ||z - sg(z_q)||^2
  double regularization = 0.0;  ///< L_G = codebook + beta * commitment
  double total = 0.0;           ///< L_C + alpha * L_G
};

LossBreakdown losses(std::span<const Slice2D> batch, std::span<const Slice2D> reconstructions,
                     std::span<const Mat> z, std::span<const Mat> z_q, double alpha,
                     double beta_commit);
LossBreakdown losses(std::span<const Slice2D> batch, const ForwardResult& fwd, double alpha,
                     double beta_commit);

struct ModelGradients {
  std::vector<Mat> encoder_weight;
  std::vector<Vec> encoder_bias;
  std::vector<Mat> decoder_weight;
  std::vector<Vec> decoder_bias;

  static ModelGradients zeros_like(const ModelParams& model);
};

/// Reverse-mode gradients of L_total for the encoder and decoder. The
/// codebook gets none (it is EMA-updated); the decoder-input gradient is
/// copied to the encoder output unchanged (straight-through).
ModelGradients backward(const ModelParams& model, std::span<const Slice2D> batch,
                        const ForwardResult& fwd, double alpha, double beta_commit);

/// Decays cluster sizes and embedding sums by `decay`, accumulates the batch
/// assignments, then sets entries = embed_sum / smoothed cluster size.
void ema_update(Codebook& codebook, std::span<const Mat> z,
                std::span<const std::vector<int>> assignments);

/// Replaces every entry whose EMA cluster size is below `threshold` with a
/// uniformly drawn latent vector from `z` and resets its EMA state to unit
/// size. Returns the number of entries replaced.
int restart_dead_codes(Codebook& codebook, std::span<const Mat> z, double threshold, Rng& rng);

// ---------------------------------------------------------------------------
// Training and inference

struct TrainReport {
  std::vector<double> epoch_loss;   ///< mean L_total per item, per epoch
  double initial_loss = 0.0;        ///< mean L_total before the first update
  double final_loss = 0.0;          ///< mean L_total of the returned model
};

/// 99th percentile of |value| over `values`, floored at 1.
double input_scale_for(std::span<const double> values);

/// Adam on encoder/decoder, EMA on the codebook, mini-batches grouped by
/// slice side and shuffled per epoch. Deterministic for a fixed seed.
/// Called after every epoch with the 0-based epoch and the current model.
using EpochCallback = std::function<void(int, const ModelParams&)>;

ModelParams train(const TrainingSet& training_set, const TrainConfig& config,
                  TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

/// Encode, quantize and decode every original-resolution slice.
Histogram3D denoise(const ModelParams& model, const Histogram3D& noisy);

}  // namespace vdr
