#include "vdr/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace vdr {

namespace {

Mat slice_as_row(const Slice2D& s) {
  Mat x(1, s.values.size());
  x = Eigen::Map<const Mat>(s.values.data(), 1, s.values.size());
  return x;
}

Slice2D row_as_slice(const Mat& row, int side) {
  Slice2D s;
  s.values = Eigen::Map<const SliceMatrix>(row.data(), side, side);
  return s;
}

nn::ConvGrads<double> layer_backward(const ConvLayer& layer, const Mat& input, int in_side,
                                     const Mat& grad_out) {
  if (layer.kind == LayerKind::Conv) {
    return nn::conv2d_backward(input, in_side, layer.weight, grad_out, layer.shape);
  }
  return nn::conv_transpose2d_backward(input, layer.weight, in_side, grad_out, layer.shape);
}

void check_batch(std::span<const Slice2D> batch) {
  if (batch.empty()) return;
  const int side = batch.front().side();
  if (side < 4 || side % 4 != 0) {
    throw Error(ErrorCode::BadSide, "slice side " + std::to_string(side) + " is not a multiple of 4");
  }
  for (const Slice2D& s : batch) {
    if (s.side() != side || s.values.cols() != side) {
      throw Error(ErrorCode::ShapeMismatch, "batch items must share one side");
    }
  }
}

ConvLayer make_layer(LayerKind kind, int in, int out, int k, int stride, int pad, bool relu) {
  ConvLayer layer;
  layer.kind = kind;
  layer.in_channels = in;
  layer.out_channels = out;
  layer.shape = {k, stride, pad};
  layer.relu = relu;
  if (kind == LayerKind::Conv) {
    layer.weight = Mat::Zero(out, static_cast<Eigen::Index>(in) * k * k);
  } else {
    layer.weight = Mat::Zero(in, static_cast<Eigen::Index>(out) * k * k);
  }
  layer.bias = Vec::Zero(out);
  return layer;
}

struct AdamState {
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;
};

AdamState adam_state_for(const std::vector<ConvLayer>& layers) {
  AdamState s;
  for (const ConvLayer& l : layers) {
    s.m_w.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
    s.v_w.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
    s.m_b.push_back(Vec::Zero(l.bias.size()));
    s.v_b.push_back(Vec::Zero(l.bias.size()));
  }
  return s;
}

template <typename Param>
void adam_step(Param& param, const Param& grad, Param& m, Param& v, const TrainConfig& cfg,
               double bias1, double bias2) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
  v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  const double step = cfg.learning_rate / bias1;
  param.array() -= step * m.array() / ((v.array() / bias2).sqrt() + cfg.adam_eps);
}

void apply_adam(std::vector<ConvLayer>& layers, const std::vector<Mat>& gw,
                const std::vector<Vec>& gb, AdamState& state, const TrainConfig& cfg, double bias1,
                double bias2) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    adam_step(layers[i].weight, gw[i], state.m_w[i], state.v_w[i], cfg, bias1, bias2);
    adam_step(layers[i].bias, gb[i], state.m_b[i], state.v_b[i], cfg, bias1, bias2);
  }
}

std::vector<Slice2D> gather(const std::vector<Slice2D>& items, std::span<const std::size_t> idx) {
  std::vector<Slice2D> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

/// Seeds the codebook with latent vectors of the training data so that the
/// initial entries live where the encoder outputs are.
void init_codebook_from_data(ModelParams& model, const std::vector<Slice2D>& items, Rng& rng) {
  std::vector<Mat> latents;
  const std::size_t probe = std::min<std::size_t>(items.size(), 16);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Eigen::Index> counts;
  Eigen::Index total = 0;
  for (std::size_t p = 0; p < probe; ++p) {
    const Slice2D& s = items[order[p]];
    ForwardResult fwd = forward(model, std::span<const Slice2D>(&s, 1));
    latents.push_back(std::move(fwd.items.front().z));
    total += latents.back().cols();
  }
  const int entries = model.codebook.size();
  Mat chosen(entries, model.codebook.dim());
  std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);
  for (int e = 0; e < entries; ++e) {
    Eigen::Index flat = pick(rng);
    std::size_t which = 0;
    while (flat >= latents[which].cols()) {
      flat -= latents[which].cols();
      ++which;
    }
    chosen.row(e) = latents[which].col(flat).transpose();
  }
  model.codebook = Codebook::from_entries(std::move(chosen), model.codebook.decay,
                                          model.codebook.ema_eps);
}

double mean_loss(const ModelParams& model, const std::vector<Slice2D>& items,
                 const std::map<int, std::vector<std::size_t>>& groups, const TrainConfig& cfg) {
  double sum = 0.0;
  for (const auto& [side, idx] : groups) {
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto batch = gather(items, std::span(idx).subspan(start, stop - start));
      sum += losses(batch, forward(model, batch), cfg.alpha, cfg.beta_commit).total;
    }
  }
  return sum / static_cast<double>(items.size());
}

}  // namespace

// ---------------------------------------------------------------------------

TrainingSet prepare_training_set(const Histogram3D& noisy, const std::vector<int>& factors) {
  TrainingSet set;
  for (int f : factors) {
    if (f < 1 || noisy.M() % f != 0) {
      throw Error(ErrorCode::IndivisibleSide,
                  "factor " + std::to_string(f) + " does not divide M = " + std::to_string(noisy.M()));
    }
  }
  for (int f : factors) {
    for (int t = 0; t < noisy.T(); ++t) {
      set.items.push_back(coarsen(slice_at(noisy, t), f));
      set.provenance.push_back({t, f});
    }
  }
  return set;
}

Codebook Codebook::from_entries(Mat entries, double decay, double ema_eps) {
  Codebook cb;
  cb.ema_cluster_size = Vec::Ones(entries.rows());
  cb.ema_embed_sum = entries;
  cb.entries = std::move(entries);
  cb.decay = decay;
  cb.ema_eps = ema_eps;
  return cb;
}

int Codebook::nearest(const Eigen::Ref<const Vec>& z) const {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int e = 0; e < size(); ++e) {
    const double d = (entries.row(e).transpose() - z).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = e;
    }
  }
  return best;
}

Mat ConvLayer::apply(const Mat& input, int in_side) const {
  if (kind == LayerKind::Conv) return nn::conv2d(input, in_side, weight, bias, shape);
  return nn::conv_transpose2d(input, weight, bias, in_side, shape);
}

ModelParams ModelParams::zeros(const Architecture& a) {
  ModelParams m;
  m.encoder = {
      make_layer(LayerKind::Conv, 1, a.hidden1, 4, 2, 1, true),
      make_layer(LayerKind::Conv, a.hidden1, a.hidden2, 4, 2, 1, true),
      make_layer(LayerKind::Conv, a.hidden2, a.latent_dim, 3, 1, 1, false),
  };
  m.decoder = {
      make_layer(LayerKind::ConvTranspose, a.latent_dim, a.hidden2, 3, 1, 1, true),
      make_layer(LayerKind::ConvTranspose, a.hidden2, a.hidden1, 4, 2, 1, true),
      make_layer(LayerKind::ConvTranspose, a.hidden1, 1, 4, 2, 1, false),
  };
  m.codebook = Codebook::from_entries(Mat::Zero(a.codebook_size, a.latent_dim));
  return m;
}

ModelParams ModelParams::init(const Architecture& arch, std::uint64_t seed) {
  ModelParams m = zeros(arch);
  Rng rng = make_rng(seed, "model-init");
  auto fill = [&rng](ConvLayer& layer) {
    const int fan_channels = layer.kind == LayerKind::Conv ? layer.in_channels : layer.out_channels;
    const double bound =
        1.0 / std::sqrt(static_cast<double>(fan_channels * layer.shape.kernel * layer.shape.kernel));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = u(rng);
  };
  for (ConvLayer& l : m.encoder) fill(l);
  for (ConvLayer& l : m.decoder) fill(l);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat entries(arch.codebook_size, arch.latent_dim);
  for (Eigen::Index i = 0; i < entries.size(); ++i) entries.data()[i] = normal(rng);
  m.codebook = Codebook::from_entries(std::move(entries));
  return m;
}

Architecture ModelParams::architecture() const {
  Architecture a;
  a.hidden1 = encoder.at(0).out_channels;
  a.hidden2 = encoder.at(1).out_channels;
  a.latent_dim = encoder.at(2).out_channels;
  a.codebook_size = codebook.size();
  return a;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
  if (!(beta_commit >= 0.0)) throw Error(ErrorCode::InvalidArgument, "beta_commit must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (!(restart_threshold >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "restart_threshold must be >= 0");
  }
  if (!(ema_decay > 0.0 && ema_decay <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "ema_decay must lie in (0, 1]");
  }
}

// ---------------------------------------------------------------------------

std::vector<Slice2D> ForwardResult::reconstructions() const {
  std::vector<Slice2D> out;
  for (const ItemTrace& it : items) out.push_back(row_as_slice(it.reconstruction, it.side));
  return out;
}

std::vector<Mat> ForwardResult::latents() const {
  std::vector<Mat> out;
  for (const ItemTrace& it : items) out.push_back(it.z);
  return out;
}

std::vector<Mat> ForwardResult::quantized() const {
  std::vector<Mat> out;
  for (const ItemTrace& it : items) out.push_back(it.z_q);
  return out;
}

std::vector<std::vector<int>> ForwardResult::assignments() const {
  std::vector<std::vector<int>> out;
  for (const ItemTrace& it : items) out.push_back(it.assignments);
  return out;
}

FrozenQuantization FrozenQuantization::from(const ForwardResult& reference) {
  FrozenQuantization f;
  for (const ItemTrace& it : reference.items) {
    f.codes.push_back(it.z_q);
    f.offsets.push_back(it.z_q - it.z);
  }
  return f;
}

ForwardResult forward(const ModelParams& model, std::span<const Slice2D> batch,
                      const FrozenQuantization* frozen) {
  check_batch(batch);
  if (frozen && (frozen->codes.size() != batch.size() || frozen->offsets.size() != batch.size())) {
    throw Error(ErrorCode::ShapeMismatch, "frozen quantization does not match the batch");
  }
  ForwardResult result;
  result.items.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ItemTrace tr;
    tr.side = batch[b].side();
    Mat cur = slice_as_row(batch[b]);
    int side = tr.side;
    for (const ConvLayer& layer : model.encoder) {
      tr.enc_side.push_back(side);
      tr.enc_input.push_back(cur);
      Mat pre = layer.apply(cur, side);
      side = layer.output_side(side);
      cur = layer.relu ? Mat(nn::relu(pre)) : pre;
      tr.enc_pre.push_back(std::move(pre));
    }
    tr.z = std::move(cur);
    Mat decoder_in;
    if (frozen) {
      tr.z_q = frozen->codes[b];
      decoder_in = tr.z + frozen->offsets[b];
      tr.assignments.assign(static_cast<std::size_t>(tr.z.cols()), -1);
    } else {
      if (tr.z.rows() != model.codebook.dim()) {
        throw Error(ErrorCode::ShapeMismatch, "latent width does not match the codebook");
      }
      tr.z_q.resize(tr.z.rows(), tr.z.cols());
      tr.assignments.resize(static_cast<std::size_t>(tr.z.cols()));
      for (Eigen::Index p = 0; p < tr.z.cols(); ++p) {
        const int e = model.codebook.nearest(tr.z.col(p));
        tr.assignments[static_cast<std::size_t>(p)] = e;
        tr.z_q.col(p) = model.codebook.entries.row(e).transpose();
      }
      decoder_in = tr.z_q;
    }
    cur = std::move(decoder_in);
    for (const ConvLayer& layer : model.decoder) {
      tr.dec_side.push_back(side);
      tr.dec_input.push_back(cur);
      Mat pre = layer.apply(cur, side);
      side = layer.output_side(side);
      cur = layer.relu ? Mat(nn::relu(pre)) : pre;
      tr.dec_pre.push_back(std::move(pre));
    }
    if (side != tr.side || cur.rows() != 1) {
      throw Error(ErrorCode::ShapeMismatch, "decoder output does not match the input shape");
    }
    tr.reconstruction = std::move(cur);
    result.items.push_back(std::move(tr));
  }
  return result;
}

LossBreakdown losses(std::span<const Slice2D> batch, std::span<const Slice2D> reconstructions,
                     std::span<const Mat> z, std::span<const Mat> z_q, double alpha,
                     double beta_commit) {
  if (reconstructions.size() != batch.size() || z.size() != batch.size() ||
      z_q.size() != batch.size()) {
    throw Error(ErrorCode::ShapeMismatch, "loss inputs have different batch sizes");
  }
  LossBreakdown l;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].values.rows() != reconstructions[i].values.rows() ||
        batch[i].values.cols() != reconstructions[i].values.cols() ||
        z[i].rows() != z_q[i].rows() || z[i].cols() != z_q[i].cols()) {
      throw Error(ErrorCode::ShapeMismatch, "loss inputs have mismatched shapes");
    }
    l.reconstruction += (batch[i].values - reconstructions[i].values).squaredNorm();
    const double d = (z[i] - z_q[i]).squaredNorm();
    l.codebook += d;
    l.commitment += d;
  }
  l.regularization = l.codebook + beta_commit * l.commitment;
  l.total = l.reconstruction + alpha * l.regularization;
  return l;
}

LossBreakdown losses(std::span<const Slice2D> batch, const ForwardResult& fwd, double alpha,
                     double beta_commit) {
  const auto recon = fwd.reconstructions();
  const auto z = fwd.latents();
  const auto zq = fwd.quantized();
  return losses(batch, recon, z, zq, alpha, beta_commit);
}

ModelGradients ModelGradients::zeros_like(const ModelParams& model) {
  ModelGradients g;
  for (const ConvLayer& l : model.encoder) {
    g.encoder_weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
    g.encoder_bias.push_back(Vec::Zero(l.bias.size()));
  }
  for (const ConvLayer& l : model.decoder) {
    g.decoder_weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
    g.decoder_bias.push_back(Vec::Zero(l.bias.size()));
  }
  return g;
}

ModelGradients backward(const ModelParams& model, std::span<const Slice2D> batch,
                        const ForwardResult& fwd, double alpha, double beta_commit) {
  if (fwd.items.size() != batch.size()) {
    throw Error(ErrorCode::ShapeMismatch, "forward result does not match the batch");
  }
  ModelGradients g = ModelGradients::zeros_like(model);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const ItemTrace& tr = fwd.items[b];
    Mat grad = 2.0 * (tr.reconstruction - slice_as_row(batch[b]));
    for (std::size_t i = model.decoder.size(); i-- > 0;) {
      const ConvLayer& layer = model.decoder[i];
      if (layer.relu) grad = nn::relu_backward(tr.dec_pre[i], grad);
      auto lg = layer_backward(layer, tr.dec_input[i], tr.dec_side[i], grad);
      g.decoder_weight[i] += lg.weight;
      g.decoder_bias[i] += lg.bias;
      grad = std::move(lg.input);
    }
    // Straight-through: the decoder-input gradient lands on z unchanged,
    // plus the commitment term's own gradient.
    grad += (2.0 * alpha * beta_commit) * (tr.z - tr.z_q);
    for (std::size_t i = model.encoder.size(); i-- > 0;) {
      const ConvLayer& layer = model.encoder[i];
      if (layer.relu) grad = nn::relu_backward(tr.enc_pre[i], grad);
      auto lg = layer_backward(layer, tr.enc_input[i], tr.enc_side[i], grad);
      g.encoder_weight[i] += lg.weight;
      g.encoder_bias[i] += lg.bias;
      grad = std::move(lg.input);
    }
  }
  return g;
}

void ema_update(Codebook& codebook, std::span<const Mat> z,
                std::span<const std::vector<int>> assignments) {
  if (z.size() != assignments.size()) {
    throw Error(ErrorCode::ShapeMismatch, "latents and assignments differ in batch size");
  }
  const int entries = codebook.size();
  Vec counts = Vec::Zero(entries);
  Mat sums = Mat::Zero(entries, codebook.dim());
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < z.size(); ++b) {
    if (static_cast<std::size_t>(z[b].cols()) != assignments[b].size() ||
        z[b].rows() != codebook.dim()) {
      throw Error(ErrorCode::ShapeMismatch, "latents do not match their assignments");
    }
    for (std::size_t p = 0; p < assignments[b].size(); ++p) {
      const int e = assignments[b][p];
      if (e < 0 || e >= entries) throw Error(ErrorCode::InvalidArgument, "assignment out of range");
      counts[e] += 1.0;
      sums.row(e) += z[b].col(static_cast<Eigen::Index>(p)).transpose();
      ++assigned;
    }
  }
  if (assigned == 0) return;

  const double d = codebook.decay;
  codebook.ema_cluster_size = d * codebook.ema_cluster_size + (1.0 - d) * counts;
  codebook.ema_embed_sum = d * codebook.ema_embed_sum + (1.0 - d) * sums;
  const double n = codebook.ema_cluster_size.sum();
  const double eps = codebook.ema_eps;
  for (int e = 0; e < entries; ++e) {
    const double smoothed = (codebook.ema_cluster_size[e] + eps) / (n + entries * eps) * n;
    if (smoothed > 0.0) codebook.entries.row(e) = codebook.ema_embed_sum.row(e) / smoothed;
  }
}

int restart_dead_codes(Codebook& codebook, std::span<const Mat> z, double threshold, Rng& rng) {
  if (!(threshold > 0.0) || z.empty()) return 0;
  Eigen::Index total = 0;
  for (const Mat& m : z) total += m.cols();
  if (total == 0) return 0;
  std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);
  int replaced = 0;
  for (int e = 0; e < codebook.size(); ++e) {
    if (codebook.ema_cluster_size[e] >= threshold) continue;
    Eigen::Index flat = pick(rng);
    std::size_t which = 0;
    while (flat >= z[which].cols()) flat -= z[which++].cols();
    codebook.entries.row(e) = z[which].col(flat).transpose();
    codebook.ema_embed_sum.row(e) = codebook.entries.row(e);
    codebook.ema_cluster_size[e] = 1.0;
    ++replaced;
  }
  return replaced;
}

// ---------------------------------------------------------------------------

double input_scale_for(std::span<const double> values) {
  if (values.empty()) return 1.0;
  std::vector<double> mags(values.size());
  std::transform(values.begin(), values.end(), mags.begin(), [](double v) { return std::abs(v); });
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(mags.size()))) - 1;
  const auto nth = mags.begin() + static_cast<std::ptrdiff_t>(std::min(rank, mags.size() - 1));
  std::nth_element(mags.begin(), nth, mags.end());
  return std::max(1.0, *nth);
}

ModelParams train(const TrainingSet& training_set, const TrainConfig& config, TrainReport* report,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (training_set.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training items");

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < training_set.items.size(); ++i) {
    const int side = training_set.items[i].side();
    if (side < 4 || side % 4 != 0) {
      throw Error(ErrorCode::BadSide, "training item side " + std::to_string(side) +
                                          " is not a multiple of 4");
    }
    groups[side].push_back(i);
  }

  // The scale comes from original-resolution items when there are any.
  std::vector<double> values;
  for (std::size_t i = 0; i < training_set.items.size(); ++i) {
    const bool original = i >= training_set.provenance.size() || training_set.provenance[i].factor == 1;
    if (!original) continue;
    const auto& v = training_set.items[i].values;
    values.insert(values.end(), v.data(), v.data() + v.size());
  }
  if (values.empty()) {
    for (const Slice2D& s : training_set.items) {
      values.insert(values.end(), s.values.data(), s.values.data() + s.values.size());
    }
  }
  const double scale = input_scale_for(values);

  std::vector<Slice2D> items = training_set.items;
  for (Slice2D& s : items) s.values /= scale;

  ModelParams model = ModelParams::init(config.arch, config.seed);
  model.input_scale = scale;
  model.codebook.decay = config.ema_decay;
  model.codebook.ema_eps = config.ema_eps;
  Rng rng = make_rng(config.seed, "train");
  init_codebook_from_data(model, items, rng);

  if (report) {
    report->epoch_loss.clear();
    report->initial_loss = mean_loss(model, items, groups, config);
  }

  AdamState enc_state = adam_state_for(model.encoder);
  AdamState dec_state = adam_state_for(model.decoder);
  long step = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> batches;
    for (auto& [side, idx] : groups) {
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t start = 0; start < idx.size(); start += bs) {
        const std::size_t stop = std::min(idx.size(), start + bs);
        batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                             idx.begin() + static_cast<std::ptrdiff_t>(stop));
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);

    double epoch_sum = 0.0;
    for (const auto& idx : batches) {
      const auto batch = gather(items, idx);
      const ForwardResult fwd = forward(model, batch);
      epoch_sum += losses(batch, fwd, config.alpha, config.beta_commit).total;
      const ModelGradients grads = backward(model, batch, fwd, config.alpha, config.beta_commit);
      const std::vector<Mat> latents = fwd.latents();
      ema_update(model.codebook, latents, fwd.assignments());
      restart_dead_codes(model.codebook, latents, config.restart_threshold, rng);

      ++step;
      const double bias1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      apply_adam(model.encoder, grads.encoder_weight, grads.encoder_bias, enc_state, config, bias1, bias2);
      apply_adam(model.decoder, grads.decoder_weight, grads.decoder_bias, dec_state, config, bias1, bias2);
    }
    if (report) report->epoch_loss.push_back(epoch_sum / static_cast<double>(items.size()));
    if (on_epoch) on_epoch(epoch, model);
  }

  if (report) report->final_loss = mean_loss(model, items, groups, config);
  return model;
}

Histogram3D denoise(const ModelParams& model, const Histogram3D& noisy) {
  if (noisy.M() < 4 || noisy.M() % 4 != 0) {
    throw Error(ErrorCode::BadSide, "M = " + std::to_string(noisy.M()) + " is not a multiple of 4");
  }
  Histogram3D out(noisy.grid());
  for (int t = 0; t < noisy.T(); ++t) {
    Slice2D s = slice_at(noisy, t);
    s.values /= model.input_scale;
    const ForwardResult fwd = forward(model, std::span<const Slice2D>(&s, 1));
    out.slice_view(t) = Eigen::Map<const SliceMatrix>(fwd.items.front().reconstruction.data(),
                                                      noisy.M(), noisy.M()) *
                        model.input_scale;
  }
  return out;
}

}  // namespace vdr
