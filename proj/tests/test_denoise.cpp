#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vdr/denoise.hpp"

using namespace vdr;
using namespace gradcheck;

namespace {

// Direct-loop convolution: y[o][r][c] = b[o] + sum_{i,kr,kc} W[o][i][kr][kc] x[i][r*s-p+kr][c*s-p+kc].
Mat naive_conv(const Mat& x, int side, const Mat& w, const Vec& b, int k, int s, int p) {
  const int cin = static_cast<int>(x.rows());
  const int cout = static_cast<int>(w.rows());
  const int out = (side + 2 * p - k) / s + 1;
  Mat y(cout, out * out);
  for (int o = 0; o < cout; ++o)
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < out; ++c) {
        double acc = b[o];
        for (int i = 0; i < cin; ++i)
          for (int kr = 0; kr < k; ++kr)
            for (int kc = 0; kc < k; ++kc) {
              const int ir = r * s - p + kr, ic = c * s - p + kc;
              if (ir < 0 || ir >= side || ic < 0 || ic >= side) continue;
              acc += w(o, (i * k + kr) * k + kc) * x(i, ir * side + ic);
            }
        y(o, r * out + c) = acc;
      }
  return y;
}

// Direct-loop transposed convolution as a scatter: every input pixel adds
// x[i][r][c] * W[i][o][kr][kc] to output (r*s-p+kr, c*s-p+kc).
Mat naive_conv_t(const Mat& x, int side, const Mat& w, const Vec& b, int k, int s, int p) {
  const int cin = static_cast<int>(x.rows());
  const int cout = static_cast<int>(b.size());
  const int out = (side - 1) * s - 2 * p + k;
  Mat y(cout, out * out);
  for (int o = 0; o < cout; ++o) y.row(o).setConstant(b[o]);
  for (int i = 0; i < cin; ++i)
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c)
        for (int o = 0; o < cout; ++o)
          for (int kr = 0; kr < k; ++kr)
            for (int kc = 0; kc < k; ++kc) {
              const int orow = r * s - p + kr, ocol = c * s - p + kc;
              if (orow < 0 || orow >= out || ocol < 0 || ocol >= out) continue;
              y(o, orow * out + ocol) += w(i, (o * k + kr) * k + kc) * x(i, r * side + c);
            }
  return y;
}

Architecture tiny_arch() {
  Architecture a;
  a.hidden1 = 2;
  a.hidden2 = 2;
  a.latent_dim = 2;
  a.codebook_size = 4;
  return a;
}

bool same_model(const ModelParams& a, const ModelParams& b) {
  if (a.encoder.size() != b.encoder.size() || a.decoder.size() != b.decoder.size()) return false;
  for (std::size_t i = 0; i < a.encoder.size(); ++i) {
    if (a.encoder[i].weight != b.encoder[i].weight || a.encoder[i].bias != b.encoder[i].bias) return false;
  }
  for (std::size_t i = 0; i < a.decoder.size(); ++i) {
    if (a.decoder[i].weight != b.decoder[i].weight || a.decoder[i].bias != b.decoder[i].bias) return false;
  }
  return a.codebook.entries == b.codebook.entries &&
         a.codebook.ema_cluster_size == b.codebook.ema_cluster_size &&
         a.codebook.ema_embed_sum == b.codebook.ema_embed_sum && a.input_scale == b.input_scale;
}

}  // namespace

TEST_CASE("conv kernels match direct-loop oracles") {
  std::mt19937_64 rng(11);
  struct Geo { int cin, cout, side, k, s, p; };
  for (const Geo& g : {Geo{1, 3, 8, 4, 2, 1}, Geo{3, 2, 4, 4, 2, 1}, Geo{2, 2, 5, 3, 1, 1},
                       Geo{2, 3, 6, 3, 2, 0}}) {
    const nn::ConvShape shape{g.k, g.s, g.p};
    const Mat x = random_mat(g.cin, g.side * g.side, rng);
    const Mat w = random_mat(g.cout, g.cin * g.k * g.k, rng);
    const Vec b = random_vec(g.cout, rng);
    const Mat y = nn::conv2d(x, g.side, w, b, shape);
    CHECK((y - naive_conv(x, g.side, w, b, g.k, g.s, g.p)).cwiseAbs().maxCoeff() < 1e-12);

    const Mat wt = random_mat(g.cin, g.cout * g.k * g.k, rng);
    const int in_side = shape.conv_out(g.side);
    if (shape.transpose_out(in_side) == g.side) {
      const Mat xt = random_mat(g.cin, in_side * in_side, rng);
      const Mat yt = nn::conv_transpose2d(xt, wt, b, in_side, shape);
      CHECK((yt - naive_conv_t(xt, in_side, wt, b, g.k, g.s, g.p)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  std::mt19937_64 rng(12);
  const nn::ConvShape shape{4, 2, 1};
  const Mat x = random_mat(3, 64, rng);
  const Mat w = random_mat(2, 3 * 16, rng);  // conv: 2 x (3*16); as convT from 2 to 3 channels
  const Mat y = random_mat(2, 16, rng);
  const Mat cx = nn::conv2d(x, 8, w, Vec(Vec::Zero(2)), shape);
  const Mat ty = nn::conv_transpose2d(y, w, Vec(Vec::Zero(3)), 4, shape);
  CHECK(cx.cwiseProduct(y).sum() == doctest::Approx(x.cwiseProduct(ty).sum()).epsilon(1e-12));
}

TEST_CASE("per-layer gradients agree with central differences") {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(13);
  SUBCASE("conv2d") {
    const nn::ConvShape shape{4, 2, 1};
    Mat x = random_mat(2, 64, rng);
    Mat w = random_mat(3, 2 * 16, rng);
    Vec b = random_vec(3, rng);
    const Mat G = random_mat(3, 16, rng);
    auto f = [&] { return nn::conv2d(x, 8, w, b, shape).cwiseProduct(G).sum(); };
    const auto g = nn::conv2d_backward(x, 8, w, G, shape);
    CHECK(fd_check(x, g.input, f) < 1e-3);
    CHECK(fd_check(w, g.weight, f) < 1e-3);
    CHECK(fd_check(b, g.bias, f) < 1e-3);
  }
  SUBCASE("conv_transpose2d") {
    const nn::ConvShape shape{4, 2, 1};
    Mat x = random_mat(3, 16, rng);
    Mat w = random_mat(3, 2 * 16, rng);
    Vec b = random_vec(2, rng);
    const Mat G = random_mat(2, 64, rng);
    auto f = [&] { return nn::conv_transpose2d(x, w, b, 4, shape).cwiseProduct(G).sum(); };
    const auto g = nn::conv_transpose2d_backward(x, w, 4, G, shape);
    CHECK(fd_check(x, g.input, f) < 1e-3);
    CHECK(fd_check(w, g.weight, f) < 1e-3);
    CHECK(fd_check(b, g.bias, f) < 1e-3);
  }
  SUBCASE("relu") {
    Mat x = random_mat(4, 9, rng);
    const Mat G = random_mat(4, 9, rng);
    auto f = [&] { return Mat(nn::relu(x)).cwiseProduct(G).sum(); };
    const Mat g = nn::relu_backward(x, G);
    CHECK(fd_check(x, g, f) < 1e-3);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 60.0);
}

TEST_CASE("full-model gradient agrees with central differences of the straight-through surrogate") {
  std::mt19937_64 rng(14);
  ModelParams model = ModelParams::init(tiny_arch(), 5);
  std::vector<Slice2D> batch = {random_slice(4, rng), random_slice(4, rng)};
  const double alpha = 0.7, beta = 0.25;

  const ForwardResult ref = forward(model, batch);
  const FrozenQuantization frozen = FrozenQuantization::from(ref);
  const ForwardResult ref_frozen = forward(model, batch, &frozen);
  const ModelGradients g = backward(model, batch, ref_frozen, alpha, beta);

  // With quantization frozen, z_q is a constant and the decoder sees z plus a
  // constant offset, so L_C + alpha*beta*commit is differentiable and its
  // gradient is exactly what the straight-through rule computes.
  auto f = [&] {
    const ForwardResult fr = forward(model, batch, &frozen);
    const LossBreakdown l = losses(batch, fr, alpha, beta);
    return l.reconstruction + alpha * beta * l.commitment;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    worst = std::max(worst, fd_check(model.encoder[i].weight, g.encoder_weight[i], f));
    worst = std::max(worst, fd_check(model.encoder[i].bias, g.encoder_bias[i], f));
  }
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    worst = std::max(worst, fd_check(model.decoder[i].weight, g.decoder_weight[i], f));
    worst = std::max(worst, fd_check(model.decoder[i].bias, g.decoder_bias[i], f));
  }
  CHECK(worst < 1e-3);

  SUBCASE("the unfrozen forward gives the same gradients at the reference point") {
    const ModelGradients g2 = backward(model, batch, ref, alpha, beta);
    for (std::size_t i = 0; i < g.encoder_weight.size(); ++i) {
      CHECK((g.encoder_weight[i] - g2.encoder_weight[i]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("loss gradient at the output is 2 (recon - target)") {
  std::mt19937_64 rng(15);
  Slice2D target = random_slice(4, rng);
  Slice2D recon = random_slice(4, rng);
  const Mat z = random_mat(2, 1, rng), zq = random_mat(2, 1, rng);
  const std::vector<Mat> zs{z}, zqs{zq};
  auto f = [&] {
    return losses(std::span(&target, 1), std::span(&recon, 1), zs, zqs, 1.0, 0.25).reconstruction;
  };
  Mat analytic = 2.0 * (recon.values - target.values);
  Mat values = recon.values;
  auto g = [&] {
    recon.values = values;
    return f();
  };
  CHECK(fd_check(values, analytic, g) < 1e-3);
}

TEST_CASE("backward: zero input, zero targets, zero biases give zero gradients") {
  std::mt19937_64 rng(16);
  ModelParams model = ModelParams::init(tiny_arch(), 2);
  for (auto& l : model.encoder) l.bias.setZero();
  for (auto& l : model.decoder) l.bias.setZero();
  model.codebook.entries.setZero();
  Slice2D zero;
  zero.values = Mat::Zero(8, 8);
  const std::vector<Slice2D> batch{zero};
  const ModelGradients g = backward(model, batch, forward(model, batch), 1.0, 0.25);
  for (const Mat& m : g.encoder_weight) CHECK(m.isZero());
  for (const Mat& m : g.decoder_weight) CHECK(m.isZero());
}

TEST_CASE("backward: duplicating the batch doubles every gradient") {
  std::mt19937_64 rng(17);
  const ModelParams model = ModelParams::init(tiny_arch(), 3);
  const std::vector<Slice2D> one{random_slice(8, rng)};
  const std::vector<Slice2D> two{one[0], one[0]};
  const ModelGradients g1 = backward(model, one, forward(model, one), 1.0, 0.25);
  const ModelGradients g2 = backward(model, two, forward(model, two), 1.0, 0.25);
  for (std::size_t i = 0; i < g1.encoder_weight.size(); ++i) {
    CHECK((g2.encoder_weight[i] - 2.0 * g1.encoder_weight[i]).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((g2.decoder_weight[i] - 2.0 * g1.decoder_weight[i]).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("forward") {
  SUBCASE("zero-weight model maps zero input to zero") {
    const ModelParams model = ModelParams::zeros(Architecture{});
    Slice2D s;
    s.values = Mat::Zero(8, 8);
    const ForwardResult f = forward(model, std::span(&s, 1));
    CHECK(f.items[0].reconstruction.isZero());
    CHECK(f.items[0].z.rows() == 64);
    CHECK(f.items[0].z.cols() == 4);
  }
  SUBCASE("a codebook of identical entries assigns everything to index 0") {
    ModelParams model = ModelParams::init(tiny_arch(), 4);
    Mat entries(4, 2);
    entries.rowwise() = Eigen::RowVector2d(0.3, -0.2);
    model.codebook = Codebook::from_entries(entries);
    std::mt19937_64 rng(18);
    std::vector<Slice2D> batch{random_slice(16, rng, 5.0), random_slice(16, rng, 5.0)};
    for (const auto& a : forward(model, batch).assignments())
      for (int e : a) CHECK(e == 0);
  }
  SUBCASE("hand-computed 4x4 single-channel trace") {
    // All weights 1, biases 0: encoder gives 9 per cell, then 36, then 36;
    // the decoder scatters 36 back with per-axis overlap counts (1, 2, 2, 1).
    Architecture a;
    a.hidden1 = a.hidden2 = a.latent_dim = a.codebook_size = 1;
    ModelParams model = ModelParams::zeros(a);
    for (auto& l : model.encoder) l.weight.setOnes();
    for (auto& l : model.decoder) l.weight.setOnes();
    model.codebook = Codebook::from_entries(Mat::Constant(1, 1, 36.0));
    Slice2D s;
    s.values = Mat::Ones(4, 4);
    const ForwardResult f = forward(model, std::span(&s, 1));
    CHECK(f.items[0].enc_pre[0].isApprox(Mat::Constant(1, 4, 9.0)));
    CHECK(f.items[0].z(0, 0) == 36.0);
    const double overlap[4] = {1, 2, 2, 1};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(f.items[0].reconstruction(0, r * 4 + c) == 36.0 * overlap[r] * overlap[c]);
  }
  SUBCASE("random model matches a composition of direct-loop layers") {
    std::mt19937_64 rng(19);
    const ModelParams model = ModelParams::init(tiny_arch(), 6);
    Slice2D s = random_slice(8, rng);
    const ForwardResult f = forward(model, std::span(&s, 1));
    Mat cur = Eigen::Map<const Mat>(s.values.data(), 1, 64);
    int side = 8;
    for (const auto& l : model.encoder) {
      cur = naive_conv(cur, side, l.weight, l.bias, l.shape.kernel, l.shape.stride, l.shape.padding);
      side = l.shape.conv_out(side);
      if (l.relu) cur = cur.cwiseMax(0.0);
    }
    CHECK((cur - f.items[0].z).cwiseAbs().maxCoeff() < 1e-12);
    for (Eigen::Index p = 0; p < cur.cols(); ++p) {
      const int e = f.items[0].assignments[static_cast<std::size_t>(p)];
      for (int j = 0; j < model.codebook.size(); ++j) {
        CHECK((model.codebook.entries.row(e).transpose() - cur.col(p)).squaredNorm() <=
              (model.codebook.entries.row(j).transpose() - cur.col(p)).squaredNorm());
      }
      cur.col(p) = model.codebook.entries.row(e).transpose();
    }
    for (const auto& l : model.decoder) {
      cur = naive_conv_t(cur, side, l.weight, l.bias, l.shape.kernel, l.shape.stride, l.shape.padding);
      side = l.shape.transpose_out(side);
      if (l.relu) cur = cur.cwiseMax(0.0);
    }
    CHECK((cur - f.items[0].reconstruction).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("shape errors") {
    const ModelParams model = ModelParams::init(tiny_arch(), 1);
    std::mt19937_64 rng(20);
    std::vector<Slice2D> bad{random_slice(6, rng)};
    CHECK_THROWS_AS(forward(model, bad), Error);
    std::vector<Slice2D> mixed{random_slice(8, rng), random_slice(4, rng)};
    CHECK_THROWS_AS(forward(model, mixed), Error);
  }
}

TEST_CASE("losses") {
  std::mt19937_64 rng(21);
  std::vector<Slice2D> batch{random_slice(4, rng), random_slice(4, rng)};
  std::vector<Slice2D> recon{random_slice(4, rng), random_slice(4, rng)};
  std::vector<Mat> z{random_mat(3, 2, rng), random_mat(3, 2, rng)};
  std::vector<Mat> zq{random_mat(3, 2, rng), random_mat(3, 2, rng)};

  double lc = 0.0, d = 0.0;
  for (int b = 0; b < 2; ++b) {
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        const double e = batch[b].values(r, c) - recon[b].values(r, c);
        lc += e * e;
      }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) d += (z[b](i, j) - zq[b](i, j)) * (z[b](i, j) - zq[b](i, j));
  }
  const LossBreakdown l = losses(batch, recon, z, zq, 0.5, 0.25);
  CHECK(std::abs(l.reconstruction - lc) <= 1e-12 * lc);
  CHECK(l.regularization == doctest::Approx(1.25 * d).epsilon(1e-12));
  CHECK(l.total == doctest::Approx(lc + 0.5 * 1.25 * d).epsilon(1e-12));
  CHECK(losses(batch, recon, z, zq, 0.0, 0.25).total == l.reconstruction);
  CHECK(losses(batch, batch, z, z, 1.0, 0.25).total == 0.0);
  std::vector<Slice2D> short_recon{recon[0]};
  CHECK_THROWS_AS(losses(batch, short_recon, z, zq, 1.0, 0.25), Error);
}

TEST_CASE("ema_update") {
  SUBCASE("decay 1 and an empty batch leave the codebook unchanged") {
    Codebook cb = Codebook::from_entries(Mat::Identity(3, 2), 1.0);
    const Codebook before = cb;
    ema_update(cb, {}, {});
    CHECK(cb.entries == before.entries);
    CHECK(cb.ema_cluster_size == before.ema_cluster_size);
  }
  SUBCASE("an entry fed one vector converges to it") {
    // Scalar fixed-point oracle: sizes n_e and sums s_e follow
    // n <- d n + (1-d) [e==1], s <- d s + (1-d) v [e==1]; entry = s / smoothed(n).
    const double d = 0.9, eps = 1e-5;
    Codebook cb = Codebook::from_entries(Mat::Zero(3, 2), d, eps);
    const Mat v = (Mat(2, 1) << 1.5, -2.0).finished();
    const std::vector<Mat> z{v};
    const std::vector<std::vector<int>> assign{{1}};
    double n[3] = {1, 1, 1}, s1[2] = {0, 0};
    double prev = (cb.entries.row(1).transpose() - v).norm();
    for (int i = 0; i < 200; ++i) {
      ema_update(cb, z, assign);
      for (int e = 0; e < 3; ++e) n[e] = d * n[e] + (e == 1 ? 1.0 - d : 0.0);
      for (int j = 0; j < 2; ++j) s1[j] = d * s1[j] + (1.0 - d) * v(j, 0);
      const double total = n[0] + n[1] + n[2];
      const double smoothed = (n[1] + eps) / (total + 3 * eps) * total;
      CHECK(cb.entries(1, 0) == doctest::Approx(s1[0] / smoothed).epsilon(1e-12));
      CHECK(cb.entries(1, 1) == doctest::Approx(s1[1] / smoothed).epsilon(1e-12));
      const double dist = (cb.entries.row(1).transpose() - v).norm();
      // Smoothing leaves an O(eps) offset; above it the approach is monotone.
      if (prev > 1e-3) CHECK(dist <= prev);
      prev = dist;
    }
    CHECK(prev < 1e-3);
    CHECK(cb.entries.allFinite());
    CHECK((cb.ema_cluster_size.array() >= 0.0).all());
  }
  SUBCASE("an unused entry stays finite as its cluster size decays") {
    Codebook cb = Codebook::from_entries(Mat::Ones(2, 2), 0.5);
    const std::vector<Mat> z{Mat::Zero(2, 1)};
    const std::vector<std::vector<int>> assign{{0}};
    for (int i = 0; i < 2000; ++i) ema_update(cb, z, assign);
    CHECK(cb.entries.allFinite());
    CHECK(cb.ema_cluster_size[1] >= 0.0);
  }
  SUBCASE("one step matches the smoothed-mean formula") {
    Codebook cb = Codebook::from_entries((Mat(2, 1) << 1.0, 3.0).finished(), 0.8, 1e-5);
    const std::vector<Mat> z{(Mat(1, 3) << 2.0, 4.0, 10.0).finished()};
    const std::vector<std::vector<int>> assign{{0, 0, 1}};
    ema_update(cb, z, assign);
    const double n0 = 0.8 + 0.2 * 2, n1 = 0.8 + 0.2 * 1;
    const double s0 = 0.8 * 1.0 + 0.2 * 6.0, s1 = 0.8 * 3.0 + 0.2 * 10.0;
    const double n = n0 + n1;
    CHECK(cb.entries(0, 0) == doctest::Approx(s0 / ((n0 + 1e-5) / (n + 2e-5) * n)));
    CHECK(cb.entries(1, 0) == doctest::Approx(s1 / ((n1 + 1e-5) / (n + 2e-5) * n)));
  }
}

TEST_CASE("restart_dead_codes reseeds only starved entries") {
  Codebook cb = Codebook::from_entries(Mat::Zero(3, 2));
  cb.ema_cluster_size << 5.0, 0.01, 2.0;
  const std::vector<Mat> z{(Mat(2, 1) << 7.0, 8.0).finished()};
  Rng rng = make_rng(1, "restart");
  CHECK(restart_dead_codes(cb, z, 0.5, rng) == 1);
  CHECK(cb.entries(1, 0) == 7.0);
  CHECK(cb.entries(1, 1) == 8.0);
  CHECK(cb.entries.row(0).isZero());
  CHECK(restart_dead_codes(cb, z, 0.0, rng) == 0);
}

TEST_CASE("prepare_training_set") {
  const GridSpec g1 = oracle::unit_grid(8, 1);
  Histogram3D h(g1);
  std::mt19937_64 rng(22);
  for (Eigen::Index i = 0; i < h.counts().size(); ++i) h.counts()[i] = std::uniform_real_distribution<>(-3, 9)(rng);
  const TrainingSet one = prepare_training_set(h, {1});
  REQUIRE(one.size() == 1);
  CHECK(one.items[0].values == slice_at(h, 0).values);

  const GridSpec g2 = oracle::unit_grid(8, 2);
  Histogram3D h2(g2);
  for (Eigen::Index i = 0; i < h2.counts().size(); ++i) h2.counts()[i] = std::uniform_real_distribution<>(-3, 9)(rng);
  const TrainingSet set = prepare_training_set(h2, {1, 2, 4});
  REQUIRE(set.size() == 6);
  const int sides[6] = {8, 8, 4, 4, 2, 2};
  for (int i = 0; i < 6; ++i) {
    CHECK(set.items[i].side() == sides[i]);
    const int t = set.provenance[i].t_index, f = set.provenance[i].factor;
    // Independent block-sum oracle on the source slice.
    std::vector<std::vector<double>> src(8, std::vector<double>(8));
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) src[r][c] = h2(t, r, c);
    const auto expect = oracle::block_sums(src, f);
    for (int r = 0; r < 8 / f; ++r)
      for (int c = 0; c < 8 / f; ++c) CHECK(set.items[i].values(r, c) == doctest::Approx(expect[r][c]).epsilon(1e-12));
    CHECK(set.items[i].sum() == doctest::Approx(slice_at(h2, t).sum()).epsilon(1e-12));
  }
  CHECK_THROWS_AS(prepare_training_set(h2, {3}), Error);
}

TEST_CASE("train") {
  const GridSpec g = oracle::unit_grid(8, 2);
  Histogram3D h(g);
  std::mt19937_64 rng(23);
  for (Eigen::Index i = 0; i < h.counts().size(); ++i) h.counts()[i] = std::uniform_real_distribution<>(0, 10)(rng);
  TrainConfig cfg;
  cfg.arch = tiny_arch();
  cfg.arch.hidden1 = 4;
  cfg.arch.hidden2 = 4;
  cfg.seed = 9;

  SUBCASE("one epoch on one tiny slice runs; more epochs lower the loss") {
    Histogram3D tiny(oracle::unit_grid(4, 1));
    tiny.counts() << 1, 2, 3, 4, 5, 6, 7, 8, 8, 7, 6, 5, 4, 3, 2, 1;
    const TrainingSet set = prepare_training_set(tiny, {1});
    cfg.epochs = 1;
    TrainReport r1;
    train(set, cfg, &r1);
    CHECK(r1.epoch_loss.size() == 1);
    cfg.epochs = 20;
    TrainReport r;
    train(set, cfg, &r);
    CHECK(r.final_loss < r.initial_loss);
  }
  SUBCASE("same seed, same model; the callback fires once per epoch") {
    cfg.epochs = 3;
    const TrainingSet set = prepare_training_set(h, {1, 2});
    int calls = 0;
    const ModelParams a = train(set, cfg, nullptr, [&](int e, const ModelParams&) { CHECK(e == calls++); });
    const ModelParams b = train(set, cfg);
    CHECK(calls == 3);
    CHECK(same_model(a, b));
    cfg.seed = 10;
    CHECK_FALSE(same_model(a, train(set, cfg)));
  }
  SUBCASE("input scale comes from original-resolution items") {
    cfg.epochs = 0;
    Histogram3D big(oracle::unit_grid(16, 2));
    for (Eigen::Index i = 0; i < big.counts().size(); ++i) big.counts()[i] = std::uniform_real_distribution<>(0, 10)(rng);
    const ModelParams m = train(prepare_training_set(big, {1, 4}), cfg);
    std::vector<double> v(big.counts().data(), big.counts().data() + big.counts().size());
    CHECK(m.input_scale == input_scale_for(v));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train(TrainingSet{}, cfg), Error);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(prepare_training_set(h, {1}), cfg), Error);
  }
}

TEST_CASE("input_scale_for") {
  CHECK(input_scale_for(std::vector<double>{}) == 1.0);
  CHECK(input_scale_for(std::vector<double>{0.1, -0.5}) == 1.0);
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = -(i + 1.0);
  CHECK(input_scale_for(v) == 99.0);
}

TEST_CASE("denoise") {
  const GridSpec g = oracle::unit_grid(8, 3);
  Histogram3D h(g);
  std::mt19937_64 rng(24);
  for (Eigen::Index i = 0; i < h.counts().size(); ++i) h.counts()[i] = std::normal_distribution<>(0, 50)(rng);
  SUBCASE("random-init model: dims preserved, output finite") {
    ModelParams m = ModelParams::init(Architecture{}, 1);
    m.input_scale = 7.0;
    const Histogram3D out = denoise(m, h);
    CHECK(out.grid() == h.grid());
    CHECK(out.counts().allFinite());
  }
  SUBCASE("side not divisible by 4") {
    CHECK_THROWS_AS(denoise(ModelParams::init(tiny_arch(), 1), Histogram3D(oracle::unit_grid(6, 1))), Error);
  }
  SUBCASE("a model fit to a constant histogram reproduces the constant") {
    Histogram3D c(oracle::unit_grid(8, 4));
    c.counts().setConstant(5.0);
    TrainConfig cfg;
    cfg.arch.hidden1 = 8;
    cfg.arch.hidden2 = 8;
    cfg.arch.latent_dim = 8;
    cfg.arch.codebook_size = 16;
    cfg.learning_rate = 3e-3;
    cfg.epochs = 1000;
    cfg.seed = 4;
    const ModelParams m = train(prepare_training_set(c, {1}), cfg);
    const Histogram3D out = denoise(m, c);
    CHECK(((out.counts().array() - 5.0).abs() / 5.0).maxCoeff() < 0.05);
  }
}
