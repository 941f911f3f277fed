#include <doctest.h>

#include <map>
#include <set>

#include "vdr/query.hpp"
#include "vdr/synth.hpp"

using namespace vdr;

namespace {

/// Least-squares slope of log(count) on log(x) over sizes 1..max_x with at
/// least `min_count` users.
double loglog_slope(const std::vector<int>& sizes, int max_x, int min_count) {
  std::map<int, int> hist;
  for (int s : sizes) ++hist[s];
  std::vector<double> xs, ys;
  for (int x = 1; x <= max_x; ++x) {
    if (hist[x] < min_count) continue;
    xs.push_back(std::log(x));
    ys.push_back(std::log(hist[x]));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

PipelineConfig small_pipeline(const GridSpec& grid) {
  PipelineConfig c;
  c.grid = grid;
  c.epsilon = 1.0;
  c.k = 1;
  c.factors = {1, 2};
  c.train.epochs = 3;
  c.train.arch.hidden1 = 4;
  c.train.arch.hidden2 = 4;
  c.train.arch.latent_dim = 4;
  c.train.arch.codebook_size = 8;
  c.seed = 11;
  c.train.seed = 12;
  return c;
}

}  // namespace

TEST_CASE("gmm generation") {
  const GridSpec g = default_synthetic_grid(32, 16);
  SUBCASE("vanishing sigma puts every point on a center") {
    GmmSpec s;
    s.sigma = 1e-9;
    s.total_points = 5000;
    s.seed = 1;
    const GmmSample out = gmm_generate(s, g);
    const Histogram3D h = discretize(out.dataset, g);
    CHECK(h.sum() == 5000.0);
    CHECK((h.counts().array() > 0).count() <= 50);
    std::set<std::tuple<double, double, double>> centers;
    for (int c = 0; c < out.centers.rows(); ++c) centers.insert({out.centers(c, 0), out.centers(c, 1), out.centers(c, 2)});
    CHECK(centers.size() == 50);
  }
  SUBCASE("component shares sit in the binomial band") {
    GmmSpec s;
    s.total_points = 200000;
    s.seed = 2;
    const GmmSample out = gmm_generate(s, g);
    std::vector<double> share(50, 0.0);
    for (int c : out.component) share[c] += 1.0;
    const double p = 1.0 / 50, n = 200000;
    const double band = 3.0 * std::sqrt(p * (1 - p) / n);
    int outside = 0;
    for (double c : share) outside += std::abs(c / n - p) > band ? 1 : 0;
    // Each share leaves the 3-sigma band with probability 0.27%.
    CHECK(outside <= 1);
    CHECK(discretize(out.dataset, g).sum() == n);
    CHECK(out.dataset.user_count() == out.dataset.size());
  }
  SUBCASE("seeded determinism") {
    GmmSpec s;
    s.total_points = 1000;
    s.seed = 3;
    const auto a = gmm_generate(s, g).dataset.records();
    const auto b = gmm_generate(s, g).dataset.records();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].lat == b[i].lat);
      CHECK(a[i].t == b[i].t);
    }
  }
  GmmSpec bad;
  bad.sigma = 0.0;
  CHECK_THROWS_AS(gmm_generate(bad, g), Error);
}

TEST_CASE("power-law contributions") {
  SUBCASE("slope of the size histogram") {
    PowerLawSpec s;
    s.n_users = 20000;
    s.seed = 4;
    const auto sizes = sample_contribution_sizes(s);
    CHECK(std::abs(loglog_slope(sizes, 12, 20) - (-2.69)) <= 0.15);
    // Empirical CCDF is non-increasing.
    std::map<int, int> hist;
    for (int x : sizes) ++hist[x];
    int tail = static_cast<int>(sizes.size());
    int prev = tail;
    for (const auto& [x, c] : hist) {
      CHECK(tail <= prev);
      prev = tail;
      tail -= c;
    }
    CHECK(*std::max_element(sizes.begin(), sizes.end()) <= s.k_max);
  }
  SUBCASE("a very steep exponent gives single-record users") {
    PowerLawSpec s;
    s.exponent = -20;
    s.n_users = 5000;
    const auto sizes = sample_contribution_sizes(s);
    CHECK(std::count(sizes.begin(), sizes.end(), 1) >= 4995);
  }
  SUBCASE("assignment in blocks") {
    GmmSpec gs;
    gs.total_points = 3000;
    const Dataset base = gmm_generate(gs, default_synthetic_grid(16, 8)).dataset;
    PowerLawSpec s;
    s.n_users = 3000;
    s.seed = 5;
    const Dataset d = powerlaw_assign(base, s);
    CHECK(d.size() == base.size());
    const auto sizes = sample_contribution_sizes(s);
    const auto& idx = d.per_user_index();
    char id[32];
    std::size_t covered = 0;
    for (std::size_t u = 0; covered < d.size(); ++u) {
      std::snprintf(id, sizeof id, "u%07zu", u);
      const std::size_t expect = std::min<std::size_t>(sizes[u], d.size() - covered);
      CHECK(idx.at(id).size() == expect);
      covered += expect;
    }
    const Dataset again = powerlaw_assign(base, s);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.records()[i].user_id == again.records()[i].user_id);
    s.n_users = 10;
    CHECK_THROWS_AS(powerlaw_assign(base, s), Error);
  }
  PowerLawSpec bad;
  bad.exponent = -0.5;
  CHECK_THROWS_AS(sample_contribution_sizes(bad), Error);
}

TEST_CASE("release stream") {
  const GridSpec g = default_synthetic_grid(8, 4);
  std::vector<Dataset> stream;
  for (int i = 0; i < 4; ++i) {
    GmmSpec s;
    s.components = 6;
    s.sigma = 1.0;
    s.lattice = 3;
    s.total_points = 4000;
    s.seed = 100;  // same pattern each release: a stationary stream
    Dataset d = gmm_generate(s, g).dataset;
    stream.push_back(d);
  }
  const PipelineConfig cfg = small_pipeline(g);

  SUBCASE("one release equals the single-shot pipeline") {
    const StreamResult r = release_stream({stream[0]}, {0.7}, 1, cfg);
    PipelineConfig single = cfg;
    single.epsilon = 0.7;
    PrivacyLedger ledger;
    const PipelineResult p = run_pipeline(stream[0], single, ledger);
    CHECK(r.releases[0].released.counts() == p.released.counts());
    CHECK(r.ledger.total() == ledger.total());
  }
  SUBCASE("ledger total is the sum of budgets") {
    const std::vector<double> budgets{0.1, 0.25, 0.5, 0.15};
    const StreamResult r = release_stream(stream, budgets, std::nullopt, cfg);
    CHECK(r.ledger.total() == 0.1 + 0.25 + 0.5 + 0.15);
    CHECK(r.ledger.entries().size() == 4);
    CHECK(r.retrained == std::vector<bool>{true, false, false, false});
    const StreamResult every2 = release_stream(stream, budgets, 2, cfg);
    CHECK(every2.retrained == std::vector<bool>{true, false, true, false});
  }
  SUBCASE("reusing the first model stays within 1.5x of retraining every release") {
    const std::vector<double> budgets(4, 1.0);
    const StreamResult always = release_stream(stream, budgets, 1, cfg);
    const StreamResult once = release_stream(stream, budgets, std::nullopt, cfg);
    const Histogram3D truth = discretize(stream[0], g);
    double e_always = 0.0, e_once = 0.0;
    for (int i = 0; i < 4; ++i) {
      e_always += (always.releases[i].released.counts() - truth.counts()).squaredNorm();
      e_once += (once.releases[i].released.counts() - truth.counts()).squaredNorm();
    }
    CHECK(e_once <= 1.5 * e_always);
  }
  CHECK_THROWS_AS(release_stream(stream, {0.1, 0.0, 0.1, 0.1}, 1, cfg), Error);
  CHECK_THROWS_AS(release_stream(stream, {0.1}, 1, cfg), Error);
}
