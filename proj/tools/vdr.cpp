// vdr command-line tool: file-based wrappers over the library plus the
// end-to-end `run` pipeline.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vdr/collect.hpp"
#include "vdr/core.hpp"
#include "vdr/denoise.hpp"
#include "vdr/io.hpp"
#include "vdr/pipeline.hpp"
#include "vdr/query.hpp"
#include "vdr/refine.hpp"
#include "vdr/synth.hpp"

namespace fs = std::filesystem;
using namespace vdr;

namespace {

struct GridOpts {
  int M = 64;
  int T = 32;
  std::optional<double> lat_min, lat_max, lon_min, lon_max, t_min, t_max;

  void add(CLI::App* app) {
    app->add_option("--M", M, "Spatial cells per axis");
    app->add_option("--T", T, "Time slices");
    app->add_option("--lat-min", lat_min);
    app->add_option("--lat-max", lat_max);
    app->add_option("--lon-min", lon_min);
    app->add_option("--lon-max", lon_max);
    app->add_option("--t-min", t_min, "Seconds since epoch");
    app->add_option("--t-max", t_max, "Seconds since epoch");
  }

  /// Bounds not given fall back to the default synthetic domain.
  GridSpec spec() const {
    GridSpec g = default_synthetic_grid(M, T);
    if (lat_min) g.lat.min = *lat_min;
    if (lat_max) g.lat.max = *lat_max;
    if (lon_min) g.lon.min = *lon_min;
    if (lon_max) g.lon.max = *lon_max;
    if (t_min) g.time.min = *t_min;
    if (t_max) g.time.max = *t_max;
    g.validate();
    return g;
  }
};

struct TrainOpts {
  TrainConfig cfg;
  std::string factors = "1,2,4";

  void add(CLI::App* app) {
    app->add_option("--epochs", cfg.epochs);
    app->add_option("--alpha", cfg.alpha, "Weight of the codebook loss");
    app->add_option("--beta-commit", cfg.beta_commit);
    app->add_option("--batch-size", cfg.batch_size);
    app->add_option("--learning-rate", cfg.learning_rate);
    app->add_option("--latent-dim", cfg.arch.latent_dim);
    app->add_option("--codebook-size", cfg.arch.codebook_size);
    app->add_option("--factors", factors, "Comma-separated aggregation factors");
  }
};

struct KOpts {
  std::optional<int> k;
  double lambda = kDefaultGrowthRatio;

  void add(CLI::App* app) {
    app->add_option("--k", k, "Per-user contribution bound (default: lambda * N)");
    app->add_option("--lambda", lambda, "Growth ratio for the automatic k");
  }
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad integer list '" + text + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::ParseError, "empty integer list");
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

void require(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::MissingInput, std::string(what) + " is required");
  if (!fs::exists(path)) throw Error(ErrorCode::MissingInput, std::string(what) + " not found: " + path);
}

// Metadata that collect hands to refine: everything public about the release.
struct CollectMeta {
  std::size_t N = 0;
  std::size_t n = 0;
  int k = 1;
  double epsilon = 0.2;
};

void write_meta(const fs::path& path, const CollectMeta& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << "N=" << m.N << "\nn=" << m.n << "\nk=" << m.k << "\nepsilon=" << io::format_double(m.epsilon)
      << '\n';
}

CollectMeta read_meta(const fs::path& path) {
  const auto kv = io::read_config(path);
  auto get = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::ParseError, path.string() + " lacks " + key);
    return it->second;
  };
  CollectMeta m;
  m.N = static_cast<std::size_t>(io::parse_double(get("N"), "N"));
  m.n = static_cast<std::size_t>(io::parse_double(get("n"), "n"));
  m.k = static_cast<int>(io::parse_double(get("k"), "k"));
  m.epsilon = io::parse_double(get("epsilon"), "epsilon");
  return m;
}

PrivacyLedger load_ledger_if_present(const std::string& path) {
  if (path.empty() || !fs::exists(path)) return {};
  return io::read_ledger(path);
}

/// Applies config-file values to options of `app` that no flag set.
void apply_config(CLI::App* app, const std::map<std::string, std::string>& kv) {
  for (CLI::Option* opt : app->get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) continue;
    const auto it = kv.find(opt->get_lnames().front());
    if (it == kv.end()) continue;
    if (opt->get_type_size() == 0) {
      if (it->second == "true" || it->second == "1") opt->add_result("true");
      else continue;
    } else {
      opt->add_result(it->second);
    }
    opt->run_callback();
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("VDR_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "VDR_SEED is not an unsigned integer");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private spatio-temporal histogram release"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "Flat key=value file; flags take precedence");
  app.add_option("--seed", seed_flag, "Global seed (falls back to VDR_SEED, then 0)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse a points CSV and report its size");
  std::string ingest_points, ingest_out;
  ingest->add_option("--points", ingest_points)->required();
  ingest->add_option("--out", ingest_out, "Rewrite the records in canonical CSV form");

  // collect
  auto* collect_cmd = app.add_subcommand("collect", "Bound contributions and add Laplace noise");
  GridOpts collect_grid;
  KOpts collect_k;
  std::string collect_points, collect_out, collect_meta, collect_ledger, collect_truth;
  double collect_eps = 0.2;
  bool collect_clip = false;
  collect_grid.add(collect_cmd);
  collect_k.add(collect_cmd);
  collect_cmd->add_option("--points", collect_points)->required();
  collect_cmd->add_option("--out", collect_out, "Noisy histogram")->required();
  collect_cmd->add_option("--meta", collect_meta, "Release metadata (N, n, k, epsilon)")->required();
  collect_cmd->add_option("--ledger", collect_ledger, "Ledger file, appended to");
  collect_cmd->add_option("--truth-out", collect_truth, "Also write the exact histogram (not private)");
  collect_cmd->add_option("--epsilon", collect_eps);
  collect_cmd->add_flag("--clip", collect_clip, "Assign out-of-range records to boundary cells");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the denoiser on a noisy histogram");
  TrainOpts train_opts;
  std::string train_noisy, train_out, train_log;
  train_opts.add(train_cmd);
  train_cmd->add_option("--noisy", train_noisy)->required();
  train_cmd->add_option("--out", train_out, "Model checkpoint")->required();
  train_cmd->add_option("--loss-log", train_log, "Per-epoch loss table");

  // denoise
  auto* denoise_cmd = app.add_subcommand("denoise", "Apply a trained denoiser");
  std::string denoise_model, denoise_noisy, denoise_out;
  denoise_cmd->add_option("--model", denoise_model)->required();
  denoise_cmd->add_option("--noisy", denoise_noisy)->required();
  denoise_cmd->add_option("--out", denoise_out)->required();

  // refine
  auto* refine_cmd = app.add_subcommand("refine", "Scale a histogram by the MSE-optimal gamma");
  std::string refine_in, refine_meta, refine_out;
  double refine_C = kDefaultRefinementFactor;
  std::optional<double> refine_gamma;
  bool refine_clamp = false;
  refine_cmd->add_option("--in", refine_in)->required();
  refine_cmd->add_option("--meta", refine_meta, "Metadata written by collect");
  refine_cmd->add_option("--out", refine_out)->required();
  refine_cmd->add_option("--C", refine_C, "Refinement factor");
  refine_cmd->add_option("--gamma", refine_gamma, "Use this factor instead of the optimal one");
  refine_cmd->add_flag("--clamp-nonneg", refine_clamp);

  // query
  auto* query_cmd = app.add_subcommand("query", "Answer a workload on a histogram");
  std::string query_hist, query_workload, query_out;
  query_cmd->add_option("--hist", query_hist)->required();
  query_cmd->add_option("--workload", query_workload)->required();
  query_cmd->add_option("--out", query_out, "Answer table (default stdout)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a released histogram against the truth");
  std::string eval_truth, eval_points, eval_released, eval_workload, eval_out;
  std::optional<double> eval_psi;
  bool eval_released_regret = false;
  eval_cmd->add_option("--truth", eval_truth, "Exact histogram")->required();
  eval_cmd->add_option("--points", eval_points, "Score range counts against exact point counts");
  eval_cmd->add_option("--released", eval_released)->required();
  eval_cmd->add_option("--workload", eval_workload)->required();
  eval_cmd->add_option("--out", eval_out, "Metric table (default stdout)");
  eval_cmd->add_option("--psi", eval_psi, "Smoothing for relative error");
  eval_cmd->add_flag("--released-regret", eval_released_regret,
                     "Regret from the released count instead of the true count");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Synthetic points and workloads");
  synth_cmd->require_subcommand(1);
  auto* synth_points = synth_cmd->add_subcommand("points", "Gaussian-mixture points CSV");
  GridOpts synth_grid;
  GmmSpec gmm;
  std::string synth_out;
  std::optional<std::size_t> pl_users;
  PowerLawSpec pl;
  synth_grid.add(synth_points);
  synth_points->add_option("--out", synth_out)->required();
  synth_points->add_option("--components", gmm.components);
  synth_points->add_option("--sigma", gmm.sigma, "Std per axis in cell units");
  synth_points->add_option("--lattice", gmm.lattice);
  synth_points->add_option("--points", gmm.total_points);
  synth_points->add_option("--users", pl_users, "Assign points to power-law users");
  synth_points->add_option("--exponent", pl.exponent);
  synth_points->add_option("--k-max", pl.k_max);

  auto* synth_workload = synth_cmd->add_subcommand("workload", "Query workload from a points CSV");
  GridOpts wl_grid;
  std::string wl_points, wl_out;
  std::size_t wl_rcq = 5000, wl_hot = 0, wl_fc = 0;
  double wl_nu = 10.0, wl_sr = 5000.0, wl_side_min = 30.0, wl_side_max = 120.0;
  int wl_h = 8;
  wl_grid.add(synth_workload);
  synth_workload->add_option("--points", wl_points)->required();
  synth_workload->add_option("--out", wl_out)->required();
  synth_workload->add_option("--rcq", wl_rcq, "Range count queries");
  synth_workload->add_option("--side-min", wl_side_min, "Meters");
  synth_workload->add_option("--side-max", wl_side_max, "Meters");
  synth_workload->add_option("--hot", wl_hot, "Hotspot queries");
  synth_workload->add_option("--nu", wl_nu);
  synth_workload->add_option("--sr", wl_sr, "Hotspot search square side in meters");
  synth_workload->add_option("--fc", wl_fc, "Forecast queries");
  synth_workload->add_option("--horizon", wl_h);

  // stream
  auto* stream_cmd = app.add_subcommand("stream", "Periodic releases with model reuse");
  GridOpts stream_grid;
  KOpts stream_k;
  TrainOpts stream_train;
  std::string stream_points, stream_budgets, stream_dir, stream_period = "inf";
  double stream_C = kDefaultRefinementFactor;
  bool stream_clamp = false;
  stream_grid.add(stream_cmd);
  stream_k.add(stream_cmd);
  stream_train.add(stream_cmd);
  stream_cmd->add_option("--points", stream_points, "Comma-separated CSVs, one per release")->required();
  stream_cmd->add_option("--budgets", stream_budgets, "Comma-separated epsilons")->required();
  stream_cmd->add_option("--retrain-period", stream_period, "Releases between retraining, or inf");
  stream_cmd->add_option("--out-dir", stream_dir)->required();
  stream_cmd->add_option("--C", stream_C);
  stream_cmd->add_flag("--clamp-nonneg", stream_clamp);

  // run
  auto* run_cmd = app.add_subcommand("run", "collect, train, denoise and refine in one go");
  GridOpts run_grid;
  KOpts run_k;
  TrainOpts run_train;
  std::string run_points, run_out, run_ledger, run_work;
  double run_eps = 0.2, run_C = kDefaultRefinementFactor;
  bool run_clamp = false, run_clip = false;
  run_grid.add(run_cmd);
  run_k.add(run_cmd);
  run_train.add(run_cmd);
  run_cmd->add_option("--points", run_points)->required();
  run_cmd->add_option("--out", run_out, "Released histogram")->required();
  run_cmd->add_option("--ledger", run_ledger, "Ledger file, appended to");
  run_cmd->add_option("--work-dir", run_work, "Also write noisy.vdrh, model.vdrm, denoised.vdrh, meta.txt");
  run_cmd->add_option("--epsilon", run_eps);
  run_cmd->add_option("--C", run_C);
  run_cmd->add_flag("--clamp-nonneg", run_clamp);
  run_cmd->add_flag("--clip", run_clip);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!config_path.empty()) {
      require(config_path, "--config");
      const auto kv = io::read_config(config_path);
      apply_config(&app, kv);
      for (CLI::App* sub : app.get_subcommands()) {
        apply_config(sub, kv);
        for (CLI::App* nested : sub->get_subcommands()) apply_config(nested, kv);
      }
    }
    const std::uint64_t seed = resolve_seed(seed_flag);

    if (*ingest) {
      require(ingest_points, "--points");
      const Dataset d = io::read_points_csv(ingest_points);
      std::cout << "N=" << d.size() << " users=" << d.user_count() << " k_max=" << d.k_max() << '\n';
      if (!ingest_out.empty()) io::write_points_csv(ingest_out, d);
    } else if (*collect_cmd) {
      require(collect_points, "--points");
      const Dataset d = io::read_points_csv(collect_points);
      const GridSpec grid = collect_grid.spec();
      PipelineConfig pc;
      pc.k = collect_k.k;
      pc.lambda = collect_k.lambda;
      CollectMeta meta;
      meta.N = d.size();
      meta.k = pc.resolve_k(d.size());
      meta.epsilon = collect_eps;
      PrivacyLedger ledger = load_ledger_if_present(collect_ledger);
      const BoundaryMode mode = collect_clip ? BoundaryMode::Clip : BoundaryMode::Strict;
      const CollectResult r = collect(d, grid, CollectParams{meta.k, collect_eps, seed}, ledger, mode);
      meta.n = r.n;
      io::write_histogram(collect_out, r.noisy);
      write_meta(collect_meta, meta);
      if (!collect_ledger.empty()) io::write_ledger(collect_ledger, ledger);
      if (!collect_truth.empty()) io::write_histogram(collect_truth, discretize(d, grid, mode));
    } else if (*train_cmd) {
      require(train_noisy, "--noisy");
      const Histogram3D noisy = io::read_histogram(train_noisy);
      TrainConfig cfg = train_opts.cfg;
      cfg.seed = seed;
      TrainReport report;
      const ModelParams model =
          train(prepare_training_set(noisy, parse_int_list(train_opts.factors)), cfg, &report);
      io::write_model(train_out, model);
      if (!train_log.empty()) {
        std::vector<io::MetricRow> rows;
        rows.push_back({"initial", "loss", report.initial_loss});
        for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
          rows.push_back({"epoch" + std::to_string(e + 1), "loss", report.epoch_loss[e]});
        }
        rows.push_back({"final", "loss", report.final_loss});
        io::write_metrics(train_log, rows);
      }
    } else if (*denoise_cmd) {
      require(denoise_model, "--model");
      require(denoise_noisy, "--noisy");
      io::write_histogram(denoise_out,
                          denoise(io::read_model(denoise_model), io::read_histogram(denoise_noisy)));
    } else if (*refine_cmd) {
      require(refine_in, "--in");
      const Histogram3D h = io::read_histogram(refine_in);
      double gamma = 1.0;
      if (refine_gamma) {
        gamma = *refine_gamma;
      } else {
        require(refine_meta, "--meta");
        const CollectMeta m = read_meta(refine_meta);
        gamma = release_gamma(h, m.N, m.n, m.k, m.epsilon, refine_C);
      }
      std::cerr << "gamma=" << io::format_double(gamma) << '\n';
      io::write_histogram(refine_out, finalize_release(h, gamma, refine_clamp));
    } else if (*query_cmd) {
      require(query_hist, "--hist");
      require(query_workload, "--workload");
      const Histogram3D h = io::read_histogram(query_hist);
      std::vector<io::MetricRow> rows;
      const auto wl = io::read_workload(query_workload);
      for (std::size_t i = 0; i < wl.size(); ++i) {
        const std::string id = std::to_string(i);
        if (const auto* q = std::get_if<RangeQuery>(&wl[i])) {
          rows.push_back({id, "count", range_count(h, *q)});
        } else if (const auto* hq = std::get_if<HotspotQuery>(&wl[i])) {
          const HotspotAnswer a = hotspot(h, *hq);
          rows.push_back({id, "cell", static_cast<double>(a.cell)});
          rows.push_back({id, "distance_m", a.distance_m});
          rows.push_back({id, "count", a.count});
          rows.push_back({id, "met_threshold", a.met_threshold ? 1.0 : 0.0});
        } else {
          const auto& fq = std::get<ForecastQuery>(wl[i]);
          const auto series = cell_series(h, fq.row, fq.col);
          const auto f = theta_forecast(series, fq.horizon);
          for (std::size_t j = 0; j < f.size(); ++j) {
            rows.push_back({id, "forecast_" + std::to_string(j + 1), f[j]});
          }
        }
      }
      if (query_out.empty()) io::write_metrics(std::cout, rows);
      else io::write_metrics(query_out, rows);
    } else if (*eval_cmd) {
      require(eval_truth, "--truth");
      require(eval_released, "--released");
      require(eval_workload, "--workload");
      const Histogram3D truth = io::read_histogram(eval_truth);
      const Histogram3D released = io::read_histogram(eval_released);
      if (!(truth.grid() == released.grid())) {
        throw Error(ErrorCode::ShapeMismatch, "truth and release use different grids");
      }
      std::optional<Dataset> points;
      if (!eval_points.empty()) {
        require(eval_points, "--points");
        points = io::read_points_csv(eval_points);
      }
      const double psi = eval_psi ? *eval_psi : psi_default(truth);
      const RegretMode mode = eval_released_regret ? RegretMode::ReleasedCount : RegretMode::TrueCount;
      std::vector<io::MetricRow> rows;
      std::vector<double> re, dist_err, regret, sm;
      const auto wl = io::read_workload(eval_workload);
      for (std::size_t i = 0; i < wl.size(); ++i) {
        const std::string id = std::to_string(i);
        if (const auto* q = std::get_if<RangeQuery>(&wl[i])) {
          const double u = points ? count_points(*points, *q) : range_count(truth, *q);
          re.push_back(relative_error(range_count(released, *q), u, psi));
          rows.push_back({id, "re", re.back()});
        } else if (const auto* hq = std::get_if<HotspotQuery>(&wl[i])) {
          const HotspotMetrics m = hotspot_metrics(truth, released, std::span(hq, 1), mode);
          dist_err.push_back(m.mae_m);
          regret.push_back(m.mean_regret);
          rows.push_back({id, "abs_distance_error_m", m.mae_m});
          rows.push_back({id, "regret", m.mean_regret});
        } else {
          sm.push_back(forecast_smape(truth, released, std::get<ForecastQuery>(wl[i])));
          rows.push_back({id, "smape", sm.back()});
        }
      }
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      rows.push_back({"all", "psi", psi});
      if (!re.empty()) rows.push_back({"all", "median_re", median(re)});
      if (!dist_err.empty()) {
        rows.push_back({"all", "mae_m", mean(dist_err)});
        rows.push_back({"all", "mean_regret", mean(regret)});
      }
      if (!sm.empty()) rows.push_back({"all", "mean_smape", mean(sm)});
      if (eval_out.empty()) io::write_metrics(std::cout, rows);
      else io::write_metrics(eval_out, rows);
    } else if (*synth_cmd) {
      if (*synth_points) {
        gmm.seed = seed;
        GmmSample s = gmm_generate(gmm, synth_grid.spec());
        Dataset d = std::move(s.dataset);
        if (pl_users) {
          pl.n_users = *pl_users;
          pl.seed = seed;
          d = powerlaw_assign(d, pl);
        }
        io::write_points_csv(synth_out, d);
      } else {
        require(wl_points, "--points");
        const Dataset d = io::read_points_csv(wl_points);
        const GridSpec grid = wl_grid.spec();
        std::vector<io::WorkloadQuery> out;
        RcqWorkloadSpec rs{wl_rcq, wl_side_min, wl_side_max, seed};
        for (const RangeQuery& q : gen_rcq_workload(d, grid, rs)) out.emplace_back(q);
        if (wl_hot > 0) {
          for (const HotspotQuery& q : gen_hotspot_workload(d, grid, wl_hot, wl_nu, wl_sr, seed)) {
            out.emplace_back(q);
          }
        }
        if (wl_fc > 0) {
          const Histogram3D truth = discretize(d, grid, BoundaryMode::Clip);
          for (const ForecastQuery& q : gen_forecast_workload(d, truth, wl_fc, wl_h, seed)) {
            out.emplace_back(q);
          }
        }
        io::write_workload(wl_out, out);
      }
    } else if (*stream_cmd) {
      std::vector<Dataset> datasets;
      for (const std::string& p : split_list(stream_points)) {
        require(p, "--points");
        datasets.push_back(io::read_points_csv(p));
      }
      std::vector<double> budgets;
      for (const std::string& b : split_list(stream_budgets)) budgets.push_back(io::parse_double(b, "budget"));
      std::optional<int> period;
      if (stream_period != "inf") period = static_cast<int>(io::parse_double(stream_period, "retrain period"));
      PipelineConfig pc;
      pc.grid = stream_grid.spec();
      pc.k = stream_k.k;
      pc.lambda = stream_k.lambda;
      pc.C = stream_C;
      pc.factors = parse_int_list(stream_train.factors);
      pc.train = stream_train.cfg;
      pc.train.seed = seed;
      pc.seed = seed;
      pc.clamp_nonneg = stream_clamp;
      const StreamResult r = release_stream(datasets, budgets, period, pc);
      fs::create_directories(stream_dir);
      for (std::size_t i = 0; i < r.releases.size(); ++i) {
        io::write_histogram(fs::path(stream_dir) / ("release_" + std::to_string(i) + ".vdrh"),
                            r.releases[i].released);
      }
      io::write_ledger(fs::path(stream_dir) / "ledger.csv", r.ledger);
      std::cout << "releases=" << r.releases.size() << " epsilon_total=" << io::format_double(r.ledger.total())
                << '\n';
    } else if (*run_cmd) {
      require(run_points, "--points");
      const Dataset d = io::read_points_csv(run_points);
      PipelineConfig pc;
      pc.grid = run_grid.spec();
      pc.epsilon = run_eps;
      pc.k = run_k.k;
      pc.lambda = run_k.lambda;
      pc.C = run_C;
      pc.factors = parse_int_list(run_train.factors);
      pc.train = run_train.cfg;
      pc.train.seed = seed;
      pc.seed = seed;
      pc.clamp_nonneg = run_clamp;
      pc.boundary = run_clip ? BoundaryMode::Clip : BoundaryMode::Strict;
      PrivacyLedger ledger = load_ledger_if_present(run_ledger);
      const PipelineResult r = run_pipeline(d, pc, ledger);
      io::write_histogram(run_out, r.released);
      if (!run_ledger.empty()) io::write_ledger(run_ledger, ledger);
      if (!run_work.empty()) {
        fs::create_directories(run_work);
        const fs::path w(run_work);
        io::write_histogram(w / "noisy.vdrh", r.collected.noisy);
        io::write_model(w / "model.vdrm", r.model);
        io::write_histogram(w / "denoised.vdrh", r.denoised);
        write_meta(w / "meta.txt", CollectMeta{r.N, r.collected.n, r.k, pc.epsilon});
      }
      std::cerr << "gamma=" << io::format_double(r.gamma) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "vdr: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "vdr: error: Internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
