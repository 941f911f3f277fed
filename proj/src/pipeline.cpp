#include "vdr/pipeline.hpp"

namespace vdr {

int PipelineConfig::resolve_k(std::size_t N) const {
  if (k) {
    if (*k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    return *k;
  }
  return static_cast<int>(heuristic_k(static_cast<long long>(std::max<std::size_t>(N, 1)), lambda));
}

double release_gamma(const Histogram3D& denoised, std::size_t N, std::size_t n, int k,
                     double epsilon, double C) {
  const RefineParams p = RefineParams::for_histogram(denoised, static_cast<double>(N),
                                                     static_cast<double>(n), k, epsilon, C);
  return optimal_gamma(p);
}

Histogram3D finalize_release(const Histogram3D& denoised, double gamma, bool clamp_nonneg) {
  Histogram3D out = refine(denoised, gamma);
  return clamp_nonneg ? clamp_nonnegative(out) : out;
}

namespace {

PipelineResult collect_stage(const Dataset& dataset, const PipelineConfig& config,
                             PrivacyLedger& ledger) {
  PipelineResult r;
  r.N = dataset.size();
  r.k = config.resolve_k(r.N);
  CollectParams cp{r.k, config.epsilon, config.seed};
  r.collected = collect(dataset, config.grid, cp, ledger, config.boundary);
  return r;
}

void release_stage(PipelineResult& r, const PipelineConfig& config) {
  r.denoised = denoise(r.model, r.collected.noisy);
  r.gamma = release_gamma(r.denoised, r.N, r.collected.n, r.k, config.epsilon, config.C);
  r.released = finalize_release(r.denoised, r.gamma, config.clamp_nonneg);
}

}  // namespace

PipelineResult run_pipeline(const Dataset& dataset, const PipelineConfig& config,
                            PrivacyLedger& ledger) {
  PipelineResult r = collect_stage(dataset, config, ledger);
  const TrainingSet set = prepare_training_set(r.collected.noisy, config.factors);
  r.model = train(set, config.train, &r.report);
  release_stage(r, config);
  return r;
}

PipelineResult run_pipeline_with_model(const Dataset& dataset, const PipelineConfig& config,
                                       const ModelParams& model, PrivacyLedger& ledger) {
  PipelineResult r = collect_stage(dataset, config, ledger);
  r.model = model;
  release_stage(r, config);
  return r;
}

}  // namespace vdr
