#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "windcast/model.hpp"

namespace windcast {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t max_steps = 0;  // 0 = no step cap
  std::size_t patience = 10;
  double lambda_eps = 1e-3;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

/// Composite training loss: mean squared error plus the margin regularizer.
double loss_value(const Tensor& y_hat, const Tensor& y, double eps_margin, double lambda_eps);

struct BatchGradients {
  std::vector<Tensor> grads;  // aligned with ModelParams::enumerate()
  double loss = 0.0;          // batch-mean composite loss
  double mse = 0.0;           // batch-mean MSE component
};

/// Mean of per-sample gradients over the batch. Per-sample passes may run on
/// several threads; the reduction is a fixed-order serial sum, so results are
/// identical for any thread count.
BatchGradients batch_gradients(const ModelLayout& layout, const ModelParams& params,
                               const StationNetwork& network,
                               const std::vector<const WindowSample*>& batch, double lambda_eps,
                               std::size_t threads);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

AdamState init_adam_state(const ModelParams& params);

/// One bias-corrected Adam update in place.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg);

struct PhysicsSnapshot {
  double alpha_dir = 0.0;
  double alpha_dist = 0.0;
  double beta_speed = 0.0;
  double sigma_d = 0.0;
  double eps_margin = 0.0;
  double gamma_mean = 0.0;
};

PhysicsSnapshot snapshot_physics(const ModelParams& params);

struct EpochStats {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  PhysicsSnapshot physics;
};

struct TrainResult {
  ModelParams best_params;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  std::vector<EpochStats> history;
  std::size_t steps = 0;
  std::size_t val_evaluations = 0;
  bool diverged = false;
};

/// Epoch loop with a seeded shuffle, best-validation checkpointing and
/// patience-based early stopping. A NaN batch loss aborts with the last good
/// checkpoint.
TrainResult train(const ModelLayout& layout, ModelParams initial, const StationNetwork& network,
                  const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows, const TrainConfig& cfg);

/// Mean normalized MSE of the model over a window set.
double dataset_mse(const ModelLayout& layout, const ModelParams& params,
                   const StationNetwork& network, const std::vector<WindowSample>& windows,
                   std::size_t threads);

struct MetricRow {
  std::size_t horizon = 0;
  double mae = 0.0;
  double mse = 0.0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  MetricRow avg;  // mean across the horizon rows, labeled horizon 0
  std::size_t window_count = 0;
};

/// Metric harness over already de-normalized predictions.
MetricsReport compute_metrics(const std::vector<Tensor>& y_hat, const std::vector<Tensor>& y,
                              const std::vector<std::size_t>& horizons);

/// Runs the model over `windows`, de-normalizes with the target statistics
/// and reports MAE/MSE per requested horizon plus the average row.
MetricsReport evaluate(const ModelLayout& layout, const ModelParams& params,
                       const StationNetwork& network, const std::vector<WindowSample>& windows,
                       double target_mean, double target_std,
                       const std::vector<std::size_t>& horizons, std::size_t threads);

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_index = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;
  bool pass = true;
};

/// Central finite differences on up to `max_coords` coordinates per tensor
/// against the supplied reverse-mode gradients. Relative error uses a 1e-6
/// denominator floor so structurally-zero gradients compare cleanly, and a
/// coordinate that misses the tolerance at `step` is confirmed at 10x the
/// step, where cancellation noise drops an order of magnitude but a real
/// gradient defect remains.
GradCheckReport compare_with_finite_differences(
    const ModelLayout& layout, const ModelParams& params, const StationNetwork& network,
    const std::vector<const WindowSample*>& batch, double lambda_eps,
    const std::vector<Tensor>& analytic, std::uint64_t seed, std::size_t max_coords = 20,
    double step = 1e-5, double tolerance = 1e-4);

/// Full certification: reverse-mode gradients vs central differences.
GradCheckReport gradcheck(const ModelLayout& layout, const ModelParams& params,
                          const StationNetwork& network,
                          const std::vector<const WindowSample*>& batch, double lambda_eps,
                          std::uint64_t seed, std::size_t max_coords = 20, double step = 1e-5,
                          double tolerance = 1e-4);

std::string format_gradcheck_report(const GradCheckReport& report);

// --- persistence ------------------------------------------------------------

struct CheckpointMeta {
  std::string code_version;
  std::uint64_t seed = 0;
  ModelConfig model;
  double lambda_eps = 1e-3;
  std::vector<FeatureSpec> features;
  std::vector<std::string> station_ids;
};

struct Checkpoint {
  CheckpointMeta meta;
  ModelParams params;
  std::vector<double> norm_means;
  std::vector<double> norm_stds;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

extern const char* kCodeVersion;

}  // namespace windcast
