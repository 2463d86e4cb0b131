// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairmib/checkpoint.hpp"
#include "fairmib/config.hpp"
#include "fairmib/metrics.hpp"
#include "fairmib/model.hpp"

namespace fairmib {

// Validation-loss based stopping: stop after `patience` consecutive epochs
// without strict improvement, remembering the best epoch.
class EarlyStopper {
  public:
    explicit EarlyStopper(int patience);

    // Returns true when training should stop after this observation.
    bool observe(double val_loss);
    int best_epoch() const { return best_epoch_; }    // 1-based; 0 = none yet
    double best_loss() const { return best_loss_; }
    int epochs_seen() const { return epoch_; }

  private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    double best_loss_ = 0.0;
    int since_best_ = 0;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    LossBreakdown train;
    double val_loss = 0.0;
};

struct TrainResult {
    ParamStore best_params;
    MetricsReport test_metrics;
    std::vector<EpochRecord> curves;
    int best_epoch = 0;
    int stopped_epoch = 0;
    int input_dim = 0;  // encoder input width, recorded into checkpoints
};

// Loads the configured bundle or generates the synthetic graph, then applies
// the configured split when masks are missing.
GraphDataset prepare_dataset(const RunConfig& cfg);

// One seeded training run (any variant, including baseline_gcn): Adam on the
// total objective, early stopping on validation loss, best-epoch restore,
// test-mask evaluation. Deterministic for a fixed (config, seed).
TrainResult train_one(const RunConfig& cfg, uint64_t seed);
// Same run on an already-prepared dataset (shared across seed workers).
TrainResult train_one(const RunConfig& cfg, uint64_t seed, const GraphDataset& g);

// The two-layer graph convolution reference, trained with the task loss only.
MetricsReport baseline_gcn_train(const RunConfig& cfg, uint64_t seed);

struct SeedOutcome {
    uint64_t seed = 0;
    bool ok = false;
    std::string error;  // set when ok == false
    MetricsReport metrics;
    std::string checkpoint_path;
    std::string curves_path;
    int best_epoch = 0;
    int stopped_epoch = 0;
};

struct ExperimentRecord {
    std::string config_json;
    std::string variant;
    std::vector<SeedOutcome> runs;
    MetricsAggregate aggregate;  // over successful runs
    double wall_clock_sec = 0.0;

    std::vector<MetricsReport> successful_reports() const;
};

// Runs every configured seed (in parallel when FAIRMIB_THREADS allows),
// aggregates, and persists record.json / metrics.csv / checkpoints/ / curves/
// under out_dir. Per-seed failures are recorded; throws only when all seeds
// fail. An empty out_dir skips persistence.
ExperimentRecord run_experiment(const RunConfig& cfg, const std::string& out_dir);

// One experiment per variant with everything else fixed; writes each record
// under <out_dir>/<variant>/ plus a comparison table <out_dir>/ablation.csv
// and ablation.md.
std::vector<std::pair<Variant, ExperimentRecord>> run_ablation_grid(
    const RunConfig& base, const std::vector<Variant>& variants, const std::string& out_dir);

// Reloads a persisted record.json.
ExperimentRecord load_record(const std::string& path);

// Renders the Table-style comparison (rows = experiments, columns = metric
// mean +/- std in percentage points) for all record.json files under `dir`.
std::string render_report(const std::string& dir, bool markdown);

// Writes the per-view feature matrices of the configured dataset as CSV
// files (feature_view.csv, structural_view.csv, diffusion_view.csv).
void dump_views(const RunConfig& cfg, const std::string& out_dir);

// Evaluates a checkpoint on a dataset bundle (or the synthetic graph of the
// embedded config) and returns the test-mask report.
MetricsReport evaluate_checkpoint(const std::string& checkpoint_path,
                                  const std::string& dataset_dir);

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradcheckEntry {
    std::string param;
    double max_rel_err = 0.0;
};

struct GradcheckReport {
    bool pass = false;
    double tolerance = 1e-4;
    double max_rel_err = 0.0;
    std::string worst_param;
    int entries_checked = 0;
    std::vector<GradcheckEntry> per_param;
};

// Central finite differences (h = 1e-4) of the full training objective on a
// tiny fixed instance vs. the reverse-mode gradients, parameter by parameter.
GradcheckReport run_model_gradcheck(uint64_t seed = 12345);

// Same check for the baseline network.
GradcheckReport run_gcn_gradcheck(uint64_t seed = 12345);

}  // namespace fairmib
