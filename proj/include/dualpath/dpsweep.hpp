// Loss-weight sweep over the indirect path: grid resolution, perceptual
// quality metrics (FID, manifold precision/recall), three-phase detection,
// channel-count resolution study, and artifact emission (CSV, JSON, SVG).
#pragma once

#include "dualpath/losses.hpp"
#include "dualpath/netblocks.hpp"
#include "dualpath/protocol.hpp"
#include "dualpath/tasks.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dualpath::sweep {

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------
struct SweepGrid {
    // leg 1: lambda_d from 10,000 log-spaced down to 1 with lambda_p = 1
    double leg1_from = 10000.0, leg1_to = 1.0;
    // leg 2: lambda_p from 1 log-spaced up to 10,000,000 with lambda_d = 1
    double leg2_from = 1.0, leg2_to = 1.0e7;
    int points_per_decade = 2;
    bool include_representative = true;

    // the nine labeled operating points A..I, always included verbatim
    static const std::vector<losses::LossWeights>& representative_points();

    // concatenated legs plus representative points, deduplicated and sorted
    // by the perceptual-weight ratio lambda_p / lambda_d
    std::vector<losses::LossWeights> resolve() const;
};

enum class Phase { positive_sum, coopetitive, negative_sum, unassigned };
const char* phase_name(Phase p);

struct SweepPoint {
    losses::LossWeights weights{1.0, 0.0};
    double mse = 0.0;        // per-timestep generation MSE on the test split
    double fid = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::map<std::string, double> downstream;  // task name -> metric value
    Phase phase = Phase::unassigned;
    bool converged = false;
    bool fid_eps_added = false;

    double ratio() const { return weights.lambda_p / weights.lambda_d; }
};

// ---------------------------------------------------------------------------
// Perceptual metrics
// ---------------------------------------------------------------------------
// Frechet distance between Gaussian fits of two embedding clouds.
// Near-singular covariances get eps*I added (recorded via eps_added).
double fid_from_embeddings(const std::vector<std::vector<double>>& real,
                           const std::vector<std::vector<double>>& fake, bool* eps_added = nullptr);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// manifold-based generative precision/recall with k-NN radii
PrecisionRecall precision_recall(const std::vector<std::vector<double>>& real,
                                 const std::vector<std::vector<double>>& fake, int k);

// window-level wrappers: embeddings via the discriminator, mean-pooled over time
double fid_windows(nn::Discriminator& disc, const protocol::Windows& real_ws, const Tensor& fake_ecg,
                   bool* eps_added = nullptr);

// ---------------------------------------------------------------------------
// Phase detection
// ---------------------------------------------------------------------------
struct PhaseResult {
    std::vector<std::size_t> order;  // indices of converged points, ratio-sorted
    std::vector<Phase> labels;       // parallel to order
    int turning1 = -1;               // first index leaving positive_sum (into order)
    int turning2 = -1;               // first index entering negative_sum
    bool partial = false;            // fewer than 3 regimes detected
};

// smooths mse/fid with a centered moving average, labels sign regimes of the
// finite differences, absorbs isolated single-point label flips, and writes
// phases back into the points
PhaseResult detect_phases(std::vector<SweepPoint>& points, int smooth_window = 3);

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------
struct SweepSettings {
    protocol::StagePlan base_plan;           // per-point train_base plan
    int knn_k = 3;
    int smooth_window = 3;
    bool perceptual_multilayer = false;
    std::vector<tasks::TaskKind> downstream_tasks;
    protocol::StagePlan downstream_plan;     // indirect head fine-tuning plan
    int workers = 1;                         // independent points in parallel
};

// Each grid point retrains the generator from the same pretrained
// checkpoints under its LossWeights, then evaluates on the test split.
// Non-converged points carry NaN metrics and converged = false.
std::vector<SweepPoint> run_sweep(const std::vector<losses::LossWeights>& grid_points,
                                  const nn::BlockGraph& graph, const nn::Checkpoint& ck_hs,
                                  const nn::Checkpoint& ck_ecg, const nn::Checkpoint& ck_disc,
                                  const protocol::Windows& train, const protocol::Windows& test,
                                  const SweepSettings& settings);

// ---------------------------------------------------------------------------
// Resolution study
// ---------------------------------------------------------------------------
struct ScaleSummary {
    int scale_den = 1;
    double min_mse = 0.0;
    double min_fid = 0.0;
    std::size_t generator_params = 0;
    PhaseResult phases;
    std::vector<SweepPoint> points;
};

struct ResolutionSettings {
    SweepSettings sweep;
    protocol::StagePlan pre_hs, pre_ecg, pre_disc;
};

std::vector<ScaleSummary> resolution_study(const std::vector<int>& scale_dens, const SweepGrid& grid,
                                           nn::BlockGraph base_graph, const protocol::Windows& train,
                                           const protocol::Windows& test, const ResolutionSettings& settings);

// ---------------------------------------------------------------------------
// Downstream optimum
// ---------------------------------------------------------------------------
struct OptimumEntry {
    std::string task;
    int point_index = -1;  // into the ratio-sorted converged order
    double value = 0.0;
    Phase phase = Phase::unassigned;
    bool near_coopetitive = false;  // in or within one grid point of coopetitive
    std::string note;
};

std::vector<OptimumEntry> locate_downstream_optimum(const std::vector<SweepPoint>& points,
                                                    const PhaseResult& phases);

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points,
                     const std::string& config_hash, std::uint64_t seed);
std::vector<SweepPoint> read_sweep_csv(const std::filesystem::path& path);
void write_phases_json(const std::filesystem::path& path, const std::vector<SweepPoint>& points,
                       const PhaseResult& phases, const std::string& config_hash, std::uint64_t seed);
// one scatter per (leg, perceptual metric): (mse, 1-metric), log-log axes
void write_leg_plots(const std::filesystem::path& dir, const std::vector<SweepPoint>& points);

// generic scatter helper (exposed for the report command)
struct ScatterSeries {
    std::string name;
    std::vector<std::pair<double, double>> pts;
    std::vector<std::string> labels;  // optional per-point annotations
};
void write_scatter_svg(const std::filesystem::path& path, const std::string& title,
                       const std::string& xlabel, const std::string& ylabel,
                       const std::vector<ScatterSeries>& series, bool log_x, bool log_y);

}  // namespace dualpath::sweep
