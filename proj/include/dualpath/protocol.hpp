// Three-stage training protocol and dual-path fine-tuning: autoencoder and
// discriminator pretraining, composite-loss base training of the indirect
// generator, and per-task fine-tuning of both paths.
#pragma once

#include "dualpath/losses.hpp"
#include "dualpath/netblocks.hpp"
#include "dualpath/signalio.hpp"
#include "dualpath/tasks.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dualpath::protocol {

enum class Stage { pretrain_hs, pretrain_ecg, pretrain_disc, base_task, finetune_direct, finetune_indirect };
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& s);

enum class Channel { hs, ecg, bp };
enum class PathKind { direct, indirect };
const char* path_name(PathKind p);
PathKind path_from_name(const std::string& s);

enum class IndirectSource { real_ecg, generated_ecg };
const char* source_name(IndirectSource s);
IndirectSource source_from_name(const std::string& s);

struct StagePlan {
    Stage stage = Stage::pretrain_hs;
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::vector<std::string> frozen_blocks;       // parameter-name prefixes
    losses::LossWeights weights{1.0, 0.0};        // base_task only
    std::uint64_t seed = 1;
    double val_fraction = 0.1;                    // every k-th window held out
    int patience = 10;                            // early stop; <= 0 disables
    double grad_clip = 10.0;                      // global norm; <= 0 disables
    // classification-stage augmentation: windows are phase-free and identity
    // is shift-invariant, so random circular shifts plus input noise stop the
    // trunk from memorizing overlapped training windows
    int augment_shift = 0;                        // max circular shift in samples
    double augment_noise_std = 0.0;
};

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double l_d = 0.0;   // base_task only
    double l_p = 0.0;   // base_task only
    double val_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> curve;
    std::map<std::string, std::uint64_t> hashes_before;  // per frozen prefix
    std::map<std::string, std::uint64_t> hashes_after;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------
class Adam {
public:
    Adam(nn::NamedParams params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void zero_grad();
    void clip_global_norm(double max_norm);
    void step();  // skips non-trainable parameters

private:
    nn::NamedParams params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Batching helpers
// ---------------------------------------------------------------------------
using Windows = std::vector<signalio::PairedSample>;

Tensor batch_signal(const Windows& ws, const std::vector<std::size_t>& idx, Channel ch);
std::vector<int> batch_labels(const Windows& ws, const std::vector<std::size_t>& idx, tasks::TaskKind t);
std::vector<const std::uint8_t*> batch_masks(const Windows& ws, const std::vector<std::size_t>& idx);
std::vector<float> batch_bp_std(const Windows& ws, const std::vector<std::size_t>& idx);
// deterministic validation split: every k-th window (k from val_fraction)
void split_train_val(std::size_t count, double val_fraction, std::vector<std::size_t>& train,
                     std::vector<std::size_t>& val);

// ---------------------------------------------------------------------------
// Task models
// ---------------------------------------------------------------------------

// direct path: pretrained encoder + bottleneck, task head on phi
class DirectModel {
public:
    DirectModel(const nn::BlockGraph& g, tasks::TaskKind task);
    void init(Rng& rng);
    Tensor forward(const Tensor& hs);
    void backward(const Tensor& dpred);
    void collect(nn::NamedParams& np);  // prefixes: enc, fuse, head
    tasks::TaskKind task() const { return task_; }

private:
    nn::BlockGraph graph_;
    tasks::TaskKind task_;
    nn::Encoder enc_;
    nn::Fusion fuse_;
    std::optional<nn::ClassifierHead> cls_;
    std::optional<nn::DenseDirectHead> dense_;
    Tensor phi_;
};

// indirect path: pretrained discriminator trunk as encoder, mirror head
class IndirectModel {
public:
    IndirectModel(const nn::BlockGraph& g, tasks::TaskKind task);
    void init(Rng& rng);
    Tensor forward(const Tensor& ecg);
    void backward(const Tensor& dpred);
    void collect(nn::NamedParams& np);  // prefixes: trunk, head
    tasks::TaskKind task() const { return task_; }
    void set_trunk_trainable(bool on) { trunk_trainable_ = on; }
    nn::Net1D& trunk() { return trunk_; }

private:
    nn::BlockGraph graph_;
    tasks::TaskKind task_;
    nn::Net1D trunk_;
    std::optional<nn::ClassifierHead> cls_;
    std::optional<nn::DeNet1D> dehead_;
    bool trunk_trainable_ = false;
    Tensor feat_;
    std::vector<Tensor> taps_;
};

// ---------------------------------------------------------------------------
// Stage runners (in-memory; persistence is the CLI layer's concern)
// ---------------------------------------------------------------------------

// Eq-style autoencoder pretraining on one modality (hs or ecg).
TrainResult train_autoencoder(nn::Autoencoder& model, const Windows& train, Channel ch, const StagePlan& plan);

// Subject-ID pretraining of the feature discriminator; marks it pretrained
// and freezes the trunk. Aborts (DivergenceError) if held-out accuracy ends
// at or below chance.
TrainResult train_discriminator(nn::Discriminator& disc, const Windows& train, const StagePlan& plan);

// Base-task stage: optimizes the hs->ecg generator under
// lambda_d * L_d + lambda_p * L_p with a frozen, pretrained discriminator.
// L_p matches last-layer features by default; perceptual_multilayer sums the
// match over every discriminator stage.
TrainResult train_base_generator(nn::Autoencoder& gen, nn::Discriminator& disc, const Windows& train,
                                 const StagePlan& plan, bool perceptual_multilayer = false);

TrainResult train_direct(DirectModel& model, const Windows& train, const StagePlan& plan);
// source selects the fine-tuning input; evaluation always routes
// radar -> generator -> trunk -> head
TrainResult train_indirect(IndirectModel& model, const Windows& train, const StagePlan& plan,
                           IndirectSource source, nn::Autoencoder* generator);

// Pretraining bundle reused by the CLI and the sweep machinery. Model
// initialization derives from each plan's seed, so the set is reproducible.
struct PretrainedSet {
    nn::Checkpoint hs, ecg, disc;
    TrainResult hs_result, ecg_result, disc_result;
};

PretrainedSet pretrain_all(const nn::BlockGraph& g, const Windows& train, const StagePlan& hs_plan,
                           const StagePlan& ecg_plan, const StagePlan& disc_plan);

// generator assembled from pretrained parts: E_hs + BN from the heart-sound
// autoencoder, D_ecg from the ECG autoencoder
nn::Autoencoder make_generator(const nn::BlockGraph& g, const nn::Checkpoint& ck_hs,
                               const nn::Checkpoint& ck_ecg);
nn::Discriminator make_discriminator(const nn::BlockGraph& g, const nn::Checkpoint& ck_disc);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------
struct TaskMetric {
    tasks::TaskKind task;
    std::string metric;  // "acc" | "mean_iou" | "mae_mmhg"
    double value = 0.0;
    tasks::IoUResult iou;  // populated for segmentation
};

TaskMetric eval_direct(DirectModel& model, const Windows& test);
TaskMetric eval_indirect(IndirectModel& model, const Windows& test, nn::Autoencoder* generator,
                         bool from_generated_ecg);

// mean Pearson correlation between reconstruction and target
double eval_recon_correlation(nn::Autoencoder& model, const Windows& test, Channel ch);
double eval_recon_loss(nn::Autoencoder& model, const Windows& test, Channel ch);
// per-timestep mean squared error of the generator on a window set
double eval_generation_mse(nn::Autoencoder& gen, const Windows& test);
double eval_disc_accuracy(nn::Discriminator& disc, const Windows& test);
// mean-pooled embedding vectors of ECG windows (rows) for FID / kNN metrics
std::vector<std::vector<double>> pooled_embeddings(nn::Discriminator& disc, const Windows& ws,
                                                   const Tensor* ecg_override = nullptr);

// ---------------------------------------------------------------------------
// Run manifest (append-only record of executed stages)
// ---------------------------------------------------------------------------
struct StageRecord {
    std::string stage;
    std::string checkpoint;  // file name
    losses::LossWeights weights{1.0, 0.0};
    std::vector<EpochLog> curve;
    std::map<std::string, std::string> hashes_before, hashes_after;
    std::string task;    // finetune stages
    std::string path;    // finetune stages
    std::string source;  // finetune_indirect
};

struct RunManifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<StageRecord> stages;

    bool has_stage(const std::string& name) const;
    const StageRecord* find_stage(const std::string& name) const;
    void append(StageRecord rec) { stages.push_back(std::move(rec)); }
    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);
};

}  // namespace dualpath::protocol
