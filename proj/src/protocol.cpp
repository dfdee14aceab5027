#include "dualpath/protocol.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dualpath::protocol {

using json = nlohmann::json;
using signalio::kWindowLen;
namespace ks = dualpath::kernels;

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::pretrain_hs: return "pretrain_hs";
        case Stage::pretrain_ecg: return "pretrain_ecg";
        case Stage::pretrain_disc: return "pretrain_disc";
        case Stage::base_task: return "base_task";
        case Stage::finetune_direct: return "finetune_direct";
        case Stage::finetune_indirect: return "finetune_indirect";
    }
    return "?";
}

Stage stage_from_name(const std::string& s) {
    for (Stage st : {Stage::pretrain_hs, Stage::pretrain_ecg, Stage::pretrain_disc, Stage::base_task,
                     Stage::finetune_direct, Stage::finetune_indirect})
        if (s == stage_name(st)) return st;
    throw ConfigError("unknown stage: " + s);
}

const char* path_name(PathKind p) { return p == PathKind::direct ? "direct" : "indirect"; }

PathKind path_from_name(const std::string& s) {
    if (s == "direct") return PathKind::direct;
    if (s == "indirect") return PathKind::indirect;
    throw ConfigError("unknown path: " + s);
}

const char* source_name(IndirectSource s) {
    return s == IndirectSource::real_ecg ? "real_ecg" : "generated_ecg";
}

IndirectSource source_from_name(const std::string& s) {
    if (s == "real_ecg") return IndirectSource::real_ecg;
    if (s == "generated_ecg") return IndirectSource::generated_ecg;
    throw ConfigError("unknown indirect source: " + s);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------
Adam::Adam(nn::NamedParams params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, p] : params_.items) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_.items) p->zero_grad();
}

void Adam::clip_global_norm(double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (auto& [name, p] : params_.items) {
        if (!p->trainable) continue;
        for (double g : p->g) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (auto& [name, p] : params_.items) {
        if (!p->trainable) continue;
        for (double& g : p->g) g *= scale;
    }
}

void Adam::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.items.size(); ++i) {
        nn::Param* p = params_.items[i].second;
        if (!p->trainable) continue;
        ks::adam_step(p->w, p->g, m_[i], v_[i], lr_, beta1_, beta2_, eps_, t_);
    }
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------
Tensor batch_signal(const Windows& ws, const std::vector<std::size_t>& idx, Channel ch) {
    Tensor x(static_cast<int>(idx.size()), 1, kWindowLen);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& w = ws[idx[i]];
        const std::vector<float>& src = ch == Channel::hs ? w.hs : (ch == Channel::ecg ? w.ecg : w.bp);
        double* dst = x.row(static_cast<int>(i), 0);
        for (int t = 0; t < kWindowLen; ++t) dst[t] = static_cast<double>(src[t]);
    }
    return x;
}

std::vector<int> batch_labels(const Windows& ws, const std::vector<std::size_t>& idx, tasks::TaskKind t) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(tasks::labels_of(ws[i]).class_of(t));
    return out;
}

std::vector<const std::uint8_t*> batch_masks(const Windows& ws, const std::vector<std::size_t>& idx) {
    std::vector<const std::uint8_t*> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ws[i].seg_mask.data());
    return out;
}

std::vector<float> batch_bp_std(const Windows& ws, const std::vector<std::size_t>& idx) {
    std::vector<float> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ws[i].bp_std);
    return out;
}

void split_train_val(std::size_t count, double val_fraction, std::vector<std::size_t>& train,
                     std::vector<std::size_t>& val) {
    train.clear();
    val.clear();
    if (val_fraction <= 0.0 || count < 4) {
        for (std::size_t i = 0; i < count; ++i) train.push_back(i);
        return;
    }
    const std::size_t k = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(1.0 / val_fraction)));
    for (std::size_t i = 0; i < count; ++i) {
        if (i % k == k - 1) val.push_back(i);
        else train.push_back(i);
    }
    if (val.empty()) {
        val.push_back(train.back());
        train.pop_back();
    }
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

void validate_plan(const StagePlan& plan, std::size_t n_windows) {
    if (plan.epochs < 1) throw ConfigError("stage plan: epochs must be >= 1");
    if (plan.batch_size < 1) throw ConfigError("stage plan: batch_size must be >= 1");
    if (!(plan.learning_rate > 0.0)) throw ConfigError("stage plan: learning rate must be positive");
    if (n_windows == 0) throw InputError("stage plan: no training windows");
}

// divergence rule: loss > 10x the first epoch's loss for 2 consecutive epochs
struct DivergenceWatch {
    double initial = -1.0;
    int streak = 0;
    void observe(double loss, const char* what) {
        if (!std::isfinite(loss)) throw DivergenceError(std::string(what) + ": non-finite loss");
        if (initial < 0.0) {
            initial = loss;
            return;
        }
        if (loss > 10.0 * initial && initial > 0.0) {
            if (++streak >= 2) throw DivergenceError(std::string(what) + ": loss exceeded 10x initial for 2 epochs");
        } else {
            streak = 0;
        }
    }
};

struct EarlyStop {
    double best = std::numeric_limits<double>::infinity();
    int since = 0;
    bool should_stop(double val_loss, int patience) {
        if (patience <= 0) return false;
        if (val_loss < best - 1e-12) {
            best = val_loss;
            since = 0;
            return false;
        }
        return ++since >= patience;
    }
};

void record_hashes(const nn::NamedParams& np, const std::vector<std::string>& prefixes,
                   std::map<std::string, std::uint64_t>& out) {
    for (const auto& pfx : prefixes) out[pfx] = nn::params_hash(np, pfx);
}

}  // namespace

// ---------------------------------------------------------------------------
// DirectModel
// ---------------------------------------------------------------------------
DirectModel::DirectModel(const nn::BlockGraph& g, tasks::TaskKind task)
    : graph_(g), task_(task), enc_(g), fuse_(g) {
    if (tasks::task_is_classification(task))
        cls_.emplace(g.bottleneck_channels(), tasks::task_classes(task));
    else
        dense_.emplace(g, tasks::task_out_channels(task));
}

void DirectModel::init(Rng& rng) {
    enc_.init(rng);
    fuse_.init(rng);
    if (cls_) cls_->init(rng);
    if (dense_) dense_->init(rng);
}

Tensor DirectModel::forward(const Tensor& hs) {
    auto taps = enc_.forward(hs);
    phi_ = fuse_.forward(taps);
    return cls_ ? cls_->forward(phi_) : dense_->forward(phi_);
}

void DirectModel::backward(const Tensor& dpred) {
    Tensor dphi = cls_ ? cls_->backward(dpred, true) : dense_->backward(dpred, true);
    auto dtaps = fuse_.backward(dphi);
    enc_.backward(dtaps, false);
}

void DirectModel::collect(nn::NamedParams& np) {
    enc_.collect("enc", np);
    fuse_.collect("fuse", np);
    if (cls_) cls_->collect("head", np);
    if (dense_) dense_->collect("head", np);
}

// ---------------------------------------------------------------------------
// IndirectModel
// ---------------------------------------------------------------------------
IndirectModel::IndirectModel(const nn::BlockGraph& g, tasks::TaskKind task)
    : graph_(g), task_(task), trunk_(g) {
    if (tasks::task_is_classification(task))
        cls_.emplace(trunk_.feature_channels(), tasks::task_classes(task));
    else
        dehead_.emplace(g, tasks::task_out_channels(task));
}

void IndirectModel::init(Rng& rng) {
    trunk_.init(rng);
    if (cls_) cls_->init(rng);
    if (dehead_) dehead_->init(rng);
}

Tensor IndirectModel::forward(const Tensor& ecg) {
    if (cls_) {
        feat_ = trunk_.forward(ecg);
        return cls_->forward(feat_);
    }
    // dense heads consume the trunk's multi-layer embeddings stage-wise
    feat_ = trunk_.forward(ecg, &taps_);
    return dehead_->forward(feat_, &taps_);
}

void IndirectModel::backward(const Tensor& dpred) {
    if (cls_) {
        Tensor dfeat = cls_->backward(dpred, trunk_trainable_);
        if (trunk_trainable_ && dfeat.size() > 0) trunk_.backward(dfeat, false);
        return;
    }
    std::vector<Tensor> dtaps;
    Tensor dfeat = dehead_->backward(dpred, trunk_trainable_, trunk_trainable_ ? &dtaps : nullptr);
    if (trunk_trainable_) {
        // the final-stage gradient combines the mirror input with any
        // injected-tap gradient collected on the way down
        if (dtaps.back().size() == 0) dtaps.back() = dfeat;
        else {
            for (std::size_t i = 0; i < dfeat.size(); ++i) dtaps.back().v[i] += dfeat.v[i];
        }
        trunk_.backward_taps(dtaps, false);
    }
}

void IndirectModel::collect(nn::NamedParams& np) {
    trunk_.collect("trunk", np);
    if (cls_) cls_->collect("head", np);
    if (dehead_) dehead_->collect("head", np);
}

// ---------------------------------------------------------------------------
// Autoencoder pretraining
// ---------------------------------------------------------------------------
TrainResult train_autoencoder(nn::Autoencoder& model, const Windows& train, Channel ch, const StagePlan& plan) {
    validate_plan(plan, train.size());
    nn::NamedParams np;
    model.collect("ae", np);
    for (const auto& pfx : plan.frozen_blocks) nn::set_trainable(np, pfx, false);

    TrainResult res;
    record_hashes(np, plan.frozen_blocks, res.hashes_before);

    std::vector<std::size_t> tr_idx, val_idx;
    split_train_val(train.size(), plan.val_fraction, tr_idx, val_idx);

    Adam opt(np, plan.learning_rate);
    DivergenceWatch watch;
    EarlyStop stopper;
    Rng rng(plan.seed);

    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<std::size_t> order = tr_idx;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (const auto& batch : make_batches(order, plan.batch_size)) {
            Tensor x = batch_signal(train, batch, ch);
            Tensor xhat = model.forward(x);
            const double loss = losses::recon_loss(x, xhat);
            Tensor g = losses::recon_loss_grad(x, xhat);
            opt.zero_grad();
            model.backward(g);
            opt.clip_global_norm(plan.grad_clip);
            opt.step();
            epoch_loss += loss;
            ++steps;
        }
        epoch_loss /= std::max<std::size_t>(1, steps);

        double val_loss = epoch_loss;
        if (!val_idx.empty()) {
            Tensor xv = batch_signal(train, val_idx, ch);
            val_loss = losses::recon_loss(xv, model.forward(xv));
        }
        res.curve.push_back({epoch, epoch_loss, 0.0, 0.0, val_loss});
        watch.observe(epoch_loss, "autoencoder");
        if (stopper.should_stop(val_loss, plan.patience)) break;
    }
    record_hashes(np, plan.frozen_blocks, res.hashes_after);
    for (const auto& pfx : plan.frozen_blocks)
        if (res.hashes_before.at(pfx) != res.hashes_after.at(pfx))
            throw std::logic_error("frozen block changed during autoencoder stage: " + pfx);
    return res;
}

// ---------------------------------------------------------------------------
// Discriminator pretraining
// ---------------------------------------------------------------------------
TrainResult train_discriminator(nn::Discriminator& disc, const Windows& train, const StagePlan& plan) {
    validate_plan(plan, train.size());
    nn::NamedParams np;
    disc.collect("disc", np);
    for (const auto& pfx : plan.frozen_blocks) nn::set_trainable(np, pfx, false);

    TrainResult res;
    record_hashes(np, plan.frozen_blocks, res.hashes_before);

    std::vector<std::size_t> tr_idx, val_idx;
    split_train_val(train.size(), plan.val_fraction, tr_idx, val_idx);

    Adam opt(np, plan.learning_rate);
    DivergenceWatch watch;
    EarlyStop stopper;
    Rng rng(plan.seed);

    auto augment = [&](Tensor& x) {
        if (plan.augment_shift <= 0 && plan.augment_noise_std <= 0.0) return;
        for (int i = 0; i < x.n; ++i) {
            double* row = x.row(i, 0);
            if (plan.augment_shift > 0) {
                const int span = 2 * plan.augment_shift + 1;
                const int shift = static_cast<int>(rng.index(static_cast<std::size_t>(span))) - plan.augment_shift;
                if (shift != 0) {
                    std::vector<double> tmp(row, row + x.l);
                    for (int t = 0; t < x.l; ++t)
                        row[t] = tmp[static_cast<std::size_t>(((t - shift) % x.l + x.l) % x.l)];
                }
            }
            if (plan.augment_noise_std > 0.0)
                for (int t = 0; t < x.l; ++t) row[t] += plan.augment_noise_std * rng.normal();
        }
    };

    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<std::size_t> order = tr_idx;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (const auto& batch : make_batches(order, plan.batch_size)) {
            Tensor x = batch_signal(train, batch, Channel::ecg);
            augment(x);
            auto labels = batch_labels(train, batch, tasks::TaskKind::subject_id);
            Tensor logits = disc.logits(x);
            Tensor g;
            const double loss = tasks::softmax_xent(logits, labels, &g);
            opt.zero_grad();
            disc.backward_logits(g);
            opt.clip_global_norm(plan.grad_clip);
            opt.step();
            epoch_loss += loss;
            ++steps;
        }
        epoch_loss /= std::max<std::size_t>(1, steps);

        double val_loss = epoch_loss;
        if (!val_idx.empty()) {
            Tensor xv = batch_signal(train, val_idx, Channel::ecg);
            auto lv = batch_labels(train, val_idx, tasks::TaskKind::subject_id);
            val_loss = tasks::softmax_xent(disc.logits(xv), lv, nullptr);
        }
        res.curve.push_back({epoch, epoch_loss, 0.0, 0.0, val_loss});
        watch.observe(epoch_loss, "discriminator");
        if (stopper.should_stop(val_loss, plan.patience)) break;
    }

    // abort if features ended up no better than chance on held-out windows
    const std::vector<std::size_t>& probe = val_idx.empty() ? tr_idx : val_idx;
    Tensor xp = batch_signal(train, probe, Channel::ecg);
    auto lp = batch_labels(train, probe, tasks::TaskKind::subject_id);
    const double acc = tasks::accuracy(disc.logits(xp), lp);
    const double chance = 1.0 / tasks::task_classes(tasks::TaskKind::subject_id);
    if (acc <= chance)
        throw DivergenceError("discriminator: held-out accuracy " + fmt_double(acc) +
                              " is at or below chance; features not discriminative");

    disc.pretrained = true;
    nn::set_trainable(np, "disc.trunk", false);  // trunk frozen thereafter
    record_hashes(np, plan.frozen_blocks, res.hashes_after);
    return res;
}

// ---------------------------------------------------------------------------
// Base-task training of the indirect generator
// ---------------------------------------------------------------------------
TrainResult train_base_generator(nn::Autoencoder& gen, nn::Discriminator& disc, const Windows& train,
                                 const StagePlan& plan, bool perceptual_multilayer) {
    validate_plan(plan, train.size());
    plan.weights.validate();
    if (!disc.pretrained)
        throw ConfigError("base_task: discriminator is not pretrained (run pretrain_disc first)");

    nn::NamedParams gen_np;
    gen.collect("gen", gen_np);
    for (const auto& pfx : plan.frozen_blocks) nn::set_trainable(gen_np, pfx, false);

    nn::NamedParams disc_np;
    disc.collect("disc", disc_np);
    nn::set_trainable(disc_np, "disc", false);  // M receives no updates here
    const std::uint64_t disc_hash_before = nn::params_hash(disc_np, "disc");

    TrainResult res;
    record_hashes(gen_np, plan.frozen_blocks, res.hashes_before);
    res.hashes_before["disc"] = disc_hash_before;

    std::vector<std::size_t> tr_idx, val_idx;
    split_train_val(train.size(), plan.val_fraction, tr_idx, val_idx);

    Adam opt(gen_np, plan.learning_rate);
    DivergenceWatch watch;
    EarlyStop stopper;
    Rng rng(plan.seed);

    const double lam_d = plan.weights.lambda_d;
    const double lam_p = plan.weights.lambda_p;

    auto eval_pair = [&](const std::vector<std::size_t>& idx, double& l_d, double& l_p) {
        Tensor xhs = batch_signal(train, idx, Channel::hs);
        Tensor xecg = batch_signal(train, idx, Channel::ecg);
        Tensor shat = gen.forward(xhs);
        l_d = losses::distortion_loss(xecg, shat);
        if (perceptual_multilayer) {
            std::vector<Tensor> f, fhat;
            disc.features(xecg, &f);
            disc.features(shat, &fhat);
            l_p = losses::perceptual_loss_multilayer(f, fhat);
        } else {
            Tensor f = disc.features(xecg);
            Tensor fhat = disc.features(shat);
            l_p = losses::perceptual_loss(f, fhat);
        }
    };

    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<std::size_t> order = tr_idx;
        rng.shuffle(order);
        double ep_l = 0.0, ep_ld = 0.0, ep_lp = 0.0;
        std::size_t steps = 0;
        for (const auto& batch : make_batches(order, plan.batch_size)) {
            Tensor xhs = batch_signal(train, batch, Channel::hs);
            Tensor xecg = batch_signal(train, batch, Channel::ecg);
            Tensor shat = gen.forward(xhs);
            const double l_d = losses::distortion_loss(xecg, shat);

            // real features first; the second forward leaves the caches on
            // the generated window for the input-gradient pass
            double l_p;
            Tensor dshat = losses::distortion_loss_grad(xecg, shat);
            for (double& v : dshat.v) v *= lam_d;
            if (perceptual_multilayer) {
                std::vector<Tensor> f, fhat;
                disc.features(xecg, &f);
                disc.features(shat, &fhat);
                l_p = losses::perceptual_loss_multilayer(f, fhat);
                if (lam_p > 0.0) {
                    std::vector<Tensor> dtaps(f.size());
                    for (std::size_t s = 0; s < f.size(); ++s) {
                        dtaps[s] = losses::perceptual_loss_grad(f[s], fhat[s]);
                        for (double& v : dtaps[s].v) v *= lam_p;
                    }
                    Tensor dshat_p = disc.backward_feature_taps(dtaps, true);
                    for (std::size_t i = 0; i < dshat.size(); ++i) dshat.v[i] += dshat_p.v[i];
                }
            } else {
                Tensor f = disc.features(xecg);
                Tensor fhat = disc.features(shat);
                l_p = losses::perceptual_loss(f, fhat);
                if (lam_p > 0.0) {
                    Tensor dfhat = losses::perceptual_loss_grad(f, fhat);
                    for (double& v : dfhat.v) v *= lam_p;
                    Tensor dshat_p = disc.backward_features(dfhat, true);
                    for (std::size_t i = 0; i < dshat.size(); ++i) dshat.v[i] += dshat_p.v[i];
                }
            }
            const double total = losses::composite_loss(l_d, l_p, plan.weights);
            opt.zero_grad();
            gen.backward(dshat);
            opt.clip_global_norm(plan.grad_clip);
            opt.step();
            ep_l += total;
            ep_ld += l_d;
            ep_lp += l_p;
            ++steps;
        }
        const double div = static_cast<double>(std::max<std::size_t>(1, steps));
        ep_l /= div;
        ep_ld /= div;
        ep_lp /= div;

        double val_loss = ep_l;
        if (!val_idx.empty()) {
            double vd = 0.0, vp = 0.0;
            eval_pair(val_idx, vd, vp);
            val_loss = losses::composite_loss(vd, vp, plan.weights);
        }
        res.curve.push_back({epoch, ep_l, ep_ld, ep_lp, val_loss});
        watch.observe(ep_l, "base_task");
        if (stopper.should_stop(val_loss, plan.patience)) break;
    }

    const std::uint64_t disc_hash_after = nn::params_hash(disc_np, "disc");
    res.hashes_after["disc"] = disc_hash_after;
    if (disc_hash_after != disc_hash_before)
        throw std::logic_error("base_task: frozen discriminator parameters changed");
    record_hashes(gen_np, plan.frozen_blocks, res.hashes_after);
    return res;
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------
namespace {

double task_loss_and_grad(tasks::TaskKind task, const Tensor& pred, const Windows& ws,
                          const std::vector<std::size_t>& idx, Tensor* grad) {
    if (tasks::task_is_classification(task))
        return tasks::softmax_xent(pred, batch_labels(ws, idx, task), grad);
    if (task == tasks::TaskKind::segmentation)
        return tasks::bce_with_logits(pred, batch_masks(ws, idx), grad);
    Tensor target = batch_signal(ws, idx, Channel::bp);
    return tasks::mse_mean(pred, target, grad);
}

}  // namespace

TrainResult train_direct(DirectModel& model, const Windows& train, const StagePlan& plan) {
    validate_plan(plan, train.size());
    nn::NamedParams np;
    model.collect(np);
    for (const auto& pfx : plan.frozen_blocks) nn::set_trainable(np, pfx, false);

    TrainResult res;
    record_hashes(np, plan.frozen_blocks, res.hashes_before);

    std::vector<std::size_t> tr_idx, val_idx;
    split_train_val(train.size(), plan.val_fraction, tr_idx, val_idx);

    Adam opt(np, plan.learning_rate);
    DivergenceWatch watch;
    EarlyStop stopper;
    Rng rng(plan.seed);

    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<std::size_t> order = tr_idx;
        rng.shuffle(order);
        double ep_loss = 0.0;
        std::size_t steps = 0;
        for (const auto& batch : make_batches(order, plan.batch_size)) {
            Tensor x = batch_signal(train, batch, Channel::hs);
            Tensor pred = model.forward(x);
            Tensor g;
            const double loss = task_loss_and_grad(model.task(), pred, train, batch, &g);
            opt.zero_grad();
            model.backward(g);
            opt.clip_global_norm(plan.grad_clip);
            opt.step();
            ep_loss += loss;
            ++steps;
        }
        ep_loss /= std::max<std::size_t>(1, steps);

        double val_loss = ep_loss;
        if (!val_idx.empty()) {
            Tensor xv = batch_signal(train, val_idx, Channel::hs);
            Tensor pv = model.forward(xv);
            val_loss = task_loss_and_grad(model.task(), pv, train, val_idx, nullptr);
        }
        res.curve.push_back({epoch, ep_loss, 0.0, 0.0, val_loss});
        watch.observe(ep_loss, "finetune_direct");
        if (stopper.should_stop(val_loss, plan.patience)) break;
    }
    record_hashes(np, plan.frozen_blocks, res.hashes_after);
    for (const auto& pfx : plan.frozen_blocks)
        if (res.hashes_before.at(pfx) != res.hashes_after.at(pfx))
            throw std::logic_error("frozen block changed during finetune_direct: " + pfx);
    return res;
}

TrainResult train_indirect(IndirectModel& model, const Windows& train, const StagePlan& plan,
                           IndirectSource source, nn::Autoencoder* generator) {
    validate_plan(plan, train.size());
    if (source == IndirectSource::generated_ecg && generator == nullptr)
        throw StageOrderError("finetune_indirect: source=generated_ecg requires a trained base generator");

    nn::NamedParams np;
    model.collect(np);
    bool trunk_frozen = false;
    for (const auto& pfx : plan.frozen_blocks) {
        nn::set_trainable(np, pfx, false);
        if (pfx.rfind("trunk", 0) == 0) trunk_frozen = true;
    }
    model.set_trunk_trainable(!trunk_frozen);

    TrainResult res;
    record_hashes(np, plan.frozen_blocks, res.hashes_before);

    std::vector<std::size_t> tr_idx, val_idx;
    split_train_val(train.size(), plan.val_fraction, tr_idx, val_idx);

    Adam opt(np, plan.learning_rate);
    DivergenceWatch watch;
    EarlyStop stopper;
    Rng rng(plan.seed);

    auto make_input = [&](const std::vector<std::size_t>& idx) {
        if (source == IndirectSource::real_ecg) return batch_signal(train, idx, Channel::ecg);
        Tensor hs = batch_signal(train, idx, Channel::hs);
        return generator->forward(hs);  // detached: no gradients flow back
    };

    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<std::size_t> order = tr_idx;
        rng.shuffle(order);
        double ep_loss = 0.0;
        std::size_t steps = 0;
        for (const auto& batch : make_batches(order, plan.batch_size)) {
            Tensor x = make_input(batch);
            Tensor pred = model.forward(x);
            Tensor g;
            const double loss = task_loss_and_grad(model.task(), pred, train, batch, &g);
            opt.zero_grad();
            model.backward(g);
            opt.clip_global_norm(plan.grad_clip);
            opt.step();
            ep_loss += loss;
            ++steps;
        }
        ep_loss /= std::max<std::size_t>(1, steps);

        double val_loss = ep_loss;
        if (!val_idx.empty()) {
            Tensor xv = make_input(val_idx);
            Tensor pv = model.forward(xv);
            val_loss = task_loss_and_grad(model.task(), pv, train, val_idx, nullptr);
        }
        res.curve.push_back({epoch, ep_loss, 0.0, 0.0, val_loss});
        watch.observe(ep_loss, "finetune_indirect");
        if (stopper.should_stop(val_loss, plan.patience)) break;
    }
    record_hashes(np, plan.frozen_blocks, res.hashes_after);
    for (const auto& pfx : plan.frozen_blocks)
        if (res.hashes_before.at(pfx) != res.hashes_after.at(pfx))
            throw std::logic_error("frozen block changed during finetune_indirect: " + pfx);
    return res;
}

// ---------------------------------------------------------------------------
// Pretraining bundle
// ---------------------------------------------------------------------------
PretrainedSet pretrain_all(const nn::BlockGraph& g, const Windows& train, const StagePlan& hs_plan,
                           const StagePlan& ecg_plan, const StagePlan& disc_plan) {
    PretrainedSet out;

    nn::Autoencoder ae_hs(g);
    {
        Rng init(derive_seed(hs_plan.seed, "init"));
        ae_hs.init(init);
        out.hs_result = train_autoencoder(ae_hs, train, Channel::hs, hs_plan);
        nn::NamedParams np;
        ae_hs.collect("ae", np);
        out.hs.graph_json = g.to_json();
        out.hs.meta["stage"] = stage_name(Stage::pretrain_hs);
        nn::checkpoint_store(out.hs, np);
    }

    nn::Autoencoder ae_ecg(g);
    {
        Rng init(derive_seed(ecg_plan.seed, "init"));
        ae_ecg.init(init);
        out.ecg_result = train_autoencoder(ae_ecg, train, Channel::ecg, ecg_plan);
        nn::NamedParams np;
        ae_ecg.collect("ae", np);
        out.ecg.graph_json = g.to_json();
        out.ecg.meta["stage"] = stage_name(Stage::pretrain_ecg);
        nn::checkpoint_store(out.ecg, np);
    }

    nn::Discriminator disc(g, tasks::task_classes(tasks::TaskKind::subject_id));
    {
        Rng init(derive_seed(disc_plan.seed, "init"));
        disc.init(init);
        out.disc_result = train_discriminator(disc, train, disc_plan);
        nn::NamedParams np;
        disc.collect("disc", np);
        out.disc.graph_json = g.to_json();
        out.disc.meta["stage"] = stage_name(Stage::pretrain_disc);
        out.disc.meta["pretrained"] = "true";
        nn::checkpoint_store(out.disc, np);
    }
    return out;
}

nn::Autoencoder make_generator(const nn::BlockGraph& g, const nn::Checkpoint& ck_hs,
                               const nn::Checkpoint& ck_ecg) {
    nn::Autoencoder gen(g);
    nn::NamedParams np;
    gen.collect("ae", np);
    nn::checkpoint_apply(ck_hs, np, "ae.enc");
    nn::checkpoint_apply(ck_hs, np, "ae.fuse");
    nn::checkpoint_apply(ck_ecg, np, "ae.dec");
    return gen;
}

nn::Discriminator make_discriminator(const nn::BlockGraph& g, const nn::Checkpoint& ck_disc) {
    nn::Discriminator disc(g, tasks::task_classes(tasks::TaskKind::subject_id));
    nn::NamedParams np;
    disc.collect("disc", np);
    nn::checkpoint_apply(ck_disc, np, "disc");
    auto it = ck_disc.meta.find("pretrained");
    disc.pretrained = it != ck_disc.meta.end() && it->second == "true";
    return disc;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------
namespace {

constexpr int kEvalBatch = 32;

template <typename ForwardFn>
TaskMetric eval_task(tasks::TaskKind task, const Windows& test, ForwardFn&& fwd) {
    TaskMetric out;
    out.task = task;
    if (test.empty()) throw InputError("eval: empty test set");
    std::vector<std::size_t> all(test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    if (tasks::task_is_classification(task)) {
        int correct = 0;
        for (const auto& batch : make_batches(all, kEvalBatch)) {
            Tensor logits = fwd(batch);
            auto labels = batch_labels(test, batch, task);
            correct += static_cast<int>(std::llround(tasks::accuracy(logits, labels) *
                                                     static_cast<double>(batch.size())));
        }
        out.metric = "acc";
        out.value = static_cast<double>(correct) / static_cast<double>(test.size());
        return out;
    }
    if (task == tasks::TaskKind::segmentation) {
        tasks::IoUAccumulator acc;
        for (const auto& batch : make_batches(all, kEvalBatch)) {
            Tensor logits = fwd(batch);
            for (std::size_t i = 0; i < batch.size(); ++i)
                acc.add_logits(logits, test[batch[i]].seg_mask.data(), static_cast<int>(i));
        }
        out.metric = "mean_iou";
        out.iou = acc.result();
        out.value = out.iou.mean;
        return out;
    }
    // bp regression
    double abs_sum = 0.0;
    std::size_t count = 0;
    for (const auto& batch : make_batches(all, kEvalBatch)) {
        Tensor pred = fwd(batch);
        Tensor truth = batch_signal(test, batch, Channel::bp);
        auto stds = batch_bp_std(test, batch);
        abs_sum += tasks::mae_mmhg(pred, truth, stds) * static_cast<double>(pred.size());
        count += pred.size();
    }
    out.metric = "mae_mmhg";
    out.value = abs_sum / static_cast<double>(count);
    return out;
}

}  // namespace

TaskMetric eval_direct(DirectModel& model, const Windows& test) {
    return eval_task(model.task(), test, [&](const std::vector<std::size_t>& batch) {
        return model.forward(batch_signal(test, batch, Channel::hs));
    });
}

TaskMetric eval_indirect(IndirectModel& model, const Windows& test, nn::Autoencoder* generator,
                         bool from_generated_ecg) {
    if (from_generated_ecg && generator == nullptr)
        throw StageOrderError("eval_indirect: generated-ECG evaluation requires the base generator");
    return eval_task(model.task(), test, [&](const std::vector<std::size_t>& batch) {
        if (from_generated_ecg) {
            Tensor hs = batch_signal(test, batch, Channel::hs);
            return model.forward(generator->forward(hs));
        }
        return model.forward(batch_signal(test, batch, Channel::ecg));
    });
}

double eval_recon_correlation(nn::Autoencoder& model, const Windows& test, Channel ch) {
    if (test.empty()) throw InputError("eval: empty test set");
    std::vector<std::size_t> all(test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    double corr_sum = 0.0;
    std::size_t count = 0;
    for (const auto& batch : make_batches(all, kEvalBatch)) {
        Tensor x = batch_signal(test, batch, ch);
        Tensor y = model.forward(x);
        for (int i = 0; i < x.n; ++i) {
            const double* a = x.row(i, 0);
            const double* b = y.row(i, 0);
            double ma = 0.0, mb = 0.0;
            for (int t = 0; t < x.l; ++t) {
                ma += a[t];
                mb += b[t];
            }
            ma /= x.l;
            mb /= x.l;
            double sab = 0.0, saa = 0.0, sbb = 0.0;
            for (int t = 0; t < x.l; ++t) {
                sab += (a[t] - ma) * (b[t] - mb);
                saa += (a[t] - ma) * (a[t] - ma);
                sbb += (b[t] - mb) * (b[t] - mb);
            }
            if (saa > 0.0 && sbb > 0.0) corr_sum += sab / std::sqrt(saa * sbb);
            ++count;
        }
    }
    return corr_sum / static_cast<double>(count);
}

double eval_recon_loss(nn::Autoencoder& model, const Windows& test, Channel ch) {
    std::vector<std::size_t> all(test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& batch : make_batches(all, kEvalBatch)) {
        Tensor x = batch_signal(test, batch, ch);
        Tensor y = model.forward(x);
        total += losses::recon_loss(x, y) * static_cast<double>(batch.size());
        n += batch.size();
    }
    return total / static_cast<double>(n);
}

double eval_generation_mse(nn::Autoencoder& gen, const Windows& test) {
    std::vector<std::size_t> all(test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& batch : make_batches(all, kEvalBatch)) {
        Tensor hs = batch_signal(test, batch, Channel::hs);
        Tensor ecg = batch_signal(test, batch, Channel::ecg);
        Tensor shat = gen.forward(hs);
        for (std::size_t i = 0; i < shat.size(); ++i) {
            const double d = shat.v[i] - ecg.v[i];
            total += d * d;
        }
        n += shat.size();
    }
    return total / static_cast<double>(n);
}

double eval_disc_accuracy(nn::Discriminator& disc, const Windows& test) {
    std::vector<std::size_t> all(test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    int correct = 0;
    for (const auto& batch : make_batches(all, kEvalBatch)) {
        Tensor x = batch_signal(test, batch, Channel::ecg);
        auto labels = batch_labels(test, batch, tasks::TaskKind::subject_id);
        correct += static_cast<int>(std::llround(tasks::accuracy(disc.logits(x), labels) *
                                                 static_cast<double>(batch.size())));
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<std::vector<double>> pooled_embeddings(nn::Discriminator& disc, const Windows& ws,
                                                   const Tensor* ecg_override) {
    std::vector<std::vector<double>> out;
    if (ecg_override) {
        Tensor f = disc.features(*ecg_override);
        for (int i = 0; i < f.n; ++i) {
            std::vector<double> v(static_cast<std::size_t>(f.c), 0.0);
            for (int c = 0; c < f.c; ++c) {
                const double* row = f.row(i, c);
                double s = 0.0;
                for (int t = 0; t < f.l; ++t) s += row[t];
                v[static_cast<std::size_t>(c)] = s / f.l;
            }
            out.push_back(std::move(v));
        }
        return out;
    }
    std::vector<std::size_t> all(ws.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (const auto& batch : make_batches(all, kEvalBatch)) {
        Tensor x = batch_signal(ws, batch, Channel::ecg);
        Tensor f = disc.features(x);
        for (int i = 0; i < f.n; ++i) {
            std::vector<double> v(static_cast<std::size_t>(f.c), 0.0);
            for (int c = 0; c < f.c; ++c) {
                const double* row = f.row(i, c);
                double s = 0.0;
                for (int t = 0; t < f.l; ++t) s += row[t];
                v[static_cast<std::size_t>(c)] = s / f.l;
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// RunManifest
// ---------------------------------------------------------------------------
bool RunManifest::has_stage(const std::string& name) const { return find_stage(name) != nullptr; }

const StageRecord* RunManifest::find_stage(const std::string& name) const {
    for (const auto& s : stages)
        if (s.stage == name) return &s;
    return nullptr;
}

void RunManifest::save(const std::filesystem::path& path) const {
    json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    json st = json::array();
    for (const auto& s : stages) {
        json e;
        e["stage"] = s.stage;
        e["checkpoint"] = s.checkpoint;
        e["lambda_d"] = s.weights.lambda_d;
        e["lambda_p"] = s.weights.lambda_p;
        if (!s.task.empty()) e["task"] = s.task;
        if (!s.path.empty()) e["path"] = s.path;
        if (!s.source.empty()) e["source"] = s.source;
        json curve = json::array();
        for (const auto& c : s.curve)
            curve.push_back({{"epoch", c.epoch}, {"loss", c.loss}, {"l_d", c.l_d},
                             {"l_p", c.l_p}, {"val_loss", c.val_loss}});
        e["curve"] = curve;
        e["hashes_before"] = s.hashes_before;
        e["hashes_after"] = s.hashes_after;
        st.push_back(e);
    }
    j["stages"] = st;
    atomic_write_file(path, j.dump(2) + "\n");
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    RunManifest m;
    m.config_hash = j.value("config_hash", "");
    m.seed = j.value("seed", 0ull);
    for (const auto& e : j.value("stages", json::array())) {
        StageRecord r;
        r.stage = e.value("stage", "");
        r.checkpoint = e.value("checkpoint", "");
        r.weights.lambda_d = e.value("lambda_d", 1.0);
        r.weights.lambda_p = e.value("lambda_p", 0.0);
        r.task = e.value("task", "");
        r.path = e.value("path", "");
        r.source = e.value("source", "");
        for (const auto& c : e.value("curve", json::array()))
            r.curve.push_back({c.value("epoch", 0), c.value("loss", 0.0), c.value("l_d", 0.0),
                               c.value("l_p", 0.0), c.value("val_loss", 0.0)});
        if (e.contains("hashes_before"))
            r.hashes_before = e["hashes_before"].get<std::map<std::string, std::string>>();
        if (e.contains("hashes_after"))
            r.hashes_after = e["hashes_after"].get<std::map<std::string, std::string>>();
        m.stages.push_back(std::move(r));
    }
    return m;
}

}  // namespace dualpath::protocol
