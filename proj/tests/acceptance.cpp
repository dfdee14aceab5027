// Acceptance suite: runs each acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.
//
//   acceptance                 run all criteria
//   acceptance --criterion N   run one criterion
//   acceptance --list          list criteria
#include "dualpath/commands.hpp"
#include "dualpath/config.hpp"
#include "dualpath/dpsweep.hpp"
#include "dualpath/losses.hpp"
#include "dualpath/netblocks.hpp"
#include "dualpath/protocol.hpp"
#include "dualpath/riskcalc.hpp"
#include "dualpath/signalio.hpp"
#include "dualpath/synthgen.hpp"
#include "dualpath/tasks.hpp"

#include "test_data.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <vector>

using namespace dualpath;
namespace proto = dualpath::protocol;
namespace fs = std::filesystem;

namespace {

struct Ctx {
    std::vector<std::string> notes;
    bool ok = true;
    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            notes.push_back("FAILED: " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

double rel_err(double a, double b) {
    const double denom = std::max({1e-8, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) / denom;
}

// central finite difference with a step-halving stability guard: near a ReLU
// kink the large-step quotient is invalid, so halve until two consecutive
// estimates agree; samples that never stabilize are skipped as kink-adjacent
template <typename F>
bool stable_fd(F&& value, double& w_ref, double h, double& fd_out) {
    auto fd_at = [&](double step) {
        const double orig = w_ref;
        w_ref = orig + step;
        const double lp = value();
        w_ref = orig - step;
        const double lm = value();
        w_ref = orig;
        return (lp - lm) / (2 * step);
    };
    double prev = fd_at(h);
    for (int halving = 0; halving < 3; ++halving) {
        h *= 0.5;
        const double cur = fd_at(h);
        if (rel_err(prev, cur) <= 1e-4) {
            fd_out = cur;
            return true;
        }
        prev = cur;
    }
    return false;
}


// ---------------------------------------------------------------------------
// shared plans pinned for the acceptance runs
// ---------------------------------------------------------------------------
proto::StagePlan plan_for(proto::Stage s, std::uint64_t seed) {
    proto::StagePlan p;
    p.stage = s;
    p.batch_size = 32;
    p.seed = derive_seed(seed, proto::stage_name(s));
    p.patience = 10;
    switch (s) {
        case proto::Stage::pretrain_hs:
        case proto::Stage::pretrain_ecg:
            p.epochs = 60;
            p.learning_rate = 2e-3;
            break;
        case proto::Stage::pretrain_disc:
            p.epochs = 60;
            p.learning_rate = 2e-3;
            p.augment_shift = 1024;
            p.augment_noise_std = 0.2;
            p.patience = 0;
            break;
        case proto::Stage::base_task:
            p.epochs = 30;
            p.learning_rate = 2e-3;
            p.weights = {1.0, 1.0};
            break;
        case proto::Stage::finetune_direct:
        case proto::Stage::finetune_indirect:
            p.epochs = 30;
            p.learning_rate = 1e-3;
            break;
    }
    return p;
}

synth::SynthConfig default_corpus(std::uint64_t seed) {
    synth::SynthConfig sc;
    sc.n_subjects = 4;
    sc.seconds_per_subject = 60.0;
    sc.seed = seed;
    return sc;
}

// ---------------------------------------------------------------------------
// criterion 1: loss correctness (tagged examples exact + gradient check)
// ---------------------------------------------------------------------------
bool crit1(Ctx& c) {
    // tagged examples, exact
    {
        Rng rng(1);
        Tensor x(2, 1, 2048);
        for (auto& v : x.v) v = rng.normal();
        c.expect(losses::recon_loss(x, x) == 0.0, "recon identity == 0");

        Tensor z(1, 1, 2048), ones(1, 1, 2048);
        ones.fill(1.0);
        c.expect(losses::recon_loss(z, ones) == 2048.0, "recon unit offset == 2048");

        Tensor z2(2, 1, 2048), mix(2, 1, 2048);
        for (int t = 0; t < 2048; ++t) mix.at(0, 0, t) = 1.0;
        c.expect(losses::recon_loss(z2, mix) == 1024.0, "recon per-item {2048,0} -> 1024");

        Tensor a(1, 1, 2048);
        for (auto& v : a.v) v = rng.normal();
        double k = 0.0;
        for (double v : a.v) k += v * v;
        Tensor na = a;
        for (auto& v : na.v) v = -v;
        c.expect(rel_err(losses::distortion_loss(a, na), 4.0 * k) < 1e-12, "distortion antisymmetric 4K");
        Tensor b(1, 1, 2048);
        for (auto& v : b.v) v = rng.normal();
        c.expect(losses::distortion_loss(a, b) == losses::recon_loss(a, b), "distortion == recon bitwise");

        Tensor f(4, 8, 32), fh(4, 8, 32);
        for (std::size_t i = 0; i < f.size(); ++i) fh.v[i] = f.v[i] = rng.normal();
        fh.at(1, 2, 3) += 3.0;
        c.expect(losses::perceptual_loss(f, fh) == 9.0 / 4.0, "perceptual single entry 9/n");
        c.expect(losses::perceptual_loss(f, f) == 0.0, "perceptual identity == 0");

        c.expect(losses::composite_loss(0.5, 9.0, {1.0, 0.0}) == 0.5, "composite (1,0) projection");
        c.expect(losses::composite_loss(0.01, 2.0, {700.0, 1.0}) == 9.0, "composite (700,1) example == 9.0");
        const double c1 = losses::composite_loss(0.3, 0.7, {2.0, 5.0});
        const double c2 = losses::composite_loss(0.3, 0.7, {6.0, 15.0});
        c.expect(rel_err(c2, 3.0 * c1) < 1e-12, "composite weight scaling");
    }

    // gradient check on a width-8 graph: every loss through the
    // generator/discriminator stack, ~1% of parameters, rel err <= 1e-3
    nn::BlockGraph g;
    g.base_widths = {8, 8, 8};
    g.disc_base_widths = {8, 8, 8, 8, 8, 8};
    const int L = 256;  // depth-reduced temporal extent
    Rng rng(5);
    nn::Autoencoder gen(g);
    gen.init(rng);
    nn::Discriminator disc(g, 4);
    disc.init(rng);
    disc.pretrained = true;
    nn::NamedParams gen_np, disc_np;
    gen.collect("gen", gen_np);
    disc.collect("disc", disc_np);
    nn::set_trainable(disc_np, "disc", false);

    Tensor x_hs(2, 1, L), x_ecg(2, 1, L);
    for (auto& v : x_hs.v) v = rng.normal();
    for (auto& v : x_ecg.v) v = rng.normal();

    struct LossSpec {
        const char* name;
        losses::LossWeights w;
    };
    // (1,0) isolates the distortion loss, (0,1) the perceptual loss, mixed
    // weights exercise the composite; the recon loss is checked separately
    const LossSpec specs[] = {{"distortion", {1.0, 0.0}}, {"perceptual", {0.0, 1.0}}, {"composite", {0.7, 1.3}}};
    for (const auto& spec : specs) {
        auto value = [&]() {
            Tensor shat = gen.forward(x_hs);
            const double l_d = losses::distortion_loss(x_ecg, shat);
            Tensor f = disc.features(x_ecg);
            Tensor fh = disc.features(shat);
            const double l_p = losses::perceptual_loss(f, fh);
            return spec.w.lambda_d * l_d + spec.w.lambda_p * l_p;
        };
        {
            Tensor shat = gen.forward(x_hs);
            Tensor f = disc.features(x_ecg);
            Tensor fh = disc.features(shat);
            Tensor dshat = losses::distortion_loss_grad(x_ecg, shat);
            for (double& v : dshat.v) v *= spec.w.lambda_d;
            if (spec.w.lambda_p > 0.0) {
                Tensor dfh = losses::perceptual_loss_grad(f, fh);
                for (double& v : dfh.v) v *= spec.w.lambda_p;
                Tensor dp = disc.backward_features(dfh, true);
                for (std::size_t i = 0; i < dshat.size(); ++i) dshat.v[i] += dp.v[i];
            }
            for (auto& [name, p] : gen_np.items) p->zero_grad();
            gen.backward(dshat);
        }
        std::size_t total = 0;
        for (auto& [name, p] : gen_np.items) total += p->size();
        const std::size_t stride = 100;  // ~1% of parameters
        std::size_t flat = 0;
        double worst = 0.0;
        int checked = 0, kinks = 0;
        for (auto& [name, p] : gen_np.items) {
            for (std::size_t i = 0; i < p->size(); ++i, ++flat) {
                if (flat % stride != 0) continue;
                const double h = 1e-5 * std::max(1.0, std::fabs(p->w[i]));
                double fd = 0.0;
                if (!stable_fd(value, p->w[i], h, fd)) {
                    ++kinks;
                    continue;
                }
                worst = std::max(worst, rel_err(p->g[i], fd));
                ++checked;
            }
        }
        c.note(std::string(spec.name) + ": " + std::to_string(checked) + "/" + std::to_string(total) +
               " parameters sampled (" + std::to_string(kinks) + " kink-adjacent skipped), worst rel err " +
               fmt_double(worst));
        c.expect(checked >= 50, std::string(spec.name) + ": enough stable samples");
        c.expect(worst <= 1e-3, std::string(spec.name) + " gradients within 1e-3 of finite differences");
    }

    // recon loss through the autoencoder on its own modality
    {
        nn::Autoencoder ae(g);
        Rng r(6);
        ae.init(r);
        nn::NamedParams np;
        ae.collect("ae", np);
        Tensor x(2, 1, L);
        for (auto& v : x.v) v = r.normal();
        auto value = [&]() { return losses::recon_loss(x, ae.forward(x)); };
        Tensor y = ae.forward(x);
        for (auto& [name, p] : np.items) p->zero_grad();
        ae.backward(losses::recon_loss_grad(x, y));
        std::size_t flat = 0;
        double worst = 0.0;
        int checked = 0, kinks = 0;
        for (auto& [name, p] : np.items)
            for (std::size_t i = 0; i < p->size(); ++i, ++flat) {
                if (flat % 100 != 0) continue;
                const double h = 1e-5 * std::max(1.0, std::fabs(p->w[i]));
                double fd = 0.0;
                if (!stable_fd(value, p->w[i], h, fd)) {
                    ++kinks;
                    continue;
                }
                worst = std::max(worst, rel_err(p->g[i], fd));
                ++checked;
            }
        c.note("recon: " + std::to_string(checked) + " sampled (" + std::to_string(kinks) +
               " kink-adjacent skipped), worst rel err " + fmt_double(worst));
        c.expect(checked >= 50, "recon: enough stable samples");
        c.expect(worst <= 1e-3, "recon gradients within 1e-3 of finite differences");
    }
    return c.ok;
}

// ---------------------------------------------------------------------------
// criterion 2: shape closure across the channel-scale ladder
// ---------------------------------------------------------------------------
bool crit2(Ctx& c) {
    for (int den : {1, 2, 4, 8, 16, 32}) {
        nn::BlockGraph g;
        g.scale_den = den;
        nn::Autoencoder ae(g);
        Rng rng(2);
        ae.init(rng);
        Tensor x(1, 1, 2048);
        for (auto& v : x.v) v = rng.normal();
        Tensor y = ae.forward(x);
        c.expect(y.l == 2048 && y.c == 1, "scale 1/" + std::to_string(den) + ": 2048 -> 2048");
        c.expect(ae.bottleneck().l == 256 && ae.bottleneck().c == g.bottleneck_channels(),
                 "scale 1/" + std::to_string(den) + ": bottleneck (C_b, 256)");

        nn::Encoder enc(g);
        nn::Fusion fuse(g);
        enc.init(rng);
        fuse.init(rng);
        auto taps = enc.forward(x);
        c.expect(taps[0].l == 1024 && taps[1].l == 512 && taps[2].l == 256,
                 "scale 1/" + std::to_string(den) + ": tap resolutions 1024/512/256");
        Tensor phi = fuse.forward(taps);
        c.expect(phi.l == 256, "scale 1/" + std::to_string(den) + ": fusion aligns to L3");
        auto bad = taps;
        bad[1] = Tensor(1, g.width(1), 300);
        bool threw = false;
        try {
            fuse.forward(bad);
        } catch (const InputError&) {
            threw = true;
        }
        c.expect(threw, "scale 1/" + std::to_string(den) + ": misaligned taps abort");
    }
    c.note("encode->fuse->decode closed at every channel scale without padding fixes");
    return c.ok;
}

// ---------------------------------------------------------------------------
// criterion 3: metric oracles
// ---------------------------------------------------------------------------
bool crit3(Ctx& c) {
    // IoU against the brute-force per-timestep counting oracle, exact
    Rng rng(3);
    bool iou_ok = true;
    for (int trial = 0; trial < 100 && iou_ok; ++trial) {
        std::vector<std::uint8_t> pred(6 * 2048), truth(6 * 2048);
        const double dp = 0.1 + 0.8 * rng.uniform();
        const double dt = 0.1 + 0.8 * rng.uniform();
        for (auto& v : pred) v = rng.uniform() < dp ? 1 : 0;
        for (auto& v : truth) v = rng.uniform() < dt ? 1 : 0;
        auto got = tasks::iou({pred.data()}, {truth.data()});
        for (int cls = 0; cls < 6; ++cls) {
            std::uint64_t inter = 0, uni = 0;
            for (int t = 0; t < 2048; ++t) {
                const bool a = pred[static_cast<std::size_t>(cls * 2048 + t)] != 0;
                const bool b = truth[static_cast<std::size_t>(cls * 2048 + t)] != 0;
                inter += (a && b) ? 1 : 0;
                uni += (a || b) ? 1 : 0;
            }
            const double want = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            iou_ok = iou_ok && got.per_class[static_cast<std::size_t>(cls)] == want;
        }
    }
    c.expect(iou_ok, "IoU equals the counting oracle on 100 random mask pairs (exact)");

    // FID closed form at 2000 samples within 5%
    {
        Rng r(4);
        std::vector<std::vector<double>> real, fake;
        for (int i = 0; i < 2000; ++i) {
            std::vector<double> a(8), b(8);
            for (int j = 0; j < 8; ++j) {
                a[static_cast<std::size_t>(j)] = r.normal();
                b[static_cast<std::size_t>(j)] = r.normal();
            }
            b[0] += 2.0;  // mean shift of norm 2, equal covariance -> FID = 4
            real.push_back(std::move(a));
            fake.push_back(std::move(b));
        }
        const double fid = sweep::fid_from_embeddings(real, fake);
        c.note("FID on shifted Gaussian clouds: " + fmt_double(fid) + " (closed form 4)");
        c.expect(std::fabs(fid - 4.0) / 4.0 < 0.05, "FID within 5% of the closed form at 2000 samples");
        c.expect(sweep::fid_from_embeddings(real, real) <= 1e-6, "FID(X,X) <= 1e-6");
    }

    // precision/recall equals the exhaustive pairwise oracle on <= 64 points
    {
        Rng r(5);
        bool pr_ok = true;
        for (int trial = 0; trial < 8 && pr_ok; ++trial) {
            const std::size_t nr = 8 + r.index(56);
            const std::size_t nf = 8 + r.index(56);
            std::vector<std::vector<double>> real, fake;
            for (std::size_t i = 0; i < nr; ++i) real.push_back({r.normal(), r.normal(), r.normal()});
            for (std::size_t i = 0; i < nf; ++i) fake.push_back({0.5 + r.normal(), r.normal(), r.normal()});
            const int k = 3;
            auto got = sweep::precision_recall(real, fake, k);
            auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
                double s = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
                return std::sqrt(s);
            };
            auto radius = [&](const std::vector<std::vector<double>>& pts, std::size_t i) {
                std::vector<double> d;
                for (std::size_t j = 0; j < pts.size(); ++j)
                    if (i != j) d.push_back(dist(pts[i], pts[j]));
                std::sort(d.begin(), d.end());
                return d[k - 1];
            };
            std::size_t hits = 0;
            for (const auto& f : fake) {
                bool in = false;
                for (std::size_t i = 0; i < real.size() && !in; ++i) in = dist(f, real[i]) <= radius(real, i);
                hits += in ? 1 : 0;
            }
            pr_ok = pr_ok && got.precision == static_cast<double>(hits) / static_cast<double>(nf);
            hits = 0;
            for (const auto& q : real) {
                bool in = false;
                for (std::size_t i = 0; i < fake.size() && !in; ++i) in = dist(q, fake[i]) <= radius(fake, i);
                hits += in ? 1 : 0;
            }
            pr_ok = pr_ok && got.recall == static_cast<double>(hits) / static_cast<double>(nr);
        }
        c.expect(pr_ok, "precision/recall equals the exhaustive pairwise oracle (exact)");
    }
    return c.ok;
}

// ---------------------------------------------------------------------------
// criterion 4: protocol end-to-end smoke on the default synthetic config
// ---------------------------------------------------------------------------
bool crit4(Ctx& c) {
    const std::uint64_t seed = 1;
    auto data = testdata::make_windows(default_corpus(seed));
    c.note(std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) +
           " test windows");
    nn::BlockGraph g;
    g.scale_den = 8;

    // stages 1-3
    auto pre = proto::pretrain_all(g, data.train, plan_for(proto::Stage::pretrain_hs, seed),
                                   plan_for(proto::Stage::pretrain_ecg, seed),
                                   plan_for(proto::Stage::pretrain_disc, seed));
    {
        nn::Autoencoder ae(g);
        nn::NamedParams np;
        ae.collect("ae", np);
        nn::checkpoint_apply(pre.ecg, np);
        const double corr = proto::eval_recon_correlation(ae, data.test, proto::Channel::ecg);
        c.note("ECG autoencoder held-out correlation " + fmt_double(corr));
        c.expect(corr > 0.9, "ECG autoencoder held-out reconstruction correlation > 0.9");
    }
    {
        auto disc = proto::make_discriminator(g, pre.disc);
        const double acc = proto::eval_disc_accuracy(disc, data.test);
        c.note("discriminator held-out subject accuracy " + fmt_double(acc));
        c.expect(acc >= 0.8, "discriminator held-out subject accuracy >= 0.8");
    }

    // stage 4: base task
    auto gen = proto::make_generator(g, pre.hs, pre.ecg);
    auto disc = proto::make_discriminator(g, pre.disc);
    proto::train_base_generator(gen, disc, data.train, plan_for(proto::Stage::base_task, seed));
    c.note("generation test MSE " + fmt_double(proto::eval_generation_mse(gen, data.test)));

    // stages 5-6: one fine-tune per path
    proto::DirectModel dm(g, tasks::TaskKind::sex);
    Rng di(derive_seed(seed, "init.direct.sex"));
    dm.init(di);
    nn::NamedParams dnp;
    dm.collect(dnp);
    nn::checkpoint_apply_renamed(pre.hs, dnp, "ae.enc", "enc");
    nn::checkpoint_apply_renamed(pre.hs, dnp, "ae.fuse", "fuse");
    proto::train_direct(dm, data.train, plan_for(proto::Stage::finetune_direct, seed));

    proto::IndirectModel im(g, tasks::TaskKind::sex);
    Rng ii(derive_seed(seed, "init.indirect.sex"));
    im.init(ii);
    nn::NamedParams inp;
    im.collect(inp);
    nn::checkpoint_apply_renamed(pre.disc, inp, "disc.trunk", "trunk");
    auto ip = plan_for(proto::Stage::finetune_indirect, seed);
    ip.frozen_blocks = {"trunk"};
    proto::train_indirect(im, data.train, ip, proto::IndirectSource::real_ecg, &gen);

    proto::eval_direct(dm, data.test);
    proto::eval_indirect(im, data.test, &gen, true);
    c.note("all six stages ran to completion");
    return c.ok;
}

// ---------------------------------------------------------------------------
// criterion 5: dual-path directional claim over 3 seeds
// ---------------------------------------------------------------------------
bool crit5(Ctx& c) {
    int iou_wins = 0, mae_wins = 0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto data = testdata::make_windows(default_corpus(seed));
        nn::BlockGraph g;
        g.scale_den = 8;
        auto pre = proto::pretrain_all(g, data.train, plan_for(proto::Stage::pretrain_hs, seed),
                                       plan_for(proto::Stage::pretrain_ecg, seed),
                                       plan_for(proto::Stage::pretrain_disc, seed));
        auto gen = proto::make_generator(g, pre.hs, pre.ecg);
        auto disc = proto::make_discriminator(g, pre.disc);
        proto::train_base_generator(gen, disc, data.train, plan_for(proto::Stage::base_task, seed));

        auto run_task = [&](tasks::TaskKind task) {
            proto::DirectModel dm(g, task);
            Rng di(derive_seed(seed, std::string("init.direct.") + tasks::task_name(task)));
            dm.init(di);
            nn::NamedParams dnp;
            dm.collect(dnp);
            nn::checkpoint_apply_renamed(pre.hs, dnp, "ae.enc", "enc");
            nn::checkpoint_apply_renamed(pre.hs, dnp, "ae.fuse", "fuse");
            proto::train_direct(dm, data.train, plan_for(proto::Stage::finetune_direct, seed));
            auto dmet = proto::eval_direct(dm, data.test);

            proto::IndirectModel im(g, task);
            Rng ii(derive_seed(seed, std::string("init.indirect.") + tasks::task_name(task)));
            im.init(ii);
            nn::NamedParams inp;
            im.collect(inp);
            nn::checkpoint_apply_renamed(pre.disc, inp, "disc.trunk", "trunk");
            auto ip = plan_for(proto::Stage::finetune_indirect, seed);
            ip.frozen_blocks = {"trunk"};
            proto::train_indirect(im, data.train, ip, proto::IndirectSource::real_ecg, &gen);
            auto imet = proto::eval_indirect(im, data.test, &gen, true);
            return std::pair{dmet.value, imet.value};
        };
        auto [d_iou, i_iou] = run_task(tasks::TaskKind::segmentation);
        auto [d_mae, i_mae] = run_task(tasks::TaskKind::bp);
        c.note("seed " + std::to_string(seed) + ": IoU direct " + fmt_double(d_iou) + " vs indirect " +
               fmt_double(i_iou) + "; MAE direct " + fmt_double(d_mae) + " vs indirect " + fmt_double(i_mae));
        iou_wins += i_iou >= d_iou ? 1 : 0;
        mae_wins += i_mae <= d_mae ? 1 : 0;
    }
    c.note("indirect mean IoU >= direct in " + std::to_string(iou_wins) + "/3 seeds; indirect BP MAE <= direct in " +
           std::to_string(mae_wins) + "/3 seeds");
    c.expect(iou_wins >= 2, "indirect mean IoU >= direct mean IoU in >= 2 of 3 seeds");
    c.expect(mae_wins >= 2, "indirect BP MAE <= direct BP MAE in >= 2 of 3 seeds");
    return c.ok;
}

// ---------------------------------------------------------------------------
// reduced sweep shared by criteria 6 and 7
// ---------------------------------------------------------------------------
nn::BlockGraph sweep_graph(int scale_den) {
    nn::BlockGraph g;
    g.scale_den = scale_den;
    g.base_widths = {8, 16, 32};
    g.disc_base_widths = {16, 16, 32, 32, 32, 32};
    return g;
}

synth::SynthConfig sweep_corpus(std::uint64_t seed) {
    synth::SynthConfig sc;
    sc.n_subjects = 4;
    sc.seconds_per_subject = 90.0;
    sc.seed = seed;
    return sc;
}

std::vector<losses::LossWeights> reduced_grid() {
    sweep::SweepGrid grid;
    grid.points_per_decade = 1;  // 12 points spanning ratios 1e-4 .. 1e7
    grid.include_representative = false;
    return grid.resolve();
}

std::vector<sweep::SweepPoint> run_reduced_sweep(int scale_den, std::uint64_t seed, Ctx& c) {
    auto data = testdata::make_windows(sweep_corpus(seed));
    nn::BlockGraph g = sweep_graph(scale_den);
    auto hs_plan = plan_for(proto::Stage::pretrain_hs, seed);
    auto ecg_plan = plan_for(proto::Stage::pretrain_ecg, seed);
    auto disc_plan = plan_for(proto::Stage::pretrain_disc, seed);
    hs_plan.epochs = 30;
    ecg_plan.epochs = 30;
    disc_plan.epochs = 30;
    auto pre = proto::pretrain_all(g, data.train, hs_plan, ecg_plan, disc_plan);

    sweep::SweepSettings st;
    st.base_plan = plan_for(proto::Stage::base_task, seed);
    st.base_plan.epochs = 8;
    st.base_plan.patience = 0;
    st.knn_k = 3;
    auto points = sweep::run_sweep(reduced_grid(), g, pre.hs, pre.ecg, pre.disc, data.train, data.test, st);
    std::size_t converged = 0;
    for (const auto& p : points) converged += p.converged ? 1 : 0;
    c.note("scale 1/" + std::to_string(scale_den) + " seed " + std::to_string(seed) + ": " +
           std::to_string(converged) + "/" + std::to_string(points.size()) + " points converged");
    return points;
}

// ---------------------------------------------------------------------------
// criterion 6: three-phase structure
// ---------------------------------------------------------------------------
bool crit6(Ctx& c) {
    // (a) constructed quadratic ground truth for phase detection, exact
    {
        std::vector<sweep::SweepPoint> pts;
        for (int r = 1; r <= 9; ++r) {
            sweep::SweepPoint p;
            p.weights = {1.0, static_cast<double>(r)};
            p.mse = std::pow(r - 3.0, 2);
            p.fid = std::pow(r - 6.0, 2);
            p.converged = true;
            pts.push_back(p);
        }
        auto res = sweep::detect_phases(pts, 3);
        c.note("constructed trajectory: turning points at sorted indices " + std::to_string(res.turning1) +
               ", " + std::to_string(res.turning2) + " (ground truth 2, 5)");
        c.expect(std::abs(res.turning1 - 2) <= 1, "turning point 1 within +/-1 grid point");
        c.expect(std::abs(res.turning2 - 5) <= 1, "turning point 2 within +/-1 grid point");
    }

    // (b) reduced sweep: the distortion optimum sits at a strictly smaller
    // perceptual-weight ratio than the perceptual optimum
    auto points = run_reduced_sweep(2, 1, c);
    std::size_t converged = 0;
    for (const auto& p : points) converged += p.converged ? 1 : 0;
    c.expect(converged >= 10, "at least 10 converged sweep points spanning the ratio range");
    double best_mse = std::numeric_limits<double>::infinity();
    double best_fid = std::numeric_limits<double>::infinity();
    double mse_ratio = 0.0, fid_ratio = 0.0;
    for (const auto& p : points) {
        if (!p.converged) continue;
        if (p.mse < best_mse) {
            best_mse = p.mse;
            mse_ratio = p.ratio();
        }
        if (p.fid < best_fid) {
            best_fid = p.fid;
            fid_ratio = p.ratio();
        }
    }
    c.note("argmin-MSE at ratio " + fmt_double(mse_ratio) + ", argmin-FID at ratio " + fmt_double(fid_ratio));
    c.expect(mse_ratio < fid_ratio, "argmin-MSE ratio strictly smaller than argmin-FID ratio");
    return c.ok;
}

// ---------------------------------------------------------------------------
// criterion 7: resolution trend (scale 1 vs 1/32)
// ---------------------------------------------------------------------------
bool crit7(Ctx& c) {
    int wins = 0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto full = run_reduced_sweep(1, seed, c);
        auto tiny = run_reduced_sweep(32, seed, c);
        auto min_mse = [](const std::vector<sweep::SweepPoint>& pts) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& p : pts)
                if (p.converged && p.mse < best) best = p.mse;
            return best;
        };
        const double m1 = min_mse(full);
        const double m32 = min_mse(tiny);
        c.note("seed " + std::to_string(seed) + ": min-MSE scale 1 = " + fmt_double(m1) +
               " vs scale 1/32 = " + fmt_double(m32));
        wins += m1 <= m32 ? 1 : 0;
    }
    c.note("min-MSE(1) <= min-MSE(1/32) in " + std::to_string(wins) + "/3 seeds");
    c.expect(wins >= 2, "capacity monotonicity in >= 2 of 3 seeds");
    return c.ok;
}

// ---------------------------------------------------------------------------
// criterion 8: risk calculus
// ---------------------------------------------------------------------------
bool crit8(Ctx& c) {
    using risk::PathProfile;
    using risk::SharedCapacity;
    c.expect(rel_err(risk::empirical_train_risk({{1, 2}, {3, 4}}), 2.5) < 1e-9, "train risk {1,2;3,4} -> 2.5");
    c.expect(risk::empirical_train_risk({{0, 0}, {0, 0}}) == 0.0, "train risk zeros");
    c.expect(rel_err(risk::empirical_test_risk({2, 4}), 3.0) < 1e-9, "test risk {2,4} -> 3");

    PathProfile p{100.0, 10.0, 1.0, 10.0, "p"};
    SharedCapacity h{100.0};
    c.expect(std::fabs(risk::train_term(p, h) - std::sqrt(0.2)) < 1e-9, "train term sqrt(0.2) ~ 0.4472");
    PathProfile z{100.0, 10.0, 1.0, 0.0, "z"};
    c.expect(risk::train_term(z, {0.0}) == 0.0, "train term 0 at zero capacities");
    PathProfile p2 = p;
    p2.nu = 2.0;
    c.expect(std::fabs(risk::train_term(p2, h) - 0.5 * risk::train_term(p, h)) < 1e-9, "1/nu scaling");

    c.expect(!risk::dominance(p, p, h).indirect_dominates, "identical profiles do not dominate (strict)");
    PathProfile big_n = p;
    big_n.n *= 100.0;
    c.expect(risk::dominance(big_n, p, h).indirect_dominates, "100x samples dominate");
    PathProfile direct{100.0, 5.0, 1.0, 10.0, "direct"};
    PathProfile indirect{5000.0, 5.0, 10.0, 20.0, "indirect"};
    auto rep = risk::dominance(indirect, direct, h);
    c.expect(std::fabs(rep.direct_term - std::sqrt(0.3)) < 1e-9, "direct side of the dominance criterion");
    c.expect(std::fabs(rep.indirect_term - 0.1 * std::sqrt(0.008)) < 1e-9, "indirect side of the criterion");
    c.expect(rep.indirect_dominates, "hand-evaluated dominance verdict");

    c.expect(std::fabs(risk::tl_risk_bound(p, h, 100.0, 1.0) - (std::sqrt(0.2) + std::sqrt(0.1))) < 1e-9,
             "bound example sqrt(0.2) + sqrt(0.1) ~ 0.7634");
    c.expect(std::fabs(risk::tl_risk_bound(z, h, 7.0, 2.5) - 2.5 * risk::train_term(z, h)) < 1e-9,
             "c_f = 0 collapses to the train term");

    Rng rng(8);
    bool mono_ok = true;
    for (int trial = 0; trial < 1000 && mono_ok; ++trial) {
        PathProfile q;
        q.n = 1.0 + rng.uniform() * 1e4;
        q.t = 1.0 + rng.uniform() * 100.0;
        q.nu = 0.1 + rng.uniform() * 10.0;
        q.c_f = rng.uniform() * 100.0;
        SharedCapacity hh{0.01 + rng.uniform() * 1000.0};
        const double base = risk::train_term(q, hh);
        PathProfile qn = q, qt = q, qv = q;
        qn.n *= 1.1 + rng.uniform() * 3.0;
        qt.t *= 1.1 + rng.uniform() * 3.0;
        qv.nu *= 1.1 + rng.uniform() * 3.0;
        mono_ok = risk::train_term(qn, hh) < base && risk::train_term(qt, hh) < base &&
                  risk::train_term(qv, hh) < base &&
                  std::fabs(risk::train_term(qt, {0.0}) - risk::train_term(q, {0.0})) < 1e-9;
    }
    c.expect(mono_ok, "monotonic in n, nu, t (C(H)>0) and t-constant at C(H)=0 over 1000 random profiles");
    return c.ok;
}

// ---------------------------------------------------------------------------
// criterion 9: byte-identical metrics CSVs for identical config + seed
// ---------------------------------------------------------------------------
bool crit9(Ctx& c) {
    const fs::path dir = fs::temp_directory_path() / "dualpath_acceptance_repro";
    auto run_once = [&]() {
        fs::remove_all(dir);
        fs::create_directories(dir);
        config::RunConfig cfg = config::default_config();
        cfg.seed = 11;
        cfg.out_dir = dir;
        cfg.synth_cfg.n_subjects = 2;
        cfg.synth_cfg.seconds_per_subject = 45.0;
        cfg.plan_pretrain_hs.epochs = 4;
        cfg.plan_pretrain_ecg.epochs = 4;
        cfg.plan_pretrain_disc.epochs = 8;
        cfg.plan_base.epochs = 3;
        cfg.plan_finetune_direct.epochs = 3;
        cfg.plan_finetune_indirect.epochs = 3;
        cfg.task_list = {tasks::TaskKind::sex, tasks::TaskKind::bp};
        config::finalize(cfg);
        std::ostringstream sink;
        cmd::cmd_prepare(cfg, sink);
        cmd::cmd_pretrain(cfg, sink);
        cmd::cmd_train_base(cfg, sink);
        cmd::cmd_finetune(cfg, proto::PathKind::direct, tasks::TaskKind::sex, sink);
        cmd::cmd_finetune(cfg, proto::PathKind::indirect, tasks::TaskKind::bp, sink);
        cmd::cmd_eval(cfg, sink);
        return read_file(dir / "eval_report.csv") + "\x1e" + read_file(dir / "training_log.csv");
    };
    const std::string first = run_once();
    const std::string second = run_once();
    fs::remove_all(dir);
    c.expect(first == second, "metrics CSVs byte-identical across two runs on one worker");
    c.note("compared eval_report.csv + training_log.csv (" + std::to_string(first.size()) + " bytes)");
    return c.ok;
}

struct Criterion {
    int id;
    const char* name;
    bool (*fn)(Ctx&);
};

const Criterion kCriteria[] = {
    {1, "loss correctness", crit1},
    {2, "shape closure", crit2},
    {3, "metric oracles", crit3},
    {4, "protocol end-to-end smoke", crit4},
    {5, "dual-path directional claim", crit5},
    {6, "three-phase structure", crit6},
    {7, "resolution trend", crit7},
    {8, "risk calculus", crit8},
    {9, "reproducibility", crit9},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (std::strcmp(argv[i], "--list") == 0) {
            for (const auto& cr : kCriteria) std::cout << cr.id << ": " << cr.name << "\n";
            return 0;
        }
    }
    bool all_ok = true;
    for (const auto& cr : kCriteria) {
        if (only != 0 && cr.id != only) continue;
        Ctx ctx;
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = cr.fn(ctx);
        } catch (const std::exception& e) {
            ctx.notes.push_back(std::string("exception: ") + e.what());
            ok = false;
        }
        const auto t1 = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(t1 - t0).count();
        std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << cr.id << " (" << cr.name << ") "
                  << fmt_double(secs) << "s\n";
        for (const auto& n : ctx.notes) std::cout << "       " << n << "\n";
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}
