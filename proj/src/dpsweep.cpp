#include "dualpath/dpsweep.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace dualpath::sweep {

using json = nlohmann::json;
namespace proto = dualpath::protocol;

static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------
const std::vector<losses::LossWeights>& SweepGrid::representative_points() {
    static const std::vector<losses::LossWeights> pts = {
        {700.0, 1.0}, {5.0, 1.0},    {1.0, 9.0},      {1.0, 60.0},    {1.0, 80.0},
        {1.0, 2000.0}, {1.0, 6000.0}, {1.0, 800000.0}, {1.0, 170000.0}};
    return pts;
}

std::vector<losses::LossWeights> SweepGrid::resolve() const {
    if (points_per_decade < 1) throw ConfigError("sweep grid: points_per_decade must be >= 1");
    std::vector<losses::LossWeights> out;
    auto add_leg = [&](double from, double to, bool vary_d) {
        const double l0 = std::log10(from);
        const double l1 = std::log10(to);
        const int steps = static_cast<int>(std::llround(std::fabs(l1 - l0) * points_per_decade));
        for (int i = 0; i <= steps; ++i) {
            const double v = std::pow(10.0, l0 + (l1 - l0) * (steps == 0 ? 0.0 : static_cast<double>(i) / steps));
            if (vary_d) out.push_back({v, 1.0});
            else out.push_back({1.0, v});
        }
    };
    add_leg(leg1_from, leg1_to, true);
    add_leg(leg2_from, leg2_to, false);
    if (include_representative)
        for (const auto& w : representative_points()) out.push_back(w);

    // dedup on the exact weight pair, then sort by perceptual-weight ratio
    std::sort(out.begin(), out.end(), [](const losses::LossWeights& a, const losses::LossWeights& b) {
        const double ra = a.lambda_p / a.lambda_d;
        const double rb = b.lambda_p / b.lambda_d;
        if (ra != rb) return ra < rb;
        if (a.lambda_d != b.lambda_d) return a.lambda_d > b.lambda_d;
        return a.lambda_p < b.lambda_p;
    });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const losses::LossWeights& a, const losses::LossWeights& b) {
                              return a.lambda_d == b.lambda_d && a.lambda_p == b.lambda_p;
                          }),
              out.end());
    return out;
}

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::positive_sum: return "positive_sum";
        case Phase::coopetitive: return "coopetitive";
        case Phase::negative_sum: return "negative_sum";
        case Phase::unassigned: return "unassigned";
    }
    return "?";
}

static Phase phase_from_name(const std::string& s) {
    for (Phase p : {Phase::positive_sum, Phase::coopetitive, Phase::negative_sum, Phase::unassigned})
        if (s == phase_name(p)) return p;
    throw InputError("unknown phase: " + s);
}

// ---------------------------------------------------------------------------
// FID
// ---------------------------------------------------------------------------
namespace {

struct GaussFit {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
};

GaussFit fit_gaussian(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size();
    const std::size_t d = pts.front().size();
    GaussFit g;
    g.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (const auto& p : pts)
        for (std::size_t j = 0; j < d; ++j) g.mu[static_cast<Eigen::Index>(j)] += p[j];
    g.mu /= static_cast<double>(n);
    g.sigma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& p : pts) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) v[static_cast<Eigen::Index>(j)] = p[j];
        v -= g.mu;
        g.sigma += v * v.transpose();
    }
    g.sigma /= static_cast<double>(n - 1);
    return g;
}

// symmetric PSD square root with eigenvalue clamping at 0
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// byte-wise total order on (mu, sigma) so the cross term is evaluated in a
// canonical operand order and fid(A,B) is bitwise equal to fid(B,A)
bool gauss_less(const GaussFit& a, const GaussFit& b) {
    const int c = std::memcmp(a.mu.data(), b.mu.data(), sizeof(double) * static_cast<std::size_t>(a.mu.size()));
    if (c != 0) return c < 0;
    return std::memcmp(a.sigma.data(), b.sigma.data(),
                       sizeof(double) * static_cast<std::size_t>(a.sigma.size())) < 0;
}

}  // namespace

double fid_from_embeddings(const std::vector<std::vector<double>>& real,
                           const std::vector<std::vector<double>>& fake, bool* eps_added) {
    if (real.size() < 2 || fake.size() < 2) throw InputError("fid: need at least 2 samples per set");
    const std::size_t d = real.front().size();
    for (const auto& p : real)
        if (p.size() != d) throw InputError("fid: ragged embeddings");
    for (const auto& p : fake)
        if (p.size() != d) throw InputError("fid: embedding dimension mismatch");

    GaussFit gr = fit_gaussian(real);
    GaussFit gf = fit_gaussian(fake);

    bool added = false;
    const double sing_tol = 1e-10;
    auto min_eig = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
        return es.eigenvalues().minCoeff();
    };
    if (min_eig(gr.sigma) < sing_tol || min_eig(gf.sigma) < sing_tol) {
        const double eps = 1e-6;
        gr.sigma += eps * Eigen::MatrixXd::Identity(gr.sigma.rows(), gr.sigma.cols());
        gf.sigma += eps * Eigen::MatrixXd::Identity(gf.sigma.rows(), gf.sigma.cols());
        added = true;
    }
    if (eps_added) *eps_added = added;

    const Eigen::VectorXd diff = gr.mu - gf.mu;
    const double mean_term = diff.squaredNorm();
    const double tr_sum = gr.sigma.trace() + gf.sigma.trace();

    const GaussFit& x = gauss_less(gr, gf) ? gr : gf;
    const GaussFit& y = gauss_less(gr, gf) ? gf : gr;
    const Eigen::MatrixXd sx = sqrtm_psd(x.sigma);
    const Eigen::MatrixXd cross = sqrtm_psd(sx * y.sigma * sx);
    return mean_term + tr_sum - 2.0 * cross.trace();
}

// ---------------------------------------------------------------------------
// precision / recall
// ---------------------------------------------------------------------------
namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// squared radius of the k-th nearest neighbor (excluding self) per point
std::vector<double> knn_radii_sq(const std::vector<std::vector<double>>& pts, int k) {
    const std::size_t n = pts.size();
    std::vector<double> radii(n, 0.0);
    std::vector<double> dists;
    for (std::size_t i = 0; i < n; ++i) {
        dists.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dists.push_back(sq_dist(pts[i], pts[j]));
        std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
        radii[i] = dists[static_cast<std::size_t>(k - 1)];
    }
    return radii;
}

double covered_fraction(const std::vector<std::vector<double>>& probes,
                        const std::vector<std::vector<double>>& manifold,
                        const std::vector<double>& radii_sq) {
    std::size_t hits = 0;
    for (const auto& p : probes) {
        for (std::size_t i = 0; i < manifold.size(); ++i) {
            if (sq_dist(p, manifold[i]) <= radii_sq[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(probes.size());
}

}  // namespace

PrecisionRecall precision_recall(const std::vector<std::vector<double>>& real,
                                 const std::vector<std::vector<double>>& fake, int k) {
    if (k < 1) throw InputError("precision_recall: k must be >= 1");
    if (real.size() < static_cast<std::size_t>(k + 1) || fake.size() < static_cast<std::size_t>(k + 1))
        throw InputError("precision_recall: each set needs at least k+1 points");
    PrecisionRecall out;
    const auto real_radii = knn_radii_sq(real, k);
    const auto fake_radii = knn_radii_sq(fake, k);
    out.precision = covered_fraction(fake, real, real_radii);
    out.recall = covered_fraction(real, fake, fake_radii);
    out.f1 = (out.precision == 0.0 || out.recall == 0.0)
                 ? 0.0
                 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

double fid_windows(nn::Discriminator& disc, const protocol::Windows& real_ws, const Tensor& fake_ecg,
                   bool* eps_added) {
    auto real_emb = proto::pooled_embeddings(disc, real_ws);
    auto fake_emb = proto::pooled_embeddings(disc, real_ws, &fake_ecg);
    return fid_from_embeddings(real_emb, fake_emb, eps_added);
}

// ---------------------------------------------------------------------------
// Phase detection
// ---------------------------------------------------------------------------
namespace {

std::vector<double> moving_average(const std::vector<double>& x, int window) {
    const int r = std::max(0, (window - 1) / 2);
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i >= static_cast<std::size_t>(r) ? i - static_cast<std::size_t>(r) : 0;
        const std::size_t hi = std::min(x.size() - 1, i + static_cast<std::size_t>(r));
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += x[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

// merge isolated single-point runs into their neighbors
void absorb_singletons(std::vector<Phase>& labels) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::size_t i = 0;
        while (i < labels.size()) {
            std::size_t j = i;
            while (j + 1 < labels.size() && labels[j + 1] == labels[i]) ++j;
            const std::size_t len = j - i + 1;
            if (len < 2 && (i > 0 || j + 1 < labels.size())) {
                labels[i] = i > 0 ? labels[i - 1] : labels[j + 1];
                changed = true;
                break;
            }
            i = j + 1;
        }
    }
}

}  // namespace

PhaseResult detect_phases(std::vector<SweepPoint>& points, int smooth_window) {
    PhaseResult res;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].converged && std::isfinite(points[i].mse) && std::isfinite(points[i].fid))
            res.order.push_back(i);
    if (res.order.size() < 5) throw InputError("detect_phases: need at least 5 converged points");

    std::stable_sort(res.order.begin(), res.order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].ratio() != points[b].ratio()) return points[a].ratio() < points[b].ratio();
        return points[a].weights.lambda_d > points[b].weights.lambda_d;
    });

    std::vector<double> mse, fid;
    for (std::size_t i : res.order) {
        mse.push_back(points[i].mse);
        fid.push_back(points[i].fid);
    }
    const auto mse_s = moving_average(mse, smooth_window);
    const auto fid_s = moving_average(fid, smooth_window);

    res.labels.assign(res.order.size(), Phase::unassigned);
    for (std::size_t i = 1; i < res.order.size(); ++i) {
        const double dm = mse_s[i] - mse_s[i - 1];
        const double df = fid_s[i] - fid_s[i - 1];
        if (dm <= 0.0 && df <= 0.0) res.labels[i] = Phase::positive_sum;
        else if (dm > 0.0 && df <= 0.0) res.labels[i] = Phase::coopetitive;
        else if (dm > 0.0 && df > 0.0) res.labels[i] = Phase::negative_sum;
        else res.labels[i] = Phase::unassigned;  // mse improving while fid degrades
    }
    res.labels[0] = res.labels.size() > 1 ? res.labels[1] : Phase::unassigned;
    absorb_singletons(res.labels);

    bool saw_pos = false;
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
        if (res.labels[i] == Phase::positive_sum) saw_pos = true;
        else if (saw_pos && res.turning1 < 0) res.turning1 = static_cast<int>(i);
        if (res.labels[i] == Phase::negative_sum && res.turning2 < 0) res.turning2 = static_cast<int>(i);
    }

    int regimes = 0;
    for (Phase p : {Phase::positive_sum, Phase::coopetitive, Phase::negative_sum})
        if (std::find(res.labels.begin(), res.labels.end(), p) != res.labels.end()) ++regimes;
    res.partial = regimes < 3;

    for (std::size_t i = 0; i < res.order.size(); ++i) points[res.order[i]].phase = res.labels[i];
    return res;
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------
namespace {

std::vector<std::vector<double>> embed_generated(nn::Discriminator& disc, nn::Autoencoder& gen,
                                                 const protocol::Windows& test) {
    std::vector<std::vector<double>> out;
    std::vector<std::size_t> all(test.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    constexpr std::size_t kBatch = 32;
    for (std::size_t i = 0; i < all.size(); i += kBatch) {
        std::vector<std::size_t> batch(all.begin() + static_cast<std::ptrdiff_t>(i),
                                       all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), i + kBatch)));
        Tensor hs = proto::batch_signal(test, batch, proto::Channel::hs);
        Tensor shat = gen.forward(hs);
        auto emb = proto::pooled_embeddings(disc, test, &shat);
        for (auto& e : emb) out.push_back(std::move(e));
    }
    return out;
}

std::string metric_key(tasks::TaskKind t) { return tasks::task_name(t); }

}  // namespace

std::vector<SweepPoint> run_sweep(const std::vector<losses::LossWeights>& grid_points,
                                  const nn::BlockGraph& graph, const nn::Checkpoint& ck_hs,
                                  const nn::Checkpoint& ck_ecg, const nn::Checkpoint& ck_disc,
                                  const protocol::Windows& train, const protocol::Windows& test,
                                  const SweepSettings& settings) {
    if (grid_points.empty()) throw ConfigError("run_sweep: empty grid");
    if (test.empty()) throw InputError("run_sweep: empty test split");

    nn::Discriminator master_disc = proto::make_discriminator(graph, ck_disc);
    if (!master_disc.pretrained) throw StageOrderError("run_sweep: discriminator checkpoint is not pretrained");
    const auto real_emb = proto::pooled_embeddings(master_disc, test);

    // downstream heads are trained once on real ECG with the frozen trunk;
    // only the evaluation-time generator differs between sweep points
    std::vector<std::unique_ptr<proto::IndirectModel>> heads;
    std::mutex heads_mutex;
    for (tasks::TaskKind t : settings.downstream_tasks) {
        auto m = std::make_unique<proto::IndirectModel>(graph, t);
        Rng init(derive_seed(settings.downstream_plan.seed, std::string("sweep.head.") + tasks::task_name(t)));
        m->init(init);
        nn::NamedParams np;
        m->collect(np);
        nn::checkpoint_apply(ck_disc, np, "trunk");
        proto::StagePlan plan = settings.downstream_plan;
        plan.stage = proto::Stage::finetune_indirect;
        if (std::find(plan.frozen_blocks.begin(), plan.frozen_blocks.end(), "trunk") == plan.frozen_blocks.end())
            plan.frozen_blocks.push_back("trunk");
        proto::train_indirect(*m, train, plan, proto::IndirectSource::real_ecg, nullptr);
        heads.push_back(std::move(m));
    }

    std::vector<SweepPoint> results(grid_points.size());
    std::atomic<std::size_t> next{0};
    const int workers = std::max(1, settings.workers);

    auto worker_fn = [&]() {
        // sweep points are farmed across workers; kernels stay serial inside
        // a worker so results do not depend on the worker count
        kernels::set_parallel(workers == 1);
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= grid_points.size()) break;
            SweepPoint pt;
            pt.weights = grid_points[i];
            pt.mse = pt.fid = pt.precision = pt.recall = pt.f1 = kNaN;
            try {
                nn::Autoencoder gen = proto::make_generator(graph, ck_hs, ck_ecg);
                nn::Discriminator disc = master_disc;
                proto::StagePlan plan = settings.base_plan;
                plan.stage = proto::Stage::base_task;
                plan.weights = pt.weights;
                proto::train_base_generator(gen, disc, train, plan, settings.perceptual_multilayer);

                pt.mse = proto::eval_generation_mse(gen, test);
                auto fake_emb = embed_generated(disc, gen, test);
                pt.fid = fid_from_embeddings(real_emb, fake_emb, &pt.fid_eps_added);
                const auto pr = precision_recall(real_emb, fake_emb, settings.knn_k);
                pt.precision = pr.precision;
                pt.recall = pr.recall;
                pt.f1 = pr.f1;
                pt.converged = std::isfinite(pt.mse) && std::isfinite(pt.fid);

                if (pt.converged && !heads.empty()) {
                    std::lock_guard<std::mutex> lock(heads_mutex);
                    for (auto& head : heads) {
                        auto metric = proto::eval_indirect(*head, test, &gen, true);
                        pt.downstream[metric_key(head->task())] = metric.value;
                    }
                }
            } catch (const DivergenceError&) {
                pt.converged = false;
            }
            results[i] = std::move(pt);
        }
    };

    if (workers == 1) {
        worker_fn();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
        for (auto& th : pool) th.join();
    }
    return results;
}

// ---------------------------------------------------------------------------
// Resolution study
// ---------------------------------------------------------------------------
std::vector<ScaleSummary> resolution_study(const std::vector<int>& scale_dens, const SweepGrid& grid,
                                           nn::BlockGraph base_graph, const protocol::Windows& train,
                                           const protocol::Windows& test, const ResolutionSettings& settings) {
    std::vector<ScaleSummary> out;
    const auto grid_points = grid.resolve();
    for (int den : scale_dens) {
        nn::BlockGraph g = base_graph;
        g.scale_den = den;
        g.validate();

        ScaleSummary summary;
        summary.scale_den = den;
        {
            nn::Autoencoder probe(g);
            nn::NamedParams np;
            probe.collect("ae", np);
            summary.generator_params = nn::params_count(np);
        }
        auto pre = proto::pretrain_all(g, train, settings.pre_hs, settings.pre_ecg, settings.pre_disc);
        summary.points = run_sweep(grid_points, g, pre.hs, pre.ecg, pre.disc, train, test, settings.sweep);

        summary.min_mse = kNaN;
        summary.min_fid = kNaN;
        for (const auto& pt : summary.points) {
            if (!pt.converged) continue;
            if (!std::isfinite(summary.min_mse) || pt.mse < summary.min_mse) summary.min_mse = pt.mse;
            if (!std::isfinite(summary.min_fid) || pt.fid < summary.min_fid) summary.min_fid = pt.fid;
        }
        try {
            summary.phases = detect_phases(summary.points, settings.sweep.smooth_window);
        } catch (const InputError&) {
            summary.phases.partial = true;
        }
        out.push_back(std::move(summary));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Downstream optimum
// ---------------------------------------------------------------------------
std::vector<OptimumEntry> locate_downstream_optimum(const std::vector<SweepPoint>& points,
                                                    const PhaseResult& phases) {
    std::vector<std::string> task_names;
    for (std::size_t i : phases.order)
        for (const auto& [name, _] : points[i].downstream)
            if (std::find(task_names.begin(), task_names.end(), name) == task_names.end())
                task_names.push_back(name);
    std::sort(task_names.begin(), task_names.end());

    std::vector<OptimumEntry> out;
    for (const auto& name : task_names) {
        OptimumEntry e;
        e.task = name;
        const bool minimize = name == "bp";
        bool found = false;
        for (std::size_t pos = 0; pos < phases.order.size(); ++pos) {
            const auto& pt = points[phases.order[pos]];
            auto it = pt.downstream.find(name);
            if (it == pt.downstream.end() || !std::isfinite(it->second)) continue;
            const bool better = !found || (minimize ? it->second < e.value : it->second > e.value);
            if (better) {
                e.value = it->second;
                e.point_index = static_cast<int>(pos);
                found = true;
            }
        }
        if (!found) {
            e.note = "skipped: metric missing";
            out.push_back(e);
            continue;
        }
        e.phase = phases.labels[static_cast<std::size_t>(e.point_index)];
        for (int d = -1; d <= 1 && !e.near_coopetitive; ++d) {
            const int j = e.point_index + d;
            if (j >= 0 && j < static_cast<int>(phases.labels.size()) &&
                phases.labels[static_cast<std::size_t>(j)] == Phase::coopetitive)
                e.near_coopetitive = true;
        }
        out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV / JSON artifacts
// ---------------------------------------------------------------------------
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points,
                     const std::string& config_hash, std::uint64_t seed) {
    std::vector<std::string> task_names;
    for (const auto& pt : points)
        for (const auto& [name, _] : pt.downstream)
            if (std::find(task_names.begin(), task_names.end(), name) == task_names.end())
                task_names.push_back(name);
    std::sort(task_names.begin(), task_names.end());

    std::string out;
    out += "# config_hash=" + config_hash + "\n";
    out += "# seed=" + std::to_string(seed) + "\n";
    out += "lambda_d,lambda_p,ratio,converged,mse,fid,precision,recall,f1,phase";
    for (const auto& t : task_names) out += ",downstream_" + t;
    out += "\n";
    for (const auto& pt : points) {
        out += fmt_double(pt.weights.lambda_d) + "," + fmt_double(pt.weights.lambda_p) + "," +
               fmt_double(pt.ratio()) + "," + (pt.converged ? "1" : "0") + "," + fmt_double(pt.mse) + "," +
               fmt_double(pt.fid) + "," + fmt_double(pt.precision) + "," + fmt_double(pt.recall) + "," +
               fmt_double(pt.f1) + "," + phase_name(pt.phase);
        for (const auto& t : task_names) {
            auto it = pt.downstream.find(t);
            out += ",";
            out += it == pt.downstream.end() ? "" : fmt_double(it->second);
        }
        out += "\n";
    }
    atomic_write_file(path, out);
}

std::vector<SweepPoint> read_sweep_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<std::string> cols;
    std::vector<SweepPoint> out;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cols.empty()) {
            cols = cells;
            continue;
        }
        if (cells.size() != cols.size()) throw InputError("sweep csv: ragged row in " + path.string());
        SweepPoint pt;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const std::string& key = cols[c];
            const std::string& val = cells[c];
            if (key == "lambda_d") pt.weights.lambda_d = std::stod(val);
            else if (key == "lambda_p") pt.weights.lambda_p = std::stod(val);
            else if (key == "converged") pt.converged = val == "1";
            else if (key == "mse") pt.mse = std::stod(val);
            else if (key == "fid") pt.fid = std::stod(val);
            else if (key == "precision") pt.precision = std::stod(val);
            else if (key == "recall") pt.recall = std::stod(val);
            else if (key == "f1") pt.f1 = std::stod(val);
            else if (key == "phase") pt.phase = phase_from_name(val);
            else if (key.rfind("downstream_", 0) == 0 && !val.empty())
                pt.downstream[key.substr(11)] = std::stod(val);
        }
        out.push_back(std::move(pt));
    }
    return out;
}

void write_phases_json(const std::filesystem::path& path, const std::vector<SweepPoint>& points,
                       const PhaseResult& phases, const std::string& config_hash, std::uint64_t seed) {
    json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["partial"] = phases.partial;
    json pts = json::array();
    for (std::size_t pos = 0; pos < phases.order.size(); ++pos) {
        const auto& pt = points[phases.order[pos]];
        pts.push_back({{"lambda_d", pt.weights.lambda_d},
                       {"lambda_p", pt.weights.lambda_p},
                       {"ratio", pt.ratio()},
                       {"phase", phase_name(phases.labels[pos])}});
    }
    j["points"] = pts;
    auto tp = [&](int idx) -> json {
        if (idx < 0) return nullptr;
        const auto& pt = points[phases.order[static_cast<std::size_t>(idx)]];
        return {{"index", idx}, {"ratio", pt.ratio()}, {"lambda_d", pt.weights.lambda_d},
                {"lambda_p", pt.weights.lambda_p}};
    };
    j["turning_points"] = {tp(phases.turning1), tp(phases.turning2)};
    atomic_write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// SVG scatter plots
// ---------------------------------------------------------------------------
namespace {

constexpr int kW = 640, kH = 480, kML = 80, kMR = 24, kMT = 44, kMB = 56;
const char* kPalette[] = {"#1f6fb4", "#d1495b", "#3f8f4d", "#8a5fbf", "#c78a2d", "#4a4a4a"};

struct AxisMap {
    double lo = 0.0, hi = 1.0;
    bool log = false;
    double to01(double v) const {
        if (log) return (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
        return (v - lo) / (hi - lo);
    }
};

AxisMap fit_axis(std::vector<double> vals, bool want_log) {
    AxisMap ax;
    std::vector<double> ok;
    for (double v : vals)
        if (std::isfinite(v) && (!want_log || v > 0.0)) ok.push_back(v);
    if (ok.empty()) {
        ax.lo = want_log ? 0.1 : 0.0;
        ax.hi = 1.0;
        ax.log = want_log;
        return ax;
    }
    ax.log = want_log;
    ax.lo = *std::min_element(ok.begin(), ok.end());
    ax.hi = *std::max_element(ok.begin(), ok.end());
    if (ax.log) {
        ax.lo = std::pow(10.0, std::floor(std::log10(ax.lo) * 2.0) / 2.0 - 0.25);
        ax.hi = std::pow(10.0, std::ceil(std::log10(ax.hi) * 2.0) / 2.0 + 0.25);
    } else {
        const double pad = 0.06 * std::max(1e-12, ax.hi - ax.lo);
        ax.lo -= pad;
        ax.hi += pad;
    }
    if (ax.lo == ax.hi) {
        ax.lo -= 0.5;
        ax.hi += 0.5;
    }
    return ax;
}

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

}  // namespace

void write_scatter_svg(const std::filesystem::path& path, const std::string& title,
                       const std::string& xlabel, const std::string& ylabel,
                       const std::vector<ScatterSeries>& series, bool log_x, bool log_y) {
    std::vector<double> xs, ys;
    for (const auto& s : series)
        for (const auto& [x, y] : s.pts) {
            xs.push_back(x);
            ys.push_back(y);
        }
    const AxisMap ax = fit_axis(xs, log_x);
    const AxisMap ay = fit_axis(ys, log_y);

    auto px = [&](double v) { return kML + ax.to01(v) * (kW - kML - kMR); };
    auto py = [&](double v) { return kH - kMB - ay.to01(v) * (kH - kMT - kMB); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kW) + "\" height=\"" +
           std::to_string(kH) + "\" viewBox=\"0 0 " + std::to_string(kW) + " " + std::to_string(kH) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(kW / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" "
           "font-family=\"sans-serif\">" + svg_escape(title) + "</text>\n";

    // axes
    svg += "<line x1=\"" + std::to_string(kML) + "\" y1=\"" + std::to_string(kH - kMB) + "\" x2=\"" +
           std::to_string(kW - kMR) + "\" y2=\"" + std::to_string(kH - kMB) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + std::to_string(kML) + "\" y1=\"" + std::to_string(kMT) + "\" x2=\"" +
           std::to_string(kML) + "\" y2=\"" + std::to_string(kH - kMB) + "\" stroke=\"black\"/>\n";

    auto ticks_for = [](const AxisMap& a) {
        std::vector<double> out;
        if (a.log) {
            for (int e = static_cast<int>(std::floor(std::log10(a.lo))); e <= static_cast<int>(std::ceil(std::log10(a.hi))); ++e) {
                const double v = std::pow(10.0, e);
                if (v >= a.lo && v <= a.hi) out.push_back(v);
            }
            if (out.empty()) out = {a.lo, a.hi};
        } else {
            for (int i = 0; i <= 4; ++i) out.push_back(a.lo + (a.hi - a.lo) * i / 4.0);
        }
        return out;
    };

    for (double t : ticks_for(ax)) {
        const double x = px(t);
        svg += "<line x1=\"" + fmt_double(x) + "\" y1=\"" + std::to_string(kH - kMB) + "\" x2=\"" + fmt_double(x) +
               "\" y2=\"" + std::to_string(kH - kMB + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt_double(x) + "\" y=\"" + std::to_string(kH - kMB + 18) +
               "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">" + fmt_double(t) + "</text>\n";
    }
    for (double t : ticks_for(ay)) {
        const double y = py(t);
        svg += "<line x1=\"" + std::to_string(kML - 5) + "\" y1=\"" + fmt_double(y) + "\" x2=\"" +
               std::to_string(kML) + "\" y2=\"" + fmt_double(y) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + std::to_string(kML - 8) + "\" y=\"" + fmt_double(y + 3) +
               "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">" + fmt_double(t) + "</text>\n";
    }
    svg += "<text x=\"" + std::to_string((kML + kW - kMR) / 2) + "\" y=\"" + std::to_string(kH - 14) +
           "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" + svg_escape(xlabel) +
           (ax.log ? " (log)" : "") + "</text>\n";
    svg += "<text x=\"18\" y=\"" + std::to_string((kMT + kH - kMB) / 2) +
           "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 18 " +
           std::to_string((kMT + kH - kMB) / 2) + ")\">" + svg_escape(ylabel) + (ay.log ? " (log)" : "") +
           "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % 6];
        for (std::size_t i = 0; i < series[s].pts.size(); ++i) {
            const auto [x, y] = series[s].pts[i];
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if ((ax.log && x <= 0.0) || (ay.log && y <= 0.0)) continue;
            svg += "<circle cx=\"" + fmt_double(px(x)) + "\" cy=\"" + fmt_double(py(y)) +
                   "\" r=\"4\" fill=\"" + color + "\" fill-opacity=\"0.8\"/>\n";
            if (i < series[s].labels.size() && !series[s].labels[i].empty())
                svg += "<text x=\"" + fmt_double(px(x) + 6) + "\" y=\"" + fmt_double(py(y) - 5) +
                       "\" font-size=\"10\" font-family=\"sans-serif\">" + svg_escape(series[s].labels[i]) +
                       "</text>\n";
        }
        if (series.size() > 1) {
            const int ly = kMT + 14 + static_cast<int>(s) * 16;
            svg += "<circle cx=\"" + std::to_string(kW - kMR - 120) + "\" cy=\"" + std::to_string(ly - 4) +
                   "\" r=\"4\" fill=\"" + std::string(color) + "\"/>\n";
            svg += "<text x=\"" + std::to_string(kW - kMR - 110) + "\" y=\"" + std::to_string(ly) +
                   "\" font-size=\"11\" font-family=\"sans-serif\">" + svg_escape(series[s].name) + "</text>\n";
        }
    }
    svg += "</svg>\n";
    atomic_write_file(path, svg);
}

void write_leg_plots(const std::filesystem::path& dir, const std::vector<SweepPoint>& points) {
    static const char* kLetters = "ABCDEFGHI";
    const auto& reps = SweepGrid::representative_points();
    auto rep_letter = [&](const losses::LossWeights& w) -> std::string {
        for (std::size_t i = 0; i < reps.size(); ++i)
            if (reps[i].lambda_d == w.lambda_d && reps[i].lambda_p == w.lambda_p)
                return std::string(1, kLetters[i]);
        return "";
    };
    struct Metric {
        const char* name;
        double SweepPoint::* field;
    };
    const Metric metrics[] = {{"fid", &SweepPoint::fid},
                              {"precision", &SweepPoint::precision},
                              {"f1", &SweepPoint::f1},
                              {"recall", &SweepPoint::recall}};
    for (int leg = 1; leg <= 2; ++leg) {
        for (const auto& m : metrics) {
            ScatterSeries series;
            series.name = std::string("1-") + m.name;
            for (const auto& pt : points) {
                if (!pt.converged) continue;
                const bool in_leg = leg == 1 ? pt.weights.lambda_p == 1.0 : pt.weights.lambda_d == 1.0;
                if (!in_leg) continue;
                series.pts.emplace_back(pt.mse, 1.0 - pt.*(m.field));
                series.labels.push_back(rep_letter(pt.weights));
            }
            const std::string fname = "sweep_leg" + std::to_string(leg) + "_" + m.name + ".svg";
            write_scatter_svg(dir / fname,
                              "distortion vs 1-" + std::string(m.name) + " (leg " + std::to_string(leg) + ")",
                              "mse", "1-" + std::string(m.name), {series}, true, true);
        }
    }
}

}  // namespace dualpath::sweep
