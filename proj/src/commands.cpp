#include "dualpath/commands.hpp"

#include "dualpath/dpsweep.hpp"
#include "dualpath/riskcalc.hpp"
#include "dualpath/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace dualpath::cmd {

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace proto = dualpath::protocol;
using config::RunConfig;

namespace {

const char* kSegClassNames[6] = {"pr_interval", "qrs_interval", "st_interval",
                                 "rr_interval", "pr_segment", "st_segment"};

fs::path ckpt_path(const RunConfig& cfg, const std::string& name) { return cfg.out_dir / (name + ".ckpt"); }

void append_training_log(const RunConfig& cfg, const std::string& stage,
                         const std::vector<proto::EpochLog>& curve) {
    const fs::path path = cfg.out_dir / "training_log.csv";
    std::string body;
    if (fs::exists(path)) body = read_file(path);
    else body = "stage,epoch,loss,l_d,l_p,val_loss\n";
    for (const auto& e : curve)
        body += stage + "," + std::to_string(e.epoch) + "," + fmt_double(e.loss) + "," + fmt_double(e.l_d) +
                "," + fmt_double(e.l_p) + "," + fmt_double(e.val_loss) + "\n";
    atomic_write_file(path, body);
}

std::map<std::string, std::string> hex_hashes(const std::map<std::string, std::uint64_t>& in) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : in) out[k] = hash_hex(v);
    return out;
}

proto::StageRecord make_record(const std::string& stage, const std::string& ckpt,
                               const proto::TrainResult& res) {
    proto::StageRecord rec;
    rec.stage = stage;
    rec.checkpoint = ckpt;
    rec.curve = res.curve;
    rec.hashes_before = hex_hashes(res.hashes_before);
    rec.hashes_after = hex_hashes(res.hashes_after);
    return rec;
}

nn::Checkpoint load_ckpt_required(const RunConfig& cfg, const std::string& name, const std::string& needed_by) {
    const fs::path p = ckpt_path(cfg, name);
    if (!fs::exists(p))
        throw StageOrderError(needed_by + ": missing checkpoint " + p.string() + " (run the earlier stage first)");
    return nn::load_checkpoint(p);
}

nn::Autoencoder load_generator(const RunConfig& cfg, const std::string& needed_by) {
    nn::Checkpoint ck = load_ckpt_required(cfg, "base", needed_by);
    nn::Autoencoder gen(cfg.graph);
    nn::NamedParams np;
    gen.collect("ae", np);
    nn::checkpoint_apply(ck, np);
    return gen;
}

}  // namespace

fs::path data_manifest_path(const RunConfig& cfg) { return cfg.out_dir / "data_manifest.json"; }

std::string data_hash(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["source"] = cfg.source == config::DataSource::synth ? "synth" : "ingest";
    j["synth"] = {{"n_subjects", cfg.synth_cfg.n_subjects},
                  {"seconds_per_subject", cfg.synth_cfg.seconds_per_subject},
                  {"heart_rate_min_hz", cfg.synth_cfg.heart_rate_min_hz},
                  {"heart_rate_max_hz", cfg.synth_cfg.heart_rate_max_hz},
                  {"hr_variability", cfg.synth_cfg.hr_variability},
                  {"noise_std", cfg.synth_cfg.noise_std},
                  {"domain_shift", synth::domain_shift_name(cfg.synth_cfg.domain_shift)}};
    j["ingest_dir"] = cfg.ingest_dir.string();
    j["filter"] = {{"hs_low", cfg.filter.hs_low},     {"hs_high", cfg.filter.hs_high},
                   {"ecg_low", cfg.filter.ecg_low},   {"ecg_high", cfg.filter.ecg_high},
                   {"bp_low", cfg.filter.bp_low},     {"bp_high", cfg.filter.bp_high}};
    return hash_hex(fnv1a64(j.dump()));
}

proto::Windows load_split(const RunConfig& cfg, const std::string& split) {
    const fs::path mp = data_manifest_path(cfg);
    if (!fs::exists(mp)) throw InputError("no prepared data at " + mp.string() + " (run prepare first)");
    json m = json::parse(read_file(mp));
    const std::string file = m.at("splits").at(split).at("file").get<std::string>();
    return signalio::read_shard(cfg.out_dir / file);
}

proto::RunManifest load_or_create_manifest(const RunConfig& cfg) {
    const fs::path p = cfg.out_dir / "manifest.json";
    if (fs::exists(p)) return proto::RunManifest::load(p);
    proto::RunManifest m;
    m.config_hash = cfg.config_hash;
    m.seed = cfg.seed;
    return m;
}

void require_stage(const proto::RunManifest& m, const RunConfig& cfg, const std::string& stage) {
    if (!m.has_stage(stage))
        throw StageOrderError("stage \"" + stage + "\" has not run in " + cfg.out_dir.string() +
                              " (stage ordering violated)");
    const proto::StageRecord* rec = m.find_stage(stage);
    if (!rec->checkpoint.empty() && !fs::exists(cfg.out_dir / rec->checkpoint))
        throw StageOrderError("stage \"" + stage + "\": missing checkpoint " +
                              (cfg.out_dir / rec->checkpoint).string());
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------
int cmd_prepare(const RunConfig& cfg, std::ostream& out) {
    const fs::path mp = data_manifest_path(cfg);
    const std::string dhash = data_hash(cfg);
    if (fs::exists(mp)) {
        json m = json::parse(read_file(mp));
        if (m.value("data_hash", "") == dhash) {
            out << "prepare: up to date (data_hash " << dhash << ")\n";
            return 0;
        }
    }

    std::vector<signalio::RawRecord> raw;
    std::vector<synth::FiducialTrack> tracks;  // parallel to raw for synth
    std::vector<std::string> diagnostics;

    if (cfg.source == config::DataSource::synth) {
        auto gen = synth::generate(cfg.synth_cfg);
        for (auto& g : gen) {
            raw.push_back(std::move(g.record));
            tracks.push_back(std::move(g.track));
        }
    } else {
        std::vector<fs::path> sidecars;
        if (!fs::exists(cfg.ingest_dir)) throw InputError("ingest dir not found: " + cfg.ingest_dir.string());
        for (const auto& e : fs::directory_iterator(cfg.ingest_dir))
            if (e.path().extension() == ".json") sidecars.push_back(e.path());
        std::sort(sidecars.begin(), sidecars.end());
        if (sidecars.empty()) throw InputError("no record sidecars in " + cfg.ingest_dir.string());
        bool failed = false;
        for (const auto& sj : sidecars) {
            fs::path base = sj;
            base.replace_extension();
            try {
                raw.push_back(signalio::read_record(base));
            } catch (const InputError& e) {
                diagnostics.push_back(e.what());
                out << "prepare: " << e.what() << "\n";
                failed = true;
            }
        }
        if (failed) throw InputError("prepare: malformed input records (see diagnostics above)");
    }

    // preprocess + per-record fiducials
    std::vector<signalio::RawRecord> pre;
    std::vector<synth::FiducialTrack> pre_tracks;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        signalio::RawRecord p = signalio::preprocess(raw[i], cfg.filter);
        if (cfg.source == config::DataSource::synth) {
            pre_tracks.push_back(tracks[i]);  // generated at 250 Hz; zero-phase filtering keeps positions
        } else {
            pre_tracks.push_back(synth::delineate_ecg(p.ecg));
        }
        pre.push_back(std::move(p));
    }

    auto split = signalio::split_by_ratio(pre);
    for (const auto& d : split.diagnostics) {
        diagnostics.push_back(d);
        out << "prepare: " << d << "\n";
    }

    auto build_windows = [&](const std::vector<signalio::SplitPart>& parts, bool train_mode,
                             json& part_meta) {
        proto::Windows all;
        for (const auto& part : parts) {
            const synth::FiducialTrack& track = pre_tracks[static_cast<std::size_t>(part.record_id)];
            signalio::LabelContext ctx;
            ctx.bmi_class = tasks::bmi_class(part.rec.attributes.bmi);
            ctx.age_class = tasks::age_class(part.rec.attributes.age);
            ctx.base_offset = part.base_offset;
            ctx.record_id = part.record_id;
            ctx.mask_fn = [&track](std::size_t off, std::uint8_t* mask) {
                return synth::labels_from_fiducials(track, off, signalio::kWindowLen, mask);
            };
            std::vector<std::string> warn;
            auto ws = train_mode ? signalio::window_train(part.rec, ctx, &warn)
                                 : signalio::window_test(part.rec, ctx, &warn);
            const std::size_t expect = train_mode ? signalio::train_window_count(part.rec.length())
                                                  : signalio::test_window_count(part.rec.length());
            if (ws.size() != expect)
                throw std::logic_error("window count mismatch against the stride arithmetic");
            for (const auto& w : warn) {
                diagnostics.push_back(w);
                out << "prepare: " << w << "\n";
            }
            part_meta.push_back({{"record_id", part.record_id},
                                 {"subject_id", part.rec.subject_id},
                                 {"length", part.rec.length()},
                                 {"windows", ws.size()}});
            for (auto& w : ws) all.push_back(std::move(w));
        }
        return all;
    };

    json train_meta = json::array(), test_meta = json::array();
    proto::Windows train_ws = build_windows(split.train, true, train_meta);
    proto::Windows test_ws = build_windows(split.test, false, test_meta);
    if (train_ws.empty() || test_ws.empty())
        throw InputError("prepare: corpus too short, a split produced zero windows");

    signalio::write_shard(cfg.out_dir / "train.shard", train_ws);
    signalio::write_shard(cfg.out_dir / "test.shard", test_ws);

    json m;
    m["config_hash"] = cfg.config_hash;
    m["data_hash"] = dhash;
    m["seed"] = cfg.seed;
    m["records"] = pre.size();
    m["splits"]["train"] = {{"file", "train.shard"}, {"count", train_ws.size()}, {"parts", train_meta}};
    m["splits"]["test"] = {{"file", "test.shard"}, {"count", test_ws.size()}, {"parts", test_meta}};
    m["diagnostics"] = diagnostics;
    atomic_write_file(mp, m.dump(2) + "\n");

    out << "prepare: " << pre.size() << " records -> " << train_ws.size() << " train / " << test_ws.size()
        << " test windows\n";
    return 0;
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------
int cmd_pretrain(const RunConfig& cfg, std::ostream& out) {
    proto::Windows train = load_split(cfg, "train");
    proto::RunManifest manifest = load_or_create_manifest(cfg);

    auto pre = proto::pretrain_all(cfg.graph, train, cfg.plan_pretrain_hs, cfg.plan_pretrain_ecg,
                                   cfg.plan_pretrain_disc);

    auto save = [&](const char* name, nn::Checkpoint& ck, const proto::TrainResult& res) {
        ck.meta["config_hash"] = cfg.config_hash;
        ck.meta["seed"] = std::to_string(cfg.seed);
        nn::save_checkpoint(ckpt_path(cfg, name), ck);
        manifest.append(make_record(name, std::string(name) + ".ckpt", res));
        append_training_log(cfg, name, res.curve);
        out << name << ": final loss " << fmt_double(res.curve.back().loss) << " after "
            << res.curve.size() << " epochs\n";
    };
    save("pretrain_hs", pre.hs, pre.hs_result);
    save("pretrain_ecg", pre.ecg, pre.ecg_result);
    save("pretrain_disc", pre.disc, pre.disc_result);

    manifest.save(cfg.out_dir / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// train-base
// ---------------------------------------------------------------------------
int cmd_train_base(const RunConfig& cfg, std::ostream& out) {
    proto::RunManifest manifest = load_or_create_manifest(cfg);
    require_stage(manifest, cfg, "pretrain_hs");
    require_stage(manifest, cfg, "pretrain_ecg");
    require_stage(manifest, cfg, "pretrain_disc");

    proto::Windows train = load_split(cfg, "train");
    nn::Checkpoint ck_hs = load_ckpt_required(cfg, "pretrain_hs", "train-base");
    nn::Checkpoint ck_ecg = load_ckpt_required(cfg, "pretrain_ecg", "train-base");
    nn::Checkpoint ck_disc = load_ckpt_required(cfg, "pretrain_disc", "train-base");

    nn::Autoencoder gen = proto::make_generator(cfg.graph, ck_hs, ck_ecg);
    nn::Discriminator disc = proto::make_discriminator(cfg.graph, ck_disc);

    auto res = proto::train_base_generator(gen, disc, train, cfg.plan_base, cfg.graph.perceptual_multilayer);

    nn::Checkpoint ck;
    ck.graph_json = cfg.graph.to_json();
    ck.meta["stage"] = "base_task";
    ck.meta["lambda_d"] = fmt_double(cfg.plan_base.weights.lambda_d);
    ck.meta["lambda_p"] = fmt_double(cfg.plan_base.weights.lambda_p);
    ck.meta["config_hash"] = cfg.config_hash;
    nn::NamedParams np;
    gen.collect("ae", np);
    nn::checkpoint_store(ck, np);
    nn::save_checkpoint(ckpt_path(cfg, "base"), ck);

    proto::StageRecord rec = make_record("base_task", "base.ckpt", res);
    rec.weights = cfg.plan_base.weights;
    manifest.append(std::move(rec));
    manifest.save(cfg.out_dir / "manifest.json");
    append_training_log(cfg, "base_task", res.curve);

    const auto& last = res.curve.back();
    out << "base_task: weights (" << fmt_double(cfg.plan_base.weights.lambda_d) << ", "
        << fmt_double(cfg.plan_base.weights.lambda_p) << ") final L=" << fmt_double(last.loss)
        << " L_d=" << fmt_double(last.l_d) << " L_p=" << fmt_double(last.l_p) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------
int cmd_finetune(const RunConfig& cfg, proto::PathKind path, tasks::TaskKind task, std::ostream& out) {
    proto::RunManifest manifest = load_or_create_manifest(cfg);
    proto::Windows train = load_split(cfg, "train");
    const std::string task_str = tasks::task_name(task);
    const std::string ckpt_name = std::string("finetune_") + proto::path_name(path) + "_" + task_str;

    proto::TrainResult res;
    nn::Checkpoint ck;
    ck.graph_json = cfg.graph.to_json();
    ck.meta["task"] = task_str;
    ck.meta["path"] = proto::path_name(path);
    ck.meta["config_hash"] = cfg.config_hash;

    if (path == proto::PathKind::direct) {
        require_stage(manifest, cfg, "pretrain_hs");
        nn::Checkpoint ck_hs = load_ckpt_required(cfg, "pretrain_hs", "finetune --path direct");
        proto::DirectModel model(cfg.graph, task);
        Rng init(derive_seed(cfg.plan_finetune_direct.seed, "init." + task_str));
        model.init(init);
        nn::NamedParams np;
        model.collect(np);
        nn::checkpoint_apply_renamed(ck_hs, np, "ae.enc", "enc");
        nn::checkpoint_apply_renamed(ck_hs, np, "ae.fuse", "fuse");
        proto::StagePlan plan = cfg.plan_finetune_direct;
        if (cfg.freeze_direct_encoder) {
            plan.frozen_blocks.push_back("enc");
            plan.frozen_blocks.push_back("fuse");
        }
        res = proto::train_direct(model, train, plan);
        nn::checkpoint_store(ck, np);
    } else {
        require_stage(manifest, cfg, "pretrain_disc");
        nn::Checkpoint ck_disc = load_ckpt_required(cfg, "pretrain_disc", "finetune --path indirect");
        nn::Autoencoder gen(cfg.graph);
        nn::Autoencoder* gen_ptr = nullptr;
        if (cfg.indirect_source == proto::IndirectSource::generated_ecg) {
            require_stage(manifest, cfg, "base_task");
            gen = load_generator(cfg, "finetune --path indirect --source generated_ecg");
            gen_ptr = &gen;
        }
        proto::IndirectModel model(cfg.graph, task);
        Rng init(derive_seed(cfg.plan_finetune_indirect.seed, "init." + task_str));
        model.init(init);
        nn::NamedParams np;
        model.collect(np);
        nn::checkpoint_apply_renamed(ck_disc, np, "disc.trunk", "trunk");
        proto::StagePlan plan = cfg.plan_finetune_indirect;
        if (cfg.freeze_trunk) plan.frozen_blocks.push_back("trunk");
        res = proto::train_indirect(model, train, plan, cfg.indirect_source, gen_ptr);
        nn::checkpoint_store(ck, np);
        ck.meta["source"] = proto::source_name(cfg.indirect_source);
    }

    nn::save_checkpoint(ckpt_path(cfg, ckpt_name), ck);
    // one manifest entry per (stage, path, task)
    proto::StageRecord rec = make_record(ckpt_name, ckpt_name + ".ckpt", res);
    rec.task = task_str;
    rec.path = proto::path_name(path);
    if (path == proto::PathKind::indirect) rec.source = proto::source_name(cfg.indirect_source);
    manifest.append(std::move(rec));
    manifest.save(cfg.out_dir / "manifest.json");
    append_training_log(cfg, ckpt_name, res.curve);

    out << ckpt_name << ": final loss " << fmt_double(res.curve.back().loss) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
namespace {

struct EvalRow {
    std::string scenario, path, task, metric;
    double value = 0.0;
    bool absent = false;
};

void push_metric_rows(std::vector<EvalRow>& rows, const std::string& scenario, const std::string& path,
                      const proto::TaskMetric& m) {
    if (m.metric == "mean_iou") {
        for (int c = 0; c < signalio::kSegClasses; ++c)
            rows.push_back({scenario, path, "segmentation", std::string("iou_") + kSegClassNames[c],
                            m.iou.per_class[static_cast<std::size_t>(c)], false});
        rows.push_back({scenario, path, "segmentation", "mean_iou", m.iou.mean, false});
    } else {
        rows.push_back({scenario, path, tasks::task_name(m.task),
                        m.metric == "acc" ? "acc" : "mae_mmhg", m.value, false});
    }
}

}  // namespace

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    proto::Windows test = load_split(cfg, "test");
    proto::RunManifest manifest = load_or_create_manifest(cfg);

    // scenario grouping by recording protocol
    std::map<std::string, proto::Windows> scenarios;
    for (const auto& w : test) scenarios[signalio::protocol_name(w.protocol)].push_back(w);

    nn::Autoencoder generator(cfg.graph);
    bool have_generator = false;
    if (fs::exists(ckpt_path(cfg, "base"))) {
        generator = load_generator(cfg, "eval");
        have_generator = true;
    } else {
        out << "eval: warning: base generator missing; indirect rows will be absent\n";
    }

    std::vector<EvalRow> rows;
    for (const auto& [scenario, ws] : scenarios) {
        for (tasks::TaskKind task : cfg.task_list) {
            const std::string task_str = tasks::task_name(task);
            // direct
            {
                const fs::path p = ckpt_path(cfg, "finetune_direct_" + task_str);
                if (fs::exists(p)) {
                    nn::Checkpoint ck = nn::load_checkpoint(p);
                    proto::DirectModel model(cfg.graph, task);
                    nn::NamedParams np;
                    model.collect(np);
                    nn::checkpoint_apply(ck, np);
                    push_metric_rows(rows, scenario, "direct", proto::eval_direct(model, ws));
                } else {
                    rows.push_back({scenario, "direct", task_str, "", 0.0, true});
                    out << "eval: warning: no direct model for task " << task_str << "\n";
                }
            }
            // indirect (radar -> generator -> discriminator features -> head)
            {
                const fs::path p = ckpt_path(cfg, "finetune_indirect_" + task_str);
                if (fs::exists(p) && have_generator) {
                    nn::Checkpoint ck = nn::load_checkpoint(p);
                    proto::IndirectModel model(cfg.graph, task);
                    nn::NamedParams np;
                    model.collect(np);
                    nn::checkpoint_apply(ck, np);
                    push_metric_rows(rows, scenario, "indirect", proto::eval_indirect(model, ws, &generator, true));
                } else {
                    rows.push_back({scenario, "indirect", task_str, "", 0.0, true});
                    if (fs::exists(p))
                        out << "eval: warning: indirect model for " << task_str << " needs the base generator\n";
                    else
                        out << "eval: warning: no indirect model for task " << task_str << "\n";
                }
            }
        }
    }

    // CSV
    std::string csv = "# config_hash=" + cfg.config_hash + "\n# seed=" + std::to_string(cfg.seed) + "\n";
    csv += "scenario,path,task,metric,value\n";
    for (const auto& r : rows)
        csv += r.scenario + "," + r.path + "," + r.task + "," + (r.absent ? "absent" : r.metric) + "," +
               (r.absent ? "" : fmt_double(r.value)) + "\n";
    atomic_write_file(cfg.out_dir / "eval_report.csv", csv);

    // JSON + dual-path comparison summary
    json j;
    j["config_hash"] = cfg.config_hash;
    j["seed"] = cfg.seed;
    json jrows = json::array();
    for (const auto& r : rows) {
        json e = {{"scenario", r.scenario}, {"path", r.path}, {"task", r.task}};
        if (r.absent) e["absent"] = true;
        else {
            e["metric"] = r.metric;
            e["value"] = r.value;
        }
        jrows.push_back(e);
    }
    j["rows"] = jrows;
    json cmp = json::array();
    for (const auto& [scenario, ws] : scenarios) {
        (void)ws;
        for (tasks::TaskKind task : cfg.task_list) {
            const std::string task_str = tasks::task_name(task);
            const std::string metric = task == tasks::TaskKind::segmentation ? "mean_iou"
                                       : task == tasks::TaskKind::bp          ? "mae_mmhg"
                                                                              : "acc";
            double dv = 0.0, iv = 0.0;
            bool have_d = false, have_i = false;
            for (const auto& r : rows) {
                if (r.scenario != scenario || r.absent || r.metric != metric) continue;
                if (r.task != task_str && !(task == tasks::TaskKind::segmentation && r.task == "segmentation"))
                    continue;
                if (r.path == "direct") {
                    dv = r.value;
                    have_d = true;
                } else {
                    iv = r.value;
                    have_i = true;
                }
            }
            if (have_d && have_i)
                cmp.push_back({{"scenario", scenario},
                               {"task", task_str},
                               {"metric", metric},
                               {"direct", dv},
                               {"indirect", iv},
                               {"delta_indirect_minus_direct", iv - dv}});
        }
    }
    j["comparison"] = cmp;
    atomic_write_file(cfg.out_dir / "eval_report.json", j.dump(2) + "\n");

    out << "eval: " << rows.size() << " metric rows across " << scenarios.size() << " scenario(s)\n";
    for (const auto& e : cmp)
        out << "  " << e["scenario"].get<std::string>() << " " << e["task"].get<std::string>() << " ("
            << e["metric"].get<std::string>() << "): direct " << fmt_double(e["direct"].get<double>())
            << " vs indirect " << fmt_double(e["indirect"].get<double>()) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------
int cmd_sweep(const RunConfig& cfg, bool dry_run, std::ostream& out) {
    auto grid_points = cfg.grid.resolve();
    if (dry_run) {
        static const char* kLetters = "ABCDEFGHI";
        const auto& reps = sweep::SweepGrid::representative_points();
        out << "sweep grid: " << grid_points.size() << " points\n";
        for (const auto& w : grid_points) {
            std::string letter;
            for (std::size_t i = 0; i < reps.size(); ++i)
                if (reps[i].lambda_d == w.lambda_d && reps[i].lambda_p == w.lambda_p)
                    letter = std::string(" [") + kLetters[i] + "]";
            out << "  lambda_d=" << fmt_double(w.lambda_d) << " lambda_p=" << fmt_double(w.lambda_p)
                << " ratio=" << fmt_double(w.lambda_p / w.lambda_d) << letter << "\n";
        }
        return 0;
    }

    proto::RunManifest manifest = load_or_create_manifest(cfg);
    require_stage(manifest, cfg, "pretrain_hs");
    require_stage(manifest, cfg, "pretrain_ecg");
    require_stage(manifest, cfg, "pretrain_disc");

    proto::Windows train = load_split(cfg, "train");
    proto::Windows test = load_split(cfg, "test");
    nn::Checkpoint ck_hs = load_ckpt_required(cfg, "pretrain_hs", "sweep");
    nn::Checkpoint ck_ecg = load_ckpt_required(cfg, "pretrain_ecg", "sweep");
    nn::Checkpoint ck_disc = load_ckpt_required(cfg, "pretrain_disc", "sweep");

    auto points = sweep::run_sweep(grid_points, cfg.graph, ck_hs, ck_ecg, ck_disc, train, test,
                                   cfg.sweep_settings);

    bool partial = false;
    sweep::PhaseResult phases;
    try {
        phases = sweep::detect_phases(points, cfg.sweep_settings.smooth_window);
        partial = phases.partial;
    } catch (const InputError& e) {
        partial = true;
        out << "sweep: phase detection incomplete: " << e.what() << "\n";
    }

    sweep::write_sweep_csv(cfg.out_dir / "sweep_results.csv", points, cfg.config_hash, cfg.seed);
    sweep::write_phases_json(cfg.out_dir / "phases.json", points, phases, cfg.config_hash, cfg.seed);
    sweep::write_leg_plots(cfg.out_dir, points);

    std::size_t converged = 0;
    for (const auto& p : points) converged += p.converged ? 1 : 0;
    out << "sweep: " << converged << "/" << points.size() << " points converged";
    if (partial) out << " (phase detection partial)";
    out << "\n";
    if (phases.turning1 >= 0) out << "  turning point 1 at sorted index " << phases.turning1 << "\n";
    if (phases.turning2 >= 0) out << "  turning point 2 at sorted index " << phases.turning2 << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// resolution study
// ---------------------------------------------------------------------------
int cmd_resolution(const RunConfig& cfg, std::ostream& out) {
    proto::Windows train = load_split(cfg, "train");
    proto::Windows test = load_split(cfg, "test");

    sweep::ResolutionSettings rs;
    rs.sweep = cfg.sweep_settings;
    rs.pre_hs = cfg.plan_pretrain_hs;
    rs.pre_ecg = cfg.plan_pretrain_ecg;
    rs.pre_disc = cfg.plan_pretrain_disc;

    auto summaries = sweep::resolution_study(cfg.resolution_scales, cfg.grid, cfg.graph, train, test, rs);

    std::string csv = "# config_hash=" + cfg.config_hash + "\n# seed=" + std::to_string(cfg.seed) + "\n";
    csv += "scale_den,generator_params,min_mse,min_fid,turning1,turning2,partial\n";
    for (const auto& s : summaries) {
        csv += std::to_string(s.scale_den) + "," + std::to_string(s.generator_params) + "," +
               fmt_double(s.min_mse) + "," + fmt_double(s.min_fid) + "," + std::to_string(s.phases.turning1) +
               "," + std::to_string(s.phases.turning2) + "," + (s.phases.partial ? "1" : "0") + "\n";
        sweep::write_sweep_csv(cfg.out_dir / ("sweep_scale" + std::to_string(s.scale_den) + ".csv"),
                               s.points, cfg.config_hash, cfg.seed);
    }
    atomic_write_file(cfg.out_dir / "resolution_summary.csv", csv);
    out << "resolution: " << summaries.size() << " scales swept\n";
    for (const auto& s : summaries)
        out << "  1/" << s.scale_den << ": params=" << s.generator_params
            << " min_mse=" << fmt_double(s.min_mse) << " min_fid=" << fmt_double(s.min_fid) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------
int cmd_report(const RunConfig& cfg, std::ostream& out) {
    const fs::path csv_path = cfg.out_dir / "sweep_results.csv";
    if (!fs::exists(csv_path))
        throw InputError("report: " + csv_path.string() + " not found (run sweep first)");
    auto points = sweep::read_sweep_csv(csv_path);

    sweep::PhaseResult phases;
    bool have_phases = true;
    try {
        phases = sweep::detect_phases(points, cfg.sweep_settings.smooth_window);
    } catch (const InputError& e) {
        have_phases = false;
        out << "report: phase detection unavailable: " << e.what() << "\n";
    }

    if (have_phases) {
        // phase-annotated scatter (mse vs 1-fid on log axes)
        std::map<sweep::Phase, sweep::ScatterSeries> by_phase;
        for (std::size_t pos = 0; pos < phases.order.size(); ++pos) {
            const auto& pt = points[phases.order[pos]];
            auto& s = by_phase[phases.labels[pos]];
            s.name = sweep::phase_name(phases.labels[pos]);
            s.pts.emplace_back(pt.mse, 1.0 - pt.fid);
            s.labels.push_back("");
        }
        std::vector<sweep::ScatterSeries> series;
        for (auto& [phase, s] : by_phase) series.push_back(std::move(s));
        sweep::write_scatter_svg(cfg.out_dir / "phase_scatter.svg", "distortion-perception phases", "mse",
                                 "1-fid", series, true, false);

        auto optima = sweep::locate_downstream_optimum(points, phases);
        std::string csv = "# config_hash=" + cfg.config_hash + "\n";
        csv += "task,point_index,lambda_d,lambda_p,ratio,value,phase,in_coopetitive_pm1,note\n";
        out << "downstream optimum vs phase:\n";
        for (const auto& e : optima) {
            std::string lam_d = "", lam_p = "", ratio = "", value = "";
            if (e.point_index >= 0) {
                const auto& pt = points[phases.order[static_cast<std::size_t>(e.point_index)]];
                lam_d = fmt_double(pt.weights.lambda_d);
                lam_p = fmt_double(pt.weights.lambda_p);
                ratio = fmt_double(pt.ratio());
                value = fmt_double(e.value);
            }
            csv += e.task + "," + std::to_string(e.point_index) + "," + lam_d + "," + lam_p + "," + ratio +
                   "," + value + "," + sweep::phase_name(e.phase) + "," + (e.near_coopetitive ? "1" : "0") +
                   "," + e.note + "\n";
            out << "  " << e.task << ": ";
            if (e.point_index < 0) out << e.note << "\n";
            else
                out << "best " << value << " at (" << lam_d << ", " << lam_p << "), phase "
                    << sweep::phase_name(e.phase) << (e.near_coopetitive ? " (within coopetitive +/-1)" : "")
                    << "\n";
        }
        atomic_write_file(cfg.out_dir / "optimum_table.csv", csv);
        if (optima.empty()) out << "  (no downstream metrics recorded in the sweep)\n";
    }
    return 0;
}

int cmd_risk_report(const fs::path& direct_json, const fs::path& indirect_json, double c_h_override,
                    double m, double constant, std::ostream& out) {
    auto load_profile = [](const fs::path& p, double& c_h, bool& has_ch) {
        const std::string text = read_file(p);
        risk::PathProfile prof = risk::PathProfile::from_json(text);
        json j = json::parse(text);
        has_ch = j.contains("c_h");
        if (has_ch) c_h = j["c_h"].get<double>();
        return prof;
    };
    double ch_d = 0.0, ch_i = 0.0;
    bool has_d = false, has_i = false;
    risk::PathProfile direct = load_profile(direct_json, ch_d, has_d);
    risk::PathProfile indirect = load_profile(indirect_json, ch_i, has_i);

    risk::SharedCapacity shared;
    if (std::isfinite(c_h_override)) {
        shared.c_h = c_h_override;
    } else if (has_d || has_i) {
        if (has_d && has_i && ch_d != ch_i)
            throw InputError("risk: c_h differs between profile files; pass --ch to override");
        shared.c_h = has_d ? ch_d : ch_i;
    }

    auto rep = risk::dominance(indirect, direct, shared);
    out << "shared capacity C(H) = " << fmt_double(shared.c_h) << "\n";
    out << "direct   (" << (direct.label.empty() ? "direct" : direct.label)
        << "): TrainTerm = " << fmt_double(rep.direct_term) << "\n";
    out << "indirect (" << (indirect.label.empty() ? "indirect" : indirect.label)
        << "): TrainTerm = " << fmt_double(rep.indirect_term) << "\n";
    out << "indirect dominates (TrainTerm_ind < TrainTerm_dir): " << (rep.indirect_dominates ? "yes" : "no")
        << "\n";
    if (m > 0.0) {
        out << "TLRisk bound (m=" << fmt_double(m) << ", constant=" << fmt_double(constant)
            << "): direct " << fmt_double(risk::tl_risk_bound(direct, shared, m, constant)) << ", indirect "
            << fmt_double(risk::tl_risk_bound(indirect, shared, m, constant)) << "\n";
    }
    return 0;
}

}  // namespace dualpath::cmd
