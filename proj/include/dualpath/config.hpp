// Declarative run configuration: one JSON file plus flag overrides drives
// every subcommand; the resolved config hash is embedded in all artifacts.
#pragma once

#include "dualpath/dpsweep.hpp"
#include "dualpath/netblocks.hpp"
#include "dualpath/protocol.hpp"
#include "dualpath/signalio.hpp"
#include "dualpath/synthgen.hpp"
#include "dualpath/tasks.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dualpath::config {

enum class DataSource { synth, ingest };

struct RunConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "runs/default";

    DataSource source = DataSource::synth;
    synth::SynthConfig synth_cfg;
    std::filesystem::path ingest_dir;

    signalio::FilterSpec filter;
    nn::BlockGraph graph;

    protocol::StagePlan plan_pretrain_hs;
    protocol::StagePlan plan_pretrain_ecg;
    protocol::StagePlan plan_pretrain_disc;
    protocol::StagePlan plan_base;
    protocol::StagePlan plan_finetune_direct;
    protocol::StagePlan plan_finetune_indirect;
    protocol::IndirectSource indirect_source = protocol::IndirectSource::real_ecg;
    bool freeze_trunk = true;           // indirect fine-tuning freezes M by default
    bool freeze_direct_encoder = false; // direct fine-tuning adapts E_hs/BN by default

    sweep::SweepGrid grid;
    sweep::SweepSettings sweep_settings;
    std::vector<int> resolution_scales = {1, 2, 4, 8, 16, 32};

    std::vector<tasks::TaskKind> task_list = {tasks::TaskKind::subject_id, tasks::TaskKind::bmi,
                                              tasks::TaskKind::sex, tasks::TaskKind::age,
                                              tasks::TaskKind::segmentation, tasks::TaskKind::bp};

    std::string config_hash;  // hash of the resolved config JSON

    // resolved canonical form (defaults applied); basis of config_hash
    std::string canonical_json() const;
};

// Parse + validate a config file; flag overrides are applied by the CLI
// before hashing. Throws ConfigError on schema violations.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const std::string& text);
RunConfig default_config();
// recompute hash + per-stage seeds after overrides
void finalize(RunConfig& cfg);

}  // namespace dualpath::config
