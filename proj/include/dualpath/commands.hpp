// CLI subcommand implementations. All file writes are atomic; exit codes:
// 0 success/warn, 2 input error, 3 stage-order error, 4 divergence abort.
#pragma once

#include "dualpath/config.hpp"
#include "dualpath/protocol.hpp"
#include "dualpath/tasks.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace dualpath::cmd {

int cmd_prepare(const config::RunConfig& cfg, std::ostream& out);
int cmd_pretrain(const config::RunConfig& cfg, std::ostream& out);
int cmd_train_base(const config::RunConfig& cfg, std::ostream& out);
int cmd_finetune(const config::RunConfig& cfg, protocol::PathKind path, tasks::TaskKind task,
                 std::ostream& out);
int cmd_eval(const config::RunConfig& cfg, std::ostream& out);
int cmd_sweep(const config::RunConfig& cfg, bool dry_run, std::ostream& out);
int cmd_resolution(const config::RunConfig& cfg, std::ostream& out);
int cmd_report(const config::RunConfig& cfg, std::ostream& out);
int cmd_risk_report(const std::filesystem::path& direct_json, const std::filesystem::path& indirect_json,
                    double c_h_override, double m, double constant, std::ostream& out);

// shared helpers (exposed for tests)
std::filesystem::path data_manifest_path(const config::RunConfig& cfg);
std::string data_hash(const config::RunConfig& cfg);
protocol::Windows load_split(const config::RunConfig& cfg, const std::string& split);
protocol::RunManifest load_or_create_manifest(const config::RunConfig& cfg);
void require_stage(const protocol::RunManifest& m, const config::RunConfig& cfg, const std::string& stage);

}  // namespace dualpath::cmd
