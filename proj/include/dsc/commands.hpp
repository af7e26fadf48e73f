#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsc/config.hpp"
#include "dsc/evaluation.hpp"

namespace dsc {

/// Options shared by every command.
struct CommandContext {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    /// Run directory. Must not exist or be empty; a fresh one under runs/ is
    /// created when left blank.
    std::string out;
    int workers = 1;
    std::string device = "cpu";
    /// Progress messages; null silences them.
    std::ostream* log = nullptr;
};

/// Loads the config and applies the --seed override.
ExperimentConfig resolve_config(const CommandContext& ctx);

/// Creates a fresh run directory and writes the resolved config snapshot.
std::string prepare_run_dir(const CommandContext& ctx, const std::string& command, const ExperimentConfig& cfg);

struct PipelineResult {
    std::string run_dir;
    std::vector<ExperimentRecord> records;
    std::vector<MultiroundResult> multiround;
    OrderingReport ordering;
    OrderingReport multiround_ordering;
    /// Label ("analog", "ste-finetune-M16", ...) to checkpoint path.
    std::map<std::string, std::string> checkpoints;
};

/// Pretrain, design, fine-tune, train direct, evaluate every scheme over
/// eval.orders x eval.snr_grid, run the multiround experiment and report.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& run_dir, int workers, std::ostream* log);

std::string cmd_pretrain(const CommandContext& ctx);
std::string cmd_design_constellation(const CommandContext& ctx, const std::string& checkpoint);
std::string cmd_finetune(const CommandContext& ctx, const std::string& checkpoint,
                         const std::optional<std::string>& constellation);
std::string cmd_evaluate(const CommandContext& ctx, const std::vector<std::string>& checkpoints);
std::string cmd_sweep(const CommandContext& ctx);
std::string cmd_multiround(const CommandContext& ctx, const std::vector<std::string>& checkpoints);

struct ReportOutcome {
    OrderingReport ordering;
    std::optional<OrderingReport> multiround;
    std::string text;
    /// Where report.txt and the plots went.
    std::string run_dir;
    bool all_pass() const;
};

/// Reads records.jsonl (and multiround.jsonl when present) from `results_dir`
/// and writes report.txt plus the plots to a fresh directory (`out_dir`, or a
/// new one under runs/ when blank). The results directory is left untouched.
ReportOutcome cmd_report(const std::string& results_dir, const std::string& out_dir = "");

}  // namespace dsc
