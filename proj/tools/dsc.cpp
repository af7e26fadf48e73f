#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "dsc/commands.hpp"
#include "dsc/errors.hpp"
#include "json.hpp"

namespace {

int exit_code(const std::string& cls) {
    if (cls == "config") return 2;
    if (cls == "schema") return 3;
    if (cls == "missing-file") return 4;
    if (cls == "stage-mismatch") return 5;
    if (cls == "format") return 6;
    if (cls == "divergence") return 7;
    if (cls == "incomplete-grid") return 8;
    return 1;
}

int fail(const std::string& cls, const std::string& message) {
    const nlohmann::json j{{"error_class", cls}, {"message", message}};
    std::cerr << j.dump() << std::endl;
    return exit_code(cls);
}

void add_common(CLI::App* cmd, dsc::CommandContext& ctx, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", ctx.config_path, "Experiment config (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--seed", ctx.seed, "Override the master seed");
    cmd->add_option("--out", ctx.out, "Fresh output directory");
    cmd->add_option("--workers", ctx.workers, "Concurrent jobs / grid cells")->check(CLI::PositiveNumber);
    cmd->add_option("--device", ctx.device, "Compute device")->check(CLI::IsMember({"cpu"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Digital semantic communication lab"};
    app.require_subcommand(1);
    dsc::CommandContext ctx;
    ctx.log = &std::cerr;
    std::string checkpoint;
    std::vector<std::string> checkpoints;
    std::string constellation;
    std::string results_dir;
    bool strict = false;

    auto* pretrain = app.add_subcommand("pretrain", "Train the analog autoencoder");
    add_common(pretrain, ctx);

    auto* design = app.add_subcommand("design-constellation", "K-means constellation from an analog checkpoint");
    add_common(design, ctx);
    design->add_option("--checkpoint", checkpoint, "Analog checkpoint")->required();

    auto* finetune = app.add_subcommand("finetune", "Fine-tune a checkpoint for digital transmission");
    add_common(finetune, ctx);
    finetune->add_option("--checkpoint", checkpoint, "Source checkpoint")->required();
    finetune->add_option("--constellation", constellation, "Constellation file (default: from config)");

    auto* evaluate = app.add_subcommand("evaluate", "PSNR over the SNR grid for each checkpoint");
    add_common(evaluate, ctx);
    evaluate->add_option("checkpoints", checkpoints, "Checkpoint files")->required();

    auto* sweep = app.add_subcommand("sweep", "Full pipeline: every scheme x M x SNR, multiround and report");
    add_common(sweep, ctx);

    auto* multi = app.add_subcommand("multiround", "Distortion accumulation over repeated hops");
    add_common(multi, ctx);
    multi->add_option("checkpoints", checkpoints, "Checkpoint files")->required();

    auto* report = app.add_subcommand("report", "Ordering checks and plots for a results directory");
    report->add_option("results", results_dir, "Directory holding records.jsonl")->required();
    report->add_option("--out", ctx.out, "Fresh output directory");
    report->add_flag("--strict", strict, "Exit with status 9 when an ordering fails");

    auto* schema = app.add_subcommand("schema", "Print the config JSON Schema");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        fail("usage", e.what());
        return 64;
    }

    try {
        if (*pretrain) {
            std::cout << dsc::cmd_pretrain(ctx) << '\n';
        } else if (*design) {
            std::cout << dsc::cmd_design_constellation(ctx, checkpoint) << '\n';
        } else if (*finetune) {
            std::optional<std::string> c;
            if (!constellation.empty()) c = constellation;
            std::cout << dsc::cmd_finetune(ctx, checkpoint, c) << '\n';
        } else if (*evaluate) {
            std::cout << dsc::cmd_evaluate(ctx, checkpoints) << '\n';
        } else if (*sweep) {
            std::cout << dsc::cmd_sweep(ctx) << '\n';
        } else if (*multi) {
            std::cout << dsc::cmd_multiround(ctx, checkpoints) << '\n';
        } else if (*report) {
            const auto r = dsc::cmd_report(results_dir, ctx.out);
            std::cout << r.text;
            std::cerr << "report written to " << r.run_dir << '\n';
            if (strict && !r.all_pass()) return 9;
        } else if (*schema) {
            std::cout << dsc::config_schema().dump(2) << '\n';
        }
    } catch (const dsc::Error& e) {
        return fail(e.error_class(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
