#include "dsc/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <thread>

#include "dsc/checkpoint.hpp"
#include "dsc/errors.hpp"
#include "dsc/plot.hpp"
#include "dsc/training.hpp"

namespace fs = std::filesystem;

namespace dsc {

namespace {

enum SeedStream : std::uint64_t { kAnalogRun = 10, kDigitalRun = 20, kDesign = 30, kEvaluation = 40 };

std::uint64_t digital_seed(std::uint64_t master, Scheme s, int order) {
    return derive_seed(master, {kDigitalRun, std::uint64_t(s), std::uint64_t(order)});
}

void say(std::ostream* log, const std::string& msg) {
    if (!log) return;
    static std::mutex lock;
    std::lock_guard guard(lock);
    *log << msg << std::endl;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fixed(double v, int prec = 2) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

void run_parallel(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t k = 0; k < count; ++k) job(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min<int>(workers, int(count)); ++w)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count; k = next++) {
                try {
                    job(k);
                } catch (...) {
                    std::lock_guard guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

Dataset train_set(const ExperimentConfig& cfg) {
    return load_dataset(cfg.io.dataset, cfg.io.data_root, Split::train, std::size_t(cfg.io.train_size), cfg.seed,
                        cfg.model.height, cfg.model.width);
}

Dataset test_set(const ExperimentConfig& cfg) {
    return load_dataset(cfg.io.dataset, cfg.io.data_root, Split::test, std::size_t(cfg.io.test_size), cfg.seed,
                        cfg.model.height, cfg.model.width);
}

TrainConfig analog_train_config(const ExperimentConfig& cfg) {
    TrainConfig t;
    t.stage = Stage::analog;
    t.epochs = cfg.train.epochs_analog;
    t.batch_size = cfg.train.batch_size;
    t.learning_rate = cfg.train.lr_analog;
    t.seed = derive_seed(cfg.seed, {kAnalogRun});
    t.snr_db = cfg.train_snr();
    t.tau_start = cfg.train.tau_start;
    t.tau_end = cfg.train.tau_end;
    t.dataset = cfg.io.dataset;
    t.subset_size = std::size_t(cfg.io.train_size);
    t.scheme = "analog";
    return t;
}

TrainConfig digital_train_config(const ExperimentConfig& cfg, Scheme scheme, int order) {
    TrainConfig t = analog_train_config(cfg);
    t.stage = Stage::digital;
    const bool direct = scheme == Scheme::ste_direct;
    t.epochs = direct ? cfg.train.epochs_direct : cfg.train.epochs_finetune;
    t.learning_rate = direct ? cfg.train.lr_direct : cfg.train.lr_finetune;
    t.seed = digital_seed(cfg.seed, scheme, order);
    ModulatorConfig m = cfg.modulator;
    if (scheme == Scheme::probabilistic) {
        m.family = ModulatorFamily::probabilistic;
        m.bridge = GradientBridge::ste;
    }
    t.modulator = m;
    t.learnable_constellation = cfg.constellation.learnable;
    t.scheme = to_string(scheme);
    return t;
}

// Regular carrier for every digital scheme except ste-irregular.
Constellation regular_constellation(const ExperimentConfig& cfg, int order) {
    if (cfg.constellation.kind == "learnable-spacing") return make_learnable_spacing(order, cfg.constellation.spacing);
    return make_square_qam(order);
}

Constellation designed_constellation(const ExperimentConfig& cfg, const Checkpoint& analog, const Dataset& train,
                                     int order) {
    return design_constellation(analog, train.head(std::size_t(cfg.constellation.design_images)), order,
                                derive_seed(cfg.seed, {kDesign, std::uint64_t(order)}),
                                cfg.constellation.kmeans_max_iters);
}

EvalRequest eval_request(const ExperimentConfig& cfg, Scheme scheme, int workers, const std::string& run_id) {
    EvalRequest req;
    req.scheme = scheme;
    req.snr_grid = cfg.eval.snr_grid;
    req.n_images = cfg.eval.n_images;
    req.seed = derive_seed(cfg.seed, {kEvaluation});
    req.workers = workers;
    req.run_id = run_id;
    return req;
}

Scheme scheme_of(const Checkpoint& ckpt) {
    try {
        return scheme_from_string(ckpt.scheme);
    } catch (const ConfigError&) {
        return ckpt.stage == Stage::analog ? Scheme::analog : Scheme::ste_finetune;
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw MissingFileError("cannot write " + path);
    out << text;
}

void append_multiround(const std::vector<MultiroundResult>& results, const std::string& run_id,
                       const std::string& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw MissingFileError("cannot append to " + path);
    for (const auto& r : results) {
        auto j = to_json(r);
        j["run_id"] = run_id;
        out << j.dump() << '\n';
    }
}

std::vector<MultiroundResult> read_multiround(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("multiround file not found: " + path);
    std::vector<MultiroundResult> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(multiround_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError("bad JSON line in " + path + ": " + e.what());
        }
    }
    return out;
}

Checkpoint load_existing_checkpoint(const std::string& path) {
    if (!fs::exists(path)) throw MissingFileError("checkpoint not found: " + path);
    return load_checkpoint(path);
}

}  // namespace

ExperimentConfig resolve_config(const CommandContext& ctx) {
    if (ctx.config_path.empty()) throw ConfigError("--config is required");
    if (ctx.device != "cpu") throw ConfigError("unsupported device '" + ctx.device + "' (only cpu is available)");
    if (ctx.workers < 1) throw ConfigError("--workers must be >= 1");
    auto cfg = load_config(ctx.config_path);
    if (ctx.seed) cfg.seed = *ctx.seed;
    return cfg;
}

std::string prepare_run_dir(const CommandContext& ctx, const std::string& command, const ExperimentConfig& cfg) {
    fs::path dir = ctx.out.empty() ? fs::path("runs") / (command + "-" + make_run_id(cfg.seed)) : fs::path(ctx.out);
    if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir)))
        throw ConfigError("output directory " + dir.string() + " is not fresh; choose a new --out");
    fs::create_directories(dir);
    write_text((dir / "config.json").string(), canonical_dump(to_json(cfg)));
    return dir.string();
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& run_dir, int workers, std::ostream* log) {
    Stopwatch total;
    PipelineResult result;
    result.run_dir = run_dir;
    const fs::path dir(run_dir);
    fs::create_directories(dir / "checkpoints");
    fs::create_directories(dir / "constellations");
    fs::create_directories(dir / "metrics");

    const auto train = train_set(cfg);
    const auto test = test_set(cfg);
    say(log, "data: " + train.name + " train=" + std::to_string(train.size()) + " test=" + std::to_string(test.size()));

    std::vector<Scheme> schemes;
    for (const auto& s : cfg.eval.schemes) schemes.push_back(scheme_from_string(s));
    if (std::find(schemes.begin(), schemes.end(), Scheme::analog) == schemes.end())
        schemes.insert(schemes.begin(), Scheme::analog);

    Stopwatch sw;
    auto analog = pretrain_analog(analog_train_config(cfg), train, cfg.model);
    const auto analog_path = (dir / "checkpoints" / "analog.ckpt").string();
    save_checkpoint(analog.checkpoint, analog_path);
    write_metrics_csv(analog.epochs, (dir / "metrics" / "analog.csv").string());
    result.checkpoints["analog"] = analog_path;
    say(log, "pretrain analog: final loss " + fixed(analog.checkpoint.final_loss, 6) + " (" + fixed(sw.seconds(), 1) +
                 " s)");

    struct Job {
        Scheme scheme;
        int order;
        std::string label;
    };
    std::vector<Job> jobs;
    for (auto s : schemes)
        if (s != Scheme::analog)
            for (int m : cfg.eval.orders)
                jobs.push_back({s, m, to_string(s) + "-M" + std::to_string(m)});
    std::vector<Checkpoint> trained(jobs.size());
    run_parallel(jobs.size(), workers, [&](std::size_t k) {
        Stopwatch js;
        const auto& job = jobs[k];
        Constellation c;
        if (job.scheme == Scheme::ste_irregular) {
            c = designed_constellation(cfg, analog.checkpoint, train, job.order);
            save_constellation(c, (dir / "constellations" / ("irregular-M" + std::to_string(job.order) + ".json")).string());
        } else {
            c = regular_constellation(cfg, job.order);
        }
        const auto tcfg = digital_train_config(cfg, job.scheme, job.order);
        auto r = job.scheme == Scheme::ste_direct ? train_digital_direct(tcfg, train, cfg.model, c)
                                                  : finetune_digital(analog.checkpoint, tcfg, train, c);
        write_metrics_csv(r.epochs, (dir / "metrics" / (job.label + ".csv")).string());
        trained[k] = std::move(r.checkpoint);
        say(log, "train " + job.label + ": final loss " + fixed(trained[k].final_loss, 6) + " (" +
                     fixed(js.seconds(), 1) + " s)");
    });
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        const auto path = (dir / "checkpoints" / (jobs[k].label + ".ckpt")).string();
        save_checkpoint(trained[k], path);
        result.checkpoints[jobs[k].label] = path;
    }

    sw = Stopwatch();
    const auto run_id = make_run_id(cfg.seed);
    auto analog_records = evaluate_scheme(analog.checkpoint, eval_request(cfg, Scheme::analog, workers, run_id), test);
    result.records = analog_records;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        auto recs = evaluate_scheme(trained[k], eval_request(cfg, jobs[k].scheme, workers, run_id), test);
        result.records.insert(result.records.end(), recs.begin(), recs.end());
    }
    append_records_jsonl(result.records, (dir / "records.jsonl").string());
    write_summary_csv(result.records, (dir / "summary.csv").string());
    plot_psnr_vs_snr(result.records, (dir / "psnr_vs_snr.svg").string());
    say(log, "evaluate: " + std::to_string(result.records.size()) + " records (" + fixed(sw.seconds(), 1) + " s)");

    sw = Stopwatch();
    const int mr_order = std::find(cfg.eval.orders.begin(), cfg.eval.orders.end(), cfg.constellation.order) !=
                                 cfg.eval.orders.end()
                             ? cfg.constellation.order
                             : cfg.eval.orders.front();
    auto mr_request = [&](Scheme s) {
        auto req = eval_request(cfg, s, 1, run_id);
        req.snr_grid = {cfg.eval.multiround_snr_db};
        req.n_images = cfg.eval.multiround_images;
        return req;
    };
    result.multiround.push_back(multiround(analog.checkpoint, mr_request(Scheme::analog), cfg.eval.rounds, test));
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        if (jobs[k].order != mr_order) continue;
        if (jobs[k].scheme != Scheme::ste_finetune && jobs[k].scheme != Scheme::ste_irregular) continue;
        result.multiround.push_back(multiround(trained[k], mr_request(jobs[k].scheme), cfg.eval.rounds, test));
    }
    append_multiround(result.multiround, run_id, (dir / "multiround.jsonl").string());
    plot_psnr_vs_round(result.multiround, (dir / "psnr_vs_round.svg").string());
    say(log, "multiround: " + std::to_string(result.multiround.size()) + " chains (" + fixed(sw.seconds(), 1) + " s)");

    OrderingOptions opt;
    opt.schemes.clear();
    for (auto s : kSchemeOrdering)
        if (std::find(schemes.begin(), schemes.end(), s) != schemes.end()) opt.schemes.push_back(s);
    result.ordering = ordering_report(result.records, opt);
    result.multiround_ordering = multiround_report(result.multiround);
    write_text((dir / "report.txt").string(), "[orderings]\n" + result.ordering.text() + "\n[multiround]\n" +
                                                  result.multiround_ordering.text());
    say(log, "pipeline done in " + fixed(total.seconds(), 1) + " s");
    return result;
}

std::string cmd_pretrain(const CommandContext& ctx) {
    const auto cfg = resolve_config(ctx);
    const auto dir = prepare_run_dir(ctx, "pretrain", cfg);
    const auto r = pretrain_analog(analog_train_config(cfg), train_set(cfg), cfg.model);
    const auto path = (fs::path(dir) / "analog.ckpt").string();
    save_checkpoint(r.checkpoint, path);
    write_metrics_csv(r.epochs, (fs::path(dir) / "metrics.csv").string());
    say(ctx.log, "final loss " + fixed(r.checkpoint.final_loss, 6));
    return path;
}

std::string cmd_design_constellation(const CommandContext& ctx, const std::string& checkpoint) {
    const auto cfg = resolve_config(ctx);
    const auto ckpt = load_existing_checkpoint(checkpoint);
    const auto dir = prepare_run_dir(ctx, "design", cfg);
    const auto c = designed_constellation(cfg, ckpt, train_set(cfg), cfg.constellation.order);
    const auto path = (fs::path(dir) / ("irregular-M" + std::to_string(c.order) + ".json")).string();
    save_constellation(c, path);
    return path;
}

std::string cmd_finetune(const CommandContext& ctx, const std::string& checkpoint,
                         const std::optional<std::string>& constellation) {
    const auto cfg = resolve_config(ctx);
    const auto source = load_existing_checkpoint(checkpoint);
    std::optional<Constellation> c;
    if (constellation) {
        if (!fs::exists(*constellation)) throw MissingFileError("constellation not found: " + *constellation);
        c = load_constellation(*constellation);
    }
    const auto dir = prepare_run_dir(ctx, "finetune", cfg);
    const auto train = train_set(cfg);
    if (!c) {
        if (cfg.constellation.kind == "irregular")
            c = designed_constellation(cfg, source, train, cfg.constellation.order);
        else
            c = regular_constellation(cfg, cfg.constellation.order);
    }
    Scheme scheme = c->kind == ConstellationKind::irregular ? Scheme::ste_irregular : Scheme::ste_finetune;
    if (cfg.modulator.family == ModulatorFamily::probabilistic) scheme = Scheme::probabilistic;
    const auto r = finetune_digital(source, digital_train_config(cfg, scheme, c->order), train, *c);
    const auto path = (fs::path(dir) / (to_string(scheme) + "-M" + std::to_string(c->order) + ".ckpt")).string();
    save_checkpoint(r.checkpoint, path);
    write_metrics_csv(r.epochs, (fs::path(dir) / "metrics.csv").string());
    say(ctx.log, "final loss " + fixed(r.checkpoint.final_loss, 6));
    return path;
}

std::string cmd_evaluate(const CommandContext& ctx, const std::vector<std::string>& checkpoints) {
    const auto cfg = resolve_config(ctx);
    if (checkpoints.empty()) throw ConfigError("evaluate needs at least one checkpoint");
    std::vector<Checkpoint> loaded;
    for (const auto& p : checkpoints) loaded.push_back(load_existing_checkpoint(p));
    const auto dir = prepare_run_dir(ctx, "evaluate", cfg);
    const auto test = test_set(cfg);
    const auto run_id = make_run_id(cfg.seed);
    std::vector<ExperimentRecord> records;
    for (const auto& ckpt : loaded) {
        auto recs = evaluate_scheme(ckpt, eval_request(cfg, scheme_of(ckpt), ctx.workers, run_id), test);
        records.insert(records.end(), recs.begin(), recs.end());
    }
    append_records_jsonl(records, (fs::path(dir) / "records.jsonl").string());
    write_summary_csv(records, (fs::path(dir) / "summary.csv").string());
    plot_psnr_vs_snr(records, (fs::path(dir) / "psnr_vs_snr.svg").string());
    return dir;
}

std::string cmd_sweep(const CommandContext& ctx) {
    const auto cfg = resolve_config(ctx);
    const auto dir = prepare_run_dir(ctx, "sweep", cfg);
    run_pipeline(cfg, dir, ctx.workers, ctx.log);
    return dir;
}

std::string cmd_multiround(const CommandContext& ctx, const std::vector<std::string>& checkpoints) {
    const auto cfg = resolve_config(ctx);
    if (checkpoints.empty()) throw ConfigError("multiround needs at least one checkpoint");
    std::vector<Checkpoint> loaded;
    for (const auto& p : checkpoints) loaded.push_back(load_existing_checkpoint(p));
    const auto dir = prepare_run_dir(ctx, "multiround", cfg);
    const auto test = test_set(cfg);
    const auto run_id = make_run_id(cfg.seed);
    std::vector<MultiroundResult> results;
    for (const auto& ckpt : loaded) {
        auto req = eval_request(cfg, scheme_of(ckpt), 1, run_id);
        req.snr_grid = {cfg.eval.multiround_snr_db};
        req.n_images = cfg.eval.multiround_images;
        results.push_back(multiround(ckpt, req, cfg.eval.rounds, test));
    }
    append_multiround(results, run_id, (fs::path(dir) / "multiround.jsonl").string());
    plot_psnr_vs_round(results, (fs::path(dir) / "psnr_vs_round.svg").string());
    return dir;
}

bool ReportOutcome::all_pass() const { return ordering.all_pass() && (!multiround || multiround->all_pass()); }

ReportOutcome cmd_report(const std::string& results_dir, const std::string& out_dir) {
    const fs::path src(results_dir);
    if (!fs::is_directory(src)) throw MissingFileError("results directory not found: " + results_dir);
    const auto records = read_records_jsonl((src / "records.jsonl").string());
    std::vector<MultiroundResult> mr;
    if (fs::exists(src / "multiround.jsonl")) mr = read_multiround((src / "multiround.jsonl").string());

    ReportOutcome out;
    out.ordering = ordering_report(records);
    out.text = "[orderings]\n" + out.ordering.text();
    if (!mr.empty()) {
        out.multiround = multiround_report(mr);
        out.text += "\n[multiround]\n" + out.multiround->text();
    }

    const fs::path dir = out_dir.empty() ? fs::path("runs") / ("report-" + make_run_id(0)) : fs::path(out_dir);
    if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir)))
        throw ConfigError("output directory " + dir.string() + " is not fresh; choose a new --out");
    fs::create_directories(dir);
    if (fs::exists(src / "config.json")) fs::copy_file(src / "config.json", dir / "config.json");
    write_text((dir / "report.txt").string(), out.text);
    plot_psnr_vs_snr(records, (dir / "psnr_vs_snr.svg").string());
    if (!mr.empty()) plot_psnr_vs_round(mr, (dir / "psnr_vs_round.svg").string());
    out.run_dir = dir.string();
    return out;
}

}  // namespace dsc
