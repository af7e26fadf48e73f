#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dsc/checkpoint.hpp"
#include "dsc/config.hpp"
#include "dsc/evaluation.hpp"

using namespace dsc;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Run dsc_cli(const std::string& args) {
    static int counter = 0;
    const auto errf = fs::temp_directory_path() / ("dsc_cli_err_" + std::to_string(counter++));
    const std::string cmd = std::string(DSC_CLI) + " " + args + " 2>" + errf.string();
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(errf);
    fs::remove(errf);
    while (!r.out.empty() && r.out.back() == '\n') r.out.pop_back();
    return r;
}

struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const std::string kSmoke = DSC_SOURCE_DIR "/configs/smoke.json";

void write_records(const std::string& dir, bool pass) {
    fs::create_directories(dir);
    std::vector<ExperimentRecord> recs;
    for (double snr : {0.0, 10.0}) {
        auto add = [&](Scheme s, int m, double p) {
            ExperimentRecord r;
            r.scheme = s;
            r.order = m;
            r.snr_db = snr;
            r.n_images = 5;
            r.psnr_db = p + snr / 10;
            recs.push_back(r);
        };
        add(Scheme::analog, 0, 30);
        for (int m : {4, 16}) {
            const double b = m == 16 ? 1.0 : 0.0;
            add(Scheme::ste_irregular, m, 25 + b);
            add(Scheme::ste_finetune, m, 24 + b);
            add(Scheme::ste_direct, m, pass ? 20 + b : 28 + b);
        }
    }
    append_records_jsonl(recs, dir + "/records.jsonl");
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and schema") {
    CHECK(dsc_cli("").code == 64);
    CHECK(dsc_cli("bogus").code == 64);
    CHECK(dsc_cli("pretrain").code == 64);
    CHECK(dsc_cli("pretrain --config " + kSmoke + " --device gpu").code == 64);
    const auto s = dsc_cli("schema");
    CHECK(s.code == 0);
    CHECK(nlohmann::json::parse(s.out)["required"] == nlohmann::json::array({"version", "seed"}));
}

TEST_CASE("error classes map to exit codes") {
    Scratch tmp("dsc_cli_errors");
    auto r = dsc_cli("pretrain --config " + tmp / "absent.json");
    CHECK(r.code == 4);
    const auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
    CHECK(j["error_class"] == "missing-file");
    CHECK(j.contains("message"));

    write(tmp / "unknown.json", R"({"version": 1, "seed": 1, "trian": {}})");
    CHECK(dsc_cli("pretrain --config " + tmp / "unknown.json").code == 3);
    write(tmp / "noseed.json", R"({"version": 1})");
    CHECK(dsc_cli("pretrain --config " + tmp / "noseed.json").code == 3);

    fs::create_directories(tmp / "busy");
    write(tmp / "busy/x", "x");
    CHECK(dsc_cli("pretrain --config " + kSmoke + " --out " + tmp / "busy").code == 2);

    write(tmp / "junk.ckpt", "not a checkpoint at all");
    CHECK(dsc_cli("evaluate --config " + kSmoke + " --out " + tmp / "e1 " + tmp / "junk.ckpt").code == 6);
    CHECK(dsc_cli("evaluate --config " + kSmoke + " --out " + tmp / "e2 " + tmp / "none.ckpt").code == 4);

    write_records(tmp / "partial", true);
    {
        std::ofstream(tmp / "partial/records.jsonl", std::ios::trunc)
            << nlohmann::json{{"run_id", "x"}, {"scheme", "analog"}, {"order", 0}, {"snr_db", 0},
                              {"seed", 0}, {"n_images", 1}, {"psnr_db", 20}, {"psnr_std", 0}}
                   .dump()
            << '\n';
    }
    CHECK(dsc_cli("report " + tmp / "partial" + " --out " + tmp / "rp").code == 8);
}

TEST_CASE("report on synthetic records") {
    Scratch tmp("dsc_cli_report");
    write_records(tmp / "good", true);
    const auto before = slurp(tmp / "good/records.jsonl");
    auto r = dsc_cli("report " + tmp / "good" + " --out " + tmp / "r1");
    CHECK(r.code == 0);
    CHECK(r.out.find("all orderings hold") != std::string::npos);
    CHECK(fs::exists(tmp / "r1/report.txt"));
    CHECK(fs::exists(tmp / "r1/psnr_vs_snr.svg"));
    CHECK(slurp(tmp / "good/records.jsonl") == before);
    CHECK(fs::directory_iterator(tmp / "good") != fs::directory_iterator());
    CHECK(std::distance(fs::directory_iterator(tmp / "good"), fs::directory_iterator()) == 1);

    write_records(tmp / "bad", false);
    CHECK(dsc_cli("report " + tmp / "bad" + " --out " + tmp / "r2").code == 0);
    r = dsc_cli("report " + tmp / "bad" + " --strict --out " + tmp / "r3");
    CHECK(r.code == 9);
    CHECK(r.out.find("ordering violations found") != std::string::npos);
}

TEST_CASE("staged pipeline through the CLI") {
    Scratch tmp("dsc_cli_pipeline");
    auto pre = dsc_cli("pretrain --config " + kSmoke + " --out " + tmp / "pre");
    REQUIRE(pre.code == 0);
    CHECK(pre.out == tmp / "pre/analog.ckpt");
    CHECK(fs::exists(tmp / "pre/metrics.csv"));
    const auto snapshot = slurp(tmp / "pre/config.json");
    CHECK(snapshot == canonical_dump(to_json(load_config(kSmoke))));
    CHECK(canonical_dump(to_json(parse_config(nlohmann::json::parse(snapshot)))) == snapshot);

    const auto ckpt_bytes = slurp(pre.out);
    auto design = dsc_cli("design-constellation --config " + kSmoke + " --checkpoint " + pre.out + " --out " +
                          tmp / "design");
    REQUIRE(design.code == 0);
    CHECK(load_constellation(design.out).kind == ConstellationKind::irregular);

    auto tuned = dsc_cli("finetune --config " + kSmoke + " --checkpoint " + pre.out + " --constellation " +
                         design.out + " --out " + tmp / "tune");
    REQUIRE(tuned.code == 0);
    CHECK(tuned.out == tmp / "tune/ste-irregular-M4.ckpt");
    CHECK(load_checkpoint(tuned.out).stage == Stage::digital);
    CHECK(slurp(pre.out) == ckpt_bytes);

    CHECK(dsc_cli("design-constellation --config " + kSmoke + " --checkpoint " + tuned.out + " --out " +
                  tmp / "d2")
              .code == 5);

    auto ev = dsc_cli("evaluate --config " + kSmoke + " --workers 2 --out " + tmp / "eval " + pre.out + " " +
                      tuned.out);
    REQUIRE(ev.code == 0);
    const auto recs = read_records_jsonl(tmp / "eval/records.jsonl");
    CHECK(recs.size() == 6);
    CHECK(fs::exists(tmp / "eval/summary.csv"));

    auto mr = dsc_cli("multiround --config " + kSmoke + " --out " + tmp / "mr " + pre.out + " " + tuned.out);
    REQUIRE(mr.code == 0);
    CHECK(fs::exists(tmp / "mr/multiround.jsonl"));
    CHECK(slurp(pre.out) == ckpt_bytes);
}

TEST_CASE("zero-epoch pretraining returns the initialization") {
    Scratch tmp("dsc_cli_zero");
    auto doc = nlohmann::json::parse(slurp(kSmoke));
    doc["train"]["epochs_analog"] = 0;
    write(tmp / "zero.json", doc.dump());
    auto r = dsc_cli("pretrain --config " + tmp / "zero.json" + " --seed 11 --out " + tmp / "out");
    REQUIRE(r.code == 0);
    const auto ckpt = load_checkpoint(r.out);
    const auto cfg = parse_config(doc);
    const LatentModel init(cfg.model, derive_seed(derive_seed(11, {10}), {1}));
    CHECK(ckpt.params == init.params());
    CHECK(nlohmann::json::parse(slurp(tmp / "out/config.json"))["seed"] == 11);
}

}
