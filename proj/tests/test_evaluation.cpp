#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "dsc/errors.hpp"
#include "dsc/evaluation.hpp"
#include "dsc/training.hpp"
#include "support.hpp"

using namespace dsc;

namespace {

Checkpoint trained_analog(int epochs = 2) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 8;
    cfg.seed = 4;
    cfg.learning_rate = 3e-3;
    return pretrain_analog(cfg, make_synthetic_textures(48, 4, Split::train, 8, 8), test::tiny_arch()).checkpoint;
}

Dataset tiny_test(std::size_t n) { return make_synthetic_textures(n, 4, Split::test, 8, 8); }

ExperimentRecord rec(Scheme s, int m, double snr, double psnr) {
    ExperimentRecord r;
    r.scheme = s;
    r.order = m;
    r.snr_db = snr;
    r.n_images = 10;
    r.psnr_db = psnr;
    return r;
}

// Analog 30, irregular 25, finetune 24, direct 20, +1 dB per M step, +0.5 dB per SNR step.
std::vector<ExperimentRecord> passing_grid() {
    std::vector<ExperimentRecord> out;
    const std::vector<double> snrs{0, 6, 12};
    for (std::size_t k = 0; k < snrs.size(); ++k) {
        out.push_back(rec(Scheme::analog, 0, snrs[k], 30 + 0.5 * k));
        int step = 0;
        for (int m : {4, 16, 64}) {
            out.push_back(rec(Scheme::ste_irregular, m, snrs[k], 25 + step + 0.5 * k));
            out.push_back(rec(Scheme::ste_finetune, m, snrs[k], 24 + step + 0.5 * k));
            out.push_back(rec(Scheme::ste_direct, m, snrs[k], 20 + step + 0.5 * k));
            ++step;
        }
    }
    return out;
}

void set_cell(std::vector<ExperimentRecord>& recs, Scheme s, int m, double snr, double psnr) {
    for (auto& r : recs)
        if (r.scheme == s && r.order == m && r.snr_db == snr) r.psnr_db = psnr;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("PSNR closed forms") {
    ImageSample a(3, 4, 4), b(3, 4, 4);
    for (std::size_t k = 0; k < a.size(); ++k) {
        a.pixels[k] = 0.2 + 0.01 * double(k % 7);
        b.pixels[k] = a.pixels[k] + 0.1;
    }
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
    ImageSample c(3, 4, 5);
    CHECK_THROWS_AS(psnr(a, c), ContractViolation);

    const auto imgs = test::random_images(2, test::tiny_arch(), 9);
    double acc = 0.0;
    for (std::size_t k = 0; k < imgs[0].size(); ++k) acc += std::pow(imgs[0].pixels[k] - imgs[1].pixels[k], 2);
    CHECK(std::abs(psnr(imgs[0], imgs[1]) - 10.0 * std::log10(double(imgs[0].size()) / acc)) < 1e-9);
}

TEST_CASE("noiseless analog evaluation equals the autoencoder") {
    const auto ckpt = trained_analog(12);
    const auto test = tiny_test(20);
    EvalRequest req;
    req.snr_grid = {kNoiselessSnrDb};
    req.n_images = 20;
    const auto recs = evaluate_scheme(ckpt, req, test);
    REQUIRE(recs.size() == 1);
    const auto model = ckpt.model();
    double acc = 0.0;
    for (const auto& im : test.images) acc += psnr(im, model.decode(model.encode(im)));
    CHECK(recs[0].psnr_db == doctest::Approx(acc / 20).epsilon(1e-12));
    CHECK(recs[0].order == 0);
    CHECK_FALSE(recs[0].ser.has_value());

    EvalRequest dig = req;
    dig.scheme = Scheme::ste_finetune;
    dig.constellation = make_square_qam(16);
    const auto d = evaluate_scheme(ckpt, dig, test);
    CHECK(d[0].psnr_db <= recs[0].psnr_db);
    CHECK(d[0].order == 16);
    CHECK(*d[0].ser == 0.0);
}

TEST_CASE("evaluation is deterministic and side-effect free") {
    const auto ckpt = trained_analog();
    const auto before = serialize_checkpoint(ckpt);
    const auto test = tiny_test(30);
    EvalRequest req;
    req.snr_grid = {0, 9, 18};
    req.n_images = 30;
    req.seed = 12;
    const auto a = evaluate_scheme(ckpt, req, test);
    req.workers = 3;
    const auto b = evaluate_scheme(ckpt, req, test);
    REQUIRE(a.size() == 3);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].psnr_db == b[k].psnr_db);
    CHECK(a[0].psnr_db < a[2].psnr_db);
    CHECK(serialize_checkpoint(ckpt) == before);
}

TEST_CASE("scheme and checkpoint compatibility") {
    const auto ckpt = trained_analog();
    const auto test = tiny_test(5);
    EvalRequest req;
    req.n_images = 5;
    req.scheme = Scheme::ste_direct;
    CHECK_THROWS_AS(evaluate_scheme(ckpt, req, test), StageMismatchError);
    Checkpoint digital = ckpt;
    digital.stage = Stage::digital;
    digital.modulator = Modulator::create(ModulatorConfig{}, make_square_qam(4), 8);
    req.scheme = Scheme::analog;
    CHECK_THROWS_AS(evaluate_scheme(digital, req, test), StageMismatchError);
    req.n_images = 6;
    CHECK_THROWS_AS(evaluate_scheme(ckpt, req, test), ConfigError);
}

TEST_CASE("one multiround round equals single-hop evaluation") {
    const auto ckpt = trained_analog();
    const auto test = tiny_test(10);
    EvalRequest req;
    req.snr_grid = {10.0};
    req.n_images = 10;
    req.seed = 3;
    const auto single = evaluate_scheme(ckpt, req, test);
    const auto one = multiround(ckpt, req, 1, test);
    CHECK(one.psnr_db == std::vector<double>{single[0].psnr_db});
    const auto five = multiround(ckpt, req, 5, test);
    CHECK(five.psnr_db.size() == 5);
    CHECK(five.psnr_db[0] == single[0].psnr_db);
    CHECK_THROWS_AS(multiround(ckpt, req, 0, test), ConfigError);
}

TEST_CASE("ordering report on synthetic records") {
    auto grid = passing_grid();
    const auto ok = ordering_report(grid);
    CHECK(ok.all_pass());
    CHECK(ok.text().find("all orderings hold") != std::string::npos);

    auto one = grid;
    set_cell(one, Scheme::ste_finetune, 4, 6, 40.0);
    set_cell(one, Scheme::ste_finetune, 16, 6, 40.0);
    set_cell(one, Scheme::ste_finetune, 64, 6, 40.0);
    const auto inverted = ordering_report(one);
    CHECK_FALSE(inverted.all_pass());
    bool named = false;
    for (const auto& c : inverted.checks)
        for (const auto& v : c.violations) named |= v.find("snr=6.0") != std::string::npos;
    CHECK(named);
    CHECK(inverted.text().find("ordering violations found") != std::string::npos);

    auto mflip = grid;
    for (double snr : {0.0, 6.0, 12.0}) set_cell(mflip, Scheme::ste_direct, 64, snr, 10.0);
    const auto m = ordering_report(mflip);
    CHECK_FALSE(m.all_pass());

    auto single_inversion = grid;
    set_cell(single_inversion, Scheme::ste_irregular, 4, 12, 21.0);
    set_cell(single_inversion, Scheme::ste_irregular, 16, 12, 22.0);
    set_cell(single_inversion, Scheme::ste_irregular, 64, 12, 23.0);
    for (const auto& c : ordering_report(single_inversion).checks)
        if (c.name == "ste-irregular >= ste-finetune") CHECK(c.inversions == 1);

    auto missing = grid;
    missing.pop_back();
    CHECK_THROWS_AS(ordering_report(missing), IncompleteGridError);
}

TEST_CASE("multiround report") {
    MultiroundResult a{Scheme::analog, 0, 10, 5, 0, {30, 28, 27, 26, 25}};
    MultiroundResult d{Scheme::ste_finetune, 16, 10, 5, 0, {24, 24, 24, 23.5, 23.5}};
    CHECK(multiround_report({a, d}).all_pass());
    MultiroundResult worse = d;
    worse.psnr_db = {24, 20, 19, 18, 17};
    CHECK_FALSE(multiround_report({a, worse}).all_pass());
    CHECK(multiround_report({a, worse, d}).all_pass());
    MultiroundResult rising = a;
    rising.psnr_db[3] = 27.5;
    CHECK_FALSE(multiround_report({rising, d}).all_pass());
    CHECK_THROWS_AS(multiround_report({d}), IncompleteGridError);
}

TEST_CASE("records round-trip through JSON lines") {
    const auto dir = std::filesystem::temp_directory_path() / "dsc_records";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto recs = passing_grid();
    recs[0].psnr_db = std::numeric_limits<double>::infinity();
    recs[1].ser = 0.25;
    recs[1].ber = 0.125;
    const auto path = (dir / "records.jsonl").string();
    append_records_jsonl(recs, path);
    append_records_jsonl(recs, path);
    const auto back = read_records_jsonl(path);
    REQUIRE(back.size() == 2 * recs.size());
    CHECK(std::isinf(back[0].psnr_db));
    CHECK(back[1].ser == 0.25);
    CHECK(back[recs.size() + 2].psnr_db == recs[2].psnr_db);
    write_summary_csv(recs, (dir / "summary.csv").string());
    std::ifstream in(dir / "summary.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "scheme,M,snr,mean_psnr,std");
    std::filesystem::remove_all(dir);
}

}
