#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dsc/errors.hpp"
#include "dsc/training.hpp"
#include "support.hpp"

using namespace dsc;

namespace {

Dataset tiny_data(std::size_t n, std::uint64_t seed = 5) {
    return make_synthetic_textures(n, seed, Split::train, 8, 8);
}

TrainConfig analog_cfg(int epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 8;
    c.seed = 17;
    c.snr_db = {0.0, 10.0, 20.0};
    return c;
}

TrainConfig digital_cfg(int epochs) {
    auto c = analog_cfg(epochs);
    c.stage = Stage::digital;
    c.modulator = ModulatorConfig{};
    c.learning_rate = 1e-4;
    c.scheme = "ste-finetune";
    return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const auto arch = test::tiny_arch();
    auto cfg = analog_cfg(2);
    cfg.learning_rate = 0.0;
    const auto r = pretrain_analog(cfg, tiny_data(32), arch);
    const LatentModel init(arch, derive_seed(cfg.seed, {1}));
    CHECK(r.checkpoint.params == init.params());
    CHECK(r.step_losses.size() == 8);
}

TEST_CASE("zero epochs returns the initialization") {
    const auto arch = test::tiny_arch();
    const auto r = pretrain_analog(analog_cfg(0), tiny_data(16), arch);
    CHECK(r.checkpoint.params == LatentModel(arch, derive_seed(17, {1})).params());
    const auto f = finetune_digital(r.checkpoint, digital_cfg(0), tiny_data(16), make_square_qam(16));
    CHECK(f.checkpoint.params == r.checkpoint.params);
    CHECK(f.checkpoint.stage == Stage::digital);
    CHECK(f.epochs.empty());
}

TEST_CASE("training is deterministic and the loss decreases") {
    const auto arch = test::tiny_arch();
    const auto data = tiny_data(64);
    auto cfg = analog_cfg(6);
    cfg.learning_rate = 3e-3;
    const auto a = pretrain_analog(cfg, data, arch);
    const auto b = pretrain_analog(cfg, data, arch);
    CHECK(a.checkpoint.params == b.checkpoint.params);
    CHECK(a.step_losses == b.step_losses);
    CHECK(a.epochs.back().loss < a.epochs.front().loss);
    for (double l : a.step_losses) CHECK(std::isfinite(l));
    CHECK(a.checkpoint.stage == Stage::analog);
}

TEST_CASE("recorded final loss is reproducible from the checkpoint") {
    const auto data = tiny_data(32);
    const auto r = pretrain_analog(analog_cfg(1), data, test::tiny_arch());
    CHECK(reference_loss(r.checkpoint, data, 8) == r.checkpoint.final_loss);
    const auto bytes = serialize_checkpoint(r.checkpoint);
    CHECK(reference_loss(deserialize_checkpoint(bytes), data, 8) == r.checkpoint.final_loss);
}

TEST_CASE("temperature schedule endpoints") {
    auto cfg = digital_cfg(5);
    cfg.modulator->bridge = GradientBridge::soft_to_hard;
    cfg.tau_start = 2.0;
    cfg.tau_end = 0.05;
    CHECK(cfg.tau_at(0) == 2.0);
    CHECK(cfg.tau_at(4) == 0.05);
    CHECK(cfg.tau_at(2) == doctest::Approx(std::sqrt(2.0 * 0.05)));
    const auto base = pretrain_analog(analog_cfg(0), tiny_data(16), test::tiny_arch());
    const auto r = finetune_digital(base.checkpoint, cfg, tiny_data(16), make_square_qam(16));
    REQUIRE(r.epochs.size() == 5);
    CHECK(r.epochs.front().tau == 2.0);
    CHECK(r.epochs.back().tau == 0.05);
}

TEST_CASE("stage tags are enforced") {
    const auto arch = test::tiny_arch();
    const auto data = tiny_data(16);
    CHECK_THROWS_AS(pretrain_analog(digital_cfg(1), data, arch), StageMismatchError);
    CHECK_THROWS_AS(train_digital_direct(analog_cfg(1), data, arch, make_square_qam(4)), StageMismatchError);
    auto no_mod = digital_cfg(1);
    no_mod.modulator.reset();
    CHECK_THROWS_AS(train_digital_direct(no_mod, data, arch, make_square_qam(4)), ConfigError);
    const auto digital = train_digital_direct(digital_cfg(0), data, arch, make_square_qam(4));
    CHECK_THROWS_AS(design_constellation(digital.checkpoint, data, 4, 1), StageMismatchError);
    auto bad = digital_cfg(1);
    bad.modulator->family = ModulatorFamily::probabilistic;
    bad.modulator->bridge = GradientBridge::soft_to_hard;
    CHECK_THROWS_AS(train_digital_direct(bad, data, arch, make_square_qam(4)), ConfigError);
}

TEST_CASE("learnable constellations stay at unit power") {
    const auto arch = test::tiny_arch();
    const auto data = tiny_data(32);
    auto cfg = digital_cfg(2);
    cfg.learning_rate = 1e-2;
    cfg.learnable_constellation = true;
    const auto spaced = train_digital_direct(cfg, data, arch, make_learnable_spacing(16, 1.0));
    const auto& c1 = spaced.checkpoint.modulator->constellation;
    CHECK(std::abs(c1.mean_power() - 1.0) < 1e-9);
    CHECK_FALSE(c1 == make_square_qam(16));
    Rng rng(3);
    std::vector<IQ> bank;
    for (int k = 0; k < 400; ++k) bank.push_back({rng.normal(1.0), rng.normal(1.0)});
    const auto irregular = kmeans_constellation(bank, 16, KMeansOptions{1, 50, 10}).constellation;
    const auto r = train_digital_direct(cfg, data, arch, irregular);
    const auto& c2 = r.checkpoint.modulator->constellation;
    CHECK(std::abs(c2.mean_power() - 1.0) < 1e-9);
    CHECK_FALSE(c2.points == irregular.points);
    CHECK_THROWS_AS(train_digital_direct(cfg, data, arch, make_square_qam(16)), ConfigError);
}

TEST_CASE("every modulator family trains with finite loss") {
    const auto arch = test::tiny_arch();
    const auto data = tiny_data(32);
    std::vector<ModulatorConfig> mods(6);
    mods[1].bridge = GradientBridge::soft_to_hard;
    mods[2].bridge = GradientBridge::uniform_noise;
    mods[3].family = ModulatorFamily::scalar;
    mods[4].family = ModulatorFamily::vector;
    mods[4].codebook_size = 8;
    mods[5].family = ModulatorFamily::probabilistic;
    for (const auto& m : mods) {
        auto cfg = digital_cfg(1);
        cfg.learning_rate = 1e-3;
        cfg.modulator = m;
        const auto r = train_digital_direct(cfg, data, arch, make_square_qam(16));
        for (double l : r.step_losses) CHECK(std::isfinite(l));
        CHECK(std::isfinite(r.checkpoint.final_loss));
    }
}

TEST_CASE("constellation design") {
    const auto data = tiny_data(64);
    const auto ckpt = pretrain_analog(analog_cfg(1), data, test::tiny_arch()).checkpoint;
    const auto a = design_constellation(ckpt, data, 16, 8);
    const auto b = design_constellation(ckpt, data, 16, 8);
    CHECK(a == b);
    CHECK(a.kind == ConstellationKind::irregular);
    CHECK(std::abs(a.mean_power() - 1.0) < 1e-9);
    // 4 images x 4 symbols = 16 distinct latent pairs for 16 clusters.
    const auto exact = design_constellation(ckpt, data.head(4), 16, 8, 100, 1);
    CHECK(exact.order == 16);
}

TEST_CASE("metrics csv header") {
    const auto path = std::filesystem::temp_directory_path() / "dsc_metrics.csv";
    write_metrics_csv({{1, 0.5, 1.0, 1e-3}}, path.string());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,loss,tau,lr");
    std::filesystem::remove(path);
}

}
