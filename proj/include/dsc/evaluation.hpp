#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsc/checkpoint.hpp"
#include "dsc/constellation.hpp"
#include "dsc/dataset.hpp"
#include "json.hpp"

namespace dsc {

enum class Scheme { analog, ste_direct, ste_finetune, ste_irregular, probabilistic };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

/// Highest-fidelity first.
inline const std::vector<Scheme> kSchemeOrdering{Scheme::analog, Scheme::ste_irregular, Scheme::ste_finetune,
                                                 Scheme::ste_direct};

struct ExperimentRecord {
    std::string run_id;
    Scheme scheme = Scheme::analog;
    /// Constellation order; 0 for the analog scheme.
    int order = 0;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    int n_images = 0;
    /// Mean per-image PSNR; +inf when every image is reconstructed exactly.
    double psnr_db = 0.0;
    double psnr_std = 0.0;
    std::optional<double> ser;
    std::optional<double> ber;
};

nlohmann::json to_json(const ExperimentRecord& r);
ExperimentRecord record_from_json(const nlohmann::json& j);

double mse(const ImageSample& a, const ImageSample& b);
/// 10 log10(1 / MSE); +inf for identical images.
double psnr(const ImageSample& a, const ImageSample& b);

struct EvalRequest {
    Scheme scheme = Scheme::analog;
    /// Replaces or supplies the constellation. A digital scheme on an analog
    /// checkpoint needs one: the model is then hard-quantized without tuning.
    std::optional<Constellation> constellation;
    std::vector<double> snr_grid{10.0};
    int n_images = 1000;
    std::uint64_t seed = 0;
    /// Concurrent grid cells; each works on its own copy of the model.
    int workers = 1;
    std::string run_id;
};

/// One record per SNR point. Deterministic in the request seed.
std::vector<ExperimentRecord> evaluate_scheme(const Checkpoint& ckpt, const EvalRequest& req, const Dataset& test);

struct MultiroundResult {
    Scheme scheme = Scheme::analog;
    int order = 0;
    double snr_db = 0.0;
    int n_images = 0;
    std::uint64_t seed = 0;
    /// PSNR(original, output of round r) for r = 1..R.
    std::vector<double> psnr_db;

    double drop() const { return psnr_db.front() - psnr_db.back(); }
};

nlohmann::json to_json(const MultiroundResult& r);
MultiroundResult multiround_from_json(const nlohmann::json& j);

/// Re-encodes each round's decoded output through the same model. Round 1
/// matches evaluate_scheme at the same SNR and seed.
MultiroundResult multiround(const Checkpoint& ckpt, const EvalRequest& req, int rounds, const Dataset& test);

struct OrderingCheck {
    std::string name;
    bool pass = true;
    /// Smallest grid-averaged gap (higher minus lower); negative on failure.
    double margin = 0.0;
    int inversions = 0;
    /// Per-point or per-cell cases where the expected order is inverted.
    std::vector<std::string> violations;
};

struct OrderingReport {
    std::vector<OrderingCheck> checks;
    bool all_pass() const;
    std::string text() const;
};

struct OrderingOptions {
    std::vector<Scheme> schemes = kSchemeOrdering;
    /// Allowed per-SNR-point inversions for each adjacent scheme pair.
    int max_inversions = 1;
};

/// Scheme ordering (grid-averaged, plus per-SNR inversions on M-averaged
/// PSNR) and PSNR non-decreasing in M for every digital scheme. Throws
/// IncompleteGridError when a scheme lacks a (M, SNR) cell.
OrderingReport ordering_report(const std::vector<ExperimentRecord>& records, const OrderingOptions& options = {});

/// Analog PSNR non-increasing over rounds; at least one digital scheme drops
/// less than analog between the first and last round.
OrderingReport multiround_report(const std::vector<MultiroundResult>& results);

void append_records_jsonl(const std::vector<ExperimentRecord>& records, const std::string& path);
std::vector<ExperimentRecord> read_records_jsonl(const std::string& path);
/// scheme, M, snr, mean psnr, std
void write_summary_csv(const std::vector<ExperimentRecord>& records, const std::string& path);

/// Fresh identifier for a results run.
std::string make_run_id(std::uint64_t seed);

}  // namespace dsc
