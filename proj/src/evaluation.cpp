#include "dsc/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "dsc/errors.hpp"
#include "dsc/link.hpp"
#include "dsc/training.hpp"

namespace dsc {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kEvalBatch = 50;

json number_or_inf(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double read_number(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        throw FormatError("expected a number or \"inf\", got \"" + s + "\"");
    }
    return j.get<double>();
}

std::string fmt(double v, int prec = 3) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

// Average that keeps +inf when all entries are +inf.
double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double gap(double hi, double lo) {
    if (hi == lo) return 0.0;
    return hi - lo;
}

struct PreparedScheme {
    std::optional<Modulator> modulator;
    int order = 0;
};

PreparedScheme prepare(const Checkpoint& ckpt, const EvalRequest& req) {
    PreparedScheme p;
    if (req.scheme == Scheme::analog) {
        if (ckpt.stage != Stage::analog)
            throw StageMismatchError("the analog scheme needs an analog-stage checkpoint, got " + to_string(ckpt.stage));
        return p;
    }
    const int d = ckpt.architecture.latent_dim();
    if (ckpt.modulator) {
        p.modulator = *ckpt.modulator;
        if (req.constellation) {
            p.modulator->constellation = *req.constellation;
            if (p.modulator->config.family == ModulatorFamily::probabilistic &&
                p.modulator->head.order != req.constellation->order)
                p.modulator->head = ProbabilisticHead::from_constellation(*req.constellation, 0.1);
        }
    } else {
        if (!req.constellation)
            throw StageMismatchError("scheme " + to_string(req.scheme) +
                                     " needs a digital checkpoint or an explicit constellation");
        ModulatorConfig mc;
        mc.family = req.scheme == Scheme::probabilistic ? ModulatorFamily::probabilistic : ModulatorFamily::symbol;
        p.modulator = Modulator::create(mc, *req.constellation, d);
    }
    p.modulator->validate(d);
    const auto& m = *p.modulator;
    p.order = m.constellation.order > 0 ? m.constellation.order : m.config.levels * m.config.levels;
    return p;
}

std::uint64_t cell_seed(std::uint64_t seed, Scheme scheme, int order, double snr) {
    return derive_seed(seed, {std::uint64_t(scheme), std::uint64_t(order), std::bit_cast<std::uint64_t>(snr)});
}

struct HopResult {
    std::vector<ImageSample> outputs;
    LinkStats stats;
};

// Sends every image once through encoder, link and decoder.
HopResult run_hop(const LatentModel& model, const Link& link, const std::vector<ImageSample>& images, double snr,
                  Rng& rng) {
    HopResult r;
    r.outputs.reserve(images.size());
    ChannelConfig ch;
    ch.snr_db = snr;
    for (std::size_t first = 0; first < images.size(); first += kEvalBatch) {
        const std::size_t count = std::min<std::size_t>(kEvalBatch, images.size() - first);
        const auto batch = to_batch(std::span<const ImageSample>(images).subspan(first, count));
        const auto rx = link.forward(model.encode_batch(batch), ch, Mode::eval, 1.0, rng, nullptr, &r.stats);
        const auto out = model.decode_batch(rx);
        for (int n = 0; n < int(count); ++n) r.outputs.push_back(from_batch(out, n));
    }
    return r;
}

std::pair<double, double> psnr_stats(const std::vector<ImageSample>& ref, const std::vector<ImageSample>& out) {
    std::vector<double> v(ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) v[k] = psnr(ref[k], out[k]);
    const double m = mean_of(v);
    if (std::isinf(m)) return {m, 0.0};
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return {m, v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0};
}

OrderingCheck pair_check(const std::string& name, const std::map<double, double>& hi,
                         const std::map<double, double>& lo, double hi_avg, double lo_avg, int max_inversions) {
    OrderingCheck c;
    c.name = name;
    c.margin = gap(hi_avg, lo_avg);
    for (const auto& [snr, h] : hi) {
        const double l = lo.at(snr);
        if (h < l) {
            ++c.inversions;
            c.violations.push_back("snr=" + fmt(snr, 1) + " dB: " + fmt(h) + " < " + fmt(l));
        }
    }
    c.pass = c.margin >= 0.0 && c.inversions <= max_inversions;
    return c;
}

}  // namespace

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::analog: return "analog";
        case Scheme::ste_direct: return "ste-direct";
        case Scheme::ste_finetune: return "ste-finetune";
        case Scheme::ste_irregular: return "ste-irregular";
        case Scheme::probabilistic: return "probabilistic";
    }
    return "?";
}

Scheme scheme_from_string(const std::string& s) {
    for (auto v : {Scheme::analog, Scheme::ste_direct, Scheme::ste_finetune, Scheme::ste_irregular,
                   Scheme::probabilistic})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown scheme: " + s);
}

json to_json(const ExperimentRecord& r) {
    json j{{"run_id", r.run_id},
           {"scheme", to_string(r.scheme)},
           {"order", r.order},
           {"snr_db", number_or_inf(r.snr_db)},
           {"seed", r.seed},
           {"n_images", r.n_images},
           {"psnr_db", number_or_inf(r.psnr_db)},
           {"psnr_std", r.psnr_std}};
    j["ser"] = r.ser ? json(*r.ser) : json(nullptr);
    j["ber"] = r.ber ? json(*r.ber) : json(nullptr);
    return j;
}

ExperimentRecord record_from_json(const json& j) {
    try {
        ExperimentRecord r;
        r.run_id = j.at("run_id").get<std::string>();
        r.scheme = scheme_from_string(j.at("scheme").get<std::string>());
        r.order = j.at("order").get<int>();
        r.snr_db = read_number(j.at("snr_db"));
        r.seed = j.at("seed").get<std::uint64_t>();
        r.n_images = j.at("n_images").get<int>();
        r.psnr_db = read_number(j.at("psnr_db"));
        r.psnr_std = j.at("psnr_std").get<double>();
        if (j.contains("ser") && !j["ser"].is_null()) r.ser = j["ser"].get<double>();
        if (j.contains("ber") && !j["ber"].is_null()) r.ber = j["ber"].get<double>();
        if (r.n_images <= 0) throw FormatError("record has no images");
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed record: ") + e.what());
    }
}

double mse(const ImageSample& a, const ImageSample& b) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width || a.size() != b.size())
        throw ContractViolation("image shapes differ");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double e = a.pixels[k] - b.pixels[k];
        s += e * e;
    }
    return s / double(a.size());
}

double psnr(const ImageSample& a, const ImageSample& b) {
    const double m = mse(a, b);
    if (m == 0.0) return kInf;
    return 10.0 * std::log10(1.0 / m);
}

std::vector<ExperimentRecord> evaluate_scheme(const Checkpoint& ckpt, const EvalRequest& req, const Dataset& test) {
    if (req.n_images <= 0) throw ConfigError("n_images must be positive");
    if (std::size_t(req.n_images) > test.size())
        throw ConfigError("test set has " + std::to_string(test.size()) + " images, " +
                          std::to_string(req.n_images) + " requested");
    const auto prepared = prepare(ckpt, req);
    const auto images = test.head(std::size_t(req.n_images)).images;
    std::vector<ExperimentRecord> out(req.snr_grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        const auto model = ckpt.model();
        const Link link(prepared.modulator ? &*prepared.modulator : nullptr);
        for (std::size_t cell = next++; cell < req.snr_grid.size(); cell = next++) {
            const double snr = req.snr_grid[cell];
            Rng rng(cell_seed(req.seed, req.scheme, prepared.order, snr));
            const auto hop = run_hop(model, link, images, snr, rng);
            auto& r = out[cell];
            r.run_id = req.run_id;
            r.scheme = req.scheme;
            r.order = prepared.order;
            r.snr_db = snr;
            r.seed = req.seed;
            r.n_images = req.n_images;
            std::tie(r.psnr_db, r.psnr_std) = psnr_stats(images, hop.outputs);
            if (prepared.modulator) {
                r.ser = hop.stats.symbols ? double(hop.stats.symbol_errors) / double(hop.stats.symbols) : 0.0;
                r.ber = hop.stats.bits ? double(hop.stats.bit_errors) / double(hop.stats.bits) : 0.0;
            }
        }
    };
    const int workers = std::clamp(req.workers, 1, std::max(1, int(req.snr_grid.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_lock;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard lock(failure_lock);
                    if (!failure) failure = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    return out;
}

json to_json(const MultiroundResult& r) {
    json psnrs = json::array();
    for (double v : r.psnr_db) psnrs.push_back(number_or_inf(v));
    return {{"scheme", to_string(r.scheme)}, {"order", r.order},    {"snr_db", number_or_inf(r.snr_db)},
            {"n_images", r.n_images},        {"seed", r.seed},       {"psnr_db", psnrs}};
}

MultiroundResult multiround_from_json(const json& j) {
    try {
        MultiroundResult r;
        r.scheme = scheme_from_string(j.at("scheme").get<std::string>());
        r.order = j.at("order").get<int>();
        r.snr_db = read_number(j.at("snr_db"));
        r.n_images = j.at("n_images").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& v : j.at("psnr_db")) r.psnr_db.push_back(read_number(v));
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed multiround result: ") + e.what());
    }
}

MultiroundResult multiround(const Checkpoint& ckpt, const EvalRequest& req, int rounds, const Dataset& test) {
    if (rounds < 1) throw ConfigError("multiround needs at least one round");
    if (req.snr_grid.size() != 1) throw ConfigError("multiround runs at exactly one SNR");
    if (req.n_images <= 0 || std::size_t(req.n_images) > test.size())
        throw ConfigError("multiround image count out of range");
    const auto prepared = prepare(ckpt, req);
    const auto model = ckpt.model();
    const Link link(prepared.modulator ? &*prepared.modulator : nullptr);
    const double snr = req.snr_grid[0];
    const auto seed = cell_seed(req.seed, req.scheme, prepared.order, snr);

    MultiroundResult r;
    r.scheme = req.scheme;
    r.order = prepared.order;
    r.snr_db = snr;
    r.n_images = req.n_images;
    r.seed = req.seed;
    const auto original = test.head(std::size_t(req.n_images)).images;
    auto current = original;
    for (int round = 1; round <= rounds; ++round) {
        Rng rng(round == 1 ? seed : derive_seed(seed, {std::uint64_t(round)}));
        current = run_hop(model, link, current, snr, rng).outputs;
        r.psnr_db.push_back(psnr_stats(original, current).first);
    }
    return r;
}

bool OrderingReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const OrderingCheck& c) { return c.pass; });
}

std::string OrderingReport::text() const {
    std::ostringstream out;
    for (const auto& c : checks) {
        out << (c.pass ? "PASS " : "FAIL ") << c.name << "  margin=" << fmt(c.margin)
            << " inversions=" << c.inversions << '\n';
        for (const auto& v : c.violations) out << "    " << v << '\n';
    }
    out << (all_pass() ? "all orderings hold" : "ordering violations found") << '\n';
    return out.str();
}

OrderingReport ordering_report(const std::vector<ExperimentRecord>& records, const OrderingOptions& options) {
    // (scheme, order) -> snr -> psnr; later records replace earlier ones.
    std::map<std::pair<Scheme, int>, std::map<double, double>> table;
    std::set<double> snrs;
    std::set<int> orders;
    for (const auto& r : records) {
        table[{r.scheme, r.order}][r.snr_db] = r.psnr_db;
        snrs.insert(r.snr_db);
        if (r.scheme != Scheme::analog) orders.insert(r.order);
    }
    std::set<Scheme> digital_present;
    for (const auto& r : records)
        if (r.scheme != Scheme::analog) digital_present.insert(r.scheme);
    for (auto s : options.schemes)
        if (s != Scheme::analog) digital_present.insert(s);

    std::vector<std::string> missing;
    auto cell = [&](Scheme s, int m, double snr) -> double {
        const auto it = table.find({s, m});
        if (it == table.end() || !it->second.count(snr)) {
            missing.push_back(to_string(s) + " M=" + std::to_string(m) + " snr=" + fmt(snr, 1));
            return 0.0;
        }
        return it->second.at(snr);
    };
    // Per-SNR value: M-averaged for digital schemes.
    std::map<Scheme, std::map<double, double>> per_snr;
    std::map<Scheme, double> grid_avg;
    std::set<Scheme> needed(options.schemes.begin(), options.schemes.end());
    needed.insert(digital_present.begin(), digital_present.end());
    for (auto s : needed) {
        std::vector<double> all;
        for (double snr : snrs) {
            std::vector<double> v;
            if (s == Scheme::analog) {
                v.push_back(cell(s, 0, snr));
            } else {
                if (orders.empty()) missing.push_back(to_string(s) + " (no digital cells)");
                for (int m : orders) v.push_back(cell(s, m, snr));
            }
            per_snr[s][snr] = mean_of(v);
            all.insert(all.end(), v.begin(), v.end());
        }
        grid_avg[s] = mean_of(all);
    }
    if (snrs.empty()) missing.push_back("no records");
    if (!missing.empty()) {
        std::string msg = "results grid is incomplete; missing cells:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw IncompleteGridError(msg);
    }

    OrderingReport report;
    for (std::size_t k = 0; k + 1 < options.schemes.size(); ++k) {
        const auto hi = options.schemes[k];
        const auto lo = options.schemes[k + 1];
        auto c = pair_check(to_string(hi) + " >= " + to_string(lo), per_snr[hi], per_snr[lo], grid_avg[hi],
                            grid_avg[lo], options.max_inversions);
        if (hi != Scheme::analog && lo != Scheme::analog) {
            for (int m : orders)
                for (double snr : snrs) {
                    const double h = table[{hi, m}][snr];
                    const double l = table[{lo, m}][snr];
                    if (h < l)
                        c.violations.push_back("cell M=" + std::to_string(m) + " snr=" + fmt(snr, 1) +
                                               " dB: " + fmt(h) + " < " + fmt(l));
                }
        }
        report.checks.push_back(std::move(c));
    }
    for (auto s : digital_present) {
        OrderingCheck c;
        c.name = to_string(s) + " non-decreasing in M";
        c.margin = kInf;
        const std::vector<int> ms(orders.begin(), orders.end());
        for (std::size_t k = 0; k + 1 < ms.size(); ++k) {
            const auto& lo = table[{s, ms[k]}];
            const auto& hi = table[{s, ms[k + 1]}];
            std::vector<double> lv, hv;
            for (double snr : snrs) {
                lv.push_back(lo.at(snr));
                hv.push_back(hi.at(snr));
                if (hi.at(snr) < lo.at(snr)) {
                    ++c.inversions;
                    c.violations.push_back("snr=" + fmt(snr, 1) + " dB: M=" + std::to_string(ms[k + 1]) + " " +
                                           fmt(hi.at(snr)) + " < M=" + std::to_string(ms[k]) + " " + fmt(lo.at(snr)));
                }
            }
            const double g = gap(mean_of(hv), mean_of(lv));
            c.margin = std::min(c.margin, g);
            if (g < 0.0)
                c.violations.push_back("grid average: M=" + std::to_string(ms[k + 1]) + " below M=" +
                                       std::to_string(ms[k]));
        }
        if (ms.size() < 2) c.margin = 0.0;
        c.pass = c.margin >= 0.0;
        report.checks.push_back(std::move(c));
    }
    return report;
}

OrderingReport multiround_report(const std::vector<MultiroundResult>& results) {
    const MultiroundResult* analog = nullptr;
    for (const auto& r : results)
        if (r.scheme == Scheme::analog) analog = &r;
    if (!analog) throw IncompleteGridError("multiround results lack the analog scheme");
    if (analog->psnr_db.empty()) throw IncompleteGridError("analog multiround result has no rounds");
    OrderingReport report;
    OrderingCheck mono;
    mono.name = "analog PSNR non-increasing over rounds";
    mono.margin = kInf;
    for (std::size_t k = 1; k < analog->psnr_db.size(); ++k) {
        const double g = gap(analog->psnr_db[k - 1], analog->psnr_db[k]);
        mono.margin = std::min(mono.margin, g);
        if (g < 0.0) {
            ++mono.inversions;
            mono.violations.push_back("round " + std::to_string(k + 1) + ": " + fmt(analog->psnr_db[k]) + " > " +
                                      fmt(analog->psnr_db[k - 1]));
        }
    }
    if (analog->psnr_db.size() < 2) mono.margin = 0.0;
    mono.pass = mono.inversions == 0;
    report.checks.push_back(mono);
    OrderingCheck best;
    best.name = "digital drop < analog drop";
    best.margin = -kInf;
    bool any = false;
    for (const auto& r : results) {
        if (r.scheme == Scheme::analog) continue;
        if (r.psnr_db.size() != analog->psnr_db.size())
            throw IncompleteGridError("multiround results disagree on the number of rounds");
        any = true;
        const double m = analog->drop() - r.drop();
        best.margin = std::max(best.margin, m);
        if (m <= 0.0)
            best.violations.push_back(to_string(r.scheme) + " M=" + std::to_string(r.order) + ": drop " +
                                      fmt(r.drop()) + " dB vs analog " + fmt(analog->drop()) + " dB");
    }
    if (any) {
        best.pass = best.margin > 0.0;
        report.checks.push_back(std::move(best));
    }
    return report;
}

void append_records_jsonl(const std::vector<ExperimentRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw MissingFileError("cannot append to " + path);
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<ExperimentRecord> read_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("records file not found: " + path);
    std::vector<ExperimentRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw FormatError("bad JSON line in " + path + ": " + e.what());
        }
    }
    return out;
}

void write_summary_csv(const std::vector<ExperimentRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingFileError("cannot write " + path);
    out << "scheme,M,snr,mean_psnr,std\n";
    for (const auto& r : records)
        out << to_string(r.scheme) << ',' << r.order << ',' << fmt(r.snr_db, 2) << ',' << fmt(r.psnr_db, 6) << ','
            << fmt(r.psnr_std, 6) << '\n';
}

std::string make_run_id(std::uint64_t seed) {
    static std::atomic<std::uint64_t> counter{0};
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now.time_since_epoch()).count();
    char tail[24];
    std::snprintf(tail, sizeof tail, "%06llx",
                  static_cast<unsigned long long>(mix64(seed ^ std::uint64_t(ns) ^ (counter++ << 32)) & 0xffffff));
    return std::string(stamp) + "-" + tail;
}

}  // namespace dsc
