#include "dsc/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dsc/errors.hpp"

namespace dsc {

using nlohmann::json;

namespace {

// Reads one object section, remembering which keys were consumed so that
// anything left over can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void read(const char* key, T& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw SchemaError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw SchemaError("");
                if constexpr (std::is_unsigned_v<T>) {
                    if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw SchemaError("");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw SchemaError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw SchemaError("");
            }
            out = v.get<T>();
        } catch (const std::exception&) {
            throw SchemaError(path_ + "." + key + ": wrong type");
        }
    }

    void read_snr_list(const char* key, std::vector<double>& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_array()) throw SchemaError(path_ + "." + key + ": expected an array");
        out.clear();
        for (const auto& e : v) out.push_back(snr_value(e, std::string(path_) + "." + key));
    }

    double snr_value(const json& e, const std::string& where) {
        if (e.is_number()) return e.get<double>();
        if (e.is_string() && e.get<std::string>() == "inf") return kNoiselessSnrDb;
        throw SchemaError(where + ": SNR values must be numbers or \"inf\"");
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw SchemaError(path_ + "." + it.key() + ": unknown key");
    }

    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw SchemaError(msg);
}

json snr_json(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

json snr_list_json(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(snr_json(x));
    return a;
}

const std::set<std::string> kSchemes{"analog", "ste-direct", "ste-finetune", "ste-irregular", "probabilistic"};

}  // namespace

json to_json(const Architecture& a) {
    return {{"channels", a.channels},     {"height", a.height},
            {"width", a.width},           {"hidden1", a.hidden1},
            {"hidden2", a.hidden2},       {"latent_channels", a.latent_channels},
            {"leaky_slope", a.leaky_slope}};
}

Architecture architecture_from_json(const json& j) {
    Architecture a;
    Section s(j, "model");
    s.read("channels", a.channels);
    s.read("height", a.height);
    s.read("width", a.width);
    s.read("hidden1", a.hidden1);
    s.read("hidden2", a.hidden2);
    s.read("latent_channels", a.latent_channels);
    s.read("leaky_slope", a.leaky_slope);
    s.finish();
    try {
        a.validate();
    } catch (const ConfigError& e) {
        throw SchemaError(std::string("model: ") + e.what());
    }
    return a;
}

json to_json(const ModulatorConfig& m) {
    return {{"family", to_string(m.family)},
            {"bridge", to_string(m.bridge)},
            {"levels", m.levels},
            {"codebook_size", m.codebook_size},
            {"block_dim", m.block_dim},
            {"tau", m.tau},
            {"beta", m.beta},
            {"nn_approx", m.nn_approx},
            {"deterministic_eval", m.deterministic_eval}};
}

ModulatorConfig modulator_config_from_json(const json& j) {
    ModulatorConfig m;
    Section s(j, "modulator");
    std::string family = to_string(m.family), bridge = to_string(m.bridge);
    s.read("family", family);
    s.read("bridge", bridge);
    s.read("levels", m.levels);
    s.read("codebook_size", m.codebook_size);
    s.read("block_dim", m.block_dim);
    s.read("tau", m.tau);
    s.read("beta", m.beta);
    s.read("nn_approx", m.nn_approx);
    s.read("deterministic_eval", m.deterministic_eval);
    s.finish();
    try {
        m.family = modulator_family_from_string(family);
        m.bridge = gradient_bridge_from_string(bridge);
        m.validate();
    } catch (const SchemaError&) {
        throw;
    } catch (const ConfigError& e) {
        throw SchemaError(std::string("modulator: ") + e.what());
    }
    return m;
}

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig cfg;
    Section top(doc, "config");
    require(top.has("version"), "config.version: missing (required)");
    top.read("version", cfg.version);
    require(cfg.version == kConfigVersion, "config.version: unsupported version " + std::to_string(cfg.version));
    require(top.has("seed"), "config.seed: missing (master seed is required)");
    top.read("seed", cfg.seed);

    if (top.has("model")) cfg.model = architecture_from_json(top.raw("model"));
    if (top.has("modulator")) cfg.modulator = modulator_config_from_json(top.raw("modulator"));

    if (top.has("train")) {
        Section s(top.raw("train"), "train");
        auto& t = cfg.train;
        s.read("epochs_analog", t.epochs_analog);
        s.read("epochs_finetune", t.epochs_finetune);
        s.read("epochs_direct", t.epochs_direct);
        s.read("batch_size", t.batch_size);
        s.read("lr_analog", t.lr_analog);
        s.read("lr_finetune", t.lr_finetune);
        s.read("lr_direct", t.lr_direct);
        s.read_snr_list("snr_db", t.snr_db);
        s.read("tau_start", t.tau_start);
        s.read("tau_end", t.tau_end);
        s.finish();
        require(t.epochs_analog >= 0 && t.epochs_finetune >= 0 && t.epochs_direct >= 0, "train: epochs must be >= 0");
        require(t.batch_size > 0, "train.batch_size: must be positive");
        require(t.lr_analog >= 0 && t.lr_finetune >= 0 && t.lr_direct >= 0, "train: learning rates must be >= 0");
        require(t.tau_start > 0 && t.tau_end > 0, "train: temperatures must be positive");
    }

    if (top.has("constellation")) {
        Section s(top.raw("constellation"), "constellation");
        auto& c = cfg.constellation;
        s.read("kind", c.kind);
        s.read("order", c.order);
        s.read("spacing", c.spacing);
        s.read("learnable", c.learnable);
        s.read("kmeans_max_iters", c.kmeans_max_iters);
        s.read("design_images", c.design_images);
        s.finish();
        try {
            constellation_kind_from_string(c.kind);
        } catch (const ConfigError& e) {
            throw SchemaError(std::string("constellation.kind: ") + e.what());
        }
        require(c.order >= 2 && (c.order & (c.order - 1)) == 0, "constellation.order: must be a power of two");
        require(c.spacing > 0, "constellation.spacing: must be positive");
        require(c.kmeans_max_iters > 0, "constellation.kmeans_max_iters: must be positive");
        require(c.design_images > 0, "constellation.design_images: must be positive");
    }

    if (top.has("channel")) {
        Section s(top.raw("channel"), "channel");
        auto& c = cfg.channel;
        std::string kind = to_string(c.kind);
        s.read("kind", kind);
        if (s.has("snr_db")) c.snr_db = s.snr_value(s.raw("snr_db"), "channel.snr_db");
        s.read("p", c.p);
        s.read("seed", c.seed);
        s.finish();
        try {
            c.kind = channel_kind_from_string(kind);
            c.validate();
        } catch (const ConfigError& e) {
            throw SchemaError(std::string("channel: ") + e.what());
        }
    }

    if (top.has("eval")) {
        Section s(top.raw("eval"), "eval");
        auto& e = cfg.eval;
        s.read_snr_list("snr_grid", e.snr_grid);
        s.read("orders", e.orders);
        s.read("schemes", e.schemes);
        s.read("n_images", e.n_images);
        s.read("rounds", e.rounds);
        if (s.has("multiround_snr_db")) e.multiround_snr_db = s.snr_value(s.raw("multiround_snr_db"), "eval.multiround_snr_db");
        s.read("multiround_images", e.multiround_images);
        s.finish();
        require(!e.snr_grid.empty(), "eval.snr_grid: must not be empty");
        require(!e.orders.empty(), "eval.orders: must not be empty");
        for (int m : e.orders) require(m == 4 || m == 16 || m == 64 || m == 256, "eval.orders: each must be 4, 16, 64 or 256");
        for (const auto& sc : e.schemes) require(kSchemes.count(sc) > 0, "eval.schemes: unknown scheme " + sc);
        require(e.n_images > 0 && e.multiround_images > 0, "eval: image counts must be positive");
        require(e.rounds >= 1, "eval.rounds: must be >= 1");
    }

    if (top.has("io")) {
        Section s(top.raw("io"), "io");
        auto& io = cfg.io;
        s.read("dataset", io.dataset);
        s.read("data_root", io.data_root);
        s.read("train_size", io.train_size);
        s.read("test_size", io.test_size);
        s.finish();
        require(io.dataset == "synthetic" || io.dataset == "cifar10" || io.dataset == "image-folder",
                "io.dataset: must be synthetic, cifar10 or image-folder");
        require(io.train_size > 0 && io.test_size > 0, "io: dataset sizes must be positive");
    }
    top.finish();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("config file not found: " + path);
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
    json j;
    j["version"] = cfg.version;
    j["seed"] = cfg.seed;
    j["model"] = to_json(cfg.model);
    j["modulator"] = to_json(cfg.modulator);
    const auto& t = cfg.train;
    j["train"] = {{"epochs_analog", t.epochs_analog}, {"epochs_finetune", t.epochs_finetune},
                  {"epochs_direct", t.epochs_direct}, {"batch_size", t.batch_size},
                  {"lr_analog", t.lr_analog},         {"lr_finetune", t.lr_finetune},
                  {"lr_direct", t.lr_direct},         {"snr_db", snr_list_json(cfg.train_snr())},
                  {"tau_start", t.tau_start},         {"tau_end", t.tau_end}};
    const auto& c = cfg.constellation;
    j["constellation"] = {{"kind", c.kind},
                          {"order", c.order},
                          {"spacing", c.spacing},
                          {"learnable", c.learnable},
                          {"kmeans_max_iters", c.kmeans_max_iters},
                          {"design_images", c.design_images}};
    j["channel"] = {{"kind", to_string(cfg.channel.kind)},
                    {"snr_db", snr_json(cfg.channel.snr_db)},
                    {"p", cfg.channel.p},
                    {"seed", cfg.channel.seed}};
    const auto& e = cfg.eval;
    j["eval"] = {{"snr_grid", snr_list_json(e.snr_grid)},
                 {"orders", e.orders},
                 {"schemes", e.schemes},
                 {"n_images", e.n_images},
                 {"rounds", e.rounds},
                 {"multiround_snr_db", snr_json(e.multiround_snr_db)},
                 {"multiround_images", e.multiround_images}};
    j["io"] = {{"dataset", cfg.io.dataset},
               {"data_root", cfg.io.data_root},
               {"train_size", cfg.io.train_size},
               {"test_size", cfg.io.test_size}};
    return j;
}

std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

json config_schema() {
    auto integer = [](int minimum) { return json{{"type", "integer"}, {"minimum", minimum}}; };
    auto number = json{{"type", "number"}};
    auto positive = json{{"type", "number"}, {"exclusiveMinimum", 0}};
    auto snr = json{{"oneOf", json::array({json{{"type", "number"}}, json{{"const", "inf"}}})}};
    auto object = [](json props, json required = json::array()) {
        return json{{"type", "object"}, {"additionalProperties", false}, {"properties", props}, {"required", required}};
    };
    json schema = object(
        {{"version", json{{"const", kConfigVersion}}},
         {"seed", integer(0)},
         {"model", object({{"channels", integer(1)},
                           {"height", integer(8)},
                           {"width", integer(8)},
                           {"hidden1", integer(1)},
                           {"hidden2", integer(1)},
                           {"latent_channels", integer(1)},
                           {"leaky_slope", number}})},
         {"train", object({{"epochs_analog", integer(0)},
                           {"epochs_finetune", integer(0)},
                           {"epochs_direct", integer(0)},
                           {"batch_size", integer(1)},
                           {"lr_analog", number},
                           {"lr_finetune", number},
                           {"lr_direct", number},
                           {"snr_db", json{{"type", "array"}, {"items", snr}}},
                           {"tau_start", positive},
                           {"tau_end", positive}})},
         {"modulator", object({{"family", json{{"enum", {"scalar", "symbol", "vector", "probabilistic"}}}},
                               {"bridge", json{{"enum", {"ste", "soft-to-hard", "uniform-noise"}}}},
                               {"levels", integer(2)},
                               {"codebook_size", integer(2)},
                               {"block_dim", integer(1)},
                               {"tau", positive},
                               {"beta", json{{"type", "number"}, {"minimum", 0}}},
                               {"nn_approx", json{{"type", "boolean"}}},
                               {"deterministic_eval", json{{"type", "boolean"}}}})},
         {"constellation", object({{"kind", json{{"enum", {"square-qam", "learnable-spacing", "irregular"}}}},
                                   {"order", integer(2)},
                                   {"spacing", positive},
                                   {"learnable", json{{"type", "boolean"}}},
                                   {"kmeans_max_iters", integer(1)},
                                   {"design_images", integer(1)}})},
         {"channel", object({{"kind", json{{"enum", {"awgn", "bsc", "bec"}}}},
                             {"snr_db", snr},
                             {"p", json{{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
                             {"seed", integer(0)}})},
         {"eval", object({{"snr_grid", json{{"type", "array"}, {"items", snr}, {"minItems", 1}}},
                          {"orders", json{{"type", "array"}, {"items", json{{"enum", {4, 16, 64, 256}}}}}},
                          {"schemes",
                           json{{"type", "array"},
                                {"items", json{{"enum", {"analog", "ste-direct", "ste-finetune", "ste-irregular",
                                                         "probabilistic"}}}}}},
                          {"n_images", integer(1)},
                          {"rounds", integer(1)},
                          {"multiround_snr_db", snr},
                          {"multiround_images", integer(1)}})},
         {"io", object({{"dataset", json{{"enum", {"synthetic", "cifar10", "image-folder"}}}},
                        {"data_root", json{{"type", "string"}}},
                        {"train_size", integer(1)},
                        {"test_size", integer(1)}})}},
        json::array({"version", "seed"}));
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema";
    schema["title"] = "dsc experiment config";
    return schema;
}

}  // namespace dsc
