#include "dsc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dsc/config.hpp"
#include "dsc/errors.hpp"

namespace dsc {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'S', 'C', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct ArrayWriter {
    json index = json::array();
    std::vector<double> payload;

    void add(const std::string& name, const std::vector<int>& shape, const std::vector<double>& values) {
        index.push_back({{"name", name}, {"shape", shape}, {"offset", payload.size()}, {"count", values.size()}});
        payload.insert(payload.end(), values.begin(), values.end());
    }
};

struct ArrayReader {
    const json& index;
    const std::vector<double>& payload;

    const json& entry(const std::string& name) const {
        for (const auto& e : index)
            if (e.at("name").get<std::string>() == name) return e;
        throw FormatError("checkpoint is missing array " + name);
    }

    std::vector<double> get(const std::string& name) const {
        const auto& e = entry(name);
        const auto offset = e.at("offset").get<std::size_t>();
        const auto count = e.at("count").get<std::size_t>();
        if (offset + count > payload.size()) throw FormatError("checkpoint array out of bounds: " + name);
        return {payload.begin() + std::ptrdiff_t(offset), payload.begin() + std::ptrdiff_t(offset + count)};
    }
};

std::vector<double> flatten_points(const Constellation& c) {
    std::vector<double> v;
    for (const auto& p : c.points) {
        v.push_back(p.i);
        v.push_back(p.q);
    }
    return v;
}

template <class T>
void put(std::vector<std::uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T take(const std::vector<std::uint8_t>& in, std::size_t& at) {
    if (at + sizeof(T) > in.size()) throw FormatError("checkpoint truncated");
    T v;
    std::memcpy(&v, in.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
}

}  // namespace

std::string to_string(Stage s) { return s == Stage::analog ? "analog" : "digital"; }

Stage stage_from_string(const std::string& s) {
    if (s == "analog") return Stage::analog;
    if (s == "digital") return Stage::digital;
    throw FormatError("unknown training stage tag: " + s);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    ArrayWriter arrays;
    json params = json::array();
    for (const auto& p : ckpt.params.params) {
        arrays.add(p.name, p.shape, p.value);
        params.push_back(p.name);
    }

    json header;
    header["format"] = "dsc-checkpoint";
    header["version"] = kCheckpointVersion;
    header["architecture"] = to_json(ckpt.architecture);
    header["stage"] = to_string(ckpt.stage);
    header["seed"] = ckpt.seed;
    header["scheme"] = ckpt.scheme;
    header["train_config"] = ckpt.train_config;
    header["final_loss"] = ckpt.final_loss;
    header["params"] = params;

    if (ckpt.modulator) {
        const auto& m = *ckpt.modulator;
        json mj;
        mj["config"] = to_json(m.config);
        mj["learnable_constellation"] = m.learnable_constellation;
        if (!m.constellation.points.empty()) {
            mj["constellation"] = {{"kind", to_string(m.constellation.kind)},
                                   {"order", m.constellation.order},
                                   {"labels", m.constellation.labels}};
            arrays.add("mod.constellation.points", {m.constellation.order, 2}, flatten_points(m.constellation));
            if (!m.constellation.gaps_i.empty()) {
                arrays.add("mod.constellation.gaps_i", {int(m.constellation.gaps_i.size())}, m.constellation.gaps_i);
                arrays.add("mod.constellation.gaps_q", {int(m.constellation.gaps_q.size())}, m.constellation.gaps_q);
            }
        }
        if (!m.levels.empty()) arrays.add("mod.levels", {int(m.levels.size())}, m.levels);
        if (!m.codebook.vectors.empty()) {
            mj["codebook"] = {{"size", m.codebook.size}, {"dim", m.codebook.dim}};
            arrays.add("mod.codebook", {m.codebook.size, m.codebook.dim}, m.codebook.vectors);
        }
        if (m.head.order > 0) {
            mj["head_order"] = m.head.order;
            arrays.add("mod.head.weight", {m.head.order, 2}, m.head.weight);
            arrays.add("mod.head.bias", {m.head.order}, m.head.bias);
        }
        if (!m.nn.scale.empty()) {
            mj["nn_amplitude"] = m.nn.amplitude;
            arrays.add("mod.nn.scale", {int(m.nn.scale.size())}, m.nn.scale);
            arrays.add("mod.nn.shift", {int(m.nn.shift.size())}, m.nn.shift);
        }
        header["modulator"] = mj;
    }
    header["arrays"] = arrays.index;

    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    put(out, std::uint32_t(kCheckpointVersion));
    put(out, std::uint64_t(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    const auto* raw = reinterpret_cast<const std::uint8_t*>(arrays.payload.data());
    out.insert(out.end(), raw, raw + arrays.payload.size() * sizeof(double));
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("not a dsc checkpoint");
    std::size_t at = 8;
    const auto version = take<std::uint32_t>(bytes, at);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = take<std::uint64_t>(bytes, at);
    if (at + header_len > bytes.size()) throw FormatError("checkpoint header truncated");
    json header;
    try {
        header = json::parse(bytes.begin() + std::ptrdiff_t(at), bytes.begin() + std::ptrdiff_t(at + header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
    }
    at += header_len;
    const std::size_t payload_bytes = bytes.size() - at;
    if (payload_bytes % sizeof(double) != 0) throw FormatError("checkpoint payload is not float64-aligned");
    std::vector<double> payload(payload_bytes / sizeof(double));
    std::memcpy(payload.data(), bytes.data() + at, payload_bytes);

    try {
        Checkpoint ckpt;
        ckpt.architecture = architecture_from_json(header.at("architecture"));
        ckpt.stage = stage_from_string(header.at("stage").get<std::string>());
        ckpt.seed = header.at("seed").get<std::uint64_t>();
        ckpt.scheme = header.at("scheme").get<std::string>();
        ckpt.train_config = header.at("train_config");
        ckpt.final_loss = header.at("final_loss").get<double>();
        ArrayReader arrays{header.at("arrays"), payload};
        for (const auto& name : header.at("params")) {
            const auto n = name.get<std::string>();
            const auto& e = arrays.entry(n);
            ckpt.params.params.push_back({n, e.at("shape").get<std::vector<int>>(), arrays.get(n)});
        }
        // Validates shapes against the descriptor.
        (void)LatentModel(ckpt.architecture, ckpt.params);

        if (header.contains("modulator")) {
            const auto& mj = header.at("modulator");
            Modulator m;
            m.config = modulator_config_from_json(mj.at("config"));
            m.learnable_constellation = mj.at("learnable_constellation").get<bool>();
            if (mj.contains("constellation")) {
                auto& c = m.constellation;
                c.kind = constellation_kind_from_string(mj.at("constellation").at("kind").get<std::string>());
                c.order = mj.at("constellation").at("order").get<int>();
                c.labels = mj.at("constellation").at("labels").get<std::vector<std::string>>();
                const auto pts = arrays.get("mod.constellation.points");
                for (std::size_t k = 0; k + 1 < pts.size(); k += 2) c.points.push_back({pts[k], pts[k + 1]});
                if (c.kind == ConstellationKind::learnable_spacing) {
                    c.gaps_i = arrays.get("mod.constellation.gaps_i");
                    c.gaps_q = arrays.get("mod.constellation.gaps_q");
                }
            }
            for (const auto& e : header.at("arrays")) {
                const auto n = e.at("name").get<std::string>();
                if (n == "mod.levels") m.levels = arrays.get(n);
            }
            if (mj.contains("codebook")) {
                m.codebook.size = mj.at("codebook").at("size").get<int>();
                m.codebook.dim = mj.at("codebook").at("dim").get<int>();
                m.codebook.vectors = arrays.get("mod.codebook");
            }
            if (mj.contains("head_order")) {
                m.head.order = mj.at("head_order").get<int>();
                m.head.weight = arrays.get("mod.head.weight");
                m.head.bias = arrays.get("mod.head.bias");
            }
            if (mj.contains("nn_amplitude")) {
                m.nn.amplitude = mj.at("nn_amplitude").get<double>();
                m.nn.scale = arrays.get("mod.nn.scale");
                m.nn.shift = arrays.get("mod.nn.shift");
            }
            m.validate(ckpt.architecture.latent_dim());
            ckpt.modulator = std::move(m);
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingFileError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("checkpoint not found: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace dsc
