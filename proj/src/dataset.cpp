#include "dsc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dsc/errors.hpp"
#include "dsc/rng.hpp"

namespace dsc {

namespace fs = std::filesystem;

Dataset Dataset::head(std::size_t count) const {
    Dataset d;
    d.name = name;
    d.images.assign(images.begin(), images.begin() + std::ptrdiff_t(std::min(count, images.size())));
    return d;
}

Dataset load_cifar10(const std::string& root, Split split, std::size_t limit) {
    constexpr std::size_t kRecord = 1 + 3072;
    std::vector<std::string> files;
    if (split == Split::train) {
        for (int k = 1; k <= 5; ++k) files.push_back("data_batch_" + std::to_string(k) + ".bin");
    } else {
        files.push_back("test_batch.bin");
    }
    Dataset d;
    d.name = "cifar10";
    std::vector<unsigned char> record(kRecord);
    for (const auto& f : files) {
        fs::path p = fs::path(root) / f;
        if (!fs::exists(p)) p = fs::path(root) / "cifar-10-batches-bin" / f;
        std::ifstream in(p, std::ios::binary);
        if (!in) throw MissingFileError("CIFAR-10 file not found: " + p.string());
        while (d.images.size() < limit && in.read(reinterpret_cast<char*>(record.data()), kRecord)) {
            ImageSample im(3, 32, 32);
            for (std::size_t k = 0; k < 3072; ++k) im.pixels[k] = record[1 + k] / 255.0;
            d.images.push_back(std::move(im));
        }
        if (d.images.size() >= limit) break;
    }
    return d;
}

void save_ppm(const ImageSample& image, const std::string& path) {
    if (image.channels != 3) throw ConfigError("PPM output needs three channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingFileError("cannot write " + path);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    const std::size_t plane = std::size_t(image.height) * image.width;
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(image.pixels[c * plane + p], 0.0, 1.0);
            out.put(char(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
}

ImageSample load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open " + path);
    auto next_token = [&in]() {
        std::string tok;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(ch);
        }
        return tok;
    };
    if (next_token() != "P6") throw FormatError(path + ": not a binary PPM (P6)");
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) throw FormatError(path + ": only maxval 255 is supported");
    ImageSample im(3, h, w);
    const std::size_t plane = std::size_t(h) * w;
    std::vector<unsigned char> raw(plane * 3);
    if (!in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
        throw FormatError(path + ": truncated pixel data");
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) im.pixels[c * plane + p] = raw[p * 3 + c] / 255.0;
    return im;
}

Dataset load_image_folder(const std::string& dir, std::size_t limit) {
    if (!fs::is_directory(dir)) throw MissingFileError("image folder not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    Dataset d;
    d.name = "image-folder";
    for (const auto& f : files) {
        if (d.images.size() >= limit) break;
        d.images.push_back(load_ppm(f.string()));
    }
    if (d.images.empty()) throw MissingFileError("no .ppm images in " + dir);
    return d;
}

Dataset make_synthetic_textures(std::size_t count, std::uint64_t seed, Split split, int height, int width) {
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    Dataset d;
    d.name = "synthetic";
    d.images.reserve(count);
    for (std::size_t idx = 0; idx < count; ++idx) {
        Rng rng(derive_seed(seed, {split == Split::train ? 0u : 1u, idx}));
        ImageSample im(3, height, width);
        const std::size_t plane = std::size_t(height) * width;

        double c0[3], c1[3];
        for (int c = 0; c < 3; ++c) {
            c0[c] = rng.uniform(0.1, 0.9);
            c1[c] = rng.uniform(0.1, 0.9);
        }
        const double theta = rng.uniform(0.0, kTwoPi);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double u = ((x - width / 2.0) * std::cos(theta) + (y - height / 2.0) * std::sin(theta)) / width;
                const double t = std::clamp(0.5 + u, 0.0, 1.0);
                for (int c = 0; c < 3; ++c) im.pixels[c * plane + y * width + x] = c0[c] + (c1[c] - c0[c]) * t;
            }
        }

        const int gratings = 1 + int(rng.index(3));
        for (int g = 0; g < gratings; ++g) {
            const double freq = rng.uniform(0.04, 0.3);
            const double phi = rng.uniform(0.0, std::numbers::pi);
            const double phase = rng.uniform(0.0, kTwoPi);
            const double amp = rng.uniform(0.04, 0.2);
            double col[3];
            for (auto& v : col) v = rng.uniform(-1.0, 1.0);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double s = amp * std::sin(kTwoPi * freq * (x * std::cos(phi) + y * std::sin(phi)) + phase);
                    for (int c = 0; c < 3; ++c) im.pixels[c * plane + y * width + x] += s * col[c];
                }
            }
        }

        const int shapes = 1 + int(rng.index(4));
        for (int s = 0; s < shapes; ++s) {
            const bool disc = rng.bernoulli(0.5);
            const double cx = rng.uniform(0.0, width);
            const double cy = rng.uniform(0.0, height);
            const double rx = rng.uniform(2.5, width / 3.0);
            const double ry = disc ? rx : rng.uniform(2.5, height / 3.0);
            const double soft = rng.uniform(0.5, 2.0);
            double col[3];
            for (auto& v : col) v = rng.uniform(0.0, 1.0);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double dist = disc ? std::hypot(x - cx, y - cy) - rx
                                             : std::max(std::abs(x - cx) - rx, std::abs(y - cy) - ry);
                    const double alpha = 1.0 / (1.0 + std::exp(dist / soft));
                    for (int c = 0; c < 3; ++c) {
                        double& p = im.pixels[c * plane + y * width + x];
                        p = (1.0 - alpha) * p + alpha * col[c];
                    }
                }
            }
        }

        for (auto& p : im.pixels) p = std::clamp(p + rng.normal(0.015), 0.0, 1.0);
        d.images.push_back(std::move(im));
    }
    return d;
}

Dataset load_dataset(const std::string& name, const std::string& root, Split split, std::size_t limit,
                     std::uint64_t synthetic_seed, int height, int width) {
    if (name == "synthetic") return make_synthetic_textures(limit, synthetic_seed, split, height, width);
    std::string dir = root;
    if (dir.empty()) {
        if (const char* env = std::getenv(kDataRootEnv)) dir = env;
    }
    if (dir.empty()) throw MissingFileError("dataset root not set (config io.data_root or $" + std::string(kDataRootEnv) + ")");
    if (name == "cifar10") return load_cifar10(dir, split, limit);
    if (name == "image-folder")
        return load_image_folder((fs::path(dir) / (split == Split::train ? "train" : "test")).string(), limit);
    throw ConfigError("unknown dataset: " + name);
}

}  // namespace dsc
