#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsc/latent_model.hpp"

namespace dsc {

struct Dataset {
    std::string name;
    std::vector<ImageSample> images;

    std::size_t size() const { return images.size(); }
    /// First `count` images (all of them if count exceeds the size).
    Dataset head(std::size_t count) const;
};

enum class Split { train, test };

/// CIFAR-10 binary layout: data_batch_1..5.bin / test_batch.bin, records of
/// one label byte followed by 3072 channel-major pixel bytes.
Dataset load_cifar10(const std::string& root, Split split, std::size_t limit);

/// Folder of binary PPM (P6, maxval 255) images, read in file-name order.
Dataset load_image_folder(const std::string& dir, std::size_t limit);

/// Procedural colored textures (gradients, oriented gratings, soft shapes).
/// Deterministic in (seed, index); train and test draw from disjoint streams.
Dataset make_synthetic_textures(std::size_t count, std::uint64_t seed, Split split, int height = 32, int width = 32);

void save_ppm(const ImageSample& image, const std::string& path);
ImageSample load_ppm(const std::string& path);

/// Environment variable naming the dataset root when the config leaves it empty.
inline constexpr const char* kDataRootEnv = "DSC_DATA_ROOT";

/// Dispatches on name: "cifar10", "image-folder" or "synthetic". The extent
/// only applies to the synthetic set.
Dataset load_dataset(const std::string& name, const std::string& root, Split split, std::size_t limit,
                     std::uint64_t synthetic_seed, int height = 32, int width = 32);

}  // namespace dsc
