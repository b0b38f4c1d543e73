#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skinseg/imgio.hpp"

namespace skinseg {

struct SamplePair {
    Image image;
    BinaryMask truth;
    std::string id;
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
};

/// Procedural stand-in for a skin dataset. Each size x size sample holds one to
/// three smoothly shaded skin-toned ellipses (the truth mask) over a noisy
/// background, plus decoys of two kinds: skin-toned shapes with high-frequency
/// texture, and smooth shapes in off-skin colours. Colour alone and texture alone
/// are therefore each only partially informative. Deterministic in `seed`.
std::vector<SamplePair> generate_synthetic_dataset(int n, int size, std::uint64_t seed);

/// Seeded shuffle, then partition. Validation and test sizes are the rounded
/// fractions of the sample count; train takes the remainder.
DatasetSplit split_dataset(const std::vector<std::string>& ids, std::array<double, 3> fractions,
                           std::uint64_t seed);
DatasetSplit split_dataset(const std::vector<SamplePair>& samples, std::array<double, 3> fractions,
                           std::uint64_t seed);

struct ManifestRecord {
    std::string id;
    std::filesystem::path image_path;
    std::filesystem::path mask_path;
};

/// Manifest JSON is an array of {id, image_path, mask_path}; relative paths are
/// resolved against the manifest's directory.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<SamplePair> load_samples(const std::filesystem::path& manifest_path);

/// Writes images/<id>.ppm, masks/<id>.pgm and manifest.json under `dir`.
void save_dataset(const std::filesystem::path& dir, const std::vector<SamplePair>& samples);

DatasetSplit read_split(const std::filesystem::path& path);
void write_split(const std::filesystem::path& path, const DatasetSplit& split);

/// Picks the samples whose ids appear in `ids`, in the order of `ids`.
std::vector<SamplePair> select_samples(const std::vector<SamplePair>& samples, const std::vector<std::string>& ids);

}  // namespace skinseg
