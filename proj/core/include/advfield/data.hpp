#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "advfield/kvcfg.hpp"
#include "advfield/rng.hpp"
#include "advfield/sample.hpp"

namespace advfield {

// Synthetic annulus segmentation task: a bright ring (label 1) of varying
// centre, radius and thickness over a smooth textured background, plus
// pixel noise. Radius/thickness/jitter are fractions of the shorter extent.
struct SynthConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    double radius_min = 0.18, radius_max = 0.28;
    double thickness_min = 0.07, thickness_max = 0.13;
    double center_jitter = 0.08;
    double ring_intensity_min = 0.65, ring_intensity_max = 0.9;
    double background_level = 0.35;
    double texture_sigma = 8.0;
    double texture_amplitude = 0.12;
    double noise_level = 0.03;
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<Sample> generate_synthetic(const SynthConfig& cfg, std::size_t count);

struct SplitFractions {
    double train = 0.5, val = 0.1, test = 0.2, unlabelled = 0.2;
};

struct DatasetSplit {
    std::vector<Sample> train, val, test, unlabelled;
};

// Deterministic disjoint partition; the unlabelled part has masks stripped.
// Fractions must sum to at most 1 (any remainder is left out).
DatasetSplit split_dataset(const std::vector<Sample>& dataset, const SplitFractions& fractions,
                           std::uint64_t seed);

// Directory layout: manifest.json, images/<id>.advf, masks/<id>.advf for
// labelled samples, and optionally preview/<id>.pgm mirrors.
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& dataset,
                  const KvConfig& config_echo = {}, bool previews = false);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

} // namespace advfield
