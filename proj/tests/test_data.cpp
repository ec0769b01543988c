#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "advfield/data.hpp"
#include "support.hpp"

using namespace advfield;
using testsupport::bitwise_equal;

namespace {

SynthConfig small_synth(std::uint64_t seed = 1) {
    SynthConfig cfg;
    cfg.height = 32;
    cfg.width = 32;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_SUITE("data") {

TEST_CASE("generation is deterministic in the seed") {
    const auto a = generate_synthetic(small_synth(7), 6);
    const auto b = generate_synthetic(small_synth(7), 6);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(bitwise_equal(a[i].image, b[i].image));
        CHECK(bitwise_equal(*a[i].mask, *b[i].mask));
    }
    const auto c = generate_synthetic(small_synth(8), 1);
    CHECK_FALSE(bitwise_equal(a[0].image, c[0].image));
}

TEST_CASE("every sample is labelled, finite, in range, non-empty") {
    const auto data = generate_synthetic(small_synth(3), 10);
    for (const Sample& s : data) {
        REQUIRE(s.labelled());
        CHECK(min_value(s.image) >= 0.0);
        CHECK(max_value(s.image) <= 1.0);
        CHECK(sum(*s.mask) > 0.0);
        CHECK(max_value(*s.mask) == 1.0);
    }
}

TEST_CASE("mask area stays inside the analytic annulus bounds") {
    const SynthConfig cfg = small_synth(11);
    const double unit = 32.0;
    const double rmin = cfg.radius_min * unit, rmax = cfg.radius_max * unit;
    const double tmin = cfg.thickness_min * unit, tmax = cfg.thickness_max * unit;
    // ring area is 2*pi*r*t; allow a discretization band of one pixel around
    // the two circumferences
    const double band = 2.0 * std::numbers::pi * (rmax + 0.5 * tmax) + 8.0;
    const double lo = 2.0 * std::numbers::pi * rmin * tmin - band;
    const double hi = 2.0 * std::numbers::pi * rmax * tmax + band;
    for (const Sample& s : generate_synthetic(cfg, 20)) {
        const double area = sum(*s.mask);
        CHECK(area >= lo);
        CHECK(area <= hi);
    }
}

TEST_CASE("noise-free, texture-free images are two-level up to the border band") {
    SynthConfig cfg = small_synth(13);
    cfg.noise_level = 0.0;
    cfg.texture_amplitude = 0.0;
    const auto data = generate_synthetic(cfg, 3);
    for (const Sample& s : data) {
        std::size_t exact = 0;
        double ring = -1.0;
        for (double v : s.image.values()) {
            if (v == cfg.background_level) {
                ++exact;
            } else if (v > cfg.background_level) {
                ring = std::max(ring, v);
            }
        }
        // most pixels sit exactly on one of the two levels
        std::size_t on_ring = 0;
        for (double v : s.image.values()) on_ring += v == ring;
        CHECK(exact + on_ring > s.image.numel() * 9 / 10);
        CHECK(ring >= cfg.ring_intensity_min);
        CHECK(ring <= cfg.ring_intensity_max);
    }
}

TEST_CASE("infeasible geometry is rejected") {
    SynthConfig cfg = small_synth();
    cfg.radius_max = 0.45;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(generate_synthetic(small_synth(), 0), ConfigError);
}

TEST_CASE("split: all-train, determinism, partition laws") {
    const auto data = generate_synthetic(small_synth(17), 20);

    const DatasetSplit all = split_dataset(data, {1.0, 0.0, 0.0, 0.0}, 5);
    CHECK(all.train.size() == 20);
    CHECK(all.val.empty());
    CHECK(all.test.empty());
    CHECK(all.unlabelled.empty());

    const SplitFractions f{0.5, 0.1, 0.2, 0.2};
    const DatasetSplit s1 = split_dataset(data, f, 5);
    const DatasetSplit s2 = split_dataset(data, f, 5);
    CHECK(s1.train.size() == 10);
    CHECK(s1.val.size() == 2);
    CHECK(s1.test.size() == 4);
    CHECK(s1.unlabelled.size() == 4);

    std::set<std::string> seen;
    std::set<std::string> expected;
    for (const Sample& s : data) expected.insert(s.id);
    for (const auto* part : {&s1.train, &s1.val, &s1.test, &s1.unlabelled}) {
        for (const Sample& s : *part) {
            CHECK(seen.insert(s.id).second); // pairwise disjoint
        }
    }
    CHECK(seen == expected); // union covers the input

    auto ids = [](const std::vector<Sample>& v) {
        std::vector<std::string> out;
        for (const Sample& s : v) out.push_back(s.id);
        return out;
    };
    CHECK(ids(s1.train) == ids(s2.train));
    CHECK(ids(s1.unlabelled) == ids(s2.unlabelled));

    for (const Sample& s : s1.unlabelled) CHECK_FALSE(s.labelled());
    for (const Sample& s : s1.train) CHECK(s.labelled());

    CHECK_THROWS_AS(split_dataset(data, {0.9, 0.2, 0.0, 0.0}, 5), ConfigError);
}

TEST_CASE("dataset save/load round trip is exact") {
    const auto dir = std::filesystem::temp_directory_path() / "advfield_data_test";
    std::filesystem::remove_all(dir);
    auto data = generate_synthetic(small_synth(19), 5);
    data[3].mask.reset(); // one unlabelled sample
    KvConfig echo;
    echo.set("synth.seed", std::uint64_t{19});
    save_dataset(dir, data, echo, true);

    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "images" / "s00000.advf"));
    CHECK(std::filesystem::exists(dir / "preview" / "s00000.pgm"));
    CHECK_FALSE(std::filesystem::exists(dir / "masks" / "s00003.advf"));

    const auto back = load_dataset(dir);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].id == data[i].id);
        CHECK(bitwise_equal(back[i].image, data[i].image));
        CHECK(back[i].labelled() == data[i].labelled());
        if (data[i].labelled()) CHECK(bitwise_equal(*back[i].mask, *data[i].mask));
    }

    // corrupt manifest
    std::ofstream bad(dir / "manifest.json", std::ios::binary);
    bad << "{ not json";
    bad.close();
    CHECK_THROWS_AS(load_dataset(dir), IoError);
    CHECK_THROWS_AS(load_dataset(dir / "missing"), IoError);
    std::filesystem::remove_all(dir);
}

} // TEST_SUITE
