#include "advfield/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "advfield/tensor_io.hpp"
#include "advfield/transforms.hpp"

namespace advfield {

void SynthConfig::validate() const {
    if (height < 8 || width < 8) throw ConfigError("synth: extents must be >= 8");
    if (!(radius_min > 0.0) || radius_min > radius_max) {
        throw ConfigError("synth: radius range must satisfy 0 < min <= max");
    }
    if (!(thickness_min > 0.0) || thickness_min > thickness_max) {
        throw ConfigError("synth: thickness range must satisfy 0 < min <= max");
    }
    if (center_jitter < 0.0 || noise_level < 0.0 || texture_sigma < 0.0 ||
        texture_amplitude < 0.0) {
        throw ConfigError("synth: amounts must be non-negative");
    }
    if (!(ring_intensity_min > 0.0) || ring_intensity_min > ring_intensity_max ||
        ring_intensity_max > 1.0) {
        throw ConfigError("synth: ring intensity range must lie in (0,1]");
    }
    if (background_level < 0.0 || background_level > 1.0) {
        throw ConfigError("synth: background level must lie in [0,1]");
    }
    // the outer ring edge must stay inside the frame for the worst draw
    const double worst = center_jitter + radius_max + 0.5 * thickness_max;
    if (worst >= 0.48) {
        throw ConfigError("synth: ring can leave the frame; shrink radius/thickness/jitter");
    }
}

namespace {

Sample synthesize_one(const SynthConfig& cfg, std::uint64_t seed, const std::string& id) {
    const std::size_t h = cfg.height, w = cfg.width;
    const double unit = static_cast<double>(std::min(h, w));
    Rng rng(seed);

    const double cx = 0.5 * static_cast<double>(w - 1) +
                      rng.uniform(-cfg.center_jitter, cfg.center_jitter) * unit;
    const double cy = 0.5 * static_cast<double>(h - 1) +
                      rng.uniform(-cfg.center_jitter, cfg.center_jitter) * unit;
    const double radius = rng.uniform(cfg.radius_min, cfg.radius_max) * unit;
    const double thickness = rng.uniform(cfg.thickness_min, cfg.thickness_max) * unit;
    const double ring_intensity =
        rng.uniform(cfg.ring_intensity_min, cfg.ring_intensity_max);

    Tensor texture(Shape{h, w});
    if (cfg.texture_amplitude > 0.0) {
        for (std::size_t i = 0; i < texture.numel(); ++i) texture[i] = rng.uniform(-1.0, 1.0);
        texture = gaussian_smooth(texture, cfg.texture_sigma);
        const double m = max_abs(texture);
        if (m > 0.0) texture = scale(texture, cfg.texture_amplitude / m);
    }

    Tensor image(Shape{h, w});
    Tensor mask(Shape{h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double d = std::abs(std::hypot(dx, dy) - radius);
            // 1-pixel linear anti-aliasing band around the ring border
            const double coverage = std::clamp(0.5 * thickness - d + 0.5, 0.0, 1.0);
            const double bg = cfg.background_level + texture[y * w + x];
            double v = bg * (1.0 - coverage) + ring_intensity * coverage;
            if (cfg.noise_level > 0.0) v += rng.uniform(-cfg.noise_level, cfg.noise_level);
            image.at(y, x) = std::clamp(v, 0.0, 1.0);
            mask.at(y, x) = d < 0.5 * thickness ? 1.0 : 0.0;
        }
    }

    Sample s;
    s.image = std::move(image);
    s.mask = std::move(mask);
    s.id = id;
    s.meta["source"] = "synth";
    return s;
}

} // namespace

std::vector<Sample> generate_synthetic(const SynthConfig& cfg, std::size_t count) {
    cfg.validate();
    if (count < 1) throw ConfigError("synth: count must be >= 1");
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "s%05zu", i);
        Sample s;
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt >= 10) throw Error("synth: could not draw a non-empty mask");
            s = synthesize_one(cfg, derive_seed(cfg.seed, i, attempt), id);
            if (sum(*s.mask) > 0.0) break; // regenerate degenerate draws
        }
        out.push_back(std::move(s));
    }
    return out;
}

DatasetSplit split_dataset(const std::vector<Sample>& dataset, const SplitFractions& f,
                           std::uint64_t seed) {
    for (double v : {f.train, f.val, f.test, f.unlabelled}) {
        if (v < 0.0) throw ConfigError("split: fractions must be non-negative");
    }
    if (f.train + f.val + f.test + f.unlabelled > 1.0 + 1e-12) {
        throw ConfigError("split: fractions must sum to at most 1");
    }
    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const auto boundary = [n](double cum) {
        return static_cast<std::size_t>(std::llround(cum * static_cast<double>(n)));
    };
    const std::size_t b1 = boundary(f.train);
    const std::size_t b2 = boundary(f.train + f.val);
    const std::size_t b3 = boundary(f.train + f.val + f.test);
    const std::size_t b4 = boundary(f.train + f.val + f.test + f.unlabelled);

    DatasetSplit split;
    for (std::size_t i = 0; i < b1; ++i) split.train.push_back(dataset[order[i]]);
    for (std::size_t i = b1; i < b2; ++i) split.val.push_back(dataset[order[i]]);
    for (std::size_t i = b2; i < b3; ++i) split.test.push_back(dataset[order[i]]);
    for (std::size_t i = b3; i < b4; ++i) {
        Sample s = dataset[order[i]];
        s.mask.reset(); // the unlabelled split carries no masks at all
        split.unlabelled.push_back(std::move(s));
    }
    return split;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& dataset,
                  const KvConfig& config_echo, bool previews) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    if (previews) fs::create_directories(dir / "preview");

    nlohmann::json manifest;
    manifest["format"] = "advfield-dataset-v1";
    nlohmann::json samples = nlohmann::json::array();
    for (const Sample& s : dataset) {
        if (s.image.rank() != 2) throw ShapeError("save_dataset: images must be {H,W}");
        nlohmann::json e;
        e["id"] = s.id;
        e["height"] = s.image.extent(0);
        e["width"] = s.image.extent(1);
        e["labelled"] = s.labelled();
        e["meta"] = s.meta;
        samples.push_back(e);
        save_tensor(dir / "images" / (s.id + ".advf"), s.image);
        if (s.labelled()) save_tensor(dir / "masks" / (s.id + ".advf"), *s.mask);
        if (previews) {
            save_pgm(dir / "preview" / (s.id + ".pgm"), s.image);
            if (s.labelled()) {
                save_pgm(dir / "preview" / (s.id + "_mask.pgm"), *s.mask, 0.0,
                         std::max(1.0, max_value(*s.mask)));
            }
        }
    }
    manifest["samples"] = samples;
    manifest["config"] = config_echo.entries();

    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw IoError("save_dataset: cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("save_dataset: stream failure");
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("load_dataset: missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_dataset: corrupt manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "advfield-dataset-v1") {
        throw IoError("load_dataset: unknown dataset format");
    }
    std::vector<Sample> out;
    for (const auto& e : manifest.at("samples")) {
        Sample s;
        s.id = e.at("id").get<std::string>();
        s.image = load_tensor(dir / "images" / (s.id + ".advf"));
        const auto h = e.at("height").get<std::size_t>();
        const auto w = e.at("width").get<std::size_t>();
        if (s.image.rank() != 2 || s.image.extent(0) != h || s.image.extent(1) != w) {
            throw IoError("load_dataset: extent mismatch for sample " + s.id);
        }
        if (e.at("labelled").get<bool>()) {
            s.mask = load_tensor(dir / "masks" / (s.id + ".advf"));
            require_same_shape(*s.mask, s.image, "load_dataset mask");
        }
        if (e.contains("meta")) {
            s.meta = e.at("meta").get<std::map<std::string, std::string>>();
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace advfield
