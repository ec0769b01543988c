#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advfield/distance.hpp"
#include "advfield/kvcfg.hpp"
#include "advfield/tape.hpp"

namespace advfield {

// Encoder-decoder segmentation net: per level two 3x3 conv+ReLU blocks and a
// 2x2 max-pool; decoder mirrors with nearest 2x upsampling, a 3x3 conv, the
// skip concatenation and a merge conv; 1x1 head + channel softmax.
struct SegNetConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t classes = 2;
    // one entry per resolution level; pooling levels = widths.size() - 1
    std::vector<std::size_t> widths = {8, 16, 32};
    std::uint64_t seed = 0;

    std::size_t depth() const { return widths.size() - 1; }
    void validate() const;
};

class SegNet {
public:
    static SegNet init(const SegNetConfig& cfg);

    const SegNetConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& params() { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }
    std::size_t param_index(const std::string& name) const;
    std::size_t param_count() const; // total scalar parameters

    // Parameters as tape nodes, aligned with params(): leaves when trainable
    // (valid backward targets), constants otherwise.
    std::vector<Var> params_on(Tape& tape, bool trainable) const;

    // Softmax probability map {C,H,W} for a {H,W} image.
    Var forward(Tape& tape, Var image, std::span<const Var> params) const;
    Var forward_frozen(Tape& tape, Var image) const;
    ProbMap predict(const Tensor& image) const;

    // Fingerprint over the raw parameter bytes; detects any mutation.
    std::uint64_t checksum() const;

private:
    SegNet() = default;
    SegNetConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
};

// --- optimizer ---

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m; // first moments, aligned with net params
    std::vector<Tensor> v; // second moments
    std::int64_t step = 0;
};

AdamState init_adam(const SegNet& net);
AdamState init_adam(const std::vector<Tensor>& params);
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg);
void adam_step(SegNet& net, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

// --- checkpointing ---
// One file: a "key = value" manifest (config, step, seed, extra entries),
// a blank line, then named tensor payloads in the binary tensor format.

void save_checkpoint(const std::filesystem::path& path, const SegNet& net,
                     const KvConfig& extra = {});
SegNet load_checkpoint(const std::filesystem::path& path,
                       KvConfig* manifest_out = nullptr);

// Shared container helpers (also used for training state).
void write_manifest_and_tensors(const std::filesystem::path& path, const KvConfig& manifest,
                                const std::vector<std::string>& names,
                                const std::vector<Tensor>& tensors);
KvConfig read_manifest_and_tensors(const std::filesystem::path& path,
                                   std::vector<std::string>& names,
                                   std::vector<Tensor>& tensors);

SegNetConfig segnet_config_from_manifest(const KvConfig& manifest);
void segnet_config_to_manifest(const SegNetConfig& cfg, KvConfig& manifest);

} // namespace advfield
