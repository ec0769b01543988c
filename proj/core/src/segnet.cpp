#include "advfield/segnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "advfield/rng.hpp"
#include "advfield/tensor_io.hpp"

namespace advfield {

void SegNetConfig::validate() const {
    if (classes < 2) throw ConfigError("segnet: need at least 2 classes");
    if (widths.empty()) throw ConfigError("segnet: widths must be non-empty");
    for (std::size_t wdt : widths) {
        if (wdt == 0) throw ConfigError("segnet: widths must be positive");
    }
    const std::size_t factor = std::size_t{1} << depth();
    if (height == 0 || width == 0 || height % factor != 0 || width % factor != 0) {
        throw ConfigError("segnet: extents must be divisible by 2^depth");
    }
    const std::size_t bottom = std::min(height, width) >> depth();
    if (bottom < 2) throw ConfigError("segnet: image too small for this depth");
}

namespace {

Tensor he_conv(Rng& rng, std::size_t cout, std::size_t cin, std::size_t k) {
    Tensor t(Shape{cout, cin, k, k});
    const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

} // namespace

SegNet SegNet::init(const SegNetConfig& cfg) {
    cfg.validate();
    SegNet net;
    net.cfg_ = cfg;
    Rng rng(cfg.seed);
    auto push = [&](const std::string& name, Tensor t) {
        net.names_.push_back(name);
        net.params_.push_back(std::move(t));
    };
    auto conv_block = [&](const std::string& name, std::size_t cout, std::size_t cin,
                          std::size_t k) {
        push(name + ".weight", he_conv(rng, cout, cin, k));
        push(name + ".bias", Tensor::zeros(Shape{cout}));
    };

    const auto& wd = cfg.widths;
    const std::size_t depth = cfg.depth();
    std::size_t prev = 1;
    for (std::size_t i = 0; i < depth; ++i) {
        conv_block("enc" + std::to_string(i) + ".a", wd[i], prev, 3);
        conv_block("enc" + std::to_string(i) + ".b", wd[i], wd[i], 3);
        prev = wd[i];
    }
    conv_block("bottom.a", wd[depth], prev, 3);
    conv_block("bottom.b", wd[depth], wd[depth], 3);
    for (std::size_t i = depth; i-- > 0;) {
        conv_block("dec" + std::to_string(i) + ".up", wd[i], wd[i + 1], 3);
        conv_block("dec" + std::to_string(i) + ".merge", wd[i], 2 * wd[i], 3);
    }
    conv_block("head", cfg.classes, wd[0], 1);
    return net;
}

std::size_t SegNet::param_index(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return i;
    }
    throw Error("segnet: no parameter named '" + name + "'");
}

std::size_t SegNet::param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params_) n += t.numel();
    return n;
}

std::vector<Var> SegNet::params_on(Tape& tape, bool trainable) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const Tensor& t : params_) {
        vars.push_back(trainable ? tape.leaf(t) : tape.constant(t));
    }
    return vars;
}

Var SegNet::forward(Tape& tape, Var image, std::span<const Var> params) const {
    if (image.tape != &tape) throw Error("segnet forward: image not on this tape");
    const Tensor& img = image.value();
    if (img.rank() != 2 || img.extent(0) != cfg_.height || img.extent(1) != cfg_.width) {
        throw ShapeError("segnet forward: image extents do not match config " +
                         shape_str({cfg_.height, cfg_.width}));
    }
    if (params.size() != params_.size()) {
        throw Error("segnet forward: wrong parameter count");
    }
    std::size_t pi = 0;
    auto next_block = [&](Var x) {
        Var w = params[pi++];
        Var b = params[pi++];
        return relu(bias_add(conv2d(x, w, Padding::Zero), b));
    };

    const std::size_t depth = cfg_.depth();
    Var x = reshape(image, {1, cfg_.height, cfg_.width});
    std::vector<Var> skips;
    for (std::size_t i = 0; i < depth; ++i) {
        x = next_block(x);
        x = next_block(x);
        skips.push_back(x);
        x = maxpool2(x);
    }
    x = next_block(x);
    x = next_block(x);
    for (std::size_t i = depth; i-- > 0;) {
        x = next_block(upsample2(x));
        x = concat_channels(skips[i], x);
        x = next_block(x);
    }
    Var logits = bias_add(conv2d(x, params[pi], Padding::Zero), params[pi + 1]);
    return softmax_channels(logits);
}

Var SegNet::forward_frozen(Tape& tape, Var image) const {
    const std::vector<Var> pv = params_on(tape, false);
    return forward(tape, image, pv);
}

ProbMap SegNet::predict(const Tensor& image) const {
    Tape tape;
    return ProbMap(forward_frozen(tape, tape.constant(image)).value());
}

std::uint64_t SegNet::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const Tensor& t : params_) {
        for (double v : t.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState init_adam(const std::vector<Tensor>& params) {
    AdamState st;
    for (const Tensor& t : params) {
        st.m.push_back(Tensor::zeros(t.shape()));
        st.v.push_back(Tensor::zeros(t.shape()));
    }
    return st;
}

AdamState init_adam(const SegNet& net) { return init_adam(net.params()); }

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (grads.size() != params.size()) throw Error("adam_step: gradient count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(grads[i], params[i], "adam_step");
        Tensor& p = params[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double g = grads[i][j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
        ensure_finite(p, "adam_step");
    }
}

void adam_step(SegNet& net, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
    adam_step(net.params(), grads, state, cfg);
}

// ---------------------------------------------------------------------------
// checkpoint container
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kCheckpointMagic = "ADVCKPT1";
}

void write_manifest_and_tensors(const std::filesystem::path& path, const KvConfig& manifest,
                                const std::vector<std::string>& names,
                                const std::vector<Tensor>& tensors) {
    if (names.size() != tensors.size()) {
        throw Error("checkpoint: name/tensor count mismatch");
    }
    KvConfig m = manifest;
    m.set("tensors", static_cast<std::int64_t>(tensors.size()));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
    out << kCheckpointMagic << "\n" << m.text() << "\n";
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        out << names[i] << "\n";
        write_tensor(out, tensors[i]);
    }
    if (!out) throw IoError("checkpoint: stream failure writing " + path.string());
}

KvConfig read_manifest_and_tensors(const std::filesystem::path& path,
                                   std::vector<std::string>& names,
                                   std::vector<Tensor>& tensors) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) {
        throw IoError("checkpoint: corrupt header in " + path.string());
    }
    std::string manifest_text;
    while (std::getline(in, line) && !line.empty()) {
        manifest_text += line;
        manifest_text += "\n";
    }
    const KvConfig manifest = KvConfig::parse(manifest_text);
    const auto count = static_cast<std::size_t>(manifest.get_int("tensors"));
    names.clear();
    tensors.clear();
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line) || line.empty()) {
            throw IoError("checkpoint: truncated tensor table");
        }
        names.push_back(line);
        tensors.push_back(read_tensor(in));
    }
    return manifest;
}

void segnet_config_to_manifest(const SegNetConfig& cfg, KvConfig& manifest) {
    manifest.set("net.height", static_cast<std::int64_t>(cfg.height));
    manifest.set("net.width", static_cast<std::int64_t>(cfg.width));
    manifest.set("net.classes", static_cast<std::int64_t>(cfg.classes));
    std::string widths;
    for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
        if (i) widths += ",";
        widths += std::to_string(cfg.widths[i]);
    }
    manifest.set("net.widths", widths);
    manifest.set("net.seed", cfg.seed);
}

SegNetConfig segnet_config_from_manifest(const KvConfig& manifest) {
    SegNetConfig cfg;
    cfg.height = static_cast<std::size_t>(manifest.get_int("net.height"));
    cfg.width = static_cast<std::size_t>(manifest.get_int("net.width"));
    cfg.classes = static_cast<std::size_t>(manifest.get_int("net.classes"));
    cfg.seed = manifest.get_u64("net.seed");
    cfg.widths.clear();
    std::istringstream ws(manifest.get("net.widths"));
    std::string tok;
    while (std::getline(ws, tok, ',')) {
        cfg.widths.push_back(static_cast<std::size_t>(std::stoul(tok)));
    }
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const SegNet& net,
                     const KvConfig& extra) {
    KvConfig manifest = extra;
    segnet_config_to_manifest(net.config(), manifest);
    write_manifest_and_tensors(path, manifest, net.param_names(), net.params());
}

SegNet load_checkpoint(const std::filesystem::path& path, KvConfig* manifest_out) {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    const KvConfig manifest = read_manifest_and_tensors(path, names, tensors);
    SegNet net = SegNet::init(segnet_config_from_manifest(manifest));
    if (names.size() != net.param_names().size()) {
        throw IoError("checkpoint: parameter count does not match architecture");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] != net.param_names()[i]) {
            throw IoError("checkpoint: unexpected parameter '" + names[i] + "'");
        }
        require_same_shape(tensors[i], net.params()[i], "checkpoint load");
        net.params()[i] = std::move(tensors[i]);
    }
    if (manifest_out) *manifest_out = manifest;
    return net;
}

} // namespace advfield
