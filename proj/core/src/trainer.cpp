#include "advfield/trainer.hpp"

#include <cmath>
#include <ostream>

#include "advfield/metrics.hpp"
#include "advfield/tensor_io.hpp"
#include "advfield/threads.hpp"

namespace advfield {

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "none") return AttackKind::None;
    if (s == "bias") return AttackKind::Bias;
    if (s == "morph") return AttackKind::Morph;
    if (s == "vat") return AttackKind::Vat;
    if (s == "random-bias") return AttackKind::RandomBias;
    if (s == "bias+morph") return AttackKind::BiasThenMorph;
    throw ConfigError("unknown attack kind '" + s + "'");
}

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::None: return "none";
        case AttackKind::Bias: return "bias";
        case AttackKind::Morph: return "morph";
        case AttackKind::Vat: return "vat";
        case AttackKind::RandomBias: return "random-bias";
        case AttackKind::BiasThenMorph: return "bias+morph";
    }
    throw Error("unreachable attack kind");
}

void TrainConfig::validate() const {
    net.validate();
    if (pretrain_iters < 0 || finetune_iters < 0) {
        throw ConfigError("train: iteration counts must be >= 0");
    }
    if (!(pretrain_lr > 0.0) || !(finetune_lr > 0.0)) {
        throw ConfigError("train: learning rates must be positive");
    }
    if (batch < 1) throw ConfigError("train: batch size must be >= 1");
    if (lambda_l < 0.0 || lambda_u < 0.0) throw ConfigError("train: lambdas must be >= 0");
    if (val_interval < 1) throw ConfigError("train: validation interval must be >= 1");
    attack_cfg.validate();
    aug.validate();
}

// ---------------------------------------------------------------------------
// loss terms
// ---------------------------------------------------------------------------

namespace {

struct AdvExample {
    Tensor adversarial;
    Tensor target; // detached consistency target {C,H,W}
    bool zero_gradient = false;
};

AdvExample make_adversarial(const SegNet& net, const Tensor& image, const Tensor& p_clean,
                            AttackKind kind, const AttackConfig& base, std::uint64_t seed) {
    AttackConfig acfg = base;
    acfg.seed = seed;
    switch (kind) {
        case AttackKind::Bias: {
            auto r = attack_bias(net, image, acfg, &p_clean);
            return {std::move(r.adversarial), p_clean, r.zero_gradient};
        }
        case AttackKind::RandomBias: {
            Rng rng(seed);
            const BiasField field =
                random_bias(rng, acfg.alpha, acfg.grid_k, image.extent(0), image.extent(1));
            return {apply_bias(image, field), p_clean, false};
        }
        case AttackKind::Morph: {
            auto r = attack_morph(net, image, acfg, &p_clean);
            return {std::move(r.adversarial), warp_image(p_clean, r.deformation),
                    r.zero_gradient};
        }
        case AttackKind::Vat: {
            auto r = attack_vat(net, image, acfg.epsilon, seed, &p_clean);
            return {std::move(r.adversarial), p_clean, r.zero_gradient};
        }
        case AttackKind::BiasThenMorph: {
            auto b = attack_bias(net, image, acfg, &p_clean);
            AttackConfig mcfg = acfg;
            mcfg.seed = derive_seed(seed, 1);
            auto m = attack_morph(net, b.adversarial, mcfg);
            // geometry moves the consistency target; the bias does not
            return {std::move(m.adversarial), warp_image(p_clean, m.deformation),
                    b.zero_gradient || m.zero_gradient};
        }
        case AttackKind::None: break;
    }
    throw Error("make_adversarial: no example for attack kind 'none'");
}

struct SampleTerms {
    double ce = 0.0;
    double cons = 0.0; // unweighted
    std::vector<Tensor> grads;
    bool zero_flag = false;
};

// One per-sample tape: the clean forward feeds both the CE term and, as a
// detached constant, the consistency target.
SampleTerms sample_terms(const SegNet& net, const Sample& sample, bool with_ce,
                         double cons_weight, AttackKind kind, const AttackConfig& acfg,
                         std::uint64_t seed) {
    SampleTerms out;
    Tape tape;
    const std::vector<Var> params = net.params_on(tape, true);
    Var image = tape.constant(sample.image);
    Var p = net.forward(tape, image, params);

    Var loss = tape.constant(Tensor::scalar(0.0));
    bool have_loss = false;
    if (with_ce) {
        if (!sample.labelled()) throw Error("loss: sample '" + sample.id + "' has no labels");
        loss = cross_entropy(p, *sample.mask);
        out.ce = loss.value().item();
        have_loss = true;
    }
    if (kind != AttackKind::None && cons_weight > 0.0) {
        AdvExample adv = make_adversarial(net, sample.image, p.value(), kind, acfg, seed);
        out.zero_flag = adv.zero_gradient;
        Var phat = net.forward(tape, tape.constant(adv.adversarial), params);
        Var target = tape.constant(adv.target);
        Var cons = kind == AttackKind::Vat
                       ? kl_divergence(target, phat)
                       : composite_distance(target, phat, acfg.w,
                                            default_foreground(net.config().classes));
        out.cons = cons.value().item();
        Var weighted = scale(cons, cons_weight);
        loss = have_loss ? add(loss, weighted) : weighted;
        have_loss = true;
    }
    out.grads = tape.backward(loss, params);
    return out;
}

void accumulate_grads(std::vector<Tensor>& acc, const std::vector<Tensor>& grads,
                      double weight) {
    if (acc.empty()) {
        acc.reserve(grads.size());
        for (const Tensor& g : grads) acc.push_back(scale(g, weight));
        return;
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        double* pa = acc[i].data();
        const double* pg = grads[i].data();
        for (std::size_t j = 0; j < grads[i].numel(); ++j) pa[j] += weight * pg[j];
    }
}

} // namespace

LossResult loss_supervised(const SegNet& net, std::span<const Sample> batch,
                           AttackKind attack, const AttackConfig& acfg, double lambda_l,
                           std::uint64_t seed) {
    if (batch.empty()) throw Error("loss_supervised: empty batch");
    const std::size_t n = batch.size();
    std::vector<SampleTerms> terms(n);
    parallel_for(n, [&](std::size_t i) {
        terms[i] = sample_terms(net, batch[i], true, lambda_l, attack, acfg,
                                derive_seed(seed, i, 0));
    });

    LossResult res;
    const double inv = 1.0 / static_cast<double>(n);
    for (const SampleTerms& t : terms) {
        res.ce += t.ce * inv;
        res.cons += lambda_l * t.cons * inv;
        res.total += (t.ce + lambda_l * t.cons) * inv;
        res.zero_gradient_flags += t.zero_flag ? 1 : 0;
        accumulate_grads(res.grads, t.grads, inv);
    }
    return res;
}

LossResult loss_semisupervised(const SegNet& net, std::span<const Sample> labelled,
                               std::span<const Sample> unlabelled, AttackKind attack,
                               const AttackConfig& acfg, double lambda_l, double lambda_u,
                               std::uint64_t seed) {
    if (labelled.empty()) throw Error("loss_semisupervised: empty labelled batch");
    if (unlabelled.empty() && lambda_u > 0.0) {
        throw Error("loss_semisupervised: empty unlabelled batch with lambda_u > 0");
    }
    const std::size_t nl = labelled.size(), nu = unlabelled.size();
    std::vector<SampleTerms> lterms(nl), uterms(nu);
    parallel_for(nl + nu, [&](std::size_t i) {
        if (i < nl) {
            lterms[i] = sample_terms(net, labelled[i], true, lambda_l, attack, acfg,
                                     derive_seed(seed, i, 0));
        } else {
            const std::size_t u = i - nl;
            // same stream as the labelled branch: identical images get
            // identical adversarial examples
            uterms[u] = sample_terms(net, unlabelled[u], false, lambda_u, attack, acfg,
                                     derive_seed(seed, u, 0));
        }
    });

    LossResult res;
    const double invl = 1.0 / static_cast<double>(nl);
    for (const SampleTerms& t : lterms) {
        res.ce += t.ce * invl;
        res.cons += lambda_l * t.cons * invl;
        res.total += (t.ce + lambda_l * t.cons) * invl;
        res.zero_gradient_flags += t.zero_flag ? 1 : 0;
        accumulate_grads(res.grads, t.grads, invl);
    }
    if (nu > 0 && lambda_u > 0.0) {
        const double invu = 1.0 / static_cast<double>(nu);
        double ucons = 0.0;
        for (const SampleTerms& t : uterms) {
            ucons += lambda_u * t.cons * invu;
            res.zero_gradient_flags += t.zero_flag ? 1 : 0;
            accumulate_grads(res.grads, t.grads, invu);
        }
        res.cons += ucons;
        res.total += ucons;
    }
    return res;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

double validation_dice(const SegNet& net, std::span<const Sample> validation) {
    if (validation.empty()) return 0.0;
    std::vector<double> scores(validation.size());
    parallel_for(validation.size(), [&](std::size_t i) {
        const Sample& s = validation[i];
        if (!s.labelled()) throw Error("validation sample '" + s.id + "' has no labels");
        const Tensor pred = net.predict(s.image).argmax_mask();
        scores[i] = mean_foreground_dice(pred, *s.mask, net.config().classes);
    });
    double total = 0.0;
    for (double v : scores) total += v;
    return total / static_cast<double>(scores.size());
}

void write_log_row(std::ostream* log, const TrainLogRow& row) {
    if (!log) return;
    (*log) << row.iter << "," << format_double(row.loss_total) << ","
           << format_double(row.loss_ce) << "," << format_double(row.loss_cons) << ",";
    if (row.has_val) (*log) << format_double(row.val_dice);
    (*log) << "\n";
}

} // namespace

TrainOutcome train(const TrainConfig& cfg, std::span<const Sample> labelled,
                   std::span<const Sample> unlabelled, std::span<const Sample> validation,
                   std::ostream* log) {
    cfg.validate();
    if (labelled.empty()) throw Error("train: labelled set is empty");
    if (cfg.semi && unlabelled.empty()) {
        throw Error("train: semi-supervised training needs an unlabelled set");
    }
    for (const Sample& s : labelled) {
        if (!s.labelled()) throw Error("train: unlabelled sample in the labelled set");
    }

    TrainOutcome outcome(TrainState(SegNet::init(cfg.net)));
    TrainState& st = outcome.state;
    st.rng = Rng(cfg.seed);

    if (log) (*log) << "iter,loss_total,loss_ce,loss_cons,val_dice\n";

    const std::int64_t total_iters = cfg.pretrain_iters + cfg.finetune_iters;
    // Batch assembly is serial and draws from the single training stream, so
    // sampling and augmentation are reproducible by construction.
    auto draw_batch = [&](std::span<const Sample> pool, bool augment) {
        std::vector<Sample> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch));
        for (int b = 0; b < cfg.batch; ++b) {
            const Sample& src = pool[static_cast<std::size_t>(st.rng.below(pool.size()))];
            batch.push_back(augment ? rand_augment(src, cfg.aug, st.rng) : src);
        }
        return batch;
    };

    for (std::int64_t iter = 1; iter <= total_iters; ++iter) {
        const bool finetune = iter > cfg.pretrain_iters;
        const double lr = finetune ? cfg.finetune_lr : cfg.pretrain_lr;
        const bool augment = !finetune || cfg.aug_in_finetune;

        std::vector<Sample> batch = draw_batch(labelled, augment);
        const std::uint64_t iter_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(iter));

        LossResult loss;
        if (!finetune || cfg.attack == AttackKind::None) {
            loss = loss_supervised(st.net, batch, AttackKind::None, cfg.attack_cfg,
                                   cfg.lambda_l, iter_seed);
        } else if (cfg.semi) {
            std::vector<Sample> ubatch = draw_batch(unlabelled, augment);
            loss = loss_semisupervised(st.net, batch, ubatch, cfg.attack, cfg.attack_cfg,
                                       cfg.lambda_l, cfg.lambda_u, iter_seed);
        } else {
            loss = loss_supervised(st.net, batch, cfg.attack, cfg.attack_cfg, cfg.lambda_l,
                                   iter_seed);
        }
        if (!std::isfinite(loss.total)) {
            throw NumericError("train: non-finite loss at iteration " + std::to_string(iter));
        }

        AdamConfig adam;
        adam.lr = lr;
        adam_step(st.net, loss.grads, st.opt, adam);
        st.iter = iter;

        TrainLogRow row;
        row.iter = iter;
        row.loss_total = loss.total;
        row.loss_ce = loss.ce;
        row.loss_cons = loss.cons;
        if (!validation.empty() &&
            (iter % cfg.val_interval == 0 || iter == total_iters)) {
            row.val_dice = validation_dice(st.net, validation);
            row.has_val = true;
            if (row.val_dice > outcome.best_val_dice) {
                outcome.best_val_dice = row.val_dice;
                outcome.best_iter = iter;
                outcome.best_net = st.net;
            }
        }
        st.history.push_back(row);
        write_log_row(log, row);
    }
    if (outcome.best_iter < 0) {
        outcome.best_net = st.net;
        outcome.best_iter = st.iter;
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// state serialization
// ---------------------------------------------------------------------------

void save_train_state(const std::filesystem::path& path, const TrainState& state) {
    KvConfig manifest;
    segnet_config_to_manifest(state.net.config(), manifest);
    manifest.set("iter", state.iter);
    manifest.set("adam.step", state.opt.step);
    const auto rs = state.rng.state();
    for (int i = 0; i < 4; ++i) manifest.set("rng.s" + std::to_string(i), rs[static_cast<std::size_t>(i)]);

    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    const auto& pnames = state.net.param_names();
    for (std::size_t i = 0; i < pnames.size(); ++i) {
        names.push_back("param." + pnames[i]);
        tensors.push_back(state.net.params()[i]);
    }
    for (std::size_t i = 0; i < pnames.size(); ++i) {
        names.push_back("adam.m." + pnames[i]);
        tensors.push_back(state.opt.m[i]);
        names.push_back("adam.v." + pnames[i]);
        tensors.push_back(state.opt.v[i]);
    }
    Tensor history(Shape{state.history.size(), 6});
    for (std::size_t i = 0; i < state.history.size(); ++i) {
        const TrainLogRow& r = state.history[i];
        history[i * 6 + 0] = static_cast<double>(r.iter);
        history[i * 6 + 1] = r.loss_total;
        history[i * 6 + 2] = r.loss_ce;
        history[i * 6 + 3] = r.loss_cons;
        history[i * 6 + 4] = r.val_dice;
        history[i * 6 + 5] = r.has_val ? 1.0 : 0.0;
    }
    names.push_back("history");
    tensors.push_back(std::move(history));
    write_manifest_and_tensors(path, manifest, names, tensors);
}

TrainState load_train_state(const std::filesystem::path& path) {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    const KvConfig manifest = read_manifest_and_tensors(path, names, tensors);

    TrainState state(SegNet::init(segnet_config_from_manifest(manifest)));
    state.iter = manifest.get_int("iter");
    state.opt.step = manifest.get_int("adam.step");
    std::array<std::uint64_t, 4> rs{};
    for (int i = 0; i < 4; ++i) rs[static_cast<std::size_t>(i)] = manifest.get_u64("rng.s" + std::to_string(i));
    state.rng.set_state(rs);

    auto find = [&](const std::string& name) -> Tensor& {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return tensors[i];
        }
        throw IoError("train state: missing tensor '" + name + "'");
    };
    const auto& pnames = state.net.param_names();
    for (std::size_t i = 0; i < pnames.size(); ++i) {
        state.net.params()[i] = find("param." + pnames[i]);
        state.opt.m[i] = find("adam.m." + pnames[i]);
        state.opt.v[i] = find("adam.v." + pnames[i]);
    }
    const Tensor& history = find("history");
    state.history.clear();
    for (std::size_t i = 0; i < history.extent(0); ++i) {
        TrainLogRow r;
        r.iter = static_cast<std::int64_t>(history[i * 6 + 0]);
        r.loss_total = history[i * 6 + 1];
        r.loss_ce = history[i * 6 + 2];
        r.loss_cons = history[i * 6 + 3];
        r.val_dice = history[i * 6 + 4];
        r.has_val = history[i * 6 + 5] != 0.0;
        state.history.push_back(r);
    }
    return state;
}

} // namespace advfield
