#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "advfield/adversary.hpp"
#include "advfield/sample.hpp"

namespace advfield {

enum class AttackKind { None, Bias, Morph, Vat, RandomBias, BiasThenMorph };

AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(AttackKind kind);

// Two-phase protocol: random-augmentation pretraining on cross-entropy, then
// finetuning with the consistency term driven by the configured attack.
struct TrainConfig {
    SegNetConfig net{};
    int pretrain_iters = 500;
    double pretrain_lr = 1e-3;
    int finetune_iters = 200;
    double finetune_lr = 1e-4;
    int batch = 8;
    double lambda_l = 1.0;
    double lambda_u = 0.1;
    AttackKind attack = AttackKind::Bias;
    AttackConfig attack_cfg{};
    bool semi = false;
    RandAugConfig aug{};
    bool aug_in_finetune = true; // random augmentation stays on during finetuning
    int val_interval = 25;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainLogRow {
    std::int64_t iter = 0;
    double loss_total = 0.0;
    double loss_ce = 0.0;
    double loss_cons = 0.0; // weighted consistency (lambda_l and lambda_u included)
    double val_dice = 0.0;
    bool has_val = false;
};

struct TrainState {
    SegNet net;
    AdamState opt;
    std::int64_t iter = 0;
    Rng rng;
    std::vector<TrainLogRow> history;

    explicit TrainState(SegNet net_) : net(std::move(net_)), opt(init_adam(net)) {}
};

// Bit-exact round trip: parameters, moments, counters, rng state, history.
void save_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& path);

struct LossResult {
    double total = 0.0;
    double ce = 0.0;
    double cons = 0.0; // weighted, as logged
    std::vector<Tensor> grads;
    int zero_gradient_flags = 0;
};

// Per-sample: clean forward p, adversarial example from the attack, perturbed
// forward, CE(p,y) + lambda_l * D(p_detached, p_hat); batch mean.
LossResult loss_supervised(const SegNet& net, std::span<const Sample> batch,
                           AttackKind attack, const AttackConfig& acfg, double lambda_l,
                           std::uint64_t seed);

// Supervised loss plus lambda_u times the unlabelled consistency term; the
// unlabelled path never sees a mask.
LossResult loss_semisupervised(const SegNet& net, std::span<const Sample> labelled,
                               std::span<const Sample> unlabelled, AttackKind attack,
                               const AttackConfig& acfg, double lambda_l, double lambda_u,
                               std::uint64_t seed);

struct TrainOutcome {
    TrainState state;   // state after the last iteration
    SegNet best_net;    // best validation dice (final net if never validated)
    double best_val_dice = -1.0;
    std::int64_t best_iter = -1;

    explicit TrainOutcome(TrainState state_)
        : state(std::move(state_)), best_net(state.net) {}
};

// Runs both phases; writes one CSV row per iteration to `log` when given
// (header: iter,loss_total,loss_ce,loss_cons,val_dice). Aborts with
// NumericError if the loss turns non-finite.
TrainOutcome train(const TrainConfig& cfg, std::span<const Sample> labelled,
                   std::span<const Sample> unlabelled, std::span<const Sample> validation,
                   std::ostream* log = nullptr);

} // namespace advfield
