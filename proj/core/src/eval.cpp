#include "advfield/eval.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "advfield/tensor_io.hpp"
#include "advfield/threads.hpp"

namespace advfield {

const EvalColumn& EvalReport::column(const std::string& name) const {
    for (const EvalColumn& c : columns) {
        if (c.name == name) return c;
    }
    throw Error("eval report: no column '" + name + "'");
}

double EvalReport::mean(const std::string& name) const {
    const auto& vals = column(name).values;
    if (vals.empty()) return 0.0;
    double s = 0.0;
    for (double v : vals) s += v;
    return s / static_cast<double>(vals.size());
}

double EvalReport::stddev(const std::string& name) const {
    const auto& vals = column(name).values;
    if (vals.size() < 2) return 0.0;
    const double m = mean(name);
    double s = 0.0;
    for (double v : vals) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(vals.size() - 1));
}

namespace {

struct SampleScores {
    double clean = 0.0;
    double random_bias = 0.0;
    double adv_bias = 0.0;
    double adv_bias_zero = 0.0;
    double random_morph = 0.0;
    double adv_morph = 0.0;
    double adv_morph_zero = 0.0;
};

KvConfig robustness_echo(const RobustnessConfig& cfg) {
    KvConfig kv;
    kv.set("eval.random_bias", cfg.random_bias);
    kv.set("eval.adversarial_bias", cfg.adversarial_bias);
    kv.set("eval.random_morph", cfg.random_morph);
    kv.set("eval.adversarial_morph", cfg.adversarial_morph);
    kv.set("eval.trials", static_cast<std::int64_t>(cfg.trials));
    kv.set("eval.seed", cfg.seed);
    kv.set("attack.steps", static_cast<std::int64_t>(cfg.attack.steps));
    kv.set("attack.step_size", cfg.attack.step_size);
    kv.set("attack.alpha", cfg.attack.alpha);
    kv.set("attack.beta", cfg.attack.beta);
    kv.set("attack.w", cfg.attack.w);
    kv.set("attack.grid_k", static_cast<std::int64_t>(cfg.attack.grid_k));
    return kv;
}

} // namespace

EvalReport evaluate_robustness(const SegNet& net, std::span<const Sample> test,
                               const RobustnessConfig& cfg) {
    if (test.empty()) throw Error("evaluate_robustness: empty test set");
    if (cfg.trials < 1 && (cfg.random_bias || cfg.random_morph)) {
        throw ConfigError("evaluate_robustness: trials must be >= 1");
    }
    cfg.attack.validate();
    const std::size_t classes = net.config().classes;
    const std::size_t n = test.size();
    std::vector<SampleScores> scores(n);

    parallel_for(n, [&](std::size_t i) {
        const Sample& s = test[i];
        if (!s.labelled()) throw Error("evaluate_robustness: sample '" + s.id + "' has no labels");
        const std::size_t h = s.image.extent(0), w = s.image.extent(1);
        SampleScores& out = scores[i];
        const Tensor p_clean = net.predict(s.image).p;
        out.clean = mean_foreground_dice(ProbMap(p_clean).argmax_mask(), *s.mask, classes);

        if (cfg.random_bias) {
            double acc = 0.0;
            for (int t = 0; t < cfg.trials; ++t) {
                Rng rng(derive_seed(cfg.seed, i, static_cast<std::uint64_t>(t)));
                const BiasField field = random_bias(rng, cfg.attack.alpha, cfg.attack.grid_k, h, w);
                const Tensor pred = net.predict(apply_bias(s.image, field)).argmax_mask();
                acc += mean_foreground_dice(pred, *s.mask, classes);
            }
            out.random_bias = acc / static_cast<double>(cfg.trials);
        }
        if (cfg.adversarial_bias) {
            AttackConfig acfg = cfg.attack;
            acfg.seed = derive_seed(cfg.seed, i, 0xb1a5);
            const BiasAttackResult r = attack_bias(net, s.image, acfg, &p_clean);
            const Tensor pred = net.predict(r.adversarial).argmax_mask();
            out.adv_bias = mean_foreground_dice(pred, *s.mask, classes);
            out.adv_bias_zero = r.zero_gradient ? 1.0 : 0.0;
        }
        if (cfg.random_morph) {
            double acc = 0.0;
            for (int t = 0; t < cfg.trials; ++t) {
                Rng rng(derive_seed(cfg.seed, i, 0x700000 + static_cast<std::uint64_t>(t)));
                const VelocityField vf = random_velocity(rng, cfg.attack.beta,
                                                         cfg.attack.morph.sigma_v, h, w,
                                                         cfg.attack.beta);
                const DeformationField def = realize_deformation(vf, cfg.attack.morph);
                const Tensor pred = net.predict(warp_image(s.image, def)).argmax_mask();
                acc += mean_foreground_dice(pred, warp_mask(*s.mask, def, classes), classes);
            }
            out.random_morph = acc / static_cast<double>(cfg.trials);
        }
        if (cfg.adversarial_morph) {
            AttackConfig acfg = cfg.attack;
            acfg.seed = derive_seed(cfg.seed, i, 0x304f);
            const MorphAttackResult r = attack_morph(net, s.image, acfg, &p_clean);
            const Tensor pred = net.predict(r.adversarial).argmax_mask();
            out.adv_morph =
                mean_foreground_dice(pred, warp_mask(*s.mask, r.deformation, classes), classes);
            out.adv_morph_zero = r.zero_gradient ? 1.0 : 0.0;
        }
    });

    EvalReport report;
    for (const Sample& s : test) report.ids.push_back(s.id);
    auto add_column = [&](const std::string& name, auto member) {
        EvalColumn col{name, {}};
        col.values.reserve(n);
        for (const SampleScores& s : scores) col.values.push_back(s.*member);
        report.columns.push_back(std::move(col));
    };
    add_column("clean", &SampleScores::clean);
    if (cfg.random_bias) add_column("random_bias", &SampleScores::random_bias);
    if (cfg.adversarial_bias) {
        add_column("adv_bias", &SampleScores::adv_bias);
        add_column("adv_bias_zero_grad", &SampleScores::adv_bias_zero);
    }
    if (cfg.random_morph) add_column("random_morph", &SampleScores::random_morph);
    if (cfg.adversarial_morph) {
        add_column("adv_morph", &SampleScores::adv_morph);
        add_column("adv_morph_zero_grad", &SampleScores::adv_morph_zero);
    }
    report.config_fingerprint = robustness_echo(cfg).fingerprint();
    return report;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "id";
    for (const EvalColumn& c : report.columns) out << "," << c.name;
    out << "\n";
    for (std::size_t i = 0; i < report.ids.size(); ++i) {
        out << report.ids[i];
        for (const EvalColumn& c : report.columns) out << "," << format_double(c.values[i]);
        out << "\n";
    }
    if (!out) throw IoError("stream failure writing " + path.string());
}

void write_report_summary(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "samples: " << report.ids.size() << "\n";
    out << "config fingerprint: " << report.config_fingerprint << "\n";
    for (const EvalColumn& c : report.columns) {
        out << c.name << ": mean " << format_double(report.mean(c.name)) << " std "
            << format_double(report.stddev(c.name)) << "\n";
    }
    if (!out) throw IoError("stream failure writing " + path.string());
}

double corrupted_dice(const SegNet& net, std::span<const Sample> test, double alpha,
                      std::size_t grid_k, int trials, std::uint64_t seed) {
    if (test.empty()) throw Error("corrupted_dice: empty test set");
    if (trials < 1) throw ConfigError("corrupted_dice: trials must be >= 1");
    const std::size_t classes = net.config().classes;
    std::vector<double> scores(test.size());
    parallel_for(test.size(), [&](std::size_t i) {
        const Sample& s = test[i];
        if (!s.labelled()) throw Error("corrupted_dice: sample '" + s.id + "' has no labels");
        double acc = 0.0;
        for (int t = 0; t < trials; ++t) {
            Rng rng(derive_seed(seed, i, static_cast<std::uint64_t>(t)));
            const BiasField field =
                random_bias(rng, alpha, grid_k, s.image.extent(0), s.image.extent(1));
            const Tensor pred = net.predict(apply_bias(s.image, field)).argmax_mask();
            acc += mean_foreground_dice(pred, *s.mask, classes);
        }
        scores[i] = acc / static_cast<double>(trials);
    });
    double total = 0.0;
    for (double v : scores) total += v;
    return total / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------------------
// ablation
// ---------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(std::span<const AblationCell> cells,
                                      std::span<const Sample> labelled,
                                      std::span<const Sample> unlabelled,
                                      std::span<const Sample> validation,
                                      std::span<const Sample> test,
                                      const AblationCorruption& corruption) {
    if (cells.empty()) throw ConfigError("ablation: empty cell grid");
    std::vector<AblationRow> rows;
    for (const AblationCell& cell : cells) {
        AblationRow row;
        row.cell = cell.name;
        row.seed = cell.cfg.seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const TrainOutcome outcome = train(cell.cfg, labelled, unlabelled, validation);
            const SegNet& net = outcome.best_net;
            double clean = 0.0;
            for (const Sample& s : test) {
                clean += mean_foreground_dice(net.predict(s.image).argmax_mask(), *s.mask,
                                              net.config().classes);
            }
            row.dice_clean = clean / static_cast<double>(test.size());
            row.dice_corrupted = corrupted_dice(net, test, corruption.alpha, corruption.grid_k,
                                                corruption.trials, corruption.seed);
        } catch (const std::exception& e) {
            row.error = e.what(); // this cell failed; keep going
        }
        row.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "cell,seed,dice_clean,dice_corrupted,error\n";
    for (const AblationRow& r : rows) {
        out << r.cell << "," << r.seed << "," << format_double(r.dice_clean) << ","
            << format_double(r.dice_corrupted) << "," << r.error << "\n";
    }
    if (!out) throw IoError("stream failure writing " + path.string());
}

void write_ablation_summary(std::span<const AblationRow> rows,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const AblationRow& r : rows) {
        out << r.cell << " seed=" << r.seed;
        if (r.error.empty()) {
            out << " dice_clean=" << format_double(r.dice_clean)
                << " dice_corrupted=" << format_double(r.dice_corrupted);
        } else {
            out << " FAILED: " << r.error;
        }
        out << " runtime_s=" << format_double(r.runtime_seconds) << "\n";
    }
    if (!out) throw IoError("stream failure writing " + path.string());
}

} // namespace advfield
