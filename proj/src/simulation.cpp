#include "fltrust/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fltrust {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

int ExperimentConfig::resolved_m() const {
    if (attack.kind == AttackKind::None) return 0;
    return static_cast<int>(std::floor(attack.m_fraction * n + 0.5));
}

void ExperimentConfig::validate() const {
    if (n < 1) throw config_error("config key 'n': must be at least 1");
    if (tau < 0 || tau > n)
        throw config_error("config key 'tau': must lie in [1, n] (tau=" + std::to_string(tau) +
                           ", n=" + std::to_string(n) + "); 0 selects all clients");
    if (rounds < 1) throw config_error("config key 'R_g': must be at least 1");
    if (local_iters < 1) throw config_error("config key 'R_l': must be at least 1");
    if (batch_size < 1) throw config_error("config key 'b': must be at least 1");
    if (lr <= 0.0) throw config_error("config key 'lr': must be positive");
    if (!(q > 0.0 && q <= 1.0)) throw config_error("config key 'q': must lie in (0, 1]");
    if (model == ModelKind::Mlp && hidden_dim < 1)
        throw config_error("config key 'hidden_dim': must be positive for mlp");

    int classes = 0;
    if (data.kind == DataKind::Synthetic) {
        if (data.classes < 2) throw config_error("config key 'data.classes': must be at least 2");
        if (data.input_dim < 1)
            throw config_error("config key 'data.input_dim': must be positive");
        if (data.per_class < 1)
            throw config_error("config key 'data.per_class': must be positive");
        if (data.test_per_class < 1)
            throw config_error("config key 'data.test_per_class': must be positive");
        if (data.spread < 0.0)
            throw config_error("config key 'data.spread': must be non-negative");
        classes = data.classes;
    } else {
        if (data.train_path.empty()) throw config_error("config key 'data.train': missing path");
        if (data.test_path.empty()) throw config_error("config key 'data.test': missing path");
    }

    if (root_size < 0) throw config_error("config key 'root_size': must be non-negative");
    const bool needs_root = agg.rule == Rule::FLTrust || attack.kind == AttackKind::Adaptive;
    if (needs_root && root_size < 1)
        throw config_error(std::string("config key 'root_size': ") +
                           (agg.rule == Rule::FLTrust ? "rule=fltrust" : "attack=adaptive") +
                           " requires a root dataset (root_size >= 1)");
    if (root_case == RootCase::CaseII) {
        if (bias_probability < 0.0 || bias_probability > 1.0)
            throw config_error("config key 'bias_probability': must lie in [0, 1]");
        if (classes > 0 && (biased_class < 0 || biased_class >= classes))
            throw config_error("config key 'biased_class': outside [0, " +
                               std::to_string(classes) + ")");
    }
    if (eval_stride < 1) throw config_error("config key 'eval_stride': must be at least 1");
    if (init_scale < 0.0) throw config_error("config key 'init_scale': must be non-negative");
    if (divergence_limit <= 0.0)
        throw config_error("config key 'divergence_limit': must be positive");

    agg.validate(resolved_tau());
    // CSV dims are unknown until load; run_experiment re-validates the
    // attack (trigger indices included) against the loaded data.
    if (data.kind == DataKind::Synthetic) attack.validate(n, data.input_dim, classes);
}

double testing_error_rate(const ModelSpec& spec, const ParamVector& params, const Dataset& test) {
    if (test.empty()) throw config_error("testing_error_rate: empty test set");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(test.size());
    long wrong = 0;
#pragma omp parallel for schedule(static) reduction(+ : wrong)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const Example& ex = test.examples[i];
        if (predicted_label(spec, params, ex.features) != ex.label) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(n);
}

double attack_success_rate(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& target_set, int target_label) {
    if (target_set.empty()) throw config_error("attack_success_rate: empty target set");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(target_set.size());
    long hits = 0;
#pragma omp parallel for schedule(static) reduction(+ : hits)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        if (predicted_label(spec, params, target_set.examples[i].features) == target_label)
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(n);
}

DeviationBound deviation_bound_check(const std::vector<ParamVector>& updates,
                                     const ParamVector& server_update,
                                     const ParamVector& full_gradient) {
    const ParamVector g = fltrust_aggregate(updates, server_update, FltrustVariant::Standard).update;
    DeviationBound r;
    r.lhs = norm(difference(g, full_gradient));
    r.rhs = 3.0 * norm(difference(server_update, full_gradient)) + 2.0 * norm(full_gradient);
    r.holds = r.lhs <= r.rhs + 1e-9;
    return r;
}

ConvergenceSummary convergence_probe(const std::vector<RoundRecord>& history, double threshold) {
    if (history.empty()) throw config_error("convergence_probe: empty history");
    ConvergenceSummary s;
    for (const RoundRecord& rec : history) {
        if (rec.train_err < threshold) {
            s.reached = true;
            s.rounds_to_threshold = rec.round;
            break;
        }
    }
    const std::size_t tail = std::max<std::size_t>(1, history.size() / 10);
    double sum = 0.0;
    for (std::size_t i = history.size() - tail; i < history.size(); ++i)
        sum += history[i].train_err;
    s.plateau = sum / static_cast<double>(tail);
    return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed = cfg.seed;

    Dataset train, test;
    if (cfg.data.kind == DataKind::Synthetic) {
        train = generate_synthetic(cfg.data.classes, cfg.data.input_dim, cfg.data.per_class,
                                   cfg.data.spread, substream_seed(seed, 0, kDataStream));
        test = generate_synthetic(cfg.data.classes, cfg.data.input_dim, cfg.data.test_per_class,
                                  cfg.data.spread, substream_seed(seed, 0, kTestDataStream));
    } else {
        train = load_csv(cfg.data.train_path);
        test = load_csv(cfg.data.test_path);
        if (train.input_dim != test.input_dim)
            throw config_error("config key 'data.test': input_dim " +
                               std::to_string(test.input_dim) + " does not match train (" +
                               std::to_string(train.input_dim) + ")");
        const int classes = std::max(train.num_classes, test.num_classes);
        train.num_classes = test.num_classes = classes;
    }

    ModelSpec spec;
    spec.kind = cfg.model;
    spec.input_dim = train.input_dim;
    spec.num_classes = train.num_classes;
    spec.hidden_dim = cfg.model == ModelKind::Mlp ? cfg.hidden_dim : 0;
    spec.validate();
    cfg.attack.validate(cfg.n, train.input_dim, train.num_classes);
    if (cfg.root_case == RootCase::CaseII &&
        (cfg.biased_class < 0 || cfg.biased_class >= train.num_classes))
        throw config_error("config key 'biased_class': outside [0, " +
                           std::to_string(train.num_classes) + ")");

    const bool needs_server_update =
        cfg.agg.rule == Rule::FLTrust || cfg.attack.kind == AttackKind::Adaptive;

    // The root examples never appear in client shards, whichever rule runs,
    // so runs with different rules train on identical shards.
    Dataset root, client_pool;
    if (cfg.root_size > 0) {
        RootConfig rc;
        rc.size = cfg.root_size;
        rc.kind = cfg.root_case;
        rc.bias_probability = cfg.bias_probability;
        rc.biased_class = cfg.biased_class;
        rc.seed = substream_seed(seed, 0, kRootStream);
        RootSplit split = sample_root(train, rc);
        root = std::move(split.root);
        client_pool = std::move(split.remainder);
    } else {
        client_pool = train;
    }

    PartitionConfig pc;
    pc.n = cfg.n;
    pc.q = cfg.q;
    pc.seed = substream_seed(seed, 0, kPartitionStream);
    std::vector<Dataset> shards = partition(client_pool, pc);
    for (const Dataset& s : shards)
        if (s.empty())
            throw config_error("config key 'n': a client shard came out empty; fewer clients or "
                               "more data needed");

    const int m = cfg.resolved_m();
    if (cfg.attack.kind == AttackKind::LabelFlip)
        for (int i = 0; i < m; ++i) shards[i] = label_flip_poison(shards[i]);

    Dataset target_set;
    const bool has_trigger = cfg.attack.kind == AttackKind::Scaling;
    if (has_trigger) {
        target_set = make_target_test_set(test, cfg.attack.trigger);
        if (target_set.empty())
            throw config_error("config key 'trigger': every test example carries the target "
                               "label; target set is empty");
    }

    const int tau = cfg.resolved_tau();
    const double lambda =
        cfg.attack.scale_lambda == 0.0 ? static_cast<double>(cfg.n) : cfg.attack.scale_lambda;

    ParamVector w = init_params(spec, cfg.init_scale, substream_seed(seed, 0, kInitStream));

    MetricsReport report;
    report.history.reserve(cfg.rounds);
    double prev_train = kNan, prev_test = kNan, prev_success = kNan;

    for (int round = 1; round <= cfg.rounds; ++round) {
        std::vector<std::size_t> cohort;
        if (tau == cfg.n) {
            cohort.resize(cfg.n);
            for (int i = 0; i < cfg.n; ++i) cohort[i] = i;
        } else {
            Rng srng(substream_seed(seed, round, kSampleStream));
            cohort = sample_without_replacement(cfg.n, tau, srng);
            std::sort(cohort.begin(), cohort.end());
        }
        // Sorted ids put the malicious clients (ids below m) in a prefix.
        const std::size_t mal =
            std::lower_bound(cohort.begin(), cohort.end(), static_cast<std::size_t>(m)) -
            cohort.begin();

        std::vector<ParamVector> updates(cohort.size());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(cohort.size()); ++t) {
            const std::size_t id = cohort[t];
            Rng crng(substream_seed(seed, round, id));
            if (cfg.attack.kind == AttackKind::Scaling && id < static_cast<std::size_t>(m))
                updates[t] = scaling_attack(shards[id], cfg.attack.trigger, cfg.attack.poison_p,
                                            lambda, spec, w, cfg.batch_size, 1.0, cfg.local_iters,
                                            crng);
            else
                updates[t] =
                    model_update(spec, w, shards[id], cfg.batch_size, 1.0, cfg.local_iters, crng);
        }

        ParamVector g0;
        if (needs_server_update) {
            Rng server_rng(substream_seed(seed, round, kServerStream));
            g0 = model_update(spec, w, root, cfg.batch_size, 1.0, cfg.local_iters, server_rng);
        }

        if (mal > 0) {
            Rng attack_rng(substream_seed(seed, round, kAttackStream));
            std::vector<ParamVector> poisoned;
            switch (cfg.attack.kind) {
                case AttackKind::KrumAttack:
                    poisoned = krum_attack(updates, mal, cfg.agg.krum_f, w,
                                           cfg.attack.lambda_init, cfg.attack.lambda_floor);
                    break;
                case AttackKind::TrimAttack:
                    poisoned = trim_attack(updates, mal, attack_rng);
                    break;
                case AttackKind::Adaptive: {
                    AdaptiveParams ap;
                    ap.sigma = std::sqrt(cfg.attack.sigma2);
                    ap.gamma = cfg.attack.gamma;
                    ap.eta = cfg.attack.eta;
                    ap.steps_q = cfg.attack.steps_q;
                    ap.sweeps_v = cfg.attack.sweeps_v;
                    poisoned = adaptive_attack(g0, updates, mal, ap, attack_rng);
                    break;
                }
                default:
                    break;  // LabelFlip and Scaling already took effect
            }
            for (std::size_t i = 0; i < poisoned.size(); ++i) updates[i] = std::move(poisoned[i]);
        }

        ParamVector g;
        double trust_sum = kNan;
        switch (cfg.agg.rule) {
            case Rule::FedAvg: {
                std::vector<std::size_t> sizes(cohort.size());
                for (std::size_t t = 0; t < cohort.size(); ++t) sizes[t] = shards[cohort[t]].size();
                g = fedavg(updates, sizes);
                break;
            }
            case Rule::Krum:
                g = krum(updates, cfg.agg.krum_f).update;
                break;
            case Rule::TrimMean:
                g = trimmed_mean(updates, cfg.agg.trim_k);
                break;
            case Rule::Median:
                g = median(updates);
                break;
            case Rule::FLTrust: {
                FltrustResult res = fltrust_aggregate(updates, g0, cfg.agg.variant);
                g = std::move(res.update);
                trust_sum = res.trust_sum;
                break;
            }
        }

        w = update_global(w, g, cfg.lr);
        for (double v : w)
            if (!std::isfinite(v) || std::fabs(v) > cfg.divergence_limit)
                throw divergence_error(round, "run_experiment: divergence at round " +
                                                  std::to_string(round) +
                                                  " (parameter magnitude exceeded " +
                                                  std::to_string(cfg.divergence_limit) + ")");

        RoundRecord rec;
        rec.round = round;
        const bool eval =
            round == 1 || round == cfg.rounds || (round % cfg.eval_stride == 0);
        if (eval) {
            rec.train_err = testing_error_rate(spec, w, client_pool);
            rec.test_err = testing_error_rate(spec, w, test);
            rec.attack_success =
                has_trigger
                    ? attack_success_rate(spec, w, target_set, cfg.attack.trigger.target_label)
                    : kNan;
            prev_train = rec.train_err;
            prev_test = rec.test_err;
            prev_success = rec.attack_success;
        } else {
            rec.train_err = prev_train;
            rec.test_err = prev_test;
            rec.attack_success = prev_success;
        }
        rec.g_norm = norm(g);
        rec.g0_norm = needs_server_update ? norm(g0) : kNan;
        rec.trust_sum = trust_sum;
        report.history.push_back(rec);
    }

    report.final_test_error = report.history.back().test_err;
    if (has_trigger) report.final_attack_success = report.history.back().attack_success;

    ExperimentResult result;
    result.params = std::move(w);
    result.metrics = std::move(report);
    return result;
}

}  // namespace fltrust
