#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fltrust/aggregation.hpp"
#include "fltrust/attacks.hpp"
#include "fltrust/common.hpp"
#include "fltrust/data.hpp"
#include "fltrust/model.hpp"
#include "fltrust/rng.hpp"
#include "fltrust/simulation.hpp"

using namespace fltrust;

namespace {

// Small, fast experiment the tests specialize from.
ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.seed = 1;
    cfg.n = 4;
    cfg.tau = 0;
    cfg.rounds = 1;
    cfg.local_iters = 1;
    cfg.batch_size = 8;
    cfg.lr = 0.5;
    cfg.q = 0.5;
    cfg.model = ModelKind::LogisticRegression;
    cfg.data.classes = 3;
    cfg.data.input_dim = 4;
    cfg.data.per_class = 30;
    cfg.data.test_per_class = 10;
    cfg.data.spread = 0.5;
    cfg.root_size = 0;
    cfg.eval_stride = 1;
    cfg.init_scale = 0.01;
    return cfg;
}

ModelSpec spec_of(const ExperimentConfig& cfg) {
    ModelSpec s;
    s.kind = cfg.model;
    s.input_dim = cfg.data.input_dim;
    s.num_classes = cfg.data.classes;
    s.hidden_dim = cfg.model == ModelKind::Mlp ? cfg.hidden_dim : 0;
    return s;
}

bool same_metric(double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return true;
    return a == b;
}

// Balanced hand-built dataset: `per_class` examples per label, features at
// the class index.
Dataset balanced_dataset(int classes, int per_class) {
    Dataset d;
    d.input_dim = 2;
    d.num_classes = classes;
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_class; ++i)
            d.examples.push_back({{static_cast<double>(c), 1.0}, c});
    return d;
}

}  // namespace

TEST_CASE("one fedavg round equals its hand-built composition") {
    ExperimentConfig cfg = small_config();
    const ExperimentResult run = run_experiment(cfg);

    // Rebuild the round from the published substream layout.
    const Dataset train =
        generate_synthetic(cfg.data.classes, cfg.data.input_dim, cfg.data.per_class,
                           cfg.data.spread, substream_seed(cfg.seed, 0, kDataStream));
    const Dataset test =
        generate_synthetic(cfg.data.classes, cfg.data.input_dim, cfg.data.test_per_class,
                           cfg.data.spread, substream_seed(cfg.seed, 0, kTestDataStream));
    PartitionConfig pc;
    pc.n = cfg.n;
    pc.q = cfg.q;
    pc.seed = substream_seed(cfg.seed, 0, kPartitionStream);
    const std::vector<Dataset> shards = partition(train, pc);

    const ModelSpec spec = spec_of(cfg);
    const ParamVector w0 =
        init_params(spec, cfg.init_scale, substream_seed(cfg.seed, 0, kInitStream));

    std::vector<ParamVector> updates;
    std::vector<std::size_t> sizes;
    for (int id = 0; id < cfg.n; ++id) {
        Rng crng(substream_seed(cfg.seed, 1, id));
        updates.push_back(
            model_update(spec, w0, shards[id], cfg.batch_size, 1.0, cfg.local_iters, crng));
        sizes.push_back(shards[id].size());
    }
    const ParamVector g = fedavg(updates, sizes);
    const ParamVector w1 = update_global(w0, g, cfg.lr);

    CHECK(run.params == w1);
    REQUIRE(run.metrics.history.size() == 1);
    const RoundRecord& rec = run.metrics.history[0];
    CHECK(rec.round == 1);
    CHECK(rec.g_norm == norm(g));
    CHECK(std::isnan(rec.g0_norm));
    CHECK(std::isnan(rec.trust_sum));
    CHECK(std::isnan(rec.attack_success));
    CHECK(rec.train_err == testing_error_rate(spec, w1, train));
    CHECK(rec.test_err == testing_error_rate(spec, w1, test));
    CHECK(run.metrics.final_test_error == rec.test_err);
    CHECK(!run.metrics.final_attack_success.has_value());
}

TEST_CASE("client sampling follows the per-round sample stream") {
    ExperimentConfig cfg = small_config();
    cfg.n = 5;
    cfg.tau = 2;
    const ExperimentResult run = run_experiment(cfg);

    const Dataset train =
        generate_synthetic(cfg.data.classes, cfg.data.input_dim, cfg.data.per_class,
                           cfg.data.spread, substream_seed(cfg.seed, 0, kDataStream));
    PartitionConfig pc;
    pc.n = cfg.n;
    pc.q = cfg.q;
    pc.seed = substream_seed(cfg.seed, 0, kPartitionStream);
    const std::vector<Dataset> shards = partition(train, pc);

    const ModelSpec spec = spec_of(cfg);
    const ParamVector w0 =
        init_params(spec, cfg.init_scale, substream_seed(cfg.seed, 0, kInitStream));

    Rng srng(substream_seed(cfg.seed, 1, kSampleStream));
    std::vector<std::size_t> cohort = sample_without_replacement(cfg.n, cfg.tau, srng);
    std::sort(cohort.begin(), cohort.end());

    std::vector<ParamVector> updates;
    std::vector<std::size_t> sizes;
    for (std::size_t id : cohort) {
        Rng crng(substream_seed(cfg.seed, 1, id));
        updates.push_back(
            model_update(spec, w0, shards[id], cfg.batch_size, 1.0, cfg.local_iters, crng));
        sizes.push_back(shards[id].size());
    }
    const ParamVector w1 = update_global(w0, fedavg(updates, sizes), cfg.lr);
    CHECK(run.params == w1);
}

TEST_CASE("repeated runs are bit-identical") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 5;
    cfg.root_size = 30;
    cfg.agg.rule = Rule::FLTrust;
    cfg.attack.kind = AttackKind::TrimAttack;
    cfg.attack.m_fraction = 0.25;

    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);
    CHECK(a.params == b.params);
    REQUIRE(a.metrics.history.size() == b.metrics.history.size());
    for (std::size_t i = 0; i < a.metrics.history.size(); ++i) {
        const RoundRecord& ra = a.metrics.history[i];
        const RoundRecord& rb = b.metrics.history[i];
        CHECK(ra.round == rb.round);
        CHECK(same_metric(ra.train_err, rb.train_err));
        CHECK(same_metric(ra.test_err, rb.test_err));
        CHECK(same_metric(ra.attack_success, rb.attack_success));
        CHECK(same_metric(ra.g_norm, rb.g_norm));
        CHECK(same_metric(ra.g0_norm, rb.g0_norm));
        CHECK(same_metric(ra.trust_sum, rb.trust_sum));
    }

    ExperimentConfig other = cfg;
    other.seed = 2;
    CHECK(run_experiment(other).params != a.params);
}

TEST_CASE("the server-only variant is centralized training on the root") {
    ExperimentConfig cfg = small_config();
    cfg.n = 3;
    cfg.rounds = 3;
    cfg.root_size = 30;
    cfg.agg.rule = Rule::FLTrust;
    cfg.agg.variant = FltrustVariant::ServerOnly;
    const ExperimentResult run = run_experiment(cfg);

    const Dataset train =
        generate_synthetic(cfg.data.classes, cfg.data.input_dim, cfg.data.per_class,
                           cfg.data.spread, substream_seed(cfg.seed, 0, kDataStream));
    RootConfig rc;
    rc.size = cfg.root_size;
    rc.kind = RootCase::CaseI;
    rc.seed = substream_seed(cfg.seed, 0, kRootStream);
    const RootSplit split = sample_root(train, rc);

    const ModelSpec spec = spec_of(cfg);
    ParamVector w = init_params(spec, cfg.init_scale, substream_seed(cfg.seed, 0, kInitStream));
    for (int round = 1; round <= cfg.rounds; ++round) {
        Rng server_rng(substream_seed(cfg.seed, round, kServerStream));
        const ParamVector g0 =
            model_update(spec, w, split.root, cfg.batch_size, 1.0, cfg.local_iters, server_rng);
        w = update_global(w, g0, cfg.lr);
    }
    CHECK(run.params == w);
    for (const RoundRecord& rec : run.metrics.history) {
        CHECK(rec.trust_sum == 1.0);
        CHECK(rec.g_norm == rec.g0_norm);
    }
}

TEST_CASE("testing_error_rate counts mismatches") {
    const Dataset test = balanced_dataset(10, 3);
    ModelSpec spec;
    spec.kind = ModelKind::LogisticRegression;
    spec.input_dim = 2;
    spec.num_classes = 10;
    // Zero weights predict the lowest label everywhere: 1/10 correct.
    const ParamVector zero(spec.param_count(), 0.0);
    CHECK(testing_error_rate(spec, zero, test) == doctest::Approx(0.9).epsilon(1e-12));

    Dataset empty;
    empty.input_dim = 2;
    empty.num_classes = 10;
    CHECK_THROWS_AS(testing_error_rate(spec, zero, empty), config_error);
}

TEST_CASE("attack_success_rate counts target-label predictions") {
    const Dataset target = balanced_dataset(4, 5);
    ModelSpec spec;
    spec.kind = ModelKind::LogisticRegression;
    spec.input_dim = 2;
    spec.num_classes = 4;
    const ParamVector zero(spec.param_count(), 0.0);
    CHECK(attack_success_rate(spec, zero, target, 0) == 1.0);
    CHECK(attack_success_rate(spec, zero, target, 1) == 0.0);

    Dataset empty;
    empty.input_dim = 2;
    empty.num_classes = 4;
    CHECK_THROWS_AS(attack_success_rate(spec, zero, empty, 0), config_error);
}

TEST_CASE("deviation bound holds and is tight when all clients echo the server") {
    Rng rng(3);
    const std::size_t d = 6;
    ParamVector g0(d), grad(d);
    for (double& v : g0) v = rng.normal();
    for (double& v : grad) v = rng.normal();

    const std::vector<ParamVector> updates(4, g0);
    const DeviationBound r = deviation_bound_check(updates, g0, grad);
    CHECK(r.holds);
    // Unanimous agreement collapses the aggregate onto the server update.
    CHECK(r.lhs == doctest::Approx(norm(difference(g0, grad))).epsilon(1e-12));
    CHECK(r.rhs == doctest::Approx(3.0 * norm(difference(g0, grad)) + 2.0 * norm(grad))
                       .epsilon(1e-12));
}

TEST_CASE("deviation bound survives adversarial updates") {
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 1 + rng.uniform_below(8);
        const std::size_t n = 1 + rng.uniform_below(6);
        ParamVector g0(d), grad(d);
        for (double& v : g0) v = rng.normal() * std::exp(rng.uniform(-2.0, 2.0));
        for (double& v : grad) v = rng.normal() * std::exp(rng.uniform(-2.0, 2.0));
        std::vector<ParamVector> updates(n, ParamVector(d));
        for (ParamVector& u : updates)
            for (double& v : u) v = rng.normal() * std::exp(rng.uniform(-3.0, 3.0));
        CHECK(deviation_bound_check(updates, g0, grad).holds);
    }
}

TEST_CASE("convergence_probe reports threshold crossing and plateau") {
    std::vector<RoundRecord> history;
    for (int r = 1; r <= 20; ++r) {
        RoundRecord rec;
        rec.round = r;
        rec.train_err = 1.0 / r;
        history.push_back(rec);
    }

    const ConvergenceSummary hit = convergence_probe(history, 0.2);
    CHECK(hit.reached);
    CHECK(hit.rounds_to_threshold == 6);  // 1/5 = 0.2 is not below the threshold
    CHECK(hit.plateau == doctest::Approx((1.0 / 19 + 1.0 / 20) / 2).epsilon(1e-12));

    const ConvergenceSummary miss = convergence_probe(history, 0.0);
    CHECK(!miss.reached);
    CHECK(miss.rounds_to_threshold == -1);

    CHECK_THROWS_AS(convergence_probe({}, 0.5), config_error);
}

TEST_CASE("trust-weighted rounds keep the norm cap and non-negative trust") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 10;
    cfg.root_size = 30;
    cfg.agg.rule = Rule::FLTrust;
    cfg.attack.kind = AttackKind::TrimAttack;
    cfg.attack.m_fraction = 0.25;

    const ExperimentResult run = run_experiment(cfg);
    REQUIRE(run.metrics.history.size() == 10);
    int expected_round = 1;
    for (const RoundRecord& rec : run.metrics.history) {
        CHECK(rec.round == expected_round++);
        CHECK(rec.trust_sum >= 0.0);
        CHECK(rec.g_norm <= rec.g0_norm + 1e-9);
    }
}

TEST_CASE("eval_stride carries metrics forward between evaluations") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 7;
    cfg.eval_stride = 3;
    const ExperimentResult run = run_experiment(cfg);
    const std::vector<RoundRecord>& h = run.metrics.history;
    REQUIRE(h.size() == 7);

    // Evaluations land on rounds 1, 3, 6 and the final round 7.
    CHECK(h[1].train_err == h[0].train_err);  // round 2 carries round 1
    CHECK(h[1].test_err == h[0].test_err);
    CHECK(h[3].train_err == h[2].train_err);  // rounds 4, 5 carry round 3
    CHECK(h[4].test_err == h[2].test_err);
    CHECK(run.metrics.final_test_error == h[6].test_err);
    // The distance norms are still fresh every round.
    for (const RoundRecord& rec : h) CHECK(std::isfinite(rec.g_norm));
}

TEST_CASE("divergence raises an error naming the round") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 50;
    cfg.lr = 1e9;
    cfg.divergence_limit = 10.0;
    try {
        run_experiment(cfg);
        FAIL("expected divergence");
    } catch (const divergence_error& e) {
        CHECK(e.round == 1);
        CHECK(std::string(e.what()).find("round 1") != std::string::npos);
    }
}

TEST_CASE("attack resolution rounds half up and ignores disabled attacks") {
    ExperimentConfig cfg = small_config();
    cfg.n = 20;
    cfg.attack.m_fraction = 0.3;
    CHECK(cfg.resolved_m() == 0);  // attack none

    cfg.attack.kind = AttackKind::TrimAttack;
    cfg.attack.m_fraction = 0.25;
    CHECK(cfg.resolved_m() == 5);
    cfg.n = 5;
    cfg.attack.m_fraction = 0.5;
    CHECK(cfg.resolved_m() == 3);

    cfg.tau = 0;
    CHECK(cfg.resolved_tau() == 5);
    cfg.tau = 3;
    CHECK(cfg.resolved_tau() == 3);
}

TEST_CASE("config validation names the offending key") {
    auto message_of = [](const ExperimentConfig& cfg) {
        try {
            cfg.validate();
        } catch (const config_error& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };

    ExperimentConfig cfg = small_config();
    cfg.tau = -1;
    CHECK(message_of(cfg).find("'tau'") != std::string::npos);

    cfg = small_config();
    cfg.rounds = 0;
    CHECK(message_of(cfg).find("'R_g'") != std::string::npos);

    cfg = small_config();
    cfg.local_iters = 0;
    CHECK(message_of(cfg).find("'R_l'") != std::string::npos);

    cfg = small_config();
    cfg.batch_size = 0;
    CHECK(message_of(cfg).find("'b'") != std::string::npos);

    cfg = small_config();
    cfg.q = 0.0;
    CHECK(message_of(cfg).find("'q'") != std::string::npos);

    cfg = small_config();
    cfg.agg.rule = Rule::FLTrust;
    cfg.root_size = 0;
    const std::string root_msg = message_of(cfg);
    CHECK(root_msg.find("'root_size'") != std::string::npos);
    CHECK(root_msg.find("fltrust") != std::string::npos);

    cfg = small_config();
    cfg.attack.kind = AttackKind::Adaptive;
    cfg.attack.m_fraction = 0.25;
    cfg.root_size = 0;
    const std::string adaptive_msg = message_of(cfg);
    CHECK(adaptive_msg.find("'root_size'") != std::string::npos);
    CHECK(adaptive_msg.find("adaptive") != std::string::npos);

    cfg = small_config();
    cfg.root_case = RootCase::CaseII;
    cfg.biased_class = 7;  // only 3 classes
    CHECK(message_of(cfg).find("'biased_class'") != std::string::npos);

    cfg = small_config();
    cfg.data.kind = DataKind::Csv;
    CHECK(message_of(cfg).find("'data.train'") != std::string::npos);
    cfg.data.train_path = "train.csv";
    CHECK(message_of(cfg).find("'data.test'") != std::string::npos);

    cfg = small_config();
    cfg.eval_stride = 0;
    CHECK(message_of(cfg).find("'eval_stride'") != std::string::npos);

    cfg = small_config();
    cfg.divergence_limit = 0.0;
    CHECK(message_of(cfg).find("'divergence_limit'") != std::string::npos);
}

TEST_CASE("label flipping changes the trained model") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 3;
    const ExperimentResult clean = run_experiment(cfg);

    cfg.attack.kind = AttackKind::LabelFlip;
    cfg.attack.m_fraction = 0.5;
    const ExperimentResult flipped = run_experiment(cfg);
    CHECK(clean.params != flipped.params);
}

TEST_CASE("scaling runs publish the attack-success column") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 2;
    cfg.attack.kind = AttackKind::Scaling;
    cfg.attack.m_fraction = 0.25;
    cfg.attack.poison_p = 0.5;
    cfg.attack.scale_lambda = 2.0;
    cfg.attack.trigger.indices = {0, 1};
    cfg.attack.trigger.values = {3.0, 3.0};
    cfg.attack.trigger.target_label = 0;

    const ExperimentResult run = run_experiment(cfg);
    REQUIRE(run.metrics.final_attack_success.has_value());
    for (const RoundRecord& rec : run.metrics.history) {
        CHECK(!std::isnan(rec.attack_success));
        CHECK(rec.attack_success >= 0.0);
        CHECK(rec.attack_success <= 1.0);
    }
}

TEST_CASE("server-update norms appear exactly when a server update exists") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 2;
    cfg.root_size = 30;

    // Plain rules without the adaptive attack never touch the root.
    cfg.agg.rule = Rule::Median;
    ExperimentResult run = run_experiment(cfg);
    for (const RoundRecord& rec : run.metrics.history) {
        CHECK(std::isnan(rec.g0_norm));
        CHECK(std::isnan(rec.trust_sum));
    }

    // The adaptive attack needs the server update even under fedavg.
    cfg.agg.rule = Rule::FedAvg;
    cfg.attack.kind = AttackKind::Adaptive;
    cfg.attack.m_fraction = 0.25;
    run = run_experiment(cfg);
    for (const RoundRecord& rec : run.metrics.history) {
        CHECK(std::isfinite(rec.g0_norm));
        CHECK(std::isnan(rec.trust_sum));
    }
}

TEST_CASE("krum as the round rule trains without a root") {
    ExperimentConfig cfg = small_config();
    cfg.n = 5;
    cfg.rounds = 2;
    cfg.agg.rule = Rule::Krum;
    cfg.agg.krum_f = 1;
    const ExperimentResult run = run_experiment(cfg);
    for (const RoundRecord& rec : run.metrics.history) {
        CHECK(std::isfinite(rec.g_norm));
        CHECK(std::isnan(rec.g0_norm));
    }
}

TEST_CASE("an empty client shard is rejected with advice") {
    // 3 classes x 2 examples spread over 6 clients: some client goes empty.
    ExperimentConfig base = small_config();
    base.n = 6;
    base.q = 1.0;
    base.data.per_class = 2;
    base.batch_size = 1;

    bool triggered = false;
    for (std::uint64_t seed = 1; seed <= 20 && !triggered; ++seed) {
        ExperimentConfig cfg = base;
        cfg.seed = seed;
        try {
            run_experiment(cfg);
        } catch (const config_error& e) {
            triggered = true;
            CHECK(std::string(e.what()).find("shard") != std::string::npos);
        }
    }
    CHECK(triggered);
}
