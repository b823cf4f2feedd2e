#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fltrust/aggregation.hpp"
#include "fltrust/attacks.hpp"
#include "fltrust/common.hpp"
#include "fltrust/data.hpp"
#include "fltrust/model.hpp"

namespace fltrust {

enum class DataKind { Synthetic, Csv };

struct DataConfig {
    DataKind kind = DataKind::Synthetic;
    // Synthetic
    int classes = 10;
    int input_dim = 32;
    int per_class = 200;
    int test_per_class = 100;
    double spread = 0.3;
    // Csv
    std::string train_path;
    std::string test_path;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    int n = 20;          // clients
    int tau = 0;         // sampled per round; 0 resolves to n
    int rounds = 500;    // global rounds
    int local_iters = 1; // SGD steps per client per round
    int batch_size = 32;
    double lr = 0.3;     // global step size; local steps use beta = 1
    double q = 0.5;      // own-label assignment probability
    ModelKind model = ModelKind::LogisticRegression;
    int hidden_dim = 32; // Mlp only
    DataConfig data;
    int root_size = 100; // 0 disables the root dataset
    RootCase root_case = RootCase::CaseI;
    double bias_probability = 0.1;
    int biased_class = 1;
    AggregatorConfig agg;
    AttackConfig attack;
    int eval_stride = 1;       // error rates computed every this many rounds
    double init_scale = 0.01;
    double divergence_limit = 1e12;

    int resolved_tau() const { return tau == 0 ? n : tau; }
    int resolved_m() const;
    // Throws config_error naming the offending key.
    void validate() const;
};

// One row of the training history. NaN marks metrics the run does not
// produce (no trigger, no server update).
struct RoundRecord {
    int round = 0;
    double train_err = 0.0;
    double test_err = 0.0;
    double attack_success = 0.0;
    double g_norm = 0.0;
    double g0_norm = 0.0;
    double trust_sum = 0.0;
};

struct MetricsReport {
    double final_test_error = 0.0;
    std::optional<double> final_attack_success;
    std::vector<RoundRecord> history;  // length = rounds
};

struct ExperimentResult {
    ParamVector params;
    MetricsReport metrics;
};

// Runs the full training loop: each round samples tau clients, computes
// their local updates (replaced by the configured attack for ids below m),
// aggregates per the configured rule, and applies the global step. All
// randomness derives from cfg.seed via the substream scheme in rng.hpp, so
// results do not depend on thread count. Throws divergence_error (with the
// round) when a parameter leaves [-divergence_limit, divergence_limit].
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Fraction of examples whose predicted label differs from the true label.
double testing_error_rate(const ModelSpec& spec, const ParamVector& params, const Dataset& test);

// Fraction of target-set examples predicted as the target label.
double attack_success_rate(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& target_set, int target_label);

struct DeviationBound {
    double lhs = 0.0;  // |g - grad|
    double rhs = 0.0;  // 3|g0 - grad| + 2|grad|
    bool holds = false;
};

// Checks that the trust-weighted aggregate stays within the bounded distance
// of the full-data gradient implied by its norm cap, for arbitrary updates:
// |g - grad| <= 3|g0 - grad| + 2|grad|.
DeviationBound deviation_bound_check(const std::vector<ParamVector>& updates,
                                     const ParamVector& server_update,
                                     const ParamVector& full_gradient);

struct ConvergenceSummary {
    bool reached = false;
    int rounds_to_threshold = -1;  // first round with train_err below threshold
    double plateau = 0.0;          // mean train_err of the last 10% of rounds
};

ConvergenceSummary convergence_probe(const std::vector<RoundRecord>& history, double threshold);

}  // namespace fltrust
