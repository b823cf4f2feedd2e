#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fltrust/common.hpp"
#include "fltrust/data.hpp"
#include "fltrust/model.hpp"
#include "fltrust/rng.hpp"

namespace fltrust {

enum class AttackKind { None, LabelFlip, KrumAttack, TrimAttack, Scaling, Adaptive };

// Attacker settings. Malicious clients are the ids 0..m-1, with
// m = round(m_fraction * n) resolved by the simulation.
struct AttackConfig {
    AttackKind kind = AttackKind::None;
    double m_fraction = 0.2;

    // Scaling
    double poison_p = 0.5;       // fraction of local examples copied and poisoned
    double scale_lambda = 0.0;   // 0 resolves to n
    TriggerSpec trigger;

    // Adaptive (unit-direction ascent)
    double sigma2 = 0.5;   // variance of the probe directions
    double gamma = 0.005;  // smoothing step
    double eta = 0.01;     // ascent step
    int steps_q = 10;      // inner steps per client
    int sweeps_v = 10;     // outer sweeps

    // Directed-deviation search
    double lambda_init = 10.0;
    double lambda_floor = 1e-5;

    void validate(int n, int input_dim, int num_classes) const;
};

// Every label flipped to M - l - 1; features untouched.
Dataset label_flip_poison(const Dataset& dataset);

// Crafts m near-identical updates -lambda*s (s = sign of the mean of the
// true updates), halving lambda from lambda_init until the selector picks a
// malicious index or lambda drops below lambda_floor. true_updates holds all
// n clients' updates, malicious first; w is the current global model the
// full-knowledge attacker sees.
std::vector<ParamVector> krum_attack(const std::vector<ParamVector>& true_updates, std::size_t m,
                                     int f, const ParamVector& w, double lambda_init = 10.0,
                                     double lambda_floor = 1e-5);

// Per coordinate, places the m malicious values just outside the benign
// range on the side opposite the sign of the no-attack mean. Benign range is
// taken over the clients that stay benign (indices >= m).
std::vector<ParamVector> trim_attack(const std::vector<ParamVector>& true_updates, std::size_t m,
                                     Rng& rng);

// Copies floor(p*|D|) local examples, embeds the trigger with the target
// label, trains on the augmented dataset, and scales the resulting update by
// lambda. With p=0 and lambda=1 this is exactly the benign update.
ParamVector scaling_attack(const Dataset& client_data, const TriggerSpec& trigger, double p,
                           double lambda, const ModelSpec& spec, const ParamVector& w,
                           int batch_size, double beta, int local_iters, Rng& rng);

// Shared quantities of one round the adaptive objective is evaluated
// against: the server direction, the benign tail (clients >= m), and the
// sign vector of the no-attack aggregate.
struct AdaptiveContext {
    ParamVector server_update;             // g0
    ParamVector server_dir;                // g0 / |g0|
    double server_norm = 0.0;
    ParamVector sign_vec;                  // s
    double no_attack_term = 0.0;           // s . (no-attack aggregate)
    std::vector<ParamVector> benign_dirs;  // unit directions of clients >= m
    std::vector<double> benign_trust;      // clipped cosines of clients >= m
    double benign_trust_sum = 0.0;
    ParamVector benign_weighted_sum;       // sum of trust * dir over the tail
};

AdaptiveContext make_adaptive_context(const std::vector<ParamVector>& true_updates, std::size_t m,
                                      const ParamVector& server_update);

// h = s . (no-attack aggregate - aggregate with the first m updates replaced
// by |g0| * dirs[i]). Larger is a stronger deflection. Uses the aggregator's
// zero-total-trust fallback.
double adaptive_objective(const std::vector<ParamVector>& dirs, const AdaptiveContext& ctx);

// Single-sample smoothed estimate: u ~ N(0, sigma^2 I),
// (h(point + gamma*u) - h(point)) / gamma * u.
ParamVector zeroth_order_grad(const std::function<double(const ParamVector&)>& h,
                              const ParamVector& point, double gamma, double sigma, Rng& rng);

struct AdaptiveParams {
    double sigma = 0.7071067811865476;  // sqrt(1/2)
    double gamma = 0.005;
    double eta = 0.01;
    int steps_q = 10;
    int sweeps_v = 10;
};

// Coordinate ascent on the malicious unit directions, initialized from the
// directed-deviation placement; returns the m updates |g0| * e_i. Kept
// sequential over clients: each step sees the previous clients' latest
// directions.
std::vector<ParamVector> adaptive_attack(const ParamVector& server_update,
                                         const std::vector<ParamVector>& true_updates,
                                         std::size_t m, const AdaptiveParams& params, Rng& rng);

}  // namespace fltrust
