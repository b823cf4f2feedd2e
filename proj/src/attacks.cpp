#include "fltrust/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fltrust/aggregation.hpp"

namespace fltrust {

namespace {

// Tag for the poisoned-example selection stream, split off the client stream
// so that p=0 leaves the SGD draws untouched.
constexpr std::uint64_t kScalingSelectTag = 0x5ca11e5e1ec70ull;

ParamVector mean_of(const std::vector<ParamVector>& updates) {
    ParamVector out(updates[0].size(), 0.0);
    const double inv = 1.0 / static_cast<double>(updates.size());
    for (const ParamVector& u : updates) axpy(inv, u, out);
    return out;
}

}  // namespace

void AttackConfig::validate(int n, int input_dim, int num_classes) const {
    if (m_fraction < 0.0 || m_fraction > 1.0)
        throw config_error("config key 'm_fraction': must lie in [0, 1]");
    if (kind == AttackKind::Scaling) {
        if (poison_p < 0.0 || poison_p > 1.0)
            throw config_error("config key 'poison_p': must lie in [0, 1]");
        const double lambda = scale_lambda == 0.0 ? static_cast<double>(n) : scale_lambda;
        if (lambda < 1.0) throw config_error("config key 'scale_lambda': must be at least 1");
        if (trigger.empty())
            throw config_error("config key 'trigger': scaling attack needs a trigger");
        trigger.validate(input_dim, num_classes);
    }
    if (kind == AttackKind::Adaptive) {
        if (sigma2 <= 0.0) throw config_error("config key 'sigma2': must be positive");
        if (gamma <= 0.0) throw config_error("config key 'gamma': must be positive");
        if (eta <= 0.0) throw config_error("config key 'eta': must be positive");
        if (steps_q < 1) throw config_error("config key 'Q': must be at least 1");
        if (sweeps_v < 1) throw config_error("config key 'V': must be at least 1");
    }
    if (kind == AttackKind::KrumAttack) {
        if (lambda_init <= 0.0)
            throw config_error("config key 'lambda_init': must be positive");
        if (lambda_floor <= 0.0)
            throw config_error("config key 'lambda_floor': must be positive");
    }
}

Dataset label_flip_poison(const Dataset& dataset) {
    Dataset out = dataset;
    for (Example& ex : out.examples) ex.label = flip_label(ex.label, out.num_classes);
    return out;
}

std::vector<ParamVector> krum_attack(const std::vector<ParamVector>& true_updates, std::size_t m,
                                     int f, const ParamVector& w, double lambda_init,
                                     double lambda_floor) {
    (void)w;  // the deviation is crafted in update space
    if (m == 0) return {};
    if (m > true_updates.size())
        throw config_error("krum_attack: m exceeds the number of updates");
    const ParamVector s = sign_of(mean_of(true_updates));

    std::vector<ParamVector> assembled(true_updates.begin(), true_updates.end());
    double lambda = lambda_init;
    for (;;) {
        // All malicious clients push -lambda*s; the factors keep the copies
        // distinct without changing any coordinate's sign.
        for (std::size_t j = 0; j < m; ++j)
            assembled[j] = scaled(s, -lambda * (1.0 + 1e-6 * static_cast<double>(j)));
        if (krum(assembled, f).index < m || lambda < lambda_floor) break;
        lambda *= 0.5;
    }
    return std::vector<ParamVector>(assembled.begin(), assembled.begin() + m);
}

std::vector<ParamVector> trim_attack(const std::vector<ParamVector>& true_updates, std::size_t m,
                                     Rng& rng) {
    if (m == 0) return {};
    if (m > true_updates.size())
        throw config_error("trim_attack: m exceeds the number of updates");
    const std::size_t n = true_updates.size();
    const std::size_t d = true_updates[0].size();
    const ParamVector mean = mean_of(true_updates);

    // Range of the values the server will still see from benign clients;
    // with every client malicious, fall back to the full range.
    const std::size_t tail_begin = (m == n) ? 0 : m;
    ParamVector lo(d), hi(d);
    for (std::size_t j = 0; j < d; ++j) {
        double a = true_updates[tail_begin][j];
        double b = a;
        for (std::size_t i = tail_begin + 1; i < n; ++i) {
            a = std::min(a, true_updates[i][j]);
            b = std::max(b, true_updates[i][j]);
        }
        lo[j] = a;
        hi[j] = b;
    }

    std::vector<ParamVector> poisoned(m, ParamVector(d, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double width = std::max({std::fabs(lo[j]), std::fabs(hi[j]), 1e-3});
            if (mean[j] > 0.0)
                poisoned[i][j] = rng.uniform(lo[j] - width, lo[j]);
            else if (mean[j] < 0.0)
                poisoned[i][j] = rng.uniform(hi[j], hi[j] + width);
            else
                poisoned[i][j] = lo[j];
        }
    }
    return poisoned;
}

ParamVector scaling_attack(const Dataset& client_data, const TriggerSpec& trigger, double p,
                           double lambda, const ModelSpec& spec, const ParamVector& w,
                           int batch_size, double beta, int local_iters, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw config_error("scaling_attack: p must lie in [0, 1]");
    const std::size_t n_poison =
        static_cast<std::size_t>(std::floor(p * static_cast<double>(client_data.size())));

    Dataset augmented = client_data;
    if (n_poison > 0) {
        Rng select = rng.derive(kScalingSelectTag);
        const std::vector<std::size_t> picks =
            sample_without_replacement(client_data.size(), n_poison, select);
        for (std::size_t idx : picks)
            augmented.examples.push_back(embed_trigger(client_data.examples[idx], trigger, true));
    }
    ParamVector update = model_update(spec, w, augmented, batch_size, beta, local_iters, rng);
    return scaled(update, lambda);
}

AdaptiveContext make_adaptive_context(const std::vector<ParamVector>& true_updates, std::size_t m,
                                      const ParamVector& server_update) {
    if (true_updates.empty()) throw config_error("make_adaptive_context: no updates");
    if (m > true_updates.size())
        throw config_error("make_adaptive_context: m exceeds the number of updates");
    const std::size_t n = true_updates.size();
    const std::size_t d = server_update.size();

    AdaptiveContext ctx;
    ctx.server_update = server_update;
    ctx.server_norm = norm(server_update);
    ctx.server_dir = ctx.server_norm > 0.0 ? scaled(server_update, 1.0 / ctx.server_norm)
                                           : ParamVector(d, 0.0);

    std::vector<ParamVector> dirs(n, ParamVector(d, 0.0));
    std::vector<double> trust(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double ni = norm(true_updates[i]);
        if (ni == 0.0 || ctx.server_norm == 0.0) continue;
        dirs[i] = scaled(true_updates[i], 1.0 / ni);
        trust[i] = trust_score(std::clamp(dot(dirs[i], ctx.server_dir), -1.0, 1.0));
    }

    double total = 0.0;
    for (double t : trust) total += t;
    ParamVector no_attack(d, 0.0);
    if (total > 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            if (trust[i] > 0.0) axpy(trust[i], dirs[i], no_attack);
        for (double& v : no_attack) v /= total;
    } else {
        no_attack = ctx.server_dir;  // the aggregator's fallback, unit scale
    }

    ctx.sign_vec = sign_of(no_attack);
    ctx.no_attack_term = ctx.server_norm * dot(ctx.sign_vec, no_attack);

    ctx.benign_weighted_sum.assign(d, 0.0);
    for (std::size_t i = m; i < n; ++i) {
        ctx.benign_dirs.push_back(dirs[i]);
        ctx.benign_trust.push_back(trust[i]);
        ctx.benign_trust_sum += trust[i];
        if (trust[i] > 0.0) axpy(trust[i], dirs[i], ctx.benign_weighted_sum);
    }
    return ctx;
}

double adaptive_objective(const std::vector<ParamVector>& dirs, const AdaptiveContext& ctx) {
    const std::size_t d = ctx.server_update.size();
    double denom = ctx.benign_trust_sum;
    ParamVector acc(d, 0.0);
    for (const ParamVector& e : dirs) {
        const double t = trust_score(std::clamp(dot(e, ctx.server_dir), -1.0, 1.0));
        if (t > 0.0) axpy(t, e, acc);
        denom += t;
    }
    axpy(1.0, ctx.benign_weighted_sum, acc);

    ParamVector poisoned_aggregate;
    if (denom > 0.0) {
        poisoned_aggregate = scaled(acc, 1.0 / denom);
    } else {
        poisoned_aggregate = ctx.server_dir;  // same fallback as the aggregator
    }
    return ctx.no_attack_term - ctx.server_norm * dot(ctx.sign_vec, poisoned_aggregate);
}

ParamVector zeroth_order_grad(const std::function<double(const ParamVector&)>& h,
                              const ParamVector& point, double gamma, double sigma, Rng& rng) {
    if (gamma <= 0.0) throw config_error("zeroth_order_grad: gamma must be positive");
    const std::size_t d = point.size();
    ParamVector u(d);
    for (double& v : u) v = sigma * rng.normal();
    ParamVector shifted = point;
    axpy(gamma, u, shifted);
    const double slope = (h(shifted) - h(point)) / gamma;
    return scaled(u, slope);
}

std::vector<ParamVector> adaptive_attack(const ParamVector& server_update,
                                         const std::vector<ParamVector>& true_updates,
                                         std::size_t m, const AdaptiveParams& params, Rng& rng) {
    if (m == 0) return {};
    if (m > true_updates.size())
        throw config_error("adaptive_attack: m exceeds the number of updates");
    const std::size_t d = server_update.size();
    const double server_norm = norm(server_update);
    if (server_norm == 0.0) return std::vector<ParamVector>(m, ParamVector(d, 0.0));

    const AdaptiveContext ctx = make_adaptive_context(true_updates, m, server_update);

    // Directed-deviation placement seeds the directions.
    std::vector<ParamVector> dirs = trim_attack(true_updates, m, rng);
    for (ParamVector& e : dirs) {
        const double ne = norm(e);
        if (ne > 0.0)
            e = scaled(e, 1.0 / ne);
        else
            e = scaled(ctx.server_dir, -1.0);
    }

    // Coordinate ascent, sequential over clients by construction.
    for (int v = 0; v < params.sweeps_v; ++v) {
        for (std::size_t i = 0; i < m; ++i) {
            auto h_i = [&](const ParamVector& e) {
                std::vector<ParamVector> candidate = dirs;
                candidate[i] = e;
                return adaptive_objective(candidate, ctx);
            };
            for (int q = 0; q < params.steps_q; ++q) {
                const ParamVector grad =
                    zeroth_order_grad(h_i, dirs[i], params.gamma, params.sigma, rng);
                ParamVector next = dirs[i];
                axpy(params.eta, grad, next);
                const double nn = norm(next);
                if (nn > 0.0) dirs[i] = scaled(next, 1.0 / nn);
            }
        }
    }

    std::vector<ParamVector> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = scaled(dirs[i], server_norm);
    return out;
}

}  // namespace fltrust
