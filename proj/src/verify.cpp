#include "fltrust/verify.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "fltrust/aggregation.hpp"
#include "fltrust/data.hpp"
#include "fltrust/model.hpp"
#include "fltrust/reference.hpp"
#include "fltrust/rng.hpp"
#include "fltrust/simulation.hpp"

namespace fltrust::verify {

namespace {

using steady = std::chrono::steady_clock;

double seconds_since(steady::time_point t0) {
    return std::chrono::duration<double>(steady::now() - t0).count();
}

std::vector<ParamVector> random_updates(Rng& rng, std::size_t n, std::size_t d, double lo,
                                        double hi) {
    std::vector<ParamVector> out(n, ParamVector(d));
    for (auto& u : out)
        for (double& v : u) v = rng.uniform(lo, hi);
    return out;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Smallest |pre-activation| over the batch; central differences are only a
// valid oracle away from the hidden-layer kinks.
double min_relu_margin(const ModelSpec& spec, const ParamVector& params, const Dataset& data) {
    if (spec.kind != ModelKind::Mlp) return 1.0;
    const int in = spec.input_dim, h = spec.hidden_dim;
    double margin = 1e300;
    for (const Example& ex : data.examples) {
        for (int j = 0; j < h; ++j) {
            double z = params[std::size_t(h) * in + j];
            for (int d = 0; d < in; ++d) z += params[std::size_t(j) * in + d] * ex.features[d];
            margin = std::min(margin, std::fabs(z));
        }
    }
    return margin;
}

}  // namespace

SuiteResult gradient_suite(int trials, std::uint64_t seed) {
    SuiteResult res;
    res.suite = "gradient-fd";
    const auto t0 = steady::now();
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        ModelSpec spec;
        spec.kind = (t % 2 == 0) ? ModelKind::LogisticRegression : ModelKind::Mlp;
        spec.input_dim = 2 + static_cast<int>(rng.uniform_below(5));
        spec.num_classes = 2 + static_cast<int>(rng.uniform_below(4));
        spec.hidden_dim = spec.kind == ModelKind::Mlp ? 2 + static_cast<int>(rng.uniform_below(4))
                                                      : 0;
        const int batch = 1 + static_cast<int>(rng.uniform_below(8));

        Dataset data;
        data.input_dim = spec.input_dim;
        data.num_classes = spec.num_classes;
        ParamVector params;
        for (int attempt = 0;; ++attempt) {
            data.examples.assign(batch, Example{});
            for (Example& ex : data.examples) {
                ex.features.resize(spec.input_dim);
                for (double& v : ex.features) v = rng.normal();
                ex.label = static_cast<int>(rng.uniform_below(spec.num_classes));
            }
            params.resize(spec.param_count());
            for (double& v : params) v = 0.5 * rng.normal();
            if (min_relu_margin(spec, params, data) > 1e-3 || attempt >= 100) break;
        }

        std::vector<std::size_t> idx(data.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        const ParamVector analytic = gradient(spec, params, data, idx);
        const ParamVector fd = ref::finite_diff_gradient(spec, params, data, idx, 1e-5);

        double worst = 0.0;
        std::size_t worst_j = 0;
        for (std::size_t j = 0; j < analytic.size(); ++j) {
            const double denom = std::max({std::fabs(analytic[j]), std::fabs(fd[j]), 1e-4});
            const double rel = std::fabs(analytic[j] - fd[j]) / denom;
            if (rel > worst) {
                worst = rel;
                worst_j = j;
            }
        }
        ++res.trials;
        if (worst > 1e-5) {
            ++res.failures;
            if (res.detail.empty()) {
                std::ostringstream os;
                os << "instance " << t << " coord " << worst_j << " analytic=" << analytic[worst_j]
                   << " fd=" << fd[worst_j] << " rel=" << worst;
                res.detail = os.str();
            }
        }
    }
    res.seconds = seconds_since(t0);
    return res;
}

SuiteResult krum_oracle_suite(int trials, std::uint64_t seed, KrumSelectFn impl) {
    if (!impl)
        impl = [](const std::vector<ParamVector>& u, int f) { return krum(u, f).index; };
    SuiteResult res;
    res.suite = "krum-oracle";
    const auto t0 = steady::now();
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const std::size_t n = 3 + rng.uniform_below(6);  // 3..8
        const std::size_t d = 1 + rng.uniform_below(5);  // 1..5
        const int f = static_cast<int>(rng.uniform_below(n - 2));  // 0..n-3
        const auto updates = random_updates(rng, n, d, -1.0, 1.0);
        const std::size_t got = impl(updates, f);
        const std::size_t want = ref::krum_select(updates, f);
        ++res.trials;
        if (got != want) {
            ++res.failures;
            if (res.detail.empty()) {
                std::ostringstream os;
                os << "instance " << t << " n=" << n << " d=" << d << " f=" << f << " impl=" << got
                   << " oracle=" << want;
                res.detail = os.str();
            }
        }
    }
    res.seconds = seconds_since(t0);
    return res;
}

namespace {

// Shared generator for the coordinate-wise rules; injects duplicate updates
// now and then so ties get exercised.
std::vector<ParamVector> coordinate_rule_instance(Rng& rng, std::size_t n, std::size_t d) {
    auto updates = random_updates(rng, n, d, -1.0, 1.0);
    for (std::size_t i = 1; i < n; ++i)
        if (rng.uniform() < 0.15) updates[i] = updates[rng.uniform_below(i)];
    return updates;
}

}  // namespace

SuiteResult trim_oracle_suite(int trials, std::uint64_t seed, TrimmedMeanFn impl) {
    if (!impl)
        impl = [](const std::vector<ParamVector>& u, int k) { return trimmed_mean(u, k); };
    SuiteResult res;
    res.suite = "trim-mean-oracle";
    const auto t0 = steady::now();
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const std::size_t n = 1 + rng.uniform_below(12);
        const std::size_t d = 1 + rng.uniform_below(6);
        const int k = static_cast<int>(rng.uniform_below((n - 1) / 2 + 1));
        const auto updates = coordinate_rule_instance(rng, n, d);
        const double diff = max_abs_diff(impl(updates, k), ref::trimmed_mean(updates, k));
        ++res.trials;
        if (diff > 1e-12) {
            ++res.failures;
            if (res.detail.empty()) {
                std::ostringstream os;
                os << "instance " << t << " n=" << n << " d=" << d << " k=" << k
                   << " max diff=" << diff;
                res.detail = os.str();
            }
        }
    }
    res.seconds = seconds_since(t0);
    return res;
}

SuiteResult median_oracle_suite(int trials, std::uint64_t seed, MedianFn impl) {
    if (!impl) impl = [](const std::vector<ParamVector>& u) { return median(u); };
    SuiteResult res;
    res.suite = "median-oracle";
    const auto t0 = steady::now();
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const std::size_t n = 1 + rng.uniform_below(12);
        const std::size_t d = 1 + rng.uniform_below(6);
        const auto updates = coordinate_rule_instance(rng, n, d);
        const double diff = max_abs_diff(impl(updates), ref::median(updates));
        ++res.trials;
        if (diff > 1e-12) {
            ++res.failures;
            if (res.detail.empty()) {
                std::ostringstream os;
                os << "instance " << t << " n=" << n << " d=" << d << " max diff=" << diff;
                res.detail = os.str();
            }
        }
    }
    res.seconds = seconds_since(t0);
    return res;
}

SuiteResult fltrust_invariant_suite(int trials, std::uint64_t seed) {
    SuiteResult res;
    res.suite = "fltrust-invariants";
    const auto t0 = steady::now();
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const std::size_t n = 1 + rng.uniform_below(8);
        const std::size_t d = 1 + rng.uniform_below(16);
        ParamVector g0(d);
        do {
            for (double& v : g0) v = rng.normal();
        } while (norm(g0) < 1e-6);
        std::vector<ParamVector> updates(n, ParamVector(d));
        for (auto& u : updates)
            for (double& v : u) v = rng.normal();
        if (rng.uniform() < 0.1) updates[rng.uniform_below(n)].assign(d, 0.0);

        const FltrustResult base = fltrust_aggregate(updates, g0, FltrustVariant::Standard);
        std::string why;

        // Norm cap.
        if (norm(base.update) > norm(g0) + 1e-9) why = "norm cap";

        // Rescaling any one update by a positive factor changes nothing.
        if (why.empty()) {
            auto scaled_updates = updates;
            const std::size_t i = rng.uniform_below(n);
            const double c = std::exp(rng.uniform(-3.0, 3.0));
            scaled_updates[i] = scaled(scaled_updates[i], c);
            const FltrustResult r2 =
                fltrust_aggregate(scaled_updates, g0, FltrustVariant::Standard);
            if (max_abs_diff(base.update, r2.update) > 1e-12) why = "positive-scale invariance";
        }

        // An update with non-positive cosine contributes nothing.
        if (why.empty()) {
            ParamVector v(d);
            for (double& x : v) x = rng.normal();
            const double along = dot(v, g0) / dot(g0, g0);
            axpy(-(along + std::fabs(rng.normal()) + 0.1), g0, v);  // now dot(v, g0) < 0
            auto widened = updates;
            widened.push_back(v);
            const FltrustResult r3 = fltrust_aggregate(widened, g0, FltrustVariant::Standard);
            if (max_abs_diff(base.update, r3.update) > 1e-12) why = "clip exclusion";
        }

        // Direct-formula reference agreement.
        if (why.empty()) {
            const ParamVector direct = ref::fltrust_standard(updates, g0);
            if (max_abs_diff(base.update, direct) > 1e-12) why = "reference agreement";
        }

        ++res.trials;
        if (!why.empty()) {
            ++res.failures;
            if (res.detail.empty())
                res.detail = "instance " + std::to_string(t) + ": " + why + " violated";
        }
    }
    res.seconds = seconds_since(t0);
    return res;
}

SuiteResult deviation_bound_suite(int trials, std::uint64_t seed) {
    SuiteResult res;
    res.suite = "deviation-bound";
    const auto t0 = steady::now();
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const std::size_t n = 1 + rng.uniform_below(8);
        const std::size_t d = 1 + rng.uniform_below(16);
        // Adversarial magnitudes across several orders.
        std::vector<ParamVector> updates(n, ParamVector(d));
        for (auto& u : updates) {
            const double scale = std::exp(rng.uniform(-2.0, 2.0));
            for (double& v : u) v = scale * rng.normal();
        }
        ParamVector g0(d), grad(d);
        for (double& v : g0) v = rng.normal();
        for (double& v : grad) v = rng.normal();

        const DeviationBound b = deviation_bound_check(updates, g0, grad);
        ++res.trials;
        if (!b.holds) {
            ++res.failures;
            if (res.detail.empty()) {
                std::ostringstream os;
                os << "instance " << t << " lhs=" << b.lhs << " rhs=" << b.rhs;
                res.detail = os.str();
            }
        }
    }
    res.seconds = seconds_since(t0);
    return res;
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
    return {
        gradient_suite(200, mix64(seed ^ 0x6772616444ull)),
        krum_oracle_suite(1000, mix64(seed ^ 0x6b72756dull)),
        trim_oracle_suite(1000, mix64(seed ^ 0x7472696dull)),
        median_oracle_suite(1000, mix64(seed ^ 0x6d656469ull)),
        fltrust_invariant_suite(1000, mix64(seed ^ 0x696e7661ull)),
        deviation_bound_suite(1000, mix64(seed ^ 0x6465764cull)),
    };
}

}  // namespace fltrust::verify
