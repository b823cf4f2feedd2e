#include "fltrust/reference.hpp"

#include <algorithm>
#include <cmath>

namespace fltrust::ref {

namespace {

double vec_dot(const ParamVector& a, const ParamVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double vec_norm(const ParamVector& a) { return std::sqrt(vec_dot(a, a)); }

}  // namespace

ParamVector trimmed_mean(const std::vector<ParamVector>& updates, int k) {
    const int n = static_cast<int>(updates.size());
    if (n == 0 || 2 * k >= n) throw config_error("ref::trimmed_mean: needs 2k < n");
    const std::size_t d = updates[0].size();
    ParamVector out(d, 0.0);
    std::vector<double> vals(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) vals[i] = updates[i][j];
        std::sort(vals.begin(), vals.end());
        double s = 0.0;
        for (int i = k; i < n - k; ++i) s += vals[i];
        out[j] = s / static_cast<double>(n - 2 * k);
    }
    return out;
}

ParamVector median(const std::vector<ParamVector>& updates) {
    const int n = static_cast<int>(updates.size());
    if (n == 0) throw config_error("ref::median: no updates");
    const std::size_t d = updates[0].size();
    ParamVector out(d, 0.0);
    std::vector<double> vals(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) vals[i] = updates[i][j];
        std::sort(vals.begin(), vals.end());
        out[j] = (n % 2 == 1) ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    }
    return out;
}

std::vector<double> krum_scores(const std::vector<ParamVector>& updates, int f) {
    const int n = static_cast<int>(updates.size());
    const int keep = n - f - 2;
    if (keep < 1) throw config_error("ref::krum_scores: needs n - f - 2 >= 1");
    std::vector<double> scores(n, 0.0);
    for (int i = 0; i < n; ++i) {
        std::vector<double> row;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < updates[i].size(); ++c) {
                const double diff = updates[i][c] - updates[j][c];
                s += diff * diff;
            }
            row.push_back(s);
        }
        std::sort(row.begin(), row.end());
        for (int c = 0; c < keep; ++c) scores[i] += row[c];
    }
    return scores;
}

std::size_t krum_select(const std::vector<ParamVector>& updates, int f) {
    const std::vector<double> scores = krum_scores(updates, f);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] < scores[best]) best = i;
    return best;
}

double softmax_cross_entropy(const ModelSpec& spec, const ParamVector& params,
                             const Dataset& data, const std::vector<std::size_t>& idx) {
    const int in = spec.input_dim, m = spec.num_classes, h = spec.hidden_dim;
    double total = 0.0;
    for (std::size_t i : idx) {
        const Example& ex = data.examples[i];
        std::vector<double> logits(m, 0.0);
        if (spec.kind == ModelKind::LogisticRegression) {
            for (int c = 0; c < m; ++c) {
                double z = params[std::size_t(in) * m + c];
                for (int d = 0; d < in; ++d) z += params[std::size_t(c) * in + d] * ex.features[d];
                logits[c] = z;
            }
        } else {
            std::vector<double> act(h, 0.0);
            for (int j = 0; j < h; ++j) {
                double z = params[std::size_t(h) * in + j];
                for (int d = 0; d < in; ++d) z += params[std::size_t(j) * in + d] * ex.features[d];
                act[j] = std::max(0.0, z);
            }
            const std::size_t w2 = std::size_t(h) * in + h;
            const std::size_t b2 = w2 + std::size_t(m) * h;
            for (int c = 0; c < m; ++c) {
                double z = params[b2 + c];
                for (int j = 0; j < h; ++j) z += params[w2 + std::size_t(c) * h + j] * act[j];
                logits[c] = z;
            }
        }
        double denom = 0.0;
        for (double v : logits) denom += std::exp(v);
        total += -std::log(std::exp(logits[ex.label]) / denom);
    }
    return total / static_cast<double>(idx.size());
}

ParamVector finite_diff_gradient(const ModelSpec& spec, const ParamVector& params,
                                 const Dataset& data, const std::vector<std::size_t>& idx,
                                 double step) {
    ParamVector out(params.size(), 0.0);
    ParamVector probe = params;
    for (std::size_t j = 0; j < params.size(); ++j) {
        probe[j] = params[j] + step;
        const double up = softmax_cross_entropy(spec, probe, data, idx);
        probe[j] = params[j] - step;
        const double down = softmax_cross_entropy(spec, probe, data, idx);
        probe[j] = params[j];
        out[j] = (up - down) / (2.0 * step);
    }
    return out;
}

ParamVector fltrust_standard(const std::vector<ParamVector>& updates,
                             const ParamVector& server_update) {
    const std::size_t d = server_update.size();
    const double g0n = vec_norm(server_update);
    if (g0n == 0.0) return ParamVector(d, 0.0);

    double denom = 0.0;
    for (const ParamVector& u : updates) {
        const double un = vec_norm(u);
        if (un == 0.0) continue;
        const double c = vec_dot(u, server_update) / (un * g0n);
        if (c > 0.0) denom += c;
    }
    if (denom == 0.0) return server_update;

    ParamVector out(d, 0.0);
    for (const ParamVector& u : updates) {
        const double un = vec_norm(u);
        if (un == 0.0) continue;
        const double c = vec_dot(u, server_update) / (un * g0n);
        if (c <= 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) out[j] += c * (g0n / un) * u[j];
    }
    for (double& v : out) v /= denom;
    return out;
}

double adaptive_objective(const std::vector<ParamVector>& dirs,
                          const std::vector<ParamVector>& true_updates, std::size_t m,
                          const ParamVector& server_update) {
    const std::size_t n = true_updates.size();
    const std::size_t d = server_update.size();
    const double g0n = vec_norm(server_update);
    if (g0n == 0.0) return 0.0;
    ParamVector e0(d);
    for (std::size_t j = 0; j < d; ++j) e0[j] = server_update[j] / g0n;

    std::vector<ParamVector> e(n, ParamVector(d, 0.0));
    std::vector<double> relu_c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double ni = vec_norm(true_updates[i]);
        if (ni == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) e[i][j] = true_updates[i][j] / ni;
        const double c = vec_dot(e[i], e0);
        relu_c[i] = std::max(0.0, c);
    }

    double denom1 = 0.0;
    for (double t : relu_c) denom1 += t;
    ParamVector term1(d, 0.0);
    if (denom1 > 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) term1[j] += relu_c[i] / denom1 * e[i][j];
    } else {
        term1 = e0;
    }

    ParamVector s(d, 0.0);
    for (std::size_t j = 0; j < d; ++j)
        s[j] = term1[j] > 0.0 ? 1.0 : (term1[j] < 0.0 ? -1.0 : 0.0);

    double denom2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) denom2 += std::max(0.0, vec_dot(dirs[i], e0));
    for (std::size_t i = m; i < n; ++i) denom2 += relu_c[i];
    ParamVector term2(d, 0.0);
    if (denom2 > 0.0) {
        for (std::size_t i = 0; i < m; ++i) {
            const double t = std::max(0.0, vec_dot(dirs[i], e0));
            for (std::size_t j = 0; j < d; ++j) term2[j] += t / denom2 * dirs[i][j];
        }
        for (std::size_t i = m; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) term2[j] += relu_c[i] / denom2 * e[i][j];
    } else {
        term2 = e0;
    }

    double h = 0.0;
    for (std::size_t j = 0; j < d; ++j) h += s[j] * (term1[j] - term2[j]);
    return g0n * h;
}

}  // namespace fltrust::ref
