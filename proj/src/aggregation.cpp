#include "fltrust/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fltrust {

namespace {

void check_same_dim(const std::vector<ParamVector>& updates, const char* who) {
    if (updates.empty()) throw config_error(std::string(who) + ": no updates");
    const std::size_t d = updates[0].size();
    for (std::size_t i = 1; i < updates.size(); ++i)
        if (updates[i].size() != d)
            throw config_error(std::string(who) + ": update " + std::to_string(i) + " has " +
                               std::to_string(updates[i].size()) + " entries, expected " +
                               std::to_string(d));
}

}  // namespace

void AggregatorConfig::validate(int n_clients) const {
    if (rule == Rule::Krum) {
        if (n_clients - krum_f - 2 < 1)
            throw config_error("config key 'f': krum needs n - f - 2 >= 1 (n=" +
                               std::to_string(n_clients) + ", f=" + std::to_string(krum_f) + ")");
        if (krum_f < 0) throw config_error("config key 'f': must be non-negative");
    }
    if (rule == Rule::TrimMean) {
        if (trim_k < 0) throw config_error("config key 'k': must be non-negative");
        if (2 * trim_k >= n_clients)
            throw config_error("config key 'k': trim_mean needs 2k < n (n=" +
                               std::to_string(n_clients) + ", k=" + std::to_string(trim_k) + ")");
    }
}

ParamVector fedavg(const std::vector<ParamVector>& updates, const std::vector<std::size_t>& sizes) {
    check_same_dim(updates, "fedavg");
    if (sizes.size() != updates.size())
        throw config_error("fedavg: " + std::to_string(updates.size()) + " updates but " +
                           std::to_string(sizes.size()) + " sizes");
    double total = 0.0;
    for (std::size_t s : sizes) {
        if (s == 0) throw config_error("fedavg: dataset sizes must be positive");
        total += static_cast<double>(s);
    }
    ParamVector out(updates[0].size(), 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i)
        axpy(static_cast<double>(sizes[i]) / total, updates[i], out);
    return out;
}

std::vector<double> krum_scores(const std::vector<ParamVector>& updates, int f) {
    check_same_dim(updates, "krum");
    const int n = static_cast<int>(updates.size());
    const int keep = n - f - 2;  // nearest neighbors summed per score
    if (f < 0 || keep < 1)
        throw config_error("krum: needs n - f - 2 >= 1 (n=" + std::to_string(n) +
                           ", f=" + std::to_string(f) + ")");

    std::vector<double> dist2(static_cast<std::size_t>(n) * n, 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            const ParamVector& a = updates[i];
            const ParamVector& b = updates[j];
            for (std::size_t k = 0; k < a.size(); ++k) {
                const double diff = a[k] - b[k];
                s += diff * diff;
            }
            dist2[std::size_t(i) * n + j] = s;
        }
    }

    std::vector<double> scores(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        std::vector<double> row;
        row.reserve(n - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) row.push_back(dist2[std::size_t(i) * n + j]);
        std::nth_element(row.begin(), row.begin() + keep, row.end());
        double s = 0.0;
        for (int k = 0; k < keep; ++k) s += row[k];
        scores[i] = s;
    }
    return scores;
}

KrumSelection krum(const std::vector<ParamVector>& updates, int f) {
    const std::vector<double> scores = krum_scores(updates, f);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] < scores[best]) best = i;
    return {best, updates[best]};
}

ParamVector trimmed_mean(const std::vector<ParamVector>& updates, int k) {
    check_same_dim(updates, "trimmed_mean");
    const int n = static_cast<int>(updates.size());
    if (k < 0) throw config_error("trimmed_mean: k must be non-negative");
    if (2 * k >= n)
        throw config_error("trimmed_mean: needs 2k < n (n=" + std::to_string(n) +
                           ", k=" + std::to_string(k) + ")");
    const std::size_t d = updates[0].size();
    ParamVector out(d, 0.0);
    const double inv = 1.0 / static_cast<double>(n - 2 * k);
#pragma omp parallel
    {
        std::vector<double> vals(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(d); ++j) {
            for (int i = 0; i < n; ++i) vals[i] = updates[i][j];
            // Two selections leave the middle n-2k values in [k, n-k)
            // without a full sort.
            if (k > 0) {
                std::nth_element(vals.begin(), vals.begin() + k, vals.end());
                std::nth_element(vals.begin() + k, vals.begin() + (n - k), vals.end());
            }
            double s = 0.0;
            for (int i = k; i < n - k; ++i) s += vals[i];
            out[j] = s * inv;
        }
    }
    return out;
}

ParamVector median(const std::vector<ParamVector>& updates) {
    check_same_dim(updates, "median");
    const int n = static_cast<int>(updates.size());
    const std::size_t d = updates[0].size();
    ParamVector out(d, 0.0);
#pragma omp parallel
    {
        std::vector<double> vals(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(d); ++j) {
            for (int i = 0; i < n; ++i) vals[i] = updates[i][j];
            const int mid = n / 2;
            std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
            if (n % 2 == 1) {
                out[j] = vals[mid];
            } else {
                const double upper = vals[mid];
                const double lower = *std::max_element(vals.begin(), vals.begin() + mid);
                out[j] = 0.5 * (lower + upper);
            }
        }
    }
    return out;
}

std::optional<double> cosine_similarity(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size())
        throw config_error("cosine_similarity: length mismatch (" + std::to_string(a.size()) +
                           " vs " + std::to_string(b.size()) + ")");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double trust_score(double cosine) { return cosine > 0.0 ? cosine : 0.0; }

ParamVector normalize_update(const ParamVector& update, const ParamVector& server_update) {
    const double nu = norm(update);
    if (nu == 0.0) throw config_error("normalize_update: zero-norm update");
    return scaled(update, norm(server_update) / nu);
}

FltrustResult fltrust_aggregate(const std::vector<ParamVector>& updates,
                                const ParamVector& server_update, FltrustVariant variant) {
    check_same_dim(updates, "fltrust_aggregate");
    if (updates[0].size() != server_update.size())
        throw config_error("fltrust_aggregate: server update has " +
                           std::to_string(server_update.size()) + " entries, expected " +
                           std::to_string(updates[0].size()));

    const std::size_t n = updates.size();
    const std::size_t d = server_update.size();
    FltrustResult res;
    res.trust.assign(n, 0.0);

    if (variant == FltrustVariant::ServerOnly) {
        res.update = server_update;
        res.trust_sum = 1.0;
        return res;
    }

    const double server_norm = norm(server_update);
    if (server_norm == 0.0) {
        res.update.assign(d, 0.0);
        res.zero_server_update = true;
        return res;
    }

    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = norm(updates[i]);
        if (norms[i] == 0.0) continue;  // carries no information; trust stays 0
        const double c =
            std::clamp(dot(updates[i], server_update) / (norms[i] * server_norm), -1.0, 1.0);
        res.trust[i] = (variant == FltrustVariant::NoReLU) ? c : trust_score(c);
    }

    double denom = 0.0;
    for (double t : res.trust) denom += t;
    if (variant == FltrustVariant::WithServer) denom += 1.0;  // server enters with trust 1
    res.trust_sum = denom;

    if (variant == FltrustVariant::NoReLU) {
        if (std::fabs(denom) < 1e-12) {
            res.update.assign(d, 0.0);
            return res;
        }
    } else if (denom <= 0.0) {
        // Total clip: let the server update drive the round.
        res.update = server_update;
        res.server_fallback = true;
        return res;
    }

    ParamVector acc(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (res.trust[i] == 0.0) continue;
        double w = res.trust[i];
        const bool rescale = variant == FltrustVariant::Standard ||
                             variant == FltrustVariant::NoReLU ||
                             variant == FltrustVariant::WithServer ||
                             (variant == FltrustVariant::ParNorm && norms[i] > server_norm);
        if (rescale) w *= server_norm / norms[i];
        axpy(w, updates[i], acc);
    }
    if (variant == FltrustVariant::WithServer) axpy(1.0, server_update, acc);
    res.update = scaled(acc, 1.0 / denom);
    return res;
}

ParamVector update_global(const ParamVector& w, const ParamVector& g, double alpha) {
    if (w.size() != g.size())
        throw config_error("update_global: length mismatch (" + std::to_string(w.size()) +
                           " vs " + std::to_string(g.size()) + ")");
    ParamVector out = w;
    axpy(alpha, g, out);
    return out;
}

}  // namespace fltrust
