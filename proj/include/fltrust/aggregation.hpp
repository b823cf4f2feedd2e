#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "fltrust/common.hpp"

namespace fltrust {

enum class Rule { FedAvg, Krum, TrimMean, Median, FLTrust };

// Ablations of the trust-weighted rule: NoReLU keeps raw cosine weights,
// NoNorm skips magnitude rescaling, ParNorm rescales only updates larger
// than the server update, WithServer adds the server update with trust 1,
// ServerOnly ignores the clients entirely.
enum class FltrustVariant { Standard, NoReLU, NoNorm, ParNorm, WithServer, ServerOnly };

struct AggregatorConfig {
    Rule rule = Rule::FedAvg;
    FltrustVariant variant = FltrustVariant::Standard;
    int krum_f = 0;  // tolerated malicious count (Krum)
    int trim_k = 0;  // values trimmed per side and coordinate (TrimMean)

    void validate(int n_clients) const;
};

// Weighted mean, weights proportional to the dataset sizes.
ParamVector fedavg(const std::vector<ParamVector>& updates, const std::vector<std::size_t>& sizes);

// Score of update i: sum of its n-f-2 smallest squared distances to the
// other updates.
std::vector<double> krum_scores(const std::vector<ParamVector>& updates, int f);

struct KrumSelection {
    std::size_t index;
    ParamVector update;
};

// Update with the minimal score; ties go to the lowest index.
KrumSelection krum(const std::vector<ParamVector>& updates, int f);

// Per coordinate: drop the k smallest and k largest values, average the rest.
ParamVector trimmed_mean(const std::vector<ParamVector>& updates, int k);

// Coordinate-wise median; even counts take the midpoint of the middle pair.
ParamVector median(const std::vector<ParamVector>& updates);

// Clamped to [-1,1]; nullopt when either norm is zero.
std::optional<double> cosine_similarity(const ParamVector& a, const ParamVector& b);

// ReLU clip.
double trust_score(double cosine);

// Rescales update to the magnitude of server_update.
ParamVector normalize_update(const ParamVector& update, const ParamVector& server_update);

struct FltrustResult {
    ParamVector update;
    std::vector<double> trust;        // per client; raw cosines under NoReLU
    double trust_sum = 0.0;           // denominator actually used
    bool server_fallback = false;     // total trust was zero, returned server update
    bool zero_server_update = false;  // server update had zero norm
};

// Trust-weighted average of the client updates against the server update.
// Zero-norm client updates are excluded. Zero total trust falls back to the
// server update (NoReLU instead yields the zero update when |sum c_j| is
// below 1e-12). A zero-norm server update yields the zero update.
FltrustResult fltrust_aggregate(const std::vector<ParamVector>& updates,
                                const ParamVector& server_update,
                                FltrustVariant variant = FltrustVariant::Standard);

// w + alpha * g
ParamVector update_global(const ParamVector& w, const ParamVector& g, double alpha);

}  // namespace fltrust
