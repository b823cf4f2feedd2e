#include "fltrust/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fltrust {

std::size_t ModelSpec::param_count() const {
    const std::size_t in = input_dim, m = num_classes, h = hidden_dim;
    if (kind == ModelKind::LogisticRegression) return (in + 1) * m;
    return (in + 1) * h + (h + 1) * m;
}

void ModelSpec::validate() const {
    if (input_dim < 1) throw config_error("ModelSpec: input_dim must be positive");
    if (num_classes < 2) throw config_error("ModelSpec: num_classes must be at least 2");
    if (kind == ModelKind::Mlp && hidden_dim < 1)
        throw config_error("ModelSpec: hidden_dim must be positive for mlp");
}

namespace {

void check_dims(const ModelSpec& spec, const ParamVector& params,
                const std::vector<double>& features) {
    if (params.size() != spec.param_count())
        throw config_error("model: params length " + std::to_string(params.size()) +
                           " does not match spec (" + std::to_string(spec.param_count()) + ")");
    if (static_cast<int>(features.size()) != spec.input_dim)
        throw config_error("model: feature length " + std::to_string(features.size()) +
                           " does not match input_dim " + std::to_string(spec.input_dim));
}

// Layout offsets. LR: W [M x in], b [M]. MLP: W1 [H x in], b1 [H],
// W2 [M x H], b2 [M].
struct Offsets {
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

Offsets offsets_of(const ModelSpec& spec) {
    Offsets o;
    const std::size_t in = spec.input_dim, m = spec.num_classes, h = spec.hidden_dim;
    if (spec.kind == ModelKind::LogisticRegression) {
        o.w1 = 0;
        o.b1 = in * m;  // bias block
    } else {
        o.w1 = 0;
        o.b1 = h * in;
        o.w2 = o.b1 + h;
        o.b2 = o.w2 + m * h;
    }
    return o;
}

// Logits for one example; for MLP also exposes the hidden pre-activations
// and activations needed by the backward pass.
void forward(const ModelSpec& spec, const ParamVector& p, const std::vector<double>& x,
             std::vector<double>& logits, std::vector<double>* hidden_pre,
             std::vector<double>* hidden_act) {
    const Offsets o = offsets_of(spec);
    const int in = spec.input_dim, m = spec.num_classes, h = spec.hidden_dim;
    logits.assign(m, 0.0);
    if (spec.kind == ModelKind::LogisticRegression) {
        for (int c = 0; c < m; ++c) {
            double z = p[o.b1 + c];
            const double* row = p.data() + o.w1 + std::size_t(c) * in;
            for (int d = 0; d < in; ++d) z += row[d] * x[d];
            logits[c] = z;
        }
        return;
    }
    std::vector<double> pre(h), act(h);
    for (int j = 0; j < h; ++j) {
        double z = p[o.b1 + j];
        const double* row = p.data() + o.w1 + std::size_t(j) * in;
        for (int d = 0; d < in; ++d) z += row[d] * x[d];
        pre[j] = z;
        act[j] = z > 0.0 ? z : 0.0;
    }
    for (int c = 0; c < m; ++c) {
        double z = p[o.b2 + c];
        const double* row = p.data() + o.w2 + std::size_t(c) * h;
        for (int j = 0; j < h; ++j) z += row[j] * act[j];
        logits[c] = z;
    }
    if (hidden_pre) *hidden_pre = std::move(pre);
    if (hidden_act) *hidden_act = std::move(act);
}

void softmax_inplace(std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) v /= sum;
}

// Adds the gradient of one example's cross-entropy into out (not averaged).
void accumulate_example_gradient(const ModelSpec& spec, const ParamVector& p, const Example& ex,
                                 ParamVector& out) {
    const Offsets o = offsets_of(spec);
    const int in = spec.input_dim, m = spec.num_classes, h = spec.hidden_dim;
    std::vector<double> logits, pre, act;
    forward(spec, p, ex.features, logits, &pre, &act);
    softmax_inplace(logits);
    logits[ex.label] -= 1.0;  // now the logit-space error delta

    if (spec.kind == ModelKind::LogisticRegression) {
        for (int c = 0; c < m; ++c) {
            const double delta = logits[c];
            double* row = out.data() + o.w1 + std::size_t(c) * in;
            for (int d = 0; d < in; ++d) row[d] += delta * ex.features[d];
            out[o.b1 + c] += delta;
        }
        return;
    }
    std::vector<double> dact(h, 0.0);
    for (int c = 0; c < m; ++c) {
        const double delta = logits[c];
        double* row = out.data() + o.w2 + std::size_t(c) * h;
        const double* w_row = p.data() + o.w2 + std::size_t(c) * h;
        for (int j = 0; j < h; ++j) {
            row[j] += delta * act[j];
            dact[j] += delta * w_row[j];
        }
        out[o.b2 + c] += delta;
    }
    for (int j = 0; j < h; ++j) {
        if (pre[j] <= 0.0) continue;
        const double dz = dact[j];
        double* row = out.data() + o.w1 + std::size_t(j) * in;
        for (int d = 0; d < in; ++d) row[d] += dz * ex.features[d];
        out[o.b1 + j] += dz;
    }
}

std::vector<std::size_t> all_indices(const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

// Examples per reduction chunk. The chunk boundaries depend only on the
// batch size, so the summation order (and thus the bits of the result) is
// the same for every thread count.
constexpr std::size_t kGradChunk = 64;

}  // namespace

std::vector<double> predict(const ModelSpec& spec, const ParamVector& params,
                            const std::vector<double>& features) {
    spec.validate();
    check_dims(spec, params, features);
    std::vector<double> logits;
    forward(spec, params, features, logits, nullptr, nullptr);
    softmax_inplace(logits);
    return logits;
}

int predicted_label(const ModelSpec& spec, const ParamVector& params,
                    const std::vector<double>& features) {
    spec.validate();
    check_dims(spec, params, features);
    std::vector<double> logits;
    forward(spec, params, features, logits, nullptr, nullptr);
    int best = 0;
    for (int c = 1; c < spec.num_classes; ++c)
        if (logits[c] > logits[best]) best = c;
    return best;
}

double loss(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
            const std::vector<std::size_t>& idx) {
    spec.validate();
    if (idx.empty()) throw config_error("loss: empty batch");
    if (params.size() != spec.param_count())
        throw config_error("loss: params length does not match spec");
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t i : idx) {
        const Example& ex = data.examples[i];
        forward(spec, params, ex.features, logits, nullptr, nullptr);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double v : logits) sum += std::exp(v - mx);
        total += mx + std::log(sum) - logits[ex.label];
    }
    const double out = total / static_cast<double>(idx.size());
    if (!std::isfinite(out)) throw numeric_error("loss: non-finite value");
    return out;
}

double loss(const ModelSpec& spec, const ParamVector& params, const Dataset& data) {
    return loss(spec, params, data, all_indices(data));
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                     const std::vector<std::size_t>& idx) {
    spec.validate();
    if (idx.empty()) throw config_error("gradient: empty batch");
    if (params.size() != spec.param_count())
        throw config_error("gradient: params length does not match spec");

    const std::size_t d = params.size();
    const std::size_t b = idx.size();
    const std::size_t n_chunks = (b + kGradChunk - 1) / kGradChunk;
    ParamVector out(d, 0.0);

    if (n_chunks == 1) {
        for (std::size_t i : idx) accumulate_example_gradient(spec, params, data.examples[i], out);
    } else {
        std::vector<ParamVector> partial(n_chunks, ParamVector(d, 0.0));
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
            const std::size_t lo = static_cast<std::size_t>(c) * kGradChunk;
            const std::size_t hi = std::min(lo + kGradChunk, b);
            for (std::size_t k = lo; k < hi; ++k)
                accumulate_example_gradient(spec, params, data.examples[idx[k]], partial[c]);
        }
        for (std::size_t c = 0; c < n_chunks; ++c) axpy(1.0, partial[c], out);
    }
    const double inv = 1.0 / static_cast<double>(b);
    for (double& v : out) v *= inv;
    if (!all_finite(out)) throw numeric_error("gradient: non-finite value");
    return out;
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Dataset& data) {
    return gradient(spec, params, data, all_indices(data));
}

ParamVector model_update(const ModelSpec& spec, const ParamVector& w, const Dataset& data,
                         int batch_size, double beta, int local_iters, Rng& rng) {
    spec.validate();
    if (data.empty()) throw config_error("model_update: empty dataset");
    if (batch_size < 1) throw config_error("model_update: batch_size must be at least 1");
    if (local_iters < 1) throw config_error("model_update: local_iters must be at least 1");
    if (beta < 0.0) throw config_error("model_update: beta must be non-negative");

    const std::size_t n = data.size();
    const std::size_t b = std::min(static_cast<std::size_t>(batch_size), n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::size_t pos = n;  // force a shuffle before the first batch

    ParamVector cur = w;
    std::vector<std::size_t> batch(b);
    for (int r = 0; r < local_iters; ++r) {
        if (pos + b > n) {  // fewer than a full batch left: new epoch
            rng.shuffle(perm);
            pos = 0;
        }
        std::copy(perm.begin() + pos, perm.begin() + pos + b, batch.begin());
        pos += b;
        // Order within a batch is immaterial; sorting fixes the summation
        // order so a full batch reproduces gradient() bit for bit.
        std::sort(batch.begin(), batch.end());
        const ParamVector g = gradient(spec, cur, data, batch);
        axpy(-beta, g, cur);
    }
    return difference(cur, w);
}

ParamVector init_params(const ModelSpec& spec, double scale, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    ParamVector p(spec.param_count());
    for (double& v : p) v = scale * rng.normal();
    return p;
}

}  // namespace fltrust
