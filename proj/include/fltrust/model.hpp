#pragma once

#include <cstddef>
#include <vector>

#include "fltrust/common.hpp"
#include "fltrust/data.hpp"
#include "fltrust/rng.hpp"

namespace fltrust {

enum class ModelKind { LogisticRegression, Mlp };

// Softmax classifiers over a flat parameter vector.
//
// Parameter layout (row-major):
//   LogisticRegression: W [num_classes x input_dim], bias [num_classes]
//   Mlp:                W1 [hidden_dim x input_dim], b1 [hidden_dim],
//                       W2 [num_classes x hidden_dim], b2 [num_classes]
// The MLP hidden activation is ReLU.
struct ModelSpec {
    ModelKind kind = ModelKind::LogisticRegression;
    int input_dim = 0;
    int num_classes = 0;
    int hidden_dim = 0;  // Mlp only

    std::size_t param_count() const;
    void validate() const;
};

// Class probabilities for one feature vector (stable softmax).
std::vector<double> predict(const ModelSpec& spec, const ParamVector& params,
                            const std::vector<double>& features);

// Argmax of predict; ties go to the lowest class index.
int predicted_label(const ModelSpec& spec, const ParamVector& params,
                    const std::vector<double>& features);

// Mean cross-entropy over the index batch (all examples when idx is empty is
// not allowed; pass explicit indices or use the whole-dataset overload).
double loss(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
            const std::vector<std::size_t>& idx);
double loss(const ModelSpec& spec, const ParamVector& params, const Dataset& data);

// Analytic gradient of loss with respect to params.
ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                     const std::vector<std::size_t>& idx);
ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Dataset& data);

// Runs local_iters SGD steps of step size beta starting from w, sampling
// batches without replacement and reshuffling once an epoch is exhausted;
// returns the parameter difference (final - w). Batch sizes larger than the
// dataset are clamped to the dataset size.
ParamVector model_update(const ModelSpec& spec, const ParamVector& w, const Dataset& data,
                         int batch_size, double beta, int local_iters, Rng& rng);

// Gaussian initialization, stddev scale.
ParamVector init_params(const ModelSpec& spec, double scale, std::uint64_t seed);

}  // namespace fltrust
