#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fltrust/common.hpp"
#include "fltrust/rng.hpp"

namespace fltrust {

struct Example {
    std::vector<double> features;
    int label = 0;
};

// Labeled dataset. Invariants: every feature vector has length input_dim,
// every label lies in [0, num_classes).
struct Dataset {
    int input_dim = 0;
    int num_classes = 0;
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
    void validate() const;
};

// Assignment of training examples to n client shards. Each example goes to
// its own-label group with probability q and to any other group with
// probability (1-q)/(M-1), then to a uniformly random client of that group.
// q = 1/M makes the assignment independent of the label (IID shards).
struct PartitionConfig {
    int n = 0;
    double q = 0.0;
    std::uint64_t seed = 0;
};

enum class RootCase { CaseI, CaseII };

// Server-side root dataset sampling. CaseI draws uniformly from the whole
// dataset. CaseII draws round(bias_probability * size) examples from
// biased_class and the rest uniformly from the other classes; at
// bias_probability = 1/M it reduces to CaseI in distribution.
struct RootConfig {
    int size = 100;
    RootCase kind = RootCase::CaseI;
    double bias_probability = 0.1;
    int biased_class = 1;
    std::uint64_t seed = 0;
};

// Backdoor trigger: features at the listed indices are replaced by the
// paired values; poisoned copies additionally get target_label.
struct TriggerSpec {
    std::vector<int> indices;
    std::vector<double> values;
    int target_label = 0;

    bool empty() const { return indices.empty(); }
    void validate(int input_dim, int num_classes) const;

    // Indices 0, k, 2k, ... below input_dim, all replaced by value.
    static TriggerSpec every_kth(int input_dim, int k, double value, int target_label);
};

// Gaussian blobs: class c is centered at separation * e_{c mod input_dim}
// with isotropic noise of the given spread; exactly per_class examples per
// label, ordered by class.
Dataset generate_synthetic(int num_classes, int input_dim, int per_class, double spread,
                           std::uint64_t seed);

// Separation constant used by generate_synthetic.
constexpr double kSyntheticSeparation = 4.0;

// IDX image/label pair (big-endian, magics 0x00000803 / 0x00000801).
// Pixels are scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV with header f0,...,f{k-1},label. num_classes is max label + 1.
Dataset load_csv(const std::string& path);
void save_csv(const std::string& path, const Dataset& dataset);

// Shortest decimal form that parses back to the same double; '.' decimal
// point regardless of locale. Shared by every CSV writer.
std::string format_double(double value);

std::vector<Dataset> partition(const Dataset& dataset, const PartitionConfig& cfg);

struct RootSplit {
    Dataset root;
    Dataset remainder;
};
RootSplit sample_root(const Dataset& dataset, const RootConfig& cfg);

// l -> M - l - 1. An involution.
int flip_label(int label, int num_classes);

Example embed_trigger(const Example& example, const TriggerSpec& trigger, bool set_target_label);

// Trigger-embedded copies of the test examples whose true labels differ from
// the target label; true labels are kept for bookkeeping.
Dataset make_target_test_set(const Dataset& test, const TriggerSpec& trigger);

std::vector<std::size_t> label_histogram(const Dataset& dataset);

}  // namespace fltrust
