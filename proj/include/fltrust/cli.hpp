#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fltrust/simulation.hpp"

namespace fltrust::cli {

constexpr const char* kToolVersion = "1.0.0";

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;      // invalid configuration or input
constexpr int kExitDivergence = 2;  // training left the finite range
constexpr int kExitInvariant = 3;   // verification suite failure

// JSON config text -> validated config. Accepts either a bare config object
// or a previously written summary/manifest (reproduces that run). Unknown
// keys are rejected by name.
ExperimentConfig parse_config_text(const std::string& text);

// Fully resolved config (every default expanded), parseable by
// parse_config_text.
std::string resolved_config_json(const ExperimentConfig& cfg);

struct RunOptions {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;  // key=value, dotted paths for nested keys
    std::optional<std::uint64_t> seed;
};

// Runs one experiment; writes history.csv and summary.json (final metrics
// plus the manifest) under out_dir.
int cmd_run(const RunOptions& opt);

struct SweepOptions {
    std::string config_path;
    std::string out_dir;
    std::string axis;  // malicious_fraction | root_size | bias_probability | q
    std::vector<double> values;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

// One sub-run per value under out_dir/point_<i>, plus sweep.csv with the
// final metrics per point. A diverged point is recorded with empty metric
// fields and the sweep continues.
int cmd_sweep(const SweepOptions& opt);

// Runs every verification suite; prints one line per suite.
int cmd_verify(std::uint64_t seed);

struct GenSyntheticOptions {
    std::string out;
    int classes = 10;
    int input_dim = 32;
    int per_class = 200;
    double spread = 0.3;
    std::uint64_t seed = 1;
};

int cmd_gen_synthetic(const GenSyntheticOptions& opt);

struct GenIdxConvertOptions {
    std::string images;
    std::string labels;
    std::string out;
};

int cmd_gen_idx_convert(const GenIdxConvertOptions& opt);

}  // namespace fltrust::cli
