#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fltrust/common.hpp"

namespace fltrust::verify {

// Randomized invariant suites cross-checking the production kernels against
// the serial references. The *_fn hooks exist so tests can inject a broken
// implementation and watch the suite catch it; they default to the
// production code.

struct SuiteResult {
    std::string suite;
    int trials = 0;
    int failures = 0;
    double seconds = 0.0;
    std::string detail;  // first failure, empty when clean

    bool passed() const { return failures == 0; }
};

using TrimmedMeanFn = std::function<ParamVector(const std::vector<ParamVector>&, int)>;
using MedianFn = std::function<ParamVector(const std::vector<ParamVector>&)>;
using KrumSelectFn = std::function<std::size_t(const std::vector<ParamVector>&, int)>;

// Analytic gradients vs central finite differences, both model kinds.
SuiteResult gradient_suite(int trials, std::uint64_t seed);

// Selection equality against the brute-force scorer on small instances.
SuiteResult krum_oracle_suite(int trials, std::uint64_t seed, KrumSelectFn impl = {});

// Coordinate agreement with the full-sort references within 1e-12.
SuiteResult trim_oracle_suite(int trials, std::uint64_t seed, TrimmedMeanFn impl = {});
SuiteResult median_oracle_suite(int trials, std::uint64_t seed, MedianFn impl = {});

// Norm cap, positive-scale invariance, clipped-update exclusion, and
// agreement with the direct-formula reference.
SuiteResult fltrust_invariant_suite(int trials, std::uint64_t seed);

// Bounded distance between the aggregate and the full-data gradient.
SuiteResult deviation_bound_suite(int trials, std::uint64_t seed);

std::vector<SuiteResult> run_all(std::uint64_t seed);

}  // namespace fltrust::verify
