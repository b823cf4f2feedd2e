// Timing comparison between the production kernels (OpenMP parallel where it
// pays) and the serial references used as test oracles. Every row also
// asserts the two outputs agree, so the bench doubles as a large-input check.
#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "fltrust/aggregation.hpp"
#include "fltrust/common.hpp"
#include "fltrust/reference.hpp"
#include "fltrust/rng.hpp"

using namespace fltrust;

namespace {

std::vector<ParamVector> random_updates(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<ParamVector> u(n, ParamVector(d));
    for (ParamVector& v : u)
        for (double& x : v) x = rng.normal();
    return u;
}

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        const double s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        best = std::min(best, s);
    }
    return best;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

void print_row(const char* name, double prod, double ref, const char* agreement) {
    std::printf("%-14s %10.4fs %10.4fs %8.2fx   %s\n", name, prod, ref,
                ref / std::max(prod, 1e-12), agreement);
}

}  // namespace

int main() {
    int threads = 1;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    std::printf("kernel bench: production vs serial reference (%d thread%s)\n", threads,
                threads == 1 ? "" : "s");
    std::printf("%-14s %11s %11s %9s   %s\n", "kernel", "production", "reference", "speedup",
                "agreement");

    const int reps = 5;
    int failures = 0;
    Rng rng(2024);

    {
        const std::vector<ParamVector> u = random_updates(60, 40000, rng);
        const int k = 12;
        ParamVector prod_out, ref_out;
        const double prod = time_best_of(reps, [&] { prod_out = trimmed_mean(u, k); });
        const double ref = time_best_of(reps, [&] { ref_out = ref::trimmed_mean(u, k); });
        const double diff = max_abs_diff(prod_out, ref_out);
        const bool ok = diff <= 1e-12;
        if (!ok) ++failures;
        char msg[64];
        std::snprintf(msg, sizeof(msg), "max |diff| = %.1e %s", diff, ok ? "ok" : "MISMATCH");
        print_row("trimmed_mean", prod, ref, msg);
    }

    {
        const std::vector<ParamVector> u = random_updates(61, 40000, rng);
        ParamVector prod_out, ref_out;
        const double prod = time_best_of(reps, [&] { prod_out = median(u); });
        const double ref = time_best_of(reps, [&] { ref_out = ref::median(u); });
        const double diff = max_abs_diff(prod_out, ref_out);
        const bool ok = diff <= 1e-12;
        if (!ok) ++failures;
        char msg[64];
        std::snprintf(msg, sizeof(msg), "max |diff| = %.1e %s", diff, ok ? "ok" : "MISMATCH");
        print_row("median", prod, ref, msg);
    }

    {
        const std::vector<ParamVector> u = random_updates(40, 5000, rng);
        const int f = 10;
        std::size_t prod_out = 0, ref_out = 0;
        const double prod = time_best_of(reps, [&] { prod_out = krum(u, f).index; });
        const double ref = time_best_of(reps, [&] { ref_out = ref::krum_select(u, f); });
        const bool ok = prod_out == ref_out;
        if (!ok) ++failures;
        char msg[64];
        std::snprintf(msg, sizeof(msg), "index %zu vs %zu %s", prod_out, ref_out,
                      ok ? "ok" : "MISMATCH");
        print_row("krum", prod, ref, msg);
    }

    {
        std::vector<ParamVector> u = random_updates(60, 40000, rng);
        ParamVector g0(40000);
        for (double& x : g0) x = rng.normal();
        ParamVector prod_out, ref_out;
        const double prod =
            time_best_of(reps, [&] { prod_out = fltrust_aggregate(u, g0).update; });
        const double ref = time_best_of(reps, [&] { ref_out = ref::fltrust_standard(u, g0); });
        const double diff = max_abs_diff(prod_out, ref_out);
        const bool ok = diff <= 1e-12;
        if (!ok) ++failures;
        char msg[64];
        std::snprintf(msg, sizeof(msg), "max |diff| = %.1e %s", diff, ok ? "ok" : "MISMATCH");
        print_row("fltrust", prod, ref, msg);
    }

    if (failures > 0) {
        std::printf("%d kernel(s) disagree with the reference\n", failures);
        return 1;
    }
    return 0;
}
