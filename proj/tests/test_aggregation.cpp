#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fltrust/aggregation.hpp"
#include "fltrust/common.hpp"
#include "fltrust/reference.hpp"
#include "fltrust/rng.hpp"

using namespace fltrust;

namespace {

std::vector<ParamVector> random_updates(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<ParamVector> out(n, ParamVector(d));
    for (auto& u : out)
        for (double& v : u) v = rng.normal();
    return out;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("fedavg weights by dataset size") {
    const std::vector<ParamVector> updates{{1.0, 0.0}, {0.0, 1.0}};
    const std::vector<std::size_t> sizes{3, 1};
    const ParamVector g = fedavg(updates, sizes);
    CHECK(g[0] == doctest::Approx(0.75));
    CHECK(g[1] == doctest::Approx(0.25));

    CHECK_THROWS_AS(fedavg(updates, {3}), config_error);
    CHECK_THROWS_AS(fedavg(updates, {3, 0}), config_error);
    CHECK_THROWS_AS(fedavg({}, {}), config_error);
    CHECK_THROWS_AS(fedavg({{1.0}, {1.0, 2.0}}, {1, 1}), config_error);
}

TEST_CASE("krum scores a one-dimensional example by hand") {
    const std::vector<ParamVector> updates{{0.0}, {0.1}, {0.2}, {10.0}};
    const auto scores = krum_scores(updates, 0);  // keep n-f-2 = 2 nearest
    REQUIRE(scores.size() == 4);
    CHECK(scores[0] == doctest::Approx(0.05));
    CHECK(scores[1] == doctest::Approx(0.02));
    CHECK(scores[2] == doctest::Approx(0.05));
    CHECK(scores[3] == doctest::Approx(194.05));

    const KrumSelection sel = krum(updates, 0);
    CHECK(sel.index == 1);
    CHECK(sel.update == updates[1]);
}

TEST_CASE("krum breaks score ties toward the lowest index") {
    const std::vector<ParamVector> updates{{5.0}, {5.0}, {5.0}, {1.0}};
    CHECK(krum(updates, 1).index == 0);
}

TEST_CASE("krum enforces n >= f + 3") {
    const std::vector<ParamVector> three{{0.0}, {1.0}, {2.0}};
    CHECK_NOTHROW(krum(three, 0));
    CHECK_THROWS_AS(krum(three, 1), config_error);
    CHECK_THROWS_AS(krum(three, -1), config_error);
}

TEST_CASE("krum matches the brute-force oracle on random instances") {
    Rng rng(61);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 3 + rng.uniform_below(6);
        const std::size_t d = 1 + rng.uniform_below(5);
        const int f = static_cast<int>(rng.uniform_below(n - 2));
        const auto updates = random_updates(rng, n, d);
        CHECK(krum(updates, f).index == ref::krum_select(updates, f));
    }
}

TEST_CASE("trimmed mean drops k from each side") {
    const std::vector<ParamVector> updates{{5.0}, {1.0}, {3.0}, {2.0}, {4.0}};
    CHECK(trimmed_mean(updates, 1)[0] == doctest::Approx(3.0));
    CHECK(trimmed_mean(updates, 2)[0] == doctest::Approx(3.0));
    CHECK(trimmed_mean(updates, 0)[0] == doctest::Approx(3.0));

    const std::vector<ParamVector> skewed{{100.0}, {1.0}, {2.0}, {3.0}, {-50.0}};
    CHECK(trimmed_mean(skewed, 1)[0] == doctest::Approx(2.0));
    CHECK(trimmed_mean(skewed, 0)[0] == doctest::Approx(11.2));

    CHECK_THROWS_AS(trimmed_mean(updates, 3), config_error);   // 2k >= n
    CHECK_THROWS_AS(trimmed_mean(updates, -1), config_error);
    CHECK_THROWS_AS(trimmed_mean({}, 0), config_error);
}

TEST_CASE("median takes midpoints on even counts") {
    CHECK(median({{1.0}, {3.0}, {2.0}})[0] == doctest::Approx(2.0));
    CHECK(median({{4.0}, {1.0}, {3.0}, {2.0}})[0] == doctest::Approx(2.5));
    CHECK(median({{7.0}})[0] == doctest::Approx(7.0));

    // Coordinates are independent.
    const ParamVector m = median({{1.0, 10.0}, {2.0, 30.0}, {3.0, 20.0}});
    CHECK(m[0] == doctest::Approx(2.0));
    CHECK(m[1] == doctest::Approx(20.0));
}

TEST_CASE("trim and median agree with the sort-based forms on random instances") {
    Rng rng(67);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 1 + rng.uniform_below(11);
        const std::size_t d = 1 + rng.uniform_below(6);
        const int k = static_cast<int>(rng.uniform_below((n - 1) / 2 + 1));
        const auto updates = random_updates(rng, n, d);
        CHECK(max_abs_diff(trimmed_mean(updates, k), ref::trimmed_mean(updates, k)) <= 1e-12);
        CHECK(max_abs_diff(median(updates), ref::median(updates)) <= 1e-12);
    }
}

TEST_CASE("aggregation rules are permutation invariant") {
    Rng rng(71);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 3 + rng.uniform_below(6);
        const std::size_t d = 1 + rng.uniform_below(5);
        const int k = (n >= 3) ? 1 : 0;
        auto updates = random_updates(rng, n, d);
        ParamVector g0(d);
        for (double& v : g0) v = rng.normal();

        const ParamVector trim_before = trimmed_mean(updates, k);
        const ParamVector med_before = median(updates);
        const ParamVector avg_before = fedavg(updates, std::vector<std::size_t>(n, 4));
        const ParamVector flt_before = fltrust_aggregate(updates, g0).update;
        std::vector<double> scores_before = krum_scores(updates, 0);
        const double min_before = *std::min_element(scores_before.begin(), scores_before.end());
        const ParamVector krum_before = krum(updates, 0).update;
        std::sort(scores_before.begin(), scores_before.end());
        // At n=3 each score is the distance to the single nearest neighbor,
        // so the closest pair ties exactly; the winner is only pinned down
        // when the argmin is unique.
        const bool unique_argmin = scores_before.size() > 1 &&
                                   scores_before[1] - scores_before[0] > 1e-9;

        Rng shuffler(1000 + t);
        shuffler.shuffle(updates);
        CHECK(max_abs_diff(trimmed_mean(updates, k), trim_before) <= 1e-12);
        CHECK(max_abs_diff(median(updates), med_before) <= 1e-12);
        CHECK(max_abs_diff(fedavg(updates, std::vector<std::size_t>(n, 4)), avg_before) <= 1e-12);
        CHECK(max_abs_diff(fltrust_aggregate(updates, g0).update, flt_before) <= 1e-12);
        const std::vector<double> scores_after = krum_scores(updates, 0);
        CHECK(std::fabs(*std::min_element(scores_after.begin(), scores_after.end()) -
                        min_before) <= 1e-12);
        if (unique_argmin) CHECK(max_abs_diff(krum(updates, 0).update, krum_before) <= 1e-12);
    }
}

TEST_CASE("trim and median shift with a common translation") {
    Rng rng(73);
    const auto updates = random_updates(rng, 7, 4);
    ParamVector shift(4);
    for (double& v : shift) v = rng.normal();
    auto shifted = updates;
    for (auto& u : shifted) u = sum(u, shift);

    const ParamVector t0 = trimmed_mean(updates, 2);
    const ParamVector t1 = trimmed_mean(shifted, 2);
    const ParamVector m0 = median(updates);
    const ParamVector m1 = median(shifted);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(t1[j] - t0[j] == doctest::Approx(shift[j]).epsilon(1e-12));
        CHECK(m1[j] - m0[j] == doctest::Approx(shift[j]).epsilon(1e-12));
    }
}

TEST_CASE("cosine similarity clamps and reports degenerate inputs") {
    CHECK(*cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
    CHECK(*cosine_similarity({2.0, 0.0}, {5.0, 0.0}) == doctest::Approx(1.0));
    CHECK(*cosine_similarity({2.0, 0.0}, {-5.0, 0.0}) == doctest::Approx(-1.0));
    CHECK_FALSE(cosine_similarity({0.0, 0.0}, {1.0, 1.0}).has_value());
    CHECK_FALSE(cosine_similarity({1.0, 1.0}, {0.0, 0.0}).has_value());

    // Clamped into [-1, 1] even when rounding pushes the quotient past 1.
    const ParamVector a{1e-154, 1e-154, 1e-154};
    const auto c = cosine_similarity(a, a);
    REQUIRE(c.has_value());
    CHECK(*c <= 1.0);
    CHECK(*c >= -1.0);
}

TEST_CASE("trust_score is the positive part") {
    CHECK(trust_score(0.7) == 0.7);
    CHECK(trust_score(0.0) == 0.0);
    CHECK(trust_score(-0.3) == 0.0);
}

TEST_CASE("normalize_update rescales to the server magnitude") {
    const ParamVector scaled_up = normalize_update({3.0, 4.0}, {0.5, 0.0});
    CHECK(norm(scaled_up) == doctest::Approx(0.5));
    CHECK(scaled_up[0] == doctest::Approx(0.3));
    CHECK(scaled_up[1] == doctest::Approx(0.4));
    CHECK_THROWS_AS(normalize_update({0.0, 0.0}, {1.0, 0.0}), config_error);
}

TEST_CASE("the trust-weighted aggregate of a hand example") {
    const ParamVector g0{2.0, 0.0};
    const std::vector<ParamVector> updates{{1.0, 1.0}, {0.0, -3.0}};
    const FltrustResult r = fltrust_aggregate(updates, g0);
    const double root_half = std::sqrt(0.5);
    CHECK(r.trust[0] == doctest::Approx(root_half));
    CHECK(r.trust[1] == 0.0);  // orthogonal: cosine 0, clipped weight 0
    CHECK(r.trust_sum == doctest::Approx(root_half));
    CHECK(r.update[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(r.update[1] == doctest::Approx(std::sqrt(2.0)));
    CHECK_FALSE(r.server_fallback);
    CHECK_FALSE(r.zero_server_update);
}

TEST_CASE("the aggregate never exceeds the server magnitude") {
    Rng rng(79);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.uniform_below(8);
        const std::size_t d = 1 + rng.uniform_below(10);
        const auto updates = random_updates(rng, n, d);
        ParamVector g0(d);
        for (double& v : g0) v = rng.normal();
        const FltrustResult r = fltrust_aggregate(updates, g0);
        CHECK(norm(r.update) <= norm(g0) + 1e-9);
        CHECK(r.trust_sum >= 0.0);
    }
}

TEST_CASE("opposed clients trigger the server fallback") {
    const ParamVector g0{1.0, 0.0};
    const std::vector<ParamVector> updates{{-1.0, 0.0}, {-2.0, 1.0}};
    const FltrustResult r = fltrust_aggregate(updates, g0);
    CHECK(r.server_fallback);
    CHECK(r.update == g0);
    CHECK(r.trust_sum == 0.0);
}

TEST_CASE("zero-norm clients are ignored entirely") {
    const ParamVector g0{1.0, 0.0};
    const std::vector<ParamVector> with_zero{{1.0, 0.5}, {0.0, 0.0}};
    const std::vector<ParamVector> without{{1.0, 0.5}};
    const FltrustResult a = fltrust_aggregate(with_zero, g0);
    const FltrustResult b = fltrust_aggregate(without, g0);
    CHECK(max_abs_diff(a.update, b.update) == 0.0);
    CHECK(a.trust[1] == 0.0);
}

TEST_CASE("a zero server update forces the zero aggregate") {
    const ParamVector g0{0.0, 0.0};
    const std::vector<ParamVector> updates{{1.0, 2.0}, {3.0, 4.0}};
    const FltrustResult r = fltrust_aggregate(updates, g0);
    CHECK(r.zero_server_update);
    CHECK(r.update == ParamVector{0.0, 0.0});
}

TEST_CASE("the standard path matches the direct-formula evaluation") {
    Rng rng(83);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.uniform_below(6);
        const std::size_t d = 1 + rng.uniform_below(8);
        const auto updates = random_updates(rng, n, d);
        ParamVector g0(d);
        for (double& v : g0) v = rng.normal();
        CHECK(max_abs_diff(fltrust_aggregate(updates, g0).update,
                           ref::fltrust_standard(updates, g0)) <= 1e-12);
    }
}

TEST_CASE("no_relu keeps negative cosines and can cancel to zero") {
    const ParamVector g0{1.0, 0.0};
    // Cosines +1 and -1 cancel exactly.
    const std::vector<ParamVector> cancel{{2.0, 0.0}, {-3.0, 0.0}};
    const FltrustResult r = fltrust_aggregate(cancel, g0, FltrustVariant::NoReLU);
    CHECK(r.update == ParamVector{0.0, 0.0});

    // A dominant negative cosine keeps the hostile direction: the negative
    // weight cancels against the negative denominator.
    const std::vector<ParamVector> hostile{{-1.0, 0.0}};
    const FltrustResult h = fltrust_aggregate(hostile, g0, FltrustVariant::NoReLU);
    CHECK(h.trust[0] == doctest::Approx(-1.0));
    CHECK(h.update[0] == doctest::Approx(-1.0));  // [(-1)(-1,0)] / (-1)
}

TEST_CASE("no_norm averages raw magnitudes") {
    const ParamVector g0{1.0, 0.0};
    const std::vector<ParamVector> updates{{10.0, 0.0}};
    const FltrustResult r = fltrust_aggregate(updates, g0, FltrustVariant::NoNorm);
    CHECK(r.update[0] == doctest::Approx(10.0));  // trust 1, no rescale

    const FltrustResult std_r = fltrust_aggregate(updates, g0, FltrustVariant::Standard);
    CHECK(std_r.update[0] == doctest::Approx(1.0));
}

TEST_CASE("par_norm only shrinks oversized updates") {
    const ParamVector g0{2.0, 0.0};
    const std::vector<ParamVector> small{{1.0, 0.0}};
    const std::vector<ParamVector> large{{10.0, 0.0}};
    CHECK(fltrust_aggregate(small, g0, FltrustVariant::ParNorm).update[0] ==
          doctest::Approx(1.0));  // kept
    CHECK(fltrust_aggregate(large, g0, FltrustVariant::ParNorm).update[0] ==
          doctest::Approx(2.0));  // capped to the server magnitude
}

TEST_CASE("with_server folds the server update in at trust one") {
    const ParamVector g0{2.0, 0.0};
    const std::vector<ParamVector> updates{{1.0, 0.0}};  // trust 1, normalized to (2,0)
    const FltrustResult r = fltrust_aggregate(updates, g0, FltrustVariant::WithServer);
    CHECK(r.trust_sum == doctest::Approx(2.0));
    CHECK(r.update[0] == doctest::Approx(2.0));  // (2 + 2) / 2

    // With hostile clients the server term keeps the aggregate aligned.
    const std::vector<ParamVector> hostile{{-1.0, 0.0}};
    const FltrustResult h = fltrust_aggregate(hostile, g0, FltrustVariant::WithServer);
    CHECK(h.update[0] == doctest::Approx(2.0));  // only the server term survives
}

TEST_CASE("server_only ignores the clients") {
    const ParamVector g0{0.5, -0.5};
    const std::vector<ParamVector> updates{{100.0, 100.0}, {-3.0, 9.0}};
    const FltrustResult r = fltrust_aggregate(updates, g0, FltrustVariant::ServerOnly);
    CHECK(r.update == g0);
    CHECK(r.trust_sum == 1.0);
}

TEST_CASE("positive rescaling of any client leaves the standard aggregate unchanged") {
    Rng rng(89);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + rng.uniform_below(6);
        const auto updates = random_updates(rng, n, 5);
        ParamVector g0(5);
        for (double& v : g0) v = rng.normal();
        auto rescaled = updates;
        const std::size_t i = rng.uniform_below(n);
        rescaled[i] = scaled(updates[i], std::exp(rng.uniform(-3.0, 3.0)));
        CHECK(max_abs_diff(fltrust_aggregate(updates, g0).update,
                           fltrust_aggregate(rescaled, g0).update) <= 1e-12);
    }
}

TEST_CASE("aggregator config validation names the offending key") {
    AggregatorConfig cfg;
    cfg.rule = Rule::Krum;
    cfg.krum_f = 5;
    try {
        cfg.validate(7);  // needs n >= f + 3
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("'f'") != std::string::npos);
    }
    cfg.krum_f = 4;
    CHECK_NOTHROW(cfg.validate(7));

    cfg.rule = Rule::TrimMean;
    cfg.trim_k = 4;
    try {
        cfg.validate(8);  // needs 2k < n
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("'k'") != std::string::npos);
    }
    cfg.trim_k = 3;
    CHECK_NOTHROW(cfg.validate(8));
}

TEST_CASE("update_global applies the stepped aggregate") {
    const ParamVector w{1.0, 2.0};
    const ParamVector g{0.5, -1.0};
    const ParamVector next = update_global(w, g, 0.2);
    CHECK(next[0] == doctest::Approx(1.1));
    CHECK(next[1] == doctest::Approx(1.8));
    CHECK_THROWS_AS(update_global(w, {1.0}, 0.2), config_error);
}
