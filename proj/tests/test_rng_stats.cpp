#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "cogmap/rng.hpp"
#include "cogmap/stats.hpp"
#include "doctest.h"

using cogmap::Rng;
namespace stats = cogmap::stats;

TEST_CASE("rng: same seed replays the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(43);
    bool differ = false;
    for (int i = 0; i < 10; ++i) differ |= c.next_u64() != d.next_u64();
    CHECK(differ);
}

TEST_CASE("rng: uniform stays in [0, 1) and below(n) stays under n") {
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.below(13) < 13);
    }
    for (int i = 0; i < 500; ++i) {
        int v = rng.uniform_int(-3, 5);
        CHECK(v >= -3);
        CHECK(v <= 5);
    }
}

TEST_CASE("rng: normal moments") {
    Rng rng(11);
    std::vector<double> draws(20000);
    for (auto& d : draws) d = rng.normal();
    CHECK(std::abs(stats::mean(draws)) < 0.03);
    CHECK(std::abs(stats::variance(draws) - 1.0) < 0.05);
}

TEST_CASE("rng: child streams do not depend on parent draw count") {
    Rng a(5);
    Rng child_before = a.child(99);
    for (int i = 0; i < 17; ++i) a.uniform();
    Rng child_after = a.child(99);
    for (int i = 0; i < 20; ++i) CHECK(child_before.next_u64() == child_after.next_u64());

    Rng b0 = Rng(5).child(1), b1 = Rng(5).child(2);
    bool differ = false;
    for (int i = 0; i < 10; ++i) differ |= b0.next_u64() != b1.next_u64();
    CHECK(differ);
}

TEST_CASE("rng: permutation and shuffle produce permutations") {
    Rng rng(3);
    auto p = rng.permutation(40);
    std::set<int> seen(p.begin(), p.end());
    CHECK(seen.size() == 40);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 39);

    std::vector<int> v{1, 2, 3, 4, 5, 6};
    auto sorted = v;
    rng.shuffle(v);
    std::sort(v.begin(), v.end());
    CHECK(v == sorted);
}

TEST_CASE("mix64 is a bijective-looking scrambler on simple inputs") {
    CHECK(cogmap::mix64(0) != 0);
    CHECK(cogmap::mix64(1) != cogmap::mix64(2));
    CHECK(cogmap::mix64(1) == cogmap::mix64(1));
}

TEST_CASE("stats: mean, variance, median on hand values") {
    std::vector<double> v{1, 2, 3, 4};
    CHECK(stats::mean(v) == doctest::Approx(2.5));
    CHECK(stats::variance(v) == doctest::Approx(5.0 / 3.0));
    CHECK(stats::median(v) == doctest::Approx(2.5));
    CHECK(stats::median({5, 1, 9}) == doctest::Approx(5.0));
}

TEST_CASE("stats: pearson on exact linear data") {
    CHECK(stats::pearson({1, 2, 4, 8}, {3, 5, 9, 17}) == doctest::Approx(1.0));
    CHECK(stats::pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
}

TEST_CASE("stats: average ranks with ties") {
    auto r = stats::average_ranks({10, 20, 20, 30});
    REQUIRE(r.size() == 4);
    CHECK(r[0] == doctest::Approx(1.0));
    CHECK(r[1] == doctest::Approx(2.5));
    CHECK(r[2] == doctest::Approx(2.5));
    CHECK(r[3] == doctest::Approx(4.0));
}

TEST_CASE("stats: spearman matches the tie-corrected reference") {
    CHECK(stats::spearman({1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(stats::spearman({1, 2, 3}, {10, 100, 1000}) == doctest::Approx(1.0));
    CHECK(stats::spearman({1, 2, 2, 4}, {1, 3, 2, 4}) ==
          doctest::Approx(0.9486832980505139).epsilon(1e-9));
}

TEST_CASE("stats: incomplete beta spot values") {
    CHECK(stats::incomplete_beta(1, 1, 0.37) == doctest::Approx(0.37).epsilon(1e-9));
    CHECK(stats::incomplete_beta(3, 3, 0.5) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(stats::incomplete_beta(2, 5, 0.3) == doctest::Approx(0.579825).epsilon(1e-6));
    CHECK(stats::incomplete_beta(2, 5, 0.0) == doctest::Approx(0.0));
    CHECK(stats::incomplete_beta(2, 5, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("stats: welch t on hand-computed case") {
    auto r = stats::welch_t({1, 2, 3, 4}, {2, 4, 6, 8});
    CHECK(r.t == doctest::Approx(-std::sqrt(3.0)).epsilon(1e-12));
    CHECK(r.dof == doctest::Approx(75.0 / 17.0).epsilon(1e-12));
    CHECK(r.p_two_sided == doctest::Approx(0.15158050484530383).epsilon(1e-6));
    CHECK(r.mean_a == doctest::Approx(2.5));
    CHECK(r.mean_b == doctest::Approx(5.0));
}

TEST_CASE("stats: welch t is symmetric in sign") {
    auto ab = stats::welch_t({0.1, 0.2, 0.4}, {1.1, 1.3, 1.0});
    auto ba = stats::welch_t({1.1, 1.3, 1.0}, {0.1, 0.2, 0.4});
    CHECK(ab.t == doctest::Approx(-ba.t));
    CHECK(ab.p_two_sided == doctest::Approx(ba.p_two_sided));
}

TEST_CASE("stats: line fit recovers exact coefficients") {
    std::vector<double> x{0, 1, 2, 3, 4}, y;
    for (double xi : x) y.push_back(2.0 + 3.0 * xi);
    auto fit = stats::fit_line(x, y);
    CHECK(fit.intercept == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.slope == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
}
