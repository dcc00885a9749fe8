#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "climb/core.hpp"

using namespace climb;

namespace {

Catalog small_catalog(int d) {
    std::vector<std::string> labels;
    for (int t = 0; t < d; ++t) labels.push_back("item" + std::to_string(t));
    return Catalog(std::move(labels));
}

Mask mask_of(std::initializer_list<int> bits) {
    std::vector<std::uint8_t> v;
    for (int b : bits) v.push_back(static_cast<std::uint8_t>(b));
    return Mask(v);
}

}  // namespace

TEST_CASE("catalog validation") {
    CHECK_THROWS_AS(Catalog({std::vector<std::string>{"a"}}), ConfigError);
    CHECK_THROWS_AS(Catalog({std::vector<std::string>{"a", "a"}}), ConfigError);
    CHECK(small_catalog(3).item_count() == 3);
}

TEST_CASE("instance validation") {
    CHECK_NOTHROW(Instance("u", {3, 7, 9}, 10));
    CHECK_THROWS_AS(Instance("u", {}, 10), ConfigError);          // d' >= 1
    CHECK_THROWS_AS(Instance("u", {3, 3}, 10), ConfigError);      // duplicates
    CHECK_THROWS_AS(Instance("u", {7, 3}, 10), ConfigError);      // unsorted
    CHECK_THROWS_AS(Instance("u", {3, 10}, 10), ConfigError);     // out of range
    CHECK_THROWS_AS(Instance("u", {-1, 3}, 10), ConfigError);
}

TEST_CASE("to_interpretable is the all-ones mask") {
    const Instance a("u", {3, 7, 9}, 12);
    CHECK(to_interpretable(a).bits() == std::vector<std::uint8_t>{1, 1, 1});
    const Instance b("v", {0}, 4);
    CHECK(to_interpretable(b).bits() == std::vector<std::uint8_t>{1});
}

TEST_CASE("apply_mask maps bits to active positions") {
    const Catalog catalog = small_catalog(5);
    const Instance inst("u", {1, 3}, 5);
    CHECK(apply_mask(inst, mask_of({1, 0}), catalog) ==
          std::vector<std::uint8_t>{0, 1, 0, 0, 0});
    CHECK(apply_mask(inst, mask_of({1, 1}), catalog) ==
          std::vector<std::uint8_t>{0, 1, 0, 1, 0});
    CHECK(apply_mask(inst, mask_of({0, 0}), catalog) ==
          std::vector<std::uint8_t>{0, 0, 0, 0, 0});
    CHECK_THROWS_AS(apply_mask(inst, mask_of({1, 0, 1}), catalog), DimensionError);
}

TEST_CASE("apply_mask round trip on random instances") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 8 + static_cast<int>(rng.below(60));
        std::vector<int> active;
        for (int t = 0; t < d; ++t)
            if (rng.uniform01() < 0.3) active.push_back(t);
        if (active.empty()) active.push_back(static_cast<int>(rng.below(d)));
        const Catalog catalog = small_catalog(d);
        const Instance inst("u", active, d);

        // all-ones mask reconstructs x
        const auto x = apply_mask(inst, to_interpretable(inst), catalog);
        std::vector<std::uint8_t> expected(static_cast<std::size_t>(d), 0);
        for (int t : active) expected[static_cast<std::size_t>(t)] = 1;
        CHECK(x == expected);

        // popcount of the output equals popcount of the mask
        std::vector<std::uint8_t> bits(active.size());
        for (auto& b : bits) b = rng.uniform01() < 0.5 ? 1 : 0;
        const Mask mask(bits);
        const auto z = apply_mask(inst, mask, catalog);
        int ones = 0;
        for (auto v : z) ones += v;
        CHECK(ones == mask.ones_count());
    }
}

TEST_CASE("derive_seed separates streams and indices") {
    CHECK(derive_seed(42, "lime", 0) != derive_seed(42, "lime", 1));
    CHECK(derive_seed(42, "lime", 0) == derive_seed(42, "lime", 0));
    CHECK(derive_seed(42, "lime", 0) != derive_seed(42, "shap", 0));
    CHECK(derive_seed(42, "lime", 0) != derive_seed(43, "lime", 0));

    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        seen.insert(derive_seed(7, "a", i));
        seen.insert(derive_seed(7, "b", i));
    }
    CHECK(seen.size() == 2000);
}

TEST_CASE("rng basics") {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng r(11);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.below(7) < 7);
    }
    CHECK_THROWS_AS(r.below(0), ConfigError);
}

TEST_CASE("explanation completeness is enforced at construction") {
    Explanation e;
    e.method = Method::Climb;
    e.user_id = "u";
    e.target_item = 0;
    e.item_indices = {1, 2};
    e.fx = 0.8;
    e.fbaseline = 0.2;
    e.intercept = 0.2;
    e.coefficients = {0.5, 0.1};  // sums to fx - fb
    CHECK_NOTHROW(validate_explanation(e));

    e.coefficients = {0.5, 0.2};  // completeness violated
    CHECK_THROWS_AS(validate_explanation(e), NumericalError);

    e.coefficients = {0.5, 0.1};
    e.intercept = 0.25;  // intercept must be f(b)
    CHECK_THROWS_AS(validate_explanation(e), NumericalError);

    // LIME is unconstrained
    e.method = Method::Lime;
    e.intercept = 0.4;
    e.coefficients = {0.9, -0.3};
    CHECK_NOTHROW(validate_explanation(e));

    e.coefficients = {0.9, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(validate_explanation(e), NumericalError);
}
