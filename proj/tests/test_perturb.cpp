#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "climb/perturb.hpp"
#include "test_support.hpp"

using namespace climb;

namespace {

Instance instance_of(int d_prime) {
    std::vector<int> items(static_cast<std::size_t>(d_prime));
    for (int j = 0; j < d_prime; ++j) items[static_cast<std::size_t>(j)] = j;
    return Instance("u", std::move(items), d_prime + 4);
}

std::string key_of(const Mask& m) {
    std::string s;
    for (auto b : m.bits()) s += static_cast<char>('0' + b);
    return s;
}

}  // namespace

TEST_CASE("lime sampler draws only singleton masks at d'=2") {
    const auto masks = lime_sample(instance_of(2), 200, 1);
    REQUIRE(masks.size() == 200);
    for (const Mask& m : masks) CHECK(m.ones_count() == 1);
}

TEST_CASE("lime sampler subset sizes are uniform") {
    const int d = 5, n = 5000;
    const auto masks = lime_sample(instance_of(d), n, 7);
    std::map<int, int> hist;
    for (const Mask& m : masks) {
        CHECK(m.ones_count() >= 1);
        CHECK(m.ones_count() <= d - 1);
        hist[m.ones_count()]++;
    }
    // each size within 3 sigma of n/4 under the exact multinomial
    const double expected = n / 4.0;
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    for (int k = 1; k <= d - 1; ++k)
        CHECK(std::abs(hist[k] - expected) <= 3.0 * sigma);

    // chi-square over the 4 sizes, alpha = 0.001, 3 dof -> critical 16.266
    double chi2 = 0.0;
    for (int k = 1; k <= d - 1; ++k)
        chi2 += (hist[k] - expected) * (hist[k] - expected) / expected;
    CHECK(chi2 < 16.266);
}

TEST_CASE("lime sampler is deterministic and never emits extremes") {
    const auto a = lime_sample(instance_of(9), 500, 10);
    const auto b = lime_sample(instance_of(9), 500, 10);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    for (const Mask& m : a) {
        CHECK(m.ones_count() > 0);
        CHECK(m.ones_count() < 9);
    }
    CHECK_THROWS_AS(lime_sample(instance_of(1), 10, 0), DegenerateInstanceError);
}

TEST_CASE("lime kernel values") {
    CHECK(lime_kernel(Mask::ones(6)) == Catch::Approx(1.0));
    // d'=4, |z'|=1, sigma=0.25: D = 1 - sqrt(1/4) = 0.5, weight = exp(-4)
    std::vector<std::uint8_t> bits{1, 0, 0, 0};
    CHECK(lime_kernel(Mask(bits), 0.25) == Catch::Approx(std::exp(-4.0)).epsilon(1e-12));
    CHECK_THROWS_AS(lime_kernel(Mask::zeros(4)), ConfigError);
}

TEST_CASE("lime kernel is increasing in subset size") {
    const int d = 12;
    double prev = 0.0;
    for (int k = 1; k <= d; ++k) {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(d), 0);
        for (int j = 0; j < k; ++j) bits[static_cast<std::size_t>(j)] = 1;
        const double w = lime_kernel(Mask(bits));
        CHECK(w > prev);
        prev = w;
    }
}

TEST_CASE("shapley kernel exact values and symmetry") {
    CHECK(shap_kernel(2, 1) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(shap_kernel(4, 2) == Catch::Approx(0.125).epsilon(1e-12));
    for (int d = 2; d <= 40; ++d)
        for (int k = 1; k < d; ++k)
            CHECK(shap_kernel(d, k) == Catch::Approx(shap_kernel(d, d - k)).epsilon(1e-9));
    CHECK_THROWS_AS(shap_kernel(5, 0), ConfigError);
    CHECK_THROWS_AS(shap_kernel(5, 5), ConfigError);
}

TEST_CASE("shap enumeration returns the exact power set when it fits") {
    const auto masks = shap_enumerate(instance_of(3), 100, 0);
    REQUIRE(masks.size() == 6);  // 2^3 - 2
    std::set<std::string> keys;
    for (const Mask& m : masks) {
        CHECK(m.ones_count() >= 1);
        CHECK(m.ones_count() <= 2);
        keys.insert(key_of(m));
    }
    CHECK(keys.size() == 6);  // no duplicates
}

TEST_CASE("shap enumeration fills extreme sizes first under a budget") {
    const auto masks = shap_enumerate(instance_of(20), 1000, 3);
    REQUIRE(masks.size() == 1000);
    std::set<std::string> size1, size19;
    for (const Mask& m : masks) {
        if (m.ones_count() == 1) size1.insert(key_of(m));
        if (m.ones_count() == 19) size19.insert(key_of(m));
        CHECK(m.ones_count() >= 1);
        CHECK(m.ones_count() <= 19);
    }
    CHECK(size1.size() == 20);
    CHECK(size19.size() == 20);
}

TEST_CASE("shap enumeration is deterministic") {
    const auto a = shap_enumerate(instance_of(30), 600, 12);
    const auto b = shap_enumerate(instance_of(30), 600, 12);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK_THROWS_AS(shap_enumerate(instance_of(1), 10, 0), DegenerateInstanceError);
}

TEST_CASE("full enumeration recovers the analytic total kernel mass") {
    for (int d : {2, 3, 5, 8, 12}) {
        const auto masks = shap_enumerate(instance_of(d), 1 << 13, 0);
        double mass = 0.0;
        for (const Mask& m : masks) mass += shap_kernel(d, m.ones_count());
        CHECK(mass == Catch::Approx(shap_total_kernel_mass(d)).epsilon(1e-9));
    }
}

TEST_CASE("labels follow the masks") {
    // Additive model: f(z) = 0.2 + sum of w at the active positions.
    const int d = 7;
    std::vector<double> w(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) w[static_cast<std::size_t>(i)] = 0.1 * (i + 1);
    climb_test::AdditiveModel model(d, 0.2, w);
    const Instance inst("u", {0, 2, 4}, d);

    const std::vector<Mask> masks{Mask::ones(3), Mask::zeros(3),
                                  Mask(std::vector<std::uint8_t>{1, 0, 1})};
    const auto labels = label_masks(model, inst, 0, masks);
    CHECK(labels[0] == Catch::Approx(0.2 + 0.1 + 0.3 + 0.5).epsilon(1e-12));  // f(x)
    CHECK(labels[1] == Catch::Approx(0.2).epsilon(1e-12));                    // f(b)
    CHECK(labels[2] == Catch::Approx(0.2 + 0.1 + 0.5).epsilon(1e-12));

    // permutation of the mask list permutes the labels
    const std::vector<Mask> rev{masks[2], masks[0], masks[1]};
    const auto labels_rev = label_masks(model, inst, 0, rev);
    CHECK(labels_rev[0] == labels[2]);
    CHECK(labels_rev[1] == labels[0]);
    CHECK(labels_rev[2] == labels[1]);
}

TEST_CASE("perturbation set validation") {
    PerturbationSet set;
    set.method = Method::Lime;
    set.masks = {Mask(std::vector<std::uint8_t>{1, 0})};
    set.weights = {0.5};
    set.labels = {1.0};
    CHECK_NOTHROW(validate_perturbation_set(set));

    set.masks = {Mask::ones(2)};
    CHECK_THROWS_AS(validate_perturbation_set(set), ConfigError);
    set.masks = {Mask::zeros(2)};
    CHECK_THROWS_AS(validate_perturbation_set(set), ConfigError);
    set.masks = {Mask(std::vector<std::uint8_t>{1, 0})};
    set.weights = {0.0};
    CHECK_THROWS_AS(validate_perturbation_set(set), NumericalError);
}
