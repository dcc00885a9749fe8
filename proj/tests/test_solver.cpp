#include <catch2/catch_amalgamated.hpp>

#include "climb/perturb.hpp"
#include "climb/solver.hpp"

using namespace climb;

namespace {

struct RandomProblem {
    std::vector<Mask> masks;
    std::vector<double> weights;
    std::vector<double> labels;
    double fx = 0.0;
    double fb = 0.0;
    int d_prime = 0;
};

// Well-posed by construction: the first d' rows are the singleton masks, so
// the design always has full column rank and both solver routes are
// comparable (rank-deficient inputs are exercised by the jitter tests).
RandomProblem random_problem(Rng& rng, int d_prime, int n) {
    RandomProblem p;
    p.d_prime = d_prime;
    p.fx = rng.uniform01();
    p.fb = rng.uniform01() * 0.2;
    for (int i = 0; i < n; ++i) {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(d_prime), 0);
        if (i < d_prime) {
            bits[static_cast<std::size_t>(i)] = 1;
        } else {
            const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d_prime - 1)));
            for (int placed = 0; placed < k;) {
                const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(d_prime)));
                if (!bits[static_cast<std::size_t>(j)]) {
                    bits[static_cast<std::size_t>(j)] = 1;
                    ++placed;
                }
            }
        }
        p.masks.emplace_back(std::move(bits));
        p.weights.push_back(0.1 + 2.0 * rng.uniform01());
        p.labels.push_back(rng.normal());
    }
    return p;
}

double constrained_objective(const RandomProblem& p, const std::vector<double>& phi) {
    double obj = 0.0;
    for (std::size_t i = 0; i < p.masks.size(); ++i) {
        double pred = p.fb;
        for (int j = 0; j < p.d_prime; ++j)
            if (p.masks[i].bit(j)) pred += phi[static_cast<std::size_t>(j)];
        const double r = p.labels[i] - pred;
        obj += p.weights[i] * r * r;
    }
    return obj;
}

}  // namespace

TEST_CASE("wls interpolates an exactly linear system") {
    Rng rng(2);
    const int d = 5, n = 200;
    Eigen::VectorXd truth(d);
    for (int j = 0; j < d; ++j) truth(j) = rng.normal();
    const double intercept = 0.7;

    WlsProblem p;
    p.design.resize(n, d);
    p.targets.resize(n);
    p.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) p.design(i, j) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
        p.targets(i) = intercept + p.design.row(i).dot(truth);
        p.weights(i) = 0.5 + rng.uniform01();
    }
    p.ridge = 0.0;

    const WlsSolution sol = solve_wls(p);
    for (int j = 0; j < d; ++j)
        CHECK(sol.coefficients(j) == Catch::Approx(truth(j)).margin(1e-9));
    CHECK(sol.intercept == Catch::Approx(intercept).margin(1e-9));
    const Eigen::VectorXd residual =
        p.targets - p.design * sol.coefficients -
        Eigen::VectorXd::Constant(n, sol.intercept);
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("wls solution is invariant to weight scaling without ridge") {
    Rng rng(3);
    const int d = 6, n = 120;
    WlsProblem p;
    p.design.resize(n, d);
    p.targets.resize(n);
    p.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) p.design(i, j) = rng.uniform01() < 0.4 ? 1.0 : 0.0;
        p.targets(i) = rng.normal();
        p.weights(i) = 0.2 + rng.uniform01();
    }
    p.ridge = 0.0;
    const WlsSolution a = solve_wls(p);
    p.weights *= 10.0;
    const WlsSolution b = solve_wls(p);
    CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(std::abs(a.intercept - b.intercept) <= 1e-10);
}

TEST_CASE("wls gradient vanishes at the solution") {
    Rng rng(4);
    const int d = 8, n = 300;
    WlsProblem p;
    p.design.resize(n, d);
    p.targets.resize(n);
    p.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) p.design(i, j) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
        p.targets(i) = rng.normal();
        p.weights(i) = 0.1 + rng.uniform01();
    }
    p.ridge = 1e-6;
    const WlsSolution sol = solve_wls(p);

    // gradient of sum w(y - b0 - Z phi)^2 + ridge |phi|^2
    const Eigen::VectorXd r =
        p.targets - p.design * sol.coefficients - Eigen::VectorXd::Constant(n, sol.intercept);
    const Eigen::VectorXd grad_phi =
        -2.0 * p.design.transpose() * (p.weights.asDiagonal() * r) +
        2.0 * p.ridge * sol.coefficients;
    const double grad_b0 = -2.0 * (p.weights.array() * r.array()).sum();
    const double scale = 1.0 + p.targets.norm();
    CHECK(grad_phi.cwiseAbs().maxCoeff() <= 1e-6 * scale);
    CHECK(std::abs(grad_b0) <= 1e-6 * scale);
}

TEST_CASE("wls rejects bad inputs") {
    WlsProblem p;
    p.design.resize(0, 2);
    p.targets.resize(0);
    p.weights.resize(0);
    CHECK_THROWS_AS(solve_wls(p), DimensionError);

    p.design.resize(3, 2);
    p.design.setOnes();
    p.targets.resize(3);
    p.targets.setOnes();
    p.weights.resize(3);
    p.weights << 1.0, -1.0, 1.0;
    CHECK_THROWS_AS(solve_wls(p), ConfigError);
}

TEST_CASE("rank-deficient lime designs are rescued by the jitter schedule") {
    // d'=2 with only singleton masks: [z1 z2 1] has rank 2 < 3.
    std::vector<Mask> masks{Mask(std::vector<std::uint8_t>{1, 0}),
                            Mask(std::vector<std::uint8_t>{0, 1})};
    WlsProblem p;
    p.design.resize(2, 2);
    p.design << 1, 0, 0, 1;
    p.targets.resize(2);
    p.targets << 0.4, 0.6;
    p.weights.resize(2);
    p.weights << 1.0, 1.0;
    p.ridge = 0.0;  // forces the jitter path
    const WlsSolution sol = solve_wls(p);
    CHECK(sol.coefficients.allFinite());
}

TEST_CASE("constrained solve: d'=1 is forced by the constraint") {
    const auto phi = solve_completeness_constrained({}, {}, {}, 0.9, 0.2, 1);
    REQUIRE(phi.size() == 1);
    CHECK(phi[0] == Catch::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("constrained solve recovers an additive game exactly") {
    Rng rng(5);
    const int d = 9;
    std::vector<double> v(static_cast<std::size_t>(d));
    double vsum = 0.0;
    for (double& x : v) {
        x = rng.normal();
        vsum += x;
    }
    const double fb = 0.3;
    const double fx = fb + vsum;  // consistent with the constraint

    RandomProblem p = random_problem(rng, d, 80);
    p.fx = fx;
    p.fb = fb;
    for (std::size_t i = 0; i < p.masks.size(); ++i) {
        double y = fb;
        for (int j = 0; j < d; ++j)
            if (p.masks[i].bit(j)) y += v[static_cast<std::size_t>(j)];
        p.labels[i] = y;
    }

    const auto phi = solve_completeness_constrained(p.masks, p.weights, p.labels, fx, fb, d);
    for (int j = 0; j < d; ++j)
        CHECK(phi[static_cast<std::size_t>(j)] ==
              Catch::Approx(v[static_cast<std::size_t>(j)]).margin(1e-9));
}

TEST_CASE("elimination agrees with the KKT oracle") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + static_cast<int>(rng.below(29));  // 2..30
        const int n = d + static_cast<int>(rng.below(static_cast<std::uint64_t>(500 - d)));
        const RandomProblem p = random_problem(rng, d, n);
        const auto a =
            solve_completeness_constrained(p.masks, p.weights, p.labels, p.fx, p.fb, d);
        const auto b = solve_kkt_oracle(p.masks, p.weights, p.labels, p.fx, p.fb, d);
        REQUIRE(a.size() == b.size());
        for (std::size_t j = 0; j < a.size(); ++j)
            CHECK(a[j] == Catch::Approx(b[j]).margin(1e-8));

        // constraint residual
        double sum = 0.0;
        for (double x : a) sum += x;
        CHECK(std::abs(sum - (p.fx - p.fb)) <= 1e-10);
    }
}

TEST_CASE("kkt oracle basics") {
    // d'=1 with no masks: the bordered system still pins phi = fx - fb.
    const auto phi = solve_kkt_oracle({}, {}, {}, 1.4, 0.4, 1);
    REQUIRE(phi.size() == 1);
    CHECK(phi[0] == Catch::Approx(1.0).margin(1e-12));

    Rng rng(7);
    const RandomProblem p = random_problem(rng, 12, 150);
    const auto sol = solve_kkt_oracle(p.masks, p.weights, p.labels, p.fx, p.fb, 12);
    double sum = 0.0;
    for (double x : sol) sum += x;
    CHECK(std::abs(sum - (p.fx - p.fb)) <= 1e-12);
}

TEST_CASE("which feature is eliminated does not matter") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 3 + static_cast<int>(rng.below(10));
        const RandomProblem p = random_problem(rng, d, 40 + d);
        const auto base =
            solve_completeness_constrained(p.masks, p.weights, p.labels, p.fx, p.fb, d);

        // rotate feature order so a different feature sits last
        const int shift = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - 1)));
        std::vector<Mask> rotated;
        for (const Mask& m : p.masks) {
            std::vector<std::uint8_t> bits(static_cast<std::size_t>(d));
            for (int j = 0; j < d; ++j)
                bits[static_cast<std::size_t>((j + shift) % d)] =
                    m.bit(j) ? std::uint8_t{1} : std::uint8_t{0};
            rotated.emplace_back(std::move(bits));
        }
        const auto rot =
            solve_completeness_constrained(rotated, p.weights, p.labels, p.fx, p.fb, d);
        for (int j = 0; j < d; ++j)
            CHECK(rot[static_cast<std::size_t>((j + shift) % d)] ==
                  Catch::Approx(base[static_cast<std::size_t>(j)]).margin(1e-8));
    }
}

TEST_CASE("returned solution is a local optimum along feasible directions") {
    Rng rng(9);
    const int d = 10;
    const RandomProblem p = random_problem(rng, d, 200);
    const auto phi = solve_completeness_constrained(p.masks, p.weights, p.labels, p.fx, p.fb, d);
    const double at_solution = constrained_objective(p, phi);

    for (int trial = 0; trial < 50; ++trial) {
        // random direction with zero sum keeps the constraint satisfied
        std::vector<double> dir(static_cast<std::size_t>(d));
        double mean = 0.0;
        for (double& x : dir) {
            x = rng.normal();
            mean += x;
        }
        mean /= d;
        double norm = 0.0;
        for (double& x : dir) {
            x -= mean;
            norm += x * x;
        }
        norm = std::sqrt(norm);
        std::vector<double> moved = phi;
        for (int j = 0; j < d; ++j)
            moved[static_cast<std::size_t>(j)] += 1e-3 * dir[static_cast<std::size_t>(j)] / norm;
        CHECK(constrained_objective(p, moved) >= at_solution - 1e-12);
    }
}

TEST_CASE("constrained solve input validation") {
    CHECK_THROWS_AS(solve_completeness_constrained({}, {}, {}, 1.0, 0.0, 2), DimensionError);
    std::vector<Mask> masks{Mask(std::vector<std::uint8_t>{1, 0})};
    std::vector<double> w{1.0}, y{0.5};
    CHECK_THROWS_AS(
        solve_completeness_constrained(masks, w, y, std::numeric_limits<double>::quiet_NaN(),
                                       0.0, 2),
        NumericalError);
    std::vector<double> bad_w{-1.0};
    CHECK_THROWS_AS(solve_completeness_constrained(masks, bad_w, y, 1.0, 0.0, 2), ConfigError);
}
