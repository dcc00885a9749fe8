// Weighted least-squares machinery: unconstrained weighted ridge regression
// (LIME) and completeness-constrained regression via analytic constraint
// elimination (SHAP, CLIMB), plus a direct bordered-KKT solver kept as an
// independent oracle for the elimination path.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "climb/core.hpp"

namespace climb {

struct WlsProblem {
    Eigen::MatrixXd design;   // n x p, rows are (possibly transformed) masks
    Eigen::VectorXd targets;  // n
    Eigen::VectorXd weights;  // n, strictly positive
    double ridge = 0.0;       // l2 penalty on coefficients (never the intercept)
    bool fit_intercept = true;
};

struct WlsSolution {
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
};

namespace detail {

// SPD solve of (G + jitter*P) b = rhs where P zeroes the rows/cols flagged
// unpenalized. Retries the jitter schedule max(ridge,1e-10)*10^j, j=1..6.
inline Eigen::VectorXd solve_spd_with_jitter(const Eigen::MatrixXd& gram,
                                             const Eigen::VectorXd& rhs, double ridge,
                                             int unpenalized_tail) {
    const auto p = gram.rows();
    Eigen::MatrixXd g = gram;
    for (Eigen::Index i = 0; i < p - unpenalized_tail; ++i) g(i, i) += ridge;
    for (int attempt = 0;; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(g);
        if (llt.info() == Eigen::Success) {
            Eigen::VectorXd sol = llt.solve(rhs);
            if (sol.allFinite()) return sol;
        }
        if (attempt >= 6)
            throw NumericalError(
                "weighted normal equations stayed singular after jitter schedule (p=" +
                std::to_string(p) + ", ridge=" + std::to_string(ridge) +
                ", diag range [" + std::to_string(gram.diagonal().minCoeff()) + ", " +
                std::to_string(gram.diagonal().maxCoeff()) + "])");
        const double jitter = std::max(ridge, 1e-10) * std::pow(10.0, attempt + 1);
        g = gram;
        for (Eigen::Index i = 0; i < p - unpenalized_tail; ++i) g(i, i) += jitter;
    }
}

}  // namespace detail

// Minimizes sum_i w_i (y_i - phi0 - Phi^T z_i)^2 + ridge*|Phi|^2 via the
// weighted normal equations (the intercept column is appended unpenalized).
inline WlsSolution solve_wls(const WlsProblem& problem) {
    const Eigen::Index n = problem.design.rows();
    const Eigen::Index p = problem.design.cols();
    if (n < 1) throw DimensionError("solve_wls: need at least one row");
    if (problem.targets.size() != n || problem.weights.size() != n)
        throw DimensionError("solve_wls: targets/weights must match design rows");
    if ((problem.weights.array() <= 0.0).any())
        throw ConfigError("solve_wls: weights must be strictly positive");
    if (problem.ridge < 0.0) throw ConfigError("solve_wls: ridge must be >= 0");

    const Eigen::Index cols = p + (problem.fit_intercept ? 1 : 0);
    Eigen::MatrixXd a(n, cols);
    a.leftCols(p) = problem.design;
    if (problem.fit_intercept) a.col(p).setOnes();

    const Eigen::ArrayXd w = problem.weights.array();
    Eigen::MatrixXd aw = a.array().colwise() * w;
    Eigen::MatrixXd gram = a.transpose() * aw;
    Eigen::VectorXd rhs = aw.transpose() * problem.targets;

    const Eigen::VectorXd sol = detail::solve_spd_with_jitter(
        gram, rhs, problem.ridge, problem.fit_intercept ? 1 : 0);

    WlsSolution out;
    out.coefficients = sol.head(p);
    out.intercept = problem.fit_intercept ? sol(p) : 0.0;
    return out;
}

// Completeness-constrained weighted least squares (intercept pinned to f(b),
// sum of coefficients pinned to f(x)-f(b)). The linear constraint is
// eliminated by substituting out the last coefficient: each mask row becomes
// the reduced regressor r(z') = z'_{1:d'-1} - z'_{d'} * 1 with offset
// c(z') = f(b) + z'_{d'} (f(x)-f(b)), leaving an unconstrained (d'-1)-dim
// solve with no intercept; the last coefficient is back-substituted.
inline std::vector<double> solve_completeness_constrained(std::span<const Mask> masks,
                                                          std::span<const double> weights,
                                                          std::span<const double> labels,
                                                          double fx, double fb, int d_prime) {
    if (d_prime < 1) throw DimensionError("solve_completeness_constrained: d' must be >= 1");
    if (!std::isfinite(fx) || !std::isfinite(fb))
        throw NumericalError("solve_completeness_constrained: non-finite anchors");
    const double gap = fx - fb;
    if (d_prime == 1) return {gap};

    const Eigen::Index n = static_cast<Eigen::Index>(masks.size());
    if (n < 1) throw DimensionError("solve_completeness_constrained: need at least one mask");
    if (weights.size() != masks.size() || labels.size() != masks.size())
        throw DimensionError("solve_completeness_constrained: array sizes must align");

    const int p = d_prime - 1;
    Eigen::MatrixXd reduced(n, p);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Mask& m = masks[static_cast<std::size_t>(i)];
        if (m.size() != d_prime)
            throw DimensionError("solve_completeness_constrained: mask length mismatch");
        const double last = m.bit(d_prime - 1) ? 1.0 : 0.0;
        for (int j = 0; j < p; ++j) reduced(i, j) = (m.bit(j) ? 1.0 : 0.0) - last;
        target(i) = labels[static_cast<std::size_t>(i)] - (fb + last * gap);
        if (!(weights[static_cast<std::size_t>(i)] > 0.0))
            throw ConfigError("solve_completeness_constrained: weights must be positive");
    }

    Eigen::Map<const Eigen::VectorXd> w(weights.data(), n);
    Eigen::MatrixXd rw = reduced.array().colwise() * w.array();
    Eigen::MatrixXd gram = reduced.transpose() * rw;
    Eigen::VectorXd rhs = rw.transpose() * target;
    const Eigen::VectorXd head = detail::solve_spd_with_jitter(gram, rhs, 0.0, 0);

    std::vector<double> phi(static_cast<std::size_t>(d_prime));
    double head_sum = 0.0;
    for (int j = 0; j < p; ++j) {
        phi[static_cast<std::size_t>(j)] = head(j);
        head_sum += head(j);
    }
    phi[static_cast<std::size_t>(p)] = gap - head_sum;
    return phi;
}

// Direct solve of the same constrained problem through the bordered system
// [[2A, 1], [1^T, 0]] [Phi; nu] = [2b; fx-fb] with A = Z^T W Z and
// b = Z^T W (y - fb). Different route from the elimination solver on
// purpose; test-only oracle.
inline std::vector<double> solve_kkt_oracle(std::span<const Mask> masks,
                                            std::span<const double> weights,
                                            std::span<const double> labels, double fx, double fb,
                                            int d_prime) {
    if (d_prime < 1) throw DimensionError("solve_kkt_oracle: d' must be >= 1");
    const Eigen::Index n = static_cast<Eigen::Index>(masks.size());
    if (weights.size() != masks.size() || labels.size() != masks.size())
        throw DimensionError("solve_kkt_oracle: array sizes must align");

    Eigen::MatrixXd z(n, d_prime);
    Eigen::VectorXd y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Mask& m = masks[static_cast<std::size_t>(i)];
        if (m.size() != d_prime) throw DimensionError("solve_kkt_oracle: mask length mismatch");
        for (int j = 0; j < d_prime; ++j) z(i, j) = m.bit(j) ? 1.0 : 0.0;
        y(i) = labels[static_cast<std::size_t>(i)] - fb;
        w(i) = weights[static_cast<std::size_t>(i)];
    }

    Eigen::MatrixXd zw = z.array().colwise() * w.array();
    Eigen::MatrixXd a = z.transpose() * zw;           // may be n=0: a is zero
    Eigen::VectorXd b = zw.transpose() * y;

    Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(d_prime + 1, d_prime + 1);
    bordered.topLeftCorner(d_prime, d_prime) = 2.0 * a;
    bordered.topRightCorner(d_prime, 1).setOnes();
    bordered.bottomLeftCorner(1, d_prime).setOnes();
    Eigen::VectorXd rhs(d_prime + 1);
    rhs.head(d_prime) = 2.0 * b;
    rhs(d_prime) = fx - fb;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(bordered);
    const Eigen::VectorXd sol = lu.solve(rhs);
    // residual check instead of a rank threshold: rejects genuinely singular
    // systems while accepting merely ill-conditioned ones
    if (!sol.allFinite() ||
        (bordered * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
        throw NumericalError("solve_kkt_oracle: singular bordered system (d'=" +
                             std::to_string(d_prime) + ", n=" + std::to_string(n) + ")");

    std::vector<double> phi(static_cast<std::size_t>(d_prime));
    for (int j = 0; j < d_prime; ++j) phi[static_cast<std::size_t>(j)] = sol(j);
    return phi;
}

}  // namespace climb
