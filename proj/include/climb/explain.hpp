// The three explanation pipelines. LIME: uniform subset sampler, exponential
// proximity kernel, weighted ridge with a free intercept. SHAP: Shapley
// kernel over a budgeted power set, completeness-constrained solve. CLIMB:
// LIME's sampler and kernel verbatim, SHAP's constrained solve - so measured
// CLIMB-vs-LIME differences isolate the constraint. Also the exhaustive
// Shapley oracle used to certify the SHAP pipeline.
#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "climb/core.hpp"
#include "climb/model.hpp"
#include "climb/perturb.hpp"
#include "climb/solver.hpp"

namespace climb {

struct ExplainOptions {
    int n_samples = 5000;   // sample count for LIME/CLIMB, mask budget for SHAP
    double sigma = 0.25;    // proximity kernel width (LIME, CLIMB)
    double ridge = 1e-6;    // l2 penalty (LIME only; constrained solves use 0)
    // Optional nonzero baseline; must be 0 on the instance's active items so
    // that the all-ones mask still reproduces x. Empty means the zero vector.
    std::vector<std::uint8_t> baseline;
};

struct PhaseTimings {
    double sample_ms = 0.0;
    double label_ms = 0.0;
    double solve_ms = 0.0;
    double total_ms() const { return sample_ms + label_ms + solve_ms; }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Dense vector for a mask over the given baseline (zero or user-provided).
inline void embed_mask(const Instance& instance, const Mask& mask,
                       std::span<const std::uint8_t> baseline, std::vector<std::uint8_t>& x,
                       int d) {
    if (baseline.empty())
        x.assign(static_cast<std::size_t>(d), 0);
    else
        x.assign(baseline.begin(), baseline.end());
    const auto& items = instance.active_items();
    for (int j = 0; j < mask.size(); ++j)
        if (mask.bit(j)) x[static_cast<std::size_t>(items[static_cast<std::size_t>(j)])] = 1;
}

inline std::vector<double> label_masks_with_baseline(const ScoringModel& model,
                                                     const Instance& instance, int target_item,
                                                     std::span<const Mask> masks,
                                                     std::span<const std::uint8_t> baseline) {
    if (baseline.empty()) return label_masks(model, instance, target_item, masks);
    std::vector<double> labels(masks.size());
    std::vector<std::uint8_t> x;
    for (std::size_t m = 0; m < masks.size(); ++m) {
        embed_mask(instance, masks[m], baseline, x, model.item_count());
        labels[m] = model.score_one(x, target_item);
    }
    return labels;
}

inline void check_baseline(const ExplainOptions& options, const Instance& instance, int d) {
    if (options.baseline.empty()) return;
    if (static_cast<int>(options.baseline.size()) != d)
        throw DimensionError("baseline length must equal the catalog size");
    for (int t : instance.active_items())
        if (options.baseline[static_cast<std::size_t>(t)] != 0)
            throw ConfigError("baseline must be 0 on the instance's active items");
}

}  // namespace detail

// Core pipeline shared by the public entry points. timing, when non-null,
// receives per-phase wall-clock so the benchmark harness can attribute cost.
inline Explanation explain(const ScoringModel& model, Method method, const Instance& instance,
                           int target_item, const ExplainOptions& options = {},
                           std::uint64_t seed = 0, PhaseTimings* timing = nullptr) {
    const int d = model.item_count();
    const int d_prime = instance.feature_count();
    if (target_item < 0 || target_item >= d) throw DimensionError("explain: bad target item");
    detail::check_baseline(options, instance, d);

    std::vector<std::uint8_t> buf;
    detail::embed_mask(instance, to_interpretable(instance), options.baseline, buf, d);
    const double fx = model.score_one(buf, target_item);
    detail::embed_mask(instance, Mask::zeros(d_prime), options.baseline, buf, d);
    const double fb = model.score_one(buf, target_item);

    Explanation out;
    out.method = method;
    out.user_id = instance.user_id();
    out.target_item = target_item;
    out.item_indices = instance.active_items();
    out.fx = fx;
    out.fbaseline = fb;

    if (d_prime == 1) {
        // No finite-weight informative mask exists; the constraint fully
        // determines the single coefficient for every method.
        out.coefficients = {fx - fb};
        out.intercept = fb;
        out.degenerate = true;
        validate_explanation(out);
        return out;
    }

    auto start = detail::Clock::now();
    PerturbationSet set;
    set.method = method;
    if (method == Method::Shap) {
        set.masks = shap_enumerate(instance, options.n_samples, seed);
        set.weights.reserve(set.masks.size());
        for (const Mask& m : set.masks) set.weights.push_back(shap_kernel(d_prime, m.ones_count()));
    } else {
        set.masks = lime_sample(instance, options.n_samples, seed);
        set.weights.reserve(set.masks.size());
        for (const Mask& m : set.masks) set.weights.push_back(lime_kernel(m, options.sigma));
    }
    if (timing) timing->sample_ms = detail::ms_since(start);

    start = detail::Clock::now();
    set.labels = detail::label_masks_with_baseline(model, instance, target_item, set.masks,
                                                   options.baseline);
    validate_perturbation_set(set);
    if (timing) timing->label_ms = detail::ms_since(start);
    const std::vector<Mask>& masks = set.masks;
    const std::vector<double>& weights = set.weights;
    const std::vector<double>& labels = set.labels;

    start = detail::Clock::now();
    if (method == Method::Lime) {
        WlsProblem problem;
        problem.design.resize(static_cast<Eigen::Index>(masks.size()), d_prime);
        for (std::size_t i = 0; i < masks.size(); ++i)
            for (int j = 0; j < d_prime; ++j)
                problem.design(static_cast<Eigen::Index>(i), j) = masks[i].bit(j) ? 1.0 : 0.0;
        problem.targets = Eigen::Map<const Eigen::VectorXd>(labels.data(),
                                                            static_cast<Eigen::Index>(labels.size()));
        problem.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                            static_cast<Eigen::Index>(weights.size()));
        problem.ridge = options.ridge;
        problem.fit_intercept = true;
        const WlsSolution sol = solve_wls(problem);
        out.coefficients.assign(sol.coefficients.data(), sol.coefficients.data() + d_prime);
        out.intercept = sol.intercept;
    } else {
        out.coefficients = solve_completeness_constrained(masks, weights, labels, fx, fb, d_prime);
        out.intercept = fb;
    }
    if (timing) timing->solve_ms = detail::ms_since(start);

    validate_explanation(out);
    return out;
}

inline Explanation explain_lime(const ScoringModel& model, const Instance& instance,
                                int target_item, const ExplainOptions& options = {},
                                std::uint64_t seed = 0) {
    return explain(model, Method::Lime, instance, target_item, options, seed);
}

inline Explanation explain_shap(const ScoringModel& model, const Instance& instance,
                                int target_item, const ExplainOptions& options = {},
                                std::uint64_t seed = 0) {
    return explain(model, Method::Shap, instance, target_item, options, seed);
}

inline Explanation explain_climb(const ScoringModel& model, const Instance& instance,
                                 int target_item, const ExplainOptions& options = {},
                                 std::uint64_t seed = 0) {
    return explain(model, Method::Climb, instance, target_item, options, seed);
}

// Exhaustive Shapley values with memoized labels:
// phi_i = sum_{S not containing i} |S|!(d'-|S|-1)!/d'! (f(S+i) - f(S)).
// 2^d' model calls; refuses d' > 20.
inline std::vector<double> exact_shapley(const ScoringModel& model, const Instance& instance,
                                         int target_item) {
    const int d_prime = instance.feature_count();
    if (d_prime > 20)
        throw ConfigError("exact_shapley: d'=" + std::to_string(d_prime) +
                          " needs 2^d' model calls; refusing above 20");
    const int d = model.item_count();
    if (target_item < 0 || target_item >= d)
        throw DimensionError("exact_shapley: bad target item");

    const std::uint32_t n_subsets = 1u << d_prime;
    std::vector<double> value(n_subsets);
    std::vector<std::uint8_t> x(static_cast<std::size_t>(d), 0);
    const auto& items = instance.active_items();
    for (std::uint32_t s = 0; s < n_subsets; ++s) {
        std::fill(x.begin(), x.end(), 0);
        for (int j = 0; j < d_prime; ++j)
            if (s & (1u << j)) x[static_cast<std::size_t>(items[static_cast<std::size_t>(j)])] = 1;
        value[s] = model.score_one(x, target_item);
    }

    // weight(|S|) = 1 / (d' * C(d'-1, |S|))
    std::vector<double> weight(static_cast<std::size_t>(d_prime));
    for (int s = 0; s < d_prime; ++s)
        weight[static_cast<std::size_t>(s)] =
            1.0 / (static_cast<double>(d_prime) *
                   static_cast<double>(detail::binomial_capped(d_prime - 1, s)));

    std::vector<double> phi(static_cast<std::size_t>(d_prime), 0.0);
    for (int i = 0; i < d_prime; ++i) {
        const std::uint32_t bit = 1u << i;
        for (std::uint32_t s = 0; s < n_subsets; ++s) {
            if (s & bit) continue;
            const int size = std::popcount(s);
            phi[static_cast<std::size_t>(i)] +=
                weight[static_cast<std::size_t>(size)] * (value[s | bit] - value[s]);
        }
    }
    return phi;
}

// {method, user_id, target_item, fx, fbaseline, intercept, items: [...]}
// with items sorted by descending coefficient (ties by ascending index).
inline nlohmann::json explanation_to_json(const Explanation& e, const Catalog& catalog) {
    std::vector<std::size_t> order(e.coefficients.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (e.coefficients[a] != e.coefficients[b]) return e.coefficients[a] > e.coefficients[b];
        return e.item_indices[a] < e.item_indices[b];
    });
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i : order) {
        items.push_back({{"index", e.item_indices[i]},
                         {"label", catalog.label(e.item_indices[i])},
                         {"coefficient", e.coefficients[i]}});
    }
    nlohmann::json out{{"method", method_name(e.method)},
                       {"user_id", e.user_id},
                       {"target_item", e.target_item},
                       {"fx", e.fx},
                       {"fbaseline", e.fbaseline},
                       {"intercept", e.intercept},
                       {"items", std::move(items)}};
    if (e.degenerate) out["degenerate"] = true;
    return out;
}

}  // namespace climb
