// Perturbation dataset construction: LIME's uniform subset sampler with an
// exponential proximity kernel, and the Shapley-kernel power-set
// enumerator/sampler. The all-zeros and all-ones masks never appear in a
// perturbation set; those two points carry infinite Shapley-kernel weight
// and are enforced exactly through the completeness constraint instead.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "climb/core.hpp"
#include "climb/model.hpp"

namespace climb {

struct PerturbationSet {
    std::vector<Mask> masks;
    std::vector<double> weights;  // proximity / Shapley kernel values
    std::vector<double> labels;   // f(z) at the target item
    Method method = Method::Lime;
};

namespace detail {

// Exact C(n,k) saturating at cap (prefix products are exact integers).
inline std::uint64_t binomial_capped(int n, int k, std::uint64_t cap = (1ull << 62)) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<unsigned __int128>(n - k + i) / static_cast<unsigned __int128>(i);
        if (c > cap) return cap;
    }
    return static_cast<std::uint64_t>(c);
}

// Draws a uniform k-subset of {0..n-1} via partial Fisher-Yates.
inline void sample_subset(int n, int k, Rng& rng, std::vector<int>& scratch,
                          std::vector<std::uint8_t>& bits_out) {
    scratch.resize(static_cast<std::size_t>(n));
    std::iota(scratch.begin(), scratch.end(), 0);
    bits_out.assign(static_cast<std::size_t>(n), 0);
    for (int j = 0; j < k; ++j) {
        const int pick = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - j)));
        std::swap(scratch[static_cast<std::size_t>(j)], scratch[static_cast<std::size_t>(pick)]);
        bits_out[static_cast<std::size_t>(scratch[static_cast<std::size_t>(j)])] = 1;
    }
}

// Appends every size-k mask over n positions in lexicographic order.
inline void enumerate_size(int n, int k, std::vector<Mask>& out) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    for (;;) {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(n), 0);
        for (int p : idx) bits[static_cast<std::size_t>(p)] = 1;
        out.emplace_back(std::move(bits));
        int j = k - 1;
        while (j >= 0 && idx[static_cast<std::size_t>(j)] == n - k + j) --j;
        if (j < 0) break;
        idx[static_cast<std::size_t>(j)]++;
        for (int p = j + 1; p < k; ++p)
            idx[static_cast<std::size_t>(p)] = idx[static_cast<std::size_t>(p - 1)] + 1;
    }
}

}  // namespace detail

// n_samples i.i.d. masks: draw |z'| ~ Uniform{1..d'-1}, then a uniform
// subset of that size. The extremes cannot occur.
inline std::vector<Mask> lime_sample(const Instance& instance, int n_samples, std::uint64_t seed) {
    const int d = instance.feature_count();
    if (d < 2)
        throw DegenerateInstanceError("lime_sample: d'=1 instance has no informative masks");
    if (n_samples < 1) throw ConfigError("lime_sample: n_samples must be >= 1");
    Rng rng(seed);
    std::vector<Mask> masks;
    masks.reserve(static_cast<std::size_t>(n_samples));
    std::vector<int> scratch;
    std::vector<std::uint8_t> bits;
    for (int i = 0; i < n_samples; ++i) {
        const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - 1)));
        detail::sample_subset(d, k, rng, scratch, bits);
        masks.emplace_back(bits);
    }
    return masks;
}

// exp(-D^2 / sigma^2) with D = 1 - sqrt(|z'|/d'): one minus the cosine
// similarity between the all-ones x' and z'. Floored at the smallest
// positive double so extreme widths cannot underflow a weight to zero.
inline double lime_kernel(const Mask& mask, double sigma = 0.25) {
    if (mask.ones_count() == 0) throw ConfigError("lime_kernel: all-zeros mask");
    const double dist =
        1.0 - std::sqrt(static_cast<double>(mask.ones_count()) / static_cast<double>(mask.size()));
    return std::max(std::exp(-(dist * dist) / (sigma * sigma)),
                    std::numeric_limits<double>::min());
}

// Shapley kernel (d'-1) / (C(d',|z'|) * |z'| * (d'-|z'|)), via log-gamma so
// large d' cannot overflow. Infinite-weight sizes 0 and d' are rejected;
// they belong to the constraint, never to the regression rows.
inline double shap_kernel(int d_prime, int subset_size) {
    if (subset_size <= 0 || subset_size >= d_prime)
        throw ConfigError("shap_kernel: subset size " + std::to_string(subset_size) +
                          " carries infinite weight; route it through the constraint");
    const double n = static_cast<double>(d_prime);
    const double k = static_cast<double>(subset_size);
    const double log_binom =
        std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(std::log(n - 1.0) - log_binom - std::log(k) - std::log(n - k));
}

// Total kernel mass sum_{k=1}^{d'-1} C(d',k) * shap_kernel(d',k); closed form
// (d'-1) * sum 1/(k(d'-k)). Used by the enumeration invariant test and by
// the budget allocator below.
inline double shap_total_kernel_mass(int d_prime) {
    double total = 0.0;
    for (int k = 1; k < d_prime; ++k)
        total += static_cast<double>(d_prime - 1) /
                 (static_cast<double>(k) * static_cast<double>(d_prime - k));
    return total;
}

// Power-set perturbations under a budget. If the full power set (minus the
// extremes) fits, enumerate it. Otherwise walk size-pairs (1,d'-1),
// (2,d'-2), ... inward, enumerating each pair completely while it fits, and
// spend the remaining budget on uniform draws from the unenumerated sizes,
// allocated proportionally to each size's total Shapley-kernel mass.
inline std::vector<Mask> shap_enumerate(const Instance& instance, int budget,
                                        std::uint64_t seed) {
    const int d = instance.feature_count();
    if (d < 2)
        throw DegenerateInstanceError("shap_enumerate: d'=1 instance has no informative masks");
    if (budget < 1) throw ConfigError("shap_enumerate: budget must be >= 1");

    std::vector<Mask> masks;
    const std::uint64_t full_count =
        (d <= 40) ? ((1ull << d) - 2) : std::numeric_limits<std::uint64_t>::max();
    if (full_count <= static_cast<std::uint64_t>(budget)) {
        masks.reserve(full_count);
        for (int k = 1; k < d; ++k) detail::enumerate_size(d, k, masks);
        return masks;
    }

    std::uint64_t remaining = static_cast<std::uint64_t>(budget);
    int first_open = 1, last_open = d - 1;  // sizes not yet fully enumerated
    for (int k = 1; k <= d - k; ++k) {
        const int mirror = d - k;
        std::uint64_t pair_count = detail::binomial_capped(d, k);
        if (mirror != k) pair_count += detail::binomial_capped(d, mirror);
        if (pair_count > remaining) break;
        detail::enumerate_size(d, k, masks);
        if (mirror != k) detail::enumerate_size(d, mirror, masks);
        remaining -= pair_count;
        first_open = k + 1;
        last_open = mirror - 1;
    }

    if (remaining == 0 || first_open > last_open) return masks;

    // Largest-remainder apportionment of the leftover budget across the open
    // sizes, proportional to per-size kernel mass (d'-1)/(k(d'-k)).
    const int n_open = last_open - first_open + 1;
    std::vector<double> mass(static_cast<std::size_t>(n_open));
    double total_mass = 0.0;
    for (int k = first_open; k <= last_open; ++k) {
        const double m = static_cast<double>(d - 1) /
                         (static_cast<double>(k) * static_cast<double>(d - k));
        mass[static_cast<std::size_t>(k - first_open)] = m;
        total_mass += m;
    }
    std::vector<std::uint64_t> alloc(static_cast<std::size_t>(n_open), 0);
    std::vector<std::pair<double, int>> frac;
    std::uint64_t assigned = 0;
    for (int j = 0; j < n_open; ++j) {
        const double share = static_cast<double>(remaining) *
                             mass[static_cast<std::size_t>(j)] / total_mass;
        alloc[static_cast<std::size_t>(j)] = static_cast<std::uint64_t>(share);
        assigned += alloc[static_cast<std::size_t>(j)];
        frac.emplace_back(share - std::floor(share), j);
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t j = 0; assigned < remaining; ++j, ++assigned)
        alloc[static_cast<std::size_t>(frac[j % frac.size()].second)]++;

    Rng rng(seed);
    std::vector<int> scratch;
    std::vector<std::uint8_t> bits;
    for (int j = 0; j < n_open; ++j) {
        const int k = first_open + j;
        for (std::uint64_t c = 0; c < alloc[static_cast<std::size_t>(j)]; ++c) {
            detail::sample_subset(d, k, rng, scratch, bits);
            masks.emplace_back(bits);
        }
    }
    return masks;
}

// Black-box labels f(z) for each mask, order-preserving. Batched through
// the model's score_masked hook.
inline std::vector<double> label_masks(const ScoringModel& model, const Instance& instance,
                                       int target_item, std::span<const Mask> masks) {
    if (target_item < 0 || target_item >= model.item_count())
        throw DimensionError("label_masks: bad target item");
    return model.score_masked(instance, masks, target_item);
}

inline void validate_perturbation_set(const PerturbationSet& set) {
    if (set.masks.size() != set.weights.size() || set.masks.size() != set.labels.size())
        throw DimensionError("perturbation set arrays must align");
    for (std::size_t i = 0; i < set.masks.size(); ++i) {
        const int ones = set.masks[i].ones_count();
        if (ones == 0 || ones == set.masks[i].size())
            throw ConfigError("perturbation set contains an extreme mask");
        if (!(set.weights[i] > 0.0) || !std::isfinite(set.weights[i]))
            throw NumericalError("perturbation weight must be positive and finite");
    }
}

}  // namespace climb
