// Core domain types shared by every other header: the item catalog, sparse
// user instances, binary masks over an instance's active items, explanation
// records, deterministic seed derivation and a small portable RNG.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace climb {

inline constexpr const char* kVersion = "0.1.0";

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Instances with d' too small for the requested operation (d'=1 explanations
// are handled analytically by the explainers; d'<3 users are skipped by the
// bootstrap bias-variance estimator).
class DegenerateInstanceError : public Error {
public:
    using Error::Error;
};

enum class Method { Lime, Shap, Climb };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::Lime: return "lime";
        case Method::Shap: return "shap";
        case Method::Climb: return "climb";
    }
    return "?";
}

inline Method method_from_string(std::string_view s) {
    if (s == "lime") return Method::Lime;
    if (s == "shap") return Method::Shap;
    if (s == "climb") return Method::Climb;
    throw ConfigError("unknown method: " + std::string(s));
}

// Item universe. Labels are opaque display strings, one per item index.
class Catalog {
public:
    Catalog() = default;

    explicit Catalog(std::vector<std::string> labels) : labels_(std::move(labels)) {
        if (labels_.size() < 2)
            throw ConfigError("catalog needs at least 2 items, got " +
                              std::to_string(labels_.size()));
        std::vector<std::string> sorted = labels_;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ConfigError("catalog labels must be unique");
    }

    int item_count() const { return static_cast<int>(labels_.size()); }
    const std::string& label(int item) const { return labels_.at(static_cast<std::size_t>(item)); }
    const std::vector<std::string>& labels() const { return labels_; }

private:
    std::vector<std::string> labels_;
};

// One user: the strictly increasing list of item indices they interacted
// with (the nonzero coordinates of the dense binary vector x). Instances
// never store the dense form; densification happens at the model boundary.
class Instance {
public:
    Instance() = default;

    Instance(std::string user_id, std::vector<int> active_items, int item_count)
        : user_id_(std::move(user_id)), active_items_(std::move(active_items)) {
        if (active_items_.empty())
            throw ConfigError("instance '" + user_id_ + "' has no active items");
        int prev = -1;
        for (int t : active_items_) {
            if (t <= prev)
                throw ConfigError("instance '" + user_id_ +
                                  "' active items must be strictly increasing");
            if (t < 0 || t >= item_count)
                throw ConfigError("instance '" + user_id_ + "' item index " +
                                  std::to_string(t) + " out of range [0," +
                                  std::to_string(item_count) + ")");
            prev = t;
        }
    }

    const std::string& user_id() const { return user_id_; }
    const std::vector<int>& active_items() const { return active_items_; }
    // d': the dimensionality of the interpretable space.
    int feature_count() const { return static_cast<int>(active_items_.size()); }

private:
    std::string user_id_;
    std::vector<int> active_items_;
};

// Binary vector z' over an instance's active items: bit j toggles presence
// of active_items[j].
class Mask {
public:
    Mask() = default;

    explicit Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
        for (std::uint8_t b : bits_) {
            if (b > 1) throw ConfigError("mask bits must be 0 or 1");
            ones_ += b;
        }
    }

    static Mask ones(int n) { return Mask(std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1)); }
    static Mask zeros(int n) { return Mask(std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0)); }

    int size() const { return static_cast<int>(bits_.size()); }
    int ones_count() const { return ones_; }
    bool bit(int j) const { return bits_[static_cast<std::size_t>(j)] != 0; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    bool operator==(const Mask& other) const { return bits_ == other.bits_; }

private:
    std::vector<std::uint8_t> bits_;
    int ones_ = 0;
};

// x' for an instance: the all-ones mask of length d'.
inline Mask to_interpretable(const Instance& instance) {
    return Mask::ones(instance.feature_count());
}

// Maps a mask back to the original d-dimensional binary space: 1 exactly at
// active_items[j] where bits[j]=1. The all-zeros mask yields the zero vector
// (the baseline), the all-ones mask reproduces x.
inline std::vector<std::uint8_t> apply_mask(const Instance& instance, const Mask& mask,
                                            const Catalog& catalog) {
    if (mask.size() != instance.feature_count())
        throw DimensionError("mask length " + std::to_string(mask.size()) +
                             " != instance feature count " +
                             std::to_string(instance.feature_count()));
    std::vector<std::uint8_t> x(static_cast<std::size_t>(catalog.item_count()), 0);
    const auto& items = instance.active_items();
    for (int j = 0; j < mask.size(); ++j)
        if (mask.bit(j)) x[static_cast<std::size_t>(items[static_cast<std::size_t>(j)])] = 1;
    return x;
}

// splitmix64 finalizer; full 64-bit avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives an independent seed for a named random stream. Hash-based rather
// than sequential so per-user work stays order-independent under parallel
// evaluation.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view stream_label,
                                 std::uint64_t index) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the label bytes
    for (unsigned char c : stream_label) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return mix64(mix64(master_seed ^ h) ^ index);
}

// Minimal deterministic generator. Not std::mt19937_64 because the standard
// distributions are implementation-defined; this keeps every sampled stream
// reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [0,n), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ConfigError("Rng::below(0)");
        const std::uint64_t limit =
            std::numeric_limits<std::uint64_t>::max() -
            std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (pair cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Attribution result for one (user, target item) pair. For Shap and Climb
// the intercept is pinned to f(baseline) and the coefficients satisfy the
// completeness constraint; validate_explanation enforces both.
struct Explanation {
    Method method = Method::Lime;
    std::string user_id;
    int target_item = -1;
    std::vector<int> item_indices;
    std::vector<double> coefficients;
    double intercept = 0.0;
    double fx = 0.0;
    double fbaseline = 0.0;
    // d'=1: the constraint fully determines the single coefficient and no
    // regression was run.
    bool degenerate = false;

    double coefficient_sum() const {
        double s = 0.0;
        for (double c : coefficients) s += c;
        return s;
    }
};

inline void validate_explanation(const Explanation& e) {
    if (e.coefficients.size() != e.item_indices.size())
        throw DimensionError("explanation coefficient/item count mismatch");
    for (double c : e.coefficients)
        if (!std::isfinite(c)) throw NumericalError("non-finite explanation coefficient");
    if (!std::isfinite(e.intercept) || !std::isfinite(e.fx) || !std::isfinite(e.fbaseline))
        throw NumericalError("non-finite explanation scalar");
    if (e.method == Method::Shap || e.method == Method::Climb) {
        if (std::abs(e.intercept - e.fbaseline) > 1e-9)
            throw NumericalError("constrained explanation intercept differs from f(baseline)");
        const double residual = e.coefficient_sum() - (e.fx - e.fbaseline);
        if (std::abs(residual) > 1e-8)
            throw NumericalError("completeness residual " + std::to_string(residual) +
                                 " exceeds 1e-8");
    }
}

}  // namespace climb
