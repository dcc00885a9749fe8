// Evaluation protocol: sparsity segmentation, delta-rank with batched
// feature removal, a random-removal control, bootstrap bias-variance
// decomposition, solver wall-clock benchmarking, and the orchestrated full
// run with CSV/JSON report serialization.
//
// Sign convention everywhere: delta_rank = rank_before - rank_after, so a
// negative value means removing the attributed items demoted the target.
#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "climb/core.hpp"
#include "climb/dataset.hpp"
#include "climb/explain.hpp"
#include "climb/model.hpp"

namespace climb {

// Index-addressed parallel map; results are deterministic for any worker
// count because tasks write only to their own slot and aggregation happens
// afterwards in index order.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    if (n == 0) return;
    jobs = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Sparsity segmentation
// ---------------------------------------------------------------------------

struct SparsitySegmentation {
    std::map<std::string, int> assignments;  // user_id -> rank; 0 = sparsest
    std::vector<int> boundaries;             // max d' inside each bucket
    std::vector<int> bucket_sizes;
};

// Sort users by (d', user_id) ascending and cut into n_buckets contiguous
// groups; any remainder is spread one-per-bucket starting at rank 0.
inline SparsitySegmentation segment_by_sparsity(const InteractionDataset& data,
                                                int n_buckets = 8) {
    const std::size_t n = data.users.size();
    if (n_buckets < 1) throw ConfigError("segment_by_sparsity: need at least one bucket");
    if (n < static_cast<std::size_t>(n_buckets))
        throw ConfigError("segment_by_sparsity: fewer users (" + std::to_string(n) +
                          ") than buckets (" + std::to_string(n_buckets) + ")");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const int da = data.users[a].feature_count();
        const int db = data.users[b].feature_count();
        if (da != db) return da < db;
        return data.users[a].user_id() < data.users[b].user_id();
    });

    SparsitySegmentation seg;
    seg.boundaries.assign(static_cast<std::size_t>(n_buckets), 0);
    seg.bucket_sizes.assign(static_cast<std::size_t>(n_buckets), 0);
    const std::size_t base = n / static_cast<std::size_t>(n_buckets);
    const std::size_t rem = n % static_cast<std::size_t>(n_buckets);
    std::size_t pos = 0;
    for (int r = 0; r < n_buckets; ++r) {
        const std::size_t size = base + (static_cast<std::size_t>(r) < rem ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j, ++pos) {
            const Instance& u = data.users[order[pos]];
            seg.assignments[u.user_id()] = r;
            seg.boundaries[static_cast<std::size_t>(r)] =
                std::max(seg.boundaries[static_cast<std::size_t>(r)], u.feature_count());
        }
        seg.bucket_sizes[static_cast<std::size_t>(r)] = static_cast<int>(size);
    }
    return seg;
}

// ---------------------------------------------------------------------------
// Delta-rank
// ---------------------------------------------------------------------------

namespace detail {

// Shared removal walk: rank the target before and after removing each
// prefix of `removal_order`, reporting rank_before - rank_after per k.
// k > d' cells are NaN (truncated curve).
inline std::vector<double> removal_curve(const ScoringModel& model, const Instance& instance,
                                         std::span<const int> removal_order,
                                         std::span<const int> ks) {
    const int d = model.item_count();
    const int d_prime = instance.feature_count();
    std::vector<std::uint8_t> x(static_cast<std::size_t>(d), 0);
    for (int t : instance.active_items()) x[static_cast<std::size_t>(t)] = 1;

    // t_u and the reference rank come from the unmodified instance.
    std::vector<double> scores(static_cast<std::size_t>(d));
    model.score_into(x, scores);
    int target = -1;
    for (int t = 0; t < d; ++t) {
        if (x[static_cast<std::size_t>(t)]) continue;
        if (target < 0 ||
            scores[static_cast<std::size_t>(t)] > scores[static_cast<std::size_t>(target)])
            target = t;
    }
    if (target < 0) throw ConfigError("removal_curve: no recommendable item");
    const int rank_before = rank_of(model, x, target);

    std::vector<double> out(ks.size(), std::numeric_limits<double>::quiet_NaN());
    int removed = 0;
    for (std::size_t c = 0; c < ks.size(); ++c) {
        const int k = ks[c];
        if (k < 0) throw ConfigError("removal_curve: negative k");
        if (k == 0) {
            out[c] = 0.0;
            continue;
        }
        if (k > d_prime) continue;  // infeasible for this user; cell stays missing
        while (removed < k) {
            x[static_cast<std::size_t>(removal_order[static_cast<std::size_t>(removed)])] = 0;
            ++removed;
        }
        out[c] = static_cast<double>(rank_before - rank_of(model, x, target));
    }
    return out;
}

}  // namespace detail

// Removal order: descending coefficient, ties by ascending item index.
inline std::vector<double> delta_rank_curve(const ScoringModel& model, const Instance& instance,
                                            const Explanation& explanation,
                                            std::span<const int> ks) {
    if (explanation.item_indices != instance.active_items())
        throw DimensionError("delta_rank_curve: explanation does not match instance");
    std::vector<std::size_t> order(explanation.coefficients.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (explanation.coefficients[a] != explanation.coefficients[b])
            return explanation.coefficients[a] > explanation.coefficients[b];
        return explanation.item_indices[a] < explanation.item_indices[b];
    });
    std::vector<int> removal(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        removal[i] = explanation.item_indices[order[i]];
    return detail::removal_curve(model, instance, removal, ks);
}

// Control: identical walk but the removal order is a uniform permutation, so
// each prefix is a uniform k-subset.
inline std::vector<double> random_removal_control(const ScoringModel& model,
                                                  const Instance& instance,
                                                  std::span<const int> ks, std::uint64_t seed) {
    std::vector<int> removal = instance.active_items();
    Rng rng(seed);
    for (std::size_t j = removal.size(); j > 1; --j) {
        const std::size_t pick = static_cast<std::size_t>(rng.below(j));
        std::swap(removal[j - 1], removal[pick]);
    }
    return detail::removal_curve(model, instance, removal, ks);
}

// ---------------------------------------------------------------------------
// Bootstrap bias-variance
// ---------------------------------------------------------------------------

struct BiasVariance {
    double bias_sq = 0.0;
    double variance = 0.0;
    double mse = 0.0;  // always bias_sq + variance (plug-in identity)
};

// P perturbed copies of the instance, each dropping active features
// independently with probability drop_prob; a draw with fewer than two
// survivors is rejected and redrawn.
inline std::vector<Instance> bootstrap_perturbations(const Instance& instance, int rounds,
                                                     double drop_prob, std::uint64_t seed,
                                                     int item_count) {
    if (!(drop_prob >= 0.0 && drop_prob < 1.0))
        throw ConfigError("bootstrap_perturbations: drop_prob must be in [0,1)");
    Rng rng(seed);
    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(rounds));
    for (int p = 0; p < rounds; ++p) {
        std::vector<int> survivors;
        do {
            survivors.clear();
            for (int t : instance.active_items())
                if (rng.uniform01() >= drop_prob) survivors.push_back(t);
        } while (survivors.size() < 2);
        out.emplace_back(instance.user_id(), std::move(survivors), item_count);
    }
    return out;
}

// Per-perturbation estimate: the fitted regression evaluated at its own
// all-ones mask, i.e. intercept + sum of coefficients. For Shap/Climb this
// equals f(x_p) exactly by completeness; for Lime it is the fitted value.
inline BiasVariance bias_variance(const ScoringModel& model, const Instance& instance,
                                  int target_item, Method method, const ExplainOptions& options,
                                  int rounds = 50, double drop_prob = 0.1,
                                  std::uint64_t seed = 0) {
    if (instance.feature_count() < 3)
        throw DegenerateInstanceError("bias_variance: needs d' >= 3 (user skipped)");
    if (rounds < 1) throw ConfigError("bias_variance: rounds must be >= 1");

    const std::vector<Instance> perturbed = bootstrap_perturbations(
        instance, rounds, drop_prob, derive_seed(seed, "drops", 0), model.item_count());

    std::vector<double> estimates(static_cast<std::size_t>(rounds));
    for (int p = 0; p < rounds; ++p) {
        const Explanation e =
            explain(model, method, perturbed[static_cast<std::size_t>(p)], target_item, options,
                    derive_seed(seed, "fit", static_cast<std::uint64_t>(p)));
        estimates[static_cast<std::size_t>(p)] = e.intercept + e.coefficient_sum();
    }

    std::vector<std::uint8_t> x(static_cast<std::size_t>(model.item_count()), 0);
    for (int t : instance.active_items()) x[static_cast<std::size_t>(t)] = 1;
    const double fx = model.score_one(x, target_item);

    double mean = 0.0;
    for (double v : estimates) mean += v;
    mean /= static_cast<double>(rounds);
    double var = 0.0;
    for (double v : estimates) var += (v - mean) * (v - mean);
    var /= static_cast<double>(rounds);

    BiasVariance out;
    out.bias_sq = (fx - mean) * (fx - mean);
    out.variance = var;
    out.mse = out.bias_sq + out.variance;
    return out;
}

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

struct TimingStats {
    double median_ms = 0.0;
    double mean_ms = 0.0;
    int n = 0;
};

struct TimingReport {
    // (method, phase) -> stats; phases: sample, label, solve, total
    std::map<std::pair<std::string, std::string>, TimingStats> cells;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return (v.size() % 2 == 1) ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// Wall-clock per method and phase over users x repetitions. Phases are timed
// inside the explain pipeline so the SHAP dataset-generation cost stays
// attributable.
inline TimingReport bench_explainers(const ScoringModel& model, std::span<const Instance> users,
                                     const ExplainOptions& options, int repetitions,
                                     std::uint64_t seed, std::span<const Method> methods) {
    if (repetitions < 3) throw ConfigError("bench_explainers: repetitions must be >= 3");
    if (users.empty()) throw ConfigError("bench_explainers: need at least one user");

    TimingReport report;
    for (const Method method : methods) {
        std::map<std::string, std::vector<double>> samples;
        for (std::size_t u = 0; u < users.size(); ++u) {
            const Instance& user = users[u];
            const int target = top_recommendation(model, user);
            for (int rep = 0; rep < repetitions; ++rep) {
                PhaseTimings t;
                explain(model, method, user, target, options,
                        derive_seed(seed, std::string("bench/") + method_name(method),
                                    static_cast<std::uint64_t>(u * 1000 + rep)),
                        &t);
                samples["sample"].push_back(t.sample_ms);
                samples["label"].push_back(t.label_ms);
                samples["solve"].push_back(t.solve_ms);
                samples["total"].push_back(t.total_ms());
            }
        }
        for (const auto& [phase, values] : samples) {
            TimingStats st;
            st.median_ms = detail::median_of(values);
            st.mean_ms = detail::mean_of(values);
            st.n = static_cast<int>(values.size());
            report.cells[{method_name(method), phase}] = st;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct EvalConfig {
    std::vector<Method> methods{Method::Lime, Method::Shap, Method::Climb};
    std::vector<int> ks{6, 12, 18, 24, 30};
    int n_samples = 5000;
    double sigma = 0.25;
    double ridge = 1e-6;
    int bootstrap_rounds = 50;   // P
    double drop_prob = 0.1;      // rho
    int n_buckets = 8;
    int bias_variance_users = 1000;
    int bench_users = 0;  // 0 disables the timing pass (reports stay bit-reproducible)
    int bench_reps = 3;
    bool random_control = true;
    std::uint64_t seed = 42;
    int jobs = 0;  // 0 = hardware concurrency
};

struct DeltaRankCell {
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    int n = 0;
};

struct DeltaRankReport {
    std::vector<std::string> methods;  // emission order; includes "random" when present
    std::vector<int> ks;
    std::map<std::tuple<std::string, int, int>, DeltaRankCell> cells;  // (method, rank, k)

    const DeltaRankCell* cell(const std::string& method, int rank, int k) const {
        auto it = cells.find({method, rank, k});
        return it == cells.end() ? nullptr : &it->second;
    }
};

struct BiasVarianceCell {
    double bias_sq_mean = 0.0;
    double variance_mean = 0.0;
    double mse_mean = 0.0;
    int n = 0;
};

struct BiasVarianceUserRow {
    std::string user_id;
    std::string method;
    int sparsity_rank = 0;
    BiasVariance value;
};

struct BiasVarianceReport {
    int bootstrap_rounds = 0;
    double drop_prob = 0.0;
    std::map<std::pair<std::string, int>, BiasVarianceCell> cells;  // (method, rank)
    std::vector<BiasVarianceUserRow> per_user;

    const BiasVarianceCell* cell(const std::string& method, int rank) const {
        auto it = cells.find({method, rank});
        return it == cells.end() ? nullptr : &it->second;
    }
};

struct EvaluationResult {
    SparsitySegmentation segmentation;
    DeltaRankReport delta_rank;
    BiasVarianceReport bias_variance;
    TimingReport timing;
    std::vector<std::string> failures;  // per-user errors, recorded and skipped
    std::vector<std::string> skipped;   // bias-variance users with d' < 3
};

inline EvaluationResult run_full_evaluation(const InteractionDataset& data,
                                            const ScoringModel& model, const EvalConfig& config) {
    if (model.item_count() != data.catalog.item_count())
        throw ConfigError("run_full_evaluation: model/dataset catalog size mismatch");
    for (int k : config.ks)
        if (k < 0) throw ConfigError("run_full_evaluation: negative k");

    EvaluationResult result;
    result.segmentation = segment_by_sparsity(data, config.n_buckets);
    result.bias_variance.bootstrap_rounds = config.bootstrap_rounds;
    result.bias_variance.drop_prob = config.drop_prob;
    for (const Method m : config.methods) result.delta_rank.methods.push_back(method_name(m));
    if (config.random_control && !config.methods.empty())
        result.delta_rank.methods.push_back("random");
    result.delta_rank.ks = config.ks;
    if (config.methods.empty()) return result;  // nothing to run, no model calls

    ExplainOptions options;
    options.n_samples = config.n_samples;
    options.sigma = config.sigma;
    options.ridge = config.ridge;

    const std::size_t n_users = data.users.size();
    const std::size_t n_methods = config.methods.size();

    // --- delta-rank pass ---------------------------------------------------
    struct UserCurves {
        std::vector<std::vector<double>> per_method;  // aligned with config.methods
        std::vector<double> control;
        std::string error;
    };
    std::vector<UserCurves> curves(n_users);
    std::mutex failure_mutex;
    parallel_for(n_users, config.jobs, [&](std::size_t u) {
        const Instance& user = data.users[u];
        UserCurves& row = curves[u];
        try {
            const int target = top_recommendation(model, user, data.catalog);
            row.per_method.resize(n_methods);
            for (std::size_t m = 0; m < n_methods; ++m) {
                const Method method = config.methods[m];
                const Explanation e =
                    explain(model, method, user, target, options,
                            derive_seed(config.seed,
                                        std::string("explain/") + method_name(method),
                                        static_cast<std::uint64_t>(u)));
                row.per_method[m] = delta_rank_curve(model, user, e, config.ks);
            }
            if (config.random_control)
                row.control = random_removal_control(
                    model, user, config.ks,
                    derive_seed(config.seed, "control", static_cast<std::uint64_t>(u)));
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
    });

    std::map<std::tuple<std::string, int, int>, std::vector<double>> delta_samples;
    for (std::size_t u = 0; u < n_users; ++u) {
        const UserCurves& row = curves[u];
        if (!row.error.empty()) {
            result.failures.push_back("delta-rank user=" + data.users[u].user_id() + ": " +
                                      row.error);
            continue;
        }
        const int rank = result.segmentation.assignments.at(data.users[u].user_id());
        auto add = [&](const std::string& name, const std::vector<double>& curve) {
            for (std::size_t c = 0; c < config.ks.size(); ++c)
                if (!std::isnan(curve[c]))
                    delta_samples[{name, rank, config.ks[c]}].push_back(curve[c]);
        };
        for (std::size_t m = 0; m < n_methods; ++m)
            add(method_name(config.methods[m]), row.per_method[m]);
        if (config.random_control) add("random", row.control);
    }
    for (const auto& [key, values] : delta_samples) {
        DeltaRankCell cell;
        cell.mean = detail::mean_of(values);
        cell.median = detail::median_of(values);
        cell.stddev = detail::sample_stddev(values);
        cell.n = static_cast<int>(values.size());
        result.delta_rank.cells[key] = cell;
    }

    // --- bias-variance pass --------------------------------------------------
    // Deterministic uniform subsample: shuffle user indices, then take the
    // first bias_variance_users eligible (d' >= 3) users.
    std::vector<std::size_t> shuffled(n_users);
    std::iota(shuffled.begin(), shuffled.end(), 0);
    {
        Rng rng(derive_seed(config.seed, "biasvar-select", 0));
        for (std::size_t j = n_users; j > 1; --j)
            std::swap(shuffled[j - 1], shuffled[static_cast<std::size_t>(rng.below(j))]);
    }
    std::vector<std::size_t> selected;
    for (std::size_t idx : shuffled) {
        if (static_cast<int>(selected.size()) >= config.bias_variance_users) break;
        if (data.users[idx].feature_count() < 3) {
            result.skipped.push_back("bias-variance user=" + data.users[idx].user_id() +
                                     ": d' < 3");
            continue;
        }
        selected.push_back(idx);
    }

    struct BvRow {
        std::vector<BiasVariance> per_method;
        std::string error;
    };
    std::vector<BvRow> bv_rows(selected.size());
    parallel_for(selected.size(), config.jobs, [&](std::size_t s) {
        const Instance& user = data.users[selected[s]];
        BvRow& row = bv_rows[s];
        try {
            const int target = top_recommendation(model, user, data.catalog);
            row.per_method.resize(n_methods);
            for (std::size_t m = 0; m < n_methods; ++m) {
                const Method method = config.methods[m];
                row.per_method[m] = bias_variance(
                    model, user, target, method, options, config.bootstrap_rounds,
                    config.drop_prob,
                    derive_seed(config.seed, std::string("biasvar/") + method_name(method),
                                static_cast<std::uint64_t>(selected[s])));
            }
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
    });

    std::map<std::pair<std::string, int>, std::vector<BiasVariance>> bv_samples;
    for (std::size_t s = 0; s < selected.size(); ++s) {
        const BvRow& row = bv_rows[s];
        const Instance& user = data.users[selected[s]];
        if (!row.error.empty()) {
            result.failures.push_back("bias-variance user=" + user.user_id() + ": " + row.error);
            continue;
        }
        const int rank = result.segmentation.assignments.at(user.user_id());
        for (std::size_t m = 0; m < n_methods; ++m) {
            const std::string name = method_name(config.methods[m]);
            bv_samples[{name, rank}].push_back(row.per_method[m]);
            result.bias_variance.per_user.push_back({user.user_id(), name, rank,
                                                     row.per_method[m]});
        }
    }
    for (const auto& [key, values] : bv_samples) {
        BiasVarianceCell cell;
        for (const BiasVariance& v : values) {
            cell.bias_sq_mean += v.bias_sq;
            cell.variance_mean += v.variance;
            cell.mse_mean += v.mse;
        }
        const double n = static_cast<double>(values.size());
        cell.bias_sq_mean /= n;
        cell.variance_mean /= n;
        cell.mse_mean /= n;
        cell.n = static_cast<int>(values.size());
        result.bias_variance.cells[key] = cell;
    }

    // --- optional timing pass ------------------------------------------------
    if (config.bench_users > 0) {
        std::vector<std::size_t> order(n_users);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const int da = data.users[a].feature_count();
            const int db = data.users[b].feature_count();
            if (da != db) return da < db;
            return data.users[a].user_id() < data.users[b].user_id();
        });
        const int m = std::min<int>(config.bench_users, static_cast<int>(n_users));
        std::vector<Instance> bench_users;
        for (int i = 0; i < m; ++i) {
            const std::size_t pos =
                (m == 1) ? 0 : (static_cast<std::size_t>(i) * (n_users - 1)) /
                               static_cast<std::size_t>(m - 1);
            bench_users.push_back(data.users[order[pos]]);
        }
        result.timing = bench_explainers(model, bench_users, options, config.bench_reps,
                                         derive_seed(config.seed, "bench", 0), config.methods);
    }

    return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

// Shortest round-trip decimal representation, locale-independent.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline constexpr const char* kDeltaRankSignNote =
    "delta_rank = rank_before - rank_after; negative values mean removing the "
    "attributed items demoted the target item";

inline std::string delta_rank_csv(const DeltaRankReport& report, const std::string& manifest = "") {
    std::ostringstream out;
    out << "# " << kDeltaRankSignNote << "\n";
    if (!manifest.empty()) out << "# manifest: " << manifest << "\n";
    out << "method,sparsity_rank,k,mean,median,std,n\n";
    std::set<int> ranks;
    for (const auto& [key, cell] : report.cells) ranks.insert(std::get<1>(key));
    for (const std::string& method : report.methods)
        for (int rank : ranks)
            for (int k : report.ks)
                if (const DeltaRankCell* c = report.cell(method, rank, k))
                    out << method << "," << rank << "," << k << ","
                        << detail::format_double(c->mean) << ","
                        << detail::format_double(c->median) << ","
                        << detail::format_double(c->stddev) << "," << c->n << "\n";
    return out.str();
}

inline std::string bias_variance_csv(const BiasVarianceReport& report,
                                     const std::string& manifest = "") {
    std::ostringstream out;
    if (!manifest.empty()) out << "# manifest: " << manifest << "\n";
    out << "method,sparsity_rank,bias_sq_mean,variance_mean,mse_mean,n\n";
    for (const auto& [key, c] : report.cells)
        out << key.first << "," << key.second << "," << detail::format_double(c.bias_sq_mean)
            << "," << detail::format_double(c.variance_mean) << ","
            << detail::format_double(c.mse_mean) << "," << c.n << "\n";
    return out.str();
}

inline std::string timing_csv(const TimingReport& report, const std::string& manifest = "") {
    std::ostringstream out;
    if (!manifest.empty()) out << "# manifest: " << manifest << "\n";
    out << "method,phase,median_ms,mean_ms,n\n";
    for (const auto& [key, c] : report.cells)
        out << key.first << "," << key.second << "," << detail::format_double(c.median_ms) << ","
            << detail::format_double(c.mean_ms) << "," << c.n << "\n";
    return out.str();
}

inline nlohmann::json eval_config_to_json(const EvalConfig& config) {
    nlohmann::json methods = nlohmann::json::array();
    for (const Method m : config.methods) methods.push_back(method_name(m));
    return nlohmann::json{{"methods", methods},
                          {"ks", config.ks},
                          {"samples", config.n_samples},
                          {"sigma", config.sigma},
                          {"ridge", config.ridge},
                          {"bootstrap_rounds", config.bootstrap_rounds},
                          {"drop_prob", config.drop_prob},
                          {"buckets", config.n_buckets},
                          {"bias_variance_users", config.bias_variance_users},
                          {"bench_users", config.bench_users},
                          {"bench_reps", config.bench_reps},
                          {"random_control", config.random_control},
                          {"seed", config.seed}};
}

inline EvalConfig eval_config_from_json(const nlohmann::json& j) {
    EvalConfig config;
    try {
        if (j.contains("methods")) {
            config.methods.clear();
            for (const auto& m : j.at("methods"))
                config.methods.push_back(method_from_string(m.get<std::string>()));
        }
        if (j.contains("ks")) config.ks = j.at("ks").get<std::vector<int>>();
        if (j.contains("samples")) config.n_samples = j.at("samples").get<int>();
        if (j.contains("sigma")) config.sigma = j.at("sigma").get<double>();
        if (j.contains("ridge")) config.ridge = j.at("ridge").get<double>();
        if (j.contains("bootstrap_rounds"))
            config.bootstrap_rounds = j.at("bootstrap_rounds").get<int>();
        if (j.contains("drop_prob")) config.drop_prob = j.at("drop_prob").get<double>();
        if (j.contains("buckets")) config.n_buckets = j.at("buckets").get<int>();
        if (j.contains("bias_variance_users"))
            config.bias_variance_users = j.at("bias_variance_users").get<int>();
        if (j.contains("bench_users")) config.bench_users = j.at("bench_users").get<int>();
        if (j.contains("bench_reps")) config.bench_reps = j.at("bench_reps").get<int>();
        if (j.contains("random_control"))
            config.random_control = j.at("random_control").get<bool>();
        if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("jobs")) config.jobs = j.at("jobs").get<int>();
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("invalid evaluation config: ") + ex.what());
    }
    return config;
}

inline nlohmann::json evaluation_report_json(const EvaluationResult& result,
                                             const EvalConfig& config,
                                             const nlohmann::json& manifest = {}) {
    nlohmann::json counts;
    for (const auto& [key, cell] : result.delta_rank.cells)
        counts[std::get<0>(key)][std::to_string(std::get<1>(key))]
              [std::to_string(std::get<2>(key))] = cell.n;
    nlohmann::json bv_counts;
    for (const auto& [key, cell] : result.bias_variance.cells)
        bv_counts[key.first][std::to_string(key.second)] = cell.n;
    nlohmann::json j{{"version", kVersion},
                     {"config", eval_config_to_json(config)},
                     {"delta_rank_sign", kDeltaRankSignNote},
                     {"segment_boundaries", result.segmentation.boundaries},
                     {"segment_sizes", result.segmentation.bucket_sizes},
                     {"delta_rank_counts", counts},
                     {"bias_variance_counts", bv_counts},
                     {"failures", result.failures},
                     {"skipped", result.skipped}};
    if (!manifest.is_null() && !manifest.empty()) j["manifest"] = manifest;
    return j;
}

}  // namespace climb
