// The black-box being explained: the scoring interface, a co-occurrence
// softmax recommender used as the reference model, ranking helpers and model
// persistence.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "climb/core.hpp"
#include "climb/dataset.hpp"

namespace climb {

// Deterministic scorer over the full catalog. Implementations must be safe
// for concurrent read-only calls.
class ScoringModel {
public:
    virtual ~ScoringModel() = default;

    virtual int item_count() const = 0;

    // Scores every catalog item for the dense binary input x (|x| = d).
    virtual void score_into(std::span<const std::uint8_t> x, std::span<double> out) const = 0;

    // Score of a single item; must equal score_into(x)[target]. Overridable
    // so models with structure can avoid materializing the full vector.
    virtual double score_one(std::span<const std::uint8_t> x, int target) const {
        std::vector<double> out(static_cast<std::size_t>(item_count()));
        score_into(x, out);
        return out[static_cast<std::size_t>(target)];
    }

    // Target scores for masked variants of one instance, order-preserving.
    // The default loops over score_one; structured models can batch.
    virtual std::vector<double> score_masked(const Instance& instance,
                                             std::span<const Mask> masks, int target) const {
        const int d = item_count();
        std::vector<double> labels(masks.size());
        std::vector<std::uint8_t> x(static_cast<std::size_t>(d), 0);
        const auto& items = instance.active_items();
        for (std::size_t m = 0; m < masks.size(); ++m) {
            if (masks[m].size() != instance.feature_count())
                throw DimensionError("score_masked: mask length mismatch");
            std::fill(x.begin(), x.end(), 0);
            for (int j = 0; j < masks[m].size(); ++j)
                if (masks[m].bit(j))
                    x[static_cast<std::size_t>(items[static_cast<std::size_t>(j)])] = 1;
            labels[m] = score_one(x, target);
        }
        return labels;
    }

    std::vector<double> score(std::span<const std::uint8_t> x) const {
        std::vector<double> out(static_cast<std::size_t>(item_count()));
        score_into(x, out);
        return out;
    }
};

// Item-item affinity model: logits_t = c_t + m^-alpha * sum_{i in x} W[i][t],
// scores = softmax(logits / tau). W is a symmetric non-negative shifted-PMI
// matrix with zero diagonal, stored row-sparse; c_t = log(1 + popularity_t),
// so the zero vector scores items exactly in popularity order. The softmax
// saturates, which gives the scorer the locally flat regions the constrained
// explainers are designed to survive.
class CoocModel final : public ScoringModel {
public:
    struct Entry {
        int col;
        double value;
    };

    CoocModel() = default;

    CoocModel(Catalog catalog, std::vector<std::vector<Entry>> rows, std::vector<double> bias,
              double alpha, double tau)
        : catalog_(std::move(catalog)), bias_(std::move(bias)), alpha_(alpha), tau_(tau) {
        const int d = catalog_.item_count();
        if (static_cast<int>(rows.size()) != d || static_cast<int>(bias_.size()) != d)
            throw DimensionError("CoocModel: row/bias count must equal catalog size");
        if (!(tau_ > 0.0)) throw ConfigError("CoocModel: tau must be > 0");
        row_ptr_.assign(static_cast<std::size_t>(d) + 1, 0);
        for (int i = 0; i < d; ++i) {
            auto& row = rows[static_cast<std::size_t>(i)];
            std::sort(row.begin(), row.end(),
                      [](const Entry& a, const Entry& b) { return a.col < b.col; });
            for (const Entry& e : row) {
                if (e.col < 0 || e.col >= d) throw DimensionError("CoocModel: column out of range");
                if (!std::isfinite(e.value)) throw NumericalError("CoocModel: non-finite weight");
                cols_.push_back(e.col);
                vals_.push_back(e.value);
            }
            row_ptr_[static_cast<std::size_t>(i) + 1] = cols_.size();
        }
        for (double c : bias_)
            if (!std::isfinite(c)) throw NumericalError("CoocModel: non-finite bias");
        rebuild_cached();
    }

    int item_count() const override { return catalog_.item_count(); }
    const Catalog& catalog() const { return catalog_; }
    double alpha() const { return alpha_; }
    double tau() const { return tau_; }
    const std::vector<double>& bias() const { return bias_; }
    std::size_t nonzero_count() const { return cols_.size(); }

    // Row i of W as (col, value) pairs, sorted by column.
    std::vector<Entry> row(int i) const {
        std::vector<Entry> out;
        for (std::size_t k = row_ptr_[static_cast<std::size_t>(i)];
             k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k)
            out.push_back({cols_[k], vals_[k]});
        return out;
    }

    void score_into(std::span<const std::uint8_t> x, std::span<double> out) const override {
        const int d = item_count();
        if (static_cast<int>(x.size()) != d || static_cast<int>(out.size()) != d)
            throw DimensionError("CoocModel::score_into: dimension mismatch");
        const double s = affinity_scale(x);
        std::vector<double> logit(bias_over_tau_.begin(), bias_over_tau_.end());
        accumulate_rows(x, s, logit.data());
        double mx = logit[0];
        for (int t = 1; t < d; ++t) mx = std::max(mx, logit[t]);
        double z = 0.0;
        for (int t = 0; t < d; ++t) {
            const double e = std::exp(logit[static_cast<std::size_t>(t)] - mx);
            out[static_cast<std::size_t>(t)] = e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (int t = 0; t < d; ++t) out[static_cast<std::size_t>(t)] *= inv;
    }

    // Single-item fast path: only columns reachable from the active rows can
    // move off the popularity baseline, so the softmax normalizer is the
    // precomputed baseline sum corrected over the touched columns.
    double score_one(std::span<const std::uint8_t> x, int target) const override {
        const int d = item_count();
        if (static_cast<int>(x.size()) != d) throw DimensionError("CoocModel::score_one: bad x");
        if (target < 0 || target >= d) throw DimensionError("CoocModel::score_one: bad target");
        thread_local std::vector<double> acc;
        thread_local std::vector<std::uint8_t> seen;
        thread_local std::vector<int> touched;
        if (static_cast<int>(acc.size()) != d) {
            acc.assign(static_cast<std::size_t>(d), 0.0);
            seen.assign(static_cast<std::size_t>(d), 0);
            touched.clear();
        }

        const double s = affinity_scale(x);
        touched.clear();
        for (int i = 0; i < d; ++i) {
            if (!x[static_cast<std::size_t>(i)]) continue;
            for (std::size_t k = row_ptr_[static_cast<std::size_t>(i)];
                 k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
                const int c = cols_[k];
                if (!seen[static_cast<std::size_t>(c)]) {
                    seen[static_cast<std::size_t>(c)] = 1;
                    touched.push_back(c);
                }
                acc[static_cast<std::size_t>(c)] += vals_[k];
            }
        }

        double shift = base_max_;  // max logit; W >= 0 keeps touched >= baseline,
        for (int c : touched) {    // negative-weight models are still covered below
            const double l = bias_over_tau_[static_cast<std::size_t>(c)] +
                             s * acc[static_cast<std::size_t>(c)] * inv_tau_;
            shift = std::max(shift, l);
        }
        double touched_sum = 0.0;
        double touched_base = 0.0;
        for (int c : touched) {
            const double l = bias_over_tau_[static_cast<std::size_t>(c)] +
                             s * acc[static_cast<std::size_t>(c)] * inv_tau_;
            touched_sum += std::exp(l - shift);
            touched_base += base_exp_[static_cast<std::size_t>(c)];
        }
        const double untouched = (base_exp_sum_ - touched_base) * std::exp(base_max_ - shift);
        const double z = touched_sum + std::max(untouched, 0.0);

        const double l_target = bias_over_tau_[static_cast<std::size_t>(target)] +
                                s * acc[static_cast<std::size_t>(target)] * inv_tau_;
        for (int c : touched) {
            acc[static_cast<std::size_t>(c)] = 0.0;
            seen[static_cast<std::size_t>(c)] = 0;
        }
        return std::exp(l_target - shift) / z;
    }

    // Batched variant of score_one over many masks of one instance: one
    // dense submatrix over the union of touched columns, a single mask-by-
    // weight product, then a vectorized softmax correction per row. Exactly
    // the same quantity as the per-call path up to floating-point
    // associativity.
    std::vector<double> score_masked(const Instance& instance, std::span<const Mask> masks,
                                     int target) const override {
        const int d = item_count();
        const int dp = instance.feature_count();
        if (target < 0 || target >= d) throw DimensionError("score_masked: bad target");
        const auto& items = instance.active_items();
        if (!items.empty() && items.back() >= d)
            throw DimensionError("score_masked: instance does not fit this catalog");
        const std::size_t n = masks.size();
        if (n == 0) return {};
        for (const Mask& m : masks)
            if (m.size() != dp) throw DimensionError("score_masked: mask length mismatch");

        // union U of columns reachable from the active rows
        std::vector<int> pos(static_cast<std::size_t>(d), -1);
        std::vector<int> cols;
        for (int j = 0; j < dp; ++j) {
            const int i = items[static_cast<std::size_t>(j)];
            for (std::size_t k = row_ptr_[static_cast<std::size_t>(i)];
                 k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
                const int c = cols_[k];
                if (pos[static_cast<std::size_t>(c)] < 0) {
                    pos[static_cast<std::size_t>(c)] = 0;
                    cols.push_back(c);
                }
            }
        }
        std::sort(cols.begin(), cols.end());
        const int u = static_cast<int>(cols.size());
        for (int idx = 0; idx < u; ++idx)
            pos[static_cast<std::size_t>(cols[static_cast<std::size_t>(idx)])] = idx;

        std::vector<double> labels(n);
        if (u == 0) {  // no affinity at all: every mask scores the baseline
            const double v = base_exp_[static_cast<std::size_t>(target)] / base_exp_sum_;
            std::fill(labels.begin(), labels.end(), v);
            return labels;
        }

        Eigen::MatrixXd wsub = Eigen::MatrixXd::Zero(dp, u);
        for (int j = 0; j < dp; ++j) {
            const int i = items[static_cast<std::size_t>(j)];
            for (std::size_t k = row_ptr_[static_cast<std::size_t>(i)];
                 k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k)
                wsub(j, pos[static_cast<std::size_t>(cols_[k])]) = vals_[k];
        }
        Eigen::ArrayXd ctau_u(u), base_exp_u(u);
        double base_in_u = 0.0;
        for (int idx = 0; idx < u; ++idx) {
            const int c = cols[static_cast<std::size_t>(idx)];
            ctau_u(idx) = bias_over_tau_[static_cast<std::size_t>(c)];
            base_exp_u(idx) = base_exp_[static_cast<std::size_t>(c)];
            base_in_u += base_exp_u(idx);
        }
        const double base_rest = std::max(0.0, base_exp_sum_ - base_in_u);

        Eigen::MatrixXd mm(dp, static_cast<Eigen::Index>(n));  // masks as columns
        Eigen::ArrayXd scale(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const Mask& m = masks[i];
            for (int j = 0; j < dp; ++j)
                mm(j, static_cast<Eigen::Index>(i)) = m.bit(j) ? 1.0 : 0.0;
            scale(static_cast<Eigen::Index>(i)) =
                std::pow(static_cast<double>(std::max(1, m.ones_count())), -alpha_) * inv_tau_;
        }
        // u x n, one contiguous column of affinity contributions per mask
        const Eigen::MatrixXd r = wsub.transpose() * mm;

        const int tpos = pos[static_cast<std::size_t>(target)];
        const double ctau_target = bias_over_tau_[static_cast<std::size_t>(target)];
        Eigen::ArrayXd row(u);
        for (std::size_t i = 0; i < n; ++i) {
            row = ctau_u + scale(static_cast<Eigen::Index>(i)) *
                               r.col(static_cast<Eigen::Index>(i)).array();
            const double shift = std::max(base_max_, row.maxCoeff());
            const double z = (row - shift).exp().sum() + base_rest * std::exp(base_max_ - shift);
            const double lt = (tpos >= 0) ? row(tpos) : ctau_target;
            labels[i] = std::exp(lt - shift) / z;
        }
        return labels;
    }

private:
    double affinity_scale(std::span<const std::uint8_t> x) const {
        int m = 0;
        for (std::uint8_t v : x) m += v;
        return std::pow(static_cast<double>(std::max(1, m)), -alpha_);
    }

    void accumulate_rows(std::span<const std::uint8_t> x, double s, double* logit) const {
        const double f = s * inv_tau_;
        for (int i = 0; i < item_count(); ++i) {
            if (!x[static_cast<std::size_t>(i)]) continue;
            for (std::size_t k = row_ptr_[static_cast<std::size_t>(i)];
                 k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k)
                logit[cols_[k]] += f * vals_[k];
        }
    }

    void rebuild_cached() {
        const int d = item_count();
        inv_tau_ = 1.0 / tau_;
        bias_over_tau_.resize(static_cast<std::size_t>(d));
        for (int t = 0; t < d; ++t)
            bias_over_tau_[static_cast<std::size_t>(t)] = bias_[static_cast<std::size_t>(t)] * inv_tau_;
        base_max_ = *std::max_element(bias_over_tau_.begin(), bias_over_tau_.end());
        base_exp_.resize(static_cast<std::size_t>(d));
        base_exp_sum_ = 0.0;
        for (int t = 0; t < d; ++t) {
            base_exp_[static_cast<std::size_t>(t)] =
                std::exp(bias_over_tau_[static_cast<std::size_t>(t)] - base_max_);
            base_exp_sum_ += base_exp_[static_cast<std::size_t>(t)];
        }
    }

    Catalog catalog_;
    std::vector<std::size_t> row_ptr_;  // CSR over the symmetric weight matrix
    std::vector<int> cols_;
    std::vector<double> vals_;
    std::vector<double> bias_;
    double alpha_ = 0.75;
    double tau_ = 1.0;
    // cached softmax baseline machinery
    double inv_tau_ = 1.0;
    std::vector<double> bias_over_tau_;
    std::vector<double> base_exp_;
    double base_exp_sum_ = 0.0;
    double base_max_ = 0.0;
};

// Shifted-PMI fit: W[i][t] = max(0, log(N*C[i][t] / (pop_i*pop_t + shrinkage)))
// for i != t, where C counts users containing both items and N is the user
// count. c_t = log(1 + popularity_t).
inline CoocModel fit_cooc(const InteractionDataset& data, double shrinkage = 10.0,
                          double tau = 1.0, double alpha = 0.75) {
    const int d = data.catalog.item_count();
    const double n_users = static_cast<double>(data.users.size());
    if (data.users.empty()) throw ConfigError("fit_cooc: dataset has no users");

    std::vector<std::int32_t> cooc(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0);
    for (const Instance& u : data.users) {
        const auto& items = u.active_items();
        for (std::size_t a = 0; a < items.size(); ++a)
            for (std::size_t b = a + 1; b < items.size(); ++b)
                cooc[static_cast<std::size_t>(items[a]) * static_cast<std::size_t>(d) +
                     static_cast<std::size_t>(items[b])]++;
    }

    std::vector<std::vector<CoocModel::Entry>> rows(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        for (int t = i + 1; t < d; ++t) {
            const std::int32_t c =
                cooc[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) +
                     static_cast<std::size_t>(t)];
            if (c == 0) continue;
            const double pop_prod = static_cast<double>(data.popularity[static_cast<std::size_t>(i)]) *
                                    static_cast<double>(data.popularity[static_cast<std::size_t>(t)]);
            const double v = std::log(n_users * static_cast<double>(c) / (pop_prod + shrinkage));
            if (v > 0.0) {
                rows[static_cast<std::size_t>(i)].push_back({t, v});
                rows[static_cast<std::size_t>(t)].push_back({i, v});
            }
        }
    }

    std::vector<double> bias(static_cast<std::size_t>(d));
    for (int t = 0; t < d; ++t)
        bias[static_cast<std::size_t>(t)] =
            std::log1p(static_cast<double>(data.popularity[static_cast<std::size_t>(t)]));

    return CoocModel(data.catalog, std::move(rows), std::move(bias), alpha, tau);
}

// 1-based rank of target_item under descending score, ties broken by
// ascending item index.
inline int rank_of(const ScoringModel& model, std::span<const std::uint8_t> x, int target_item) {
    const int d = model.item_count();
    if (target_item < 0 || target_item >= d) throw DimensionError("rank_of: bad target item");
    std::vector<double> scores(static_cast<std::size_t>(d));
    model.score_into(x, scores);
    const double st = scores[static_cast<std::size_t>(target_item)];
    int rank = 1;
    for (int t = 0; t < d; ++t) {
        if (scores[static_cast<std::size_t>(t)] > st) ++rank;
        else if (scores[static_cast<std::size_t>(t)] == st && t < target_item) ++rank;
    }
    return rank;
}

// Highest-scoring item the user has not interacted with (recommending an
// already-seen item is vacuous); ties broken by ascending index.
inline int top_recommendation(const ScoringModel& model, const Instance& instance) {
    const int d = model.item_count();
    std::vector<std::uint8_t> x(static_cast<std::size_t>(d), 0);
    for (int t : instance.active_items()) x[static_cast<std::size_t>(t)] = 1;
    std::vector<double> scores(static_cast<std::size_t>(d));
    model.score_into(x, scores);
    int best = -1;
    for (int t = 0; t < d; ++t) {
        if (x[static_cast<std::size_t>(t)]) continue;
        if (best < 0 || scores[static_cast<std::size_t>(t)] > scores[static_cast<std::size_t>(best)])
            best = t;
    }
    if (best < 0) throw ConfigError("top_recommendation: user interacted with every item");
    return best;
}

inline int top_recommendation(const ScoringModel& model, const Instance& instance,
                              const Catalog& catalog) {
    if (catalog.item_count() != model.item_count())
        throw DimensionError("top_recommendation: catalog/model size mismatch");
    return top_recommendation(model, instance);
}

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
inline double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace detail

inline constexpr std::uint32_t kModelMagic = 0x424d4c43u;  // "CLMB"
inline constexpr std::uint32_t kModelVersion = 1;

// Versioned binary model file: alpha, tau, bias vector, sparse weight
// triplets and catalog labels, all bit-exact on round trip. The run manifest
// string travels with the file.
inline void save_model(const CoocModel& model, const std::string& path,
                       const std::string& manifest = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot write model file: " + path);
    const int d = model.item_count();
    detail::write_u32(out, kModelMagic);
    detail::write_u32(out, kModelVersion);
    detail::write_u64(out, manifest.size());
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(d));
    detail::write_f64(out, model.alpha());
    detail::write_f64(out, model.tau());
    for (int t = 0; t < d; ++t) detail::write_f64(out, model.bias()[static_cast<std::size_t>(t)]);
    detail::write_u64(out, model.nonzero_count());
    for (int i = 0; i < d; ++i)
        for (const CoocModel::Entry& e : model.row(i)) {
            detail::write_u32(out, static_cast<std::uint32_t>(i));
            detail::write_u32(out, static_cast<std::uint32_t>(e.col));
            detail::write_f64(out, e.value);
        }
    for (int t = 0; t < d; ++t) {
        const std::string& label = model.catalog().label(t);
        detail::write_u32(out, static_cast<std::uint32_t>(label.size()));
        out.write(label.data(), static_cast<std::streamsize>(label.size()));
    }
    if (!out) throw IngestError("failed writing model file: " + path);
}

inline CoocModel load_model(const std::string& path, std::string* manifest_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open model file: " + path);
    if (detail::read_u32(in) != kModelMagic) throw IngestError(path + ": not a model file");
    const std::uint32_t version = detail::read_u32(in);
    if (version != kModelVersion)
        throw IngestError(path + ": unsupported model version " + std::to_string(version));
    const std::uint64_t manifest_len = detail::read_u64(in);
    std::string manifest(manifest_len, '\0');
    in.read(manifest.data(), static_cast<std::streamsize>(manifest_len));
    if (manifest_out) *manifest_out = manifest;
    const int d = static_cast<int>(detail::read_u32(in));
    const double alpha = detail::read_f64(in);
    const double tau = detail::read_f64(in);
    std::vector<double> bias(static_cast<std::size_t>(d));
    for (int t = 0; t < d; ++t) bias[static_cast<std::size_t>(t)] = detail::read_f64(in);
    const std::uint64_t nnz = detail::read_u64(in);
    std::vector<std::vector<CoocModel::Entry>> rows(static_cast<std::size_t>(d));
    for (std::uint64_t k = 0; k < nnz; ++k) {
        const int i = static_cast<int>(detail::read_u32(in));
        const int c = static_cast<int>(detail::read_u32(in));
        const double v = detail::read_f64(in);
        if (i < 0 || i >= d) throw IngestError(path + ": weight row out of range");
        rows[static_cast<std::size_t>(i)].push_back({c, v});
    }
    std::vector<std::string> labels(static_cast<std::size_t>(d));
    for (int t = 0; t < d; ++t) {
        const std::uint32_t len = detail::read_u32(in);
        std::string s(len, '\0');
        in.read(s.data(), static_cast<std::streamsize>(len));
        labels[static_cast<std::size_t>(t)] = std::move(s);
    }
    if (!in) throw IngestError(path + ": truncated model file");
    return CoocModel(Catalog(std::move(labels)), std::move(rows), std::move(bias), alpha, tau);
}

}  // namespace climb
