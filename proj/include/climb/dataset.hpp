// Interaction data: the sparse user-item dataset, a long-tail synthetic
// generator standing in for large-scale interaction logs, and CSV ingestion.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "climb/core.hpp"

namespace climb {

struct InteractionDataset {
    Catalog catalog;
    std::vector<Instance> users;
    std::vector<int> popularity;  // popularity[t] = #users whose basket contains t
};

inline std::vector<int> count_popularity(const Catalog& catalog,
                                         const std::vector<Instance>& users) {
    std::vector<int> pop(static_cast<std::size_t>(catalog.item_count()), 0);
    for (const Instance& u : users)
        for (int t : u.active_items()) pop[static_cast<std::size_t>(t)]++;
    return pop;
}

inline InteractionDataset make_dataset(Catalog catalog, std::vector<Instance> users) {
    InteractionDataset data;
    data.catalog = std::move(catalog);
    data.users = std::move(users);
    data.popularity = count_popularity(data.catalog, data.users);
    return data;
}

namespace detail {

// Weighted draw from a cumulative-sum table.
inline int draw_from_cumulative(const std::vector<double>& cum, Rng& rng) {
    const double u = rng.uniform01() * cum.back();
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    int idx = static_cast<int>(it - cum.begin());
    if (idx >= static_cast<int>(cum.size())) idx = static_cast<int>(cum.size()) - 1;
    return idx;
}

}  // namespace detail

// Synthetic long-tail dataset. Item sampling weights follow a Zipf law
// (item 0 most popular); basket sizes are log-normal around mean_basket and
// clipped to [2, n_items/2]; each basket grows around one anchor item, with
// co-members drawn preferentially from the anchor's planted block so that
// co-occurrence structure (and hence explanations) is non-degenerate.
inline InteractionDataset generate_synthetic(int n_users, int n_items, double zipf_exponent,
                                             double mean_basket, std::uint64_t seed,
                                             double basket_sigma = 0.8) {
    if (n_users < 16) throw ConfigError("generate_synthetic: n_users must be >= 16");
    if (n_items < 32) throw ConfigError("generate_synthetic: n_items must be >= 32");
    if (!(zipf_exponent > 0.0)) throw ConfigError("generate_synthetic: zipf_exponent must be > 0");
    if (!(mean_basket >= 2.0)) throw ConfigError("generate_synthetic: mean_basket must be >= 2");
    if (!(basket_sigma > 0.0)) throw ConfigError("generate_synthetic: basket_sigma must be > 0");

    Rng rng(derive_seed(seed, "synthetic", 0));

    // Zipf sampling weights and their cumulative table.
    std::vector<double> weight(static_cast<std::size_t>(n_items));
    for (int t = 0; t < n_items; ++t)
        weight[static_cast<std::size_t>(t)] = std::pow(static_cast<double>(t + 1), -zipf_exponent);
    std::vector<double> cum_all(weight.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < weight.size(); ++t) {
        acc += weight[t];
        cum_all[t] = acc;
    }

    // Planted blocks: block(t) = t % n_blocks, so each block spans the whole
    // popularity range. Per-block cumulative tables for in-block draws.
    const int n_blocks = std::clamp(n_items / 64, 8, 64);
    std::vector<std::vector<int>> block_items(static_cast<std::size_t>(n_blocks));
    std::vector<std::vector<double>> block_cum(static_cast<std::size_t>(n_blocks));
    for (int t = 0; t < n_items; ++t)
        block_items[static_cast<std::size_t>(t % n_blocks)].push_back(t);
    for (int b = 0; b < n_blocks; ++b) {
        double s = 0.0;
        for (int t : block_items[static_cast<std::size_t>(b)]) {
            s += weight[static_cast<std::size_t>(t)];
            block_cum[static_cast<std::size_t>(b)].push_back(s);
        }
    }

    const double block_affinity = 0.6;  // probability a basket member comes from the anchor's block
    const int lo = 2;
    const int hi = std::max(lo, n_items / 2);
    // mu chosen so E[size] = mean_basket.
    const double mu = std::log(mean_basket) - 0.5 * basket_sigma * basket_sigma;

    int id_width = 1;
    for (int v = n_users - 1; v >= 10; v /= 10) ++id_width;

    std::vector<Instance> users;
    users.reserve(static_cast<std::size_t>(n_users));
    std::vector<std::uint8_t> in_basket(static_cast<std::size_t>(n_items), 0);

    for (int u = 0; u < n_users; ++u) {
        const double raw = std::exp(mu + basket_sigma * rng.normal());
        const int size = std::clamp(static_cast<int>(std::llround(raw)), lo, hi);

        std::vector<int> basket;
        basket.reserve(static_cast<std::size_t>(size));
        const int anchor = detail::draw_from_cumulative(cum_all, rng);
        basket.push_back(anchor);
        in_basket[static_cast<std::size_t>(anchor)] = 1;
        const int ablock = anchor % n_blocks;

        while (static_cast<int>(basket.size()) < size) {
            int candidate = -1;
            for (int attempt = 0; attempt < 64 && candidate < 0; ++attempt) {
                int t;
                if (rng.uniform01() < block_affinity) {
                    const int pos = detail::draw_from_cumulative(
                        block_cum[static_cast<std::size_t>(ablock)], rng);
                    t = block_items[static_cast<std::size_t>(ablock)][static_cast<std::size_t>(pos)];
                } else {
                    t = detail::draw_from_cumulative(cum_all, rng);
                }
                if (!in_basket[static_cast<std::size_t>(t)]) candidate = t;
            }
            if (candidate < 0) {
                // Saturated draw: take the first absent item after a random start.
                int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_items)));
                while (in_basket[static_cast<std::size_t>(t)]) t = (t + 1) % n_items;
                candidate = t;
            }
            basket.push_back(candidate);
            in_basket[static_cast<std::size_t>(candidate)] = 1;
        }
        for (int t : basket) in_basket[static_cast<std::size_t>(t)] = 0;
        std::sort(basket.begin(), basket.end());

        std::ostringstream id;
        id << "u";
        std::string digits = std::to_string(u);
        for (int p = static_cast<int>(digits.size()); p < id_width; ++p) id << '0';
        id << digits;
        users.emplace_back(id.str(), std::move(basket), n_items);
    }

    std::vector<std::string> labels(static_cast<std::size_t>(n_items));
    int label_width = 1;
    for (int v = n_items - 1; v >= 10; v /= 10) ++label_width;
    for (int t = 0; t < n_items; ++t) {
        std::string digits = std::to_string(t);
        labels[static_cast<std::size_t>(t)] =
            "m" + std::string(static_cast<std::size_t>(label_width) - digits.size(), '0') + digits;
    }

    return make_dataset(Catalog(std::move(labels)), std::move(users));
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (std::isspace(static_cast<unsigned char>(s[b])) || s[b] == '"')) ++b;
    while (e > b && (std::isspace(static_cast<unsigned char>(s[e - 1])) || s[e - 1] == '"')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Numeric-aware ordering for re-indexing: if every token parses as an
// integer, sort numerically (then lexicographically for collisions like
// "01" vs "1"); otherwise plain lexicographic.
inline std::vector<std::string> sorted_tokens(const std::set<std::string>& tokens) {
    std::vector<std::string> out(tokens.begin(), tokens.end());
    bool all_numeric = true;
    std::vector<long long> values(out.size());
    for (std::size_t i = 0; i < out.size() && all_numeric; ++i) {
        try {
            std::size_t pos = 0;
            values[i] = std::stoll(out[i], &pos);
            if (pos != out[i].size()) all_numeric = false;
        } catch (...) {
            all_numeric = false;
        }
    }
    if (all_numeric) {
        std::vector<std::size_t> order(out.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (values[a] != values[b]) return values[a] < values[b];
            return out[a] < out[b];
        });
        std::vector<std::string> sorted(out.size());
        for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = out[order[i]];
        return sorted;
    }
    return out;  // std::set iteration is already lexicographic
}

}  // namespace detail

struct IngestStats {
    std::size_t rows_total = 0;  // data rows seen
    std::size_t rows_kept = 0;   // rows passing the rating threshold
    std::size_t users_dropped = 0;
};

// Reads an interaction CSV (header with user / item[/movie] and optional
// rating columns), keeps rows with rating >= threshold, binarizes duplicate
// (user,item) rows, drops users with fewer than 2 kept items and re-indexes
// users and items densely.
inline InteractionDataset ingest_interactions(const std::string& path,
                                              double rating_threshold = 4.0,
                                              IngestStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open interaction file: " + path);

    std::string line;
    std::size_t line_no = 0;
    // Header (skip leading comment lines).
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        header = detail::split_csv_line(line);
        break;
    }
    if (header.empty()) throw IngestError(path + ": missing header row");

    int user_col = -1, item_col = -1, rating_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = detail::lower(header[c]);
        if (user_col < 0 && name.find("user") != std::string::npos)
            user_col = static_cast<int>(c);
        else if (item_col < 0 && (name.find("item") != std::string::npos ||
                                  name.find("movie") != std::string::npos))
            item_col = static_cast<int>(c);
        else if (rating_col < 0 && name.find("rating") != std::string::npos)
            rating_col = static_cast<int>(c);
    }
    if (user_col < 0 || item_col < 0)
        throw IngestError(path + ": header must contain user and item/movie columns, got '" +
                          (header.empty() ? "" : header[0]) + "...'");

    IngestStats local_stats;
    if (!stats) stats = &local_stats;
    std::map<std::string, std::set<std::string>> baskets;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        stats->rows_total++;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        const std::size_t needed = static_cast<std::size_t>(
            std::max(std::max(user_col, item_col), rating_col) + 1);
        if (fields.size() < needed)
            throw IngestError(path + ":" + std::to_string(line_no) + ": expected at least " +
                              std::to_string(needed) + " fields, got " +
                              std::to_string(fields.size()));
        if (rating_col >= 0) {
            const std::string& r = fields[static_cast<std::size_t>(rating_col)];
            double rating;
            try {
                std::size_t pos = 0;
                rating = std::stod(r, &pos);
                if (pos != r.size()) throw std::invalid_argument(r);
            } catch (...) {
                throw IngestError(path + ":" + std::to_string(line_no) +
                                  ": unparsable rating '" + r + "'");
            }
            if (rating < rating_threshold) continue;
        }
        stats->rows_kept++;
        baskets[fields[static_cast<std::size_t>(user_col)]]
            .insert(fields[static_cast<std::size_t>(item_col)]);
    }

    // Min-basket rule, then the item universe from the kept interactions.
    for (auto it = baskets.begin(); it != baskets.end();) {
        if (it->second.size() < 2) {
            stats->users_dropped++;
            it = baskets.erase(it);
        } else {
            ++it;
        }
    }
    if (baskets.empty())
        throw IngestError(path + ": no users with at least 2 kept interactions");

    std::set<std::string> item_tokens;
    for (const auto& [user, items] : baskets) item_tokens.insert(items.begin(), items.end());
    const std::vector<std::string> item_order = detail::sorted_tokens(item_tokens);
    std::map<std::string, int> item_index;
    for (std::size_t i = 0; i < item_order.size(); ++i)
        item_index[item_order[i]] = static_cast<int>(i);

    std::set<std::string> user_tokens;
    for (const auto& [user, items] : baskets) user_tokens.insert(user);
    const std::vector<std::string> user_order = detail::sorted_tokens(user_tokens);

    Catalog catalog{std::vector<std::string>(item_order)};
    std::vector<Instance> users;
    users.reserve(user_order.size());
    for (const std::string& uid : user_order) {
        std::vector<int> active;
        for (const std::string& tok : baskets[uid]) active.push_back(item_index[tok]);
        std::sort(active.begin(), active.end());
        users.emplace_back(uid, std::move(active), catalog.item_count());
    }
    return make_dataset(std::move(catalog), std::move(users));
}

// Writes the dataset in the same CSV dialect ingest_interactions reads.
// Comment lines (the run manifest) go first, then the header.
inline void write_interactions_csv(const InteractionDataset& data, const std::string& path,
                                   const std::string& manifest = "") {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write interaction file: " + path);
    if (!manifest.empty()) out << "# manifest: " << manifest << "\n";
    out << "user,item\n";
    for (const Instance& u : data.users)
        for (int t : u.active_items())
            out << u.user_id() << "," << data.catalog.label(t) << "\n";
    if (!out) throw IngestError("failed writing interaction file: " + path);
}

}  // namespace climb
