#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/parallel.hpp"

namespace agentsynth {

struct SelectionConfig {
    double kappa1 = 1.0;
    double kappa2 = 1.0;
    std::size_t K = 5;
    std::size_t budget = 0;
    unsigned jobs = 1;

    void validate(std::size_t corpus) const {
        require(kappa1 >= 0 && kappa2 >= 0, ErrorKind::ConfigError, "kappa exponents must be nonnegative");
        require(K >= 1, ErrorKind::ConfigError, "K must be at least 1");
        require(budget <= corpus, ErrorKind::ConfigError,
                "budget " + std::to_string(budget) + " exceeds corpus size " + std::to_string(corpus));
    }
};

/// Pairwise distances d = 1 - cosine and the corpus-wide density
/// sigma(j) = 1 / (sum of distances to the K nearest other points + 1e-12).
class NoveltyIndex {
public:
    static constexpr double kEpsilon = 1e-12;

    NoveltyIndex(const std::vector<std::vector<double>>& rows, std::size_t K) : n_(rows.size()) {
        require(n_ > 0, ErrorKind::InvalidArgument, "empty corpus");
        const std::size_t dim = rows.front().size();
        std::vector<std::vector<double>> unit = rows;
        for (auto& r : unit) {
            require(r.size() == dim, ErrorKind::ShapeMismatch, "embedding rows differ in dimension");
            double norm = 0;
            for (double x : r) norm += x * x;
            norm = std::sqrt(norm);
            require(norm > 0, ErrorKind::InvalidArgument, "zero embedding row");
            for (double& x : r) x /= norm;
        }
        d_.assign(n_ * n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j) {
                double dot = 0;
                for (std::size_t k = 0; k < dim; ++k) dot += unit[i][k] * unit[j][k];
                const double dist = std::max(0.0, 1.0 - dot);
                d_[i * n_ + j] = d_[j * n_ + i] = dist;
            }
        sigma_.assign(n_, 0.0);
        const std::size_t k_eff = std::min(K, n_ - 1);
        for (std::size_t j = 0; j < n_; ++j) {
            std::vector<double> others;
            for (std::size_t i = 0; i < n_; ++i)
                if (i != j) others.push_back(distance(i, j));
            std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k_eff), others.end());
            double sum = 0;
            for (std::size_t k = 0; k < k_eff; ++k) sum += others[k];
            sigma_[j] = 1.0 / (sum + kEpsilon);
        }
        centroid_distance_.assign(n_, 0.0);
        std::vector<double> c(dim, 0.0);
        for (const auto& r : unit)
            for (std::size_t k = 0; k < dim; ++k) c[k] += r[k] / static_cast<double>(n_);
        double cn = 0;
        for (double x : c) cn += x * x;
        cn = std::sqrt(cn);
        for (std::size_t i = 0; i < n_; ++i) {
            double dot = 0;
            for (std::size_t k = 0; k < dim; ++k) dot += unit[i][k] * c[k];
            centroid_distance_[i] = cn > 0 ? 1.0 - dot / cn : 1.0;
        }
    }

    std::size_t size() const { return n_; }
    double distance(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    double sigma(std::size_t j) const { return sigma_[j]; }
    double centroid_distance(std::size_t i) const { return centroid_distance_[i]; }

    /// v(x) = sum over selected x_j of (1/pi(j))^k1 * sigma(x_j)^k2 * d(x, x_j),
    /// pi(j) the 1-based rank of x_j among the selected by distance to x
    /// (ties by index).
    double novelty(std::size_t x, const std::vector<std::size_t>& selected, double kappa1, double kappa2) const {
        std::vector<std::size_t> ranked = selected;
        std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
            const double da = distance(x, a), db = distance(x, b);
            return da != db ? da < db : a < b;
        });
        double v = 0;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            const std::size_t j = ranked[r];
            const double w = 1.0 / static_cast<double>(r + 1);
            v += std::pow(w, kappa1) * std::pow(sigma(j), kappa2) * distance(x, j);
        }
        return v;
    }

private:
    std::size_t n_;
    std::vector<double> d_;
    std::vector<double> sigma_;
    std::vector<double> centroid_distance_;
};

/// Greedy NovelSum selection. The first pick is the point farthest from the
/// corpus centroid; later picks maximize novelty against the selected set.
/// Ties go to the smaller index.
inline std::vector<std::size_t> novelsum_select(const std::vector<std::vector<double>>& rows, const SelectionConfig& cfg) {
    cfg.validate(rows.size());
    NoveltyIndex idx(rows, cfg.K);
    std::vector<std::size_t> selected;
    std::vector<bool> taken(idx.size(), false);
    if (cfg.budget == 0) return selected;
    std::size_t first = 0;
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (idx.centroid_distance(i) > idx.centroid_distance(first)) first = i;
    selected.push_back(first);
    taken[first] = true;
    std::vector<double> scores(idx.size());
    while (selected.size() < cfg.budget) {
        parallel_for(idx.size(), cfg.jobs, [&](std::size_t i) {
            scores[i] = taken[i] ? -1.0 : idx.novelty(i, selected, cfg.kappa1, cfg.kappa2);
        });
        std::size_t best = idx.size();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (taken[i]) continue;
            if (best == idx.size() || scores[i] > scores[best]) best = i;
        }
        selected.push_back(best);
        taken[best] = true;
    }
    return selected;
}

struct EmbeddingMatrix {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
};

/// Row-major float32 matrix plus a JSON sidecar {"ids": [...], "dims": [rows, cols]}.
inline EmbeddingMatrix read_embedding_matrix(const std::string& bin_path, const std::string& sidecar_path) {
    std::ifstream side(sidecar_path);
    require(side.good(), ErrorKind::InvalidArgument, "cannot open " + sidecar_path);
    json meta = json::parse(side, nullptr, false);
    require(!meta.is_discarded() && meta.contains("ids") && meta.contains("dims"), ErrorKind::ParseError,
            "sidecar needs ids and dims");
    EmbeddingMatrix m;
    m.ids = meta["ids"].get<std::vector<std::string>>();
    const auto dims = meta["dims"].get<std::vector<std::size_t>>();
    require(dims.size() == 2 && dims[0] == m.ids.size(), ErrorKind::ShapeMismatch, "dims do not match ids");
    std::ifstream bin(bin_path, std::ios::binary);
    require(bin.good(), ErrorKind::InvalidArgument, "cannot open " + bin_path);
    std::vector<float> buf(dims[0] * dims[1]);
    bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(static_cast<std::size_t>(bin.gcount()) == buf.size() * sizeof(float), ErrorKind::ShapeMismatch,
            "matrix file shorter than dims");
    m.rows.assign(dims[0], std::vector<double>(dims[1]));
    for (std::size_t i = 0; i < dims[0]; ++i)
        for (std::size_t j = 0; j < dims[1]; ++j) m.rows[i][j] = buf[i * dims[1] + j];
    return m;
}

inline void write_embedding_matrix(const EmbeddingMatrix& m, const std::string& bin_path, const std::string& sidecar_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    const std::size_t cols = m.rows.empty() ? 0 : m.rows.front().size();
    for (const auto& r : m.rows)
        for (double x : r) {
            const float f = static_cast<float>(x);
            bin.write(reinterpret_cast<const char*>(&f), sizeof f);
        }
    std::ofstream side(sidecar_path);
    side << json{{"ids", m.ids}, {"dims", {m.rows.size(), cols}}}.dump() << "\n";
}

}  // namespace agentsynth
