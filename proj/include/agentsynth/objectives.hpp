#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "agentsynth/core/error.hpp"

namespace agentsynth {

// ---- GRPO ----

/// (r_i - mean) / std with the population std; a group whose std is below
/// eps_std gets all-zero advantages.
inline std::vector<double> group_advantage(const std::vector<double>& rewards, double eps_std = 1e-8) {
    require(rewards.size() >= 2, ErrorKind::GroupTooSmall, "group of " + std::to_string(rewards.size()));
    const double n = static_cast<double>(rewards.size());
    double mean = 0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> a(rewards.size(), 0.0);
    if (sd < eps_std) return a;
    for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = (rewards[i] - mean) / sd;
    return a;
}

/// exp(l) - l - 1 for l = log(pi_ref / pi_theta).
inline double kl_term(double log_ratio) { return std::expm1(log_ratio) - log_ratio; }

/// Token mean of the per-token estimator.
inline double kl_estimate(const std::vector<double>& log_ratios) {
    require(!log_ratios.empty(), ErrorKind::EmptySeries, "no tokens");
    double s = 0;
    for (double l : log_ratios) {
        require(std::isfinite(l), ErrorKind::InvalidArgument, "non-finite log ratio");
        s += kl_term(l);
    }
    return s / static_cast<double>(log_ratios.size());
}

/// Group mean over outputs of the token mean of
/// min(r A, clip(r, 1-eps, 1+eps) A) - beta * kl. `ratios[i]` and `kl[i]`
/// are per-token values for output i.
inline double grpo_objective(const std::vector<std::vector<double>>& ratios, const std::vector<double>& advantages,
                             double eps_clip, double beta, const std::vector<std::vector<double>>& kl) {
    require(!ratios.empty(), ErrorKind::EmptySeries, "empty group");
    require(ratios.size() == advantages.size() && ratios.size() == kl.size(), ErrorKind::ShapeMismatch,
            "ratios, advantages and kl disagree on group size");
    double total = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        require(!ratios[i].empty(), ErrorKind::EmptySeries, "output " + std::to_string(i) + " has no tokens");
        require(ratios[i].size() == kl[i].size(), ErrorKind::ShapeMismatch, "kl length differs for output " + std::to_string(i));
        double s = 0;
        for (std::size_t l = 0; l < ratios[i].size(); ++l) {
            const double r = ratios[i][l], a = advantages[i];
            const double clipped = std::clamp(r, 1.0 - eps_clip, 1.0 + eps_clip);
            s += std::min(r * a, clipped * a) - beta * kl[i][l];
        }
        total += s / static_cast<double>(ratios[i].size());
    }
    return total / static_cast<double>(ratios.size());
}

/// Same objective with one kl value for every token.
inline double grpo_objective(const std::vector<std::vector<double>>& ratios, const std::vector<double>& advantages,
                             double eps_clip, double beta, double kl) {
    std::vector<std::vector<double>> per_token;
    for (const auto& r : ratios) per_token.emplace_back(r.size(), kl);
    return grpo_objective(ratios, advantages, eps_clip, beta, per_token);
}

// ---- chiPO regularizers ----

enum class Segment { think, action, other };

struct TokenEntropy {
    double entropy = 0.0;
    Segment segment = Segment::other;
};

/// series[b][h][i]: sample b, step h, token i.
using TokenEntropySeries = std::vector<std::vector<std::vector<TokenEntropy>>>;

/// Labels token strings by the enclosing <think> or <action>/<tool_call>
/// span. Tag tokens themselves are `other`.
inline std::vector<Segment> segment_labels(const std::vector<std::string>& tokens) {
    std::vector<Segment> out;
    Segment cur = Segment::other;
    for (const auto& t : tokens) {
        if (t == "<think>") {
            cur = Segment::think;
            out.push_back(Segment::other);
        } else if (t == "<action>" || t == "<tool_call>") {
            cur = Segment::action;
            out.push_back(Segment::other);
        } else if (t == "</think>" || t == "</action>" || t == "</tool_call>") {
            cur = Segment::other;
            out.push_back(Segment::other);
        } else {
            out.push_back(cur);
        }
    }
    return out;
}

namespace detail {

/// (1/B) sum_b (1/H) sum_h (1/|o_bh|) sum_i f(token).
template <typename F>
double nested_mean(const TokenEntropySeries& s, F&& f) {
    require(!s.empty(), ErrorKind::EmptySeries, "no samples");
    double over_b = 0;
    for (std::size_t b = 0; b < s.size(); ++b) {
        require(!s[b].empty(), ErrorKind::EmptySeries, "sample " + std::to_string(b) + " has no steps");
        double over_h = 0;
        for (std::size_t h = 0; h < s[b].size(); ++h) {
            const auto& step = s[b][h];
            require(!step.empty(), ErrorKind::EmptySeries,
                    "sample " + std::to_string(b) + " step " + std::to_string(h) + " has no tokens");
            double over_i = 0;
            for (const auto& tok : step) {
                require(tok.entropy >= 0, ErrorKind::InvalidArgument, "negative entropy");
                over_i += f(tok);
            }
            over_h += over_i / static_cast<double>(step.size());
        }
        over_b += over_h / static_cast<double>(s[b].size());
    }
    return over_b / static_cast<double>(s.size());
}

}  // namespace detail

inline double token_entropy_objective(const TokenEntropySeries& s) {
    return detail::nested_mean(s, [](const TokenEntropy& t) { return t.entropy; });
}

struct SmoothingConfig {
    double alpha_low_think = 0.5;
    double alpha_high_think = 2.0;
    double alpha_low_action = 0.8;
    double alpha_high_action = 1.25;
    double rho = -0.2;
    double mean_think = 1.0;   // running mean entropy of think tokens
    double mean_action = 1.0;  // running mean entropy of action tokens

    void validate() const {
        require(alpha_low_think > 0 && alpha_low_action > 0 && alpha_high_action > 0 && alpha_high_think > 0,
                ErrorKind::BadAlphaOrdering, "alphas must be positive");
        require(alpha_low_think < alpha_low_action && alpha_low_action < 1.0 && 1.0 < alpha_high_action &&
                    alpha_high_action < alpha_high_think,
                ErrorKind::BadAlphaOrdering, "need low_think < low_action < 1 < high_action < high_think");
    }
};

/// Running-mean update for the think/action entropy statistics.
inline double ema_update(double mean, double value, double decay = 0.99) { return decay * mean + (1.0 - decay) * value; }

inline double smoothing_penalty(const TokenEntropy& t, const SmoothingConfig& c) {
    switch (t.segment) {
        case Segment::think:
            if (c.alpha_low_think * c.mean_think <= t.entropy && t.entropy <= c.alpha_high_think * c.mean_think) return 0.0;
            return c.rho;
        case Segment::action:
            if (c.alpha_low_action * c.mean_action <= t.entropy && t.entropy <= c.alpha_high_action * c.mean_action)
                return 0.0;
            return c.rho;
        case Segment::other: return c.rho;
    }
    return c.rho;
}

inline double smoothing_objective(const TokenEntropySeries& s, const SmoothingConfig& c) {
    c.validate();
    return detail::nested_mean(s, [&](const TokenEntropy& t) { return smoothing_penalty(t, c); });
}

/// gamma * H(think | prompt) - H(action | think); the constant term is
/// dropped.
inline double ib_objective(double h_think_given_prompt, double h_action_given_think, double gamma = 1.0) {
    require(h_think_given_prompt >= 0 && h_action_given_think >= 0, ErrorKind::InvalidArgument, "entropies must be nonnegative");
    return gamma * h_think_given_prompt - h_action_given_think;
}

inline double chipo_objective(double j_grpo, double j_token, double j_smooth, double j_ib, double lambda1, double lambda2,
                              double lambda3) {
    for (double l : {lambda1, lambda2, lambda3})
        require(l > 0.0 && l < 1.0, ErrorKind::LambdaOutOfRange, "lambda " + std::to_string(l) + " not in (0, 1)");
    return j_grpo + lambda1 * j_token + lambda2 * j_smooth + lambda3 * j_ib;
}

// ---- MoE balance ----

/// N_E * sum_i f_i * P_i.
inline double lbl_global(const std::vector<double>& f, const std::vector<double>& p) {
    require(!f.empty() && f.size() == p.size(), ErrorKind::ShapeMismatch, "f and P must have one entry per expert");
    double sf = 0, s = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        require(p[i] >= 0 && p[i] <= 1, ErrorKind::InvalidArgument, "P_i outside [0, 1]");
        sf += f[i];
        s += f[i] * p[i];
    }
    require(std::abs(sf - 1.0) <= 1e-9, ErrorKind::NotNormalized, "dispatch fractions sum to " + std::to_string(sf));
    return static_cast<double>(f.size()) * s;
}

inline double logsumexp(const std::vector<double>& row) {
    require(!row.empty(), ErrorKind::ShapeMismatch, "empty logit row");
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0;
    for (double x : row) s += std::exp(x - m);
    return m + std::log(s);
}

/// (1/T) sum_t (logsumexp_j m_tj)^2.
inline double z_loss(const std::vector<std::vector<double>>& logits) {
    require(!logits.empty(), ErrorKind::EmptySeries, "no tokens");
    const std::size_t width = logits.front().size();
    double s = 0;
    for (const auto& row : logits) {
        require(row.size() == width, ErrorKind::ShapeMismatch, "ragged logit matrix");
        const double z = logsumexp(row);
        s += z * z;
    }
    return s / static_cast<double>(logits.size());
}

/// L_sft + mu1 * L_gbl + mu2 * L_z.
inline double moe_loss(double l_sft, double l_gbl, double l_z, double mu1, double mu2) {
    return l_sft + mu1 * l_gbl + mu2 * l_z;
}

/// (max load - mean load) / mean load.
inline double max_vio(const std::vector<double>& loads) {
    require(!loads.empty(), ErrorKind::ZeroLoad, "no experts");
    double sum = 0, mx = -std::numeric_limits<double>::infinity();
    for (double l : loads) {
        require(l >= 0, ErrorKind::InvalidArgument, "negative load");
        sum += l;
        mx = std::max(mx, l);
    }
    require(sum > 0, ErrorKind::ZeroLoad, "total load is zero");
    const double mean = sum / static_cast<double>(loads.size());
    return (mx - mean) / mean;
}

/// Dispatch fractions and mean softmax probabilities from router logits
/// with top-k routing (ties to the lower expert index).
struct RouterStats {
    std::vector<double> f;
    std::vector<double> p;
    std::vector<double> loads;
};

inline RouterStats router_stats(const std::vector<std::vector<double>>& logits, std::size_t top_k = 1) {
    require(!logits.empty(), ErrorKind::EmptySeries, "no tokens");
    const std::size_t ne = logits.front().size();
    require(top_k >= 1 && top_k <= ne, ErrorKind::InvalidArgument, "top_k out of range");
    RouterStats s{std::vector<double>(ne, 0.0), std::vector<double>(ne, 0.0), std::vector<double>(ne, 0.0)};
    for (const auto& row : logits) {
        require(row.size() == ne, ErrorKind::ShapeMismatch, "ragged logit matrix");
        const double z = logsumexp(row);
        for (std::size_t j = 0; j < ne; ++j) s.p[j] += std::exp(row[j] - z);
        std::vector<std::size_t> order(ne);
        for (std::size_t j = 0; j < ne; ++j) order[j] = j;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        for (std::size_t k = 0; k < top_k; ++k) s.loads[order[k]] += 1.0;
    }
    const double t = static_cast<double>(logits.size());
    for (std::size_t j = 0; j < ne; ++j) {
        s.p[j] /= t;
        s.f[j] = s.loads[j] / (t * static_cast<double>(top_k));
    }
    return s;
}

}  // namespace agentsynth
