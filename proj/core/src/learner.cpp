#include "wavecast/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wavecast/rng.hpp"

namespace wavecast {

void LearnerConfig::validate() const {
    if (mode == LearnerMode::FtrlTheory) {
        if (!(eta > 0.0)) throw std::invalid_argument("learner: eta must be > 0");
        if (!(radius > 0.0)) throw std::invalid_argument("learner: radius must be > 0");
        if (inner_iters < 1) throw std::invalid_argument("learner: inner_iters must be >= 1");
        if (!(inner_tol > 0.0)) throw std::invalid_argument("learner: inner_tol must be > 0");
    } else {
        if (!(step_size > 0.0)) throw std::invalid_argument("learner: step_size must be > 0");
        if (ridge_lambda < 0.0) throw std::invalid_argument("learner: ridge_lambda must be >= 0");
    }
}

namespace {

// ---- flat arithmetic over the parameter bundle ----

void flat_apply(PseudoLds& a, const PseudoLds& b, double alpha) {  // a += alpha*b
    for (std::size_t i = 0; i < a.M.size(); ++i) a.M[i] += alpha * b.M[i];
    for (std::size_t i = 0; i < a.N.size(); ++i) a.N[i] += alpha * b.N[i];
    for (std::size_t i = 0; i < a.beta.size(); ++i) a.beta[i] += alpha * b.beta[i];
    for (std::size_t i = 0; i < a.P.size(); ++i) a.P[i] += alpha * b.P[i];
}

double flat_dot(const PseudoLds& a, const PseudoLds& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.M.size(); ++i) s += a.M[i] * b.M[i];
    for (std::size_t i = 0; i < a.N.size(); ++i) s += a.N[i] * b.N[i];
    for (std::size_t i = 0; i < a.beta.size(); ++i) s += a.beta[i] * b.beta[i];
    for (std::size_t i = 0; i < a.P.size(); ++i) s += a.P[i] * b.P[i];
    return s;
}

void flat_scale(PseudoLds& a, double alpha) {
    for (double& v : a.M) v *= alpha;
    for (double& v : a.N) v *= alpha;
    for (double& v : a.beta) v *= alpha;
    for (double& v : a.P) v *= alpha;
}

// ---- shrinkage operator behind the ball projection ----

void shrink_groups(PseudoLds& t, double lambda) {
    const PseudoDims& d = t.dims;
    const std::size_t slice = d.k * d.m * d.n;
    auto shrink_slices = [&](Vec& tensor) {
        for (std::size_t p = 0; p < d.W; ++p) {
            double s = 0.0;
            for (std::size_t e = 0; e < slice; ++e) {
                const double v = tensor[p * slice + e];
                s += v * v;
            }
            s = std::sqrt(s);
            const double f = (s > lambda) ? (1.0 - lambda / s) : 0.0;
            for (std::size_t e = 0; e < slice; ++e) tensor[p * slice + e] *= f;
        }
    };
    if (slice > 0) {
        shrink_slices(t.M);
        shrink_slices(t.N);
    }
    if (d.matrix_beta) {
        const std::size_t b = d.m * d.m;
        for (std::size_t u = 0; u < d.tau; ++u) {
            double s = 0.0;
            for (std::size_t e = 0; e < b; ++e) {
                const double v = t.beta[u * b + e];
                s += v * v;
            }
            s = std::sqrt(s);
            const double f = (s > lambda) ? (1.0 - lambda / s) : 0.0;
            for (std::size_t e = 0; e < b; ++e) t.beta[u * b + e] *= f;
        }
    } else {
        for (double& v : t.beta) {
            const double a = std::fabs(v);
            v = (a > lambda) ? (v > 0 ? a - lambda : lambda - a) : 0.0;
        }
    }
    double s = 0.0;
    for (double v : t.P) s += v * v;
    s = std::sqrt(s);
    const double f = (s > lambda) ? (1.0 - lambda / s) : 0.0;
    for (double& v : t.P) v *= f;
}

}  // namespace

PseudoLds project_onto_ball(const PseudoLds& theta, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("project_onto_ball: radius must be > 0");
    const double nrm = composite_norm(theta);
    if (nrm <= radius) return theta;

    const PseudoDims& d = theta.dims;
    const std::size_t groups = 2 * d.W + d.tau + 1;
    double hi = nrm / double(groups);
    auto norm_at = [&](double lambda) {
        PseudoLds t = theta;
        shrink_groups(t, lambda);
        return composite_norm(t);
    };
    while (norm_at(hi) > radius) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        const double nm = norm_at(mid);
        if (nm > radius) {
            lo = mid;
        } else {
            hi = mid;
            if (radius - nm <= 1e-9 * radius) break;
        }
    }
    PseudoLds out = theta;
    shrink_groups(out, hi);  // the feasible side of the bracket
    return out;
}

// ---- packed row representation for the quadratic sufficient statistics ----

namespace {

struct RowLayout {
    std::size_t conv = 0;   // W*k*n
    std::size_t xl = 0;     // tau*n
    std::size_t yl = 0;     // tau*m in matrix mode, else 0
    std::size_t dr = 0;
    std::size_t m = 0;
    std::size_t tau_s = 0;  // scalar beta lags tracked separately

    static RowLayout of(const PseudoDims& d) {
        RowLayout l;
        l.conv = d.conv_block();
        l.xl = d.tau * d.n;
        l.yl = d.matrix_beta ? d.tau * d.m : 0;
        l.dr = 2 * l.conv + l.xl + l.yl;
        l.m = d.m;
        l.tau_s = d.matrix_beta ? 0 : d.tau;
        return l;
    }
};

void pack_row_features(const RowLayout& l, const FeatureVector& f, Vec& g) {
    g.resize(l.dr);
    std::copy(f.cosf.begin(), f.cosf.end(), g.begin());
    std::copy(f.sinf.begin(), f.sinf.end(), g.begin() + l.conv);
    std::copy(f.xlags.begin(), f.xlags.end(), g.begin() + 2 * l.conv);
    if (l.yl > 0)
        std::copy(f.ylags.begin(), f.ylags.end(), g.begin() + 2 * l.conv + l.xl);
}

// theta rows: row j holds (M | N | P | matrix-beta) coefficients facing g
void pack_theta_rows(const PseudoLds& t, const RowLayout& l, Vec& rows) {
    const PseudoDims& d = t.dims;
    rows.assign(l.m * l.dr, 0.0);
    const std::size_t blocks = d.W * d.k;
    for (std::size_t j = 0; j < l.m; ++j) {
        double* row = rows.data() + j * l.dr;
        for (std::size_t ph = 0; ph < blocks; ++ph)
            for (std::size_t i = 0; i < d.n; ++i) {
                row[ph * d.n + i] = t.M[(ph * d.m + j) * d.n + i];
                row[l.conv + ph * d.n + i] = t.N[(ph * d.m + j) * d.n + i];
            }
        for (std::size_t lag = 0; lag < d.tau; ++lag)
            for (std::size_t i = 0; i < d.n; ++i)
                row[2 * l.conv + lag * d.n + i] = t.P[(lag * d.m + j) * d.n + i];
        if (d.matrix_beta)
            for (std::size_t u = 0; u < d.tau; ++u)
                for (std::size_t j2 = 0; j2 < d.m; ++j2)
                    row[2 * l.conv + l.xl + u * d.m + j2] =
                        t.beta[(u * d.m + j) * d.m + j2];
    }
}

void unpack_theta_rows(const Vec& rows, const RowLayout& l, PseudoLds& t) {
    const PseudoDims& d = t.dims;
    const std::size_t blocks = d.W * d.k;
    for (std::size_t j = 0; j < l.m; ++j) {
        const double* row = rows.data() + j * l.dr;
        for (std::size_t ph = 0; ph < blocks; ++ph)
            for (std::size_t i = 0; i < d.n; ++i) {
                t.M[(ph * d.m + j) * d.n + i] = row[ph * d.n + i];
                t.N[(ph * d.m + j) * d.n + i] = row[l.conv + ph * d.n + i];
            }
        for (std::size_t lag = 0; lag < d.tau; ++lag)
            for (std::size_t i = 0; i < d.n; ++i)
                t.P[(lag * d.m + j) * d.n + i] = row[2 * l.conv + lag * d.n + i];
        if (d.matrix_beta)
            for (std::size_t u = 0; u < d.tau; ++u)
                for (std::size_t j2 = 0; j2 < d.m; ++j2)
                    t.beta[(u * d.m + j) * d.m + j2] =
                        row[2 * l.conv + l.xl + u * d.m + j2];
    }
}

// gradient of the regularizer R(theta)
PseudoLds regularizer_gradient(const PseudoLds& t) {
    const PseudoDims& d = t.dims;
    const RegularizerExponents e = regularizer_exponents(d);
    PseudoLds g = PseudoLds::zeros(d);

    auto grad_mixed = [&](const Vec& src, Vec& dst, double q) {
        const std::size_t slice = src.size() / d.W;
        if (slice == 0) return;
        Vec snorm(d.W, 0.0);
        double S = 0.0;
        for (std::size_t p = 0; p < d.W; ++p) {
            double s = 0.0;
            for (std::size_t i = 0; i < slice; ++i) {
                const double v = src[p * slice + i];
                s += v * v;
            }
            snorm[p] = std::sqrt(s);
            S += std::pow(snorm[p], q);
        }
        if (S == 0.0) return;
        const double outer = std::pow(S, 2.0 / q - 1.0);
        for (std::size_t p = 0; p < d.W; ++p) {
            if (snorm[p] < 1e-150) continue;
            const double coeff = 2.0 * outer * std::pow(snorm[p], q - 2.0);
            for (std::size_t i = 0; i < slice; ++i)
                dst[p * slice + i] = coeff * src[p * slice + i];
        }
    };
    grad_mixed(t.M, g.M, e.q);
    grad_mixed(t.N, g.N, e.q);

    if (d.matrix_beta) {
        const std::size_t b = d.m * d.m;
        Vec snorm(d.tau, 0.0);
        double S = 0.0;
        for (std::size_t u = 0; u < d.tau; ++u) {
            double s = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                const double v = t.beta[u * b + i];
                s += v * v;
            }
            snorm[u] = std::sqrt(s);
            S += std::pow(snorm[u], e.q_prime);
        }
        if (S > 0.0) {
            const double outer = std::pow(S, 2.0 / e.q_prime - 1.0);
            for (std::size_t u = 0; u < d.tau; ++u) {
                if (snorm[u] < 1e-150) continue;
                const double coeff = 2.0 * outer * std::pow(snorm[u], e.q_prime - 2.0);
                for (std::size_t i = 0; i < b; ++i)
                    g.beta[u * b + i] = coeff * t.beta[u * b + i];
            }
        }
    } else {
        double S = 0.0;
        for (double v : t.beta) S += std::pow(std::fabs(v), e.q_prime);
        if (S > 0.0) {
            const double outer = std::pow(S, 2.0 / e.q_prime - 1.0);
            for (std::size_t u = 0; u < d.tau; ++u) {
                const double a = std::fabs(t.beta[u]);
                if (a < 1e-150) continue;
                g.beta[u] = 2.0 * outer * std::pow(a, e.q_prime - 1.0) *
                            (t.beta[u] > 0 ? 1.0 : -1.0);
            }
        }
    }
    for (std::size_t i = 0; i < t.P.size(); ++i) g.P[i] = 2.0 * t.P[i];
    return g;
}

}  // namespace

struct LearnerState::Stats {
    RowLayout layout;
    Vec G;   // dr x dr
    Vec Y;   // (tau_s + 1) blocks of m x dr; block 0 is the target block
    Vec S;   // (tau_s + 1)^2 scalar products
    mutable Vec scratch_rows, scratch_tg;

    explicit Stats(const RowLayout& l) : layout(l) {
        G.assign(l.dr * l.dr, 0.0);
        Y.assign((l.tau_s + 1) * l.m * l.dr, 0.0);
        S.assign((l.tau_s + 1) * (l.tau_s + 1), 0.0);
    }

    double s_at(std::size_t u, std::size_t v) const { return S[u * (layout.tau_s + 1) + v]; }
    const double* y_block(std::size_t u) const { return Y.data() + u * layout.m * layout.dr; }

    void add(const Vec& g, const FeatureVector& f, const Vec& y) {
        const std::size_t dr = layout.dr;
        for (std::size_t i = 0; i < dr; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            double* grow = G.data() + i * dr;
            for (std::size_t j2 = 0; j2 < dr; ++j2) grow[j2] += gi * g[j2];
        }
        auto lag_vec = [&](std::size_t u) -> const double* {
            return (u == 0) ? y.data() : f.ylags.data() + (u - 1) * layout.m;
        };
        for (std::size_t u = 0; u <= layout.tau_s; ++u) {
            const double* yu = lag_vec(u);
            double* block = Y.data() + u * layout.m * dr;
            for (std::size_t j = 0; j < layout.m; ++j) {
                const double w = yu[j];
                if (w == 0.0) continue;
                double* row = block + j * dr;
                for (std::size_t c = 0; c < dr; ++c) row[c] += w * g[c];
            }
            for (std::size_t v = u; v <= layout.tau_s; ++v) {
                const double* yv = lag_vec(v);
                double s = 0.0;
                for (std::size_t j = 0; j < layout.m; ++j) s += yu[j] * yv[j];
                S[u * (layout.tau_s + 1) + v] += s;
                if (v != u) S[v * (layout.tau_s + 1) + u] += s;
            }
        }
    }

    // cumulative squared loss at theta; optionally also its gradient
    double evaluate(const PseudoLds& theta, PseudoLds* grad_out) const {
        const std::size_t dr = layout.dr, m = layout.m;
        pack_theta_rows(theta, layout, scratch_rows);
        // tg = theta_rows * G  (m x dr)
        scratch_tg.assign(m * dr, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double* trow = scratch_rows.data() + j * dr;
            double* orow = scratch_tg.data() + j * dr;
            for (std::size_t i = 0; i < dr; ++i) {
                const double ti = trow[i];
                if (ti == 0.0) continue;
                const double* grow = G.data() + i * dr;
                for (std::size_t c = 0; c < dr; ++c) orow[c] += ti * grow[c];
            }
        }
        double quad = 0.0;
        for (std::size_t e = 0; e < m * dr; ++e) quad += scratch_tg[e] * scratch_rows[e];

        auto inner_with = [&](std::size_t u) {
            const double* block = y_block(u);
            double s = 0.0;
            for (std::size_t e = 0; e < m * dr; ++e) s += block[e] * scratch_rows[e];
            return s;
        };
        const double y0_inner = inner_with(0);
        quad -= 2.0 * y0_inner;
        quad += s_at(0, 0);
        for (std::size_t u = 1; u <= layout.tau_s; ++u) {
            const double bu = theta.beta[u - 1];
            quad += 2.0 * bu * inner_with(u);
            quad -= 2.0 * bu * s_at(0, u);
            for (std::size_t v = 1; v <= layout.tau_s; ++v)
                quad += bu * theta.beta[v - 1] * s_at(u, v);
        }

        if (grad_out != nullptr) {
            Vec grad_rows(m * dr);
            for (std::size_t e = 0; e < m * dr; ++e)
                grad_rows[e] = 2.0 * (scratch_tg[e] - y_block(0)[e]);
            for (std::size_t u = 1; u <= layout.tau_s; ++u) {
                const double bu = theta.beta[u - 1];
                if (bu == 0.0) continue;
                const double* block = y_block(u);
                for (std::size_t e = 0; e < m * dr; ++e) grad_rows[e] += 2.0 * bu * block[e];
            }
            *grad_out = PseudoLds::zeros(theta.dims);
            unpack_theta_rows(grad_rows, layout, *grad_out);
            for (std::size_t v = 1; v <= layout.tau_s; ++v) {
                double gb = inner_with(v) - s_at(0, v);
                for (std::size_t u = 1; u <= layout.tau_s; ++u)
                    gb += theta.beta[u - 1] * s_at(u, v);
                grad_out->beta[v - 1] = 2.0 * gb;
            }
        }
        return quad;
    }
};

LearnerState::LearnerState(const PseudoDims& dims, const LearnerConfig& config)
    : dims_(dims), config_(config), theta_(PseudoLds::zeros(dims)) {
    config_.validate();
    if (config_.mode == LearnerMode::FtrlTheory) {
        const RowLayout layout = RowLayout::of(dims);
        use_stats_ = layout.dr <= config_.stats_dim_cap;
        if (use_stats_) stats_ = std::make_shared<Stats>(layout);
    }
}

double LearnerState::inner_objective(const PseudoLds& theta) const {
    double quad = 0.0;
    if (use_stats_) {
        quad = stats_->evaluate(theta, nullptr);
    } else {
        for (std::size_t i = 0; i < history_features_.size(); ++i)
            quad += loss(theta, history_features_[i], history_targets_[i]);
    }
    return quad + regularizer(theta) / config_.eta;
}

PseudoLds LearnerState::inner_gradient(const PseudoLds& theta) const {
    PseudoLds g = PseudoLds::zeros(dims_);
    if (use_stats_) {
        stats_->evaluate(theta, &g);
    } else {
        for (std::size_t i = 0; i < history_features_.size(); ++i) {
            const PseudoLds gi = gradient(theta, history_features_[i], history_targets_[i]);
            flat_apply(g, gi, 1.0);
        }
    }
    flat_apply(g, regularizer_gradient(theta), 1.0 / config_.eta);
    if (config_.freeze_beta) std::fill(g.beta.begin(), g.beta.end(), 0.0);
    return g;
}

void LearnerState::solve_inner(std::size_t step_label) {
    // probe set: incumbent, zero, and probe_count random feasible points
    Rng rng = Rng(config_.probe_seed).split(step_label);
    PseudoLds best = theta_;
    double best_obj = inner_objective(best);
    {
        const PseudoLds zero = PseudoLds::zeros(dims_);
        const double obj = inner_objective(zero);
        if (obj < best_obj) {
            best_obj = obj;
            best = zero;
        }
    }
    for (std::size_t pr = 0; pr < config_.probe_count; ++pr) {
        PseudoLds cand = PseudoLds::zeros(dims_);
        for (double& v : cand.M) v = rng.gaussian();
        for (double& v : cand.N) v = rng.gaussian();
        for (double& v : cand.beta) v = rng.gaussian();
        for (double& v : cand.P) v = rng.gaussian();
        if (config_.freeze_beta) std::fill(cand.beta.begin(), cand.beta.end(), 0.0);
        const double nrm = composite_norm(cand);
        if (nrm == 0.0) continue;
        flat_scale(cand, config_.radius * rng.next_unit() / nrm);
        const double obj = inner_objective(cand);
        if (obj < best_obj) {
            best_obj = obj;
            best = cand;
        }
    }

    PseudoLds theta = std::move(best);
    double obj = best_obj;
    objective_path_.clear();
    objective_path_.push_back(obj);
    PseudoLds prev_theta = theta, prev_grad = PseudoLds::zeros(dims_);
    bool have_prev = false;
    double step = 1.0;
    bool converged = false;
    int iters = 0;
    for (; iters < config_.inner_iters; ++iters) {
        PseudoLds g = inner_gradient(theta);
        const double gnorm2 = flat_dot(g, g);
        if (gnorm2 == 0.0) {
            converged = true;
            break;
        }
        if (have_prev) {
            // Barzilai-Borwein step from the last accepted move
            PseudoLds dth = theta;
            flat_apply(dth, prev_theta, -1.0);
            PseudoLds dg = g;
            flat_apply(dg, prev_grad, -1.0);
            const double num = flat_dot(dth, dth);
            const double den = flat_dot(dth, dg);
            if (den > 0.0 && num > 0.0)
                step = std::clamp(num / den, 1e-14, 1e12);
            else
                step = std::min(step * 4.0, 1e12);
        }
        prev_theta = theta;
        prev_grad = g;

        double trial_obj = obj;
        PseudoLds trial = theta;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            trial = theta;
            flat_apply(trial, g, -step);
            trial = project_onto_ball(trial, config_.radius);
            trial_obj = inner_objective(trial);
            if (trial_obj <= obj) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            converged = true;  // no descent direction left at this scale
            break;
        }
        const double rel = (obj - trial_obj) / std::max(1.0, std::fabs(obj));
        theta = std::move(trial);
        obj = trial_obj;
        objective_path_.push_back(obj);
        have_prev = true;
        if (rel <= config_.inner_tol) {
            converged = true;
            ++iters;
            break;
        }
    }

    theta_ = std::move(theta);
    diagnostics_.push_back({t_, obj, composite_norm(theta_), iters, converged});
}

void LearnerState::resolve() {
    if (config_.mode != LearnerMode::FtrlTheory)
        throw std::logic_error("resolve: learner not in ftrl_theory mode");
    solve_inner(t_);
}

void ftrl_step(LearnerState& state, const FeatureVector& f, const Vec& y_true) {
    if (state.config_.mode != LearnerMode::FtrlTheory)
        throw std::logic_error("ftrl_step: learner not in ftrl_theory mode");
    state.t_ += 1;
    if (state.use_stats_) {
        Vec g;
        pack_row_features(state.stats_->layout, f, g);
        state.stats_->add(g, f, y_true);
    } else {
        state.history_features_.push_back(f);
        state.history_targets_.push_back(y_true);
    }
    state.solve_inner(state.t_);
}

void ridge_step(LearnerState& state, const FeatureVector& f, const Vec& y_true) {
    if (state.config_.mode != LearnerMode::RidgePractical)
        throw std::logic_error("ridge_step: learner not in ridge_practical mode");
    state.t_ += 1;
    const LearnerConfig& cfg = state.config_;

    const double step_loss = loss(state.theta_, f, y_true);
    PseudoLds g = gradient(state.theta_, f, y_true);
    if (cfg.ridge_lambda > 0.0) flat_apply(g, state.theta_, 2.0 * cfg.ridge_lambda);
    if (cfg.freeze_beta) std::fill(g.beta.begin(), g.beta.end(), 0.0);

    double step = cfg.step_size;
    switch (cfg.schedule) {
        case StepSchedule::Constant:
            break;
        case StepSchedule::InvSqrt:
            step /= std::sqrt(double(state.t_));
            break;
        case StepSchedule::Nlms: {
            double f2 = 0.0;
            for (double v : f.cosf) f2 += v * v;
            for (double v : f.sinf) f2 += v * v;
            for (double v : f.xlags) f2 += v * v;
            for (double v : f.ylags) f2 += v * v;
            step /= 1.0 + f2;
            break;
        }
    }
    flat_apply(state.theta_, g, -step);
    if (!state.theta_.all_finite())
        throw std::runtime_error("ridge_step: non-finite parameters (diverged step size)");
    state.diagnostics_.push_back(
        {state.t_, step_loss, composite_norm(state.theta_), 1, true});
}

void LearnerState::observe(const FeatureVector& f, const Vec& y_true) {
    if (config_.mode == LearnerMode::FtrlTheory)
        ftrl_step(*this, f, y_true);
    else
        ridge_step(*this, f, y_true);
}

double regret_accounting(const std::vector<Vec>& predictions,
                         const std::vector<Vec>& comparator_predictions,
                         const std::vector<Vec>& truths) {
    if (predictions.size() != truths.size() || comparator_predictions.size() != truths.size())
        throw std::invalid_argument("regret_accounting: length mismatch");
    double ours = 0.0, theirs = 0.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
        if (predictions[t].size() != truths[t].size() ||
            comparator_predictions[t].size() != truths[t].size())
            throw std::invalid_argument("regret_accounting: output dim mismatch");
        for (std::size_t j = 0; j < truths[t].size(); ++j) {
            const double a = predictions[t][j] - truths[t][j];
            const double b = comparator_predictions[t][j] - truths[t][j];
            ours += a * a;
            theirs += b * b;
        }
    }
    return ours - theirs;
}

}  // namespace wavecast
