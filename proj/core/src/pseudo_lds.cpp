#include "wavecast/pseudo_lds.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace wavecast {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct TrigTable {
    Vec cos_w, sin_w;
    explicit TrigTable(std::size_t W) : cos_w(W), sin_w(W) {
        for (std::size_t j = 0; j < W; ++j) {
            cos_w[j] = std::cos(kTwoPi * double(j) / double(W));
            sin_w[j] = std::sin(kTwoPi * double(j) / double(W));
        }
    }
};

}  // namespace

PseudoLds PseudoLds::zeros(const PseudoDims& dims) {
    PseudoLds t;
    t.dims = dims;
    t.M.assign(dims.tensor_size(), 0.0);
    t.N.assign(dims.tensor_size(), 0.0);
    t.beta.assign(dims.beta_size(), 0.0);
    t.P.assign(dims.p_size(), 0.0);
    return t;
}

void PseudoLds::check_shapes() const {
    if (dims.tau < 1) throw std::invalid_argument("pseudo_lds: tau must be >= 1");
    if (dims.W < 1) throw std::invalid_argument("pseudo_lds: W must be >= 1");
    if (M.size() != dims.tensor_size() || N.size() != dims.tensor_size() ||
        beta.size() != dims.beta_size() || P.size() != dims.p_size())
        throw std::invalid_argument("pseudo_lds: parameter shapes inconsistent with dims");
}

bool PseudoLds::all_finite() const {
    auto ok = [](const Vec& v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    return ok(M) && ok(N) && ok(beta) && ok(P);
}

double& PseudoLds::m_at(std::size_t p, std::size_t h, std::size_t j, std::size_t i) {
    return M[((p * dims.k + h) * dims.m + j) * dims.n + i];
}
double& PseudoLds::n_at(std::size_t p, std::size_t h, std::size_t j, std::size_t i) {
    return N[((p * dims.k + h) * dims.m + j) * dims.n + i];
}
double& PseudoLds::p_at(std::size_t lag, std::size_t j, std::size_t i) {
    return P[(lag * dims.m + j) * dims.n + i];
}

SeriesHistory::SeriesHistory(std::size_t n, std::size_t m)
    : n_(n), m_(m), zero_x_(n, 0.0), zero_y_(m, 0.0) {}

void SeriesHistory::push_input(Vec x) {
    if (x.size() != n_) throw std::invalid_argument("history: input dim mismatch");
    if (xs_.size() != ys_.size())
        throw std::logic_error("history: push_input before previous output observed");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("history: non-finite input");
    xs_.push_back(std::move(x));
}

void SeriesHistory::push_output(Vec y) {
    if (y.size() != m_) throw std::invalid_argument("history: output dim mismatch");
    if (ys_.size() + 1 != xs_.size())
        throw std::logic_error("history: push_output without matching input");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("history: non-finite output");
    ys_.push_back(std::move(y));
}

const Vec& SeriesHistory::x(std::int64_t s) const {
    if (s <= 0) return zero_x_;
    if (std::size_t(s) > xs_.size()) throw std::logic_error("history: input index in the future");
    return xs_[std::size_t(s) - 1];
}

const Vec& SeriesHistory::y(std::int64_t s) const {
    if (s <= 0) return zero_y_;
    if (std::size_t(s) > ys_.size())
        throw std::logic_error("history: output access violates causality");
    return ys_[std::size_t(s) - 1];
}

namespace {

void fill_lags(const SeriesHistory& history, const PseudoDims& dims, FeatureVector& f) {
    const std::int64_t t = std::int64_t(history.steps());
    f.xlags.assign(dims.tau * dims.n, 0.0);
    f.ylags.assign(dims.tau * dims.m, 0.0);
    for (std::size_t lag = 0; lag < dims.tau; ++lag) {
        const Vec& x = history.x(t - std::int64_t(lag));
        for (std::size_t i = 0; i < dims.n; ++i) f.xlags[lag * dims.n + i] = x[i];
    }
    for (std::size_t u = 1; u <= dims.tau; ++u) {
        const Vec& y = history.y(t - std::int64_t(u));
        for (std::size_t j = 0; j < dims.m; ++j) f.ylags[(u - 1) * dims.m + j] = y[j];
    }
}

void check_bank(const FilterBank& bank, const PseudoDims& dims) {
    if (dims.k != bank.k)
        throw std::invalid_argument("compute_features: bank.k != dims.k");
}

}  // namespace

FeatureVector compute_features(const SeriesHistory& history, const FilterBank& bank,
                               const PseudoDims& dims) {
    if (history.steps() < 1) throw std::invalid_argument("compute_features: empty history");
    if (history.input_dim() != dims.n || history.output_dim() != dims.m)
        throw std::invalid_argument("compute_features: history dims mismatch");
    check_bank(bank, dims);

    FeatureVector f;
    f.cosf.assign(dims.conv_block(), 0.0);
    f.sinf.assign(dims.conv_block(), 0.0);
    fill_lags(history, dims, f);
    if (dims.k == 0) return f;

    const TrigTable trig(dims.W);
    const std::int64_t t = std::int64_t(history.steps());
    const std::int64_t L = std::int64_t(dims.lag_offset);
    const std::int64_t u_max =
        std::min<std::int64_t>(std::int64_t(bank.T), t - L - 1);
    const std::size_t k = dims.k, n = dims.n, W = dims.W;
    for (std::int64_t u = 1; u <= u_max; ++u) {
        const Vec& x = history.x(t - L - u);
        for (std::size_t p = 0; p < W; ++p) {
            const std::size_t idx = (std::size_t(u) * p) % W;
            const double tc = trig.cos_w[idx];
            const double ts = trig.sin_w[idx];
            double* cdst = f.cosf.data() + p * k * n;
            double* sdst = f.sinf.data() + p * k * n;
            for (std::size_t h = 0; h < k; ++h) {
                const double phi = bank.scaled_filters[h][std::size_t(u) - 1];
                const double wc = tc * phi;
                const double ws = ts * phi;
                for (std::size_t i = 0; i < n; ++i) {
                    cdst[h * n + i] += wc * x[i];
                    sdst[h * n + i] += ws * x[i];
                }
            }
        }
    }
    return f;
}

FeatureBatch::FeatureBatch(const std::vector<Vec>& inputs, const FilterBank& bank,
                           const PseudoDims& dims)
    : dims_(dims), T_(inputs.size()) {
    check_bank(bank, dims);
    const std::size_t block = dims.conv_block();
    cos_store_.assign(T_ * block, 0.0);
    sin_store_.assign(T_ * block, 0.0);
    if (dims.k == 0 || T_ == 0) return;

    const TrigTable trig(dims.W);
    const std::size_t k = dims.k, n = dims.n, W = dims.W;
    Vec residue(W * k * n);
    for (std::size_t t = 1; t <= T_; ++t) {
        std::fill(residue.begin(), residue.end(), 0.0);
        const std::int64_t u_max = std::min<std::int64_t>(
            std::int64_t(bank.T), std::int64_t(t) - std::int64_t(dims.lag_offset) - 1);
        for (std::int64_t u = 1; u <= u_max; ++u) {
            const Vec& x = inputs[std::size_t(std::int64_t(t) - std::int64_t(dims.lag_offset) - u) - 1];
            const std::size_t r = std::size_t(u) % W;
            double* dst = residue.data() + r * k * n;
            for (std::size_t h = 0; h < k; ++h) {
                const double phi = bank.scaled_filters[h][std::size_t(u) - 1];
                for (std::size_t i = 0; i < n; ++i) dst[h * n + i] += phi * x[i];
            }
        }
        double* cdst = cos_store_.data() + (t - 1) * block;
        double* sdst = sin_store_.data() + (t - 1) * block;
        for (std::size_t p = 0; p < W; ++p) {
            for (std::size_t r = 0; r < W; ++r) {
                const std::size_t idx = (r * p) % W;
                const double tc = trig.cos_w[idx];
                const double ts = trig.sin_w[idx];
                const double* src = residue.data() + r * k * n;
                double* cp = cdst + p * k * n;
                double* sp = sdst + p * k * n;
                for (std::size_t e = 0; e < k * n; ++e) {
                    cp[e] += tc * src[e];
                    sp[e] += ts * src[e];
                }
            }
        }
    }
}

FeatureVector FeatureBatch::features_at(std::size_t t, const SeriesHistory& history) const {
    if (t < 1 || t > T_) throw std::invalid_argument("features_at: step out of range");
    if (history.steps() != t)
        throw std::invalid_argument("features_at: history is not at step t");
    FeatureVector f;
    const std::size_t block = dims_.conv_block();
    f.cosf.assign(cos_store_.begin() + (t - 1) * block, cos_store_.begin() + t * block);
    f.sinf.assign(sin_store_.begin() + (t - 1) * block, sin_store_.begin() + t * block);
    fill_lags(history, dims_, f);
    return f;
}

Vec predict(const PseudoLds& theta, const FeatureVector& f) {
    const PseudoDims& d = theta.dims;
    if (f.cosf.size() != d.conv_block() || f.sinf.size() != d.conv_block() ||
        f.xlags.size() != d.tau * d.n || f.ylags.size() != d.tau * d.m)
        throw std::invalid_argument("predict: feature shapes mismatch");
    Vec yhat(d.m, 0.0);

    if (d.matrix_beta) {
        for (std::size_t u = 0; u < d.tau; ++u)
            for (std::size_t j = 0; j < d.m; ++j) {
                double s = 0.0;
                const double* row = theta.beta.data() + (u * d.m + j) * d.m;
                const double* yl = f.ylags.data() + u * d.m;
                for (std::size_t j2 = 0; j2 < d.m; ++j2) s += row[j2] * yl[j2];
                yhat[j] += s;
            }
    } else {
        for (std::size_t u = 0; u < d.tau; ++u) {
            const double b = theta.beta[u];
            if (b == 0.0) continue;
            const double* yl = f.ylags.data() + u * d.m;
            for (std::size_t j = 0; j < d.m; ++j) yhat[j] += b * yl[j];
        }
    }

    for (std::size_t lag = 0; lag < d.tau; ++lag) {
        const double* xl = f.xlags.data() + lag * d.n;
        for (std::size_t j = 0; j < d.m; ++j) {
            const double* row = theta.P.data() + (lag * d.m + j) * d.n;
            double s = 0.0;
            for (std::size_t i = 0; i < d.n; ++i) s += row[i] * xl[i];
            yhat[j] += s;
        }
    }

    const std::size_t blocks = d.W * d.k;
    for (std::size_t ph = 0; ph < blocks; ++ph) {
        const double* cf = f.cosf.data() + ph * d.n;
        const double* sf = f.sinf.data() + ph * d.n;
        for (std::size_t j = 0; j < d.m; ++j) {
            const double* mrow = theta.M.data() + (ph * d.m + j) * d.n;
            const double* nrow = theta.N.data() + (ph * d.m + j) * d.n;
            double s = 0.0;
            for (std::size_t i = 0; i < d.n; ++i) s += mrow[i] * cf[i] + nrow[i] * sf[i];
            yhat[j] += s;
        }
    }
    return yhat;
}

double loss(const PseudoLds& theta, const FeatureVector& f, const Vec& y_true) {
    const Vec yhat = predict(theta, f);
    if (y_true.size() != yhat.size()) throw std::invalid_argument("loss: output dim mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < yhat.size(); ++j) {
        const double r = yhat[j] - y_true[j];
        s += r * r;
    }
    return s;
}

PseudoLds gradient_from_residual(const PseudoLds& theta, const FeatureVector& f,
                                 const Vec& twice_residual) {
    const PseudoDims& d = theta.dims;
    PseudoLds g = PseudoLds::zeros(d);
    const Vec& e2 = twice_residual;

    const std::size_t blocks = d.W * d.k;
    for (std::size_t ph = 0; ph < blocks; ++ph) {
        const double* cf = f.cosf.data() + ph * d.n;
        const double* sf = f.sinf.data() + ph * d.n;
        for (std::size_t j = 0; j < d.m; ++j) {
            const double ej = e2[j];
            if (ej == 0.0) continue;
            double* mrow = g.M.data() + (ph * d.m + j) * d.n;
            double* nrow = g.N.data() + (ph * d.m + j) * d.n;
            for (std::size_t i = 0; i < d.n; ++i) {
                mrow[i] = ej * cf[i];
                nrow[i] = ej * sf[i];
            }
        }
    }

    if (d.matrix_beta) {
        for (std::size_t u = 0; u < d.tau; ++u) {
            const double* yl = f.ylags.data() + u * d.m;
            for (std::size_t j = 0; j < d.m; ++j) {
                double* row = g.beta.data() + (u * d.m + j) * d.m;
                for (std::size_t j2 = 0; j2 < d.m; ++j2) row[j2] = e2[j] * yl[j2];
            }
        }
    } else {
        for (std::size_t u = 0; u < d.tau; ++u) {
            const double* yl = f.ylags.data() + u * d.m;
            double s = 0.0;
            for (std::size_t j = 0; j < d.m; ++j) s += e2[j] * yl[j];
            g.beta[u] = s;
        }
    }

    for (std::size_t lag = 0; lag < d.tau; ++lag) {
        const double* xl = f.xlags.data() + lag * d.n;
        for (std::size_t j = 0; j < d.m; ++j) {
            double* row = g.P.data() + (lag * d.m + j) * d.n;
            for (std::size_t i = 0; i < d.n; ++i) row[i] = e2[j] * xl[i];
        }
    }
    return g;
}

PseudoLds gradient(const PseudoLds& theta, const FeatureVector& f, const Vec& y_true) {
    Vec e2 = predict(theta, f);
    if (y_true.size() != e2.size()) throw std::invalid_argument("gradient: output dim mismatch");
    for (std::size_t j = 0; j < e2.size(); ++j) e2[j] = 2.0 * (e2[j] - y_true[j]);
    return gradient_from_residual(theta, f, e2);
}

double mixed_norm_2q(const Vec& tensor, std::size_t W, double q) {
    if (W < 1) throw std::invalid_argument("mixed_norm_2q: W must be >= 1");
    if (!(q >= 1.0)) throw std::invalid_argument("mixed_norm_2q: q must be >= 1");
    if (tensor.size() % W != 0)
        throw std::invalid_argument("mixed_norm_2q: tensor size not divisible by W");
    const std::size_t block = tensor.size() / W;
    if (std::isinf(q)) {
        double mx = 0.0;
        for (std::size_t p = 0; p < W; ++p) {
            double s = 0.0;
            for (std::size_t e = 0; e < block; ++e) {
                const double v = tensor[p * block + e];
                s += v * v;
            }
            mx = std::max(mx, std::sqrt(s));
        }
        return mx;
    }
    double acc = 0.0;
    for (std::size_t p = 0; p < W; ++p) {
        double s = 0.0;
        for (std::size_t e = 0; e < block; ++e) {
            const double v = tensor[p * block + e];
            s += v * v;
        }
        acc += std::pow(std::sqrt(s), q);
    }
    return std::pow(acc, 1.0 / q);
}

namespace {

double beta_group_norms_lq(const PseudoLds& theta, double q) {
    const PseudoDims& d = theta.dims;
    double acc = 0.0;
    if (d.matrix_beta) {
        for (std::size_t u = 0; u < d.tau; ++u) {
            double s = 0.0;
            for (std::size_t e = 0; e < d.m * d.m; ++e) {
                const double v = theta.beta[u * d.m * d.m + e];
                s += v * v;
            }
            acc += std::pow(std::sqrt(s), q);
        }
    } else {
        for (double v : theta.beta) acc += std::pow(std::fabs(v), q);
    }
    return std::pow(acc, 1.0 / q);
}

double p_stacked_norm(const PseudoLds& theta) {
    double s = 0.0;
    for (double v : theta.P) s += v * v;
    return std::sqrt(s);
}

}  // namespace

double composite_norm(const PseudoLds& theta) {
    const PseudoDims& d = theta.dims;
    return mixed_norm_2q(theta.M, d.W, 1.0) + mixed_norm_2q(theta.N, d.W, 1.0) +
           beta_group_norms_lq(theta, 1.0) + p_stacked_norm(theta);
}

RegularizerExponents regularizer_exponents(const PseudoDims& dims) {
    RegularizerExponents e;
    const double lw = std::log(double(dims.W));
    if (dims.W >= 2 && lw > 1.0) {
        e.q = lw / (lw - 1.0);
    } else {
        e.q = 2.0;
        e.q_fallback = true;
    }
    const double lt = std::log(double(dims.tau));
    if (dims.tau >= 2 && lt > 1.0) {
        e.q_prime = lt / (lt - 1.0);
    } else {
        e.q_prime = 2.0;
        e.q_prime_fallback = true;
    }
    return e;
}

double regularizer(const PseudoLds& theta) {
    const PseudoDims& d = theta.dims;
    const RegularizerExponents e = regularizer_exponents(d);
    const double nm = mixed_norm_2q(theta.M, d.W, e.q);
    const double nn = mixed_norm_2q(theta.N, d.W, e.q);
    const double nb = beta_group_norms_lq(theta, e.q_prime);
    double p2 = 0.0;
    for (double v : theta.P) p2 += v * v;
    return nm * nm + nn * nn + nb * nb + p2;
}

std::string pseudo_lds_to_json(const PseudoLds& theta) {
    nlohmann::json j;
    j["dims"] = {{"W", theta.dims.W},     {"k", theta.dims.k},
                 {"n", theta.dims.n},     {"m", theta.dims.m},
                 {"tau", theta.dims.tau}, {"beta_mode", theta.dims.matrix_beta ? "matrix" : "scalar"},
                 {"lag_offset", theta.dims.lag_offset}};
    j["M"] = theta.M;
    j["N"] = theta.N;
    j["beta"] = theta.beta;
    j["P"] = theta.P;
    return j.dump();
}

PseudoLds pseudo_lds_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    PseudoLds t;
    const nlohmann::json& d = j.at("dims");
    t.dims.W = d.at("W").get<std::size_t>();
    t.dims.k = d.at("k").get<std::size_t>();
    t.dims.n = d.at("n").get<std::size_t>();
    t.dims.m = d.at("m").get<std::size_t>();
    t.dims.tau = d.at("tau").get<std::size_t>();
    t.dims.matrix_beta = d.at("beta_mode").get<std::string>() == "matrix";
    t.dims.lag_offset = d.at("lag_offset").get<std::size_t>();
    t.M = j.at("M").get<Vec>();
    t.N = j.at("N").get<Vec>();
    t.beta = j.at("beta").get<Vec>();
    t.P = j.at("P").get<Vec>();
    t.check_shapes();
    return t;
}

}  // namespace wavecast
