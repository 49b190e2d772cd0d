#include "wavecast/compile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace wavecast {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Vec poly_mul_linear_real(const Vec& p, double root) {
    Vec q(p.size() + 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        q[i] += p[i];
        q[i + 1] -= root * p[i];
    }
    return q;
}

Vec poly_mul_conjugate_pair(const Vec& p, Complex root) {
    // (x - root)(x - conj(root)) = x^2 - 2 Re(root) x + |root|^2
    Vec q(p.size() + 2, 0.0);
    const double re2 = 2.0 * root.real();
    const double mag2 = std::norm(root);
    for (std::size_t i = 0; i < p.size(); ++i) {
        q[i] += p[i];
        q[i + 1] -= re2 * p[i];
        q[i + 2] += mag2 * p[i];
    }
    return q;
}

}  // namespace

Complex eval_poly(const Vec& coeffs, Complex x) {
    Complex acc = 0.0;
    for (double c : coeffs) acc = acc * x + c;
    return acc;
}

PhasePolynomial poly_from_roots(const CVec& roots) {
    // conjugate closure and near-duplicate merging
    CVec pool = roots;
    CVec distinct;
    const double tol = 1e-10;
    for (const Complex& r : pool) {
        bool dup = false;
        for (const Complex& d : distinct)
            if (std::abs(d - r) <= tol) {
                dup = true;
                break;
            }
        if (!dup) distinct.push_back(r);
    }
    // add missing conjugates
    const std::size_t base = distinct.size();
    for (std::size_t i = 0; i < base; ++i) {
        const Complex c = std::conj(distinct[i]);
        bool present = false;
        for (const Complex& d : distinct)
            if (std::abs(d - c) <= tol) {
                present = true;
                break;
            }
        if (!present) distinct.push_back(c);
    }

    PhasePolynomial p;
    p.coeffs = {1.0};
    std::vector<bool> used(distinct.size(), false);
    for (std::size_t i = 0; i < distinct.size(); ++i) {
        if (used[i]) continue;
        if (std::fabs(distinct[i].imag()) <= tol) {
            p.coeffs = poly_mul_linear_real(p.coeffs, distinct[i].real());
            used[i] = true;
        } else {
            // pair with the conjugate
            std::size_t partner = distinct.size();
            for (std::size_t j = i + 1; j < distinct.size(); ++j)
                if (!used[j] && std::abs(distinct[j] - std::conj(distinct[i])) <= tol) {
                    partner = j;
                    break;
                }
            if (partner == distinct.size())
                throw std::logic_error("poly_from_roots: conjugate closure failed");
            p.coeffs = poly_mul_conjugate_pair(p.coeffs, distinct[i]);
            used[i] = used[partner] = true;
        }
    }
    p.roots_checked = distinct;
    return p;
}

PhasePolynomial min_phase_polynomial(const CVec& phases) {
    CVec normalized;
    normalized.reserve(phases.size());
    for (const Complex& w : phases) {
        const double r = std::abs(w);
        if (r == 0.0) throw std::invalid_argument("min_phase_polynomial: zero phase");
        normalized.push_back(w / r);
    }
    PhasePolynomial p = poly_from_roots(normalized);
    for (const Complex& w : p.roots_checked) {
        if (std::abs(eval_poly(p.coeffs, w)) > 1e-8)
            throw std::runtime_error("min_phase_polynomial: residual root check failed");
    }
    return p;
}

Vec mu_vector(double r, std::size_t T) {
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("mu_vector: r must be in [0,1]");
    Vec mu(T);
    double pw = 1.0;  // r^{t-1}
    for (std::size_t t = 0; t < T; ++t) {
        mu[t] = (1.0 - r) * pw;
        pw *= r;
    }
    return mu;
}

namespace {

// (r^s - 1) / (1 - r), evaluated as -(1 + r + ... + r^{s-1}) near r = 1.
double geometric_factor(double r, std::size_t s) {
    if (s == 0) return 0.0;
    if (std::fabs(1.0 - r) < 1e-6) {
        double acc = 0.0, pw = 1.0;
        for (std::size_t i = 0; i < s; ++i) {
            acc += pw;
            pw *= r;
        }
        return -acc;
    }
    return (std::pow(r, double(s)) - 1.0) / (1.0 - r);
}

void check_annihilates(const Vec& coeffs, const CVec& points, const char* what) {
    for (const Complex& a : points) {
        double scale = 0.0;
        const std::size_t deg = coeffs.size() - 1;
        for (std::size_t j = 0; j < coeffs.size(); ++j)
            scale += std::fabs(coeffs[j]) * std::pow(std::max(1.0, std::abs(a)), double(deg - j));
        if (std::abs(eval_poly(coeffs, a)) > 1e-7 * std::max(scale, 1.0))
            throw std::invalid_argument(std::string(what) +
                                        ": polynomial does not annihilate the spectrum");
    }
}

// beta_u = -e_u and P_j = sum_{i<=j} e_i C A^{j-i} B (D folded into P_0)
ArCompiled ar_construction(const LinearDynamicalSystem& sys, const Vec& coeffs) {
    const std::size_t tau = coeffs.size() - 1;
    const std::size_t m = sys.output_dim(), n = sys.input_dim();
    ArCompiled out;
    out.beta.resize(tau);
    for (std::size_t u = 1; u <= tau; ++u) out.beta[u - 1] = -coeffs[u];
    out.P.assign(tau, Mat(m, n));
    Mat a_pow = Mat::identity(sys.state_dim());
    for (std::size_t pw = 0; pw < tau; ++pw) {  // pw = j - i
        const Mat cab = matmul(sys.C, matmul(a_pow, sys.B));
        for (std::size_t j = pw; j < tau; ++j) {
            const double e = coeffs[j - pw];
            if (e == 0.0) continue;
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) out.P[j](r, c) += e * cab(r, c);
        }
        if (pw + 1 < tau) a_pow = matmul(sys.A, a_pow);
    }
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out.P[0](r, c) += sys.D(r, c);
    return out;
}

}  // namespace

PseudoLds ArCompiled::to_pseudo_lds(std::size_t n, std::size_t m) const {
    PseudoDims dims;
    dims.W = 1;
    dims.k = 0;
    dims.n = n;
    dims.m = m;
    dims.tau = beta.size();
    dims.matrix_beta = false;
    dims.lag_offset = 0;
    PseudoLds t = PseudoLds::zeros(dims);
    t.beta = beta;
    for (std::size_t lag = 0; lag < P.size(); ++lag)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i < n; ++i) t.p_at(lag, j, i) = P[lag](j, i);
    return t;
}

ArCompiled ar_compile(const LinearDynamicalSystem& sys, const PhasePolynomial& p) {
    sys.check_shapes();
    const std::size_t tau = p.degree();
    if (tau < 1) throw std::invalid_argument("ar_compile: polynomial degree must be >= 1");
    if (p.coeffs[0] != 1.0) throw std::invalid_argument("ar_compile: polynomial must be monic");
    check_annihilates(p.coeffs, eigenvalues(sys.A), "ar_compile");
    return ar_construction(sys, p.coeffs);
}

CompiledApprox wavefilter_compile(const LinearDynamicalSystem& sys, const PhasePolynomial& p,
                                  const FilterBank& bank, std::size_t W,
                                  const ValidationSpec& validation) {
    sys.check_shapes();
    if (W < 1) throw std::invalid_argument("wavefilter_compile: W must be >= 1");
    const std::size_t tau = p.degree();
    if (tau < 1) throw std::invalid_argument("wavefilter_compile: polynomial degree >= 1");

    const Diagonalization diag = diagonalize(sys.A);
    check_annihilates(p.coeffs, diag.phases, "wavefilter_compile");

    const std::size_t d = sys.state_dim();
    const std::size_t n = sys.input_dim();
    const std::size_t m = sys.output_dim();

    PseudoDims dims;
    dims.W = W;
    dims.k = bank.k;
    dims.n = n;
    dims.m = m;
    dims.tau = tau;
    dims.matrix_beta = false;
    dims.lag_offset = tau - 1;
    PseudoLds theta = PseudoLds::zeros(dims);

    // AR part from the same polynomial
    {
        const ArCompiled ar = ar_construction(sys, p.coeffs);
        theta.beta = ar.beta;
        for (std::size_t lag = 0; lag < tau; ++lag)
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t i = 0; i < n; ++i) theta.p_at(lag, j, i) = ar.P[lag](j, i);
    }

    // complex accumulation tensor, W x k x m x n
    CVec mc(W * bank.k * m * n, Complex{});
    auto mc_at = [&](std::size_t ph, std::size_t h, std::size_t j, std::size_t i) -> Complex& {
        return mc[((ph * bank.k + h) * m + j) * n + i];
    };

    auto process_mode = [&](std::size_t l) {
        // returns the complex per-mode block and its phase bucket
        const double r = diag.radii[l];
        const Complex omega = diag.phases[l];
        double theta_l = std::atan2(omega.imag(), omega.real());
        if (theta_l < 0.0) theta_l += kTwoPi;
        std::size_t bucket =
            std::size_t(std::llround(double(W) * theta_l / kTwoPi)) % W;

        // s_l = sum_j e_j omega^{tau-1-j} (r^{tau-j} - 1)/(1 - r)
        Complex s_l = 0.0;
        for (std::size_t j = 0; j < tau; ++j) {
            const std::size_t s = tau - j;
            s_l += p.coeffs[j] * std::pow(omega, double(s) - 1.0) * geometric_factor(r, s);
        }

        // L_l = (C v_l)(w_l^* B) * s_l
        CVec cv(m, Complex{});
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t c = 0; c < d; ++c) cv[j] += sys.C(j, c) * diag.psi(c, l);
        CVec wb(n, Complex{});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) wb[i] += diag.psi_inv(l, c) * sys.B(c, i);

        // m_{l,h} = sigma_h^{-1/4} <phi_h, mu(r)>
        const Vec mu = mu_vector(r, bank.T);
        Vec m_l(bank.k);
        for (std::size_t h = 0; h < bank.k; ++h)
            m_l[h] = dot(bank.filters[h], mu) / bank.scale(h);

        CMat block(bank.k, m * n);
        for (std::size_t h = 0; h < bank.k; ++h)
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t i = 0; i < n; ++i)
                    block(h, j * n + i) = m_l[h] * cv[j] * wb[i] * s_l;
        return std::pair<std::size_t, CMat>(bucket, std::move(block));
    };

    double max_block_mag = 0.0;
    std::size_t l = 0;
    while (l < d) {
        const Complex lam = diag.lambda[l];
        if (lam.imag() > 0.0) {
            // conjugate pair: the partner contributes the conjugate block to
            // the mirrored bucket, so cancellation is exact by construction
            auto [bucket, block] = process_mode(l);
            const std::size_t mirror = (W - bucket) % W;
            for (std::size_t h = 0; h < bank.k; ++h)
                for (std::size_t e = 0; e < m * n; ++e) {
                    const Complex v = block(h, e);
                    max_block_mag = std::max(max_block_mag, std::abs(v));
                    mc[(bucket * bank.k + h) * m * n + e] += v;
                    mc[(mirror * bank.k + h) * m * n + e] += std::conj(v);
                }
            l += 2;
        } else if (lam.imag() == 0.0) {
            auto [bucket, block] = process_mode(l);
            // real eigenvalue: the block must be real up to rounding noise
            double max_mag = 0.0, max_imag = 0.0;
            for (std::size_t h = 0; h < bank.k; ++h)
                for (std::size_t e = 0; e < m * n; ++e) {
                    max_mag = std::max(max_mag, std::abs(block(h, e)));
                    max_imag = std::max(max_imag, std::fabs(block(h, e).imag()));
                }
            if (max_imag > 1e-10 * std::max(1.0, max_mag))
                throw std::runtime_error(
                    "wavefilter_compile: imaginary residue on a real mode "
                    "(spectrum not conjugate-closed)");
            max_block_mag = std::max(max_block_mag, max_mag);
            for (std::size_t h = 0; h < bank.k; ++h)
                for (std::size_t e = 0; e < m * n; ++e)
                    mc[(bucket * bank.k + h) * m * n + e] += Complex(block(h, e).real(), 0.0);
            l += 1;
        } else {
            throw std::runtime_error("wavefilter_compile: unexpected eigenvalue ordering");
        }
    }

    // realification: M = Re, N = -Im
    for (std::size_t e = 0; e < mc.size(); ++e) {
        theta.M[e] = mc[e].real();
        theta.N[e] = -mc[e].imag();
    }

    CompiledApprox out;
    out.theta = std::move(theta);
    out.report.k = bank.k;
    out.report.W = W;
    out.report.tau = tau;
    out.report.theta_norm = composite_norm(out.theta);
    out.report.validation_T = validation.T > 0 ? validation.T : bank.T;
    out.report.validation_seed = validation.seed;

    // measured max per-step error on a fresh noiseless Gaussian-input trace
    {
        const std::size_t T = out.report.validation_T;
        Rng rng(validation.seed);
        const std::vector<Vec> inputs = gaussian_inputs(T, n, rng.split("compile.validation"));
        const SimulationResult sim =
            simulate(sys, inputs, NoiseSchedule::zeros(T, d, m));
        const FeatureBatch batch(inputs, bank, out.theta.dims);
        SeriesHistory history(n, m);
        double max_err = 0.0;
        for (std::size_t t = 1; t <= T; ++t) {
            history.push_input(inputs[t - 1]);
            const FeatureVector f = batch.features_at(t, history);
            const Vec yhat = predict(out.theta, f);
            double err = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double r2 = yhat[j] - sim.outputs[t - 1][j];
                err += r2 * r2;
            }
            max_err = std::max(max_err, std::sqrt(err));
            history.push_output(sim.outputs[t - 1]);
        }
        out.report.max_error = max_err;
    }
    return out;
}

std::string compile_report_to_json(const CompileReport& r) {
    nlohmann::json j;
    j["k"] = r.k;
    j["W"] = r.W;
    j["tau"] = r.tau;
    j["max_error"] = r.max_error;
    j["theta_norm"] = r.theta_norm;
    j["validation_T"] = r.validation_T;
    j["validation_seed"] = r.validation_seed;
    return j.dump(2);
}

}  // namespace wavecast
