#include "wavecast/lds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace wavecast {

void LinearDynamicalSystem::check_shapes() const {
    const std::size_t d = A.rows();
    if (A.cols() != d) throw std::invalid_argument("lds: A must be square");
    if (B.rows() != d) throw std::invalid_argument("lds: B rows != state dim");
    if (C.cols() != d) throw std::invalid_argument("lds: C cols != state dim");
    if (D.rows() != C.rows() || D.cols() != B.cols())
        throw std::invalid_argument("lds: D shape mismatch");
    if (h0.size() != d) throw std::invalid_argument("lds: h0 length != state dim");
}

double NoiseSchedule::total_energy() const {
    double s = 0.0;
    for (const Vec& e : eta) s += dot(e, e);
    for (const Vec& x : xi) s += dot(x, x);
    return s;
}

NoiseSchedule NoiseSchedule::zeros(std::size_t T, std::size_t d, std::size_t m) {
    NoiseSchedule ns;
    ns.eta.assign(T, Vec(d, 0.0));
    ns.xi.assign(T, Vec(m, 0.0));
    ns.budget = 0.0;
    return ns;
}

NoiseSchedule make_noise_schedule(std::size_t T, std::size_t d, std::size_t m, double L,
                                  NoisePattern pattern, std::size_t spike_index, Rng rng) {
    if (L < 0.0) throw std::invalid_argument("make_noise_schedule: budget must be >= 0");
    NoiseSchedule ns = NoiseSchedule::zeros(T, d, m);
    ns.budget = L;
    if (L == 0.0) return ns;
    switch (pattern) {
        case NoisePattern::Spread: {
            for (std::size_t t = 0; t < T; ++t) {
                ns.eta[t] = rng.gaussian_vec(d);
                ns.xi[t] = rng.gaussian_vec(m);
            }
            const double total = ns.total_energy();
            const double f = std::sqrt(L / total);
            for (std::size_t t = 0; t < T; ++t) {
                scale(ns.eta[t], f);
                scale(ns.xi[t], f);
            }
            break;
        }
        case NoisePattern::SingleSpikeHidden:
        case NoisePattern::SingleSpikeObs: {
            if (spike_index < 1 || spike_index > T)
                throw std::invalid_argument("make_noise_schedule: spike index out of range");
            const bool hidden = pattern == NoisePattern::SingleSpikeHidden;
            Vec v = rng.gaussian_vec(hidden ? d : m);
            const double nrm = norm2(v);
            scale(v, std::sqrt(L) / nrm);
            (hidden ? ns.eta : ns.xi)[spike_index - 1] = std::move(v);
            break;
        }
    }
    return ns;
}

StepResult lds_step(const LinearDynamicalSystem& sys, const Vec& h_prev, const Vec& x,
                    const Vec& eta, const Vec& xi) {
    StepResult r;
    r.h = matvec(sys.A, h_prev);
    axpy(1.0, matvec(sys.B, x), r.h);
    axpy(1.0, eta, r.h);
    r.y = matvec(sys.C, r.h);
    axpy(1.0, matvec(sys.D, x), r.y);
    axpy(1.0, xi, r.y);
    for (double v : r.h)
        if (!std::isfinite(v)) throw std::runtime_error("lds_step: non-finite hidden state");
    for (double v : r.y)
        if (!std::isfinite(v)) throw std::runtime_error("lds_step: non-finite output");
    return r;
}

SimulationResult simulate(const LinearDynamicalSystem& sys, const std::vector<Vec>& inputs,
                          const NoiseSchedule& noise, bool fold_h0_into_noise) {
    sys.check_shapes();
    const std::size_t T = inputs.size();
    if (noise.eta.size() != T || noise.xi.size() != T)
        throw std::invalid_argument("simulate: noise length != input length");
    SimulationResult out;
    out.outputs.reserve(T);
    out.hidden_trace.reserve(T);
    Vec h = sys.h0;
    if (fold_h0_into_noise) std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        Vec eta = noise.eta[t];
        if (fold_h0_into_noise && t == 0) axpy(1.0, matvec(sys.A, sys.h0), eta);
        StepResult r = lds_step(sys, h, inputs[t], eta, noise.xi[t]);
        h = r.h;
        out.hidden_trace.push_back(std::move(r.h));
        out.outputs.push_back(std::move(r.y));
    }
    return out;
}

namespace {

Mat gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Mat m(rows, cols);
    for (double& v : m.data()) v = rng.gaussian();
    return m;
}

}  // namespace

RotationSystem random_rotation_lds(std::size_t d, std::size_t n, std::size_t m,
                                   std::uint64_t seed, double radius_min, double radius_max) {
    if (d == 0 || d % 2 != 0)
        throw std::invalid_argument("random_rotation_lds: state dim must be even");
    Rng master(seed);
    Rng rng_theta = master.split("rotation.theta");
    Rng rng_radius = master.split("rotation.radius");
    Rng rng_b = master.split("rotation.B");
    Rng rng_c = master.split("rotation.C");

    RotationSystem out;
    out.system.A = Mat(d, d);
    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t b = 0; b < d / 2; ++b) {
        const double theta = rng_theta.uniform(0.0, two_pi);
        const double r = (radius_min == radius_max) ? radius_min
                                                    : rng_radius.uniform(radius_min, radius_max);
        out.thetas.push_back(theta);
        out.radii.push_back(r);
        const std::size_t i = 2 * b;
        out.system.A(i, i) = r * std::cos(theta);
        out.system.A(i, i + 1) = -r * std::sin(theta);
        out.system.A(i + 1, i) = r * std::sin(theta);
        out.system.A(i + 1, i + 1) = r * std::cos(theta);
    }
    out.system.B = gaussian_matrix(d, n, rng_b);
    out.system.C = gaussian_matrix(m, d, rng_c);
    out.system.D = Mat(m, n);
    out.system.h0 = Vec(d, 0.0);
    return out;
}

namespace {

// multiply poly (highest degree first) by (x - root)
Vec poly_mul_linear(const Vec& p, double root) {
    Vec q(p.size() + 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        q[i] += p[i];
        q[i + 1] -= root * p[i];
    }
    return q;
}

// multiply by x^2 - 2*re*x + mag2 (a conjugate pair with product mag2)
Vec poly_mul_quadratic(const Vec& p, double re, double mag2) {
    Vec q(p.size() + 2, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        q[i] += p[i];
        q[i + 1] -= 2.0 * re * p[i];
        q[i + 2] += mag2 * p[i];
    }
    return q;
}

}  // namespace

DiagonalizableSystem random_diagonalizable_lds(std::size_t d, std::size_t n, std::size_t m,
                                               double rho_max, std::uint64_t seed) {
    if (d == 0) throw std::invalid_argument("random_diagonalizable_lds: d must be >= 1");
    Rng master(seed);
    Rng rng_spec = master.split("diag.spectrum");
    Rng rng_sim = master.split("diag.similarity");
    Rng rng_b = master.split("diag.B");
    Rng rng_c = master.split("diag.C");

    // spectrum: complex pairs plus a real leftover for odd d, moduli spaced
    // over [0.3*rho_max, rho_max] so eigenvalues stay well separated
    const std::size_t pairs = d / 2;
    const bool has_real = (d % 2 != 0);
    const std::size_t groups = pairs + (has_real ? 1 : 0);

    DiagonalizableSystem out;
    Mat block(d, d);
    Vec poly{1.0};
    std::size_t pos = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const double frac = (groups == 1) ? 1.0 : double(g + 1) / double(groups);
        const double r = rho_max * (0.3 + 0.7 * frac) *
                         (0.97 + 0.03 * rng_spec.next_unit());
        if (has_real && g == groups - 1) {
            const double sgn = rng_spec.next_unit() < 0.5 ? -1.0 : 1.0;
            const double lam = sgn * r;
            block(pos, pos) = lam;
            out.eigenvalues.push_back(Complex(lam, 0.0));
            poly = poly_mul_linear(poly, lam);
            pos += 1;
        } else {
            // angles separated by construction: spread over (0, pi)
            const double theta = 3.141592653589793 *
                                 ((double(g) + 0.35 + 0.3 * rng_spec.next_unit()) /
                                  double(groups + 1));
            block(pos, pos) = r * std::cos(theta);
            block(pos, pos + 1) = -r * std::sin(theta);
            block(pos + 1, pos) = r * std::sin(theta);
            block(pos + 1, pos + 1) = r * std::cos(theta);
            out.eigenvalues.push_back(Complex(r * std::cos(theta), r * std::sin(theta)));
            out.eigenvalues.push_back(Complex(r * std::cos(theta), -r * std::sin(theta)));
            poly = poly_mul_quadratic(poly, r * std::cos(theta), r * r);
            pos += 2;
        }
    }
    out.char_poly = poly;

    // similarity: redraw until comfortably invertible (deterministic sequence)
    Mat s(d, d);
    for (int attempt = 0; attempt < 64; ++attempt) {
        s = gaussian_matrix(d, d, rng_sim);
        for (std::size_t i = 0; i < d; ++i) s(i, i) += 2.0;
        const double ns = spectral_norm(s);
        bool ok = true;
        try {
            Mat id = Mat::identity(d);
            Mat sinv(d, d);
            for (std::size_t c = 0; c < d; ++c) {
                Vec e(d, 0.0);
                e[c] = 1.0;
                Vec x = solve(s, e);
                for (std::size_t r2 = 0; r2 < d; ++r2) sinv(r2, c) = x[r2];
            }
            if (ns * spectral_norm(sinv) > 40.0) ok = false;
            if (ok) {
                out.system.A = matmul(matmul(s, block), sinv);
                break;
            }
        } catch (const std::runtime_error&) {
            ok = false;
        }
        if (attempt == 63)
            throw std::runtime_error("random_diagonalizable_lds: no well-conditioned similarity");
    }
    out.system.B = gaussian_matrix(d, n, rng_b);
    out.system.C = gaussian_matrix(m, d, rng_c);
    out.system.D = Mat(m, n);
    out.system.h0 = Vec(d, 0.0);
    return out;
}

std::vector<Vec> gaussian_inputs(std::size_t T, std::size_t n, Rng rng) {
    if (T < 1) throw std::invalid_argument("gaussian_inputs: T must be >= 1");
    std::vector<Vec> xs(T);
    for (Vec& x : xs) x = rng.gaussian_vec(n);
    return xs;
}

std::vector<Vec> block_impulse_inputs(std::size_t T, std::size_t n, std::size_t block_len,
                                      std::int64_t gap, Rng rng) {
    if (T < 1) throw std::invalid_argument("block_impulse_inputs: T must be >= 1");
    if (block_len < 1) throw std::invalid_argument("block_impulse_inputs: block_len >= 1");
    std::vector<Vec> xs(T, Vec(n, 0.0));
    std::size_t t = 0;
    bool first = true;
    while (t < T) {
        if (!first && gap < 0) break;  // single block
        if (!first) t += std::size_t(gap);
        first = false;
        if (t >= T) break;
        const Vec held = rng.gaussian_vec(n);
        for (std::size_t i = 0; i < block_len && t < T; ++i, ++t) xs[t] = held;
    }
    return xs;
}

Diagonalization diagonalize(const Mat& a, double residual_tol) {
    const EigenDecomposition d = eig_decompose(a, residual_tol);
    Diagonalization out;
    out.lambda = d.lambda;
    out.psi = d.psi;
    out.psi_inv = d.psi_inv;
    out.cond_product = d.cond_product;
    out.reconstruction = d.reconstruction;
    out.radii.reserve(out.lambda.size());
    out.phases.reserve(out.lambda.size());
    for (const Complex& l : out.lambda) {
        const double r = std::abs(l);
        out.radii.push_back(r);
        out.phases.push_back(r > 0.0 ? l / r : Complex(1.0, 0.0));
    }
    return out;
}

bool BoundsReport::all_pass() const {
    for (const BoundCheck& c : checks)
        if (!c.pass) return false;
    return true;
}

std::string BoundsReport::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const BoundCheck& c : checks)
        j.push_back({{"name", c.name}, {"pass", c.pass}, {"measured", c.measured},
                     {"limit", c.limit}});
    return nlohmann::json{{"all_pass", all_pass()}, {"checks", j}}.dump(2);
}

namespace {

Complex poly_eval(const Vec& coeffs, Complex x) {
    Complex acc = 0.0;
    for (double c : coeffs) acc = acc * x + c;
    return acc;
}

}  // namespace

BoundsReport validate_bounds(const LinearDynamicalSystem& sys, const SystemBounds& bounds,
                             const std::vector<Vec>& inputs, const std::vector<Vec>& outputs) {
    BoundsReport rep;
    double max_x = 0.0, max_y = 0.0;
    for (const Vec& x : inputs) max_x = std::max(max_x, norm2(x));
    for (const Vec& y : outputs) max_y = std::max(max_y, norm2(y));
    rep.checks.push_back({"input_norm", max_x <= bounds.R_x, max_x, bounds.R_x});
    rep.checks.push_back({"output_norm", max_y <= bounds.R_y, max_y, bounds.R_y});

    const double rho = spectral_radius(sys.A);
    rep.checks.push_back({"lyapunov_stable", rho <= 1.0 + 1e-8, rho, 1.0});

    double cond = std::numeric_limits<double>::infinity();
    double max_phase_residual = std::numeric_limits<double>::infinity();
    try {
        const Diagonalization diag = diagonalize(sys.A);
        cond = diag.cond_product;
        max_phase_residual = 0.0;
        for (const Complex& w : diag.phases)
            max_phase_residual = std::max(max_phase_residual, std::abs(poly_eval(bounds.p_coeffs, w)));
    } catch (const std::runtime_error&) {
        // near-defective: leave the infinities in the report
    }
    rep.checks.push_back({"diagonalization_conditioning", cond <= bounds.R_psi, cond, bounds.R_psi});

    const double nb = spectral_norm(sys.B);
    const double nc = spectral_norm(sys.C);
    const double nd = spectral_norm(sys.D);
    const double n_max = std::max({nb, nc, nd});
    rep.checks.push_back({"parameter_norms", n_max <= bounds.R_theta, n_max, bounds.R_theta});

    rep.checks.push_back(
        {"phase_polynomial", max_phase_residual <= 1e-8, max_phase_residual, 1e-8});
    return rep;
}

namespace {

nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const nlohmann::json& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows[0].size() : 0;
    Mat m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        if (rows[i].size() != c) throw std::invalid_argument("matrix json: ragged rows");
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

}  // namespace

std::string system_to_json(const LinearDynamicalSystem& sys) {
    nlohmann::json j;
    j["d"] = sys.state_dim();
    j["n"] = sys.input_dim();
    j["m"] = sys.output_dim();
    j["A"] = mat_to_json(sys.A);
    j["B"] = mat_to_json(sys.B);
    j["C"] = mat_to_json(sys.C);
    j["D"] = mat_to_json(sys.D);
    j["h0"] = sys.h0;
    return j.dump(2);
}

LinearDynamicalSystem system_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    LinearDynamicalSystem sys;
    sys.A = mat_from_json(j.at("A"));
    sys.B = mat_from_json(j.at("B"));
    sys.C = mat_from_json(j.at("C"));
    if (j.contains("D")) {
        sys.D = mat_from_json(j.at("D"));
    } else {
        sys.D = Mat(sys.C.rows(), sys.B.cols());
    }
    if (j.contains("h0")) {
        sys.h0 = j.at("h0").get<Vec>();
    } else {
        sys.h0 = Vec(sys.A.rows(), 0.0);
    }
    sys.check_shapes();
    return sys;
}

}  // namespace wavecast
