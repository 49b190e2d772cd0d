#include "wavecast/hankel.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "json.hpp"

namespace wavecast {

double hankel_entry(std::size_t i, std::size_t j) {
    if (i < 1 || j < 1) throw std::invalid_argument("hankel_entry: indices are 1-based");
    const double s = double(i + j);
    return 2.0 / (s * s * s - s);
}

HankelMatrix build_hankel(std::size_t T) {
    if (T < 1) throw std::invalid_argument("build_hankel: horizon must be >= 1");
    HankelMatrix z;
    z.T = T;
    z.entries = Mat(T, T);
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = i; j < T; ++j)
            z.entries(i, j) = z.entries(j, i) = hankel_entry(i + 1, j + 1);
    return z;
}

namespace {

// The Jacobi pass computes the full spectrum, so decompositions are cached by
// horizon and sliced per request; banks for the same T but different k share
// one eigensolve.  Each horizon gets its own future so independent horizons
// can be solved concurrently while duplicate requests block on the first.
const SymmetricEigen& cached_hankel_eigen(std::size_t T) {
    static std::mutex mu;
    static std::map<std::size_t, std::shared_future<std::shared_ptr<SymmetricEigen>>> cache;

    std::shared_future<std::shared_ptr<SymmetricEigen>> fut;
    bool creator = false;
    std::promise<std::shared_ptr<SymmetricEigen>> promise;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(T);
        if (it == cache.end()) {
            fut = promise.get_future().share();
            cache.emplace(T, fut);
            creator = true;
        } else {
            fut = it->second;
        }
    }
    if (creator) {
        try {
            const HankelMatrix z = build_hankel(T);
            promise.set_value(std::make_shared<SymmetricEigen>(jacobi_eigen(z.entries)));
        } catch (...) {
            promise.set_exception(std::current_exception());
            std::lock_guard<std::mutex> lock(mu);
            cache.erase(T);
        }
    }
    return *fut.get();
}

}  // namespace

double FilterBank::scale(std::size_t h) const {
    return std::pow(eigenvalues.at(h), 0.25);
}

FilterBank compute_filter_bank(std::size_t T, std::size_t k) {
    if (T < 1) throw std::invalid_argument("compute_filter_bank: horizon must be >= 1");
    if (k < 1 || k > T)
        throw std::invalid_argument("compute_filter_bank: need 1 <= k <= T");
    const SymmetricEigen& eig = cached_hankel_eigen(T);

    FilterBank bank;
    bank.T = T;
    bank.k = k;
    bank.eigenvalues.resize(k);
    bank.filters.resize(k);
    bank.scaled_filters.resize(k);
    // Z_T is positive definite in exact arithmetic but its spectrum decays
    // below machine epsilon; computed tail values are rounding noise around
    // zero and are clamped to sigma_1 * eps so deep banks stay usable.
    const double floor_sigma =
        eig.values.front() * std::numeric_limits<double>::epsilon();
    if (!(floor_sigma > 0.0))
        throw std::runtime_error("compute_filter_bank: degenerate leading eigenvalue");
    for (std::size_t h = 0; h < k; ++h) {
        const double sigma = std::max(eig.values[h], floor_sigma);
        bank.eigenvalues[h] = sigma;
        const double* row = eig.vectors.row(h);
        bank.filters[h].assign(row, row + T);
        bank.scaled_filters[h].resize(T);
        const double s4 = std::pow(sigma, 0.25);
        for (std::size_t u = 0; u < T; ++u) bank.scaled_filters[h][u] = s4 * row[u];
    }
    return bank;
}

Vec filter_l1_diagnostic(const FilterBank& bank) {
    Vec out(bank.k);
    for (std::size_t h = 0; h < bank.k; ++h)
        out[h] = norm1(bank.filters[h]) * bank.scale(h);
    return out;
}

std::string filter_bank_to_json(const FilterBank& bank) {
    // doubles written with 17 significant digits so the text is lossless
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::string out = "{\n  \"T\": " + std::to_string(bank.T) +
                      ",\n  \"k\": " + std::to_string(bank.k) + ",\n  \"eigenvalues\": [";
    for (std::size_t h = 0; h < bank.k; ++h)
        out += (h ? ", " : "") + num(bank.eigenvalues[h]);
    out += "],\n  \"filters\": [";
    for (std::size_t h = 0; h < bank.k; ++h) {
        out += h ? ",\n    [" : "\n    [";
        for (std::size_t u = 0; u < bank.T; ++u) out += (u ? ", " : "") + num(bank.filters[h][u]);
        out += "]";
    }
    out += "\n  ]\n}\n";
    return out;
}

FilterBank filter_bank_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    FilterBank bank;
    bank.T = j.at("T").get<std::size_t>();
    bank.k = j.at("k").get<std::size_t>();
    bank.eigenvalues = j.at("eigenvalues").get<Vec>();
    bank.filters = j.at("filters").get<std::vector<Vec>>();
    if (bank.eigenvalues.size() != bank.k || bank.filters.size() != bank.k)
        throw std::invalid_argument("filter_bank_from_json: inconsistent k");
    bank.scaled_filters.resize(bank.k);
    for (std::size_t h = 0; h < bank.k; ++h) {
        if (bank.filters[h].size() != bank.T)
            throw std::invalid_argument("filter_bank_from_json: filter length != T");
        bank.scaled_filters[h].resize(bank.T);
        const double s4 = bank.scale(h);
        for (std::size_t u = 0; u < bank.T; ++u)
            bank.scaled_filters[h][u] = s4 * bank.filters[h][u];
    }
    return bank;
}

}  // namespace wavecast
