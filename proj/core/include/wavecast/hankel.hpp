#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wavecast/linalg.hpp"

namespace wavecast {

// Entry of the deterministic Hankel matrix, 1-based indices:
//   Z(i,j) = 2 / ((i+j)^3 - (i+j)).
double hankel_entry(std::size_t i, std::size_t j);

struct HankelMatrix {
    std::size_t T = 0;
    Mat entries;  // T x T, symmetric positive semidefinite
};

HankelMatrix build_hankel(std::size_t T);

// Top-k eigenpairs of Z_T packaged as convolution kernels.  Filters have unit
// Euclidean norm with the first nonzero coordinate positive; scaled_filters
// hold sigma^{1/4} * phi.
struct FilterBank {
    std::size_t T = 0;
    std::size_t k = 0;
    std::vector<Vec> filters;         // k filters of length T
    Vec eigenvalues;                  // descending, all positive
    std::vector<Vec> scaled_filters;  // sigma_h^{1/4} * phi_h

    double scale(std::size_t h) const;  // sigma_h^{1/4}
};

FilterBank compute_filter_bank(std::size_t T, std::size_t k);

// ||phi_h||_1 * sigma_h^{1/4} for each filter; stays O(log T) for the top of
// the spectrum and is reported by diagnostics.
Vec filter_l1_diagnostic(const FilterBank& bank);

// JSON of the form {"T":..,"k":..,"eigenvalues":[...],"filters":[[...],...]}
// with round-trippable doubles.
std::string filter_bank_to_json(const FilterBank& bank);
FilterBank filter_bank_from_json(const std::string& text);

}  // namespace wavecast
