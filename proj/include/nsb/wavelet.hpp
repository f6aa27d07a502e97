#pragma once

// Periodized biorthogonal discrete wavelet transform.
//
// Analysis:  approx[k] = sum_j lo[j] * x[(2k + j - lo.origin) mod n]
//            detail[k] = sum_j hi[j] * x[(2k + j - hi.origin) mod n]
// Synthesis is the adjoint of the same sampling pattern applied with the
// dual (synthesis) taps, which inverts analysis exactly for any even n.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsb/image.hpp"

namespace nsb {

struct FilterTaps {
    std::vector<double> coeffs;
    int origin = 0;  // tap index aligned with sample 2k
};

struct FilterBank {
    std::string name;
    FilterTaps analysis_low;
    FilterTaps analysis_high;
    FilterTaps synthesis_low;
    FilterTaps synthesis_high;
};

inline constexpr std::string_view kDefaultWavelet = "bior2.2";

std::vector<std::string> supported_wavelets();

/// "haar" or "bior2.2" (5/3 spline). Throws std::invalid_argument otherwise.
FilterBank make_filter_bank(std::string_view name);

enum class Boundary { periodic };

struct Subbands1D {
    std::vector<double> approx;
    std::vector<double> detail;
};

Subbands1D dwt1d(std::span<const double> signal, const FilterBank& fb, Boundary boundary = Boundary::periodic);
std::vector<double> idwt1d(std::span<const double> approx, std::span<const double> detail, const FilterBank& fb,
                           Boundary boundary = Boundary::periodic);

/// One level of the 2D transform. tl = low/low, tr = high along width,
/// bl = high along height, br = high/high.
struct QuadDecomposition {
    Image tl;
    Image tr;
    Image bl;
    Image br;
};

/// Rows first, then columns; channels independently.
QuadDecomposition dwt2d(const Image& image, const FilterBank& fb);
Image idwt2d(const QuadDecomposition& quad, const FilterBank& fb);

}  // namespace nsb
