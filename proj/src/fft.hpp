#pragma once

#include <complex>
#include <span>
#include <vector>

namespace shmfcn::detail {

/// Real-to-complex forward transform of `x` (n/2 + 1 outputs).
std::vector<std::complex<double>> rfft(std::span<const double> x);

/// Linear convolution of a and b through zero-padded FFTs.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b);

}  // namespace shmfcn::detail
