#pragma once

#include <complex>
#include <vector>

namespace promptcodec::dsp {

// Unnormalized DFT: forward uses exp(-2*pi*i*k*n/N), inverse exp(+...).
// Radix-2 in-place FFT for power-of-two sizes, direct evaluation otherwise.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Real-input forward DFT returning bins 0..N/2.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

}  // namespace promptcodec::dsp
