#pragma once
#include <cmath>
#include <stdexcept>
#include <vector>

namespace wm {

// Sinusoidal embedding of an integer step index. Pair i carries frequency
// 10000^(-2i/dim): out[2i] = sin(t*f_i), out[2i+1] = cos(t*f_i), so t = 0
// maps to (0, 1, 0, 1, ...). dim must be even.
inline std::vector<double> sinusoidal_embed(int t, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw std::runtime_error("sinusoidal_embed: dim must be positive and even");
    std::vector<double> out(dim);
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * i / dim);
        out[2 * i] = std::sin(t * freq);
        out[2 * i + 1] = std::cos(t * freq);
    }
    return out;
}

} // namespace wm
