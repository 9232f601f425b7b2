// Test-only oracles, kept independent of the library's symbolic paths.

#ifndef PBUMP_TESTS_ORACLES_HPP
#define PBUMP_TESTS_ORACLES_HPP

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracles {

// 4th-order central difference of a scalar callable.
inline double fd_derivative(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

// plain 2nd-order central difference, matching the spec's step-1e-5 check
inline double fd_derivative2(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2 * h);
}

// Deterministic uniform samples in a box.
inline std::vector<std::vector<double>> random_points(
    const std::vector<std::array<double, 2>>& box, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto u01 = [&]() { return (rng() >> 11) * 0x1.0p-53; };
    std::vector<std::vector<double>> pts(count, std::vector<double>(box.size()));
    for (auto& p : pts)
        for (size_t i = 0; i < box.size(); ++i)
            p[i] = box[i][0] + (box[i][1] - box[i][0]) * u01();
    return pts;
}

}  // namespace oracles

#endif
