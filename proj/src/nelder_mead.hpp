#pragma once

#include <functional>

#include "pbrt/numerics.hpp"

namespace pbrt::detail {

struct NelderMeadOptions {
    long max_iterations = 10000;
    /// Converged once a full cycle of dim + 1 iterations improves the best
    /// value by less than this and the simplex value spread is below it.
    double tolerance = 1e-6;
};

struct NelderMeadResult {
    Vector x;
    double value = 0.0;
    long iterations = 0;
    long evaluations = 0;
    bool converged = false;
};

/// Minimizes f with the dimension-adaptive coefficients of Gao and Han.
/// The initial simplex is x0 plus steps(i) along each axis.
NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const Vector& steps, const NelderMeadOptions& opts);

}  // namespace pbrt::detail
