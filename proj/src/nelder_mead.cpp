#include "nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace pbrt::detail {

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const Vector& steps, const NelderMeadOptions& opts) {
    const auto n = x0.size();
    const double dn = static_cast<double>(n);
    const double reflect = 1.0;
    const double expand = 1.0 + 2.0 / dn;
    const double contract = 0.75 - 1.0 / (2.0 * dn);
    const double shrink = 1.0 - 1.0 / dn;

    NelderMeadResult res;
    auto eval = [&](const Vector& x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> vals(static_cast<std::size_t>(n + 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        pts[static_cast<std::size_t>(i + 1)](i) += steps(i);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        vals[i] = eval(pts[i]);
    }

    std::vector<std::size_t> order(pts.size());
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::vector<Vector> p2;
        std::vector<double> v2;
        p2.reserve(pts.size());
        v2.reserve(pts.size());
        for (auto i : order) {
            p2.push_back(std::move(pts[i]));
            v2.push_back(vals[i]);
        }
        pts = std::move(p2);
        vals = std::move(v2);
    };
    sort_simplex();

    const auto worst = static_cast<std::size_t>(n);
    const long cycle = static_cast<long>(n) + 1;
    double checkpoint = vals[0];

    while (res.iterations < opts.max_iterations) {
        ++res.iterations;
        Vector centroid = Vector::Zero(n);
        for (std::size_t i = 0; i < worst; ++i) {
            centroid += pts[i];
        }
        centroid /= dn;

        const Vector xr = centroid + reflect * (centroid - pts[worst]);
        const double fr = eval(xr);
        bool do_shrink = false;
        if (fr < vals[0]) {
            const Vector xe = centroid + expand * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
        } else if (fr < vals[worst - 1]) {
            pts[worst] = xr;
            vals[worst] = fr;
        } else if (fr < vals[worst]) {
            const Vector xc = centroid + contract * (xr - centroid);
            const double fc = eval(xc);
            if (fc <= fr) {
                pts[worst] = xc;
                vals[worst] = fc;
            } else {
                do_shrink = true;
            }
        } else {
            const Vector xc = centroid + contract * (pts[worst] - centroid);
            const double fc = eval(xc);
            if (fc < vals[worst]) {
                pts[worst] = xc;
                vals[worst] = fc;
            } else {
                do_shrink = true;
            }
        }
        if (do_shrink) {
            for (std::size_t i = 1; i < pts.size(); ++i) {
                pts[i] = pts[0] + shrink * (pts[i] - pts[0]);
                vals[i] = eval(pts[i]);
            }
        }
        sort_simplex();

        if (res.iterations % cycle == 0) {
            const double improvement = checkpoint - vals[0];
            const double spread = vals[worst] - vals[0];
            checkpoint = vals[0];
            if (improvement < opts.tolerance && spread < opts.tolerance) {
                res.converged = true;
                break;
            }
        }
    }
    res.x = pts[0];
    res.value = vals[0];
    return res;
}

}  // namespace pbrt::detail
