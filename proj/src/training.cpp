#include "pbrt/training.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "nelder_mead.hpp"
#include "pbrt/errors.hpp"

namespace pbrt {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

/// Per-driver sufficient statistics: X'X, X'y, y'y and the row count.
struct DriverStats {
    Matrix xtx;
    Vector xty;
    double yty = 0.0;
    Eigen::Index n = 0;
};

struct ProfileTerms {
    double loglik = 0.0;
    Vector beta;
};

/// Evaluates the profile likelihood through the Woodbury identity, so each
/// driver costs O(p^3) regardless of its observation count:
///   V^-1 = s (I - s X L M^-1 L' X'),  M = I + s L' X'X L,  s = 1 / sigma2
///   log det V = n log sigma2 + log det M
class ProfileLikelihood {
public:
    explicit ProfileLikelihood(const TrainingSet& ts) : p_(ts.spec.p()) {
        for (const auto& [id, obs] : ts.drivers) {
            const Design d = build_design(ts.spec, obs);
            DriverStats st;
            st.xtx = d.x.transpose() * d.x;
            st.xty = d.x.transpose() * d.y;
            st.yty = d.y.squaredNorm();
            st.n = d.y.size();
            total_n_ += st.n;
            stats_.push_back(std::move(st));
        }
    }

    ProfileTerms evaluate(double sigma2, const Matrix& l) const {
        const double s = 1.0 / sigma2;
        Matrix xtvx = Matrix::Zero(p_, p_);
        Vector xtvy = Vector::Zero(p_);
        double ytvy = 0.0;
        double log_det = 0.0;
        const Matrix eye = Matrix::Identity(p_, p_);
        for (const auto& st : stats_) {
            const Matrix gl = st.xtx * l;
            const Matrix m = eye + s * (l.transpose() * gl);
            const Eigen::LLT<Matrix> llt(m);
            const Vector ltb = l.transpose() * st.xty;
            const Matrix minv_glt = llt.solve(gl.transpose());
            const Vector minv_ltb = llt.solve(ltb);
            xtvx += s * (st.xtx - s * gl * minv_glt);
            xtvy += s * (st.xty - s * gl * minv_ltb);
            ytvy += s * (st.yty - s * ltb.dot(minv_ltb));
            log_det += static_cast<double>(st.n) * std::log(sigma2) +
                       2.0 * llt.matrixLLT().diagonal().array().log().sum();
        }
        const Matrix xtvx_sym = 0.5 * (xtvx + xtvx.transpose());
        ProfileTerms out;
        out.beta = generalized_inverse(xtvx_sym) * xtvy;
        const double quad =
            ytvy - 2.0 * out.beta.dot(xtvy) + out.beta.dot(xtvx_sym * out.beta);
        out.loglik = -0.5 * (static_cast<double>(total_n_) * kLog2Pi + log_det + quad);
        return out;
    }

private:
    Eigen::Index p_;
    Eigen::Index total_n_ = 0;
    std::vector<DriverStats> stats_;
};

/// Positions of the free lower-triangular entries of L.
std::vector<std::pair<int, int>> free_entries(const ModelSpec& spec, bool block_diagonal) {
    std::vector<std::pair<int, int>> out;
    const int bs = spec.block_size();
    for (int i = 0; i < spec.p(); ++i) {
        for (int j = 0; j <= i; ++j) {
            if (!block_diagonal || i / bs == j / bs) {
                out.emplace_back(i, j);
            }
        }
    }
    return out;
}

Vector pack(const VarianceParams& vp, const std::vector<std::pair<int, int>>& entries) {
    Vector theta(static_cast<Eigen::Index>(entries.size()) + 1);
    theta(0) = vp.log_sigma;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        theta(static_cast<Eigen::Index>(k) + 1) = vp.chol_factor(entries[k].first, entries[k].second);
    }
    return theta;
}

VarianceParams unpack(const Vector& theta, int p, const std::vector<std::pair<int, int>>& entries) {
    VarianceParams vp;
    vp.log_sigma = theta(0);
    vp.chol_factor = Matrix::Zero(p, p);
    for (int i = 0; i < p; ++i) {
        vp.chol_factor(i, i) = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
        vp.chol_factor(entries[k].first, entries[k].second) = theta(static_cast<Eigen::Index>(k) + 1);
    }
    return vp;
}

}  // namespace

void TrainingSet::validate(std::size_t min_drivers) const {
    spec.validate();
    if (stimuli.size() != spec.num_stimuli) {
        throw InvalidInput("stimulus registry size does not match num_stimuli");
    }
    if (drivers.size() < min_drivers) {
        throw InvalidInput("at least " + std::to_string(min_drivers) + " drivers required");
    }
    for (const auto& [id, obs] : drivers) {
        if (obs.empty()) {
            throw InvalidInput("driver '" + id + "' has no observations");
        }
        for (const auto& o : obs) {
            if (o.driver_id != id) {
                throw InvalidInput("observation for '" + o.driver_id + "' filed under '" + id + "'");
            }
            o.validate();
            if (o.stimulus < 0 || o.stimulus >= spec.num_stimuli) {
                throw UnknownStimulus("stimulus id " + std::to_string(o.stimulus) + " out of range");
            }
        }
    }
}

std::size_t TrainingSet::num_observations() const {
    std::size_t n = 0;
    for (const auto& [id, obs] : drivers) {
        n += obs.size();
    }
    return n;
}

double VarianceParams::sigma2() const {
    return std::exp(2.0 * log_sigma);
}

Matrix VarianceParams::factor() const {
    Matrix l = chol_factor.triangularView<Eigen::Lower>();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        l(i, i) = std::exp(chol_factor(i, i));
    }
    return l;
}

SymMatrix VarianceParams::sigma_gamma() const {
    const Matrix l = factor();
    return SymMatrix::symmetrized(l * l.transpose());
}

VarianceParams VarianceParams::from_covariances(double sigma2, const SymMatrix& sigma_gamma) {
    VarianceParams vp;
    vp.log_sigma = 0.5 * std::log(sigma2);
    const auto p = sigma_gamma.dim();
    vp.chol_factor = Matrix::Zero(p, p);
    // Plain Cholesky that tolerates zero pivots, so singular covariances map
    // to -inf log-diagonal entries rather than failing.
    Matrix l = Matrix::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        double d = sigma_gamma(j, j) - l.row(j).head(j).squaredNorm();
        d = d > 0.0 ? std::sqrt(d) : 0.0;
        l(j, j) = d;
        for (Eigen::Index i = j + 1; i < p; ++i) {
            l(i, j) = d > 0.0 ? (sigma_gamma(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / d : 0.0;
        }
    }
    vp.chol_factor = l;
    for (Eigen::Index i = 0; i < p; ++i) {
        vp.chol_factor(i, i) = std::log(l(i, i));
    }
    return vp;
}

SymMatrix marginal_cov(const Matrix& x_d, double sigma2, const SymMatrix& sigma_gamma) {
    Matrix v = x_d * sigma_gamma.matrix() * x_d.transpose();
    v.diagonal().array() += sigma2;
    return SymMatrix::symmetrized(v);
}

SymMatrix marginal_cov(const ModelSpec& spec, const Matrix& x_d, const VarianceParams& params) {
    if (x_d.cols() != spec.p()) {
        throw InvalidInput("design has " + std::to_string(x_d.cols()) + " columns, expected " +
                           std::to_string(spec.p()));
    }
    return marginal_cov(x_d, params.sigma2(), params.sigma_gamma());
}

GlsResult gls_beta(const Matrix& x, const Vector& y, std::span<const SymMatrix> v_blocks) {
    const auto p = x.cols();
    Matrix xtvx = Matrix::Zero(p, p);
    Vector xtvy = Vector::Zero(p);
    Eigen::Index row = 0;
    for (const auto& block : v_blocks) {
        const auto n = block.dim();
        if (row + n > x.rows()) {
            throw InvalidInput("covariance blocks cover more rows than the design");
        }
        const auto xb = x.middleRows(row, n);
        Matrix rhs(n, p + 1);
        rhs << xb, y.segment(row, n);
        const Matrix sol = spd_solve(block, rhs);
        xtvx += xb.transpose() * sol.leftCols(p);
        xtvy += xb.transpose() * sol.col(p);
        row += n;
    }
    if (row != x.rows() || y.size() != x.rows()) {
        throw InvalidInput("covariance blocks do not cover the design rows");
    }
    SymMatrix info = SymMatrix::symmetrized(xtvx);
    SymMatrix cov = SymMatrix::symmetrized(generalized_inverse(info));
    Vector beta = cov.matrix() * xtvy;
    return {std::move(beta), std::move(cov)};
}

double log_likelihood(const TrainingSet& ts, const VarianceParams& params) {
    ts.validate(1);
    const ProfileLikelihood lik(ts);
    return lik.evaluate(params.sigma2(), params.factor()).loglik;
}

double pooled_residual_variance(const TrainingSet& ts) {
    double rss = 0.0;
    double dof = 0.0;
    for (const auto& [id, obs] : ts.drivers) {
        const Design d = build_design(ts.spec, obs);
        if (d.y.size() == 0) {
            continue;
        }
        Eigen::JacobiSVD<Matrix> svd(d.x, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(static_cast<double>(std::max(d.x.rows(), d.x.cols())) * 1e-12);
        const Vector b = svd.solve(d.y);
        rss += (d.y - d.x * b).squaredNorm();
        dof += static_cast<double>(d.y.size() - svd.rank());
    }
    return dof > 0.0 ? rss / dof : 0.0;
}

TrainedModel fit(const TrainingSet& ts, const FitOptions& opts) {
    ts.validate();
    const int p = ts.spec.p();
    const ProfileLikelihood lik(ts);
    const auto entries = free_entries(ts.spec, opts.block_diagonal);

    double sigma2_init = pooled_residual_variance(ts);
    if (!(sigma2_init > 0.0)) {
        double sum = 0.0;
        double sumsq = 0.0;
        double count = 0.0;
        for (const auto& [id, obs] : ts.drivers) {
            for (const auto& o : obs) {
                const double y = std::log(o.brt_s);
                sum += y;
                sumsq += y * y;
                count += 1.0;
            }
        }
        sigma2_init = count > 1.0 ? (sumsq - sum * sum / count) / (count - 1.0) : 1.0;
        if (!(sigma2_init > 0.0)) {
            sigma2_init = 1.0;
        }
    }
    const double sigma_init = std::sqrt(sigma2_init);
    VarianceParams start;
    start.log_sigma = std::log(sigma_init);
    start.chol_factor = Matrix::Zero(p, p);
    for (int i = 0; i < p; ++i) {
        start.chol_factor(i, i) = std::log(0.1 * sigma_init);
    }

    auto objective = [&](const Vector& theta) {
        const VarianceParams vp = unpack(theta, p, entries);
        return -lik.evaluate(vp.sigma2(), vp.factor()).loglik;
    };

    // Log-scale coordinates move by factors of e; off-diagonal factor entries
    // move on the scale of sigma.
    Vector base_steps(static_cast<Eigen::Index>(entries.size()) + 1);
    base_steps(0) = 0.5;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        base_steps(static_cast<Eigen::Index>(k) + 1) =
            entries[k].first == entries[k].second ? 1.0 : 0.5 * sigma_init;
    }

    detail::NelderMeadOptions nm_opts{opts.max_iterations, opts.tolerance};
    Vector theta = pack(start, entries);
    auto run = detail::nelder_mead(objective, theta, base_steps, nm_opts);
    long iterations = run.iterations;
    bool converged = run.converged;

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> scale(0.5, 1.5);
    std::bernoulli_distribution flip(0.5);
    for (int r = 0; r < opts.restarts; ++r) {
        Vector steps = base_steps;
        for (Eigen::Index k = 0; k < steps.size(); ++k) {
            steps(k) *= scale(rng) * (flip(rng) ? -1.0 : 1.0);
        }
        auto next = detail::nelder_mead(objective, run.x, steps, nm_opts);
        iterations += next.iterations;
        converged = next.converged;
        if (next.value <= run.value) {
            run = std::move(next);
        }
    }

    const VarianceParams best = unpack(run.x, p, entries);
    TrainedModel model;
    model.spec = ts.spec;
    model.stimuli = ts.stimuli;
    model.sigma2 = best.sigma2();
    model.sigma_gamma = best.sigma_gamma();

    Matrix x(static_cast<Eigen::Index>(ts.num_observations()), p);
    Vector y(x.rows());
    std::vector<SymMatrix> blocks;
    Eigen::Index row = 0;
    for (const auto& [id, obs] : ts.drivers) {
        const Design d = build_design(ts.spec, obs);
        x.middleRows(row, d.x.rows()) = d.x;
        y.segment(row, d.y.size()) = d.y;
        blocks.push_back(marginal_cov(d.x, model.sigma2, model.sigma_gamma));
        row += d.x.rows();
    }
    GlsResult gls = gls_beta(x, y, blocks);
    model.beta = std::move(gls.beta);
    model.beta_cov = std::move(gls.beta_cov);
    model.t_star = kDefaultTStar;
    model.fit_info.converged = converged;
    model.fit_info.loglik = -run.value;
    model.fit_info.iterations = iterations;
    model.fit_info.seed = opts.seed;
    return model;
}

}  // namespace pbrt
