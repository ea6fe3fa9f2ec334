#include "pbrt/driver.hpp"

#include "pbrt/errors.hpp"

namespace pbrt {

namespace {

constexpr double kPsdTol = 1e-8;

}  // namespace

BlupResult compute_blup(std::span<const Observation> obs, const TrainedModel& model) {
    const auto p = static_cast<Eigen::Index>(model.spec.p());
    if (obs.empty()) {
        return {Vector::Zero(p), SymMatrix::zero(p), model.sigma_gamma};
    }
    const Design d = build_design(model.spec, obs);
    const Matrix& x = d.x;
    const Matrix& s = model.sigma_gamma.matrix();
    const Matrix& b = model.beta_cov.matrix();

    Matrix v = x * s * x.transpose();
    v.diagonal().array() += model.sigma2;
    const SymMatrix v_sym = SymMatrix::symmetrized(v);

    // One factorization serves V^-1 r and V^-1 X.
    const Vector resid = d.y - x * model.beta;
    Matrix rhs(x.rows(), p + 1);
    rhs << x, resid;
    const Matrix sol = spd_solve(v_sym, rhs);
    const auto vinv_x = sol.leftCols(p);
    const auto vinv_r = sol.col(p);

    const Matrix sxt = s * x.transpose();
    BlupResult out;
    out.gamma_hat = sxt * vinv_r;

    // X' V^-1 (V - X B X') V^-1 X = X'V^-1 X - (X'V^-1 X) B (X'V^-1 X)
    const Matrix info = x.transpose() * vinv_x;
    const Matrix middle = info - info * b * info;
    out.gamma_hat_cov = SymMatrix::symmetrized(s * middle * s);

    const Matrix cross = b * info * s;
    const Matrix pe = b + (s - out.gamma_hat_cov.matrix()) - cross - cross.transpose();
    out.pred_err_cov = project_psd(pe, kPsdTol);
    return out;
}

Vector henderson_oracle(std::span<const Observation> obs, const TrainedModel& model) {
    if (obs.empty()) {
        throw InvalidInput("henderson_oracle needs at least one observation");
    }
    const Design d = build_design(model.spec, obs);
    const Matrix& s = model.sigma_gamma.matrix();

    Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
    const Vector& ev = eig.eigenvalues();
    const double cutoff = static_cast<double>(s.rows()) * ev.cwiseAbs().maxCoeff() * 1e-12;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > cutoff) {
            keep.push_back(i);
        }
    }
    const auto k = static_cast<Eigen::Index>(keep.size());
    if (k == 0) {
        return Vector::Zero(s.rows());
    }
    Matrix u(s.rows(), k);
    Vector lambda(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        u.col(j) = eig.eigenvectors().col(keep[static_cast<std::size_t>(j)]);
        lambda(j) = ev(keep[static_cast<std::size_t>(j)]);
    }
    // gamma = U z with (U'X'XU / sigma2 + Lambda^-1) z = U'X'(y - X beta) / sigma2
    const Matrix xu = d.x * u;
    Matrix lhs = xu.transpose() * xu / model.sigma2;
    lhs.diagonal() += lambda.cwiseInverse();
    const Vector rhs = xu.transpose() * (d.y - d.x * model.beta) / model.sigma2;
    const Vector z = generalized_inverse(lhs) * rhs;
    return u * z;
}

DriverState::DriverState(std::string driver_id, std::size_t window)
    : driver_id_(std::move(driver_id)), window_(window) {
    if (window_ == 0) {
        throw InvalidInput("observation window must be positive");
    }
}

std::vector<Observation> DriverState::observations() const {
    return {observations_.begin(), observations_.end()};
}

void DriverState::add_observation(const Observation& obs) {
    if (obs.driver_id != driver_id_) {
        throw DriverMismatch("observation for driver '" + obs.driver_id + "' added to state of '" +
                             driver_id_ + "'");
    }
    obs.validate();
    observations_.push_back(obs);
    while (observations_.size() > window_) {
        observations_.pop_front();
    }
    cached_.reset();
}

const BlupResult& DriverState::blup(const TrainedModel& model) {
    if (!cached_) {
        const auto obs = observations();
        cached_ = compute_blup(obs, model);
    }
    return *cached_;
}

}  // namespace pbrt
