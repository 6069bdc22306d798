#pragma once

#include "qns/statevec.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace qns {

struct EvolveOptions {
    double tol = 1e-10;        // bound on the accumulated a-posteriori error
    int krylov_dim = 30;
    int max_substeps = 100000;
};

struct EvolveStats {
    int substeps = 0;
    int matvecs = 0;
    double error_estimate = 0.0;
};

/// exp(-i H t)|psi> by a Lanczos propagator with adaptive substepping.
///
/// Each substep builds an orthonormal Krylov basis V (full
/// reorthogonalisation) and the tridiagonal projection T, then advances by
/// tau with beta0 V exp(-i T tau) e1. The step size is accepted when
/// beta_m |e_m^T exp(-i T tau) e1| <= tol * tau / t, so the per-step
/// estimates sum to at most tol. The basis does not depend on tau, which makes
/// shrinking a rejected step cheap.
template <typename Real>
BasicStateVector<Real> evolve(const HamiltonianOp& h, const BasicStateVector<Real>& state, double t_ns,
                              const EvolveOptions& options = {}, EvolveStats* stats = nullptr) {
    using Index = Eigen::Index;
    using C = std::complex<Real>;
    using Vec = AmplitudeVector<Real>;
    using Mat = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;
    using RMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using RVec = RealVector<Real>;

    if (!(t_ns >= 0.0)) throw std::invalid_argument("evolve: negative time");
    if (!(options.tol > 0.0)) throw std::invalid_argument("evolve: tolerance must be positive");
    if (options.krylov_dim < 2) throw std::invalid_argument("evolve: krylov_dim must be >= 2");
    if (state.num_qubits() != h.num_qubits()) throw std::invalid_argument("evolve: dimension mismatch");
    if (stats) *stats = {};
    if (t_ns == 0.0) return state;

    const Index n = state.dim();
    const int m_max = static_cast<int>(std::min<Index>(options.krylov_dim, n));
    const double tol = std::max(options.tol, 10.0 * std::numeric_limits<Real>::epsilon());

    Vec v = state.amplitudes();
    Mat basis(n, m_max + 1);
    Vec w(n);
    RVec alpha(m_max);
    RVec beta(m_max);

    double done = 0.0;
    double tau = std::min(t_ns, 10.0 / std::max(h.norm_bound(), 1e-300));
    tau = std::max(tau, t_ns / options.max_substeps);
    double total_err = 0.0;
    int substeps = 0;
    int matvecs = 0;

    while (done < t_ns) {
        if (++substeps > options.max_substeps)
            throw std::runtime_error("evolve: Krylov propagator did not converge within max_substeps");
        const Real beta0 = v.norm();
        basis.col(0) = v / beta0;
        int m = m_max;
        bool breakdown = false;
        Real beta_last = 0;
        for (int k = 0; k < m_max; ++k) {
            h.apply(basis.col(k), w);
            ++matvecs;
            // Two passes of classical Gram-Schmidt against the whole basis.
            for (int pass = 0; pass < 2; ++pass) {
                const Vec coeff = basis.leftCols(k + 1).adjoint() * w;
                w.noalias() -= basis.leftCols(k + 1) * coeff;
                if (pass == 0) alpha[k] = coeff[k].real();
            }
            const Real b = w.norm();
            const Real scale = std::max<Real>(static_cast<Real>(h.norm_bound()), Real(1e-300));
            if (b <= Real(64) * std::numeric_limits<Real>::epsilon() * scale || k + 1 == n) {
                m = k + 1;
                breakdown = true;
                break;
            }
            beta[k] = b;
            if (k + 1 < m_max) {
                basis.col(k + 1) = w / b;
            } else {
                beta_last = b;
            }
        }

        RMat t = RMat::Zero(m, m);
        for (int k = 0; k < m; ++k) {
            t(k, k) = alpha[k];
            if (k + 1 < m) t(k, k + 1) = t(k + 1, k) = beta[k];
        }
        Eigen::SelfAdjointEigenSolver<RMat> eig(t);
        const RMat& q = eig.eigenvectors();
        const RVec& lam = eig.eigenvalues();
        const RVec q0 = q.row(0).transpose();

        const double remaining = t_ns - done;
        double step = std::min(tau, remaining);
        Vec y(m);
        double err = 0.0;
        for (;;) {
            Vec phase(m);
            for (int k = 0; k < m; ++k)
                phase[k] = q0[k] * std::polar(Real(1), static_cast<Real>(-lam[k] * step));
            y = q.template cast<C>() * phase;
            err = breakdown ? 0.0 : static_cast<double>(beta0 * beta_last * std::abs(y[m - 1]));
            if (err <= tol * step / t_ns) break;
            step *= 0.5;
            if (step < t_ns * 1e-15)
                throw std::runtime_error("evolve: Krylov step size underflow");
        }
        v = beta0 * (basis.leftCols(m) * y);
        done = (step == remaining) ? t_ns : done + step;
        total_err += err;
        if (breakdown) {
            tau = remaining;
        } else if (err < 0.05 * tol * step / t_ns) {
            tau = step * 1.5;
        } else {
            tau = step;
        }
    }

    if (stats) {
        stats->substeps = substeps;
        stats->matvecs = matvecs;
        stats->error_estimate = total_err;
    }
    return BasicStateVector<Real>(state.num_qubits(), std::move(v));
}

}  // namespace qns
