#pragma once

#include <cmath>
#include <Eigen/Sparse>

namespace flowfront {

struct CgResult {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Jacobi-preconditioned conjugate gradient for a symmetric positive definite system.
/// `x` holds the initial guess on entry and the solution on exit. Convergence is
/// declared when ||b - A x|| <= tol * ||b||.
template <class Matrix>
CgResult solve_pcg(const Matrix& A, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                   double tol, int max_iterations) {
    CgResult out;
    const Eigen::Index n = b.size();
    if (x.size() != n) x = Eigen::VectorXd::Zero(n);

    const double b_norm = b.norm();
    if (b_norm == 0.0) {
        x.setZero();
        out.converged = true;
        return out;
    }

    const Eigen::VectorXd inv_diag = A.diagonal().cwiseInverse();
    Eigen::VectorXd r = b - A * x;
    Eigen::VectorXd z = inv_diag.cwiseProduct(r);
    Eigen::VectorXd p = z;
    Eigen::VectorXd q(n);
    double rho = r.dot(z);

    out.relative_residual = r.norm() / b_norm;
    while (out.relative_residual > tol && out.iterations < max_iterations) {
        q.noalias() = A * p;
        const double alpha = rho / p.dot(q);
        x += alpha * p;
        r -= alpha * q;
        ++out.iterations;

        out.relative_residual = r.norm() / b_norm;
        if (out.relative_residual <= tol) break;

        z = inv_diag.cwiseProduct(r);
        const double rho_next = r.dot(z);
        p = z + (rho_next / rho) * p;
        rho = rho_next;
    }
    out.converged = out.relative_residual <= tol;
    return out;
}

}  // namespace flowfront
