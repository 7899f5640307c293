#include "switsyn/spectra.hpp"

#include "switsyn/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace switsyn::spectra {

namespace {

double off_diagonal_norm(const Eigen::MatrixXd& A) {
    double sum = 0.0;
    for (Eigen::Index p = 0; p < A.rows(); ++p)
        for (Eigen::Index q = p + 1; q < A.cols(); ++q) sum += 2.0 * A(p, q) * A(p, q);
    return std::sqrt(sum);
}

}  // namespace

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols()) throw Error(ErrorKind::Internal, "eigensolver needs a square matrix");
    const Eigen::Index n = M.rows();
    SymmetricEigen out;
    if (n == 0) {
        out.values.resize(0);
        out.vectors.resize(0, 0);
        return out;
    }

    Eigen::MatrixXd A = 0.5 * (M + M.transpose());
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);

    const double scale = std::max(1.0, A.norm());
    const double stop = 1e-15 * scale;
    const int max_sweeps = 64;

    for (int sweep = 0; sweep < max_sweeps && off_diagonal_norm(A) > stop; ++sweep) {
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double tau = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t;
                if (tau >= 0.0)
                    t = 1.0 / (tau + std::sqrt(1.0 + tau * tau));
                else
                    t = -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                A(p, q) = 0.0;
                A(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return A(a, a) < A(b, b); });

    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = A(order[static_cast<size_t>(k)], order[static_cast<size_t>(k)]);
        out.vectors.col(k) = V.col(order[static_cast<size_t>(k)]);
    }
    return out;
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
    if (M.rows() == 0) return 0.0;
    return symmetric_eigen(M).values(0);
}

double max_eigenvalue(const Eigen::MatrixXd& M) {
    if (M.rows() == 0) return 0.0;
    const SymmetricEigen e = symmetric_eigen(M);
    return e.values(e.values.size() - 1);
}

}  // namespace switsyn::spectra
