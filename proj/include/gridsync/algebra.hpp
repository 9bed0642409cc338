#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridsync {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class ErrorCategory { validation, singular, numerical, unsupported };

inline const char* category_name(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::singular: return "singular";
    case ErrorCategory::numerical: return "numerical";
    case ErrorCategory::unsupported: return "unsupported";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool ok, const std::string& msg) {
    if (!ok) fail(ErrorCategory::validation, msg);
}

constexpr double kPi = 3.14159265358979323846;

/// Quarter-turn rotation [[0,-1],[1,0]].
inline Eigen::Matrix2d quarter_turn() {
    Eigen::Matrix2d j;
    j << 0.0, -1.0, 1.0, 0.0;
    return j;
}

inline Eigen::Matrix2d rot2(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
}

/// A ⊗ I₂.
inline Mat kron_i2(const Mat& a) {
    Mat out = Mat::Zero(2 * a.rows(), 2 * a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            out(2 * r, 2 * c) = a(r, c);
            out(2 * r + 1, 2 * c + 1) = a(r, c);
        }
    return out;
}

inline Mat diag_i2(const Vec& d) { return kron_i2(d.asDiagonal().toDenseMatrix()); }

/// I_n ⊗ j.
inline Mat j_blocks(Eigen::Index n) {
    Mat out = Mat::Zero(2 * n, 2 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out(2 * k, 2 * k + 1) = -1.0;
        out(2 * k + 1, 2 * k) = 1.0;
    }
    return out;
}

/// Block-diagonal rotation, one 2x2 block per angle.
inline Mat rotation_blocks(const Vec& theta) {
    const Eigen::Index n = theta.size();
    Mat out = Mat::Zero(2 * n, 2 * n);
    for (Eigen::Index k = 0; k < n; ++k) out.block<2, 2>(2 * k, 2 * k) = rot2(theta(k));
    return out;
}

/// r + iω₀l as real 2x2 blocks: r·I + ω₀l·j per element.
/// Rejects non-positive resistance and negative inductance.
inline Mat impedance_block(const Vec& r, const Vec& l, double omega0) {
    require(r.size() == l.size(), "impedance_block: size mismatch");
    Mat out = Mat::Zero(2 * r.size(), 2 * r.size());
    for (Eigen::Index k = 0; k < r.size(); ++k) {
        require(r(k) > 0.0 && std::isfinite(r(k)), "impedance_block: resistance must be positive");
        require(l(k) >= 0.0 && std::isfinite(l(k)), "impedance_block: inductance must be nonnegative");
        const double x = omega0 * l(k);
        out(2 * k, 2 * k) = r(k);
        out(2 * k + 1, 2 * k + 1) = r(k);
        out(2 * k, 2 * k + 1) = -x;
        out(2 * k + 1, 2 * k) = x;
    }
    return out;
}

/// Per-angle embedding (cos θ_k, sin θ_k) stacked.
inline Vec embed(const Vec& theta) {
    Vec phi(2 * theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        phi(2 * k) = std::cos(theta(k));
        phi(2 * k + 1) = std::sin(theta(k));
    }
    return phi;
}

/// diag(x) for a 2n vector: 2n x n, column k holds block k of x.
inline Mat block_column_diag(const Vec& x) {
    const Eigen::Index n = x.size() / 2;
    Mat out = Mat::Zero(2 * n, n);
    for (Eigen::Index k = 0; k < n; ++k) out.block<2, 1>(2 * k, k) = x.segment<2>(2 * k);
    return out;
}

inline Mat sym_part(const Mat& a) { return 0.5 * (a + a.transpose()); }
inline Mat skew_part(const Mat& a) { return 0.5 * (a - a.transpose()); }

/// True when every 2x2 block has the form a·I + b·j.
inline bool commutes_with_j(const Mat& a, double tol = 1e-12) {
    if (a.rows() % 2 || a.cols() % 2) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (Eigen::Index r = 0; r < a.rows(); r += 2)
        for (Eigen::Index c = 0; c < a.cols(); c += 2) {
            const auto b = a.block<2, 2>(r, c);
            if (std::abs(b(0, 0) - b(1, 1)) > tol * scale || std::abs(b(0, 1) + b(1, 0)) > tol * scale)
                return false;
        }
    return true;
}

/// LU factorization that refuses nearly singular input.
class Lu {
public:
    explicit Lu(const Mat& a, double min_rcond = 1e-12) : lu_(a) {
        if (a.rows() != a.cols()) fail(ErrorCategory::validation, "Lu: matrix is not square");
        if (!a.allFinite()) fail(ErrorCategory::numerical, "Lu: non-finite entries");
        rcond_ = a.rows() == 0 ? 1.0 : lu_.rcond();
        if (!(rcond_ >= min_rcond))
            fail(ErrorCategory::singular, "matrix is singular to working precision (rcond=" +
                                              std::to_string(rcond_) + ")");
    }
    double rcond() const { return rcond_; }
    Mat solve(const Mat& b) const { return lu_.solve(b); }
    Vec solve(const Vec& b) const { return lu_.solve(b); }
    Mat inverse() const { return lu_.inverse(); }

private:
    Eigen::PartialPivLU<Mat> lu_;
    double rcond_ = 0.0;
};

inline Mat inverse(const Mat& a) { return Lu(a).inverse(); }
inline Vec solve(const Mat& a, const Vec& b) { return Lu(a).solve(b); }

struct SymEigen {
    Vec values;   ///< ascending
    Mat vectors;  ///< columns
    int sweeps = 0;
};

/// Cyclic Jacobi rotations for a symmetric matrix. Converges when the
/// off-diagonal Frobenius norm drops below tol times the matrix norm.
inline SymEigen jacobi_eigen(const Mat& input, double tol = 1e-12, int max_sweeps = 100) {
    require(input.rows() == input.cols(), "jacobi_eigen: matrix is not square");
    const Eigen::Index n = input.rows();
    Mat a = sym_part(input);
    Mat v = Mat::Identity(n, n);
    const double norm = std::max(a.norm(), 1e-300);
    auto off = [&] {
        double s = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };
    int sweep = 0;
    for (; sweep < max_sweeps && off() > tol * norm; ++sweep) {
        for (Eigen::Index p = 0; p < n - 1; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    if (off() > tol * norm) fail(ErrorCategory::numerical, "jacobi_eigen: no convergence");
    std::vector<Eigen::Index> order(n);
    for (Eigen::Index k = 0; k < n; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
    SymEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = a(order[k], order[k]);
        out.vectors.col(k) = v.col(order[k]);
    }
    out.sweeps = sweep;
    return out;
}

inline double min_sym_eigenvalue(const Mat& a) {
    if (a.rows() == 0) return 0.0;
    return jacobi_eigen(a).values(0);
}

/// Wrap an angle to (-π, π].
inline double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

}  // namespace gridsync
