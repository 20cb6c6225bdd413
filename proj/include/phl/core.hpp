// pharmonic-lab: small dense matrix helpers for m x m fields (m is tiny, 2..6).
#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace phl {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    // (-y, x), the perp rotation used by grad^perp.
    Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// Row-major m x m matrix stored in a flat caller-provided buffer.
namespace matm {

inline void identity(std::span<double> a, int m) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) a[i * m + j] = (i == j) ? 1.0 : 0.0;
}

inline void mul(std::span<const double> a, std::span<const double> b, std::span<double> c, int m) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int k = 0; k < m; ++k) s += a[i * m + k] * b[k * m + j];
            c[i * m + j] = s;
        }
}

inline void transpose(std::span<const double> a, std::span<double> at, int m) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) at[j * m + i] = a[i * m + j];
}

inline double frob2(std::span<const double> a, int m) {
    double s = 0.0;
    for (int i = 0; i < m * m; ++i) s += a[i] * a[i];
    return s;
}

inline void skew_part(std::span<const double> a, std::span<double> out, int m) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) out[i * m + j] = 0.5 * (a[i * m + j] - a[j * m + i]);
}

inline double det(std::span<const double> a, int m) {
    // Gaussian elimination with partial pivoting on a scratch copy.
    std::vector<double> b(a.begin(), a.end());
    double d = 1.0;
    for (int c = 0; c < m; ++c) {
        int piv = c;
        for (int r = c + 1; r < m; ++r)
            if (std::fabs(b[r * m + c]) > std::fabs(b[piv * m + c])) piv = r;
        if (b[piv * m + c] == 0.0) return 0.0;
        if (piv != c) {
            for (int j = 0; j < m; ++j) std::swap(b[piv * m + j], b[c * m + j]);
            d = -d;
        }
        d *= b[c * m + c];
        for (int r = c + 1; r < m; ++r) {
            double t = b[r * m + c] / b[c * m + c];
            for (int j = c; j < m; ++j) b[r * m + j] -= t * b[c * m + j];
        }
    }
    return d;
}

inline bool invert(std::span<const double> a, std::span<double> inv, int m) {
    std::vector<double> b(a.begin(), a.end());
    identity(inv, m);
    for (int c = 0; c < m; ++c) {
        int piv = c;
        for (int r = c + 1; r < m; ++r)
            if (std::fabs(b[r * m + c]) > std::fabs(b[piv * m + c])) piv = r;
        if (std::fabs(b[piv * m + c]) < 1e-14) return false;
        if (piv != c)
            for (int j = 0; j < m; ++j) {
                std::swap(b[piv * m + j], b[c * m + j]);
                std::swap(inv[piv * m + j], inv[c * m + j]);
            }
        double p = b[c * m + c];
        for (int j = 0; j < m; ++j) {
            b[c * m + j] /= p;
            inv[c * m + j] /= p;
        }
        for (int r = 0; r < m; ++r) {
            if (r == c) continue;
            double t = b[r * m + c];
            if (t == 0.0) continue;
            for (int j = 0; j < m; ++j) {
                b[r * m + j] -= t * b[c * m + j];
                inv[r * m + j] -= t * inv[c * m + j];
            }
        }
    }
    return true;
}

// exp of an antisymmetric matrix. Closed forms for m=2,3, scaling-and-squaring
// Taylor otherwise (m stays tiny here, accuracy is ample).
inline void exp_so(std::span<const double> u, std::span<double> out, int m) {
    if (m == 2) {
        double t = u[1];  // u = [[0, t], [-t, 0]]
        double c = std::cos(t), s = std::sin(t);
        out[0] = c; out[1] = s; out[2] = -s; out[3] = c;
        return;
    }
    if (m == 3) {
        // Rodrigues with axis w from u = [w]_x convention u(i,j) = -eps_ijk w_k.
        double w1 = u[7], w2 = u[2], w3 = u[3];
        double th = std::sqrt(w1 * w1 + w2 * w2 + w3 * w3);
        identity(out, 3);
        if (th < 1e-300) return;
        double a = std::sin(th) / th;
        double b = (1.0 - std::cos(th)) / (th * th);
        std::vector<double> u2(9);
        mul(u, u, u2, 3);
        for (int i = 0; i < 9; ++i) out[i] += a * u[i] + b * u2[i];
        return;
    }
    double nrm = std::sqrt(frob2(u, m));
    int sq = 0;
    std::vector<double> us(u.begin(), u.end());
    while (nrm > 0.5) {
        for (auto& v : us) v *= 0.5;
        nrm *= 0.5;
        ++sq;
    }
    std::vector<double> term(m * m), acc(m * m), tmp(m * m);
    identity(acc, m);
    identity(term, m);
    for (int k = 1; k <= 16; ++k) {
        mul(term, us, tmp, m);
        for (int i = 0; i < m * m; ++i) term[i] = tmp[i] / k;
        for (int i = 0; i < m * m; ++i) acc[i] += term[i];
    }
    for (int s = 0; s < sq; ++s) {
        mul(acc, acc, tmp, m);
        acc = tmp;
    }
    for (int i = 0; i < m * m; ++i) out[i] = acc[i];
}

// Nearest-rotation projection by Newton-Schulz; valid for inputs already close
// to O(m), which is the only use here (drift removal after a descent step).
inline void polar_orthogonalize(std::span<double> q, int m, int iters = 8) {
    std::vector<double> qt(m * m), qtq(m * m), tmp(m * m);
    for (int it = 0; it < iters; ++it) {
        transpose(q, qt, m);
        mul(qt, q, qtq, m);
        // q <- q (3I - q^t q)/2
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) qtq[i * m + j] = ((i == j) ? 3.0 : 0.0) - qtq[i * m + j];
        std::vector<double> qc(q.begin(), q.end());
        mul(qc, qtq, tmp, m);
        for (int i = 0; i < m * m; ++i) q[i] = 0.5 * tmp[i];
    }
}

// Frobenius distance to SO(m) via polar projection.
inline double dist_so(std::span<const double> a, int m) {
    std::vector<double> q(a.begin(), a.end());
    // Newton iteration for the orthogonal polar factor: q <- (q + q^-T)/2.
    std::vector<double> qi(m * m), qit(m * m);
    for (int it = 0; it < 40; ++it) {
        if (!invert(q, qi, m)) break;
        transpose(qi, qit, m);
        double diff = 0.0;
        for (int i = 0; i < m * m; ++i) {
            double nq = 0.5 * (q[i] + qit[i]);
            diff += (nq - q[i]) * (nq - q[i]);
            q[i] = nq;
        }
        if (diff < 1e-30) break;
    }
    double s = 0.0;
    for (int i = 0; i < m * m; ++i) {
        double d = a[i] - q[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace matm
}  // namespace phl
