// pharmonic-lab: the dual pair S_A / T_A and the commutator probe. S_A rescales
// a vector field by the p-energy density of A^{-1}X; T_A projects onto perp
// gradients through the A-weighted Dirichlet problem. Their failure to commute
// on A grad u vanishes linearly as p -> 2, which is what the probe measures.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "phl/core.hpp"
#include "phl/elliptic.hpp"
#include "phl/grid.hpp"
#include "phl/lorentz.hpp"
#include "phl/pharmonic.hpp"

namespace phl {

namespace detail {

// Pointwise inverse of an m x m matrix field. Throws on a singular node.
inline Field invert_field(const Field& A) {
    int m = A.shape().rows;
    if (A.shape().cols != m || A.shape().vec2)
        throw std::invalid_argument("invert_field: A must be a scalar m x m field");
    Field inv(A.grid_ptr(), A.shape());
    std::vector<double> a(m * m), b(m * m);
    for (int i = 0; i < A.nodes(); ++i) {
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) a[r * m + c] = A.at(A.chan(r, c), i);
        if (!matm::invert(a, b, m))
            throw std::invalid_argument("invert_field: singular matrix node");
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) inv.at(inv.chan(r, c), i) = b[r * m + c];
    }
    return inv;
}

// Y_r = sum_c M_rc X_c at every node, X and Y vec2-valued with m rows.
inline Field matvec_field(const Field& M, const Field& X) {
    int m = M.shape().rows;
    if (X.shape().rows != m || !X.shape().vec2 || X.shape().cols != 1)
        throw std::invalid_argument("matvec_field: X must be m x 1 vec2");
    Field Y(X.grid_ptr(), X.shape());
    for (int i = 0; i < X.nodes(); ++i)
        for (int r = 0; r < m; ++r) {
            Vec2 s{0.0, 0.0};
            for (int c = 0; c < m; ++c) s = s + M.at(M.chan(r, c), i) * X.vec_at(c, 0, i);
            Y.set_vec(r, 0, i, s);
        }
    return Y;
}

}  // namespace detail

// S_A(X) = (1+|A^{-1}X|^2)^{p/2-1} / (1+||A^{-1}X||_{L^p}^2)^{p/2-1} * X.
inline Field op_S(const Field& A, const Field& X, double p) {
    Field inv = detail::invert_field(A);
    Field Y = detail::matvec_field(inv, X);
    double np = lp_norm(Y, p);
    double denom = std::pow(1.0 + np * np, p / 2.0 - 1.0);
    Field out = X;
    for (int i = 0; i < X.nodes(); ++i) {
        double y2 = 0.0;
        for (int c = 0; c < X.channels(); ++c) y2 += Y.at(c, i) * Y.at(c, i);
        double scale = std::pow(1.0 + y2, p / 2.0 - 1.0) / denom;
        for (int c = 0; c < X.channels(); ++c) out.at(c, i) *= scale;
    }
    return out;
}

// T_A(X) = grad-perp w where -div(A^{-1} grad w) = div(A^{-1} X^perp), w = 0 on
// the boundary. The coupled system is solved by Picard around the Laplacian:
//   -div(grad w_{k+1}) = div(A^{-1} X^perp + (A^{-1} - Id) grad w_k),
// which contracts when ||A^{-1} - Id||_inf < 1 (A near the identity, the only
// regime the estimates live in anyway).
inline Field op_T(const Field& A, const Field& X, double tol = 1e-12, int max_iter = 60) {
    int m = A.shape().rows;
    Field inv = detail::invert_field(A);
    double dev = 0.0;
    for (int i = 0; i < A.nodes(); ++i) {
        double d2 = 0.0;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) {
                double e = inv.at(inv.chan(r, c), i) - (r == c ? 1.0 : 0.0);
                d2 += e * e;
            }
        dev = std::max(dev, std::sqrt(d2));
    }
    if (dev >= 1.0)
        throw std::invalid_argument("op_T: A^{-1} too far from Id for the Picard solve");
    Field Xp = X;
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < X.nodes(); ++i) {
            Vec2 v = X.vec_at(r, 0, i);
            Xp.set_vec(r, 0, i, v.perp());
        }
    Field V0 = detail::matvec_field(inv, Xp);
    auto g = X.grid_ptr();
    Field w(g, Shape::rm(m));
    double scale = l2_norm(V0);
    if (scale == 0.0) return Field(g, X.shape());
    for (int it = 0; it < max_iter; ++it) {
        Field gw = grad(w);
        Field rhs = V0;
        if (it > 0)
            for (int i = 0; i < X.nodes(); ++i)
                for (int r = 0; r < m; ++r) {
                    Vec2 s{0.0, 0.0};
                    for (int c = 0; c < m; ++c) {
                        double n = inv.at(inv.chan(r, c), i) - (r == c ? 1.0 : 0.0);
                        s = s + n * gw.vec_at(c, 0, i);
                    }
                    rhs.set_vec(r, 0, i, rhs.vec_at(r, 0, i) + s);
                }
        // stencil divergence as a plain source: for X a discrete perp gradient
        // it cancels exactly away from the cut cells, where the face-flux
        // assembly would leave an O(1) band defect
        Field dv = divergence(rhs);
        Field ones(g, Shape::scalar(), 1.0);
        Field wn = solve_dirichlet(ones, &dv, nullptr, zero_boundary());
        Field diff = wn;
        diff -= w;
        double change = l2_norm(diff);
        w = std::move(wn);
        if (change <= tol * std::max(1.0, l2_norm(w))) break;
    }
    return perp_grad(w);
}

struct OperatorProbe {
    std::vector<double> p;        // probe exponents
    std::vector<double> rho;      // ||T_A(S_A(A grad u))||_{p'} / bracket
    std::vector<double> lhs;      // commutator output norms
    std::vector<double> bracket;  // ||grad u||_p^{3/4} + ||grad u||_p
    double slope = 0.0;           // fit of log rho vs log(p-2), p > 2 entries
    double intercept = 0.0;
};

// rho(p) for the fixed pair (A, u): apply S_A then T_A to A grad u and compare
// against the gradient bracket. The output vanishes identically at p = 2, so
// the fit uses the p > 2 entries only.
inline OperatorProbe commutator_probe(const Field& A, const Field& u,
                                      const std::vector<double>& p_list) {
    Field gu = grad(u);
    Field X = detail::matvec_field(A, gu);
    OperatorProbe probe;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (double p : p_list) {
        Field S = op_S(A, X, p);
        Field T = op_T(A, S);
        double lhs = lp_norm(T, p / (p - 1.0));
        double np = lp_norm(gu, p);
        double bracket = std::pow(np, 0.75) + np;
        double rho = bracket > 0.0 ? lhs / bracket : 0.0;
        probe.p.push_back(p);
        probe.lhs.push_back(lhs);
        probe.bracket.push_back(bracket);
        probe.rho.push_back(rho);
        if (p > 2.0 && rho > 0.0) {
            double lx = std::log(p - 2.0), ly = std::log(rho);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++n;
        }
    }
    if (n >= 2) {
        probe.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        probe.intercept = (sy - probe.slope * sx) / n;
    }
    return probe;
}

struct DiscL21Report {
    double t = 0.0, p = 0.0;
    double lhs = 0.0;    // ||grad u||_{L^{2,1}(B_t)}
    double term1 = 0.0;  // (p-2) [np^{3/4}+np]^{1/(p-1)} (1+np^2)^{(p-2)/(2(p-1))}
    double term2 = 0.0;  // [int f |Omega|^2]^{1/(2(p-1))} (1+np^2)^{p/(4(p-1))}
    double term3 = 0.0;  // np^{1/(p-1)} (1+np^2)^{(p-2)/(2(p-1))}
    double grad_lp = 0.0;
};

// Interior L^{2,1} bound bookkeeping: the left side and the three right-hand
// summands, constants stripped. The (p-2) power in term1 is reported with
// exponent one (the commutator rate); the true exponent is whatever the data
// says, so downstream fits should divide it back out.
inline DiscL21Report disc_l21_report(const Field& u, double p, const Field& Omega, double t) {
    DiscL21Report rep;
    rep.t = t;
    rep.p = p;
    Field gu = grad(u);
    Field mag = magnitude(gu);
    Field cut = mag;
    const Grid& g = u.grid();
    for (int i = 0; i < cut.nodes(); ++i) {
        Vec2 q = g.nodes[i];
        if (q.x * q.x + q.y * q.y > t * t) cut.at(0, i) = 0.0;
    }
    rep.lhs = lorentz_l21(cut);
    double np = lp_norm(gu, p);
    rep.grad_lp = np;
    Field f = weight_f(u, p);
    Field dens(u.grid_ptr(), Shape::scalar());
    for (int i = 0; i < dens.nodes(); ++i) {
        double s = 0.0;
        for (int c = 0; c < Omega.channels(); ++c) s += Omega.at(c, i) * Omega.at(c, i);
        dens.at(0, i) = f.at(0, i) * s;
    }
    double en = integrate(dens);
    double q = 1.0 / (p - 1.0);
    double base = 1.0 + np * np;
    rep.term1 = (p - 2.0) * std::pow(std::pow(np, 0.75) + np, q) *
                std::pow(base, (p - 2.0) / (2.0 * (p - 1.0)));
    rep.term2 = std::pow(en, 0.5 * q) * std::pow(base, p / (4.0 * (p - 1.0)));
    rep.term3 = std::pow(np, q) * std::pow(base, (p - 2.0) / (2.0 * (p - 1.0)));
    return rep;
}

}  // namespace phl
