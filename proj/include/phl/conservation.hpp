// pharmonic-lab: conservation-law construction. Given a map u, its potential
// Omega and a converged gauge (Q, xi), builds matrix fields (A, B) with
//   -div(f A grad u) = grad-perp B . grad u
// by the truncated-weight fixed-point iteration: a seed B_0 driven by xi, then
// alternating weighted Dirichlet solves for eps_k and weighted Neumann solves
// for B_k, summed to eps = sum eps_k, B = sum B_k, A = (Id + eps) Q.
#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "phl/core.hpp"
#include "phl/elliptic.hpp"
#include "phl/gauge.hpp"
#include "phl/grid.hpp"
#include "phl/pharmonic.hpp"

namespace phl {

inline Field truncate_weight(const Field& f, double M) {
    if (M < 1.0) throw std::invalid_argument("truncate_weight: M must be >= 1");
    Field out = f;
    for (int i = 0; i < out.nodes(); ++i) out.at(0, i) = std::min(out.at(0, i), M);
    return out;
}

struct EstimateLedger {
    double I3_lhs = 0.0;  // ||dist(A,SO(m))||_inf^2 + int f |grad A|^2
    double I3_rhs = 0.0;  // int f |Omega|^2
    double I4_lhs = 0.0;  // int |grad B|^2 / f
    double I4_rhs = 0.0;
    double eps_lhs = 0.0;  // ||eps||_inf + ||sqrt(f) grad eps||_2 + ||grad B/sqrt(f)||_2
    double eps_rhs = 0.0;  // ||grad xi / sqrt(f)||_2
    double C_measured = 0.0;  // max(I3, I4 ratio)
};

struct ConservationPair {
    Field A;    // (Id + eps) Q
    Field B;    // mean-zero, m x m
    Field eps;  // zero-trace Dirichlet part, m x m
    Field Q;    // gauge rotation used in the build
    Field xi;   // stream potential used in the build
    double M = 0.0;
    double sigma_measured = 0.0;          // int f_M |Omega|^2
    std::vector<double> history;          // increment norms, k = 0, 1, ...
    std::vector<double> contraction_ratios;  // r_k = inc_k / inc_{k-1}
    bool converged = false;
    bool diverged = false;
    EstimateLedger estimates;
    double diagnostic = 0.0;  // algebraic-identity defect, relative
    double residual = 0.0;    // weak conservation-law residual (full build only)
};

namespace detail {

// increment norm per step: ||e||_inf + ||sqrt(f) grad e||_2 + ||grad b / sqrt(f)||_2
inline double step_norm(const Field& e, const Field& b, const Field& fM) {
    const Grid& g = e.grid();
    Field ge = grad(e), gb = grad(b);
    double we = 0.0, wb = 0.0;
    for (int i = 0; i < e.nodes(); ++i) {
        double se = 0.0, sb = 0.0;
        for (int c = 0; c < ge.channels(); ++c) {
            se += ge.at(c, i) * ge.at(c, i);
            sb += gb.at(c, i) * gb.at(c, i);
        }
        we += g.areas[i] * fM.at(0, i) * se;
        wb += g.areas[i] * sb / fM.at(0, i);
    }
    return max_abs(e) + std::sqrt(we) + std::sqrt(wb);
}

}  // namespace detail

// The fixed-point loop. Solves, with f = f_M and all matrix products m x m:
//   div(grad B_0 / f) = -div((grad xi / f) Q),  dnu B_0 = -dnu xi,  eps_0 = 0;
// then for k >= 1
//   -div(f grad eps_k) = -div(eps_{k-1} gp xi) + grad B_{k-1} . gp Q^T,  eps_k = 0 on bd,
//   div(grad B_k / f)  = -div(gp eps_{k-1} Q) - div(eps_{k-1} (grad xi / f) Q),  dnu B_k = 0,
// (gp = grad-perp) and accumulates eps = sum eps_k, B = sum B_k.
inline ConservationPair iterate_eps_B(const Field& Q, const Field& xi, const Field& fM,
                                      int k_max = 30, double tol = 1e-10) {
    int m = Q.shape().rows;
    if (xi.shape().rows != m || xi.shape().cols != m || xi.shape().vec2)
        throw std::invalid_argument("iterate_eps_B: xi must be a scalar m x m field");
    auto grid = Q.grid_ptr();
    int n = Q.nodes();

    Field invf(grid, Shape::scalar());
    for (int i = 0; i < n; ++i) invf.at(0, i) = 1.0 / fM.at(0, i);

    Field gxi = grad(xi);  // vec2 m x m
    Field gQ = grad(Q);

    ConservationPair pair;
    pair.Q = Q;
    pair.xi = xi;

    // seed: div(grad B0 / f) = -div((grad xi / f) Q), dnu B0 = -dnu xi
    Field V0(grid, Shape::vec2_matrix(m));
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) {
                Vec2 s{0, 0};
                for (int k = 0; k < m; ++k)
                    s = s + Q.at(Q.chan(k, c), i) * gxi.vec_at(r, k, i);
                V0.set_vec(r, c, i, s * (-invf.at(0, i)));
            }
    BoundaryFn flux0 = [&gxi, m](Vec2 p, int c) {
        Vec2 nu = boundary_normal(gxi.grid(), p);
        return -(interpolate(gxi, p, 2 * c) * nu.x + interpolate(gxi, p, 2 * c + 1) * nu.y);
    };
    Field B_prev = solve_neumann(invf, &V0, flux0);
    Field eps_prev(grid, Shape::matrix(m));

    pair.eps = eps_prev;
    pair.B = B_prev;
    double inc = detail::step_norm(eps_prev, B_prev, fM);
    pair.history.push_back(inc);
    pair.converged = inc < tol;

    int rising = 0;
    for (int k = 1; k <= k_max && !pair.converged && !pair.diverged; ++k) {
        Field gB = grad(B_prev), ge = grad(eps_prev);
        // source and div-source for eps_k
        Field src(grid, Shape::matrix(m));
        Field Ve(grid, Shape::vec2_matrix(m));
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) {
                    double s = 0.0;
                    Vec2 v{0, 0};
                    for (int q = 0; q < m; ++q) {
                        // grad B . gp(Q^T): (Q^T)_{qc} = Q_{cq}
                        s += gB.vec_at(r, q, i).dot(gQ.vec_at(c, q, i).perp());
                        v = v - eps_prev.at(eps_prev.chan(r, q), i) * gxi.vec_at(q, c, i).perp();
                    }
                    src.at(src.chan(r, c), i) = s;
                    Ve.set_vec(r, c, i, v);
                }
        Field eps_k = solve_dirichlet(fM, &src, &Ve, zero_boundary());
        // div-source for B_k
        Field Vb(grid, Shape::vec2_matrix(m));
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) {
                    Vec2 v{0, 0};
                    for (int q = 0; q < m; ++q)
                        v = v - Q.at(Q.chan(q, c), i) * ge.vec_at(r, q, i).perp();
                    // eps (grad xi / f) Q term
                    for (int q = 0; q < m; ++q) {
                        Vec2 xq{0, 0};
                        for (int l = 0; l < m; ++l)
                            xq = xq + Q.at(Q.chan(l, c), i) * gxi.vec_at(q, l, i);
                        v = v - eps_prev.at(eps_prev.chan(r, q), i) * invf.at(0, i) * xq;
                    }
                    Vb.set_vec(r, c, i, v);
                }
        Field B_k = solve_neumann(invf, &Vb, zero_boundary());

        double inc_k = detail::step_norm(eps_k, B_k, fM);
        double ratio = (inc > 0) ? inc_k / inc : 0.0;
        pair.history.push_back(inc_k);
        pair.contraction_ratios.push_back(ratio);
        rising = (ratio > 1.0) ? rising + 1 : 0;
        if (rising >= 3) {
            pair.diverged = true;
            break;
        }
        pair.eps += eps_k;
        pair.B += B_k;
        eps_prev = std::move(eps_k);
        B_prev = std::move(B_k);
        inc = inc_k;
        pair.converged = inc < tol;
    }

    // A = (Id + eps) Q
    pair.A = Field(grid, Shape::matrix(m));
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) {
                double s = Q.at(Q.chan(r, c), i);
                for (int q = 0; q < m; ++q)
                    s += pair.eps.at(pair.eps.chan(r, q), i) * Q.at(Q.chan(q, c), i);
                pair.A.at(pair.A.chan(r, c), i) = s;
            }
    return pair;
}

// Weak residual of -div(f A grad u) = gp B . grad u over the bump test family:
// max over components and test fields of
//   |int f (A grad u)^a . grad phi - int (gp B . grad u)^a phi| / int |grad phi|^2.
inline double conservation_residual(const Field& u, double p, const Field& A, const Field& B) {
    int m = u.channels();
    if (A.shape().rows != m || B.shape().rows != m)
        throw std::invalid_argument("conservation_residual: shape mismatch");
    auto grid = u.grid_ptr();
    const Grid& g = *grid;
    Field f = weight_f(u, p);
    Field gu = grad(u), gB = grad(B);
    auto tests = make_test_fields(grid);
    double worst = 0.0;
    for (const auto& tf : tests) {
        for (int a = 0; a < m; ++a) {
            double lhs = 0.0, rhs = 0.0;
            for (int i = 0; i < u.nodes(); ++i) {
                Vec2 Agu{0, 0};
                double rv = 0.0;
                for (int b = 0; b < m; ++b) {
                    Agu = Agu + A.at(A.chan(a, b), i) * gu.vec_at(b, 0, i);
                    rv += gB.vec_at(a, b, i).perp().dot(gu.vec_at(b, 0, i));
                }
                lhs += g.areas[i] * f.at(0, i) * Agu.dot(tf.gphi.vec_at(0, 0, i));
                rhs += g.areas[i] * rv * tf.phi.at(0, i);
            }
            worst = std::max(worst, std::fabs(lhs - rhs) / tf.energy);
        }
    }
    return worst;
}

inline EstimateLedger verify_estimates(const ConservationPair& pair, const Field& f,
                                       const Field& Omega) {
    const Field& A = pair.A;
    int m = A.shape().rows;
    const Grid& g = A.grid();
    int n = A.nodes();
    EstimateLedger led;

    Field gA = grad(A), gB = grad(pair.B), ge = grad(pair.eps), gxi = grad(pair.xi);
    std::vector<double> buf(m * m);
    double dist_sup = 0.0, enA = 0.0, enB = 0.0, enOm = 0.0, ene = 0.0, enxi = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) buf[r * m + c] = A.at(A.chan(r, c), i);
        dist_sup = std::max(dist_sup, matm::dist_so(buf, m));
        double sA = 0.0, sB = 0.0, sOm = 0.0, se = 0.0, sxi = 0.0;
        for (int c = 0; c < gA.channels(); ++c) sA += gA.at(c, i) * gA.at(c, i);
        for (int c = 0; c < gB.channels(); ++c) sB += gB.at(c, i) * gB.at(c, i);
        for (int c = 0; c < Omega.channels(); ++c) sOm += Omega.at(c, i) * Omega.at(c, i);
        for (int c = 0; c < ge.channels(); ++c) se += ge.at(c, i) * ge.at(c, i);
        for (int c = 0; c < gxi.channels(); ++c) sxi += gxi.at(c, i) * gxi.at(c, i);
        double fv = f.at(0, i), a = g.areas[i];
        enA += a * fv * sA;
        enB += a * sB / fv;
        enOm += a * fv * sOm;
        ene += a * fv * se;
        enxi += a * sxi / fv;
    }
    led.I3_lhs = dist_sup * dist_sup + enA;
    led.I3_rhs = enOm;
    led.I4_lhs = enB;
    led.I4_rhs = enOm;
    led.eps_lhs = max_abs(pair.eps) + std::sqrt(ene) + std::sqrt(enB);
    led.eps_rhs = std::sqrt(enxi);
    if (enOm > 0) led.C_measured = std::max(led.I3_lhs, led.I4_lhs) / enOm;
    return led;
}

// || gp B - f grad(eps) Q + (Id + eps) gp xi Q ||_2 / || grad xi ||_2 -- the
// algebraic identity the summed iteration satisfies exactly in the continuum.
inline double diagnostic_D(const ConservationPair& pair, const Field& xi, const Field& Q,
                           const Field& fM) {
    int m = Q.shape().rows;
    auto grid = Q.grid_ptr();
    int n = Q.nodes();
    Field gB = grad(pair.B), ge = grad(pair.eps), gxi = grad(xi);
    Field T(grid, Shape::vec2_matrix(m));
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) {
                Vec2 t = gB.vec_at(r, c, i).perp();
                for (int q = 0; q < m; ++q) {
                    t = t - fM.at(0, i) * ge.vec_at(r, q, i) * Q.at(Q.chan(q, c), i);
                    // (Id + eps)_{rq} (gp xi)_{ql} Q_{lc}
                    double idq = (r == q ? 1.0 : 0.0) + pair.eps.at(pair.eps.chan(r, q), i);
                    Vec2 x{0, 0};
                    for (int l = 0; l < m; ++l)
                        x = x + Q.at(Q.chan(l, c), i) * gxi.vec_at(q, l, i).perp();
                    t = t + idq * x;
                }
                T.set_vec(r, c, i, t);
            }
    double scale = l2_norm(gxi);
    return (scale > 0) ? l2_norm(T) / scale : l2_norm(T);
}

struct ConservationConfig {
    double M = 0.0;  // truncation level; <= 0 means max(f) (truncation inactive)
    int k_max = 30;
    double tol = 1e-10;        // increment norm stopping threshold
    double gauge_tol = 1e-6;   // gauge EL-residual target
    int gauge_max_iter = 200;
    double sigma = 0.05;
    double el_threshold = 0.5;  // gate on the EL residual of u
};

// Full pipeline: weight -> truncation -> gauge -> stream potential -> (eps, B)
// iteration -> A = (Id + eps) Q, with the estimate ledger and residual filled in.
inline ConservationPair build_conservation_law(const Field& u, double p, const Field& Omega,
                                               const ConservationConfig& cfg = {}) {
    double el = el_residual(u, p, &Omega);
    if (el > cfg.el_threshold)
        throw std::runtime_error("build_conservation_law: map does not satisfy its equation");
    Field f = weight_f(u, p);
    double M = cfg.M > 0 ? cfg.M : max_abs(f);
    Field fM = truncate_weight(f, M);

    auto gauge = extract_gauge(Omega, fM, cfg.gauge_tol, cfg.gauge_max_iter, cfg.sigma);
    recover_xi(gauge, Omega, fM, p);

    ConservationPair pair = iterate_eps_B(gauge.Q, gauge.xi, fM, cfg.k_max, cfg.tol);
    pair.M = M;
    pair.sigma_measured = gauge.initial_energy;
    pair.estimates = verify_estimates(pair, f, Omega);
    pair.diagnostic = diagnostic_D(pair, gauge.xi, gauge.Q, fM);
    pair.residual = conservation_residual(u, p, pair.A, pair.B);
    return pair;
}

inline std::string estimates_json(const ConservationPair& pair) {
    char buf[256];
    std::string s = "{";
    std::snprintf(buf, sizeof buf, "\"I3_lhs\":%.12g,\"I3_rhs\":%.12g,\"I4_lhs\":%.12g,\"I4_rhs\":%.12g,",
                  pair.estimates.I3_lhs, pair.estimates.I3_rhs, pair.estimates.I4_lhs,
                  pair.estimates.I4_rhs);
    s += buf;
    s += "\"ratios\":[";
    for (size_t k = 0; k < pair.contraction_ratios.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%s%.12g", k ? "," : "", pair.contraction_ratios[k]);
        s += buf;
    }
    std::snprintf(buf, sizeof buf, "],\"diagnostic_D\":%.12g}", pair.diagnostic);
    s += buf;
    return s;
}

}  // namespace phl
