// pharmonic-lab: Wente-type solves. The weighted scalar problem
// -div(f grad phi) = grad a . perp-grad b carries an explicit certificate; the
// matrix-weight problem -div(A grad phi) = perp-grad D . grad v is summed as a
// Neumann series of Poisson solves.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "phl/core.hpp"
#include "phl/elliptic.hpp"
#include "phl/grid.hpp"
#include "phl/lorentz.hpp"

namespace phl {

struct WenteCertificate {
    double lhs_sup = 0.0;       // ||phi||_inf^2
    double lhs_energy = 0.0;    // int f |grad phi|^2
    double rhs_product = 0.0;   // (int |grad a|^2 / f) * (int f |grad b|^2)
    double constant_measured = 0.0;
};

struct WenteResult {
    Field phi;
    WenteCertificate cert;
};

// -div(f grad phi) = grad a . perp-grad b, phi = 0 on the boundary, f >= 1.
inline WenteResult solve_weighted_wente(const Field& f, const Field& a, const Field& b,
                                        SolveStats* stats = nullptr) {
    Field ga = grad(a), gb = grad(b);
    auto g = f.grid_ptr();
    Field src(g, Shape::scalar());
    for (int i = 0; i < src.nodes(); ++i) {
        // grad a . perp-grad b = a_y b_x - a_x b_y
        src.at(0, i) = ga.at(1, i) * gb.at(0, i) - ga.at(0, i) * gb.at(1, i);
    }
    WenteResult res{solve_dirichlet(f, &src, nullptr, zero_boundary(), stats), {}};
    Field gp = grad(res.phi);
    Field ea(g, Shape::scalar()), eb(g, Shape::scalar()), ep(g, Shape::scalar());
    for (int i = 0; i < src.nodes(); ++i) {
        double fa = f.at(0, i);
        ea.at(0, i) = (ga.at(0, i) * ga.at(0, i) + ga.at(1, i) * ga.at(1, i)) / fa;
        eb.at(0, i) = fa * (gb.at(0, i) * gb.at(0, i) + gb.at(1, i) * gb.at(1, i));
        ep.at(0, i) = fa * (gp.at(0, i) * gp.at(0, i) + gp.at(1, i) * gp.at(1, i));
    }
    double sup = max_abs(res.phi);
    res.cert.lhs_sup = sup * sup;
    res.cert.lhs_energy = integrate(ep);
    res.cert.rhs_product = integrate(ea) * integrate(eb);
    res.cert.constant_measured =
        res.cert.rhs_product > 0 ? (res.cert.lhs_sup + res.cert.lhs_energy) / res.cert.rhs_product
                                 : 0.0;
    return res;
}

enum class AwenteMode { Lorentz, L2 };

struct AwenteReport {
    double sigma_measured = 0.0;  // ||dist(A,SO)||_inf^2 + int |grad A|^2
    bool sigma_ok = true;         // within the smallness default 0.04
    int terms = 0;                // Neumann series terms summed
    double series_ratio = 0.0;    // worst increment ratio observed
    double weak_residual = 0.0;   // energy norm of the next (unsummed) increment / scale
    double lhs = 0.0;             // norm of grad phi in the requested mode
    double rhs = 0.0;             // product of the data norms
    double constant_measured = 0.0;
};

struct AwenteResult {
    Field phi;
    AwenteReport report;
};

// -div(A grad phi) = perp-grad D . grad v, phi = 0 on the boundary, for an
// m x m matrix weight A near SO(m). Neumann series: w_0 from the plain Poisson
// problem, then -Lap w_k = -div(grad A . A^{-1} w_{k-1}); phi = A^{-1} sum w_k.
inline AwenteResult solve_awente(const Field& A, const Field& D, const Field& v, AwenteMode mode,
                                 double p = 2.0, double sigma_default = 0.04) {
    int m = A.shape().rows;
    if (A.shape().cols != m || D.shape().rows != m || v.shape().rows != m)
        throw std::invalid_argument("solve_awente: shape mismatch");
    auto g = A.grid_ptr();
    int n = A.nodes();
    AwenteResult res{Field(g, Shape::rm(m)), {}};

    Field gA = grad(A);
    {
        double dist2 = 0.0;
        std::vector<double> buf(m * m);
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) buf[r * m + c] = A.at(A.chan(r, c), i);
            double d = matm::dist_so(buf, m);
            dist2 = std::max(dist2, d * d);
        }
        Field e2(g, Shape::scalar());
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int c = 0; c < gA.channels(); ++c) s += gA.at(c, i) * gA.at(c, i);
            e2.at(0, i) = s;
        }
        res.report.sigma_measured = dist2 + integrate(e2);
        res.report.sigma_ok = res.report.sigma_measured <= sigma_default;
    }

    // pointwise A^{-1}
    std::vector<double> Ainv(static_cast<size_t>(n) * m * m);
    {
        std::vector<double> buf(m * m), inv(m * m);
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) buf[r * m + c] = A.at(A.chan(r, c), i);
            matm::invert(buf, inv, m);
            for (int k = 0; k < m * m; ++k) Ainv[static_cast<size_t>(i) * m * m + k] = inv[k];
        }
    }

    // source: component i of perp-grad D . grad v
    Field gD = grad(D), gv = grad(v);
    Field src(g, Shape::rm(m));
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int c = 0; c < m; ++c) {
                Vec2 dD = gD.vec_at(r, c, i);
                Vec2 dv{gv.at(2 * c, i), gv.at(2 * c + 1, i)};
                s += dD.perp().dot(dv);
            }
            src.at(r, i) = s;
        }

    Field ones(g, Shape::scalar(), 1.0);
    Field w = solve_dirichlet(ones, &src, nullptr, zero_boundary());
    Field wsum = w;
    double inc0 = l2_norm(grad(w));
    double inc_prev = inc0, inc = inc0;
    int k = 0;
    const int max_terms = 60;
    while (inc > 1e-8 * inc0 && k < max_terms) {
        // X = grad A . (A^{-1} w), a vec2 field over R^m
        Field X(g, Shape{m, 1, true});
        for (int i = 0; i < n; ++i) {
            const double* ai = &Ainv[static_cast<size_t>(i) * m * m];
            for (int r = 0; r < m; ++r) {
                Vec2 s{0, 0};
                for (int c = 0; c < m; ++c) {
                    double y = 0.0;
                    for (int q = 0; q < m; ++q) y += ai[c * m + q] * w.at(q, i);
                    s = s + y * gA.vec_at(r, c, i);
                }
                X.set_vec(r, 0, i, s);
            }
        }
        // -Lap w_k = -div(X): pass V = -X under the solver convention
        X *= -1.0;
        w = solve_dirichlet(ones, nullptr, &X, zero_boundary());
        inc = l2_norm(grad(w));
        double ratio = inc_prev > 0 ? inc / inc_prev : 0.0;
        res.report.series_ratio = std::max(res.report.series_ratio, ratio);
        if (ratio >= 1.0)
            throw std::runtime_error("solve_awente: Neumann series diverges (ratio >= 1)");
        wsum += w;
        inc_prev = inc;
        ++k;
    }
    res.report.terms = k + 1;
    res.report.weak_residual = inc0 > 0 ? inc / inc0 : 0.0;

    // phi = A^{-1} wsum
    for (int i = 0; i < n; ++i) {
        const double* ai = &Ainv[static_cast<size_t>(i) * m * m];
        for (int r = 0; r < m; ++r) {
            double s = 0.0;
            for (int c = 0; c < m; ++c) s += ai[r * m + c] * wsum.at(c, i);
            res.phi.at(r, i) = s;
        }
    }

    Field gphi = grad(res.phi);
    if (mode == AwenteMode::Lorentz) {
        if (!(p >= 2.0 && p <= 3.0))
            throw std::invalid_argument("solve_awente: Lorentz mode needs p in [2,3]");
        double pp = (p == 2.0) ? 2.0 : p / (p - 1.0);
        res.report.lhs = lorentz_l21(magnitude(gphi));
        res.report.rhs = lp_norm(gD, pp) * lp_norm(gv, p);
    } else {
        res.report.lhs = l2_norm(gphi);
        res.report.rhs = l2_norm(gD) * lorentz_l2inf(magnitude(gv));
    }
    res.report.constant_measured = res.report.rhs > 0 ? res.report.lhs / res.report.rhs : 0.0;
    return res;
}

}  // namespace phl
