// pharmonic-lab: the p-energy E_p(u) = int (1+|grad u|^2)^{p/2}, its
// Euler-Lagrange residuals in weak form, the projected-gradient solver for
// sphere-valued critical points, and the sphere conservation law.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "phl/elliptic.hpp"
#include "phl/grid.hpp"

namespace phl {

namespace detail {

// Explicit stencil form of the nodal gradient, so we also have its exact
// adjoint (needed for discrete energy gradients that pass FD checks).
struct GradOp {
    struct Entry {
        int id;
        double cx, cy;
    };
    std::vector<Entry> entries;
    std::vector<int> offset;  // per-node slice into entries

    static int line_stencil(const Grid& g, int i, int dplus, int dminus, double step,
                            std::pair<int, double> out[3]) {
        int p = g.nbr[i][dplus], q = g.nbr[i][dminus];
        if (p >= 0 && q >= 0) {
            out[0] = {p, 1 / (2 * step)};
            out[1] = {q, -1 / (2 * step)};
            return 2;
        }
        if (p >= 0) {
            int pp = g.nbr[p][dplus];
            if (pp >= 0) {
                out[0] = {i, -3 / (2 * step)};
                out[1] = {p, 4 / (2 * step)};
                out[2] = {pp, -1 / (2 * step)};
                return 3;
            }
            out[0] = {p, 1 / step};
            out[1] = {i, -1 / step};
            return 2;
        }
        if (q >= 0) {
            int qq = g.nbr[q][dminus];
            if (qq >= 0) {
                out[0] = {i, 3 / (2 * step)};
                out[1] = {q, -4 / (2 * step)};
                out[2] = {qq, 1 / (2 * step)};
                return 3;
            }
            out[0] = {i, 1 / step};
            out[1] = {q, -1 / step};
            return 2;
        }
        return 0;
    }

    static GradOp build(const Grid& g) {
        GradOp op;
        op.offset.assign(g.size() + 1, 0);
        std::pair<int, double> s1[3], s2[3];
        for (int i = 0; i < g.size(); ++i) {
            op.offset[i] = static_cast<int>(op.entries.size());
            if (g.kind == GridKind::CartesianDisc) {
                int n1 = line_stencil(g, i, E, W, g.h, s1);
                int n2 = line_stencil(g, i, N, S, g.h, s2);
                for (int k = 0; k < n1; ++k) op.entries.push_back({s1[k].first, s1[k].second, 0});
                for (int k = 0; k < n2; ++k) op.entries.push_back({s2[k].first, 0, s2[k].second});
            } else {
                int n1 = line_stencil(g, i, E, W, g.ds, s1);      // d/ds
                int n2 = line_stencil(g, i, N, S, g.dtheta, s2);  // d/dtheta
                Vec2 p = g.nodes[i];
                double r = p.norm(), c = p.x / r, s = p.y / r;
                for (int k = 0; k < n1; ++k)
                    op.entries.push_back(
                        {s1[k].first, c / r * s1[k].second, s / r * s1[k].second});
                for (int k = 0; k < n2; ++k)
                    op.entries.push_back(
                        {s2[k].first, -s / r * s2[k].second, c / r * s2[k].second});
            }
        }
        op.offset[g.size()] = static_cast<int>(op.entries.size());
        return op;
    }

    // per channel: out(2c,2c+1) = grad of channel c (matches phl::grad exactly)
    void apply(const Field& u, Field& out) const {
        int n = u.nodes();
        for (int c = 0; c < u.channels(); ++c) {
            auto v = u.channel(c);
            for (int i = 0; i < n; ++i) {
                double gx = 0, gy = 0;
                for (int k = offset[i]; k < offset[i + 1]; ++k) {
                    gx += entries[k].cx * v[entries[k].id];
                    gy += entries[k].cy * v[entries[k].id];
                }
                out.at(2 * c, i) = gx;
                out.at(2 * c + 1, i) = gy;
            }
        }
    }

    // adjoint scatter: out_c += G^T w_c for each channel pair of w
    void adjoint(const Field& w, Field& out) const {
        int n = out.nodes();
        for (int c = 0; c < out.channels(); ++c) {
            auto wx = w.channel(2 * c);
            auto wy = w.channel(2 * c + 1);
            auto o = out.channel(c);
            for (int i = 0; i < n; ++i)
                for (int k = offset[i]; k < offset[i + 1]; ++k)
                    o[entries[k].id] += entries[k].cx * wx[i] + entries[k].cy * wy[i];
        }
    }
};

}  // namespace detail

inline double energy_p(const Field& u, double p) {
    Field gu = grad(u);
    Field en(u.grid_ptr(), Shape::scalar());
    for (int i = 0; i < u.nodes(); ++i) {
        double g2 = 0.0;
        for (int c = 0; c < gu.channels(); ++c) g2 += gu.at(c, i) * gu.at(c, i);
        en.at(0, i) = std::pow(1.0 + g2, p / 2);
    }
    return integrate(en);
}

inline Field weight_f(const Field& u, double p) {
    Field gu = grad(u);
    Field f(u.grid_ptr(), Shape::scalar());
    for (int i = 0; i < u.nodes(); ++i) {
        double g2 = 0.0;
        for (int c = 0; c < gu.channels(); ++c) g2 += gu.at(c, i) * gu.at(c, i);
        f.at(0, i) = std::pow(1.0 + g2, p / 2 - 1);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Fixed family of compactly supported test fields for weak-form residuals:
// tensor-product bumps at 9 centers x 3 scales, all supported inside the disc.
// ---------------------------------------------------------------------------

struct TestField {
    Field phi;
    Field gphi;
    double energy;  // int |grad phi|^2
};

inline std::vector<TestField> make_test_fields(std::shared_ptr<const Grid> g) {
    auto bump = [](double t) { return std::fabs(t) < 1.0 ? std::exp(-1.0 / (1 - t * t)) : 0.0; };
    std::vector<Vec2> centers{{0, 0}};
    for (int k = 0; k < 8; ++k) {
        double th = k * std::numbers::pi / 4;
        centers.push_back({0.45 * std::cos(th), 0.45 * std::sin(th)});
    }
    std::vector<TestField> out;
    for (Vec2 c : centers)
        for (double s : {0.1, 0.2, 0.35}) {
            TestField tf{make_scalar(g, [&](Vec2 q) {
                             return bump((q.x - c.x) / s) * bump((q.y - c.y) / s);
                         }),
                         Field(), 0.0};
            tf.gphi = grad(tf.phi);
            Field e2(g, Shape::scalar());
            for (int i = 0; i < tf.phi.nodes(); ++i)
                e2.at(0, i) =
                    tf.gphi.at(0, i) * tf.gphi.at(0, i) + tf.gphi.at(1, i) * tf.gphi.at(1, i);
            tf.energy = integrate(e2);
            if (tf.energy > 1e-12) out.push_back(std::move(tf));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Euler-Lagrange residuals
// ---------------------------------------------------------------------------

// Weak residual of -div(f grad u) = f (Omega . grad u): max over the test-field
// family and components of |int f grad u^a . grad phi - int f (Om grad u)^a phi|
// normalized by the test-field energy. Omega may be null (free target).
inline double el_residual(const Field& u, double p, const Field* Omega,
                          Field* strong_out = nullptr,
                          const std::vector<TestField>* fields = nullptr) {
    int m = u.shape().rows;
    if (Omega) {
        if (Omega->shape().rows != m || !Omega->shape().vec2)
            throw std::invalid_argument("el_residual: Omega must be vec2 m x m");
        double anti = 0.0;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c)
                for (int i = 0; i < u.nodes(); ++i) {
                    Vec2 s = Omega->vec_at(r, c, i) + Omega->vec_at(c, r, i);
                    anti = std::max(anti, std::max(std::fabs(s.x), std::fabs(s.y)));
                }
        if (anti > 1e-12) throw std::invalid_argument("el_residual: Omega not antisymmetric");
    }
    auto g = u.grid_ptr();
    Field f = weight_f(u, p);
    Field gu = grad(u);
    // pointwise right-hand side f (Omega . grad u) and flux f grad u
    Field rhs(g, Shape::rm(m));
    Field flux = gu;
    for (int i = 0; i < u.nodes(); ++i) {
        for (int a = 0; a < m; ++a) {
            double s = 0.0;
            if (Omega)
                for (int b = 0; b < m; ++b) {
                    Vec2 om = Omega->vec_at(a, b, i);
                    s += om.x * gu.at(2 * b, i) + om.y * gu.at(2 * b + 1, i);
                }
            rhs.at(a, i) = f.at(0, i) * s;
        }
        for (int c = 0; c < gu.channels(); ++c) flux.at(c, i) *= f.at(0, i);
    }
    std::vector<TestField> local;
    if (!fields) {
        local = make_test_fields(g);
        fields = &local;
    }
    const Grid& gr = *g;
    double worst = 0.0;
    for (const TestField& tf : *fields) {
        for (int a = 0; a < m; ++a) {
            double acc = 0.0;
            for (int i = 0; i < u.nodes(); ++i) {
                double lhs = flux.at(2 * a, i) * tf.gphi.at(0, i) +
                             flux.at(2 * a + 1, i) * tf.gphi.at(1, i);
                acc += gr.areas[i] * (lhs - rhs.at(a, i) * tf.phi.at(0, i));
            }
            worst = std::max(worst, std::fabs(acc) / tf.energy);
        }
    }
    if (strong_out) {
        Field dv = divergence(flux);
        *strong_out = Field(g, Shape::rm(m));
        for (int a = 0; a < m; ++a)
            for (int i = 0; i < u.nodes(); ++i)
                strong_out->at(a, i) = -dv.at(a, i) - rhs.at(a, i);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Sphere-target machinery
// ---------------------------------------------------------------------------

// Omega^{ij} = u^i grad u^j - u^j grad u^i (antisymmetric by construction).
inline Field omega_from_map(const Field& u) {
    int m = u.shape().rows;
    for (int i = 0; i < u.nodes(); ++i) {
        double n2 = 0.0;
        for (int a = 0; a < m; ++a) n2 += u.at(a, i) * u.at(a, i);
        if (std::fabs(n2 - 1.0) > 1e-8)
            throw std::invalid_argument("omega_from_map: |u| deviates from 1");
    }
    Field gu = grad(u);
    Field om(u.grid_ptr(), Shape::vec2_matrix(m));
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int i = 0; i < u.nodes(); ++i) {
                Vec2 ga{gu.at(2 * a, i), gu.at(2 * a + 1, i)};
                Vec2 gb{gu.at(2 * b, i), gu.at(2 * b + 1, i)};
                om.set_vec(a, b, i, u.at(a, i) * gb - u.at(b, i) * ga);
            }
    return om;
}

// Weak residual of div(f [u^i grad u^j - u^j grad u^i]) = 0, max over (i,j)
// and the test-field family.
inline double sphere_conservation_residual(const Field& u, double p,
                                           const std::vector<TestField>* fields = nullptr) {
    int m = u.shape().rows;
    Field f = weight_f(u, p);
    Field om = omega_from_map(u);
    std::vector<TestField> local;
    if (!fields) {
        local = make_test_fields(u.grid_ptr());
        fields = &local;
    }
    const Grid& gr = u.grid();
    double worst = 0.0;
    for (const TestField& tf : *fields)
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b) {
                double acc = 0.0;
                for (int i = 0; i < u.nodes(); ++i) {
                    Vec2 v = f.at(0, i) * om.vec_at(a, b, i);
                    acc += gr.areas[i] *
                           (v.x * tf.gphi.at(0, i) + v.y * tf.gphi.at(1, i));
                }
                worst = std::max(worst, std::fabs(acc) / tf.energy);
            }
    return worst;
}

struct SphereMapResult {
    Field u;
    double p = 2.0;
    double energy = 0.0;
    double el_res = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Projected gradient flow for critical points of E_p over sphere-valued maps
// with Dirichlet data gb (|gb| = 1) pinned at boundary cells. Descent uses the
// exact gradient of the discrete energy; steps are Armijo-controlled and the
// iteration stops when the weak EL residual (with Omega from the map itself)
// drops below tol.
inline SphereMapResult solve_sphere_pharmonic(std::shared_ptr<const Grid> grid, int m,
                                              const BoundaryFn& gb, double p, double tol,
                                              int max_steps = 5000) {
    if (!(p >= 2.0 && p <= 3.0))
        throw std::invalid_argument("solve_sphere_pharmonic: p must lie in [2,3]");
    const Grid& g = *grid;
    int n = g.size();
    // init: harmonic extension of the boundary data, then normalize
    Field ones(grid, Shape::scalar(), 1.0);
    Field zsrc(grid, Shape::rm(m));
    Field u = solve_dirichlet(ones, &zsrc, nullptr, gb);
    auto project = [&](Field& v) {
        for (int i = 0; i < n; ++i) {
            double n2 = 0.0;
            for (int a = 0; a < m; ++a) n2 += v.at(a, i) * v.at(a, i);
            double s = n2 > 1e-12 ? 1.0 / std::sqrt(n2) : 0.0;
            for (int a = 0; a < m; ++a) v.at(a, i) = s > 0 ? v.at(a, i) * s : (a == 0 ? 1.0 : 0.0);
        }
    };
    // pin boundary cells to the trace
    auto pin = [&](Field& v) {
        for (int i = 0; i < n; ++i) {
            if (!g.boundary[i]) continue;
            Vec2 q = g.kind == GridKind::CartesianDisc ? g.bdir[i] : g.nodes[i];
            for (int a = 0; a < m; ++a) v.at(a, i) = gb(q, a);
        }
    };
    // If the raw extension nearly vanishes somewhere (degree obstruction), the
    // normalized field is a near-critical singular configuration whose missing
    // components the flow can never regenerate; bias the last component with a
    // bump so descent can leave that invariant set.
    {
        double vmin = 1e30;
        for (int i = 0; i < n; ++i) {
            double n2 = 0.0;
            for (int a = 0; a < m; ++a) n2 += u.at(a, i) * u.at(a, i);
            vmin = std::min(vmin, n2);
        }
        if (vmin < 0.04)
            for (int i = 0; i < n; ++i) {
                double r2 = g.nodes[i].x * g.nodes[i].x + g.nodes[i].y * g.nodes[i].y;
                u.at(m - 1, i) -= 0.5 * (1.0 - r2);
            }
    }
    project(u);
    pin(u);

    auto gop = detail::GradOp::build(g);
    Field gu(grid, Shape{m, 1, true});
    auto energy_of = [&](const Field& v) {
        gop.apply(v, gu);
        double e = 0.0;
        for (int i = 0; i < n; ++i) {
            double g2 = 0.0;
            for (int c = 0; c < gu.channels(); ++c) g2 += gu.at(c, i) * gu.at(c, i);
            e += g.areas[i] * std::pow(1.0 + g2, p / 2);
        }
        return e;
    };

    auto fields = make_test_fields(grid);
    SphereMapResult res;
    res.p = p;
    double E = energy_of(u);
    double tau = 0.1;
    int it = 0;
    for (; it < max_steps; ++it) {
        // exact gradient of the discrete energy: p G^T (area * f * grad u)
        gop.apply(u, gu);
        Field w(grid, Shape{m, 1, true});
        for (int i = 0; i < n; ++i) {
            double g2 = 0.0;
            for (int c = 0; c < gu.channels(); ++c) g2 += gu.at(c, i) * gu.at(c, i);
            double coef = p * g.areas[i] * std::pow(1.0 + g2, p / 2 - 1);
            for (int c = 0; c < gu.channels(); ++c) w.at(c, i) = coef * gu.at(c, i);
        }
        Field dE(grid, Shape::rm(m));
        gop.adjoint(w, dE);
        // tangential part, zero at pinned boundary cells
        double gnorm2 = 0.0;
        for (int i = 0; i < n; ++i) {
            if (g.boundary[i]) {
                for (int a = 0; a < m; ++a) dE.at(a, i) = 0.0;
                continue;
            }
            double dot = 0.0;
            for (int a = 0; a < m; ++a) dot += dE.at(a, i) * u.at(a, i);
            for (int a = 0; a < m; ++a) {
                dE.at(a, i) -= dot * u.at(a, i);
                gnorm2 += dE.at(a, i) * dE.at(a, i);
            }
        }
        if (gnorm2 < 1e-28) break;
        // Armijo backtracking on the projected step
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            Field trial = u;
            for (int i = 0; i < n; ++i)
                for (int a = 0; a < m; ++a) trial.at(a, i) -= tau * dE.at(a, i);
            project(trial);
            pin(trial);
            double Et = energy_of(trial);
            if (Et <= E - 1e-4 * tau * gnorm2) {
                u = std::move(trial);
                E = Et;
                tau *= 1.5;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if (!accepted) break;
        if ((it + 1) % 20 == 0 || it == max_steps - 1) {
            Field om = omega_from_map(u);
            res.el_res = el_residual(u, p, &om, nullptr, &fields);
            if (res.el_res < tol) {
                res.converged = true;
                ++it;
                break;
            }
        }
    }
    if (!res.converged) {
        Field om = omega_from_map(u);
        res.el_res = el_residual(u, p, &om, nullptr, &fields);
        res.converged = res.el_res < tol;
    }
    res.u = std::move(u);
    res.energy = E;
    res.iterations = it;
    return res;
}

}  // namespace phl
