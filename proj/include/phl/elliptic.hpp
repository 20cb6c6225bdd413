// pharmonic-lab: weighted elliptic solves -div(f grad phi) = source + div(V)
// on disc/annulus grids. Finite-volume flux balance with harmonic-mean face
// weights, Shortley-Weller cut faces for Dirichlet data on the circle, and a
// projected conjugate gradient for the (possibly singular) Neumann case.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "phl/grid.hpp"

namespace phl {

struct SolveStats {
    double rel_residual = 0.0;
    int iterations = 0;
    bool converged = true;
    double compat_defect = 0.0;  // Neumann only: removed mean of the assembled rhs
};

// Boundary data, evaluated at points on the true boundary circle(s).
using BoundaryFn = std::function<double(Vec2, int /*channel*/)>;

inline BoundaryFn zero_boundary() {
    return [](Vec2, int) { return 0.0; };
}
inline BoundaryFn scalar_boundary(std::function<double(Vec2)> fn) {
    return [fn = std::move(fn)](Vec2 p, int) { return fn(p); };
}

namespace detail {

// Flux-balance operator for -div(w grad .). One instance per (grid, weight, bc).
class FvOperator {
  public:
    enum class Bc { Dirichlet, Neumann };

    FvOperator(std::shared_ptr<const Grid> grid, std::span<const double> w, Bc bc)
        : grid_(std::move(grid)), w_(w.begin(), w.end()), bc_(bc) {
        const Grid& g = *grid_;
        int n = g.size();
        coeff_.assign(n, {0, 0, 0, 0});
        bedge_.assign(n, {0, 0, 0, 0});
        fixed_.assign(n, 0);
        if (g.kind == GridKind::LogPolarAnnulus && bc_ == Bc::Dirichlet)
            for (int i = 0; i < n; ++i) fixed_[i] = g.boundary[i];
        for (int i = 0; i < n; ++i) {
            for (int d = 0; d < 4; ++d) {
                int j = g.nbr[i][d];
                if (j >= 0) {
                    double wf = 2.0 * w_[i] * w_[j] / (w_[i] + w_[j]);
                    coeff_[i][d] = wf * face_geom(g, i, d);
                } else if (g.kind == GridKind::CartesianDisc) {
                    if (bc_ == Bc::Dirichlet) {
                        // Cut face to the circle at distance cut[i][d].
                        coeff_[i][d] = w_[i] * g.h / g.cut[i][d];
                        bedge_[i][d] = 1;
                    } else {
                        bedge_[i][d] = 1;  // prescribed-flux face
                    }
                }
            }
        }
        diag_.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            if (fixed_[i]) {
                diag_[i] = 1.0;
                continue;
            }
            for (int d = 0; d < 4; ++d) diag_[i] += coeff_[i][d];
            if (diag_[i] == 0.0) diag_[i] = 1.0;
        }
    }

    const Grid& grid() const { return *grid_; }
    bool singular() const { return bc_ == Bc::Neumann; }
    const std::vector<std::uint8_t>& fixed() const { return fixed_; }

    // y = A x on the unknown set (fixed nodes treated as zero).
    void apply(std::span<const double> x, std::span<double> y) const {
        const Grid& g = *grid_;
        int n = g.size();
        for (int i = 0; i < n; ++i) {
            if (fixed_[i]) {
                y[i] = x[i];
                continue;
            }
            double s = 0.0;
            for (int d = 0; d < 4; ++d) {
                double c = coeff_[i][d];
                if (c == 0.0) continue;
                int j = g.nbr[i][d];
                double xj = (j >= 0 && !fixed_[j]) ? x[j] : 0.0;
                s += c * (x[i] - xj);
            }
            y[i] = s;
        }
    }

    // rhs for one channel: cell source integral, div-source face fluxes (times
    // div_sign), and boundary data contributions.
    std::vector<double> assemble_rhs(const Field* source, const Field* div_source, int chan,
                                     const BoundaryFn& bdata, double div_sign = 1.0) const {
        const Grid& g = *grid_;
        int n = g.size();
        std::vector<double> rhs(n, 0.0);
        for (int i = 0; i < n; ++i) {
            if (fixed_[i]) continue;
            if (source) rhs[i] += g.areas[i] * source->at(chan, i);
        }
        if (div_source) {
            int cx = 2 * chan, cy = 2 * chan + 1;
            for (int i = 0; i < n; ++i) {
                if (fixed_[i]) continue;
                for (int d = 0; d < 4; ++d) {
                    int j = g.nbr[i][d];
                    Vec2 vi{div_source->at(cx, i), div_source->at(cy, i)};
                    if (j >= 0) {
                        Vec2 vf = 0.5 * (vi + Vec2{div_source->at(cx, j), div_source->at(cy, j)});
                        rhs[i] += div_sign * flux_of(g, i, d, vf);
                    }
                }
                // Disc boundary cells: circle-arc flux of V over the owned arc.
                if (g.kind == GridKind::CartesianDisc && g.boundary[i]) {
                    Vec2 vi{div_source->at(cx, i), div_source->at(cy, i)};
                    rhs[i] += div_sign * vi.dot(g.bdir[i]) * g.barc[i];
                }
                // Annulus boundary rows under Neumann carry the circle-face flux
                // of V; the node sits on the circle itself (half cell).
                if (g.kind == GridKind::LogPolarAnnulus && g.boundary[i]) {
                    Vec2 vi{div_source->at(cx, i), div_source->at(cy, i)};
                    double r = g.nodes[i].norm();
                    Vec2 er{g.nodes[i].x / r, g.nodes[i].y / r};
                    double sgn = (g.nbr[i][E] < 0) ? 1.0 : -1.0;
                    rhs[i] += div_sign * sgn * vi.dot(er) * r * g.dtheta;
                }
            }
        }
        // Boundary data.
        for (int i = 0; i < n; ++i) {
            if (g.kind == GridKind::CartesianDisc) {
                if (bc_ == Bc::Dirichlet) {
                    for (int d = 0; d < 4; ++d) {
                        if (!bedge_[i][d]) continue;
                        rhs[i] += coeff_[i][d] * bdata(boundary_point(g, i, d), chan);
                    }
                } else if (g.boundary[i]) {
                    // prescribed normal derivative over the owned boundary arc
                    rhs[i] += w_[i] * bdata(g.bdir[i], chan) * g.barc[i];
                }
            } else {
                if (!g.boundary[i]) continue;
                if (bc_ == Bc::Dirichlet) {
                    // handled by fixed nodes; interior neighbors pick the value up
                    continue;
                }
                double r = g.nodes[i].norm();
                rhs[i] += w_[i] * bdata(g.nodes[i], chan) * r * g.dtheta;
            }
        }
        if (bc_ == Bc::Dirichlet && g.kind == GridKind::LogPolarAnnulus) {
            // Move fixed-node values into neighboring rows.
            std::vector<double> bv(n, 0.0);
            for (int i = 0; i < n; ++i)
                if (fixed_[i]) bv[i] = bdata(g.nodes[i], chan);
            for (int i = 0; i < n; ++i) {
                if (fixed_[i]) {
                    rhs[i] = bv[i];
                    continue;
                }
                for (int d = 0; d < 4; ++d) {
                    int j = g.nbr[i][d];
                    if (j >= 0 && fixed_[j]) rhs[i] += coeff_[i][d] * bv[j];
                }
            }
        }
        return rhs;
    }

    // Diagonally preconditioned CG; for Neumann the iteration is projected
    // onto mean-zero vectors and the rhs compatibility defect is removed.
    SolveStats solve(std::vector<double>& rhs, std::span<double> x, double rel_tol = 1e-10,
                     double abs_tol = 1e-12, int max_iter = 200000) const {
        int n = static_cast<int>(rhs.size());
        SolveStats st;
        if (singular()) {
            double total_rhs = 0.0, total_area = 0.0, nrm = 0.0;
            for (int i = 0; i < n; ++i) {
                total_rhs += rhs[i];
                total_area += grid_->areas[i];
                nrm += rhs[i] * rhs[i];
            }
            double c = total_rhs / total_area;
            for (int i = 0; i < n; ++i) rhs[i] -= c * grid_->areas[i];
            st.compat_defect = (nrm > 0) ? std::fabs(total_rhs) / std::sqrt(nrm) : 0.0;
        }
        auto project = [&](std::span<double> v) {
            if (!singular()) return;
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += v[i];
            mean /= n;
            for (int i = 0; i < n; ++i) v[i] -= mean;
        };
        double bnorm = 0.0;
        for (double v : rhs) bnorm += v * v;
        bnorm = std::sqrt(bnorm);
        double target = std::max(rel_tol * bnorm, abs_tol);
        std::fill(x.begin(), x.end(), 0.0);
        if (bnorm <= abs_tol) return st;

        std::vector<double> r = rhs, z(n), p(n), ap(n);
        project(r);
        for (int i = 0; i < n; ++i) z[i] = r[i] / diag_[i];
        project(z);
        p.assign(z.begin(), z.end());
        double rz = 0.0;
        for (int i = 0; i < n; ++i) rz += r[i] * z[i];
        double rn = 0.0;
        for (double v : r) rn += v * v;
        rn = std::sqrt(rn);
        int it = 0;
        while (rn > target && it < max_iter) {
            apply(p, ap);
            double pap = 0.0;
            for (int i = 0; i < n; ++i) pap += p[i] * ap[i];
            if (pap <= 0.0) break;
            double alpha = rz / pap;
            for (int i = 0; i < n; ++i) {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if (it % 50 == 49) {
                // periodic true-residual refresh
                apply(x, ap);
                for (int i = 0; i < n; ++i) r[i] = rhs[i] - ap[i];
                project(r);
            }
            for (int i = 0; i < n; ++i) z[i] = r[i] / diag_[i];
            project(z);
            double rz_new = 0.0;
            for (int i = 0; i < n; ++i) rz_new += r[i] * z[i];
            double beta = rz_new / rz;
            rz = rz_new;
            for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
            rn = 0.0;
            for (double v : r) rn += v * v;
            rn = std::sqrt(rn);
            ++it;
        }
        st.iterations = it;
        st.rel_residual = bnorm > 0 ? rn / bnorm : 0.0;
        st.converged = rn <= target * 1.0001;
        return st;
    }

  private:
    static double face_geom(const Grid& g, int i, int d) {
        if (g.kind == GridKind::CartesianDisc) return 1.0;  // h/h
        return (d == E || d == W) ? g.dtheta / g.ds : g.ds / g.dtheta;
    }

    // flux of vector v through face d of cell i (outward), physical metric.
    static double flux_of(const Grid& g, int i, int d, Vec2 v) {
        if (g.kind == GridKind::CartesianDisc) {
            const Vec2 nrm[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
            return v.dot(nrm[d]) * g.h;
        }
        Vec2 p = g.nodes[i];
        double r = p.norm();
        Vec2 er{p.x / r, p.y / r};
        Vec2 et{-er.y, er.x};
        if (d == E || d == W) {
            double rf = r * std::exp((d == E ? 0.5 : -0.5) * g.ds);
            double sgn = (d == E) ? 1.0 : -1.0;
            return sgn * v.dot(er) * rf * g.dtheta;
        }
        double sgn = (d == N) ? 1.0 : -1.0;
        return sgn * v.dot(et) * r * g.ds;
    }

    static Vec2 boundary_point(const Grid& g, int i, int d) {
        Vec2 p = g.nodes[i];
        double c = g.cut[i][d];
        switch (d) {
            case E: p.x += c; break;
            case W: p.x -= c; break;
            case N: p.y += c; break;
            default: p.y -= c; break;
        }
        double r = p.norm();
        return {p.x / r, p.y / r};  // snap to the circle
    }

    std::shared_ptr<const Grid> grid_;
    std::vector<double> w_;
    Bc bc_;
    std::vector<std::array<double, 4>> coeff_;
    std::vector<std::array<std::uint8_t, 4>> bedge_;
    std::vector<std::uint8_t> fixed_;
    std::vector<double> diag_;
};

inline void subtract_area_mean(Field& f) {
    const Grid& g = f.grid();
    double total = 0.0;
    for (double a : g.areas) total += a;
    for (int c = 0; c < f.channels(); ++c) {
        double m = 0.0;
        for (int i = 0; i < f.nodes(); ++i) m += g.areas[i] * f.at(c, i);
        m /= total;
        for (int i = 0; i < f.nodes(); ++i) f.at(c, i) -= m;
    }
}

}  // namespace detail

// Solve -div(f grad phi) = source + div(div_source), phi = g on the boundary.
// source/div_source may be nullptr; channel count follows whichever is present.
inline Field solve_dirichlet(const Field& f, const Field* source, const Field* div_source,
                             const BoundaryFn& g, SolveStats* stats = nullptr) {
    for (int i = 0; i < f.nodes(); ++i)
        if (f.at(0, i) < 1.0 - 1e-12)
            throw std::invalid_argument("solve_dirichlet: weight must satisfy f >= 1");
    int nchan = source ? source->channels() : (div_source ? div_source->channels() / 2 : 1);
    Shape out_shape = source ? source->shape()
                             : Shape{div_source ? div_source->shape().rows : 1,
                                     div_source ? div_source->shape().cols : 1, false};
    detail::FvOperator op(f.grid_ptr(), f.channel(0), detail::FvOperator::Bc::Dirichlet);
    Field phi(f.grid_ptr(), out_shape);
    SolveStats worst;
    for (int c = 0; c < nchan; ++c) {
        auto rhs = op.assemble_rhs(source, div_source, c, g);
        auto st = op.solve(rhs, phi.channel(c));
        if (!st.converged)
            throw std::runtime_error("solve_dirichlet: CG failed to converge, residual " +
                                     std::to_string(st.rel_residual));
        worst.rel_residual = std::max(worst.rel_residual, st.rel_residual);
        worst.iterations = std::max(worst.iterations, st.iterations);
    }
    if (stats) *stats = worst;
    return phi;
}

// Solve div(w grad B) = div(div_source), dnu B = g_flux; solution mean-zero.
// The discrete compatibility defect is projected out and reported.
inline Field solve_neumann(const Field& w, const Field* div_source, const BoundaryFn& g_flux,
                           SolveStats* stats = nullptr) {
    for (int i = 0; i < w.nodes(); ++i)
        if (w.at(0, i) <= 0.0)
            throw std::invalid_argument("solve_neumann: weight must be positive");
    int nchan = div_source ? div_source->channels() / 2 : 1;
    Shape out_shape{div_source ? div_source->shape().rows : 1,
                    div_source ? div_source->shape().cols : 1, false};
    detail::FvOperator op(w.grid_ptr(), w.channel(0), detail::FvOperator::Bc::Neumann);
    Field B(w.grid_ptr(), out_shape);
    SolveStats worst;
    for (int c = 0; c < nchan; ++c) {
        // our operator is -div(w grad .): negate the div-source contribution,
        // the prescribed-flux term keeps its sign.
        auto rhs = op.assemble_rhs(nullptr, div_source, c, g_flux, -1.0);
        auto st = op.solve(rhs, B.channel(c));
        if (!st.converged)
            throw std::runtime_error("solve_neumann: CG failed to converge, residual " +
                                     std::to_string(st.rel_residual));
        worst.rel_residual = std::max(worst.rel_residual, st.rel_residual);
        worst.iterations = std::max(worst.iterations, st.iterations);
        worst.compat_defect = std::max(worst.compat_defect, st.compat_defect);
    }
    detail::subtract_area_mean(B);
    if (stats) *stats = worst;
    return B;
}

struct StreamResult {
    Field xi;       // mean-zero potential with grad^perp xi ~ V
    double defect;  // || grad^perp xi - V ||_2
    SolveStats stats;
};

// Outward unit normal of the domain at boundary point p.
inline Vec2 boundary_normal(const Grid& g, Vec2 p) {
    double r = p.norm();
    if (g.kind == GridKind::CartesianDisc) return {p.x / r, p.y / r};
    // annulus: outer circle points out, inner circle points toward the origin
    double mid = std::sqrt(g.delta);
    double sgn = (r > mid) ? 1.0 : -1.0;
    return {sgn * p.x / r, sgn * p.y / r};
}

// Least-squares stream recovery: xi = argmin ||grad^perp xi - V||_2, i.e.
// Laplace xi = curl V with Neumann data matching the tangential trace of V.
inline StreamResult recover_stream(const Field& V) {
    if (!V.shape().vec2) throw std::invalid_argument("recover_stream: V must be vec2-shaped");
    int nc = V.shape().rows * V.shape().cols;
    // rotate: W = (V_y, -V_x); then curl V = div W and V.tau = W.nu on the boundary
    Field W(V.grid_ptr(), V.shape());
    for (int c = 0; c < nc; ++c)
        for (int i = 0; i < V.nodes(); ++i) {
            W.at(2 * c, i) = V.at(2 * c + 1, i);
            W.at(2 * c + 1, i) = -V.at(2 * c, i);
        }
    Field ones(V.grid_ptr(), Shape::scalar(), 1.0);
    // g_flux = W.nu interpolated at the boundary point
    BoundaryFn flux = [&W](Vec2 p, int c) {
        Vec2 nu = boundary_normal(W.grid(), p);
        return interpolate(W, p, 2 * c) * nu.x + interpolate(W, p, 2 * c + 1) * nu.y;
    };
    SolveStats st;
    StreamResult res{solve_neumann(ones, &W, flux, &st), 0.0, {}};
    res.stats = st;
    Field diff = perp_grad(res.xi);
    diff -= V;
    res.defect = l2_norm(diff);
    return res;
}

struct HodgeResult {
    Field zeta;  // gradient part potential, zero trace
    Field eta;   // perp part potential, mean zero
    double defect;
};

// V = grad zeta + grad^perp eta / f with div(f V) = div(f grad zeta), zeta = 0 on
// the boundary.
inline HodgeResult hodge_decompose(const Field& V, const Field& f) {
    if (!V.shape().vec2) throw std::invalid_argument("hodge_decompose: V must be vec2-shaped");
    int nc = V.shape().rows * V.shape().cols;
    // div(f grad zeta) = div(fV); the solver convention is -div(f grad .) = +div(.)
    Field fV = V;
    for (int c = 0; c < 2 * nc; ++c)
        for (int i = 0; i < V.nodes(); ++i) fV.at(c, i) *= -f.at(0, i);
    Field zeta = solve_dirichlet(f, nullptr, &fV, zero_boundary());
    // remainder f (V - grad zeta) should be a perp gradient
    Field R = grad(zeta);
    for (int c = 0; c < 2 * nc; ++c)
        for (int i = 0; i < V.nodes(); ++i)
            R.at(c, i) = f.at(0, i) * (V.at(c, i) - R.at(c, i));
    auto sr = recover_stream(R);
    return {std::move(zeta), std::move(sr.xi), sr.defect};
}

}  // namespace phl
