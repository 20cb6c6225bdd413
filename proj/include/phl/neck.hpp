// pharmonic-lab: neck-region diagnostics on degenerating annuli. The log-mode
// flux C*, the Pohozaev boundary inequality, theta-averaged zero modes, the
// angular Lorentz norms behind the oscillation bound, and the Morrey decay
// exponent from hole filling.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "phl/grid.hpp"
#include "phl/lorentz.hpp"
#include "phl/pharmonic.hpp"

namespace phl {

// 16 per decade is enough to see log-scale structure without drowning the CSV.
inline std::vector<double> log_radii(double rmin, double rmax, int per_decade = 16) {
    if (!(rmin > 0.0 && rmax > rmin)) throw std::invalid_argument("log_radii: need 0 < rmin < rmax");
    double decades = std::log10(rmax / rmin);
    int n = std::max(2, static_cast<int>(std::ceil(decades * per_decade)) + 1);
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k)
        out[k] = rmin * std::pow(rmax / rmin, static_cast<double>(k) / (n - 1));
    return out;
}

namespace detail {

// ring integral of a node-sampled scalar via the same midpoint rule as ring_flux
template <class Fn>
inline double ring_integral(const Grid& g, double r, Fn&& value_at) {
    int npts = std::max<int>(64, static_cast<int>(std::ceil(2 * std::numbers::pi * r / g.h)));
    double s = 0.0;
    for (int k = 0; k < npts; ++k) {
        double th = 2 * std::numbers::pi * k / npts;
        Vec2 p{r * std::cos(th), r * std::sin(th)};
        s += value_at(p, th);
    }
    return s * (2 * std::numbers::pi * r / npts);
}

}  // namespace detail

struct CStarSamples {
    std::vector<double> r;
    std::vector<std::vector<double>> value;  // per radius, m components
    std::vector<double> norm;                // |C_*|(r)
    std::vector<double> mean;                // radius-averaged components
};

// 2 pi C_*(r) = ring flux of f A grad u - A grad phi. phi may be null (taken
// as zero), A may be null (taken as the identity).
inline CStarSamples c_star(const Field& u, double p, const Field* A, const Field* phi,
                           const std::vector<double>& radii) {
    int m = u.shape().rows;
    Field gu = grad(u);
    Field f = weight_f(u, p);
    Field gphi = phi ? grad(*phi) : Field();
    Field W(u.grid_ptr(), Shape{m, 1, true});
    for (int i = 0; i < u.nodes(); ++i)
        for (int a = 0; a < m; ++a) {
            Vec2 s{0.0, 0.0};
            for (int b = 0; b < m; ++b) {
                double Aab = A ? A->at(A->chan(a, b), i) : (a == b ? 1.0 : 0.0);
                Vec2 t = f.at(0, i) * gu.vec_at(b, 0, i);
                if (phi) t = t - gphi.vec_at(b, 0, i);
                s = s + Aab * t;
            }
            W.set_vec(a, 0, i, s);
        }
    CStarSamples out;
    out.mean.assign(m, 0.0);
    for (double r : radii) {
        auto flux = ring_flux(W, r);
        double n2 = 0.0;
        for (int a = 0; a < m; ++a) {
            flux[a] /= 2 * std::numbers::pi;
            n2 += flux[a] * flux[a];
            out.mean[a] += flux[a];
        }
        out.r.push_back(r);
        out.value.push_back(flux);
        out.norm.push_back(std::sqrt(n2));
    }
    for (double& v : out.mean) v /= static_cast<double>(radii.size());
    return out;
}

struct DecayProbe {
    std::vector<double> delta;
    std::vector<double> product;   // |C_*| log^{(p-1)/p}(1/delta)
    std::vector<double> grad_log;  // ||C_* grad log|x| ||_{L^2(annulus)}
    double max_min_ratio = 0.0;
    bool bounded = false;
};

// The flux should die like log^{-(p-1)/p}(1/delta); the probe normalizes it
// and reports how flat the products sit across the family.
inline DecayProbe c_star_decay_probe(const std::vector<double>& deltas,
                                     const std::vector<double>& ps,
                                     const std::vector<double>& cstar_norms,
                                     double ratio_bound = 10.0) {
    if (deltas.size() < 2 || deltas.size() != cstar_norms.size() || deltas.size() != ps.size())
        throw std::invalid_argument("c_star_decay_probe: need >= 2 matched (delta, p, C*) entries");
    DecayProbe probe;
    for (size_t k = 0; k < deltas.size(); ++k) {
        double ld = std::log(1.0 / deltas[k]);
        double pk = ps[k];
        probe.delta.push_back(deltas[k]);
        probe.product.push_back(cstar_norms[k] * std::pow(ld, (pk - 1.0) / pk));
        // || grad log|x| ||_{L^2}^2 over the annulus = 2 pi log(1/delta)
        probe.grad_log.push_back(cstar_norms[k] * std::sqrt(2 * std::numbers::pi * ld));
    }
    double lo = *std::min_element(probe.product.begin(), probe.product.end());
    double hi = *std::max_element(probe.product.begin(), probe.product.end());
    probe.max_min_ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    probe.bounded = probe.max_min_ratio <= ratio_bound;
    return probe;
}

struct PohozaevResult {
    std::vector<double> r;
    std::vector<double> margin;
    double min_margin = 0.0;
};

// margin(r) = C [ ring f |du/dtau|^2 + (p-2)/r int_{B_r} (1+|grad u|^2)^{p/2} ]
//           - ring f |du/dnu|^2; nonnegative margins mean the inequality holds.
inline PohozaevResult pohozaev_check(const Field& u, double p, const std::vector<double>& radii,
                                     double C = 1.0) {
    const Grid& g = u.grid();
    int m = u.shape().rows;
    Field gu = grad(u);
    Field f = weight_f(u, p);
    Field ep(u.grid_ptr(), Shape::scalar());
    for (int i = 0; i < u.nodes(); ++i) {
        double m2 = 0.0;
        for (int c = 0; c < gu.channels(); ++c) m2 += gu.at(c, i) * gu.at(c, i);
        ep.at(0, i) = std::pow(1.0 + m2, p / 2.0);
    }
    PohozaevResult res;
    res.min_margin = std::numeric_limits<double>::infinity();
    for (double r : radii) {
        auto boundary_terms = detail::ring_integral(g, r, [&](Vec2 q, double th) {
            Vec2 nu{std::cos(th), std::sin(th)};
            Vec2 tau = nu.perp();
            double fr = interpolate(f, q);
            double radial2 = 0.0, angular2 = 0.0;
            for (int a = 0; a < m; ++a) {
                Vec2 gv{interpolate(gu, q, 2 * a), interpolate(gu, q, 2 * a + 1)};
                double dr = gv.x * nu.x + gv.y * nu.y;
                double dt = gv.x * tau.x + gv.y * tau.y;
                radial2 += dr * dr;
                angular2 += dt * dt;
            }
            return fr * (C * angular2 - radial2);
        });
        double bulk = (p - 2.0) / r * integrate(ep, Region::ball(r));
        double margin = boundary_terms + C * bulk;
        res.r.push_back(r);
        res.margin.push_back(margin);
        res.min_margin = std::min(res.min_margin, margin);
    }
    return res;
}

struct ZeroModeProfile {
    std::vector<double> r;
    std::vector<double> lambda0;
    double C0 = 0.0, C1 = 0.0;  // least-squares fit lambda0(r) ~ C0 + C1 log r
    double fit_residual = 0.0;  // rms about the fit
};

// theta-average per radius plus the log-linear model that an annulus-harmonic
// zero mode must follow.
inline ZeroModeProfile zero_mode(const Field& field, const std::vector<double>& radii,
                                 int channel = 0) {
    const Grid& g = field.grid();
    ZeroModeProfile prof;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double r : radii) {
        double avg = detail::ring_integral(
                         g, r, [&](Vec2 q, double) { return interpolate(field, q, channel); }) /
                     (2 * std::numbers::pi * r);
        prof.r.push_back(r);
        prof.lambda0.push_back(avg);
        double lx = std::log(r);
        sx += lx;
        sy += avg;
        sxx += lx * lx;
        sxy += lx * avg;
    }
    double n = static_cast<double>(radii.size());
    double denom = n * sxx - sx * sx;
    prof.C1 = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
    prof.C0 = (sy - prof.C1 * sx) / n;
    double rss = 0.0;
    for (size_t k = 0; k < prof.r.size(); ++k) {
        double e = prof.lambda0[k] - (prof.C0 + prof.C1 * std::log(prof.r[k]));
        rss += e * e;
    }
    prof.fit_residual = std::sqrt(rss / n);
    return prof;
}

struct MorreyResult {
    std::vector<double> r;
    std::vector<double> energy;  // int_{B_r(x0)} f |grad u|^2
    double alpha = 0.0;          // fitted decay exponent
    double hole_constant = 0.0;  // max E(r/2) / (E(r) - E(r/2)) over the chain
};

inline MorreyResult morrey_decay(const Field& u, double p, Vec2 x0,
                                 const std::vector<double>& radii) {
    if (radii.size() < 3) throw std::invalid_argument("morrey_decay: need >= 3 radii");
    const Grid& g = u.grid();
    Field gu = grad(u);
    Field f = weight_f(u, p);
    MorreyResult res;
    for (double r : radii) {
        double e = 0.0;
        for (int i = 0; i < u.nodes(); ++i) {
            Vec2 d = g.nodes[i] - x0;
            if (d.x * d.x + d.y * d.y > r * r) continue;
            double m2 = 0.0;
            for (int c = 0; c < gu.channels(); ++c) m2 += gu.at(c, i) * gu.at(c, i);
            e += g.areas[i] * f.at(0, i) * m2;
        }
        res.r.push_back(r);
        res.energy.push_back(e);
    }
    double emax = *std::max_element(res.energy.begin(), res.energy.end());
    if (emax == 0.0) {
        res.alpha = std::numeric_limits<double>::infinity();
        return res;
    }
    // hole filling across halving pairs present in the radius list
    res.hole_constant = 0.0;
    for (size_t a = 0; a < res.r.size(); ++a)
        for (size_t b = 0; b < res.r.size(); ++b) {
            if (std::fabs(res.r[b] - 0.5 * res.r[a]) > 1e-9 * res.r[a]) continue;
            double ring = res.energy[a] - res.energy[b];
            if (ring > 0.0) res.hole_constant = std::max(res.hole_constant, res.energy[b] / ring);
        }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t k = 0; k < res.r.size(); ++k) {
        if (res.energy[k] <= 0.0) continue;
        double lx = std::log(res.r[k]), ly = std::log(res.energy[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n >= 2) res.alpha = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return res;
}

struct NeckReport {
    double delta = 0.0, p = 0.0, t = 0.0;
    double K = 0.0;             // (p-2) log(1/delta)
    double M_param = 0.0;       // sqrt(p-2) log(1/delta)
    double L = 0.0;             // || max(|x|, delta) |grad u| ||_inf
    double omega_energy = 0.0;  // int f |Omega|^2 over the annulus
    double oscillation = 0.0;   // sup |u(x) - u(y)| over the sampled region
    double angular_l21 = 0.0;   // L^{2,1} of [sqrt(f) |du/dtau|]^{1/(p-1)}
    double angular_l21_density = 0.0;  // L^{2,1} of sqrt(f) |du/dtau|
    std::vector<double> radii, c_star_norm, pohozaev_margin, lambda0;
    std::vector<std::pair<double, double>> splits;  // (r_in, r_out) sub-annuli
};

// Assembles the whole annulus diagnosis. A and phi feed the flux like in
// c_star; Omega enters the region energy and the splitting rule: any
// sub-annulus holding at least `sigma` of weighted potential energy is
// bisected in log r until each piece sits below the threshold.
inline NeckReport neck_report(const Field& u, double p, double delta, double t,
                              const Field& Omega, const Field* A = nullptr,
                              const Field* phi = nullptr, double sigma = 0.05,
                              double pohozaev_C = 2.0) {
    const Grid& g = u.grid();
    NeckReport rep;
    rep.delta = delta;
    rep.p = p;
    rep.t = t;
    rep.K = (p - 2.0) * std::log(1.0 / delta);
    rep.M_param = std::sqrt(std::max(0.0, p - 2.0)) * std::log(1.0 / delta);

    Field gu = grad(u);
    Field f = weight_f(u, p);
    int m = u.shape().rows;

    // L and the angular Lorentz carriers in one sweep
    Field ang(u.grid_ptr(), Shape::scalar());   // sqrt(f) |du/dtau|
    Field angp(u.grid_ptr(), Shape::scalar());  // its 1/(p-1) power
    Field edens(u.grid_ptr(), Shape::scalar());
    for (int i = 0; i < u.nodes(); ++i) {
        Vec2 q = g.nodes[i];
        double r = q.norm();
        double m2 = 0.0, a2 = 0.0;
        Vec2 tau = r > 1e-12 ? (1.0 / r) * q.perp() : Vec2{0.0, 1.0};
        for (int a = 0; a < m; ++a) {
            Vec2 gv = gu.vec_at(a, 0, i);
            m2 += gv.x * gv.x + gv.y * gv.y;
            double dt = gv.x * tau.x + gv.y * tau.y;
            a2 += dt * dt;
        }
        rep.L = std::max(rep.L, std::max(r, delta) * std::sqrt(m2));
        double inside = (r <= t && r >= delta / t);
        double val = inside * std::sqrt(f.at(0, i) * a2);
        ang.at(0, i) = val;
        angp.at(0, i) = std::pow(val, 1.0 / (p - 1.0));
        double o2 = 0.0;
        for (int c = 0; c < Omega.channels(); ++c) o2 += Omega.at(c, i) * Omega.at(c, i);
        edens.at(0, i) = f.at(0, i) * o2;
    }
    rep.angular_l21_density = lorentz_l21(ang);
    rep.angular_l21 = lorentz_l21(angp);
    rep.omega_energy = integrate(edens);

    // oscillation over nodes in the sampled region, capped pair count
    std::vector<int> region;
    for (int i = 0; i < u.nodes(); ++i)
        if (g.nodes[i].norm() <= t) region.push_back(i);
    auto dist2 = [&](int a, int b) {
        double s = 0.0;
        for (int c = 0; c < u.channels(); ++c) {
            double d = u.at(c, a) - u.at(c, b);
            s += d * d;
        }
        return s;
    };
    double worst = 0.0;
    std::size_t npairs = region.size() * (region.size() - 1) / 2;
    if (npairs <= 1000000) {
        for (size_t a = 0; a < region.size(); ++a)
            for (size_t b = a + 1; b < region.size(); ++b)
                worst = std::max(worst, dist2(region[a], region[b]));
    } else {
        std::mt19937 rng(12345);
        std::uniform_int_distribution<size_t> pick(0, region.size() - 1);
        for (int k = 0; k < 1000000; ++k)
            worst = std::max(worst, dist2(region[pick(rng)], region[pick(rng)]));
    }
    rep.oscillation = std::sqrt(worst);

    // per-radius columns
    double rin = std::max(delta * 1.5, delta / t), rout = std::min(t, 0.95);
    rep.radii = log_radii(rin, rout);
    auto cs = c_star(u, p, A, phi, rep.radii);
    rep.c_star_norm = cs.norm;
    auto poh = pohozaev_check(u, p, rep.radii, pohozaev_C);
    rep.pohozaev_margin = poh.margin;
    auto zm = zero_mode(u, rep.radii, 0);
    rep.lambda0 = zm.lambda0;

    // energy-driven annulus splitting
    auto energy_between = [&](double a, double b) {
        double e = 0.0;
        for (int i = 0; i < u.nodes(); ++i) {
            double r = g.nodes[i].norm();
            if (r >= a && r < b) e += g.areas[i] * edens.at(0, i);
        }
        return e;
    };
    std::vector<std::pair<double, double>> work{{delta, 1.0}};
    while (!work.empty()) {
        auto [a, b] = work.back();
        work.pop_back();
        if (energy_between(a, b) >= sigma && b / a > 1.05) {
            double mid = std::sqrt(a * b);
            work.push_back({a, mid});
            work.push_back({mid, b});
        } else {
            rep.splits.push_back({a, b});
        }
    }
    std::sort(rep.splits.begin(), rep.splits.end());
    return rep;
}

}  // namespace phl
