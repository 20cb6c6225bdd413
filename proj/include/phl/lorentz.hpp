// pharmonic-lab: decreasing rearrangements and the Lorentz norms L^{2,1},
// L^{2,inf} on grid fields, with cell areas as the underlying measure.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "phl/grid.hpp"

namespace phl {

// Piecewise-constant decreasing rearrangement: g* takes the value gstar[k] on
// the measure interval (t[k-1], t[k]], with t[-1] = 0 and t increasing.
struct Rearrangement {
    std::vector<double> t;      // cumulative measures (area units)
    std::vector<double> gstar;  // non-increasing |g| values
    double total_measure() const { return t.empty() ? 0.0 : t.back(); }
};

inline Rearrangement rearrange(const Field& g, int channel = 0) {
    const Grid& gr = g.grid();
    std::vector<std::pair<double, double>> va;  // (|value|, area)
    va.reserve(g.nodes());
    for (int i = 0; i < g.nodes(); ++i) va.emplace_back(std::fabs(g.at(channel, i)), gr.areas[i]);
    std::sort(va.begin(), va.end(), [](auto& a, auto& b) { return a.first > b.first; });
    Rearrangement r;
    r.t.reserve(va.size());
    r.gstar.reserve(va.size());
    double cum = 0.0;
    for (auto& [v, a] : va) {
        cum += a;
        // merge equal values into one step to keep the profile clean
        if (!r.gstar.empty() && r.gstar.back() == v)
            r.t.back() = cum;
        else {
            r.gstar.push_back(v);
            r.t.push_back(cum);
        }
    }
    return r;
}

// L^{2,1} = int_0^|D| g*(t) dt/sqrt(t), evaluated exactly per piece.
inline double lorentz_l21(const Rearrangement& r) {
    double s = 0.0, tprev = 0.0;
    for (size_t k = 0; k < r.t.size(); ++k) {
        s += r.gstar[k] * 2.0 * (std::sqrt(r.t[k]) - std::sqrt(tprev));
        tprev = r.t[k];
    }
    return s;
}

// L^{2,inf} = sup_t sqrt(t) g*(t); the sup of each piece sits at its right end.
inline double lorentz_l2inf(const Rearrangement& r) {
    double m = 0.0;
    for (size_t k = 0; k < r.t.size(); ++k) m = std::max(m, std::sqrt(r.t[k]) * r.gstar[k]);
    return m;
}

inline double lorentz_lp(const Rearrangement& r, double p) {
    double s = 0.0, tprev = 0.0;
    for (size_t k = 0; k < r.t.size(); ++k) {
        s += std::pow(r.gstar[k], p) * (r.t[k] - tprev);
        tprev = r.t[k];
    }
    return std::pow(s, 1.0 / p);
}

inline double lorentz_l21(const Field& g) { return lorentz_l21(rearrange(g)); }
inline double lorentz_l2inf(const Field& g) { return lorentz_l2inf(rearrange(g)); }

// Pointwise Frobenius magnitude across the channels; the scalar carrier for
// Lorentz norms of gradients.
inline Field magnitude(const Field& f) {
    Field out(f.grid_ptr(), Shape::scalar());
    for (int i = 0; i < f.nodes(); ++i) {
        double m2 = 0.0;
        for (int c = 0; c < f.channels(); ++c) m2 += f.at(c, i) * f.at(c, i);
        out.at(0, i) = std::sqrt(m2);
    }
    return out;
}

struct HolderLorentzReport {
    double lhs = 0.0;    // L^{2,1} norm (convention constant 1)
    double rhs = 0.0;    // explicit constant times the L^p norm
    double ratio = 0.0;  // lhs / rhs
};

// L^{2,1} vs L^p comparison with the explicit constant
// pi^{(p-2)/2p} * (2(p-1)/(p-2))^{(p-1)/p}, valid for p > 2.
inline double holder_lorentz_constant(double p) {
    if (!(p > 2.0)) throw std::invalid_argument("holder_lorentz: requires p > 2");
    return std::pow(std::numbers::pi, (p - 2) / (2 * p)) *
           std::pow(2 * (p - 1) / (p - 2), (p - 1) / p);
}

inline HolderLorentzReport holder_lorentz_check(const Field& g, double p) {
    auto r = rearrange(g);
    HolderLorentzReport rep;
    rep.lhs = lorentz_l21(r);
    rep.rhs = holder_lorentz_constant(p) * lorentz_lp(r, p);
    rep.ratio = rep.rhs > 0 ? rep.lhs / rep.rhs : 0.0;
    return rep;
}

}  // namespace phl
