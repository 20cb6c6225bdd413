// pharmonic-lab: structured discretizations of the unit disc and of thin
// annuli, plus the differential/quadrature operators every other module uses.
//
// Disc grids are cell-centered Cartesian lattices clipped to |x|<1; annulus
// grids are uniform in (s, theta) with s = log r, so the thin-neck geometry
// B_1 \ B_delta costs only O(log 1/delta) rows.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phl/core.hpp"

namespace phl {

enum class GridKind { CartesianDisc, LogPolarAnnulus };

// Direction indices in the neighbor tables.
enum Dir : int { E = 0, W = 1, N = 2, S = 3 };

struct Grid {
    GridKind kind;
    double h = 0.0;      // mesh parameter: lattice spacing (disc), max(ds, dtheta) (annulus)
    double delta = 0.0;  // inner radius, annulus only
    int ns = 0, ntheta = 0;
    double ds = 0.0, dtheta = 0.0;

    std::vector<Vec2> nodes;
    std::vector<double> areas;
    std::vector<std::uint8_t> boundary;
    std::vector<std::array<int, 4>> nbr;  // -1 where the neighbor is outside
    // Disc only: distance from the node to the circle along a missing direction.
    std::vector<std::array<double, 4>> cut;
    // Disc only: arc length of the boundary circle attributed to each boundary
    // cell (angular partition sized by nearest-cell ownership) and the outward
    // unit normal at the arc midpoint. Zero / (0,0) for interior cells.
    std::vector<double> barc;
    std::vector<Vec2> bdir;

    // Disc lattice bookkeeping (for interpolation).
    int nx = 0, ny = 0;
    double origin = 0.0;  // first cell center coordinate (same in x and y)
    std::vector<int> lattice;  // nx*ny -> node id or -1

    int size() const { return static_cast<int>(nodes.size()); }

    double domain_area() const {
        return kind == GridKind::CartesianDisc ? std::numbers::pi
                                               : std::numbers::pi * (1.0 - delta * delta);
    }

    // (s, theta) <-> node id helpers, annulus only.
    int ann_id(int j, int k) const { return j * ntheta + ((k % ntheta) + ntheta) % ntheta; }
    double s_of(int j) const { return std::log(delta) + j * ds; }
};

namespace detail {

inline double disc_cell_fraction(double cx, double cy, double h) {
    // Fraction of the cell centered at (cx,cy) inside the unit disc, by 8x8
    // midpoint subsampling; exact 1 or 0 when all corners agree.
    double r2max = 0.0, r2min = 1e30;
    for (int a = -1; a <= 1; a += 2)
        for (int b = -1; b <= 1; b += 2) {
            double x = cx + a * h / 2, y = cy + b * h / 2;
            double r2 = x * x + y * y;
            r2max = std::max(r2max, r2);
            r2min = std::min(r2min, r2);
        }
    if (r2max <= 1.0) return 1.0;
    if (r2min >= 1.0) return 0.0;
    int in = 0;
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            double x = cx + (a + 0.5) / 8.0 * h - h / 2;
            double y = cy + (b + 0.5) / 8.0 * h - h / 2;
            if (x * x + y * y < 1.0) ++in;
        }
    return in / 64.0;
}

}  // namespace detail

inline std::shared_ptr<const Grid> build_disc_grid(double h_req) {
    if (!(h_req > 0.0) || h_req > 0.2)
        throw std::invalid_argument("build_disc_grid: h must be in (0, 0.2]");
    auto g = std::make_shared<Grid>();
    g->kind = GridKind::CartesianDisc;
    int n = static_cast<int>(std::llround(2.0 / h_req));
    if (n < 10) n = 10;
    double h = 2.0 / n;
    g->h = h;
    g->nx = g->ny = n;
    g->origin = -1.0 + h / 2;
    g->lattice.assign(n * n, -1);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            double x = g->origin + i * h, y = g->origin + j * h;
            if (x * x + y * y >= 1.0) continue;
            g->lattice[j * n + i] = g->size();
            g->nodes.push_back({x, y});
            g->areas.push_back(h * h * detail::disc_cell_fraction(x, y, h));
        }
    int nn = g->size();
    g->nbr.assign(nn, {-1, -1, -1, -1});
    g->cut.assign(nn, {0, 0, 0, 0});
    g->boundary.assign(nn, 0);
    auto at = [&](int i, int j) -> int {
        if (i < 0 || j < 0 || i >= n || j >= n) return -1;
        return g->lattice[j * n + i];
    };
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            int id = at(i, j);
            if (id < 0) continue;
            const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; ++d) {
                int nb = at(i + di[d], j + dj[d]);
                g->nbr[id][d] = nb;
                if (nb < 0) {
                    g->boundary[id] = 1;
                    // distance to the circle along this axis from the node
                    Vec2 p = g->nodes[id];
                    double a = (d < 2) ? p.x : p.y;
                    double b = (d < 2) ? p.y : p.x;
                    double root = std::sqrt(std::max(0.0, 1.0 - b * b));
                    double dist = (d == E || d == N) ? root - a : a + root;
                    g->cut[id][d] = std::clamp(dist, 0.05 * h, h);
                }
            }
        }
    // Partition the boundary circle among the boundary cells by angle.
    g->barc.assign(nn, 0.0);
    g->bdir.assign(nn, Vec2{0, 0});
    std::vector<std::pair<double, int>> bnodes;
    for (int id = 0; id < nn; ++id)
        if (g->boundary[id]) {
            double th = std::atan2(g->nodes[id].y, g->nodes[id].x);
            bnodes.emplace_back(th, id);
        }
    std::sort(bnodes.begin(), bnodes.end());
    int nb = static_cast<int>(bnodes.size());
    for (int k = 0; k < nb; ++k) {
        double prev = bnodes[(k + nb - 1) % nb].first;
        double next = bnodes[(k + 1) % nb].first;
        double span = next - prev;
        if (span <= 0) span += 2 * std::numbers::pi;
        int id = bnodes[k].second;
        g->barc[id] = 0.5 * span;  // arc length on the unit circle
        double th = bnodes[k].first;
        g->bdir[id] = {std::cos(th), std::sin(th)};
    }
    return g;
}

inline std::shared_ptr<const Grid> build_annulus_grid(double delta, int n_s, int n_theta) {
    if (!(delta > 0.0) || delta >= 1.0)
        throw std::invalid_argument("build_annulus_grid: delta must be in (0,1)");
    if (n_s < 8 || n_theta < 8)
        throw std::invalid_argument("build_annulus_grid: n_s, n_theta >= 8 required");
    auto g = std::make_shared<Grid>();
    g->kind = GridKind::LogPolarAnnulus;
    g->delta = delta;
    g->ns = n_s;
    g->ntheta = n_theta;
    g->ds = -std::log(delta) / (n_s - 1);
    g->dtheta = 2.0 * std::numbers::pi / n_theta;
    g->h = std::max(g->ds, g->dtheta);
    int nn = n_s * n_theta;
    g->nodes.resize(nn);
    g->areas.resize(nn);
    g->boundary.assign(nn, 0);
    g->nbr.assign(nn, {-1, -1, -1, -1});
    g->cut.assign(nn, {0, 0, 0, 0});
    for (int j = 0; j < n_s; ++j) {
        double s = g->s_of(j);
        double r = std::exp(s);
        double wj = (j == 0 || j == n_s - 1) ? 0.5 : 1.0;
        for (int k = 0; k < n_theta; ++k) {
            int id = g->ann_id(j, k);
            double th = k * g->dtheta;
            g->nodes[id] = {r * std::cos(th), r * std::sin(th)};
            g->areas[id] = wj * std::exp(2 * s) * g->ds * g->dtheta;
            g->boundary[id] = (j == 0 || j == n_s - 1) ? 1 : 0;
            // dirs: E/W = s+/s-, N/S = theta+/theta-
            g->nbr[id][E] = (j + 1 < n_s) ? g->ann_id(j + 1, k) : -1;
            g->nbr[id][W] = (j > 0) ? g->ann_id(j - 1, k) : -1;
            g->nbr[id][N] = g->ann_id(j, k + 1);
            g->nbr[id][S] = g->ann_id(j, k - 1);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Field: the single sampled-function carrier. Channel-major storage.
// ---------------------------------------------------------------------------

struct Shape {
    int rows = 1, cols = 1;
    bool vec2 = false;
    int channels() const { return rows * cols * (vec2 ? 2 : 1); }
    bool operator==(const Shape&) const = default;

    static Shape scalar() { return {1, 1, false}; }
    static Shape vector2() { return {1, 1, true}; }
    static Shape rm(int m) { return {m, 1, false}; }
    static Shape matrix(int m) { return {m, m, false}; }
    static Shape vec2_matrix(int m) { return {m, m, true}; }
};

class Field {
  public:
    Field() = default;
    Field(std::shared_ptr<const Grid> grid, Shape shape, double fill = 0.0)
        : grid_(std::move(grid)), shape_(shape),
          data_(static_cast<size_t>(shape.channels()) * grid_->size(), fill) {}

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    Shape shape() const { return shape_; }
    int channels() const { return shape_.channels(); }
    int nodes() const { return grid_->size(); }

    double& at(int c, int i) { return data_[static_cast<size_t>(c) * nodes() + i]; }
    double at(int c, int i) const { return data_[static_cast<size_t>(c) * nodes() + i]; }
    std::span<double> channel(int c) { return {data_.data() + static_cast<size_t>(c) * nodes(), static_cast<size_t>(nodes())}; }
    std::span<const double> channel(int c) const { return {data_.data() + static_cast<size_t>(c) * nodes(), static_cast<size_t>(nodes())}; }

    // Channel index of component (r,c) of the matrix slot; for vec2 shapes the
    // x/y pieces are interleaved as 2*(r*cols+c) and 2*(r*cols+c)+1.
    int chan(int r, int c, int xy = 0) const {
        int base = r * shape_.cols + c;
        return shape_.vec2 ? 2 * base + xy : base;
    }
    Vec2 vec_at(int r, int c, int i) const { return {at(chan(r, c, 0), i), at(chan(r, c, 1), i)}; }
    void set_vec(int r, int c, int i, Vec2 v) {
        at(chan(r, c, 0), i) = v.x;
        at(chan(r, c, 1), i) = v.y;
    }

    void check_same_grid(const Field& o) const {
        if (grid_.get() != o.grid_.get())
            throw std::invalid_argument("field arithmetic requires the identical grid");
    }

    Field& operator+=(const Field& o) {
        check_same_grid(o);
        if (!(shape_ == o.shape_)) throw std::invalid_argument("shape mismatch in +=");
        for (size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    Field& operator-=(const Field& o) {
        check_same_grid(o);
        if (!(shape_ == o.shape_)) throw std::invalid_argument("shape mismatch in -=");
        for (size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    Field& operator*=(double s) {
        for (auto& v : data_) v *= s;
        return *this;
    }
    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(double s, Field a) { return a *= s; }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

  private:
    std::shared_ptr<const Grid> grid_;
    Shape shape_;
    std::vector<double> data_;
};

inline Field make_scalar(std::shared_ptr<const Grid> g, const std::function<double(Vec2)>& fn) {
    Field f(g, Shape::scalar());
    for (int i = 0; i < f.nodes(); ++i) f.at(0, i) = fn(g->nodes[i]);
    return f;
}

// ---------------------------------------------------------------------------
// Differential operators
// ---------------------------------------------------------------------------

namespace detail {

// d/d(axis) of one scalar channel along a lattice line; centered where both
// neighbors exist, 3-point one-sided at the boundary (2-point as last resort).
inline double line_deriv(const Grid& g, std::span<const double> v, int i, int dplus, int dminus,
                         double step) {
    int p = g.nbr[i][dplus], q = g.nbr[i][dminus];
    if (p >= 0 && q >= 0) return (v[p] - v[q]) / (2 * step);
    if (p >= 0) {
        int pp = g.nbr[p][dplus];
        if (pp >= 0) return (-3 * v[i] + 4 * v[p] - v[pp]) / (2 * step);
        return (v[p] - v[i]) / step;
    }
    if (q >= 0) {
        int qq = g.nbr[q][dminus];
        if (qq >= 0) return (3 * v[i] - 4 * v[q] + v[qq]) / (2 * step);
        return (v[i] - v[q]) / step;
    }
    return 0.0;
}

inline Vec2 cart_grad_at(const Grid& g, std::span<const double> v, int i) {
    if (g.kind == GridKind::CartesianDisc) {
        return {line_deriv(g, v, i, E, W, g.h), line_deriv(g, v, i, N, S, g.h)};
    }
    double dvds = line_deriv(g, v, i, E, W, g.ds);
    double dvdt = line_deriv(g, v, i, N, S, g.dtheta);
    Vec2 p = g.nodes[i];
    double r = p.norm();
    double c = p.x / r, s = p.y / r;
    double inv_r = 1.0 / r;  // e^{-s}
    return {c * inv_r * dvds - s * inv_r * dvdt, s * inv_r * dvds + c * inv_r * dvdt};
}

}  // namespace detail

// Gradient of every channel; output doubles the channel count (vec2 of input shape).
inline Field grad(const Field& f) {
    if (f.shape().vec2) throw std::invalid_argument("grad: input must not already be vec2");
    Shape out_shape{f.shape().rows, f.shape().cols, true};
    Field out(f.grid_ptr(), out_shape);
    const Grid& g = f.grid();
    for (int c = 0; c < f.channels(); ++c) {
        auto v = f.channel(c);
        for (int i = 0; i < f.nodes(); ++i) {
            Vec2 gr = detail::cart_grad_at(g, v, i);
            out.at(2 * c, i) = gr.x;
            out.at(2 * c + 1, i) = gr.y;
        }
    }
    return out;
}

inline Field perp_grad(const Field& f) {
    Field out = grad(f);
    for (int c = 0; c < f.channels(); ++c)
        for (int i = 0; i < f.nodes(); ++i) {
            double gx = out.at(2 * c, i), gy = out.at(2 * c + 1, i);
            out.at(2 * c, i) = -gy;
            out.at(2 * c + 1, i) = gx;
        }
    return out;
}

// Divergence of a vec2-shaped field, channel pair by channel pair.
inline Field divergence(const Field& f) {
    if (!f.shape().vec2) throw std::invalid_argument("div: input must be vec2-shaped");
    Shape out_shape{f.shape().rows, f.shape().cols, false};
    Field out(f.grid_ptr(), out_shape);
    const Grid& g = f.grid();
    for (int c = 0; c < out.channels(); ++c) {
        auto vx = f.channel(2 * c);
        auto vy = f.channel(2 * c + 1);
        for (int i = 0; i < f.nodes(); ++i)
            out.at(c, i) = detail::cart_grad_at(g, vx, i).x + detail::cart_grad_at(g, vy, i).y;
    }
    return out;
}

// curl(V) = d1 V2 - d2 V1 per vec2 channel pair.
inline Field curl(const Field& f) {
    if (!f.shape().vec2) throw std::invalid_argument("curl: input must be vec2-shaped");
    Shape out_shape{f.shape().rows, f.shape().cols, false};
    Field out(f.grid_ptr(), out_shape);
    const Grid& g = f.grid();
    for (int c = 0; c < out.channels(); ++c) {
        auto vx = f.channel(2 * c);
        auto vy = f.channel(2 * c + 1);
        for (int i = 0; i < f.nodes(); ++i)
            out.at(c, i) = detail::cart_grad_at(g, vy, i).x - detail::cart_grad_at(g, vx, i).y;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct Region {
    enum Kind { All, Ball, Ring } kind = All;
    double r1 = 0.0, r2 = 0.0;
    static Region all() { return {All, 0, 0}; }
    static Region ball(double r) { return {Ball, 0, r}; }
    static Region ring(double a, double b) { return {Ring, a, b}; }
    bool contains(Vec2 p) const {
        if (kind == All) return true;
        double r = p.norm();
        if (kind == Ball) return r < r2;
        return r >= r1 && r < r2;
    }
};

inline double integrate(const Field& f, Region region = Region::all(), int channel = 0) {
    const Grid& g = f.grid();
    double s = 0.0;
    bool any = false;
    for (int i = 0; i < f.nodes(); ++i) {
        if (!region.contains(g.nodes[i])) continue;
        any = true;
        s += g.areas[i] * f.at(channel, i);
    }
    if (!any) throw std::invalid_argument("integrate: empty region");
    return s;
}

inline double lp_norm(const Field& f, double p, Region region = Region::all()) {
    const Grid& g = f.grid();
    double s = 0.0;
    for (int i = 0; i < f.nodes(); ++i) {
        if (!region.contains(g.nodes[i])) continue;
        double m2 = 0.0;
        for (int c = 0; c < f.channels(); ++c) m2 += f.at(c, i) * f.at(c, i);
        s += g.areas[i] * std::pow(m2, p / 2.0);
    }
    return std::pow(s, 1.0 / p);
}

inline double l2_norm(const Field& f, Region region = Region::all()) { return lp_norm(f, 2.0, region); }

inline double max_abs(const Field& f) {
    double m = 0.0;
    for (int c = 0; c < f.channels(); ++c)
        for (int i = 0; i < f.nodes(); ++i) m = std::max(m, std::fabs(f.at(c, i)));
    return m;
}

// ---------------------------------------------------------------------------
// Interpolation and ring integrals
// ---------------------------------------------------------------------------

namespace detail {

inline double bilinear_cartesian(const Grid& g, std::span<const double> v, Vec2 p) {
    double fx = (p.x - g.origin) / g.h, fy = (p.y - g.origin) / g.h;
    int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy));
    double tx = fx - i0, ty = fy - j0;
    double num = 0.0, den = 0.0;
    const double wx[2] = {1 - tx, tx}, wy[2] = {1 - ty, ty};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            int i = i0 + a, j = j0 + b;
            if (i < 0 || j < 0 || i >= g.nx || j >= g.ny) continue;
            int id = g.lattice[j * g.nx + i];
            if (id < 0) continue;
            double w = wx[a] * wy[b];
            num += w * v[id];
            den += w;
        }
    return den > 0 ? num / den : 0.0;
}

inline double bilinear_annulus(const Grid& g, std::span<const double> v, Vec2 p) {
    double r = p.norm();
    double s = std::log(std::max(r, g.delta));
    double th = std::atan2(p.y, p.x);
    if (th < 0) th += 2 * std::numbers::pi;
    double fj = (s - std::log(g.delta)) / g.ds;
    double fk = th / g.dtheta;
    int j0 = std::clamp(static_cast<int>(std::floor(fj)), 0, g.ns - 2);
    int k0 = static_cast<int>(std::floor(fk));
    double tj = std::clamp(fj - j0, 0.0, 1.0), tk = fk - k0;
    double out = 0.0;
    const double wj[2] = {1 - tj, tj}, wk[2] = {1 - tk, tk};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) out += wj[a] * wk[b] * v[g.ann_id(j0 + a, k0 + b)];
    return out;
}

}  // namespace detail

inline double interpolate(const Field& f, Vec2 p, int channel = 0) {
    const Grid& g = f.grid();
    auto v = f.channel(channel);
    return g.kind == GridKind::CartesianDisc ? detail::bilinear_cartesian(g, v, p)
                                             : detail::bilinear_annulus(g, v, p);
}

// Outward flux of the vec2 pair (chan_x, chan_y) through the circle of radius r.
inline double ring_flux_channel(const Field& f, double r, int chan_x, int chan_y) {
    const Grid& g = f.grid();
    if (g.kind == GridKind::CartesianDisc) {
        if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("ring_flux: radius outside domain");
    } else {
        if (!(r > g.delta && r < 1.0)) throw std::invalid_argument("ring_flux: radius outside annulus");
    }
    int npts = std::max<int>(64, static_cast<int>(std::ceil(2 * std::numbers::pi * r / g.h)));
    double s = 0.0;
    for (int k = 0; k < npts; ++k) {
        double th = 2 * std::numbers::pi * k / npts;
        Vec2 nu{std::cos(th), std::sin(th)};
        Vec2 p = r * nu;
        double vx = interpolate(f, p, chan_x);
        double vy = interpolate(f, p, chan_y);
        s += vx * nu.x + vy * nu.y;
    }
    return s * (2 * std::numbers::pi * r / npts);
}

// Flux per output component of a vec2-of-(rows x cols) field; returns channel-major values.
inline std::vector<double> ring_flux(const Field& f, double r) {
    if (!f.shape().vec2) throw std::invalid_argument("ring_flux: field must be vec2-shaped");
    int nc = f.shape().rows * f.shape().cols;
    std::vector<double> out(nc);
    for (int c = 0; c < nc; ++c) out[c] = ring_flux_channel(f, r, 2 * c, 2 * c + 1);
    return out;
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

inline void write_field_csv(const Field& f, const std::string& path) {
    std::ofstream os(path);
    os << "x,y";
    for (int c = 0; c < f.channels(); ++c) os << ",v" << c;
    os << "\n";
    os.precision(17);
    for (int i = 0; i < f.nodes(); ++i) {
        os << f.grid().nodes[i].x << "," << f.grid().nodes[i].y;
        for (int c = 0; c < f.channels(); ++c) os << "," << f.at(c, i);
        os << "\n";
    }
}

inline std::string grid_meta_json(const Grid& g) {
    std::string kind = g.kind == GridKind::CartesianDisc ? "cartesian-disc" : "log-polar-annulus";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "{\"kind\":\"%s\", \"h\":%.17g, \"delta\":%.17g, \"nodes\":%d}",
                  kind.c_str(), g.h, g.delta, g.size());
    return buf;
}

}  // namespace phl
