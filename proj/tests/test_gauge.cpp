#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "phl/gauge.hpp"
#include "phl/grid.hpp"

using namespace phl;

// abelian pure-gauge data: Omega = J grad psi with psi = amp*(1-r^2)^4, so the
// exact minimizer is Q = exp(psi J) with Q = Id on the boundary; the quartic
// flatness keeps psi negligible at the cut cells where Q is pinned
static double psi_profile(Vec2 p, double amp) {
    double w = 1 - p.x * p.x - p.y * p.y;
    return amp * w * w * w * w;
}

static Field pure_gauge_omega(std::shared_ptr<const Grid> g, double amp) {
    Field om(g, Shape::vec2_matrix(2));
    for (int i = 0; i < om.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        double w = 1 - p.x * p.x - p.y * p.y;
        Vec2 gpsi = (-8.0 * amp * w * w * w) * p;
        om.set_vec(0, 1, i, gpsi);
        om.set_vec(1, 0, i, -1.0 * gpsi);
    }
    return om;
}

TEST_CASE("gauge energy identities") {
    auto g = build_disc_grid(0.05);
    Field f(g, Shape::scalar(), 1.0);
    Field om = pure_gauge_omega(g, 0.4);
    Field Id(g, Shape::matrix(2));
    for (int i = 0; i < Id.nodes(); ++i) {
        Id.at(Id.chan(0, 0), i) = 1.0;
        Id.at(Id.chan(1, 1), i) = 1.0;
    }
    // Q = Id: energy = int f |Omega|^2
    Field e2(g, Shape::scalar());
    for (int i = 0; i < om.nodes(); ++i) {
        double s = 0.0;
        for (int c = 0; c < om.channels(); ++c) s += om.at(c, i) * om.at(c, i);
        e2.at(0, i) = s;
    }
    CHECK(gauge_energy(Id, om, f) == doctest::Approx(integrate(e2)).epsilon(1e-12));
    Field zero_om(g, Shape::vec2_matrix(2));
    CHECK(gauge_energy(Id, zero_om, f) == 0.0);
    // exact minimizer evaluated at nodes: energy collapses by orders of magnitude
    Field Qstar(g, Shape::matrix(2));
    for (int i = 0; i < Qstar.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        double psi = psi_profile(p, 0.4);
        Qstar.at(Qstar.chan(0, 0), i) = std::cos(psi);
        Qstar.at(Qstar.chan(0, 1), i) = std::sin(psi);
        Qstar.at(Qstar.chan(1, 0), i) = -std::sin(psi);
        Qstar.at(Qstar.chan(1, 1), i) = std::cos(psi);
    }
    CHECK(gauge_energy(Qstar, om, f) < 1e-3 * gauge_energy(Id, om, f));
}

TEST_CASE("zero potential: identity gauge in zero iterations") {
    auto g = build_disc_grid(0.05);
    Field f(g, Shape::scalar(), 1.0);
    Field om(g, Shape::vec2_matrix(3));
    auto res = extract_gauge(om, f, 1e-10, 50);
    CHECK(res.converged);
    CHECK(res.iterations == 0);
    CHECK(res.energy == 0.0);
}

TEST_CASE("pure-gauge potential is gauged away") {
    auto g = build_disc_grid(0.02);
    Field f(g, Shape::scalar(), 1.0);
    Field om = pure_gauge_omega(g, 0.5);
    auto res = extract_gauge(om, f, 1e-7, 200);
    double initial = res.initial_energy;
    CHECK(initial > 0.1);
    CHECK(res.energy <= 1e-6 * initial);
    // orthogonality and boundary pinning
    const Field& Q = res.Q;
    double worst = 0.0;
    for (int i = 0; i < Q.nodes(); ++i) {
        double q00 = Q.at(Q.chan(0, 0), i), q01 = Q.at(Q.chan(0, 1), i);
        double q10 = Q.at(Q.chan(1, 0), i), q11 = Q.at(Q.chan(1, 1), i);
        worst = std::max(worst, std::fabs(q00 * q00 + q01 * q01 - 1));
        worst = std::max(worst, std::fabs(q00 * q10 + q01 * q11));
        if (g->boundary[i]) {
            CHECK(q00 == 1.0);
            CHECK(q01 == 0.0);
        }
    }
    CHECK(worst < 1e-10);
    // recovered xi is near-constant (the rotated potential flux vanishes)
    auto checks = recover_xi(res, om, f, 2.2);
    CHECK(checks.energy_lhs <= checks.gauge_energy + 1e-8);
    CHECK(max_abs(res.xi) < 1e-2);
}

static Field random_omega(std::shared_ptr<const Grid> g, int m, std::mt19937& rng,
                          double target_energy, const Field& f) {
    std::normal_distribution<double> nd;
    Field om(g, Shape::vec2_matrix(m));
    for (int r = 0; r < m; ++r)
        for (int c = r + 1; c < m; ++c) {
            double a1 = nd(rng), a2 = nd(rng), k1 = 1 + std::fabs(nd(rng)), k2 = 1 + std::fabs(nd(rng));
            for (int i = 0; i < om.nodes(); ++i) {
                Vec2 p = g->nodes[i];
                Vec2 v{a1 * std::sin(k1 * p.x) * p.y, a2 * std::cos(k2 * p.y)};
                om.set_vec(r, c, i, v);
                om.set_vec(c, r, i, -1.0 * v);
            }
        }
    Field e2(g, Shape::scalar());
    for (int i = 0; i < om.nodes(); ++i) {
        double s = 0.0;
        for (int c = 0; c < om.channels(); ++c) s += om.at(c, i) * om.at(c, i);
        e2.at(0, i) = f.at(0, i) * s;
    }
    om *= std::sqrt(target_energy / integrate(e2));
    return om;
}

TEST_CASE("random small potentials: minimum beats the identity competitor") {
    auto g = build_disc_grid(0.05);
    Field f = make_scalar(g, [](Vec2 p) { return 1.0 + 0.5 * p.x * p.x; });
    std::mt19937 rng(31);
    for (int c = 0; c < 3; ++c) {
        Field om = random_omega(g, 3, rng, 0.01, f);
        auto res = extract_gauge(om, f, 1e-9, 200);
        CHECK(res.initial_energy == doctest::Approx(0.01).epsilon(1e-6));
        CHECK(res.energy <= res.initial_energy + 1e-8 * res.initial_energy);
        CHECK(res.sigma_ok);
        auto checks = recover_xi(res, om, f, 2.5);
        CHECK(checks.energy_lhs <= checks.gauge_energy + 1e-6);
        CHECK(checks.lq_norm >= 0.0);
    }
}

TEST_CASE("abelian closed form: E_f(exp(theta J)) = int 2 f |grad psi - grad theta|^2") {
    auto g = build_disc_grid(0.02);
    Field f = make_scalar(g, [](Vec2 p) { return 1.0 + p.y * p.y; });
    double amp = 0.5;
    Field om = pure_gauge_omega(g, amp);
    Field theta = make_scalar(g, [](Vec2 p) {
        double r2 = p.x * p.x + p.y * p.y;
        return 0.3 * std::sin(2 * p.x) * (1 - r2);
    });
    Field Q(g, Shape::matrix(2));
    for (int i = 0; i < Q.nodes(); ++i) {
        double t = theta.at(0, i);
        Q.at(Q.chan(0, 0), i) = std::cos(t);
        Q.at(Q.chan(0, 1), i) = std::sin(t);
        Q.at(Q.chan(1, 0), i) = -std::sin(t);
        Q.at(Q.chan(1, 1), i) = std::cos(t);
    }
    Field psi = make_scalar(g, [amp](Vec2 p) { return psi_profile(p, amp); });
    Field gpsi = grad(psi), gtheta = grad(theta);
    Field e2(g, Shape::scalar());
    for (int i = 0; i < e2.nodes(); ++i) {
        Vec2 d = gpsi.vec_at(0, 0, i) - gtheta.vec_at(0, 0, i);
        e2.at(0, i) = 2.0 * f.at(0, i) * d.dot(d);
    }
    double closed = integrate(e2);
    CHECK(gauge_energy(Q, om, f) == doctest::Approx(closed).epsilon(0.02));
}

TEST_CASE("antisymmetry of the rotated potential") {
    auto g = build_disc_grid(0.05);
    Field f(g, Shape::scalar(), 1.0);
    std::mt19937 rng(41);
    Field om = random_omega(g, 3, rng, 0.02, f);
    auto res = extract_gauge(om, f, 1e-8, 100);
    Field P = gauge_potential(res.Q, om);
    double worst = 0.0;
    for (int i = 0; i < P.nodes(); ++i)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                Vec2 s = P.vec_at(r, c, i) + P.vec_at(c, r, i);
                worst = std::max(worst, std::fabs(s.x) + std::fabs(s.y));
            }
    CHECK(worst < 1e-12);
}

TEST_CASE("gradient density matches finite differences of the energy") {
    auto g = build_disc_grid(0.1);
    Field f = make_scalar(g, [](Vec2 p) { return 1.0 + p.y * p.y; });
    std::mt19937 rng(17);
    std::normal_distribution<double> nd;
    const int m = 3;
    Field om(g, Shape::vec2_matrix(m));
    for (int r = 0; r < m; ++r)
        for (int c = r + 1; c < m; ++c) {
            double a1 = nd(rng), a2 = nd(rng), k1 = 1 + std::fabs(nd(rng)), k2 = 1 + std::fabs(nd(rng));
            for (int i = 0; i < om.nodes(); ++i) {
                Vec2 p = g->nodes[i];
                Vec2 v{0.3 * a1 * std::sin(k1 * p.x) * p.y, 0.3 * a2 * std::cos(k2 * p.y)};
                om.set_vec(r, c, i, v);
                om.set_vec(c, r, i, -1.0 * v);
            }
        }
    // smooth base point away from Id so the test sees the non-abelian terms
    Field Q(g, Shape::matrix(m));
    std::vector<double> ex(9);
    for (int i = 0; i < Q.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        double w1 = 0.4 * std::sin(p.x), w2 = 0.3 * p.y, w3 = 0.2 * p.x * p.y;
        double mat[9] = {0, -w3, w2, w3, 0, -w1, -w2, w1, 0};
        matm::exp_so(std::span<const double>(mat, 9), ex, 3);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) Q.at(Q.chan(r, c), i) = ex[r * 3 + c];
    }
    Field dens = gauge_gradient_density(Q, om, f);
    for (int trial = 0; trial < 5; ++trial) {
        Field U(g, Shape::rm(3));
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < U.nodes(); ++i) U.at(c, i) = nd(rng);
        double analytic = 0.0;
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < U.nodes(); ++i) analytic += g->areas[i] * dens.at(c, i) * U.at(c, i);
        auto energy_at = [&](double t) {
            Field Qt = Q;
            std::vector<double> exl(9), qn(9);
            for (int i = 0; i < Q.nodes(); ++i) {
                double u1 = t * U.at(0, i), u2 = t * U.at(1, i), u3 = t * U.at(2, i);
                double mat[9] = {0, u1, u2, -u1, 0, u3, -u2, -u3, 0};
                matm::exp_so(std::span<const double>(mat, 9), exl, 3);
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) {
                        double s = 0;
                        for (int q = 0; q < 3; ++q) s += exl[r * 3 + q] * Q.at(Q.chan(q, c), i);
                        qn[r * 3 + c] = s;
                    }
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) Qt.at(Qt.chan(r, c), i) = qn[r * 3 + c];
            }
            return gauge_energy(Qt, om, f);
        };
        double eps = 1e-6;
        double fd = (energy_at(eps) - energy_at(-eps)) / (2 * eps);
        CHECK(std::fabs(analytic - fd) <= 1e-4 * std::max(1.0, std::fabs(fd)));
    }
}
