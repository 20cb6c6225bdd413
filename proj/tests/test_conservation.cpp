#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "phl/conservation.hpp"

using namespace phl;

static Field random_small_omega(std::shared_ptr<const Grid> g, int m, std::mt19937& rng,
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

TEST_CASE("weight truncation") {
    auto g = build_disc_grid(0.05);
    Field one(g, Shape::scalar(), 1.0);
    Field t = truncate_weight(one, 10.0);
    CHECK(max_abs(t) == 1.0);
    Field f = make_scalar(g, [](Vec2 p) { return 1.0 + 100.0 * (p.x * p.x + p.y * p.y); });
    Field t5 = truncate_weight(f, 5.0);
    for (int i = 0; i < t5.nodes(); ++i) {
        double r = g->nodes[i].norm();
        if (r > 0.21) CHECK(t5.at(0, i) == 5.0);
        if (r < 0.19) CHECK(t5.at(0, i) == f.at(0, i));
        CHECK(t5.at(0, i) >= 1.0);
    }
    Field tmax = truncate_weight(f, max_abs(f));
    for (int i = 0; i < f.nodes(); ++i) CHECK(tmax.at(0, i) == f.at(0, i));
    CHECK_THROWS(truncate_weight(f, 0.5));
}

TEST_CASE("zero stream potential: iteration converges immediately") {
    auto g = build_disc_grid(0.05);
    int m = 2;
    Field Q(g, Shape::matrix(m));
    for (int i = 0; i < Q.nodes(); ++i)
        for (int r = 0; r < m; ++r) Q.at(Q.chan(r, r), i) = 1.0;
    Field xi(g, Shape::matrix(m));
    Field fM(g, Shape::scalar(), 1.0);
    auto pair = iterate_eps_B(Q, xi, fM);
    CHECK(pair.converged);
    CHECK(!pair.diverged);
    CHECK(pair.history.size() == 1);
    CHECK(pair.history[0] == 0.0);
    CHECK(max_abs(pair.eps) == 0.0);
    CHECK(max_abs(pair.B) < 1e-12);
    // A = Id
    for (int i = 0; i < Q.nodes(); ++i) {
        CHECK(pair.A.at(pair.A.chan(0, 0), i) == 1.0);
        CHECK(pair.A.at(pair.A.chan(0, 1), i) == 0.0);
    }
}

TEST_CASE("fixed point iteration contracts on gauged random data") {
    auto g = build_disc_grid(0.04);
    Field f(g, Shape::scalar(), 1.0);
    std::mt19937 rng(7);
    Field om = random_small_omega(g, 3, rng, 0.01, f);
    auto gauge = extract_gauge(om, f, 1e-7, 150);
    recover_xi(gauge, om, f, 2.5);
    auto pair = iterate_eps_B(gauge.Q, gauge.xi, f, 30, 1e-12);
    CHECK(!pair.diverged);
    REQUIRE(pair.contraction_ratios.size() >= 2);
    for (size_t k = 1; k < pair.contraction_ratios.size(); ++k)
        CHECK(pair.contraction_ratios[k] <= 0.9);
    // doubled data: ratios do not shrink
    Field xi2 = pair.xi;
    xi2 *= 2.0;
    auto pair2 = iterate_eps_B(gauge.Q, xi2, f, 30, 1e-12);
    REQUIRE(pair2.contraction_ratios.size() >= 2);
    CHECK(pair2.contraction_ratios[1] >= 0.9 * pair.contraction_ratios[1]);
    // invertibility margin: min |det A| >= (1 - ||eps||_inf)^m / 2
    double mindet = 1e300;
    double buf[9];
    for (int i = 0; i < pair.A.nodes(); ++i) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) buf[r * 3 + c] = pair.A.at(pair.A.chan(r, c), i);
        mindet = std::min(mindet, std::fabs(matm::det(buf, 3)));
    }
    double e = max_abs(pair.eps);
    CHECK(e < 1.0);
    CHECK(mindet >= 0.5 * std::pow(1.0 - e, 3));
}

TEST_CASE("trivial pipeline: harmonic map, zero potential") {
    auto g = build_disc_grid(0.04);
    Field u(g, Shape::rm(2));
    for (int i = 0; i < u.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        u.at(0, i) = 0.3 * p.x;
        u.at(1, i) = 0.3 * (p.x * p.x - p.y * p.y);
    }
    Field om(g, Shape::vec2_matrix(2));
    auto pair = build_conservation_law(u, 2.0, om);
    CHECK(pair.converged);
    // A = Id, B = 0
    for (int i = 0; i < u.nodes(); ++i) {
        CHECK(pair.A.at(pair.A.chan(0, 0), i) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::fabs(pair.A.at(pair.A.chan(0, 1), i)) < 1e-10);
    }
    CHECK(max_abs(pair.B) < 1e-10);
    CHECK(pair.estimates.I3_lhs < 1e-12);
    CHECK(pair.estimates.I4_lhs < 1e-12);
    // residual reduces to the plain equation residual of u
    double el = el_residual(u, 2.0, &om);
    CHECK(pair.residual == doctest::Approx(el).epsilon(1e-6));
}

TEST_CASE("estimates scale linearly in the potential energy") {
    auto g = build_disc_grid(0.04);
    Field f(g, Shape::scalar(), 1.0);
    Field u(g, Shape::rm(3));  // constant map: equation holds for any Omega
    for (int i = 0; i < u.nodes(); ++i) u.at(0, i) = 1.0;
    std::mt19937 rng(11);
    Field om1 = random_small_omega(g, 3, rng, 0.01, f);
    Field om4 = om1;
    om4 *= 2.0;  // energy x4
    auto p1 = build_conservation_law(u, 2.5, om1);
    auto p4 = build_conservation_law(u, 2.5, om4);
    CHECK(p1.sigma_measured == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p4.sigma_measured == doctest::Approx(0.04).epsilon(1e-6));
    double s3 = p4.estimates.I3_lhs / p1.estimates.I3_lhs;
    double s4 = p4.estimates.I4_lhs / p1.estimates.I4_lhs;
    CHECK(s3 > 2.0);
    CHECK(s3 < 8.0);
    CHECK(s4 > 2.0);
    CHECK(s4 < 8.0);
}

TEST_CASE("measured constant is uniform over a batch") {
    auto g = build_disc_grid(0.05);
    Field f(g, Shape::scalar(), 1.0);
    Field u(g, Shape::rm(3));
    for (int i = 0; i < u.nodes(); ++i) u.at(2, i) = -0.5;
    std::mt19937 rng(23);
    double cmin = 1e300, cmax = 0.0;
    for (int c = 0; c < 6; ++c) {
        Field om = random_small_omega(g, 3, rng, 0.01, f);
        auto pair = build_conservation_law(u, 2.25, om);
        CHECK(!pair.diverged);
        CHECK(pair.estimates.C_measured > 0.0);
        cmin = std::min(cmin, pair.estimates.C_measured);
        cmax = std::max(cmax, pair.estimates.C_measured);
        CHECK(pair.estimates.eps_lhs <= 10.0 * pair.estimates.eps_rhs + 1e-12);
    }
    CHECK(cmax / cmin < 20.0);
}

TEST_CASE("identity defect shrinks under refinement and grows if truncated early") {
    std::mt19937 rng(5);
    double diag_coarse = 0.0, diag_fine = 0.0, diag_early = 0.0;
    for (double h : {0.08, 0.04}) {
        auto g = build_disc_grid(h);
        Field f(g, Shape::scalar(), 1.0);
        std::mt19937 local(5);
        Field om = random_small_omega(g, 2, local, 0.01, f);
        auto gauge = extract_gauge(om, f, 1e-7, 200);
        recover_xi(gauge, om, f, 2.3);
        auto pair = iterate_eps_B(gauge.Q, gauge.xi, f, 40, 1e-13);
        double d = diagnostic_D(pair, gauge.xi, gauge.Q, f);
        if (h == 0.08) {
            diag_coarse = d;
            auto early = iterate_eps_B(gauge.Q, gauge.xi, f, 1, 1e-13);
            diag_early = diagnostic_D(early, gauge.xi, gauge.Q, f);
        } else {
            diag_fine = d;
        }
    }
    CHECK(diag_fine < diag_coarse / 1.5);
    CHECK(diag_early > diag_coarse);
    CHECK(diag_fine < 1e-1);
}

TEST_CASE("json ledger shape") {
    auto g = build_disc_grid(0.1);
    Field f(g, Shape::scalar(), 1.0);
    std::mt19937 rng(3);
    Field u(g, Shape::rm(2));
    Field om = random_small_omega(g, 2, rng, 0.005, f);
    auto pair = build_conservation_law(u, 2.1, om);
    std::string j = estimates_json(pair);
    CHECK(j.find("\"I3_lhs\":") != std::string::npos);
    CHECK(j.find("\"I4_rhs\":") != std::string::npos);
    CHECK(j.find("\"ratios\":[") != std::string::npos);
    CHECK(j.find("\"diagnostic_D\":") != std::string::npos);
    CHECK(j.front() == '{');
    CHECK(j.back() == '}');
}
