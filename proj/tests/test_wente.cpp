#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "phl/grid.hpp"
#include "phl/wente.hpp"

using namespace phl;
constexpr double pi = std::numbers::pi;

TEST_CASE("weighted Wente closed form: a=x1, b=x2, f=1") {
    auto g = build_disc_grid(0.02);
    Field f(g, Shape::scalar(), 1.0);
    Field a = make_scalar(g, [](Vec2 p) { return p.x; });
    Field b = make_scalar(g, [](Vec2 p) { return p.y; });
    auto res = solve_weighted_wente(f, a, b);
    double emax = 0.0;
    for (int i = 0; i < res.phi.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        emax = std::max(emax, std::fabs(res.phi.at(0, i) - (p.x * p.x + p.y * p.y - 1) / 4));
    }
    CHECK(emax < 5e-3);
    CHECK(res.cert.lhs_sup == doctest::Approx(1.0 / 16).epsilon(0.05));
    CHECK(res.cert.lhs_energy == doctest::Approx(pi / 8).epsilon(0.05));
    CHECK(res.cert.rhs_product == doctest::Approx(pi * pi).epsilon(0.05));
    CHECK(res.cert.constant_measured == doctest::Approx(0.046).epsilon(0.1));
    CHECK(res.cert.constant_measured <= 42.0);
}

TEST_CASE("degenerate data") {
    auto g = build_disc_grid(0.05);
    Field f(g, Shape::scalar(), 1.0);
    Field a(g, Shape::scalar(), 2.0);  // constant -> zero Jacobian
    Field b = make_scalar(g, [](Vec2 p) { return std::sin(p.x); });
    auto res = solve_weighted_wente(f, a, b);
    CHECK(max_abs(res.phi) < 1e-10);
    // equal arguments: Jacobian of (b,b) vanishes pointwise up to truncation
    auto res2 = solve_weighted_wente(f, b, b);
    CHECK(max_abs(res2.phi) < 1e-3);
}

TEST_CASE("swap antisymmetry for f = 1") {
    auto g = build_disc_grid(0.04);
    Field f(g, Shape::scalar(), 1.0);
    Field a = make_scalar(g, [](Vec2 p) { return std::sin(2 * p.x) * p.y; });
    Field b = make_scalar(g, [](Vec2 p) { return std::cos(p.x + p.y); });
    auto rab = solve_weighted_wente(f, a, b);
    auto rba = solve_weighted_wente(f, b, a);
    CHECK(rab.cert.rhs_product == doctest::Approx(rba.cert.rhs_product).epsilon(1e-10));
    Field sum = rab.phi + rba.phi;
    CHECK(max_abs(sum) < 1e-8);
}

TEST_CASE("randomized certificate suite stays below 42") {
    auto g = build_disc_grid(0.02);
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> un(-1, 1);
    std::vector<Field> weights;
    weights.push_back(Field(g, Shape::scalar(), 1.0));
    weights.push_back(make_scalar(g, [](Vec2 p) { return 1 + 50 * std::pow(p.norm(), 4); }));
    weights.push_back(make_scalar(g, [](Vec2 p) { return 1 + p.x * p.x + 3 * p.y * p.y; }));
    double worst = 0.0;
    for (int c = 0; c < 7; ++c) {
        double a1 = un(rng), a2 = un(rng), b1 = un(rng), b2 = un(rng);
        double ka = 1 + 3 * std::fabs(un(rng)), kb = 1 + 3 * std::fabs(un(rng));
        Field a = make_scalar(
            g, [&](Vec2 p) { return a1 * std::sin(ka * p.x) + a2 * std::cos(ka * p.y); });
        Field b = make_scalar(
            g, [&](Vec2 p) { return b1 * std::sin(kb * p.y) + b2 * std::cos(kb * p.x * p.y); });
        for (const Field& f : weights) {
            auto res = solve_weighted_wente(f, a, b);
            worst = std::max(worst, res.cert.constant_measured);
            CHECK(res.cert.constant_measured <= 42.0);
        }
    }
    MESSAGE("worst certificate constant: ", worst);
}

TEST_CASE("A-Wente reduces to Poisson when A = Id") {
    auto g = build_disc_grid(0.025);
    Field A(g, Shape::matrix(1), 1.0);
    Field D = make_scalar(g, [](Vec2 p) { return p.y; });
    Field v = make_scalar(g, [](Vec2 p) { return p.x; });
    auto res = solve_awente(A, D, v, AwenteMode::L2);
    CHECK(res.report.terms <= 2);
    CHECK(res.report.series_ratio == 0.0);
    double emax = 0.0;
    for (int i = 0; i < res.phi.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        emax = std::max(emax, std::fabs(res.phi.at(0, i) - (p.x * p.x + p.y * p.y - 1) / 4));
    }
    CHECK(emax < 5e-3);
}

static Field perturbed_A(std::shared_ptr<const Grid> g, double amp) {
    Field A(g, Shape::matrix(2));
    for (int i = 0; i < A.nodes(); ++i) {
        double s = amp * std::sin(pi * g->nodes[i].x);
        A.at(A.chan(0, 0), i) = 1 + s;
        A.at(A.chan(1, 1), i) = 1 - s;
        A.at(A.chan(0, 1), i) = 0;
        A.at(A.chan(1, 0), i) = 0;
    }
    return A;
}

TEST_CASE("A-Wente series converges for a small symmetric perturbation") {
    auto g = build_disc_grid(0.025);
    Field A = perturbed_A(g, 0.03);
    Field D(g, Shape::matrix(2));
    Field v(g, Shape::rm(2));
    for (int i = 0; i < A.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        D.at(D.chan(0, 0), i) = p.y;
        D.at(D.chan(1, 1), i) = std::sin(p.x);
        D.at(D.chan(0, 1), i) = 0.3 * p.x * p.y;
        v.at(0, i) = p.x;
        v.at(1, i) = p.y * p.y;
    }
    auto res = solve_awente(A, D, v, AwenteMode::L2);
    CHECK(res.report.sigma_ok);
    CHECK(res.report.series_ratio < 0.5);
    CHECK(res.report.weak_residual <= 1e-8);
    CHECK(res.report.constant_measured > 0.0);

    // uniformity in p of the Lorentz-mode constant
    double cmin = 1e30, cmax = 0.0;
    for (double p : {2.0, 2.25, 2.5, 2.75, 3.0}) {
        auto r = solve_awente(A, D, v, AwenteMode::Lorentz, p);
        cmin = std::min(cmin, r.report.constant_measured);
        cmax = std::max(cmax, r.report.constant_measured);
    }
    CHECK(cmax < 2 * cmin);
}

TEST_CASE("A-Wente diverges loudly for a huge perturbation") {
    auto g = build_disc_grid(0.05);
    Field A = perturbed_A(g, 0.9);  // nearly singular weight
    Field D = make_scalar(g, [](Vec2 p) { return p.y; });
    Field v = make_scalar(g, [](Vec2 p) { return p.x; });
    Field A1(g, Shape::matrix(1));
    for (int i = 0; i < A1.nodes(); ++i) A1.at(0, i) = A.at(A.chan(0, 0), i) - 0.89;
    auto run = [&] { return solve_awente(A1, D, v, AwenteMode::L2); };
    CHECK_THROWS(run());
}
