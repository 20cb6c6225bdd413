// pharmonic-lab: experiment runner. Configures a scenario, executes the
// matching pipeline, writes report.json / metrics CSVs / SVG plots, and gates
// the exit code on the scenario's checks.
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "phl/conservation.hpp"
#include "phl/duality.hpp"
#include "phl/gauge.hpp"
#include "phl/lorentz.hpp"
#include "phl/neck.hpp"
#include "phl/pharmonic.hpp"
#include "phl/report.hpp"
#include "phl/wente.hpp"

using json = nlohmann::ordered_json;
using namespace phl;
namespace fs = std::filesystem;

namespace {

struct Config {
    std::string scenario;
    double p = 0.0;          // 0 = scenario default
    double h = 0.0;          // 0 = scenario default
    double delta = 1e-2;
    double sigma = 0.05;
    double M = 0.0;          // weight truncation level, 0 = max f
    int m = 2;
    int k_max = 30;
    int cases = 10;
    long seed = -1;          // mandatory for randomized suites
    std::string bc = "equator";
    std::string out = "out";
};

struct ScenarioInfo {
    std::string name;
    std::string summary;
    std::string params;
    std::string checks;
    bool randomized;
};

const std::vector<ScenarioInfo>& scenarios() {
    static const std::vector<ScenarioInfo> s = {
        {"sphere-disc", "p-harmonic disc map into the sphere with equator trace",
         "p, h, bc", "Dirichlet energy near 4*pi at p=2; weak conservation residual halves with h",
         false},
        {"gauge-synthetic", "gauge extraction on random and pure-gauge potentials",
         "h, m, cases, seed",
         "final gauge energy <= initial; pure-gauge ratio <= 1e-6; orthogonality to 1e-10", true},
        {"conservation-sweep", "conservation-law pipeline over a synthetic batch",
         "h, m, cases, seed, M, k_max",
         "iteration ratios <= 0.9; measured constants stable; identity defect drops >= 1.5x under "
         "refinement",
         true},
        {"wente-suite", "weighted Wente inequality over a randomized pair suite",
         "h, cases, seed", "measured constants <= 42; closed-form case matches to 3 h^2", true},
        {"lorentz-suite", "L^{2,1} vs L^p comparison with the explicit constant",
         "h, cases, seed", "indicator-ball ratio within 2%; corpus ratios finite and <= 1.5", true},
        {"duality-probe", "commutator scaling of the dual operator pair",
         "h, p (upper end of sweep)",
         "fitted slope >= 0.8; output vanishes at p=2; interior Lorentz report finite", false},
        {"neck-annulus", "degenerating annulus family and the flux decay law",
         "delta (largest), sigma",
         "normalized flux products flat within 10x; negative control flagged; report assembled",
         false},
        {"morrey-decay", "hole-filling energy decay exponents",
         "h, p", "alpha = 2 +/- 0.1 for the linear map; p-sweep alphas within 0.5", false},
    };
    return s;
}

Field random_omega(std::shared_ptr<const Grid> g, int m, std::mt19937& rng, double target,
                   const Field& f) {
    std::normal_distribution<double> nd;
    Field om(g, Shape::vec2_matrix(m));
    for (int r = 0; r < m; ++r)
        for (int c = r + 1; c < m; ++c) {
            double a1 = nd(rng), a2 = nd(rng), k1 = 1 + std::fabs(nd(rng)), k2 = 1 + std::fabs(nd(rng));
            for (int i = 0; i < om.nodes(); ++i) {
                Vec2 pnode = g->nodes[i];
                Vec2 v{a1 * std::sin(k1 * pnode.x) * pnode.y, a2 * std::cos(k2 * pnode.y)};
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
    double en = integrate(e2);
    if (en > 0) om *= std::sqrt(target / en);
    return om;
}

Field bump_probe_map(std::shared_ptr<const Grid> g) {
    Field u(g, Shape::rm(2));
    for (int i = 0; i < u.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        double s = (p.x * p.x + p.y * p.y) / (0.8 * 0.8);
        double bump = s < 1.0 ? std::pow(1.0 - s, 4) : 0.0;
        u.at(0, i) = 0.8 * bump * std::sin(3 * p.x + p.y);
        u.at(1, i) = 0.6 * bump * (p.x * p.x - p.y * p.y + p.y);
    }
    return u;
}

BoundaryFn equator_bc() {
    return [](Vec2 p, int c) {
        double th = std::atan2(p.y, p.x);
        if (c == 0) return std::cos(th);
        if (c == 1) return std::sin(th);
        return 0.0;
    };
}

// -------------------------------------------------------------------------
// scenario runners: fill metrics / checks / tables / plots
// -------------------------------------------------------------------------

struct Artifacts {
    json metrics = json::object();
    std::vector<Check> checks;
    // name -> (header, rows)
    std::vector<std::tuple<std::string, std::vector<std::string>, std::vector<std::vector<double>>>>
        tables;
    std::vector<std::tuple<std::string, std::string, std::vector<PlotSeries>, bool, bool>> plots;
};

Artifacts run_sphere_disc(const Config& cfg) {
    Artifacts art;
    double p = cfg.p > 0 ? cfg.p : 2.0;
    double h = cfg.h > 0 ? cfg.h : 0.04;
    if (cfg.bc != "equator") throw std::invalid_argument("config field bc: only 'equator' exists");
    std::vector<std::vector<double>> rows;
    double res_coarse = 0.0, res_fine = 0.0;
    double dirichlet = 0.0, ep_energy = 0.0;
    for (double hh : {h, h / 2}) {
        auto g = build_disc_grid(hh);
        // run the flow to its discretization floor, otherwise the conservation
        // residual measures solver error instead of h
        auto sol = solve_sphere_pharmonic(g, 3, equator_bc(), p, 1e-4, 20000);
        Field gu = grad(sol.u);
        Field e2(g, Shape::scalar());
        for (int i = 0; i < e2.nodes(); ++i) {
            double s = 0.0;
            for (int c = 0; c < gu.channels(); ++c) s += gu.at(c, i) * gu.at(c, i);
            e2.at(0, i) = s;
        }
        double dir = integrate(e2);
        double res = sphere_conservation_residual(sol.u, p);
        rows.push_back({hh, dir, sol.energy, res, static_cast<double>(sol.iterations)});
        if (hh == h) {
            res_coarse = res;
            dirichlet = dir;
            ep_energy = sol.energy;
        } else {
            res_fine = res;
        }
    }
    art.metrics["dirichlet_energy"] = dirichlet;
    art.metrics["p_energy"] = ep_energy;
    art.metrics["residual_coarse"] = res_coarse;
    art.metrics["residual_fine"] = res_fine;
    if (p == 2.0) {
        double target = 4 * std::numbers::pi;
        art.checks.push_back(
            check_le("dirichlet energy within 5% of 4pi", std::fabs(dirichlet - target), 0.05 * target));
    }
    double ratio = res_coarse > 0 ? res_fine / res_coarse : 0.0;
    art.metrics["residual_ratio"] = ratio;
    art.checks.push_back(check_le("conservation residual ratio under h/2", ratio, 0.8));
    art.checks.push_back(check_ge("conservation residual ratio under h/2 (lower)", ratio, 0.2));
    art.tables.push_back({"sphere", {"h", "dirichlet", "p_energy", "residual", "iters"}, rows});
    return art;
}

Artifacts run_gauge_synthetic(const Config& cfg) {
    Artifacts art;
    double h = cfg.h > 0 ? cfg.h : 0.05;
    std::mt19937 rng(static_cast<unsigned>(cfg.seed));
    auto g = build_disc_grid(h);
    Field f(g, Shape::scalar(), 1.0);
    std::vector<std::vector<double>> rows;
    double worst_final = 0.0, worst_orth = 0.0;
    for (int k = 0; k < cfg.cases; ++k) {
        Field om = random_omega(g, cfg.m, rng, 0.01, f);
        auto res = extract_gauge(om, f, 1e-7, 300);
        double orth = 0.0;
        int m = cfg.m;
        std::vector<double> q(m * m), qt(m * m), qq(m * m);
        for (int i = 0; i < res.Q.nodes(); ++i) {
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) q[r * m + c] = res.Q.at(res.Q.chan(r, c), i);
            matm::transpose(q, qt, m);
            matm::mul(qt, q, qq, m);
            for (int r = 0; r < m; ++r) qq[r * m + r] -= 1.0;
            orth = std::max(orth, std::sqrt(matm::frob2(qq, m)));
        }
        worst_orth = std::max(worst_orth, orth);
        worst_final = std::max(worst_final, res.energy - res.initial_energy);
        rows.push_back({static_cast<double>(k), res.initial_energy, res.energy, orth,
                        static_cast<double>(res.iterations)});
    }
    // pure-gauge potential: the minimum is flat zero
    auto gp = build_disc_grid(0.02);
    Field fp(gp, Shape::scalar(), 1.0);
    Field psi(gp, Shape::scalar());
    Field om2(gp, Shape::vec2_matrix(2));
    for (int i = 0; i < psi.nodes(); ++i) {
        Vec2 q = gp->nodes[i];
        double w = 1.0 - q.x * q.x - q.y * q.y;
        Vec2 gpsi = (-8.0 * 0.5 * w * w * w) * q;
        om2.set_vec(0, 1, i, gpsi);
        om2.set_vec(1, 0, i, -1.0 * gpsi);
    }
    auto pg = extract_gauge(om2, fp, 1e-7, 200);
    double pg_ratio = pg.initial_energy > 0 ? pg.energy / pg.initial_energy : 0.0;
    art.metrics["pure_gauge_ratio"] = pg_ratio;
    art.metrics["worst_energy_excess"] = worst_final;
    art.metrics["worst_orthogonality"] = worst_orth;
    art.checks.push_back(check_le("pure-gauge energy ratio", pg_ratio, 1e-6));
    art.checks.push_back(check_le("final energy <= identity competitor", worst_final, 1e-12));
    art.checks.push_back(check_le("frame orthogonality", worst_orth, 1e-10));
    art.tables.push_back(
        {"gauge", {"case", "initial_energy", "final_energy", "orthogonality", "iters"}, rows});
    return art;
}

Artifacts run_conservation_sweep(const Config& cfg) {
    Artifacts art;
    double h = cfg.h > 0 ? cfg.h : 0.05;
    std::mt19937 rng(static_cast<unsigned>(cfg.seed));
    auto g = build_disc_grid(h);
    Field f(g, Shape::scalar(), 1.0);
    ConservationConfig ccfg;
    ccfg.M = cfg.M;
    ccfg.k_max = cfg.k_max;
    std::vector<std::vector<double>> rows;
    double worst_ratio = 0.0, cmin = 1e300, cmax = 0.0;
    for (int k = 0; k < cfg.cases; ++k) {
        Field u(g, Shape::rm(cfg.m), 0.5);  // constant maps satisfy the system for any potential
        Field om = random_omega(g, cfg.m, rng, 0.01, f);
        auto pair = build_conservation_law(u, 2.3, om, ccfg);
        for (double r : pair.contraction_ratios) worst_ratio = std::max(worst_ratio, r);
        cmin = std::min(cmin, pair.estimates.C_measured);
        cmax = std::max(cmax, pair.estimates.C_measured);
        rows.push_back({static_cast<double>(k), pair.estimates.I3_lhs, pair.estimates.I4_lhs,
                        pair.estimates.C_measured, pair.diagnostic,
                        pair.contraction_ratios.empty() ? 0.0 : pair.contraction_ratios.back()});
    }
    // identity defect refinement on the raw pipeline
    double diag_c = 0.0, diag_f = 0.0;
    for (double hh : {0.08, 0.04}) {
        auto gg = build_disc_grid(hh);
        Field ff(gg, Shape::scalar(), 1.0);
        std::mt19937 local(5);
        Field om = random_omega(gg, 2, local, 0.01, ff);
        auto gauge = extract_gauge(om, ff, 1e-7, 400);
        recover_xi(gauge, om, ff, 2.3);
        auto pair = iterate_eps_B(gauge.Q, gauge.xi, ff, 40, 1e-13);
        (hh == 0.08 ? diag_c : diag_f) = diagnostic_D(pair, gauge.xi, gauge.Q, ff);
    }
    art.metrics["worst_contraction_ratio"] = worst_ratio;
    art.metrics["constant_min"] = cmin;
    art.metrics["constant_max"] = cmax;
    art.metrics["diag_coarse"] = diag_c;
    art.metrics["diag_fine"] = diag_f;
    art.checks.push_back(check_le("iteration contraction ratios", worst_ratio, 0.9));
    art.checks.push_back(
        check_le("measured constant spread", cmax, 3.0 * std::max(cmin, 1e-300)));
    art.checks.push_back(check_ge("identity defect refinement factor",
                                  diag_c / std::max(diag_f, 1e-300), 1.5));
    art.tables.push_back(
        {"conservation",
         {"case", "dist_energy_lhs", "stream_lhs", "constant", "identity_defect", "last_ratio"},
         rows});
    return art;
}

Artifacts run_wente_suite(const Config& cfg) {
    Artifacts art;
    double h = cfg.h > 0 ? cfg.h : 0.02;
    std::mt19937 rng(static_cast<unsigned>(cfg.seed));
    std::normal_distribution<double> nd;
    auto g = build_disc_grid(h);
    std::vector<Field> weights;
    weights.push_back(Field(g, Shape::scalar(), 1.0));
    weights.push_back(make_scalar(g, [](Vec2 p) { return 1.0 + p.x * p.x + p.y * p.y; }));
    weights.push_back(make_scalar(g, [](Vec2 p) {
        double r2 = p.x * p.x + p.y * p.y;
        return 1.0 + 50.0 * r2 * r2;
    }));
    double worst = 0.0;
    std::vector<std::vector<double>> rows;
    int pairs = std::max(cfg.cases, 20);
    for (int k = 0; k < pairs; ++k) {
        double a1 = nd(rng), a2 = nd(rng), k1 = 1 + std::fabs(nd(rng)), k2 = 1 + std::fabs(nd(rng));
        Field a = make_scalar(g, [&](Vec2 p) { return a1 * std::sin(k1 * p.x) + a2 * p.y * p.x; });
        double b1 = nd(rng), b2 = nd(rng), k3 = 1 + std::fabs(nd(rng));
        Field b = make_scalar(g, [&](Vec2 p) { return b1 * std::cos(k3 * p.y) + b2 * p.x; });
        for (size_t w = 0; w < weights.size(); ++w) {
            auto res = solve_weighted_wente(weights[w], a, b);
            worst = std::max(worst, res.cert.constant_measured);
            rows.push_back({static_cast<double>(k), static_cast<double>(w),
                            res.cert.constant_measured});
        }
    }
    // closed form: a = x1, b = x2, f = 1 -> phi = (|x|^2 - 1)/4
    Field a = make_scalar(g, [](Vec2 p) { return p.x; });
    Field b = make_scalar(g, [](Vec2 p) { return p.y; });
    auto res = solve_weighted_wente(weights[0], a, b);
    double err = 0.0;
    for (int i = 0; i < res.phi.nodes(); ++i) {
        Vec2 p = g->nodes[i];
        err = std::max(err,
                       std::fabs(res.phi.at(0, i) - (p.x * p.x + p.y * p.y - 1.0) / 4.0));
    }
    art.metrics["worst_constant"] = worst;
    art.metrics["closed_form_error"] = err;
    art.checks.push_back(check_le("measured constants", worst, 42.0));
    art.checks.push_back(check_le("closed-form max error", err, 3.0 * h * h));
    art.tables.push_back({"wente", {"pair", "weight", "constant"}, rows});
    return art;
}

Artifacts run_lorentz_suite(const Config& cfg) {
    Artifacts art;
    double h = cfg.h > 0 ? cfg.h : 0.02;
    std::mt19937 rng(static_cast<unsigned>(cfg.seed));
    std::normal_distribution<double> nd;
    auto g = build_disc_grid(h);
    Field ind = make_scalar(g, [](Vec2 p) { return p.x * p.x + p.y * p.y < 0.25 ? 1.0 : 0.0; });
    auto rep = holder_lorentz_check(ind, 3.0);
    double target = std::sqrt(std::numbers::pi) /
                    (std::pow(std::numbers::pi, 1.0 / 6.0) * std::pow(4.0, 2.0 / 3.0) *
                     std::pow(std::numbers::pi / 4.0, 1.0 / 3.0));
    art.metrics["indicator_ratio"] = rep.ratio;
    art.metrics["indicator_target"] = target;
    art.checks.push_back(
        check_le("indicator ratio error", std::fabs(rep.ratio - target), 0.02 * target));
    double worst = 0.0;
    std::vector<std::vector<double>> rows;
    int fields = std::max(cfg.cases, 30);
    std::vector<double> ps = {2.25, 2.5, 3.0};
    for (int k = 0; k < fields; ++k) {
        double a1 = nd(rng), a2 = nd(rng), k1 = 1 + std::fabs(nd(rng));
        Field gfield = make_scalar(
            g, [&](Vec2 p) { return a1 * std::sin(k1 * (p.x + p.y)) + a2 * p.x * p.y; });
        for (double p : ps) {
            auto r = holder_lorentz_check(gfield, p);
            worst = std::max(worst, r.ratio);
            rows.push_back({static_cast<double>(k), p, r.ratio});
        }
    }
    art.metrics["worst_ratio"] = worst;
    art.checks.push_back(check_le("corpus ratios", worst, 1.5));
    art.checks.push_back(check_ge("corpus ratios finite", std::isfinite(worst) ? 1.0 : 0.0, 1.0));
    art.tables.push_back({"lorentz", {"field", "p", "ratio"}, rows});
    return art;
}

Artifacts run_duality_probe(const Config& cfg) {
    Artifacts art;
    double h = cfg.h > 0 ? cfg.h : 0.02;
    auto g = build_disc_grid(h);
    Field u = bump_probe_map(g);
    Field A(g, Shape::matrix(2));
    for (int i = 0; i < A.nodes(); ++i) {
        A.at(A.chan(0, 0), i) = 1.0;
        A.at(A.chan(1, 1), i) = 1.0;
    }
    std::vector<double> ps = {2.0, 2.05, 2.1, 2.2, 2.3, 2.4};
    auto probe = commutator_probe(A, u, ps);
    Field om(g, Shape::vec2_matrix(2));  // no potential in the probe corpus
    std::vector<std::vector<double>> rows;
    PlotSeries series{"rho(p)", {}, {}};
    for (size_t k = 0; k < ps.size(); ++k) {
        auto rep = disc_l21_report(u, ps[k] > 2.0 ? ps[k] : 2.05, om, 0.5);
        rows.push_back({ps[k], probe.rho[k], probe.lhs[k], rep.term1, rep.term2, rep.term3});
        if (ps[k] > 2.0) {
            series.x.push_back(ps[k] - 2.0);
            series.y.push_back(probe.rho[k]);
        }
    }
    art.metrics["slope"] = probe.slope;
    art.metrics["rho_at_2"] = probe.rho[0];
    art.metrics["bracket"] = probe.bracket[0];
    art.checks.push_back(check_ge("commutator scaling slope", probe.slope, 0.8));
    art.checks.push_back(
        check_le("output at p=2", probe.rho[0], 1e-8 * std::max(probe.bracket[0], 1.0)));
    auto l21 = disc_l21_report(u, 2.2, om, 0.5);
    art.metrics["l21_lhs"] = l21.lhs;
    art.checks.push_back(
        check_le("interior Lorentz norm finite", std::isfinite(l21.lhs) ? 0.0 : 1.0, 0.0));
    art.tables.push_back({"duality", {"p", "rho", "lhs", "term1", "term2", "term3"}, rows});
    art.plots.push_back({"duality_rho", "commutator output vs p-2", {series}, true, true});
    return art;
}

Artifacts run_neck_annulus(const Config& cfg) {
    Artifacts art;
    std::vector<double> deltas = {1e-2, 1e-3, 1e-4};
    if (cfg.delta != 1e-2) deltas[0] = cfg.delta;
    double K = 0.5;
    std::vector<double> ps, norms, control;
    for (double d : deltas) {
        double ld = std::log(1.0 / d);
        double p = 2.0 + K / ld;
        ps.push_back(p);
        int ns = std::max<int>(120, static_cast<int>(30 * ld));
        auto g = build_annulus_grid(d, ns, 96);
        double beta = 0.8 / ld;
        Field u(g, Shape::rm(2));
        for (int i = 0; i < u.nodes(); ++i) {
            Vec2 q = g->nodes[i];
            double r = q.norm();
            double th = std::atan2(q.y, q.x);
            u.at(0, i) = beta * std::log(r);
            u.at(1, i) = 0.2 * std::sin(th) * r;
        }
        auto radii = log_radii(std::sqrt(d), 0.8, 8);
        auto cs = c_star(u, p, nullptr, nullptr, radii);
        double avg = 0.0;
        for (double n : cs.norm) avg += n;
        norms.push_back(avg / cs.norm.size());
        control.push_back(0.3);
    }
    auto probe = c_star_decay_probe(deltas, ps, norms);
    auto bad = c_star_decay_probe(deltas, ps, control);
    bool control_flagged = bad.product.back() > 1.2 * bad.product.front();
    art.metrics["max_min_ratio"] = probe.max_min_ratio;
    art.metrics["control_growth"] = bad.product.back() / bad.product.front();
    art.checks.push_back(check_le("normalized flux spread", probe.max_min_ratio, 10.0));
    art.checks.push_back(
        check_ge("negative control flagged", control_flagged ? 1.0 : 0.0, 1.0));
    // full report on the largest annulus
    double d0 = deltas[0];
    auto g = build_annulus_grid(d0, 160, 96);
    Field u(g, Shape::rm(2));
    double beta = 0.8 / std::log(1.0 / d0);
    for (int i = 0; i < u.nodes(); ++i) {
        Vec2 q = g->nodes[i];
        u.at(0, i) = beta * std::log(q.norm());
        u.at(1, i) = 0.2 * std::sin(std::atan2(q.y, q.x)) * q.norm();
    }
    Field om(g, Shape::vec2_matrix(2));
    auto rep = neck_report(u, ps[0], d0, 0.7, om, nullptr, nullptr, cfg.sigma);
    art.metrics["oscillation"] = rep.oscillation;
    art.metrics["angular_l21"] = rep.angular_l21;
    art.metrics["omega_energy"] = rep.omega_energy;
    art.metrics["L"] = rep.L;
    art.metrics["K"] = rep.K;
    art.metrics["M_param"] = rep.M_param;
    art.checks.push_back(
        check_le("report norms finite",
                 std::isfinite(rep.angular_l21 + rep.oscillation + rep.L) ? 0.0 : 1.0, 0.0));
    std::vector<std::vector<double>> rows;
    for (size_t k = 0; k < rep.radii.size(); ++k)
        rows.push_back({rep.radii[k], rep.c_star_norm[k], rep.pohozaev_margin[k], rep.lambda0[k]});
    art.tables.push_back(
        {"neck", {"r", "c_star_norm", "pohozaev_margin", "lambda0"}, rows});
    PlotSeries cser{"|C*|(r)", rep.radii, rep.c_star_norm};
    art.plots.push_back({"neck_cstar", "flux norm vs radius", {cser}, true, false});
    return art;
}

Artifacts run_morrey_decay(const Config& cfg) {
    Artifacts art;
    double h = cfg.h > 0 ? cfg.h : 0.01;
    auto g = build_disc_grid(h);
    Field lin(g, Shape::rm(2));
    for (int i = 0; i < lin.nodes(); ++i) {
        lin.at(0, i) = g->nodes[i].x;
        lin.at(1, i) = g->nodes[i].y;
    }
    std::vector<double> radii = {0.8, 0.4, 0.2, 0.1, 0.05};
    auto res = morrey_decay(lin, 2.0, {0.0, 0.0}, radii);
    art.metrics["alpha_linear"] = res.alpha;
    art.checks.push_back(check_le("linear map exponent error", std::fabs(res.alpha - 2.0), 0.1));
    // p-sweep on the sphere solve
    auto gs = build_disc_grid(0.04);
    std::vector<double> alphas;
    for (double p : {2.1, 2.4}) {
        auto sol = solve_sphere_pharmonic(gs, 3, equator_bc(), p, 1e-4, 400);
        auto r = morrey_decay(sol.u, p, {0.0, 0.0}, radii);
        alphas.push_back(r.alpha);
    }
    art.metrics["alpha_p21"] = alphas[0];
    art.metrics["alpha_p24"] = alphas[1];
    art.checks.push_back(
        check_le("exponent uniformity in p", std::fabs(alphas[0] - alphas[1]), 0.5));
    std::vector<std::vector<double>> rows;
    for (size_t k = 0; k < res.r.size(); ++k) rows.push_back({res.r[k], res.energy[k]});
    art.tables.push_back({"morrey", {"r", "energy"}, rows});
    PlotSeries eser{"E(r)", res.r, res.energy};
    art.plots.push_back({"morrey_energy", "energy vs radius", {eser}, true, true});
    return art;
}

Artifacts dispatch(const Config& cfg) {
    if (cfg.scenario == "sphere-disc") return run_sphere_disc(cfg);
    if (cfg.scenario == "gauge-synthetic") return run_gauge_synthetic(cfg);
    if (cfg.scenario == "conservation-sweep") return run_conservation_sweep(cfg);
    if (cfg.scenario == "wente-suite") return run_wente_suite(cfg);
    if (cfg.scenario == "lorentz-suite") return run_lorentz_suite(cfg);
    if (cfg.scenario == "duality-probe") return run_duality_probe(cfg);
    if (cfg.scenario == "neck-annulus") return run_neck_annulus(cfg);
    if (cfg.scenario == "morrey-decay") return run_morrey_decay(cfg);
    throw std::invalid_argument("config field scenario: unknown value '" + cfg.scenario + "'");
}

void validate(const Config& cfg) {
    bool known = false;
    bool randomized = false;
    for (const auto& s : scenarios())
        if (s.name == cfg.scenario) {
            known = true;
            randomized = s.randomized;
        }
    if (!known)
        throw std::invalid_argument("config field scenario: unknown value '" + cfg.scenario + "'");
    if (cfg.h < 0 || cfg.h > 0.5)
        throw std::invalid_argument("config field h: must lie in (0, 0.5]");
    if (cfg.p != 0.0 && !(cfg.p >= 2.0 && cfg.p <= 3.0))
        throw std::invalid_argument("config field p: must lie in [2, 3]");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0))
        throw std::invalid_argument("config field delta: must lie in (0, 1)");
    if (!(cfg.sigma > 0.0)) throw std::invalid_argument("config field sigma: must be positive");
    if (cfg.m < 2 || cfg.m > 6) throw std::invalid_argument("config field m: must lie in [2, 6]");
    if (cfg.k_max < 1) throw std::invalid_argument("config field k_max: must be >= 1");
    if (cfg.cases < 1) throw std::invalid_argument("config field cases: must be >= 1");
    if (randomized && cfg.seed < 0)
        throw std::invalid_argument("config field seed: required for randomized scenario '" +
                                    cfg.scenario + "'");
}

int run_experiment(const Config& cfg) {
    validate(cfg);
    fs::path out(cfg.out);
    fs::create_directories(out / "metrics");
    fs::create_directories(out / "plots");
    auto t0 = std::chrono::steady_clock::now();
    Artifacts art = dispatch(cfg);
    auto t1 = std::chrono::steady_clock::now();

    json rep;
    rep["schema"] = "1";
    rep["scenario"] = cfg.scenario;
    json params;
    params["p"] = cfg.p;
    params["h"] = cfg.h;
    params["delta"] = cfg.delta;
    params["sigma"] = cfg.sigma;
    params["M"] = cfg.M;
    params["m"] = cfg.m;
    params["k_max"] = cfg.k_max;
    params["cases"] = cfg.cases;
    params["seed"] = cfg.seed;
    params["bc"] = cfg.bc;
    rep["params"] = params;
    rep["metrics"] = art.metrics;
    json checks = json::array();
    for (const auto& c : art.checks) {
        json jc;
        jc["name"] = c.name;
        jc["value"] = c.value;
        jc["relation"] = c.relation;
        jc["bound"] = c.bound;
        jc["pass"] = c.pass;
        checks.push_back(jc);
    }
    rep["checks"] = checks;
    bool pass = all_pass(art.checks);
    rep["pass"] = pass;
    {
        std::ofstream os(out / "report.json");
        os << rep.dump(2) << "\n";
    }
    for (const auto& [name, header, rows] : art.tables)
        write_csv(out / "metrics" / (name + ".csv"), header, rows);
    for (const auto& [name, title, series, lx, ly] : art.plots)
        write_svg_plot(out / "plots" / (name + ".svg"), title, series, lx, ly);
    {
        json meta;
        std::time_t now = std::time(nullptr);
        char buf[64];
        std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&now));
        meta["generated"] = buf;
        meta["runtime_seconds"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0;
        std::ofstream os(out / "meta.json");
        os << meta.dump(2) << "\n";
    }
    std::printf("%s: %s (%zu checks, report at %s)\n", cfg.scenario.c_str(),
                pass ? "pass" : "FAIL", art.checks.size(),
                (out / "report.json").string().c_str());
    for (const auto& c : art.checks)
        std::printf("  [%s] %s: %.6g %s %.6g\n", c.pass ? "ok" : "fail", c.name.c_str(), c.value,
                    c.relation.c_str(), c.bound);
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pharmonic-lab: numerical experiments for p-harmonic systems "
                 "with antisymmetric potentials"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print help");

    Config cfg;
    std::string config_path;
    auto* run = app.add_subcommand("run", "execute a scenario and write its report");
    run->set_help_flag("--help", "print help");
    run->add_option("--config", config_path, "JSON config file");
    auto* sopt = run->add_option("--scenario", cfg.scenario, "scenario name");
    auto* popt = run->add_option("--p", cfg.p, "exponent");
    auto* hopt = run->add_option("--h", cfg.h, "grid spacing");
    auto* dopt = run->add_option("--delta", cfg.delta, "inner annulus radius");
    auto* mopt = run->add_option("--m", cfg.m, "target dimension");
    auto* copt = run->add_option("--cases", cfg.cases, "batch size");
    auto* seopt = run->add_option("--seed", cfg.seed, "rng seed");
    auto* bopt = run->add_option("--bc", cfg.bc, "boundary data name");
    auto* oopt = run->add_option("--out", cfg.out, "output directory");

    bool list_json = false;
    auto* list = app.add_subcommand("list", "list scenarios");
    list->add_flag("--json", list_json, "machine-readable listing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (list->parsed()) {
        if (list_json) {
            json arr = json::array();
            for (const auto& s : scenarios()) {
                json j;
                j["name"] = s.name;
                j["summary"] = s.summary;
                j["params"] = s.params;
                j["checks"] = s.checks;
                j["randomized"] = s.randomized;
                arr.push_back(j);
            }
            std::printf("%s\n", arr.dump(2).c_str());
        } else {
            for (const auto& s : scenarios())
                std::printf("%-20s %s\n  params: %s\n  checks: %s\n", s.name.c_str(),
                            s.summary.c_str(), s.params.c_str(), s.checks.c_str());
        }
        return 0;
    }

    try {
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw std::invalid_argument("config file not readable: " + config_path);
            json j = json::parse(is);
            // file values first, flags override below
            if (j.contains("scenario") && !*sopt) cfg.scenario = j["scenario"];
            if (j.contains("p") && !*popt) cfg.p = j["p"];
            if (j.contains("h") && !*hopt) cfg.h = j["h"];
            if (j.contains("delta") && !*dopt) cfg.delta = j["delta"];
            if (j.contains("sigma")) cfg.sigma = j["sigma"];
            if (j.contains("M")) cfg.M = j["M"];
            if (j.contains("m") && !*mopt) cfg.m = j["m"];
            if (j.contains("k_max")) cfg.k_max = j["k_max"];
            if (j.contains("cases") && !*copt) cfg.cases = j["cases"];
            if (j.contains("seed") && !*seopt) cfg.seed = j["seed"];
            if (j.contains("bc") && !*bopt) cfg.bc = j["bc"];
            if (j.contains("out") && !*oopt) cfg.out = j["out"];
        }
        if (cfg.scenario.empty())
            throw std::invalid_argument("config field scenario: missing (flag or config file)");
        return run_experiment(cfg);
    } catch (const json::exception& e) {
        std::fprintf(stderr, "config parse error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return 1;
    }
}
