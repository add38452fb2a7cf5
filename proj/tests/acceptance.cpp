// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "gradnet/analysis.hpp"
#include "gradnet/compiler.hpp"
#include "gradnet/device_tables.hpp"
#include "gradnet/graph.hpp"
#include "gradnet/netlist.hpp"
#include "gradnet/sizing.hpp"
#include "testutil.hpp"

using namespace gradnet;
using compiler::Circuit;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %d. %s: %s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    if (!pass) ++g_failures;
}

std::string fixture(const std::string& name) {
    return std::string(GRADNET_NETLIST_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const std::string& table_dir() {
    static const std::string dir = [] {
        std::string d = std::string(GRADNET_WORK_DIR) + "/acceptance_tables";
        std::filesystem::create_directories(d);
        if (!std::filesystem::exists(d + "/NMOSTYPE.json")) {
            sizing::write_standard_device_tables(d);
        }
        return d;
    }();
    return dir;
}

compiler::CompileOptions with_tables() {
    compiler::CompileOptions opt;
    opt.table_search_paths = {table_dir()};
    return opt;
}

Circuit load(const std::string& name) {
    return compiler::instantiate(netlist::parse_file(fixture(name)), with_tables());
}

int node_index(const Circuit& ckt, const std::string& name) {
    for (int i = 0; i < ckt.n_unknowns; ++i) {
        if (ckt.node_names[static_cast<std::size_t>(i)] == name) return i;
    }
    return -1;
}

char g_detail[512];

// ---------------------------------------------------------------------------

void criterion1_reference_listings() {
    bool pass = true;
    std::string detail;
    try {
        // The reference module listings, each inside its harness.
        for (const char* name : {"sizedep_divider.json", "nmos_common_source.json"}) {
            netlist::NetlistDocument doc = netlist::parse(slurp(fixture(name)));
            auto diags = netlist::validate(doc);
            if (netlist::has_errors(diags)) {
                pass = false;
                detail += std::string(name) + " has validation errors; ";
            }
            (void)compiler::instantiate(doc, with_tables());
        }
        Circuit ckt = load("sizedep_divider.json");
        analysis::DcResult dc = analysis::solve_dc(ckt);
        // 5 V across 200 ohm + SizeDepResistor(Rlength=2, Rwidth=1) = 200 ohm.
        double mid = dc.x[static_cast<std::size_t>(node_index(ckt, "mid"))];
        if (std::abs(mid - 2.5) > 1e-12) {
            pass = false;
            std::snprintf(g_detail, sizeof(g_detail), "mid = %.15f != 2.5; ", mid);
            detail += g_detail;
        }
        std::snprintf(g_detail, sizeof(g_detail),
                      "reference listings parse/validate/compile; divider mid error %.2e", mid - 2.5);
        detail = detail.empty() ? g_detail : detail;
    } catch (const std::exception& e) {
        pass = false;
        detail = e.what();
    }
    report(1, "reference-listing fidelity", pass, detail);
}

void criterion2_gradient_suite() {
    auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string detail;
    double worst_exact = 0.0, worst_table = 0.0;
    std::mt19937 rng(42);
    struct Entry {
        const char* name;
        double lo, hi, tol;
        const char* ip_instance;  // instance with input params, or nullptr
        std::vector<double> ip;
    };
    std::vector<Entry> entries = {
        {"sizedep_divider.json", -1.0, 1.0, 1e-6, "xr", {2.0, 1.0}},
        {"divider.json", -1.0, 1.0, 1e-6, nullptr, {}},
        {"rc_lowpass.json", -1.0, 1.0, 1e-6, nullptr, {}},
        {"rc_discharge.json", -1.0, 1.0, 1e-6, nullptr, {}},
        {"rlc.json", -1.0, 1.0, 1e-6, nullptr, {}},
        {"controlled_sources.json", -1.0, 1.0, 1e-6, nullptr, {}},
        {"nested3.json", -1.0, 1.0, 1e-6, "lvl1", {1.7}},
        {"galv_resistor.json", -1.0, 1.0, 1e-6, nullptr, {}},
        // ip probe points sit off the table grid knots, where the C1
        // interpolant supports clean central differences
        {"nmos_common_source.json", 0.15, 1.2, 1e-4, "m1", {1.55e-6, 2.6e-5}},
        {"ota5t.json", 0.35, 0.9, 1e-4, "m3", {1.35e-6, 2.7e-5}},
    };
    try {
        for (const Entry& e : entries) {
            Circuit ckt = load(e.name);
            std::vector<double> gv0 = ckt.rules->global_values();
            double worst = 0.0;
            for (int draw = 0; draw < 4; ++draw) {
                std::vector<double> x = gradcheck::random_state(ckt, rng, e.lo, e.hi);
                std::vector<double> gv = gv0;
                for (double& g : gv) {
                    g *= 1.0 + 0.04 * std::uniform_real_distribution<double>(-1, 1)(rng);
                }
                for (graph::Analysis a : {graph::Analysis::Dc, graph::Analysis::Tran}) {
                    worst = std::max(worst, gradcheck::fd_check_top(ckt, a, x, gv));
                }
                if (e.ip_instance) {
                    const compiler::SubcircuitInstance* inst = ckt.find_instance(e.ip_instance);
                    std::vector<int> en(inst->node_frame.begin(),
                                        inst->node_frame.begin() + inst->rule->n_external());
                    worst = std::max(worst, gradcheck::fd_check_instance(
                                                ckt, *inst, en, e.ip, graph::Analysis::Dc, x, gv));
                }
            }
            if (worst > e.tol) {
                pass = false;
                std::snprintf(g_detail, sizeof(g_detail), "%s worst %.3e > %.0e; ", e.name,
                              worst, e.tol);
                detail += g_detail;
            }
            (e.tol == 1e-6 ? worst_exact : worst_table) =
                std::max(e.tol == 1e-6 ? worst_exact : worst_table, worst);
        }
    } catch (const std::exception& e) {
        pass = false;
        detail = e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 60.0) {
        pass = false;
        detail += "runtime over budget; ";
    }
    std::snprintf(g_detail, sizeof(g_detail),
                  "10 netlists, worst rel err %.2e (exact) / %.2e (table), %.1f s%s%s",
                  worst_exact, worst_table, secs, detail.empty() ? "" : " -- ", detail.c_str());
    report(2, "gradient suite vs finite differences", pass, g_detail);
}

void criterion3_hierarchy_flat() {
    bool pass = true;
    std::string detail;
    double worst = 0.0;
    std::mt19937 rng(7);
    struct Entry {
        const char* name;
        double lo, hi;
    };
    try {
        for (const Entry& e : std::vector<Entry>{{"sizedep_divider.json", -1.0, 1.0},
                                                 {"divider.json", -1.0, 1.0},
                                                 {"rc_lowpass.json", -1.0, 1.0},
                                                 {"rc_discharge.json", -1.0, 1.0},
                                                 {"rlc.json", -1.0, 1.0},
                                                 {"controlled_sources.json", -1.0, 1.0},
                                                 {"nested3.json", -1.0, 1.0},
                                                 {"galv_resistor.json", -1.0, 1.0},
                                                 {"nmos_common_source.json", 0.2, 1.2},
                                                 {"ota5t.json", 0.35, 0.9}}) {
            Circuit ckt = load(e.name);
            for (int draw = 0; draw < 3; ++draw) {
                std::vector<double> x = gradcheck::random_state(ckt, rng, e.lo, e.hi);
                for (graph::Analysis a : {graph::Analysis::Dc, graph::Analysis::Tran}) {
                    double err = gradcheck::flat_vs_graph(ckt, a, x, ckt.rules->global_values());
                    worst = std::max(worst, err);
                    if (err > 1e-12) {
                        pass = false;
                        detail += std::string(e.name) + "; ";
                    }
                }
            }
        }
    } catch (const std::exception& e) {
        pass = false;
        detail = e.what();
    }
    std::snprintf(g_detail, sizeof(g_detail), "worst rel deviation %.2e (tol 1e-12)%s%s", worst,
                  detail.empty() ? "" : " -- ", detail.c_str());
    report(3, "hierarchy/flat oracle equivalence", pass, g_detail);
}

void criterion4_analytic_checks() {
    bool pass = true;
    std::string detail;
    try {
        // divider DC exact to 1e-9
        {
            Circuit ckt = load("divider.json");
            analysis::DcResult dc = analysis::solve_dc(ckt);
            double mid = dc.x[static_cast<std::size_t>(node_index(ckt, "mid"))];
            if (std::abs(mid - 2.5) > 1e-9) {
                pass = false;
                detail += "divider DC; ";
            }
        }
        // RC transient vs exp(-t/RC), backward Euler dt = tau/100, <= 2%
        double tran_err = 0.0;
        {
            Circuit ckt = load("rc_discharge.json");
            analysis::NewtonConfig cfg;
            cfg.initial_x = {1.0};
            analysis::TransientStepContext ctx;
            ctx.beta = 1.0;
            ctx.dt = 1e-5;  // tau/100 with R = 1k, C = 1uF
            analysis::Trajectory traj = analysis::solve_tran(ckt, 1e-3, ctx, cfg);
            tran_err = std::abs(traj.states.back()[0] - std::exp(-1.0)) / std::exp(-1.0);
            if (tran_err > 0.02) {
                pass = false;
                detail += "RC transient; ";
            }
        }
        // RC AC at f = 1/(2 pi R C): -3.0103 dB within 0.01 dB
        double ac_db = 0.0;
        {
            Circuit ckt = load("rc_lowpass.json");
            analysis::DcResult dc = analysis::solve_dc(ckt);
            analysis::ACSystem sys = analysis::solve_ac(ckt, dc.x, 1.0 / (1000.0 * 1e-6));
            double mag = std::abs(sys.eps_x[static_cast<std::size_t>(node_index(ckt, "out"))]);
            ac_db = 20.0 * std::log10(mag);
            if (std::abs(ac_db + 3.0103) > 0.01) {
                pass = false;
                detail += "RC AC corner; ";
            }
        }
        // omega -> 0: AC solution equals the real DC small-signal solve
        {
            Circuit ckt = load("rc_lowpass.json");
            analysis::DcResult dc = analysis::solve_dc(ckt);
            analysis::ACSystem tiny = analysis::solve_ac(ckt, dc.x, 1e-6);
            analysis::ACSystem zero = analysis::solve_ac(ckt, dc.x, 0.0);
            for (int i = 0; i < ckt.n_unknowns; ++i) {
                if (std::abs(tiny.eps_x[static_cast<std::size_t>(i)] -
                             zero.eps_x[static_cast<std::size_t>(i)]) > 1e-6) {
                    pass = false;
                    detail += "omega->0 limit; ";
                }
            }
        }
        std::snprintf(g_detail, sizeof(g_detail),
                      "divider exact, RC tran err %.2f%%, corner %.4f dB, omega->0 ok%s%s",
                      100.0 * tran_err, ac_db, detail.empty() ? "" : " -- ", detail.c_str());
    } catch (const std::exception& e) {
        pass = false;
        std::snprintf(g_detail, sizeof(g_detail), "%s", e.what());
    }
    report(4, "analytic analysis checks", pass, g_detail);
}

void criterion5_adjoint_equivalence() {
    bool pass = true;
    std::string detail;
    double worst_real = 0.0, worst_cplx = 0.0;
    try {
        // dc_sensitivity vs re-solve finite differences (divider, closed form too)
        {
            Circuit ckt = load("divider.json");
            analysis::DcResult dc = analysis::solve_dc(ckt);
            analysis::SensitivityRequest req;
            req.loss_grad.assign(static_cast<std::size_t>(ckt.n_unknowns), 0.0);
            req.loss_grad[static_cast<std::size_t>(node_index(ckt, "mid"))] = 1.0;
            std::vector<double> grad = analysis::dc_sensitivity(ckt, dc.x, req);
            std::vector<double> gv0 = ckt.rules->global_values();
            for (std::size_t k = 0; k < gv0.size(); ++k) {
                double h = 1e-4 * gv0[k];
                auto gp = gv0, gm = gv0;
                gp[k] += h;
                gm[k] -= h;
                double vp = analysis::solve_dc(ckt, {}, gp)
                                .x[static_cast<std::size_t>(node_index(ckt, "mid"))];
                double vm = analysis::solve_dc(ckt, {}, gm)
                                .x[static_cast<std::size_t>(node_index(ckt, "mid"))];
                double fd = (vp - vm) / (2 * h);
                double rel = std::abs(grad[k] - fd) / std::max(std::abs(fd), 1e-12);
                worst_real = std::max(worst_real, rel);
            }
            double closed = -5.0 * 1000.0 / (2000.0 * 2000.0);
            if (std::abs(grad[0] - closed) > 1e-9) pass = false;
            if (worst_real > 1e-6) {
                pass = false;
                detail += "dc_sensitivity fd; ";
            }
        }
        // 1x1 complex Wirtinger case vs finite differences on Re/Im parts
        {
            using C = std::complex<double>;
            std::vector<double> x0 = {1.1, -0.6, 0.8, 0.35};
            auto solve_v = [](const std::vector<double>& p) {
                return C(p[2], p[3]) / C(p[0], p[1]);
            };
            C v = solve_v(x0);
            std::vector<sparse::Triplet<C>> A = {{0, 0, C(x0[0], x0[1])}};
            std::vector<C> dl_dv = {C(2.0 * v.real(), 2.0 * v.imag())};  // l = |v|^2
            std::vector<std::vector<sparse::Triplet<C>>> dA = {
                {{0, 0, C(1, 0)}}, {{0, 0, C(0, 1)}}, {}, {}};
            std::vector<std::vector<std::pair<int, C>>> db = {
                {}, {}, {{0, C(1, 0)}}, {{0, C(0, 1)}}};
            std::vector<C> vv = {v};
            std::vector<double> g = analysis::linear_solution_backprop(1, A, vv, dl_dv, dA, db);
            for (std::size_t k = 0; k < 4; ++k) {
                double h = 1e-7;
                auto xp = x0, xm = x0;
                xp[k] += h;
                xm[k] -= h;
                double fd = (std::norm(solve_v(xp)) - std::norm(solve_v(xm))) / (2 * h);
                worst_cplx = std::max(worst_cplx, std::abs(g[k] - fd));
            }
            if (worst_cplx > 1e-8) {
                pass = false;
                detail += "complex Wirtinger; ";
            }
        }
        std::snprintf(g_detail, sizeof(g_detail),
                      "re-solve fd rel %.2e (tol 1e-6), 1x1 complex abs %.2e (tol 1e-8)%s%s",
                      worst_real, worst_cplx, detail.empty() ? "" : " -- ", detail.c_str());
    } catch (const std::exception& e) {
        pass = false;
        std::snprintf(g_detail, sizeof(g_detail), "%s", e.what());
    }
    report(5, "adjoint equivalence", pass, g_detail);
}

void criterion6_dcac_chain() {
    bool pass = true;
    double worst = 0.0;
    std::string detail;
    try {
        Circuit ckt = load("nmos_common_source.json");
        const int out = node_index(ckt, "out");
        const double omega = 2.0 * M_PI * 1.0;
        analysis::ComplexLossFn loss = [out](std::span<const analysis::Complex> eps) {
            analysis::ComplexLoss l;
            l.grad.assign(eps.size(), {0.0, 0.0});
            const analysis::Complex v = eps[static_cast<std::size_t>(out)];
            double mag2 = std::norm(v);
            l.value = 10.0 * std::log10(mag2);
            double s = 20.0 / (std::log(10.0) * mag2);
            l.grad[static_cast<std::size_t>(out)] = {s * v.real(), s * v.imag()};
            return l;
        };
        std::vector<double> gv0 = ckt.rules->global_values();
        analysis::DcacResult r = analysis::solve_dcac(ckt, omega, loss, gv0);
        auto full = [&](const std::vector<double>& gv) {
            analysis::DcResult dc = analysis::solve_dc(ckt, {}, gv);
            analysis::ACSystem sys = analysis::solve_ac(ckt, dc.x, omega, gv);
            return loss(sys.eps_x).value;
        };
        for (std::size_t k = 0; k < gv0.size(); ++k) {  // W (MosW), L, Vg
            double h = 1e-5 * gv0[k];
            auto gp = gv0, gm = gv0;
            gp[k] += h;
            gm[k] -= h;
            double fd = (full(gp) - full(gm)) / (2 * h);
            double rel = std::abs(r.dl_dgv[k] - fd) /
                         std::max({std::abs(r.dl_dgv[k]), std::abs(fd), 1e-12});
            worst = std::max(worst, rel);
        }
        if (worst > 1e-4) pass = false;
        std::snprintf(g_detail, sizeof(g_detail),
                      "gain gradient vs full re-solve, worst rel %.2e (tol 1e-4)", worst);
    } catch (const std::exception& e) {
        pass = false;
        std::snprintf(g_detail, sizeof(g_detail), "%s", e.what());
    }
    report(6, "DCAC chain gradient", pass, g_detail);
}

void criterion7_sizing() {
    bool pass = true;
    std::string detail;
    auto t0 = std::chrono::steady_clock::now();
    try {
        netlist::NetlistDocument doc = netlist::parse_file(fixture("ota5t.json"));
        std::string spec = slurp(fixture("specs/ota5t_sizing.json"));
        auto prob = std::make_shared<sizing::SizingProblem>(
            sizing::build_problem(doc, spec, with_tables()));
        sizing::NLPCallbacks cb = sizing::make_callbacks(prob);
        sizing::SizingResult r = sizing::optimize(cb);

        if (r.status != sizing::SizingStatus::Optimal) {
            pass = false;
            detail += std::string("status ") + sizing::status_name(r.status) + "; ";
        }
        if (r.objective > 1e-8) {
            pass = false;
            detail += "objective; ";
        }
        auto cons = cb.eval_constraints(r.p_opt);
        for (double c : cons) {
            if (c < -1e-6) {
                pass = false;
                detail += "saturation row; ";
                break;
            }
        }
        std::vector<double> vars = prob->expand_vars(r.p_opt);
        if (vars[0] != vars[1] || vars[2] != vars[3]) {
            pass = false;
            detail += "tie groups not bitwise equal; ";
        }

        // permuted corner order reproduces p_opt
        std::string reversed =
            R"("Corners": [
            {"Corner": "ss", "Temperature": 125}, {"Corner": "ss", "Temperature": -40},
            {"Corner": "ss", "Temperature": 27}, {"Corner": "ff", "Temperature": 125},
            {"Corner": "ff", "Temperature": -40}, {"Corner": "ff", "Temperature": 27},
            {"Corner": "tt", "Temperature": 125}, {"Corner": "tt", "Temperature": -40},
            {"Corner": "tt", "Temperature": 27}])";
        std::string spec2 = spec;
        std::size_t at = spec2.find("\"Corners\": \"all\"");
        spec2.replace(at, std::string("\"Corners\": \"all\"").size(), reversed);
        auto prob2 = std::make_shared<sizing::SizingProblem>(
            sizing::build_problem(doc, spec2, with_tables()));
        sizing::NLPCallbacks cb2 = sizing::make_callbacks(prob2);
        sizing::SizingResult r2 = sizing::optimize(cb2);
        for (std::size_t k = 0; k < r.p_opt.size(); ++k) {
            if (std::abs(r.p_opt[k] - r2.p_opt[k]) >
                1e-6 * std::max(1.0, std::abs(r.p_opt[k]))) {
                pass = false;
                detail += "corner permutation; ";
                break;
            }
        }
        double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs >= 120.0) {
            pass = false;
            detail += "runtime; ";
        }
        std::snprintf(g_detail, sizeof(g_detail),
                      "status %s, objective %.1e, %d outer iters, %.1f s, permutation stable%s%s",
                      sizing::status_name(r.status), r.objective, r.iterations, secs,
                      detail.empty() ? "" : " -- ", detail.c_str());
    } catch (const std::exception& e) {
        pass = false;
        std::snprintf(g_detail, sizeof(g_detail), "%s", e.what());
    }
    report(7, "desk-scale 5T-OTA sizing", pass, g_detail);
}

void criterion8_static_checks() {
    bool pass = true;
    std::string detail;
    try {
        struct Want {
            const char* file;
            const char* code;
        };
        int counts[4] = {0, 0, 0, 0};
        const char* codes[4] = {"CircularDefinition", "UndefinedMaster", "UnusedNode",
                                "DisconnectedComponent"};
        std::size_t total = 0;
        for (const Want& w : {Want{"invalid/circular.json", "CircularDefinition"},
                              Want{"invalid/undefined_master.json", "UndefinedMaster"},
                              Want{"invalid/unused_node.json", "UnusedNode"},
                              Want{"invalid/disconnected.json", "DisconnectedComponent"}}) {
            auto diags = netlist::validate(netlist::parse_file(fixture(w.file)));
            total += diags.size();
            for (const auto& d : diags) {
                for (int i = 0; i < 4; ++i) {
                    if (d.code == codes[i]) ++counts[i];
                }
            }
        }
        for (int i = 0; i < 4; ++i) {
            if (counts[i] != 1) {
                pass = false;
                detail += std::string(codes[i]) + " x" + std::to_string(counts[i]) + "; ";
            }
        }
        if (total != 4) {
            pass = false;
            detail += "extra diagnostics; ";
        }
        std::snprintf(g_detail, sizeof(g_detail),
                      "each of the four diagnostics fired exactly once%s%s",
                      detail.empty() ? "" : " -- ", detail.c_str());
    } catch (const std::exception& e) {
        pass = false;
        std::snprintf(g_detail, sizeof(g_detail), "%s", e.what());
    }
    report(8, "static-check fixture corpus", pass, g_detail);
}

}  // namespace

int main() {
    criterion1_reference_listings();
    criterion2_gradient_suite();
    criterion3_hierarchy_flat();
    criterion4_analytic_checks();
    criterion5_adjoint_equivalence();
    criterion6_dcac_chain();
    criterion7_sizing();
    criterion8_static_checks();
    if (g_failures == 0) {
        std::printf("acceptance: all 8 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    return 1;
}
