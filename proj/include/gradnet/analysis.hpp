#pragma once

// Equation solving on top of the graph executor:
//   - DC Newton-Raphson with residual-halving damping and sparse LU steps
//   - fixed-step transient integration (backward Euler / trapezoidal)
//   - AC small-signal solve (iw*dQ/dx + dF/dx) eps = b at a DC bias
//   - adjoint DC sensitivities (one transpose solve per loss)
//   - gradient backprop through linear solves, real or complex (a real loss
//     of a complex solution uses the Wirtinger convention: the gradient
//     vector carries dl/dRe + i*dl/dIm)
//   - the DCAC chain: d(loss(eps_x))/d(globals) with first-order flow
//     through the SubModel Jacobians of the AC-active elements

#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradnet/compiler.hpp"
#include "gradnet/errors.hpp"
#include "gradnet/graph.hpp"
#include "gradnet/sparse.hpp"

namespace gradnet::analysis {

using Complex = std::complex<double>;
using compiler::Circuit;

struct NewtonConfig {
    double abstol = 1e-9;
    double reltol = 1e-6;
    int max_iter = 50;
    double min_damping = 9.5367431640625e-7;  // 2^-20
    std::vector<double> initial_x;            // empty: zeros plus NodeSet hints
};

struct DcResult {
    std::vector<double> x;
    int iterations = 0;
    double residual = 0.0;
};

namespace detail {

inline double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline std::vector<double> start_vector(const Circuit& ckt, const NewtonConfig& cfg) {
    if (!cfg.initial_x.empty()) {
        if (static_cast<int>(cfg.initial_x.size()) != ckt.n_unknowns) {
            throw ArityError("initial_x length does not match the unknown count");
        }
        return cfg.initial_x;
    }
    std::vector<double> x(static_cast<std::size_t>(ckt.n_unknowns), 0.0);
    for (const auto& [name, value] : ckt.rules->node_set) {
        for (int i = 0; i < ckt.n_unknowns; ++i) {
            if (ckt.node_names[static_cast<std::size_t>(i)] == name) {
                x[static_cast<std::size_t>(i)] = value;
            }
        }
    }
    return x;
}

inline std::string node_label(const Circuit& ckt, int index) {
    if (index >= 0 && index < static_cast<int>(ckt.node_names.size())) {
        return ckt.node_names[static_cast<std::size_t>(index)];
    }
    return "#" + std::to_string(index);
}

/// One damped Newton solve of a(x) = scale_q/(beta*dt)*Q + F + b = 0.
/// tran terms are disabled when beta_dt <= 0.
inline DcResult newton_solve(const Circuit& ckt, const NewtonConfig& cfg,
                             std::span<const double> globals, double beta_dt,
                             std::span<const double> history, std::vector<double> x) {
    const int n = ckt.n_unknowns;
    auto residual = [&](std::span<const double> xv, bool want_jac) {
        graph::EvalRequest req;
        req.x = xv;
        req.analysis = beta_dt > 0 ? graph::Analysis::Tran : graph::Analysis::Dc;
        req.globals = globals;
        req.wanted = want_jac ? graph::GradientFlags::x_only() : graph::GradientFlags::none();
        graph::EvalResult r = graph::eval_top(ckt, req);
        std::vector<double> f = r.F.to_dense(n);
        graph::Triplets jac = std::move(r.dF_dx);
        if (beta_dt > 0) {
            auto q = r.Q.to_dense(n);
            for (int i = 0; i < n; ++i) {
                f[static_cast<std::size_t>(i)] += q[static_cast<std::size_t>(i)] / beta_dt +
                                                  history[static_cast<std::size_t>(i)];
            }
            for (const auto& t : r.dQ_dx) jac.push_back({t.row, t.col, t.value / beta_dt});
        }
        return std::make_pair(std::move(f), std::move(jac));
    };

    auto [f, jac] = residual(x, true);
    double fnorm = inf_norm(f);
    double last_step = 0.0;
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        if (fnorm <= cfg.abstol &&
            (iter == 0 || last_step <= cfg.reltol * inf_norm(x) + cfg.abstol)) {
            return {std::move(x), iter, fnorm};
        }
        sparse::RealLu lu;
        try {
            lu = sparse::RealLu::factorize(n, jac);
        } catch (const sparse::SingularMatrixError& e) {
            throw SingularJacobian("pivot failed on column of node '" +
                                   node_label(ckt, e.column) + "'");
        }
        std::vector<double> rhs(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) rhs[i] = -f[i];
        std::vector<double> delta = lu.solve(rhs);

        // Residual-halving damping; accepted steps never increase ||F||inf.
        double t = 1.0;
        bool accepted = false;
        while (t >= cfg.min_damping) {
            std::vector<double> x_new = x;
            for (int i = 0; i < n; ++i) {
                x_new[static_cast<std::size_t>(i)] += t * delta[static_cast<std::size_t>(i)];
            }
            auto [f_new, jac_new] = residual(x_new, true);
            double fn = inf_norm(f_new);
            if (fn <= fnorm) {
                last_step = t * inf_norm(delta);
                x = std::move(x_new);
                f = std::move(f_new);
                jac = std::move(jac_new);
                fnorm = fn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            throw NoConvergence("damping line search stalled at iteration " +
                                std::to_string(iter) + ", |F| = " + std::to_string(fnorm));
        }
        if (fnorm <= cfg.abstol && last_step <= cfg.reltol * inf_norm(x) + cfg.abstol) {
            return {std::move(x), iter + 1, fnorm};
        }
    }
    throw NoConvergence("no convergence after " + std::to_string(cfg.max_iter) +
                        " iterations, |F| = " + std::to_string(fnorm));
}

}  // namespace detail

/// DC operating point.
inline DcResult solve_dc(const Circuit& ckt, const NewtonConfig& cfg = {},
                         std::vector<double> globals = {}) {
    if (globals.empty()) globals = ckt.rules->global_values();
    return detail::newton_solve(ckt, cfg, globals, 0.0, {}, detail::start_vector(ckt, cfg));
}

// ---------------------------------------------------------------------------
// Transient
// ---------------------------------------------------------------------------

struct TransientStepContext {
    double beta = 1.0;  // 1: backward Euler, 0.5: trapezoidal
    double dt = 0.0;
    std::vector<double> history;  // b, rebuilt each step
};

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
};

/// Fixed-step integration of (1/(beta*dt)) Q + F + b = 0 up to t_end.
inline Trajectory solve_tran(const Circuit& ckt, double t_end, TransientStepContext ctx,
                             const NewtonConfig& cfg = {}, std::vector<double> globals = {}) {
    if (!(ctx.dt > 0)) throw ArityError("transient step dt must be positive");
    if (ctx.beta != 1.0 && ctx.beta != 0.5) {
        throw UnsupportedAnalysis("integrator beta must be 1 (backward Euler) or 1/2 (trapezoidal)");
    }
    if (globals.empty()) globals = ckt.rules->global_values();
    const int n = ckt.n_unknowns;
    std::vector<double> x = cfg.initial_x.empty() ? solve_dc(ckt, cfg, globals).x : cfg.initial_x;

    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(x);

    const double beta_dt = ctx.beta * ctx.dt;
    NewtonConfig step_cfg = cfg;
    for (double t = ctx.dt; t <= t_end * (1.0 + 1e-12); t += ctx.dt) {
        // b = -Q_prev/(beta dt) + (1/beta - 1) F_prev.
        graph::EvalRequest req;
        req.x = x;
        req.analysis = graph::Analysis::Tran;
        req.globals = globals;
        req.wanted = graph::GradientFlags::none();
        graph::EvalResult prev = graph::eval_top(ckt, req);
        auto qp = prev.Q.to_dense(n);
        auto fp = prev.F.to_dense(n);
        ctx.history.assign(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            ctx.history[static_cast<std::size_t>(i)] =
                -qp[static_cast<std::size_t>(i)] / beta_dt +
                (1.0 / ctx.beta - 1.0) * fp[static_cast<std::size_t>(i)];
        }
        step_cfg.initial_x = x;
        DcResult step;
        try {
            step = detail::newton_solve(ckt, step_cfg, globals, beta_dt, ctx.history, x);
        } catch (const Error& e) {
            throw Error(e.kind(), "at t = " + std::to_string(t) + ": " + e.what());
        }
        x = std::move(step.x);
        traj.times.push_back(t);
        traj.states.push_back(x);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// AC small signal
// ---------------------------------------------------------------------------

struct ACSystem {
    int n = 0;
    double omega = 0.0;
    std::vector<sparse::Triplet<Complex>> A;
    std::vector<Complex> b_rhs;
    std::vector<Complex> eps_x;
    sparse::ComplexLu lu;
};

/// Builds and solves (iw dQ/dx + dF/dx) eps = b at the DC point x_dc.
inline ACSystem solve_ac(const Circuit& ckt, std::span<const double> x_dc, double omega,
                         std::vector<double> globals = {}) {
    if (globals.empty()) globals = ckt.rules->global_values();
    const int n = ckt.n_unknowns;
    std::vector<double> zero(static_cast<std::size_t>(n), 0.0);

    graph::EvalRequest build;
    build.x = zero;
    build.x_bias = x_dc;
    build.analysis = graph::Analysis::AcBuild;
    build.globals = globals;
    build.wanted = graph::GradientFlags::x_only();
    graph::EvalResult rb = graph::eval_top(ckt, build);

    ACSystem sys;
    sys.n = n;
    sys.omega = omega;
    for (const auto& t : rb.dF_dx) sys.A.push_back({t.row, t.col, Complex(t.value, 0.0)});
    for (const auto& t : rb.dQ_dx) sys.A.push_back({t.row, t.col, Complex(0.0, omega * t.value)});

    graph::EvalRequest stim;
    stim.x = zero;
    stim.x_bias = x_dc;
    stim.analysis = graph::Analysis::AcStimulus;
    stim.globals = globals;
    stim.wanted = graph::GradientFlags::none();
    graph::EvalResult rs = graph::eval_top(ckt, stim);
    sys.b_rhs.assign(static_cast<std::size_t>(n), Complex(0.0, 0.0));
    for (const auto& [i, v] : rs.F.items) sys.b_rhs[static_cast<std::size_t>(i)] += v;

    try {
        sys.lu = sparse::ComplexLu::factorize(n, sys.A);
    } catch (const sparse::SingularMatrixError& e) {
        throw SingularJacobian("AC system is singular at column of node '" +
                               detail::node_label(ckt, e.column) + "'");
    }
    sys.eps_x = sys.lu.solve(sys.b_rhs);
    return sys;
}

// ---------------------------------------------------------------------------
// Adjoint DC sensitivities
// ---------------------------------------------------------------------------

/// Factorizes dF/dx^T once; each gradient costs one transpose solve.
class DcSensitivity {
  public:
    DcSensitivity(const Circuit& ckt, std::span<const double> x_solution,
                  std::vector<double> globals = {})
        : n_(ckt.n_unknowns) {
        if (globals.empty()) globals = ckt.rules->global_values();
        graph::EvalRequest req;
        req.x = x_solution;
        req.analysis = graph::Analysis::Dc;
        req.globals = globals;
        req.wanted = {true, true, false, false};
        eval_ = graph::eval_top(ckt, req);
        try {
            lu_ = sparse::RealLu::factorize(n_, eval_.dF_dx);
        } catch (const sparse::SingularMatrixError& e) {
            throw SingularJacobian("pivot failed on column of node '" +
                                   detail::node_label(ckt, e.column) + "'");
        }
    }

    /// -(dF/dgv)^T (dF/dx^T \ loss_grad), over all globals.
    std::vector<double> gradient_gv(std::span<const double> loss_grad) const {
        std::vector<double> lg(loss_grad.begin(), loss_grad.end());
        std::vector<double> lambda = lu_.solve_transpose(lg);
        std::vector<double> out(static_cast<std::size_t>(eval_.n_gv), 0.0);
        for (const auto& t : eval_.dF_dgv) {
            out[static_cast<std::size_t>(t.col)] -=
                t.value * lambda[static_cast<std::size_t>(t.row)];
        }
        return out;
    }

    const graph::EvalResult& eval() const { return eval_; }
    const sparse::RealLu& lu() const { return lu_; }

  private:
    int n_;
    graph::EvalResult eval_;
    sparse::RealLu lu_;
};

struct SensitivityRequest {
    std::vector<double> loss_grad;  // dl/dx at the solution
};

/// One-shot adjoint gradient of l(x_solution) against the netlist Globals.
inline std::vector<double> dc_sensitivity(const Circuit& ckt, std::span<const double> x_solution,
                                          const SensitivityRequest& req,
                                          std::vector<double> globals = {}) {
    DcSensitivity s(ckt, x_solution, std::move(globals));
    return s.gradient_gv(req.loss_grad);
}

// ---------------------------------------------------------------------------
// Gradient backprop through a linear solve
// ---------------------------------------------------------------------------

namespace detail {
inline double real_part(double v) { return v; }
inline double real_part(Complex v) { return v.real(); }
inline double conj_of(double v) { return v; }
inline Complex conj_of(Complex v) { return std::conj(v); }
}  // namespace detail

/// Given A v = b and dl/dv, returns dl/dx[k] = Re(w^T (db_k - dA_k v)) with
/// one transpose solve A^T w = conj(dl/dv). For complex systems with a real
/// loss, dl/dv must carry dl/dRe(v) + i dl/dIm(v) (Wirtinger convention).
template <typename T>
std::vector<double> linear_solution_backprop(
    int n, const std::vector<sparse::Triplet<T>>& a_trips, const std::vector<T>& v,
    const std::vector<T>& dl_dv, const std::vector<std::vector<sparse::Triplet<T>>>& dA_dx,
    const std::vector<std::vector<std::pair<int, T>>>& db_dx) {
    sparse::SparseLu<T> lu = sparse::SparseLu<T>::factorize(n, a_trips);
    std::vector<T> rhs(dl_dv.size());
    for (std::size_t i = 0; i < dl_dv.size(); ++i) rhs[i] = detail::conj_of(dl_dv[i]);
    std::vector<T> w = lu.solve_transpose(rhs);

    const std::size_t n_x = std::max(dA_dx.size(), db_dx.size());
    std::vector<double> out(n_x, 0.0);
    for (std::size_t k = 0; k < n_x; ++k) {
        T acc{};
        if (k < db_dx.size()) {
            for (const auto& [i, val] : db_dx[k]) {
                acc += w[static_cast<std::size_t>(i)] * val;
            }
        }
        if (k < dA_dx.size()) {
            for (const auto& t : dA_dx[k]) {
                acc -= w[static_cast<std::size_t>(t.row)] * t.value *
                       v[static_cast<std::size_t>(t.col)];
            }
        }
        out[k] = detail::real_part(acc);
    }
    return out;
}

// ---------------------------------------------------------------------------
// DCAC hybrid:  globals -> DC bias -> AC system -> scalar loss
// ---------------------------------------------------------------------------

struct ComplexLoss {
    double value = 0.0;
    std::vector<Complex> grad;  // dl/dRe + i dl/dIm per solution entry
};

using ComplexLossFn = std::function<ComplexLoss(std::span<const Complex>)>;

/// l = max(target_log10 - log10|v[node]|, 0)^2, the gain-shortfall loss.
inline ComplexLossFn gain_shortfall_loss(int node, double target_db) {
    return [node, target_db](std::span<const Complex> eps) {
        ComplexLoss out;
        out.grad.assign(eps.size(), Complex(0.0, 0.0));
        const Complex v = eps[static_cast<std::size_t>(node)];
        const double mag = std::abs(v);
        const double target = target_db / 20.0;
        double shortfall = target - std::log10(std::max(mag, 1e-300));
        if (shortfall <= 0.0) {
            out.value = 0.0;
            return out;
        }
        out.value = shortfall * shortfall;
        // dl/d|v| = -2 shortfall / (|v| ln 10); d|v|/dRe = Re/|v|.
        double dmag = -2.0 * shortfall / (mag * std::log(10.0));
        out.grad[static_cast<std::size_t>(node)] =
            Complex(dmag * v.real() / mag, dmag * v.imag() / mag);
        return out;
    };
}

struct DcacResult {
    std::vector<double> x_dc;
    std::vector<Complex> eps_x;
    double loss = 0.0;
    std::vector<double> dl_dgv;
};

/// Chains solve_dc -> solve_ac -> adjoint backprop. dA and db contractions
/// run through AC-build / AC-stimulus graph evaluations at y = Re(eps) and
/// y = Im(eps), so all flows stay first order in Q, F.
inline DcacResult solve_dcac(const Circuit& ckt, double omega, const ComplexLossFn& loss,
                             std::vector<double> globals = {}, const NewtonConfig& cfg = {}) {
    if (globals.empty()) globals = ckt.rules->global_values();
    const int n = ckt.n_unknowns;
    const int ng = static_cast<int>(globals.size());

    DcacResult out;
    out.x_dc = solve_dc(ckt, cfg, globals).x;
    ACSystem sys = solve_ac(ckt, out.x_dc, omega, globals);
    out.eps_x = sys.eps_x;
    ComplexLoss l = loss(sys.eps_x);
    out.loss = l.value;

    // w solves A^T w = conj(g).
    std::vector<Complex> rhs(l.grad.size());
    for (std::size_t i = 0; i < l.grad.size(); ++i) rhs[i] = std::conj(l.grad[i]);
    std::vector<Complex> w = sys.lu.solve_transpose(rhs);
    std::vector<double> wr(static_cast<std::size_t>(n)), wi(static_cast<std::size_t>(n));
    std::vector<double> vr(static_cast<std::size_t>(n)), vi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        wr[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)].real();
        wi[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)].imag();
        vr[static_cast<std::size_t>(i)] = sys.eps_x[static_cast<std::size_t>(i)].real();
        vi[static_cast<std::size_t>(i)] = sys.eps_x[static_cast<std::size_t>(i)].imag();
    }

    graph::GradientFlags param_flags{false, true, false, true};
    auto build_eval = [&](std::span<const double> y) {
        graph::EvalRequest req;
        req.x = y;
        req.x_bias = out.x_dc;
        req.analysis = graph::Analysis::AcBuild;
        req.globals = globals;
        req.wanted = param_flags;
        return graph::eval_top(ckt, req);
    };
    graph::EvalResult at_vr = build_eval(vr);
    graph::EvalResult at_vi = build_eval(vi);

    std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
    graph::EvalRequest stim_req;
    stim_req.x = zero;
    stim_req.x_bias = out.x_dc;
    stim_req.analysis = graph::Analysis::AcStimulus;
    stim_req.globals = globals;
    stim_req.wanted = param_flags;
    graph::EvalResult stim = graph::eval_top(ckt, stim_req);

    // Re[w^T (db/dth - dA/dth v)] accumulated per theta column.
    std::vector<double> direct_gv(static_cast<std::size_t>(ng), 0.0);
    std::vector<double> dl_dxdc(static_cast<std::size_t>(n), 0.0);
    auto contract = [](std::vector<double>& acc, const graph::Triplets& m,
                       std::span<const double> weights, double scale) {
        for (const auto& t : m) {
            acc[static_cast<std::size_t>(t.col)] +=
                scale * weights[static_cast<std::size_t>(t.row)] * t.value;
        }
    };
    // - Re[w^T dA/dth v]:
    contract(direct_gv, at_vr.dF_dgv, wr, -1.0);
    contract(direct_gv, at_vi.dQ_dgv, wr, sys.omega);
    contract(direct_gv, at_vi.dF_dgv, wi, 1.0);
    contract(direct_gv, at_vr.dQ_dgv, wi, sys.omega);
    contract(dl_dxdc, at_vr.dF_dxbias, wr, -1.0);
    contract(dl_dxdc, at_vi.dQ_dxbias, wr, sys.omega);
    contract(dl_dxdc, at_vi.dF_dxbias, wi, 1.0);
    contract(dl_dxdc, at_vr.dQ_dxbias, wi, sys.omega);
    // + Re[w^T db/dth] (b is real-valued):
    contract(direct_gv, stim.dF_dgv, wr, 1.0);
    contract(dl_dxdc, stim.dF_dxbias, wr, 1.0);

    // Fold the bias-point dependence through the DC adjoint.
    DcSensitivity dc_adj(ckt, out.x_dc, globals);
    std::vector<double> via_dc = dc_adj.gradient_gv(dl_dxdc);
    out.dl_dgv.assign(static_cast<std::size_t>(ng), 0.0);
    for (int k = 0; k < ng; ++k) {
        out.dl_dgv[static_cast<std::size_t>(k)] =
            direct_gv[static_cast<std::size_t>(k)] + via_dc[static_cast<std::size_t>(k)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

/// {"node": volts, "branch#i": amps} in index order.
inline std::string dc_solution_json(const Circuit& ckt, std::span<const double> x) {
    std::string out = "{\n";
    for (int i = 0; i < ckt.n_unknowns; ++i) {
        out += "  \"" + ckt.node_names[static_cast<std::size_t>(i)] + "\": " +
               detail::fmt17(x[static_cast<std::size_t>(i)]);
        if (i + 1 < ckt.n_unknowns) out += ",";
        out += "\n";
    }
    out += "}\n";
    return out;
}

/// CSV rows (freq_hz, node, re, im, mag_db, phase_deg) for each frequency.
inline std::string ac_sweep_csv(const Circuit& ckt, std::span<const double> x_dc,
                                std::span<const double> freqs_hz,
                                std::vector<double> globals = {}) {
    std::string out = "freq_hz,node,re,im,mag_db,phase_deg\n";
    for (double f : freqs_hz) {
        ACSystem sys = solve_ac(ckt, x_dc, 2.0 * M_PI * f, globals);
        for (int i = 0; i < ckt.n_unknowns; ++i) {
            const Complex v = sys.eps_x[static_cast<std::size_t>(i)];
            double mag = std::abs(v);
            out += detail::fmt17(f) + "," + ckt.node_names[static_cast<std::size_t>(i)] + "," +
                   detail::fmt17(v.real()) + "," + detail::fmt17(v.imag()) + "," +
                   detail::fmt17(20.0 * std::log10(std::max(mag, 1e-300))) + "," +
                   detail::fmt17(std::atan2(v.imag(), v.real()) * 180.0 / M_PI) + "\n";
        }
    }
    return out;
}

/// CSV with a time column followed by one column per unknown.
inline std::string tran_csv(const Circuit& ckt, const Trajectory& traj) {
    std::string out = "t";
    for (const std::string& name : ckt.node_names) out += "," + name;
    out += "\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        out += detail::fmt17(traj.times[k]);
        for (double v : traj.states[k]) out += "," + detail::fmt17(v);
        out += "\n";
    }
    return out;
}

}  // namespace gradnet::analysis
