#pragma once

// Computational-graph executor over subcircuit instances: the forward pass
// assembles Q, F and their sparse Jacobians; the backward pass routes child
// param gradients through the [ip, intrp, gv, c] frame -- constants dropped,
// ip/gv routed, intrinsic slots expanded through the SubModel Jacobians as
// outer products.
//
// Analysis modes:
//   Dc / Tran      submodels listed for the analysis evaluate at x; other
//                  submodels freeze at x_bias when one is supplied
//   AcBuild        linear small-signal stamps only; every submodel freezes at
//                  x_bias, with gradients routed to the *_dxbias channel
//   AcStimulus     AC right-hand-side pattern only

#include <span>
#include <string>
#include <vector>

#include "gradnet/compiler.hpp"
#include "gradnet/elements.hpp"
#include "gradnet/errors.hpp"
#include "gradnet/sparse.hpp"

namespace gradnet::graph {

using elements::Analysis;

struct GradientFlags {
    bool wrt_x = true;
    bool wrt_gv = true;
    bool wrt_ip = true;
    bool wrt_xbias = false;

    bool any_params() const { return wrt_x || wrt_gv || wrt_ip || wrt_xbias; }

    static GradientFlags none() { return {false, false, false, false}; }
    static GradientFlags x_only() { return {true, false, false, false}; }
    static GradientFlags all() { return {true, true, true, true}; }
};

struct EvalRequest {
    std::span<const double> x;
    Analysis analysis = Analysis::Dc;
    std::span<const double> globals;
    std::span<const double> x_bias;  // required by AcBuild / AcStimulus
    GradientFlags wanted = {};
};

using Triplets = std::vector<sparse::Triplet<double>>;

struct EvalResult {
    int n = 0;
    int n_gv = 0;
    int n_ip = 0;
    sparse::SparseVec Q;
    sparse::SparseVec F;
    Triplets dQ_dx, dF_dx;          // w.r.t. the stamped signal vector x
    Triplets dQ_dgv, dF_dgv;        // w.r.t. global variables
    Triplets dQ_dip, dF_dip;        // w.r.t. the called module's input params
    Triplets dQ_dxbias, dF_dxbias;  // w.r.t. the frozen bias vector
};

namespace detail {

struct ColumnGrads {
    // One (row, value) list per input-param slot, split by Q/F side.
    std::vector<std::vector<std::pair<int, double>>> q;
    std::vector<std::vector<std::pair<int, double>>> f;
};

struct Accum {
    sparse::SparseVec Q, F;
    Triplets dQ_dx, dF_dx, dQ_dgv, dF_dgv, dQ_dxbias, dF_dxbias;
};

inline void merge_triplets(Triplets& t) {
    sparse::TripletMatrix<double> m;
    m.entries = std::move(t);
    m.merge();
    t = std::move(m.entries);
}

class Evaluator {
  public:
    Evaluator(const EvalRequest& req) : req_(req) {}

    ColumnGrads run(const compiler::SubcircuitInstance& inst, std::span<const int> en,
                    std::span<const double> ip) {
        const compiler::CompiledRule& rule = *inst.rule;
        if (static_cast<int>(en.size()) != rule.n_external()) {
            throw ArityError(where(inst) + ": expected " + std::to_string(rule.n_external()) +
                             " external nodes, got " + std::to_string(en.size()));
        }
        if (static_cast<int>(ip.size()) != rule.n_ip()) {
            throw ArityError(where(inst) + ": expected " + std::to_string(rule.n_ip()) +
                             " input params, got " + std::to_string(ip.size()));
        }

        // Step 1: nodes = [en, in].
        std::vector<int> nodes(en.begin(), en.end());
        nodes.insert(nodes.end(), inst.node_frame.begin() + rule.n_external(),
                     inst.node_frame.end());

        // Step 2: intrp = SubModel(x[nodes], ip), live or frozen at the bias.
        submodel::SubModelEval sme;
        bool sm_live = false;  // true: Jacobians flow to x; false: to x_bias
        if (rule.submodel) {
            bool active = req_.analysis == Analysis::Dc    ? rule.submodel->analyses.dc
                          : req_.analysis == Analysis::Tran ? rule.submodel->analyses.tran
                                                            : false;
            std::span<const double> source = req_.x;
            if (!active && !req_.x_bias.empty()) {
                source = req_.x_bias;
            } else {
                sm_live = true;
            }
            if ((req_.analysis == Analysis::AcBuild || req_.analysis == Analysis::AcStimulus) &&
                req_.x_bias.empty()) {
                throw UnsupportedAnalysis(where(inst) +
                                          ": AC evaluation needs a DC bias vector");
            }
            std::vector<double> sm_in(nodes.size());
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                sm_in[i] = nodes[i] < 0 ? 0.0 : source[static_cast<std::size_t>(nodes[i])];
            }
            try {
                sme = rule.submodel->eval(sm_in, ip);
            } catch (const Error& e) {
                throw Error(e.kind(), where(inst) + ": " + e.what());
            }
        }

        // Step 3: params = [ip, intrp, gv, c].
        std::vector<double> params(static_cast<std::size_t>(rule.param_frame_size()));
        for (int i = 0; i < rule.n_ip(); ++i) params[static_cast<std::size_t>(i)] = ip[static_cast<std::size_t>(i)];
        for (int l = 0; l < rule.n_intrinsic(); ++l) {
            params[static_cast<std::size_t>(rule.n_ip() + l)] = sme.intrp[static_cast<std::size_t>(l)];
        }
        for (int g = 0; g < rule.n_globals; ++g) {
            params[static_cast<std::size_t>(rule.gv_offset() + g)] =
                req_.globals[static_cast<std::size_t>(g)];
        }
        for (std::size_t c = 0; c < rule.constants.size(); ++c) {
            params[static_cast<std::size_t>(rule.c_offset()) + c] = rule.constants[c];
        }

        ColumnGrads mine;
        mine.q.resize(static_cast<std::size_t>(rule.n_ip()));
        mine.f.resize(static_cast<std::size_t>(rule.n_ip()));
        const bool want_params = req_.wanted.any_params();

        // Case analysis of Eq-3-style routing for one gradient column.
        auto route = [&](int slot, const std::vector<std::pair<int, double>>& rows, bool is_q) {
            if (rows.empty()) return;
            compiler::ParamSlotRef ref = rule.classify(slot);
            switch (ref.kind) {
                case compiler::SlotKind::Constant:
                    return;
                case compiler::SlotKind::Global: {
                    if (!req_.wanted.wrt_gv) return;
                    Triplets& out = is_q ? acc_->dQ_dgv : acc_->dF_dgv;
                    for (const auto& [r, v] : rows) out.push_back({r, ref.index, v});
                    return;
                }
                case compiler::SlotKind::InputParam: {
                    auto& out = is_q ? mine.q[static_cast<std::size_t>(ref.index)]
                                     : mine.f[static_cast<std::size_t>(ref.index)];
                    out.insert(out.end(), rows.begin(), rows.end());
                    return;
                }
                case compiler::SlotKind::Intrinsic: {
                    const std::size_t l = static_cast<std::size_t>(ref.index);
                    // Signals: J_s[l,:] outer the column.
                    bool into_x = sm_live ? req_.wanted.wrt_x : req_.wanted.wrt_xbias;
                    if (into_x) {
                        Triplets& out = sm_live ? (is_q ? acc_->dQ_dx : acc_->dF_dx)
                                                : (is_q ? acc_->dQ_dxbias : acc_->dF_dxbias);
                        for (std::size_t s = 0; s < nodes.size(); ++s) {
                            double js = sme.J_s[l][s];
                            if (js == 0.0 || nodes[s] < 0) continue;
                            for (const auto& [r, v] : rows) {
                                out.push_back({r, nodes[s], v * js});
                            }
                        }
                    }
                    // Input params: J_ip[l,:] outer the column.
                    for (int k = 0; k < rule.n_ip(); ++k) {
                        double jip = sme.J_ip[l][static_cast<std::size_t>(k)];
                        if (jip == 0.0) continue;
                        auto& out = is_q ? mine.q[static_cast<std::size_t>(k)]
                                         : mine.f[static_cast<std::size_t>(k)];
                        for (const auto& [r, v] : rows) out.emplace_back(r, v * jip);
                    }
                    return;
                }
            }
        };

        // Step 5: basic element stamps.
        for (const compiler::ElementInfo& el : rule.elems) {
            std::vector<int> el_nodes;
            el_nodes.reserve(el.node_slots.size());
            for (int slot : el.node_slots) {
                el_nodes.push_back(slot < 0 ? compiler::kGroundIndex
                                            : nodes[static_cast<std::size_t>(slot)]);
            }
            std::vector<double> el_params;
            el_params.reserve(el.param_slots.size());
            for (int slot : el.param_slots) {
                el_params.push_back(params[static_cast<std::size_t>(slot)]);
            }
            elements::SparseContribution c;
            try {
                c = elements::stamp(*el.kind, req_.analysis, el_nodes, el_params, req_.x,
                                    el.galv, el.ac_magnitude);
            } catch (const Error& e) {
                throw Error(e.kind(), where(inst) + "." + el.instance_name + ": " + e.what());
            }
            for (auto& [i, v] : c.Q.items) acc_->Q.add(i, v);
            for (auto& [i, v] : c.F.items) acc_->F.add(i, v);
            if (req_.wanted.wrt_x) {
                acc_->dQ_dx.insert(acc_->dQ_dx.end(), c.dQ_dx.begin(), c.dQ_dx.end());
                acc_->dF_dx.insert(acc_->dF_dx.end(), c.dF_dx.begin(), c.dF_dx.end());
            }
            if (want_params) {
                route_element(c.dQ_dp, el, route, true);
                route_element(c.dF_dp, el, route, false);
            }
        }

        // Step 4: recursive child calls, then step 7: backprop their columns.
        for (std::size_t k = 0; k < rule.children.size(); ++k) {
            const compiler::ChildInfo& child = rule.children[k];
            std::vector<int> child_en;
            child_en.reserve(child.node_slots.size());
            for (int slot : child.node_slots) {
                child_en.push_back(slot < 0 ? compiler::kGroundIndex
                                            : nodes[static_cast<std::size_t>(slot)]);
            }
            std::vector<double> child_ip;
            child_ip.reserve(child.param_slots.size());
            for (int slot : child.param_slots) {
                child_ip.push_back(params[static_cast<std::size_t>(slot)]);
            }
            ColumnGrads child_grads = run(*inst.subckts[k], child_en, child_ip);
            if (want_params) {
                for (std::size_t j = 0; j < child.param_slots.size(); ++j) {
                    route(child.param_slots[j], child_grads.q[j], true);
                    route(child.param_slots[j], child_grads.f[j], false);
                }
            }
        }
        return mine;
    }

    void set_accum(Accum* acc) { acc_ = acc; }

  private:
    const EvalRequest& req_;
    Accum* acc_ = nullptr;

    static std::string where(const compiler::SubcircuitInstance& inst) {
        return inst.path.empty() ? "(top)" : inst.path;
    }

    template <typename Route>
    void route_element(const Triplets& dp, const compiler::ElementInfo& el, Route&& route,
                       bool is_q) {
        for (const auto& t : dp) {
            int slot = el.param_slots[static_cast<std::size_t>(t.col)];
            route(slot, std::vector<std::pair<int, double>>{{t.row, t.value}}, is_q);
        }
    }
};

}  // namespace detail

/// Algorithm-1 style evaluation of one subcircuit instance.
inline EvalResult eval(const compiler::SubcircuitInstance& ckt, std::span<const int> en,
                       std::span<const double> ip, const EvalRequest& req, int n_unknowns) {
    detail::Accum acc;
    detail::Evaluator ev(req);
    ev.set_accum(&acc);
    detail::ColumnGrads top_cols = ev.run(ckt, en, ip);

    EvalResult out;
    out.n = n_unknowns;
    out.n_gv = static_cast<int>(req.globals.size());
    out.n_ip = ckt.rule->n_ip();
    out.Q = std::move(acc.Q);
    out.F = std::move(acc.F);
    out.Q.merge();
    out.F.merge();
    out.dQ_dx = std::move(acc.dQ_dx);
    out.dF_dx = std::move(acc.dF_dx);
    out.dQ_dgv = std::move(acc.dQ_dgv);
    out.dF_dgv = std::move(acc.dF_dgv);
    out.dQ_dxbias = std::move(acc.dQ_dxbias);
    out.dF_dxbias = std::move(acc.dF_dxbias);
    if (req.wanted.wrt_ip) {
        for (std::size_t k = 0; k < top_cols.q.size(); ++k) {
            for (const auto& [r, v] : top_cols.q[k]) {
                out.dQ_dip.push_back({r, static_cast<int>(k), v});
            }
            for (const auto& [r, v] : top_cols.f[k]) {
                out.dF_dip.push_back({r, static_cast<int>(k), v});
            }
        }
    }
    detail::merge_triplets(out.dQ_dx);
    detail::merge_triplets(out.dF_dx);
    detail::merge_triplets(out.dQ_dgv);
    detail::merge_triplets(out.dF_dgv);
    detail::merge_triplets(out.dQ_dip);
    detail::merge_triplets(out.dF_dip);
    detail::merge_triplets(out.dQ_dxbias);
    detail::merge_triplets(out.dF_dxbias);
    return out;
}

/// Evaluates the whole circuit: en = [], ip = []; gradients w.r.t. the
/// netlist Globals come back in dQ_dgv / dF_dgv.
inline EvalResult eval_top(const compiler::Circuit& ckt, const EvalRequest& req) {
    const compiler::CompiledRule& rule = *ckt.top->rule;
    if (rule.n_external() != 0) {
        throw TopHasExternalNodes("top module has external nodes");
    }
    if (rule.n_ip() != 0) {
        throw ArityError("top module must not declare input params");
    }
    return eval(*ckt.top, {}, {}, req, ckt.n_unknowns);
}

}  // namespace gradnet::graph
