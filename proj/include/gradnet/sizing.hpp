#pragma once

// Constrained device sizing: DC saturation constraints across PVT corners,
// output-swing cases, an AC gain objective, and design-variable tying, solved
// by a built-in augmented-Lagrangian optimizer (projected L-BFGS inner loop).
//
// All constraint rows are of the form g(p) >= 0. The min(...) saturation
// condition is decomposed into its four component rows per device, so every
// row is smooth. Gradients are exact adjoints -- never finite differences.

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradnet/analysis.hpp"
#include "gradnet/compiler.hpp"
#include "gradnet/device_tables.hpp"
#include "gradnet/errors.hpp"
#include "gradnet/jsonio.hpp"

namespace gradnet::sizing {

class SolveFailedAtIterate : public Error {
  public:
    explicit SolveFailedAtIterate(const std::string& message)
        : Error("SolveFailedAtIterate", message) {}
};

struct PVTCorner {
    std::string corner = "tt";
    double temperature = 27.0;
};

struct DesignVar {
    std::string name;
    double init = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    int global_index = -1;
};

struct SaturationSpec {
    std::string instance_path;
    std::string polarity;  // documentation; the table axis binds carry the signs
};

struct SwingSpec {
    std::string node;
    double up_min = 4.35;
    double down_max = 0.3;
    std::string plus_var;
    std::string minus_var;
    double common = 2.5;
};

struct GainSpec {
    std::string node;
    double target_db = 0.0;
    double freq_hz = 1.0;
};

struct XBound {
    std::string node;
    std::optional<double> lower;
    std::optional<double> upper;
};

struct SizingProblem {
    netlist::NetlistDocument doc;
    compiler::CompileOptions base_options;

    std::vector<DesignVar> design_vars;
    std::vector<std::vector<int>> tie_groups;  // indices into design_vars
    std::vector<PVTCorner> corners;
    std::vector<SaturationSpec> saturation;
    std::optional<SwingSpec> swing;
    std::optional<GainSpec> gain;
    double delta = 0.2;
    std::vector<XBound> x_bounds;

    // Compiled once per corner; index aligned with `corners`.
    std::vector<compiler::Circuit> corner_circuits;
    int typical_index = -1;  // corner used for swing/gain (tt, 27)

    // Tie reduction: design var -> reduced variable slot.
    std::vector<int> reduced_slot;
    int n_reduced = 0;

    std::vector<double> reduced_init() const {
        std::vector<double> p(static_cast<std::size_t>(n_reduced), 0.0);
        for (std::size_t i = 0; i < design_vars.size(); ++i) {
            p[static_cast<std::size_t>(reduced_slot[i])] = design_vars[i].init;
        }
        return p;
    }

    std::vector<double> reduced_lower() const {
        std::vector<double> lo(static_cast<std::size_t>(n_reduced),
                               -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < design_vars.size(); ++i) {
            auto& slot = lo[static_cast<std::size_t>(reduced_slot[i])];
            slot = std::max(slot, design_vars[i].lower);
        }
        return lo;
    }

    std::vector<double> reduced_upper() const {
        std::vector<double> hi(static_cast<std::size_t>(n_reduced),
                               std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < design_vars.size(); ++i) {
            auto& slot = hi[static_cast<std::size_t>(reduced_slot[i])];
            slot = std::min(slot, design_vars[i].upper);
        }
        return hi;
    }

    /// Netlist globals with the design variables overridden from p (reduced).
    std::vector<double> expand_globals(std::span<const double> p,
                                       const compiler::Circuit& ckt) const {
        std::vector<double> gv = ckt.rules->global_values();
        for (std::size_t i = 0; i < design_vars.size(); ++i) {
            gv[static_cast<std::size_t>(design_vars[i].global_index)] =
                p[static_cast<std::size_t>(reduced_slot[i])];
        }
        return gv;
    }

    /// Full per-design-var values from a reduced vector (tied vars bitwise equal).
    std::vector<double> expand_vars(std::span<const double> p) const {
        std::vector<double> v(design_vars.size());
        for (std::size_t i = 0; i < design_vars.size(); ++i) {
            v[i] = p[static_cast<std::size_t>(reduced_slot[i])];
        }
        return v;
    }
};

// ---------------------------------------------------------------------------
// Spec file parsing + problem assembly
// ---------------------------------------------------------------------------

namespace sizingdetail {

inline int node_index(const compiler::Circuit& ckt, const std::string& name) {
    for (int i = 0; i < ckt.n_unknowns; ++i) {
        if (ckt.node_names[static_cast<std::size_t>(i)] == name) return i;
    }
    throw SpecError("node '" + name + "' does not exist in the circuit");
}

inline double num_field(const jsonio::Value& v, const std::string& key, double fallback,
                        bool required = false) {
    const jsonio::Value* f = v.find(key);
    if (!f) {
        if (required) throw SpecError("sizing spec is missing field " + key);
        return fallback;
    }
    auto n = jsonio::coerce_number(*f);
    if (!n) throw SpecError("sizing spec field " + key + " must be a number");
    return *n;
}

inline std::string str_field(const jsonio::Value& v, const std::string& key,
                             const std::string& fallback = "", bool required = false) {
    const jsonio::Value* f = v.find(key);
    if (!f) {
        if (required) throw SpecError("sizing spec is missing field " + key);
        return fallback;
    }
    return f->as_string();
}

}  // namespace sizingdetail

inline SizingProblem build_problem(const netlist::NetlistDocument& doc,
                                   const std::string& spec_text,
                                   const compiler::CompileOptions& base_options = {}) {
    SizingProblem prob;
    prob.doc = doc;
    prob.base_options = base_options;

    jsonio::Value spec = jsonio::parse(spec_text);
    if (!spec.is_object()) throw SpecError("sizing spec must be a JSON object");

    const jsonio::Value* dv = spec.find("DesignVars");
    if (!dv || !dv->is_array()) throw SpecError("sizing spec needs a DesignVars array");
    for (const jsonio::Value& e : dv->as_array()) {
        DesignVar var;
        var.name = sizingdetail::str_field(e, "Name", "", true);
        var.init = sizingdetail::num_field(e, "Init", 0.0, true);
        var.lower = sizingdetail::num_field(e, "Lower", -std::numeric_limits<double>::infinity());
        var.upper = sizingdetail::num_field(e, "Upper", std::numeric_limits<double>::infinity());
        prob.design_vars.push_back(std::move(var));
    }

    if (const jsonio::Value* tg = spec.find("TieGroups")) {
        for (const jsonio::Value& g : tg->as_array()) {
            std::vector<int> group;
            for (const jsonio::Value& name : g.as_array()) {
                bool found = false;
                for (std::size_t i = 0; i < prob.design_vars.size(); ++i) {
                    if (prob.design_vars[i].name == name.as_string()) {
                        group.push_back(static_cast<int>(i));
                        found = true;
                    }
                }
                if (!found) {
                    throw SpecError("tie group references unknown design var '" +
                                    name.as_string() + "'");
                }
            }
            prob.tie_groups.push_back(std::move(group));
        }
    }

    if (const jsonio::Value* cs = spec.find("Corners")) {
        if (cs->is_string() && cs->as_string() == "all") {
            for (const auto& [c, t] : pvt_grid()) prob.corners.push_back({c, t});
        } else {
            for (const jsonio::Value& e : cs->as_array()) {
                prob.corners.push_back({sizingdetail::str_field(e, "Corner", "tt"),
                                        sizingdetail::num_field(e, "Temperature", 27.0)});
            }
        }
    }
    if (prob.corners.empty()) prob.corners.push_back({"tt", 27.0});

    if (const jsonio::Value* sat = spec.find("Saturation")) {
        for (const jsonio::Value& e : sat->as_array()) {
            prob.saturation.push_back({sizingdetail::str_field(e, "Instance", "", true),
                                       sizingdetail::str_field(e, "Polarity", "")});
        }
    }
    if (const jsonio::Value* sw = spec.find("Swing")) {
        SwingSpec s;
        s.node = sizingdetail::str_field(*sw, "Node", "", true);
        s.up_min = sizingdetail::num_field(*sw, "UpMin", 4.35);
        s.down_max = sizingdetail::num_field(*sw, "DownMax", 0.3);
        s.plus_var = sizingdetail::str_field(*sw, "PlusVar", "", true);
        s.minus_var = sizingdetail::str_field(*sw, "MinusVar", "", true);
        s.common = sizingdetail::num_field(*sw, "Common", 2.5);
        prob.swing = s;
    }
    if (const jsonio::Value* g = spec.find("Gain")) {
        GainSpec gs;
        gs.node = sizingdetail::str_field(*g, "Node", "", true);
        gs.target_db = sizingdetail::num_field(*g, "TargetDb", 0.0, true);
        gs.freq_hz = sizingdetail::num_field(*g, "FreqHz", 1.0);
        prob.gain = gs;
    }
    prob.delta = sizingdetail::num_field(spec, "Delta", 0.2);
    if (const jsonio::Value* xb = spec.find("XBounds")) {
        for (const jsonio::Value& e : xb->as_array()) {
            XBound b;
            b.node = sizingdetail::str_field(e, "Node", "", true);
            if (e.find("Lower")) b.lower = sizingdetail::num_field(e, "Lower", 0.0);
            if (e.find("Upper")) b.upper = sizingdetail::num_field(e, "Upper", 0.0);
            prob.x_bounds.push_back(std::move(b));
        }
    }

    // Tie reduction: the first group member owns the reduced slot.
    prob.reduced_slot.assign(prob.design_vars.size(), -1);
    for (const std::vector<int>& group : prob.tie_groups) {
        for (int member : group) {
            if (prob.reduced_slot[static_cast<std::size_t>(member)] != -1) {
                throw SpecError("tie groups must be disjoint");
            }
            prob.reduced_slot[static_cast<std::size_t>(member)] = -2;  // claimed
        }
    }
    prob.n_reduced = 0;
    std::vector<int> group_slot(prob.tie_groups.size(), -1);
    for (std::size_t i = 0; i < prob.design_vars.size(); ++i) {
        if (prob.reduced_slot[i] == -2) {
            for (std::size_t gidx = 0; gidx < prob.tie_groups.size(); ++gidx) {
                for (int member : prob.tie_groups[gidx]) {
                    if (member == static_cast<int>(i)) {
                        if (group_slot[gidx] < 0) group_slot[gidx] = prob.n_reduced++;
                        prob.reduced_slot[i] = group_slot[gidx];
                    }
                }
            }
        } else {
            prob.reduced_slot[i] = prob.n_reduced++;
        }
    }

    // Compile per corner; validate design vars and spec references against it.
    for (const PVTCorner& corner : prob.corners) {
        compiler::CompileOptions opt = base_options;
        opt.corner = corner.corner;
        opt.temperature = corner.temperature;
        try {
            prob.corner_circuits.push_back(compiler::instantiate(doc, opt));
        } catch (const TableNotFound& e) {
            throw CornerTableMissing(std::string("corner (") + corner.corner + ", " +
                                     std::to_string(corner.temperature) + "): " + e.what());
        }
        if (corner.corner == "tt" && std::abs(corner.temperature - 27.0) < 1e-9 &&
            prob.typical_index < 0) {
            prob.typical_index = static_cast<int>(prob.corner_circuits.size()) - 1;
        }
    }
    if (prob.typical_index < 0) prob.typical_index = 0;

    const compiler::Circuit& ckt = prob.corner_circuits.front();
    for (DesignVar& var : prob.design_vars) {
        var.global_index = ckt.rules->global_index(var.name);
        if (var.global_index < 0) {
            throw SpecError("design var '" + var.name + "' is not a netlist Global");
        }
    }
    for (const SaturationSpec& sat : prob.saturation) {
        const compiler::SubcircuitInstance* inst = ckt.find_instance(sat.instance_path);
        if (!inst) throw SpecError("saturation instance '" + sat.instance_path + "' not found");
        if (!inst->rule->submodel || !inst->rule->submodel->table()) {
            throw SpecError("saturation instance '" + sat.instance_path +
                            "' has no lookup-table submodel");
        }
    }
    if (prob.swing) {
        (void)sizingdetail::node_index(ckt, prob.swing->node);
        if (ckt.rules->global_index(prob.swing->plus_var) < 0 ||
            ckt.rules->global_index(prob.swing->minus_var) < 0) {
            throw SpecError("swing PlusVar/MinusVar must be netlist Globals");
        }
    }
    if (prob.gain) (void)sizingdetail::node_index(ckt, prob.gain->node);
    for (const XBound& b : prob.x_bounds) (void)sizingdetail::node_index(ckt, b.node);
    return prob;
}

inline SizingProblem build_problem_file(const netlist::NetlistDocument& doc,
                                        const std::string& spec_path,
                                        const compiler::CompileOptions& base_options = {}) {
    std::ifstream f(spec_path, std::ios::binary);
    if (!f) throw SpecError("cannot open sizing spec " + spec_path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return build_problem(doc, ss.str(), base_options);
}

// ---------------------------------------------------------------------------
// Callbacks
// ---------------------------------------------------------------------------

struct NLPCallbacks {
    std::function<double(std::span<const double>)> eval_objective;
    std::function<std::vector<double>(std::span<const double>)> eval_objective_grad;
    std::function<std::vector<double>(std::span<const double>)> eval_constraints;
    std::function<std::vector<std::vector<double>>(std::span<const double>)>
        eval_constraint_jacobian;
    std::vector<double> lower, upper, init;
    int n_constraints = 0;
    std::vector<std::string> constraint_names;
};

namespace sizingdetail {

/// Per-iterate solver state: corner/swing biases, AC system, caches.
class CallbackEngine {
  public:
    explicit CallbackEngine(std::shared_ptr<SizingProblem> prob) : prob_(std::move(prob)) {
        const compiler::Circuit& ckt = prob_->corner_circuits.front();
        for (const SaturationSpec& sat : prob_->saturation) {
            devices_.push_back(resolve_device(ckt, sat.instance_path));
        }
        n_constraints_ = 0;
        for (std::size_t c = 0; c < prob_->corners.size(); ++c) {
            for (const SaturationSpec& sat : prob_->saturation) {
                for (const char* row : {"Vgs", "Vds", "Vsb", "VgsMinusVth"}) {
                    names_.push_back(corner_tag(c) + ":" + sat.instance_path + ":" + row);
                    ++n_constraints_;
                }
            }
            for (const XBound& b : prob_->x_bounds) {
                if (b.lower) {
                    names_.push_back(corner_tag(c) + ":" + b.node + ":min");
                    ++n_constraints_;
                }
                if (b.upper) {
                    names_.push_back(corner_tag(c) + ":" + b.node + ":max");
                    ++n_constraints_;
                }
            }
        }
        if (prob_->swing) {
            names_.push_back("swing:" + prob_->swing->node + ":up");
            names_.push_back("swing:" + prob_->swing->node + ":down");
            n_constraints_ += 2;
        }
    }

    int n_constraints() const { return n_constraints_; }
    const std::vector<std::string>& names() const { return names_; }

    double objective(std::span<const double> p) {
        ensure_values(p);
        return objective_;
    }
    std::vector<double> objective_grad(std::span<const double> p) {
        ensure_gradients(p);
        return objective_grad_;
    }
    std::vector<double> constraints(std::span<const double> p) {
        ensure_values(p);
        return constraints_;
    }
    std::vector<std::vector<double>> constraint_jacobian(std::span<const double> p) {
        ensure_gradients(p);
        return jacobian_;
    }

  private:
    struct Device {
        const compiler::SubcircuitInstance* inst = nullptr;
        // param sources for ip values: global index or constant value
        std::vector<int> ip_global;      // -1 when constant
        std::vector<double> ip_constant;
    };

    std::shared_ptr<SizingProblem> prob_;
    std::vector<Device> devices_;
    int n_constraints_ = 0;
    std::vector<std::string> names_;

    // iterate cache
    std::vector<double> cached_p_values_;
    std::vector<double> cached_p_grads_;
    double objective_ = 0.0;
    std::vector<double> objective_grad_;
    std::vector<double> constraints_;
    std::vector<std::vector<double>> jacobian_;
    std::vector<analysis::DcResult> corner_dc_;
    std::vector<analysis::DcResult> swing_dc_;  // up, down
    // warm starts
    std::vector<std::vector<double>> warm_corner_;
    std::vector<std::vector<double>> warm_swing_;

    std::string corner_tag(std::size_t c) const {
        return prob_->corners[c].corner + "/" +
               std::to_string(static_cast<int>(prob_->corners[c].temperature));
    }

    Device resolve_device(const compiler::Circuit& ckt, const std::string& path) const {
        Device dev;
        dev.inst = ckt.find_instance(path);
        std::size_t dot = path.rfind('.');
        std::string parent_path = dot == std::string::npos ? "" : path.substr(0, dot);
        std::string leaf = dot == std::string::npos ? path : path.substr(dot + 1);
        const compiler::SubcircuitInstance* parent = ckt.find_instance(parent_path);
        if (!parent) throw SpecError("parent instance of '" + path + "' not found");
        const compiler::ChildInfo* child = nullptr;
        for (const compiler::ChildInfo& c : parent->rule->children) {
            if (c.instance_name == leaf) child = &c;
        }
        if (!child) throw SpecError("'" + path + "' is not a subcircuit instance");
        for (int slot : child->param_slots) {
            compiler::ParamSlotRef ref = parent->rule->classify(slot);
            if (ref.kind == compiler::SlotKind::Global) {
                dev.ip_global.push_back(ref.index);
                dev.ip_constant.push_back(0.0);
            } else if (ref.kind == compiler::SlotKind::Constant) {
                dev.ip_global.push_back(-1);
                dev.ip_constant.push_back(
                    parent->rule->constants[static_cast<std::size_t>(ref.index)]);
            } else {
                throw SpecError("saturation device '" + path +
                                "' params must bind to globals or literals");
            }
        }
        return dev;
    }

    analysis::DcResult solve_corner(std::size_t c, const std::vector<double>& gv,
                                    std::vector<double>* warm) {
        analysis::NewtonConfig cfg;
        cfg.max_iter = 80;
        if (warm && !warm->empty()) cfg.initial_x = *warm;
        const compiler::Circuit& ckt = prob_->corner_circuits[c];
        try {
            analysis::DcResult r = analysis::solve_dc(ckt, cfg, gv);
            if (warm) *warm = r.x;
            return r;
        } catch (const Error& e) {
            if (warm && !warm->empty()) {
                // retry cold before giving up
                cfg.initial_x.clear();
                try {
                    analysis::DcResult r = analysis::solve_dc(ckt, cfg, gv);
                    if (warm) *warm = r.x;
                    return r;
                } catch (const Error& e2) {
                    throw SolveFailedAtIterate(corner_tag(c) + ": " + e2.what());
                }
            }
            throw SolveFailedAtIterate(corner_tag(c) + ": " + e.what());
        }
    }

    std::vector<double> swing_globals(const compiler::Circuit& ckt,
                                      std::span<const double> p, bool up) const {
        std::vector<double> gv = prob_->expand_globals(p, ckt);
        const SwingSpec& s = *prob_->swing;
        double plus = s.common + (up ? prob_->delta : -prob_->delta);
        double minus = s.common - (up ? prob_->delta : -prob_->delta);
        gv[static_cast<std::size_t>(ckt.rules->global_index(s.plus_var))] = plus;
        gv[static_cast<std::size_t>(ckt.rules->global_index(s.minus_var))] = minus;
        return gv;
    }

    /// Saturation rows for one device at one corner bias. Returns the four
    /// row values plus each row's sparse dx and dense dgv parts.
    struct Rows {
        std::vector<double> value;
        std::vector<std::vector<std::pair<int, double>>> dx;  // (global index, coeff)
        std::vector<std::vector<double>> dgv;                 // per netlist global
    };

    Rows saturation_rows(const Device& dev, std::span<const double> x,
                         std::span<const double> gv) const {
        const compiler::SubcircuitInstance& inst = *dev.inst;
        const submodel::CompiledSubModel& sm = *inst.rule->submodel;
        const int n_gv = static_cast<int>(gv.size());

        std::vector<double> signals(inst.node_frame.size());
        for (std::size_t i = 0; i < inst.node_frame.size(); ++i) {
            int n = inst.node_frame[i];
            signals[i] = n < 0 ? 0.0 : x[static_cast<std::size_t>(n)];
        }
        std::vector<double> ip(dev.ip_global.size());
        for (std::size_t k = 0; k < ip.size(); ++k) {
            ip[k] = dev.ip_global[k] >= 0 ? gv[static_cast<std::size_t>(dev.ip_global[k])]
                                          : dev.ip_constant[k];
        }

        Rows rows;
        rows.value.assign(4, 0.0);
        rows.dx.assign(4, {});
        rows.dgv.assign(4, std::vector<double>(static_cast<std::size_t>(n_gv), 0.0));

        auto add_slot = [&](std::size_t row, int slot, double coeff) {
            if (slot < sm.arity_signals) {
                int node = inst.node_frame[static_cast<std::size_t>(slot)];
                if (node >= 0) rows.dx[row].emplace_back(node, coeff);
            } else {
                int k = slot - sm.arity_signals;
                if (dev.ip_global[static_cast<std::size_t>(k)] >= 0) {
                    rows.dgv[row][static_cast<std::size_t>(
                        dev.ip_global[static_cast<std::size_t>(k)])] += coeff;
                }
            }
        };

        const char* axes[3] = {"Vgs", "Vds", "Vsb"};
        for (std::size_t r = 0; r < 3; ++r) {
            submodel::CompiledSubModel::AxisValue av = sm.axis_value(axes[r], signals, ip);
            rows.value[r] = av.value;
            add_slot(r, av.slot_a, 1.0);
            if (av.slot_b >= 0) add_slot(r, av.slot_b, -1.0);
        }
        // Row 3: Vgs - Vth with Vth from the table's VTH slab.
        submodel::CompiledSubModel::AxisValue vgs = sm.axis_value("Vgs", signals, ip);
        submodel::CompiledSubModel::SlabEval vth = sm.eval_slab("VTH", signals, ip);
        rows.value[3] = vgs.value - vth.value;
        add_slot(3, vgs.slot_a, 1.0);
        if (vgs.slot_b >= 0) add_slot(3, vgs.slot_b, -1.0);
        for (int s = 0; s < sm.arity_signals; ++s) {
            if (vth.d_signals[static_cast<std::size_t>(s)] != 0.0) {
                add_slot(3, s, -vth.d_signals[static_cast<std::size_t>(s)]);
            }
        }
        for (int k = 0; k < sm.arity_ip; ++k) {
            if (vth.d_ip[static_cast<std::size_t>(k)] != 0.0) {
                add_slot(3, sm.arity_signals + k, -vth.d_ip[static_cast<std::size_t>(k)]);
            }
        }
        return rows;
    }

    /// Projects a full-globals gradient to the reduced design vector.
    std::vector<double> reduce(const std::vector<double>& dgv) const {
        std::vector<double> out(static_cast<std::size_t>(prob_->n_reduced), 0.0);
        for (std::size_t i = 0; i < prob_->design_vars.size(); ++i) {
            out[static_cast<std::size_t>(prob_->reduced_slot[i])] +=
                dgv[static_cast<std::size_t>(prob_->design_vars[i].global_index)];
        }
        return out;
    }

    void ensure_values(std::span<const double> p) {
        std::vector<double> pv(p.begin(), p.end());
        if (pv == cached_p_values_) return;
        corner_dc_.clear();
        swing_dc_.clear();
        constraints_.clear();
        warm_corner_.resize(prob_->corners.size());
        warm_swing_.resize(2);

        // Corner biases are independent problems; solve them concurrently.
        std::vector<std::future<analysis::DcResult>> corner_futures;
        corner_futures.reserve(prob_->corners.size());
        for (std::size_t c = 0; c < prob_->corners.size(); ++c) {
            const compiler::Circuit& ckt = prob_->corner_circuits[c];
            std::vector<double> gv = prob_->expand_globals(p, ckt);
            corner_futures.push_back(std::async(
                std::launch::async,
                [this, c, gv = std::move(gv)] { return solve_corner(c, gv, &warm_corner_[c]); }));
        }
        for (std::size_t c = 0; c < prob_->corners.size(); ++c) {
            corner_dc_.push_back(corner_futures[c].get());
        }
        for (std::size_t c = 0; c < prob_->corners.size(); ++c) {
            const compiler::Circuit& ckt = prob_->corner_circuits[c];
            std::vector<double> gv = prob_->expand_globals(p, ckt);
            const analysis::DcResult& dc = corner_dc_[c];
            for (const Device& dev : devices_) {
                Rows rows = saturation_rows(dev, dc.x, gv);
                for (double v : rows.value) constraints_.push_back(v);
            }
            for (const XBound& b : prob_->x_bounds) {
                double xv = dc.x[static_cast<std::size_t>(node_index(ckt, b.node))];
                if (b.lower) constraints_.push_back(xv - *b.lower);
                if (b.upper) constraints_.push_back(*b.upper - xv);
            }
        }
        if (prob_->swing) {
            const compiler::Circuit& ckt = prob_->corner_circuits[static_cast<std::size_t>(
                prob_->typical_index)];
            int node = node_index(ckt, prob_->swing->node);
            for (int up = 1; up >= 0; --up) {
                std::vector<double> gv = swing_globals(ckt, p, up == 1);
                analysis::NewtonConfig cfg;
                cfg.max_iter = 80;
                if (!warm_swing_[static_cast<std::size_t>(1 - up)].empty()) {
                    cfg.initial_x = warm_swing_[static_cast<std::size_t>(1 - up)];
                } else if (!warm_corner_[static_cast<std::size_t>(prob_->typical_index)]
                                .empty()) {
                    cfg.initial_x = warm_corner_[static_cast<std::size_t>(prob_->typical_index)];
                }
                analysis::DcResult r;
                try {
                    r = analysis::solve_dc(ckt, cfg, gv);
                } catch (const Error& e) {
                    throw SolveFailedAtIterate(std::string("swing ") + (up ? "up" : "down") +
                                               ": " + e.what());
                }
                warm_swing_[static_cast<std::size_t>(1 - up)] = r.x;
                swing_dc_.push_back(std::move(r));
            }
            constraints_.push_back(
                swing_dc_[0].x[static_cast<std::size_t>(node)] - prob_->swing->up_min);
            constraints_.push_back(
                prob_->swing->down_max - swing_dc_[1].x[static_cast<std::size_t>(node)]);
        }

        objective_ = 0.0;
        if (prob_->gain) {
            const compiler::Circuit& ckt = prob_->corner_circuits[static_cast<std::size_t>(
                prob_->typical_index)];
            std::vector<double> gv = prob_->expand_globals(p, ckt);
            const analysis::DcResult& dc = corner_dc_[static_cast<std::size_t>(
                prob_->typical_index)];
            try {
                analysis::ACSystem sys = analysis::solve_ac(
                    ckt, dc.x, 2.0 * M_PI * prob_->gain->freq_hz, gv);
                analysis::ComplexLossFn loss = analysis::gain_shortfall_loss(
                    node_index(ckt, prob_->gain->node), prob_->gain->target_db);
                objective_ = loss(sys.eps_x).value;
            } catch (const Error& e) {
                throw SolveFailedAtIterate(std::string("AC objective: ") + e.what());
            }
        }
        cached_p_values_ = std::move(pv);
    }

    void ensure_gradients(std::span<const double> p) {
        ensure_values(p);
        std::vector<double> pv(p.begin(), p.end());
        if (pv == cached_p_grads_) return;
        jacobian_.clear();

        for (std::size_t c = 0; c < prob_->corners.size(); ++c) {
            const compiler::Circuit& ckt = prob_->corner_circuits[c];
            std::vector<double> gv = prob_->expand_globals(p, ckt);
            const analysis::DcResult& dc = corner_dc_[c];
            analysis::DcSensitivity adj(ckt, dc.x, gv);
            auto adjoint_row = [&](const std::vector<std::pair<int, double>>& dx,
                                   const std::vector<double>& direct_gv) {
                std::vector<double> loss_grad(static_cast<std::size_t>(ckt.n_unknowns), 0.0);
                for (const auto& [node, coeff] : dx) {
                    loss_grad[static_cast<std::size_t>(node)] += coeff;
                }
                std::vector<double> dgv = adj.gradient_gv(loss_grad);
                for (std::size_t k = 0; k < dgv.size(); ++k) dgv[k] += direct_gv[k];
                return reduce(dgv);
            };
            for (const Device& dev : devices_) {
                Rows rows = saturation_rows(dev, dc.x, gv);
                for (std::size_t r = 0; r < 4; ++r) {
                    jacobian_.push_back(adjoint_row(rows.dx[r], rows.dgv[r]));
                }
            }
            std::vector<double> zero_gv(gv.size(), 0.0);
            for (const XBound& b : prob_->x_bounds) {
                int node = node_index(ckt, b.node);
                if (b.lower) jacobian_.push_back(adjoint_row({{node, 1.0}}, zero_gv));
                if (b.upper) jacobian_.push_back(adjoint_row({{node, -1.0}}, zero_gv));
            }
        }
        if (prob_->swing) {
            const compiler::Circuit& ckt = prob_->corner_circuits[static_cast<std::size_t>(
                prob_->typical_index)];
            int node = node_index(ckt, prob_->swing->node);
            for (int i = 0; i < 2; ++i) {
                std::vector<double> gv = swing_globals(ckt, p, i == 0);
                analysis::DcSensitivity adj(ckt, swing_dc_[static_cast<std::size_t>(i)].x, gv);
                std::vector<double> loss_grad(static_cast<std::size_t>(ckt.n_unknowns), 0.0);
                loss_grad[static_cast<std::size_t>(node)] = i == 0 ? 1.0 : -1.0;
                jacobian_.push_back(reduce(adj.gradient_gv(loss_grad)));
            }
        }

        objective_grad_.assign(static_cast<std::size_t>(prob_->n_reduced), 0.0);
        if (prob_->gain) {
            const compiler::Circuit& ckt = prob_->corner_circuits[static_cast<std::size_t>(
                prob_->typical_index)];
            std::vector<double> gv = prob_->expand_globals(p, ckt);
            analysis::ComplexLossFn loss = analysis::gain_shortfall_loss(
                node_index(ckt, prob_->gain->node), prob_->gain->target_db);
            try {
                analysis::NewtonConfig cfg;
                cfg.initial_x = corner_dc_[static_cast<std::size_t>(prob_->typical_index)].x;
                analysis::DcacResult r = analysis::solve_dcac(
                    ckt, 2.0 * M_PI * prob_->gain->freq_hz, loss, gv, cfg);
                objective_grad_ = reduce(r.dl_dgv);
            } catch (const Error& e) {
                throw SolveFailedAtIterate(std::string("AC objective gradient: ") + e.what());
            }
        }
        cached_p_grads_ = std::move(pv);
    }
};

}  // namespace sizingdetail

/// Wires a SizingProblem into NLP-style callbacks with exact adjoint gradients.
inline NLPCallbacks make_callbacks(std::shared_ptr<SizingProblem> prob) {
    auto engine = std::make_shared<sizingdetail::CallbackEngine>(prob);
    NLPCallbacks cb;
    cb.lower = prob->reduced_lower();
    cb.upper = prob->reduced_upper();
    cb.init = prob->reduced_init();
    cb.n_constraints = engine->n_constraints();
    cb.constraint_names = engine->names();
    cb.eval_objective = [engine](std::span<const double> p) { return engine->objective(p); };
    cb.eval_objective_grad = [engine](std::span<const double> p) {
        return engine->objective_grad(p);
    };
    cb.eval_constraints = [engine](std::span<const double> p) { return engine->constraints(p); };
    cb.eval_constraint_jacobian = [engine](std::span<const double> p) {
        return engine->constraint_jacobian(p);
    };
    return cb;
}

// ---------------------------------------------------------------------------
// Augmented-Lagrangian optimizer (projected L-BFGS inner loop)
// ---------------------------------------------------------------------------

enum class SizingStatus { Optimal, MaxIter, Infeasible, EvalFailure };

inline const char* status_name(SizingStatus s) {
    switch (s) {
        case SizingStatus::Optimal: return "Optimal";
        case SizingStatus::MaxIter: return "MaxIter";
        case SizingStatus::Infeasible: return "Infeasible";
        default: return "EvalFailure";
    }
}

struct OptimizeOptions {
    double kkt_tol = 1e-6;
    double constraint_tol = 1e-6;
    int max_outer = 40;
    int max_inner = 200;
    double rho0 = 10.0;
    double rho_max = 1e10;
};

struct SizingResult {
    std::vector<double> p_opt;  // reduced variables
    SizingStatus status = SizingStatus::MaxIter;
    int iterations = 0;  // outer iterations
    double objective = 0.0;
    double constraint_violation = 0.0;
    // Accepted-step merit values per outer iteration (non-increasing within
    // each inner run at fixed multipliers).
    std::vector<std::vector<double>> merit_trace;
};

inline SizingResult optimize(const NLPCallbacks& cb, const OptimizeOptions& opts = {}) {
    const std::size_t n = cb.init.size();
    auto project = [&](std::vector<double> p) {
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = std::min(std::max(p[i], cb.lower[i]), cb.upper[i]);
        }
        return p;
    };

    SizingResult result;
    std::vector<double> p = project(cb.init);
    std::vector<double> mu(static_cast<std::size_t>(cb.n_constraints), 0.0);
    double rho = opts.rho0;

    struct EvalPoint {
        double f = 0.0;
        std::vector<double> g;  // constraints
        bool ok = false;
    };
    auto eval_point = [&](std::span<const double> px) {
        EvalPoint e;
        try {
            e.f = cb.eval_objective(px);
            e.g = cb.eval_constraints(px);
            e.ok = true;
        } catch (const Error&) {
            e.ok = false;
        }
        return e;
    };
    auto merit_of = [&](const EvalPoint& e) {
        double m = e.f;
        for (std::size_t i = 0; i < e.g.size(); ++i) {
            double t = std::max(0.0, mu[i] - rho * e.g[i]);
            m += (t * t - mu[i] * mu[i]) / (2.0 * rho);
        }
        return m;
    };
    auto merit_grad = [&](std::span<const double> px, const EvalPoint& e) {
        std::vector<double> grad = cb.eval_objective_grad(px);
        std::vector<std::vector<double>> jac = cb.eval_constraint_jacobian(px);
        for (std::size_t i = 0; i < e.g.size(); ++i) {
            double t = std::max(0.0, mu[i] - rho * e.g[i]);
            if (t > 0.0) {
                for (std::size_t k = 0; k < n; ++k) grad[k] -= t * jac[i][k];
            }
        }
        return grad;
    };
    auto violation_of = [&](const EvalPoint& e) {
        double v = 0.0;
        for (double gi : e.g) v = std::max(v, -gi);
        return v;
    };

    auto projected_gradient_norm = [&](std::span<const double> px,
                                       std::span<const double> gx) {
        double pg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double step = std::min(std::max(px[i] - gx[i], cb.lower[i]), cb.upper[i]) - px[i];
            pg = std::max(pg, std::abs(step));
        }
        return pg;
    };

    EvalPoint cur = eval_point(p);
    if (!cur.ok) {
        result.status = SizingStatus::EvalFailure;
        result.p_opt = p;
        return result;
    }

    double prev_violation = std::numeric_limits<double>::infinity();
    int stagnant = 0;
    double pg_scale = -1.0;  // set from the first gradient

    try {
    for (int outer = 0; outer < opts.max_outer; ++outer) {
        result.iterations = outer + 1;
        result.merit_trace.emplace_back();

        // ---- inner: projected L-BFGS on the AL merit at fixed (mu, rho) ----
        std::deque<std::pair<std::vector<double>, std::vector<double>>> mem;  // (s, y)
        std::vector<double> grad = merit_grad(p, cur);
        double merit = merit_of(cur);
        result.merit_trace.back().push_back(merit);
        if (pg_scale < 0.0) {
            pg_scale = std::max(projected_gradient_norm(p, grad), opts.kkt_tol);
        }
        const double inner_tol =
            std::max(opts.kkt_tol, pg_scale * std::pow(0.2, outer + 1));

        for (int inner = 0; inner < opts.max_inner; ++inner) {
            double pg = projected_gradient_norm(p, grad);
            if (pg <= inner_tol) break;

            // two-loop recursion
            std::vector<double> d(n);
            for (std::size_t i = 0; i < n; ++i) d[i] = -grad[i];
            std::vector<double> alpha(mem.size());
            for (std::size_t m = mem.size(); m-- > 0;) {
                const auto& [s, y] = mem[m];
                double sy = 0.0, sd = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sy += s[i] * y[i];
                    sd += s[i] * d[i];
                }
                alpha[m] = sd / sy;
                for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[m] * y[i];
            }
            if (!mem.empty()) {
                const auto& [s, y] = mem.back();
                double sy = 0.0, yy = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sy += s[i] * y[i];
                    yy += y[i] * y[i];
                }
                double scale = sy / yy;
                for (std::size_t i = 0; i < n; ++i) d[i] *= scale;
            } else {
                // initial scaling keeps first steps inside the box
                double gmax = 0.0;
                for (std::size_t i = 0; i < n; ++i) gmax = std::max(gmax, std::abs(grad[i]));
                double span = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (std::isfinite(cb.upper[i] - cb.lower[i])) {
                        span = std::max(span, cb.upper[i] - cb.lower[i]);
                    }
                }
                if (gmax > 0.0 && span > 0.0) {
                    double scale = std::min(1.0, 0.1 * span / gmax);
                    for (std::size_t i = 0; i < n; ++i) d[i] *= scale;
                }
            }
            double gd = 0.0;
            for (std::size_t i = 0; i < n; ++i) gd += grad[i] * d[i];
            if (gd > 0.0) {
                for (std::size_t i = 0; i < n; ++i) d[i] = -grad[i];
            }

            // backtracking line search with projection
            double step = 1.0;
            bool accepted = false;
            std::vector<double> p_new;
            EvalPoint e_new;
            double merit_new = 0.0;
            for (int ls = 0; ls < 40; ++ls) {
                std::vector<double> trial(n);
                for (std::size_t i = 0; i < n; ++i) trial[i] = p[i] + step * d[i];
                trial = project(std::move(trial));
                double gdotdx = 0.0;
                double dxnorm = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    gdotdx += grad[i] * (trial[i] - p[i]);
                    dxnorm = std::max(dxnorm, std::abs(trial[i] - p[i]));
                }
                if (dxnorm == 0.0) break;
                EvalPoint e = eval_point(trial);
                if (e.ok) {
                    double m = merit_of(e);
                    if (m <= merit + 1e-4 * gdotdx || (gdotdx >= 0.0 && m < merit)) {
                        p_new = std::move(trial);
                        e_new = std::move(e);
                        merit_new = m;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if (!accepted) break;

            std::vector<double> grad_new = merit_grad(p_new, e_new);
            std::vector<double> s(n), y(n);
            double sy = 0.0, ss = 0.0, yy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = p_new[i] - p[i];
                y[i] = grad_new[i] - grad[i];
                sy += s[i] * y[i];
                ss += s[i] * s[i];
                yy += y[i] * y[i];
            }
            if (sy > 1e-12 * std::sqrt(ss * yy)) {
                mem.emplace_back(std::move(s), std::move(y));
                if (mem.size() > 8) mem.pop_front();
            }
            p = std::move(p_new);
            cur = std::move(e_new);
            grad = std::move(grad_new);
            merit = merit_new;
            result.merit_trace.back().push_back(merit);
        }

        // ---- outer updates ----
        double viol = violation_of(cur);
        std::vector<double> mu_next = mu;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            mu_next[i] = std::max(0.0, mu[i] - rho * cur.g[i]);
        }

        // KKT check with the updated multipliers
        {
            std::vector<double> lag = cb.eval_objective_grad(p);
            std::vector<std::vector<double>> jac = cb.eval_constraint_jacobian(p);
            for (std::size_t i = 0; i < mu_next.size(); ++i) {
                if (mu_next[i] > 0.0) {
                    for (std::size_t k = 0; k < n; ++k) lag[k] -= mu_next[i] * jac[i][k];
                }
            }
            double kkt = projected_gradient_norm(p, lag);
            bool complementary = true;
            for (std::size_t i = 0; i < mu_next.size(); ++i) {
                if (mu_next[i] > 0.0 && cur.g[i] > 1e-3) complementary = false;
            }
            if (viol <= opts.constraint_tol && kkt <= opts.kkt_tol && complementary) {
                result.status = SizingStatus::Optimal;
                break;
            }
        }

        if (viol <= 0.25 * prev_violation || viol <= opts.constraint_tol) {
            mu = std::move(mu_next);
            stagnant = 0;
        } else {
            rho = std::min(rho * 10.0, opts.rho_max);
            if (rho >= opts.rho_max) ++stagnant;
            if (stagnant >= 3) {
                result.status = SizingStatus::Infeasible;
                break;
            }
        }
        prev_violation = std::max(viol, opts.constraint_tol);
    }
    } catch (const Error&) {
        result.status = SizingStatus::EvalFailure;
    }

    result.p_opt = p;
    result.objective = cur.f;
    result.constraint_violation = violation_of(cur);
    return result;
}

}  // namespace gradnet::sizing
