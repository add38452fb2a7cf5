#pragma once

// Compiles module definitions into shared computation rules and recursively
// instantiates the hierarchy with globally unique signal indices.
//
// Frames:
//   node frame  = [external nodes..., internal nodes..., GALV extensions...]
//   param frame = [ip..., intrp..., gv..., c...]
// Ground (`gnd`) never owns a frame slot; bindings to it carry the sentinel
// slot/index -1.

#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradnet/elements.hpp"
#include "gradnet/errors.hpp"
#include "gradnet/netlist.hpp"
#include "gradnet/submodel.hpp"

namespace gradnet::compiler {

using submodel::CompileOptions;

inline constexpr int kGroundIndex = -1;

enum class SlotKind { InputParam, Intrinsic, Global, Constant };

struct ParamSlotRef {
    SlotKind kind;
    int index;  // position within the segment
};

struct CompiledRule;

struct ChildInfo {
    std::string instance_name;
    const CompiledRule* rule = nullptr;
    std::vector<int> node_slots;   // parent node-frame slots, child external order
    std::vector<int> param_slots;  // parent param-frame slots, child ip order
};

struct ElementInfo {
    std::string instance_name;
    const elements::ElementKind* kind = nullptr;
    std::vector<int> node_slots;   // port order, GALV slot appended when galv
    std::vector<int> param_slots;  // element param order
    bool galv = false;
    std::optional<double> ac_magnitude;
};

struct CompiledRule {
    std::string master_name;
    std::vector<std::string> external_node_names;
    std::vector<std::string> internal_node_names;  // declared + GALV extensions
    int n_declared_internal = 0;

    std::vector<std::string> ip_names;
    std::vector<std::string> intrinsic_names;
    int n_globals = 0;
    std::vector<double> constants;

    std::optional<submodel::CompiledSubModel> submodel;
    std::vector<ChildInfo> children;
    std::vector<ElementInfo> elems;

    int n_external() const { return static_cast<int>(external_node_names.size()); }
    int n_internal() const { return static_cast<int>(internal_node_names.size()); }
    int n_nodes() const { return n_external() + n_internal(); }

    int n_ip() const { return static_cast<int>(ip_names.size()); }
    int n_intrinsic() const { return static_cast<int>(intrinsic_names.size()); }
    int gv_offset() const { return n_ip() + n_intrinsic(); }
    int c_offset() const { return gv_offset() + n_globals; }
    int param_frame_size() const { return c_offset() + static_cast<int>(constants.size()); }

    /// Range test over the fixed [ip, intrp, gv, c] layout.
    ParamSlotRef classify(int slot) const {
        if (slot < n_ip()) return {SlotKind::InputParam, slot};
        if (slot < gv_offset()) return {SlotKind::Intrinsic, slot - n_ip()};
        if (slot < c_offset()) return {SlotKind::Global, slot - gv_offset()};
        return {SlotKind::Constant, slot - c_offset()};
    }

    int node_slot(const std::string& name) const {
        for (int i = 0; i < n_external(); ++i) {
            if (external_node_names[static_cast<std::size_t>(i)] == name) return i;
        }
        for (int i = 0; i < n_internal(); ++i) {
            if (internal_node_names[static_cast<std::size_t>(i)] == name) {
                return n_external() + i;
            }
        }
        return -2;  // not found (distinct from the gnd sentinel -1)
    }

    std::string node_name(int slot) const {
        if (slot == kGroundIndex) return netlist::kGroundName;
        if (slot < n_external()) return external_node_names[static_cast<std::size_t>(slot)];
        return internal_node_names[static_cast<std::size_t>(slot - n_external())];
    }
};

struct RuleSet {
    std::map<std::string, std::shared_ptr<CompiledRule>> rules;
    std::string top;
    std::vector<std::pair<std::string, double>> globals;
    std::vector<std::pair<std::string, double>> node_set;
    CompileOptions options;

    const CompiledRule* find(const std::string& name) const {
        auto it = rules.find(name);
        return it == rules.end() ? nullptr : it->second.get();
    }

    std::vector<double> global_values() const {
        std::vector<double> v;
        v.reserve(globals.size());
        for (const auto& [name, value] : globals) v.push_back(value);
        return v;
    }

    int global_index(const std::string& name) const {
        for (std::size_t i = 0; i < globals.size(); ++i) {
            if (globals[i].first == name) return static_cast<int>(i);
        }
        return -1;
    }
};

// ---------------------------------------------------------------------------
// Rule compilation
// ---------------------------------------------------------------------------

namespace detail {

inline void compile_one_rule(const netlist::NetlistDocument& doc,
                             const netlist::ModuleDefinition& mod, RuleSet& rs) {
    if (rs.rules.count(mod.name)) return;

    auto rule = std::make_shared<CompiledRule>();
    rule->master_name = mod.name;
    rule->external_node_names = mod.external_nodes;
    rule->internal_node_names = mod.internal_nodes;
    rule->n_declared_internal = static_cast<int>(mod.internal_nodes.size());
    rule->ip_names = mod.input_params;
    rule->n_globals = static_cast<int>(rs.globals.size());

    // GALV extensions become trailing internal nodes, in schematic order.
    for (const netlist::InstanceStatement& inst : mod.schematic) {
        const elements::ElementKind* kind = elements::find_kind(inst.master_name);
        if (kind && (kind->needs_galv || inst.galv)) {
            rule->internal_node_names.push_back(netlist::galv_node_name(inst.instance_name));
        }
    }

    if (mod.submodel) {
        rule->intrinsic_names = mod.submodel->intrinsic_params;
        std::vector<std::string> signal_names = rule->external_node_names;
        signal_names.insert(signal_names.end(), rule->internal_node_names.begin(),
                            rule->internal_node_names.end());
        rule->submodel = submodel::compile(*mod.submodel, signal_names, rule->ip_names,
                                           rs.options);
    }

    auto param_slot = [&](const netlist::ParamBinding& b, const std::string& where) -> int {
        if (b.is_literal) {
            rule->constants.push_back(b.literal);
            return rule->c_offset() + static_cast<int>(rule->constants.size()) - 1;
        }
        for (int i = 0; i < rule->n_ip(); ++i) {
            if (rule->ip_names[static_cast<std::size_t>(i)] == b.symbol) return i;
        }
        for (int i = 0; i < rule->n_intrinsic(); ++i) {
            if (rule->intrinsic_names[static_cast<std::size_t>(i)] == b.symbol) {
                return rule->n_ip() + i;
            }
        }
        if (int g = rs.global_index(b.symbol); g >= 0) return rule->gv_offset() + g;
        throw ParamResolutionError(where + ": cannot resolve symbol '" + b.symbol + "'");
    };

    auto node_slot = [&](const std::string& node, const std::string& where) -> int {
        if (node == netlist::kGroundName) return kGroundIndex;
        int slot = rule->node_slot(node);
        if (slot == -2) {
            throw ParamResolutionError(where + ": node '" + node + "' is not declared");
        }
        return slot;
    };

    for (const netlist::InstanceStatement& inst : mod.schematic) {
        const std::string where = "module '" + mod.name + "', instance '" + inst.instance_name + "'";
        const elements::ElementKind* kind = elements::find_kind(inst.master_name);
        if (kind) {
            if (inst.galv && !kind->needs_galv && !kind->galv_optional) {
                throw GalvUnsupported(where + ": element " + kind->name +
                                      " does not accept \"Galv\": true");
            }
            if (inst.ac_magnitude && kind->name != "VS" && kind->name != "CS") {
                throw AcUnsupported(where + ": \"Ac\" is only supported on VS and CS instances");
            }
            ElementInfo info;
            info.instance_name = inst.instance_name;
            info.kind = kind;
            info.galv = kind->needs_galv || inst.galv;
            info.ac_magnitude = inst.ac_magnitude;
            for (const std::string& port : kind->ports) {
                const std::string* bound = nullptr;
                for (const auto& [p, node] : inst.node_bindings) {
                    if (p == port) bound = &node;
                }
                if (!bound) throw ElementUnknownPort(where + ": port '" + port + "' is unbound");
                info.node_slots.push_back(node_slot(*bound, where));
            }
            for (const auto& [p, node] : inst.node_bindings) {
                bool known = false;
                for (const std::string& port : kind->ports) known = known || port == p;
                if (!known) {
                    throw ElementUnknownPort(where + ": '" + p + "' is not a port of " +
                                             kind->name);
                }
            }
            if (info.galv) {
                info.node_slots.push_back(
                    node_slot(netlist::galv_node_name(inst.instance_name), where));
            }
            for (const std::string& pname : kind->params) {
                const netlist::ParamBinding* bound = nullptr;
                for (const auto& [p, b] : inst.param_bindings) {
                    if (p == pname) bound = &b;
                }
                if (!bound) {
                    throw ParamResolutionError(where + ": param '" + pname + "' is unbound");
                }
                info.param_slots.push_back(param_slot(*bound, where));
            }
            rule->elems.push_back(std::move(info));
            continue;
        }

        const netlist::ModuleDefinition* child = doc.find_module(inst.master_name);
        if (!child) {
            throw ParamResolutionError(where + ": undefined master '" + inst.master_name + "'");
        }
        compile_one_rule(doc, *child, rs);
        ChildInfo info;
        info.instance_name = inst.instance_name;
        info.rule = rs.rules.at(child->name).get();
        for (const std::string& port : child->external_nodes) {
            const std::string* bound = nullptr;
            for (const auto& [p, node] : inst.node_bindings) {
                if (p == port) bound = &node;
            }
            if (!bound) throw ElementUnknownPort(where + ": port '" + port + "' is unbound");
            info.node_slots.push_back(node_slot(*bound, where));
        }
        for (const std::string& pname : child->input_params) {
            const netlist::ParamBinding* bound = nullptr;
            for (const auto& [p, b] : inst.param_bindings) {
                if (p == pname) bound = &b;
            }
            if (!bound) throw ParamResolutionError(where + ": param '" + pname + "' is unbound");
            info.param_slots.push_back(param_slot(*bound, where));
        }
        rule->children.push_back(std::move(info));
    }

    rs.rules[mod.name] = std::move(rule);
}

}  // namespace detail

/// Compiles every module of a validated document into computation rules.
inline RuleSet compile_rules(const netlist::NetlistDocument& doc,
                             const CompileOptions& options = {}) {
    RuleSet rs;
    rs.top = doc.top;
    rs.globals = doc.globals;
    rs.node_set = doc.node_set;
    rs.options = options;
    for (const netlist::ModuleDefinition& mod : doc.modules) {
        detail::compile_one_rule(doc, mod, rs);
    }
    return rs;
}

// ---------------------------------------------------------------------------
// Recursive instantiation
// ---------------------------------------------------------------------------

struct SubcircuitInstance {
    const CompiledRule* rule = nullptr;
    std::string path;  // "" for the top instance, else dotted instance names
    std::vector<int> node_frame;  // global indices for [en..., in...]; -1 = gnd
    std::vector<std::unique_ptr<SubcircuitInstance>> subckts;

    std::span<const int> internal_nodes() const {
        return std::span<const int>(node_frame).subspan(
            static_cast<std::size_t>(rule->n_external()));
    }
};

struct Circuit {
    std::shared_ptr<RuleSet> rules;
    std::unique_ptr<SubcircuitInstance> top;
    int n_unknowns = 0;
    std::vector<std::string> node_names;  // global index -> qualified name
    std::vector<const SubcircuitInstance*> instances;  // preorder

    const SubcircuitInstance* find_instance(const std::string& path) const {
        for (const SubcircuitInstance* inst : instances) {
            if (inst->path == path) return inst;
        }
        return nullptr;
    }
};

namespace detail {

inline std::unique_ptr<SubcircuitInstance> instantiate_rec(const CompiledRule& rule,
                                                           const std::string& path,
                                                           std::vector<int> en, int& next,
                                                           std::vector<std::string>& names,
                                                           std::vector<const SubcircuitInstance*>& order) {
    auto inst = std::make_unique<SubcircuitInstance>();
    inst->rule = &rule;
    inst->path = path;
    inst->node_frame = std::move(en);
    for (const std::string& name : rule.internal_node_names) {
        if (name == netlist::kGroundName) {
            inst->node_frame.push_back(kGroundIndex);
        } else {
            inst->node_frame.push_back(next++);
            names.push_back(path.empty() ? name : path + "." + name);
        }
    }
    order.push_back(inst.get());
    for (const ChildInfo& child : rule.children) {
        std::vector<int> child_en;
        child_en.reserve(child.node_slots.size());
        for (int slot : child.node_slots) {
            child_en.push_back(slot == kGroundIndex
                                   ? kGroundIndex
                                   : inst->node_frame[static_cast<std::size_t>(slot)]);
        }
        std::string child_path = path.empty() ? child.instance_name
                                              : path + "." + child.instance_name;
        inst->subckts.push_back(instantiate_rec(*child.rule, child_path, std::move(child_en),
                                                next, names, order));
    }
    return inst;
}

}  // namespace detail

/// Depth-first assignment of consecutive global indices to internal nodes.
/// Returns the instance tree plus the unknown count N (gnd excluded).
inline Circuit instantiate(std::shared_ptr<RuleSet> rules, int offset = 0) {
    const CompiledRule* top = rules->find(rules->top);
    if (!top) throw ParamResolutionError("top module '" + rules->top + "' has no compiled rule");
    if (top->n_external() != 0) {
        throw TopHasExternalNodes("top module '" + rules->top + "' declares external nodes");
    }
    Circuit ckt;
    ckt.rules = std::move(rules);
    int next = offset;
    ckt.node_names.assign(static_cast<std::size_t>(offset), "");
    ckt.top = detail::instantiate_rec(*top, "", {}, next, ckt.node_names, ckt.instances);
    ckt.n_unknowns = next;
    return ckt;
}

inline Circuit instantiate(const netlist::NetlistDocument& doc, const CompileOptions& options = {}) {
    return instantiate(std::make_shared<RuleSet>(compile_rules(doc, options)));
}

/// One line per instance path with its node and param frames
/// (the `compile --dump` report).
inline std::string dump_indexes(const Circuit& ckt) {
    std::ostringstream out;
    for (const SubcircuitInstance* inst : ckt.instances) {
        const CompiledRule& r = *inst->rule;
        out << (inst->path.empty() ? "(top)" : inst->path) << " master=" << r.master_name
            << " nodes=[";
        for (int i = 0; i < r.n_nodes(); ++i) {
            if (i) out << ",";
            out << r.node_name(i) << ":" << inst->node_frame[static_cast<std::size_t>(i)];
        }
        out << "] params=[";
        bool first = true;
        auto emit = [&](const std::string& tag, const std::string& name, int slot) {
            if (!first) out << ",";
            first = false;
            out << tag << ":" << name << "@" << slot;
        };
        for (int i = 0; i < r.n_ip(); ++i) {
            emit("ip", r.ip_names[static_cast<std::size_t>(i)], i);
        }
        for (int i = 0; i < r.n_intrinsic(); ++i) {
            emit("intrp", r.intrinsic_names[static_cast<std::size_t>(i)], r.n_ip() + i);
        }
        for (int i = 0; i < r.n_globals; ++i) {
            emit("gv", ckt.rules->globals[static_cast<std::size_t>(i)].first, r.gv_offset() + i);
        }
        for (std::size_t i = 0; i < r.constants.size(); ++i) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", r.constants[i]);
            emit("c", buf, r.c_offset() + static_cast<int>(i));
        }
        out << "]\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Flattening (oracle for hierarchy/flat equivalence)
// ---------------------------------------------------------------------------

/// Shared submodel application: one per (instance, submodel) pair.
struct FlatSubModelApp {
    const submodel::CompiledSubModel* sm = nullptr;
    std::vector<int> nodes;  // global signal indices feeding the submodel
    std::vector<std::shared_ptr<const struct FlatParamExpr>> ip;
};

struct FlatParamExpr {
    enum class Kind { Const, Global, SubModelOut };
    Kind kind = Kind::Const;
    double value = 0.0;
    int global_index = -1;
    std::shared_ptr<FlatSubModelApp> app;
    int output_index = -1;
};

struct FlatElement {
    std::string path;
    const elements::ElementKind* kind = nullptr;
    std::vector<int> nodes;
    std::vector<std::shared_ptr<const FlatParamExpr>> params;
    bool galv = false;
    std::optional<double> ac_magnitude;
};

struct FlatCircuit {
    std::vector<FlatElement> elements;
    int n_unknowns = 0;
    std::vector<std::pair<std::string, double>> globals;
};

namespace detail {

using ExprPtr = std::shared_ptr<const FlatParamExpr>;

inline void flatten_rec(const SubcircuitInstance& inst, const std::vector<ExprPtr>& ip_exprs,
                        const std::vector<double>& globals, FlatCircuit& flat) {
    const CompiledRule& rule = *inst.rule;

    // Param-frame environment: [ip, intrp, gv, c] as expression trees.
    std::vector<ExprPtr> env(static_cast<std::size_t>(rule.param_frame_size()));
    for (int i = 0; i < rule.n_ip(); ++i) {
        env[static_cast<std::size_t>(i)] = ip_exprs[static_cast<std::size_t>(i)];
    }
    if (rule.submodel) {
        auto app = std::make_shared<FlatSubModelApp>();
        app->sm = &*rule.submodel;
        app->nodes = inst.node_frame;
        app->ip = ip_exprs;
        for (int l = 0; l < rule.n_intrinsic(); ++l) {
            auto e = std::make_shared<FlatParamExpr>();
            e->kind = FlatParamExpr::Kind::SubModelOut;
            e->app = app;
            e->output_index = l;
            env[static_cast<std::size_t>(rule.n_ip() + l)] = std::move(e);
        }
    }
    for (int g = 0; g < rule.n_globals; ++g) {
        auto e = std::make_shared<FlatParamExpr>();
        e->kind = FlatParamExpr::Kind::Global;
        e->global_index = g;
        e->value = globals[static_cast<std::size_t>(g)];
        env[static_cast<std::size_t>(rule.gv_offset() + g)] = std::move(e);
    }
    for (std::size_t c = 0; c < rule.constants.size(); ++c) {
        auto e = std::make_shared<FlatParamExpr>();
        e->kind = FlatParamExpr::Kind::Const;
        e->value = rule.constants[c];
        env[static_cast<std::size_t>(rule.c_offset()) + c] = std::move(e);
    }

    for (const ElementInfo& el : rule.elems) {
        FlatElement fe;
        fe.path = inst.path.empty() ? el.instance_name : inst.path + "." + el.instance_name;
        fe.kind = el.kind;
        fe.galv = el.galv;
        fe.ac_magnitude = el.ac_magnitude;
        for (int slot : el.node_slots) {
            fe.nodes.push_back(slot == kGroundIndex
                                   ? kGroundIndex
                                   : inst.node_frame[static_cast<std::size_t>(slot)]);
        }
        for (int slot : el.param_slots) {
            fe.params.push_back(env[static_cast<std::size_t>(slot)]);
        }
        flat.elements.push_back(std::move(fe));
    }
    for (std::size_t k = 0; k < rule.children.size(); ++k) {
        std::vector<ExprPtr> child_ip;
        for (int slot : rule.children[k].param_slots) {
            child_ip.push_back(env[static_cast<std::size_t>(slot)]);
        }
        flatten_rec(*inst.subckts[k], child_ip, globals, flat);
    }
}

}  // namespace detail

/// Produces a single element list with fully resolved global node indices and
/// symbolic parameter expressions composing SubModel outputs.
inline FlatCircuit flatten(const Circuit& ckt) {
    FlatCircuit flat;
    flat.n_unknowns = ckt.n_unknowns;
    flat.globals = ckt.rules->globals;
    detail::flatten_rec(*ckt.top, {}, ckt.rules->global_values(), flat);
    return flat;
}

/// Q, F and their x-Jacobians evaluated straight off the flat element list
/// (no hierarchy, no layered backprop) -- the independent route for
/// hierarchy/flat equivalence checks.
struct FlatEvalResult {
    sparse::SparseVec Q;
    sparse::SparseVec F;
    std::vector<sparse::Triplet<double>> dQ_dx;
    std::vector<sparse::Triplet<double>> dF_dx;
};

inline FlatEvalResult flat_eval(const FlatCircuit& flat, std::span<const double> x,
                                elements::Analysis analysis,
                                std::span<const double> globals = {}) {
    using detail::ExprPtr;
    struct ExprVal {
        double value = 0.0;
        std::map<int, double> dx;  // global signal index -> derivative
    };
    std::map<const FlatSubModelApp*, submodel::SubModelEval> app_cache;
    std::map<const FlatParamExpr*, ExprVal> expr_cache;

    auto eval_expr = [&](auto&& self, const ExprPtr& e) -> const ExprVal& {
        auto it = expr_cache.find(e.get());
        if (it != expr_cache.end()) return it->second;
        ExprVal out;
        if (e->kind == FlatParamExpr::Kind::Const) {
            out.value = e->value;
        } else if (e->kind == FlatParamExpr::Kind::Global) {
            out.value = globals.empty() ? e->value
                                        : globals[static_cast<std::size_t>(e->global_index)];
        } else {
            const FlatSubModelApp& app = *e->app;
            if (!app_cache.count(&app)) {
                std::vector<double> signals;
                for (int n : app.nodes) {
                    signals.push_back(n < 0 ? 0.0 : x[static_cast<std::size_t>(n)]);
                }
                std::vector<double> ip_vals;
                std::vector<const ExprVal*> ip_evals;
                for (const ExprPtr& arg : app.ip) {
                    ip_evals.push_back(&self(self, arg));
                    ip_vals.push_back(ip_evals.back()->value);
                }
                app_cache[&app] = app.sm->eval(signals, ip_vals);
            }
            const submodel::SubModelEval& sme = app_cache[&app];
            const std::size_t l = static_cast<std::size_t>(e->output_index);
            out.value = sme.intrp[l];
            for (std::size_t s = 0; s < app.nodes.size(); ++s) {
                int node = app.nodes[s];
                if (node >= 0 && sme.J_s[l][s] != 0.0) out.dx[node] += sme.J_s[l][s];
            }
            for (std::size_t p = 0; p < app.ip.size(); ++p) {
                const ExprVal& arg = self(self, app.ip[p]);
                if (sme.J_ip[l][p] == 0.0) continue;
                for (const auto& [node, d] : arg.dx) out.dx[node] += sme.J_ip[l][p] * d;
            }
        }
        return expr_cache.emplace(e.get(), std::move(out)).first->second;
    };

    FlatEvalResult res;
    for (const FlatElement& el : flat.elements) {
        std::vector<double> pvals;
        std::vector<const ExprVal*> pevals;
        for (const ExprPtr& p : el.params) {
            pevals.push_back(&eval_expr(eval_expr, p));
            pvals.push_back(pevals.back()->value);
        }
        elements::SparseContribution c = elements::stamp(*el.kind, analysis, el.nodes, pvals, x,
                                                         el.galv, el.ac_magnitude);
        for (auto& [i, v] : c.Q.items) res.Q.add(i, v);
        for (auto& [i, v] : c.F.items) res.F.add(i, v);
        res.dQ_dx.insert(res.dQ_dx.end(), c.dQ_dx.begin(), c.dQ_dx.end());
        res.dF_dx.insert(res.dF_dx.end(), c.dF_dx.begin(), c.dF_dx.end());
        // Chain the stamp's param gradients through the expressions' x-dependence.
        for (const auto& t : c.dQ_dp) {
            for (const auto& [node, d] : pevals[static_cast<std::size_t>(t.col)]->dx) {
                res.dQ_dx.push_back({t.row, node, t.value * d});
            }
        }
        for (const auto& t : c.dF_dp) {
            for (const auto& [node, d] : pevals[static_cast<std::size_t>(t.col)]->dx) {
                res.dF_dx.push_back({t.row, node, t.value * d});
            }
        }
    }
    res.Q.merge();
    res.F.merge();
    return res;
}

}  // namespace gradnet::compiler
