#pragma once

// JSON netlist dialect: parsing, static validation, printing.
//
// A document is a JSON object (with `#` line comments allowed) holding:
//   "Top"      required, name of the top-level module master
//   "Globals"  optional, {name: number} design/global variables
//   "NodeSet"  optional, {top-node-name: volts} initial-guess hints
//   any other key defines a module master per the field set
//   ExternalNodes / InternalNodes / InputParams / Schematic (+ SubModel).
//
// The node name `gnd` is reserved everywhere as the reference node and may be
// used in bindings without being declared.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradnet/elements.hpp"
#include "gradnet/errors.hpp"
#include "gradnet/expr.hpp"
#include "gradnet/jsonio.hpp"

namespace gradnet::netlist {

inline constexpr const char* kGroundName = "gnd";
/// GALV branch node created for instance `inst` is addressable as "inst#i".
inline std::string galv_node_name(const std::string& instance) { return instance + "#i"; }

enum class SubModelKind { Expression, LookupTable };

struct TableRef {
    std::string path;
    // Optional axis-name -> binding overrides ("Vgs" -> "gate-source").
    std::vector<std::pair<std::string, std::string>> axis_bindings;

    bool operator==(const TableRef&) const = default;
};

struct AnalysisSet {
    bool dc = true;
    bool tran = true;
    bool ac = true;
    bool listed = false;  // true when the netlist carried an Analysis field

    bool operator==(const AnalysisSet&) const = default;
};

struct SubModelSpec {
    SubModelKind kind = SubModelKind::Expression;
    std::vector<std::string> intrinsic_params;
    AnalysisSet analyses;
    std::string expr;          // kind == Expression
    TableRef table;            // kind == LookupTable, declarative form
    std::string model_loader;  // kind == LookupTable, opaque loader string

    bool operator==(const SubModelSpec&) const = default;
};

struct ParamBinding {
    bool is_literal = false;
    double literal = 0.0;
    std::string symbol;

    static ParamBinding make_literal(double v) { return {true, v, {}}; }
    static ParamBinding make_symbol(std::string s) { return {false, 0.0, std::move(s)}; }

    bool operator==(const ParamBinding&) const = default;
};

struct InstanceStatement {
    std::string instance_name;
    std::string master_name;
    std::vector<std::pair<std::string, std::string>> node_bindings;     // port -> node
    std::vector<std::pair<std::string, ParamBinding>> param_bindings;   // param -> value
    bool galv = false;
    std::optional<double> ac_magnitude;
    int line = 0;
    int column = 0;

    bool operator==(const InstanceStatement& o) const {
        return instance_name == o.instance_name && master_name == o.master_name &&
               node_bindings == o.node_bindings && param_bindings == o.param_bindings &&
               galv == o.galv && ac_magnitude == o.ac_magnitude;
    }
};

struct ModuleDefinition {
    std::string name;
    std::vector<std::string> external_nodes;
    std::vector<std::string> internal_nodes;
    std::vector<std::string> input_params;
    std::optional<SubModelSpec> submodel;
    std::vector<InstanceStatement> schematic;
    int line = 0;
    int column = 0;

    bool operator==(const ModuleDefinition& o) const {
        return name == o.name && external_nodes == o.external_nodes &&
               internal_nodes == o.internal_nodes && input_params == o.input_params &&
               submodel == o.submodel && schematic == o.schematic;
    }
};

struct NetlistDocument {
    std::vector<ModuleDefinition> modules;  // document order
    std::string top;
    std::vector<std::pair<std::string, double>> globals;
    std::vector<std::pair<std::string, double>> node_set;

    const ModuleDefinition* find_module(const std::string& name) const {
        for (const ModuleDefinition& m : modules) {
            if (m.name == name) return &m;
        }
        return nullptr;
    }

    bool operator==(const NetlistDocument& o) const {
        return modules == o.modules && top == o.top && globals == o.globals &&
               node_set == o.node_set;
    }
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string code;    // CircularDefinition, UndefinedMaster, ...
    std::string module;  // module master in which the issue was found
    std::string locus;   // instance, node, or detail
    std::string message;

    std::string to_string() const {
        std::string s = severity == Severity::Error ? "error" : "warning";
        s += " [" + code + "] module '" + module + "'";
        if (!locus.empty()) s += " (" + locus + ")";
        s += ": " + message;
        return s;
    }
};

inline bool has_errors(const std::vector<Diagnostic>& diags) {
    for (const Diagnostic& d : diags) {
        if (d.severity == Severity::Error) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& where, const std::string& what) {
    throw SchemaError(where + ": " + what);
}

inline double require_number(const jsonio::Value& v, const std::string& where) {
    auto n = jsonio::coerce_number(v);
    if (!n) schema_fail(where, std::string("expected a number, got ") + v.type_name());
    return *n;
}

inline const std::string& require_string(const jsonio::Value& v, const std::string& where) {
    if (!v.is_string()) schema_fail(where, std::string("expected a string, got ") + v.type_name());
    return v.as_string();
}

inline std::vector<std::string> require_string_array(const jsonio::Value& v,
                                                     const std::string& where) {
    if (!v.is_array()) schema_fail(where, std::string("expected an array, got ") + v.type_name());
    std::vector<std::string> out;
    for (const jsonio::Value& item : v.as_array()) {
        out.push_back(require_string(item, where));
    }
    return out;
}

inline void check_unique(const std::vector<std::string>& names, const std::string& where) {
    std::set<std::string> seen;
    for (const std::string& n : names) {
        if (!seen.insert(n).second) schema_fail(where, "duplicate name '" + n + "'");
    }
}

inline SubModelSpec parse_submodel(const jsonio::Value& v, const std::string& where) {
    if (!v.is_object()) schema_fail(where, "SubModel must be an object");
    SubModelSpec sm;
    const jsonio::Value* intr = nullptr;
    const jsonio::Value* expr = nullptr;
    const jsonio::Value* table = nullptr;
    const jsonio::Value* loader = nullptr;
    for (const jsonio::Member& m : v.as_object()) {
        if (m.key == "IntrinsicParams") {
            intr = &m.value();
        } else if (m.key == "Expr") {
            expr = &m.value();
        } else if (m.key == "Table") {
            table = &m.value();
        } else if (m.key == "ModelLoader") {
            loader = &m.value();
        } else if (m.key == "Analysis") {
            sm.analyses = AnalysisSet{false, false, false, true};
            for (const std::string& a : require_string_array(m.value(), where + ".Analysis")) {
                if (a == "DC") sm.analyses.dc = true;
                else if (a == "TRAN") sm.analyses.tran = true;
                else if (a == "AC") sm.analyses.ac = true;
                else schema_fail(where, "unknown analysis '" + a + "'");
            }
        } else {
            schema_fail(where, "unknown SubModel field '" + m.key + "'");
        }
    }
    if (!intr) schema_fail(where, "SubModel is missing IntrinsicParams");
    sm.intrinsic_params = require_string_array(*intr, where + ".IntrinsicParams");
    if (sm.intrinsic_params.empty()) schema_fail(where, "IntrinsicParams must be non-empty");
    check_unique(sm.intrinsic_params, where + ".IntrinsicParams");

    int bodies = (expr != nullptr) + (table != nullptr) + (loader != nullptr);
    if (bodies != 1) {
        schema_fail(where, "SubModel needs exactly one of Expr, Table, or ModelLoader");
    }
    if (expr) {
        sm.kind = SubModelKind::Expression;
        sm.expr = require_string(*expr, where + ".Expr");
        try {
            submodel::ExprProgram prog = submodel::parse_expression_list(sm.expr);
            if (prog.n_outputs() != sm.intrinsic_params.size()) {
                schema_fail(where, "Expr yields " + std::to_string(prog.n_outputs()) +
                                       " entries but IntrinsicParams declares " +
                                       std::to_string(sm.intrinsic_params.size()));
            }
        } catch (const ExprParseError& e) {
            schema_fail(where, e.what());
        }
    } else if (table) {
        sm.kind = SubModelKind::LookupTable;
        if (!table->is_object()) schema_fail(where, "Table must be an object");
        const jsonio::Value* path = table->find("Path");
        if (!path) schema_fail(where, "Table is missing Path");
        sm.table.path = require_string(*path, where + ".Table.Path");
        for (const jsonio::Member& m : table->as_object()) {
            if (m.key == "Path") continue;
            if (m.key == "Axes") {
                if (!m.value().is_object()) schema_fail(where, "Table.Axes must be an object");
                for (const jsonio::Member& a : m.value().as_object()) {
                    sm.table.axis_bindings.emplace_back(
                        a.key, require_string(a.value(), where + ".Table.Axes"));
                }
            } else {
                schema_fail(where, "unknown Table field '" + m.key + "'");
            }
        }
    } else {
        sm.kind = SubModelKind::LookupTable;
        sm.model_loader = require_string(*loader, where + ".ModelLoader");
    }
    return sm;
}

inline InstanceStatement parse_instance(const std::string& name, const jsonio::Value& v,
                                        const std::string& where) {
    if (!v.is_object()) schema_fail(where, "instance must be an object");
    InstanceStatement inst;
    inst.instance_name = name;
    inst.line = v.line;
    inst.column = v.column;
    bool has_master = false;
    for (const jsonio::Member& m : v.as_object()) {
        if (m.key == "MasterName") {
            inst.master_name = require_string(m.value(), where + ".MasterName");
            has_master = true;
        } else if (m.key == "ExternalNodes") {
            if (!m.value().is_object()) schema_fail(where, "ExternalNodes must be an object");
            for (const jsonio::Member& b : m.value().as_object()) {
                inst.node_bindings.emplace_back(
                    b.key, require_string(b.value(), where + ".ExternalNodes." + b.key));
            }
        } else if (m.key == "InputParams") {
            if (!m.value().is_object()) schema_fail(where, "InputParams must be an object");
            for (const jsonio::Member& b : m.value().as_object()) {
                const jsonio::Value& bv = b.value();
                if (auto num = jsonio::coerce_number(bv); num && !bv.is_string()) {
                    inst.param_bindings.emplace_back(b.key, ParamBinding::make_literal(*num));
                } else if (bv.is_string()) {
                    // Numeric strings are literals; anything else is a symbol.
                    if (auto num2 = jsonio::coerce_number(bv)) {
                        inst.param_bindings.emplace_back(b.key, ParamBinding::make_literal(*num2));
                    } else {
                        inst.param_bindings.emplace_back(
                            b.key, ParamBinding::make_symbol(bv.as_string()));
                    }
                } else {
                    schema_fail(where + ".InputParams." + b.key,
                                std::string("expected number or string, got ") + bv.type_name());
                }
            }
        } else if (m.key == "Galv") {
            if (!m.value().is_bool()) schema_fail(where, "Galv must be a boolean");
            inst.galv = m.value().as_bool();
        } else if (m.key == "Ac") {
            inst.ac_magnitude = require_number(m.value(), where + ".Ac");
        } else {
            schema_fail(where, "unknown instance field '" + m.key + "'");
        }
    }
    if (!has_master) schema_fail(where, "instance is missing MasterName");
    return inst;
}

inline ModuleDefinition parse_module(const std::string& name, const jsonio::Value& v) {
    const std::string where = "module '" + name + "'";
    if (!v.is_object()) schema_fail(where, "module definition must be an object");
    if (elements::find_kind(name)) {
        schema_fail(where, "module name shadows a built-in element");
    }
    ModuleDefinition mod;
    mod.name = name;
    mod.line = v.line;
    mod.column = v.column;
    const jsonio::Value* en = nullptr;
    const jsonio::Value* in = nullptr;
    const jsonio::Value* ip = nullptr;
    const jsonio::Value* schem = nullptr;
    for (const jsonio::Member& m : v.as_object()) {
        if (m.key == "ExternalNodes") en = &m.value();
        else if (m.key == "InternalNodes") in = &m.value();
        else if (m.key == "InputParams") ip = &m.value();
        else if (m.key == "Schematic") schem = &m.value();
        else if (m.key == "SubModel") mod.submodel = parse_submodel(m.value(), where + ".SubModel");
        else schema_fail(where, "unknown field '" + m.key + "'");
    }
    if (!en) schema_fail(where, "missing required field ExternalNodes");
    if (!in) schema_fail(where, "missing required field InternalNodes");
    if (!ip) schema_fail(where, "missing required field InputParams");
    if (!schem) schema_fail(where, "missing required field Schematic");
    mod.external_nodes = require_string_array(*en, where + ".ExternalNodes");
    mod.internal_nodes = require_string_array(*in, where + ".InternalNodes");
    mod.input_params = require_string_array(*ip, where + ".InputParams");
    check_unique(mod.external_nodes, where + ".ExternalNodes");
    check_unique(mod.internal_nodes, where + ".InternalNodes");
    check_unique(mod.input_params, where + ".InputParams");

    std::vector<std::string> all = mod.external_nodes;
    all.insert(all.end(), mod.internal_nodes.begin(), mod.internal_nodes.end());
    all.insert(all.end(), mod.input_params.begin(), mod.input_params.end());
    if (mod.submodel) {
        all.insert(all.end(), mod.submodel->intrinsic_params.begin(),
                   mod.submodel->intrinsic_params.end());
    }
    check_unique(all, where + " (nodes/params must be mutually disjoint)");

    if (!schem->is_object()) schema_fail(where, "Schematic must be an object");
    for (const jsonio::Member& m : schem->as_object()) {
        mod.schematic.push_back(
            parse_instance(m.key, m.value(), where + ".Schematic." + m.key));
    }
    return mod;
}

}  // namespace detail

/// Parses netlist source text. Throws SyntaxError (malformed JSON, with
/// line/column) or SchemaError (missing/wrong fields).
inline NetlistDocument parse(const std::string& source_text) {
    jsonio::Value root = jsonio::parse(source_text);
    if (!root.is_object()) {
        throw SchemaError(std::string("netlist document must be a JSON object, got ") +
                          root.type_name());
    }
    NetlistDocument doc;
    bool has_top = false;
    for (const jsonio::Member& m : root.as_object()) {
        if (m.key == "Top") {
            doc.top = detail::require_string(m.value(), "Top");
            has_top = true;
        } else if (m.key == "Globals") {
            if (!m.value().is_object()) throw SchemaError("Globals must be an object");
            for (const jsonio::Member& g : m.value().as_object()) {
                if (g.key == kGroundName) {
                    throw SchemaError("global variable name 'gnd' is reserved");
                }
                doc.globals.emplace_back(g.key,
                                         detail::require_number(g.value(), "Globals." + g.key));
            }
        } else if (m.key == "NodeSet") {
            if (!m.value().is_object()) throw SchemaError("NodeSet must be an object");
            for (const jsonio::Member& g : m.value().as_object()) {
                doc.node_set.emplace_back(g.key,
                                          detail::require_number(g.value(), "NodeSet." + g.key));
            }
        } else {
            doc.modules.push_back(detail::parse_module(m.key, m.value()));
        }
    }
    if (!has_top) throw SchemaError("missing required top-level field Top");
    return doc;
}

inline NetlistDocument parse_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot open netlist file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

struct UnionFind {
    std::map<std::string, std::string> parent;

    const std::string& find(const std::string& x) {
        auto it = parent.find(x);
        if (it == parent.end()) {
            parent[x] = x;
            return parent.find(x)->first;
        }
        if (it->second == x) return it->first;
        std::string root = find(it->second);
        parent[x] = root;
        return parent.find(x)->second;
    }

    void unite(const std::string& a, const std::string& b) {
        std::string ra = find(a), rb = find(b);
        if (ra != rb) parent[ra] = rb;
    }
};

}  // namespace detail

/// Static checks. Pure: same document yields the same diagnostics.
inline std::vector<Diagnostic> validate(const NetlistDocument& doc) {
    std::vector<Diagnostic> diags;
    auto error = [&](std::string code, std::string module, std::string locus, std::string msg) {
        diags.push_back({Severity::Error, std::move(code), std::move(module), std::move(locus),
                         std::move(msg)});
    };
    auto warning = [&](std::string code, std::string module, std::string locus, std::string msg) {
        diags.push_back({Severity::Warning, std::move(code), std::move(module), std::move(locus),
                         std::move(msg)});
    };

    std::set<std::string> global_names;
    for (const auto& [name, value] : doc.globals) global_names.insert(name);

    if (!doc.find_module(doc.top)) {
        error("UndefinedMaster", "", "Top", "top module '" + doc.top + "' is not defined");
    }

    // Master-reference cycles among defined modules (one diagnostic per cycle).
    {
        std::map<std::string, int> state;  // 0 unvisited, 1 on stack, 2 done
        std::vector<std::string> stack;
        std::set<std::vector<std::string>> reported;

        auto visit = [&](auto&& self, const ModuleDefinition& mod) -> void {
            state[mod.name] = 1;
            stack.push_back(mod.name);
            for (const InstanceStatement& inst : mod.schematic) {
                const ModuleDefinition* child = doc.find_module(inst.master_name);
                if (!child) continue;
                int st = state.count(child->name) ? state[child->name] : 0;
                if (st == 0) {
                    self(self, *child);
                } else if (st == 1) {
                    auto it = std::find(stack.begin(), stack.end(), child->name);
                    std::vector<std::string> cycle(it, stack.end());
                    std::vector<std::string> key = cycle;
                    std::sort(key.begin(), key.end());
                    if (reported.insert(key).second) {
                        std::string members;
                        for (const std::string& c : cycle) {
                            if (!members.empty()) members += ",";
                            members += c;
                        }
                        error("CircularDefinition", cycle.front(), "{" + members + "}",
                              "subcircuit masters form a definition cycle");
                    }
                }
            }
            stack.pop_back();
            state[mod.name] = 2;
        };
        for (const ModuleDefinition& mod : doc.modules) {
            if (!state.count(mod.name) || state[mod.name] == 0) visit(visit, mod);
        }
    }

    for (const ModuleDefinition& mod : doc.modules) {
        std::set<std::string> declared(mod.external_nodes.begin(), mod.external_nodes.end());
        declared.insert(mod.internal_nodes.begin(), mod.internal_nodes.end());

        std::set<std::string> params;
        params.insert(mod.input_params.begin(), mod.input_params.end());
        std::set<std::string> intrinsics;
        if (mod.submodel) {
            intrinsics.insert(mod.submodel->intrinsic_params.begin(),
                              mod.submodel->intrinsic_params.end());
        }

        // Implied branch-current nodes, visible to sibling bindings.
        std::set<std::string> galv_names;
        for (const InstanceStatement& inst : mod.schematic) {
            const elements::ElementKind* kind = elements::find_kind(inst.master_name);
            if (kind && (kind->needs_galv || inst.galv)) {
                galv_names.insert(galv_node_name(inst.instance_name));
            }
        }

        std::set<std::string> touched;
        detail::UnionFind connectivity;

        for (const InstanceStatement& inst : mod.schematic) {
            const ModuleDefinition* sub = doc.find_module(inst.master_name);
            const elements::ElementKind* kind = elements::find_kind(inst.master_name);

            if (!sub && !kind) {
                error("UndefinedMaster", mod.name, inst.instance_name,
                      "master '" + inst.master_name + "' is neither a module nor a basic element");
            }

            // Node references are checkable regardless of the master.
            std::vector<std::string> bound_nodes;
            for (const auto& [port, node] : inst.node_bindings) {
                if (declared.count(node) || galv_names.count(node) || node == kGroundName) {
                    bound_nodes.push_back(node);
                } else {
                    error("BadNodeReference", mod.name, inst.instance_name,
                          "port '" + port + "' is bound to undeclared node '" + node + "'");
                }
                touched.insert(node);
            }
            if (galv_names.count(galv_node_name(inst.instance_name))) {
                bound_nodes.push_back(galv_node_name(inst.instance_name));
                touched.insert(galv_node_name(inst.instance_name));
            }
            for (std::size_t i = 1; i < bound_nodes.size(); ++i) {
                connectivity.unite(bound_nodes[0], bound_nodes[i]);
            }
            if (!bound_nodes.empty()) connectivity.find(bound_nodes[0]);

            for (const auto& [pname, binding] : inst.param_bindings) {
                if (binding.is_literal) continue;
                const std::string& sym = binding.symbol;
                if (!global_names.count(sym) && !params.count(sym) && !intrinsics.count(sym)) {
                    error("BadParamReference", mod.name, inst.instance_name,
                          "param '" + pname + "' references '" + sym +
                              "', which is not a global, InputParam, or IntrinsicParam");
                }
            }

            // Port/param arity against the resolved master.
            auto check_keys = [&](const std::vector<std::string>& expected,
                                  const std::vector<std::string>& got, const char* what) {
                std::vector<std::string> missing, extra;
                for (const std::string& e : expected) {
                    if (std::find(got.begin(), got.end(), e) == got.end()) missing.push_back(e);
                }
                for (const std::string& g : got) {
                    if (std::find(expected.begin(), expected.end(), g) == expected.end()) {
                        extra.push_back(g);
                    }
                }
                if (missing.empty() && extra.empty()) return;
                std::string msg = std::string(what) + " bindings do not match master '" +
                                  inst.master_name + "'";
                for (const std::string& m : missing) msg += "; missing '" + m + "'";
                for (const std::string& e : extra) msg += "; unexpected '" + e + "'";
                error("PortArityMismatch", mod.name, inst.instance_name, msg);
            };
            std::vector<std::string> got_ports, got_params;
            for (const auto& [port, node] : inst.node_bindings) got_ports.push_back(port);
            for (const auto& [p, b] : inst.param_bindings) got_params.push_back(p);
            if (sub) {
                check_keys(sub->external_nodes, got_ports, "node");
                check_keys(sub->input_params, got_params, "param");
            } else if (kind) {
                check_keys(kind->ports, got_ports, "node");
                check_keys(kind->params, got_params, "param");
            }
        }

        for (const std::string& node : mod.external_nodes) {
            if (!touched.count(node) && node != kGroundName) {
                warning("UnusedNode", mod.name, node, "declared node is touched by no instance");
            }
        }
        for (const std::string& node : mod.internal_nodes) {
            if (!touched.count(node) && node != kGroundName) {
                warning("UnusedNode", mod.name, node, "declared node is touched by no instance");
            }
        }

        // Connected components over nodes actually wired by instances.
        std::map<std::string, std::vector<std::string>> components;
        for (const std::string& node : touched) {
            components[connectivity.find(node)].push_back(node);
        }
        if (components.size() >= 2) {
            std::string repr;
            for (const auto& [root, nodes] : components) {
                if (!repr.empty()) repr += " | ";
                repr += nodes.front();
            }
            warning("DisconnectedComponent", mod.name, repr,
                    "schematic splits into " + std::to_string(components.size()) +
                        " element-connected components");
        }
    }
    return diags;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace detail {

inline jsonio::Value strings_to_json(const std::vector<std::string>& v) {
    jsonio::Array a;
    for (const std::string& s : v) a.emplace_back(s);
    return jsonio::Value(std::move(a));
}

}  // namespace detail

/// Serializes a document back to netlist JSON; parse(print(doc)) == doc.
inline std::string print(const NetlistDocument& doc) {
    jsonio::Value root = jsonio::object();
    root.set("Top", doc.top);
    if (!doc.globals.empty()) {
        jsonio::Value g = jsonio::object();
        for (const auto& [name, value] : doc.globals) g.set(name, value);
        root.set("Globals", std::move(g));
    }
    if (!doc.node_set.empty()) {
        jsonio::Value g = jsonio::object();
        for (const auto& [name, value] : doc.node_set) g.set(name, value);
        root.set("NodeSet", std::move(g));
    }
    for (const ModuleDefinition& mod : doc.modules) {
        jsonio::Value m = jsonio::object();
        m.set("ExternalNodes", detail::strings_to_json(mod.external_nodes));
        m.set("InternalNodes", detail::strings_to_json(mod.internal_nodes));
        m.set("InputParams", detail::strings_to_json(mod.input_params));
        if (mod.submodel) {
            const SubModelSpec& sm = *mod.submodel;
            jsonio::Value s = jsonio::object();
            if (sm.analyses.listed) {
                jsonio::Array a;
                if (sm.analyses.dc) a.emplace_back("DC");
                if (sm.analyses.tran) a.emplace_back("TRAN");
                if (sm.analyses.ac) a.emplace_back("AC");
                s.set("Analysis", jsonio::Value(std::move(a)));
            }
            if (!sm.model_loader.empty()) {
                s.set("ModelLoader", sm.model_loader);
            } else if (sm.kind == SubModelKind::Expression) {
                s.set("Expr", sm.expr);
            } else {
                jsonio::Value t = jsonio::object();
                t.set("Path", sm.table.path);
                if (!sm.table.axis_bindings.empty()) {
                    jsonio::Value ax = jsonio::object();
                    for (const auto& [axis, bind] : sm.table.axis_bindings) ax.set(axis, bind);
                    t.set("Axes", std::move(ax));
                }
                s.set("Table", std::move(t));
            }
            s.set("IntrinsicParams", detail::strings_to_json(sm.intrinsic_params));
            m.set("SubModel", std::move(s));
        }
        jsonio::Value schem = jsonio::object();
        for (const InstanceStatement& inst : mod.schematic) {
            jsonio::Value i = jsonio::object();
            i.set("MasterName", inst.master_name);
            jsonio::Value nodes = jsonio::object();
            for (const auto& [port, node] : inst.node_bindings) nodes.set(port, node);
            i.set("ExternalNodes", std::move(nodes));
            jsonio::Value params = jsonio::object();
            for (const auto& [p, b] : inst.param_bindings) {
                if (b.is_literal) params.set(p, b.literal);
                else params.set(p, b.symbol);
            }
            i.set("InputParams", std::move(params));
            if (inst.galv) i.set("Galv", jsonio::Value(true));
            if (inst.ac_magnitude) i.set("Ac", *inst.ac_magnitude);
            schem.set(inst.instance_name, std::move(i));
        }
        m.set("Schematic", std::move(schem));
        root.set(mod.name, std::move(m));
    }
    return jsonio::to_text(root);
}

}  // namespace gradnet::netlist
