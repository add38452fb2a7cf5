#include <doctest.h>

#include <filesystem>
#include <set>

#include "gradnet/compiler.hpp"
#include "gradnet/device_tables.hpp"

using namespace gradnet;
using namespace gradnet::compiler;

namespace {

std::string fixture(const std::string& name) {
    return std::string(GRADNET_NETLIST_DIR) + "/" + name;
}

/// Ensures NMOSTYPE.json / PMOSTYPE.json exist in the work dir; returns it.
const std::string& table_dir() {
    static const std::string dir = [] {
        std::string d = std::string(GRADNET_WORK_DIR) + "/tables";
        std::filesystem::create_directories(d);
        if (!std::filesystem::exists(d + "/NMOSTYPE.json")) {
            sizing::write_standard_device_tables(d);
        }
        return d;
    }();
    return dir;
}

CompileOptions with_tables() {
    CompileOptions opt;
    opt.table_search_paths = {table_dir()};
    return opt;
}

}  // namespace

TEST_CASE("SizeDepResistor compiles to the documented frame layout") {
    // Standalone document: no globals, so the frame is [ip, intrp] only.
    auto doc = netlist::parse(R"({
        "Top": "t",
        "t": {"ExternalNodes": [], "InternalNodes": [], "InputParams": [], "Schematic": {}},
        "SizeDepResistor":{
          "ExternalNodes":["l","r"],
          "InputParams":["Rlength","Rwidth"],
          "InternalNodes":[],
          "SubModel":{"Expr":"[1e2*Rlength/Rwidth,]","IntrinsicParams":["RValue"]},
          "Schematic":{
            "instanceR":{"MasterName":"resistor",
                         "ExternalNodes":{"left":"l","right":"r"},
                         "InputParams":{"resistance":"RValue"}}}}
    })");
    RuleSet rs = compile_rules(doc);
    const CompiledRule* r = rs.find("SizeDepResistor");
    REQUIRE(r != nullptr);
    CHECK(r->n_ip() == 2);
    CHECK(r->ip_names == std::vector<std::string>{"Rlength", "Rwidth"});
    CHECK(r->intrinsic_names == std::vector<std::string>{"RValue"});
    CHECK(r->param_frame_size() == 3);
    REQUIRE(r->elems.size() == 1);
    CHECK(r->elems[0].kind->name == "resistor");
    CHECK(r->elems[0].node_slots == std::vector<int>{0, 1});
    CHECK(r->elems[0].param_slots == std::vector<int>{2});  // the RValue intrinsic slot
    CHECK(r->classify(2).kind == SlotKind::Intrinsic);
}

TEST_CASE("VS instance appends a GALV slot to the internal node list") {
    auto doc = netlist::parse_file(fixture("divider.json"));
    RuleSet rs = compile_rules(doc);
    const CompiledRule* r = rs.find("divider");
    REQUIRE(r != nullptr);
    CHECK(r->n_declared_internal == 2);
    REQUIRE(r->n_internal() == 3);
    CHECK(r->internal_node_names[2] == "vs#i");
    REQUIRE(r->elems.size() == 3);
    CHECK(r->elems[0].kind->name == "VS");
    CHECK(r->elems[0].node_slots.size() == 3);
}

TEST_CASE("literal params land in the constants segment") {
    auto doc = netlist::parse(R"({
        "Top": "m",
        "m": {"ExternalNodes": [], "InternalNodes": ["a"], "InputParams": [],
              "Schematic": {
                "r": {"MasterName": "resistor",
                      "ExternalNodes": {"left": "a", "right": "gnd"},
                      "InputParams": {"resistance": 50.0}}}}
    })");
    RuleSet rs = compile_rules(doc);
    const CompiledRule* r = rs.find("m");
    REQUIRE(r->constants.size() == 1);
    CHECK(r->constants[0] == 50.0);
    int slot = r->elems[0].param_slots[0];
    CHECK(r->classify(slot).kind == SlotKind::Constant);
    CHECK(r->classify(slot).index == 0);
}

TEST_CASE("depth-first index assignment") {
    auto doc = netlist::parse(R"({
        "Top": "top",
        "M": {"ExternalNodes": ["p"], "InternalNodes": ["u", "v"], "InputParams": [],
              "Schematic": {
                "r1": {"MasterName": "resistor", "ExternalNodes": {"left": "p", "right": "u"},
                       "InputParams": {"resistance": 1.0}},
                "r2": {"MasterName": "resistor", "ExternalNodes": {"left": "u", "right": "v"},
                       "InputParams": {"resistance": 1.0}},
                "r3": {"MasterName": "resistor", "ExternalNodes": {"left": "v", "right": "gnd"},
                       "InputParams": {"resistance": 1.0}}}},
        "top": {"ExternalNodes": [], "InternalNodes": ["t"], "InputParams": [],
              "Schematic": {
                "m1": {"MasterName": "M", "ExternalNodes": {"p": "t"}, "InputParams": {}},
                "m2": {"MasterName": "M", "ExternalNodes": {"p": "t"}, "InputParams": {}},
                "rt": {"MasterName": "resistor", "ExternalNodes": {"left": "t", "right": "gnd"},
                       "InputParams": {"resistance": 1.0}}}}
    })");
    Circuit ckt = instantiate(doc);
    CHECK(ckt.n_unknowns == 5);
    REQUIRE(ckt.top->subckts.size() == 2);
    CHECK(ckt.top->node_frame == std::vector<int>{0});
    CHECK(std::vector<int>(ckt.top->subckts[0]->internal_nodes().begin(),
                           ckt.top->subckts[0]->internal_nodes().end()) ==
          std::vector<int>{1, 2});
    CHECK(std::vector<int>(ckt.top->subckts[1]->internal_nodes().begin(),
                           ckt.top->subckts[1]->internal_nodes().end()) ==
          std::vector<int>{3, 4});
    CHECK(ckt.node_names[0] == "t");
    CHECK(ckt.node_names[1] == "m1.u");
    CHECK(ckt.node_names[4] == "m2.v");
}

TEST_CASE("empty top instantiates to N=0") {
    auto doc = netlist::parse(R"({
        "Top": "t",
        "t": {"ExternalNodes": [], "InternalNodes": [], "InputParams": [], "Schematic": {}}
    })");
    Circuit ckt = instantiate(doc);
    CHECK(ckt.n_unknowns == 0);
    CHECK(ckt.top->subckts.empty());
}

TEST_CASE("top with external nodes is rejected") {
    auto doc = netlist::parse(R"({
        "Top": "t",
        "t": {"ExternalNodes": ["p"], "InternalNodes": [], "InputParams": [], "Schematic": {}}
    })");
    CHECK_THROWS_AS((void)instantiate(doc), TopHasExternalNodes);
}

TEST_CASE("NMOSTYPE contributes zero internal unknowns") {
    auto doc = netlist::parse_file(fixture("nmos_common_source.json"));
    Circuit ckt = instantiate(doc, with_tables());
    const SubcircuitInstance* m1 = ckt.find_instance("m1");
    REQUIRE(m1 != nullptr);
    CHECK(m1->internal_nodes().empty());
    // vdd, g, out + two VS branch currents
    CHECK(ckt.n_unknowns == 5);
    // The ModelLoader string resolved to the NMOSTYPE.json synthetic table.
    REQUIRE(m1->rule->submodel.has_value());
    REQUIRE(m1->rule->submodel->table() != nullptr);
    CHECK(m1->rule->submodel->table()->axes.size() == 5);
}

TEST_CASE("index disjointness across the corpus") {
    for (const char* name :
         {"sizedep_divider.json", "divider.json", "rc_lowpass.json", "rlc.json",
          "controlled_sources.json", "nested3.json", "galv_resistor.json",
          "nmos_common_source.json"}) {
        CAPTURE(name);
        auto doc = netlist::parse_file(fixture(name));
        Circuit ckt = instantiate(doc, with_tables());
        std::set<int> seen;
        for (const SubcircuitInstance* inst : ckt.instances) {
            for (int idx : inst->internal_nodes()) {
                if (idx == kGroundIndex) continue;
                CHECK(seen.insert(idx).second);  // disjoint
            }
        }
        CHECK(static_cast<int>(seen.size()) == ckt.n_unknowns);
        if (!seen.empty()) {
            CHECK(*seen.begin() == 0);
            CHECK(*seen.rbegin() == ckt.n_unknowns - 1);
        }
        // determinism
        Circuit ckt2 = instantiate(doc, with_tables());
        CHECK(ckt2.n_unknowns == ckt.n_unknowns);
        CHECK(ckt2.node_names == ckt.node_names);
        CHECK(dump_indexes(ckt2) == dump_indexes(ckt));
    }
}

TEST_CASE("instantiate honors a nonzero starting offset") {
    auto doc = netlist::parse_file(fixture("divider.json"));
    auto rules = std::make_shared<RuleSet>(compile_rules(doc));
    Circuit ckt = instantiate(rules, 10);
    CHECK(ckt.top->node_frame == std::vector<int>{10, 11, 12});
    CHECK(ckt.n_unknowns == 13);
}

TEST_CASE("dump-indexes report lists one line per instance path") {
    auto doc = netlist::parse_file(fixture("sizedep_divider.json"));
    Circuit ckt = instantiate(doc);
    std::string dump = dump_indexes(ckt);
    CHECK(dump.find("(top) master=harness") != std::string::npos);
    CHECK(dump.find("xr master=SizeDepResistor") != std::string::npos);
    CHECK(dump.find("intrp:RValue@2") != std::string::npos);
    CHECK(dump.find("gv:Rlength@3") != std::string::npos);
}

TEST_CASE("flatten resolves SizeDepResistor into a single composed resistor") {
    auto doc = netlist::parse_file(fixture("sizedep_divider.json"));
    Circuit ckt = instantiate(doc);
    FlatCircuit flat = flatten(ckt);
    REQUIRE(flat.elements.size() == 3);  // vs, rtop, xr.instanceR
    const FlatElement* xr = nullptr;
    for (const FlatElement& e : flat.elements) {
        if (e.path == "xr.instanceR") xr = &e;
    }
    REQUIRE(xr != nullptr);
    REQUIRE(xr->params.size() == 1);
    CHECK(xr->params[0]->kind == FlatParamExpr::Kind::SubModelOut);

    // Evaluate the composed expression via one flat_eval at a known point:
    // mid = 1 V, everything else 0 -> resistor current mid->gnd = 1/200.
    std::vector<double> x(static_cast<std::size_t>(ckt.n_unknowns), 0.0);
    // node order: in=0, mid=1, vs#i=2
    x[1] = 1.0;
    FlatEvalResult r = flat_eval(flat, x, elements::Analysis::Dc);
    auto f = r.F.to_dense(ckt.n_unknowns);
    // F[mid] gets -1/200 from the SizeDepResistor plus 1/200*... from rtop
    // (in - mid)/200 arriving: -(1-0)... rtop: left=in right=mid: F[mid]=+ (x_in-x_mid)/200 = -1/200.
    CHECK(f[1] == doctest::Approx(-1.0 / 200.0 - 1.0 / 200.0));
}

TEST_CASE("nested pass-through modules flatten to identity bindings") {
    auto doc = netlist::parse(R"({
        "Top": "top",
        "inner": {"ExternalNodes": ["a", "b"], "InternalNodes": [], "InputParams": ["cv"],
          "Schematic": {
            "c": {"MasterName": "capacitor", "ExternalNodes": {"input": "a", "output": "b"},
                  "InputParams": {"capacitance": "cv"}}}},
        "outer": {"ExternalNodes": ["p", "q"], "InternalNodes": [], "InputParams": ["cv"],
          "Schematic": {
            "i": {"MasterName": "inner", "ExternalNodes": {"a": "p", "b": "q"},
                  "InputParams": {"cv": "cv"}}}},
        "top": {"ExternalNodes": [], "InternalNodes": ["n1", "n2"], "InputParams": [],
          "Schematic": {
            "o": {"MasterName": "outer", "ExternalNodes": {"p": "n1", "q": "n2"},
                  "InputParams": {"cv": 1e-9}}}}
    })");
    Circuit ckt = instantiate(doc);
    FlatCircuit flat = flatten(ckt);
    REQUIRE(flat.elements.size() == 1);
    CHECK(flat.elements[0].kind->name == "capacitor");
    CHECK(flat.elements[0].nodes == std::vector<int>{0, 1});
    CHECK(flat.elements[0].params[0]->kind == FlatParamExpr::Kind::Const);
    CHECK(flat.elements[0].params[0]->value == 1e-9);
}
