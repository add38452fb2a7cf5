#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "gradnet/submodel.hpp"
#include "testutil.hpp"

using namespace gradnet;
using namespace gradnet::submodel;

namespace {

netlist::SubModelSpec expr_spec(const std::string& body, std::vector<std::string> intrinsics) {
    netlist::SubModelSpec spec;
    spec.kind = netlist::SubModelKind::Expression;
    spec.expr = body;
    spec.intrinsic_params = std::move(intrinsics);
    return spec;
}

const std::vector<std::string> kNoNames;

}  // namespace

TEST_CASE("size-dependent resistance expression evaluates with exact Jacobians") {
    std::vector<std::string> signals = {"l", "r"};
    std::vector<std::string> ips = {"Rlength", "Rwidth"};
    CompiledSubModel sm = compile(expr_spec("[1e2*Rlength/Rwidth,]", {"RValue"}), signals, ips);
    CHECK(sm.n_intrinsic() == 1);

    std::vector<double> sig = {0.3, -0.7};
    std::vector<double> ip = {2.0, 4.0};
    SubModelEval r = sm.eval(sig, ip);
    CHECK(r.intrp[0] == doctest::Approx(50.0));
    CHECK(r.J_ip[0][0] == doctest::Approx(25.0));
    CHECK(r.J_ip[0][1] == doctest::Approx(-12.5));
    CHECK(r.J_s[0][0] == 0.0);
    CHECK(r.J_s[0][1] == 0.0);
}

TEST_CASE("constant expression has zero Jacobians") {
    CompiledSubModel sm = compile(expr_spec("[3.0,]", {"k"}), kNoNames, kNoNames);
    SubModelEval r = sm.eval({}, {});
    CHECK(r.intrp[0] == 3.0);
}

TEST_CASE("unbound symbol raises UnboundVariable") {
    CHECK_THROWS_AS((void)compile(expr_spec("[1/Q,]", {"k"}), kNoNames, kNoNames),
                    UnboundVariable);
}

TEST_CASE("expression list arity must match the declared intrinsics") {
    CHECK_THROWS_AS((void)compile(expr_spec("[1.0, 2.0]", {"only"}), kNoNames, kNoNames),
                    ExprParseError);
}

TEST_CASE("expression syntax errors") {
    CHECK_THROWS_AS(parse_expression_list("[1+,]"), ExprParseError);
    CHECK_THROWS_AS(parse_expression_list("1.0"), ExprParseError);
    CHECK_THROWS_AS(parse_expression_list("[sin(1),]"), ExprParseError);
    CHECK_THROWS_AS(parse_expression_list("[min(1),]"), ExprParseError);
    CHECK_THROWS_AS(parse_expression_list("[1,] trailing"), ExprParseError);
}

TEST_CASE("expression grammar corners") {
    // right-associative power, unary minus, trailing comma
    ExprProgram p = parse_expression_list("[-2^2, 2^3^2, min(3, max(1, 2)), pow(2, 10),]");
    auto r = evaluate_with_gradients(p, {});
    CHECK(r.values[0] == doctest::Approx(-4.0));
    CHECK(r.values[1] == doctest::Approx(512.0));
    CHECK(r.values[2] == doctest::Approx(2.0));
    CHECK(r.values[3] == doctest::Approx(1024.0));
}

TEST_CASE("domain failures raise EvalDomainError") {
    std::vector<std::string> ips = {"a"};
    CompiledSubModel logneg = compile(expr_spec("[log(a),]", {"k"}), kNoNames, ips);
    CHECK_THROWS_AS((void)logneg.eval({}, std::vector<double>{-1.0}), EvalDomainError);
    CompiledSubModel divzero = compile(expr_spec("[1/a,]", {"k"}), kNoNames, ips);
    CHECK_THROWS_AS((void)divzero.eval({}, std::vector<double>{0.0}), EvalDomainError);
}

TEST_CASE("expression Jacobians match central finite differences") {
    std::vector<std::string> signals = {"u", "v"};
    std::vector<std::string> ips = {"a", "b"};
    CompiledSubModel sm = compile(
        expr_spec("[exp(0.3*u)*tanh(v) + a^2/b, sqrt(abs(u)+1.5) + min(a, b)*v,]", {"y0", "y1"}),
        signals, ips);

    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(0.4, 1.7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> sig = {dist(rng), dist(rng)};
        std::vector<double> ip = {dist(rng), dist(rng)};
        SubModelEval r = sm.eval(sig, ip);
        const double h = 1e-6;
        for (int k = 0; k < 2; ++k) {
            for (int wrt = 0; wrt < 4; ++wrt) {
                auto sp = sig;
                auto sm2 = sig;
                auto ipp = ip;
                auto ipm = ip;
                double step = h * (1.0 + std::abs(wrt < 2 ? sig[wrt] : ip[wrt - 2]));
                if (wrt < 2) {
                    sp[wrt] += step;
                    sm2[wrt] -= step;
                } else {
                    ipp[wrt - 2] += step;
                    ipm[wrt - 2] -= step;
                }
                double fp = sm.eval(sp, ipp).intrp[static_cast<std::size_t>(k)];
                double fm = sm.eval(sm2, ipm).intrp[static_cast<std::size_t>(k)];
                double fd = (fp - fm) / (2 * step);
                double an = wrt < 2 ? r.J_s[static_cast<std::size_t>(k)][static_cast<std::size_t>(wrt)]
                                    : r.J_ip[static_cast<std::size_t>(k)][static_cast<std::size_t>(wrt - 2)];
                CHECK(testutil::rel_close(an, fd, 1e-6, 1e-6));
            }
        }
    }
}

namespace {

InterpTable table_1d(std::vector<double> grid, std::vector<double> values,
                     const std::string& bind = "v") {
    InterpTable t;
    t.corner = "tt";
    t.temperature = 27.0;
    t.axes.push_back({"v", bind, std::move(grid)});
    t.slab_names = {"f"};
    t.slabs = {std::move(values)};
    t.check();
    return t;
}

}  // namespace

TEST_CASE("1-axis table reproduces f(v)=v^2 and its slope") {
    std::vector<double> grid = {0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> vals;
    for (double g : grid) vals.push_back(g * g);
    InterpTable t = table_1d(grid, vals);

    TableEval e = t.eval(std::vector<double>{1.0});
    CHECK(e.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(e.d_axis[0][0] - 2.0) <= 0.05);

    // interpolates every grid point exactly
    for (double g : grid) {
        TableEval ge = t.eval(std::vector<double>{g});
        CHECK(ge.values[0] == doctest::Approx(g * g).epsilon(1e-12));
    }
}

TEST_CASE("interpolant is C1 across cell boundaries") {
    std::vector<double> grid = {0.0, 0.3, 1.0, 1.4, 2.5, 3.0};
    std::vector<double> vals;
    for (double g : grid) vals.push_back(std::sin(1.3 * g) + 0.2 * g * g);
    InterpTable t = table_1d(grid, vals);
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
        TableEval lo = t.eval(std::vector<double>{grid[i] - 1e-9});
        TableEval hi = t.eval(std::vector<double>{grid[i] + 1e-9});
        CHECK(std::abs(lo.d_axis[0][0] - hi.d_axis[0][0]) < 1e-6);
        CHECK(std::abs(lo.values[0] - hi.values[0]) < 1e-7);
    }
}

TEST_CASE("out-of-hull queries clamp with zero slope and count") {
    InterpTable t = table_1d({0.0, 1.0, 2.0, 3.0}, {1.0, 2.0, 5.0, 10.0});
    auto before = table_clamp_counter().load();
    TableEval e = t.eval(std::vector<double>{-4.0});
    CHECK(e.values[0] == doctest::Approx(1.0));
    CHECK(e.d_axis[0][0] == 0.0);
    TableEval e2 = t.eval(std::vector<double>{99.0});
    CHECK(e2.values[0] == doctest::Approx(10.0));
    CHECK(table_clamp_counter().load() >= before + 2);
}

TEST_CASE("table submodel chains axis bindings into J_s and J_ip") {
    // f(vgs, w) = vgs^2 * w over axes vgs = gate-source, w = W
    InterpTable t;
    t.corner = "tt";
    t.temperature = 27.0;
    t.axes.push_back({"Vgs", "gate-source", {-1.0, 0.0, 1.0, 2.0, 3.0}});
    t.axes.push_back({"W", "W", {1.0, 2.0, 3.0, 4.0}});
    t.slab_names = {"f"};
    std::vector<double> slab;
    for (double vg : t.axes[0].grid) {
        for (double w : t.axes[1].grid) slab.push_back(vg * vg * w);
    }
    t.slabs = {slab};
    t.check();

    CompiledSubModel sm;
    sm.kind = netlist::SubModelKind::LookupTable;
    sm.intrinsic_names = {"f"};
    sm.arity_signals = 2;  // gate, source
    sm.arity_ip = 1;       // W
    sm.table_ = std::make_shared<InterpTable>(t);
    std::vector<std::string> signals = {"gate", "source"};
    std::vector<std::string> ips = {"W"};
    sm.bindings_.push_back(smdetail::resolve_binding("gate-source", signals, ips));
    sm.bindings_.push_back(smdetail::resolve_binding("W", signals, ips));
    sm.slab_map_ = {0};

    std::vector<double> sig = {1.5, 0.5};  // vgs = 1.0, a grid point
    std::vector<double> ip = {2.0};
    SubModelEval r = sm.eval(sig, ip);
    CHECK(r.intrp[0] == doctest::Approx(2.0).epsilon(1e-9));  // 1^2*2
    // d/dgate = 2*vgs*w = 4, d/dsource = -4, d/dW = vgs^2 = 1
    CHECK(std::abs(r.J_s[0][0] - 4.0) < 0.2);
    CHECK(std::abs(r.J_s[0][1] + 4.0) < 0.2);
    CHECK(std::abs(r.J_ip[0][0] - 1.0) < 1e-9);
    CHECK(r.J_s[0][0] == doctest::Approx(-r.J_s[0][1]));
}

TEST_CASE("table Jacobians match finite differences inside the hull") {
    InterpTable t;
    t.corner = "tt";
    t.temperature = 27.0;
    std::vector<double> ga, gb;
    for (int i = 0; i < 7; ++i) ga.push_back(0.1 * i * i + 0.4 * i);
    for (int i = 0; i < 5; ++i) gb.push_back(0.5 * i);
    t.axes.push_back({"a", "a", ga});
    t.axes.push_back({"b", "b", gb});
    t.slab_names = {"f"};
    std::vector<double> slab;
    for (double a : ga) {
        for (double b : gb) slab.push_back(std::exp(-0.3 * a) * (b * b + 1.0));
    }
    t.slabs = {slab};
    t.check();

    std::mt19937 rng(21);
    std::uniform_real_distribution<double> da(ga.front() + 0.05, ga.back() - 0.05);
    std::uniform_real_distribution<double> db(gb.front() + 0.05, gb.back() - 0.05);
    for (int trial = 0; trial < 100; ++trial) {
        double a = da(rng), b = db(rng);
        TableEval e = t.eval(std::vector<double>{a, b});
        const double h = 1e-6;
        TableEval ap = t.eval(std::vector<double>{a + h, b});
        TableEval am = t.eval(std::vector<double>{a - h, b});
        TableEval bp = t.eval(std::vector<double>{a, b + h});
        TableEval bm = t.eval(std::vector<double>{a, b - h});
        CHECK(testutil::rel_close(e.d_axis[0][0], (ap.values[0] - am.values[0]) / (2 * h), 1e-4,
                                  1e-6));
        CHECK(testutil::rel_close(e.d_axis[0][1], (bp.values[0] - bm.values[0]) / (2 * h), 1e-4,
                                  1e-6));
    }
}

TEST_CASE("table file round trip with corner selection and base64") {
    namespace fs = std::filesystem;
    fs::create_directories(GRADNET_WORK_DIR);
    std::string path = std::string(GRADNET_WORK_DIR) + "/toy_table.json";

    std::vector<double> payload = {1.0, 2.0, 4.5, 8.25};
    jsonio::Value root = jsonio::object();
    jsonio::Value tables = jsonio::array();
    auto make_entry = [&](const std::string& corner, double temp, bool b64) {
        jsonio::Value e = jsonio::object();
        e.set("Corner", corner);
        e.set("Temperature", temp);
        jsonio::Value axes = jsonio::array();
        jsonio::Value ax = jsonio::object();
        ax.set("Name", "v");
        ax.set("Binds", "v");
        jsonio::Value grid = jsonio::array();
        for (double g : {0.0, 1.0, 2.0, 3.0}) grid.as_array().emplace_back(g);
        ax.set("Grid", std::move(grid));
        axes.as_array().push_back(std::move(ax));
        e.set("Axes", std::move(axes));
        jsonio::Value names = jsonio::array();
        names.as_array().emplace_back("f");
        e.set("IntrinsicParams", std::move(names));
        if (b64) {
            jsonio::Value slabs = jsonio::array();
            slabs.as_array().emplace_back(tabledetail::encode_base64_doubles(payload));
            e.set("ValuesBase64", std::move(slabs));
        } else {
            jsonio::Value slabs = jsonio::array();
            jsonio::Value slab = jsonio::array();
            for (double v : payload) slab.as_array().emplace_back(v);
            slabs.as_array().push_back(std::move(slab));
            e.set("Values", std::move(slabs));
        }
        return e;
    };
    tables.as_array().push_back(make_entry("tt", 27.0, false));
    tables.as_array().push_back(make_entry("ss", 125.0, true));
    root.set("Tables", std::move(tables));
    std::ofstream(path) << jsonio::to_text(root);

    InterpTable tt = load_table(path, "tt", 27.0);
    CHECK(tt.slabs[0] == payload);
    InterpTable ss = load_table(path, "ss", 125.0);
    CHECK(ss.slabs[0] == payload);
    CHECK_THROWS_AS((void)load_table(path, "xx", 27.0), TableNotFound);
    CHECK_THROWS_AS((void)load_table(path, "tt", 125.0), TableNotFound);
}

TEST_CASE("eval is pure: identical inputs give identical outputs") {
    std::vector<std::string> ips = {"a"};
    CompiledSubModel sm = compile(expr_spec("[a*a + exp(a),]", {"k"}), kNoNames, ips);
    auto r1 = sm.eval({}, std::vector<double>{1.25});
    auto r2 = sm.eval({}, std::vector<double>{1.25});
    CHECK(r1.intrp[0] == r2.intrp[0]);
    CHECK(r1.J_ip[0][0] == r2.J_ip[0][0]);
}
