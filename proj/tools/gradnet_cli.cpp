// gradnet command-line front end: lint/compile netlists, run DC/TRAN/AC
// analyses, adjoint sensitivities, device sizing, and the synthetic device
// table generator.
//
// Exit codes: 0 success, 1 domain error (error kind on stderr), 2 usage.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "gradnet/analysis.hpp"
#include "gradnet/compiler.hpp"
#include "gradnet/device_tables.hpp"
#include "gradnet/netlist.hpp"
#include "gradnet/sizing.hpp"

namespace {

using namespace gradnet;

struct CommonArgs {
    std::string netlist_path;
    std::string corner = "tt";
    double temperature = 27.0;
    std::vector<std::string> table_dirs;
    std::string output_path;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_output = true) {
    cmd->add_option("netlist", args.netlist_path, "netlist JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--corner", args.corner, "process corner (tt/ff/ss)");
    cmd->add_option("--temp", args.temperature, "temperature in degrees C");
    cmd->add_option("--tables", args.table_dirs, "extra table search directories");
    if (with_output) {
        cmd->add_option("-o,--output", args.output_path, "write the result to a file");
    }
}

compiler::CompileOptions options_for(const CommonArgs& args) {
    compiler::CompileOptions opt;
    opt.corner = args.corner;
    opt.temperature = args.temperature;
    std::filesystem::path dir = std::filesystem::path(args.netlist_path).parent_path();
    if (!dir.empty()) opt.table_search_paths.push_back(dir.string());
    for (const std::string& d : args.table_dirs) opt.table_search_paths.push_back(d);
    if (const char* env = std::getenv("GRADNET_TABLE_DIR")) {
        opt.table_search_paths.push_back(env);
    }
    opt.table_search_paths.push_back(".");
    return opt;
}

void emit(const CommonArgs& args, const std::string& text) {
    if (!args.output_path.empty()) {
        std::ofstream f(args.output_path, std::ios::binary);
        f << text;
    } else {
        std::cout << text;
    }
}

compiler::Circuit load_circuit(const CommonArgs& args) {
    netlist::NetlistDocument doc = netlist::parse_file(args.netlist_path);
    auto diags = netlist::validate(doc);
    if (netlist::has_errors(diags)) {
        for (const auto& d : diags) std::cerr << d.to_string() << "\n";
        throw SpecError("netlist has validation errors");
    }
    return compiler::instantiate(doc, options_for(args));
}

std::string gradient_json(const compiler::Circuit& ckt, const std::vector<double>& grad,
                          const std::vector<std::string>& wanted) {
    std::string out = "{\n";
    bool first = true;
    for (std::size_t k = 0; k < ckt.rules->globals.size(); ++k) {
        const std::string& name = ckt.rules->globals[k].first;
        if (!wanted.empty() &&
            std::find(wanted.begin(), wanted.end(), name) == wanted.end()) {
            continue;
        }
        if (!first) out += ",\n";
        first = false;
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.17g", grad[k]);
        out += "  \"" + name + "\": " + buf;
    }
    out += "\n}\n";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentiable equations-system constructor for hierarchical circuits"};
    app.require_subcommand(1);

    CommonArgs lint_args, compile_args, op_args, tran_args, ac_args, sense_args, size_args;

    CLI::App* lint = app.add_subcommand("lint", "parse and statically validate a netlist");
    add_common(lint, lint_args, false);

    CLI::App* compile = app.add_subcommand("compile", "compile and instantiate a netlist");
    add_common(compile, compile_args);
    bool dump = false;
    compile->add_flag("--dump", dump, "print node/param index frames per instance");

    CLI::App* op = app.add_subcommand("op", "DC operating point (JSON)");
    add_common(op, op_args);

    CLI::App* tran = app.add_subcommand("tran", "fixed-step transient (CSV)");
    add_common(tran, tran_args);
    double tend = 0.0, dt = 0.0, beta = 1.0;
    std::string ic = "dc";
    tran->add_option("--tend", tend, "end time in seconds")->required();
    tran->add_option("--dt", dt, "time step in seconds")->required();
    tran->add_option("--beta", beta, "integrator: 1 backward Euler, 0.5 trapezoidal");
    tran->add_option("--ic", ic, "initial condition: dc (operating point) or nodeset");

    CLI::App* ac = app.add_subcommand("ac", "AC small-signal sweep (CSV)");
    add_common(ac, ac_args);
    double fstart = 1.0, fstop = 1e6;
    int ppd = 10;
    ac->add_option("--fstart", fstart, "sweep start, Hz")->required();
    ac->add_option("--fstop", fstop, "sweep stop, Hz")->required();
    ac->add_option("--points-per-decade", ppd, "log-spaced points per decade");

    CLI::App* sense = app.add_subcommand("sense", "adjoint DC sensitivities (JSON)");
    add_common(sense, sense_args);
    std::string loss;
    std::vector<std::string> wrt;
    sense->add_option("--loss", loss, "loss, form node:<name>")->required();
    sense->add_option("--wrt", wrt, "globals to report (default: all)")->delimiter(',');

    CLI::App* size = app.add_subcommand("size", "gradient-based device sizing");
    add_common(size, size_args);
    std::string spec_path;
    size->add_option("--spec", spec_path, "sizing spec JSON")->required()->check(
        CLI::ExistingFile);

    CLI::App* gen = app.add_subcommand("gen-tables", "write synthetic MOS device tables");
    std::string gen_out = ".";
    gen->add_option("--out", gen_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*lint) {
            netlist::NetlistDocument doc = netlist::parse_file(lint_args.netlist_path);
            auto diags = netlist::validate(doc);
            for (const auto& d : diags) {
                (d.severity == netlist::Severity::Error ? std::cerr : std::cout)
                    << d.to_string() << "\n";
            }
            if (netlist::has_errors(diags)) return 1;
            std::cout << "ok: " << doc.modules.size() << " modules, top '" << doc.top << "'\n";
            return 0;
        }
        if (*compile) {
            compiler::Circuit ckt = load_circuit(compile_args);
            std::string report = "compiled: " + std::to_string(ckt.instances.size()) +
                                 " instances, N = " + std::to_string(ckt.n_unknowns) + "\n";
            if (dump) report += compiler::dump_indexes(ckt);
            emit(compile_args, report);
            return 0;
        }
        if (*op) {
            compiler::Circuit ckt = load_circuit(op_args);
            analysis::DcResult dc = analysis::solve_dc(ckt);
            emit(op_args, analysis::dc_solution_json(ckt, dc.x));
            return 0;
        }
        if (*tran) {
            compiler::Circuit ckt = load_circuit(tran_args);
            analysis::TransientStepContext ctx;
            ctx.beta = beta;
            ctx.dt = dt;
            analysis::NewtonConfig cfg;
            if (ic == "nodeset") {
                cfg.initial_x.assign(static_cast<std::size_t>(ckt.n_unknowns), 0.0);
                for (const auto& [name, value] : ckt.rules->node_set) {
                    for (int i = 0; i < ckt.n_unknowns; ++i) {
                        if (ckt.node_names[static_cast<std::size_t>(i)] == name) {
                            cfg.initial_x[static_cast<std::size_t>(i)] = value;
                        }
                    }
                }
            }
            analysis::Trajectory traj = analysis::solve_tran(ckt, tend, ctx, cfg);
            emit(tran_args, analysis::tran_csv(ckt, traj));
            return 0;
        }
        if (*ac) {
            if (ppd < 1 || fstart <= 0.0 || fstop < fstart) {
                std::cerr << "UsageError: need fstart > 0, fstop >= fstart, points-per-decade >= 1\n";
                return 2;
            }
            compiler::Circuit ckt = load_circuit(ac_args);
            analysis::DcResult dc = analysis::solve_dc(ckt);
            std::vector<double> freqs;
            for (double f = fstart; f <= fstop * (1.0 + 1e-12);
                 f *= std::pow(10.0, 1.0 / ppd)) {
                freqs.push_back(f);
            }
            emit(ac_args, analysis::ac_sweep_csv(ckt, dc.x, freqs));
            return 0;
        }
        if (*sense) {
            compiler::Circuit ckt = load_circuit(sense_args);
            if (loss.rfind("node:", 0) != 0) {
                std::cerr << "UsageError: --loss must have the form node:<name>\n";
                return 2;
            }
            std::string node = loss.substr(5);
            int idx = -1;
            for (int i = 0; i < ckt.n_unknowns; ++i) {
                if (ckt.node_names[static_cast<std::size_t>(i)] == node) idx = i;
            }
            if (idx < 0) throw SpecError("loss node '" + node + "' not found");
            analysis::DcResult dc = analysis::solve_dc(ckt);
            analysis::SensitivityRequest req;
            req.loss_grad.assign(static_cast<std::size_t>(ckt.n_unknowns), 0.0);
            req.loss_grad[static_cast<std::size_t>(idx)] = 1.0;
            std::vector<double> grad = analysis::dc_sensitivity(ckt, dc.x, req);
            emit(sense_args, gradient_json(ckt, grad, wrt));
            return 0;
        }
        if (*size) {
            netlist::NetlistDocument doc = netlist::parse_file(size_args.netlist_path);
            std::ifstream f(spec_path, std::ios::binary);
            std::ostringstream ss;
            ss << f.rdbuf();
            auto prob = std::make_shared<sizing::SizingProblem>(
                sizing::build_problem(doc, ss.str(), options_for(size_args)));
            sizing::NLPCallbacks cb = sizing::make_callbacks(prob);
            sizing::SizingResult r = sizing::optimize(cb);
            std::vector<double> vars = prob->expand_vars(r.p_opt);
            std::string out = "{\n";
            out += "  \"status\": \"" + std::string(sizing::status_name(r.status)) + "\",\n";
            out += "  \"iterations\": " + std::to_string(r.iterations) + ",\n";
            char buf[48];
            std::snprintf(buf, sizeof(buf), "%.17g", r.objective);
            out += "  \"objective\": " + std::string(buf) + ",\n";
            std::snprintf(buf, sizeof(buf), "%.17g", r.constraint_violation);
            out += "  \"constraint_violation\": " + std::string(buf) + ",\n";
            out += "  \"vars\": {\n";
            for (std::size_t i = 0; i < prob->design_vars.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g", vars[i]);
                out += "    \"" + prob->design_vars[i].name + "\": " + buf;
                out += i + 1 < prob->design_vars.size() ? ",\n" : "\n";
            }
            out += "  }\n}\n";
            emit(size_args, out);
            return r.status == sizing::SizingStatus::Optimal ? 0 : 1;
        }
        if (*gen) {
            std::filesystem::create_directories(gen_out);
            sizing::write_standard_device_tables(gen_out);
            std::cout << "wrote " << gen_out << "/NMOSTYPE.json and " << gen_out
                      << "/PMOSTYPE.json\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "InternalError: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
