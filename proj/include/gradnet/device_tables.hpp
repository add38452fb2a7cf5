#pragma once

// Synthetic square-law MOSFET lookup tables for the sizing demos and device
// tests. The generator is the oracle: a smooth unified drain-current formula
//
//   vth   = vth0 + gamma*(sqrt(phi2+vsb) - sqrt(phi2)) - sce_v0*exp(-L/sce_l0)
//           + tempco*(T - 27)
//   vov_s = ssat * softplus((vgs - vth)/ssat)
//   id    = 0.5*kp_c*(W/L)*vov_s^2*(1 + lambda*vds)*tanh(alpha*vds/vov_s)
//
// with GM/GDS/GMB as its exact analytic partials (via 3-direction duals),
// area-scaled capacitances, and a VTH slab. Corners shift mobility by +-10%
// (ff/ss); temperature shifts vth by -2 mV/C.
//
// PMOS tables reuse the same formulas; their axes bind to the opposite
// terminal differences (source-gate, source-drain, bulk-source).

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gradnet/jsonio.hpp"
#include "gradnet/submodel.hpp"

namespace gradnet::sizing {

struct MosModelParams {
    double kp = 2e-4;        // A/V^2
    double vth0 = 0.5;       // V
    double lambda = 0.1;     // 1/V
    double gamma = 0.3;      // sqrt(V)
    double phi2 = 0.7;       // V
    double ssat = 0.08;      // V, softplus smoothing
    double alpha_sat = 1.4;  // tanh steepness
    double tempco = -2e-3;   // V/C
    double sce_v0 = 0.03;    // V, short-channel vth reduction
    double sce_l0 = 0.5e-6;  // m
    double cox_area = 8e-3;  // F/m^2
    double cgs_frac = 2.0 / 3.0;
    double cov_per_w = 2e-10;  // F/m
    double cj_per_w = 3e-10;   // F/m

    static MosModelParams nmos() { return {}; }
    static MosModelParams pmos() {
        MosModelParams p;
        p.kp = 8e-5;
        return p;
    }
};

struct MosTableGrids {
    std::vector<double> vgs = {-0.8, -0.3, 0.1, 0.35, 0.6, 0.85, 1.15, 1.6, 2.2};
    std::vector<double> vds = {-1.0, -0.3, 0.0, 0.4, 0.9, 1.6, 2.6, 4.0, 6.2};
    std::vector<double> vsb = {-0.6, 0.0, 0.8, 2.4};
    std::vector<double> mos_l = {0.5e-6, 1e-6, 2e-6, 4e-6};
    std::vector<double> mos_w = {2e-6, 8e-6, 2e-5, 5e-5};
};

inline const std::vector<std::string>& mos_slab_names() {
    static const std::vector<std::string> names = {"ID",  "GDS", "CDD", "CSS", "CGG",
                                                   "CGS", "CGD", "GM",  "GMB", "VTH"};
    return names;
}

inline const std::vector<std::pair<std::string, double>>& pvt_grid() {
    static const std::vector<std::pair<std::string, double>> grid = {
        {"tt", 27.0}, {"tt", -40.0}, {"tt", 125.0}, {"ff", 27.0}, {"ff", -40.0},
        {"ff", 125.0}, {"ss", 27.0}, {"ss", -40.0}, {"ss", 125.0}};
    return grid;
}

namespace devicedetail {

// Value with partials against (vgs, vds, vsb).
struct Dual3 {
    double v = 0.0;
    std::array<double, 3> d{0.0, 0.0, 0.0};

    Dual3() = default;
    Dual3(double val) : v(val) {}
    static Dual3 var(double val, int slot) {
        Dual3 r(val);
        r.d[static_cast<std::size_t>(slot)] = 1.0;
        return r;
    }
};

inline Dual3 operator+(Dual3 a, const Dual3& b) {
    a.v += b.v;
    for (int i = 0; i < 3; ++i) a.d[i] += b.d[i];
    return a;
}
inline Dual3 operator-(Dual3 a, const Dual3& b) {
    a.v -= b.v;
    for (int i = 0; i < 3; ++i) a.d[i] -= b.d[i];
    return a;
}
inline Dual3 operator*(const Dual3& a, const Dual3& b) {
    Dual3 r(a.v * b.v);
    for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
}
inline Dual3 operator/(const Dual3& a, const Dual3& b) {
    Dual3 r(a.v / b.v);
    for (int i = 0; i < 3; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) / b.v;
    return r;
}
inline Dual3 sqrt(const Dual3& a) {
    Dual3 r(std::sqrt(a.v));
    for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] * 0.5 / r.v;
    return r;
}
inline Dual3 tanh(const Dual3& a) {
    Dual3 r(std::tanh(a.v));
    double s = 1.0 - r.v * r.v;
    for (int i = 0; i < 3; ++i) r.d[i] = s * a.d[i];
    return r;
}
inline Dual3 softplus(const Dual3& a) {
    // Numerically stable ln(1+exp(x)).
    double v = a.v > 30.0 ? a.v : std::log1p(std::exp(a.v));
    double s = 1.0 / (1.0 + std::exp(-a.v));
    Dual3 r(v);
    for (int i = 0; i < 3; ++i) r.d[i] = s * a.d[i];
    return r;
}

struct MosPoint {
    double id, gds, cdd, css, cgg, cgs, cgd, gm, gmb, vth;
};

inline MosPoint mos_point(const MosModelParams& p, double mu_factor, double temperature,
                          double vgs_v, double vds_v, double vsb_v, double l, double w) {
    Dual3 vgs = Dual3::var(vgs_v, 0);
    Dual3 vds = Dual3::var(vds_v, 1);
    Dual3 vsb = Dual3::var(vsb_v, 2);

    Dual3 vth = Dual3(p.vth0) + Dual3(p.gamma) * (sqrt(Dual3(p.phi2) + vsb) - Dual3(std::sqrt(p.phi2)));
    vth = vth - Dual3(p.sce_v0 * std::exp(-l / p.sce_l0));
    vth = vth + Dual3(p.tempco * (temperature - 27.0));

    Dual3 vov_s = Dual3(p.ssat) * softplus((vgs - vth) / Dual3(p.ssat));
    Dual3 sat = tanh(Dual3(p.alpha_sat) * vds / vov_s);
    Dual3 id = Dual3(0.5 * p.kp * mu_factor * w / l) * vov_s * vov_s *
               (Dual3(1.0) + Dual3(p.lambda) * vds) * sat;

    MosPoint out;
    out.id = id.v;
    out.gm = id.d[0];
    out.gds = id.d[1];
    out.gmb = -id.d[2];  // against v_bs, the reverse of the vsb axis
    out.vth = vth.v;
    out.cgg = p.cox_area * w * l;
    out.cgs = p.cgs_frac * out.cgg;
    out.cgd = p.cov_per_w * w;
    out.cdd = p.cj_per_w * w;
    out.css = p.cj_per_w * w;
    return out;
}

}  // namespace devicedetail

inline double corner_mu_factor(const std::string& corner) {
    if (corner == "ff") return 1.10;
    if (corner == "ss") return 0.90;
    return 1.0;
}

/// One in-memory table for (corner, temperature).
inline submodel::InterpTable make_mos_table(const MosModelParams& params, bool pmos,
                                            const std::string& corner, double temperature,
                                            const MosTableGrids& grids = {}) {
    submodel::InterpTable t;
    t.corner = corner;
    t.temperature = temperature;
    if (pmos) {
        t.axes = {{"Vgs", "source-gate", grids.vgs},
                  {"Vds", "source-drain", grids.vds},
                  {"Vsb", "bulk-source", grids.vsb},
                  {"MosL", "MosL", grids.mos_l},
                  {"MosW", "MosW", grids.mos_w}};
    } else {
        t.axes = {{"Vgs", "gate-source", grids.vgs},
                  {"Vds", "drain-source", grids.vds},
                  {"Vsb", "source-bulk", grids.vsb},
                  {"MosL", "MosL", grids.mos_l},
                  {"MosW", "MosW", grids.mos_w}};
    }
    t.slab_names = mos_slab_names();
    const double mu = corner_mu_factor(corner);
    const std::size_t total = grids.vgs.size() * grids.vds.size() * grids.vsb.size() *
                              grids.mos_l.size() * grids.mos_w.size();
    t.slabs.assign(t.slab_names.size(), std::vector<double>(total));
    std::size_t flat = 0;
    for (double vgs : grids.vgs) {
        for (double vds : grids.vds) {
            for (double vsb : grids.vsb) {
                for (double l : grids.mos_l) {
                    for (double w : grids.mos_w) {
                        devicedetail::MosPoint pt =
                            devicedetail::mos_point(params, mu, temperature, vgs, vds, vsb, l, w);
                        const double vals[10] = {pt.id,  pt.gds, pt.cdd, pt.css, pt.cgg,
                                                 pt.cgs, pt.cgd, pt.gm,  pt.gmb, pt.vth};
                        for (std::size_t s = 0; s < 10; ++s) t.slabs[s][flat] = vals[s];
                        ++flat;
                    }
                }
            }
        }
    }
    t.check();
    return t;
}

/// Writes the 9-corner PVT table file for one device master.
inline void write_mos_table_file(const std::string& path, const std::string& master, bool pmos,
                                 const MosModelParams& params, const MosTableGrids& grids = {}) {
    jsonio::Value root = jsonio::object();
    root.set("Name", master);
    jsonio::Value tables = jsonio::array();
    for (const auto& [corner, temperature] : pvt_grid()) {
        submodel::InterpTable t = make_mos_table(params, pmos, corner, temperature, grids);
        jsonio::Value e = jsonio::object();
        e.set("Corner", corner);
        e.set("Temperature", temperature);
        jsonio::Value axes = jsonio::array();
        for (const submodel::TableAxis& ax : t.axes) {
            jsonio::Value a = jsonio::object();
            a.set("Name", ax.name);
            a.set("Binds", ax.binds);
            jsonio::Value grid = jsonio::array();
            for (double g : ax.grid) grid.as_array().emplace_back(g);
            a.set("Grid", std::move(grid));
            axes.as_array().push_back(std::move(a));
        }
        e.set("Axes", std::move(axes));
        jsonio::Value names = jsonio::array();
        for (const std::string& n : t.slab_names) names.as_array().emplace_back(n);
        e.set("IntrinsicParams", std::move(names));
        jsonio::Value slabs = jsonio::array();
        for (const std::vector<double>& slab : t.slabs) {
            slabs.as_array().emplace_back(submodel::tabledetail::encode_base64_doubles(slab));
        }
        e.set("ValuesBase64", std::move(slabs));
        tables.as_array().push_back(std::move(e));
    }
    root.set("Tables", std::move(tables));
    std::ofstream f(path, std::ios::binary);
    f << jsonio::to_text(root);
}

/// Writes NMOSTYPE.json and PMOSTYPE.json into a directory.
inline void write_standard_device_tables(const std::string& dir) {
    write_mos_table_file(dir + "/NMOSTYPE.json", "NMOSTYPE", false, MosModelParams::nmos());
    write_mos_table_file(dir + "/PMOSTYPE.json", "PMOSTYPE", true, MosModelParams::pmos());
}

}  // namespace gradnet::sizing
