#pragma once

// Basic element catalog and per-analysis stamps.
//
// Sign conventions (documented in README):
//   - F[n] accumulates the current arriving at node n from the element, so a
//     resistor stamps F = [(l, -(x_l-x_r)/R), (r, +(x_l-x_r)/R)].
//   - Q is the dynamic counterpart on the same rows; d/dt Q + F = 0 is the
//     node equation, which puts Q[in] = -C*(x_in-x_out) for a capacitor.
//   - A branch-current unknown (GALV node) of a two-terminal element measures
//     the internal current from the first port to the second.
//   - VS `voltage` is V(input) - V(output); its branch row is
//     x_out - x_in + V.
//   - CS drives `current` from input to output inside the source; ICS is
//     flipped (positive dc/ac flows output->input internally) so that an NMOS
//     wired input=source, output=drain draws a conventional positive drain
//     current.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradnet/errors.hpp"
#include "gradnet/sparse.hpp"

namespace gradnet::elements {

enum class Analysis {
    Dc,
    Tran,
    AcBuild,     // linear small-signal parts only (A-matrix assembly)
    AcStimulus,  // AC right-hand-side pattern only
};

inline const char* analysis_name(Analysis a) {
    switch (a) {
        case Analysis::Dc: return "DC";
        case Analysis::Tran: return "TRAN";
        case Analysis::AcBuild: return "AC-build";
        default: return "AC-stimulus";
    }
}

struct ElementKind {
    std::string name;
    std::vector<std::string> ports;
    std::vector<std::string> params;
    bool needs_galv = false;
    bool galv_optional = false;  // accepts a per-instance "Galv": true
};

/// All supported element kinds, in catalog order.
inline const std::vector<ElementKind>& catalog() {
    static const std::vector<ElementKind> kinds = {
        {"resistor", {"left", "right"}, {"resistance"}, false, true},
        {"capacitor", {"input", "output"}, {"capacitance"}, false, true},
        {"inductor", {"input", "output"}, {"inductance"}, true, false},
        {"CS", {"input", "output"}, {"current"}, false, true},
        {"VS", {"input", "output"}, {"voltage"}, true, false},
        {"VCCS", {"left", "right", "input", "output"}, {"MF"}, false, true},
        {"CCCS", {"iorigin", "input", "output"}, {"MF"}, false, false},
        {"VCVS", {"left", "right", "input", "output"}, {"MF"}, true, false},
        {"CCVS", {"iorigin", "input", "output"}, {"MF"}, true, false},
        {"ICS", {"input", "output"}, {"dc", "ac"}, false, false},
        {"ACVCCS", {"left", "right", "input", "output"}, {"MF"}, false, false},
    };
    return kinds;
}

inline const ElementKind* find_kind(const std::string& name) {
    for (const ElementKind& k : catalog()) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

/// One element's additive contribution. Rows/cols of the _dx matrices are
/// global signal indices; _dp columns are element-local parameter slots.
/// Duplicate coordinates are allowed; they sum on accumulation.
struct SparseContribution {
    sparse::SparseVec Q;
    sparse::SparseVec F;
    std::vector<sparse::Triplet<double>> dQ_dx;
    std::vector<sparse::Triplet<double>> dF_dx;
    std::vector<sparse::Triplet<double>> dQ_dp;
    std::vector<sparse::Triplet<double>> dF_dp;
};

namespace detail {

// gnd carries the marker index -1: rows are dropped, columns read as x = 0.
struct Stamper {
    std::span<const int> nodes;
    std::span<const double> x;
    SparseContribution* out;

    double sig(int slot) const {
        int n = nodes[static_cast<std::size_t>(slot)];
        return n < 0 ? 0.0 : x[static_cast<std::size_t>(n)];
    }
    void q(int slot, double v) const {
        int n = nodes[static_cast<std::size_t>(slot)];
        if (n >= 0) out->Q.add(n, v);
    }
    void f(int slot, double v) const {
        int n = nodes[static_cast<std::size_t>(slot)];
        if (n >= 0) out->F.add(n, v);
    }
    void dq_dx(int rslot, int cslot, double v) const {
        int r = nodes[static_cast<std::size_t>(rslot)], c = nodes[static_cast<std::size_t>(cslot)];
        if (r >= 0 && c >= 0) out->dQ_dx.push_back({r, c, v});
    }
    void df_dx(int rslot, int cslot, double v) const {
        int r = nodes[static_cast<std::size_t>(rslot)], c = nodes[static_cast<std::size_t>(cslot)];
        if (r >= 0 && c >= 0) out->dF_dx.push_back({r, c, v});
    }
    void dq_dp(int rslot, int param, double v) const {
        int r = nodes[static_cast<std::size_t>(rslot)];
        if (r >= 0) out->dQ_dp.push_back({r, param, v});
    }
    void df_dp(int rslot, int param, double v) const {
        int r = nodes[static_cast<std::size_t>(rslot)];
        if (r >= 0) out->dF_dp.push_back({r, param, v});
    }
};

}  // namespace detail

/// Evaluates one element stamp. `nodes` lists global signal indices in port
/// order, plus the GALV index last when `galv` is set. `ac_mag` carries the
/// per-instance AC stimulus annotation for VS/CS.
inline SparseContribution stamp(const ElementKind& kind, Analysis analysis,
                                std::span<const int> nodes, std::span<const double> params,
                                std::span<const double> x, bool galv,
                                std::optional<double> ac_mag = std::nullopt) {
    const bool has_galv = kind.needs_galv || galv;
    if (kind.needs_galv && !galv) {
        throw UnsupportedAnalysis(kind.name + " requires a GALV branch node under " +
                                  analysis_name(analysis));
    }
    if (galv && !kind.needs_galv && !kind.galv_optional) {
        throw GalvUnsupported("element kind " + kind.name + " does not accept a GALV node");
    }
    const std::size_t want_nodes = kind.ports.size() + (has_galv ? 1u : 0u);
    if (nodes.size() != want_nodes) {
        throw ArityError(kind.name + ": expected " + std::to_string(want_nodes) + " nodes, got " +
                         std::to_string(nodes.size()));
    }
    if (params.size() != kind.params.size()) {
        throw ArityError(kind.name + ": expected " + std::to_string(kind.params.size()) +
                         " params, got " + std::to_string(params.size()));
    }

    SparseContribution contrib;
    detail::Stamper s{nodes, x, &contrib};
    const int gslot = has_galv ? static_cast<int>(kind.ports.size()) : -1;
    const bool dc_like = analysis == Analysis::Dc || analysis == Analysis::Tran;
    const bool ac_build = analysis == Analysis::AcBuild;
    const bool ac_stim = analysis == Analysis::AcStimulus;

    // Shared pattern: branch current x_i flowing port a -> port b internally.
    auto galv_rails = [&](int a, int b) {
        double xi = s.sig(gslot);
        s.f(a, -xi);
        s.f(b, xi);
        s.df_dx(a, gslot, -1.0);
        s.df_dx(b, gslot, 1.0);
    };

    if (kind.name == "resistor") {
        if (ac_stim) return contrib;
        double r = params[0];
        double g = std::isinf(r) ? 0.0 : 1.0 / r;
        if (!has_galv) {
            double dv = s.sig(0) - s.sig(1);
            double i = dv * g;
            s.f(0, -i);
            s.f(1, i);
            s.df_dx(0, 0, -g);
            s.df_dx(0, 1, g);
            s.df_dx(1, 0, g);
            s.df_dx(1, 1, -g);
            s.df_dp(0, 0, dv * g * g);
            s.df_dp(1, 0, -dv * g * g);
        } else {
            galv_rails(0, 1);
            if (std::isinf(r)) {
                // Infinite resistance with a branch unknown: pin the current to 0.
                s.f(gslot, s.sig(gslot));
                s.df_dx(gslot, gslot, 1.0);
            } else {
                s.f(gslot, s.sig(1) - s.sig(0) + r * s.sig(gslot));
                s.df_dx(gslot, 0, -1.0);
                s.df_dx(gslot, 1, 1.0);
                s.df_dx(gslot, gslot, r);
                s.df_dp(gslot, 0, s.sig(gslot));
            }
        }
    } else if (kind.name == "capacitor") {
        if (ac_stim) return contrib;
        double c = params[0];
        double dv = s.sig(0) - s.sig(1);
        if (!has_galv) {
            s.q(0, -c * dv);
            s.q(1, c * dv);
            s.dq_dx(0, 0, -c);
            s.dq_dx(0, 1, c);
            s.dq_dx(1, 0, c);
            s.dq_dx(1, 1, -c);
            s.dq_dp(0, 0, -dv);
            s.dq_dp(1, 0, dv);
        } else {
            galv_rails(0, 1);
            s.f(gslot, s.sig(gslot));
            s.df_dx(gslot, gslot, 1.0);
            s.q(gslot, -c * dv);
            s.dq_dx(gslot, 0, -c);
            s.dq_dx(gslot, 1, c);
            s.dq_dp(gslot, 0, -dv);
        }
    } else if (kind.name == "inductor") {
        if (ac_stim) return contrib;
        double l = params[0];
        galv_rails(0, 1);
        s.f(gslot, s.sig(1) - s.sig(0));
        s.df_dx(gslot, 0, -1.0);
        s.df_dx(gslot, 1, 1.0);
        s.q(gslot, l * s.sig(gslot));
        s.dq_dx(gslot, gslot, l);
        s.dq_dp(gslot, 0, s.sig(gslot));
    } else if (kind.name == "CS") {
        double i0 = params[0];
        if (dc_like) {
            if (!has_galv) {
                s.f(0, -i0);
                s.f(1, i0);
                s.df_dp(0, 0, -1.0);
                s.df_dp(1, 0, 1.0);
            } else {
                galv_rails(0, 1);
                s.f(gslot, s.sig(gslot) - i0);
                s.df_dx(gslot, gslot, 1.0);
                s.df_dp(gslot, 0, -1.0);
            }
        } else if (ac_build && has_galv) {
            galv_rails(0, 1);
            s.f(gslot, s.sig(gslot));
            s.df_dx(gslot, gslot, 1.0);
        } else if (ac_stim && ac_mag) {
            double m = *ac_mag;
            if (!has_galv) {
                s.f(0, -m);
                s.f(1, m);
            } else {
                s.f(gslot, -m);
            }
        }
    } else if (kind.name == "VS") {
        if (ac_stim) {
            if (ac_mag) s.f(gslot, *ac_mag);
            return contrib;
        }
        galv_rails(0, 1);
        s.f(gslot, s.sig(1) - s.sig(0));
        s.df_dx(gslot, 0, -1.0);
        s.df_dx(gslot, 1, 1.0);
        if (dc_like) {
            s.f(gslot, params[0]);
            s.df_dp(gslot, 0, 1.0);
        }
    } else if (kind.name == "VCCS" || kind.name == "ACVCCS") {
        const bool active = kind.name == "VCCS" ? (dc_like || ac_build) : ac_build;
        if (!active) return contrib;
        double mf = params[0];
        double dv = s.sig(0) - s.sig(1);
        if (!has_galv) {
            s.f(2, -mf * dv);
            s.f(3, mf * dv);
            s.df_dx(2, 0, -mf);
            s.df_dx(2, 1, mf);
            s.df_dx(3, 0, mf);
            s.df_dx(3, 1, -mf);
            s.df_dp(2, 0, -dv);
            s.df_dp(3, 0, dv);
        } else {
            galv_rails(2, 3);
            s.f(gslot, s.sig(gslot) - mf * dv);
            s.df_dx(gslot, gslot, 1.0);
            s.df_dx(gslot, 0, -mf);
            s.df_dx(gslot, 1, mf);
            s.df_dp(gslot, 0, -dv);
        }
    } else if (kind.name == "CCCS") {
        if (!(dc_like || ac_build)) return contrib;
        double mf = params[0];
        double io = s.sig(0);
        s.f(1, -mf * io);
        s.f(2, mf * io);
        s.df_dx(1, 0, -mf);
        s.df_dx(2, 0, mf);
        s.df_dp(1, 0, -io);
        s.df_dp(2, 0, io);
    } else if (kind.name == "VCVS") {
        if (ac_stim) return contrib;
        double mf = params[0];
        galv_rails(2, 3);
        s.f(gslot, s.sig(3) - s.sig(2) + mf * (s.sig(0) - s.sig(1)));
        s.df_dx(gslot, 2, -1.0);
        s.df_dx(gslot, 3, 1.0);
        s.df_dx(gslot, 0, mf);
        s.df_dx(gslot, 1, -mf);
        s.df_dp(gslot, 0, s.sig(0) - s.sig(1));
    } else if (kind.name == "CCVS") {
        if (ac_stim) return contrib;
        double mf = params[0];
        galv_rails(1, 2);
        s.f(gslot, s.sig(2) - s.sig(1) + mf * s.sig(0));
        s.df_dx(gslot, 1, -1.0);
        s.df_dx(gslot, 2, 1.0);
        s.df_dx(gslot, 0, mf);
        s.df_dp(gslot, 0, s.sig(0));
    } else if (kind.name == "ICS") {
        if (dc_like) {
            double dc = params[0];
            s.f(0, dc);
            s.f(1, -dc);
            s.df_dp(0, 0, 1.0);
            s.df_dp(1, 0, -1.0);
        } else if (ac_stim) {
            double ac = params[1];
            s.f(0, ac);
            s.f(1, -ac);
            s.df_dp(0, 1, 1.0);
            s.df_dp(1, 1, -1.0);
        }
    } else {
        throw ElementUnknownPort("unknown element kind " + kind.name);
    }
    return contrib;
}

}  // namespace gradnet::elements
