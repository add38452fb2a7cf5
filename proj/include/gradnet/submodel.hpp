#pragma once

// Behavioral side of a module: compiled Expression or LookupTable submodels
// mapping (node signals, input params) -> intrinsic params with exact
// Jacobians J_s, J_ip.
//
// Tables are tensor-product cubic Hermite interpolants (Catmull-Rom style
// centered-difference tangents): local, C1, and exactly interpolating.
// Out-of-hull queries clamp to the hull with zero outward derivative and
// bump a process-wide diagnostic counter.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gradnet/errors.hpp"
#include "gradnet/expr.hpp"
#include "gradnet/jsonio.hpp"
#include "gradnet/netlist.hpp"

namespace gradnet::submodel {

inline std::atomic<std::uint64_t>& table_clamp_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

struct CompileOptions {
    std::string corner = "tt";
    double temperature = 27.0;
    std::vector<std::string> table_search_paths;
};

// ---------------------------------------------------------------------------
// Interpolation tables
// ---------------------------------------------------------------------------

struct TableAxis {
    std::string name;
    std::string binds;  // identifier or "a-b" difference; defaults to name
    std::vector<double> grid;
};

struct TableEval {
    std::vector<double> values;                 // per slab
    std::vector<std::vector<double>> d_axis;    // [slab][axis]
};

class InterpTable {
  public:
    std::string corner;
    double temperature = 27.0;
    std::vector<TableAxis> axes;
    std::vector<std::string> slab_names;
    std::vector<std::vector<double>> slabs;  // [slab][row-major grid]

    int slab_index(const std::string& name) const {
        for (std::size_t i = 0; i < slab_names.size(); ++i) {
            if (slab_names[i] == name) return static_cast<int>(i);
        }
        return -1;
    }

    void check() const {
        std::size_t total = 1;
        for (const TableAxis& ax : axes) {
            if (ax.grid.size() < 4) {
                throw TableShapeError("axis '" + ax.name + "' needs at least 4 grid points");
            }
            for (std::size_t i = 1; i < ax.grid.size(); ++i) {
                if (!(ax.grid[i] > ax.grid[i - 1])) {
                    throw AxisNotMonotonic("axis '" + ax.name +
                                           "' grid is not strictly increasing");
                }
            }
            total *= ax.grid.size();
        }
        if (slabs.size() != slab_names.size()) {
            throw TableShapeError("values array count does not match IntrinsicParams");
        }
        for (std::size_t s = 0; s < slabs.size(); ++s) {
            if (slabs[s].size() != total) {
                throw TableShapeError("slab '" + slab_names[s] + "' holds " +
                                      std::to_string(slabs[s].size()) + " values, expected " +
                                      std::to_string(total));
            }
        }
    }

    TableEval eval(std::span<const double> point) const {
        const std::size_t dims = axes.size();
        if (point.size() != dims) {
            throw ArityError("table query has " + std::to_string(point.size()) +
                             " coordinates, expected " + std::to_string(dims));
        }
        std::vector<AxisWeights> w(dims);
        for (std::size_t d = 0; d < dims; ++d) {
            w[d] = axis_weights(axes[d].grid, point[d]);
        }

        TableEval out;
        out.values.assign(slabs.size(), 0.0);
        out.d_axis.assign(slabs.size(), std::vector<double>(dims, 0.0));

        // Iterate the tensor stencil (at most 4^D points).
        std::vector<int> cursor(dims, 0);
        while (true) {
            double coeff = 1.0;
            std::size_t flat = 0;
            for (std::size_t d = 0; d < dims; ++d) {
                const AxisWeights& aw = w[d];
                coeff *= aw.w[static_cast<std::size_t>(cursor[d])];
                flat = flat * axes[d].grid.size() +
                       static_cast<std::size_t>(aw.idx[static_cast<std::size_t>(cursor[d])]);
            }
            if (coeff != 0.0) {
                for (std::size_t s = 0; s < slabs.size(); ++s) {
                    out.values[s] += coeff * slabs[s][flat];
                }
            }
            for (std::size_t q = 0; q < dims; ++q) {
                double dcoeff = 1.0;
                for (std::size_t d = 0; d < dims; ++d) {
                    const AxisWeights& aw = w[d];
                    dcoeff *= d == q ? aw.dw[static_cast<std::size_t>(cursor[d])]
                                     : aw.w[static_cast<std::size_t>(cursor[d])];
                }
                if (dcoeff != 0.0) {
                    for (std::size_t s = 0; s < slabs.size(); ++s) {
                        out.d_axis[s][q] += dcoeff * slabs[s][flat];
                    }
                }
            }
            // Advance the mixed-radix cursor.
            std::size_t d = 0;
            for (; d < dims; ++d) {
                if (++cursor[d] < w[d].count) break;
                cursor[d] = 0;
            }
            if (d == dims) break;
        }
        return out;
    }

  private:
    struct AxisWeights {
        int idx[4] = {0, 0, 0, 0};
        double w[4] = {0, 0, 0, 0};
        double dw[4] = {0, 0, 0, 0};
        int count = 0;
    };

    static AxisWeights axis_weights(const std::vector<double>& g, double t) {
        AxisWeights aw;
        const int n = static_cast<int>(g.size());
        if (t <= g.front() || t >= g.back()) {
            if (t < g.front() || t > g.back()) table_clamp_counter()++;
            aw.idx[0] = t <= g.front() ? 0 : n - 1;
            aw.w[0] = 1.0;
            aw.dw[0] = 0.0;
            aw.count = 1;
            return aw;
        }
        int i = static_cast<int>(std::upper_bound(g.begin(), g.end(), t) - g.begin()) - 1;
        if (i > n - 2) i = n - 2;
        const double h = g[static_cast<std::size_t>(i + 1)] - g[static_cast<std::size_t>(i)];
        const double u = (t - g[static_cast<std::size_t>(i)]) / h;
        const double u2 = u * u, u3 = u2 * u;
        const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
        const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
        const double d00 = (6 * u2 - 6 * u) / h, d10 = (3 * u2 - 4 * u + 1) / h;
        const double d01 = -d00, d11 = (3 * u2 - 2 * u) / h;

        // Weight accumulation over stencil {i-1, i, i+1, i+2} (clamped).
        int lo = std::max(0, i - 1);
        int hi = std::min(n - 1, i + 2);
        aw.count = hi - lo + 1;
        for (int k = 0; k < aw.count; ++k) aw.idx[k] = lo + k;
        auto add = [&](int grid_idx, double wv, double dv) {
            aw.w[static_cast<std::size_t>(grid_idx - lo)] += wv;
            aw.dw[static_cast<std::size_t>(grid_idx - lo)] += dv;
        };
        add(i, h00, d00);
        add(i + 1, h01, d01);
        // Tangent at i: centered difference, one-sided at the boundary.
        if (i == 0) {
            double c = 1.0 / (g[1] - g[0]);
            add(0, -h10 * h * c, -d10 * h * c);
            add(1, h10 * h * c, d10 * h * c);
        } else {
            double c = 1.0 / (g[static_cast<std::size_t>(i + 1)] - g[static_cast<std::size_t>(i - 1)]);
            add(i - 1, -h10 * h * c, -d10 * h * c);
            add(i + 1, h10 * h * c, d10 * h * c);
        }
        // Tangent at i+1.
        if (i + 1 == n - 1) {
            double c = 1.0 / (g[static_cast<std::size_t>(n - 1)] - g[static_cast<std::size_t>(n - 2)]);
            add(n - 2, -h11 * h * c, -d11 * h * c);
            add(n - 1, h11 * h * c, d11 * h * c);
        } else {
            double c = 1.0 / (g[static_cast<std::size_t>(i + 2)] - g[static_cast<std::size_t>(i)]);
            add(i, -h11 * h * c, -d11 * h * c);
            add(i + 2, h11 * h * c, d11 * h * c);
        }
        return aw;
    }
};

// ---------------------------------------------------------------------------
// Table file I/O
// ---------------------------------------------------------------------------

namespace tabledetail {

inline std::vector<double> decode_base64_doubles(const std::string& b64) {
    static const std::string alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::vector<unsigned char> bytes;
    int acc = 0, bits = 0;
    for (char c : b64) {
        if (c == '=' || c == '\n' || c == '\r' || c == ' ') continue;
        std::size_t v = alphabet.find(c);
        if (v == std::string::npos) throw TableShapeError("invalid base64 payload");
        acc = (acc << 6) | static_cast<int>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
        }
    }
    if (bytes.size() % 8 != 0) throw TableShapeError("base64 payload is not doubles");
    std::vector<double> out(bytes.size() / 8);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

inline std::string encode_base64_doubles(const std::vector<double>& values) {
    static const char alphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    const unsigned char* data = reinterpret_cast<const unsigned char*>(values.data());
    std::size_t n = values.size() * 8;
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        unsigned v = static_cast<unsigned>(data[i]) << 16;
        if (i + 1 < n) v |= static_cast<unsigned>(data[i + 1]) << 8;
        if (i + 2 < n) v |= static_cast<unsigned>(data[i + 2]);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += i + 1 < n ? alphabet[(v >> 6) & 63] : '=';
        out += i + 2 < n ? alphabet[v & 63] : '=';
    }
    return out;
}

inline InterpTable table_from_json(const jsonio::Value& tv) {
    InterpTable t;
    const jsonio::Value* corner = tv.find("Corner");
    const jsonio::Value* temp = tv.find("Temperature");
    if (corner) t.corner = corner->as_string();
    if (temp) t.temperature = jsonio::coerce_number(*temp).value_or(27.0);
    const jsonio::Value* axes = tv.find("Axes");
    if (!axes || !axes->is_array()) throw SchemaError("table entry is missing Axes");
    for (const jsonio::Value& av : axes->as_array()) {
        TableAxis ax;
        const jsonio::Value* name = av.find("Name");
        if (!name) throw SchemaError("table axis is missing Name");
        ax.name = name->as_string();
        const jsonio::Value* binds = av.find("Binds");
        ax.binds = binds ? binds->as_string() : ax.name;
        const jsonio::Value* grid = av.find("Grid");
        if (!grid || !grid->is_array()) throw SchemaError("table axis is missing Grid");
        for (const jsonio::Value& g : grid->as_array()) {
            auto n = jsonio::coerce_number(g);
            if (!n) throw SchemaError("axis grid entries must be numbers");
            ax.grid.push_back(*n);
        }
        t.axes.push_back(std::move(ax));
    }
    const jsonio::Value* names = tv.find("IntrinsicParams");
    if (!names || !names->is_array()) throw SchemaError("table entry is missing IntrinsicParams");
    for (const jsonio::Value& n : names->as_array()) t.slab_names.push_back(n.as_string());

    if (const jsonio::Value* vals = tv.find("Values")) {
        if (!vals->is_array()) throw SchemaError("Values must be an array of slabs");
        for (const jsonio::Value& slab : vals->as_array()) {
            std::vector<double> s;
            for (const jsonio::Value& v : slab.as_array()) {
                auto n = jsonio::coerce_number(v);
                if (!n) throw SchemaError("slab entries must be numbers");
                s.push_back(*n);
            }
            t.slabs.push_back(std::move(s));
        }
    } else if (const jsonio::Value* vals64 = tv.find("ValuesBase64")) {
        if (!vals64->is_array()) throw SchemaError("ValuesBase64 must be an array of strings");
        for (const jsonio::Value& slab : vals64->as_array()) {
            t.slabs.push_back(decode_base64_doubles(slab.as_string()));
        }
    } else {
        throw SchemaError("table entry needs Values or ValuesBase64");
    }
    t.check();
    return t;
}

}  // namespace tabledetail

/// Resolves a table path against search directories (absolute, as-is, then
/// each search path in order).
inline std::string resolve_table_path(const std::string& path,
                                      const std::vector<std::string>& search_paths) {
    namespace fs = std::filesystem;
    if (fs::exists(path)) return path;
    if (!fs::path(path).is_absolute()) {
        for (const std::string& dir : search_paths) {
            fs::path candidate = fs::path(dir) / path;
            if (fs::exists(candidate)) return candidate.string();
        }
    }
    throw TableNotFound("table file '" + path + "' not found on the search path");
}

namespace tabledetail {

/// Process-level parse cache: PVT sweeps re-read the same file per corner.
inline const jsonio::Value& parsed_table_file(const std::string& path) {
    static std::mutex mutex;
    static std::map<std::string, std::unique_ptr<jsonio::Value>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(path);
    if (it == cache.end()) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw TableNotFound("cannot open table file " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        it = cache.emplace(path, std::make_unique<jsonio::Value>(jsonio::parse(ss.str()))).first;
    }
    return *it->second;
}

}  // namespace tabledetail

/// Loads the table selected by (corner, temperature) from a table file.
/// File contents are cached per path for the lifetime of the process.
inline InterpTable load_table(const std::string& path, const std::string& corner,
                              double temperature) {
    const jsonio::Value& root = tabledetail::parsed_table_file(path);
    const jsonio::Value* tables = root.find("Tables");
    if (!tables || !tables->is_array()) throw SchemaError("table file is missing Tables array");
    for (const jsonio::Value& tv : tables->as_array()) {
        InterpTable t = tabledetail::table_from_json(tv);
        if (t.corner == corner && std::abs(t.temperature - temperature) < 1e-9) {
            return t;
        }
    }
    throw TableNotFound("no table for corner '" + corner + "' at " +
                        std::to_string(temperature) + " C in " + path);
}

// ---------------------------------------------------------------------------
// Compiled submodels
// ---------------------------------------------------------------------------

/// Intrinsic values with Jacobians against the owning module's node signals
/// and input params.
struct SubModelEval {
    std::vector<double> intrp;
    std::vector<std::vector<double>> J_s;   // n_intrinsic x arity_signals
    std::vector<std::vector<double>> J_ip;  // n_intrinsic x arity_ip
};

class CompiledSubModel {
  public:
    netlist::SubModelKind kind = netlist::SubModelKind::Expression;
    netlist::AnalysisSet analyses;
    std::vector<std::string> intrinsic_names;
    int arity_signals = 0;
    int arity_ip = 0;

    int n_intrinsic() const { return static_cast<int>(intrinsic_names.size()); }

    bool active_for_dc() const { return analyses.dc; }
    bool active_for_tran() const { return analyses.tran; }

    /// Underlying table (LookupTable submodels only; nullptr otherwise).
    const InterpTable* table() const { return table_ ? table_.get() : nullptr; }

    SubModelEval eval(std::span<const double> signals, std::span<const double> ip) const {
        if (static_cast<int>(signals.size()) != arity_signals ||
            static_cast<int>(ip.size()) != arity_ip) {
            throw ArityError("submodel input arity mismatch");
        }
        SubModelEval out;
        const std::size_t n = intrinsic_names.size();
        out.intrp.assign(n, 0.0);
        out.J_s.assign(n, std::vector<double>(static_cast<std::size_t>(arity_signals), 0.0));
        out.J_ip.assign(n, std::vector<double>(static_cast<std::size_t>(arity_ip), 0.0));

        if (kind == netlist::SubModelKind::Expression) {
            std::vector<double> inputs(signals.begin(), signals.end());
            inputs.insert(inputs.end(), ip.begin(), ip.end());
            ExprEvalResult r = evaluate_with_gradients(program_, inputs);
            for (std::size_t k = 0; k < n; ++k) {
                out.intrp[k] = r.values[k];
                for (int s = 0; s < arity_signals; ++s) {
                    out.J_s[k][static_cast<std::size_t>(s)] =
                        r.jacobian[k][static_cast<std::size_t>(s)];
                }
                for (int p = 0; p < arity_ip; ++p) {
                    out.J_ip[k][static_cast<std::size_t>(p)] =
                        r.jacobian[k][static_cast<std::size_t>(arity_signals + p)];
                }
            }
            return out;
        }

        // LookupTable: build axis coordinates, evaluate, chain rule the binds.
        std::vector<double> q(bindings_.size());
        auto input_at = [&](int slot) {
            return slot < arity_signals ? signals[static_cast<std::size_t>(slot)]
                                        : ip[static_cast<std::size_t>(slot - arity_signals)];
        };
        for (std::size_t d = 0; d < bindings_.size(); ++d) {
            q[d] = input_at(bindings_[d].slot_a);
            if (bindings_[d].slot_b >= 0) q[d] -= input_at(bindings_[d].slot_b);
        }
        TableEval te = table_->eval(q);
        for (std::size_t k = 0; k < n; ++k) {
            const int slab = slab_map_[k];
            out.intrp[k] = te.values[static_cast<std::size_t>(slab)];
            for (std::size_t d = 0; d < bindings_.size(); ++d) {
                double g = te.d_axis[static_cast<std::size_t>(slab)][d];
                if (g == 0.0) continue;
                apply_slot(out, k, bindings_[d].slot_a, g);
                if (bindings_[d].slot_b >= 0) apply_slot(out, k, bindings_[d].slot_b, -g);
            }
        }
        for (double v : out.intrp) {
            if (!std::isfinite(v)) throw EvalDomainError("table produced a non-finite intrinsic");
        }
        return out;
    }

    struct AxisBinding {
        int slot_a = -1;
        int slot_b = -1;  // -1 when the bind is a single identifier
    };

    /// Axis coordinate value and its gradient slots, from the bound inputs.
    struct AxisValue {
        double value = 0.0;
        int slot_a = -1;
        int slot_b = -1;
    };

    AxisValue axis_value(const std::string& axis_name, std::span<const double> signals,
                         std::span<const double> ip) const {
        if (!table_) throw TableShapeError("axis_value requires a LookupTable submodel");
        auto input_at = [&](int slot) {
            return slot < arity_signals ? signals[static_cast<std::size_t>(slot)]
                                        : ip[static_cast<std::size_t>(slot - arity_signals)];
        };
        for (std::size_t d = 0; d < table_->axes.size(); ++d) {
            if (table_->axes[d].name != axis_name) continue;
            AxisValue out;
            out.slot_a = bindings_[d].slot_a;
            out.slot_b = bindings_[d].slot_b;
            out.value = input_at(out.slot_a);
            if (out.slot_b >= 0) out.value -= input_at(out.slot_b);
            return out;
        }
        throw TableShapeError("table has no axis named '" + axis_name + "'");
    }

    struct SlabEval {
        double value = 0.0;
        std::vector<double> d_signals;
        std::vector<double> d_ip;
    };

    /// Evaluates one table slab by name (declared as an intrinsic or not),
    /// with gradients chained through the axis bindings.
    SlabEval eval_slab(const std::string& slab_name, std::span<const double> signals,
                       std::span<const double> ip) const {
        if (!table_) throw TableShapeError("eval_slab requires a LookupTable submodel");
        int slab = table_->slab_index(slab_name);
        if (slab < 0) throw TableShapeError("table has no slab named '" + slab_name + "'");
        std::vector<double> q(bindings_.size());
        auto input_at = [&](int slot) {
            return slot < arity_signals ? signals[static_cast<std::size_t>(slot)]
                                        : ip[static_cast<std::size_t>(slot - arity_signals)];
        };
        for (std::size_t d = 0; d < bindings_.size(); ++d) {
            q[d] = input_at(bindings_[d].slot_a);
            if (bindings_[d].slot_b >= 0) q[d] -= input_at(bindings_[d].slot_b);
        }
        TableEval te = table_->eval(q);
        SlabEval out;
        out.value = te.values[static_cast<std::size_t>(slab)];
        out.d_signals.assign(static_cast<std::size_t>(arity_signals), 0.0);
        out.d_ip.assign(static_cast<std::size_t>(arity_ip), 0.0);
        auto apply = [&](int slot, double g) {
            if (slot < arity_signals) {
                out.d_signals[static_cast<std::size_t>(slot)] += g;
            } else {
                out.d_ip[static_cast<std::size_t>(slot - arity_signals)] += g;
            }
        };
        for (std::size_t d = 0; d < bindings_.size(); ++d) {
            double g = te.d_axis[static_cast<std::size_t>(slab)][d];
            if (g == 0.0) continue;
            apply(bindings_[d].slot_a, g);
            if (bindings_[d].slot_b >= 0) apply(bindings_[d].slot_b, -g);
        }
        return out;
    }

    // Populated by compile().
    ExprProgram program_;
    std::shared_ptr<const InterpTable> table_;
    std::vector<AxisBinding> bindings_;
    std::vector<int> slab_map_;  // intrinsic index -> table slab

  private:
    void apply_slot(SubModelEval& out, std::size_t k, int slot, double g) const {
        if (slot < arity_signals) {
            out.J_s[k][static_cast<std::size_t>(slot)] += g;
        } else {
            out.J_ip[k][static_cast<std::size_t>(slot - arity_signals)] += g;
        }
    }
};

namespace smdetail {

inline int resolve_name(const std::string& name, std::span<const std::string> signal_names,
                        std::span<const std::string> ip_names) {
    for (std::size_t i = 0; i < signal_names.size(); ++i) {
        if (signal_names[i] == name) return static_cast<int>(i);
    }
    for (std::size_t i = 0; i < ip_names.size(); ++i) {
        if (ip_names[i] == name) return static_cast<int>(signal_names.size() + i);
    }
    throw UnboundVariable("symbol '" + name + "' is not a node or input param of the module");
}

inline CompiledSubModel::AxisBinding resolve_binding(const std::string& bind,
                                                     std::span<const std::string> signal_names,
                                                     std::span<const std::string> ip_names) {
    CompiledSubModel::AxisBinding b;
    std::size_t dash = bind.find('-');
    if (dash == std::string::npos) {
        b.slot_a = resolve_name(bind, signal_names, ip_names);
    } else {
        b.slot_a = resolve_name(bind.substr(0, dash), signal_names, ip_names);
        b.slot_b = resolve_name(bind.substr(dash + 1), signal_names, ip_names);
    }
    return b;
}

/// The ModelLoader escape hatch: the first quoted name selects "<name>.json"
/// on the table search path.
inline std::string loader_table_file(const std::string& loader) {
    std::size_t a = loader.find('"');
    if (a == std::string::npos) {
        throw SchemaError("ModelLoader carries no quoted table name: " + loader);
    }
    std::size_t b = loader.find('"', a + 1);
    if (b == std::string::npos) {
        throw SchemaError("ModelLoader has an unterminated quoted name: " + loader);
    }
    return loader.substr(a + 1, b - a - 1) + ".json";
}

}  // namespace smdetail

/// Compiles a SubModel spec against the owning module's node and param names.
inline CompiledSubModel compile(const netlist::SubModelSpec& spec,
                                std::span<const std::string> signal_names,
                                std::span<const std::string> ip_names,
                                const CompileOptions& options = {}) {
    CompiledSubModel sm;
    sm.kind = spec.kind;
    sm.analyses = spec.analyses;
    sm.intrinsic_names = spec.intrinsic_params;
    sm.arity_signals = static_cast<int>(signal_names.size());
    sm.arity_ip = static_cast<int>(ip_names.size());

    if (spec.kind == netlist::SubModelKind::Expression) {
        sm.program_ = parse_expression_list(spec.expr);
        if (sm.program_.n_outputs() != spec.intrinsic_params.size()) {
            throw ExprParseError("expression list yields " +
                                 std::to_string(sm.program_.n_outputs()) +
                                 " entries, expected " +
                                 std::to_string(spec.intrinsic_params.size()));
        }
        std::vector<std::string> names(signal_names.begin(), signal_names.end());
        names.insert(names.end(), ip_names.begin(), ip_names.end());
        sm.program_.bind(names);
        return sm;
    }

    std::string file = spec.model_loader.empty()
                           ? spec.table.path
                           : smdetail::loader_table_file(spec.model_loader);
    std::string resolved = resolve_table_path(file, options.table_search_paths);
    sm.table_ = std::make_shared<InterpTable>(
        load_table(resolved, options.corner, options.temperature));

    for (const TableAxis& ax : sm.table_->axes) {
        std::string bind = ax.binds;
        for (const auto& [axis, override_bind] : spec.table.axis_bindings) {
            if (axis == ax.name) bind = override_bind;
        }
        sm.bindings_.push_back(smdetail::resolve_binding(bind, signal_names, ip_names));
    }
    for (const std::string& name : spec.intrinsic_params) {
        int slab = sm.table_->slab_index(name);
        if (slab < 0) {
            throw TableShapeError("table has no slab for intrinsic param '" + name + "'");
        }
        sm.slab_map_.push_back(slab);
    }
    return sm;
}

}  // namespace gradnet::submodel
