#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fna/errors.hpp"

namespace fna {

using json = nlohmann::ordered_json;

/// One bus of the single-phase-equivalent network. Voltage bounds are per-unit
/// of the bus's own nominal (line-to-neutral) voltage.
struct Bus {
    std::string id;
    double nominal_voltage_v = 0.0;
    double v_min_pu = 0.0;
    double v_max_pu = 0.0;
    bool has_load = false;
    bool has_generation = false;

    bool operator==(const Bus&) const = default;
};

/// Oriented line segment. `rating_a` is the thermal ampacity; the enforced
/// limit is rating_a * loading_limit_fraction, converted to kVA at nominal
/// voltage where apparent power is compared.
struct Branch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    double r_ohm = 0.0;
    double x_ohm = 0.0;
    double rating_a = 0.0;
    double loading_limit_fraction = 1.0;

    bool operator==(const Branch&) const = default;
};

struct Transformer {
    std::string id;
    double rating_kva = 0.0;
    double loading_limit_fraction = 1.0;
    std::string secondary_bus; // slack / root bus

    bool operator==(const Transformer&) const = default;
};

/// A metering point on a branch. Flow is measured at the branch, positive in
/// the from->to (downstream) direction.
struct MeasurementLocation {
    std::string id;
    std::string branch_id;
    bool measures_p = false;
    bool measures_q = false;
    bool measures_i_abs = false;

    bool operator==(const MeasurementLocation&) const = default;
};

struct NetworkModel {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    Transformer transformer;
    std::vector<MeasurementLocation> measurement_locations;
    double base_power_kva = 0.0;

    bool operator==(const NetworkModel&) const = default;

    int bus_index(const std::string& id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return static_cast<int>(i);
        return -1;
    }
    int branch_index(const std::string& id) const {
        for (std::size_t i = 0; i < branches.size(); ++i)
            if (branches[i].id == id) return static_cast<int>(i);
        return -1;
    }
    int root_index() const { return bus_index(transformer.secondary_bus); }

    double branch_limit_kva(const Branch& b) const {
        int to = bus_index(b.to_bus);
        double v = to >= 0 ? buses[to].nominal_voltage_v : 0.0;
        return b.rating_a * b.loading_limit_fraction * v / 1000.0;
    }
    double branch_rating_kva(const Branch& b) const {
        int to = bus_index(b.to_bus);
        double v = to >= 0 ? buses[to].nominal_voltage_v : 0.0;
        return b.rating_a * v / 1000.0;
    }
    double transformer_limit_kva() const {
        return transformer.rating_kva * transformer.loading_limit_fraction;
    }
};

/// Rooted-tree view of a NetworkModel. Index-based; buses/branches refer to
/// positions in the model's vectors.
struct Topology {
    int root = -1;
    std::vector<int> parent_bus;        // per bus; -1 at root
    std::vector<int> parent_branch;     // branch into each bus; -1 at root
    std::vector<std::vector<int>> children; // per bus: child bus indices
    std::vector<int> bfs_order;         // root first
    std::vector<int> depth;

    /// Buses in leaves-first order (reverse BFS), for backward accumulation.
    std::vector<int> backward_order() const {
        std::vector<int> rev(bfs_order.rbegin(), bfs_order.rend());
        return rev;
    }
};

namespace detail {

inline void check_ids_unique(const NetworkModel& net) {
    std::set<std::string> seen;
    for (const auto& b : net.buses)
        if (!seen.insert(b.id).second) throw InputError("duplicate bus id: " + b.id);
    seen.clear();
    for (const auto& br : net.branches)
        if (!seen.insert(br.id).second) throw InputError("duplicate branch id: " + br.id);
    seen.clear();
    for (const auto& m : net.measurement_locations)
        if (!seen.insert(m.id).second) throw InputError("duplicate measurement id: " + m.id);
    seen.clear();
    for (const auto& m : net.measurement_locations)
        if (!seen.insert(m.branch_id).second)
            throw InputError("duplicate measurement on branch: " + m.branch_id);
}

} // namespace detail

/// Builds the rooted tree. Requires a connected radial model whose branches
/// may still point either way; use validate_orientation() first if orientation
/// matters to the caller.
inline Topology topology_of(const NetworkModel& net) {
    const int n = static_cast<int>(net.buses.size());
    int root = net.root_index();
    if (root < 0)
        throw InputError("no root bus: transformer secondary '" + net.transformer.secondary_bus +
                         "' is not a bus");
    std::map<std::string, int> bus_at;
    for (int i = 0; i < n; ++i) bus_at[net.buses[i].id] = i;

    std::vector<std::vector<std::pair<int, int>>> adj(n); // (neighbor bus, branch idx)
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        const auto& br = net.branches[e];
        auto fi = bus_at.find(br.from_bus);
        auto ti = bus_at.find(br.to_bus);
        if (fi == bus_at.end())
            throw InputError("branch '" + br.id + "' references missing bus: " + br.from_bus);
        if (ti == bus_at.end())
            throw InputError("branch '" + br.id + "' references missing bus: " + br.to_bus);
        adj[fi->second].push_back({ti->second, static_cast<int>(e)});
        adj[ti->second].push_back({fi->second, static_cast<int>(e)});
    }

    Topology topo;
    topo.root = root;
    topo.parent_bus.assign(n, -1);
    topo.parent_branch.assign(n, -1);
    topo.children.assign(n, {});
    topo.depth.assign(n, 0);

    std::vector<bool> visited(n, false);
    std::queue<int> q;
    q.push(root);
    visited[root] = true;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        topo.bfs_order.push_back(u);
        for (auto [v, e] : adj[u]) {
            if (visited[v]) continue;
            visited[v] = true;
            topo.parent_bus[v] = u;
            topo.parent_branch[v] = e;
            topo.children[u].push_back(v);
            topo.depth[v] = topo.depth[u] + 1;
            q.push(v);
        }
    }
    for (int i = 0; i < n; ++i)
        if (!visited[i])
            throw InputError("non-radial topology: disconnected bus: " + net.buses[i].id);
    return topo;
}

/// Full structural validation. Throws InputError naming the offending entity.
inline void validate_network(const NetworkModel& net) {
    if (net.buses.empty()) throw InputError("network has no buses");
    if (!(net.base_power_kva > 0)) throw InputError("base_power_kva must be > 0");
    detail::check_ids_unique(net);

    double root_voltage = -1.0;
    for (const auto& b : net.buses) {
        if (!(b.nominal_voltage_v > 0))
            throw InputError("bus '" + b.id + "': nominal_voltage must be > 0");
        if (!(0 < b.v_min_pu && b.v_min_pu < b.v_max_pu))
            throw InputError("bus '" + b.id + "': require 0 < v_min_pu < v_max_pu");
        if (root_voltage < 0) root_voltage = b.nominal_voltage_v;
        else if (b.nominal_voltage_v != root_voltage)
            throw InputError("bus '" + b.id +
                             "': mixed nominal voltages are not supported in the "
                             "single-phase equivalent model");
    }
    for (const auto& br : net.branches) {
        if (br.r_ohm < 0 || br.x_ohm < 0)
            throw InputError("branch '" + br.id + "': r and x must be >= 0");
        if (br.r_ohm == 0 && br.x_ohm == 0)
            throw InputError("branch '" + br.id + "': r and x cannot both be zero");
        if (!(br.rating_a > 0)) throw InputError("branch '" + br.id + "': rating must be > 0");
        if (!(0 < br.loading_limit_fraction && br.loading_limit_fraction <= 1.0))
            throw InputError("branch '" + br.id + "': loading_limit_fraction must be in (0,1]");
        if (br.from_bus == br.to_bus)
            throw InputError("non-radial topology: branch '" + br.id + "' forms a self-loop");
    }
    if (!(net.transformer.rating_kva > 0)) throw InputError("transformer rating must be > 0");
    if (!(0 < net.transformer.loading_limit_fraction &&
          net.transformer.loading_limit_fraction <= 1.0))
        throw InputError("transformer loading_limit_fraction must be in (0,1]");
    if (net.root_index() < 0)
        throw InputError("dangling reference: transformer secondary bus '" +
                         net.transformer.secondary_bus + "' not found");
    for (const auto& m : net.measurement_locations) {
        if (net.branch_index(m.branch_id) < 0)
            throw InputError("dangling reference: measurement '" + m.id +
                             "' on missing branch '" + m.branch_id + "'");
        if (!m.measures_p && !m.measures_q && !m.measures_i_abs)
            throw InputError("measurement '" + m.id + "': measured_quantities is empty");
    }

    // Radiality: a connected graph with |E| = |V|-1 is a tree.
    if (net.branches.size() + 1 != net.buses.size()) {
        if (net.branches.size() + 1 > net.buses.size()) {
            // locate one cycle-closing branch via union-find for the message
            std::map<std::string, std::string> parent;
            for (const auto& b : net.buses) parent[b.id] = b.id;
            auto find = [&](std::string x) {
                while (parent[x] != x) x = parent[x] = parent[parent[x]];
                return x;
            };
            for (const auto& br : net.branches) {
                auto a = find(br.from_bus), b = find(br.to_bus);
                if (a == b)
                    throw InputError("non-radial topology: branch '" + br.id +
                                     "' closes a cycle");
                parent[a] = b;
            }
        }
        throw InputError("non-radial topology: expected " +
                         std::to_string(net.buses.size() - 1) + " branches for " +
                         std::to_string(net.buses.size()) + " buses, found " +
                         std::to_string(net.branches.size()));
    }
    topology_of(net); // throws on disconnected buses
}

/// Returns a copy with every branch oriented away from the root (from_bus
/// strictly closer to the root). Idempotent.
inline NetworkModel validate_orientation(const NetworkModel& net) {
    Topology topo = topology_of(net);
    NetworkModel out = net;
    for (int v = 0; v < static_cast<int>(out.buses.size()); ++v) {
        int e = topo.parent_branch[v];
        if (e < 0) continue;
        Branch& br = out.branches[e];
        const std::string& child = out.buses[v].id;
        if (br.to_bus != child) std::swap(br.from_bus, br.to_bus);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON schema (see schemas/network.schema.json). Unknown keys are rejected so
// that per-phase extensions cannot be silently collapsed into the
// single-phase equivalent.
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw InputError(where + ": unknown field '" + it.key() +
                             "' (three-phase or foreign fields are rejected)");
}

template <typename T>
T get_field(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw InputError(where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(where + ": field '" + key + "' has wrong type");
    }
}

template <typename T>
T get_field_or(const json& obj, const std::string& key, const std::string& where, T def) {
    if (!obj.contains(key)) return def;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(where + ": field '" + key + "' has wrong type");
    }
}

} // namespace detail

inline NetworkModel network_from_json(const json& j) {
    using detail::get_field;
    using detail::get_field_or;
    using detail::reject_unknown_keys;

    if (!j.is_object()) throw InputError("network document: expected a JSON object");
    reject_unknown_keys(j, {"buses", "branches", "transformer", "measurements",
                            "base_power_kva"},
                        "network document");

    NetworkModel net;
    net.base_power_kva = get_field<double>(j, "base_power_kva", "network document");

    if (!j.contains("buses") || !j.at("buses").is_array())
        throw InputError("network document: missing array 'buses'");
    for (const auto& bj : j.at("buses")) {
        const std::string where = "bus entry";
        reject_unknown_keys(bj, {"id", "nominal_voltage_v", "v_min_pu", "v_max_pu",
                                 "has_load", "has_generation"},
                            where);
        Bus b;
        b.id = get_field<std::string>(bj, "id", where);
        b.nominal_voltage_v = get_field<double>(bj, "nominal_voltage_v", "bus '" + b.id + "'");
        b.v_min_pu = get_field<double>(bj, "v_min_pu", "bus '" + b.id + "'");
        b.v_max_pu = get_field<double>(bj, "v_max_pu", "bus '" + b.id + "'");
        b.has_load = get_field_or<bool>(bj, "has_load", "bus '" + b.id + "'", false);
        b.has_generation = get_field_or<bool>(bj, "has_generation", "bus '" + b.id + "'", false);
        net.buses.push_back(std::move(b));
    }

    if (!j.contains("branches") || !j.at("branches").is_array())
        throw InputError("network document: missing array 'branches'");
    for (const auto& brj : j.at("branches")) {
        const std::string where = "branch entry";
        reject_unknown_keys(brj, {"id", "from_bus", "to_bus", "r_ohm", "x_ohm", "rating_a",
                                  "loading_limit_fraction"},
                            where);
        Branch br;
        br.id = get_field<std::string>(brj, "id", where);
        const std::string ctx = "branch '" + br.id + "'";
        br.from_bus = get_field<std::string>(brj, "from_bus", ctx);
        br.to_bus = get_field<std::string>(brj, "to_bus", ctx);
        br.r_ohm = get_field<double>(brj, "r_ohm", ctx);
        br.x_ohm = get_field<double>(brj, "x_ohm", ctx);
        br.rating_a = get_field<double>(brj, "rating_a", ctx);
        br.loading_limit_fraction = get_field_or<double>(brj, "loading_limit_fraction", ctx, 1.0);
        net.branches.push_back(std::move(br));
    }

    const json& tj = j.contains("transformer") ? j.at("transformer") : json();
    if (!tj.is_object()) throw InputError("network document: missing object 'transformer'");
    reject_unknown_keys(tj, {"id", "rating_kva", "loading_limit_fraction", "secondary_bus"},
                        "transformer");
    net.transformer.id = get_field<std::string>(tj, "id", "transformer");
    net.transformer.rating_kva = get_field<double>(tj, "rating_kva", "transformer");
    net.transformer.loading_limit_fraction =
        get_field_or<double>(tj, "loading_limit_fraction", "transformer", 1.0);
    net.transformer.secondary_bus = get_field<std::string>(tj, "secondary_bus", "transformer");

    if (j.contains("measurements")) {
        if (!j.at("measurements").is_array())
            throw InputError("network document: 'measurements' must be an array");
        for (const auto& mj : j.at("measurements")) {
            reject_unknown_keys(mj, {"id", "branch_id", "measured_quantities"},
                                "measurement entry");
            MeasurementLocation m;
            m.id = get_field<std::string>(mj, "id", "measurement entry");
            const std::string ctx = "measurement '" + m.id + "'";
            m.branch_id = get_field<std::string>(mj, "branch_id", ctx);
            auto quantities = get_field<std::vector<std::string>>(mj, "measured_quantities", ctx);
            for (const auto& qn : quantities) {
                if (qn == "p") m.measures_p = true;
                else if (qn == "q") m.measures_q = true;
                else if (qn == "i_abs") m.measures_i_abs = true;
                else throw InputError(ctx + ": unknown quantity '" + qn + "'");
            }
            net.measurement_locations.push_back(std::move(m));
        }
    }
    return net;
}

inline json network_to_json(const NetworkModel& net) {
    json j;
    j["base_power_kva"] = net.base_power_kva;
    j["transformer"] = {{"id", net.transformer.id},
                        {"rating_kva", net.transformer.rating_kva},
                        {"loading_limit_fraction", net.transformer.loading_limit_fraction},
                        {"secondary_bus", net.transformer.secondary_bus}};
    j["buses"] = json::array();
    for (const auto& b : net.buses)
        j["buses"].push_back({{"id", b.id},
                              {"nominal_voltage_v", b.nominal_voltage_v},
                              {"v_min_pu", b.v_min_pu},
                              {"v_max_pu", b.v_max_pu},
                              {"has_load", b.has_load},
                              {"has_generation", b.has_generation}});
    j["branches"] = json::array();
    for (const auto& br : net.branches)
        j["branches"].push_back({{"id", br.id},
                                 {"from_bus", br.from_bus},
                                 {"to_bus", br.to_bus},
                                 {"r_ohm", br.r_ohm},
                                 {"x_ohm", br.x_ohm},
                                 {"rating_a", br.rating_a},
                                 {"loading_limit_fraction", br.loading_limit_fraction}});
    j["measurements"] = json::array();
    for (const auto& m : net.measurement_locations) {
        std::vector<std::string> qs;
        if (m.measures_p) qs.push_back("p");
        if (m.measures_q) qs.push_back("q");
        if (m.measures_i_abs) qs.push_back("i_abs");
        j["measurements"].push_back(
            {{"id", m.id}, {"branch_id", m.branch_id}, {"measured_quantities", qs}});
    }
    return j;
}

/// Loads, validates, and orients a network file.
inline NetworkModel load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(path + ": invalid JSON: " + e.what());
    }
    NetworkModel net = network_from_json(j);
    validate_network(net);
    return validate_orientation(net);
}

inline void save_network(const NetworkModel& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << network_to_json(net).dump(2) << "\n";
}

} // namespace fna
