#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fna/errors.hpp"
#include "fna/measurements.hpp"
#include "fna/network.hpp"

namespace fna {

/// Where each measurement's aggregated load lives: the first bus downstream of
/// the measured branch (its to_bus once the tree is oriented).
struct AggregationPoint {
    std::string bus_id;
    std::string measurement_id;

    bool operator==(const AggregationPoint&) const = default;
};

inline std::vector<AggregationPoint> aggregation_points(const NetworkModel& net) {
    std::vector<AggregationPoint> out;
    for (const auto& m : net.measurement_locations) {
        int e = net.branch_index(m.branch_id);
        if (e < 0)
            throw InputError("measurement '" + m.id + "' on nonexistent branch '" +
                             m.branch_id + "'");
        out.push_back({net.branches[e].to_bus, m.id});
    }
    return out;
}

struct ReduceOptions {
    enum class RatingRule { Max, Min };
    RatingRule rating_rule = RatingRule::Max; // Max follows the source convention
};

struct ReducedNetwork {
    NetworkModel net;
    std::vector<AggregationPoint> aggregated_load_buses;
    // original bus id -> reduced bus id, or "removed"
    std::map<std::string, std::string> bus_map;
    // reduced branch id -> original branch ids merged into it, root-to-leaf order
    std::map<std::string, std::vector<std::string>> branch_map;
    std::vector<std::string> notes;
};

/// Reduces a radial network to its observable skeleton:
///   1. one aggregated load per measurement, at the measured branch's to_bus;
///   2. branches with no aggregated load anywhere downstream are dropped;
///   3. maximal chains of unloaded pass-through buses are merged into single
///      branches with summed impedance and the rating-rule rating.
inline ReducedNetwork reduce_network(const NetworkModel& input,
                                     const ReduceOptions& opts = {}) {
    if (input.measurement_locations.empty())
        throw InputError("cannot reduce: network has no measurement locations");
    NetworkModel net = validate_orientation(input);
    Topology topo = topology_of(net);
    const int n = static_cast<int>(net.buses.size());

    ReducedNetwork red;
    red.aggregated_load_buses = aggregation_points(net);

    std::vector<bool> is_agg(n, false);
    for (const auto& ap : red.aggregated_load_buses) {
        int b = net.bus_index(ap.bus_id);
        is_agg[b] = true;
        if (topo.children[b].empty())
            red.notes.push_back("measurement '" + ap.measurement_id +
                                "' ends at leaf bus '" + ap.bus_id +
                                "'; aggregated load placed at the branch end");
    }

    // agg_below[v]: aggregated-load buses in the subtree rooted at v.
    std::vector<int> agg_below(n, 0);
    for (int v : topo.backward_order()) {
        agg_below[v] = is_agg[v] ? 1 : 0;
        for (int c : topo.children[v]) agg_below[v] += agg_below[c];
    }

    // A branch survives pruning iff something downstream of it still carries load.
    std::vector<bool> branch_kept(net.branches.size(), false);
    std::vector<std::vector<int>> kept_children(n);
    for (int v = 0; v < n; ++v) {
        int e = topo.parent_branch[v];
        if (e < 0) continue;
        if (agg_below[v] > 0) {
            branch_kept[e] = true;
            kept_children[topo.parent_bus[v]].push_back(v);
        }
    }

    std::vector<bool> bus_kept(n, false);
    for (int v = 0; v < n; ++v) {
        bool in_pruned = (v == topo.root) || (topo.parent_branch[v] >= 0 &&
                                              branch_kept[topo.parent_branch[v]]);
        if (!in_pruned) continue;
        bus_kept[v] = (v == topo.root) || is_agg[v] || kept_children[v].size() >= 2;
    }

    // Reduced buses keep original order; aggregated buses become the loadable ones.
    for (int v = 0; v < n; ++v) {
        if (!bus_kept[v]) continue;
        Bus b = net.buses[v];
        b.has_load = is_agg[v];
        b.has_generation = is_agg[v];
        red.net.buses.push_back(b);
    }
    for (int v = 0; v < n; ++v)
        red.bus_map[net.buses[v].id] = bus_kept[v] ? net.buses[v].id : "removed";

    // For every kept non-root bus, walk up through merged-away interiors to the
    // nearest kept ancestor; that path becomes its incoming reduced branch.
    std::map<std::string, std::string> branch_home; // original branch id -> reduced id
    for (int v = 0; v < n; ++v) {
        if (!bus_kept[v] || v == topo.root) continue;
        std::vector<int> path; // original branch indices, leaf-to-root while walking
        int cur = v;
        while (true) {
            int e = topo.parent_branch[cur];
            path.push_back(e);
            cur = topo.parent_bus[cur];
            if (bus_kept[cur]) break;
        }
        std::reverse(path.begin(), path.end());

        Branch merged;
        merged.id = net.branches[path.front()].id;
        merged.from_bus = net.buses[cur].id;
        merged.to_bus = net.buses[v].id;
        double best_rating = net.branches[path.front()].rating_a;
        double best_fraction = net.branches[path.front()].loading_limit_fraction;
        std::vector<std::string> originals;
        for (int e : path) {
            const Branch& ob = net.branches[e];
            merged.r_ohm += ob.r_ohm;
            merged.x_ohm += ob.x_ohm;
            bool better = opts.rating_rule == ReduceOptions::RatingRule::Max
                              ? ob.rating_a > best_rating
                              : ob.rating_a < best_rating;
            if (better) {
                best_rating = ob.rating_a;
                best_fraction = ob.loading_limit_fraction;
            }
            originals.push_back(ob.id);
            branch_home[ob.id] = merged.id;
        }
        merged.rating_a = best_rating;
        merged.loading_limit_fraction = best_fraction;
        red.net.branches.push_back(merged);
        red.branch_map[merged.id] = std::move(originals);
    }

    red.net.transformer = net.transformer;
    red.net.base_power_kva = net.base_power_kva;
    for (const auto& m : net.measurement_locations) {
        MeasurementLocation rm = m;
        rm.branch_id = branch_home.at(m.branch_id);
        red.net.measurement_locations.push_back(rm);
    }

    validate_network(red.net);
    return red;
}

/// Parent measurement of each measurement in the nesting tree: the measurement
/// whose aggregation bus is the nearest strict ancestor among aggregation buses.
/// Derived from topology alone. Index -1 marks nesting roots.
inline std::vector<int> measurement_parents(const NetworkModel& net) {
    Topology topo = topology_of(net);
    auto points = aggregation_points(net);
    std::map<int, int> meas_at_bus; // bus index -> measurement index
    for (std::size_t i = 0; i < points.size(); ++i)
        meas_at_bus[net.bus_index(points[i].bus_id)] = static_cast<int>(i);

    std::vector<int> parent(points.size(), -1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        int v = topo.parent_bus[net.bus_index(points[i].bus_id)];
        while (v >= 0) {
            auto it = meas_at_bus.find(v);
            if (it != meas_at_bus.end()) {
                parent[i] = it->second;
                break;
            }
            v = topo.parent_bus[v];
        }
    }
    return parent;
}

/// Per-timestep loads at the aggregated buses (column order = measurement order).
struct LoadProfile {
    std::vector<std::string> bus_ids;
    std::vector<std::string> measurement_ids;
    std::int64_t start = 0;
    int resolution_min = 0;
    std::vector<std::vector<double>> p_kw;   // [t][l]
    std::vector<std::vector<double>> q_kvar; // [t][l], meaningful iff q_valid
    bool q_valid = false;

    int timesteps() const { return static_cast<int>(p_kw.size()); }
};

/// Converts measured branch flows into aggregated bus loads by nested
/// subtraction: each measurement's load is its own flow minus the flows of the
/// measurements immediately downstream of it. Losses between metering points
/// are absorbed into the aggregated load. Positive = consumption.
inline LoadProfile aggregate_measured_flows(const std::vector<MeasurementSeries>& series,
                                            const ReducedNetwork& reduced) {
    const NetworkModel& net = reduced.net;
    std::map<std::string, const MeasurementSeries*> by_loc;
    for (const auto& s : series) by_loc[s.location_id] = &s;

    std::vector<const MeasurementSeries*> ordered;
    for (const auto& m : net.measurement_locations) {
        auto it = by_loc.find(m.id);
        if (it == by_loc.end())
            throw InputError("no measurement series for location '" + m.id + "'");
        ordered.push_back(it->second);
    }
    if (ordered.empty()) throw InputError("no measurement locations");

    const MeasurementSeries& ref = *ordered.front();
    for (const auto* s : ordered) {
        if (s->resolution_min != ref.resolution_min)
            throw InputError("timestamp misalignment: location '" + s->location_id +
                             "' has resolution " + std::to_string(s->resolution_min) +
                             " min, expected " + std::to_string(ref.resolution_min));
        if (s->start() != ref.start() || s->samples.size() != ref.samples.size())
            throw InputError("timestamp misalignment: location '" + s->location_id +
                             "' does not cover the same window as '" + ref.location_id + "'");
    }
    const int T = static_cast<int>(ref.samples.size());

    for (const auto* s : ordered)
        for (const auto& smp : s->samples)
            if (!smp.p_kw)
                throw InputError("location '" + s->location_id + "': missing interval at " +
                                 format_timestamp(smp.timestamp) +
                                 " (approximate power from current first)");

    bool q_valid = true;
    for (const auto* s : ordered)
        for (const auto& smp : s->samples)
            if (!smp.q_kvar) q_valid = false;

    std::vector<int> parent = measurement_parents(net);
    const int L = static_cast<int>(ordered.size());

    LoadProfile out;
    for (const auto& ap : reduced.aggregated_load_buses) {
        out.bus_ids.push_back(ap.bus_id);
        out.measurement_ids.push_back(ap.measurement_id);
    }
    out.start = ref.start();
    out.resolution_min = ref.resolution_min;
    out.q_valid = q_valid;
    out.p_kw.assign(T, std::vector<double>(L, 0.0));
    out.q_kvar.assign(T, std::vector<double>(L, 0.0));

    for (int t = 0; t < T; ++t) {
        for (int l = 0; l < L; ++l) {
            out.p_kw[t][l] = *ordered[l]->samples[t].p_kw;
            if (q_valid) out.q_kvar[t][l] = *ordered[l]->samples[t].q_kvar;
        }
        // subtract each child's full flow from its parent's aggregate
        for (int l = 0; l < L; ++l) {
            if (parent[l] < 0) continue;
            out.p_kw[t][parent[l]] -= *ordered[l]->samples[t].p_kw;
            if (q_valid) out.q_kvar[t][parent[l]] -= *ordered[l]->samples[t].q_kvar;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports and sidecar serialization
// ---------------------------------------------------------------------------

inline std::string size_report(const NetworkModel& original, const ReducedNetwork& reduced) {
    auto count_loads = [](const NetworkModel& n) {
        int c = 0;
        for (const auto& b : n.buses) c += b.has_load ? 1 : 0;
        return c;
    };
    char buf[256];
    std::string out = "Network size: original and reduced network\n";
    out += "                     Original   Reduced\n";
    std::snprintf(buf, sizeof(buf), "Number of branches   %-10zu %zu\n", original.branches.size(),
                  reduced.net.branches.size());
    out += buf;
    std::snprintf(buf, sizeof(buf), "Number of nodes      %-10zu %zu\n", original.buses.size(),
                  reduced.net.buses.size());
    out += buf;
    std::snprintf(buf, sizeof(buf), "Number of loads      %-10d %zu\n", count_loads(original),
                  reduced.aggregated_load_buses.size());
    out += buf;
    return out;
}

inline json reduction_maps_to_json(const ReducedNetwork& red) {
    json j;
    j["aggregated_load_buses"] = json::array();
    for (const auto& ap : red.aggregated_load_buses)
        j["aggregated_load_buses"].push_back(
            {{"bus", ap.bus_id}, {"measurement", ap.measurement_id}});
    j["bus_map"] = json::object();
    for (const auto& [orig, target] : red.bus_map) j["bus_map"][orig] = target;
    j["branch_map"] = json::object();
    for (const auto& [rid, originals] : red.branch_map) j["branch_map"][rid] = originals;
    j["notes"] = red.notes;
    return j;
}

} // namespace fna
