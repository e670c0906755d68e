#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fna/csv.hpp"
#include "fna/errors.hpp"
#include "fna/reduction.hpp"

namespace fna {

// Counter-based noise: each (scenario, timestep, load) cell draws from its own
// SplitMix64 stream, so results do not depend on evaluation order or thread
// count.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53; // [0,1)
}

/// Standard normal draw for one keyed cell (Box-Muller).
inline double standard_normal(std::uint64_t seed, std::uint64_t cell) {
    std::uint64_t k = seed ^ (cell * 0xD1342543DE82EF95ULL);
    double u1 = 1.0 - uniform01(splitmix64(k));       // (0,1]
    double u2 = uniform01(splitmix64(k ^ 0x5851F42D4C957F2DULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace rng

/// Monte Carlo set of aggregated-load scenarios. Scenario 0 is always the
/// unperturbed mean profile.
struct ScenarioSet {
    int n_scenarios = 0;
    int timesteps = 0;
    std::vector<std::string> bus_ids; // load points, aggregation order
    std::vector<double> p_kw;         // [s][t][l] flattened
    std::vector<double> q_kvar;
    std::uint64_t seed = 0;
    double sigma_fraction = 0.0;

    int load_points() const { return static_cast<int>(bus_ids.size()); }
    std::size_t idx(int s, int t, int l) const {
        return (static_cast<std::size_t>(s) * timesteps + t) * bus_ids.size() + l;
    }
    double p(int s, int t, int l) const { return p_kw[idx(s, t, l)]; }
    double q(int s, int t, int l) const { return q_kvar[idx(s, t, l)]; }
};

/// Persistence-model generator: value(s,t,l) = mean(t,l) + N(0, (sigma*|mean|)^2).
/// Scenario 0 is the mean itself. Bit-identical for identical inputs.
inline ScenarioSet generate_scenarios(const std::vector<std::vector<double>>& mean_profile,
                                      double sigma_fraction, int n_scenarios,
                                      std::uint64_t seed,
                                      const std::vector<std::string>& bus_ids = {}) {
    if (sigma_fraction < 0) throw InputError("sigma_fraction must be >= 0");
    if (n_scenarios < 1) throw InputError("n_scenarios must be >= 1");
    const int T = static_cast<int>(mean_profile.size());
    if (T == 0) throw InputError("mean profile is empty");
    const int L = static_cast<int>(mean_profile[0].size());
    for (const auto& row : mean_profile) {
        if (static_cast<int>(row.size()) != L)
            throw InputError("mean profile rows have inconsistent width");
        for (double v : row)
            if (!std::isfinite(v)) throw InputError("mean profile contains non-finite values");
    }

    ScenarioSet set;
    set.n_scenarios = n_scenarios;
    set.timesteps = T;
    set.bus_ids = bus_ids.empty() ? std::vector<std::string>(L) : bus_ids;
    if (static_cast<int>(set.bus_ids.size()) != L)
        throw InputError("bus_ids size does not match profile width");
    set.seed = seed;
    set.sigma_fraction = sigma_fraction;
    set.p_kw.resize(static_cast<std::size_t>(n_scenarios) * T * L);
    set.q_kvar.assign(set.p_kw.size(), 0.0);

    for (int s = 0; s < n_scenarios; ++s)
        for (int t = 0; t < T; ++t)
            for (int l = 0; l < L; ++l) {
                double mean = mean_profile[t][l];
                double v = mean;
                if (s > 0 && sigma_fraction > 0 && mean != 0.0)
                    v += sigma_fraction * std::abs(mean) *
                         rng::standard_normal(seed, set.idx(s, t, l));
                set.p_kw[set.idx(s, t, l)] = v;
            }
    return set;
}

/// Attaches reactive power: Q follows each load point's P deviations at a fixed
/// P->Q slope (tan phi), anchored on the mean reactive profile.
inline void attach_reactive(ScenarioSet& set, const std::vector<std::vector<double>>& q_mean,
                            const std::vector<double>& tan_phi) {
    if (static_cast<int>(q_mean.size()) != set.timesteps ||
        static_cast<int>(tan_phi.size()) != set.load_points())
        throw InputError("reactive profile dimensions do not match scenario set");
    for (int s = 0; s < set.n_scenarios; ++s)
        for (int t = 0; t < set.timesteps; ++t)
            for (int l = 0; l < set.load_points(); ++l) {
                double dp = set.p(s, t, l) - set.p(0, t, l);
                set.q_kvar[set.idx(s, t, l)] = q_mean[t][l] + dp * tan_phi[l];
            }
}

/// Least-squares P->Q slope per load point, used when scaling Q scenarios.
inline std::vector<double> power_factor_slopes(const LoadProfile& profile,
                                               double fallback_power_factor) {
    double fallback = std::tan(std::acos(fallback_power_factor));
    std::vector<double> out(profile.bus_ids.size(), fallback);
    if (!profile.q_valid) return out;
    for (std::size_t l = 0; l < profile.bus_ids.size(); ++l) {
        double spq = 0, spp = 0;
        for (int t = 0; t < profile.timesteps(); ++t) {
            spq += profile.p_kw[t][l] * profile.q_kvar[t][l];
            spp += profile.p_kw[t][l] * profile.p_kw[t][l];
        }
        if (spp > 1e-12) out[l] = spq / spp;
    }
    return out;
}

inline ScenarioSet scenarios_from_profile(const LoadProfile& mean, double sigma_fraction,
                                          int n_scenarios, std::uint64_t seed,
                                          double fallback_power_factor = 0.95) {
    ScenarioSet set =
        generate_scenarios(mean.p_kw, sigma_fraction, n_scenarios, seed, mean.bus_ids);
    attach_reactive(set, mean.q_kvar, power_factor_slopes(mean, fallback_power_factor));
    return set;
}

// ---------------------------------------------------------------------------
// Long-format CSV + metadata JSON
// ---------------------------------------------------------------------------

inline std::string scenarios_to_csv(const ScenarioSet& set) {
    std::string out = "scenario,timestep,bus,p_kw,q_kvar\n";
    for (int s = 0; s < set.n_scenarios; ++s)
        for (int t = 0; t < set.timesteps; ++t)
            for (int l = 0; l < set.load_points(); ++l)
                out += std::to_string(s) + "," + std::to_string(t + 1) + "," + set.bus_ids[l] +
                       "," + format_fixed(set.p(s, t, l)) + "," + format_fixed(set.q(s, t, l)) +
                       "\n";
    return out;
}

inline json scenarios_metadata(const ScenarioSet& set) {
    return json{{"n_scenarios", set.n_scenarios},
                {"timesteps", set.timesteps},
                {"load_points", set.load_points()},
                {"seed", set.seed},
                {"sigma_fraction", set.sigma_fraction},
                {"mean_scenario_index", 0}};
}

inline ScenarioSet scenarios_from_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    int c_s = t.require_column("scenario", path);
    int c_t = t.require_column("timestep", path);
    int c_b = t.require_column("bus", path);
    int c_p = t.require_column("p_kw", path);
    int c_q = t.require_column("q_kvar", path);

    int max_s = -1, max_t = -1;
    std::vector<std::string> buses;
    std::map<std::string, int> bus_at;
    for (const auto& row : t.rows) {
        max_s = std::max(max_s, std::stoi(row[c_s]));
        max_t = std::max(max_t, std::stoi(row[c_t]));
        if (!bus_at.count(row[c_b])) {
            bus_at[row[c_b]] = static_cast<int>(buses.size());
            buses.push_back(row[c_b]);
        }
    }
    if (max_s < 0 || max_t < 1) throw InputError(path + ": no scenario rows");

    ScenarioSet set;
    set.n_scenarios = max_s + 1;
    set.timesteps = max_t;
    set.bus_ids = buses;
    set.p_kw.assign(static_cast<std::size_t>(set.n_scenarios) * max_t * buses.size(), 0.0);
    set.q_kvar.assign(set.p_kw.size(), 0.0);
    for (const auto& row : t.rows) {
        int s = std::stoi(row[c_s]);
        int ts = std::stoi(row[c_t]) - 1;
        int l = bus_at.at(row[c_b]);
        auto i = set.idx(s, ts, l);
        set.p_kw[i] = *parse_optional_double(row[c_p], path);
        set.q_kvar[i] = *parse_optional_double(row[c_q], path);
    }
    return set;
}

} // namespace fna
