#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fna/csv.hpp"
#include "fna/errors.hpp"

namespace fna {

// ---------------------------------------------------------------------------
// Timestamps: ISO-8601 "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z',
// interpreted as UTC. Civil-day arithmetic after Howard Hinnant.
// ---------------------------------------------------------------------------

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int yr = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = yr + (m <= 2);
}

inline std::int64_t parse_timestamp(const std::string& s) {
    int y, h, mi, se;
    unsigned mo, d;
    char tail = '\0';
    int n = std::sscanf(s.c_str(), "%d-%u-%uT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &se, &tail);
    if (n < 6 || (n == 7 && tail != 'Z') || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 ||
        h > 23 || mi < 0 || mi > 59 || se < 0 || se > 60)
        throw InputError("invalid timestamp: '" + s + "' (expected ISO-8601, e.g. 2023-09-11T00:15:00Z)");
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
}

inline std::string format_timestamp(std::int64_t epoch_s) {
    std::int64_t days = epoch_s / 86400;
    std::int64_t rem = epoch_s % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int y;
    unsigned mo, d;
    civil_from_days(days, y, mo, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, mo, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>((rem % 3600) / 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

// ---------------------------------------------------------------------------
// Measurement series
// ---------------------------------------------------------------------------

struct Sample {
    std::int64_t timestamp = 0; // epoch seconds, UTC
    std::optional<double> p_kw;
    std::optional<double> q_kvar;
    std::optional<double> i_a;
};

/// Uniformly spaced time series for one measurement location.
struct MeasurementSeries {
    std::string location_id;
    int resolution_min = 0;
    std::vector<Sample> samples;
    bool power_approximated = false;  // P filled from |I| * V_nom
    bool reactive_from_pf = false;    // Q filled from P at an assumed power factor

    bool current_only() const {
        for (const auto& s : samples)
            if (s.p_kw.has_value()) return false;
        return true;
    }
    std::int64_t start() const { return samples.empty() ? 0 : samples.front().timestamp; }
};

namespace detail {

inline void check_uniform_spacing(MeasurementSeries& series) {
    auto& s = series.samples;
    std::sort(s.begin(), s.end(),
              [](const Sample& a, const Sample& b) { return a.timestamp < b.timestamp; });
    if (s.size() < 2)
        throw InputError("location '" + series.location_id + "': need at least 2 samples");
    std::int64_t step = s[1].timestamp - s[0].timestamp;
    if (step <= 0 || step % 60 != 0)
        throw InputError("location '" + series.location_id +
                         "': sample spacing must be a positive whole number of minutes");
    for (std::size_t i = 1; i < s.size(); ++i) {
        std::int64_t d = s[i].timestamp - s[i - 1].timestamp;
        if (d == 0)
            throw InputError("location '" + series.location_id + "': duplicate timestamp " +
                             format_timestamp(s[i].timestamp));
        if (d != step)
            throw InputError("location '" + series.location_id +
                             "': non-uniform spacing (missing interval before " +
                             format_timestamp(s[i].timestamp) + ")");
    }
    series.resolution_min = static_cast<int>(step / 60);
}

} // namespace detail

/// Reads the measurement CSV (columns: timestamp, location_id, p_kw, q_kvar, i_a;
/// empty cells mean "not measured"). When `known_ids` is non-empty, rows for
/// other locations are rejected. Output is sorted by location id.
inline std::vector<MeasurementSeries> load_measurements(
    const std::string& path, const std::set<std::string>& known_ids = {}) {
    CsvTable t = read_csv(path);
    const std::set<std::string> expected = {"timestamp", "location_id", "p_kw", "q_kvar", "i_a"};
    for (const auto& col : t.header)
        if (!expected.count(col))
            throw InputError(path + ": unknown column '" + col +
                             "' (per-phase columns are rejected)");
    int c_ts = t.require_column("timestamp", path);
    int c_loc = t.require_column("location_id", path);
    int c_p = t.require_column("p_kw", path);
    int c_q = t.require_column("q_kvar", path);
    int c_i = t.require_column("i_a", path);

    std::map<std::string, MeasurementSeries> by_loc;
    std::size_t rowno = 1;
    for (const auto& row : t.rows) {
        ++rowno;
        if (row.size() < t.header.size())
            throw InputError(path + ": row " + std::to_string(rowno) + " has too few cells");
        const std::string& loc = row[c_loc];
        if (loc.empty()) throw InputError(path + ": row " + std::to_string(rowno) + ": empty location_id");
        if (!known_ids.empty() && !known_ids.count(loc))
            throw InputError(path + ": unknown location id '" + loc + "'");
        const std::string ctx = path + ": row " + std::to_string(rowno);
        Sample s;
        s.timestamp = parse_timestamp(row[c_ts]);
        s.p_kw = parse_optional_double(row[c_p], ctx);
        s.q_kvar = parse_optional_double(row[c_q], ctx);
        s.i_a = parse_optional_double(row[c_i], ctx);
        if (!s.p_kw && !s.i_a)
            throw InputError(ctx + ": sample has neither p_kw nor i_a");
        auto& series = by_loc[loc];
        series.location_id = loc;
        series.samples.push_back(s);
    }
    if (!known_ids.empty())
        for (const auto& id : known_ids)
            if (!by_loc.count(id))
                throw InputError(path + ": no samples for measurement location '" + id + "'");

    std::vector<MeasurementSeries> out;
    for (auto& [id, series] : by_loc) {
        detail::check_uniform_spacing(series);
        out.push_back(std::move(series));
    }
    return out;
}

/// Fills P from |I| at nominal voltage: P(t) = I(t) * V / 1000 [kW]. The result
/// is nonnegative by construction, so net injection shows up as load; the
/// series is tagged `power_approximated` so reports can carry that caveat.
inline MeasurementSeries approximate_power_from_current(const MeasurementSeries& series,
                                                        double nominal_voltage_v) {
    MeasurementSeries out = series;
    for (auto& s : out.samples) {
        if (s.p_kw.has_value())
            throw InputError("location '" + series.location_id +
                             "': power already present; refusing to overwrite");
        if (!s.i_a.has_value())
            throw InputError("location '" + series.location_id + "': sample " +
                             format_timestamp(s.timestamp) + " has no current measurement");
        if (*s.i_a < 0)
            throw InputError("location '" + series.location_id + "': negative current at " +
                             format_timestamp(s.timestamp));
        s.p_kw = *s.i_a * nominal_voltage_v / 1000.0;
    }
    out.power_approximated = true;
    return out;
}

/// Fills missing Q from P at a fixed power factor (lagging): Q = P * tan(acos(pf)).
inline MeasurementSeries fill_reactive_from_power_factor(const MeasurementSeries& series,
                                                         double power_factor) {
    if (!(power_factor > 0.0 && power_factor <= 1.0))
        throw InputError("power factor must be in (0,1]");
    double tan_phi = std::tan(std::acos(power_factor));
    MeasurementSeries out = series;
    bool filled = false;
    for (auto& s : out.samples) {
        if (s.q_kvar.has_value()) continue;
        if (!s.p_kw.has_value())
            throw InputError("location '" + series.location_id +
                             "': cannot derive Q without P at " + format_timestamp(s.timestamp));
        s.q_kvar = *s.p_kw * tan_phi;
        filled = true;
    }
    out.reactive_from_pf = filled || out.reactive_from_pf;
    return out;
}

/// Mean-aggregates to a coarser resolution. The target must be an integer
/// multiple of the source resolution and the series must cover whole target
/// intervals (partial trailing data is rejected).
inline MeasurementSeries resample(const MeasurementSeries& series, int target_resolution_min) {
    if (series.resolution_min <= 0)
        throw InputError("location '" + series.location_id + "': series has no resolution");
    if (target_resolution_min == series.resolution_min) return series;
    if (target_resolution_min <= 0 || target_resolution_min % series.resolution_min != 0)
        throw InputError("location '" + series.location_id + "': target resolution " +
                         std::to_string(target_resolution_min) + " min is not a multiple of " +
                         std::to_string(series.resolution_min) + " min");
    const std::size_t k = static_cast<std::size_t>(target_resolution_min / series.resolution_min);
    if (series.samples.size() % k != 0)
        throw InputError("location '" + series.location_id +
                         "': incomplete coverage: trailing partial interval");

    MeasurementSeries out;
    out.location_id = series.location_id;
    out.resolution_min = target_resolution_min;
    out.power_approximated = series.power_approximated;
    out.reactive_from_pf = series.reactive_from_pf;
    for (std::size_t i = 0; i < series.samples.size(); i += k) {
        Sample agg;
        agg.timestamp = series.samples[i].timestamp;
        double p = 0, q = 0, cur = 0;
        bool has_p = true, has_q = true, has_i = true;
        for (std::size_t j = i; j < i + k; ++j) {
            const Sample& s = series.samples[j];
            if (s.p_kw) p += *s.p_kw; else has_p = false;
            if (s.q_kvar) q += *s.q_kvar; else has_q = false;
            if (s.i_a) cur += *s.i_a; else has_i = false;
        }
        if (has_p) agg.p_kw = p / static_cast<double>(k);
        if (has_q) agg.q_kvar = q / static_cast<double>(k);
        if (has_i) agg.i_a = cur / static_cast<double>(k);
        if (!agg.p_kw && !agg.i_a)
            throw InputError("location '" + series.location_id +
                             "': interval at " + format_timestamp(agg.timestamp) +
                             " has neither complete P nor complete I data");
        out.samples.push_back(agg);
    }
    return out;
}

inline std::string measurements_to_csv(const std::vector<MeasurementSeries>& all) {
    std::string out = "timestamp,location_id,p_kw,q_kvar,i_a\n";
    for (const auto& series : all)
        for (const auto& s : series.samples) {
            out += format_timestamp(s.timestamp) + "," + series.location_id + ",";
            out += (s.p_kw ? format_fixed(*s.p_kw, 6) : std::string()) + ",";
            out += (s.q_kvar ? format_fixed(*s.q_kvar, 6) : std::string()) + ",";
            out += (s.i_a ? format_fixed(*s.i_a, 6) : std::string()) + "\n";
        }
    return out;
}

} // namespace fna
