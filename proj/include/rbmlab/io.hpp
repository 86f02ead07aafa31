#pragma once

// Serialization: parameter snapshots (JSON), tabulated distributions (text
// and binary), packed sample dumps (binary), and trajectory CSV I/O.  All
// numeric text output uses shortest round-trip formatting so that seeded
// reruns are byte-identical.

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbmlab/common.hpp"
#include "rbmlab/distribution.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/sampleset.hpp"
#include "rbmlab/train.hpp"
#include "rbmlab/tradeoff.hpp"

namespace rbmlab {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw config_error("cannot parse number: '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Parameter snapshots (JSON)
// ---------------------------------------------------------------------------

inline json rbm_to_json(const RBM& r, const json& meta = json::object()) {
    json j = meta;
    j["format"] = "rbmlab-snapshot";
    j["version"] = 1;
    j["m"] = r.m;
    j["n"] = r.n;
    j["w"] = r.w;  // row-major, visible index outer
    j["a"] = r.a;
    j["b"] = r.b;
    return j;
}

inline RBM rbm_from_json(const json& j) {
    if (!j.is_object() || j.value("format", "") != "rbmlab-snapshot")
        throw config_error("snapshot: missing rbmlab-snapshot format tag");
    RBM r(j.at("m").get<int>(), j.at("n").get<int>());
    std::vector<double> w = j.at("w").get<std::vector<double>>();
    std::vector<double> a = j.at("a").get<std::vector<double>>();
    std::vector<double> b = j.at("b").get<std::vector<double>>();
    if (w.size() != r.w.size() || a.size() != r.a.size() ||
        b.size() != r.b.size())
        throw config_error("snapshot: parameter array sizes disagree with m, n");
    r.w = std::move(w);
    r.a = std::move(a);
    r.b = std::move(b);
    return r;
}

inline void write_rbm_json(const std::filesystem::path& path, const RBM& r,
                           const json& meta = json::object()) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write " + path.string());
    out << rbm_to_json(r, meta).dump(2) << '\n';
}

inline RBM read_rbm_json(const std::filesystem::path& path,
                         json* meta_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read " + path.string());
    json j = json::parse(in);
    if (meta_out) *meta_out = j;
    return rbm_from_json(j);
}

// ---------------------------------------------------------------------------
// Tabulated distributions
// ---------------------------------------------------------------------------

// Text form: a header line, then one "state probability" pair per line with
// states as decimal words (unit 0 = bit 0).
inline void write_table_text(std::ostream& out,
                             const TabulatedDistribution& d) {
    out << "rbmlab-table v1 m=" << d.num_units() << " count=" << d.support_size()
        << '\n';
    for (const auto& [x, p] : d.table())
        out << x << ' ' << format_double(p) << '\n';
}

inline TabulatedDistribution read_table_text(std::istream& in) {
    std::string tag, ver, mfield, cfield;
    in >> tag >> ver >> mfield >> cfield;
    if (tag != "rbmlab-table" || ver != "v1" || mfield.rfind("m=", 0) != 0 ||
        cfield.rfind("count=", 0) != 0)
        throw config_error("tabulated distribution: bad text header");
    int m = std::stoi(mfield.substr(2));
    std::size_t count = std::stoull(cfield.substr(6));
    std::vector<std::pair<state_t, double>> table;
    table.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::uint64_t x;
        std::string p;
        if (!(in >> x >> p))
            throw config_error("tabulated distribution: truncated text table");
        table.emplace_back(static_cast<state_t>(x), parse_double(p));
    }
    return TabulatedDistribution(m, std::move(table));
}

// Binary form: "RBTD", u32 version, u32 m, u64 count, then (u64 state,
// f64 probability) pairs, all little-endian.
inline void write_table_binary(std::ostream& out,
                               const TabulatedDistribution& d) {
    const char magic[4] = {'R', 'B', 'T', 'D'};
    out.write(magic, 4);
    std::uint32_t version = 1, m = static_cast<std::uint32_t>(d.num_units());
    std::uint64_t count = d.support_size();
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&m), 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [x, p] : d.table()) {
        std::uint64_t xs = x;
        out.write(reinterpret_cast<const char*>(&xs), 8);
        out.write(reinterpret_cast<const char*>(&p), 8);
    }
}

inline TabulatedDistribution read_table_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RBTD", 4) != 0)
        throw config_error("tabulated distribution: bad binary magic");
    std::uint32_t version = 0, m = 0;
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&m), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || version != 1)
        throw config_error("tabulated distribution: unsupported binary version");
    std::vector<std::pair<state_t, double>> table;
    table.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        std::uint64_t x;
        double p;
        in.read(reinterpret_cast<char*>(&x), 8);
        in.read(reinterpret_cast<char*>(&p), 8);
        if (!in)
            throw config_error("tabulated distribution: truncated binary table");
        table.emplace_back(static_cast<state_t>(x), p);
    }
    return TabulatedDistribution(static_cast<int>(m), std::move(table));
}

// ---------------------------------------------------------------------------
// Sample dumps
// ---------------------------------------------------------------------------
// "RBSS", u32 version, u32 m, u64 count, u64 seed, then packed rows of
// ceil(m/64) little-endian words each.

inline void write_samples_binary(std::ostream& out, const WideSampleSet& s,
                                 std::uint64_t seed) {
    const char magic[4] = {'R', 'B', 'S', 'S'};
    out.write(magic, 4);
    std::uint32_t version = 1, m = static_cast<std::uint32_t>(s.m);
    std::uint64_t count = s.count;
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&m), 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    out.write(reinterpret_cast<const char*>(&seed), 8);
    out.write(reinterpret_cast<const char*>(s.data.data()),
              static_cast<std::streamsize>(s.data.size() * 8));
}

inline void write_samples_binary(std::ostream& out, const SampleSet& s,
                                 std::uint64_t seed) {
    write_samples_binary(out, WideSampleSet::from(s), seed);
}

inline WideSampleSet read_samples_binary(std::istream& in,
                                         std::uint64_t* seed_out = nullptr) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RBSS", 4) != 0)
        throw config_error("sample dump: bad binary magic");
    std::uint32_t version = 0, m = 0;
    std::uint64_t count = 0, seed = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&m), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    in.read(reinterpret_cast<char*>(&seed), 8);
    if (!in || version != 1)
        throw config_error("sample dump: unsupported binary version");
    WideSampleSet s = WideSampleSet::create(static_cast<int>(m), count);
    in.read(reinterpret_cast<char*>(s.data.data()),
            static_cast<std::streamsize>(s.data.size() * 8));
    if (!in) throw config_error("sample dump: truncated");
    if (seed_out) *seed_out = seed;
    return s;
}

// Narrow view of a wide dump (requires m <= 64).
inline SampleSet narrow_samples(const WideSampleSet& s) {
    if (s.m > 64)
        throw capacity_error("narrow_samples: more than 64 units",
                             "visible layer");
    SampleSet out;
    out.m = s.m;
    out.states.resize(s.count);
    for (std::size_t k = 0; k < s.count; ++k) out.states[k] = s.row(k)[0];
    return out;
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------
// Fixed leading columns, then one column per proxy metric in first-appearance
// order.   Missing values are empty cells.  See schemas/trajectory_csv.md.

inline const std::vector<std::string>& trajectory_fixed_columns() {
    static const std::vector<std::string> cols = {
        "run_id", "seed",       "epoch",   "delta",   "delta_kind", "tau",
        "tau_spread", "tau_reliable", "ctot_model", "sigma_w", "n_cd"};
    return cols;
}

inline std::vector<std::string> proxy_column_order(
    const std::vector<TrajectoryRecord>& records) {
    std::vector<std::string> order;
    for (const TrajectoryRecord& rec : records)
        for (const auto& [name, _] : rec.proxies)
            if (std::find(order.begin(), order.end(), name) == order.end())
                order.push_back(name);
    return order;
}

inline void write_trajectory_csv(std::ostream& out, const std::string& run_id,
                                 std::uint64_t seed,
                                 const std::vector<TrajectoryRecord>& records) {
    std::vector<std::string> proxies = proxy_column_order(records);
    const auto& fixed = trajectory_fixed_columns();
    for (std::size_t i = 0; i < fixed.size(); ++i)
        out << (i ? "," : "") << fixed[i];
    for (const std::string& p : proxies) out << ',' << p;
    out << '\n';
    auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
    for (const TrajectoryRecord& rec : records) {
        out << run_id << ',' << seed << ',' << format_double(rec.epoch) << ','
            << cell(rec.delta) << ',' << rec.delta_kind << ',';
        if (rec.has_tau)
            out << format_double(rec.tau.tau) << ','
                << format_double(rec.tau.spread) << ','
                << (rec.tau.reliable ? 1 : 0);
        else
            out << ",,";
        out << ',' << cell(rec.ctot_model) << ',' << format_double(rec.sigma_w)
            << ',' << rec.n_cd_used;
        for (const std::string& p : proxies) {
            out << ',';
            for (const auto& [name, v] : rec.proxies)
                if (name == p) {
                    out << cell(v);
                    break;
                }
        }
        out << '\n';
    }
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            std::size_t pos = line.find(',', start);
            if (pos == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

// Extracts the post-processing view (epoch, delta, tau, optional training
// loss) from a trajectory CSV.  Rows without a finite delta or tau are
// dropped (they correspond to unmeasured or unreliable points).
inline std::vector<TrajectoryPoint> trajectory_points(const CsvTable& t,
                                                      bool require_tau = true) {
    int ce = t.column("epoch"), cd = t.column("delta"), ct = t.column("tau");
    int ctr = t.column("delta_train");
    if (ce < 0 || cd < 0 || ct < 0)
        throw config_error("trajectory CSV: missing epoch/delta/tau columns");
    std::vector<TrajectoryPoint> pts;
    for (const auto& row : t.rows) {
        TrajectoryPoint p;
        p.epoch = parse_double(row[static_cast<std::size_t>(ce)]);
        p.delta = parse_double(row[static_cast<std::size_t>(cd)]);
        p.tau = parse_double(row[static_cast<std::size_t>(ct)]);
        if (ctr >= 0) p.delta_train = parse_double(row[static_cast<std::size_t>(ctr)]);
        if (!std::isfinite(p.delta)) continue;
        if (require_tau && !std::isfinite(p.tau)) continue;
        if (!std::isfinite(p.tau)) p.tau = 1.0;
        pts.push_back(p);
    }
    return pts;
}

// Full record view of a trajectory CSV (inverse of write_trajectory_csv up
// to fields the CSV does not carry).  Unknown columns are read back as proxy
// metrics, preserving order.
struct TrajectoryFile {
    std::string run_id;
    std::uint64_t seed = 0;
    std::vector<TrajectoryRecord> records;
};

inline TrajectoryFile records_from_csv(const CsvTable& t) {
    const auto& fixed = trajectory_fixed_columns();
    auto is_fixed = [&](const std::string& name) {
        return std::find(fixed.begin(), fixed.end(), name) != fixed.end();
    };
    int c_run = t.column("run_id"), c_seed = t.column("seed");
    int c_epoch = t.column("epoch"), c_delta = t.column("delta");
    int c_kind = t.column("delta_kind"), c_tau = t.column("tau");
    int c_spread = t.column("tau_spread"), c_rel = t.column("tau_reliable");
    int c_ctot = t.column("ctot_model"), c_sw = t.column("sigma_w");
    int c_ncd = t.column("n_cd");
    if (c_epoch < 0 || c_delta < 0)
        throw config_error("trajectory CSV: missing epoch/delta columns");
    TrajectoryFile f;
    auto cell = [&](const std::vector<std::string>& row, int c) {
        return c >= 0 ? row[static_cast<std::size_t>(c)] : std::string();
    };
    for (const auto& row : t.rows) {
        if (f.records.empty()) {
            f.run_id = cell(row, c_run);
            if (c_seed >= 0 && !cell(row, c_seed).empty())
                f.seed = std::stoull(cell(row, c_seed));
        }
        TrajectoryRecord rec;
        rec.epoch = parse_double(cell(row, c_epoch));
        rec.delta = parse_double(cell(row, c_delta));
        rec.delta_kind = cell(row, c_kind);
        std::string tau = cell(row, c_tau);
        if (!tau.empty()) {
            rec.has_tau = true;
            rec.tau.tau = parse_double(tau);
            rec.tau.spread = parse_double(cell(row, c_spread));
            rec.tau.reliable = cell(row, c_rel) == "1";
        }
        rec.ctot_model = parse_double(cell(row, c_ctot));
        rec.sigma_w = parse_double(cell(row, c_sw));
        if (!cell(row, c_ncd).empty()) rec.n_cd_used = std::stoi(cell(row, c_ncd));
        for (std::size_t i = 0; i < t.header.size(); ++i) {
            if (is_fixed(t.header[i])) continue;
            if (i < row.size())
                rec.proxies.emplace_back(t.header[i], parse_double(row[i]));
        }
        f.records.push_back(std::move(rec));
    }
    return f;
}

// Seed-average of several runs of the same configuration: records are
// matched by epoch; numeric fields are averaged over the runs where they are
// present and finite.
inline void write_average_csv(
    std::ostream& out, const std::string& run_id,
    const std::vector<std::vector<TrajectoryRecord>>& runs) {
    std::map<double, std::vector<const TrajectoryRecord*>> by_epoch;
    for (const auto& run : runs)
        for (const TrajectoryRecord& rec : run) by_epoch[rec.epoch].push_back(&rec);

    std::vector<std::string> proxies;
    for (const auto& run : runs)
        for (const std::string& p : proxy_column_order(run))
            if (std::find(proxies.begin(), proxies.end(), p) == proxies.end())
                proxies.push_back(p);

    out << "run_id,n_runs,epoch,delta,tau,tau_spread,ctot_model,sigma_w";
    for (const std::string& p : proxies) out << ',' << p;
    out << '\n';

    auto avg = [](const std::vector<const TrajectoryRecord*>& recs,
                  auto&& getter) -> std::string {
        KahanSum s;
        std::size_t n = 0;
        for (const TrajectoryRecord* r : recs) {
            double v = getter(*r);
            if (std::isfinite(v)) {
                s.add(v);
                n++;
            }
        }
        if (!n) return {};
        return format_double(s.value() / static_cast<double>(n));
    };

    for (const auto& [epoch, recs] : by_epoch) {
        out << run_id << ',' << recs.size() << ',' << format_double(epoch);
        out << ',' << avg(recs, [](const TrajectoryRecord& r) { return r.delta; });
        out << ','
            << avg(recs, [](const TrajectoryRecord& r) {
                   return r.has_tau ? r.tau.tau
                                    : std::numeric_limits<double>::quiet_NaN();
               });
        out << ','
            << avg(recs, [](const TrajectoryRecord& r) {
                   return r.has_tau ? r.tau.spread
                                    : std::numeric_limits<double>::quiet_NaN();
               });
        out << ','
            << avg(recs, [](const TrajectoryRecord& r) { return r.ctot_model; });
        out << ','
            << avg(recs, [](const TrajectoryRecord& r) { return r.sigma_w; });
        for (const std::string& p : proxies) {
            out << ','
                << avg(recs, [&](const TrajectoryRecord& r) {
                       for (const auto& [name, v] : r.proxies)
                           if (name == p) return v;
                       return std::numeric_limits<double>::quiet_NaN();
                   });
        }
        out << '\n';
    }
}

// Fit summary for cmd_tradeoff.
inline json fit_summary_json(const BoundFit& fit, const StageReport& stages,
                             const std::vector<TrajectoryPoint>& pts,
                             double ctot_target) {
    json seg = json::array();
    for (const StageSegment& s : stages.segments) {
        double e0 = pts[s.begin].epoch;
        double e1 = pts[s.end - 1].epoch;
        seg.push_back(json{{"stage", stage_name(s.stage)},
                           {"first_epoch", e0},
                           {"last_epoch", e1},
                           {"points", s.size()}});
    }
    return json{{"alpha", fit.alpha},
                {"c", fit.c},
                {"ctot_target", ctot_target},
                {"early_weighted", fit.early_weighted},
                {"slope_dispersion", fit.slope_dispersion},
                {"n_slopes", fit.n_slopes},
                {"stages", seg}};
}

}  // namespace rbmlab
