// rbmlab command-line driver.
//
// Subcommands:
//   target-info    exact statistics of a target distribution
//   train          grid x seeds training runs with trajectory export
//   tau            integrated autocorrelation audit of a snapshot
//   tradeoff       stage classification and bound fit of trajectories
//   flow           exact gradient-flow integration
//   proxy-metrics  sample-based distance estimates between sample sets
//
// Exit codes: 0 success, 1 partial run failure, 2 unreliable estimate or no
// fit, 3 capacity error, 4 configuration error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rbmlab/autocorr.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/exact.hpp"
#include "rbmlab/flow.hpp"
#include "rbmlab/gibbs.hpp"
#include "rbmlab/io.hpp"
#include "rbmlab/metrics.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/rng.hpp"
#include "rbmlab/sampleset.hpp"
#include "rbmlab/targets/mnist.hpp"
#include "rbmlab/targets/patterns.hpp"
#include "rbmlab/targets/tfic.hpp"
#include "rbmlab/tradeoff.hpp"
#include "rbmlab/train.hpp"

namespace fs = std::filesystem;
using rbmlab::json;

namespace {

// ---------------------------------------------------------------------------
// Target specification
// ---------------------------------------------------------------------------

struct TargetSpec {
    std::string kind;  // tfic | hook | digits | mini | mnist
    // tfic
    int m = 12;
    double g = 1.0;
    std::string basis = "z";
    // hook
    int L = 5;
    double q = 0.1;
    // digits
    int h = 7;
    int w = 5;
    // mnist
    std::string path;

    std::string describe() const {
        std::ostringstream os;
        if (kind == "tfic")
            os << "tfic m=" << m << " g=" << rbmlab::format_double(g)
               << " basis=" << basis;
        else if (kind == "hook")
            os << "hook L=" << L << " q=" << rbmlab::format_double(q);
        else if (kind == "digits")
            os << "digits h=" << h << " w=" << w
               << " q=" << rbmlab::format_double(q);
        else if (kind == "mini")
            os << "mini m=" << m;
        else if (kind == "mnist")
            os << "mnist path=" << path;
        else
            os << "(unset)";
        return os.str();
    }

    int visible_units() const {
        if (kind == "tfic") return m;
        if (kind == "hook") return L * L;
        if (kind == "digits") return h * w;
        if (kind == "mini") return m;
        if (kind == "mnist") return 28 * 28;
        throw rbmlab::config_error("target kind not set");
    }

    // Geometry used for local coarse-graining partitions.
    std::pair<int, int> grid_shape() const {
        if (kind == "hook") return {L, L};
        if (kind == "digits") return {h, w};
        if (kind == "mnist") return {28, 28};
        return {1, visible_units()};
    }
};

void expect_keys(const json& j, const std::set<std::string>& allowed,
                 const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw rbmlab::config_error("unknown key '" + it.key() + "' in " +
                                       where);
}

TargetSpec target_from_json(const json& j) {
    expect_keys(j, {"kind", "m", "g", "basis", "L", "q", "h", "w", "path"},
                "target");
    TargetSpec t;
    t.kind = j.at("kind").get<std::string>();
    if (t.kind == "tfic") {
        t.m = j.at("m").get<int>();
        t.g = j.at("g").get<double>();
        t.basis = j.value("basis", "z");
        if (t.basis != "z" && t.basis != "x")
            throw rbmlab::config_error("tfic basis must be z or x");
    } else if (t.kind == "hook") {
        t.L = j.value("L", 5);
        t.q = j.value("q", 0.1);
    } else if (t.kind == "digits") {
        t.h = j.value("h", 7);
        t.w = j.value("w", 5);
        t.q = j.value("q", 0.1);
    } else if (t.kind == "mini") {
        t.m = j.at("m").get<int>();
    } else if (t.kind == "mnist") {
        t.path = j.at("path").get<std::string>();
    } else {
        throw rbmlab::config_error("unknown target kind: '" + t.kind + "'");
    }
    return t;
}

json target_to_json(const TargetSpec& t) {
    json j{{"kind", t.kind}};
    if (t.kind == "tfic") {
        j["m"] = t.m;
        j["g"] = t.g;
        j["basis"] = t.basis;
    } else if (t.kind == "hook") {
        j["L"] = t.L;
        j["q"] = t.q;
    } else if (t.kind == "digits") {
        j["h"] = t.h;
        j["w"] = t.w;
        j["q"] = t.q;
    } else if (t.kind == "mini") {
        j["m"] = t.m;
    } else if (t.kind == "mnist") {
        j["path"] = t.path;
    }
    return j;
}

rbmlab::TabulatedDistribution build_target(const TargetSpec& t) {
    using namespace rbmlab::targets;
    if (t.kind == "tfic")
        return tfic_ground_state(t.m, t.g,
                                 t.basis == "x" ? TficBasis::x : TficBasis::z);
    if (t.kind == "hook") return hook_distribution(t.L, t.q);
    if (t.kind == "digits") return digit_distribution(t.h, t.w, t.q);
    if (t.kind == "mini") return mini_distribution(t.m);
    if (t.kind == "mnist")
        throw rbmlab::config_error(
            "mnist is an empirical target (no exact table); use the "
            "MNIST-specific paths of target-info / proxy-metrics");
    throw rbmlab::config_error("target kind not set");
}

std::uint64_t table_checksum(const rbmlab::TabulatedDistribution& d) {
    // FNV-1a over the (state, probability) byte stream in table order.
    std::uint64_t hsh = 1469598103934665603ull;
    auto mix = [&](const void* p, std::size_t len) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            hsh ^= b[i];
            hsh *= 1099511628211ull;
        }
    };
    for (const auto& [x, p] : d.table()) {
        std::uint64_t xs = x;
        mix(&xs, 8);
        mix(&p, 8);
    }
    return hsh;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct GridSpec {
    std::vector<int> n_hidden{16};
    std::vector<std::string> algorithm{"cd"};
    std::vector<double> eta{1e-3};
    std::vector<int> batch_size{100};
    std::vector<int> n_cd{1};
    std::vector<double> kappa{1.0};
};

struct ProxySpec {
    bool enabled = false;
    double sigma = 0.0;  // <= 0: calibrate on (test, train) at startup
    int sigma_grid_points = 64;
    int partition_groups = 0;  // 0: skip coarse-grained metrics
    int partition_count = 5;   // number of random partitions
    double partition_threshold = 1.0;
    std::uint64_t partition_seed = 1;
    std::size_t model_samples = 10000;
    std::uint64_t gibbs_thin = 0;  // 0: use last tau estimate if available
    std::uint64_t gibbs_burn = 10000;
};

struct Experiment {
    TargetSpec target;
    std::size_t sample_size = 5000;
    std::size_t test_size = 10000;
    std::vector<std::uint64_t> seeds{1};
    std::uint64_t test_seed = 1000003;
    rbmlab::InitScheme init = rbmlab::InitScheme::gaussian;
    std::int64_t epochs = 1000;
    int measure_per_decade = 8;
    std::vector<std::int64_t> measure_epochs;
    GridSpec grid;
    rbmlab::TauProtocol tau;
    bool measure_tau = true;
    bool measure_train_loss = false;
    bool ctot_model = false;
    std::string delta_mode = "auto";  // auto | exact | empirical | none
    int enum_cap = 25;
    ProxySpec proxy;
    std::string out_dir = "runs/out";
};

template <typename T>
std::vector<T> list_of(const json& j, const char* key,
                       const std::vector<T>& fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<std::vector<T>>();
}

Experiment experiment_from_json(const json& j) {
    expect_keys(j,
                {"target", "sample_size", "test_size", "seeds", "test_seed",
                 "init", "epochs", "measure_per_decade", "measure_epochs",
                 "grid", "tau", "measure_tau", "measure_train_loss",
                 "ctot_model", "delta", "enum_cap", "proxy", "out_dir"},
                "experiment config");
    Experiment e;
    e.target = target_from_json(j.at("target"));
    e.sample_size = j.value("sample_size", e.sample_size);
    e.test_size = j.value("test_size", e.test_size);
    if (j.contains("seeds"))
        e.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    e.test_seed = j.value("test_seed", e.test_seed);
    e.init = rbmlab::parse_init(j.value("init", "gaussian"));
    e.epochs = j.value("epochs", e.epochs);
    e.measure_per_decade = j.value("measure_per_decade", e.measure_per_decade);
    if (j.contains("measure_epochs"))
        e.measure_epochs =
            j.at("measure_epochs").get<std::vector<std::int64_t>>();
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        expect_keys(
            g, {"n_hidden", "algorithm", "eta", "batch_size", "n_cd", "kappa"},
            "grid");
        e.grid.n_hidden = list_of(g, "n_hidden", e.grid.n_hidden);
        e.grid.algorithm = list_of(g, "algorithm", e.grid.algorithm);
        e.grid.eta = list_of(g, "eta", e.grid.eta);
        e.grid.batch_size = list_of(g, "batch_size", e.grid.batch_size);
        e.grid.n_cd = list_of(g, "n_cd", e.grid.n_cd);
        e.grid.kappa = list_of(g, "kappa", e.grid.kappa);
    }
    if (j.contains("tau")) {
        const json& t = j.at("tau");
        expect_keys(t,
                    {"gamma", "r_g", "r_tau", "init_steps", "max_steps",
                     "burn_factor", "mean_spread_tol"},
                    "tau");
        e.tau.gamma = t.value("gamma", e.tau.gamma);
        e.tau.r_g = t.value("r_g", e.tau.r_g);
        e.tau.r_tau = t.value("r_tau", e.tau.r_tau);
        e.tau.init_steps = t.value("init_steps", e.tau.init_steps);
        e.tau.max_steps = t.value("max_steps", e.tau.max_steps);
        e.tau.burn_factor = t.value("burn_factor", e.tau.burn_factor);
        e.tau.mean_spread_tol =
            t.value("mean_spread_tol", e.tau.mean_spread_tol);
    }
    e.measure_tau = j.value("measure_tau", e.measure_tau);
    e.measure_train_loss = j.value("measure_train_loss", e.measure_train_loss);
    e.ctot_model = j.value("ctot_model", e.ctot_model);
    e.delta_mode = j.value("delta", e.delta_mode);
    if (e.delta_mode != "auto" && e.delta_mode != "exact" &&
        e.delta_mode != "empirical" && e.delta_mode != "none")
        throw rbmlab::config_error("delta must be auto|exact|empirical|none");
    e.enum_cap = j.value("enum_cap", e.enum_cap);
    if (j.contains("proxy")) {
        const json& p = j.at("proxy");
        expect_keys(p,
                    {"enabled", "sigma", "sigma_grid_points",
                     "partition_groups", "partition_count",
                     "partition_threshold", "partition_seed", "model_samples",
                     "gibbs_thin", "gibbs_burn"},
                    "proxy");
        e.proxy.enabled = p.value("enabled", e.proxy.enabled);
        e.proxy.sigma = p.value("sigma", e.proxy.sigma);
        e.proxy.sigma_grid_points =
            p.value("sigma_grid_points", e.proxy.sigma_grid_points);
        e.proxy.partition_groups =
            p.value("partition_groups", e.proxy.partition_groups);
        e.proxy.partition_count =
            p.value("partition_count", e.proxy.partition_count);
        e.proxy.partition_threshold =
            p.value("partition_threshold", e.proxy.partition_threshold);
        e.proxy.partition_seed =
            p.value("partition_seed", e.proxy.partition_seed);
        e.proxy.model_samples = p.value("model_samples", e.proxy.model_samples);
        e.proxy.gibbs_thin = p.value("gibbs_thin", e.proxy.gibbs_thin);
        e.proxy.gibbs_burn = p.value("gibbs_burn", e.proxy.gibbs_burn);
    }
    e.out_dir = j.value("out_dir", e.out_dir);
    if (e.seeds.empty()) throw rbmlab::config_error("seeds list is empty");
    std::set<std::uint64_t> uniq(e.seeds.begin(), e.seeds.end());
    if (uniq.size() != e.seeds.size())
        throw rbmlab::config_error("seeds must be distinct");
    return e;
}

json experiment_to_json(const Experiment& e) {
    json tau{{"gamma", e.tau.gamma},
             {"r_g", e.tau.r_g},
             {"r_tau", e.tau.r_tau},
             {"init_steps", e.tau.init_steps},
             {"max_steps", e.tau.max_steps},
             {"burn_factor", e.tau.burn_factor},
             {"mean_spread_tol", e.tau.mean_spread_tol}};
    json grid{{"n_hidden", e.grid.n_hidden},
              {"algorithm", e.grid.algorithm},
              {"eta", e.grid.eta},
              {"batch_size", e.grid.batch_size},
              {"n_cd", e.grid.n_cd},
              {"kappa", e.grid.kappa}};
    json proxy{{"enabled", e.proxy.enabled},
               {"sigma", e.proxy.sigma},
               {"sigma_grid_points", e.proxy.sigma_grid_points},
               {"partition_groups", e.proxy.partition_groups},
               {"partition_count", e.proxy.partition_count},
               {"partition_threshold", e.proxy.partition_threshold},
               {"partition_seed", e.proxy.partition_seed},
               {"model_samples", e.proxy.model_samples},
               {"gibbs_thin", e.proxy.gibbs_thin},
               {"gibbs_burn", e.proxy.gibbs_burn}};
    return json{{"target", target_to_json(e.target)},
                {"sample_size", e.sample_size},
                {"test_size", e.test_size},
                {"seeds", e.seeds},
                {"test_seed", e.test_seed},
                {"init", rbmlab::init_name(e.init)},
                {"epochs", e.epochs},
                {"measure_per_decade", e.measure_per_decade},
                {"measure_epochs", e.measure_epochs},
                {"grid", grid},
                {"tau", tau},
                {"measure_tau", e.measure_tau},
                {"measure_train_loss", e.measure_train_loss},
                {"ctot_model", e.ctot_model},
                {"delta", e.delta_mode},
                {"enum_cap", e.enum_cap},
                {"proxy", proxy},
                {"out_dir", e.out_dir}};
}

struct Cell {
    int index = 0;
    int n_hidden = 0;
    rbmlab::Algorithm algorithm = rbmlab::Algorithm::cd;
    double eta = 0.0;
    int batch_size = 0;
    int n_cd = 1;
    double kappa = 1.0;

    std::string id() const {
        std::ostringstream os;
        os << rbmlab::algorithm_name(algorithm) << "-N" << n_hidden << "-eta"
           << rbmlab::format_double(eta) << "-B" << batch_size << "-k" << n_cd;
        if (algorithm == rbmlab::Algorithm::adaptive_pcd)
            os << "-kappa" << rbmlab::format_double(kappa);
        return os.str();
    }
};

std::vector<Cell> expand_grid(const GridSpec& g) {
    std::vector<Cell> cells;
    for (int nh : g.n_hidden)
        for (const std::string& alg_name : g.algorithm) {
            rbmlab::Algorithm alg = rbmlab::parse_algorithm(alg_name);
            const std::vector<double> kappas =
                alg == rbmlab::Algorithm::adaptive_pcd ? g.kappa
                                                       : std::vector<double>{1.0};
            for (double eta : g.eta)
                for (int bs : g.batch_size)
                    for (int ncd : g.n_cd)
                        for (double kap : kappas) {
                            Cell c;
                            c.index = static_cast<int>(cells.size());
                            c.n_hidden = nh;
                            c.algorithm = alg;
                            c.eta = eta;
                            c.batch_size = bs;
                            c.n_cd = ncd;
                            c.kappa = kap;
                            cells.push_back(c);
                        }
        }
    if (cells.empty()) throw rbmlab::config_error("empty training grid");
    return cells;
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw rbmlab::config_error("cannot write " + p.string());
    out << body;
}

// ---------------------------------------------------------------------------
// target-info
// ---------------------------------------------------------------------------

int cmd_target_info(const TargetSpec& spec, const std::string& json_path,
                    const std::string& dump_path, bool print_table,
                    int enum_cap) {
    json rep{{"target", target_to_json(spec)}};
    if (spec.kind == "mnist") {
        using rbmlab::targets::MnistSplit;
        for (auto [name, split] :
             {std::pair{"train", MnistSplit::train},
              std::pair{"test", MnistSplit::test}}) {
            rbmlab::WideSampleSet s =
                rbmlab::targets::mnist_load(spec.path, split);
            double ent = rbmlab::empirical_entropy(s);
            double ctot = rbmlab::empirical_total_correlation(s);
            std::cout << name << ": images=" << s.count << " m=" << s.m
                      << " entropy=" << rbmlab::format_double(ent)
                      << " total_correlation=" << rbmlab::format_double(ctot)
                      << " (plug-in estimates)\n";
            rep[name] = json{{"images", s.count},
                             {"m", s.m},
                             {"entropy", ent},
                             {"total_correlation", ctot},
                             {"estimator", "plug-in"}};
        }
    } else {
        rbmlab::TabulatedDistribution d = build_target(spec);
        double ent = d.entropy();
        double ctot = d.total_correlation();
        std::uint64_t chk = table_checksum(d);
        char chk_hex[32];
        std::snprintf(chk_hex, sizeof chk_hex, "fnv1a:%016llx",
                      static_cast<unsigned long long>(chk));
        std::cout << "target: " << spec.describe() << '\n'
                  << "m: " << d.num_units() << '\n'
                  << "support: " << d.support_size() << '\n'
                  << "entropy: " << rbmlab::format_double(ent) << '\n'
                  << "total_correlation: " << rbmlab::format_double(ctot)
                  << '\n'
                  << "checksum: " << chk_hex << '\n';
        rep["m"] = d.num_units();
        rep["support"] = d.support_size();
        rep["entropy"] = ent;
        rep["total_correlation"] = ctot;
        rep["checksum"] = chk_hex;

        if (spec.kind == "hook") {
            std::uint64_t counted =
                rbmlab::targets::hook_support_count(spec.L);
            std::cout << "support_by_counting: " << counted << '\n';
            rep["support_by_counting"] = counted;
        } else if (spec.kind == "digits") {
            auto counts =
                rbmlab::targets::digit_support_counts(spec.h, spec.w);
            std::uint64_t sum = 0;
            for (int k = 0; k < 10; ++k) {
                std::cout << "digit_" << k << "_support: " << counts[k] << '\n';
                rep["digit_support"][k] = counts[k];
                sum += counts[k];
            }
            std::cout << "per_digit_sum: " << sum << '\n';
            rep["per_digit_sum"] = sum;
        } else if (spec.kind == "tfic") {
            auto basis = spec.basis == "x" ? rbmlab::targets::TficBasis::x
                                           : rbmlab::targets::TficBasis::z;
            auto gs = rbmlab::targets::tfic_ground_state_vector(spec.m, spec.g);
            auto sym = rbmlab::targets::tfic_symmetry_checks(d, basis);
            double peak = 0.0;
            for (const auto& e : d.table()) peak = std::max(peak, e.second);
            std::cout << "ground_energy: " << rbmlab::format_double(gs.energy)
                      << '\n'
                      << "peak_probability: " << rbmlab::format_double(peak)
                      << '\n'
                      << "symmetry: " << (sym.pass ? "pass" : "FAIL")
                      << " (odd_parity_mass="
                      << rbmlab::format_double(sym.odd_parity_mass)
                      << ", max_flip_asymmetry="
                      << rbmlab::format_double(sym.max_flip_asymmetry) << ")\n";
            rep["ground_energy"] = gs.energy;
            rep["peak_probability"] = peak;
            rep["symmetry_pass"] = sym.pass;
            rep["odd_parity_mass"] = sym.odd_parity_mass;
            rep["max_flip_asymmetry"] = sym.max_flip_asymmetry;
        }

        if (print_table || (spec.kind == "mini" && d.support_size() <= 32)) {
            std::cout << "table:\n";
            for (const auto& [x, p] : d.table()) {
                for (int i = 0; i < d.num_units(); ++i)
                    std::cout << (((x >> i) & 1) ? '1' : '0');
                std::cout << ' ' << rbmlab::format_double(p) << '\n';
            }
        }
        if (!dump_path.empty()) {
            std::ofstream out(dump_path, std::ios::binary);
            if (!out)
                throw rbmlab::config_error("cannot write " + dump_path);
            rbmlab::write_table_binary(out, d);
            std::cout << "table_dump: " << dump_path << '\n';
        }
        (void)enum_cap;
    }
    if (!json_path.empty()) write_text(json_path, rep.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct ProxyContext {
    double sigma = 0.0;
    std::vector<rbmlab::Partition> random_parts;
    rbmlab::Partition local_part;
    bool coarse = false;
    // Cached coarse-grainings of the test set, one per partition (random
    // partitions first, local last).
    std::vector<rbmlab::SampleSet> coarse_test;
    rbmlab::WideSampleSet test_wide;
};

ProxyContext make_proxy_context(const Experiment& e,
                                const rbmlab::SampleSet& test,
                                const rbmlab::SampleSet& first_train) {
    ProxyContext ctx;
    ctx.test_wide = rbmlab::WideSampleSet::from(test);
    if (e.proxy.sigma > 0.0) {
        ctx.sigma = e.proxy.sigma;
    } else {
        auto grid = rbmlab::default_sigma_grid(e.proxy.sigma_grid_points);
        auto cal = rbmlab::calibrate_sigma(test, first_train, grid);
        ctx.sigma = cal.sigma_star;
        std::cout << "calibrated sigma* = " << rbmlab::format_double(ctx.sigma)
                  << " (value " << rbmlab::format_double(cal.value) << ")\n";
    }
    if (e.proxy.partition_groups > 0) {
        ctx.coarse = true;
        int m = e.target.visible_units();
        auto [gh, gw] = e.target.grid_shape();
        rbmlab::Philox prng(e.proxy.partition_seed, 0);
        auto sub = prng.substream("partitions");
        for (int k = 0; k < e.proxy.partition_count; ++k) {
            auto krng = sub.substream(static_cast<std::uint64_t>(k));
            ctx.random_parts.push_back(rbmlab::random_partition(
                m, e.proxy.partition_groups, krng, e.proxy.partition_threshold));
        }
        ctx.local_part = rbmlab::local_partition(
            gh, gw, e.proxy.partition_groups, e.proxy.partition_threshold);
        for (const auto& p : ctx.random_parts)
            ctx.coarse_test.push_back(rbmlab::coarse_grain(test, p));
        ctx.coarse_test.push_back(rbmlab::coarse_grain(test, ctx.local_part));
    }
    return ctx;
}

// Draws samples from the model for proxy evaluation: exactly via the hidden
// layer when it enumerates, otherwise with a thinned Gibbs chain.
rbmlab::SampleSet draw_model_samples(const rbmlab::RBM& r, std::size_t count,
                                     const ProxySpec& proxy, int enum_cap,
                                     double last_tau, rbmlab::Philox rng) {
    if (r.n <= enum_cap)
        return rbmlab::independent_samples_small_n(r, count, rng, enum_cap);
    std::uint64_t thin = proxy.gibbs_thin;
    if (thin == 0)
        thin = std::isfinite(last_tau) && last_tau >= 1.0
                   ? static_cast<std::uint64_t>(std::llround(last_tau))
                   : 1;
    rbmlab::state_t x0 = rbmlab::random_state(r.m, rng);
    rbmlab::ChainState c{x0, 0, 0, rng};
    for (std::uint64_t s = 0; s < proxy.gibbs_burn; ++s)
        rbmlab::gibbs_step(r, c);
    rbmlab::SampleSet out;
    out.m = r.m;
    out.states.reserve(count);
    while (out.states.size() < count) {
        for (std::uint64_t s = 0; s < thin; ++s) rbmlab::gibbs_step(r, c);
        out.states.push_back(c.x);
    }
    return out;
}

int cmd_train(const Experiment& e) {
    if (e.target.kind == "mnist")
        throw rbmlab::config_error(
            "training on the mnist target is not supported (visible layer "
            "exceeds the 64-unit training state); use pattern or tfic "
            "targets");
    rbmlab::TabulatedDistribution target = build_target(e.target);
    const int m = target.num_units();
    if (m > 63)
        throw rbmlab::capacity_error("training requires at most 63 visible units",
                                     "m");

    bool want_exact = e.delta_mode == "auto" || e.delta_mode == "exact";
    bool want_empirical = e.delta_mode == "empirical";
    if ((want_empirical || e.proxy.enabled) && e.test_size == 0)
        throw rbmlab::config_error(
            "test_size must be positive for empirical loss or proxy metrics");

    rbmlab::SampleSet test;
    if (e.test_size > 0) {
        rbmlab::Philox trng(e.test_seed, 0);
        auto sub = trng.substream("test");
        test = rbmlab::sample_from(target, e.test_size, sub);
    }

    std::vector<Cell> cells = expand_grid(e.grid);
    fs::create_directories(e.out_dir);

    json grid_index = json::array();
    for (const Cell& c : cells)
        grid_index.push_back(json{{"cell", c.index},
                                  {"id", c.id()},
                                  {"n_hidden", c.n_hidden},
                                  {"algorithm",
                                   rbmlab::algorithm_name(c.algorithm)},
                                  {"eta", c.eta},
                                  {"batch_size", c.batch_size},
                                  {"n_cd", c.n_cd},
                                  {"kappa", c.kappa}});
    write_text(fs::path(e.out_dir) / "grid.json",
               json{{"config", experiment_to_json(e)}, {"cells", grid_index}}
                       .dump(2) +
                   "\n");

    // Proxy context needs a training set for sigma calibration; use the
    // first seed's so the calibrated sigma is shared across all runs.
    std::optional<ProxyContext> proxy_ctx;
    if (e.proxy.enabled) {
        rbmlab::Philox drng(e.seeds.front(), 0);
        auto sub = drng.substream("data");
        rbmlab::SampleSet first_train =
            rbmlab::sample_from(target, e.sample_size, sub);
        proxy_ctx = make_proxy_context(e, test, first_train);
    }

    int failures = 0;
    for (const Cell& cell : cells) {
        char cell_dir_name[64];
        std::snprintf(cell_dir_name, sizeof cell_dir_name, "cell_%02d",
                      cell.index);
        fs::path cell_dir = fs::path(e.out_dir) /
                            (std::string(cell_dir_name) + "_" + cell.id());
        fs::create_directories(cell_dir);

        std::vector<std::vector<rbmlab::TrajectoryRecord>> seed_records;
        for (std::uint64_t seed : e.seeds) {
            fs::path run_dir = cell_dir / ("seed_" + std::to_string(seed));
            fs::path csv_path = run_dir / "trajectory.csv";
            fs::path done_path = run_dir / "run.done";
            std::string run_id = cell.id() + "-s" + std::to_string(seed);

            if (fs::exists(done_path)) {
                std::ifstream in(csv_path);
                if (in) {
                    auto tf = rbmlab::records_from_csv(rbmlab::read_csv(in));
                    seed_records.push_back(std::move(tf.records));
                    std::cout << run_id << ": done (resumed)\n";
                    continue;
                }
            }
            fs::create_directories(run_dir);
            try {
                rbmlab::Philox master(seed, 0);
                auto drng = master.substream("data");
                rbmlab::SampleSet train_set =
                    rbmlab::sample_from(target, e.sample_size, drng);

                rbmlab::InitParams ip;
                ip.scheme = e.init;
                std::vector<double> means = rbmlab::visible_means(train_set);
                rbmlab::RBM model = rbmlab::make_rbm(
                    m, cell.n_hidden, ip, master.substream("init"), &means);
                rbmlab::write_rbm_json(
                    run_dir / "snapshot_init.json", model,
                    json{{"seed", seed},
                         {"cell", cell.index},
                         {"init", rbmlab::init_name(e.init)},
                         {"epoch", 0}});

                rbmlab::TrainConfig tc;
                tc.algorithm = cell.algorithm;
                tc.eta = cell.eta;
                tc.batch_size = cell.batch_size;
                tc.n_cd = cell.n_cd;
                tc.kappa = cell.kappa;
                tc.epochs = e.epochs;
                tc.measure_epochs =
                    e.measure_epochs.empty()
                        ? rbmlab::geometric_schedule(e.epochs,
                                                     e.measure_per_decade)
                        : e.measure_epochs;
                tc.seed = seed;
                tc.measure_tau = e.measure_tau;
                tc.tau_protocol = e.tau;

                std::vector<rbmlab::Measurer> measurers;
                if (want_exact)
                    measurers.push_back([&target, cap = e.enum_cap](
                                            std::int64_t, const rbmlab::RBM& r,
                                            rbmlab::TrajectoryRecord& rec) {
                        rec.delta = rbmlab::exact_kl_loss(r, target, cap);
                        rec.delta_kind = "exact";
                    });
                else if (want_empirical)
                    measurers.push_back([&test, cap = e.enum_cap](
                                            std::int64_t, const rbmlab::RBM& r,
                                            rbmlab::TrajectoryRecord& rec) {
                        rec.delta = rbmlab::empirical_kl_loss(
                            r, test.states, cap);
                        rec.delta_kind = "empirical";
                    });
                if (e.measure_train_loss)
                    measurers.push_back([&train_set, cap = e.enum_cap](
                                            std::int64_t, const rbmlab::RBM& r,
                                            rbmlab::TrajectoryRecord& rec) {
                        rec.proxies.emplace_back(
                            "delta_train",
                            rbmlab::empirical_kl_loss(r, train_set.states,
                                                      cap));
                    });
                if (e.ctot_model)
                    measurers.push_back([cap = e.enum_cap](
                                            std::int64_t, const rbmlab::RBM& r,
                                            rbmlab::TrajectoryRecord& rec) {
                        rec.ctot_model =
                            rbmlab::model_visible_stats(r, cap)
                                .total_correlation;
                    });
                if (proxy_ctx) {
                    const ProxyContext& ctx = *proxy_ctx;
                    rbmlab::Philox base(seed, 0);
                    auto proxy_stream = base.substream("proxy");
                    double last_tau = std::numeric_limits<double>::quiet_NaN();
                    measurers.push_back(
                        [&ctx, &e, proxy_stream, last_tau](
                            std::int64_t epoch, const rbmlab::RBM& r,
                            rbmlab::TrajectoryRecord& rec) mutable {
                            auto rng = proxy_stream.substream(
                                static_cast<std::uint64_t>(epoch));
                            rbmlab::SampleSet ms = draw_model_samples(
                                r, e.proxy.model_samples, e.proxy, e.enum_cap,
                                last_tau, rng);
                            auto mw = rbmlab::WideSampleSet::from(ms);
                            auto table = rbmlab::build_smoothed_kl_table(
                                ctx.test_wide, mw);
                            rec.proxies.emplace_back(
                                "delta_sigma",
                                rbmlab::smoothed_kl(table, ctx.sigma));
                            if (ctx.coarse) {
                                rbmlab::KahanSum dk, dl;
                                std::size_t nr = ctx.random_parts.size();
                                bool inf_kl = false;
                                for (std::size_t k = 0; k < nr; ++k) {
                                    auto cm = rbmlab::coarse_grain(
                                        ms, ctx.random_parts[k]);
                                    double v = rbmlab::empirical_kl(
                                        ctx.coarse_test[k], cm);
                                    if (std::isinf(v))
                                        inf_kl = true;
                                    else
                                        dk.add(v);
                                    dl.add(rbmlab::l1_distance(
                                        ctx.coarse_test[k], cm));
                                }
                                double dkv =
                                    inf_kl ? std::numeric_limits<
                                                 double>::infinity()
                                           : dk.value() /
                                                 static_cast<double>(nr);
                                auto cl = rbmlab::coarse_grain(
                                    ms, ctx.local_part);
                                rec.proxies.emplace_back("delta_cg_random",
                                                         dkv);
                                rec.proxies.emplace_back(
                                    "delta_cg_local",
                                    rbmlab::empirical_kl(
                                        ctx.coarse_test.back(), cl));
                                rec.proxies.emplace_back(
                                    "l1_cg_random",
                                    dl.value() / static_cast<double>(nr));
                                rec.proxies.emplace_back(
                                    "l1_cg_local",
                                    rbmlab::l1_distance(
                                        ctx.coarse_test.back(), cl));
                            }
                            if (rec.has_tau) last_tau = rec.tau.tau;
                        });
                }

                auto records = rbmlab::train(model, train_set, tc, measurers);

                std::ostringstream csv;
                rbmlab::write_trajectory_csv(csv, run_id, seed, records);
                write_text(csv_path, csv.str());
                rbmlab::write_rbm_json(
                    run_dir / "snapshot_final.json", model,
                    json{{"seed", seed},
                         {"cell", cell.index},
                         {"init", rbmlab::init_name(e.init)},
                         {"epoch", e.epochs}});
                json resolved{{"experiment", experiment_to_json(e)},
                              {"cell", grid_index[static_cast<std::size_t>(
                                  cell.index)]},
                              {"seed", seed}};
                write_text(run_dir / "resolved_config.json",
                           resolved.dump(2) + "\n");
                write_text(done_path, "");
                std::cout << run_id << ": done (" << records.size()
                          << " measurements)\n";
                seed_records.push_back(std::move(records));
            } catch (const std::exception& ex) {
                failures++;
                write_text(run_dir / "run.failed", std::string(ex.what()) + "\n");
                std::cout << run_id << ": FAILED (" << ex.what() << ")\n";
            }
        }
        if (!seed_records.empty()) {
            std::ostringstream avg;
            rbmlab::write_average_csv(avg, cell.id(), seed_records);
            write_text(cell_dir / "average.csv", avg.str());
        }
    }
    if (failures) {
        std::cout << failures << " run(s) failed\n";
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// tau
// ---------------------------------------------------------------------------

int cmd_tau(const std::string& snapshot, const rbmlab::TauProtocol& proto,
            std::uint64_t seed, const std::string& json_path) {
    rbmlab::RBM r = rbmlab::read_rbm_json(snapshot);
    rbmlab::Philox rng(seed, 0);
    auto sub = rng.substream("tau-audit");
    rbmlab::TauDiagnostics diag;
    rbmlab::TauEstimate est = rbmlab::estimate_tau(r, proto, sub, &diag);
    std::cout << "tau: " << rbmlab::format_double(est.tau) << '\n'
              << "spread: " << rbmlab::format_double(est.spread) << '\n'
              << "reliable: " << (est.reliable ? "yes" : "no") << '\n'
              << "degenerate: " << (est.degenerate ? "yes" : "no") << '\n'
              << "steps_per_chain: " << diag.steps_used << '\n'
              << "burn_in: " << diag.burn_in_used << '\n';
    for (std::size_t k = 0; k < diag.rep_taus.size(); ++k)
        std::cout << "repeat_" << k << ": "
                  << rbmlab::format_double(diag.rep_taus[k]) << '\n';
    if (!json_path.empty()) {
        json j{{"tau", est.tau},
               {"spread", est.spread},
               {"reliable", est.reliable},
               {"degenerate", est.degenerate},
               {"steps_per_chain", diag.steps_used},
               {"burn_in", diag.burn_in_used},
               {"repeats", diag.rep_taus}};
        write_text(json_path, j.dump(2) + "\n");
    }
    return est.reliable ? 0 : 2;
}

// ---------------------------------------------------------------------------
// tradeoff
// ---------------------------------------------------------------------------

std::vector<rbmlab::TrajectoryPoint> average_trajectories(
    const std::vector<std::vector<rbmlab::TrajectoryPoint>>& runs) {
    if (runs.size() == 1) return runs.front();
    std::map<double, std::vector<const rbmlab::TrajectoryPoint*>> by_epoch;
    for (const auto& run : runs)
        for (const auto& p : run) by_epoch[p.epoch].push_back(&p);
    std::vector<rbmlab::TrajectoryPoint> out;
    for (const auto& [epoch, pts] : by_epoch) {
        if (pts.size() != runs.size()) continue;  // present in every run only
        rbmlab::TrajectoryPoint acc;
        acc.epoch = epoch;
        rbmlab::KahanSum d, t, dt;
        std::size_t n_train = 0;
        for (const auto* p : pts) {
            d.add(p->delta);
            t.add(p->tau);
            if (std::isfinite(p->delta_train)) {
                dt.add(p->delta_train);
                n_train++;
            }
        }
        double n = static_cast<double>(pts.size());
        acc.delta = d.value() / n;
        acc.tau = t.value() / n;
        acc.delta_train = n_train == pts.size()
                              ? dt.value() / n
                              : std::numeric_limits<double>::quiet_NaN();
        out.push_back(acc);
    }
    return out;
}

int cmd_tradeoff(const std::vector<std::string>& files, double ctot,
                 double tau_tol, int window, double alpha_override,
                 const std::string& json_path) {
    std::vector<std::vector<rbmlab::TrajectoryPoint>> runs;
    for (const std::string& f : files) {
        std::ifstream in(f);
        if (!in) throw rbmlab::config_error("cannot read " + f);
        auto pts = rbmlab::trajectory_points(rbmlab::read_csv(in));
        if (!pts.empty()) runs.push_back(std::move(pts));
    }
    if (runs.empty()) {
        std::cout << "no usable trajectory points; no fit\n";
        return 2;
    }
    std::vector<rbmlab::TrajectoryPoint> pts = average_trajectories(runs);
    if (pts.size() < 2) {
        std::cout << "fewer than two usable points; no fit\n";
        return 2;
    }
    rbmlab::StageReport stages =
        rbmlab::classify_stages(pts, tau_tol, window);
    for (const auto& seg : stages.segments)
        std::cout << rbmlab::stage_name(seg.stage) << ": epochs "
                  << rbmlab::format_double(pts[seg.begin].epoch) << " .. "
                  << rbmlab::format_double(pts[seg.end - 1].epoch) << " ("
                  << seg.size() << " points)\n";
    try {
        rbmlab::BoundFit fit =
            alpha_override > 0.0
                ? rbmlab::fit_bound_fixed_alpha(pts, alpha_override)
                : rbmlab::fit_bound(pts, stages);
        std::cout << "alpha: " << rbmlab::format_double(fit.alpha) << '\n'
                  << "c: " << rbmlab::format_double(fit.c) << '\n';
        if (std::isfinite(ctot))
            std::cout << "c/ctot: " << rbmlab::format_double(fit.c / ctot)
                      << '\n';
        if (fit.early_weighted)
            std::cout << "note: slope dispersion high; alpha taken from the "
                         "early third of the correlation stage\n";
        if (!json_path.empty())
            write_text(json_path,
                       rbmlab::fit_summary_json(fit, stages, pts, ctot)
                               .dump(2) +
                           "\n");
        return 0;
    } catch (const rbmlab::fit_error& ex) {
        std::cout << "no fit: " << ex.what() << '\n';
        return 2;
    }
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

std::vector<double> log_spaced_times(double t_min, double t_end,
                                     int per_decade) {
    std::vector<double> out;
    if (t_min <= 0.0 || t_end <= t_min)
        throw rbmlab::config_error("flow times need 0 < t_min < t_end");
    double step = std::pow(10.0, 1.0 / per_decade);
    for (double t = t_min; t < t_end * (1.0 - 1e-12); t *= step)
        out.push_back(t);
    out.push_back(t_end);
    return out;
}

int cmd_flow(const TargetSpec& spec, int n_hidden, int n_cd, double t_end,
             double t_min, int per_decade, const std::string& init_name,
             std::uint64_t seed, double rel_tol, const std::string& out_csv,
             const std::string& snapshot_out, int enum_cap, int tau_cap) {
    rbmlab::TabulatedDistribution target = build_target(spec);
    int m = target.num_units();
    rbmlab::check_enum_cap(m, enum_cap, "visible layer");

    rbmlab::Philox master(seed, 0);
    // The exact flow needs no training data; hinton uses the target means.
    std::vector<double> means(static_cast<std::size_t>(m), 0.0);
    for (const auto& [x, p] : target.table())
        for (int i = 0; i < m; ++i)
            if ((x >> i) & 1) means[static_cast<std::size_t>(i)] += p;
    rbmlab::InitParams ip;
    ip.scheme = rbmlab::parse_init(init_name);
    rbmlab::RBM model =
        rbmlab::make_rbm(m, n_hidden, ip, master.substream("init"), &means);

    rbmlab::FlowConfig fc;
    fc.t_end = t_end;
    fc.n_cd = n_cd;
    fc.rel_tol = rel_tol;
    fc.enum_cap = enum_cap;
    fc.measure_times = log_spaced_times(t_min, t_end, per_decade);

    rbmlab::FlowResult res = rbmlab::exact_flow(model, target, fc);
    std::cout << "steps: " << res.n_steps << " rejected: " << res.n_rejected
              << " rhs_evals: " << res.n_rhs << '\n';

    std::ostringstream csv;
    csv << "t,delta,tau,ctot_model,sigma_w\n";
    for (const rbmlab::FlowPoint& pt : res.path) {
        const rbmlab::RBM& r = pt.params;
        double delta = rbmlab::exact_kl_loss(r, target, enum_cap);
        double tau = std::numeric_limits<double>::quiet_NaN();
        if (m <= tau_cap) tau = rbmlab::exact_unit_mean_tau(r, nullptr, tau_cap);
        double ctot =
            rbmlab::model_visible_stats(r, enum_cap).total_correlation;
        csv << rbmlab::format_double(pt.t) << ','
            << rbmlab::format_double(delta) << ','
            << (std::isnan(tau) ? std::string()
                                : rbmlab::format_double(tau))
            << ',' << rbmlab::format_double(ctot) << ','
            << rbmlab::format_double(r.sigma_w()) << '\n';
    }
    write_text(out_csv, csv.str());
    std::cout << "trajectory: " << out_csv << " (" << res.path.size()
              << " points)\n";
    if (!snapshot_out.empty())
        rbmlab::write_rbm_json(snapshot_out, res.path.back().params,
                               json{{"t", res.path.back().t}, {"seed", seed}});
    return 0;
}

// ---------------------------------------------------------------------------
// proxy-metrics
// ---------------------------------------------------------------------------

int cmd_proxy_metrics(const std::string& mnist_dir,
                      const std::string& config_path,
                      const std::string& test_dump,
                      const std::string& model_dump,
                      const std::string& snapshot, std::size_t test_count,
                      std::size_t model_count, std::uint64_t test_seed,
                      std::uint64_t model_seed, double sigma, int grid_points,
                      int partition_groups, int partition_count,
                      double partition_threshold, std::uint64_t partition_seed,
                      int grid_h, int grid_w, int enum_cap,
                      const std::string& json_path) {
    using rbmlab::WideSampleSet;
    std::optional<Experiment> exp;
    std::optional<rbmlab::TabulatedDistribution> target;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw rbmlab::config_error("cannot read " + config_path);
        exp = experiment_from_json(json::parse(in));
        if (exp->target.kind != "mnist") target = build_target(exp->target);
    }

    auto load_dump = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw rbmlab::config_error("cannot read " + p);
        return rbmlab::read_samples_binary(in);
    };

    WideSampleSet test_w, base_w;
    std::string test_desc, base_desc;
    if (!test_dump.empty()) {
        test_w = load_dump(test_dump);
        test_desc = test_dump;
    } else if (!mnist_dir.empty()) {
        test_w = rbmlab::targets::mnist_load(mnist_dir,
                                             rbmlab::targets::MnistSplit::test);
        test_desc = "mnist test split";
    } else if (target) {
        std::size_t n = test_count ? test_count : exp->test_size;
        rbmlab::Philox rng(test_seed ? test_seed : exp->test_seed, 0);
        auto sub = rng.substream("test");
        test_w = WideSampleSet::from(rbmlab::sample_from(*target, n, sub));
        test_desc = "target draw (" + std::to_string(n) + ")";
    } else {
        throw rbmlab::config_error(
            "no test set: pass --test-dump, --mnist-dir, or --config");
    }

    if (!model_dump.empty()) {
        base_w = load_dump(model_dump);
        base_desc = model_dump;
    } else if (!snapshot.empty()) {
        rbmlab::RBM r = rbmlab::read_rbm_json(snapshot);
        rbmlab::Philox rng(model_seed ? model_seed : 1, 0);
        auto sub = rng.substream("model-draw");
        std::size_t n = model_count ? model_count : 10000;
        ProxySpec dummy;
        base_w = WideSampleSet::from(draw_model_samples(
            r, n, dummy, enum_cap, std::numeric_limits<double>::quiet_NaN(),
            sub));
        base_desc = "snapshot draw (" + std::to_string(n) + ")";
    } else if (!mnist_dir.empty()) {
        base_w = rbmlab::targets::mnist_load(
            mnist_dir, rbmlab::targets::MnistSplit::train);
        base_desc = "mnist train split";
    } else if (target) {
        std::size_t n = model_count ? model_count : exp->sample_size;
        rbmlab::Philox rng(model_seed ? model_seed : exp->seeds.front(), 0);
        auto sub = rng.substream("data");
        base_w = WideSampleSet::from(rbmlab::sample_from(*target, n, sub));
        base_desc = "target draw (" + std::to_string(n) + ")";
    } else {
        throw rbmlab::config_error(
            "no comparison set: pass --model-dump, --snapshot, --mnist-dir, "
            "or --config");
    }
    if (test_w.m != base_w.m)
        throw rbmlab::config_error("sample sets have different unit counts");

    std::cout << "test: " << test_desc << " (" << test_w.count << " rows)\n"
              << "base: " << base_desc << " (" << base_w.count << " rows)\n";

    json rep{{"test", test_desc},
             {"base", base_desc},
             {"test_rows", test_w.count},
             {"base_rows", base_w.count},
             {"m", test_w.m}};

    if (sigma > 0.0) {
        rbmlab::SmoothedKlTable table =
            rbmlab::build_smoothed_kl_table(test_w, base_w);
        double v = rbmlab::smoothed_kl(table, sigma);
        std::cout << "delta_sigma(" << rbmlab::format_double(sigma)
                  << "): " << rbmlab::format_double(v) << '\n';
        rep["sigma"] = sigma;
        rep["delta_sigma"] = v;
    } else {
        auto cal = rbmlab::calibrate_sigma(test_w, base_w,
                                           rbmlab::default_sigma_grid(grid_points));
        std::cout << "sigma_star: " << rbmlab::format_double(cal.sigma_star)
                  << '\n'
                  << "delta_sigma_min: " << rbmlab::format_double(cal.value)
                  << '\n';
        rep["sigma_star"] = cal.sigma_star;
        rep["delta_sigma_min"] = cal.value;
        json curve = json::array();
        for (const auto& [s, v] : cal.curve)
            curve.push_back(json{{"sigma", s}, {"value", v}});
        rep["curve"] = curve;
    }

    if (partition_groups > 0) {
        int m = test_w.m;
        if (grid_h <= 0 || grid_w <= 0) {
            grid_h = 1;
            grid_w = m;
            if (!mnist_dir.empty()) {
                grid_h = 28;
                grid_w = 28;
            } else if (exp) {
                std::tie(grid_h, grid_w) = exp->target.grid_shape();
            }
        }
        rbmlab::Philox prng(partition_seed, 0);
        auto sub = prng.substream("partitions");
        rbmlab::KahanSum dk, dl;
        bool inf_kl = false;
        for (int k = 0; k < partition_count; ++k) {
            auto krng = sub.substream(static_cast<std::uint64_t>(k));
            auto part = rbmlab::random_partition(m, partition_groups, krng,
                                                 partition_threshold);
            auto ct = rbmlab::coarse_grain(test_w, part);
            auto cb = rbmlab::coarse_grain(base_w, part);
            double v = rbmlab::empirical_kl(ct, cb);
            if (std::isinf(v))
                inf_kl = true;
            else
                dk.add(v);
            dl.add(rbmlab::l1_distance(ct, cb));
        }
        double n = static_cast<double>(partition_count);
        double dkv = inf_kl ? std::numeric_limits<double>::infinity()
                            : dk.value() / n;
        auto local = rbmlab::local_partition(grid_h, grid_w, partition_groups,
                                             partition_threshold);
        auto ct = rbmlab::coarse_grain(test_w, local);
        auto cb = rbmlab::coarse_grain(base_w, local);
        double dloc = rbmlab::empirical_kl(ct, cb);
        double lloc = rbmlab::l1_distance(ct, cb);
        std::cout << "delta_cg_random: " << rbmlab::format_double(dkv) << '\n'
                  << "l1_cg_random: "
                  << rbmlab::format_double(dl.value() / n) << '\n'
                  << "delta_cg_local: " << rbmlab::format_double(dloc) << '\n'
                  << "l1_cg_local: " << rbmlab::format_double(lloc) << '\n';
        rep["delta_cg_random"] = dkv;
        rep["l1_cg_random"] = dl.value() / n;
        rep["delta_cg_local"] = dloc;
        rep["l1_cg_local"] = lloc;
    }
    if (!json_path.empty()) write_text(json_path, rep.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------

void add_target_flags(CLI::App* cmd, TargetSpec& spec) {
    cmd->add_option("--target", spec.kind,
                    "target kind: tfic|hook|digits|mini|mnist");
    cmd->add_option("--m", spec.m, "tfic/mini: number of units");
    cmd->add_option("--g", spec.g, "tfic: transverse field");
    cmd->add_option("--basis", spec.basis, "tfic: z or x");
    cmd->add_option("--L", spec.L, "hook: frame side length");
    cmd->add_option("--q", spec.q, "pattern targets: free-pixel rate");
    cmd->add_option("--height", spec.h, "digits: frame height");
    cmd->add_option("--width", spec.w, "digits: frame width");
    cmd->add_option("--mnist-dir", spec.path, "mnist: data directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rbmlab: exact and sampled diagnostics for small binary RBMs"};
    app.require_subcommand(1);

    // ---- target-info ----
    TargetSpec info_spec;
    std::string info_json, info_dump;
    bool info_print_table = false;
    int info_cap = 25;
    CLI::App* info = app.add_subcommand(
        "target-info", "exact statistics of a target distribution");
    add_target_flags(info, info_spec);
    info->add_option("--json", info_json, "write the report as JSON");
    info->add_option("--dump", info_dump, "write the table in binary form");
    info->add_flag("--print-table", info_print_table, "print every state");
    info->add_option("--enum-cap", info_cap, "enumeration safety cap (bits)");

    // ---- train ----
    std::string train_config;
    std::string train_out, train_seeds, train_algorithm;
    std::int64_t train_epochs = -1;
    std::int64_t train_sample_size = -1, train_test_size = -1;
    double train_eta = 0.0;
    int train_n_hidden = 0, train_batch = 0, train_ncd = 0;
    TargetSpec train_target_flags;
    CLI::App* train = app.add_subcommand(
        "train", "run the training grid and export trajectories");
    train->add_option("--config", train_config, "experiment config (JSON)");
    add_target_flags(train, train_target_flags);
    train->add_option("--out-dir", train_out, "output directory override");
    train->add_option("--epochs", train_epochs, "epoch count override");
    train->add_option("--seeds", train_seeds,
                      "comma-separated seed list override");
    train->add_option("--sample-size", train_sample_size,
                      "training set size override");
    train->add_option("--test-size", train_test_size,
                      "test set size override");
    train->add_option("--eta", train_eta, "learning rate (replaces grid)");
    train->add_option("--n-hidden", train_n_hidden,
                      "hidden units (replaces grid)");
    train->add_option("--batch-size", train_batch,
                      "minibatch size (replaces grid)");
    train->add_option("--n-cd", train_ncd, "chain steps (replaces grid)");
    train->add_option("--algorithm", train_algorithm,
                      "cd|pcd|adaptive_pcd (replaces grid)");
    bool train_dry_run = false;
    train->add_flag("--dry-run", train_dry_run,
                    "validate and print the resolved config, then exit");

    // ---- tau ----
    std::string tau_snapshot, tau_json;
    rbmlab::TauProtocol tau_proto;
    std::uint64_t tau_seed = 1;
    CLI::App* tau = app.add_subcommand(
        "tau", "integrated autocorrelation audit of a snapshot");
    tau->add_option("--snapshot", tau_snapshot, "parameter snapshot (JSON)")
        ->required();
    tau->add_option("--gamma", tau_proto.gamma, "window constant");
    tau->add_option("--r-g", tau_proto.r_g, "chains per estimate");
    tau->add_option("--r-tau", tau_proto.r_tau, "repeats");
    tau->add_option("--init-steps", tau_proto.init_steps,
                    "recorded steps, first attempt");
    tau->add_option("--max-steps", tau_proto.max_steps,
                    "recorded steps cap per chain");
    tau->add_option("--seed", tau_seed, "audit seed");
    tau->add_option("--json", tau_json, "write the report as JSON");

    // ---- tradeoff ----
    std::vector<std::string> to_files;
    double to_ctot = std::numeric_limits<double>::quiet_NaN();
    double to_tau_tol = 0.1, to_alpha = 0.0;
    int to_window = 5;
    std::string to_json;
    CLI::App* tradeoff = app.add_subcommand(
        "tradeoff", "stage classification and bound fit of trajectories");
    tradeoff->add_option("--traj", to_files, "trajectory CSV files")
        ->required()
        ->expected(-1);
    tradeoff->add_option("--ctot", to_ctot,
                         "target total correlation (for c/ctot)");
    tradeoff->add_option("--tau-tol", to_tau_tol,
                         "relative tau band for the first stage");
    tradeoff->add_option("--window", to_window, "smoothing window");
    tradeoff->add_option("--alpha", to_alpha,
                         "fix the exponent instead of fitting it");
    tradeoff->add_option("--json", to_json, "write the fit summary as JSON");

    // ---- flow ----
    TargetSpec flow_spec;
    flow_spec.kind = "mini";
    flow_spec.m = 4;
    int flow_n_hidden = 2, flow_ncd = -1, flow_per_decade = 8;
    double flow_t_end = 1e4, flow_t_min = 0.01, flow_rel_tol = 1e-8;
    std::string flow_init = "gaussian", flow_out = "flow_trajectory.csv";
    std::string flow_snapshot;
    std::uint64_t flow_seed = 1;
    int flow_cap = 25, flow_tau_cap = 14;
    CLI::App* flow =
        app.add_subcommand("flow", "integrate the exact gradient flow");
    add_target_flags(flow, flow_spec);
    flow->add_option("--n-hidden", flow_n_hidden, "hidden units");
    flow->add_option("--n-cd", flow_ncd,
                     "kernel applications (-1 = stationary limit)");
    flow->add_option("--t-end", flow_t_end, "integration end time");
    flow->add_option("--t-min", flow_t_min, "first measurement time");
    flow->add_option("--points-per-decade", flow_per_decade,
                     "measurement density");
    flow->add_option("--init", flow_init, "zeros|gaussian|hinton");
    flow->add_option("--seed", flow_seed, "initialization seed");
    flow->add_option("--rel-tol", flow_rel_tol, "integrator tolerance");
    flow->add_option("--out", flow_out, "trajectory CSV path");
    flow->add_option("--snapshot-out", flow_snapshot,
                     "write the final parameters as JSON");
    flow->add_option("--enum-cap", flow_cap, "enumeration safety cap (bits)");
    flow->add_option("--tau-cap", flow_tau_cap,
                     "exact-tau kernel cap (bits), skip above");

    // ---- proxy-metrics ----
    std::string px_mnist, px_config, px_test_dump, px_model_dump, px_snapshot;
    std::string px_json;
    std::size_t px_test_count = 0, px_model_count = 0;
    std::uint64_t px_test_seed = 0, px_model_seed = 0, px_part_seed = 1;
    double px_sigma = 0.0, px_threshold = 1.0;
    int px_grid_points = 64, px_groups = 0, px_part_count = 5;
    int px_h = 0, px_w = 0, px_cap = 25;
    CLI::App* proxy = app.add_subcommand(
        "proxy-metrics", "sample-based distances between two sample sets");
    proxy->add_option("--mnist-dir", px_mnist, "MNIST directory (test vs train)");
    proxy->add_option("--config", px_config, "experiment config (JSON)");
    proxy->add_option("--test-dump", px_test_dump, "test sample dump");
    proxy->add_option("--model-dump", px_model_dump, "comparison sample dump");
    proxy->add_option("--snapshot", px_snapshot,
                      "draw the comparison set from this snapshot");
    proxy->add_option("--test-count", px_test_count, "test draw size");
    proxy->add_option("--model-count", px_model_count, "comparison draw size");
    proxy->add_option("--test-seed", px_test_seed, "test draw seed");
    proxy->add_option("--model-seed", px_model_seed, "comparison draw seed");
    proxy->add_option("--sigma", px_sigma,
                      "smoothing scale (0 = calibrate on the pair)");
    proxy->add_option("--grid-points", px_grid_points,
                      "calibration grid size");
    proxy->add_option("--partition-groups", px_groups,
                      "coarse-graining groups (0 = skip)");
    proxy->add_option("--partition-count", px_part_count,
                      "number of random partitions");
    proxy->add_option("--partition-threshold", px_threshold,
                      "activation fraction for a coarse unit");
    proxy->add_option("--partition-seed", px_part_seed, "partition seed");
    proxy->add_option("--grid-height", px_h, "local partition grid height");
    proxy->add_option("--grid-width", px_w, "local partition grid width");
    proxy->add_option("--enum-cap", px_cap, "enumeration safety cap (bits)");
    proxy->add_option("--json", px_json, "write the report as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (info->parsed()) {
            if (info_spec.kind.empty())
                throw rbmlab::config_error("target-info requires --target");
            return cmd_target_info(info_spec, info_json, info_dump,
                                   info_print_table, info_cap);
        }
        if (train->parsed()) {
            Experiment e;
            if (!train_config.empty()) {
                std::ifstream in(train_config);
                if (!in)
                    throw rbmlab::config_error("cannot read " + train_config);
                e = experiment_from_json(json::parse(in));
            } else if (!train_target_flags.kind.empty()) {
                e.target = train_target_flags;
            } else {
                throw rbmlab::config_error(
                    "train requires --config or --target");
            }
            if (!train_target_flags.kind.empty() && !train_config.empty())
                e.target = train_target_flags;
            if (!train_out.empty()) e.out_dir = train_out;
            if (train_epochs >= 0) e.epochs = train_epochs;
            if (train_sample_size >= 0)
                e.sample_size = static_cast<std::size_t>(train_sample_size);
            if (train_test_size >= 0)
                e.test_size = static_cast<std::size_t>(train_test_size);
            if (!train_seeds.empty()) {
                e.seeds.clear();
                std::stringstream ss(train_seeds);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    e.seeds.push_back(std::stoull(tok));
            }
            if (train_eta > 0.0) e.grid.eta = {train_eta};
            if (train_n_hidden > 0) e.grid.n_hidden = {train_n_hidden};
            if (train_batch > 0) e.grid.batch_size = {train_batch};
            if (train_ncd > 0) e.grid.n_cd = {train_ncd};
            if (!train_algorithm.empty()) e.grid.algorithm = {train_algorithm};
            if (train_dry_run) {
                std::cout << experiment_to_json(e).dump(2) << '\n';
                return 0;
            }
            return cmd_train(e);
        }
        if (tau->parsed())
            return cmd_tau(tau_snapshot, tau_proto, tau_seed, tau_json);
        if (tradeoff->parsed())
            return cmd_tradeoff(to_files, to_ctot, to_tau_tol, to_window,
                                to_alpha, to_json);
        if (flow->parsed())
            return cmd_flow(flow_spec, flow_n_hidden, flow_ncd, flow_t_end,
                            flow_t_min, flow_per_decade, flow_init, flow_seed,
                            flow_rel_tol, flow_out, flow_snapshot, flow_cap,
                            flow_tau_cap);
        if (proxy->parsed())
            return cmd_proxy_metrics(
                px_mnist, px_config, px_test_dump, px_model_dump, px_snapshot,
                px_test_count, px_model_count, px_test_seed, px_model_seed,
                px_sigma, px_grid_points, px_groups, px_part_count,
                px_threshold, px_part_seed, px_h, px_w, px_cap, px_json);
    } catch (const rbmlab::capacity_error& ex) {
        std::cerr << "capacity error: " << ex.what() << '\n';
        return 3;
    } catch (const rbmlab::config_error& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return 4;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
