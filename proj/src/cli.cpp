#include "bmc/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <variant>

#include "CLI11.hpp"
#include "json.hpp"

#include "bmc/error.hpp"
#include "bmc/expr.hpp"
#include "bmc/mdp.hpp"
#include "bmc/moments.hpp"
#include "bmc/variance.hpp"

namespace bmc::cli {

using json = nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
    return parts;
}

// JSON text with every float at 17 significant digits.
void dump(const json& j, std::string& out, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
    const std::string end_pad(static_cast<std::size_t>(indent * depth), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) { out += "{}"; return; }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad + json(it.key()).dump() + ": ";
                dump(it.value(), out, indent, depth + 1);
            }
            out += "\n" + end_pad + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) { out += "[]"; return; }
            out += "[";
            bool first = true;
            for (const auto& v : j) {
                if (!first) out += ", ";
                first = false;
                dump(v, out, indent, depth + 1);
            }
            out += "]";
            return;
        }
        case json::value_t::number_float: {
            const double v = j.get<double>();
            out += std::isfinite(v) ? fmt(v) : "null";
            return;
        }
        default: out += j.dump();
    }
}

std::string to_text(const json& j) {
    std::string s;
    dump(j, s, 2, 0);
    s += "\n";
    return s;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw ConfigError("failed writing '" + path + "'");
}

// ------------------------------------------------------------- option table

using Target = std::variant<std::string*, double*, int*, std::uint64_t*>;

struct Field {
    std::string key;
    Target target;
    std::string help;
};

std::vector<Field> fields_for(const std::string& cmd, ExperimentConfig& c) {
    std::vector<Field> f = {
        {"kernel", &c.kernel, "beta_mixture | two_state | grid_custom"},
        {"p", &c.p, "stay probability of two_state"},
        {"grid", &c.grid, "grid nodes for beta_mixture and grid_custom"},
        {"quadrature", &c.quadrature, "gregory | trapezoid"},
        {"density", &c.density, "grid_custom density in x, y"},
    };
    auto add = [&](std::initializer_list<Field> more) { f.insert(f.end(), more); };
    const Field fn{"f", &c.f, "expression in x, or indicator:K"};
    const Field seq[] = {{"mode", &c.mode, "single | all | explicit"},
                         {"fs", &c.fs, "explicit terms f_0;f_1;..."}};
    const Field sampling[] = {{"n", &c.n, "depth"},
                              {"B", &c.replicas, "replicas"},
                              {"seed", &c.seed, "master seed"},
                              {"threads", &c.threads, "worker threads (0: BMC_THREADS or hardware)"}};
    const Field init{"init", &c.init, "stationary | point:X | beta:A,B"};
    const Field out{"out", &c.out, "output path (default stdout)"};
    const Field tol{"tol", &c.tol, "series tolerance"};

    if (cmd == "simulate") {
        add({fn, seq[0], seq[1], sampling[0], sampling[1], sampling[2], sampling[3], init, out});
    } else if (cmd == "variance") {
        add({fn, seq[0], seq[1], tol, out});
    } else if (cmd == "rate") {
        add({fn, seq[0], seq[1], sampling[0], sampling[1], sampling[2], sampling[3], init, tol,
             {"beta", &c.beta, "speed exponent in (0, 1)"},
             {"speed", &c.speed, "auto | sub | crit"},
             {"deltas", &c.deltas, "comma-separated thresholds"},
             {"probe", &c.probe, "none | wrong-speed"},
             out,
             {"meta", &c.meta, "metadata JSON path (default: <out>.json)"}});
    } else if (cmd == "verify-moments") {
        add({fn, sampling[0], sampling[1], sampling[2], sampling[3], {"x", &c.x, "start state"}, out});
    } else if (cmd == "decompose") {
        add({fn, seq[0], seq[1], sampling[0], sampling[1], sampling[2], sampling[3], init, tol,
             {"cut", &c.cut, "cut generation p (0: default schedule)"}, out});
    } else if (cmd == "spectral") {
        add({out});
    }
    return f;
}

json field_value(const Field& f) {
    return std::visit([](auto* p) { return json(*p); }, f.target);
}

std::string json_to_arg(const std::string& key, const json& v) {
    switch (v.type()) {
        case json::value_t::string: return v.get<std::string>();
        case json::value_t::number_integer: return std::to_string(v.get<long long>());
        case json::value_t::number_unsigned: return std::to_string(v.get<unsigned long long>());
        case json::value_t::number_float: return fmt(v.get<double>());
        default: throw ConfigError("config key '" + key + "' must be a string or a number");
    }
}

// ------------------------------------------------------------ subcommands

SpacePtr space_of(const BranchingKernel& k) { return k.space_ptr(); }

std::vector<double> run_functional(const BranchingKernel& kernel, const FunctionSeq& fseq,
                                   const ExperimentConfig& c) {
    EnsembleConfig ec;
    ec.replicas = c.replicas;
    ec.depth = c.n;
    ec.seed = c.seed;
    ec.nu = InitialDistribution::parse(c.init);
    ec.threads = c.threads;
    validate(ec);
    const int n = c.n;
    return sample_ensemble(kernel, ec, [&fseq, n](const TreeSample& t) { return n_functional(t, fseq, n); });
}

void cmd_simulate(const ExperimentConfig& c, std::ostream& out) {
    BranchingKernel kernel = make_kernel(c);
    const Vector mu = invariant_measure(kernel.mean_operator());
    const FunctionSeq fseq = make_sequence(c, space_of(kernel), mu);
    const std::vector<double> v = run_functional(kernel, fseq, c);
    std::string text = "replica,value\n";
    for (std::size_t r = 0; r < v.size(); ++r) text += std::to_string(r) + "," + fmt(v[r]) + "\n";
    write_output(c.out, text, out);
}

json variance_json(const ExperimentConfig& c, const KernelPack& pack, const VarianceResult& v) {
    json j;
    j["kernel"] = pack.kernel.id();
    j["mode"] = c.mode;
    j["regime"] = to_string(v.regime);
    j["alpha"] = pack.alpha;
    j["M"] = pack.m_estimate;
    j["sigma"] = v.sigma;
    j["sigma1"] = v.sigma1;
    j["sigma2"] = v.sigma2;
    j["terms1"] = v.terms1;
    j["terms2"] = v.terms2;
    j["truncation_bound"] = v.truncation_bound;
    return j;
}

void cmd_variance(const ExperimentConfig& c, std::ostream& out) {
    const KernelPack pack = KernelPack::analyze(make_kernel(c));
    const FunctionSeq fseq = make_sequence(c, pack.kernel.space_ptr(), pack.mu);
    const VarianceResult v = sigma(fseq, pack, c.tol);
    write_output(c.out, to_text(variance_json(c, pack, v)), out);
}

void cmd_rate(const ExperimentConfig& c, std::ostream& out) {
    const KernelPack pack = KernelPack::analyze(make_kernel(c));
    const FunctionSeq fseq = make_sequence(c, pack.kernel.space_ptr(), pack.mu);
    const VarianceResult v = sigma(fseq, pack, c.tol);

    SpeedSequence::Family family;
    if (c.speed == "auto")
        family = pack.regime == Regime::Critical ? SpeedSequence::Family::CriticalPower
                                                 : SpeedSequence::Family::SubCriticalPower;
    else if (c.speed == "sub")
        family = SpeedSequence::Family::SubCriticalPower;
    else if (c.speed == "crit")
        family = SpeedSequence::Family::CriticalPower;
    else
        throw ConfigError("speed must be auto, sub or crit");
    const SpeedSequence speed(family, c.beta);
    if (c.probe != "none" && c.probe != "wrong-speed") throw ConfigError("probe must be none or wrong-speed");
    const double b = speed(c.n);
    const std::vector<double> deltas =
        c.deltas.empty() ? default_delta_grid(v.sigma, b, static_cast<std::uint64_t>(c.replicas)) : parse_list(c.deltas);
    for (double d : deltas)
        if (!(d > 0.0)) throw ConfigError("thresholds must be positive");

    const std::vector<double> samples = run_functional(pack.kernel, fseq, c);
    RateCurve curve;
    if (c.probe == "wrong-speed") {
        curve = wrong_speed_probe(samples, b, c.n, deltas, v.sigma);
    } else {
        const Normalization norm =
            pack.regime == Regime::Critical ? Normalization::Critical : Normalization::SubCritical;
        curve = empirical_rate(samples, b, c.n, deltas, norm, v.sigma);
    }
    curve.seed = c.seed;
    curve.speed = speed.to_string();

    std::string text = "delta,count,empirical_rate,exact_rate\n";
    for (const RatePoint& pt : curve.points) {
        text += fmt(pt.delta) + "," + std::to_string(pt.count) + ",";
        if (pt.empirical) text += fmt(*pt.empirical);
        text += "," + fmt(pt.exact) + "\n";
    }
    write_output(c.out, text, out);

    std::string meta_path = c.meta;
    if (meta_path.empty() && !c.out.empty() && c.out != "-") meta_path = c.out + ".json";
    if (!meta_path.empty()) {
        json m;
        m["kernel"] = pack.kernel.id();
        m["regime"] = to_string(pack.regime);
        m["alpha"] = pack.alpha;
        m["n"] = curve.n;
        m["B"] = curve.replicas;
        m["seed"] = curve.seed;
        m["init"] = InitialDistribution::parse(c.init).to_string();
        m["speed"] = curve.speed;
        m["b_n"] = curve.b_n;
        m["sigma"] = curve.sigma;
        m["normalization"] = curve.normalization;
        m["probe"] = c.probe;
        write_output(meta_path, to_text(m), out);
    }
}

void cmd_verify_moments(const ExperimentConfig& c, std::ostream& out) {
    BranchingKernel kernel = make_kernel(c);
    const Vector mu = invariant_measure(kernel.mean_operator());
    const GridFunction ft = center(make_function(c.f, kernel.space_ptr()), mu);
    EnsembleConfig ec;
    ec.replicas = c.replicas;
    ec.depth = c.n;
    ec.seed = c.seed;
    ec.nu = InitialDistribution::point(c.x);
    ec.threads = c.threads;
    validate(ec);
    const int n = c.n;
    std::vector<double> mean_or(static_cast<std::size_t>(n) + 1), second_or(mean_or.size());
    for (int k = 0; k <= n; ++k) {
        mean_or[k] = mean_oracle(kernel, ft, k, c.x);
        second_or[k] = second_moment_oracle(kernel, ft, k, c.x);
    }
    const auto rows = sample_ensemble(kernel, ec, [&ft, n](const TreeSample& t) {
        std::vector<double> m(static_cast<std::size_t>(n) + 1);
        for (int k = 0; k <= n; ++k) m[k] = m_generation(t, ft, k);
        return m;
    });

    const double b = static_cast<double>(rows.size());
    std::string text = "moment,generation,oracle,mc_estimate,std_error,z\n";
    auto row = [&](const char* name, int k, double oracle, int power) {
        std::vector<double> v(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) v[r] = std::pow(rows[r][k], power);
        const double mean = pairwise_sum(v.data(), v.size()) / b;
        for (double& x : v) x = (x - mean) * (x - mean);
        const double var = rows.size() > 1 ? pairwise_sum(v.data(), v.size()) / (b - 1.0) : 0.0;
        const double se = std::sqrt(var / b);
        const double diff = mean - oracle;
        const double z = se > 0.0 ? diff / se : (std::abs(diff) <= 1e-12 * (1.0 + std::abs(oracle)) ? 0.0 : INFINITY);
        text += csv_field(name) + "," + std::to_string(k) + "," + fmt(oracle) + "," + fmt(mean) + "," + fmt(se) +
                "," + fmt(z) + "\n";
    };
    for (int k = 0; k <= n; ++k) row("mean", k, mean_or[k], 1);
    for (int k = 0; k <= n; ++k) row("second", k, second_or[k], 2);
    write_output(c.out, text, out);
}

void cmd_decompose(const ExperimentConfig& c, std::ostream& out) {
    const KernelPack pack = KernelPack::analyze(make_kernel(c));
    const FunctionSeq fseq = make_sequence(c, pack.kernel.space_ptr(), pack.mu);
    DecompositionConfig dc;
    dc.n = c.n;
    dc.regime = pack.regime;
    dc.p = c.cut > 0 ? c.cut : default_p(c.n, pack.regime);
    const DecompositionOracles oracles(pack.kernel, fseq, dc);

    EnsembleConfig ec;
    ec.replicas = c.replicas;
    ec.depth = c.n;
    ec.seed = c.seed;
    ec.nu = InitialDistribution::parse(c.init);
    ec.threads = c.threads;
    validate(ec);
    const auto reports = sample_ensemble(pack.kernel, ec, [&oracles](const TreeSample& t) { return oracles(t); });

    std::string text = "replica,N,delta,r0,r1,r2,bracket,residual\n";
    for (std::size_t r = 0; r < reports.size(); ++r) {
        const DecompositionReport& d = reports[r];
        text += std::to_string(r) + "," + fmt(d.n_value) + "," + fmt(d.delta) + "," + fmt(d.r0) + "," + fmt(d.r1) +
                "," + fmt(d.r2) + "," + fmt(d.bracket) + "," + fmt(d.residual) + "\n";
    }
    write_output(c.out, text, out);
}

void cmd_spectral(const ExperimentConfig& c, std::ostream& out) {
    const BranchingKernel kernel = make_kernel(c);
    const MarkovOperator& q = kernel.mean_operator();
    const Vector mu = invariant_measure(q);
    const ErgodicityRate er = ergodicity_rate(q, mu);
    json j;
    j["kernel"] = kernel.id();
    j["states"] = q.size();
    j["alpha"] = er.alpha;
    j["M_estimate"] = er.m_estimate;
    j["regime"] = er.degenerate ? std::string("degenerate") : to_string(classify_regime(er.alpha));
    json ev = json::array();
    for (const Complex& z : eigenvalues(q)) ev.push_back(json::array({z.real(), z.imag()}));
    j["eigenvalues"] = ev;
    json nodes = json::array(), mass = json::array();
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        nodes.push_back(q.space().nodes()[i]);
        mass.push_back(mu[i]);
    }
    j["nodes"] = nodes;
    j["mu"] = mass;
    write_output(c.out, to_text(j), out);
}

const std::map<std::string, std::string>& commands() {
    static const std::map<std::string, std::string> m = {
        {"simulate", "per-replica values of the normalized additive functional"},
        {"variance", "asymptotic variance of the additive functional"},
        {"rate", "empirical versus exact moderate-deviation rate"},
        {"verify-moments", "Monte Carlo moments against the exact oracles"},
        {"decompose", "martingale decomposition diagnostics per replica"},
        {"spectral", "invariant measure, spectrum and ergodicity constants"},
    };
    return m;
}

int dispatch(const std::string& cmd, const ExperimentConfig& c, std::ostream& out) {
    if (cmd == "simulate") cmd_simulate(c, out);
    else if (cmd == "variance") cmd_variance(c, out);
    else if (cmd == "rate") cmd_rate(c, out);
    else if (cmd == "verify-moments") cmd_verify_moments(c, out);
    else if (cmd == "decompose") cmd_decompose(c, out);
    else if (cmd == "spectral") cmd_spectral(c, out);
    return 0;
}

// Splices the keys of a --config file in front of the explicit flags.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const std::string& cmd,
                                       ExperimentConfig& scratch) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty() || cmd.empty()) return args;

    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config '" + path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config '" + path + "' must hold a JSON object");

    const std::vector<Field> fields = fields_for(cmd, scratch);
    std::vector<std::string> injected;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "command") {
            if (!it.value().is_string() || it.value().get<std::string>() != cmd)
                throw ConfigError("config '" + path + "' was written for another subcommand");
            continue;
        }
        const Field* field = nullptr;
        for (const Field& fd : fields)
            if (fd.key == it.key()) field = &fd;
        if (!field) throw ConfigError("config key '" + it.key() + "' does not apply to " + cmd);
        const std::string value = json_to_arg(it.key(), it.value());
        // CLI11 cannot take an empty value; only keys that default to empty
        // may be left blank.
        if (value.empty()) {
            if (field_value(*field) != json("")) throw ConfigError("config key '" + it.key() + "' is empty");
            continue;
        }
        injected.push_back("--" + it.key() + "=" + value);
    }

    std::vector<std::string> out;
    bool placed = false;
    for (const std::string& a : args) {
        out.push_back(a);
        if (!placed && a == cmd) {
            out.insert(out.end(), injected.begin(), injected.end());
            placed = true;
        }
    }
    return out;
}

}  // namespace

KernelParams kernel_params(const ExperimentConfig& c) {
    KernelParams k;
    k.p = c.p;
    k.grid_nodes = c.grid;
    if (c.quadrature == "gregory") k.quadrature = Quadrature::Gregory;
    else if (c.quadrature == "trapezoid") k.quadrature = Quadrature::Trapezoid;
    else throw ConfigError("quadrature must be gregory or trapezoid");
    k.density = c.density;
    return k;
}

BranchingKernel make_kernel(const ExperimentConfig& c) { return builtin_kernel(c.kernel, kernel_params(c)); }

GridFunction make_function(const std::string& spec, const SpacePtr& space) {
    const std::string s = trim(spec);
    if (s.rfind("indicator:", 0) == 0) {
        if (!space->is_finite()) throw ConfigError("indicator functions need a finite state space");
        int k = 0;
        try {
            std::size_t used = 0;
            k = std::stoi(s.substr(10), &used);
            if (used != s.size() - 10) throw ConfigError("");
        } catch (const std::exception&) {
            throw ConfigError("bad indicator '" + s + "'");
        }
        return GridFunction::indicator(space, k);
    }
    const auto compiled = std::make_shared<expr::Compiled>(*expr::parse(s));
    return GridFunction::from(space, [compiled](double x) { return (*compiled)(x); });
}

FunctionSeq make_sequence(const ExperimentConfig& c, const SpacePtr& space, const Vector& mu) {
    if (c.mode == "single") return FunctionSeq::single_generation(make_function(c.f, space), mu);
    if (c.mode == "all") return FunctionSeq::all_generations(make_function(c.f, space), mu);
    if (c.mode == "explicit") {
        if (trim(c.fs).empty()) throw ConfigError("explicit mode needs --fs");
        std::vector<GridFunction> fs;
        for (const std::string& term : split(c.fs, ';')) fs.push_back(make_function(term, space));
        return FunctionSeq::explicit_list(fs, mu);
    }
    throw ConfigError("mode must be single, all or explicit");
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> v;
    for (const std::string& item : split(text, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double d = 0.0;
        try {
            d = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw ConfigError("bad number '" + item + "'");
        v.push_back(d);
    }
    return v;
}

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
    // Find the subcommand before CLI11 sees the arguments, so the config file
    // can be spliced in as ordinary flags that later flags override.
    std::string cmd;
    for (const std::string& a : args_in)
        if (commands().count(a)) {
            cmd = a;
            break;
        }

    ExperimentConfig cfg;
    CLI::App app{"Bifurcating Markov chain simulation and moderate-deviation diagnostics", "bmc"};
    app.require_subcommand(1);
    std::map<std::string, CLI::App*> subs;
    std::string config_path, emit_path;
    for (const auto& [name, help] : commands()) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        for (const Field& f : fields_for(name, cfg)) {
            CLI::Option* opt = std::visit([&](auto* p) { return sub->add_option("--" + f.key, *p, f.help); }, f.target);
            opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
            opt->allow_extra_args(false);
        }
        sub->add_option("--config", config_path, "JSON file of flag values; flags override it");
        sub->add_option("--emit-config", emit_path, "write the effective configuration as JSON");
        subs[name] = sub;
    }

    try {
        ExperimentConfig scratch;
        const std::vector<std::string> args = expand_config(args_in, cmd, scratch);
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        err << "bmc: " << e.what() << "\n";
        return 1;
    }

    try {
        if (!emit_path.empty()) {
            json j;
            j["command"] = cmd;
            for (const Field& f : fields_for(cmd, cfg)) j[f.key] = field_value(f);
            write_output(emit_path, to_text(j), out);
        }
        return dispatch(cmd, cfg, out);
    } catch (const ConfigError& e) {
        err << "bmc: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "bmc: numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "bmc: numerical failure: " << e.what() << "\n";
        return 2;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace bmc::cli
