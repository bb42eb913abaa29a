// arqcd: simulate AR disturbances, run detectors and Monte-Carlo campaigns.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.
// Every command validates its whole configuration before computing anything.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "arqcd/experiment.hpp"
#include "arqcd/io.hpp"

namespace {

using namespace arqcd;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Options {
    std::string model_path;
    std::string t0 = "inf";
    long len = 1000;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string trajectory;
    std::string detector = "ergodic";
    std::optional<double> threshold;
    std::optional<double> gamma;
    double beta = 1e-3;
    double eps = 1e-4;
    int reps = 2000;
    long horizon = 10000;
    int workers = 1;
    std::vector<double> gammas;
    std::vector<std::string> detectors{"ergodic", "stationary"};
    long burn_in = 1000;
};

/// Loads, validates and lifts the model; q > 1 models run on length-q blocks.
FirstOrderModel<double> load_first_order(const std::string &path) {
    const auto ar = io::load_model(path);
    const auto report = validate_model(ar);
    for (const auto &f : report.findings) {
        if (f.severity == Finding::Severity::kWarning) {
            std::cerr << "warning: " << f.message << '\n';
        }
    }
    if (ar.order() > 1) {
        std::cerr << "note: order-" << ar.order() << " model lifted to blocks of " << ar.order()
                  << " samples; times are in block units\n";
    }
    return lift_to_first_order(ar);
}

std::optional<long> parse_t0(const std::string &text) {
    if (text == "inf") {
        return std::nullopt;
    }
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(text, &pos);
    } catch (const std::exception &) {
        pos = 0;
    }
    if (pos != text.size() || v < 1) {
        throw ConfigError("--t0 must be a positive integer or 'inf'");
    }
    return v;
}

std::uint64_t require_seed(const Options &o) {
    if (!o.seed) {
        throw ConfigError("--seed is required for this command");
    }
    return *o.seed;
}

int effective_workers(const Options &o) {
    int workers = o.workers;
    if (const char *env = std::getenv("ARQCD_WORKERS"); env && *env) {
        try {
            workers = std::stoi(env);
        } catch (const std::exception &) {
            throw ConfigError("ARQCD_WORKERS must be an integer");
        }
    }
    if (workers < 1) {
        throw ConfigError("worker count must be >= 1");
    }
    return workers;
}

DetectorSpec detector_spec(const std::string &name, const Options &o, int dim) {
    DetectorSpec spec{parse_detector_kind(name), std::nullopt};
    if (spec.kind == DetectorKind::kOga) {
        if (!(o.beta > 0) || !(o.eps > 0)) {
            throw ConfigError("--beta and --eps must be positive");
        }
        auto params = OgaParams<double>::defaults(dim);
        params.beta = o.beta;
        params.eps = o.eps;
        spec.oga = params;
    }
    return spec;
}

double threshold_from(const Options &o) {
    if (o.threshold.has_value() == o.gamma.has_value()) {
        throw ConfigError("exactly one of --threshold or --gamma is required");
    }
    if (o.gamma) {
        return select_threshold(*o.gamma);
    }
    if (!(*o.threshold > 0) || !std::isfinite(*o.threshold)) {
        throw ConfigError("--threshold must be positive");
    }
    return *o.threshold;
}

McConfig mc_config(const Options &o) {
    McConfig cfg;
    cfg.replicates = o.reps;
    cfg.max_horizon = o.horizon;
    cfg.master_seed = require_seed(o);
    cfg.burn_in = o.burn_in;
    cfg.workers = effective_workers(o);
    if (cfg.replicates < 1 || cfg.max_horizon < 1 || cfg.burn_in < 0) {
        throw ConfigError("--reps and --horizon must be >= 1, --burn-in >= 0");
    }
    return cfg;
}

/// Writes to --out when given, stdout otherwise.
void emit(const Options &o, const std::function<void(std::ostream &)> &write) {
    if (o.out.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream file(o.out, std::ios::binary);
    if (!file) {
        throw std::runtime_error("cannot open " + o.out + " for writing");
    }
    write(file);
}

void print_warnings(const ExperimentResult &r) {
    for (const auto &w : r.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
}

using Job = std::function<void()>;

Job plan_simulate(const Options &o) {
    const auto f = load_first_order(o.model_path);
    const ChangeConfig<double> cfg{parse_t0(o.t0), o.len, std::nullopt};
    const auto seed = require_seed(o);
    if (o.len < 1 || (cfg.change_point && *cfg.change_point > o.len)) {
        throw ConfigError("--len must be >= 1 and --t0 must not exceed it");
    }
    return [=] {
        const auto traj = generate_trajectory(f, cfg, seed);
        emit(o, [&](std::ostream &out) { io::write_trajectory_csv(out, traj); });
    };
}

Job plan_detect(const Options &o) {
    const auto f = load_first_order(o.model_path);
    const auto spec = detector_spec(o.detector, o, f.dim());
    const double threshold = threshold_from(o);
    std::vector<VectorXd> observations;
    if (!o.trajectory.empty()) {
        std::ifstream in(o.trajectory);
        if (!in) {
            throw ConfigError("cannot open trajectory " + o.trajectory);
        }
        observations = io::read_trajectory_csv(in).observations;
        if (observations.empty() || observations.front().size() != f.dim()) {
            throw ConfigError("trajectory dimension does not match the model");
        }
    } else {
        const ChangeConfig<double> cfg{parse_t0(o.t0), o.len, std::nullopt};
        const auto seed = require_seed(o);
        if (o.len < 1 || (cfg.change_point && *cfg.change_point > o.len)) {
            throw ConfigError("--len must be >= 1 and --t0 must not exceed it");
        }
        observations = generate_trajectory(f, cfg, seed).observations;
    }
    return [=] {
        const auto trace = trace_detector(f, spec, observations, threshold);
        if (trace.alarm) {
            std::cout << "tau=" << trace.alarm->stopping_time
                      << " statistic=" << io::format_double(trace.alarm->statistic_at_stop) << '\n';
        } else {
            std::cout << "no alarm\n";
        }
        if (!o.out.empty()) {
            emit(o, [&](std::ostream &out) { write_trace_csv(out, trace); });
        }
    };
}

Job plan_arl(const Options &o) {
    const auto f = load_first_order(o.model_path);
    const auto spec = detector_spec(o.detector, o, f.dim());
    const double threshold = threshold_from(o);
    const auto cfg = mc_config(o);
    return [=] {
        const auto r = estimate_arl(f, spec, threshold, cfg);
        print_warnings(r);
        emit(o, [&](std::ostream &out) {
            out << "detector,threshold,arl_hat,arl_se,n,n_censored\n"
                << spec.label() << ',' << io::format_double(threshold) << ',' << io::format_double(r.estimate) << ','
                << io::format_double(r.std_error) << ',' << r.n << ',' << r.n_censored << '\n';
        });
    };
}

Job plan_delay(const Options &o) {
    const auto f = load_first_order(o.model_path);
    const auto spec = detector_spec(o.detector, o, f.dim());
    const double threshold = threshold_from(o);
    auto cfg = mc_config(o);
    cfg.change_point = parse_t0(o.t0 == "inf" ? "1" : o.t0).value();
    if (cfg.change_point > cfg.max_horizon) {
        throw ConfigError("--t0 must not exceed --horizon");
    }
    return [=] {
        const auto r = estimate_delay(f, spec, threshold, cfg);
        print_warnings(r);
        emit(o, [&](std::ostream &out) {
            out << "detector,threshold,t0,delay_hat,delay_se,n,n_censored,n_discarded\n"
                << spec.label() << ',' << io::format_double(threshold) << ',' << cfg.change_point << ','
                << io::format_double(r.estimate) << ',' << io::format_double(r.std_error) << ',' << r.n << ','
                << r.n_censored << ',' << r.n_discarded << '\n';
        });
    };
}

Job plan_curve(const Options &o) {
    const auto f = load_first_order(o.model_path);
    if (o.gammas.empty() || o.detectors.empty()) {
        throw ConfigError("--gammas and --detectors must be non-empty");
    }
    std::vector<DetectorSpec> specs;
    for (const auto &name : o.detectors) {
        specs.push_back(detector_spec(name, o, f.dim()));
    }
    if (!std::is_sorted(o.gammas.begin(), o.gammas.end())) {
        throw ConfigError("--gammas must be ascending");
    }
    for (double g : o.gammas) {
        select_threshold(g);
    }
    auto cfg = mc_config(o);
    cfg.change_point = parse_t0(o.t0 == "inf" ? "1" : o.t0).value();
    if (cfg.change_point > cfg.max_horizon) {
        throw ConfigError("--t0 must not exceed --horizon");
    }
    return [=] {
        const auto rows = wadd_vs_arl_curve(f, specs, o.gammas, cfg);
        for (const auto &row : rows) {
            print_warnings(row.arl);
            print_warnings(row.delay);
        }
        emit(o, [&](std::ostream &out) { write_curve_csv(out, rows); });
    };
}

Job plan_k(const Options &o) {
    const auto f = load_first_order(o.model_path);
    const auto cfg = mc_config(o);
    return [=] {
        const auto r = estimate_k(f, o.horizon, cfg);
        emit(o, [&](std::ostream &out) {
            out << "k_hat,k_se,reps,horizon,burn_in\n"
                << io::format_double(r.estimate) << ',' << io::format_double(r.std_error) << ',' << r.n << ','
                << o.horizon << ',' << o.burn_in << '\n';
        });
    };
}

Job plan_lift(const Options &o) {
    const auto ar = io::load_model(o.model_path);
    const auto f = lift_to_first_order(ar);
    return [=] {
        const ArModel<double> lifted{static_cast<int>(f.dim()), {f.A}, f.R};
        emit(o, [&](std::ostream &out) { out << io::model_to_json(lifted) << '\n'; });
    };
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Quickest detection of autoregressive disturbances in Gaussian noise"};
    app.require_subcommand(1);
    Options o;

    auto add_model = [&](CLI::App *cmd) { cmd->add_option("--model", o.model_path, "model JSON")->required(); };
    auto add_seed = [&](CLI::App *cmd) { cmd->add_option("--seed", o.seed, "master random seed"); };
    auto add_out = [&](CLI::App *cmd) { cmd->add_option("--out", o.out, "output file (default stdout)"); };
    auto add_detector = [&](CLI::App *cmd) {
        cmd->add_option("--detector", o.detector, "ergodic | stationary | oga");
        cmd->add_option("--threshold", o.threshold, "alarm threshold c");
        cmd->add_option("--gamma", o.gamma, "target ARL; c = log(gamma)");
        cmd->add_option("--beta", o.beta, "OGA step size");
        cmd->add_option("--eps", o.eps, "OGA eigenvalue floor for R");
    };
    auto add_campaign = [&](CLI::App *cmd) {
        cmd->add_option("--reps", o.reps, "Monte-Carlo replicates");
        cmd->add_option("--horizon", o.horizon, "maximum run length per replicate");
        cmd->add_option("--workers", o.workers, "worker threads (ARQCD_WORKERS overrides)");
    };

    std::map<CLI::App *, std::function<Job(const Options &)>> planners;

    auto *simulate = app.add_subcommand("simulate", "write a trajectory CSV");
    add_model(simulate);
    add_seed(simulate);
    add_out(simulate);
    simulate->add_option("--t0", o.t0, "change point (integer or inf)");
    simulate->add_option("--len", o.len, "trajectory length");
    planners[simulate] = plan_simulate;

    auto *detect = app.add_subcommand("detect", "run one detector over a trajectory");
    add_model(detect);
    add_seed(detect);
    add_out(detect);
    add_detector(detect);
    detect->add_option("--trajectory", o.trajectory, "trajectory CSV (otherwise simulate with --t0/--len/--seed)");
    detect->add_option("--t0", o.t0, "change point for inline simulation");
    detect->add_option("--len", o.len, "length for inline simulation");
    planners[detect] = plan_detect;

    auto *arl = app.add_subcommand("arl", "estimate the average run length to false alarm");
    add_model(arl);
    add_seed(arl);
    add_out(arl);
    add_detector(arl);
    add_campaign(arl);
    planners[arl] = plan_arl;

    auto *delay = app.add_subcommand("delay", "estimate the detection delay");
    add_model(delay);
    add_seed(delay);
    add_out(delay);
    add_detector(delay);
    add_campaign(delay);
    delay->add_option("--t0", o.t0, "change point (default 1)");
    planners[delay] = plan_delay;

    auto *curve = app.add_subcommand("curve", "delay vs ARL over a list of gamma values");
    add_model(curve);
    add_seed(curve);
    add_out(curve);
    add_campaign(curve);
    curve->add_option("--gammas", o.gammas, "comma-separated target ARLs")->delimiter(',')->required();
    curve->add_option("--detectors", o.detectors, "comma-separated detector names")->delimiter(',');
    curve->add_option("--beta", o.beta, "OGA step size");
    curve->add_option("--eps", o.eps, "OGA eigenvalue floor for R");
    curve->add_option("--t0", o.t0, "change point for delay runs (default 1)");
    planners[curve] = plan_curve;

    auto *k = app.add_subcommand("k", "estimate the post-change drift K");
    add_model(k);
    add_seed(k);
    add_out(k);
    add_campaign(k);
    k->add_option("--burn-in", o.burn_in, "steps discarded before averaging");
    planners[k] = plan_k;

    auto *lift = app.add_subcommand("lift", "print the first-order block form of a model");
    add_model(lift);
    add_out(lift);
    planners[lift] = plan_lift;

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitConfig;
    }

    Job job;
    try {
        for (auto &[cmd, plan] : planners) {
            if (cmd->parsed()) {
                job = plan(o);
            }
        }
    } catch (const std::invalid_argument &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }

    try {
        job();
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
