#include "arqcd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <type_traits>
#include <variant>

#include "arqcd/io.hpp"
#include "arqcd/simulate.hpp"

namespace arqcd {

namespace {

/// Calls fn(i) for i in [0, n) on `workers` threads.
template <typename Fn> void parallel_for(int n, int workers, Fn &&fn) {
    workers = std::clamp(workers, 1, std::max(1, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    next = n;
                }
            }
        });
    }
    for (auto &t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Runs fn with a compile-time dimension for the common small sizes.
template <typename Fn> decltype(auto) dispatch_dim(int dim, Fn &&fn) {
    switch (dim) {
    case 1:
        return fn(std::integral_constant<int, 1>{});
    case 2:
        return fn(std::integral_constant<int, 2>{});
    case 3:
        return fn(std::integral_constant<int, 3>{});
    case 4:
        return fn(std::integral_constant<int, 4>{});
    default:
        return fn(std::integral_constant<int, Eigen::Dynamic>{});
    }
}

template <int Dim>
using AnyDetector = std::variant<ErgodicCusum<double, Dim>, StationaryCusum<double, Dim>, OgaCusum<double, Dim>>;

template <int Dim>
AnyDetector<Dim> make_detector(const FirstOrderModel<double, Dim> &f, const DetectorSpec &spec,
                               const InitialStateDist<double, Dim> &init) {
    switch (spec.kind) {
    case DetectorKind::kErgodic:
        return ErgodicCusum<double, Dim>(f, init);
    case DetectorKind::kStationary:
        return StationaryCusum<double, Dim>(f);
    case DetectorKind::kOga: {
        const auto params = spec.oga ? *spec.oga : OgaParams<double>::defaults(f.dim());
        if (params.a0.rows() != f.dim() || params.r0.rows() != f.dim() || params.mu0.size() != f.dim() ||
            params.sigma0.rows() != f.dim()) {
            throw std::invalid_argument("OGA initial parameters do not match the model dimension");
        }
        return OgaCusum<double, Dim>(params.template resized<Dim>());
    }
    }
    throw std::logic_error("unknown detector kind");
}

struct Outcome {
    double value = 0;
    bool censored = false;
    bool discarded = false;
};

/// First t <= horizon with statistic >= threshold.
template <typename D, typename S> std::optional<long> first_crossing(D &detector, S &stream, double threshold, long horizon) {
    for (long t = 1; t <= horizon; ++t) {
        detector.step(stream.next());
        if (detector.statistic() >= threshold) {
            return t;
        }
    }
    return std::nullopt;
}

ExperimentResult summarize(const std::vector<Outcome> &outcomes) {
    ExperimentResult r;
    for (const auto &o : outcomes) {
        if (o.discarded) {
            ++r.n_discarded;
            continue;
        }
        r.values.push_back(o.value);
        r.n_censored += o.censored ? 1 : 0;
    }
    r.n = static_cast<long>(r.values.size());
    if (r.n == 0) {
        return r;
    }
    double sum = 0;
    for (double v : r.values) {
        sum += v;
    }
    r.estimate = sum / static_cast<double>(r.n);
    if (r.n > 1) {
        double ss = 0;
        for (double v : r.values) {
            ss += (v - r.estimate) * (v - r.estimate);
        }
        r.std_error = std::sqrt(ss / static_cast<double>(r.n - 1)) / std::sqrt(static_cast<double>(r.n));
    }
    return r;
}

void check_config(const McConfig &cfg) {
    if (cfg.replicates < 1) {
        throw std::invalid_argument("replicates must be >= 1");
    }
    if (cfg.max_horizon < 1) {
        throw std::invalid_argument("max_horizon must be >= 1");
    }
    if (cfg.change_point < 1) {
        throw std::invalid_argument("change_point must be >= 1");
    }
    if (cfg.burn_in < 0) {
        throw std::invalid_argument("burn_in must be >= 0");
    }
    if (cfg.workers < 1) {
        throw std::invalid_argument("workers must be >= 1");
    }
}

void check_threshold(double threshold) {
    if (!(threshold > 0) || !std::isfinite(threshold)) {
        throw std::invalid_argument("threshold must be positive and finite");
    }
}

template <int Dim>
InitialStateDist<double, Dim> signal_init(const FirstOrderModel<double, Dim> &f, const McConfig &cfg) {
    if (cfg.init) {
        return cfg.init->template resized<Dim>();
    }
    return stationary_init(f);
}

constexpr double kCensoringWarnFraction = 0.05;

} // namespace

std::string_view to_string(DetectorKind kind) {
    switch (kind) {
    case DetectorKind::kErgodic:
        return "ergodic";
    case DetectorKind::kStationary:
        return "stationary";
    case DetectorKind::kOga:
        return "oga";
    }
    return "unknown";
}

DetectorKind parse_detector_kind(std::string_view name) {
    if (name == "ergodic") {
        return DetectorKind::kErgodic;
    }
    if (name == "stationary") {
        return DetectorKind::kStationary;
    }
    if (name == "oga") {
        return DetectorKind::kOga;
    }
    throw std::invalid_argument("unknown detector '" + std::string(name) + "' (expected ergodic, stationary or oga)");
}

double select_threshold(double gamma) {
    if (!(gamma > 1) || !std::isfinite(gamma)) {
        throw std::invalid_argument("gamma must be a finite number > 1");
    }
    return std::log(gamma);
}

ExperimentResult estimate_arl(const FirstOrderModel<double> &f_dyn, const DetectorSpec &det, double threshold,
                              const McConfig &cfg) {
    check_config(cfg);
    check_threshold(threshold);
    auto result = dispatch_dim(f_dyn.dim(), [&](auto dim_tag) {
        constexpr int Dim = decltype(dim_tag)::value;
        const auto f = f_dyn.resized<Dim>();
        const auto init = signal_init(f, cfg);
        const auto prototype = make_detector(f, det, init);
        std::vector<Outcome> outcomes(cfg.replicates);
        parallel_for(cfg.replicates, cfg.workers, [&](int i) {
            ObservationStream<double, Dim> stream(
                f, std::nullopt, init,
                replicate_rng(cfg.master_seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(Stream::kPreChange)));
            auto detector = prototype;
            const auto tau = std::visit(
                [&](auto &d) { return first_crossing(d, stream, threshold, cfg.max_horizon); }, detector);
            outcomes[i] = tau ? Outcome{static_cast<double>(*tau), false, false}
                              : Outcome{static_cast<double>(cfg.max_horizon), true, false};
        });
        return summarize(outcomes);
    });
    if (static_cast<double>(result.n_censored) > kCensoringWarnFraction * static_cast<double>(result.n)) {
        result.warnings.push_back(std::to_string(result.n_censored) + " of " + std::to_string(result.n) +
                                  " ARL replicates censored at max_horizon; estimate is a loose lower bound");
    }
    return result;
}

ExperimentResult estimate_delay(const FirstOrderModel<double> &f_dyn, const DetectorSpec &det, double threshold,
                                const McConfig &cfg) {
    check_config(cfg);
    check_threshold(threshold);
    if (cfg.change_point > cfg.max_horizon) {
        throw std::invalid_argument("change_point must not exceed max_horizon");
    }
    auto result = dispatch_dim(f_dyn.dim(), [&](auto dim_tag) {
        constexpr int Dim = decltype(dim_tag)::value;
        const auto f = f_dyn.resized<Dim>();
        const auto init = signal_init(f, cfg);
        const auto prototype = make_detector(f, det, init);
        const long t0 = cfg.change_point;
        std::vector<Outcome> outcomes(cfg.replicates);
        parallel_for(cfg.replicates, cfg.workers, [&](int i) {
            ObservationStream<double, Dim> stream(
                f, t0, init,
                replicate_rng(cfg.master_seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(Stream::kDelay)));
            auto detector = prototype;
            const auto tau = std::visit(
                [&](auto &d) { return first_crossing(d, stream, threshold, cfg.max_horizon); }, detector);
            if (tau && *tau < t0) {
                outcomes[i] = Outcome{0, false, true};
            } else if (tau) {
                outcomes[i] = Outcome{static_cast<double>(*tau - t0), false, false};
            } else {
                outcomes[i] = Outcome{static_cast<double>(cfg.max_horizon - t0), true, false};
            }
        });
        return summarize(outcomes);
    });
    if (result.n == 0) {
        throw std::runtime_error("estimate_delay: every replicate raised a false alarm before the change point");
    }
    if (result.n_censored > 0) {
        result.warnings.push_back(std::to_string(result.n_censored) +
                                  " delay replicates censored at max_horizon; delay is underestimated");
    }
    return result;
}

ExperimentResult estimate_k(const FirstOrderModel<double> &f_dyn, long horizon, const McConfig &cfg) {
    check_config(cfg);
    if (horizon < 1) {
        throw std::invalid_argument("horizon must be >= 1");
    }
    return dispatch_dim(f_dyn.dim(), [&](auto dim_tag) {
        constexpr int Dim = decltype(dim_tag)::value;
        const auto f = f_dyn.resized<Dim>();
        const auto init = signal_init(f, cfg);
        std::vector<Outcome> outcomes(cfg.replicates);
        parallel_for(cfg.replicates, cfg.workers, [&](int i) {
            ObservationStream<double, Dim> stream(
                f, 1L, init,
                replicate_rng(cfg.master_seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(Stream::kDrift)));
            ErgodicCusum<double, Dim> detector(f, init);
            for (long t = 0; t < cfg.burn_in; ++t) {
                detector.step(stream.next());
            }
            double sum = 0;
            for (long t = 0; t < horizon; ++t) {
                sum += detector.step(stream.next());
            }
            outcomes[i] = Outcome{sum / static_cast<double>(horizon), false, false};
        });
        return summarize(outcomes);
    });
}

std::vector<CurveRow> wadd_vs_arl_curve(const FirstOrderModel<double> &f, const std::vector<DetectorSpec> &detectors,
                                        const std::vector<double> &gammas, const McConfig &cfg) {
    if (!std::is_sorted(gammas.begin(), gammas.end())) {
        throw std::invalid_argument("gammas must be sorted ascending");
    }
    for (double g : gammas) {
        select_threshold(g);
    }
    std::vector<CurveRow> rows;
    for (const auto &det : detectors) {
        for (double gamma : gammas) {
            CurveRow row;
            row.detector = det.label();
            row.gamma = gamma;
            row.threshold = select_threshold(gamma);
            row.arl = estimate_arl(f, det, row.threshold, cfg);
            row.delay = estimate_delay(f, det, row.threshold, cfg);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_curve_csv(std::ostream &out, const std::vector<CurveRow> &rows) {
    out << "detector,gamma,threshold,arl_hat,arl_se,delay_hat,delay_se,n_censored\n";
    for (const auto &r : rows) {
        out << r.detector << ',' << io::format_double(r.gamma) << ',' << io::format_double(r.threshold) << ','
            << io::format_double(r.arl.estimate) << ',' << io::format_double(r.arl.std_error) << ','
            << io::format_double(r.delay.estimate) << ',' << io::format_double(r.delay.std_error) << ','
            << (r.arl.n_censored + r.delay.n_censored) << '\n';
    }
}

DetectorTrace trace_detector(const FirstOrderModel<double> &f_dyn, const DetectorSpec &det,
                             const std::vector<VectorXd> &observations, double threshold) {
    check_threshold(threshold);
    for (const auto &y : observations) {
        if (y.size() != f_dyn.dim()) {
            throw std::invalid_argument("trajectory dimension does not match the model");
        }
    }
    return dispatch_dim(f_dyn.dim(), [&](auto dim_tag) {
        constexpr int Dim = decltype(dim_tag)::value;
        const auto f = f_dyn.resized<Dim>();
        auto detector = make_detector(f, det, stationary_init(f));
        DetectorTrace trace;
        trace.has_parameter_errors = det.kind == DetectorKind::kOga;
        std::visit(
            [&](auto &d) {
                for (std::size_t n = 0; n < observations.size(); ++n) {
                    TraceRow row;
                    row.t = static_cast<long>(n) + 1;
                    row.increment = d.step(observations[n]);
                    row.statistic = d.statistic();
                    row.stopped = row.statistic >= threshold;
                    if constexpr (std::is_same_v<std::decay_t<decltype(d)>, OgaCusum<double, Dim>>) {
                        row.a_err_fro = (d.state().a_hat - f.A).norm();
                        row.r_err_fro = (d.state().r_hat - f.R).norm();
                    }
                    trace.rows.push_back(row);
                    if (row.stopped) {
                        trace.alarm = Alarm{row.t, row.statistic};
                        break;
                    }
                }
            },
            detector);
        return trace;
    });
}

void write_trace_csv(std::ostream &out, const DetectorTrace &trace) {
    out << "t,increment,statistic,stopped";
    if (trace.has_parameter_errors) {
        out << ",a_err_fro,r_err_fro";
    }
    out << '\n';
    for (const auto &r : trace.rows) {
        out << r.t << ',' << io::format_double(r.increment) << ',' << io::format_double(r.statistic) << ','
            << (r.stopped ? 1 : 0);
        if (trace.has_parameter_errors) {
            out << ',' << io::format_double(r.a_err_fro) << ',' << io::format_double(r.r_err_fro);
        }
        out << '\n';
    }
}

} // namespace arqcd
