// Monte-Carlo evaluation: false-alarm run length, detection delay, the drift
// constant K, and delay-vs-ARL curves.
//
// Every replicate owns an independent generator keyed by (master seed, stream,
// replicate index) and results are reduced in index order, so aggregates do not
// depend on the number of worker threads.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arqcd/detect.hpp"

namespace arqcd {

enum class DetectorKind { kErgodic, kStationary, kOga };

std::string_view to_string(DetectorKind kind);
/// "ergodic" | "stationary" | "oga"; throws std::invalid_argument otherwise.
DetectorKind parse_detector_kind(std::string_view name);

struct DetectorSpec {
    DetectorKind kind = DetectorKind::kErgodic;
    std::optional<OgaParams<double>> oga; ///< OgaParams::defaults(dim) when empty

    std::string label() const { return std::string(to_string(kind)); }
};

struct McConfig {
    int replicates = 2000;
    long max_horizon = 10000;
    std::uint64_t master_seed = 0;
    long change_point = 1; ///< t0 for delay runs
    long burn_in = 1000;   ///< discarded prefix for K estimates
    int workers = 1;
    std::optional<InitialStateDist<double>> init; ///< law of x_{t0}; stationary when empty
};

struct ExperimentResult {
    double estimate = 0;
    double std_error = 0;
    long n_censored = 0;  ///< replicates that reached max_horizon without stopping
    long n = 0;           ///< replicates contributing to the estimate
    long n_discarded = 0; ///< delay runs only: false alarms before t0
    std::vector<double> values;        ///< per-replicate values, in replicate order
    std::vector<std::string> warnings; ///< e.g. heavy censoring
};

struct CurveRow {
    std::string detector;
    double gamma = 0;
    double threshold = 0;
    ExperimentResult arl;
    ExperimentResult delay;
};

/// Random streams used by the harness; distinct so campaigns do not share draws.
enum class Stream : std::uint64_t { kPreChange = 1, kDelay = 2, kDrift = 3 };

/// c = log(gamma); gamma must exceed 1.
double select_threshold(double gamma);

/// Mean stopping time under the no-change law. Censored replicates count as
/// max_horizon, so the estimate is a lower bound on the ARL.
ExperimentResult estimate_arl(const FirstOrderModel<double> &f, const DetectorSpec &det, double threshold,
                              const McConfig &cfg);

/// Mean of (tau - t0) over replicates with the change at cfg.change_point that
/// did not alarm before t0 (those are discarded and counted).
ExperimentResult estimate_delay(const FirstOrderModel<double> &f, const DetectorSpec &det, double threshold,
                                const McConfig &cfg);

/// Per replicate, the average post-burn-in log-likelihood-ratio increment over
/// `horizon` post-change steps; averaged across replicates.
ExperimentResult estimate_k(const FirstOrderModel<double> &f, long horizon, const McConfig &cfg);

/// One row per (detector, gamma), detectors in the given order, gammas ascending.
std::vector<CurveRow> wadd_vs_arl_curve(const FirstOrderModel<double> &f, const std::vector<DetectorSpec> &detectors,
                                        const std::vector<double> &gammas, const McConfig &cfg);

/// Header `detector,gamma,threshold,arl_hat,arl_se,delay_hat,delay_se,n_censored`.
void write_curve_csv(std::ostream &out, const std::vector<CurveRow> &rows);

struct TraceRow {
    long t = 0;
    double increment = 0;
    double statistic = 0;
    bool stopped = false;
    double a_err_fro = 0; ///< OGA only
    double r_err_fro = 0; ///< OGA only
};

struct DetectorTrace {
    std::vector<TraceRow> rows;
    std::optional<Alarm> alarm;
    bool has_parameter_errors = false;
};

/// Runs one detector over a recorded trajectory, stopping at the alarm. For
/// OGA the estimation errors against `f` are recorded as well.
DetectorTrace trace_detector(const FirstOrderModel<double> &f, const DetectorSpec &det,
                             const std::vector<VectorXd> &observations, double threshold);

/// Header `t,increment,statistic,stopped` (+ `a_err_fro,r_err_fro` for OGA).
void write_trace_csv(std::ostream &out, const DetectorTrace &trace);

} // namespace arqcd
