// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers as arguments to run a
// subset, e.g. `acceptance 1 9 10`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "arqcd/experiment.hpp"
#include "arqcd/filter_oracle.hpp"
#include "arqcd/simulate.hpp"
#include "gradient_oracle.hpp"
#include "test_support.hpp"

using namespace arqcd;
using arqcd::testing::case1_model;
using arqcd::testing::scalar_model;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

int workers() {
    if (const char *env = std::getenv("ARQCD_WORKERS"); env && *env) {
        return std::max(1, std::atoi(env));
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

McConfig campaign(int reps, long horizon, std::uint64_t seed) {
    McConfig cfg;
    cfg.replicates = reps;
    cfg.max_horizon = horizon;
    cfg.master_seed = seed;
    cfg.workers = workers();
    return cfg;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// 10-dimensional model with ‖A‖ = 0.8.
FirstOrderModel<double> case2_model() {
    std::mt19937_64 rng(2);
    return random_stable_first_order<double>(10, rng, 0.8);
}

// -----------------------------------------------------------------------------

Outcome filter_oracle_equivalence() {
    std::mt19937_64 rng(20240101);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const int k = 1 + i % 3;
        const auto f = random_stable_first_order<double>(k, rng, 0.9);
        const auto init = stationary_init(f);
        const auto traj = generate_trajectory<double, Eigen::Dynamic>(f, {1L, 20, init}, 1000 + i);
        auto step = forward_init(init, traj.observations[0]);
        for (std::size_t t = 1; t < traj.observations.size(); ++t) {
            step = forward_step(step.state, traj.observations[t], f);
        }
        const double oracle = joint_log_density_oracle(f, init, traj.observations);
        worst = std::max(worst, std::abs(step.state.log_like - oracle) / std::abs(oracle));
    }
    return {worst < 1e-8, fmt("max relative error %.3g over 100 models (tol 1e-8)", worst)};
}

Outcome sigma_star_fixed_point() {
    const double closed_form = (-7 + std::sqrt(65.0)) / 2;
    const double s = fixed_point_sigma_star(scalar_model(0.5, 1.0))(0, 0);
    const double scalar_err = std::abs(s - closed_form);

    const auto f = case1_model();
    const MatrixXd star = fixed_point_sigma_star(f);
    MatrixXd sigma = MatrixXd::Zero(2, 2);
    std::vector<double> errors;
    for (int t = 0; t < 200; ++t) {
        sigma = forward_covariance_update(f, sigma);
        const double e = (sigma - star).norm();
        if (e < 1e-13) {
            break;
        }
        errors.push_back(e);
    }
    double worst_ratio = 0;
    for (std::size_t i = 1; i < errors.size(); ++i) {
        worst_ratio = std::max(worst_ratio, errors[i] / errors[i - 1]);
    }
    const bool pass = scalar_err < 1e-10 && errors.size() > 3 && worst_ratio < 1.0;
    return {pass, fmt("scalar |err| %.3g (tol 1e-10); case-1 contraction ratio <= %.4f over %zu iterates", scalar_err,
                      worst_ratio, errors.size())};
}

Outcome cusum_identity() {
    const auto f = case1_model();
    long mismatches = 0, checked = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const std::optional<long> t0 = seed % 2 ? std::optional<long>(1 + seed % 30) : std::nullopt;
        const auto traj = generate_trajectory<double, Eigen::Dynamic>(f, {t0, 30, std::nullopt}, 500 + seed);
        auto state = make_ergodic_cusum(stationary_init(f));
        std::vector<double> increments;
        for (const auto &y : traj.observations) {
            state = ergodic_cusum_step(state, y, f);
            increments.push_back(state.increment);
            mismatches += state.s != arqcd::testing::max_form_statistic(increments);
            ++checked;
        }
    }
    return {mismatches == 0, fmt("%ld of %ld statistics differ from the max form", mismatches, checked)};
}

Outcome arl_guarantee() {
    const double c = std::log(100.0);
    const auto cfg = campaign(2000, 10000, 404);
    bool pass = true;
    std::ostringstream detail;
    const std::vector<std::pair<std::string, FirstOrderModel<double>>> models{{"case1", case1_model()},
                                                                              {"a0", scalar_model(0.0, 1.0)}};
    for (const auto &[name, f] : models) {
        for (auto kind : {DetectorKind::kErgodic, DetectorKind::kOga}) {
            const auto r = estimate_arl(f, DetectorSpec{kind, std::nullopt}, c, cfg);
            const double lower = r.estimate - 1.645 * r.std_error;
            pass = pass && lower >= 100.0;
            detail << name << '/' << to_string(kind) << fmt(" ARL %.1f (95%% lower %.1f, censored %ld); ", r.estimate,
                                                            lower, r.n_censored);
        }
    }
    return {pass, detail.str()};
}

Outcome drift_constant() {
    const double truth = 0.5 * (1 - std::log(2.0));
    auto cfg = campaign(20, 1, 505);
    const auto a0 = estimate_k(scalar_model(0.0, 1.0), 100000, cfg);
    const double z = std::abs(a0.estimate - truth) / a0.std_error;
    bool pass = z <= 3.0 && a0.estimate > 0;
    std::ostringstream detail;
    detail << fmt("a0 K %.5f +- %.5f vs %.5f (%.2f se)", a0.estimate, a0.std_error, truth, z);

    const std::vector<std::pair<std::string, FirstOrderModel<double>>> others{
        {"case1", case1_model()},
        {"case2", case2_model()},
        {"case3", lift_to_first_order(arqcd::testing::case3_ar())}};
    for (const auto &[name, f] : others) {
        const auto r = estimate_k(f, 100000, cfg);
        pass = pass && r.estimate > 0;
        detail << "; " << name << fmt(" K %.4f", r.estimate);
    }
    return {pass, detail.str()};
}

Outcome delay_scaling() {
    const DetectorSpec ergodic{DetectorKind::kErgodic, std::nullopt};
    const auto cfg = campaign(2000, 100000, 606);
    const double k_a0 = 0.5 * (1 - std::log(2.0));
    const double c = 9.0;
    const auto d = estimate_delay(scalar_model(0.0, 1.0), ergodic, c, cfg);
    const double ratio = (d.estimate / c) / (1 / k_a0);
    bool pass = std::abs(ratio - 1) <= 0.15;

    std::vector<double> xs, ys;
    for (double gamma : {1e2, 1e3, 1e4}) {
        xs.push_back(std::log(gamma));
        ys.push_back(estimate_delay(case1_model(), ergodic, select_threshold(gamma), cfg).estimate);
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / 3;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / 3;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < 3; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    const double r2 = sxy * sxy / (sxx * syy);
    pass = pass && r2 > 0.95;
    return {pass, fmt("a0 delay(9)/9 = %.3f vs 1/K = %.3f (ratio %.3f, tol 15%%); case1 delays %.2f, %.2f, %.2f, R^2 "
                      "%.4f (> 0.95)",
                      d.estimate / c, 1 / k_a0, ratio, ys[0], ys[1], ys[2], r2)};
}

Outcome ergodic_beats_stationary() {
    const auto cfg = campaign(2000, 100000, 707);
    const double c = select_threshold(1e3);
    const auto e = estimate_delay(case1_model(), DetectorSpec{DetectorKind::kErgodic, std::nullopt}, c, cfg);
    const auto s = estimate_delay(case1_model(), DetectorSpec{DetectorKind::kStationary, std::nullopt}, c, cfg);
    const double pooled = std::hypot(e.std_error, s.std_error);
    const double gap = s.estimate - e.estimate;
    return {gap > 2 * pooled,
            fmt("ergodic %.2f +- %.2f, stationary %.2f +- %.2f; gap %.2f vs 2 pooled se %.2f", e.estimate, e.std_error,
                s.estimate, s.std_error, gap, 2 * pooled)};
}

Outcome oga_convergence() {
    const auto f = case1_model();
    std::vector<double> a100, a5000, r100, r5000;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto traj = generate_trajectory<double, Eigen::Dynamic>(f, {1L, 5000, std::nullopt}, 800 + seed);
        OgaCusum<double> det(OgaParams<double>::defaults(2));
        for (long t = 1; t <= 5000; ++t) {
            det.step(traj.observations[t - 1]);
            if (t == 100 || t == 5000) {
                const double ea = (det.state().a_hat - f.A).norm();
                const double er = (det.state().r_hat - f.R).norm();
                (t == 100 ? a100 : a5000).push_back(ea);
                (t == 100 ? r100 : r5000).push_back(er);
            }
        }
    }
    const double ma100 = median(a100), ma5000 = median(a5000), mr100 = median(r100), mr5000 = median(r5000);
    return {ma5000 < ma100 && mr5000 < mr100,
            fmt("median |A_hat - A|: %.4f -> %.4f; median |R_hat - R|: %.4f -> %.4f (t = 100 -> 5000)", ma100, ma5000,
                mr100, mr5000)};
}

Outcome gradient_contract() {
    std::mt19937_64 rng(909);
    int failures = 0;
    for (int i = 0; i < 50; ++i) {
        const MatrixXd a = arqcd::testing::random_matrix(2, rng, 0.4);
        const MatrixXd r = arqcd::testing::random_spd(2, rng);
        const VectorXd mu = arqcd::testing::random_vector(2, rng);
        const MatrixXd s = arqcd::testing::random_spd(2, rng, 0.1);
        const VectorXd y = arqcd::testing::random_vector(2, rng, 1.5);
        const auto g = grad_h_hat(a, r, mu, s, y);
        const auto fd = arqcd::testing::finite_difference(a, r, mu, s, y);
        failures += !(arqcd::testing::within_relative(g.grad_a, fd.a, 1e-4) &&
                      arqcd::testing::within_relative(g.grad_r, fd.r, 1e-4));
    }
    return {failures == 0, fmt("%d of 50 instances outside 1e-4 relative", failures)};
}

Outcome lifting_and_projection() {
    const auto m = arqcd::testing::case3_ar();
    const auto form = block_form(m);
    const int q = 2, k = 2, blocks = 500;
    std::mt19937_64 rng(1010);
    const Eigen::LLT<MatrixXd> r_llt(m.innovation_cov);
    std::vector<VectorXd> noise(static_cast<std::size_t>(q) * (blocks + 1));
    for (auto &w : noise) {
        w = MatrixXd(r_llt.matrixL()) * arqcd::testing::random_vector(k, rng);
    }
    std::vector<VectorXd> direct(noise.size());
    for (int t = 0; t < q; ++t) {
        direct[t] = noise[t];
    }
    for (std::size_t t = q; t < noise.size(); ++t) {
        direct[t] = m.coeffs[0] * direct[t - 1] + m.coeffs[1] * direct[t - 2] + noise[t];
    }
    VectorXd block(q * k), raw(q * k);
    block << noise[0], noise[1];
    long unequal = 0;
    double worst = 0;
    for (int b = 1; b <= blocks; ++b) {
        raw << noise[b * q], noise[b * q + 1];
        block = form.transition * block + form.noise_gain * raw;
        for (int j = 0; j < q; ++j) {
            const VectorXd &d = direct[b * q + j];
            unequal += block.segment(j * k, k) != d;
            worst = std::max(worst, (block.segment(j * k, k) - d).cwiseAbs().maxCoeff());
        }
    }

    std::mt19937_64 prng(1011);
    int proj_failures = 0;
    const double eps = 1e-3;
    for (int i = 0; i < 100; ++i) {
        const int dim = 1 + i % 5;
        const MatrixXd x = arqcd::testing::random_matrix(dim, prng);
        const MatrixXd p = proj_pd(x, eps);
        const bool ok = p == p.transpose() && min_eigenvalue(p) >= eps - 1e-12 && (proj_pd(p, eps) - p).norm() < 1e-12;
        proj_failures += !ok;
    }
    return {unequal == 0 && proj_failures == 0,
            fmt("lifted vs direct: %ld of %d samples not bit-identical (max abs diff %.3g); projection failures %d of "
                "100",
                unequal, blocks * q, worst, proj_failures)};
}

} // namespace

int main(int argc, char **argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"filter matches joint-density oracle", filter_oracle_equivalence},
        {"steady-state covariance fixed point", sigma_star_fixed_point},
        {"CuSum recursion equals max form", cusum_identity},
        {"ARL at least gamma = 100", arl_guarantee},
        {"drift constant K", drift_constant},
        {"delay grows linearly in log ARL", delay_scaling},
        {"ergodic delay below stationary delay", ergodic_beats_stationary},
        {"OGA estimates improve over time", oga_convergence},
        {"gradient matches finite differences", gradient_contract},
        {"lifting exactness and projection invariants", lifting_and_projection},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::atoi(argv[i]));
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
