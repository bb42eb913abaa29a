// Model files (JSON) and trajectory / trace CSV.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "arqcd/model.hpp"
#include "arqcd/simulate.hpp"

namespace arqcd::io {

/// Malformed model or trajectory input.
class FormatError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/**
 * @brief Parses {"dim": K, "order": q, "coeffs": [A_1, ..., A_q],
 * "innovation_cov": R}.
 *
 * Each matrix is either a list of K rows or a flat row-major list of K*K
 * numbers. The result is not validated; call validate_model.
 */
ArModel<double> parse_model_json(const std::string &text);
ArModel<double> load_model(const std::filesystem::path &path);

std::string model_to_json(const ArModel<double> &m);

/// %.17g
std::string format_double(double x);

/// Header `t,y_1,...,y_K,is_post_change`.
void write_trajectory_csv(std::ostream &out, const Trajectory<double> &traj);
Trajectory<double> read_trajectory_csv(std::istream &in);

} // namespace arqcd::io
