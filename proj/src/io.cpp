#include "arqcd/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace arqcd::io {

namespace {

using nlohmann::json;

MatrixXd parse_matrix(const json &j, int dim, const std::string &what) {
    MatrixXd out(dim, dim);
    if (!j.is_array()) {
        throw FormatError(what + ": expected an array");
    }
    if (j.size() == static_cast<std::size_t>(dim) * dim && (j.empty() || j[0].is_number())) {
        for (int i = 0; i < dim * dim; ++i) {
            out(i / dim, i % dim) = j[i].get<double>();
        }
        return out;
    }
    if (j.size() != static_cast<std::size_t>(dim)) {
        throw FormatError(what + ": expected " + std::to_string(dim) + " rows");
    }
    for (int r = 0; r < dim; ++r) {
        const auto &row = j[r];
        if (!row.is_array() || row.size() != static_cast<std::size_t>(dim)) {
            throw FormatError(what + ": row " + std::to_string(r) + " must have " + std::to_string(dim) + " entries");
        }
        for (int c = 0; c < dim; ++c) {
            if (!row[c].is_number()) {
                throw FormatError(what + ": non-numeric entry");
            }
            out(r, c) = row[c].get<double>();
        }
    }
    return out;
}

json matrix_to_json(const MatrixXd &m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

ArModel<double> parse_model_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw FormatError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        ArModel<double> m;
        m.dim = j.at("dim").get<int>();
        const int order = j.at("order").get<int>();
        if (m.dim < 1 || order < 1) {
            throw FormatError("dim and order must be positive");
        }
        const auto &coeffs = j.at("coeffs");
        if (!coeffs.is_array() || coeffs.size() != static_cast<std::size_t>(order)) {
            throw FormatError("coeffs must list exactly `order` matrices");
        }
        for (int i = 0; i < order; ++i) {
            m.coeffs.push_back(parse_matrix(coeffs[i], m.dim, "coeffs[" + std::to_string(i) + "]"));
        }
        m.innovation_cov = parse_matrix(j.at("innovation_cov"), m.dim, "innovation_cov");
        return m;
    } catch (const json::exception &e) {
        throw FormatError(std::string("model file: ") + e.what());
    }
}

ArModel<double> load_model(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open model file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_model_json(buf.str());
}

std::string model_to_json(const ArModel<double> &m) {
    json j;
    j["dim"] = m.dim;
    j["order"] = m.order();
    j["coeffs"] = json::array();
    for (const auto &a : m.coeffs) {
        j["coeffs"].push_back(matrix_to_json(a));
    }
    j["innovation_cov"] = matrix_to_json(m.innovation_cov);
    return j.dump(2);
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_trajectory_csv(std::ostream &out, const Trajectory<double> &traj) {
    const long k = traj.observations.empty() ? 0 : traj.observations.front().size();
    out << "t";
    for (long i = 1; i <= k; ++i) {
        out << ",y_" << i;
    }
    out << ",is_post_change\n";
    for (std::size_t n = 0; n < traj.observations.size(); ++n) {
        const long t = static_cast<long>(n) + 1;
        out << t;
        for (long i = 0; i < k; ++i) {
            out << ',' << format_double(traj.observations[n](i));
        }
        out << ',' << (traj.is_post_change(t) ? 1 : 0) << '\n';
    }
}

Trajectory<double> read_trajectory_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("trajectory CSV is empty");
    }
    int columns = 0;
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) {
            ++columns;
        }
    }
    const int k = columns - 2;
    if (k < 1 || line.rfind("t,", 0) != 0) {
        throw FormatError("trajectory CSV header must be t,y_1,...,y_K,is_post_change");
    }
    Trajectory<double> traj;
    long row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        ++row;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (static_cast<int>(cells.size()) != columns) {
            throw FormatError("trajectory CSV row " + std::to_string(row) + " has the wrong number of columns");
        }
        VectorXd y(k);
        try {
            for (int i = 0; i < k; ++i) {
                y(i) = std::stod(cells[i + 1]);
            }
        } catch (const std::exception &) {
            throw FormatError("trajectory CSV row " + std::to_string(row) + " is not numeric");
        }
        if (!y.allFinite()) {
            throw FormatError("trajectory CSV row " + std::to_string(row) + " has non-finite values");
        }
        if (cells.back() == "1" && !traj.change_point) {
            traj.change_point = row;
        }
        traj.observations.push_back(std::move(y));
    }
    return traj;
}

} // namespace arqcd::io
