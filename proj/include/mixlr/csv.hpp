#pragma once

#include "mixlr/model.hpp"

#include <Eigen/Dense>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixlr {

enum class DataErrorCode {
  IoError,
  BadHeader,
  MissingColumn,
  NonNumericCell,
  NonBinaryResponse,
  TooFewRows,
  ConstantColumn,
};

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  DataErrorCode code() const { return code_; }

 private:
  DataErrorCode code_;
};

struct RealDataSpec {
  std::string path;
  std::string response;
  std::vector<std::string> covariates;
  bool standardize = true;
};

struct LoadedData {
  Dataset data;                              // intercept column prepended
  std::vector<std::string> covariate_names;
  MatrixXd correlations;                     // pairwise, of the raw covariates
  VectorXd means;                            // applied centering (zeros when not standardized)
  VectorXd scales;                           // applied scaling (ones when not standardized)
  bool full_rank;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw DataError(DataErrorCode::NonNumericCell,
                    "non-numeric value '" + cell + "' in column '" + column + "' at data row " +
                        std::to_string(row));
  return value;
}

inline MatrixXd pairwise_correlations(const MatrixXd& Z) {
  const Eigen::Index p = Z.cols();
  const Eigen::Index n = Z.rows();
  MatrixXd centered = Z.rowwise() - Z.colwise().mean();
  MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  MatrixXd corr(p, p);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < p; ++b) {
      const double denom = std::sqrt(cov(a, a) * cov(b, b));
      corr(a, b) = denom > 0.0 ? cov(a, b) / denom : (a == b ? 1.0 : 0.0);
    }
  return corr;
}

}  // namespace detail

/// Load a comma-separated file (header row required, '.' decimal point) into a
/// Dataset: intercept column prepended and covariates optionally standardized.
/// Collinear covariates load fine; only the correlation report and full_rank
/// flag surface them.
inline LoadedData load_csv(const RealDataSpec& spec) {
  std::ifstream in(spec.path);
  if (!in) throw DataError(DataErrorCode::IoError, "cannot open '" + spec.path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw DataError(DataErrorCode::BadHeader, "empty file '" + spec.path + "'");
  const std::vector<std::string> header = detail::split_csv_line(line);

  const auto column_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw DataError(DataErrorCode::MissingColumn,
                    "column '" + name + "' not found in '" + spec.path + "'");
  };

  const std::size_t y_col = column_index(spec.response);
  std::vector<std::size_t> x_cols;
  for (const auto& name : spec.covariates) x_cols.push_back(column_index(name));
  const std::size_t p = x_cols.size();
  if (p == 0) throw DataError(DataErrorCode::MissingColumn, "no covariate columns requested");

  std::vector<double> ys;
  std::vector<double> xs;  // row-major
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(DataErrorCode::NonNumericCell,
                      "data row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                          " fields, header has " + std::to_string(header.size()));
    const double y = detail::parse_cell(cells[y_col], row, spec.response);
    if (y != 0.0 && y != 1.0)
      throw DataError(DataErrorCode::NonBinaryResponse,
                      "response '" + cells[y_col] + "' at data row " + std::to_string(row) +
                          " is not 0/1");
    ys.push_back(y);
    for (std::size_t c = 0; c < p; ++c)
      xs.push_back(detail::parse_cell(cells[x_cols[c]], row, spec.covariates[c]));
  }

  const std::size_t n = ys.size();
  if (n <= p + 1)
    throw DataError(DataErrorCode::TooFewRows, "need more rows than coefficients: n=" +
                                                   std::to_string(n) + ", p+1=" +
                                                   std::to_string(p + 1));

  MatrixXd Z(n, p);
  VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[static_cast<Eigen::Index>(i)] = ys[i];
    for (std::size_t c = 0; c < p; ++c)
      Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = xs[i * p + c];
  }

  const MatrixXd corr = detail::pairwise_correlations(Z);

  VectorXd means = VectorXd::Zero(p);
  VectorXd scales = VectorXd::Ones(p);
  if (spec.standardize) {
    for (Eigen::Index c = 0; c < Z.cols(); ++c) {
      const double mean = Z.col(c).mean();
      const double sd =
          std::sqrt((Z.col(c).array() - mean).square().sum() / static_cast<double>(n - 1));
      if (!(sd > 0.0))
        throw DataError(DataErrorCode::ConstantColumn,
                        "covariate '" + spec.covariates[static_cast<std::size_t>(c)] +
                            "' is constant; cannot standardize");
      Z.col(c) = (Z.col(c).array() - mean) / sd;
      means[c] = mean;
      scales[c] = sd;
    }
  }

  MatrixXd X(n, p + 1);
  X.col(0).setOnes();
  X.rightCols(static_cast<Eigen::Index>(p)) = Z;
  const bool full_rank =
      Eigen::ColPivHouseholderQR<MatrixXd>(X).rank() == static_cast<Eigen::Index>(p) + 1;

  return {Dataset(std::move(X), std::move(y)), spec.covariates, corr, means, scales, full_rank};
}

}  // namespace mixlr
