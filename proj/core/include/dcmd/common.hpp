#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dcmd {

/// Dense row-major matrix; rows are frames (or stacked frames of a batch).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, long line) : Error(what), line(line) {}
  long line;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ArgumentError : Error {
  using Error::Error;
};

/// Checkpoint / data dimensions disagree (J, H, F ...).
struct ShapeError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct StateError : Error {
  using Error::Error;
};

struct CorruptionError : Error {
  using Error::Error;
};

/// Metric undefined for the given input (e.g. single-class labels).
struct MetricError : Error {
  using Error::Error;
};

}  // namespace dcmd
