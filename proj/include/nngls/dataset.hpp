#pragma once

#include <Eigen/Dense>
#include <string>

namespace nngls {

// Covariates X (n x d), responses Y (n), planar coordinates S (n x 2).
// Coordinates must be pairwise distinct; all entries finite.
struct SpatialDataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;
  Eigen::MatrixXd S;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }

  // Throws std::invalid_argument on shape mismatch, non-finite entries,
  // n == 0, or duplicate coordinates.
  void validate() const;
};

struct QueryData {
  Eigen::MatrixXd X;
  Eigen::MatrixXd S;
};

// CSV with header `x1,...,xd,y,s1,s2` (UTF-8, '.' decimal separator).
// Column order in the file is free; columns are located by name.
SpatialDataset read_training_csv(const std::string& path);

// CSV with header `x1,...,xd,s1,s2`.
QueryData read_query_csv(const std::string& path);

void write_training_csv(const std::string& path, const SpatialDataset& data);

// Formats a double with enough digits to round-trip exactly.
std::string format_double(double v);

}  // namespace nngls
