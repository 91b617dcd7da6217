#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace srcfda {

/// Ordered sample times of one curve. Strictly increasing, all values in [0, 1].
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(Eigen::VectorXd points);

  const Eigen::VectorXd& points() const { return points_; }
  Eigen::Index size() const { return points_.size(); }
  double operator[](Eigen::Index j) const { return points_[j]; }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.points_.size() == b.points_.size() && a.points_ == b.points_;
  }

  /// Evenly spaced grid of n points on [lo, hi].
  static TimeGrid uniform(Eigen::Index n, double lo = 0.0, double hi = 1.0);

 private:
  Eigen::VectorXd points_;
};

/// One multi-dimensional curve: `values` is A x n (row a = coordinate a).
class Curve {
 public:
  Curve() = default;
  Curve(std::string id, TimeGrid grid, Eigen::MatrixXd values);

  const std::string& id() const { return id_; }
  const TimeGrid& grid() const { return grid_; }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::Index dimension() const { return values_.rows(); }
  Eigen::Index size() const { return values_.cols(); }

 private:
  std::string id_;
  TimeGrid grid_;
  Eigen::MatrixXd values_;
};

/// N curves of a common spatial dimension, plus optional 1-based group labels.
class FunctionalDataset {
 public:
  FunctionalDataset() = default;
  explicit FunctionalDataset(std::vector<Curve> curves,
                             std::optional<std::vector<int>> labels = std::nullopt);

  const std::vector<Curve>& curves() const { return curves_; }
  const Curve& curve(std::size_t i) const { return curves_.at(i); }
  std::size_t size() const { return curves_.size(); }
  bool empty() const { return curves_.empty(); }
  Eigen::Index dimension() const { return dimension_; }
  const std::optional<std::vector<int>>& labels() const { return labels_; }
  std::vector<std::string> ids() const;
  /// Index of the curve with the given id, if present.
  std::optional<std::size_t> find(const std::string& id) const;
  /// Total number of sample points over all curves (m).
  Eigen::Index total_points() const;
  bool common_grid() const;

  FunctionalDataset with_labels(std::vector<int> labels) const;

 private:
  std::vector<Curve> curves_;
  Eigen::Index dimension_ = 0;
  std::optional<std::vector<int>> labels_;
};

/// Per-curve covariate rows with a leading intercept column of ones.
class ScalarCovariates {
 public:
  ScalarCovariates() = default;
  /// `values` holds the raw covariates (without intercept); the intercept is prepended.
  ScalarCovariates(std::vector<std::string> ids, std::vector<std::string> names,
                   const Eigen::MatrixXd& values);

  const std::vector<std::string>& ids() const { return ids_; }
  /// Column names, starting with "intercept".
  const std::vector<std::string>& names() const { return names_; }
  /// N x p design including the intercept column.
  const Eigen::MatrixXd& design() const { return design_; }
  Eigen::Index rows() const { return design_.rows(); }
  Eigen::Index cols() const { return design_.cols(); }

  /// Reorders rows to follow `ids`; throws ValidationError when an id is missing.
  ScalarCovariates aligned_to(const std::vector<std::string>& ids) const;
  /// Covariates without the intercept column.
  Eigen::MatrixXd raw() const { return design_.rightCols(design_.cols() - 1); }

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> names_;
  Eigen::MatrixXd design_;
};

FunctionalDataset read_curves(std::istream& in);
FunctionalDataset load_curves(const std::filesystem::path& path);
void write_curves(std::ostream& out, const FunctionalDataset& data);
void save_curves(const std::filesystem::path& path, const FunctionalDataset& data);

ScalarCovariates read_scalars(std::istream& in);
ScalarCovariates load_scalars(const std::filesystem::path& path);
void write_scalars(std::ostream& out, const ScalarCovariates& scalars);
void save_scalars(const std::filesystem::path& path, const ScalarCovariates& scalars);

std::map<std::string, int> read_labels(std::istream& in);
std::map<std::string, int> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<std::string>& ids,
                 const std::vector<int>& labels);
/// Attach labels to the dataset by id; every curve must have a label.
FunctionalDataset attach_labels(const FunctionalDataset& data,
                                const std::map<std::string, int>& labels);

/// Fit-time checks that parsing alone does not enforce (grid length >= 4).
void validate_for_fit(const FunctionalDataset& data);

/// Piecewise-linear resampling of a curve onto another grid (constant extrapolation).
Eigen::MatrixXd resample_linear(const Curve& curve, const TimeGrid& grid);

struct GpaConfig {
  int max_iter = 100;
  double tol = 1e-10;
};

struct GpaResult {
  FunctionalDataset aligned;
  Eigen::MatrixXd consensus;            // A x n on the common grid
  std::vector<double> objective_trace;  // sum of squared distances to the mean shape
  int iterations = 0;
};

/// Generalized Procrustes alignment: centre, scale to unit centroid size, rotate.
GpaResult gpa_align_detailed(const FunctionalDataset& data, const GpaConfig& cfg = {});
FunctionalDataset gpa_align(const FunctionalDataset& data, const GpaConfig& cfg = {});

}  // namespace srcfda
