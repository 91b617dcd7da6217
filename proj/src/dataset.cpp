#include "srcfda/dataset.hpp"

#include "csv.hpp"
#include "srcfda/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

namespace srcfda {

using detail::parse_double;
using detail::parse_int;

// ---------------------------------------------------------------------------
// TimeGrid / Curve / FunctionalDataset

TimeGrid::TimeGrid(Eigen::VectorXd points) : points_(std::move(points)) {
  for (Eigen::Index j = 0; j < points_.size(); ++j) {
    if (!std::isfinite(points_[j]) || points_[j] < 0.0 || points_[j] > 1.0)
      throw ValidationError("time grid value outside [0,1]: " + std::to_string(points_[j]));
    if (j > 0 && !(points_[j] > points_[j - 1]))
      throw ValidationError("time grid not strictly increasing at index " + std::to_string(j));
  }
}

TimeGrid TimeGrid::uniform(Eigen::Index n, double lo, double hi) {
  if (n < 2) throw ConfigError("uniform grid needs at least 2 points");
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(n, lo, hi);
  p[0] = lo;
  p[n - 1] = hi;
  return TimeGrid(std::move(p));
}

Curve::Curve(std::string id, TimeGrid grid, Eigen::MatrixXd values)
    : id_(std::move(id)), grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.cols() != grid_.size())
    throw ValidationError("curve '" + id_ + "': value columns do not match grid length");
  if (values_.rows() < 1 || values_.rows() > 3)
    throw ValidationError("curve '" + id_ + "': dimension must be 1, 2 or 3");
  if (!values_.allFinite()) throw ValidationError("curve '" + id_ + "': non-finite value");
}

FunctionalDataset::FunctionalDataset(std::vector<Curve> curves,
                                     std::optional<std::vector<int>> labels)
    : curves_(std::move(curves)), labels_(std::move(labels)) {
  if (curves_.empty()) {
    if (labels_ && !labels_->empty()) throw ValidationError("labels given for empty dataset");
    return;
  }
  dimension_ = curves_.front().dimension();
  std::set<std::string> seen;
  for (const auto& c : curves_) {
    if (c.dimension() != dimension_)
      throw ValidationError("curve '" + c.id() + "' has dimension " +
                            std::to_string(c.dimension()) + ", expected " +
                            std::to_string(dimension_));
    if (!seen.insert(c.id()).second) throw ValidationError("duplicate curve id '" + c.id() + "'");
  }
  if (labels_) {
    if (labels_->size() != curves_.size())
      throw ValidationError("label count does not match curve count");
    for (int l : *labels_)
      if (l < 1) throw ValidationError("labels must be >= 1");
  }
}

std::vector<std::string> FunctionalDataset::ids() const {
  std::vector<std::string> out;
  out.reserve(curves_.size());
  for (const auto& c : curves_) out.push_back(c.id());
  return out;
}

std::optional<std::size_t> FunctionalDataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < curves_.size(); ++i)
    if (curves_[i].id() == id) return i;
  return std::nullopt;
}

Eigen::Index FunctionalDataset::total_points() const {
  Eigen::Index m = 0;
  for (const auto& c : curves_) m += c.size();
  return m;
}

bool FunctionalDataset::common_grid() const {
  for (const auto& c : curves_)
    if (!(c.grid() == curves_.front().grid())) return false;
  return true;
}

FunctionalDataset FunctionalDataset::with_labels(std::vector<int> labels) const {
  return FunctionalDataset(curves_, std::move(labels));
}

// ---------------------------------------------------------------------------
// ScalarCovariates

ScalarCovariates::ScalarCovariates(std::vector<std::string> ids, std::vector<std::string> names,
                                   const Eigen::MatrixXd& values)
    : ids_(std::move(ids)) {
  if (static_cast<Eigen::Index>(ids_.size()) != values.rows())
    throw ValidationError("scalar covariates: id count does not match row count");
  if (static_cast<Eigen::Index>(names.size()) != values.cols())
    throw ValidationError("scalar covariates: name count does not match column count");
  if (!values.allFinite()) throw ValidationError("scalar covariates: non-finite value");
  std::set<std::string> seen;
  for (const auto& id : ids_)
    if (!seen.insert(id).second) throw ValidationError("duplicate curve_id '" + id + "' in scalars");
  names_.push_back("intercept");
  names_.insert(names_.end(), names.begin(), names.end());
  design_.resize(values.rows(), values.cols() + 1);
  design_.col(0).setOnes();
  design_.rightCols(values.cols()) = values;
}

ScalarCovariates ScalarCovariates::aligned_to(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, Eigen::Index> pos;
  for (std::size_t r = 0; r < ids_.size(); ++r) pos.emplace(ids_[r], static_cast<Eigen::Index>(r));
  Eigen::MatrixXd raw_rows(static_cast<Eigen::Index>(ids.size()), design_.cols() - 1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = pos.find(ids[i]);
    if (it == pos.end())
      throw ValidationError("curve '" + ids[i] + "' has no row in the scalar covariates");
    raw_rows.row(static_cast<Eigen::Index>(i)) = design_.row(it->second).tail(design_.cols() - 1);
  }
  return ScalarCovariates(ids, {names_.begin() + 1, names_.end()}, raw_rows);
}

// ---------------------------------------------------------------------------
// CSV I/O

FunctionalDataset read_curves(std::istream& in) {
  auto table = detail::read_csv(in);
  const auto c_id = table.column("curve_id");
  const auto c_dim = table.column("dim");
  const auto c_t = table.column("t");
  const auto c_val = table.column("value");

  struct Raw {
    std::map<long, std::vector<std::pair<double, double>>> by_dim;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Raw> raw;
  double tmin = std::numeric_limits<double>::infinity();
  double tmax = -tmin;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const auto line = table.line_numbers[r];
    long dim = parse_int(f[c_dim], line);
    if (dim < 1 || dim > 3)
      throw ValidationError("line " + std::to_string(line) + ": dim must be in 1..3");
    double t = parse_double(f[c_t], line);
    double v = parse_double(f[c_val], line);
    if (!std::isfinite(t) || !std::isfinite(v))
      throw ValidationError("line " + std::to_string(line) + ": non-finite value");
    auto [it, inserted] = raw.try_emplace(f[c_id]);
    if (inserted) order.push_back(f[c_id]);
    it->second.by_dim[dim].emplace_back(t, v);
    tmin = std::min(tmin, t);
    tmax = std::max(tmax, t);
  }
  if (order.empty()) throw ValidationError("no curves: dataset dimension is undefined");

  // Times outside [0,1] are mapped affinely (one map for the whole file).
  const bool rescale = tmin < 0.0 || tmax > 1.0;
  auto map_t = [&](double t) {
    if (!rescale) return t;
    if (!(tmax > tmin)) throw ValidationError("all time stamps are identical");
    return (t - tmin) / (tmax - tmin);
  };

  std::vector<Curve> curves;
  Eigen::Index dimension = -1;
  for (const auto& id : order) {
    auto& rc = raw[id];
    const auto A = static_cast<Eigen::Index>(rc.by_dim.size());
    if (rc.by_dim.rbegin()->first != A)
      throw ValidationError("curve '" + id + "': dims must be 1..A without gaps");
    if (dimension < 0) dimension = A;
    if (A != dimension)
      throw ValidationError("ragged dimensions: curve '" + id + "' has " + std::to_string(A) +
                            " dims, expected " + std::to_string(dimension));
    for (auto& [d, pts] : rc.by_dim)
      std::stable_sort(pts.begin(), pts.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto& first = rc.by_dim.begin()->second;
    const auto n = static_cast<Eigen::Index>(first.size());
    Eigen::VectorXd t(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      t[j] = map_t(first[static_cast<std::size_t>(j)].first);
      if (j > 0 && !(t[j] > t[j - 1]))
        throw ValidationError("curve '" + id + "': time stamps not strictly increasing");
    }
    Eigen::MatrixXd values(A, n);
    for (const auto& [d, pts] : rc.by_dim) {
      if (static_cast<Eigen::Index>(pts.size()) != n)
        throw ValidationError("curve '" + id + "': dims sampled on different grids");
      for (Eigen::Index j = 0; j < n; ++j) {
        if (map_t(pts[static_cast<std::size_t>(j)].first) != t[j])
          throw ValidationError("curve '" + id + "': dims sampled on different grids");
        values(d - 1, j) = pts[static_cast<std::size_t>(j)].second;
      }
    }
    curves.emplace_back(id, TimeGrid(std::move(t)), std::move(values));
  }
  return FunctionalDataset(std::move(curves));
}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(17);
  return out;
}

}  // namespace

FunctionalDataset load_curves(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_curves(in);
}

void write_curves(std::ostream& out, const FunctionalDataset& data) {
  const auto old = out.precision(17);
  out << "curve_id,dim,t,value\n";
  for (const auto& c : data.curves())
    for (Eigen::Index a = 0; a < c.dimension(); ++a)
      for (Eigen::Index j = 0; j < c.size(); ++j)
        out << c.id() << ',' << (a + 1) << ',' << c.grid()[j] << ',' << c.values()(a, j) << '\n';
  out.precision(old);
}

void save_curves(const std::filesystem::path& path, const FunctionalDataset& data) {
  auto out = open_out(path);
  write_curves(out, data);
}

ScalarCovariates read_scalars(std::istream& in) {
  auto table = detail::read_csv(in);
  const auto c_id = table.column("curve_id");
  std::vector<std::size_t> cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != c_id) {
      cols.push_back(c);
      names.push_back(table.header[c]);
    }
  std::vector<std::string> ids;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(table.rows.size()),
                         static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ids.push_back(table.rows[r][c_id]);
    for (std::size_t c = 0; c < cols.size(); ++c)
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_double(table.rows[r][cols[c]], table.line_numbers[r]);
  }
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    if (values.rows() > 1 && (values.col(c).array() == values(0, c)).all())
      std::clog << "warning: covariate '" << names[static_cast<std::size_t>(c)]
                << "' has zero variance\n";
  }
  return ScalarCovariates(std::move(ids), std::move(names), values);
}

ScalarCovariates load_scalars(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_scalars(in);
}

void write_scalars(std::ostream& out, const ScalarCovariates& scalars) {
  const auto old = out.precision(17);
  out << "curve_id";
  for (std::size_t c = 1; c < scalars.names().size(); ++c) out << ',' << scalars.names()[c];
  out << '\n';
  for (Eigen::Index r = 0; r < scalars.rows(); ++r) {
    out << scalars.ids()[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 1; c < scalars.cols(); ++c) out << ',' << scalars.design()(r, c);
    out << '\n';
  }
  out.precision(old);
}

void save_scalars(const std::filesystem::path& path, const ScalarCovariates& scalars) {
  auto out = open_out(path);
  write_scalars(out, scalars);
}

std::map<std::string, int> read_labels(std::istream& in) {
  auto table = detail::read_csv(in);
  const auto c_id = table.column("curve_id");
  const auto c_label = table.column("label");
  std::map<std::string, int> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    long l = parse_int(table.rows[r][c_label], table.line_numbers[r]);
    if (!out.emplace(table.rows[r][c_id], static_cast<int>(l)).second)
      throw ValidationError("duplicate curve_id '" + table.rows[r][c_id] + "' in labels");
  }
  return out;
}

std::map<std::string, int> load_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_labels(in);
}

void save_labels(const std::filesystem::path& path, const std::vector<std::string>& ids,
                 const std::vector<int>& labels) {
  if (ids.size() != labels.size()) throw ValidationError("id/label length mismatch");
  auto out = open_out(path);
  out << "curve_id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << labels[i] << '\n';
}

FunctionalDataset attach_labels(const FunctionalDataset& data,
                                const std::map<std::string, int>& labels) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& c : data.curves()) {
    auto it = labels.find(c.id());
    if (it == labels.end()) throw ValidationError("curve '" + c.id() + "' has no label");
    out.push_back(it->second);
  }
  return data.with_labels(std::move(out));
}

void validate_for_fit(const FunctionalDataset& data) {
  if (data.empty()) throw ValidationError("dataset is empty");
  for (const auto& c : data.curves())
    if (c.size() < 4)
      throw ValidationError("curve '" + c.id() + "' has fewer than 4 sample points");
}

// ---------------------------------------------------------------------------
// Resampling and GPA

Eigen::MatrixXd resample_linear(const Curve& curve, const TimeGrid& grid) {
  const auto& t = curve.grid().points();
  const auto& v = curve.values();
  Eigen::MatrixXd out(v.rows(), grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    const double s = grid[j];
    if (s <= t[0]) {
      out.col(j) = v.col(0);
    } else if (s >= t[t.size() - 1]) {
      out.col(j) = v.col(t.size() - 1);
    } else {
      auto it = std::upper_bound(t.data(), t.data() + t.size(), s);
      const Eigen::Index hi = it - t.data();
      const Eigen::Index lo = hi - 1;
      const double w = (s - t[lo]) / (t[hi] - t[lo]);
      out.col(j) = (1.0 - w) * v.col(lo) + w * v.col(hi);
    }
  }
  return out;
}

namespace {

// Rotation R (A x A, det +1) minimising ||Z R - C||_F for n x A configurations.
Eigen::MatrixXd procrustes_rotation(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& C) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z.transpose() * C, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd U = svd.matrixU();
  Eigen::MatrixXd V = svd.matrixV();
  Eigen::VectorXd s = Eigen::VectorXd::Ones(U.cols());
  if ((U * V.transpose()).determinant() < 0.0) s[s.size() - 1] = -1.0;
  return U * s.asDiagonal() * V.transpose();
}

double shape_objective(const std::vector<Eigen::MatrixXd>& Z) {
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(Z.front().rows(), Z.front().cols());
  for (const auto& z : Z) mean += z;
  mean /= static_cast<double>(Z.size());
  double f = 0.0;
  for (const auto& z : Z) f += (z - mean).squaredNorm();
  return f;
}

}  // namespace

GpaResult gpa_align_detailed(const FunctionalDataset& data, const GpaConfig& cfg) {
  if (data.empty()) throw ValidationError("GPA on an empty dataset");
  if (data.dimension() < 2) throw ValidationError("GPA requires dimension >= 2");
  const auto A = data.dimension();

  // Common grid for estimating the similarity transforms.
  TimeGrid common;
  if (data.common_grid()) {
    common = data.curve(0).grid();
  } else {
    std::vector<Eigen::Index> lengths;
    double lo = 1.0, hi = 0.0;
    for (const auto& c : data.curves()) {
      lengths.push_back(c.size());
      lo = std::min(lo, c.grid()[0]);
      hi = std::max(hi, c.grid()[c.size() - 1]);
    }
    std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
    common = TimeGrid::uniform(std::max<Eigen::Index>(lengths[lengths.size() / 2], 2), lo, hi);
  }

  const std::size_t N = data.size();
  std::vector<Eigen::VectorXd> centroid(N);
  std::vector<double> size(N);
  std::vector<Eigen::MatrixXd> Z(N);  // n x A configurations
  std::vector<Eigen::MatrixXd> R(N, Eigen::MatrixXd::Identity(A, A));
  for (std::size_t i = 0; i < N; ++i) {
    const auto& c = data.curve(i);
    Eigen::MatrixXd X = data.common_grid() ? c.values() : resample_linear(c, common);
    centroid[i] = X.rowwise().mean();
    Eigen::MatrixXd Y = (X.colwise() - centroid[i]).transpose();
    size[i] = Y.norm();
    if (!(size[i] > 1e-12 * std::max(1.0, centroid[i].norm())))
      throw ValidationError("GPA: curve '" + c.id() + "' is degenerate (all points identical)");
    Z[i] = Y / size[i];
  }

  GpaResult res;
  res.objective_trace.push_back(shape_objective(Z));
  int iter = 0;
  if (N > 1) {
    Eigen::MatrixXd consensus = Z[0];
    for (iter = 1; iter <= cfg.max_iter; ++iter) {
      for (std::size_t i = 0; i < N; ++i) {
        Eigen::MatrixXd Ri = procrustes_rotation(Z[i], consensus);
        Z[i] = Z[i] * Ri;
        R[i] = R[i] * Ri;
      }
      Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(Z[0].rows(), A);
      for (const auto& z : Z) mean += z;
      mean /= static_cast<double>(N);
      consensus = mean / mean.norm();
      const double f = shape_objective(Z);
      const double prev = res.objective_trace.back();
      res.objective_trace.push_back(f);
      if (std::abs(prev - f) <= cfg.tol * std::max(prev, 1e-300)) break;
    }
    iter = std::min(iter, cfg.max_iter);
  }
  res.iterations = iter;

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(Z[0].rows(), A);
  for (const auto& z : Z) mean += z;
  mean /= static_cast<double>(N);
  res.consensus = mean.transpose();

  std::vector<Curve> out;
  out.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto& c = data.curve(i);
    Eigen::MatrixXd v = R[i].transpose() * (c.values().colwise() - centroid[i]) / size[i];
    out.emplace_back(c.id(), c.grid(), std::move(v));
  }
  res.aligned = FunctionalDataset(std::move(out), data.labels());
  return res;
}

FunctionalDataset gpa_align(const FunctionalDataset& data, const GpaConfig& cfg) {
  return gpa_align_detailed(data, cfg).aligned;
}

}  // namespace srcfda
