#include "cloudnmpc/cloud.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace cloudnmpc {

PointCloud::PointCloud(Eigen::MatrixXd pts, std::string name)
    : points(std::move(pts)), id(std::move(name)) {
  if (!points.allFinite()) {
    throw std::invalid_argument("point cloud '" + id + "' has non-finite coordinates");
  }
}

bool is_prime(int n) {
  if (n < 2) return false;
  if (n % 2 == 0) return n == 2;
  for (int d = 3; d * d <= n; d += 2)
    if (n % d == 0) return false;
  return true;
}

void HaltonConfig::validate() const {
  if (bases.empty()) throw std::invalid_argument("halton: at least one base required");
  std::set<int> seen;
  for (int b : bases) {
    if (!is_prime(b)) throw std::invalid_argument("halton: base " + std::to_string(b) + " is not prime");
    if (!seen.insert(b).second)
      throw std::invalid_argument("halton: base " + std::to_string(b) + " repeated");
  }
  if (count < 1) throw std::invalid_argument("halton: count must be >= 1");
  if (skip < 0) throw std::invalid_argument("halton: skip must be >= 0");
  const auto dim = static_cast<Eigen::Index>(bases.size());
  if (box_min.size() != dim || box_max.size() != dim)
    throw std::invalid_argument("halton: box dimension does not match number of bases");
  for (Eigen::Index d = 0; d < dim; ++d) {
    if (!(box_min[d] < box_max[d]))
      throw std::invalid_argument("halton: box_min must be < box_max componentwise");
  }
}

void LidarConfig::validate() const {
  if (!(radius > 0.0)) throw std::invalid_argument("lidar: radius must be > 0");
}

double halton_value(unsigned long long index, int base) {
  const double inv = 1.0 / base;
  double f = inv;
  double x = 0.0;
  while (index) {
    x += static_cast<double>(index % base) * f;
    index /= base;
    f *= inv;
  }
  return x;
}

PointCloud generate_cloud(const HaltonConfig& cfg, std::string id) {
  cfg.validate();
  const int dim = static_cast<int>(cfg.bases.size());
  const Eigen::VectorXd extent = cfg.box_max - cfg.box_min;
  const Eigen::VectorXd center = 0.5 * (cfg.box_max + cfg.box_min);

  Eigen::MatrixXd pts(dim, cfg.count);
  Eigen::VectorXd p(dim);
  int filled = 0;
  // Rejection for spheres needs more indices than samples; the cap guards
  // against degenerate boxes where almost nothing is accepted.
  const unsigned long long max_index =
      static_cast<unsigned long long>(cfg.skip) + 1000ULL * static_cast<unsigned long long>(cfg.count);
  for (unsigned long long k = static_cast<unsigned long long>(cfg.skip) + 1;
       filled < cfg.count && k <= max_index; ++k) {
    for (int d = 0; d < dim; ++d) p[d] = cfg.box_min[d] + halton_value(k, cfg.bases[d]) * extent[d];
    if (cfg.shape == CloudShape::sphere) {
      const double r2 = (2.0 * (p - center).array() / extent.array()).square().sum();
      if (r2 > 1.0) continue;
    }
    pts.col(filled++) = p;
  }
  if (filled < cfg.count) throw std::runtime_error("halton: rejection sampling exhausted index budget");
  return PointCloud(std::move(pts), std::move(id));
}

std::vector<PointCloud> lidar_scan(const std::vector<PointCloud>& clouds,
                                   const Eigen::VectorXd& center,
                                   const LidarConfig& cfg) {
  const double r2 = cfg.radius * cfg.radius;
  std::vector<PointCloud> out;
  for (const auto& c : clouds) {
    std::vector<int> keep;
    for (int j = 0; j < c.size(); ++j) {
      if ((c.point(j) - center).squaredNorm() <= r2) keep.push_back(j);
    }
    if (keep.empty()) continue;
    Eigen::MatrixXd sub(c.dim(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = c.point(keep[i]);
    out.emplace_back(std::move(sub), c.id);
  }
  return out;
}

PointCloud parse_cloud(std::istream& in, std::string id) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v))
        throw CloudParseError("line " + std::to_string(lineno) + ": invalid number '" + tok + "'", lineno);
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (dim == 0) {
      dim = row.size();
    } else if (row.size() != dim) {
      throw CloudParseError("line " + std::to_string(lineno) + ": dimension mismatch (expected " +
                                std::to_string(dim) + ", got " + std::to_string(row.size()) + ")",
                            lineno);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw CloudParseError("cloud file contains no points", lineno);

  Eigen::MatrixXd pts(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t d = 0; d < dim; ++d)
      pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = rows[j][d];
  return PointCloud(std::move(pts), std::move(id));
}

PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cloud file " + path.string());
  return parse_cloud(in, path.stem().string());
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cloud file " + path.string());
  out << "# cloud " << cloud.id << ": " << cloud.size() << " points, dim " << cloud.dim() << "\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int j = 0; j < cloud.size(); ++j) {
    for (int d = 0; d < cloud.dim(); ++d) {
      if (d) out << ' ';
      out << cloud.points(d, j);
    }
    out << '\n';
  }
}

}  // namespace cloudnmpc
