#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cloudnmpc {

/// Finite set of obstacle samples in output space, stored column-wise (p x count).
struct PointCloud {
  Eigen::MatrixXd points;
  std::string id;

  PointCloud() = default;
  PointCloud(Eigen::MatrixXd pts, std::string name);

  int dim() const { return static_cast<int>(points.rows()); }
  int size() const { return static_cast<int>(points.cols()); }
  bool empty() const { return points.cols() == 0; }
  auto point(int j) const { return points.col(j); }
};

enum class CloudShape { box, sphere };

struct HaltonConfig {
  std::vector<int> bases{2, 3, 5};
  int count = 400;
  Eigen::VectorXd box_min;
  Eigen::VectorXd box_max;
  int skip = 20;
  // sphere: keep only samples inside the ellipsoid inscribed in the box
  CloudShape shape = CloudShape::box;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

struct LidarConfig {
  double radius = 3.0;

  void validate() const;
};

bool is_prime(int n);

/// Radical inverse of `index` in `base` (digits mirrored across the radix point).
double halton_value(unsigned long long index, int base);

PointCloud generate_cloud(const HaltonConfig& cfg, std::string id = "obstacle");

/// Per-cloud crop to points within `cfg.radius` of `center`; clouds with no
/// sensed points are dropped, ids are preserved.
std::vector<PointCloud> lidar_scan(const std::vector<PointCloud>& clouds,
                                   const Eigen::VectorXd& center,
                                   const LidarConfig& cfg);

class CloudParseError : public std::runtime_error {
 public:
  CloudParseError(const std::string& what, int line)
      : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Plain text: one point per line, whitespace-separated decimals, '#' starts
/// a comment. The cloud id is the file stem.
PointCloud load_cloud(const std::filesystem::path& path);
PointCloud parse_cloud(std::istream& in, std::string id);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace cloudnmpc
