#include "dime/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dime/error.hpp"
#include "dime/geometry.hpp"

namespace dime {

void GridConfig::validate() const {
  if (cols < 1 || rows < 1) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs at least one cell");
  }
  if (image_width < 1 || image_height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
}

GridConfig GridConfig::parse(const std::string& text, int image_width, int image_height) {
  GridConfig g;
  g.image_width = image_width;
  g.image_height = image_height;
  const auto x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    g.cols = std::stoi(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const std::string rest = text.substr(x + 1);
    g.rows = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kInvalidArgument, "grid must look like 8x6, got '" + text + "'");
  }
  g.validate();
  return g;
}

std::string GridConfig::to_string() const {
  return std::to_string(cols) + "x" + std::to_string(rows);
}

std::optional<int> GridConfig::cell_of(const Eigen::Vector2d& pixel) const {
  const double x = pixel.x();
  const double y = pixel.y();
  if (!(x >= 0.0 && x <= image_width && y >= 0.0 && y <= image_height)) {
    return std::nullopt;
  }
  const int col = std::min(cols - 1, static_cast<int>(std::floor(x * cols / image_width)));
  const int row = std::min(rows - 1, static_cast<int>(std::floor(y * rows / image_height)));
  return row * cols + col;
}

int GridFeatureMap::occupied() const {
  return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.has_value(); }));
}

Eigen::Vector2d compute_pmd(const IntrinsicsD& kc, const CorrespondenceD& corr) {
  const Eigen::Vector3d& p = corr.point;
  if (!(p.z() > kMinDepth)) {
    throw Error(ErrorCode::kNonPositiveDepth, "3D point must have positive depth");
  }
  const Eigen::Vector3d ray(p.x() / p.z(), p.y() / p.z(), 1.0);
  const Eigen::Matrix3d k = kc.matrix();
  return Eigen::Vector2d(k.row(0).dot(ray), k.row(1).dot(ray)) - corr.pixel;
}

std::vector<PointFeature> build_point_features(const IntrinsicsD& kc, const CorrespondenceSet& corrs) {
  std::vector<PointFeature> out;
  out.reserve(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& c = corrs[i];
    PointFeature f;
    try {
      f.pmd = compute_pmd(kc, c);
    } catch (const Error& e) {
      throw Error(e.code(), "correspondence has non-positive depth", i);
    }
    f.x3d = c.point.x();
    f.y3d = c.point.y();
    f.inv_depth = 1.0 / c.point.z();
    f.pixel = c.pixel;
    out.push_back(f);
  }
  return out;
}

GridFeatureMap gridify(const std::vector<PointFeature>& features, const GridConfig& grid) {
  grid.validate();
  std::vector<std::vector<Vector5d>> members(grid.cell_count());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto cell = grid.cell_of(features[i].pixel);
    if (!cell) {
      throw Error(ErrorCode::kOutOfImageBounds, "pixel outside the image", i);
    }
    members[*cell].push_back(features[i].values());
  }

  GridFeatureMap map;
  map.grid = grid;
  map.cells.resize(grid.cell_count());
  map.counts.assign(grid.cell_count(), 0);
  const auto lex_less = [](const Vector5d& a, const Vector5d& b) {
    return std::lexicographical_compare(a.data(), a.data() + 5, b.data(), b.data() + 5);
  };
  for (int c = 0; c < grid.cell_count(); ++c) {
    auto& m = members[c];
    if (m.empty()) continue;
    std::sort(m.begin(), m.end(), lex_less);
    Vector5d sum = Vector5d::Zero();
    for (const auto& v : m) sum += v;
    map.cells[c] = sum / static_cast<double>(m.size());
    map.counts[c] = static_cast<int>(m.size());
  }
  return map;
}

Eigen::VectorXd flatten(const GridFeatureMap& map) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(kChannels * static_cast<Eigen::Index>(map.cells.size()));
  for (std::size_t c = 0; c < map.cells.size(); ++c) {
    if (map.cells[c]) y.segment<kChannels>(kChannels * static_cast<Eigen::Index>(c)) = *map.cells[c];
  }
  return y;
}

Eigen::VectorXd make_feature(const IntrinsicsD& kc, const CorrespondenceSet& corrs, const GridConfig& grid) {
  return flatten(gridify(build_point_features(kc, corrs), grid));
}

Occupancy occupancy_metrics(const GridFeatureMap& before, const GridFeatureMap& after, const GridConfig& grid) {
  const auto n = static_cast<std::size_t>(grid.cell_count());
  if (before.cells.size() != n || after.cells.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "feature maps do not match the grid");
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (after.cells[c] && !before.cells[c]) {
      throw Error(ErrorCode::kInvalidArgument, "after-map occupies a cell that was empty before", c);
    }
  }
  const int mp = before.occupied();
  if (mp == 0) {
    throw Error(ErrorCode::kEmptyBaseline, "no occupied cells before removal");
  }
  Occupancy o;
  o.gamma = static_cast<double>(mp) / static_cast<double>(n);
  o.eta = 1.0 - static_cast<double>(after.occupied()) / static_cast<double>(mp);
  return o;
}

CorrespondenceSet empty_cells(const CorrespondenceSet& corrs, const GridConfig& grid, double eta,
                              std::mt19937_64& rng) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "eta must lie in [0, 1]");
  }
  std::vector<int> cell_of_point(corrs.size());
  std::vector<int> occupied;
  std::vector<char> seen(grid.cell_count(), 0);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto cell = grid.cell_of(corrs[i].pixel);
    if (!cell) throw Error(ErrorCode::kOutOfImageBounds, "pixel outside the image", i);
    cell_of_point[i] = *cell;
    if (!seen[*cell]) {
      seen[*cell] = 1;
      occupied.push_back(*cell);
    }
  }
  std::sort(occupied.begin(), occupied.end());
  const auto n_empty = static_cast<std::size_t>(std::lround(eta * static_cast<double>(occupied.size())));
  std::shuffle(occupied.begin(), occupied.end(), rng);
  std::vector<char> drop(grid.cell_count(), 0);
  for (std::size_t i = 0; i < n_empty; ++i) drop[occupied[i]] = 1;

  CorrespondenceSet out;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (!drop[cell_of_point[i]]) out.push_back(corrs[i]);
  }
  return out;
}

FeatureSet parse_feature_set(const std::string& text) {
  if (text.size() == 1) {
    switch (text[0]) {
      case 'A': case 'a': return FeatureSet::kA;
      case 'B': case 'b': return FeatureSet::kB;
      case 'C': case 'c': return FeatureSet::kC;
      case 'D': case 'd': return FeatureSet::kD;
      case 'E': case 'e': return FeatureSet::kE;
      default: break;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "feature set must be one of A-E, got '" + text + "'");
}

char to_char(FeatureSet set) {
  return static_cast<char>('A' + static_cast<int>(set));
}

Vector5d channel_mask(FeatureSet set) {
  Vector5d m;
  switch (set) {
    case FeatureSet::kA: m << 1, 1, 1, 1, 1; break;
    case FeatureSet::kB: m << 1, 1, 0, 0, 0; break;
    case FeatureSet::kC: m << 1, 1, 0, 0, 1; break;
    case FeatureSet::kD: m << 1, 1, 1, 1, 0; break;
    case FeatureSet::kE: m << 0, 0, 1, 1, 1; break;
  }
  return m;
}

Vector5d fit_channel_scale(const std::vector<Eigen::VectorXd>& features) {
  Vector5d sum_sq = Vector5d::Zero();
  Eigen::Matrix<long, 5, 1> count = Eigen::Matrix<long, 5, 1>::Zero();
  for (const auto& y : features) {
    if (y.size() % kChannels != 0) {
      throw Error(ErrorCode::kDimensionMismatch, "feature length is not a multiple of 5");
    }
    for (Eigen::Index c = 0; c < y.size() / kChannels; ++c) {
      const Vector5d cell = y.segment<kChannels>(kChannels * c);
      // An occupied cell always has a nonzero inverse depth.
      if (cell.isZero(0.0)) continue;
      sum_sq += cell.cwiseAbs2();
      count.array() += 1;
    }
  }
  Vector5d scale = Vector5d::Ones();
  for (int ch = 0; ch < kChannels; ++ch) {
    if (count[ch] > 0 && sum_sq[ch] > 0.0) {
      scale[ch] = 1.0 / std::sqrt(sum_sq[ch] / static_cast<double>(count[ch]));
    }
  }
  return scale;
}

Eigen::VectorXd scale_channels(const Eigen::VectorXd& y, const Vector5d& scale) {
  if (y.size() % kChannels != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "feature length is not a multiple of 5");
  }
  Eigen::VectorXd out = y;
  for (Eigen::Index c = 0; c < y.size() / kChannels; ++c) {
    out.segment<kChannels>(kChannels * c).array() *= scale.array();
  }
  return out;
}

}  // namespace dime
